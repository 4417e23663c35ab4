use std::path::Path;

use gvc_core::corpus::{load_corpus, prepare};
use gvc_core::oracle::{enumerate_equivalence, erosion_suite};
use gvc_core::vm::{parse_script, run_script, validate_tx, Ledger, TxOutcome};

use crate::output::{green, read, red, yellow};
use crate::{EXIT_DISAGREE, EXIT_OK, EXIT_STATIC, EXIT_USAGE};

pub fn cmd_corpus(dir: &Path, bound: u64, mutant: bool) -> u8 {
    let entries = match load_corpus(dir) {
        Ok(e) => e,
        Err(e) => {
            println!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if entries.is_empty() {
        println!("{} no .gcl programs in {}", yellow("warning:"), dir.display());
        return EXIT_OK;
    }
    let mut failed = false;
    let mut static_errors = false;
    let mut usage = false;
    for entry in &entries {
        let p = match prepare(entry) {
            Ok(p) => p,
            Err(e) => {
                println!("{}: {}", entry.name, red(&e.to_string()));
                usage = true;
                continue;
            }
        };
        let residuals = p.report.residuals().count();
        let Some(mut img) = p.image.clone() else {
            println!("{}: {}", p.name, red("static-error"));
            static_errors = true;
            continue;
        };
        if mutant {
            img = img.unchecked();
        }
        let eq = enumerate_equivalence(&p.executable, &img, bound);
        let eq_text = if eq.disagreements.is_empty() {
            green("0 disagreements")
        } else {
            failed = true;
            red(&format!("{} disagreements", eq.disagreements.len()))
        };
        println!(
            "{}: {} method(s), {residuals} residual(s); {} cases ({} committed, {} reverted), {eq_text}",
            p.name,
            p.report.methods.len(),
            eq.cases,
            eq.committed,
            eq.reverted
        );
        if let Some(d) = eq.disagreements.first() {
            println!("    first: {}", serde_json::to_string(d).expect("serializable"));
        }
        if !mutant {
            let er = erosion_suite(&p.executable, bound);
            let bad = er.static_regressions.len() + er.dynamic_regressions.len() + er.equivalence_disagreements;
            let text = format!(
                "    erosion: {} erosions, {} static and {} dynamic regressions, {} disagreements",
                er.erosions,
                er.static_regressions.len(),
                er.dynamic_regressions.len(),
                er.equivalence_disagreements
            );
            if bad > 0 {
                failed = true;
                println!("{}", red(&text));
            } else {
                println!("{text}");
            }
        }
        let txs = entry.path.with_extension("txs.jsonl");
        if txs.exists() {
            let Ok(text) = read(&txs) else {
                usage = true;
                continue;
            };
            let script = match parse_script(&text) {
                Ok(s) if s.iter().all(|tx| validate_tx(&img, tx).is_ok()) => s,
                Ok(_) => {
                    println!("{}: script names unknown methods", txs.display());
                    usage = true;
                    continue;
                }
                Err(e) => {
                    println!("{}: {e}", txs.display());
                    usage = true;
                    continue;
                }
            };
            let init = entry.path.with_extension("ledger.json");
            let mut ledger = if init.exists() {
                match read(&init).map(|t| Ledger::from_json(&img.program, &t)) {
                    Ok(Ok(l)) => l,
                    Ok(Err(e)) => {
                        println!("{}: {e}", init.display());
                        usage = true;
                        continue;
                    }
                    Err(_) => {
                        usage = true;
                        continue;
                    }
                }
            } else {
                Ledger::zeroed(&img.program)
            };
            let outs = run_script(&img, &mut ledger, &script, 100_000).expect("validated script");
            let committed = outs.iter().filter(|o| TxOutcome::committed(o)).count();
            println!(
                "    script: {} transaction(s), {committed} committed, final ledger {}",
                outs.len(),
                ledger.to_json()
            );
        }
    }
    if failed {
        EXIT_DISAGREE
    } else if usage {
        EXIT_USAGE
    } else if static_errors {
        EXIT_STATIC
    } else {
        EXIT_OK
    }
}
