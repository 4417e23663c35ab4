use std::path::Path;

use gvc_core::ast::SourceLoc;
use gvc_core::resolve::load_source;
use gvc_core::verifier::{verify_program_with, MethodStatus, Severity, VerificationReport, VerifyOptions};

use crate::output::{code, excerpt, green, read, red, write, yellow};
use crate::{EXIT_OK, EXIT_STATIC, EXIT_USAGE};

pub fn cmd_verify(path: &Path, report_out: Option<&Path>, dump: bool) -> u8 {
    code(verify(path, report_out, dump))
}

fn verify(path: &Path, report_out: Option<&Path>, dump: bool) -> Result<u8, u8> {
    let source = read(path)?;
    let program = load_source(&source).map_err(|e| {
        println!("{}: {e}", path.display());
        EXIT_USAGE
    })?;
    let opts = VerifyOptions { dump_constraints: dump };
    let (report, constraints) = verify_program_with(&program, opts);
    if dump {
        print!("{constraints}");
    }
    if let Some(out) = report_out {
        write(out, &report.to_json())?;
    }
    print_summary(&source, &report);
    Ok(if report.has_static_error() { EXIT_STATIC } else { EXIT_OK })
}

pub fn print_summary(source: &str, report: &VerificationReport) {
    for m in &report.methods {
        let status = match m.status {
            MethodStatus::Verified => green(m.status.as_str()),
            MethodStatus::VerifiedWithResiduals => yellow(m.status.as_str()),
            MethodStatus::StaticError => red(m.status.as_str()),
        };
        println!("{}: {status}, {} residual check(s)", m.name, m.residuals.len());
        for r in &m.residuals {
            println!("  {} {} `{}` at {} ({})", r.id, r.kind, r.payload, r.site(), insertion_text(r.insertion));
        }
        for d in &m.diagnostics {
            let sev = match d.severity {
                Severity::Error => red("error"),
                Severity::Warning => yellow("warning"),
            };
            let loc = SourceLoc::new(d.line, d.col);
            println!("  {sev} at {loc}: {}", d.message);
            let ex = excerpt(source, loc);
            if !ex.is_empty() {
                println!("{ex}");
            }
        }
    }
    let p = &report.prover;
    println!(
        "prover: {} queries, {} proved, {} disproved, {} unknown",
        p.queries, p.proved, p.disproved, p.unknown
    );
}

fn insertion_text(i: gvc_core::obligation::Insertion) -> &'static str {
    use gvc_core::obligation::Insertion::*;
    match i {
        BeforeStatement => "before statement",
        LoopEnd => "end of loop body",
        AtEntry => "method entry",
        AtExit => "method exit",
    }
}
