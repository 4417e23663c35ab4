use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use tempfile::TempDir;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn corpus(name: &str) -> PathBuf {
    root().join("corpus").join(name)
}

struct Run {
    code: i32,
    stdout: String,
}

fn gvc(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_gvc"))
        .args(args.iter().map(|a| a.as_ref()))
        .env("GVC_COLOR", "0")
        .output()
        .expect("gvc runs");
    Run {
        code: out.status.code().expect("exited"),
        stdout: String::from_utf8(out.stdout).unwrap(),
    }
}

/// Verifies and weaves `src` into `dir`, returning the woven path.
fn woven(dir: &Path, src: &Path) -> PathBuf {
    let out = dir.join("out.woven.gcl");
    let r = gvc(&[&"weave", &src, &"--auto", &"-o", &out]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    out
}

fn script(dir: &Path, quantities: &[u64]) -> PathBuf {
    let path = dir.join("txs.jsonl");
    let lines: Vec<String> = quantities
        .iter()
        .map(|q| format!(r#"{{"contract": "Counter", "method": "sell", "args": [{q}]}}"#))
        .collect();
    fs::write(&path, lines.join("\n")).unwrap();
    path
}

fn count_ledger(dir: &Path, n: u64) -> PathBuf {
    let path = dir.join("ledger.json");
    fs::write(&path, format!(r#"{{"Counter": {{"Count": {n}}}}}"#)).unwrap();
    path
}

#[test]
fn verify_reports_one_residual() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("r.json");
    let r = gvc(&[&"verify", &corpus("sell.gcl"), &"--report", &report]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("Counter.sell: verified-with-residuals, 1 residual check(s)"), "{}", r.stdout);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(json["methods"][0]["residuals"].as_array().unwrap().len(), 1);
}

#[test]
fn verify_exit_codes() {
    let strong = root().join("fixtures/sell_strong.gcl");
    let r = gvc(&[&"verify", &strong]);
    assert_eq!(r.code, 2);
    assert!(r.stdout.contains("Count >= 1"), "{}", r.stdout);
    assert_eq!(gvc(&[&"verify", &"no/such/file.gcl"]).code, 1);

    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.gcl");
    fs::write(&bad, "contract A:\n  method m(:\n").unwrap();
    assert_eq!(gvc(&[&"verify", &bad]).code, 1);
}

#[test]
fn dump_constraints_prints_systems() {
    let r = gvc(&[&"verify", &corpus("sell_precise.gcl"), &"--dump-constraints"]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("<="), "{}", r.stdout);
}

#[test]
fn weave_with_report_matches_auto() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("r.json");
    assert_eq!(gvc(&[&"verify", &corpus("sell.gcl"), &"--report", &report]).code, 0);
    let two_step = dir.path().join("a.gcl");
    let r = gvc(&[&"weave", &corpus("sell.gcl"), &"--report", &report, &"-o", &two_step]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("wove 1 check(s)"));
    let text = fs::read_to_string(&two_step).unwrap();
    assert!(text.contains("#! check scratch >= quantity @c0;"), "{text}");
    assert!(dir.path().join("a.gcl.map.json").exists());

    let auto = woven(dir.path(), &corpus("sell.gcl"));
    assert_eq!(fs::read_to_string(auto).unwrap(), text);

    // without -o the woven program goes to stdout
    let r = gvc(&[&"weave", &corpus("sell.gcl"), &"--auto"]);
    assert_eq!(r.stdout, text);
}

#[test]
fn weave_refuses_stale_reports_and_static_errors() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("r.json");
    gvc(&[&"verify", &corpus("sell.gcl"), &"--report", &report]);
    let r = gvc(&[&"weave", &corpus("sell_precise.gcl"), &"--report", &report]);
    assert_eq!(r.code, 1);
    let strong = root().join("fixtures/sell_strong.gcl");
    assert_eq!(gvc(&[&"weave", &strong, &"--auto"]).code, 2);
    // --report and --auto are exclusive, and one of them is required
    assert_eq!(gvc(&[&"weave", &corpus("sell.gcl")]).code, 1);
    assert_eq!(gvc(&[&"weave", &corpus("sell.gcl"), &"--auto", &"--report", &report]).code, 1);
}

#[test]
fn run_commits() {
    let dir = TempDir::new().unwrap();
    let w = woven(dir.path(), &corpus("sell.gcl"));
    let (txs, ledger) = (script(dir.path(), &[3]), count_ledger(dir.path(), 10));
    let out = dir.path().join("final.json");
    let gas = dir.path().join("gas.json");
    let r = gvc(&[&"run", &w, &"--txs", &txs, &"--ledger", &ledger, &"--ledger-out", &out, &"--gas-report", &gas]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert!(r.stdout.contains("tx 0 Counter.sell(3): committed, exec_gas 2, check_gas 3"), "{}", r.stdout);
    assert!(r.stdout.contains("Counter.Count: 10 -> 7"));
    let l: serde_json::Value = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(l["Counter"]["Count"], 7);
    let g: serde_json::Value = serde_json::from_str(&fs::read_to_string(gas).unwrap()).unwrap();
    assert_eq!(g["totals"]["check_gas"], 3);
    assert_eq!(g["per_tx"][0]["outcome"], "committed");
}

#[test]
fn run_reports_the_failing_check() {
    let dir = TempDir::new().unwrap();
    let w = woven(dir.path(), &corpus("sell.gcl"));
    let (txs, ledger) = (script(dir.path(), &[3, 12]), count_ledger(dir.path(), 10));
    let r = gvc(&[&"run", &w, &"--txs", &txs, &"--ledger", &ledger]);
    assert_eq!(r.code, 3);
    assert!(r.stdout.contains("tx 0 Counter.sell(3): committed"));
    assert!(
        r.stdout.contains("CheckFailure at check c0: underflow-safety `scratch >= quantity` (source line 7, column 5)"),
        "{}",
        r.stdout
    );
}

#[test]
fn run_gas_limit() {
    let dir = TempDir::new().unwrap();
    let w = woven(dir.path(), &corpus("sell.gcl"));
    let (txs, ledger) = (script(dir.path(), &[3]), count_ledger(dir.path(), 10));
    let r = gvc(&[&"run", &w, &"--txs", &txs, &"--ledger", &ledger, &"--gas-limit", &"1"]);
    assert_eq!(r.code, 3);
    assert!(r.stdout.contains("GasExhausted"), "{}", r.stdout);
}

#[test]
fn run_rejects_malformed_inputs() {
    let dir = TempDir::new().unwrap();
    let w = woven(dir.path(), &corpus("sell.gcl"));
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"contract\": \"Counter\"").unwrap();
    assert_eq!(gvc(&[&"run", &w, &"--txs", &bad]).code, 1);
    fs::write(&bad, r#"{"contract": "Counter", "method": "sell", "args": []}"#).unwrap();
    assert_eq!(gvc(&[&"run", &w, &"--txs", &bad]).code, 1);
    let txs = script(dir.path(), &[1]);
    let ledger = dir.path().join("l.json");
    fs::write(&ledger, r#"{"Counter": {"Nope": 1}}"#).unwrap();
    assert_eq!(gvc(&[&"run", &w, &"--txs", &txs, &"--ledger", &ledger]).code, 1);
}

#[test]
fn run_with_adversary_and_unchecked_mode() {
    let dir = TempDir::new().unwrap();
    let w = woven(dir.path(), &corpus("bank.gcl"));
    let txs = dir.path().join("txs.jsonl");
    fs::write(&txs, r#"{"contract": "Bank", "method": "withdraw", "args": [3]}"#).unwrap();
    let ledger = dir.path().join("l.json");
    fs::write(&ledger, r#"{"Bank": {"Balance": 8, "Paid": 0}}"#).unwrap();
    let adv = corpus("bank.adversary.gcl");
    let r = gvc(&[&"run", &w, &"--txs", &txs, &"--ledger", &ledger, &"--adversary", &adv]);
    assert_eq!(r.code, 3);
    assert!(r.stdout.contains("OwnershipFailure"), "{}", r.stdout);
    let r = gvc(&[&"run", &w, &"--txs", &txs, &"--ledger", &ledger, &"--adversary", &adv, &"--unchecked"]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("Bank.Paid: 0 -> 6"), "{}", r.stdout);
}

#[test]
fn corpus_command() {
    let r = gvc(&[&"corpus", &root().join("corpus"), &"--bound", &"3"]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    assert!(r.stdout.contains("sell: 1 method(s), 1 residual(s)"), "{}", r.stdout);

    let dir = TempDir::new().unwrap();
    let r = gvc(&[&"corpus", &dir.path()]);
    assert_eq!(r.code, 0);
    assert!(r.stdout.contains("warning"));
    assert_eq!(gvc(&[&"corpus", &"no/such/dir"]).code, 1);

    fs::copy(root().join("fixtures/sell_strong.gcl"), dir.path().join("strong.gcl")).unwrap();
    assert_eq!(gvc(&[&"corpus", &dir.path()]).code, 2);
}

#[test]
fn corpus_detects_an_unsound_vm() {
    let dir = TempDir::new().unwrap();
    for f in ["vault.gcl", "bank.gcl", "bank.adversary.gcl"] {
        fs::copy(corpus(f), dir.path().join(f)).unwrap();
    }
    let r = gvc(&[&"corpus", &dir.path(), &"--bound", &"3", &"--mutant"]);
    assert_eq!(r.code, 4, "{}", r.stdout);
    assert!(r.stdout.contains("disagreements"));
}
