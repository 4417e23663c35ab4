#![allow(dead_code)]

use std::path::PathBuf;

use gvc_core::ast::Program;
use gvc_core::corpus::{load_corpus, prepare, CorpusEntry, Prepared};
use gvc_core::resolve::load_source;

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn corpus_dir() -> PathBuf {
    repo_root().join("corpus")
}

pub fn corpus() -> Vec<CorpusEntry> {
    load_corpus(&corpus_dir()).expect("corpus loads")
}

pub fn entry(name: &str) -> CorpusEntry {
    corpus()
        .into_iter()
        .find(|e| e.name == name)
        .unwrap_or_else(|| panic!("no corpus program {name}"))
}

pub fn prepared(name: &str) -> Prepared {
    prepare(&entry(name)).expect("corpus program prepares")
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(repo_root().join("fixtures").join(name)).expect("fixture exists")
}

pub fn program(src: &str) -> Program {
    load_source(src).unwrap_or_else(|e| panic!("{e}\n{src}"))
}
