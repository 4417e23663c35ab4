//! Loading the regression corpus: `name.gcl` plus an optional
//! `name.adversary.gcl` implementing its extern contracts.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::ast::Program;
use crate::error::FrontendError;
use crate::resolve::load_source;
use crate::verifier::{verify_program, VerificationReport};
use crate::vm::{attach_adversaries, load_program, LoadError, VmImage};
use crate::weaver::{weave, InstrumentedProgram, WeaveError};

const ADVERSARY_SUFFIX: &str = ".adversary.gcl";

#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub name: String,
    pub path: PathBuf,
    pub source: String,
    pub adversary: Option<String>,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{name}: {source}")]
    Frontend { name: String, source: FrontendError },
    #[error("{name}: {source}")]
    Load { name: String, source: LoadError },
    #[error("{name}: {source}")]
    Weave { name: String, source: WeaveError },
}

/// Every `*.gcl` program in `dir`, sorted by name.
pub fn load_corpus(dir: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Io { path, source }
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".gcl") && !name.ends_with(ADVERSARY_SUFFIX)
        })
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let source = fs::read_to_string(&path).map_err(io_err(&path))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
        let adv_path = path.with_file_name(format!("{name}{ADVERSARY_SUFFIX}"));
        let adversary = if adv_path.exists() {
            Some(fs::read_to_string(&adv_path).map_err(io_err(&adv_path))?)
        } else {
            None
        };
        out.push(CorpusEntry {
            name,
            path,
            source,
            adversary,
        });
    }
    Ok(out)
}

/// A corpus program carried through the whole pipeline.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub name: String,
    /// The program as written.
    pub program: Program,
    /// The program with adversary bodies filled in; what the oracle runs.
    pub executable: Program,
    pub report: VerificationReport,
    /// `None` when the program has static errors.
    pub woven: Option<InstrumentedProgram>,
    pub image: Option<VmImage>,
}

pub fn prepare(entry: &CorpusEntry) -> Result<Prepared, CorpusError> {
    let name = entry.name.clone();
    let program = load_source(&entry.source).map_err(|source| CorpusError::Frontend {
        name: name.clone(),
        source,
    })?;
    let executable = match &entry.adversary {
        Some(src) => attach_adversaries(&program, src).map_err(|source| CorpusError::Load {
            name: name.clone(),
            source,
        })?,
        None => program.clone(),
    };
    let report = verify_program(&program);
    let (woven, image) = if report.has_static_error() {
        (None, None)
    } else {
        let w = weave(&program, &report).map_err(|source| CorpusError::Weave {
            name: name.clone(),
            source,
        })?;
        let img = load_program(&w, entry.adversary.as_deref()).map_err(|source| CorpusError::Load {
            name: name.clone(),
            source,
        })?;
        (Some(w), Some(img))
    };
    Ok(Prepared {
        name,
        program,
        executable,
        report,
        woven,
        image,
    })
}
