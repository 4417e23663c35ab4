use std::path::{Path, PathBuf};

use gvc_core::resolve::load_source;
use gvc_core::verifier::{verify_program, VerificationReport};
use gvc_core::weaver::{weave, WeaveError};

use crate::output::{code, read, write};
use crate::{EXIT_OK, EXIT_STATIC, EXIT_USAGE};

pub fn cmd_weave(path: &Path, report: Option<&Path>, auto: bool, out: Option<&Path>) -> u8 {
    code(run(path, report, auto, out))
}

/// `<out>.map.json`, next to the woven file.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".map.json");
    PathBuf::from(name)
}

fn run(path: &Path, report: Option<&Path>, auto: bool, out: Option<&Path>) -> Result<u8, u8> {
    let source = read(path)?;
    let program = load_source(&source).map_err(|e| {
        println!("{}: {e}", path.display());
        EXIT_USAGE
    })?;
    let report = match (auto, report) {
        (true, _) => verify_program(&program),
        (false, Some(r)) => VerificationReport::from_json(&read(r)?).map_err(|e| {
            println!("{}: not a verification report: {e}", r.display());
            EXIT_USAGE
        })?,
        (false, None) => {
            println!("weave needs --report or --auto");
            return Err(EXIT_USAGE);
        }
    };
    let woven = weave(&program, &report).map_err(|e| {
        println!("{}: {e}", path.display());
        match e {
            WeaveError::StaticError(_) => EXIT_STATIC,
            WeaveError::StaleReport { .. } | WeaveError::Unplaced { .. } => EXIT_USAGE,
        }
    })?;
    match out {
        Some(o) => {
            write(o, &woven.render())?;
            write(&sidecar_path(o), &woven.sidecar_json())?;
            println!("wove {} check(s) into {}", woven.check_count(), o.display());
        }
        None => print!("{}", woven.render()),
    }
    Ok(EXIT_OK)
}
