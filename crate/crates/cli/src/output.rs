use std::fs;
use std::path::Path;

use gvc_core::ast::SourceLoc;

/// ANSI color unless `GVC_COLOR=0`.
pub fn paint(code: &str, text: &str) -> String {
    if std::env::var("GVC_COLOR").is_ok_and(|v| v == "0") {
        text.to_string()
    } else {
        format!("\x1b[{code}m{text}\x1b[0m")
    }
}

pub fn red(text: &str) -> String {
    paint("31", text)
}

pub fn green(text: &str) -> String {
    paint("32", text)
}

pub fn yellow(text: &str) -> String {
    paint("33", text)
}

/// The source line at `loc` with a caret under the column.
pub fn excerpt(source: &str, loc: SourceLoc) -> String {
    let Some(line) = source.lines().nth(loc.line.saturating_sub(1) as usize) else {
        return String::new();
    };
    let pad = " ".repeat(loc.col.saturating_sub(1) as usize);
    format!("    {:>4} | {line}\n         | {pad}^", loc.line)
}

pub fn read(path: &Path) -> Result<String, u8> {
    fs::read_to_string(path).map_err(|e| {
        println!("error: cannot read {}: {e}", path.display());
        crate::EXIT_USAGE
    })
}

pub fn write(path: &Path, text: &str) -> Result<(), u8> {
    fs::write(path, text).map_err(|e| {
        println!("error: cannot write {}: {e}", path.display());
        crate::EXIT_USAGE
    })
}

/// Collapses a `Result<u8, u8>` pipeline into an exit code.
pub fn code(r: Result<u8, u8>) -> u8 {
    r.unwrap_or_else(|c| c)
}
