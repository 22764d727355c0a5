//! Catalog JSON and scene JSON Lines readers and writers.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::catalog::{Catalog, Scene};
use crate::error::{Error, Result};

/// `fs::read_to_string` with the path in the error message.
pub fn read_text(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    fs::read_to_string(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

pub fn read_catalog(path: impl AsRef<Path>) -> Result<Catalog> {
    let text = read_text(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_catalog(path: impl AsRef<Path>, catalog: &Catalog) -> Result<()> {
    let mut text = serde_json::to_string_pretty(catalog)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Parses JSON Lines; blank lines are skipped, errors carry 1-based line numbers.
pub fn parse_scenes(text: &str) -> Result<Vec<Scene>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })
        })
        .collect()
}

pub fn read_scenes(path: impl AsRef<Path>) -> Result<Vec<Scene>> {
    parse_scenes(&read_text(path)?)
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(to_jsonl(records)?.as_bytes())?;
    Ok(())
}

pub fn write_scenes(path: impl AsRef<Path>, scenes: &[Scene]) -> Result<()> {
    write_jsonl(path, scenes)
}
