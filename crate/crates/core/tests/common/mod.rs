//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod drive;
pub mod gen;

use std::collections::BTreeSet;
use std::path::PathBuf;

use obs_core::{Code, Diagnostic};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn corpus(name: &str) -> String {
    let p = corpus_dir().join(name);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("cannot read {}: {e}", p.display()))
}

/// Every `.obs` file of the corpus as `(file name, source)`, sorted by name.
pub fn corpus_programs() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(corpus_dir())
        .expect("corpus directory")
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "obs"))
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let src = std::fs::read_to_string(&p).unwrap();
            (name, src)
        })
        .collect();
    out.sort();
    out
}

pub fn codes(diags: &[Diagnostic]) -> BTreeSet<Code> {
    diags.iter().map(|d| d.code).collect()
}

pub fn error_codes(diags: &[Diagnostic]) -> BTreeSet<Code> {
    diags.iter().filter(|d| d.is_error()).map(|d| d.code).collect()
}

/// Removes the 1-based, inclusive line range `from..=to` from `src`.
pub fn delete_lines(src: &str, from: usize, to: usize) -> String {
    src.lines()
        .enumerate()
        .filter(|(i, _)| *i + 1 < from || *i + 1 > to)
        .map(|(_, l)| format!("{l}\n"))
        .collect()
}
