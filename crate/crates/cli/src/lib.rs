//! Subcommands of `obsc`. Each returns the process exit code and writes its
//! report to the given sink, which keeps them testable without a process.
//!
//! Exit codes: 0 success, 1 diagnostics or failed run, 2 usage or I/O error.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use obs_core::interp::{parse_script, run_script, Interpreter};
use obs_core::{analyze, Code, Diagnostic, Severity};
use serde::{Deserialize, Serialize};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReportEntry {
    pub code: Code,
    pub severity: Severity,
    pub line: u32,
    pub col: u32,
    pub end_line: u32,
    pub end_col: u32,
    pub message: String,
    pub notes: Vec<String>,
}

/// Machine-readable output of `check --json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub version: u32,
    pub file: String,
    pub diagnostics: Vec<ReportEntry>,
}

impl DiagnosticReport {
    /// `diags` must already be sorted.
    pub fn new(file: &str, diags: &[Diagnostic]) -> Self {
        let diagnostics = diags
            .iter()
            .map(|d| ReportEntry {
                code: d.code,
                severity: d.severity,
                line: d.span.line,
                col: d.span.col,
                end_line: d.span.end_line,
                end_col: d.span.end_col,
                message: d.message.clone(),
                notes: d.notes.clone(),
            })
            .collect();
        DiagnosticReport { version: REPORT_VERSION, file: file.to_string(), diagnostics }
    }
}

/// `file:line:col: error[CODE]: message`, followed by indented notes.
pub fn render_text(file: &str, d: &Diagnostic) -> String {
    let sev = match d.severity {
        Severity::Error => "error",
        Severity::Warning => "warning",
    };
    let mut s = format!("{file}:{}:{}: {sev}[{}]: {}", d.span.line, d.span.col, d.code, d.message);
    for n in &d.notes {
        s.push_str(&format!("\n  note: {n}"));
    }
    s
}

fn read(path: &Path, err: &mut dyn Write) -> Option<String> {
    match fs::read_to_string(path) {
        Ok(s) => Some(s),
        Err(e) => {
            let _ = writeln!(err, "error: cannot read {}: {e}", path.display());
            None
        }
    }
}

pub fn cmd_check(path: &Path, json: bool, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let Some(src) = read(path, err) else { return 2 };
    let a = analyze(&src);
    let file = path.display().to_string();
    if json {
        let report = DiagnosticReport::new(&file, &a.diagnostics);
        let text = serde_json::to_string_pretty(&report).expect("report serialises");
        let _ = writeln!(out, "{text}");
    } else {
        for d in &a.diagnostics {
            let _ = writeln!(out, "{}", render_text(&file, d));
        }
    }
    i32::from(a.has_errors())
}

pub fn cmd_run(program: &Path, script: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let Some(src) = read(program, err) else { return 2 };
    let Some(text) = read(script, err) else { return 2 };
    let a = analyze(&src);
    let file = program.display().to_string();
    if a.has_errors() {
        for d in a.diagnostics.iter().filter(|d| d.is_error()) {
            let _ = writeln!(err, "{}", render_text(&file, d));
        }
        let _ = writeln!(err, "error: {file} has errors; refusing to run it");
        return 1;
    }
    let cmds = match parse_script(&text) {
        Ok(c) => c.into_iter().map(|(_, c)| c).collect::<Vec<_>>(),
        Err(e) => {
            let _ = writeln!(err, "error: {}: {e}", script.display());
            return 1;
        }
    };
    let table = a.table.as_ref().expect("checked programs have a symbol table");
    let result = run_script(&Interpreter::new(&a.program, table), &cmds);
    for line in &result.transcript {
        let _ = writeln!(out, "{line}");
    }
    i32::from(!result.ok)
}

/// Codes listed in an `.expect` file: one per line, `#` comments allowed.
pub fn parse_expect(text: &str) -> Result<BTreeSet<Code>, String> {
    let mut set = BTreeSet::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        set.insert(Code::parse(line).ok_or_else(|| format!("unknown code `{line}`"))?);
    }
    Ok(set)
}

fn show(set: &BTreeSet<Code>) -> String {
    if set.is_empty() {
        return "{}".to_string();
    }
    let v: Vec<&str> = set.iter().map(|c| c.as_str()).collect();
    format!("{{{}}}", v.join(", "))
}

pub fn cmd_corpus(dir: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) => {
            let _ = writeln!(err, "error: cannot read {}: {e}", dir.display());
            return 2;
        }
    };
    let mut files: Vec<_> =
        entries.filter_map(Result::ok).map(|e| e.path()).filter(|p| p.extension().is_some_and(|x| x == "obs")).collect();
    files.sort();
    let mut failed = 0;
    for f in &files {
        let name = f.file_name().unwrap_or_default().to_string_lossy().into_owned();
        let Some(src) = read(f, err) else {
            failed += 1;
            let _ = writeln!(out, "FAIL {name}  (unreadable)");
            continue;
        };
        let got: BTreeSet<Code> = analyze(&src).diagnostics.iter().map(|d| d.code).collect();
        let expect_path = f.with_extension("expect");
        let expected = match fs::read_to_string(&expect_path) {
            Ok(t) => parse_expect(&t),
            Err(_) => Err("missing .expect file".to_string()),
        };
        match expected {
            Ok(want) if want == got => {
                let _ = writeln!(out, "PASS {name}  {}", show(&got));
            }
            Ok(want) => {
                failed += 1;
                let _ = writeln!(out, "FAIL {name}  expected {} got {}", show(&want), show(&got));
            }
            Err(note) => {
                failed += 1;
                let _ = writeln!(out, "FAIL {name}  ({note}; got {})", show(&got));
            }
        }
    }
    let _ = writeln!(out, "{} passed, {failed} failed", files.len() - failed);
    i32::from(failed > 0)
}
