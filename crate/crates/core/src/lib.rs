//! Front end and reference interpreter for a typestate-oriented smart
//! contract language with owned assets.
//!
//! The pipeline is [`syntax::parse_source`] → [`resolve::build_symbol_table`]
//! and [`resolve::check_wellformed`] → [`check::check_program`]; [`analyze`]
//! runs all of it. Checked programs can be executed with [`interp`].

pub mod ast;
pub mod check;
pub mod diag;
pub mod interp;
pub mod perm;
pub mod resolve;
pub mod syntax;

pub use ast::Program;
pub use diag::{has_errors, sort_diagnostics, Code, Diagnostic, Severity, Span};
pub use perm::{is_owning, join, satisfies, Ownership, RefType, StateKnowledge};
pub use resolve::SymbolTable;

/// Result of running the front end over one source file.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub program: Program,
    /// `None` when lexing or parsing failed; later phases are then skipped.
    pub table: Option<SymbolTable>,
    pub diagnostics: Vec<Diagnostic>,
}

impl Analysis {
    pub fn has_errors(&self) -> bool {
        has_errors(&self.diagnostics)
    }
}

/// Parses, resolves and checks `src`. Semantic phases run only on a
/// syntactically valid file.
pub fn analyze(src: &str) -> Analysis {
    let (program, diagnostics) = syntax::parse_source(src);
    analyze_parsed(program, diagnostics)
}

/// Runs the semantic phases over an already parsed program. `parse_diags`
/// are the parser's diagnostics; if any is an error the program is not
/// resolved or checked.
pub fn analyze_parsed(program: Program, parse_diags: Vec<Diagnostic>) -> Analysis {
    let mut diagnostics = parse_diags;
    if has_errors(&diagnostics) {
        sort_diagnostics(&mut diagnostics);
        return Analysis { program, table: None, diagnostics };
    }
    let (table, d) = resolve::build_symbol_table(&program);
    diagnostics.extend(d);
    diagnostics.extend(resolve::check_wellformed(&program, &table));
    diagnostics.extend(check::check_program(&program, &table));
    sort_diagnostics(&mut diagnostics);
    Analysis { program, table: Some(table), diagnostics }
}

/// Diagnostics for `src`, sorted by position.
pub fn check_source(src: &str) -> Vec<Diagnostic> {
    analyze(src).diagnostics
}
