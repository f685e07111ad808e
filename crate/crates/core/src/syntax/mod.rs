//! Lexing, parsing and printing of `.obs` source text.

pub mod lexer;
pub mod parser;
pub mod pretty;

pub use lexer::{tokenize, Keyword, Token, TokenKind};
pub use parser::{parse_program, Parsed};
pub use pretty::pretty_print;

use crate::ast::Program;
use crate::diag::Diagnostic;

/// Tokenizes and parses `src`, returning the tree and every lexical and
/// syntactic diagnostic in source order.
pub fn parse_source(src: &str) -> (Program, Vec<Diagnostic>) {
    let (tokens, mut diags) = tokenize(src);
    let parsed = parse_program(&tokens);
    diags.extend(parsed.diagnostics);
    crate::diag::sort_diagnostics(&mut diags);
    (parsed.program, diags)
}
