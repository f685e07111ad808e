//! Tokenizer. Operators use maximal munch; lexing continues past errors.

use std::fmt;

use crate::diag::{Code, Diagnostic, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Keyword {
    Contract,
    State,
    Transaction,
    Main,
    Asset,
    Returns,
    New,
    This,
    In,
    Disown,
    Revert,
    If,
    Else,
    Return,
    True,
    False,
    Int,
    Bool,
    String,
}

impl Keyword {
    fn lookup(s: &str) -> Option<Keyword> {
        Some(match s {
            "contract" => Keyword::Contract,
            "state" => Keyword::State,
            "transaction" => Keyword::Transaction,
            "main" => Keyword::Main,
            "asset" => Keyword::Asset,
            "returns" => Keyword::Returns,
            "new" => Keyword::New,
            "this" => Keyword::This,
            "in" => Keyword::In,
            "disown" => Keyword::Disown,
            "revert" => Keyword::Revert,
            "if" => Keyword::If,
            "else" => Keyword::Else,
            "return" => Keyword::Return,
            "true" => Keyword::True,
            "false" => Keyword::False,
            "int" => Keyword::Int,
            "bool" => Keyword::Bool,
            "string" => Keyword::String,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Keyword(Keyword),
    Ident(String),
    Int(i64),
    /// Unescaped contents.
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Semi,
    Comma,
    Dot,
    At,
    Pipe,
    Eq,
    EqEq,
    NotEq,
    Bang,
    Lt,
    Gt,
    Le,
    Ge,
    GtGt,
    Arrow,
    ColonColon,
    Plus,
    Minus,
    Star,
    AndAnd,
    OrOr,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TokenKind::Keyword(k) => return write!(f, "keyword `{}`", format!("{k:?}").to_lowercase()),
            TokenKind::Ident(s) => return write!(f, "identifier `{s}`"),
            TokenKind::Int(i) => return write!(f, "integer `{i}`"),
            TokenKind::Str(_) => "string literal",
            TokenKind::LBrace => "`{`",
            TokenKind::RBrace => "`}`",
            TokenKind::LParen => "`(`",
            TokenKind::RParen => "`)`",
            TokenKind::LBracket => "`[`",
            TokenKind::RBracket => "`]`",
            TokenKind::Semi => "`;`",
            TokenKind::Comma => "`,`",
            TokenKind::Dot => "`.`",
            TokenKind::At => "`@`",
            TokenKind::Pipe => "`|`",
            TokenKind::Eq => "`=`",
            TokenKind::EqEq => "`==`",
            TokenKind::NotEq => "`!=`",
            TokenKind::Bang => "`!`",
            TokenKind::Lt => "`<`",
            TokenKind::Gt => "`>`",
            TokenKind::Le => "`<=`",
            TokenKind::Ge => "`>=`",
            TokenKind::GtGt => "`>>`",
            TokenKind::Arrow => "`->`",
            TokenKind::ColonColon => "`::`",
            TokenKind::Plus => "`+`",
            TokenKind::Minus => "`-`",
            TokenKind::Star => "`*`",
            TokenKind::AndAnd => "`&&`",
            TokenKind::OrOr => "`||`",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Exact source text of the token.
    pub lexeme: String,
    pub span: Span,
}

/// Operators, longest first so that matching is maximal munch.
const OPERATORS: &[(&str, TokenKind)] = &[
    ("->", TokenKind::Arrow),
    (">>", TokenKind::GtGt),
    (">=", TokenKind::Ge),
    ("<=", TokenKind::Le),
    ("==", TokenKind::EqEq),
    ("!=", TokenKind::NotEq),
    ("::", TokenKind::ColonColon),
    ("&&", TokenKind::AndAnd),
    ("||", TokenKind::OrOr),
    ("{", TokenKind::LBrace),
    ("}", TokenKind::RBrace),
    ("(", TokenKind::LParen),
    (")", TokenKind::RParen),
    ("[", TokenKind::LBracket),
    ("]", TokenKind::RBracket),
    (";", TokenKind::Semi),
    (",", TokenKind::Comma),
    (".", TokenKind::Dot),
    ("@", TokenKind::At),
    ("|", TokenKind::Pipe),
    ("=", TokenKind::Eq),
    ("!", TokenKind::Bang),
    ("<", TokenKind::Lt),
    (">", TokenKind::Gt),
    ("+", TokenKind::Plus),
    ("-", TokenKind::Minus),
    ("*", TokenKind::Star),
];

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
    tokens: Vec<Token>,
    diags: Vec<Diagnostic>,
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.src[self.pos..].chars();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn mark(&self) -> (usize, u32, u32) {
        (self.pos, self.line, self.col)
    }

    fn span_from(&self, (start, line, col): (usize, u32, u32)) -> Span {
        Span { line, col, end_line: self.line, end_col: self.col, start, end: self.pos }
    }

    fn push(&mut self, kind: TokenKind, m: (usize, u32, u32)) {
        let span = self.span_from(m);
        self.tokens.push(Token { kind, lexeme: self.src[span.start..span.end].to_string(), span });
    }

    fn run(mut self) -> (Vec<Token>, Vec<Diagnostic>) {
        while let Some(c) = self.peek() {
            let m = self.mark();
            if c.is_whitespace() {
                self.bump();
            } else if c == '/' && self.peek2() == Some('/') {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else if c == '/' && self.peek2() == Some('*') {
                self.bump();
                self.bump();
                let mut closed = false;
                while let Some(c) = self.bump() {
                    if c == '*' && self.peek() == Some('/') {
                        self.bump();
                        closed = true;
                        break;
                    }
                }
                if !closed {
                    let span = self.span_from(m);
                    self.diags.push(Diagnostic::new(Code::Lex, span, "unterminated block comment"));
                }
            } else if c.is_ascii_alphabetic() || c == '_' {
                while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_') {
                    self.bump();
                }
                let text = &self.src[m.0..self.pos];
                let kind = match Keyword::lookup(text) {
                    Some(k) => TokenKind::Keyword(k),
                    None => TokenKind::Ident(text.to_string()),
                };
                self.push(kind, m);
            } else if c.is_ascii_digit() {
                while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
                    self.bump();
                }
                let text = &self.src[m.0..self.pos];
                match text.parse::<i64>() {
                    Ok(v) => self.push(TokenKind::Int(v), m),
                    Err(_) => {
                        let span = self.span_from(m);
                        self.diags.push(Diagnostic::new(Code::Lex, span, format!("integer literal `{text}` is too large")));
                        self.push(TokenKind::Int(0), m);
                    }
                }
            } else if c == '"' {
                self.string(m);
            } else if let Some((op, kind)) = OPERATORS.iter().find(|(op, _)| self.src[self.pos..].starts_with(op)) {
                for _ in 0..op.len() {
                    self.bump();
                }
                self.push(kind.clone(), m);
            } else {
                self.bump();
                let span = self.span_from(m);
                self.diags.push(Diagnostic::new(Code::Lex, span, format!("illegal character `{c}`")));
            }
        }
        (self.tokens, self.diags)
    }

    fn string(&mut self, m: (usize, u32, u32)) {
        self.bump();
        let mut value = String::new();
        loop {
            match self.peek() {
                None | Some('\n') => {
                    let span = self.span_from(m);
                    self.diags.push(Diagnostic::new(Code::Lex, span, "unterminated string literal"));
                    self.push(TokenKind::Str(value), m);
                    return;
                }
                Some('"') => {
                    self.bump();
                    self.push(TokenKind::Str(value), m);
                    return;
                }
                Some('\\') => {
                    self.bump();
                    match self.bump() {
                        Some('n') => value.push('\n'),
                        Some('t') => value.push('\t'),
                        Some('"') => value.push('"'),
                        Some('\\') => value.push('\\'),
                        Some(other) => {
                            let span = self.span_from(m);
                            self.diags.push(Diagnostic::new(Code::Lex, span, format!("unknown escape `\\{other}`")));
                            value.push(other);
                        }
                        None => {}
                    }
                }
                Some(c) => {
                    self.bump();
                    value.push(c);
                }
            }
        }
    }
}

/// Splits `source` into tokens. Whitespace and comments are skipped; lexing
/// continues past errors, which are returned alongside the tokens.
pub fn tokenize(source: &str) -> (Vec<Token>, Vec<Diagnostic>) {
    Lexer { src: source, pos: 0, line: 1, col: 1, tokens: Vec::new(), diags: Vec::new() }.run()
}

/// Escapes a string value back into literal form.
pub fn quote(value: &str) -> String {
    let mut out = String::with_capacity(value.len() + 2);
    out.push('"');
    for c in value.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
