//! Source spans and coded diagnostics.
//!
//! Every phase (lexer, parser, resolver, checker) reports problems as
//! [`Diagnostic`] values; nothing in the front end aborts on the first error.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A region of source text. Lines and columns are 1-based; columns count
/// characters, `start`/`end` are byte offsets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
    pub end_line: u32,
    pub end_col: u32,
    pub start: usize,
    pub end: usize,
}

impl Span {
    /// Smallest span covering both `self` and `other`.
    pub fn to(self, other: Span) -> Span {
        let (first, last) = if self.start <= other.start { (self, other) } else { (other, self) };
        let (end, end_line, end_col) = if last.end >= first.end {
            (last.end, last.end_line, last.end_col)
        } else {
            (first.end, first.end_line, first.end_col)
        };
        Span { line: first.line, col: first.col, end_line, end_col, start: first.start, end }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

macro_rules! codes {
    ($($(#[$doc:meta])* $variant:ident => $text:literal,)*) => {
        /// The fixed diagnostic catalog.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Code {
            $($(#[$doc])* $variant,)*
        }

        impl Code {
            pub const ALL: &'static [Code] = &[$(Code::$variant,)*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(Code::$variant => $text,)*
                }
            }

            pub fn parse(s: &str) -> Option<Code> {
                match s {
                    $($text => Some(Code::$variant),)*
                    _ => None,
                }
            }
        }
    };
}

codes! {
    /// Illegal character, unterminated string, bad literal.
    Lex => "E-LEX",
    /// Any other syntax error.
    Parse => "E-PARSE",
    LocalAnnot => "E-LOCAL-ANNOT",
    StateTestExpr => "E-STATE-TEST-EXPR",
    NoLoops => "E-NO-LOOPS",
    DupName => "E-DUP-NAME",
    UndefContract => "E-UNDEF-CONTRACT",
    UndefState => "E-UNDEF-STATE",
    UndefName => "E-UNDEF-NAME",
    MultiMain => "E-MULTI-MAIN",
    AssetContainment => "E-ASSET-CONTAINMENT",
    NoCtorState => "E-NO-CTOR-STATE",
    ArgPerm => "E-ARG-PERM",
    ReceiverPre => "E-RECEIVER-PRE",
    ReceiverPost => "E-RECEIVER-POST",
    ParamPost => "E-PARAM-POST",
    FieldEnd => "E-FIELD-END",
    AssetScope => "E-ASSET-SCOPE",
    AssetOverwrite => "E-ASSET-OVERWRITE",
    AssetTransition => "E-ASSET-TRANSITION",
    AssetLossBranch => "E-ASSET-LOSS-BRANCH",
    UninitStateField => "E-UNINIT-STATE-FIELD",
    MixedInit => "E-MIXED-INIT",
    DanglingPreinit => "E-DANGLING-PREINIT",
    TransitionUnowned => "E-TRANSITION-UNOWNED",
    DisownUnowned => "E-DISOWN-UNOWNED",
    DisownAsset => "W-DISOWN-ASSET",
    AssertFail => "E-ASSERT-FAIL",
    NoStates => "E-NO-STATES",
    NoMain => "E-NO-MAIN",
    TypeMismatch => "E-TYPE-MISMATCH",
    Arity => "E-ARITY",
    Unreachable => "W-UNREACHABLE",
    /// Violated internal precondition; never expected from user input.
    Internal => "E-INTERNAL",
}

impl Code {
    pub fn severity(self) -> Severity {
        if self.as_str().starts_with("W-") {
            Severity::Warning
        } else {
            Severity::Error
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Code {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Code {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Code::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown diagnostic code `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: Code,
    pub severity: Severity,
    pub span: Span,
    pub message: String,
    pub notes: Vec<String>,
}

impl Diagnostic {
    pub fn new(code: Code, span: Span, message: impl Into<String>) -> Self {
        Diagnostic { code, severity: code.severity(), span, message: message.into(), notes: Vec::new() }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

/// Stable report order: line, column, then code.
pub fn sort_diagnostics(diags: &mut [Diagnostic]) {
    diags.sort_by(|a, b| {
        (a.span.line, a.span.col, a.code, a.span.start, &a.message)
            .cmp(&(b.span.line, b.span.col, b.code, b.span.start, &b.message))
    });
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}
