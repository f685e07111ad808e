//! Line-oriented invocation scripts.
//!
//! ```text
//! # comment
//! deploy [args]
//! new Candy
//! invoke #1 restock #3
//! expect-revert "Can't bid on closed auctions."
//! disown #3
//! audit
//! ```
//!
//! Arguments are integers, `true`/`false`, double-quoted strings, or `#N`
//! handles. `expect-revert` refers to the command right before it.

use std::fmt;

use super::{audit, DeployError, Interpreter, ObjId, Outcome, Value, World};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptArg {
    Int(i64),
    Bool(bool),
    Str(String),
    Handle(ObjId),
}

impl ScriptArg {
    pub fn to_value(&self) -> Value {
        match self {
            ScriptArg::Int(i) => Value::Int(*i),
            ScriptArg::Bool(b) => Value::Bool(*b),
            ScriptArg::Str(s) => Value::Str(s.clone()),
            ScriptArg::Handle(h) => Value::handle(*h),
        }
    }
}

impl fmt::Display for ScriptArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptArg::Int(i) => write!(f, "{i}"),
            ScriptArg::Bool(b) => write!(f, "{b}"),
            ScriptArg::Str(s) => write!(f, "{s:?}"),
            ScriptArg::Handle(h) => write!(f, "#{h}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    Deploy(Vec<ScriptArg>),
    New { contract: String, args: Vec<ScriptArg> },
    Invoke { obj: ObjId, txn: String, args: Vec<ScriptArg> },
    ExpectRevert(String),
    Disown(ObjId),
    Audit,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args = |a: &[ScriptArg]| a.iter().map(|x| format!(" {x}")).collect::<String>();
        match self {
            Command::Deploy(a) => write!(f, "deploy{}", args(a)),
            Command::New { contract, args: a } => write!(f, "new {contract}{}", args(a)),
            Command::Invoke { obj, txn, args: a } => write!(f, "invoke #{obj} {txn}{}", args(a)),
            Command::ExpectRevert(m) => write!(f, "expect-revert {m:?}"),
            Command::Disown(h) => write!(f, "disown #{h}"),
            Command::Audit => f.write_str("audit"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("script line {line}: {message}")]
pub struct ScriptError {
    pub line: usize,
    pub message: String,
}

fn tokens(line: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '"' {
            chars.next();
            let mut s = String::from('"');
            loop {
                match chars.next() {
                    Some('"') => break,
                    Some('\\') => match chars.next() {
                        Some(e) => s.push(e),
                        None => return Err("unterminated string".into()),
                    },
                    Some(ch) => s.push(ch),
                    None => return Err("unterminated string".into()),
                }
            }
            out.push(s);
        } else {
            let mut s = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() {
                    break;
                }
                s.push(ch);
                chars.next();
            }
            out.push(s);
        }
    }
    Ok(out)
}

fn handle(t: &str) -> Result<ObjId, String> {
    t.strip_prefix('#').and_then(|n| n.parse().ok()).ok_or_else(|| format!("expected a handle like #1, found `{t}`"))
}

fn arg(t: &str) -> Result<ScriptArg, String> {
    if let Some(s) = t.strip_prefix('"') {
        return Ok(ScriptArg::Str(s.to_string()));
    }
    if t.starts_with('#') {
        return handle(t).map(ScriptArg::Handle);
    }
    match t {
        "true" => return Ok(ScriptArg::Bool(true)),
        "false" => return Ok(ScriptArg::Bool(false)),
        _ => {}
    }
    t.parse().map(ScriptArg::Int).map_err(|_| format!("bad argument `{t}`"))
}

fn command(line: &str) -> Result<Option<Command>, String> {
    let toks = tokens(line)?;
    let Some(head) = toks.first() else { return Ok(None) };
    let args = |from: usize| toks[from.min(toks.len())..].iter().map(|t| arg(t)).collect::<Result<Vec<_>, _>>();
    let cmd = match head.as_str() {
        "deploy" => Command::Deploy(args(1)?),
        "new" => {
            let c = toks.get(1).ok_or("`new` needs a contract name")?;
            Command::New { contract: c.clone(), args: args(2)? }
        }
        "invoke" => {
            let obj = handle(toks.get(1).ok_or("`invoke` needs a handle")?)?;
            let txn = toks.get(2).ok_or("`invoke` needs a transaction name")?.clone();
            Command::Invoke { obj, txn, args: args(3)? }
        }
        "expect-revert" => {
            let rest = line.trim_start().strip_prefix("expect-revert").unwrap_or("").trim();
            let msg = match toks.get(1) {
                Some(t) if t.starts_with('"') && toks.len() == 2 => t[1..].to_string(),
                _ => rest.to_string(),
            };
            Command::ExpectRevert(msg)
        }
        "disown" => {
            if toks.len() != 2 {
                return Err("`disown` takes one handle".into());
            }
            Command::Disown(handle(&toks[1])?)
        }
        "audit" if toks.len() == 1 => Command::Audit,
        other => return Err(format!("unknown command `{other}`")),
    };
    Ok(Some(cmd))
}

/// Parses a whole script; comments and blank lines are dropped. Each
/// command is paired with its 1-based line number.
pub fn parse_script(text: &str) -> Result<Vec<(usize, Command)>, ScriptError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match command(line) {
            Ok(Some(c)) => out.push((i + 1, c)),
            Ok(None) => {}
            Err(message) => return Err(ScriptError { line: i + 1, message }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ScriptOutcome {
    pub transcript: Vec<String>,
    /// No fault, every revert expected, every expectation met, every audit
    /// balanced.
    pub ok: bool,
    pub world: World,
    /// Outcome of each command in order (`None` for expect-revert and audit).
    pub outcomes: Vec<Option<Outcome>>,
}

/// Runs `cmds` against a fresh world.
pub fn run_script(interp: &Interpreter, cmds: &[Command]) -> ScriptOutcome {
    let mut w = World { next_id: 1, ..World::default() };
    let mut transcript = Vec::new();
    let mut outcomes = Vec::new();
    let mut ok = true;
    // a revert that still needs an expect-revert
    let mut unexpected: Option<String> = None;
    let mut last: Option<Outcome> = None;
    for cmd in cmds {
        transcript.push(format!("> {cmd}"));
        if !matches!(cmd, Command::ExpectRevert(_)) && unexpected.take().is_some() {
            ok = false;
        }
        let vals = |a: &[ScriptArg]| a.iter().map(ScriptArg::to_value).collect::<Vec<_>>();
        let (label, outcome) = match cmd {
            Command::Deploy(a) => {
                let o = match interp.deploy_into(&mut w, &vals(a)) {
                    Ok(id) => Outcome::Returned(Value::handle(id)),
                    Err(DeployError::Reverted(m)) => Outcome::Reverted(m),
                    Err(DeployError::Fault(f)) => Outcome::Fault(f),
                    Err(e) => {
                        transcript.push(format!("deploy failed: {e}"));
                        ok = false;
                        outcomes.push(None);
                        last = None;
                        continue;
                    }
                };
                ("deploy".to_string(), o)
            }
            Command::New { contract, args } => ("new".to_string(), interp.create(&mut w, contract, &vals(args))),
            Command::Invoke { obj, txn, args } => (txn.clone(), interp.invoke(&mut w, *obj, txn, &vals(args))),
            Command::Disown(h) => ("disown".to_string(), interp.disown(&mut w, *h)),
            Command::ExpectRevert(msg) => {
                match &last {
                    Some(Outcome::Reverted(m)) if m == msg => transcript.push("expect-revert matched".to_string()),
                    Some(Outcome::Reverted(m)) => {
                        transcript.push(format!("expect-revert FAILED: reverted with {m:?}"));
                        ok = false;
                    }
                    _ => {
                        transcript.push("expect-revert FAILED: previous command did not revert".to_string());
                        ok = false;
                    }
                }
                unexpected = None;
                last = None;
                outcomes.push(None);
                continue;
            }
            Command::Audit => {
                let r = audit(&mut w);
                if !r.balanced() {
                    ok = false;
                }
                transcript.push(format!("audit: {r}"));
                last = None;
                outcomes.push(None);
                continue;
            }
        };
        match &outcome {
            Outcome::Returned(v) => transcript.push(format!("{label} -> {}", w.show(v))),
            Outcome::Reverted(m) => {
                transcript.push(format!("{label} reverted: {m:?}"));
                unexpected = Some(m.clone());
            }
            Outcome::Fault(f) => {
                transcript.push(format!("{label} FAULT {f}"));
                ok = false;
            }
        }
        outcomes.push(Some(outcome.clone()));
        last = Some(outcome);
    }
    if unexpected.is_some() {
        ok = false;
    }
    ScriptOutcome { transcript, ok, world: w, outcomes }
}
