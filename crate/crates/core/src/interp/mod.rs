//! Reference interpreter with a dynamic ownership and typestate monitor.
//!
//! A [`World`] is a heap of contract instances plus the handles held by the
//! external caller (the script). Every reference stored anywhere carries a
//! dynamic [`Ownership`]; calls rewrite it with the same rule the checker
//! uses, so a violation the checker would have reported shows up here as a
//! [`MonitorFault`]. Each top-level command runs against a snapshot and the
//! world is restored on revert or fault.

mod exec;
mod script;

pub use script::{parse_script, run_script, Command, ScriptArg, ScriptError, ScriptOutcome};

use std::collections::BTreeMap;
use std::fmt;

use crate::ast::Program;
use crate::diag::{Code, Diagnostic, Span};
use crate::perm::Ownership;
use crate::resolve::SymbolTable;

use exec::Exec;

pub type ObjId = u64;

/// A runtime value. References carry the permission of the slot they were
/// read from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Str(String),
    Ref { id: ObjId, perm: Ownership },
    Unit,
}

impl Value {
    pub fn as_ref(&self) -> Option<(ObjId, Ownership)> {
        match self {
            Value::Ref { id, perm } => Some((*id, *perm)),
            _ => None,
        }
    }

    /// A script-side reference; its permission is taken from the handle.
    pub fn handle(id: ObjId) -> Value {
        Value::Ref { id, perm: Ownership::Unowned }
    }
}

/// Who currently holds the owning reference to an object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Owner {
    Field { obj: ObjId, field: String },
    /// A handle held by the external caller.
    Local,
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectRecord {
    pub contract: String,
    pub state: Option<String>,
    /// Contract fields plus the fields of the current state. A missing
    /// entry is an uninitialised field.
    pub fields: BTreeMap<String, Value>,
    pub owned_by: Option<Owner>,
    pub is_asset: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssetLedger {
    pub created: u64,
    pub consumed_into_fields: u64,
    pub disowned: u64,
    pub live_owned_locals: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct World {
    pub heap: BTreeMap<ObjId, ObjectRecord>,
    pub next_id: ObjId,
    pub ledger: AssetLedger,
    /// References held by the script, by object.
    pub handles: BTreeMap<ObjId, Ownership>,
    pub main: Option<ObjId>,
}

impl World {
    pub fn object(&self, id: ObjId) -> Option<&ObjectRecord> {
        self.heap.get(&id)
    }

    /// `Contract#id` for references, the literal otherwise.
    pub fn show(&self, v: &Value) -> String {
        match v {
            Value::Int(i) => i.to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Str(s) => format!("{s:?}"),
            Value::Unit => "()".to_string(),
            Value::Ref { id, .. } => match self.heap.get(id) {
                Some(o) => format!("{}#{id}", o.contract),
                None => format!("?#{id}"),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaultKind {
    InvalidState,
    Permission,
    AssetLost,
    FieldInvariant,
    ParamPost,
    ReceiverPost,
    Reentrancy,
    TypeMismatch,
    Arity,
    Uninitialized,
    DisownUnowned,
    TransitionUnowned,
    InitConflict,
}

impl FaultKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::InvalidState => "invalid-state",
            FaultKind::Permission => "permission",
            FaultKind::AssetLost => "asset-lost",
            FaultKind::FieldInvariant => "field-invariant",
            FaultKind::ParamPost => "param-post",
            FaultKind::ReceiverPost => "receiver-post",
            FaultKind::Reentrancy => "reentrancy",
            FaultKind::TypeMismatch => "type-mismatch",
            FaultKind::Arity => "arity",
            FaultKind::Uninitialized => "uninitialized",
            FaultKind::DisownUnowned => "disown-unowned",
            FaultKind::TransitionUnowned => "transition-unowned",
            FaultKind::InitConflict => "init-conflict",
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonitorFault {
    pub kind: FaultKind,
    pub message: String,
}

impl MonitorFault {
    pub fn new(kind: FaultKind, message: impl Into<String>) -> Self {
        MonitorFault { kind, message: message.into() }
    }
}

impl fmt::Display for MonitorFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

/// The dynamic failure a checker error guards against. `None` only for
/// purely syntactic codes and internal errors.
pub fn fault_class_for(code: Code) -> Option<FaultKind> {
    use Code::*;
    Some(match code {
        Lex | Parse | LocalAnnot | StateTestExpr | NoLoops | Internal | DisownAsset | Unreachable => return None,
        DupName | UndefContract | UndefName | NoStates | UndefState | MultiMain | NoMain => FaultKind::TypeMismatch,
        TypeMismatch | AssertFail => FaultKind::TypeMismatch,
        Arity => FaultKind::Arity,
        NoCtorState | ReceiverPre => FaultKind::InvalidState,
        ArgPerm => FaultKind::Permission,
        ReceiverPost => FaultKind::ReceiverPost,
        ParamPost => FaultKind::ParamPost,
        FieldEnd => FaultKind::FieldInvariant,
        UninitStateField => FaultKind::Uninitialized,
        AssetContainment | AssetScope | AssetOverwrite | AssetTransition | AssetLossBranch => FaultKind::AssetLost,
        MixedInit | DanglingPreinit => FaultKind::InitConflict,
        TransitionUnowned => FaultKind::TransitionUnowned,
        DisownUnowned => FaultKind::DisownUnowned,
    })
}

/// Result of one top-level command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    /// Normal completion; `Unit` for transactions without a result.
    Returned(Value),
    Reverted(String),
    Fault(MonitorFault),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DeployError {
    NoMain(Diagnostic),
    AlreadyDeployed,
    Reverted(String),
    Fault(MonitorFault),
}

impl fmt::Display for DeployError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeployError::NoMain(d) => write!(f, "{}: {}", d.code.as_str(), d.message),
            DeployError::AlreadyDeployed => f.write_str("the main contract is already deployed"),
            DeployError::Reverted(m) => write!(f, "constructor reverted: {m:?}"),
            DeployError::Fault(m) => write!(f, "FAULT {m}"),
        }
    }
}

/// Asset accounting at one point in time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerReport {
    pub ledger: AssetLedger,
    /// Live asset objects nobody owns.
    pub unowned: Vec<ObjId>,
    /// Assets with more than one owning reference.
    pub duplicated: Vec<ObjId>,
}

impl LedgerReport {
    pub fn balanced(&self) -> bool {
        let l = &self.ledger;
        self.unowned.is_empty()
            && self.duplicated.is_empty()
            && l.created == l.consumed_into_fields + l.disowned + l.live_owned_locals
    }
}

impl fmt::Display for LedgerReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let l = &self.ledger;
        write!(
            f,
            "created={} fields={} disowned={} script={}",
            l.created, l.consumed_into_fields, l.disowned, l.live_owned_locals
        )?;
        if self.balanced() {
            f.write_str(" balanced")
        } else {
            write!(f, " UNBALANCED unowned={:?} duplicated={:?}", self.unowned, self.duplicated)
        }
    }
}

/// Recomputes `owned_by` for every object and the derived ledger counts.
pub fn audit(w: &mut World) -> LedgerReport {
    let mut owners: BTreeMap<ObjId, Vec<Owner>> = BTreeMap::new();
    for (oid, o) in &w.heap {
        for (name, v) in &o.fields {
            if let Value::Ref { id, perm: Ownership::Owned } = v {
                owners.entry(*id).or_default().push(Owner::Field { obj: *oid, field: name.clone() });
            }
        }
    }
    for (id, perm) in &w.handles {
        if *perm == Ownership::Owned {
            owners.entry(*id).or_default().push(Owner::Local);
        }
    }
    let mut ledger = AssetLedger { created: w.ledger.created, ..AssetLedger::default() };
    let mut unowned = Vec::new();
    let mut duplicated = Vec::new();
    for (id, o) in w.heap.iter_mut() {
        let found = owners.remove(id).unwrap_or_default();
        if o.owned_by == Some(Owner::Discarded) {
            if o.is_asset {
                ledger.disowned += 1;
                if !found.is_empty() {
                    duplicated.push(*id);
                }
            }
            continue;
        }
        if found.len() > 1 && o.is_asset {
            duplicated.push(*id);
        }
        o.owned_by = found.into_iter().next();
        if !o.is_asset {
            continue;
        }
        match &o.owned_by {
            Some(Owner::Field { .. }) => ledger.consumed_into_fields += 1,
            Some(Owner::Local) => ledger.live_owned_locals += 1,
            Some(Owner::Discarded) => unreachable!("handled above"),
            None => unowned.push(*id),
        }
    }
    w.ledger = ledger.clone();
    LedgerReport { ledger, unowned, duplicated }
}

/// Executes checked programs.
pub struct Interpreter<'p> {
    pub program: &'p Program,
    pub table: &'p SymbolTable,
}

impl<'p> Interpreter<'p> {
    pub fn new(program: &'p Program, table: &'p SymbolTable) -> Self {
        Interpreter { program, table }
    }

    /// Creates a world holding one instance of the main contract, owned by
    /// the script.
    pub fn deploy(&self, args: &[Value]) -> Result<World, DeployError> {
        let mut w = World { next_id: 1, ..World::default() };
        self.deploy_into(&mut w, args)?;
        Ok(w)
    }

    /// Deploys into an existing world (objects created beforehand by the
    /// script keep their ids).
    pub fn deploy_into(&self, w: &mut World, args: &[Value]) -> Result<ObjId, DeployError> {
        if w.main.is_some() {
            return Err(DeployError::AlreadyDeployed);
        }
        let Some(main) = self.table.main_contract() else {
            return Err(DeployError::NoMain(Diagnostic::new(
                Code::NoMain,
                Span::default(),
                "program has no `main` contract to deploy",
            )));
        };
        let name = main.name.clone();
        match self.create(w, &name, args) {
            Outcome::Returned(Value::Ref { id, .. }) => {
                w.main = Some(id);
                Ok(id)
            }
            Outcome::Returned(_) => unreachable!("constructors yield references"),
            Outcome::Reverted(m) => Err(DeployError::Reverted(m)),
            Outcome::Fault(f) => Err(DeployError::Fault(f)),
        }
    }

    /// `new C(args)` issued by the script; the result is a script-owned
    /// handle.
    pub fn create(&self, w: &mut World, contract: &str, args: &[Value]) -> Outcome {
        self.transact(w, |ex| ex.external_new(contract, args))
    }

    /// Invokes `txn` on `obj` on behalf of the script. On revert or fault the
    /// world is left exactly as it was.
    pub fn invoke(&self, w: &mut World, obj: ObjId, txn: &str, args: &[Value]) -> Outcome {
        self.transact(w, |ex| ex.external_invoke(obj, txn, args))
    }

    /// Script-side `disown`: releases an owned handle.
    pub fn disown(&self, w: &mut World, obj: ObjId) -> Outcome {
        self.transact(w, |ex| ex.external_disown(obj))
    }

    fn transact(&self, w: &mut World, f: impl FnOnce(&mut Exec) -> Result<Value, exec::Abort>) -> Outcome {
        let snapshot = w.clone();
        let result = {
            let mut ex = Exec::new(self.program, self.table, w);
            f(&mut ex)
        };
        let outcome = match result {
            Ok(v) => {
                let report = audit(w);
                if let Some(id) = report.unowned.first() {
                    Outcome::Fault(MonitorFault::new(
                        FaultKind::AssetLost,
                        format!("asset {} is no longer owned by anyone", w.show(&Value::handle(*id))),
                    ))
                } else if let Some(id) = report.duplicated.first() {
                    Outcome::Fault(MonitorFault::new(
                        FaultKind::Permission,
                        format!("asset {} has more than one owner", w.show(&Value::handle(*id))),
                    ))
                } else {
                    Outcome::Returned(v)
                }
            }
            Err(exec::Abort::Revert(m)) => Outcome::Reverted(m),
            Err(exec::Abort::Fault(f)) => Outcome::Fault(f),
        };
        if !matches!(outcome, Outcome::Returned(_)) {
            *w = snapshot;
        }
        outcome
    }
}
