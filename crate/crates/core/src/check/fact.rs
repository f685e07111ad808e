//! Flow facts and the branch merge.

use std::collections::BTreeMap;

use crate::ast::PrimType;
use crate::diag::{Code, Diagnostic, Span};
use crate::perm::{self, Ownership, RefType, StateKnowledge};
use crate::resolve::{ContractInfo, SymbolTable, ValueType};

/// Static type of a value at a program point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ty {
    Prim(PrimType),
    Ref(RefType),
    Void,
    /// Result of an expression that already produced a diagnostic; it is
    /// accepted everywhere so that one mistake is reported once.
    Err,
}

impl Ty {
    pub fn from_value(v: &ValueType) -> Ty {
        match v {
            ValueType::Prim(p) => Ty::Prim(*p),
            ValueType::Ref(r) => Ty::Ref(r.clone()),
        }
    }

    pub fn as_ref(&self) -> Option<&RefType> {
        match self {
            Ty::Ref(r) => Some(r),
            _ => None,
        }
    }

    /// An owning reference to an asset: dropping it loses the asset.
    pub fn owns_asset(&self, t: &SymbolTable) -> bool {
        matches!(self, Ty::Ref(r) if perm::is_owning(r) && t.is_asset(&r.contract))
    }

    pub fn describe(&self) -> String {
        match self {
            Ty::Prim(p) => p.keyword().to_string(),
            Ty::Ref(r) => r.to_string(),
            Ty::Void => "no value".to_string(),
            Ty::Err => "<error>".to_string(),
        }
    }
}

/// Identifies a field of `this`: contract-level (`state == None`) or
/// belonging to one state.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FieldKey {
    pub state: Option<String>,
    pub name: String,
}

impl FieldKey {
    pub fn contract(name: impl Into<String>) -> Self {
        FieldKey { state: None, name: name.into() }
    }

    pub fn state(state: impl Into<String>, name: impl Into<String>) -> Self {
        FieldKey { state: Some(state.into()), name: name.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FieldVal {
    /// Not yet assigned in this constructor.
    Uninit,
    Init(Ty),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Local {
    pub ty: Ty,
    /// Block nesting depth of the declaration; parameters are at depth 0.
    pub depth: usize,
    pub is_param: bool,
    pub span: Span,
    /// Where ownership was last moved out, for error notes.
    pub moved_at: Option<Span>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowFact {
    pub reachable: bool,
    pub locals: BTreeMap<String, Local>,
    pub this_ty: RefType,
    /// Fields whose current type differs from (or may differ from) the
    /// declaration. Absent fields have their declared type.
    pub fields: BTreeMap<FieldKey, FieldVal>,
    /// `S::f = e` assignments not yet consumed by a transition.
    pub pending: BTreeMap<FieldKey, (Ty, Span)>,
}

impl FlowFact {
    pub fn unreachable(this_ty: RefType) -> Self {
        FlowFact {
            reachable: false,
            locals: BTreeMap::new(),
            this_ty,
            fields: BTreeMap::new(),
            pending: BTreeMap::new(),
        }
    }

    /// Whether `this` may currently be in `state`.
    pub fn state_possible(&self, state: &str) -> bool {
        match &self.this_ty.states {
            StateKnowledge::Unknown => true,
            StateKnowledge::Known(s) => s.contains(state),
        }
    }
}

pub fn declared_field(c: &ContractInfo, key: &FieldKey) -> Option<Ty> {
    let f = match &key.state {
        None => c.field(&key.name),
        Some(s) => c.state_field(s, &key.name),
    }?;
    Some(Ty::from_value(&f.ty))
}

pub fn join_ty(a: &Ty, b: &Ty, t: &SymbolTable, span: Span, diags: &mut Vec<Diagnostic>) -> Ty {
    match (a, b) {
        (Ty::Ref(x), Ty::Ref(y)) => {
            let (j, d) = perm::join(x, y, t.is_asset(&x.contract), span);
            diags.extend(d);
            Ty::Ref(j)
        }
        (Ty::Prim(x), Ty::Prim(y)) if x == y => Ty::Prim(*x),
        (Ty::Void, Ty::Void) => Ty::Void,
        _ => Ty::Err,
    }
}

fn join_field(a: &FieldVal, b: &FieldVal, t: &SymbolTable, span: Span, diags: &mut Vec<Diagnostic>) -> FieldVal {
    match (a, b) {
        (FieldVal::Init(x), FieldVal::Init(y)) => FieldVal::Init(join_ty(x, y, t, span, diags)),
        _ => FieldVal::Uninit,
    }
}

/// Removes state knowledge from references that do not own their object.
/// Such knowledge is only trustworthy inside the test that established it.
pub fn strip_unowned_knowledge(f: &mut FlowFact) {
    fn strip(r: &mut RefType) {
        if r.ownership != Ownership::Owned {
            r.states = StateKnowledge::Unknown;
        }
    }
    strip(&mut f.this_ty);
    for l in f.locals.values_mut() {
        if let Ty::Ref(r) = &mut l.ty {
            strip(r);
        }
    }
    for v in f.fields.values_mut() {
        if let FieldVal::Init(Ty::Ref(r)) = v {
            strip(r);
        }
    }
}

/// Pointwise join of two facts at the end of an `if`. Both facts must have
/// the same locals (branch-local declarations already removed).
pub fn merge_branches(
    a: FlowFact,
    b: FlowFact,
    c: &ContractInfo,
    t: &SymbolTable,
    span: Span,
) -> (FlowFact, Vec<Diagnostic>) {
    if !a.reachable {
        return (b, Vec::new());
    }
    if !b.reachable {
        return (a, Vec::new());
    }
    let mut diags = Vec::new();
    let mut locals = BTreeMap::new();
    for (name, la) in &a.locals {
        match b.locals.get(name) {
            Some(lb) => {
                let ty = join_ty(&la.ty, &lb.ty, t, span, &mut diags);
                let moved_at = la.moved_at.or(lb.moved_at);
                locals.insert(name.clone(), Local { ty, moved_at, ..la.clone() });
            }
            None => {
                diags.push(Diagnostic::new(Code::Internal, span, format!("internal: `{name}` is live on one branch only")));
            }
        }
    }
    let (this_ty, d) = perm::join(&a.this_ty, &b.this_ty, c.is_asset, span);
    diags.extend(d);

    let mut fields = BTreeMap::new();
    let keys: std::collections::BTreeSet<&FieldKey> = a.fields.keys().chain(b.fields.keys()).collect();
    for key in keys {
        let (pa, pb) = match &key.state {
            None => (true, true),
            Some(s) => (a.state_possible(s), b.state_possible(s)),
        };
        let declared = || declared_field(c, key).map(FieldVal::Init).unwrap_or(FieldVal::Init(Ty::Err));
        let va = a.fields.get(key).cloned().unwrap_or_else(declared);
        let vb = b.fields.get(key).cloned().unwrap_or_else(declared);
        let v = match (pa, pb) {
            (true, true) => join_field(&va, &vb, t, span, &mut diags),
            (true, false) => va,
            (false, true) => vb,
            (false, false) => continue,
        };
        fields.insert(key.clone(), v);
    }

    let mut pending = BTreeMap::new();
    for (key, (ty, sp)) in a.pending.iter().chain(b.pending.iter()) {
        let both = a.pending.contains_key(key) && b.pending.contains_key(key);
        if both {
            if let (Some((x, _)), Some((y, _))) = (a.pending.get(key), b.pending.get(key)) {
                if !pending.contains_key(key) {
                    let j = join_ty(x, y, t, span, &mut diags);
                    pending.insert(key.clone(), (j, *sp));
                }
            }
        } else {
            let _ = ty;
            diags.push(
                Diagnostic::new(
                    Code::DanglingPreinit,
                    *sp,
                    format!(
                        "`{}::{}` is assigned on only one branch and no transition follows it there",
                        key.state.as_deref().unwrap_or("?"),
                        key.name
                    ),
                )
                .with_note("a pre-transition assignment must be followed by a transition on the same path"),
            );
        }
    }

    (FlowFact { reachable: true, locals, this_ty, fields, pending }, diags)
}
