//! Symbol tables and flow-insensitive well-formedness.
//!
//! [`build_symbol_table`] records every contract, state, field and signature,
//! converting surface annotations to [`RefType`]s. [`check_wellformed`] then
//! enforces rules that do not depend on control flow: asset containment,
//! constructor presence for stateful contracts, and the names used by
//! transitions and pre-transition assignments.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::*;
use crate::diag::{Code, Diagnostic, Span};
use crate::perm::{Ownership, RefType, StateKnowledge};

/// Resolved type of a value-carrying slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValueType {
    Prim(PrimType),
    Ref(RefType),
}

impl ValueType {
    pub fn as_ref(&self) -> Option<&RefType> {
        match self {
            ValueType::Ref(r) => Some(r),
            ValueType::Prim(_) => None,
        }
    }
}

impl std::fmt::Display for ValueType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ValueType::Prim(p) => f.write_str(p.keyword()),
            ValueType::Ref(r) => r.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldInfo {
    pub name: String,
    /// `None` for a contract-level field.
    pub state: Option<String>,
    pub ty: ValueType,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateInfo {
    pub name: String,
    pub fields: Vec<FieldInfo>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSig {
    pub name: String,
    pub pre: ValueType,
    pub post: ValueType,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxnSig {
    pub name: String,
    pub receiver_pre: RefType,
    pub receiver_post: RefType,
    pub params: Vec<ParamSig>,
    pub returns: Option<ValueType>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractInfo {
    pub name: String,
    pub is_main: bool,
    pub is_asset: bool,
    pub fields: Vec<FieldInfo>,
    /// Declaration order.
    pub states: Vec<StateInfo>,
    pub transactions: BTreeMap<String, TxnSig>,
    /// `None` when the contract relies on the implicit constructor.
    pub constructor: Option<TxnSig>,
    /// States the constructor can transition to, syntactically.
    pub ctor_targets: BTreeSet<String>,
    pub span: Span,
}

impl ContractInfo {
    pub fn has_states(&self) -> bool {
        !self.states.is_empty()
    }

    pub fn state(&self, name: &str) -> Option<&StateInfo> {
        self.states.iter().find(|s| s.name == name)
    }

    pub fn state_names(&self) -> BTreeSet<String> {
        self.states.iter().map(|s| s.name.clone()).collect()
    }

    pub fn field(&self, name: &str) -> Option<&FieldInfo> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn state_field(&self, state: &str, name: &str) -> Option<&FieldInfo> {
        self.state(state)?.fields.iter().find(|f| f.name == name)
    }

    /// Type of `new C(..)`: owned, in one of the constructor's target states.
    pub fn constructed_type(&self) -> RefType {
        RefType::new(self.name.clone(), Ownership::Owned, StateKnowledge::from_states(self.ctor_targets.iter().cloned()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolTable {
    pub contracts: BTreeMap<String, ContractInfo>,
}

impl SymbolTable {
    pub fn contract(&self, name: &str) -> Option<&ContractInfo> {
        self.contracts.get(name)
    }

    pub fn is_asset(&self, contract: &str) -> bool {
        self.contracts.get(contract).is_some_and(|c| c.is_asset)
    }

    pub fn main_contract(&self) -> Option<&ContractInfo> {
        self.contracts.values().find(|c| c.is_main)
    }
}

/// Contract-level fields always; fields of `S` only when the knowledge is
/// exactly `{S}`.
pub fn visible_fields<'t>(t: &'t SymbolTable, contract: &str, k: &StateKnowledge) -> Vec<&'t FieldInfo> {
    let Some(c) = t.contract(contract) else { return Vec::new() };
    let mut out: Vec<&FieldInfo> = c.fields.iter().collect();
    if let Some(s) = k.singleton().and_then(|s| c.state(s)) {
        out.extend(s.fields.iter());
    }
    out
}

struct Builder<'p> {
    program: &'p Program,
    diags: Vec<Diagnostic>,
}

impl<'p> Builder<'p> {
    fn err(&mut self, code: Code, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::new(code, span, msg));
    }

    fn states_of(&self, contract: &str) -> Option<Vec<String>> {
        self.program.contract(contract).map(|c| c.states.iter().map(|s| s.name.name.clone()).collect())
    }

    /// Converts `C @ ann` to a [`RefType`], reporting unknown contracts and
    /// states. Unknown states are dropped from the union.
    fn ref_type(&mut self, contract: &Ident, ann: &Annotation) -> RefType {
        let states = self.states_of(&contract.name);
        if states.is_none() {
            self.err(Code::UndefContract, contract.span, format!("unknown contract `{}`", contract.name));
        }
        match ann {
            Annotation::Owned => RefType::owned(&contract.name),
            Annotation::Unowned => RefType::unowned(&contract.name),
            Annotation::Shared => RefType::shared(&contract.name),
            Annotation::States(list) => {
                let mut known = Vec::new();
                for s in list {
                    match &states {
                        Some(decl) if decl.contains(&s.name) => known.push(s.name.clone()),
                        Some(_) => self.err(
                            Code::UndefState,
                            s.span,
                            format!("contract `{}` has no state `{}`", contract.name, s.name),
                        ),
                        None => {}
                    }
                }
                RefType::in_states(&contract.name, known)
            }
        }
    }

    fn type_expr(&mut self, t: &TypeExpr) -> ValueType {
        match t {
            TypeExpr::Prim(p, _) => ValueType::Prim(*p),
            TypeExpr::Ref { contract, ann } => ValueType::Ref(self.ref_type(contract, ann)),
        }
    }

    fn field(&mut self, f: &FieldDecl, state: Option<&str>) -> FieldInfo {
        FieldInfo { name: f.name.name.clone(), state: state.map(str::to_string), ty: self.type_expr(&f.ty), span: f.span }
    }

    fn signature(&mut self, c: &ContractDecl, t: &TransactionDecl) -> TxnSig {
        let (receiver_pre, receiver_post) = match &t.receiver {
            Some(r) => {
                if r.contract.name != c.name.name {
                    self.err(
                        Code::TypeMismatch,
                        r.contract.span,
                        format!("receiver of `{}` must have type `{}`, not `{}`", t.name.name, c.name.name, r.contract.name),
                    );
                }
                let own = Ident::new(c.name.name.clone(), r.contract.span);
                let pre = self.ref_type(&own, &r.pre);
                let post = match &r.post {
                    Some(p) => self.ref_type(&own, p),
                    None => pre.clone(),
                };
                (pre, post)
            }
            None => (RefType::shared(&c.name.name), RefType::shared(&c.name.name)),
        };
        let mut params = Vec::new();
        let mut seen = BTreeSet::new();
        for p in &t.params {
            if !seen.insert(p.name.name.clone()) {
                self.err(Code::DupName, p.name.span, format!("duplicate parameter `{}`", p.name.name));
            }
            let (pre, post) = match &p.ty {
                ParamType::Prim(pt, _) => (ValueType::Prim(*pt), ValueType::Prim(*pt)),
                ParamType::Ref { contract, pre, post } => {
                    let pre_t = self.ref_type(contract, pre);
                    let post_t = match post {
                        Some(a) => {
                            // unknown contract already reported for `pre`
                            let n = self.diags.len();
                            let r = self.ref_type(contract, a);
                            if self.states_of(&contract.name).is_none() {
                                self.diags.truncate(n);
                            }
                            r
                        }
                        None => pre_t.clone(),
                    };
                    (ValueType::Ref(pre_t), ValueType::Ref(post_t))
                }
            };
            params.push(ParamSig { name: p.name.name.clone(), pre, post, span: p.span });
        }
        let returns = t.returns.as_ref().map(|r| self.type_expr(r));
        TxnSig { name: t.name.name.clone(), receiver_pre, receiver_post, params, returns, span: t.span }
    }
}

fn collect_targets(b: &Block, out: &mut BTreeSet<String>) {
    for s in &b.stmts {
        match &s.kind {
            StmtKind::Transition { target, .. } => {
                out.insert(target.name.clone());
            }
            StmtKind::If { then_block, else_block, .. } | StmtKind::IfInState { then_block, else_block, .. } => {
                collect_targets(then_block, out);
                if let Some(e) = else_block {
                    collect_targets(e, out);
                }
            }
            _ => {}
        }
    }
}

/// Builds the symbol table. Duplicates keep the first declaration; every
/// problem is reported and the table is still returned.
pub fn build_symbol_table(p: &Program) -> (SymbolTable, Vec<Diagnostic>) {
    let mut b = Builder { program: p, diags: Vec::new() };
    let mut table = SymbolTable::default();
    let mut main_seen: Option<Span> = None;
    for c in &p.contracts {
        if table.contracts.contains_key(&c.name.name) {
            b.err(Code::DupName, c.name.span, format!("contract `{}` is declared more than once", c.name.name));
            continue;
        }
        if c.is_main {
            if main_seen.is_some() {
                b.err(Code::MultiMain, c.name.span, format!("`{}` is a second `main` contract", c.name.name));
            }
            main_seen.get_or_insert(c.name.span);
        }
        let mut names: BTreeSet<String> = BTreeSet::new();
        let mut fields = Vec::new();
        for f in &c.fields {
            if !names.insert(f.name.name.clone()) {
                b.err(Code::DupName, f.name.span, format!("field `{}` is declared more than once", f.name.name));
                continue;
            }
            fields.push(b.field(f, None));
        }
        let mut states: Vec<StateInfo> = Vec::new();
        for s in &c.states {
            if states.iter().any(|x| x.name == s.name.name) {
                b.err(Code::DupName, s.name.span, format!("state `{}` is declared more than once", s.name.name));
                continue;
            }
            let mut sf: Vec<FieldInfo> = Vec::new();
            for f in &s.fields {
                if names.contains(&f.name.name) || sf.iter().any(|x| x.name == f.name.name) {
                    b.err(
                        Code::DupName,
                        f.name.span,
                        format!("field `{}` is already declared in the scope of state `{}`", f.name.name, s.name.name),
                    );
                    continue;
                }
                sf.push(b.field(f, Some(&s.name.name)));
            }
            states.push(StateInfo { name: s.name.name.clone(), fields: sf, span: s.span });
        }
        let mut transactions = BTreeMap::new();
        for t in &c.transactions {
            let sig = b.signature(c, t);
            if transactions.contains_key(&t.name.name) {
                b.err(Code::DupName, t.name.span, format!("transaction `{}` is declared more than once", t.name.name));
                continue;
            }
            transactions.insert(t.name.name.clone(), sig);
        }
        let mut constructor = None;
        let mut ctor_targets = BTreeSet::new();
        for (i, t) in c.constructors.iter().enumerate() {
            let sig = b.signature(c, t);
            if i > 0 {
                b.err(Code::DupName, t.name.span, format!("contract `{}` declares more than one constructor", c.name.name));
                continue;
            }
            collect_targets(&t.body, &mut ctor_targets);
            ctor_targets.retain(|s| states.iter().any(|x| &x.name == s));
            constructor = Some(sig);
        }
        table.contracts.insert(
            c.name.name.clone(),
            ContractInfo {
                name: c.name.name.clone(),
                is_main: c.is_main,
                is_asset: c.is_asset,
                fields,
                states,
                transactions,
                constructor,
                ctor_targets,
                span: c.span,
            },
        );
    }
    (table, b.diags)
}

fn is_owning_decl(t: &ValueType) -> Option<&RefType> {
    match t {
        ValueType::Ref(r) if r.ownership == Ownership::Owned => Some(r),
        _ => None,
    }
}

/// Flow-insensitive rules over a program whose table has been built.
pub fn check_wellformed(p: &Program, t: &SymbolTable) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for c in &p.contracts {
        let Some(info) = t.contract(&c.name.name) else { continue };
        if info.span != c.span {
            // duplicate declaration; already reported
            continue;
        }
        if !info.is_asset {
            for f in info.fields.iter().chain(info.states.iter().flat_map(|s| s.fields.iter())) {
                if let Some(r) = is_owning_decl(&f.ty) {
                    if t.is_asset(&r.contract) {
                        diags.push(
                            Diagnostic::new(
                                Code::AssetContainment,
                                f.span,
                                format!(
                                    "non-asset contract `{}` cannot own asset `{}` through field `{}`",
                                    info.name, r.contract, f.name
                                ),
                            )
                            .with_note(format!("declare `asset contract {}` or make the field Unowned", info.name)),
                        );
                    }
                }
            }
        }
        if info.has_states() && info.constructor.is_none() {
            diags.push(Diagnostic::new(
                Code::NoCtorState,
                c.name.span,
                format!("contract `{}` has states but no constructor to put new instances in one", info.name),
            ));
        }
        for txn in c.constructors.iter().chain(&c.transactions) {
            walk_block(&txn.body, info, &mut diags);
        }
    }
    diags
}

fn walk_block(b: &Block, c: &ContractInfo, diags: &mut Vec<Diagnostic>) {
    for s in &b.stmts {
        match &s.kind {
            StmtKind::Transition { target, inits } => match c.state(&target.name) {
                None => diags.push(Diagnostic::new(
                    Code::UndefState,
                    target.span,
                    format!("contract `{}` has no state `{}`", c.name, target.name),
                )),
                Some(st) => {
                    for i in inits.iter().flatten() {
                        if !st.fields.iter().any(|f| f.name == i.field.name) {
                            diags.push(Diagnostic::new(
                                Code::UndefName,
                                i.field.span,
                                format!("state `{}` has no field `{}`", st.name, i.field.name),
                            ));
                        }
                    }
                }
            },
            StmtKind::PreInit { state, field, .. } => match c.state(&state.name) {
                None => diags.push(Diagnostic::new(
                    Code::UndefState,
                    state.span,
                    format!("contract `{}` has no state `{}`", c.name, state.name),
                )),
                Some(st) => {
                    if !st.fields.iter().any(|f| f.name == field.name) {
                        diags.push(Diagnostic::new(
                            Code::UndefName,
                            field.span,
                            format!("state `{}` has no field `{}`", st.name, field.name),
                        ));
                    }
                }
            },
            StmtKind::If { then_block, else_block, .. } | StmtKind::IfInState { then_block, else_block, .. } => {
                walk_block(then_block, c, diags);
                if let Some(e) = else_block {
                    walk_block(e, c, diags);
                }
            }
            _ => {}
        }
    }
}
