//! Flow-sensitive typestate and ownership checker.
//!
//! Each transaction body is walked once, forward, carrying a [`FlowFact`].
//! Dynamic state tests are the only narrowing construct; branches meet via
//! [`merge_branches`]. All obligations (parameter and receiver post types,
//! field declarations, asset ownership) are checked at every exit that can
//! commit, which excludes reverting paths.

mod fact;

pub use fact::{declared_field, merge_branches, FieldKey, FieldVal, FlowFact, Local, Ty};

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::*;
use crate::diag::{sort_diagnostics, Code, Diagnostic, Span};
use crate::perm::{self, Ownership, RefType, StateKnowledge};
use crate::resolve::{ContractInfo, SymbolTable, TxnSig, ValueType};

/// Checks every constructor and transaction of every contract.
pub fn check_program(p: &Program, t: &SymbolTable) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for c in &p.contracts {
        let Some(info) = t.contract(&c.name.name) else { continue };
        if info.span != c.span {
            continue;
        }
        if c.constructors.is_empty() && info.fields.iter().any(|f| matches!(f.ty, ValueType::Ref(_))) {
            diags.push(
                Diagnostic::new(
                    Code::FieldEnd,
                    c.name.span,
                    format!("contract `{}` has reference fields but no constructor to initialise them", info.name),
                )
                .with_note("the implicit constructor can only default `int`, `bool` and `string` fields"),
            );
        }
        for (i, txn) in c.constructors.iter().enumerate() {
            if i == 0 {
                diags.extend(check_transaction(t, info, txn));
            }
        }
        for txn in &c.transactions {
            if info.transactions.get(&txn.name.name).is_some_and(|s| s.span == txn.span) {
                diags.extend(check_transaction(t, info, txn));
            }
        }
    }
    sort_diagnostics(&mut diags);
    diags
}

/// Checks one body against its signature.
pub fn check_transaction(t: &SymbolTable, c: &ContractInfo, txn: &TransactionDecl) -> Vec<Diagnostic> {
    let sig = if txn.is_constructor {
        c.constructor.clone()
    } else {
        c.transactions.get(&txn.name.name).cloned()
    };
    let Some(sig) = sig else { return Vec::new() };
    let mut ck = Checker { t, c, sig: &sig, is_ctor: txn.is_constructor, diags: Vec::new(), depth: 0 };
    let mut f = ck.initial_fact();
    let end = closing_brace(&txn.body);
    ck.depth = 1;
    ck.stmts(&mut f, &txn.body.stmts);
    if f.reachable {
        if let Some(r) = sig.returns.as_ref().filter(|_| !txn.is_constructor) {
            ck.err(Code::TypeMismatch, end, format!("`{}` must return a value of type `{r}` on every path", sig.name));
        }
        ck.exit_checks(&f, end);
    }
    let mut d = ck.diags;
    sort_diagnostics(&mut d);
    d
}

fn closing_brace(b: &Block) -> Span {
    let s = b.span;
    Span {
        line: s.end_line,
        col: s.end_col.saturating_sub(1).max(1),
        end_line: s.end_line,
        end_col: s.end_col,
        start: s.end.saturating_sub(1),
        end: s.end,
    }
}

/// Storage location named by a place expression.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Loc {
    Local(String),
    Field(FieldKey),
    This,
}

struct Checker<'a> {
    t: &'a SymbolTable,
    c: &'a ContractInfo,
    sig: &'a TxnSig,
    is_ctor: bool,
    diags: Vec<Diagnostic>,
    depth: usize,
}

fn ann_name(r: &RefType) -> String {
    r.to_string()
}

impl<'a> Checker<'a> {
    fn err(&mut self, code: Code, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::new(code, span, msg));
    }

    fn push(&mut self, d: Diagnostic) {
        self.diags.push(d);
    }

    fn initial_fact(&self) -> FlowFact {
        let mut f = FlowFact::unreachable(if self.is_ctor {
            RefType::owned(&self.c.name)
        } else {
            self.sig.receiver_pre.clone()
        });
        f.reachable = true;
        for p in &self.sig.params {
            f.locals.insert(
                p.name.clone(),
                Local { ty: Ty::from_value(&p.pre), depth: 0, is_param: true, span: p.span, moved_at: None },
            );
        }
        if self.is_ctor {
            for fi in &self.c.fields {
                f.fields.insert(FieldKey::contract(&fi.name), FieldVal::Uninit);
            }
            for s in &self.c.states {
                for fi in &s.fields {
                    f.fields.insert(FieldKey::state(&s.name, &fi.name), FieldVal::Uninit);
                }
            }
        }
        f
    }

    // ---- places ----

    fn resolve_name(&mut self, f: &FlowFact, id: &Ident, this_only: bool) -> Option<Loc> {
        if !this_only && f.locals.contains_key(&id.name) {
            return Some(Loc::Local(id.name.clone()));
        }
        if self.c.field(&id.name).is_some() {
            return Some(Loc::Field(FieldKey::contract(&id.name)));
        }
        if let Some(s) = f.this_ty.states.singleton() {
            if self.c.state_field(s, &id.name).is_some() {
                return Some(Loc::Field(FieldKey::state(s, &id.name)));
            }
        }
        let owners: Vec<&str> =
            self.c.states.iter().filter(|s| s.fields.iter().any(|x| x.name == id.name)).map(|s| s.name.as_str()).collect();
        if owners.is_empty() {
            self.err(Code::UndefName, id.span, format!("unknown name `{}`", id.name));
        } else {
            self.push(
                Diagnostic::new(
                    Code::UndefName,
                    id.span,
                    format!("field `{}` is not in scope: `this` is `{}`", id.name, ann_name(&f.this_ty)),
                )
                .with_note(format!(
                    "`{}` belongs to state {}; it is only accessible where `this` is known to be in exactly that state",
                    id.name,
                    owners.join(", ")
                )),
            );
        }
        None
    }

    fn resolve_place(&mut self, f: &FlowFact, p: &Place) -> Option<Loc> {
        match p {
            Place::Name(id) => self.resolve_name(f, id, false),
            Place::ThisField(id) => self.resolve_name(f, id, true),
        }
    }

    fn loc_val(&self, f: &FlowFact, loc: &Loc) -> FieldVal {
        match loc {
            Loc::Local(n) => FieldVal::Init(f.locals.get(n).map(|l| l.ty.clone()).unwrap_or(Ty::Err)),
            Loc::This => FieldVal::Init(Ty::Ref(f.this_ty.clone())),
            Loc::Field(k) => match f.fields.get(k) {
                Some(v) => v.clone(),
                None => FieldVal::Init(declared_field(self.c, k).unwrap_or(Ty::Err)),
            },
        }
    }

    /// Current type of a location, reporting reads of uninitialised fields.
    fn read_loc(&mut self, f: &FlowFact, loc: &Loc, span: Span) -> Ty {
        match self.loc_val(f, loc) {
            FieldVal::Init(t) => t,
            FieldVal::Uninit => {
                let name = match loc {
                    Loc::Field(k) => k.name.clone(),
                    _ => String::new(),
                };
                self.err(Code::FieldEnd, span, format!("field `{name}` is read before it is initialised"));
                Ty::Err
            }
        }
    }

    fn set_loc(&mut self, f: &mut FlowFact, loc: &Loc, ty: Ty) {
        match loc {
            Loc::Local(n) => {
                if let Some(l) = f.locals.get_mut(n) {
                    l.ty = ty;
                }
            }
            Loc::This => {
                if let Ty::Ref(r) = ty {
                    f.this_ty = r;
                }
            }
            Loc::Field(k) => {
                f.fields.insert(k.clone(), FieldVal::Init(ty));
            }
        }
    }

    /// Marks a location as moved from: it keeps its contract but loses
    /// ownership and state knowledge. Non-owning references are copied, so
    /// they are left alone.
    fn consume(&mut self, f: &mut FlowFact, loc: &Loc, at: Span) {
        if let FieldVal::Init(Ty::Ref(r)) = self.loc_val(f, loc) {
            if !perm::is_owning(&r) {
                return;
            }
            self.set_loc(f, loc, Ty::Ref(r.consumed()));
            if let Loc::Local(n) = loc {
                if let Some(l) = f.locals.get_mut(n) {
                    l.moved_at = Some(at);
                }
            }
        }
    }

    fn moved_note(&self, f: &FlowFact, loc: &Option<Loc>) -> Option<String> {
        if let Some(Loc::Local(n)) = loc {
            if let Some(sp) = f.locals.get(n).and_then(|l| l.moved_at) {
                return Some(format!("ownership of `{n}` was moved away at {sp}"));
            }
        }
        None
    }

    fn loc_name(loc: &Loc) -> String {
        match loc {
            Loc::Local(n) => n.clone(),
            Loc::Field(k) => k.name.clone(),
            Loc::This => "this".to_string(),
        }
    }

    // ---- expressions ----

    /// Evaluates `e`, returning its type and the location it names (if it
    /// is a plain place). Reading a place never moves it.
    fn value(&mut self, f: &mut FlowFact, e: &Expr) -> (Ty, Option<Loc>) {
        match &e.kind {
            ExprKind::Var(id) => match self.resolve_name(f, id, false) {
                Some(loc) => (self.read_loc(f, &loc, e.span), Some(loc)),
                None => (Ty::Err, None),
            },
            ExprKind::ThisField(id) => match self.resolve_name(f, id, true) {
                Some(loc) => (self.read_loc(f, &loc, e.span), Some(loc)),
                None => (Ty::Err, None),
            },
            ExprKind::Int(_) => (Ty::Prim(PrimType::Int), None),
            ExprKind::Bool(_) => (Ty::Prim(PrimType::Bool), None),
            ExprKind::Str(_) => (Ty::Prim(PrimType::Str), None),
            ExprKind::New { contract, args } => (self.new_expr(f, contract, args, e.span), None),
            ExprKind::Invoke { receiver, txn, args } => (self.check_invocation(f, receiver, txn, args, e.span), None),
            ExprKind::Unary { op, operand } => {
                let want = match op {
                    UnOp::Not => PrimType::Bool,
                    UnOp::Neg => PrimType::Int,
                };
                let ty = self.prim_operand(f, operand);
                match ty {
                    Ty::Prim(p) if p == want => (Ty::Prim(want), None),
                    Ty::Err => (Ty::Err, None),
                    other => {
                        self.err(
                            Code::TypeMismatch,
                            operand.span,
                            format!("operator expects `{}`, found `{}`", want.keyword(), other.describe()),
                        );
                        (Ty::Err, None)
                    }
                }
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let l = self.prim_operand(f, lhs);
                let r = self.prim_operand(f, rhs);
                (self.binary_type(*op, &l, &r, e.span), None)
            }
        }
    }

    fn prim_operand(&mut self, f: &mut FlowFact, e: &Expr) -> Ty {
        let (ty, loc) = self.value(f, e);
        if loc.is_none() {
            self.drop_temp(&ty, e.span);
        }
        ty
    }

    fn binary_type(&mut self, op: BinOp, l: &Ty, r: &Ty, span: Span) -> Ty {
        use PrimType::*;
        if matches!(l, Ty::Err) || matches!(r, Ty::Err) {
            return Ty::Err;
        }
        let result = match (op, l, r) {
            (BinOp::Add, Ty::Prim(Str), Ty::Prim(Str)) => Some(Str),
            (BinOp::Add | BinOp::Sub | BinOp::Mul, Ty::Prim(Int), Ty::Prim(Int)) => Some(Int),
            (BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge, Ty::Prim(Int), Ty::Prim(Int)) => Some(Bool),
            (BinOp::Eq | BinOp::Ne, Ty::Prim(a), Ty::Prim(b)) if a == b => Some(Bool),
            (BinOp::And | BinOp::Or, Ty::Prim(Bool), Ty::Prim(Bool)) => Some(Bool),
            _ => None,
        };
        match result {
            Some(p) => Ty::Prim(p),
            None => {
                self.err(
                    Code::TypeMismatch,
                    span,
                    format!("operator `{}` cannot be applied to `{}` and `{}`", op.symbol(), l.describe(), r.describe()),
                );
                Ty::Err
            }
        }
    }

    /// A value that is not stored anywhere is about to disappear.
    fn drop_temp(&mut self, ty: &Ty, span: Span) {
        if ty.owns_asset(self.t) {
            self.push(
                Diagnostic::new(
                    Code::AssetScope,
                    span,
                    format!("owned asset of type `{}` is discarded and would be lost", ty.describe()),
                )
                .with_note("store it in a variable or field, pass it on, or `disown` it explicitly"),
            );
        }
    }

    /// Evaluates `e` in a position that takes its value: a place is moved
    /// from, a temporary is handed over.
    fn take(&mut self, f: &mut FlowFact, e: &Expr) -> Ty {
        let (ty, loc) = self.value(f, e);
        if let (Some(loc), Ty::Ref(_)) = (&loc, &ty) {
            self.consume(f, loc, e.span);
        }
        ty
    }

    fn new_expr(&mut self, f: &mut FlowFact, contract: &Ident, args: &[Expr], span: Span) -> Ty {
        let Some(info) = self.t.contract(&contract.name) else {
            self.err(Code::UndefContract, contract.span, format!("unknown contract `{}`", contract.name));
            for a in args {
                let (ty, loc) = self.value(f, a);
                if loc.is_none() {
                    self.drop_temp(&ty, a.span);
                }
            }
            return Ty::Err;
        };
        let params = info.constructor.as_ref().map(|s| s.params.clone()).unwrap_or_default();
        self.pass_args(f, &format!("constructor of `{}`", info.name), &params, args, span);
        Ty::Ref(info.constructed_type())
    }

    fn pass_args(&mut self, f: &mut FlowFact, what: &str, params: &[crate::resolve::ParamSig], args: &[Expr], span: Span) {
        if params.len() != args.len() {
            self.err(Code::Arity, span, format!("{what} takes {} argument(s) but {} were given", params.len(), args.len()));
        }
        for (i, a) in args.iter().enumerate() {
            let (ty, loc) = self.value(f, a);
            let Some(p) = params.get(i) else {
                if loc.is_none() {
                    self.drop_temp(&ty, a.span);
                }
                continue;
            };
            let new_ty = match (&ty, &p.pre, &p.post) {
                (Ty::Err, _, _) => continue,
                (Ty::Prim(x), ValueType::Prim(y), _) if x == y => continue,
                (Ty::Ref(actual), ValueType::Ref(pre), ValueType::Ref(post)) if actual.contract == pre.contract => {
                    if !perm::satisfies(actual, pre) {
                        let mut d = Diagnostic::new(
                            Code::ArgPerm,
                            a.span,
                            format!(
                                "argument `{}` of {what} requires `{}`, but the argument is `{}`",
                                p.name, pre, actual
                            ),
                        );
                        if let Some(n) = self.moved_note(f, &loc) {
                            d = d.with_note(n);
                        }
                        self.push(d);
                    }
                    Ty::Ref(perm::rewrite(actual, pre, post))
                }
                (_, expected, _) => {
                    self.err(
                        Code::TypeMismatch,
                        a.span,
                        format!("argument `{}` of {what} expects `{}`, found `{}`", p.name, expected, ty.describe()),
                    );
                    continue;
                }
            };
            match &loc {
                Some(l) => self.set_loc(f, l, new_ty),
                None => self.drop_temp(&new_ty, a.span),
            }
        }
    }

    fn check_invocation(&mut self, f: &mut FlowFact, receiver: &Expr, txn: &Ident, args: &[Expr], span: Span) -> Ty {
        let (rty, rloc) = self.value(f, receiver);
        let bail = |ck: &mut Self, f: &mut FlowFact| {
            for a in args {
                let (ty, loc) = ck.value(f, a);
                if loc.is_none() {
                    ck.drop_temp(&ty, a.span);
                }
            }
            Ty::Err
        };
        let r = match rty {
            Ty::Ref(r) => r,
            Ty::Err => return bail(self, f),
            other => {
                self.err(
                    Code::TypeMismatch,
                    receiver.span,
                    format!("`{}` is called on a value of type `{}`", txn.name, other.describe()),
                );
                return bail(self, f);
            }
        };
        let Some(info) = self.t.contract(&r.contract) else { return bail(self, f) };
        let Some(sig) = info.transactions.get(&txn.name).cloned() else {
            self.err(Code::UndefName, txn.span, format!("contract `{}` has no transaction `{}`", info.name, txn.name));
            return bail(self, f);
        };
        if !perm::satisfies(&r, &sig.receiver_pre) {
            let subject = rloc.as_ref().map(Self::loc_name).unwrap_or_else(|| "receiver".into());
            let mut d = Diagnostic::new(
                Code::ReceiverPre,
                receiver.span,
                format!(
                    "cannot invoke `{}` on `{}`: it requires `{}`, but `{}` is `{}`",
                    txn.name, subject, sig.receiver_pre, subject, r
                ),
            );
            if let Some(n) = self.moved_note(f, &rloc) {
                d = d.with_note(n);
            }
            self.push(d);
        }
        self.pass_args(f, &format!("`{}`", txn.name), &sig.params, args, span);
        let current = match &rloc {
            Some(l) => match self.loc_val(f, l) {
                FieldVal::Init(Ty::Ref(cur)) => cur,
                _ => r.clone(),
            },
            None => r.clone(),
        };
        let after = perm::rewrite(&current, &sig.receiver_pre, &sig.receiver_post);
        match &rloc {
            Some(l) => self.set_loc(f, l, Ty::Ref(after)),
            None => self.drop_temp(&Ty::Ref(after), receiver.span),
        }
        sig.returns.as_ref().map(Ty::from_value).unwrap_or(Ty::Void)
    }

    // ---- statements ----

    fn stmts(&mut self, f: &mut FlowFact, stmts: &[Stmt]) {
        for s in stmts {
            if !f.reachable {
                self.err(Code::Unreachable, s.span, "unreachable statement");
                break;
            }
            self.transfer(f, s);
        }
    }

    /// Checks a nested block; locals declared inside die at its end.
    fn block(&mut self, f: &mut FlowFact, b: &Block) {
        self.depth += 1;
        self.stmts(f, &b.stmts);
        let depth = self.depth;
        let dying: Vec<String> = f.locals.iter().filter(|(_, l)| l.depth >= depth).map(|(n, _)| n.clone()).collect();
        for n in dying {
            let l = f.locals.remove(&n).expect("listed above");
            if f.reachable && l.ty.owns_asset(self.t) {
                self.push(
                    Diagnostic::new(
                        Code::AssetScope,
                        closing_brace(b),
                        format!("`{n}` owns an asset of type `{}` and goes out of scope here", l.ty.describe()),
                    )
                    .with_note("move it into a field or parameter, return it, or `disown` it"),
                );
            }
        }
        self.depth -= 1;
    }

    fn transfer(&mut self, f: &mut FlowFact, s: &Stmt) {
        match &s.kind {
            StmtKind::LocalDecl { ty, name, init } => self.local_decl(f, ty, name, init, s.span),
            StmtKind::Assign { target, value } => self.check_assignment(f, target, value, s.span),
            StmtKind::PreInit { state, field, value } => self.pre_init(f, state, field, value, s.span),
            StmtKind::Transition { target, inits } => self.check_transition(f, target, inits.as_deref(), s.span),
            StmtKind::Expr(e) => {
                let (ty, loc) = self.value(f, e);
                if loc.is_none() {
                    self.drop_temp(&ty, e.span);
                }
            }
            StmtKind::Return(v) => self.ret(f, v.as_ref(), s.span),
            StmtKind::If { cond, then_block, else_block } => {
                let ty = self.prim_operand(f, cond);
                if !matches!(ty, Ty::Prim(PrimType::Bool) | Ty::Err) {
                    self.err(Code::TypeMismatch, cond.span, format!("condition must be `bool`, found `{}`", ty.describe()));
                }
                let mut a = f.clone();
                let mut b = f.clone();
                self.block(&mut a, then_block);
                if let Some(e) = else_block {
                    self.block(&mut b, e);
                }
                self.merge_into(f, a, b, s.span);
            }
            StmtKind::IfInState { subject, state, then_block, else_block } => {
                let (mut a, mut b) = self.apply_state_test(f, subject, state);
                if a.reachable {
                    self.block(&mut a, then_block);
                }
                if let Some(e) = else_block {
                    if b.reachable {
                        self.block(&mut b, e);
                    }
                }
                self.merge_into(f, a, b, s.span);
                fact::strip_unowned_knowledge(f);
            }
            StmtKind::Assert { subject, ann } => self.check_static_assertion(f, subject, ann),
            StmtKind::Disown(id) => self.check_disown(f, id),
            StmtKind::Revert(_) => f.reachable = false,
        }
    }

    fn merge_into(&mut self, f: &mut FlowFact, a: FlowFact, b: FlowFact, span: Span) {
        let (m, d) = merge_branches(a, b, self.c, self.t, span);
        self.diags.extend(d);
        *f = m;
    }

    fn resolve_contract_type(&mut self, ty: &LocalType) -> Option<Ty> {
        match ty {
            LocalType::Prim(p, _) => Some(Ty::Prim(*p)),
            LocalType::Contract(id) => {
                if self.t.contract(&id.name).is_some() {
                    Some(Ty::Ref(RefType::unowned(&id.name)))
                } else {
                    self.err(Code::UndefContract, id.span, format!("unknown contract `{}`", id.name));
                    None
                }
            }
        }
    }

    /// Whether a value of type `v` may be stored where `decl` (contract or
    /// primitive kind) is declared. Permissions are not compared.
    fn same_kind(decl: &Ty, v: &Ty) -> bool {
        match (decl, v) {
            (Ty::Err, _) | (_, Ty::Err) => true,
            (Ty::Prim(a), Ty::Prim(b)) => a == b,
            (Ty::Ref(a), Ty::Ref(b)) => a.contract == b.contract,
            _ => false,
        }
    }

    fn local_decl(&mut self, f: &mut FlowFact, ty: &LocalType, name: &Ident, init: &Expr, span: Span) {
        let decl = self.resolve_contract_type(ty);
        let v = self.take(f, init);
        if f.locals.contains_key(&name.name) {
            self.err(Code::DupName, name.span, format!("`{}` is already declared in this scope", name.name));
            if v.owns_asset(self.t) {
                self.drop_temp(&v, init.span);
            }
            return;
        }
        let stored = match decl {
            None => Ty::Err,
            Some(d) if Self::same_kind(&d, &v) => {
                if matches!(v, Ty::Err) {
                    d
                } else {
                    v
                }
            }
            Some(d) => {
                self.err(
                    Code::TypeMismatch,
                    init.span,
                    format!("`{}` is declared as `{}` but initialised with `{}`", name.name, d.describe_kind(), v.describe()),
                );
                self.drop_temp(&v, init.span);
                Ty::Err
            }
        };
        f.locals.insert(
            name.name.clone(),
            Local { ty: stored, depth: self.depth, is_param: false, span, moved_at: None },
        );
    }

    fn check_assignment(&mut self, f: &mut FlowFact, target: &Place, value: &Expr, span: Span) {
        let v = self.take(f, value);
        let Some(loc) = self.resolve_place(f, target) else {
            self.drop_temp(&v, value.span);
            return;
        };
        if let Loc::Local(n) = &loc {
            if f.locals.get(n).is_some_and(|l| l.is_param) {
                self.err(
                    Code::TypeMismatch,
                    target.ident().span,
                    format!("cannot assign to parameter `{n}`; parameters are fixed by the caller"),
                );
                self.drop_temp(&v, value.span);
                return;
            }
        }
        let decl = match &loc {
            Loc::Field(k) => declared_field(self.c, k).unwrap_or(Ty::Err),
            _ => match self.loc_val(f, &loc) {
                FieldVal::Init(t) => t,
                FieldVal::Uninit => Ty::Err,
            },
        };
        if !Self::same_kind(&decl, &v) {
            self.err(
                Code::TypeMismatch,
                value.span,
                format!("cannot assign `{}` to `{}` of type `{}`", v.describe(), Self::loc_name(&loc), decl.describe_kind()),
            );
            self.drop_temp(&v, value.span);
            return;
        }
        if let FieldVal::Init(old) = self.loc_val(f, &loc) {
            if old.owns_asset(self.t) {
                self.push(
                    Diagnostic::new(
                        Code::AssetOverwrite,
                        span,
                        format!(
                            "assigning to `{}` overwrites an owned asset of type `{}`, which would be lost",
                            Self::loc_name(&loc),
                            old.describe()
                        ),
                    )
                    .with_note(format!("move or `disown` the current value of `{}` first", Self::loc_name(&loc))),
                );
            }
        }
        let stored = if matches!(v, Ty::Err) { decl } else { v };
        self.set_loc(f, &loc, stored);
    }

    fn pre_init(&mut self, f: &mut FlowFact, state: &Ident, field: &Ident, value: &Expr, span: Span) {
        let v = self.take(f, value);
        let key = FieldKey::state(&state.name, &field.name);
        let Some(decl) = declared_field(self.c, &key) else {
            // undefined state or field: reported by the resolver
            self.drop_temp(&v, value.span);
            return;
        };
        if !Self::same_kind(&decl, &v) {
            self.err(
                Code::TypeMismatch,
                value.span,
                format!("cannot assign `{}` to `{}::{}` of type `{}`", v.describe(), state.name, field.name, decl.describe_kind()),
            );
            self.drop_temp(&v, value.span);
            return;
        }
        if let Some((old, _)) = f.pending.get(&key) {
            if old.owns_asset(self.t) {
                self.err(
                    Code::AssetOverwrite,
                    span,
                    format!("`{}::{}` already holds an owned asset of type `{}`", state.name, field.name, old.describe()),
                );
            }
        }
        let stored = if matches!(v, Ty::Err) { decl } else { v };
        f.pending.insert(key, (stored, span));
    }

    fn check_transition(&mut self, f: &mut FlowFact, target: &Ident, inits: Option<&[FieldInit]>, span: Span) {
        if f.this_ty.ownership == Ownership::Unowned {
            self.err(
                Code::TransitionUnowned,
                span,
                format!("cannot transition `this` to `{}`: the receiver is Unowned", target.name),
            );
        }
        // evaluate the initialisers first; they may read departing fields
        let mut given: BTreeMap<String, (Ty, Span)> = BTreeMap::new();
        for i in inits.unwrap_or(&[]) {
            let v = self.take(f, &i.value);
            if given.contains_key(&i.field.name) {
                self.err(Code::DupName, i.field.span, format!("field `{}` is initialised twice", i.field.name));
                self.drop_temp(&v, i.value.span);
                continue;
            }
            given.insert(i.field.name.clone(), (v, i.value.span));
        }
        let Some(st) = self.c.state(&target.name) else {
            for (v, sp) in given.values() {
                self.drop_temp(v, *sp);
            }
            return;
        };
        let departing: Vec<String> = match &f.this_ty.states {
            StateKnowledge::Known(s) => s.iter().cloned().collect(),
            StateKnowledge::Unknown => self.c.states.iter().map(|s| s.name.clone()).collect(),
        };
        for d in &departing {
            let Some(ds) = self.c.state(d) else { continue };
            for fi in &ds.fields {
                let key = FieldKey::state(d, &fi.name);
                if let FieldVal::Init(cur) = self.loc_val(f, &Loc::Field(key)) {
                    if cur.owns_asset(self.t) {
                        self.push(
                            Diagnostic::new(
                                Code::AssetTransition,
                                span,
                                format!(
                                    "transition to `{}` leaves state `{d}`, but its field `{}` still owns an asset of type `{}`",
                                    target.name,
                                    fi.name,
                                    cur.describe()
                                ),
                            )
                            .with_note(format!("move `{}` out or `disown` it before the transition", fi.name)),
                        );
                    }
                }
            }
        }
        let mut new_fields: Vec<(FieldKey, Ty)> = Vec::new();
        for fi in &st.fields {
            let key = FieldKey::state(&st.name, &fi.name);
            let decl = Ty::from_value(&fi.ty);
            let pending = f.pending.remove(&key);
            match (given.remove(&fi.name), pending) {
                (Some((v, vspan)), Some(_)) => {
                    self.err(
                        Code::MixedInit,
                        vspan,
                        format!("field `{}` is initialised both by `{}::{}` and in the transition", fi.name, st.name, fi.name),
                    );
                    new_fields.push((key, self.checked_init(&decl, v, vspan, &fi.name)));
                }
                (Some((v, vspan)), None) => new_fields.push((key, self.checked_init(&decl, v, vspan, &fi.name))),
                (None, Some((v, _))) => new_fields.push((key, v)),
                (None, None) => {
                    self.push(
                        Diagnostic::new(
                            Code::UninitStateField,
                            span,
                            format!("transition to `{}` does not initialise field `{}`", st.name, fi.name),
                        )
                        .with_note(format!("write `->{}({} = ...)` or assign `{}::{} = ...` first", st.name, fi.name, st.name, fi.name)),
                    );
                    new_fields.push((key, decl));
                }
            }
        }
        // inits naming fields the state does not have were reported by the resolver
        for (v, sp) in given.values() {
            self.drop_temp(v, *sp);
        }
        for (key, (_, sp)) in std::mem::take(&mut f.pending) {
            self.err(
                Code::DanglingPreinit,
                sp,
                format!(
                    "`{}::{}` is assigned but the transition goes to `{}`",
                    key.state.as_deref().unwrap_or("?"),
                    key.name,
                    st.name
                ),
            );
        }
        f.fields.retain(|k, _| k.state.is_none());
        for (k, v) in new_fields {
            f.fields.insert(k, FieldVal::Init(v));
        }
        f.this_ty.states = StateKnowledge::single(&st.name);
    }

    fn checked_init(&mut self, decl: &Ty, v: Ty, span: Span, field: &str) -> Ty {
        if Self::same_kind(decl, &v) {
            if matches!(v, Ty::Err) {
                decl.clone()
            } else {
                v
            }
        } else {
            self.err(
                Code::TypeMismatch,
                span,
                format!("field `{field}` has type `{}` but is initialised with `{}`", decl.describe_kind(), v.describe()),
            );
            self.drop_temp(&v, span);
            decl.clone()
        }
    }

    fn subject_loc(&mut self, f: &FlowFact, s: &Subject) -> Option<Loc> {
        match s {
            Subject::This(_) => Some(Loc::This),
            Subject::Name(id) => self.resolve_name(f, id, false),
        }
    }

    /// Splits the fact for `if (subject in state)`.
    fn apply_state_test(&mut self, f: &FlowFact, subject: &Subject, state: &Ident) -> (FlowFact, FlowFact) {
        let same = || (f.clone(), f.clone());
        let Some(loc) = self.subject_loc(f, subject) else { return same() };
        let ty = self.read_loc(f, &loc, subject.span());
        let r = match ty {
            Ty::Ref(r) => r,
            Ty::Err => return same(),
            other => {
                self.err(
                    Code::TypeMismatch,
                    subject.span(),
                    format!("state tests need a contract reference, found `{}`", other.describe()),
                );
                return same();
            }
        };
        let Some(info) = self.t.contract(&r.contract) else { return same() };
        if !info.has_states() {
            self.err(
                Code::NoStates,
                subject.span(),
                format!("contract `{}` has no states to test", info.name),
            );
            return same();
        }
        if info.state(&state.name).is_none() {
            self.err(Code::UndefState, state.span, format!("contract `{}` has no state `{}`", info.name, state.name));
            return same();
        }
        let (then_t, else_t) = perm::narrow(&r, &state.name);
        let mut a = f.clone();
        let mut b = f.clone();
        match then_t {
            Some(t) => self.set_loc(&mut a, &loc, Ty::Ref(t)),
            None => a.reachable = false,
        }
        match else_t {
            Some(t) => self.set_loc(&mut b, &loc, Ty::Ref(t)),
            None => b.reachable = false,
        }
        (a, b)
    }

    fn ann_type(&mut self, contract: &str, ann: &Annotation) -> Option<RefType> {
        let info = self.t.contract(contract)?;
        Some(match ann {
            Annotation::Owned => RefType::owned(contract),
            Annotation::Unowned => RefType::unowned(contract),
            Annotation::Shared => RefType::shared(contract),
            Annotation::States(list) => {
                let mut known = BTreeSet::new();
                for s in list {
                    if info.state(&s.name).is_none() {
                        self.err(Code::UndefState, s.span, format!("contract `{contract}` has no state `{}`", s.name));
                        return None;
                    }
                    known.insert(s.name.clone());
                }
                RefType::new(contract, Ownership::Owned, StateKnowledge::Known(known))
            }
        })
    }

    fn check_static_assertion(&mut self, f: &FlowFact, subject: &Subject, ann: &Annotation) {
        let Some(loc) = self.subject_loc(f, subject) else { return };
        let ty = self.read_loc(f, &loc, subject.span());
        let r = match ty {
            Ty::Ref(r) => r,
            Ty::Err => return,
            other => {
                self.err(
                    Code::TypeMismatch,
                    subject.span(),
                    format!("assertions need a contract reference, found `{}`", other.describe()),
                );
                return;
            }
        };
        let Some(want) = self.ann_type(&r.contract, ann) else { return };
        if !perm::satisfies(&r, &want) {
            self.err(
                Code::AssertFail,
                subject.span(),
                format!("assertion failed: `{}` is `{}`, not `{}`", Self::loc_name(&loc), r, want),
            );
        }
    }

    fn check_disown(&mut self, f: &mut FlowFact, id: &Ident) {
        let Some(loc) = self.resolve_name(f, id, false) else { return };
        let ty = self.read_loc(f, &loc, id.span);
        match ty {
            Ty::Ref(r) => {
                if !perm::is_owning(&r) {
                    let mut d = Diagnostic::new(
                        Code::DisownUnowned,
                        id.span,
                        format!("cannot disown `{}`: it is `{}` and owns nothing", id.name, r),
                    );
                    if let Some(n) = self.moved_note(f, &Some(loc.clone())) {
                        d = d.with_note(n);
                    }
                    self.push(d);
                    return;
                }
                self.set_loc(f, &loc, Ty::Ref(r.consumed()));
                if self.t.is_asset(&r.contract) {
                    self.err(
                        Code::DisownAsset,
                        id.span,
                        format!("`{}` gives up ownership of an asset of type `{}`; its value is discarded", id.name, r.contract),
                    );
                }
            }
            Ty::Err => {}
            other => self.err(
                Code::TypeMismatch,
                id.span,
                format!("only contract references can be disowned, `{}` is `{}`", id.name, other.describe()),
            ),
        }
    }

    fn ret(&mut self, f: &mut FlowFact, v: Option<&Expr>, span: Span) {
        match (&self.sig.returns, v) {
            (None, None) => {}
            (None, Some(e)) if self.is_ctor => {
                self.err(Code::TypeMismatch, e.span, "constructors cannot return a value");
                let ty = self.prim_operand(f, e);
                let _ = ty;
            }
            (None, Some(e)) => {
                let ty = self.prim_operand(f, e);
                if !matches!(ty, Ty::Err) {
                    self.err(Code::TypeMismatch, e.span, format!("`{}` returns no value", self.sig.name));
                }
            }
            (Some(rt), None) => {
                let rt = rt.clone();
                self.err(Code::TypeMismatch, span, format!("`{}` must return a value of type `{rt}`", self.sig.name));
            }
            (Some(rt), Some(e)) => {
                let rt = Ty::from_value(rt);
                let (ty, loc) = self.value(f, e);
                let ok = match (&ty, &rt) {
                    (Ty::Err, _) => true,
                    (Ty::Prim(a), Ty::Prim(b)) => a == b,
                    (Ty::Ref(a), Ty::Ref(b)) => {
                        if a.contract == b.contract && !perm::satisfies(a, b) {
                            let mut d = Diagnostic::new(
                                Code::TypeMismatch,
                                e.span,
                                format!("returned value is `{a}` but `{}` returns `{b}`", self.sig.name),
                            );
                            if let Some(n) = self.moved_note(f, &loc) {
                                d = d.with_note(n);
                            }
                            self.push(d);
                            true
                        } else {
                            a.contract == b.contract
                        }
                    }
                    _ => false,
                };
                if !ok {
                    self.err(
                        Code::TypeMismatch,
                        e.span,
                        format!("returned value is `{}` but `{}` returns `{}`", ty.describe(), self.sig.name, rt.describe()),
                    );
                }
                let owning_return = rt.as_ref().is_some_and(perm::is_owning);
                match &loc {
                    Some(l) if owning_return && matches!(ty, Ty::Ref(_)) => self.consume(f, l, e.span),
                    Some(_) => {}
                    None if !owning_return => self.drop_temp(&ty, e.span),
                    None => {}
                }
            }
        }
        self.exit_checks(f, span);
        f.reachable = false;
    }

    /// Obligations at a committing exit.
    fn exit_checks(&mut self, f: &FlowFact, span: Span) {
        for p in &self.sig.params {
            let (Some(l), ValueType::Ref(post)) = (f.locals.get(&p.name), &p.post) else { continue };
            let Ty::Ref(cur) = &l.ty else { continue };
            if !perm::satisfies(cur, post) {
                let mut d = Diagnostic::new(
                    Code::ParamPost,
                    span,
                    format!("parameter `{}` must be `{}` when `{}` ends, but it is `{}`", p.name, post, self.sig.name, cur),
                );
                if let Some(at) = l.moved_at {
                    d = d.with_note(format!("ownership of `{}` was moved away at {at}", p.name));
                }
                self.push(d);
            } else if l.ty.owns_asset(self.t) && !perm::is_owning(post) {
                self.push(
                    Diagnostic::new(
                        Code::AssetScope,
                        span,
                        format!(
                            "parameter `{}` still owns an asset of type `{}`, but its declared final permission is `{}`",
                            p.name, cur.contract, post.ownership
                        ),
                    )
                    .with_note("the caller gives up ownership; store, pass on or `disown` the asset"),
                );
            }
        }
        if self.is_ctor {
            if self.c.has_states() && !f.this_ty.states.is_known() {
                self.err(
                    Code::NoCtorState,
                    span,
                    format!("constructor of `{}` can finish without transitioning to a state", self.c.name),
                );
            }
        } else {
            let post = &self.sig.receiver_post;
            if !perm::satisfies(&f.this_ty, post) {
                self.err(
                    Code::ReceiverPost,
                    span,
                    format!("`this` must be `{}` when `{}` ends, but it is `{}`", post, self.sig.name, f.this_ty),
                );
            } else if perm::is_owning(&f.this_ty) && self.c.is_asset && !perm::is_owning(post) {
                self.err(
                    Code::AssetScope,
                    span,
                    format!("`this` still owns itself but `{}` declares it `{}` at the end", self.sig.name, post.ownership),
                );
            }
        }
        let mut keys: Vec<FieldKey> = self.c.fields.iter().map(|fi| FieldKey::contract(&fi.name)).collect();
        let states: Vec<String> = match &f.this_ty.states {
            StateKnowledge::Known(s) => s.iter().cloned().collect(),
            StateKnowledge::Unknown if self.is_ctor => Vec::new(),
            StateKnowledge::Unknown => self.c.states.iter().map(|s| s.name.clone()).collect(),
        };
        for s in &states {
            if let Some(st) = self.c.state(s) {
                keys.extend(st.fields.iter().map(|fi| FieldKey::state(s, &fi.name)));
            }
        }
        for key in keys {
            let decl = declared_field(self.c, &key).unwrap_or(Ty::Err);
            match self.loc_val(f, &Loc::Field(key.clone())) {
                FieldVal::Uninit => self.err(
                    Code::FieldEnd,
                    span,
                    format!("field `{}` is never initialised", key.name),
                ),
                FieldVal::Init(cur) => {
                    if let (Ty::Ref(c), Ty::Ref(d)) = (&cur, &decl) {
                        if !perm::satisfies(c, d) {
                            self.err(
                                Code::FieldEnd,
                                span,
                                format!("field `{}` is declared `{}` but is `{}` when `{}` ends", key.name, d, c, self.sig.name),
                            );
                        } else if cur.owns_asset(self.t) && !perm::is_owning(d) {
                            self.err(
                                Code::AssetScope,
                                span,
                                format!(
                                    "field `{}` is declared `{}` but holds an owned asset at the end; the asset would lose its owner",
                                    key.name, d
                                ),
                            );
                        }
                    }
                }
            }
        }
        for (key, (_, sp)) in &f.pending {
            self.err(
                Code::DanglingPreinit,
                *sp,
                format!(
                    "`{}::{}` is assigned but no transition to `{}` follows",
                    key.state.as_deref().unwrap_or("?"),
                    key.name,
                    key.state.as_deref().unwrap_or("?")
                ),
            );
        }
        for (n, l) in &f.locals {
            if !l.is_param && l.ty.owns_asset(self.t) {
                self.push(
                    Diagnostic::new(
                        Code::AssetScope,
                        span,
                        format!("`{n}` owns an asset of type `{}` and goes out of scope here", l.ty.describe()),
                    )
                    .with_note("move it into a field or parameter, return it, or `disown` it"),
                );
            }
        }
    }
}

impl Ty {
    /// Contract or primitive name, without permission.
    fn describe_kind(&self) -> String {
        match self {
            Ty::Ref(r) => r.contract.clone(),
            other => other.describe(),
        }
    }
}

#[cfg(test)]
mod tests;
