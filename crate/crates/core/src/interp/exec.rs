//! Tree-walking evaluator and the monitor checks it performs.

use std::collections::BTreeMap;

use super::{FaultKind, MonitorFault, ObjId, ObjectRecord, Owner, Value, World};
use crate::ast::*;
use crate::perm::{self, Ownership, RefType, StateKnowledge};
use crate::resolve::{ContractInfo, ParamSig, SymbolTable, TxnSig, ValueType};

pub(super) enum Abort {
    Revert(String),
    Fault(MonitorFault),
}

type R<T> = Result<T, Abort>;

fn fault<T>(kind: FaultKind, msg: impl Into<String>) -> R<T> {
    Err(Abort::Fault(MonitorFault::new(kind, msg)))
}

struct Slot {
    value: Value,
    depth: usize,
    is_param: bool,
}

struct Frame<'p> {
    info: &'p ContractInfo,
    sig: &'p TxnSig,
    is_ctor: bool,
    this: ObjId,
    this_perm: Ownership,
    locals: BTreeMap<String, Slot>,
    /// `S::f = e` values awaiting a transition, keyed by (state, field).
    pending: BTreeMap<(String, String), Value>,
    depth: usize,
}

enum Loc {
    Local(String),
    Field(String),
    This,
}

enum Flow {
    Next,
    Return(Value),
}

pub(super) struct Exec<'p, 'w> {
    program: &'p Program,
    table: &'p SymbolTable,
    w: &'w mut World,
    /// Objects with a transaction in progress.
    stack: Vec<ObjId>,
}

/// Ownership the caller keeps after passing `perm` to a `pre >> post` slot.
fn rewrite_perm(contract: &str, perm: Ownership, pre: &RefType, post: &RefType) -> Ownership {
    perm::rewrite(&RefType::new(contract, perm, StateKnowledge::Unknown), pre, post).ownership
}

fn prim_matches(v: &Value, p: PrimType) -> bool {
    matches!((v, p), (Value::Int(_), PrimType::Int) | (Value::Bool(_), PrimType::Bool) | (Value::Str(_), PrimType::Str))
}

impl<'p, 'w> Exec<'p, 'w> {
    pub(super) fn new(program: &'p Program, table: &'p SymbolTable, w: &'w mut World) -> Self {
        Exec { program, table, w, stack: Vec::new() }
    }

    fn obj(&self, id: ObjId) -> R<&ObjectRecord> {
        match self.w.heap.get(&id) {
            Some(o) => Ok(o),
            None => fault(FaultKind::TypeMismatch, format!("dangling reference #{id}")),
        }
    }

    fn name(&self, id: ObjId) -> String {
        self.w.show(&Value::handle(id))
    }

    fn contract_of(&self, id: ObjId) -> R<&'p ContractInfo> {
        let c = self.obj(id)?.contract.clone();
        match self.table.contract(&c) {
            Some(i) => Ok(i),
            None => fault(FaultKind::TypeMismatch, format!("unknown contract `{c}`")),
        }
    }

    fn owns_asset(&self, v: &Value) -> bool {
        matches!(v, Value::Ref { id, perm: Ownership::Owned } if self.w.heap.get(id).is_some_and(|o| o.is_asset))
    }

    fn state_ok(&self, id: ObjId, k: &StateKnowledge) -> bool {
        match k {
            StateKnowledge::Unknown => true,
            StateKnowledge::Known(set) => {
                self.w.heap.get(&id).and_then(|o| o.state.as_ref()).is_some_and(|s| set.contains(s))
            }
        }
    }

    fn state_name(&self, id: ObjId) -> String {
        self.w.heap.get(&id).and_then(|o| o.state.clone()).unwrap_or_else(|| "no state".into())
    }

    /// A value about to be discarded must not be the only owner of an asset.
    fn drop_temp(&self, v: &Value) -> R<()> {
        if self.owns_asset(v) {
            return fault(FaultKind::AssetLost, format!("owned asset {} is discarded", self.w.show(v)));
        }
        Ok(())
    }

    fn check_receiver(&self, id: ObjId, perm: Ownership, sig: &TxnSig) -> R<()> {
        if !perm.satisfies(sig.receiver_pre.ownership) {
            return fault(
                FaultKind::Permission,
                format!("`{}` needs a {} receiver, {} is held as {perm}", sig.name, sig.receiver_pre.ownership, self.name(id)),
            );
        }
        self.check_entry_state(id, sig)
    }

    fn check_entry_state(&self, id: ObjId, sig: &TxnSig) -> R<()> {
        if !self.state_ok(id, &sig.receiver_pre.states) {
            return fault(
                FaultKind::InvalidState,
                format!(
                    "`{}` requires {} in {}, but it is in {}",
                    sig.name,
                    self.name(id),
                    sig.receiver_pre.states,
                    self.state_name(id)
                ),
            );
        }
        Ok(())
    }

    /// Checks one argument against its parameter. Returns the value the
    /// callee receives and, for references, the caller's new permission.
    fn bind_arg(&self, v: Value, p: &ParamSig) -> R<(Value, Option<Ownership>)> {
        match (&v, &p.pre, &p.post) {
            (_, ValueType::Prim(want), _) if prim_matches(&v, *want) => Ok((v, None)),
            (Value::Ref { id, perm }, ValueType::Ref(pre), ValueType::Ref(post)) => {
                let contract = self.obj(*id)?.contract.clone();
                if contract != pre.contract {
                    return fault(FaultKind::TypeMismatch, format!("`{}` expects {}, got {}", p.name, pre.contract, self.name(*id)));
                }
                if !perm.satisfies(pre.ownership) {
                    return fault(
                        FaultKind::Permission,
                        format!("`{}` requires {}, but {} is held as {perm}", p.name, pre.ownership, self.name(*id)),
                    );
                }
                if !self.state_ok(*id, &pre.states) {
                    return fault(
                        FaultKind::InvalidState,
                        format!("`{}` requires {} in {}, but it is in {}", p.name, self.name(*id), pre.states, self.state_name(*id)),
                    );
                }
                let keep = rewrite_perm(&contract, *perm, pre, post);
                Ok((Value::Ref { id: *id, perm: pre.ownership }, Some(keep)))
            }
            _ => fault(FaultKind::TypeMismatch, format!("`{}` expects {}, got {}", p.name, p.pre, self.w.show(&v))),
        }
    }

    fn decl_for(&self, info: &ContractInfo, sig: &TxnSig, is_ctor: bool) -> R<&'p TransactionDecl> {
        let c = self.program.contract(&info.name);
        let found = c.and_then(|c| {
            let list = if is_ctor { &c.constructors } else { &c.transactions };
            list.iter().find(|t| t.span == sig.span)
        });
        match found {
            Some(d) => Ok(d),
            None => fault(FaultKind::TypeMismatch, format!("no body for `{}`", sig.name)),
        }
    }

    // ---- external entry points ----

    fn handle_perm(&self, id: ObjId) -> R<Ownership> {
        match self.w.handles.get(&id) {
            Some(p) if self.w.heap.contains_key(&id) => Ok(*p),
            _ => fault(FaultKind::Permission, format!("the caller holds no reference to #{id}")),
        }
    }

    /// Binds script arguments, resolving references through the handles.
    fn bind_external(&mut self, params: &[ParamSig], args: &[Value], what: &str) -> R<Vec<Value>> {
        if params.len() != args.len() {
            return fault(FaultKind::Arity, format!("{what} takes {} argument(s), got {}", params.len(), args.len()));
        }
        let mut out = Vec::new();
        for (a, p) in args.iter().zip(params) {
            let v = match a {
                Value::Ref { id, .. } => Value::Ref { id: *id, perm: self.handle_perm(*id)? },
                other => other.clone(),
            };
            let (cv, keep) = self.bind_arg(v, p)?;
            if let (Some(keep), Value::Ref { id, .. }) = (keep, a) {
                self.w.handles.insert(*id, keep);
            }
            out.push(cv);
        }
        Ok(out)
    }

    fn receive(&mut self, v: &Value) {
        if let Value::Ref { id, perm } = v {
            let e = self.w.handles.entry(*id).or_insert(*perm);
            if perm.satisfies(*e) {
                *e = *perm;
            }
        }
    }

    pub(super) fn external_new(&mut self, contract: &str, args: &[Value]) -> R<Value> {
        let Some(info) = self.table.contract(contract) else {
            return fault(FaultKind::TypeMismatch, format!("unknown contract `{contract}`"));
        };
        let params = info.constructor.as_ref().map(|s| s.params.as_slice()).unwrap_or(&[]);
        let bound = self.bind_external(params, args, &format!("constructor of `{contract}`"))?;
        let v = self.construct(info, bound)?;
        self.receive(&v);
        Ok(v)
    }

    pub(super) fn external_invoke(&mut self, obj: ObjId, txn: &str, args: &[Value]) -> R<Value> {
        let perm = self.handle_perm(obj)?;
        let info = self.contract_of(obj)?;
        let Some(sig) = info.transactions.get(txn) else {
            return fault(FaultKind::TypeMismatch, format!("`{}` has no transaction `{txn}`", info.name));
        };
        self.check_receiver(obj, perm, sig)?;
        let bound = self.bind_external(&sig.params, args, &format!("`{txn}`"))?;
        self.check_entry_state(obj, sig)?;
        let decl = self.decl_for(info, sig, false)?;
        let ret = self.call(info, sig, decl, obj, sig.receiver_pre.ownership, bound)?;
        let cur = self.handle_perm(obj)?;
        let keep = rewrite_perm(&info.name, cur, &sig.receiver_pre, &sig.receiver_post);
        self.w.handles.insert(obj, keep);
        self.receive(&ret);
        Ok(ret)
    }

    pub(super) fn external_disown(&mut self, obj: ObjId) -> R<Value> {
        let perm = self.handle_perm(obj)?;
        if perm != Ownership::Owned {
            return fault(FaultKind::DisownUnowned, format!("the caller does not own {}", self.name(obj)));
        }
        self.w.handles.insert(obj, Ownership::Unowned);
        self.mark_disowned(obj);
        Ok(Value::Unit)
    }

    fn mark_disowned(&mut self, id: ObjId) {
        if let Some(o) = self.w.heap.get_mut(&id) {
            if o.is_asset {
                o.owned_by = Some(Owner::Discarded);
            }
        }
    }

    // ---- objects and calls ----

    fn construct(&mut self, info: &'p ContractInfo, args: Vec<Value>) -> R<Value> {
        let id = self.w.next_id;
        self.w.next_id += 1;
        self.w.heap.insert(
            id,
            ObjectRecord {
                contract: info.name.clone(),
                state: None,
                fields: BTreeMap::new(),
                owned_by: None,
                is_asset: info.is_asset,
            },
        );
        if info.is_asset {
            self.w.ledger.created += 1;
        }
        match &info.constructor {
            Some(sig) => {
                let decl = self.decl_for(info, sig, true)?;
                self.call(info, sig, decl, id, Ownership::Owned, args)?;
            }
            None => {
                for f in &info.fields {
                    let v = match &f.ty {
                        ValueType::Prim(PrimType::Int) => Value::Int(0),
                        ValueType::Prim(PrimType::Bool) => Value::Bool(false),
                        ValueType::Prim(PrimType::Str) => Value::Str(String::new()),
                        ValueType::Ref(_) => {
                            return fault(
                                FaultKind::FieldInvariant,
                                format!("`{}` has no constructor to initialise `{}`", info.name, f.name),
                            )
                        }
                    };
                    self.w.heap.get_mut(&id).expect("just inserted").fields.insert(f.name.clone(), v);
                }
                if info.has_states() {
                    return fault(FaultKind::InvalidState, format!("`{}` has no constructor to pick a state", info.name));
                }
            }
        }
        Ok(Value::Ref { id, perm: Ownership::Owned })
    }

    fn call(
        &mut self,
        info: &'p ContractInfo,
        sig: &'p TxnSig,
        decl: &'p TransactionDecl,
        this: ObjId,
        this_perm: Ownership,
        args: Vec<Value>,
    ) -> R<Value> {
        if self.stack.contains(&this) {
            return fault(
                FaultKind::Reentrancy,
                format!("{} is already executing a transaction; `{}` would re-enter it", self.name(this), sig.name),
            );
        }
        let mut fr = Frame {
            info,
            sig,
            is_ctor: decl.is_constructor,
            this,
            this_perm,
            locals: BTreeMap::new(),
            pending: BTreeMap::new(),
            depth: 1,
        };
        for (p, v) in sig.params.iter().zip(args) {
            fr.locals.insert(p.name.clone(), Slot { value: v, depth: 0, is_param: true });
        }
        self.stack.push(this);
        let flow = self.stmts(&mut fr, &decl.body.stmts);
        self.stack.pop();
        match flow? {
            Flow::Return(v) => Ok(v),
            Flow::Next => {
                if sig.returns.is_some() && !fr.is_ctor {
                    return fault(FaultKind::TypeMismatch, format!("`{}` finished without returning a value", sig.name));
                }
                self.exit_checks(&fr)?;
                Ok(Value::Unit)
            }
        }
    }

    // ---- places ----

    fn resolve(&self, fr: &Frame, id: &Ident, this_only: bool) -> R<Loc> {
        if !this_only && fr.locals.contains_key(&id.name) {
            return Ok(Loc::Local(id.name.clone()));
        }
        if fr.info.field(&id.name).is_some() {
            return Ok(Loc::Field(id.name.clone()));
        }
        if let Some(s) = &self.obj(fr.this)?.state {
            if fr.info.state_field(s, &id.name).is_some() {
                return Ok(Loc::Field(id.name.clone()));
            }
        }
        fault(
            FaultKind::TypeMismatch,
            format!("`{}` is not accessible while {} is in {}", id.name, self.name(fr.this), self.state_name(fr.this)),
        )
    }

    fn read(&self, fr: &Frame, loc: &Loc) -> R<Value> {
        match loc {
            Loc::Local(n) => Ok(fr.locals[n].value.clone()),
            Loc::This => Ok(Value::Ref { id: fr.this, perm: fr.this_perm }),
            Loc::Field(n) => match self.obj(fr.this)?.fields.get(n) {
                Some(v) => Ok(v.clone()),
                None => fault(FaultKind::Uninitialized, format!("field `{n}` of {} is read before it is set", self.name(fr.this))),
            },
        }
    }

    fn write(&mut self, fr: &mut Frame, loc: &Loc, v: Value) {
        match loc {
            Loc::Local(n) => {
                if let Some(s) = fr.locals.get_mut(n) {
                    s.value = v;
                }
            }
            Loc::Field(n) => {
                if let Some(o) = self.w.heap.get_mut(&fr.this) {
                    o.fields.insert(n.clone(), v);
                }
            }
            Loc::This => {}
        }
    }

    fn set_perm(&mut self, fr: &mut Frame, loc: &Loc, perm: Ownership) -> R<()> {
        if let Value::Ref { id, .. } = self.read(fr, loc)? {
            self.write(fr, loc, Value::Ref { id, perm });
        }
        Ok(())
    }

    // ---- expressions ----

    fn value(&mut self, fr: &mut Frame, e: &Expr) -> R<(Value, Option<Loc>)> {
        Ok(match &e.kind {
            ExprKind::Var(id) | ExprKind::ThisField(id) => {
                let loc = self.resolve(fr, id, matches!(e.kind, ExprKind::ThisField(_)))?;
                (self.read(fr, &loc)?, Some(loc))
            }
            ExprKind::Int(i) => (Value::Int(*i), None),
            ExprKind::Bool(b) => (Value::Bool(*b), None),
            ExprKind::Str(s) => (Value::Str(s.clone()), None),
            ExprKind::New { contract, args } => (self.new_expr(fr, contract, args)?, None),
            ExprKind::Invoke { receiver, txn, args } => (self.invoke_expr(fr, receiver, txn, args)?, None),
            ExprKind::Unary { op, operand } => {
                let v = self.prim_operand(fr, operand)?;
                let r = match (op, v) {
                    (UnOp::Not, Value::Bool(b)) => Value::Bool(!b),
                    (UnOp::Neg, Value::Int(i)) => Value::Int(i.wrapping_neg()),
                    (_, v) => return fault(FaultKind::TypeMismatch, format!("bad operand {}", self.w.show(&v))),
                };
                (r, None)
            }
            ExprKind::Binary { op, lhs, rhs } => {
                // both operands are always evaluated, as the checker assumes
                let l = self.prim_operand(fr, lhs)?;
                let r = self.prim_operand(fr, rhs)?;
                (self.binary(*op, l, r)?, None)
            }
        })
    }

    fn binary(&self, op: BinOp, l: Value, r: Value) -> R<Value> {
        use Value::*;
        Ok(match (op, l, r) {
            (BinOp::Add, Int(a), Int(b)) => Int(a.wrapping_add(b)),
            (BinOp::Add, Str(a), Str(b)) => Str(a + &b),
            (BinOp::Sub, Int(a), Int(b)) => Int(a.wrapping_sub(b)),
            (BinOp::Mul, Int(a), Int(b)) => Int(a.wrapping_mul(b)),
            (BinOp::Lt, Int(a), Int(b)) => Bool(a < b),
            (BinOp::Gt, Int(a), Int(b)) => Bool(a > b),
            (BinOp::Le, Int(a), Int(b)) => Bool(a <= b),
            (BinOp::Ge, Int(a), Int(b)) => Bool(a >= b),
            (BinOp::And, Bool(a), Bool(b)) => Bool(a && b),
            (BinOp::Or, Bool(a), Bool(b)) => Bool(a || b),
            (BinOp::Eq, a, b) if std::mem::discriminant(&a) == std::mem::discriminant(&b) => Bool(a == b),
            (BinOp::Ne, a, b) if std::mem::discriminant(&a) == std::mem::discriminant(&b) => Bool(a != b),
            (op, a, b) => {
                return fault(
                    FaultKind::TypeMismatch,
                    format!("`{}` applied to {} and {}", op.symbol(), self.w.show(&a), self.w.show(&b)),
                )
            }
        })
    }

    fn prim_operand(&mut self, fr: &mut Frame, e: &Expr) -> R<Value> {
        let (v, loc) = self.value(fr, e)?;
        if loc.is_none() {
            self.drop_temp(&v)?;
        }
        Ok(v)
    }

    /// Evaluates `e` where its value is taken: a named owning reference is
    /// moved, other references are copied.
    fn take(&mut self, fr: &mut Frame, e: &Expr) -> R<Value> {
        let (v, loc) = self.value(fr, e)?;
        if let (Some(loc), Value::Ref { perm: Ownership::Owned, .. }) = (&loc, &v) {
            self.set_perm(fr, loc, Ownership::Unowned)?;
        }
        Ok(v)
    }

    fn bind_args(&mut self, fr: &mut Frame, params: &[ParamSig], args: &[Expr], what: &str) -> R<Vec<Value>> {
        if params.len() != args.len() {
            return fault(FaultKind::Arity, format!("{what} takes {} argument(s), got {}", params.len(), args.len()));
        }
        let mut out = Vec::new();
        for (a, p) in args.iter().zip(params) {
            let (v, loc) = self.value(fr, a)?;
            let (cv, keep) = self.bind_arg(v.clone(), p)?;
            if let (Some(keep), Value::Ref { id, .. }) = (keep, &v) {
                match &loc {
                    Some(l) => self.set_perm(fr, l, keep)?,
                    None => self.drop_temp(&Value::Ref { id: *id, perm: keep })?,
                }
            }
            out.push(cv);
        }
        Ok(out)
    }

    fn new_expr(&mut self, fr: &mut Frame, contract: &Ident, args: &[Expr]) -> R<Value> {
        let Some(info) = self.table.contract(&contract.name) else {
            return fault(FaultKind::TypeMismatch, format!("unknown contract `{}`", contract.name));
        };
        let params = info.constructor.as_ref().map(|s| s.params.as_slice()).unwrap_or(&[]);
        let bound = self.bind_args(fr, params, args, &format!("constructor of `{}`", info.name))?;
        self.construct(info, bound)
    }

    fn invoke_expr(&mut self, fr: &mut Frame, receiver: &Expr, txn: &Ident, args: &[Expr]) -> R<Value> {
        let (rv, rloc) = self.value(fr, receiver)?;
        let Some((id, perm)) = rv.as_ref() else {
            return fault(FaultKind::TypeMismatch, format!("`{}` called on {}", txn.name, self.w.show(&rv)));
        };
        let info = self.contract_of(id)?;
        let Some(sig) = info.transactions.get(&txn.name) else {
            return fault(FaultKind::TypeMismatch, format!("`{}` has no transaction `{}`", info.name, txn.name));
        };
        self.check_receiver(id, perm, sig)?;
        let bound = self.bind_args(fr, &sig.params, args, &format!("`{}`", txn.name))?;
        self.check_entry_state(id, sig)?;
        let decl = self.decl_for(info, sig, false)?;
        let ret = self.call(info, sig, decl, id, sig.receiver_pre.ownership, bound)?;
        let cur = match &rloc {
            Some(l) => self.read(fr, l)?.as_ref().map(|(_, p)| p).unwrap_or(perm),
            None => perm,
        };
        let keep = rewrite_perm(&info.name, cur, &sig.receiver_pre, &sig.receiver_post);
        match &rloc {
            Some(l) => self.set_perm(fr, l, keep)?,
            None => self.drop_temp(&Value::Ref { id, perm: keep })?,
        }
        Ok(ret)
    }

    // ---- statements ----

    fn stmts(&mut self, fr: &mut Frame, stmts: &[Stmt]) -> R<Flow> {
        for s in stmts {
            if let Flow::Return(v) = self.stmt(fr, s)? {
                return Ok(Flow::Return(v));
            }
        }
        Ok(Flow::Next)
    }

    fn block(&mut self, fr: &mut Frame, b: &Block) -> R<Flow> {
        fr.depth += 1;
        let flow = self.stmts(fr, &b.stmts)?;
        let depth = fr.depth;
        let dying: Vec<String> = fr.locals.iter().filter(|(_, s)| s.depth >= depth).map(|(n, _)| n.clone()).collect();
        for n in dying {
            let s = fr.locals.remove(&n).expect("listed above");
            if matches!(flow, Flow::Next) && self.owns_asset(&s.value) {
                return fault(FaultKind::AssetLost, format!("`{n}` goes out of scope owning {}", self.w.show(&s.value)));
            }
        }
        fr.depth -= 1;
        Ok(flow)
    }

    fn stmt(&mut self, fr: &mut Frame, s: &Stmt) -> R<Flow> {
        match &s.kind {
            StmtKind::LocalDecl { ty, name, init } => {
                let v = self.take(fr, init)?;
                if fr.locals.contains_key(&name.name) {
                    return fault(FaultKind::TypeMismatch, format!("`{}` is declared twice", name.name));
                }
                let ok = match (ty, &v) {
                    (LocalType::Prim(p, _), v) => prim_matches(v, *p),
                    (LocalType::Contract(c), Value::Ref { id, .. }) => self.obj(*id)?.contract == c.name,
                    _ => false,
                };
                if !ok {
                    return fault(FaultKind::TypeMismatch, format!("`{}` initialised with {}", name.name, self.w.show(&v)));
                }
                fr.locals.insert(name.name.clone(), Slot { value: v, depth: fr.depth, is_param: false });
            }
            StmtKind::Assign { target, value } => {
                let v = self.take(fr, value)?;
                let loc = match target {
                    Place::Name(id) => self.resolve(fr, id, false)?,
                    Place::ThisField(id) => self.resolve(fr, id, true)?,
                };
                if let Loc::Local(n) = &loc {
                    if fr.locals[n].is_param {
                        return fault(FaultKind::TypeMismatch, format!("parameter `{n}` is assigned"));
                    }
                }
                let old = match &loc {
                    Loc::Field(n) => self.obj(fr.this)?.fields.get(n).cloned(),
                    other => Some(self.read(fr, other)?),
                };
                if let Some(old) = old {
                    if self.owns_asset(&old) {
                        return fault(
                            FaultKind::AssetLost,
                            format!("assigning `{}` overwrites owned asset {}", target.ident().name, self.w.show(&old)),
                        );
                    }
                }
                self.write(fr, &loc, v);
            }
            StmtKind::PreInit { state, field, value } => {
                let v = self.take(fr, value)?;
                if fr.info.state_field(&state.name, &field.name).is_none() {
                    return fault(FaultKind::TypeMismatch, format!("no field `{}::{}`", state.name, field.name));
                }
                let key = (state.name.clone(), field.name.clone());
                if let Some(old) = fr.pending.get(&key) {
                    if self.owns_asset(old) {
                        return fault(
                            FaultKind::AssetLost,
                            format!("`{}::{}` overwrites owned asset {}", state.name, field.name, self.w.show(old)),
                        );
                    }
                }
                fr.pending.insert(key, v);
            }
            StmtKind::Transition { target, inits } => self.transition(fr, target, inits.as_deref())?,
            StmtKind::Expr(e) => {
                let (v, loc) = self.value(fr, e)?;
                if loc.is_none() {
                    self.drop_temp(&v)?;
                }
            }
            StmtKind::Return(e) => return self.ret(fr, e.as_ref()),
            StmtKind::If { cond, then_block, else_block } => {
                let c = self.prim_operand(fr, cond)?;
                let Value::Bool(c) = c else {
                    return fault(FaultKind::TypeMismatch, format!("condition is {}", self.w.show(&c)));
                };
                if c {
                    return self.block(fr, then_block);
                } else if let Some(b) = else_block {
                    return self.block(fr, b);
                }
            }
            StmtKind::IfInState { subject, state, then_block, else_block } => {
                let v = match subject {
                    Subject::This(_) => self.read(fr, &Loc::This)?,
                    Subject::Name(id) => {
                        let loc = self.resolve(fr, id, false)?;
                        self.read(fr, &loc)?
                    }
                };
                let Some((id, _)) = v.as_ref() else {
                    return fault(FaultKind::TypeMismatch, format!("state test on {}", self.w.show(&v)));
                };
                let info = self.contract_of(id)?;
                if info.state(&state.name).is_none() {
                    return fault(FaultKind::TypeMismatch, format!("`{}` has no state `{}`", info.name, state.name));
                }
                if self.obj(id)?.state.as_deref() == Some(state.name.as_str()) {
                    return self.block(fr, then_block);
                } else if let Some(b) = else_block {
                    return self.block(fr, b);
                }
            }
            // static assertions have no run-time effect
            StmtKind::Assert { .. } => {}
            StmtKind::Disown(name) => {
                let loc = self.resolve(fr, name, false)?;
                match self.read(fr, &loc)? {
                    Value::Ref { id, perm: Ownership::Owned } => {
                        self.set_perm(fr, &loc, Ownership::Unowned)?;
                        self.mark_disowned(id);
                    }
                    Value::Ref { id, .. } => {
                        return fault(FaultKind::DisownUnowned, format!("`{}` does not own {}", name.name, self.name(id)))
                    }
                    other => return fault(FaultKind::TypeMismatch, format!("cannot disown {}", self.w.show(&other))),
                }
            }
            StmtKind::Revert(m) => return Err(Abort::Revert(m.clone())),
        }
        Ok(Flow::Next)
    }

    fn transition(&mut self, fr: &mut Frame, target: &Ident, inits: Option<&[FieldInit]>) -> R<()> {
        if fr.this_perm == Ownership::Unowned {
            return fault(FaultKind::TransitionUnowned, format!("transition to `{}` through an Unowned receiver", target.name));
        }
        let mut given: BTreeMap<String, Value> = BTreeMap::new();
        for i in inits.unwrap_or(&[]) {
            let v = self.take(fr, &i.value)?;
            if given.insert(i.field.name.clone(), v).is_some() {
                return fault(FaultKind::TypeMismatch, format!("`{}` initialised twice", i.field.name));
            }
        }
        let Some(st) = fr.info.state(&target.name) else {
            return fault(FaultKind::TypeMismatch, format!("`{}` has no state `{}`", fr.info.name, target.name));
        };
        let old_state = self.obj(fr.this)?.state.clone();
        let departing: Vec<String> = old_state
            .as_deref()
            .and_then(|s| fr.info.state(s))
            .map(|s| s.fields.iter().map(|f| f.name.clone()).collect())
            .unwrap_or_default();
        for n in &departing {
            if let Some(v) = self.obj(fr.this)?.fields.get(n) {
                if self.owns_asset(v) {
                    return fault(
                        FaultKind::AssetLost,
                        format!("transition to `{}` abandons owned asset {} in `{n}`", target.name, self.w.show(v)),
                    );
                }
            }
        }
        let mut fresh = Vec::new();
        for f in &st.fields {
            let pending = fr.pending.remove(&(st.name.clone(), f.name.clone()));
            match (given.remove(&f.name), pending) {
                (Some(_), Some(_)) => {
                    return fault(FaultKind::InitConflict, format!("`{}` initialised twice on the way to `{}`", f.name, st.name))
                }
                (Some(v), None) | (None, Some(v)) => fresh.push((f.name.clone(), v)),
                (None, None) => {
                    return fault(FaultKind::Uninitialized, format!("transition to `{}` leaves `{}` unset", st.name, f.name))
                }
            }
        }
        if let Some(n) = given.keys().next() {
            return fault(FaultKind::TypeMismatch, format!("`{}` has no field `{n}`", st.name));
        }
        if let Some((s, f)) = fr.pending.keys().next() {
            return fault(FaultKind::InitConflict, format!("`{s}::{f}` is assigned but the transition goes to `{}`", st.name));
        }
        let o = self.w.heap.get_mut(&fr.this).expect("receiver exists");
        for n in departing {
            o.fields.remove(&n);
        }
        o.fields.extend(fresh);
        o.state = Some(st.name.clone());
        Ok(())
    }

    fn ret(&mut self, fr: &mut Frame, e: Option<&Expr>) -> R<Flow> {
        let out = match (&fr.sig.returns, e) {
            (None, None) => Value::Unit,
            (None, Some(e)) => {
                self.prim_operand(fr, e)?;
                Value::Unit
            }
            (Some(_), None) => return fault(FaultKind::TypeMismatch, format!("`{}` returns no value", fr.sig.name)),
            (Some(ValueType::Prim(p)), Some(e)) => {
                let v = self.prim_operand(fr, e)?;
                if !prim_matches(&v, *p) {
                    return fault(FaultKind::TypeMismatch, format!("`{}` returns {}", fr.sig.name, self.w.show(&v)));
                }
                v
            }
            (Some(ValueType::Ref(rt)), Some(e)) => {
                let (v, loc) = self.value(fr, e)?;
                let Some((id, perm)) = v.as_ref() else {
                    return fault(FaultKind::TypeMismatch, format!("`{}` returns {}", fr.sig.name, self.w.show(&v)));
                };
                if self.obj(id)?.contract != rt.contract || !perm.satisfies(rt.ownership) || !self.state_ok(id, &rt.states) {
                    return fault(FaultKind::TypeMismatch, format!("`{}` returns {} held as {perm}, not {rt}", fr.sig.name, self.name(id)));
                }
                let owning = perm::is_owning(rt);
                match &loc {
                    Some(l) if owning => self.set_perm(fr, l, Ownership::Unowned)?,
                    None if !owning => self.drop_temp(&v)?,
                    _ => {}
                }
                Value::Ref { id, perm: rt.ownership }
            }
        };
        self.exit_checks(fr)?;
        Ok(Flow::Return(out))
    }

    /// The obligations of a committing exit, checked on the actual heap.
    fn exit_checks(&self, fr: &Frame) -> R<()> {
        for p in &fr.sig.params {
            let ValueType::Ref(post) = &p.post else { continue };
            let Some(Value::Ref { id, perm }) = fr.locals.get(&p.name).map(|s| &s.value) else { continue };
            if !perm.satisfies(post.ownership) || !self.state_ok(*id, &post.states) {
                return fault(
                    FaultKind::ParamPost,
                    format!("`{}` must end as {post}, but {} is held as {perm} in {}", p.name, self.name(*id), self.state_name(*id)),
                );
            }
            if *perm == Ownership::Owned && self.obj(*id)?.is_asset && post.ownership != Ownership::Owned {
                return fault(FaultKind::AssetLost, format!("`{}` still owns {} at the end of `{}`", p.name, self.name(*id), fr.sig.name));
            }
        }
        let this = self.obj(fr.this)?;
        if fr.is_ctor {
            if fr.info.has_states() && this.state.is_none() {
                return fault(FaultKind::InvalidState, format!("constructor of `{}` finished without a state", fr.info.name));
            }
        } else {
            let post = &fr.sig.receiver_post;
            if !fr.this_perm.satisfies(post.ownership) || !self.state_ok(fr.this, &post.states) {
                return fault(
                    FaultKind::ReceiverPost,
                    format!("`{}` must leave {} as {post}, but it is in {}", fr.sig.name, self.name(fr.this), self.state_name(fr.this)),
                );
            }
            if fr.this_perm == Ownership::Owned && fr.info.is_asset && post.ownership != Ownership::Owned {
                return fault(FaultKind::AssetLost, format!("`{}` drops ownership of {}", fr.sig.name, self.name(fr.this)));
            }
        }
        let mut decls: Vec<_> = fr.info.fields.iter().collect();
        if let Some(s) = this.state.as_deref().and_then(|s| fr.info.state(s)) {
            decls.extend(s.fields.iter());
        }
        for f in decls {
            let Some(v) = this.fields.get(&f.name) else {
                return fault(FaultKind::FieldInvariant, format!("field `{}` of {} is never set", f.name, self.name(fr.this)));
            };
            let ValueType::Ref(decl) = &f.ty else { continue };
            let Value::Ref { id, perm } = v else { continue };
            if !perm.satisfies(decl.ownership) || !self.state_ok(*id, &decl.states) {
                return fault(
                    FaultKind::FieldInvariant,
                    format!("field `{}` is declared {decl} but holds {} as {perm} in {}", f.name, self.name(*id), self.state_name(*id)),
                );
            }
            if self.owns_asset(v) && decl.ownership != Ownership::Owned {
                return fault(FaultKind::AssetLost, format!("field `{}` is not owning but holds owned {}", f.name, self.name(*id)));
            }
        }
        if let Some((s, f)) = fr.pending.keys().next() {
            return fault(FaultKind::InitConflict, format!("`{s}::{f}` is assigned but no transition follows"));
        }
        for (n, s) in &fr.locals {
            if !s.is_param && self.owns_asset(&s.value) {
                return fault(FaultKind::AssetLost, format!("`{n}` goes out of scope owning {}", self.w.show(&s.value)));
            }
        }
        Ok(())
    }
}
