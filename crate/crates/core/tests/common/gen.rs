//! Random program generator for differential testing.
//!
//! Programs are built from a small model so the script driver knows every
//! signature without consulting the checker. Contract `K{i}` only mentions
//! contracts `K{j}` with `j > i`, so the call graph is acyclic and no object
//! can be re-entered. There are no `Shared` fields and no `>> Shared` posts.
//! Nothing here tries to be well typed; the checker filters the output.

use std::fmt::Write as _;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ann {
    Owned,
    Unowned,
    Shared,
    States(Vec<String>),
}

impl Ann {
    fn render(&self) -> String {
        match self {
            Ann::Owned => "Owned".into(),
            Ann::Unowned => "Unowned".into(),
            Ann::Shared => "Shared".into(),
            Ann::States(s) => s.join(" | "),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ty {
    Int,
    Ref(usize, Ann),
}

#[derive(Debug, Clone)]
pub struct Field {
    pub name: String,
    pub ty: Ty,
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub ty: Ty,
    pub post: Option<Ann>,
}

#[derive(Debug, Clone)]
pub struct Txn {
    pub name: String,
    /// `None` is the default `Shared` receiver.
    pub recv: Option<(Ann, Option<Ann>)>,
    pub params: Vec<Param>,
    pub ret: Option<Ty>,
}

impl Txn {
    /// Receiver precondition as an annotation.
    pub fn recv_pre(&self) -> Ann {
        self.recv.as_ref().map_or(Ann::Shared, |(a, _)| a.clone())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Contract {
    pub name: String,
    pub is_asset: bool,
    pub states: Vec<String>,
    pub fields: Vec<Field>,
    pub state_fields: Vec<(String, Vec<Field>)>,
    pub ctor_params: Vec<Param>,
    /// States a fresh object can be in; empty for stateless contracts.
    pub ctor_targets: Vec<String>,
    pub txns: Vec<Txn>,
}

impl Contract {
    pub fn fields_of(&self, state: &str) -> &[Field] {
        self.state_fields.iter().find(|(s, _)| s == state).map_or(&[], |(_, f)| f.as_slice())
    }
}

#[derive(Debug, Clone)]
pub struct GenProgram {
    pub contracts: Vec<Contract>,
    pub source: String,
}

impl GenProgram {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.contracts.iter().position(|c| c.name == name)
    }
}

const STATE_NAMES: [&str; 3] = ["A", "B", "C"];

fn pick_states(rng: &mut StdRng, states: &[String], must: &[String]) -> Vec<String> {
    let mut out: Vec<String> =
        states.iter().filter(|s| must.contains(s) || rng.gen_bool(0.4)).cloned().collect();
    if out.is_empty() {
        out.push(states.choose(rng).unwrap().clone());
    }
    out
}

/// Generates one program with between two and four contracts.
pub fn program(rng: &mut StdRng) -> GenProgram {
    let n = rng.gen_range(2..=4);
    let mut contracts: Vec<Contract> = (0..n).map(|i| Contract { name: format!("K{i}"), ..Default::default() }).collect();
    // signatures first, from the leaves up, so bodies can call anything below
    for i in (0..n).rev() {
        let mut c = Contract { name: format!("K{i}"), is_asset: rng.gen_bool(0.5), ..Default::default() };
        if rng.gen_bool(0.6) {
            let k = rng.gen_range(2..=3);
            c.states = STATE_NAMES[..k].iter().map(|s| s.to_string()).collect();
        }
        for f in 0..rng.gen_range(0..=2) {
            c.fields.push(Field { name: format!("f{f}"), ty: field_ty(rng, &contracts, i) });
        }
        for (k, s) in c.states.clone().iter().enumerate() {
            let fs = if rng.gen_bool(0.5) {
                vec![Field { name: format!("s{k}"), ty: field_ty(rng, &contracts, i) }]
            } else {
                vec![]
            };
            c.state_fields.push((s.clone(), fs));
        }
        let owns_asset = c
            .fields
            .iter()
            .chain(c.state_fields.iter().flat_map(|(_, f)| f))
            .any(|f| matches!(&f.ty, Ty::Ref(j, a) if *a != Ann::Unowned && contracts[*j].is_asset));
        c.is_asset |= owns_asset;
        if rng.gen_bool(0.5) {
            c.ctor_params.push(Param { name: "n".into(), ty: Ty::Int, post: None });
        }
        for f in &c.fields {
            if let Ty::Ref(j, Ann::Unowned) = f.ty {
                c.ctor_params.push(Param { name: format!("p_{}", f.name), ty: Ty::Ref(j, Ann::Unowned), post: None });
            }
        }
        if !c.states.is_empty() {
            let two = c.ctor_params.iter().any(|p| p.name == "n") && rng.gen_bool(0.4);
            let mut t: Vec<String> = c.states.choose_multiple(rng, if two { 2 } else { 1 }).cloned().collect();
            t.sort();
            c.ctor_targets = t;
        }
        for t in 0..rng.gen_range(1..=3) {
            c.txns.push(txn_sig(rng, &contracts, &c, i, t));
        }
        contracts[i] = c;
    }
    let mut src = String::new();
    for i in 0..n {
        render_contract(rng, &contracts, i, &mut src);
    }
    GenProgram { contracts, source: src }
}

fn field_ty(rng: &mut StdRng, cs: &[Contract], me: usize) -> Ty {
    let n = cs.len();
    if me + 1 >= n || rng.gen_bool(0.35) {
        return Ty::Int;
    }
    let j = rng.gen_range(me + 1..n);
    let target = &cs[j];
    match rng.gen_range(0..3) {
        0 => Ty::Ref(j, Ann::Unowned),
        1 if !target.states.is_empty() => Ty::Ref(j, Ann::States(pick_states(rng, &target.states, &target.ctor_targets))),
        _ => Ty::Ref(j, Ann::Owned),
    }
}

fn param_ty(rng: &mut StdRng, cs: &[Contract], me: usize, name: String) -> Param {
    let n = cs.len();
    if me + 1 >= n || rng.gen_bool(0.3) {
        return Param { name, ty: Ty::Int, post: None };
    }
    let j = rng.gen_range(me + 1..n);
    let states = &cs[j].states;
    let (pre, post) = match rng.gen_range(0..5) {
        0 => (Ann::Owned, Some(Ann::Unowned)),
        1 => (Ann::Owned, None),
        2 => (Ann::Unowned, None),
        3 => (Ann::Shared, None),
        _ if !states.is_empty() => {
            let pre = pick_states(rng, states, &[]);
            let post = pick_states(rng, states, &[]);
            (Ann::States(pre), Some(Ann::States(post)))
        }
        _ => (Ann::Owned, None),
    };
    Param { name, ty: Ty::Ref(j, pre), post }
}

fn txn_sig(rng: &mut StdRng, cs: &[Contract], c: &Contract, me: usize, t: usize) -> Txn {
    let recv = match rng.gen_range(0..5) {
        0 => None,
        1 => Some((Ann::Owned, None)),
        2 => Some((Ann::Unowned, None)),
        _ if !c.states.is_empty() => {
            let pre = pick_states(rng, &c.states, &[]);
            let post = pick_states(rng, &c.states, &[]);
            Some((Ann::States(pre), Some(Ann::States(post))))
        }
        _ => None,
    };
    let params = (0..rng.gen_range(0..=2)).map(|k| param_ty(rng, cs, me, format!("a{k}"))).collect();
    let ret = match rng.gen_range(0..4) {
        0 => Some(Ty::Int),
        1 if me + 1 < cs.len() => Some(Ty::Ref(rng.gen_range(me + 1..cs.len()), Ann::Owned)),
        _ => None,
    };
    Txn { name: format!("t{t}"), recv, params, ret }
}

fn ty_text(cs: &[Contract], ty: &Ty) -> String {
    match ty {
        Ty::Int => "int".into(),
        Ty::Ref(j, a) => format!("{} @ {}", cs[*j].name, a.render()),
    }
}

fn param_text(cs: &[Contract], p: &Param) -> String {
    let mut s = ty_text(cs, &p.ty);
    if let Some(post) = &p.post {
        let _ = write!(s, " >> {}", post.render());
    }
    format!("{s} {}", p.name)
}

/// A name in scope while generating a body.
#[derive(Debug, Clone)]
struct Var {
    name: String,
    /// `None` for `int`.
    contract: Option<usize>,
    /// Best guess that the variable still owns its object.
    owns: bool,
    local: bool,
}

struct Body<'a> {
    cs: &'a [Contract],
    me: usize,
    scopes: Vec<Vec<Var>>,
    next: usize,
    /// Receiver may transition.
    can_transition: bool,
    /// Exact state of `this`, when the generator is sure of it.
    this_state: Option<String>,
    out: String,
    indent: usize,
}

impl<'a> Body<'a> {
    fn fresh(&mut self, p: &str) -> String {
        self.next += 1;
        format!("{p}{}", self.next)
    }

    fn line(&mut self, s: &str) {
        for _ in 0..self.indent {
            self.out.push_str("  ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn vars(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.scopes.iter().flatten().cloned().collect();
        let c = &self.cs[self.me];
        let state_fields = self.this_state.as_deref().map(|s| c.fields_of(s)).unwrap_or(&[]);
        for f in c.fields.iter().chain(state_fields) {
            v.push(Var {
                name: f.name.clone(),
                contract: match f.ty {
                    Ty::Int => None,
                    Ty::Ref(j, _) => Some(j),
                },
                owns: false,
                local: false,
            });
        }
        v
    }

    fn push_var(&mut self, v: Var) {
        self.scopes.last_mut().unwrap().push(v);
    }

    fn disowned(&mut self, name: &str) {
        for v in self.scopes.iter_mut().flatten() {
            if v.name == name {
                v.owns = false;
            }
        }
    }

    fn int_expr(&mut self, rng: &mut StdRng) -> String {
        let ints: Vec<String> = self.vars().into_iter().filter(|v| v.contract.is_none()).map(|v| v.name).collect();
        match rng.gen_range(0..4) {
            0 | 1 if !ints.is_empty() => ints.choose(rng).unwrap().clone(),
            2 if !ints.is_empty() => format!("{} + {}", ints.choose(rng).unwrap(), rng.gen_range(0..4)),
            _ => rng.gen_range(0..6).to_string(),
        }
    }

    /// An expression of contract `j`, avoiding the names in `used`.
    fn ref_expr(&mut self, rng: &mut StdRng, j: usize, used: &mut Vec<String>, depth: usize) -> String {
        let cands: Vec<Var> = self
            .vars()
            .into_iter()
            .filter(|v| v.contract == Some(j) && !used.contains(&v.name))
            .collect();
        if !cands.is_empty() && (depth > 1 || rng.gen_bool(0.8)) {
            let v = cands.choose(rng).unwrap().clone();
            used.push(v.name.clone());
            return v.name;
        }
        self.new_expr(rng, j, depth + 1)
    }

    fn new_expr(&mut self, rng: &mut StdRng, j: usize, depth: usize) -> String {
        let params = self.cs[j].ctor_params.clone();
        let mut used = Vec::new();
        let args: Vec<String> = params.iter().map(|p| self.arg(rng, p, &mut used, depth)).collect();
        format!("new {}({})", self.cs[j].name, args.join(", "))
    }

    fn arg(&mut self, rng: &mut StdRng, p: &Param, used: &mut Vec<String>, depth: usize) -> String {
        match &p.ty {
            Ty::Int => self.int_expr(rng),
            Ty::Ref(j, pre) => {
                let e = self.ref_expr(rng, *j, used, depth);
                if *pre != Ann::Unowned && p.post.as_ref().is_some_and(|a| *a == Ann::Unowned) {
                    self.disowned(&e);
                }
                e
            }
        }
    }

    fn block(&mut self, rng: &mut StdRng, depth: usize) {
        self.scopes.push(Vec::new());
        let saved = self.this_state.clone();
        for _ in 0..rng.gen_range(1..=3) {
            self.stmt(rng, depth);
        }
        self.cleanup(rng);
        self.scopes.pop();
        // keep whatever the block established only if it ended where it began
        if self.this_state != saved {
            self.this_state = None;
        }
    }

    /// Disowns most locals of the innermost scope that still look owning.
    fn cleanup(&mut self, rng: &mut StdRng) {
        let owning: Vec<Var> = self
            .scopes
            .last()
            .unwrap()
            .iter()
            .filter(|v| v.owns && v.local && v.contract.is_some_and(|j| self.cs[j].is_asset))
            .cloned()
            .collect();
        for v in owning {
            if rng.gen_bool(0.9) {
                self.line(&format!("disown {};", v.name));
                self.disowned(&v.name);
            }
        }
    }

    fn stmt(&mut self, rng: &mut StdRng, depth: usize) {
        let n = self.cs.len();
        let below = self.me + 1 < n;
        let refs: Vec<Var> = self.vars().into_iter().filter(|v| v.contract.is_some()).collect();
        match rng.gen_range(0..12) {
            0 => {
                let e = self.int_expr(rng);
                let x = self.fresh("x");
                self.line(&format!("int {x} = {e};"));
                self.push_var(Var { name: x, contract: None, owns: false, local: true });
            }
            1 if below => {
                let j = rng.gen_range(self.me + 1..n);
                let e = self.new_expr(rng, j, 1);
                let l = self.fresh("l");
                self.line(&format!("{} {l} = {e};", self.cs[j].name));
                self.push_var(Var { name: l, contract: Some(j), owns: true, local: true });
            }
            2..=4 if !refs.is_empty() => {
                let target = refs.choose(rng).unwrap().clone();
                let j = target.contract.unwrap();
                let Some(t) = self.cs[j].txns.choose(rng).cloned() else { return };
                let mut used = vec![target.name.clone()];
                let args: Vec<String> = t.params.iter().map(|p| self.arg(rng, p, &mut used, 1)).collect();
                let call = format!("{}.{}({})", target.name, t.name, args.join(", "));
                match &t.ret {
                    Some(Ty::Ref(k, _)) => {
                        let r = self.fresh("r");
                        self.line(&format!("{} {r} = {call};", self.cs[*k].name));
                        self.push_var(Var { name: r, contract: Some(*k), owns: true, local: true });
                    }
                    Some(Ty::Int) if rng.gen_bool(0.5) => {
                        let x = self.fresh("x");
                        self.line(&format!("int {x} = {call};"));
                        self.push_var(Var { name: x, contract: None, owns: false, local: true });
                    }
                    _ => self.line(&format!("{call};")),
                }
            }
            5 if !refs.is_empty() => {
                // swap a field's object out and put a fresh one in
                let fields: Vec<Var> = refs.iter().filter(|v| !v.local).cloned().collect();
                if let Some(f) = fields.choose(rng).cloned() {
                    let j = f.contract.unwrap();
                    let l = self.fresh("l");
                    self.line(&format!("{} {l} = {};", self.cs[j].name, f.name));
                    let e = self.new_expr(rng, j, 1);
                    self.line(&format!("{} = {e};", f.name));
                    self.push_var(Var { name: l, contract: Some(j), owns: true, local: true });
                }
            }
            6 if !refs.is_empty() => {
                let v = refs.choose(rng).unwrap().clone();
                if v.local || rng.gen_bool(0.2) {
                    self.line(&format!("disown {};", v.name));
                    self.disowned(&v.name);
                }
            }
            7 if depth < 2 => {
                let mut subjects: Vec<(String, usize)> = refs
                    .iter()
                    .filter(|v| !self.cs[v.contract.unwrap()].states.is_empty())
                    .map(|v| (v.name.clone(), v.contract.unwrap()))
                    .collect();
                if !self.cs[self.me].states.is_empty() {
                    subjects.push(("this".into(), self.me));
                }
                let Some((s, j)) = subjects.choose(rng).cloned() else { return };
                let st = self.cs[j].states.choose(rng).unwrap().clone();
                self.line(&format!("if ({s} in {st}) {{"));
                let saved = self.this_state.clone();
                if s == "this" {
                    self.this_state = Some(st.clone());
                }
                self.indent += 1;
                self.block(rng, depth + 1);
                self.indent -= 1;
                self.this_state = saved.clone();
                if rng.gen_bool(0.6) {
                    self.line("} else {");
                    self.indent += 1;
                    self.block(rng, depth + 1);
                    self.indent -= 1;
                }
                self.line("}");
                self.this_state = if s == "this" { None } else { saved };
            }
            8 if self.can_transition && !self.cs[self.me].states.is_empty() => {
                let st = self.cs[self.me].states.choose(rng).unwrap().clone();
                let fields = self.cs[self.me].fields_of(&st).to_vec();
                let mut inits = Vec::new();
                let mut used = Vec::new();
                for f in &fields {
                    let e = match &f.ty {
                        Ty::Int => self.int_expr(rng),
                        Ty::Ref(j, a) => {
                            let e = self.ref_expr(rng, *j, &mut used, 1);
                            if *a != Ann::Unowned {
                                self.disowned(&e);
                            }
                            e
                        }
                    };
                    inits.push(format!("{} = {e}", f.name));
                }
                if inits.is_empty() {
                    self.line(&format!("->{st};"));
                } else {
                    self.line(&format!("->{st}({});", inits.join(", ")));
                }
                self.this_state = Some(st);
            }
            9 => {
                let e = self.int_expr(rng);
                let k = rng.gen_range(0..6);
                let msg = self.fresh("revert ");
                self.line(&format!("if ({e} > {k}) {{"));
                self.indent += 1;
                self.line(&format!("revert(\"{msg}\");"));
                self.indent -= 1;
                self.line("}");
            }
            10 if depth < 2 => {
                let e = self.int_expr(rng);
                self.line(&format!("if ({e} > {}) {{", rng.gen_range(0..6)));
                self.indent += 1;
                self.block(rng, depth + 1);
                self.indent -= 1;
                self.line("} else {");
                self.indent += 1;
                self.block(rng, depth + 1);
                self.indent -= 1;
                self.line("}");
            }
            _ => {
                // assign an int field if there is one
                let c = &self.cs[self.me];
                let ints: Vec<String> = c.fields.iter().filter(|f| f.ty == Ty::Int).map(|f| f.name.clone()).collect();
                if let Some(f) = ints.choose(rng).cloned() {
                    let e = self.int_expr(rng);
                    self.line(&format!("{f} = {e};"));
                }
            }
        }
    }
}

fn render_contract(rng: &mut StdRng, cs: &[Contract], i: usize, out: &mut String) {
    let c = &cs[i];
    let _ = writeln!(
        out,
        "{}{}contract {} {{",
        if i == 0 { "main " } else { "" },
        if c.is_asset { "asset " } else { "" },
        c.name
    );
    for f in &c.fields {
        let _ = writeln!(out, "  {} {};", ty_text(cs, &f.ty), f.name);
    }
    for (s, fs) in &c.state_fields {
        if fs.is_empty() {
            let _ = writeln!(out, "  state {s};");
        } else {
            let _ = writeln!(out, "  state {s} {{");
            for f in fs {
                let _ = writeln!(out, "    {} {};", ty_text(cs, &f.ty), f.name);
            }
            let _ = writeln!(out, "  }}");
        }
    }
    // constructor
    let params: Vec<String> = c.ctor_params.iter().map(|p| param_text(cs, p)).collect();
    let _ = writeln!(out, "\n  {}({}) {{", c.name, params.join(", "));
    let mut b = Body {
        cs,
        me: i,
        scopes: vec![c
            .ctor_params
            .iter()
            .map(|p| Var {
                name: p.name.clone(),
                contract: match p.ty {
                    Ty::Int => None,
                    Ty::Ref(j, _) => Some(j),
                },
                owns: false,
                local: false,
            })
            .collect()],
        next: 0,
        can_transition: true,
        this_state: None,
        out: String::new(),
        indent: 2,
    };
    for f in &c.fields {
        let e = match &f.ty {
            Ty::Int => b.int_expr(rng),
            Ty::Ref(_, Ann::Unowned) => format!("p_{}", f.name),
            Ty::Ref(j, _) => b.new_expr(rng, *j, 1),
        };
        b.line(&format!("{} = {e};", f.name));
    }
    let targets = c.ctor_targets.clone();
    let transition = |b: &mut Body, rng: &mut StdRng, st: &str| {
        let fields = c.fields_of(st).to_vec();
        let inits: Vec<String> = fields
            .iter()
            .map(|f| {
                let e = match &f.ty {
                    Ty::Int => b.int_expr(rng),
                    Ty::Ref(j, Ann::Unowned) => {
                        let mut used = Vec::new();
                        b.ref_expr(rng, *j, &mut used, 2)
                    }
                    Ty::Ref(j, _) => b.new_expr(rng, *j, 1),
                };
                format!("{} = {e}", f.name)
            })
            .collect();
        if inits.is_empty() {
            b.line(&format!("->{st};"));
        } else {
            b.line(&format!("->{st}({});", inits.join(", ")));
        }
    };
    match targets.as_slice() {
        [] => {}
        [s] => transition(&mut b, rng, s),
        [s, t, ..] => {
            b.line("if (n > 0) {");
            b.indent += 1;
            transition(&mut b, rng, s);
            b.indent -= 1;
            b.line("} else {");
            b.indent += 1;
            transition(&mut b, rng, t);
            b.indent -= 1;
            b.line("}");
        }
    }
    out.push_str(&b.out);
    let _ = writeln!(out, "  }}");
    for t in &c.txns {
        let mut ps = Vec::new();
        if let Some((pre, post)) = &t.recv {
            let mut r = format!("{} @ {}", c.name, pre.render());
            if let Some(p) = post {
                let _ = write!(r, " >> {}", p.render());
            }
            ps.push(format!("{r} this"));
        }
        ps.extend(t.params.iter().map(|p| param_text(cs, p)));
        let ret = t.ret.as_ref().map(|r| format!(" returns {}", ty_text(cs, r))).unwrap_or_default();
        let _ = writeln!(out, "\n  transaction {}({}){ret} {{", t.name, ps.join(", "));
        let this_state = match &t.recv {
            Some((Ann::States(s), _)) if s.len() == 1 => Some(s[0].clone()),
            _ => None,
        };
        let mut b = Body {
            cs,
            me: i,
            scopes: vec![t
                .params
                .iter()
                .map(|p| Var {
                    name: p.name.clone(),
                    contract: match p.ty {
                        Ty::Int => None,
                        Ty::Ref(j, _) => Some(j),
                    },
                    owns: matches!(&p.ty, Ty::Ref(_, a) if *a != Ann::Unowned && *a != Ann::Shared)
                        && p.post.as_ref().is_some_and(|a| *a == Ann::Unowned),
                    local: true,
                })
                .collect()],
            next: 0,
            can_transition: !matches!(t.recv, Some((Ann::Unowned, _))),
            this_state,
            out: String::new(),
            indent: 2,
        };
        b.scopes.push(Vec::new());
        for _ in 0..rng.gen_range(1..=5) {
            b.stmt(rng, 0);
        }
        match &t.ret {
            Some(Ty::Int) => {
                let e = b.int_expr(rng);
                b.cleanup(rng);
                b.line(&format!("return {e};"));
            }
            Some(Ty::Ref(j, _)) => {
                let mut used = Vec::new();
                let e = b.ref_expr(rng, *j, &mut used, 1);
                b.disowned(&e);
                b.cleanup(rng);
                b.line(&format!("return {e};"));
            }
            _ => b.cleanup(rng),
        }
        b.scopes.pop();
        b.cleanup(rng);
        out.push_str(&b.out);
        let _ = writeln!(out, "  }}");
    }
    let _ = writeln!(out, "}}\n");
}
