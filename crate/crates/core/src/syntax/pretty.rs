//! Canonical source printer. Output reparses to a structurally equal tree.
//!
//! Constructors are printed in the bare `C(...)` spelling and an `else if`
//! chain as a nested `else { if ... }`, which is the shape the parser builds.

use std::fmt::Write;

use crate::ast::*;
use crate::syntax::lexer::quote;

pub fn pretty_print(p: &Program) -> String {
    let mut out = String::new();
    for (i, c) in p.contracts.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        contract(&mut out, c);
    }
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("    ");
    }
}

fn contract(out: &mut String, c: &ContractDecl) {
    if c.is_main {
        out.push_str("main ");
    }
    if c.is_asset {
        out.push_str("asset ");
    }
    let _ = writeln!(out, "contract {} {{", c.name.name);
    for f in &c.fields {
        field(out, f, 1);
    }
    for s in &c.states {
        indent(out, 1);
        if s.has_body {
            let _ = writeln!(out, "state {} {{", s.name.name);
            for f in &s.fields {
                field(out, f, 2);
            }
            indent(out, 1);
            out.push_str("}\n");
        } else {
            let _ = writeln!(out, "state {};", s.name.name);
        }
    }
    for t in c.constructors.iter().chain(&c.transactions) {
        txn(out, t);
    }
    out.push_str("}\n");
}

fn field(out: &mut String, f: &FieldDecl, depth: usize) {
    indent(out, depth);
    let _ = writeln!(out, "{} {};", type_expr(&f.ty), f.name.name);
}

pub fn annotation(a: &Annotation) -> String {
    match a {
        Annotation::Owned => "Owned".into(),
        Annotation::Unowned => "Unowned".into(),
        Annotation::Shared => "Shared".into(),
        Annotation::States(v) => v.iter().map(|i| i.name.as_str()).collect::<Vec<_>>().join(" | "),
    }
}

fn type_expr(t: &TypeExpr) -> String {
    match t {
        TypeExpr::Prim(p, _) => p.keyword().into(),
        TypeExpr::Ref { contract, ann } => format!("{} @ {}", contract.name, annotation(ann)),
    }
}

fn pre_post(pre: &Annotation, post: &Option<Annotation>) -> String {
    match post {
        Some(post) => format!("{} >> {}", annotation(pre), annotation(post)),
        None => annotation(pre),
    }
}

fn txn(out: &mut String, t: &TransactionDecl) {
    indent(out, 1);
    if !t.is_constructor {
        out.push_str("transaction ");
    }
    out.push_str(&t.name.name);
    if let Some(a) = &t.ctor_annotation {
        out.push('@');
        out.push_str(&annotation(a));
    }
    out.push('(');
    let mut parts = Vec::new();
    if let Some(r) = &t.receiver {
        parts.push(format!("{} @ {} this", r.contract.name, pre_post(&r.pre, &r.post)));
    }
    for p in &t.params {
        parts.push(match &p.ty {
            ParamType::Prim(pt, _) => format!("{} {}", pt.keyword(), p.name.name),
            ParamType::Ref { contract, pre, post } => {
                format!("{} @ {} {}", contract.name, pre_post(pre, post), p.name.name)
            }
        });
    }
    out.push_str(&parts.join(", "));
    out.push(')');
    if let Some(r) = &t.returns {
        let _ = write!(out, " returns {}", type_expr(r));
    }
    out.push(' ');
    block(out, &t.body, 1);
    out.push('\n');
}

fn block(out: &mut String, b: &Block, depth: usize) {
    out.push_str("{\n");
    for s in &b.stmts {
        stmt(out, s, depth + 1);
    }
    indent(out, depth);
    out.push('}');
}

fn subject(s: &Subject) -> &str {
    match s {
        Subject::This(_) => "this",
        Subject::Name(i) => &i.name,
    }
}

fn stmt(out: &mut String, s: &Stmt, depth: usize) {
    indent(out, depth);
    match &s.kind {
        StmtKind::LocalDecl { ty, name, init } => {
            let ty = match ty {
                LocalType::Contract(i) => i.name.as_str(),
                LocalType::Prim(p, _) => p.keyword(),
            };
            let _ = write!(out, "{} {} = {};", ty, name.name, expr(init));
        }
        StmtKind::Assign { target, value } => {
            let lhs = match target {
                Place::Name(i) => i.name.clone(),
                Place::ThisField(i) => format!("this.{}", i.name),
            };
            let _ = write!(out, "{} = {};", lhs, expr(value));
        }
        StmtKind::PreInit { state, field, value } => {
            let _ = write!(out, "{}::{} = {};", state.name, field.name, expr(value));
        }
        StmtKind::Transition { target, inits } => {
            let _ = write!(out, "->{}", target.name);
            if let Some(inits) = inits {
                let parts: Vec<String> =
                    inits.iter().map(|i| format!("{} = {}", i.field.name, expr(&i.value))).collect();
                let _ = write!(out, "({})", parts.join(", "));
            }
            out.push(';');
        }
        StmtKind::Expr(e) => {
            let _ = write!(out, "{};", expr(e));
        }
        StmtKind::Return(None) => out.push_str("return;"),
        StmtKind::Return(Some(e)) => {
            let _ = write!(out, "return {};", expr(e));
        }
        StmtKind::If { cond, then_block, else_block } => {
            let _ = write!(out, "if ({}) ", expr(cond));
            if_tail(out, then_block, else_block, depth);
        }
        StmtKind::IfInState { subject: subj, state, then_block, else_block } => {
            let _ = write!(out, "if ({} in {}) ", subject(subj), state.name);
            if_tail(out, then_block, else_block, depth);
        }
        StmtKind::Assert { subject: subj, ann } => {
            let _ = write!(out, "[{} @ {}];", subject(subj), annotation(ann));
        }
        StmtKind::Disown(i) => {
            let _ = write!(out, "disown {};", i.name);
        }
        StmtKind::Revert(msg) => {
            let _ = write!(out, "revert({});", quote(msg));
        }
    }
    out.push('\n');
}

fn if_tail(out: &mut String, then_block: &Block, else_block: &Option<Block>, depth: usize) {
    block(out, then_block, depth);
    if let Some(e) = else_block {
        out.push_str(" else ");
        block(out, e, depth);
    }
}

/// Prints an expression, parenthesising every compound operand so that
/// precedence never has to be reconstructed.
pub fn expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Var(i) => i.name.clone(),
        ExprKind::ThisField(i) => format!("this.{}", i.name),
        ExprKind::New { contract, args } => format!("new {}({})", contract.name, list(args)),
        ExprKind::Invoke { receiver, txn, args } => {
            let r = match receiver.kind {
                ExprKind::Var(_) | ExprKind::Invoke { .. } | ExprKind::New { .. } => expr(receiver),
                _ => format!("({})", expr(receiver)),
            };
            format!("{}.{}({})", r, txn.name, list(args))
        }
        ExprKind::Int(v) => v.to_string(),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Str(s) => quote(s),
        ExprKind::Binary { op, lhs, rhs } => format!("{} {} {}", operand(lhs), op.symbol(), operand(rhs)),
        ExprKind::Unary { op, operand: inner } => {
            let sym = match op {
                UnOp::Not => "!",
                UnOp::Neg => "-",
            };
            format!("{}{}", sym, operand(inner))
        }
    }
}

fn operand(e: &Expr) -> String {
    match e.kind {
        ExprKind::Binary { .. } | ExprKind::Unary { .. } => format!("({})", expr(e)),
        // a negative literal would otherwise print as `--1`
        ExprKind::Int(v) if v < 0 => format!("({})", v),
        _ => expr(e),
    }
}

fn list(args: &[Expr]) -> String {
    args.iter().map(expr).collect::<Vec<_>>().join(", ")
}
