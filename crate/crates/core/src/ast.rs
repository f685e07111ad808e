//! Syntax tree for a single source file.
//!
//! Nodes carry spans; [`Program::clear_spans`] erases them so that trees
//! parsed from differently formatted text can be compared structurally.

use crate::diag::Span;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ident {
    pub name: String,
    pub span: Span,
}

impl Ident {
    pub fn new(name: impl Into<String>, span: Span) -> Self {
        Ident { name: name.into(), span }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PrimType {
    Int,
    Bool,
    Str,
}

impl PrimType {
    pub fn keyword(self) -> &'static str {
        match self {
            PrimType::Int => "int",
            PrimType::Bool => "bool",
            PrimType::Str => "string",
        }
    }
}

/// Permission annotation as written after `@`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Annotation {
    Owned,
    Unowned,
    Shared,
    /// `S1 | S2 | ...`, always owned.
    States(Vec<Ident>),
}

/// Declared type of a field, return value, or a parameter without `>>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TypeExpr {
    Prim(PrimType, Span),
    Ref { contract: Ident, ann: Annotation },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub contracts: Vec<ContractDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractDecl {
    pub name: Ident,
    pub is_main: bool,
    pub is_asset: bool,
    pub fields: Vec<FieldDecl>,
    pub states: Vec<StateDecl>,
    pub constructors: Vec<TransactionDecl>,
    pub transactions: Vec<TransactionDecl>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateDecl {
    pub name: Ident,
    pub fields: Vec<FieldDecl>,
    /// Written as `state S { ... }` rather than `state S;`.
    pub has_body: bool,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDecl {
    pub ty: TypeExpr,
    pub name: Ident,
    pub span: Span,
}

/// Explicit `C @ Pre >> Post this` receiver.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceiverDecl {
    pub contract: Ident,
    pub pre: Annotation,
    /// Absent when written without `>>`; the permission is then unchanged.
    pub post: Option<Annotation>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParamType {
    Prim(PrimType, Span),
    Ref { contract: Ident, pre: Annotation, post: Option<Annotation> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamDecl {
    pub ty: ParamType,
    pub name: Ident,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionDecl {
    pub name: Ident,
    pub is_constructor: bool,
    /// `C@Owned()` constructor spelling; accepted and ignored.
    pub ctor_annotation: Option<Annotation>,
    pub receiver: Option<ReceiverDecl>,
    pub params: Vec<ParamDecl>,
    pub returns: Option<TypeExpr>,
    pub body: Block,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub stmts: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LocalType {
    Contract(Ident),
    Prim(PrimType, Span),
}

/// Assignable location.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Place {
    /// A bare name: local, parameter, or field of `this`.
    Name(Ident),
    /// `this.f`
    ThisField(Ident),
}

impl Place {
    pub fn ident(&self) -> &Ident {
        match self {
            Place::Name(i) | Place::ThisField(i) => i,
        }
    }
}

/// Subject of a state test or static assertion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Subject {
    This(Span),
    Name(Ident),
}

impl Subject {
    pub fn span(&self) -> Span {
        match self {
            Subject::This(s) => *s,
            Subject::Name(i) => i.span,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldInit {
    pub field: Ident,
    pub value: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    LocalDecl { ty: LocalType, name: Ident, init: Expr },
    Assign { target: Place, value: Expr },
    /// `S::f = e;`
    PreInit { state: Ident, field: Ident, value: Expr },
    /// `->S;` or `->S(f = e, ...);`
    Transition { target: Ident, inits: Option<Vec<FieldInit>> },
    Expr(Expr),
    Return(Option<Expr>),
    If { cond: Expr, then_block: Block, else_block: Option<Block> },
    IfInState { subject: Subject, state: Ident, then_block: Block, else_block: Option<Block> },
    /// `[x @ Ann];`
    Assert { subject: Subject, ann: Annotation },
    Disown(Ident),
    Revert(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Var(Ident),
    /// `this.f`
    ThisField(Ident),
    New { contract: Ident, args: Vec<Expr> },
    Invoke { receiver: Box<Expr>, txn: Ident, args: Vec<Expr> },
    Int(i64),
    Bool(bool),
    Str(String),
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
    Unary { op: UnOp, operand: Box<Expr> },
}

impl Expr {
    /// The place this expression names, if it is a plain variable or field.
    pub fn as_place(&self) -> Option<Place> {
        match &self.kind {
            ExprKind::Var(i) => Some(Place::Name(i.clone())),
            ExprKind::ThisField(i) => Some(Place::ThisField(i.clone())),
            _ => None,
        }
    }
}

impl Program {
    pub fn contract(&self, name: &str) -> Option<&ContractDecl> {
        self.contracts.iter().find(|c| c.name.name == name)
    }

    /// Resets every span to the default so trees compare by structure only.
    pub fn clear_spans(&mut self) {
        for c in &mut self.contracts {
            c.span = Span::default();
            c.name.span = Span::default();
            c.fields.iter_mut().for_each(clear_field);
            for s in &mut c.states {
                s.span = Span::default();
                s.name.span = Span::default();
                s.fields.iter_mut().for_each(clear_field);
            }
            c.constructors.iter_mut().chain(c.transactions.iter_mut()).for_each(clear_txn);
        }
    }

    /// Removes every static assertion statement from every body.
    pub fn strip_assertions(&mut self) {
        for c in &mut self.contracts {
            for t in c.constructors.iter_mut().chain(c.transactions.iter_mut()) {
                strip_block(&mut t.body);
            }
        }
    }
}

fn strip_block(b: &mut Block) {
    b.stmts.retain(|s| !matches!(s.kind, StmtKind::Assert { .. }));
    for s in &mut b.stmts {
        match &mut s.kind {
            StmtKind::If { then_block, else_block, .. } | StmtKind::IfInState { then_block, else_block, .. } => {
                strip_block(then_block);
                if let Some(e) = else_block {
                    strip_block(e);
                }
            }
            _ => {}
        }
    }
}

fn clear_field(f: &mut FieldDecl) {
    f.span = Span::default();
    f.name.span = Span::default();
    clear_type(&mut f.ty);
}

fn clear_type(t: &mut TypeExpr) {
    match t {
        TypeExpr::Prim(_, s) => *s = Span::default(),
        TypeExpr::Ref { contract, ann } => {
            contract.span = Span::default();
            clear_ann(ann);
        }
    }
}

fn clear_ann(a: &mut Annotation) {
    if let Annotation::States(v) = a {
        v.iter_mut().for_each(|i| i.span = Span::default());
    }
}

fn clear_txn(t: &mut TransactionDecl) {
    t.span = Span::default();
    t.name.span = Span::default();
    if let Some(a) = &mut t.ctor_annotation {
        clear_ann(a);
    }
    if let Some(r) = &mut t.receiver {
        r.span = Span::default();
        r.contract.span = Span::default();
        clear_ann(&mut r.pre);
        if let Some(p) = &mut r.post {
            clear_ann(p);
        }
    }
    for p in &mut t.params {
        p.span = Span::default();
        p.name.span = Span::default();
        match &mut p.ty {
            ParamType::Prim(_, s) => *s = Span::default(),
            ParamType::Ref { contract, pre, post } => {
                contract.span = Span::default();
                clear_ann(pre);
                if let Some(p) = post {
                    clear_ann(p);
                }
            }
        }
    }
    if let Some(r) = &mut t.returns {
        clear_type(r);
    }
    clear_block(&mut t.body);
}

fn clear_block(b: &mut Block) {
    b.span = Span::default();
    b.stmts.iter_mut().for_each(clear_stmt);
}

fn clear_subject(s: &mut Subject) {
    match s {
        Subject::This(sp) => *sp = Span::default(),
        Subject::Name(i) => i.span = Span::default(),
    }
}

fn clear_stmt(s: &mut Stmt) {
    s.span = Span::default();
    match &mut s.kind {
        StmtKind::LocalDecl { ty, name, init } => {
            match ty {
                LocalType::Contract(i) => i.span = Span::default(),
                LocalType::Prim(_, sp) => *sp = Span::default(),
            }
            name.span = Span::default();
            clear_expr(init);
        }
        StmtKind::Assign { target, value } => {
            match target {
                Place::Name(i) | Place::ThisField(i) => i.span = Span::default(),
            }
            clear_expr(value);
        }
        StmtKind::PreInit { state, field, value } => {
            state.span = Span::default();
            field.span = Span::default();
            clear_expr(value);
        }
        StmtKind::Transition { target, inits } => {
            target.span = Span::default();
            for i in inits.iter_mut().flatten() {
                i.field.span = Span::default();
                clear_expr(&mut i.value);
            }
        }
        StmtKind::Expr(e) => clear_expr(e),
        StmtKind::Return(e) => {
            if let Some(e) = e {
                clear_expr(e);
            }
        }
        StmtKind::If { cond, then_block, else_block } => {
            clear_expr(cond);
            clear_block(then_block);
            if let Some(b) = else_block {
                clear_block(b);
            }
        }
        StmtKind::IfInState { subject, state, then_block, else_block } => {
            clear_subject(subject);
            state.span = Span::default();
            clear_block(then_block);
            if let Some(b) = else_block {
                clear_block(b);
            }
        }
        StmtKind::Assert { subject, ann } => {
            clear_subject(subject);
            clear_ann(ann);
        }
        StmtKind::Disown(i) => i.span = Span::default(),
        StmtKind::Revert(_) => {}
    }
}

fn clear_expr(e: &mut Expr) {
    e.span = Span::default();
    match &mut e.kind {
        ExprKind::Var(i) | ExprKind::ThisField(i) => i.span = Span::default(),
        ExprKind::New { contract, args } => {
            contract.span = Span::default();
            args.iter_mut().for_each(clear_expr);
        }
        ExprKind::Invoke { receiver, txn, args } => {
            clear_expr(receiver);
            txn.span = Span::default();
            args.iter_mut().for_each(clear_expr);
        }
        ExprKind::Binary { lhs, rhs, .. } => {
            clear_expr(lhs);
            clear_expr(rhs);
        }
        ExprKind::Unary { operand, .. } => clear_expr(operand),
        ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Str(_) => {}
    }
}
