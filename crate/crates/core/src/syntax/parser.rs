//! Recursive-descent parser with recovery at statement and declaration
//! boundaries. The parser always consumes the whole token stream and returns
//! the (possibly partial) program together with every diagnostic.

use crate::ast::*;
use crate::diag::{Code, Diagnostic, Span};
use crate::syntax::lexer::{Keyword, Token, TokenKind};

pub struct Parsed {
    pub program: Program,
    pub diagnostics: Vec<Diagnostic>,
}

pub fn parse_program(tokens: &[Token]) -> Parsed {
    let mut p = Parser { toks: tokens, pos: 0, diags: Vec::new() };
    let program = p.program();
    Parsed { program, diagnostics: p.diags }
}

/// Marker for an error that has already been reported.
struct Reported;

type PResult<T> = Result<T, Reported>;

struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
    diags: Vec<Diagnostic>,
}

fn kw(k: Keyword) -> TokenKind {
    TokenKind::Keyword(k)
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t TokenKind> {
        self.toks.get(self.pos).map(|t| &t.kind)
    }

    fn peek_at(&self, n: usize) -> Option<&'t TokenKind> {
        self.toks.get(self.pos + n).map(|t| &t.kind)
    }

    fn at(&self, k: &TokenKind) -> bool {
        self.peek() == Some(k)
    }

    fn at_ident(&self) -> bool {
        matches!(self.peek(), Some(TokenKind::Ident(_)))
    }

    /// Span of the current token, or a zero-width span at end of input.
    fn here(&self) -> Span {
        match self.toks.get(self.pos) {
            Some(t) => t.span,
            None => match self.toks.last() {
                Some(t) => Span {
                    line: t.span.end_line,
                    col: t.span.end_col,
                    end_line: t.span.end_line,
                    end_col: t.span.end_col,
                    start: t.span.end,
                    end: t.span.end,
                },
                None => Span { line: 1, col: 1, end_line: 1, end_col: 1, start: 0, end: 0 },
            },
        }
    }

    fn prev_span(&self) -> Span {
        if self.pos == 0 {
            self.here()
        } else {
            self.toks[self.pos - 1].span
        }
    }

    fn bump(&mut self) -> &'t Token {
        let t = &self.toks[self.pos];
        self.pos += 1;
        t
    }

    fn eat(&mut self, k: &TokenKind) -> bool {
        if self.at(k) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn error(&mut self, code: Code, span: Span, msg: impl Into<String>) -> Reported {
        self.diags.push(Diagnostic::new(code, span, msg));
        Reported
    }

    fn unexpected(&mut self, what: &str) -> Reported {
        let span = self.here();
        let found = match self.peek() {
            Some(k) => k.to_string(),
            None => "end of input".to_string(),
        };
        self.error(Code::Parse, span, format!("expected {what}, found {found}"))
    }

    fn expect(&mut self, k: TokenKind) -> PResult<Span> {
        if self.at(&k) {
            Ok(self.bump().span)
        } else {
            Err(self.unexpected(&k.to_string()))
        }
    }

    fn ident(&mut self) -> PResult<Ident> {
        match self.peek() {
            Some(TokenKind::Ident(name)) => {
                let span = self.bump().span;
                Ok(Ident::new(name.clone(), span))
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    /// Skips to just past the next `;` or to the next `}` at the current
    /// nesting depth, stepping over balanced braces.
    fn recover_stmt(&mut self) {
        let mut depth = 0usize;
        while let Some(k) = self.peek() {
            match k {
                TokenKind::LBrace => depth += 1,
                TokenKind::RBrace => {
                    if depth == 0 {
                        return;
                    }
                    depth -= 1;
                    if depth == 0 {
                        self.pos += 1;
                        return;
                    }
                }
                TokenKind::Semi if depth == 0 => {
                    self.pos += 1;
                    return;
                }
                _ => {}
            }
            self.pos += 1;
        }
    }

    fn skip_balanced_parens(&mut self) {
        let mut depth = 0usize;
        while let Some(k) = self.peek() {
            match k {
                TokenKind::LParen => depth += 1,
                TokenKind::RParen => {
                    if depth <= 1 {
                        self.pos += 1;
                        return;
                    }
                    depth -= 1;
                }
                TokenKind::LBrace | TokenKind::RBrace | TokenKind::Semi if depth <= 1 => return,
                _ => {}
            }
            self.pos += 1;
        }
    }

    // ---- declarations ----

    fn program(&mut self) -> Program {
        let mut contracts = Vec::new();
        while self.peek().is_some() {
            let start = self.pos;
            match self.contract() {
                Ok(c) => contracts.push(c),
                Err(Reported) => {
                    // resync at the next contract header
                    if self.pos == start {
                        self.pos += 1;
                    }
                    while let Some(k) = self.peek() {
                        if matches!(k, TokenKind::Keyword(Keyword::Contract | Keyword::Main | Keyword::Asset)) {
                            break;
                        }
                        self.pos += 1;
                    }
                }
            }
        }
        Program { contracts }
    }

    fn contract(&mut self) -> PResult<ContractDecl> {
        let start = self.here();
        let mut is_main = false;
        let mut is_asset = false;
        loop {
            if self.eat(&kw(Keyword::Main)) {
                is_main = true;
            } else if self.eat(&kw(Keyword::Asset)) {
                is_asset = true;
            } else {
                break;
            }
        }
        self.expect(kw(Keyword::Contract))?;
        let name = self.ident()?;
        self.expect(TokenKind::LBrace)?;
        let mut c = ContractDecl {
            name,
            is_main,
            is_asset,
            fields: Vec::new(),
            states: Vec::new(),
            constructors: Vec::new(),
            transactions: Vec::new(),
            span: start,
        };
        loop {
            match self.peek() {
                None => {
                    self.unexpected("`}` closing the contract");
                    break;
                }
                Some(TokenKind::RBrace) => {
                    self.pos += 1;
                    break;
                }
                _ => {
                    let before = self.pos;
                    if self.member(&mut c).is_err() {
                        if self.pos == before {
                            self.pos += 1;
                        }
                        self.recover_member();
                    }
                }
            }
        }
        c.span = start.to(self.prev_span());
        Ok(c)
    }

    /// Skips to the start of the next plausible member or the contract's `}`.
    fn recover_member(&mut self) {
        let mut depth = 0usize;
        while let Some(k) = self.peek() {
            match k {
                TokenKind::LBrace => depth += 1,
                TokenKind::RBrace => {
                    if depth == 0 {
                        return;
                    }
                    depth -= 1;
                    if depth == 0 {
                        self.pos += 1;
                        return;
                    }
                }
                TokenKind::Semi if depth == 0 => {
                    self.pos += 1;
                    return;
                }
                TokenKind::Keyword(Keyword::State | Keyword::Transaction) if depth == 0 => return,
                _ => {}
            }
            self.pos += 1;
        }
    }

    fn member(&mut self, c: &mut ContractDecl) -> PResult<()> {
        match self.peek() {
            Some(TokenKind::Keyword(Keyword::State)) => {
                let s = self.state()?;
                c.states.push(s);
            }
            Some(TokenKind::Keyword(Keyword::Transaction)) => {
                let start = self.bump().span;
                let name = self.ident()?;
                let t = self.txn_rest(start, name, false, None)?;
                c.transactions.push(t);
            }
            Some(TokenKind::Ident(_)) => {
                let start = self.here();
                let ty_name = self.ident()?;
                let ann = if self.eat(&TokenKind::At) { Some(self.annotation()?) } else { None };
                if self.at(&TokenKind::LParen) {
                    if ty_name.name != c.name.name {
                        self.error(
                            Code::Parse,
                            ty_name.span,
                            format!("constructor must be named `{}`; transactions need the `transaction` keyword", c.name.name),
                        );
                    }
                    let t = self.txn_rest(start, ty_name, true, ann)?;
                    c.constructors.push(t);
                } else {
                    let Some(ann) = ann else {
                        return Err(self.error(
                            Code::Parse,
                            ty_name.span,
                            format!("field of contract type `{}` must declare a permission with `@`", ty_name.name),
                        ));
                    };
                    let name = self.ident()?;
                    self.expect(TokenKind::Semi)?;
                    c.fields.push(FieldDecl {
                        ty: TypeExpr::Ref { contract: ty_name, ann },
                        name,
                        span: start.to(self.prev_span()),
                    });
                }
            }
            Some(TokenKind::Keyword(Keyword::Int | Keyword::Bool | Keyword::String)) => {
                let f = self.field()?;
                c.fields.push(f);
            }
            _ => return Err(self.unexpected("field, state, constructor or transaction")),
        }
        Ok(())
    }

    fn state(&mut self) -> PResult<StateDecl> {
        let start = self.expect(kw(Keyword::State))?;
        let name = self.ident()?;
        if self.eat(&TokenKind::Semi) {
            return Ok(StateDecl { name, fields: Vec::new(), has_body: false, span: start.to(self.prev_span()) });
        }
        self.expect(TokenKind::LBrace)?;
        let mut fields = Vec::new();
        while !self.at(&TokenKind::RBrace) {
            if self.peek().is_none() {
                return Err(self.unexpected("`}` closing the state"));
            }
            let before = self.pos;
            match self.field() {
                Ok(f) => fields.push(f),
                Err(Reported) => {
                    if self.pos == before {
                        self.pos += 1;
                    }
                    self.recover_stmt();
                }
            }
        }
        self.bump();
        Ok(StateDecl { name, fields, has_body: true, span: start.to(self.prev_span()) })
    }

    fn field(&mut self) -> PResult<FieldDecl> {
        let start = self.here();
        let ty = self.type_expr()?;
        let name = self.ident()?;
        self.expect(TokenKind::Semi)?;
        Ok(FieldDecl { ty, name, span: start.to(self.prev_span()) })
    }

    fn prim(&mut self) -> Option<(PrimType, Span)> {
        let p = match self.peek()? {
            TokenKind::Keyword(Keyword::Int) => PrimType::Int,
            TokenKind::Keyword(Keyword::Bool) => PrimType::Bool,
            TokenKind::Keyword(Keyword::String) => PrimType::Str,
            _ => return None,
        };
        Some((p, self.bump().span))
    }

    fn type_expr(&mut self) -> PResult<TypeExpr> {
        if let Some((p, span)) = self.prim() {
            return Ok(TypeExpr::Prim(p, span));
        }
        let contract = self.ident()?;
        if !self.eat(&TokenKind::At) {
            return Err(self.error(
                Code::Parse,
                contract.span,
                format!("type `{}` must declare a permission with `@`", contract.name),
            ));
        }
        let ann = self.annotation()?;
        Ok(TypeExpr::Ref { contract, ann })
    }

    fn annotation(&mut self) -> PResult<Annotation> {
        let first = self.ident()?;
        match first.name.as_str() {
            "Owned" => return Ok(Annotation::Owned),
            "Unowned" => return Ok(Annotation::Unowned),
            "Shared" => return Ok(Annotation::Shared),
            _ => {}
        }
        let mut states = vec![first];
        while self.eat(&TokenKind::Pipe) {
            states.push(self.ident()?);
        }
        Ok(Annotation::States(states))
    }

    fn txn_rest(
        &mut self,
        start: Span,
        name: Ident,
        is_constructor: bool,
        ctor_annotation: Option<Annotation>,
    ) -> PResult<TransactionDecl> {
        self.expect(TokenKind::LParen)?;
        let mut receiver = None;
        let mut params = Vec::new();
        if !self.at(&TokenKind::RParen) {
            loop {
                self.param(&mut receiver, &mut params)?;
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        self.expect(TokenKind::RParen)?;
        let returns = if self.eat(&kw(Keyword::Returns)) { Some(self.type_expr()?) } else { None };
        let body = self.block()?;
        Ok(TransactionDecl {
            name,
            is_constructor,
            ctor_annotation,
            receiver,
            params,
            returns,
            span: start.to(body.span),
            body,
        })
    }

    fn param(&mut self, receiver: &mut Option<ReceiverDecl>, params: &mut Vec<ParamDecl>) -> PResult<()> {
        let start = self.here();
        if let Some((p, span)) = self.prim() {
            let name = self.ident()?;
            params.push(ParamDecl { ty: ParamType::Prim(p, span), name, span: start.to(self.prev_span()) });
            return Ok(());
        }
        let contract = self.ident()?;
        if !self.eat(&TokenKind::At) {
            return Err(self.error(
                Code::Parse,
                contract.span,
                format!("parameter of type `{}` must declare a permission with `@`", contract.name),
            ));
        }
        let pre = self.annotation()?;
        let post = if self.eat(&TokenKind::GtGt) { Some(self.annotation()?) } else { None };
        if self.at(&kw(Keyword::This)) {
            let this_span = self.bump().span;
            if receiver.is_some() || !params.is_empty() {
                return Err(self.error(Code::Parse, this_span, "the `this` receiver must be the first parameter"));
            }
            *receiver = Some(ReceiverDecl { contract, pre, post, span: start.to(this_span) });
            return Ok(());
        }
        let name = self.ident()?;
        params.push(ParamDecl { ty: ParamType::Ref { contract, pre, post }, name, span: start.to(self.prev_span()) });
        Ok(())
    }

    // ---- statements ----

    fn block(&mut self) -> PResult<Block> {
        let start = self.expect(TokenKind::LBrace)?;
        let mut stmts = Vec::new();
        loop {
            match self.peek() {
                None => {
                    return Err(self.unexpected("`}` closing the block"));
                }
                Some(TokenKind::RBrace) => {
                    let end = self.bump().span;
                    return Ok(Block { stmts, span: start.to(end) });
                }
                _ => {
                    let before = self.pos;
                    match self.stmt() {
                        Ok(Some(s)) => stmts.push(s),
                        Ok(None) => {}
                        Err(Reported) => {
                            if self.pos == before {
                                self.pos += 1;
                            }
                            self.recover_stmt();
                        }
                    }
                }
            }
        }
    }

    fn stmt(&mut self) -> PResult<Option<Stmt>> {
        let start = self.here();
        let kind = match self.peek() {
            Some(TokenKind::Arrow) => {
                self.bump();
                let target = self.ident()?;
                let inits = if self.eat(&TokenKind::LParen) {
                    let mut inits = Vec::new();
                    if !self.at(&TokenKind::RParen) {
                        loop {
                            let field = self.ident()?;
                            self.expect(TokenKind::Eq)?;
                            let value = self.expr()?;
                            inits.push(FieldInit { field, value });
                            if !self.eat(&TokenKind::Comma) {
                                break;
                            }
                        }
                    }
                    self.expect(TokenKind::RParen)?;
                    Some(inits)
                } else {
                    None
                };
                self.expect(TokenKind::Semi)?;
                StmtKind::Transition { target, inits }
            }
            Some(TokenKind::LBracket) => {
                self.bump();
                let subject = self.subject()?;
                self.expect(TokenKind::At)?;
                let ann = self.annotation()?;
                self.expect(TokenKind::RBracket)?;
                self.expect(TokenKind::Semi)?;
                StmtKind::Assert { subject, ann }
            }
            Some(TokenKind::Keyword(Keyword::Disown)) => {
                self.bump();
                let name = self.ident()?;
                self.expect(TokenKind::Semi)?;
                StmtKind::Disown(name)
            }
            Some(TokenKind::Keyword(Keyword::Revert)) => {
                self.bump();
                self.expect(TokenKind::LParen)?;
                let msg = match self.peek() {
                    Some(TokenKind::Str(s)) => {
                        self.bump();
                        s.clone()
                    }
                    _ => return Err(self.unexpected("string literal")),
                };
                self.expect(TokenKind::RParen)?;
                self.expect(TokenKind::Semi)?;
                StmtKind::Revert(msg)
            }
            Some(TokenKind::Keyword(Keyword::Return)) => {
                self.bump();
                let value = if self.at(&TokenKind::Semi) { None } else { Some(self.expr()?) };
                self.expect(TokenKind::Semi)?;
                StmtKind::Return(value)
            }
            Some(TokenKind::Keyword(Keyword::If)) => return self.if_stmt().map(Some),
            Some(TokenKind::Keyword(Keyword::Int | Keyword::Bool | Keyword::String)) => {
                let (p, pspan) = self.prim().expect("checked prim keyword");
                let name = self.ident()?;
                self.expect(TokenKind::Eq)?;
                let init = self.expr()?;
                self.expect(TokenKind::Semi)?;
                StmtKind::LocalDecl { ty: LocalType::Prim(p, pspan), name, init }
            }
            Some(TokenKind::Keyword(Keyword::This))
                if self.peek_at(1) == Some(&TokenKind::Dot)
                    && matches!(self.peek_at(2), Some(TokenKind::Ident(_)))
                    && self.peek_at(3) == Some(&TokenKind::Eq) =>
            {
                self.bump();
                self.bump();
                let field = self.ident()?;
                self.bump();
                let value = self.expr()?;
                self.expect(TokenKind::Semi)?;
                StmtKind::Assign { target: Place::ThisField(field), value }
            }
            Some(TokenKind::Ident(name)) => {
                let next = self.peek_at(1);
                if (name == "while" || name == "for") && next == Some(&TokenKind::LParen) {
                    let span = self.bump().span;
                    self.error(Code::NoLoops, span, format!("`{name}` loops are not supported"));
                    self.skip_balanced_parens();
                    if self.at(&TokenKind::LBrace) {
                        let _ = self.block();
                    }
                    return Ok(None);
                }
                match next {
                    Some(TokenKind::Ident(_)) => {
                        let ty = self.ident()?;
                        let name = self.ident()?;
                        self.expect(TokenKind::Eq)?;
                        let init = self.expr()?;
                        self.expect(TokenKind::Semi)?;
                        StmtKind::LocalDecl { ty: LocalType::Contract(ty), name, init }
                    }
                    Some(TokenKind::At) if matches!(self.peek_at(3), Some(TokenKind::Ident(_)) | Some(TokenKind::Pipe) | Some(TokenKind::GtGt)) => {
                        let ty = self.ident()?;
                        let at = self.bump().span;
                        let ann_start = self.here();
                        let _ = self.annotation()?;
                        let ann_span = at.to(self.prev_span());
                        let _ = ann_start;
                        self.error(
                            Code::LocalAnnot,
                            ann_span,
                            "local variable declarations cannot carry permission or state annotations",
                        );
                        let name = self.ident()?;
                        self.expect(TokenKind::Eq)?;
                        let init = self.expr()?;
                        self.expect(TokenKind::Semi)?;
                        StmtKind::LocalDecl { ty: LocalType::Contract(ty), name, init }
                    }
                    Some(TokenKind::ColonColon) => {
                        let state = self.ident()?;
                        self.bump();
                        let field = self.ident()?;
                        self.expect(TokenKind::Eq)?;
                        let value = self.expr()?;
                        self.expect(TokenKind::Semi)?;
                        StmtKind::PreInit { state, field, value }
                    }
                    Some(TokenKind::Eq) => {
                        let target = self.ident()?;
                        self.bump();
                        let value = self.expr()?;
                        self.expect(TokenKind::Semi)?;
                        StmtKind::Assign { target: Place::Name(target), value }
                    }
                    _ => {
                        let e = self.expr()?;
                        self.expect(TokenKind::Semi)?;
                        StmtKind::Expr(e)
                    }
                }
            }
            Some(TokenKind::LBrace) => {
                return Err(self.error(Code::Parse, start, "nested blocks are only allowed after `if` or `else`"));
            }
            _ => {
                let e = self.expr()?;
                self.expect(TokenKind::Semi)?;
                StmtKind::Expr(e)
            }
        };
        Ok(Some(Stmt { kind, span: start.to(self.prev_span()) }))
    }

    fn subject(&mut self) -> PResult<Subject> {
        if self.at(&kw(Keyword::This)) {
            Ok(Subject::This(self.bump().span))
        } else {
            Ok(Subject::Name(self.ident()?))
        }
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let start = self.expect(kw(Keyword::If))?;
        self.expect(TokenKind::LParen)?;
        let is_test = matches!(self.peek(), Some(TokenKind::Ident(_)) | Some(TokenKind::Keyword(Keyword::This)))
            && self.peek_at(1) == Some(&kw(Keyword::In));
        let test = if is_test {
            let subject = self.subject()?;
            self.bump();
            let state = self.ident()?;
            if !self.at(&TokenKind::RParen) {
                let span = self.here();
                self.error(
                    Code::StateTestExpr,
                    span,
                    "a dynamic state test must be the whole condition; it cannot be combined with other expressions",
                );
                self.skip_balanced_parens();
            } else {
                self.bump();
            }
            Some((subject, state))
        } else {
            None
        };
        let cond = if test.is_none() {
            let e = self.expr()?;
            self.expect(TokenKind::RParen)?;
            Some(e)
        } else {
            None
        };
        let then_block = self.block()?;
        let else_block = if self.eat(&kw(Keyword::Else)) {
            if self.at(&kw(Keyword::If)) {
                let nested = self.if_stmt()?;
                Some(Block { span: nested.span, stmts: vec![nested] })
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        let span = start.to(self.prev_span());
        let kind = match (test, cond) {
            (Some((subject, state)), _) => StmtKind::IfInState { subject, state, then_block, else_block },
            (None, Some(cond)) => StmtKind::If { cond, then_block, else_block },
            (None, None) => unreachable!("either a state test or a condition was parsed"),
        };
        Ok(Stmt { kind, span })
    }

    // ---- expressions ----

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        Some(match self.peek()? {
            TokenKind::OrOr => BinOp::Or,
            TokenKind::AndAnd => BinOp::And,
            TokenKind::EqEq => BinOp::Eq,
            TokenKind::NotEq => BinOp::Ne,
            TokenKind::Lt => BinOp::Lt,
            TokenKind::Gt => BinOp::Gt,
            TokenKind::Le => BinOp::Le,
            TokenKind::Ge => BinOp::Ge,
            TokenKind::Plus => BinOp::Add,
            TokenKind::Minus => BinOp::Sub,
            TokenKind::Star => BinOp::Mul,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.at(&kw(Keyword::In)) {
                let span = self.bump().span;
                self.error(
                    Code::StateTestExpr,
                    span,
                    "dynamic state tests may only appear as the entire condition of an `if`",
                );
                if self.at_ident() {
                    self.bump();
                }
                lhs = Expr { kind: ExprKind::Bool(true), span: lhs.span.to(self.prev_span()) };
                continue;
            }
            let Some(op) = self.binop() else { break };
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr { kind: ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, span };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let op = match self.peek() {
            Some(TokenKind::Bang) => UnOp::Not,
            Some(TokenKind::Minus) => UnOp::Neg,
            _ => return self.postfix(),
        };
        let start = self.bump().span;
        let operand = self.unary()?;
        let span = start.to(operand.span);
        Ok(Expr { kind: ExprKind::Unary { op, operand: Box::new(operand) }, span })
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while self.at(&TokenKind::Dot) {
            self.bump();
            let name = self.ident()?;
            if !self.at(&TokenKind::LParen) {
                return Err(self.error(
                    Code::Parse,
                    name.span,
                    format!("fields of other objects are not accessible; expected `{}(...)`", name.name),
                ));
            }
            let args = self.args()?;
            let span = e.span.to(self.prev_span());
            e = Expr { kind: ExprKind::Invoke { receiver: Box::new(e), txn: name, args }, span };
        }
        Ok(e)
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.expect(TokenKind::LParen)?;
        let mut args = Vec::new();
        if !self.at(&TokenKind::RParen) {
            loop {
                args.push(self.expr()?);
                if !self.eat(&TokenKind::Comma) {
                    break;
                }
            }
        }
        self.expect(TokenKind::RParen)?;
        Ok(args)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let start = self.here();
        let kind = match self.peek() {
            Some(TokenKind::Ident(name)) => {
                self.bump();
                ExprKind::Var(Ident::new(name.clone(), start))
            }
            Some(TokenKind::Int(v)) => {
                self.bump();
                ExprKind::Int(*v)
            }
            Some(TokenKind::Str(s)) => {
                self.bump();
                ExprKind::Str(s.clone())
            }
            Some(TokenKind::Keyword(Keyword::True)) => {
                self.bump();
                ExprKind::Bool(true)
            }
            Some(TokenKind::Keyword(Keyword::False)) => {
                self.bump();
                ExprKind::Bool(false)
            }
            Some(TokenKind::Keyword(Keyword::New)) => {
                self.bump();
                let contract = self.ident()?;
                let args = self.args()?;
                ExprKind::New { contract, args }
            }
            Some(TokenKind::Keyword(Keyword::This)) => {
                self.bump();
                if self.at(&kw(Keyword::In)) {
                    // `this in S` inside a larger condition; the caller
                    // reports it
                    return Ok(Expr { kind: ExprKind::Bool(true), span: start });
                }
                self.expect(TokenKind::Dot)?;
                let field = self.ident()?;
                if self.at(&TokenKind::LParen) {
                    return Err(self.error(
                        Code::Parse,
                        field.span,
                        "transactions cannot be invoked on `this`",
                    ));
                }
                ExprKind::ThisField(field)
            }
            Some(TokenKind::LParen) => {
                self.bump();
                let e = self.expr()?;
                self.expect(TokenKind::RParen)?;
                return Ok(Expr { kind: e.kind, span: start.to(self.prev_span()) });
            }
            _ => return Err(self.unexpected("expression")),
        };
        Ok(Expr { kind, span: start.to(self.prev_span()) })
    }
}
