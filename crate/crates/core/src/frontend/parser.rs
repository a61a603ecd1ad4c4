//! Recursive-descent parser producing an unchecked [`Program`].

use super::lexer::{lex, Tok, Token};
use crate::ast::*;
use crate::diag::Diagnostic;

type PResult<T> = Result<T, Diagnostic>;

pub fn parse_program(src: &str) -> PResult<Program> {
    let tokens = lex(src)?;
    let mut p = Parser { tokens, pos: 0 };
    p.program()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, msg: impl Into<String>) -> PResult<T> {
        Err(Diagnostic::new(self.span(), msg))
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Annot(s) => format!("'@{s}'"),
            Tok::Float(v) => format!("'{v:?}'"),
            Tok::Int(v) => format!("'{v}'"),
            Tok::Punct(p) => format!("'{p}'"),
            Tok::Eof => "end of input".to_string(),
        }
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> PResult<Span> {
        if self.is_punct(p) {
            Ok(self.bump().span)
        } else {
            self.err(format!("syntax error: expected '{p}', found {}", self.describe()))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Span> {
        if self.is_kw(kw) {
            Ok(self.bump().span)
        } else {
            self.err(format!("syntax error: expected '{kw}', found {}", self.describe()))
        }
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                let sp = self.bump().span;
                Ok((s, sp))
            }
            _ => self.err(format!("syntax error: expected identifier, found {}", self.describe())),
        }
    }

    fn int(&mut self) -> PResult<i64> {
        match *self.peek() {
            Tok::Int(v) => {
                self.bump();
                Ok(v)
            }
            _ => self.err(format!("syntax error: expected integer, found {}", self.describe())),
        }
    }

    fn program(&mut self) -> PResult<Program> {
        let mut prog = Program::default();
        loop {
            match self.peek() {
                Tok::Eof => break,
                Tok::Ident(s) if s == "struct" => prog.structs.push(self.struct_def()?),
                Tok::Ident(s) if s == "fn" || s == "extern" => prog.functions.push(self.function()?),
                _ => {
                    return self.err(format!(
                        "syntax error: expected 'struct' or 'fn', found {}",
                        self.describe()
                    ))
                }
            }
        }
        Ok(prog)
    }

    fn struct_def(&mut self) -> PResult<StructDef> {
        let span = self.expect_kw("struct")?;
        let (name, _) = self.ident()?;
        self.expect_punct("{")?;
        let mut fields = Vec::new();
        let mut offset = 0;
        while !self.is_punct("}") {
            let (fname, fspan) = self.ident()?;
            self.expect_punct(":")?;
            let ty = self.field_type()?;
            self.expect_punct(";")?;
            fields.push(FieldDef {
                name: fname,
                ty,
                offset,
                span: fspan,
            });
            offset += ty.size();
        }
        self.expect_punct("}")?;
        Ok(StructDef { name, fields, span })
    }

    fn field_type(&mut self) -> PResult<FieldType> {
        let (name, span) = match self.peek().clone() {
            Tok::Ident(s) => (s, self.bump().span),
            _ => return self.err(format!("syntax error: expected type, found {}", self.describe())),
        };
        match name.as_str() {
            "f64" => {
                if self.eat_punct("[") {
                    let n = self.int()?;
                    self.expect_punct("]")?;
                    if n < 1 {
                        return Err(Diagnostic::new(span, "vector length must be positive"));
                    }
                    Ok(FieldType::Vector(n as usize))
                } else {
                    Ok(FieldType::Scalar(ScalarKind::F64))
                }
            }
            "i64" => Ok(FieldType::Scalar(ScalarKind::I64)),
            "i32" => Ok(FieldType::Scalar(ScalarKind::I32)),
            "bool" => Ok(FieldType::Scalar(ScalarKind::Bool)),
            other => Err(Diagnostic::new(
                span,
                format!("syntax error: '{other}' is not a field type"),
            )),
        }
    }

    fn ty(&mut self) -> PResult<Type> {
        if self.eat_punct("&") {
            let (s, _) = self.ident()?;
            return Ok(Type::StructRef(s));
        }
        for (kw, kind) in [("slice", ContainerKind::Slice), ("ptrlist", ContainerKind::PtrList)] {
            if self.is_kw(kw) {
                self.bump();
                self.expect_punct("<")?;
                let (s, _) = self.ident()?;
                self.expect_punct(">")?;
                return Ok(Type::Container(kind, s));
            }
        }
        if self.is_kw("buffer") {
            self.bump();
            self.expect_punct("<")?;
            let t = self.field_type()?;
            self.expect_punct(">")?;
            return Ok(Type::Buffer(t));
        }
        Ok(Type::from_field(self.field_type()?))
    }

    fn scalar_type(&mut self) -> PResult<ScalarKind> {
        let span = self.span();
        match self.field_type()? {
            FieldType::Scalar(k) => Ok(k),
            FieldType::Vector(_) => Err(Diagnostic::new(span, "return type must be a scalar")),
        }
    }

    fn function(&mut self) -> PResult<FunctionDef> {
        let is_extern = self.is_kw("extern");
        let span = self.span();
        if is_extern {
            self.bump();
        }
        self.expect_kw("fn")?;
        let (name, _) = self.ident()?;
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if !self.is_punct(")") {
            loop {
                let (pname, pspan) = self.ident()?;
                self.expect_punct(":")?;
                let ty = self.ty()?;
                params.push(Param {
                    name: pname,
                    ty,
                    span: pspan,
                });
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        let ret = if self.eat_punct("->") {
            Some(self.scalar_type()?)
        } else {
            None
        };
        let body = if is_extern {
            self.expect_punct(";")?;
            None
        } else {
            Some(self.block()?)
        };
        Ok(FunctionDef {
            name,
            params,
            ret,
            body,
            span,
        })
    }

    fn block(&mut self) -> PResult<Block> {
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.is_punct("}") {
            if matches!(self.peek(), Tok::Eof) {
                return self.err("syntax error: unexpected end of input, expected '}'");
            }
            stmts.push(self.stmt()?);
        }
        self.expect_punct("}")?;
        Ok(Block { stmts })
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let span = self.span();
        if let Tok::Annot(name) = self.peek().clone() {
            if name == "assume_disjoint" {
                self.bump();
                self.expect_punct("(")?;
                let (a, _) = self.ident()?;
                self.expect_punct(",")?;
                let (b, _) = self.ident()?;
                self.expect_punct(")")?;
                self.expect_punct(";")?;
                return Ok(Stmt {
                    kind: StmtKind::AssumeDisjoint(a, b),
                    span,
                });
            }
            return self.annotated_for();
        }
        match self.peek().clone() {
            Tok::Ident(kw) if kw == "for" => self.annotated_for(),
            Tok::Ident(kw) if kw == "let" => {
                self.bump();
                let (name, _) = self.ident()?;
                let ty = if self.eat_punct(":") { Some(self.ty()?) } else { None };
                self.expect_punct("=")?;
                let init = self.expr()?;
                self.expect_punct(";")?;
                Ok(Stmt {
                    kind: StmtKind::Let { name, ty, init },
                    span,
                })
            }
            Tok::Ident(kw) if kw == "if" => self.if_stmt(),
            Tok::Ident(kw) if kw == "return" => {
                self.bump();
                let value = if self.is_punct(";") { None } else { Some(self.expr()?) };
                self.expect_punct(";")?;
                Ok(Stmt {
                    kind: StmtKind::Return(value),
                    span,
                })
            }
            Tok::Ident(kw) if kw == "free" => {
                self.bump();
                let (name, _) = self.ident()?;
                self.expect_punct(";")?;
                Ok(Stmt {
                    kind: StmtKind::Free(name),
                    span,
                })
            }
            _ => {
                let lhs = self.expr()?;
                let op = match self.peek() {
                    Tok::Punct("=") => Some(AssignOp::Set),
                    Tok::Punct("+=") => Some(AssignOp::Add),
                    Tok::Punct("-=") => Some(AssignOp::Sub),
                    Tok::Punct("*=") => Some(AssignOp::Mul),
                    Tok::Punct("/=") => Some(AssignOp::Div),
                    _ => None,
                };
                let kind = match op {
                    Some(op) => {
                        self.bump();
                        let value = self.expr()?;
                        StmtKind::Assign { target: lhs, op, value }
                    }
                    None => StmtKind::Expr(lhs),
                };
                self.expect_punct(";")?;
                Ok(Stmt { kind, span })
            }
        }
    }

    fn if_stmt(&mut self) -> PResult<Stmt> {
        let span = self.expect_kw("if")?;
        let cond = self.expr()?;
        let then_block = self.block()?;
        let else_block = if self.is_kw("else") {
            self.bump();
            if self.is_kw("if") {
                Some(Block {
                    stmts: vec![self.if_stmt()?],
                })
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(Stmt {
            kind: StmtKind::If {
                cond,
                then_block,
                else_block,
            },
            span,
        })
    }

    fn annotated_for(&mut self) -> PResult<Stmt> {
        let span = self.span();
        let mut annotation = Annotation::None;
        let mut target = None;
        while let Tok::Annot(name) = self.peek().clone() {
            let aspan = self.bump().span;
            let new = match name.as_str() {
                "soa_convert" => Annotation::Convert,
                "soa_offload" => Annotation::Offload,
                "soa_convert_hoist" => {
                    self.expect_punct("(")?;
                    let n = self.int()?;
                    self.expect_punct(")")?;
                    if n < 1 || n > u32::MAX as i64 {
                        return Err(Diagnostic::new(aspan, "hoist depth must be a positive integer"));
                    }
                    Annotation::ConvertHoist(n as u32)
                }
                "soa_target" => {
                    self.expect_punct("(")?;
                    let (c, _) = self.ident()?;
                    self.expect_punct(")")?;
                    if target.replace(c).is_some() {
                        return Err(Diagnostic::new(aspan, "duplicate @soa_target"));
                    }
                    continue;
                }
                "target" => Annotation::Target(self.map_clauses()?),
                other => return Err(Diagnostic::new(aspan, format!("unknown annotation '@{other}'"))),
            };
            if annotation != Annotation::None {
                return Err(Diagnostic::new(aspan, "a loop takes at most one conversion annotation"));
            }
            annotation = new;
        }
        if !self.is_kw("for") {
            return self.err(format!(
                "annotation must immediately precede a 'for' statement, found {}",
                self.describe()
            ));
        }
        self.bump();
        let (binder, _) = self.ident()?;
        self.expect_kw("in")?;
        let first = self.expr()?;
        let range = if self.eat_punct("..") {
            let end = self.expr()?;
            LoopRange::Range { start: first, end }
        } else {
            match first.kind {
                ExprKind::Var(c) => LoopRange::Container(c),
                _ => {
                    return Err(Diagnostic::new(
                        first.span,
                        "syntax error: loop must range over a container name or 'a..b'",
                    ))
                }
            }
        };
        let body = self.block()?;
        Ok(Stmt {
            kind: StmtKind::For(ForLoop {
                annotation,
                target,
                binder,
                range,
                body,
                span,
            }),
            span,
        })
    }

    fn map_clauses(&mut self) -> PResult<Vec<MapClause>> {
        self.expect_punct("(")?;
        let mut out = Vec::new();
        if !self.is_punct(")") {
            loop {
                let (dir, dspan) = self.ident_any()?;
                let dir = match dir.as_str() {
                    "to" => MapDir::To,
                    "from" => MapDir::From,
                    "tofrom" => MapDir::ToFrom,
                    other => return Err(Diagnostic::new(dspan, format!("unknown map direction '{other}'"))),
                };
                let (buffer, _) = self.ident()?;
                self.expect_punct("[")?;
                let (len, _) = self.ident()?;
                self.expect_punct("]")?;
                out.push(MapClause { dir, buffer, len });
                if !self.eat_punct(",") {
                    break;
                }
            }
        }
        self.expect_punct(")")?;
        Ok(out)
    }

    fn ident_any(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let sp = self.bump().span;
                Ok((s, sp))
            }
            _ => self.err(format!("syntax error: expected identifier, found {}", self.describe())),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binop(&self) -> Option<BinOp> {
        let op = match self.peek() {
            Tok::Punct("||") => BinOp::Or,
            Tok::Punct("&&") => BinOp::And,
            Tok::Punct("==") => BinOp::Eq,
            Tok::Punct("!=") => BinOp::Ne,
            Tok::Punct("<") => BinOp::Lt,
            Tok::Punct("<=") => BinOp::Le,
            Tok::Punct(">") => BinOp::Gt,
            Tok::Punct(">=") => BinOp::Ge,
            Tok::Punct("+") => BinOp::Add,
            Tok::Punct("-") => BinOp::Sub,
            Tok::Punct("*") => BinOp::Mul,
            Tok::Punct("/") => BinOp::Div,
            Tok::Punct("%") => BinOp::Rem,
            _ => return None,
        };
        Some(op)
    }

    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let rhs = self.binary(prec + 1)?;
            let span = lhs.span;
            lhs = Expr::new(
                ExprKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                span,
            );
            if op.is_comparison() && self.binop().is_some_and(|o| o.precedence() == prec) {
                return self.err("syntax error: comparison operators cannot be chained");
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let span = self.span();
        let op = if self.eat_punct("-") {
            Some(UnOp::Neg)
        } else if self.eat_punct("!") {
            Some(UnOp::Not)
        } else {
            None
        };
        match op {
            Some(op) => {
                let e = self.unary()?;
                Ok(Expr::new(ExprKind::Unary { op, expr: Box::new(e) }, span))
            }
            None => self.postfix(),
        }
    }

    fn postfix(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        loop {
            if self.eat_punct(".") {
                let (f, _) = self.ident()?;
                e = Expr::field(e, f);
            } else if self.is_punct("[") {
                self.bump();
                let idx = self.expr()?;
                self.expect_punct("]")?;
                e = Expr::index(e, idx);
            } else {
                break;
            }
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Float(v) => {
                self.bump();
                Ok(Expr::new(ExprKind::Float(v), span))
            }
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::new(ExprKind::Int(v), span))
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(Expr::new(ExprKind::Bool(s == "true"), span))
            }
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                if self.eat_punct("(") {
                    let mut args = Vec::new();
                    if !self.is_punct(")") {
                        loop {
                            args.push(self.expr()?);
                            if !self.eat_punct(",") {
                                break;
                            }
                        }
                    }
                    self.expect_punct(")")?;
                    Ok(Expr::call(s, args, span))
                } else {
                    Ok(Expr::var(s, span))
                }
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Punct("[") => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    items.push(self.expr()?);
                    if !self.eat_punct(",") {
                        break;
                    }
                }
                self.expect_punct("]")?;
                Ok(Expr::new(ExprKind::VecLit(items), span))
            }
            _ => self.err(format!("syntax error: expected expression, found {}", self.describe())),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "struct", "fn", "extern", "let", "if", "else", "for", "in", "return", "free", "true", "false",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}
