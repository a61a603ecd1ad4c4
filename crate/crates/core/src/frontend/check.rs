//! Name resolution and type checking.

use std::collections::HashSet;

use crate::ast::*;
use crate::diag::{Diagnostic, Diagnostics};

/// Lexical scope of typed names.
#[derive(Clone, Debug, Default)]
pub struct Scope {
    frames: Vec<Vec<(String, Type)>>,
}

impl Scope {
    pub fn new() -> Self {
        Scope {
            frames: vec![Vec::new()],
        }
    }

    pub fn for_function(f: &FunctionDef) -> Self {
        let mut s = Scope::new();
        for p in &f.params {
            s.declare(&p.name, p.ty.clone());
        }
        s.push();
        s
    }

    pub fn push(&mut self) {
        self.frames.push(Vec::new());
    }

    pub fn pop(&mut self) {
        self.frames.pop();
    }

    pub fn declare(&mut self, name: &str, ty: Type) {
        self.frames
            .last_mut()
            .expect("scope has a frame")
            .push((name.to_string(), ty));
    }

    pub fn declared_in_top(&self, name: &str) -> bool {
        self.frames.last().is_some_and(|f| f.iter().any(|(n, _)| n == name))
    }

    pub fn lookup(&self, name: &str) -> Option<&Type> {
        self.frames
            .iter()
            .rev()
            .flat_map(|f| f.iter().rev())
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }
}

/// Inferred type plus whether the expression is an untyped integer literal.
#[derive(Clone, Debug, PartialEq)]
pub struct Typed {
    pub ty: Option<Type>,
    pub int_lit: bool,
}

impl Typed {
    fn of(ty: Type) -> Self {
        Typed {
            ty: Some(ty),
            int_lit: false,
        }
    }

    fn void() -> Self {
        Typed {
            ty: None,
            int_lit: false,
        }
    }
}

fn is_int(t: &Type) -> bool {
    matches!(t, Type::Scalar(ScalarKind::I64 | ScalarKind::I32))
}

fn is_numeric(t: &Type) -> bool {
    matches!(t, Type::Scalar(ScalarKind::F64 | ScalarKind::I64 | ScalarKind::I32))
}

/// True if a value of type `src` may be stored where `dst` is expected.
pub fn assignable(dst: &Type, src: &Typed) -> bool {
    match &src.ty {
        Some(t) if t == dst => true,
        Some(_) if src.int_lit => is_int(dst),
        _ => false,
    }
}

fn err<T>(span: Span, msg: impl Into<String>) -> Result<T, Diagnostic> {
    Err(Diagnostic::new(span, msg))
}

/// Infers the type of an expression in `scope`.
pub fn infer(prog: &Program, scope: &Scope, e: &Expr) -> Result<Typed, Diagnostic> {
    let span = e.span;
    match &e.kind {
        ExprKind::Float(_) => Ok(Typed::of(Type::Scalar(ScalarKind::F64))),
        ExprKind::Int(_) => Ok(Typed {
            ty: Some(Type::Scalar(ScalarKind::I64)),
            int_lit: true,
        }),
        ExprKind::Bool(_) => Ok(Typed::of(Type::Scalar(ScalarKind::Bool))),
        ExprKind::Var(name) => match scope.lookup(name) {
            Some(t) => Ok(Typed::of(t.clone())),
            None => err(span, format!("unknown identifier '{name}'")),
        },
        ExprKind::Field { base, field } => {
            let bt = infer(prog, scope, base)?;
            match bt.ty {
                Some(Type::StructRef(s)) => {
                    let sd = prog
                        .struct_def(&s)
                        .ok_or_else(|| Diagnostic::new(span, format!("unknown struct '{s}'")))?;
                    match sd.field(field) {
                        Some(f) => Ok(Typed::of(Type::from_field(f.ty))),
                        None => err(span, format!("struct '{s}' has no field '{field}'")),
                    }
                }
                _ => err(span, format!("field access '.{field}' on a non-struct value")),
            }
        }
        ExprKind::Index { base, index } => {
            let bt = infer(prog, scope, base)?;
            let it = infer(prog, scope, index)?;
            if !it.ty.as_ref().is_some_and(is_int) {
                return err(index.span, "index must be an integer");
            }
            match bt.ty {
                Some(Type::Container(_, s)) => Ok(Typed::of(Type::StructRef(s))),
                Some(Type::Buffer(t)) => Ok(Typed::of(Type::from_field(t))),
                Some(Type::Vector(_)) => Ok(Typed::of(Type::Scalar(ScalarKind::F64))),
                _ => err(span, "indexing a value that is not a container, buffer or vector"),
            }
        }
        ExprKind::Call { name, args } => infer_call(prog, scope, name, args, span),
        ExprKind::Unary { op, expr } => {
            let t = infer(prog, scope, expr)?;
            match op {
                UnOp::Neg if t.ty.as_ref().is_some_and(is_numeric) => Ok(t),
                UnOp::Not if t.ty == Some(Type::Scalar(ScalarKind::Bool)) => Ok(t),
                UnOp::Neg => err(span, "negation of a non-numeric value"),
                UnOp::Not => err(span, "'!' applied to a non-boolean value"),
            }
        }
        ExprKind::Binary { op, lhs, rhs } => {
            let l = infer(prog, scope, lhs)?;
            let r = infer(prog, scope, rhs)?;
            let (lt, rt) = match (&l.ty, &r.ty) {
                (Some(a), Some(b)) => (a.clone(), b.clone()),
                _ => return err(span, "operand has no value"),
            };
            let bool_ty = Type::Scalar(ScalarKind::Bool);
            match op {
                BinOp::And | BinOp::Or => {
                    if lt == bool_ty && rt == bool_ty {
                        Ok(Typed::of(bool_ty))
                    } else {
                        err(span, format!("'{}' needs boolean operands", op.symbol()))
                    }
                }
                _ => {
                    let unified = if lt == rt {
                        Some(Typed {
                            ty: Some(lt.clone()),
                            int_lit: l.int_lit && r.int_lit,
                        })
                    } else if l.int_lit && is_int(&rt) {
                        Some(Typed::of(rt.clone()))
                    } else if r.int_lit && is_int(&lt) {
                        Some(Typed::of(lt.clone()))
                    } else {
                        None
                    };
                    let Some(u) = unified else {
                        return err(
                            span,
                            format!("mismatched operand types {lt} and {rt} for '{}'", op.symbol()),
                        );
                    };
                    let ut = u.ty.clone().expect("unified type");
                    if op.is_comparison() {
                        let ok = is_numeric(&ut) || (ut == bool_ty && matches!(op, BinOp::Eq | BinOp::Ne));
                        if !ok {
                            return err(span, format!("cannot compare values of type {ut}"));
                        }
                        Ok(Typed::of(bool_ty))
                    } else if *op == BinOp::Rem {
                        if is_int(&ut) {
                            Ok(u)
                        } else {
                            err(span, "'%' needs integer operands")
                        }
                    } else if is_numeric(&ut) {
                        Ok(u)
                    } else {
                        err(span, format!("arithmetic on a value of type {ut}"))
                    }
                }
            }
        }
        ExprKind::VecLit(items) => {
            for it in items {
                let t = infer(prog, scope, it)?;
                if t.ty != Some(Type::Scalar(ScalarKind::F64)) {
                    return err(it.span, "vector literal elements must be f64");
                }
            }
            Ok(Typed::of(Type::Vector(items.len())))
        }
    }
}

fn infer_call(prog: &Program, scope: &Scope, name: &str, args: &[Expr], span: Span) -> Result<Typed, Diagnostic> {
    let f64t = Type::Scalar(ScalarKind::F64);
    let arity = |n: usize| -> Result<(), Diagnostic> {
        if args.len() == n {
            Ok(())
        } else {
            err(span, format!("'{name}' takes {n} argument(s), got {}", args.len()))
        }
    };
    match name {
        "sqrt" | "abs" | "floor" => {
            arity(1)?;
            let t = infer(prog, scope, &args[0])?;
            if t.ty == Some(f64t.clone()) {
                Ok(Typed::of(f64t))
            } else {
                err(span, format!("'{name}' takes an f64"))
            }
        }
        "min" | "max" => {
            arity(2)?;
            let a = infer(prog, scope, &args[0])?;
            let b = infer(prog, scope, &args[1])?;
            match (&a.ty, &b.ty) {
                (Some(x), Some(y)) if x == y && is_numeric(x) => Ok(Typed::of(x.clone())),
                (Some(x), Some(_)) if b.int_lit && is_int(x) => Ok(Typed::of(x.clone())),
                (Some(_), Some(y)) if a.int_lit && is_int(y) => Ok(Typed::of(y.clone())),
                _ => err(span, format!("'{name}' needs two numeric operands of one type")),
            }
        }
        "len" => {
            arity(1)?;
            let t = infer(prog, scope, &args[0])?;
            match t.ty {
                Some(Type::Container(..)) | Some(Type::Buffer(_)) => Ok(Typed::of(Type::Scalar(ScalarKind::I64))),
                _ => err(span, "'len' takes a container or buffer"),
            }
        }
        "alloc" => err(span, "'alloc' may only initialise a 'let' of buffer type"),
        _ => {
            let Some(f) = prog.function(name) else {
                return err(span, format!("unknown identifier '{name}'"));
            };
            if f.params.len() != args.len() {
                return err(
                    span,
                    format!("'{name}' takes {} argument(s), got {}", f.params.len(), args.len()),
                );
            }
            for (p, a) in f.params.iter().zip(args) {
                let t = infer(prog, scope, a)?;
                if !assignable(&p.ty, &t) {
                    return err(a.span, format!("argument '{}' of '{name}' expects {}", p.name, p.ty));
                }
            }
            Ok(match f.ret {
                Some(k) => Typed::of(Type::Scalar(k)),
                None => Typed::void(),
            })
        }
    }
}

/// True for expressions that denote a storage location.
pub fn is_lvalue(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Var(_) => true,
        ExprKind::Field { base, .. } => matches!(base.kind, ExprKind::Var(_) | ExprKind::Index { .. }),
        ExprKind::Index { base, .. } => is_lvalue(base),
        _ => false,
    }
}

struct Checker<'p> {
    prog: &'p Program,
    diags: Diagnostics,
}

/// Checks a parsed program; returns every problem found.
pub fn check_program(prog: &Program) -> Diagnostics {
    let mut c = Checker {
        prog,
        diags: Diagnostics::default(),
    };
    c.program();
    c.diags
}

impl<'p> Checker<'p> {
    fn program(&mut self) {
        let mut names = HashSet::new();
        for s in &self.prog.structs {
            if !names.insert(s.name.clone()) {
                self.diags.push(s.span, format!("duplicate struct '{}'", s.name));
            }
            let mut fields = HashSet::new();
            for f in &s.fields {
                if !fields.insert(f.name.as_str()) {
                    self.diags
                        .push(f.span, format!("duplicate struct field '{}' in '{}'", f.name, s.name));
                }
            }
        }
        let mut fnames = HashSet::new();
        for f in &self.prog.functions {
            if is_intrinsic(&f.name) {
                self.diags.push(f.span, format!("'{}' is a built-in function", f.name));
            }
            if !fnames.insert(f.name.clone()) {
                self.diags.push(f.span, format!("duplicate function '{}'", f.name));
            }
            let mut pnames = HashSet::new();
            for p in &f.params {
                if !pnames.insert(p.name.as_str()) {
                    self.diags.push(p.span, format!("duplicate parameter '{}'", p.name));
                }
                self.check_type(&p.ty, p.span);
            }
        }
        for f in &self.prog.functions {
            if let Some(body) = &f.body {
                let mut scope = Scope::for_function(f);
                self.block(body, &mut scope, f, 0);
            }
        }
    }

    fn check_type(&mut self, ty: &Type, span: Span) {
        if let Some(s) = ty.struct_name() {
            if self.prog.struct_def(s).is_none() {
                self.diags.push(span, format!("unknown struct '{s}'"));
            }
        }
    }

    fn infer(&mut self, scope: &Scope, e: &Expr) -> Option<Typed> {
        match infer(self.prog, scope, e) {
            Ok(t) => Some(t),
            Err(d) => {
                self.diags.0.push(d);
                None
            }
        }
    }

    fn block(&mut self, b: &Block, scope: &mut Scope, f: &FunctionDef, depth: u32) {
        scope.push();
        for s in &b.stmts {
            self.stmt(s, scope, f, depth);
        }
        scope.pop();
    }

    fn stmt(&mut self, s: &Stmt, scope: &mut Scope, f: &FunctionDef, depth: u32) {
        match &s.kind {
            StmtKind::Let { name, ty, init } => {
                if scope.declared_in_top(name) {
                    self.diags
                        .push(s.span, format!("'{name}' is already declared in this block"));
                }
                let declared = match (ty, &init.kind) {
                    (Some(Type::Buffer(elem)), ExprKind::Call { name: c, args }) if c == "alloc" => {
                        if args.len() != 1 {
                            self.diags.push(init.span, "'alloc' takes 1 argument");
                        } else if let Some(t) = self.infer(scope, &args[0]) {
                            if !t.ty.as_ref().is_some_and(is_int) {
                                self.diags.push(init.span, "buffer length must be an integer");
                            }
                        }
                        Some(Type::Buffer(*elem))
                    }
                    (Some(Type::Buffer(_)), _) => {
                        self.diags.push(init.span, "buffers are created with 'alloc(n)'");
                        None
                    }
                    (Some(t @ (Type::StructRef(_) | Type::Container(..))), _) => {
                        self.diags
                            .push(s.span, format!("values of type {t} cannot be stored in variables"));
                        None
                    }
                    (ty, _) => {
                        let it = self.infer(scope, init);
                        match (ty, it) {
                            (Some(t), Some(it)) => {
                                if !assignable(t, &it) {
                                    self.diags
                                        .push(init.span, format!("initializer does not match declared type {t}"));
                                }
                                Some(t.clone())
                            }
                            (None, Some(it)) => match it.ty {
                                Some(t @ (Type::StructRef(_) | Type::Container(..))) => {
                                    self.diags
                                        .push(s.span, format!("values of type {t} cannot be stored in variables"));
                                    None
                                }
                                Some(t) => Some(t),
                                None => {
                                    self.diags.push(init.span, "initializer has no value");
                                    None
                                }
                            },
                            (Some(t), None) => Some(t.clone()),
                            (None, None) => None,
                        }
                    }
                };
                if let Some(t) = declared {
                    scope.declare(name, t);
                }
            }
            StmtKind::Assign { target, op, value } => {
                if !is_lvalue(target) {
                    self.diags.push(target.span, "left side is not assignable");
                    return;
                }
                let (Some(tt), Some(vt)) = (self.infer(scope, target), self.infer(scope, value)) else {
                    return;
                };
                let Some(tty) = tt.ty else { return };
                match tty {
                    Type::StructRef(_) | Type::Container(..) | Type::Buffer(_) => {
                        self.diags
                            .push(target.span, format!("cannot assign to a value of type {tty}"));
                        return;
                    }
                    _ => {}
                }
                if *op != AssignOp::Set && !is_numeric(&tty) {
                    self.diags
                        .push(target.span, format!("'{}' needs a numeric target", op.symbol()));
                }
                if !assignable(&tty, &vt) {
                    self.diags
                        .push(value.span, format!("cannot assign to a target of type {tty}"));
                }
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                if let Some(t) = self.infer(scope, cond) {
                    if t.ty != Some(Type::Scalar(ScalarKind::Bool)) {
                        self.diags.push(cond.span, "condition must be boolean");
                    }
                }
                self.block(then_block, scope, f, depth);
                if let Some(e) = else_block {
                    self.block(e, scope, f, depth);
                }
            }
            StmtKind::For(l) => self.for_loop(l, scope, f, depth),
            StmtKind::Expr(e) => {
                if !matches!(e.kind, ExprKind::Call { .. }) {
                    self.diags.push(e.span, "only calls may be used as statements");
                }
                self.infer(scope, e);
            }
            StmtKind::Return(v) => match (v, f.ret) {
                (None, None) => {}
                (Some(e), Some(k)) => {
                    if let Some(t) = self.infer(scope, e) {
                        if !assignable(&Type::Scalar(k), &t) {
                            self.diags
                                .push(e.span, format!("'{}' must return {}", f.name, k.name()));
                        }
                    }
                }
                (Some(e), None) => self.diags.push(e.span, format!("'{}' does not return a value", f.name)),
                (None, Some(k)) => self
                    .diags
                    .push(s.span, format!("'{}' must return {}", f.name, k.name())),
            },
            StmtKind::AssumeDisjoint(a, b) => {
                for c in [a, b] {
                    match scope.lookup(c) {
                        Some(Type::Container(..)) => {}
                        Some(_) => self.diags.push(s.span, format!("'{c}' is not a container")),
                        None => self.diags.push(s.span, format!("unknown identifier '{c}'")),
                    }
                }
            }
            StmtKind::Free(name) => match scope.lookup(name) {
                Some(Type::Buffer(_)) => {}
                Some(_) => self.diags.push(s.span, format!("'{name}' is not a buffer")),
                None => self.diags.push(s.span, format!("unknown identifier '{name}'")),
            },
        }
    }

    fn for_loop(&mut self, l: &ForLoop, scope: &mut Scope, f: &FunctionDef, depth: u32) {
        let binder_ty = match &l.range {
            LoopRange::Container(c) => match scope.lookup(c) {
                Some(Type::Container(_, s)) => Some(Type::StructRef(s.clone())),
                Some(_) => {
                    self.diags.push(l.span, format!("'{c}' is not a container"));
                    None
                }
                None => {
                    self.diags.push(l.span, format!("unknown identifier '{c}'"));
                    None
                }
            },
            LoopRange::Range { start, end } => {
                for e in [start, end] {
                    if let Some(t) = self.infer(scope, e) {
                        if !t.ty.as_ref().is_some_and(is_int) {
                            self.diags.push(e.span, "loop bounds must be integers");
                        }
                    }
                }
                Some(Type::Scalar(ScalarKind::I64))
            }
        };
        if let Some(t) = &l.target {
            if !l.annotation.is_conversion() {
                self.diags.push(l.span, "@soa_target requires a conversion annotation");
            }
            if matches!(l.range, LoopRange::Container(_)) {
                self.diags.push(l.span, "@soa_target applies to indexed loops only");
            }
            match scope.lookup(t) {
                Some(Type::Container(..)) => {}
                Some(_) => self
                    .diags
                    .push(l.span, format!("@soa_target names '{t}', which is not a container")),
                None => self.diags.push(l.span, format!("unknown identifier '{t}'")),
            }
        }
        if l.annotation.is_conversion() && l.container().is_none() {
            self.diags.push(l.span, "conversion annotation on a non-container loop");
        }
        if let Annotation::Target(maps) = &l.annotation {
            if !matches!(l.range, LoopRange::Range { .. }) {
                self.diags.push(l.span, "@target applies to indexed loops only");
            }
            for m in maps {
                if !matches!(scope.lookup(&m.buffer), Some(Type::Buffer(_))) {
                    self.diags.push(
                        l.span,
                        format!("map clause names '{}', which is not a buffer", m.buffer),
                    );
                }
            }
        }
        let hoist = l.annotation.hoist_depth();
        if hoist > depth {
            self.diags
                .push(l.span, format!("hoist depth exceeds nesting: {hoist} > {depth}"));
        }
        scope.push();
        if let Some(t) = binder_ty {
            scope.declare(&l.binder, t);
        }
        self.block(&l.body, scope, f, depth + 1);
        scope.pop();
    }
}
