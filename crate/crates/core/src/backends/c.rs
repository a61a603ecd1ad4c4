//! C11 + OpenMP translation.
//!
//! ABI of the emitted translation unit:
//!
//! * structs are packed, fields in declaration order (`f64` = `double`,
//!   `i64` = `int64_t`, `i32` = `int32_t`, `bool` = `bool`, `f64[k]` = `double[k]`);
//! * `slice<S>` parameters become `S *name, int64_t name_len`;
//! * `ptrlist<S>` parameters become `S **name, int64_t name_len`;
//! * `&S` parameters become `S *name`;
//! * `buffer<T>` parameters become `T *name` (`double (*name)[k]` for vectors);
//! * vector parameters are passed as `const double name[k]` and copied on entry.
//!
//! Integer arithmetic wraps. Bitwise agreement with the interpreter needs
//! `-ffp-contract=off`.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write;

use crate::ast::*;
use crate::error::CompileError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OffloadMode {
    /// Host only: `#pragma omp parallel for` on independent converted loops.
    #[default]
    Off,
    /// Target pragmas with explicit map clauses.
    Map,
    /// Target pragmas without map clauses; requires unified shared memory.
    Usm,
}

impl OffloadMode {
    pub fn name(self) -> &'static str {
        match self {
            OffloadMode::Off => "off",
            OffloadMode::Map => "map",
            OffloadMode::Usm => "usm",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmitOptions {
    pub offload: OffloadMode,
    /// Byte alignment of view buffers.
    pub alignment: usize,
}

impl Default for EmitOptions {
    fn default() -> Self {
        EmitOptions {
            offload: OffloadMode::Off,
            alignment: 64,
        }
    }
}

const C_RESERVED: &[&str] = &[
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else", "enum", "extern", "float",
    "for", "goto", "if", "inline", "int", "long", "register", "restrict", "return", "short", "signed", "sizeof",
    "static", "struct", "switch", "typedef", "union", "unsigned", "void", "volatile", "while", "bool", "true", "false",
    "main", "exit", "abort", "malloc", "calloc", "realloc", "free", "memcpy", "memset", "printf", "fabs", "sqrt",
    "floor", "abs", "int32_t", "int64_t", "uint32_t", "uint64_t", "size_t", "NAN", "INFINITY",
];

/// C spelling of a KL identifier.
pub fn c_ident(name: &str) -> String {
    if C_RESERVED.contains(&name) || name.starts_with("kl_") || name.starts_with("_") {
        format!("{name}_")
    } else {
        name.to_string()
    }
}

fn scalar_c(k: ScalarKind) -> &'static str {
    match k {
        ScalarKind::F64 => "double",
        ScalarKind::I64 => "int64_t",
        ScalarKind::I32 => "int32_t",
        ScalarKind::Bool => "bool",
    }
}

const HELPERS: &str = r#"static inline int64_t kl_add_i64(int64_t a, int64_t b) { return (int64_t)((uint64_t)a + (uint64_t)b); }
static inline int64_t kl_sub_i64(int64_t a, int64_t b) { return (int64_t)((uint64_t)a - (uint64_t)b); }
static inline int64_t kl_mul_i64(int64_t a, int64_t b) { return (int64_t)((uint64_t)a * (uint64_t)b); }
static inline int64_t kl_neg_i64(int64_t a) { return (int64_t)(0 - (uint64_t)a); }
static inline int64_t kl_div_i64(int64_t a, int64_t b) { return b == -1 ? kl_neg_i64(a) : a / b; }
static inline int64_t kl_rem_i64(int64_t a, int64_t b) { return b == -1 ? 0 : a % b; }
static inline int32_t kl_add_i32(int32_t a, int32_t b) { return (int32_t)((uint32_t)a + (uint32_t)b); }
static inline int32_t kl_sub_i32(int32_t a, int32_t b) { return (int32_t)((uint32_t)a - (uint32_t)b); }
static inline int32_t kl_mul_i32(int32_t a, int32_t b) { return (int32_t)((uint32_t)a * (uint32_t)b); }
static inline int32_t kl_neg_i32(int32_t a) { return (int32_t)(0 - (uint32_t)a); }
static inline int32_t kl_div_i32(int32_t a, int32_t b) { return b == -1 ? kl_neg_i32(a) : a / b; }
static inline int32_t kl_rem_i32(int32_t a, int32_t b) { return b == -1 ? 0 : a % b; }
static inline double kl_min_f64(double a, double b) { return a < b ? a : b; }
static inline double kl_max_f64(double a, double b) { return a > b ? a : b; }
static inline int64_t kl_min_i64(int64_t a, int64_t b) { return a < b ? a : b; }
static inline int64_t kl_max_i64(int64_t a, int64_t b) { return a > b ? a : b; }
static inline int32_t kl_min_i32(int32_t a, int32_t b) { return a < b ? a : b; }
static inline int32_t kl_max_i32(int32_t a, int32_t b) { return a > b ? a : b; }
"#;

fn unsupported(span: Span, message: impl Into<String>) -> CompileError {
    CompileError::Unsupported {
        span,
        message: message.into(),
    }
}

/// Translates a program to one C translation unit.
pub fn emit_c(prog: &Program, opts: &EmitOptions) -> Result<String, CompileError> {
    let device = device_functions(prog);
    let offloaded = opts.offload != OffloadMode::Off && has_target_loop(prog);
    let mut out = String::new();
    out.push_str("/* Generated by soaview from KL source.\n *\n * C ABI:\n");
    out.push_str(" *   structs are packed, fields in declaration order;\n");
    out.push_str(" *   slice<S> param   -> S *name, int64_t name_len\n");
    out.push_str(" *   ptrlist<S> param -> S **name, int64_t name_len\n");
    out.push_str(" *   &S param         -> S *name\n");
    out.push_str(" *   buffer<T> param  -> T *name\n");
    out.push_str(" *   f64[k] param     -> const double name[k] (copied on entry)\n");
    let _ = writeln!(out, " * Offload mode: {}.", opts.offload.name());
    if opts.offload == OffloadMode::Usm {
        out.push_str(" * Target regions carry no map clauses: host memory must be device-accessible.\n");
    }
    out.push_str(" * Compile with -ffp-contract=off for bitwise agreement with the interpreter.\n */\n");
    out.push_str("#include <stdbool.h>\n#include <stdint.h>\n#include <string.h>\n#include <math.h>\n\n");
    for s in &prog.structs {
        let name = c_ident(&s.name);
        let _ = writeln!(out, "typedef struct __attribute__((packed)) {name} {{");
        for f in &s.fields {
            let fname = c_ident(&f.name);
            match f.ty {
                FieldType::Scalar(k) => {
                    let _ = writeln!(out, "  {} {fname};", scalar_c(k));
                }
                FieldType::Vector(k) => {
                    let _ = writeln!(out, "  double {fname}[{k}];");
                }
            }
        }
        let _ = writeln!(out, "}} {name};");
        let _ = writeln!(
            out,
            "_Static_assert(sizeof({name}) == {}, \"packed size of {name}\");\n",
            s.size()
        );
    }
    if offloaded {
        out.push_str("#pragma omp declare target\n");
    }
    out.push_str(HELPERS);
    if offloaded {
        out.push_str("#pragma omp end declare target\n");
    }
    out.push('\n');
    for f in &prog.functions {
        let _ = writeln!(out, "{};", signature(f));
    }
    for f in &prog.functions {
        let Some(body) = &f.body else { continue };
        out.push('\n');
        let on_device = offloaded && device.contains(&f.name);
        if on_device {
            out.push_str("#pragma omp declare target\n");
        }
        let mut e = Emitter {
            prog,
            opts,
            out: String::new(),
            scopes: vec![Vec::new()],
            tmp: 0,
            buffer_lens: HashMap::new(),
        };
        e.function(f, body)?;
        out.push_str(&e.out);
        if on_device {
            out.push_str("#pragma omp end declare target\n");
        }
    }
    Ok(out)
}

fn signature(f: &FunctionDef) -> String {
    let mut params = Vec::new();
    for p in &f.params {
        let n = c_ident(&p.name);
        match &p.ty {
            Type::Scalar(k) => params.push(format!("{} {n}", scalar_c(*k))),
            Type::Vector(k) => params.push(format!("const double {n}_in[{k}]")),
            Type::StructRef(s) => params.push(format!("{} *{n}", c_ident(s))),
            Type::Container(ContainerKind::Slice, s) => {
                params.push(format!("{} *{n}", c_ident(s)));
                params.push(format!("int64_t {n}_len"));
            }
            Type::Container(ContainerKind::PtrList, s) => {
                params.push(format!("{} **{n}", c_ident(s)));
                params.push(format!("int64_t {n}_len"));
            }
            Type::Buffer(FieldType::Scalar(k)) => params.push(format!("{} *{n}", scalar_c(*k))),
            Type::Buffer(FieldType::Vector(k)) => params.push(format!("double (*{n})[{k}]")),
        }
    }
    let ret = f.ret.map(scalar_c).unwrap_or("void");
    let params = if params.is_empty() {
        "void".to_string()
    } else {
        params.join(", ")
    };
    format!("{ret} {}({params})", c_ident(&f.name))
}

fn has_target_loop(prog: &Program) -> bool {
    let mut found = false;
    for f in &prog.functions {
        if let Some(b) = &f.body {
            visit_loops(b, &mut |l, _| found |= matches!(l.annotation, Annotation::Target(_)));
        }
    }
    found
}

fn calls_in_block(b: &Block, out: &mut BTreeSet<String>) {
    fn expr(e: &Expr, out: &mut BTreeSet<String>) {
        match &e.kind {
            ExprKind::Call { name, args } => {
                if !is_intrinsic(name) {
                    out.insert(name.clone());
                }
                args.iter().for_each(|a| expr(a, out));
            }
            ExprKind::Field { base, .. } => expr(base, out),
            ExprKind::Index { base, index } => {
                expr(base, out);
                expr(index, out);
            }
            ExprKind::Unary { expr: x, .. } => expr(x, out),
            ExprKind::Binary { lhs, rhs, .. } => {
                expr(lhs, out);
                expr(rhs, out);
            }
            ExprKind::VecLit(items) => items.iter().for_each(|a| expr(a, out)),
            _ => {}
        }
    }
    for s in &b.stmts {
        match &s.kind {
            StmtKind::Let { init, .. } => expr(init, out),
            StmtKind::Assign { target, value, .. } => {
                expr(target, out);
                expr(value, out);
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                expr(cond, out);
                calls_in_block(then_block, out);
                if let Some(e) = else_block {
                    calls_in_block(e, out);
                }
            }
            StmtKind::For(l) => {
                if let LoopRange::Range { start, end } = &l.range {
                    expr(start, out);
                    expr(end, out);
                }
                calls_in_block(&l.body, out);
            }
            StmtKind::Expr(e) => expr(e, out),
            StmtKind::Return(Some(e)) => expr(e, out),
            _ => {}
        }
    }
}

/// Functions reachable from the body of an offloaded loop.
fn device_functions(prog: &Program) -> BTreeSet<String> {
    let mut roots = BTreeSet::new();
    for f in &prog.functions {
        if let Some(b) = &f.body {
            visit_loops(b, &mut |l, _| {
                if matches!(l.annotation, Annotation::Target(_)) {
                    calls_in_block(&l.body, &mut roots);
                }
            });
        }
    }
    let mut done = BTreeSet::new();
    let mut work: Vec<String> = roots.into_iter().collect();
    while let Some(n) = work.pop() {
        if !done.insert(n.clone()) {
            continue;
        }
        if let Some(b) = prog.function(&n).and_then(|f| f.body.as_ref()) {
            let mut next = BTreeSet::new();
            calls_in_block(b, &mut next);
            work.extend(next.into_iter().filter(|c| !done.contains(c)));
        }
    }
    done
}

struct Emitter<'p> {
    prog: &'p Program,
    opts: &'p EmitOptions,
    out: String,
    scopes: Vec<Vec<(String, Type)>>,
    tmp: usize,
    /// Local buffers whose length is read through `len`.
    buffer_lens: HashMap<String, String>,
}

type R<T> = Result<T, CompileError>;

impl<'p> Emitter<'p> {
    fn line(&mut self, level: usize, text: &str) {
        for _ in 0..level {
            self.out.push_str("  ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn fresh(&mut self, stem: &str) -> String {
        self.tmp += 1;
        format!("kl_{stem}{}", self.tmp)
    }

    fn declare(&mut self, name: &str, ty: Type) {
        self.scopes.last_mut().expect("scope").push((name.to_string(), ty));
    }

    fn var_type(&self, name: &str) -> Type {
        self.scopes
            .iter()
            .rev()
            .flat_map(|s| s.iter().rev())
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.clone())
            .expect("checked variable")
    }

    fn ty(&self, e: &Expr) -> Type {
        match &e.kind {
            ExprKind::Float(_) => Type::Scalar(ScalarKind::F64),
            ExprKind::Int(_) => Type::Scalar(ScalarKind::I64),
            ExprKind::Bool(_) => Type::Scalar(ScalarKind::Bool),
            ExprKind::Var(n) => self.var_type(n),
            ExprKind::Field { base, field } => {
                let s = self.ty(base);
                let def = self
                    .prog
                    .struct_def(s.struct_name().expect("record"))
                    .expect("checked struct");
                Type::from_field(def.field(field).expect("checked field").ty)
            }
            ExprKind::Index { base, .. } => match self.ty(base) {
                Type::Container(_, s) => Type::StructRef(s),
                Type::Buffer(ft) => Type::from_field(ft),
                Type::Vector(_) => Type::Scalar(ScalarKind::F64),
                t => panic!("index into {t}"),
            },
            ExprKind::Call { name, args } => match name.as_str() {
                "sqrt" | "abs" | "floor" => Type::Scalar(ScalarKind::F64),
                "len" => Type::Scalar(ScalarKind::I64),
                "min" | "max" => self.unify(&args[0], &args[1]),
                _ => Type::Scalar(self.prog.function(name).and_then(|f| f.ret).unwrap_or(ScalarKind::Bool)),
            },
            ExprKind::Unary { expr, .. } => self.ty(expr),
            ExprKind::Binary { op, lhs, rhs } => {
                if op.is_comparison() || matches!(op, BinOp::And | BinOp::Or) {
                    Type::Scalar(ScalarKind::Bool)
                } else {
                    self.unify(lhs, rhs)
                }
            }
            ExprKind::VecLit(items) => Type::Vector(items.len()),
        }
    }

    fn unify(&self, a: &Expr, b: &Expr) -> Type {
        let (x, y) = (self.ty(a), self.ty(b));
        if y == Type::Scalar(ScalarKind::I32) {
            y
        } else {
            x
        }
    }

    fn function(&mut self, f: &FunctionDef, body: &Block) -> R<()> {
        let head = signature(f);
        self.line(0, &format!("{head} {{"));
        for p in &f.params {
            self.declare(&p.name, p.ty.clone());
            if let Type::Vector(k) = p.ty {
                let n = c_ident(&p.name);
                self.line(1, &format!("double {n}[{k}];"));
                self.line(1, &format!("memcpy({n}, {n}_in, sizeof {n});"));
            }
        }
        self.block_body(body, 1)?;
        self.line(0, "}");
        Ok(())
    }

    fn block_body(&mut self, b: &Block, level: usize) -> R<()> {
        self.scopes.push(Vec::new());
        for s in &b.stmts {
            self.stmt(s, level)?;
        }
        self.scopes.pop();
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt, level: usize) -> R<()> {
        match &s.kind {
            StmtKind::Let { name, ty, init } => {
                let t = ty.clone().unwrap_or_else(|| self.ty(init));
                let n = c_ident(name);
                match &t {
                    Type::Buffer(ft) => {
                        let ExprKind::Call { args, .. } = &init.kind else {
                            return Err(unsupported(s.span, "buffer not initialised by alloc"));
                        };
                        let len = self.expr(&args[0])?;
                        let len_var = format!("{n}_len");
                        self.line(level, &format!("const int64_t {len_var} = {len};"));
                        let dims = match ft {
                            FieldType::Scalar(_) => String::new(),
                            FieldType::Vector(k) => format!("[{k}]"),
                        };
                        let elem = match ft {
                            FieldType::Scalar(k) => scalar_c(*k),
                            FieldType::Vector(_) => "double",
                        };
                        self.line(
                            level,
                            &format!(
                                "{elem} {n}[{len_var} > 0 ? {len_var} : 1]{dims} __attribute__((aligned({})));",
                                self.opts.alignment
                            ),
                        );
                        self.buffer_lens.insert(name.clone(), len_var);
                    }
                    Type::Vector(k) => {
                        self.line(level, &format!("double {n}[{k}];"));
                        self.vector_store(&n, *k, init, level)?;
                    }
                    Type::Scalar(k) => {
                        let v = self.expr(init)?;
                        self.line(level, &format!("{} {n} = {v};", scalar_c(*k)));
                    }
                    other => return Err(unsupported(s.span, format!("local of type {other}"))),
                }
                self.declare(name, t);
            }
            StmtKind::Assign { target, op, value } => {
                let t = self.ty(target);
                let dst = self.expr(target)?;
                if let Type::Vector(k) = t {
                    self.vector_store(&dst, k, value, level)?;
                    return Ok(());
                }
                let v = self.expr(value)?;
                match (op.binary(), &t) {
                    (None, _) => self.line(level, &format!("{dst} = {v};")),
                    (Some(b), Type::Scalar(ScalarKind::F64)) => {
                        self.line(level, &format!("{dst} {}= {v};", b.symbol()))
                    }
                    (Some(b), Type::Scalar(k)) => {
                        let p = self.fresh("p");
                        let ct = scalar_c(*k);
                        let call = int_call(b, *k, &format!("*{p}"), &v);
                        self.line(level, &format!("{{ {ct} *{p} = &{dst}; *{p} = {call}; }}"));
                    }
                    (Some(_), other) => return Err(unsupported(s.span, format!("compound assignment to {other}"))),
                }
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                let c = self.expr(cond)?;
                self.line(level, &format!("if ({c}) {{"));
                self.block_body(then_block, level + 1)?;
                if let Some(e) = else_block {
                    self.line(level, "} else {");
                    self.block_body(e, level + 1)?;
                }
                self.line(level, "}");
            }
            StmtKind::For(l) => self.for_loop(l, level)?,
            StmtKind::Expr(e) => {
                let v = self.expr(e)?;
                self.line(level, &format!("{v};"));
            }
            StmtKind::Return(v) => match v {
                Some(e) => {
                    let v = self.expr(e)?;
                    self.line(level, &format!("return {v};"));
                }
                None => self.line(level, "return;"),
            },
            StmtKind::AssumeDisjoint(..) => {}
            // Buffers are block-scoped arrays; storage ends with the block.
            StmtKind::Free(_) => {}
        }
        Ok(())
    }

    fn vector_store(&mut self, dst: &str, k: usize, value: &Expr, level: usize) -> R<()> {
        if let ExprKind::VecLit(items) = &value.kind {
            let vals = items.iter().map(|i| self.expr(i)).collect::<R<Vec<_>>>()?;
            let t = self.fresh("v");
            self.line(
                level,
                &format!(
                    "{{ const double {t}[{k}] = {{{}}}; memcpy({dst}, {t}, sizeof {t}); }}",
                    vals.join(", ")
                ),
            );
        } else {
            let src = self.expr(value)?;
            self.line(level, &format!("memmove({dst}, {src}, sizeof(double[{k}]));"));
        }
        Ok(())
    }

    /// A converted loop whose iterations touch only their own buffer slots and
    /// body-local variables. Prologue and epilogue loops access records, so
    /// they stay sequential.
    fn is_linear_loop(&self, l: &ForLoop) -> bool {
        if !l.binder.starts_with("soa_i_") || l.annotation != Annotation::None {
            return false;
        }
        if let LoopRange::Range { start, end } = &l.range {
            let mut locals = Vec::new();
            self.independent_expr(start, &l.binder)
                && self.independent_expr(end, &l.binder)
                && self.independent_block(&l.body, &l.binder, &mut locals)
        } else {
            false
        }
    }

    fn independent_block(&self, b: &Block, i: &str, locals: &mut Vec<String>) -> bool {
        let mark = locals.len();
        let ok = b.stmts.iter().all(|s| match &s.kind {
            StmtKind::Let { name, init, .. } => {
                locals.push(name.clone());
                self.independent_expr(init, i)
            }
            StmtKind::Assign { target, value, .. } => {
                let own = match &target.kind {
                    ExprKind::Var(n) => locals.contains(n),
                    ExprKind::Index { base, .. } => match &base.kind {
                        ExprKind::Var(n) if locals.contains(n) => true,
                        _ => self.independent_expr(target, i),
                    },
                    _ => false,
                };
                own && self.independent_expr(value, i)
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                self.independent_expr(cond, i)
                    && self.independent_block(then_block, i, locals)
                    && else_block.as_ref().is_none_or(|e| self.independent_block(e, i, locals))
            }
            StmtKind::Expr(e) => self.independent_expr(e, i),
            StmtKind::AssumeDisjoint(..) => true,
            _ => false,
        });
        locals.truncate(mark);
        ok
    }

    /// Buffers are indexed only by the loop index; calls take only scalars.
    fn independent_expr(&self, e: &Expr, i: &str) -> bool {
        match &e.kind {
            ExprKind::Float(_) | ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Var(_) => true,
            ExprKind::Field { .. } => false,
            ExprKind::Index { base, index } => {
                let buffer_slot = match &base.kind {
                    ExprKind::Var(n) => self
                        .scopes
                        .iter()
                        .flatten()
                        .any(|(v, t)| v == n && matches!(t, Type::Buffer(_))),
                    _ => false,
                };
                if buffer_slot {
                    matches!(&index.kind, ExprKind::Var(v) if v == i)
                } else {
                    self.independent_expr(base, i) && self.independent_expr(index, i)
                }
            }
            ExprKind::Call { name, args } => {
                let scalar_params = is_intrinsic(name)
                    || self.prog.function(name).is_some_and(|f| {
                        f.body.is_some()
                            && f.params
                                .iter()
                                .all(|p| matches!(p.ty, Type::Scalar(_) | Type::Vector(_)))
                    });
                scalar_params && name != "len" && args.iter().all(|a| self.independent_expr(a, i))
            }
            ExprKind::Unary { expr, .. } => self.independent_expr(expr, i),
            ExprKind::Binary { lhs, rhs, .. } => self.independent_expr(lhs, i) && self.independent_expr(rhs, i),
            ExprKind::VecLit(items) => items.iter().all(|a| self.independent_expr(a, i)),
        }
    }

    fn pragma(&mut self, l: &ForLoop, level: usize) {
        match (&l.annotation, self.opts.offload) {
            (Annotation::Target(maps), OffloadMode::Map) => {
                let mut text = "#pragma omp target teams distribute parallel for".to_string();
                for dir in [MapDir::To, MapDir::From, MapDir::ToFrom] {
                    let items: Vec<String> = maps
                        .iter()
                        .filter(|m| m.dir == dir)
                        .map(|m| format!("{}[0:{}]", c_ident(&m.buffer), c_ident(&m.len)))
                        .collect();
                    if !items.is_empty() {
                        let _ = write!(text, " map({}: {})", dir.keyword(), items.join(", "));
                    }
                }
                self.line(level, &text);
            }
            (Annotation::Target(_), OffloadMode::Usm) => {
                self.line(level, "#pragma omp target teams distribute parallel for");
            }
            (_, OffloadMode::Off) if self.is_linear_loop(l) => self.line(level, "#pragma omp parallel for"),
            _ => {}
        }
    }

    fn for_loop(&mut self, l: &ForLoop, level: usize) -> R<()> {
        self.pragma(l, level);
        let b = c_ident(&l.binder);
        match &l.range {
            LoopRange::Range { start, end } => {
                let a = self.expr(start)?;
                let e = self.expr(end)?;
                let pragma_loop = matches!(l.annotation, Annotation::Target(_))
                    && self.opts.offload != OffloadMode::Off
                    || self.opts.offload == OffloadMode::Off && self.is_linear_loop(l);
                if pragma_loop {
                    // Canonical loop form for OpenMP; the bound is loop-invariant there.
                    self.line(level, &format!("for (int64_t {b} = {a}; {b} < {e}; {b}++) {{"));
                } else {
                    let end = self.fresh("end");
                    self.line(
                        level,
                        &format!("for (int64_t {b} = {a}, {end} = {e}; {b} < {end}; {b}++) {{"),
                    );
                }
                self.scopes
                    .push(vec![(l.binder.clone(), Type::Scalar(ScalarKind::I64))]);
                self.block_body(&l.body, level + 1)?;
                self.scopes.pop();
            }
            LoopRange::Container(c) => {
                let Type::Container(kind, s) = self.var_type(c) else {
                    return Err(unsupported(l.span, "loop over a non-container"));
                };
                let k = self.fresh("k");
                let cn = c_ident(c);
                self.line(level, &format!("for (int64_t {k} = 0; {k} < {cn}_len; {k}++) {{"));
                let elem = match kind {
                    ContainerKind::Slice => format!("&{cn}[{k}]"),
                    ContainerKind::PtrList => format!("{cn}[{k}]"),
                };
                self.line(level + 1, &format!("{} *{b} = {elem};", c_ident(&s)));
                self.scopes.push(vec![(l.binder.clone(), Type::StructRef(s))]);
                self.block_body(&l.body, level + 1)?;
                self.scopes.pop();
            }
        }
        self.line(level, "}");
        Ok(())
    }

    /// Pointer to the record an expression denotes.
    fn record_ptr(&mut self, e: &Expr) -> R<String> {
        match &e.kind {
            ExprKind::Var(n) => Ok(c_ident(n)),
            ExprKind::Index { base, index } => {
                let Type::Container(kind, _) = self.ty(base) else {
                    return Err(unsupported(e.span, "record from a non-container"));
                };
                let b = self.expr(base)?;
                let i = self.expr(index)?;
                Ok(match kind {
                    ContainerKind::Slice => format!("(&{b}[{i}])"),
                    ContainerKind::PtrList => format!("{b}[{i}]"),
                })
            }
            _ => Err(unsupported(e.span, "record expression")),
        }
    }

    fn call(&mut self, e: &Expr, name: &str, args: &[Expr]) -> R<String> {
        let mut a = Vec::new();
        match name {
            "sqrt" | "floor" => return Ok(format!("{name}({})", self.expr(&args[0])?)),
            "abs" => return Ok(format!("fabs({})", self.expr(&args[0])?)),
            "min" | "max" => {
                let k = match self.ty(e) {
                    Type::Scalar(k) => k.name(),
                    _ => "f64",
                };
                let x = self.expr(&args[0])?;
                let y = self.expr(&args[1])?;
                return Ok(format!("kl_{name}_{k}({x}, {y})"));
            }
            "len" => {
                return match &args[0].kind {
                    ExprKind::Var(n) => match self.var_type(n) {
                        Type::Container(..) => Ok(format!("{}_len", c_ident(n))),
                        Type::Buffer(_) => self
                            .buffer_lens
                            .get(n)
                            .cloned()
                            .ok_or_else(|| unsupported(e.span, "len of a buffer parameter")),
                        _ => Err(unsupported(e.span, "len of a non-container")),
                    },
                    _ => Err(unsupported(e.span, "len of an expression")),
                };
            }
            "alloc" => return Err(unsupported(e.span, "alloc outside a buffer let")),
            _ => {}
        }
        let f = self.prog.function(name).expect("checked function");
        for (p, arg) in f.params.iter().zip(args) {
            match &p.ty {
                Type::Container(..) => {
                    let ExprKind::Var(n) = &arg.kind else {
                        return Err(unsupported(arg.span, "container argument must be a variable"));
                    };
                    let n = c_ident(n);
                    a.push(n.clone());
                    a.push(format!("{n}_len"));
                }
                Type::StructRef(_) => a.push(self.record_ptr(arg)?),
                Type::Vector(k) => match &arg.kind {
                    ExprKind::VecLit(items) => {
                        let vals = items.iter().map(|i| self.expr(i)).collect::<R<Vec<_>>>()?;
                        a.push(format!("(const double[{k}]){{{}}}", vals.join(", ")));
                    }
                    _ => a.push(self.expr(arg)?),
                },
                _ => a.push(self.expr(arg)?),
            }
        }
        Ok(format!("{}({})", c_ident(name), a.join(", ")))
    }

    fn expr(&mut self, e: &Expr) -> R<String> {
        Ok(match &e.kind {
            ExprKind::Float(v) => float(*v),
            ExprKind::Int(v) => {
                if *v == i64::MIN {
                    "INT64_MIN".to_string()
                } else if *v < 0 {
                    format!("(INT64_C({v}))")
                } else {
                    format!("INT64_C({v})")
                }
            }
            ExprKind::Bool(b) => b.to_string(),
            ExprKind::Var(n) => c_ident(n),
            ExprKind::Field { base, field } => {
                let p = self.record_ptr(base)?;
                format!("{p}->{}", c_ident(field))
            }
            ExprKind::Index { base, index } => match self.ty(base) {
                Type::Container(..) => self.record_ptr(e)?,
                _ => {
                    let b = self.expr(base)?;
                    let i = self.expr(index)?;
                    format!("{b}[{i}]")
                }
            },
            ExprKind::Call { name, args } => self.call(e, name, args)?,
            ExprKind::Unary { op, expr } => {
                let v = self.expr(expr)?;
                match (op, self.ty(expr)) {
                    (UnOp::Not, _) => format!("(!{v})"),
                    (UnOp::Neg, Type::Scalar(ScalarKind::F64)) => format!("(-{v})"),
                    (UnOp::Neg, Type::Scalar(k)) => format!("kl_neg_{}({v})", k.name()),
                    (UnOp::Neg, t) => return Err(unsupported(e.span, format!("negation of {t}"))),
                }
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let t = self.unify(lhs, rhs);
                let l = self.expr(lhs)?;
                let r = self.expr(rhs)?;
                match (op, &t) {
                    (BinOp::And | BinOp::Or, _) => format!("({l} {} {r})", op.symbol()),
                    _ if op.is_comparison() => format!("({l} {} {r})", op.symbol()),
                    (_, Type::Scalar(ScalarKind::F64)) => format!("({l} {} {r})", op.symbol()),
                    (_, Type::Scalar(k @ (ScalarKind::I64 | ScalarKind::I32))) => int_call(*op, *k, &l, &r),
                    _ => return Err(unsupported(e.span, format!("operator on {t}"))),
                }
            }
            ExprKind::VecLit(_) => return Err(unsupported(e.span, "vector literal outside an assignment or call")),
        })
    }
}

fn int_call(op: BinOp, k: ScalarKind, l: &str, r: &str) -> String {
    let f = match op {
        BinOp::Add => "add",
        BinOp::Sub => "sub",
        BinOp::Mul => "mul",
        BinOp::Div => "div",
        BinOp::Rem => "rem",
        _ => unreachable!("integer operator {op:?}"),
    };
    format!("kl_{f}_{}({l}, {r})", k.name())
}

fn float(v: f64) -> String {
    if v.is_nan() {
        return "NAN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 {
            "INFINITY".into()
        } else {
            "(-INFINITY)".into()
        };
    }
    // Shortest round-trip decimal; C compilers round decimal literals correctly.
    let s = format!("{v:?}");
    let s = if s.contains('.') || s.contains('e') {
        s
    } else {
        format!("{s}.0")
    };
    if v.is_sign_negative() {
        format!("({s})")
    } else {
        s
    }
}
