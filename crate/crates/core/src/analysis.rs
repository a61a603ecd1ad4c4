//! Field-level access sets of annotated loops.
//!
//! Every struct-valued expression is traced back to a *base* (a container
//! parameter or a `&S` parameter) and, when it denotes the element of an
//! annotated loop, to that loop's *view*. Calls are folded in through per
//! (function, parameter) summaries computed to a fixpoint over the call graph.
//! The analysis is flow- and path-insensitive.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use crate::ast::*;
use crate::error::{AliasConflict, CompileError};

/// Loops are identified by the byte offset of their first token.
pub type LoopId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Access {
    Read,
    Write,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldClass {
    ReadOnly,
    WriteOnly,
    ReadWrite,
}

impl FieldClass {
    pub fn short(self) -> &'static str {
        match self {
            FieldClass::ReadOnly => "ro",
            FieldClass::WriteOnly => "wo",
            FieldClass::ReadWrite => "rw",
        }
    }

    pub fn map_dir(self) -> MapDir {
        match self {
            FieldClass::ReadOnly => MapDir::To,
            FieldClass::WriteOnly => MapDir::From,
            FieldClass::ReadWrite => MapDir::ToFrom,
        }
    }
}

/// Read and write sets over the fields of one struct. Field lists are kept in
/// declaration order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccessSets {
    pub strukt: String,
    pub a_in: Vec<String>,
    pub a_out: Vec<String>,
    pub byte_in: usize,
    pub byte_out: usize,
}

impl AccessSets {
    pub fn empty(strukt: &str) -> Self {
        AccessSets {
            strukt: strukt.to_string(),
            a_in: Vec::new(),
            a_out: Vec::new(),
            byte_in: 0,
            byte_out: 0,
        }
    }

    fn from_indices(def: &StructDef, a_in: &BTreeSet<usize>, a_out: &BTreeSet<usize>) -> Self {
        let names = |s: &BTreeSet<usize>| s.iter().map(|&i| def.fields[i].name.clone()).collect();
        let bytes = |s: &BTreeSet<usize>| s.iter().map(|&i| def.fields[i].size()).sum();
        AccessSets {
            strukt: def.name.clone(),
            a_in: names(a_in),
            a_out: names(a_out),
            byte_in: bytes(a_in),
            byte_out: bytes(a_out),
        }
    }

    pub fn reads(&self, field: &str) -> bool {
        self.a_in.iter().any(|f| f == field)
    }

    pub fn writes(&self, field: &str) -> bool {
        self.a_out.iter().any(|f| f == field)
    }

    pub fn class(&self, field: &str) -> Option<FieldClass> {
        match (self.reads(field), self.writes(field)) {
            (true, true) => Some(FieldClass::ReadWrite),
            (true, false) => Some(FieldClass::ReadOnly),
            (false, true) => Some(FieldClass::WriteOnly),
            (false, false) => None,
        }
    }

    /// A_in ∪ A_out in declaration order of `def`.
    pub fn touched(&self, def: &StructDef) -> Vec<String> {
        def.fields
            .iter()
            .filter(|f| self.reads(&f.name) || self.writes(&f.name))
            .map(|f| f.name.clone())
            .collect()
    }

    /// Partition of A_in ∪ A_out into the three classes, in declaration order.
    pub fn classification(&self, def: &StructDef) -> Vec<(String, FieldClass)> {
        self.touched(def)
            .into_iter()
            .map(|f| {
                let c = self.class(&f).expect("touched field has a class");
                (f, c)
            })
            .collect()
    }

    fn union(&mut self, other: &AccessSets, def: &StructDef) {
        let idx = |names: &[String]| -> BTreeSet<usize> { names.iter().filter_map(|n| def.field_index(n)).collect() };
        let mut a_in = idx(&self.a_in);
        a_in.extend(idx(&other.a_in));
        let mut a_out = idx(&self.a_out);
        a_out.extend(idx(&other.a_out));
        *self = AccessSets::from_indices(def, &a_in, &a_out);
    }
}

/// Record origin of a struct-valued expression.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Base {
    /// Element of the container parameter with this name.
    Container(String),
    /// The `&S` parameter at this position.
    StructParam(usize),
}

#[derive(Clone, Debug)]
struct Event {
    base: Base,
    strukt: String,
    field: usize,
    access: Access,
    /// Innermost annotated loop whose view redirects this access.
    view: Option<LoopId>,
    /// Loops enclosing the access, outermost first.
    loops: Vec<LoopId>,
    span: Span,
}

#[derive(Clone, Debug)]
struct Escape {
    base: Base,
    view: Option<LoopId>,
    callee: String,
    loops: Vec<LoopId>,
    span: Span,
}

/// Summary of what a function does to the records reachable from one parameter.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParamSummary {
    pub reads: BTreeSet<usize>,
    pub writes: BTreeSet<usize>,
    /// The parameter reaches an `extern fn`.
    pub escapes: bool,
}

type Summaries = HashMap<(String, usize), ParamSummary>;

#[derive(Clone, Debug)]
enum VarKind {
    Record(Base, Option<LoopId>),
    Container,
    Other,
}

#[derive(Clone, Debug, Default)]
struct FnFacts {
    events: Vec<Event>,
    escapes: Vec<Escape>,
    /// Enclosing loops of every `return`.
    returns: Vec<(Vec<LoopId>, Span)>,
}

struct Walker<'a> {
    prog: &'a Program,
    func: &'a FunctionDef,
    summaries: &'a Summaries,
    scopes: Vec<Vec<(String, VarKind)>>,
    /// Containers claimed by enclosing `@soa_target` loops, innermost last.
    claims: Vec<(String, LoopId)>,
    loops: Vec<LoopId>,
    facts: FnFacts,
}

impl<'a> Walker<'a> {
    fn new(prog: &'a Program, func: &'a FunctionDef, summaries: &'a Summaries) -> Self {
        let params = func
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let k = match &p.ty {
                    Type::StructRef(_) => VarKind::Record(Base::StructParam(i), None),
                    Type::Container(..) => VarKind::Container,
                    _ => VarKind::Other,
                };
                (p.name.clone(), k)
            })
            .collect();
        Walker {
            prog,
            func,
            summaries,
            scopes: vec![params],
            claims: Vec::new(),
            loops: Vec::new(),
            facts: FnFacts::default(),
        }
    }

    fn lookup(&self, name: &str) -> Option<&VarKind> {
        self.scopes
            .iter()
            .rev()
            .flat_map(|s| s.iter().rev())
            .find(|(n, _)| n == name)
            .map(|(_, k)| k)
    }

    fn declare(&mut self, name: &str, k: VarKind) {
        self.scopes
            .last_mut()
            .expect("walker scope")
            .push((name.to_string(), k));
    }

    fn struct_of(&self, base: &Base) -> String {
        let pty = match base {
            Base::StructParam(i) => &self.func.params[*i].ty,
            Base::Container(c) => {
                &self
                    .func
                    .params
                    .iter()
                    .find(|p| &p.name == c)
                    .expect("container is a parameter")
                    .ty
            }
        };
        pty.struct_name().expect("struct-typed parameter").to_string()
    }

    /// Origin of a record-valued expression, if `e` is one.
    fn record(&mut self, e: &Expr) -> Option<(Base, Option<LoopId>)> {
        match &e.kind {
            ExprKind::Var(n) => match self.lookup(n) {
                Some(VarKind::Record(b, v)) => Some((b.clone(), *v)),
                _ => None,
            },
            ExprKind::Index { base, index } => {
                let ExprKind::Var(c) = &base.kind else {
                    return None;
                };
                if !matches!(self.lookup(c), Some(VarKind::Container)) {
                    return None;
                }
                self.expr(index);
                let view = self.claims.iter().rev().find(|(n, _)| n == c).map(|(_, id)| *id);
                Some((Base::Container(c.clone()), view))
            }
            _ => None,
        }
    }

    fn event(&mut self, base: &Base, view: Option<LoopId>, field: usize, access: Access, span: Span) {
        let strukt = self.struct_of(base);
        self.facts.events.push(Event {
            base: base.clone(),
            strukt,
            field,
            access,
            view,
            loops: self.loops.clone(),
            span,
        });
    }

    fn field_index(&self, base: &Base, field: &str) -> usize {
        let s = self.struct_of(base);
        self.prog
            .struct_def(&s)
            .and_then(|d| d.field_index(field))
            .expect("checked field")
    }

    /// Records the field accesses of a field expression `rec.f` used as an rvalue.
    fn field_expr(&mut self, base: &Expr, field: &str, span: Span, accesses: &[Access]) {
        match self.record(base) {
            Some((b, v)) => {
                let idx = self.field_index(&b, field);
                for &a in accesses {
                    self.event(&b, v, idx, a, span);
                }
            }
            None => self.expr(base),
        }
    }

    fn expr(&mut self, e: &Expr) {
        match &e.kind {
            ExprKind::Float(_) | ExprKind::Int(_) | ExprKind::Bool(_) | ExprKind::Var(_) => {}
            ExprKind::Field { base, field } => self.field_expr(base, field, e.span, &[Access::Read]),
            ExprKind::Index { base, index } => {
                // A bare record value only appears as a call argument; here it
                // is a buffer, vector or container index.
                if self.record(e).is_none() {
                    self.expr(base);
                    self.expr(index);
                }
            }
            ExprKind::Call { name, args } => self.call(name, args, e.span),
            ExprKind::Unary { expr, .. } => self.expr(expr),
            ExprKind::Binary { lhs, rhs, .. } => {
                self.expr(lhs);
                self.expr(rhs);
            }
            ExprKind::VecLit(items) => items.iter().for_each(|i| self.expr(i)),
        }
    }

    fn call(&mut self, name: &str, args: &[Expr], span: Span) {
        if is_intrinsic(name) {
            for a in args {
                // `len(c)` reads no record.
                if !matches!(&a.kind, ExprKind::Var(n) if matches!(self.lookup(n), Some(VarKind::Container))) {
                    self.expr(a);
                }
            }
            return;
        }
        let callee = self.prog.function(name).expect("checked call");
        for (j, a) in args.iter().enumerate() {
            let routed = match &a.kind {
                ExprKind::Var(n) if matches!(self.lookup(n), Some(VarKind::Container)) => {
                    // The callee reads and writes the records in place.
                    Some((Base::Container(n.clone()), None))
                }
                _ => self.record(a),
            };
            let Some((base, view)) = routed else {
                self.expr(a);
                continue;
            };
            if callee.is_extern() {
                self.facts.escapes.push(Escape {
                    base,
                    view,
                    callee: name.to_string(),
                    loops: self.loops.clone(),
                    span,
                });
                continue;
            }
            let s = self.summaries.get(&(name.to_string(), j)).cloned().unwrap_or_default();
            for f in &s.reads {
                self.event(&base, view, *f, Access::Read, span);
            }
            for f in &s.writes {
                self.event(&base, view, *f, Access::Write, span);
            }
            if s.escapes {
                self.facts.escapes.push(Escape {
                    base,
                    view,
                    callee: name.to_string(),
                    loops: self.loops.clone(),
                    span,
                });
            }
        }
    }

    fn block(&mut self, b: &Block) {
        self.scopes.push(Vec::new());
        for s in &b.stmts {
            self.stmt(s);
        }
        self.scopes.pop();
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Let { name, init, .. } => {
                self.expr(init);
                self.declare(name, VarKind::Other);
            }
            StmtKind::Assign { target, op, value } => {
                self.expr(value);
                let accesses: &[Access] = if *op == AssignOp::Set {
                    &[Access::Write]
                } else {
                    &[Access::Read, Access::Write]
                };
                match &target.kind {
                    ExprKind::Field { base, field } => self.field_expr(base, field, target.span, accesses),
                    ExprKind::Index { base, index } => {
                        self.expr(index);
                        match &base.kind {
                            // Element of a vector field: a partial write.
                            ExprKind::Field { base: rec, field } => self.field_expr(rec, field, target.span, accesses),
                            _ => self.expr(base),
                        }
                    }
                    _ => {}
                }
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                self.expr(cond);
                self.block(then_block);
                if let Some(e) = else_block {
                    self.block(e);
                }
            }
            StmtKind::For(l) => self.for_loop(l),
            StmtKind::Expr(e) => self.expr(e),
            StmtKind::Return(v) => {
                if let Some(e) = v {
                    self.expr(e);
                }
                self.facts.returns.push((self.loops.clone(), s.span));
            }
            StmtKind::AssumeDisjoint(..) | StmtKind::Free(_) => {}
        }
    }

    fn for_loop(&mut self, l: &ForLoop) {
        let id = l.span.offset;
        let view = l.annotation.is_conversion().then_some(id);
        let binder = match &l.range {
            LoopRange::Container(c) => VarKind::Record(Base::Container(c.clone()), view),
            LoopRange::Range { start, end } => {
                self.expr(start);
                self.expr(end);
                VarKind::Other
            }
        };
        let claimed = match (&l.target, view) {
            (Some(c), Some(id)) => {
                self.claims.push((c.clone(), id));
                true
            }
            _ => false,
        };
        self.loops.push(id);
        self.scopes.push(Vec::new());
        self.declare(&l.binder, binder);
        self.block(&l.body);
        self.scopes.pop();
        self.loops.pop();
        if claimed {
            self.claims.pop();
        }
    }
}

fn walk_function(prog: &Program, f: &FunctionDef, summaries: &Summaries) -> FnFacts {
    let mut w = Walker::new(prog, f, summaries);
    if let Some(b) = &f.body {
        w.block(b);
    }
    w.facts
}

fn param_index(f: &FunctionDef, base: &Base) -> usize {
    match base {
        Base::StructParam(i) => *i,
        Base::Container(c) => f
            .params
            .iter()
            .position(|p| &p.name == c)
            .expect("container is a parameter"),
    }
}

/// Per-(function, parameter) summaries, iterated until no set grows.
pub fn summarize(prog: &Program) -> Summaries {
    let mut summaries = Summaries::new();
    loop {
        let mut next = Summaries::new();
        for f in prog.functions.iter().filter(|f| !f.is_extern()) {
            let facts = walk_function(prog, f, &summaries);
            for e in &facts.events {
                let s = next.entry((f.name.clone(), param_index(f, &e.base))).or_default();
                match e.access {
                    Access::Read => s.reads.insert(e.field),
                    Access::Write => s.writes.insert(e.field),
                };
            }
            for e in &facts.escapes {
                next.entry((f.name.clone(), param_index(f, &e.base)))
                    .or_default()
                    .escapes = true;
            }
        }
        if next == summaries {
            return summaries;
        }
        summaries = next;
    }
}

/// Facts about one annotated loop.
#[derive(Clone, Debug)]
pub struct LoopInfo {
    pub id: LoopId,
    pub function: String,
    pub span: Span,
    pub container: String,
    pub container_kind: ContainerKind,
    /// `@soa_target` loop over an index range rather than the container itself.
    pub indexed: bool,
    pub annotation: Annotation,
    pub sets: AccessSets,
    /// Fields assigned as a whole by a top-level statement of the body, so every
    /// iteration defines them.
    pub must_write: Vec<String>,
    /// Enclosing loops (annotated or not) within the function, outermost first.
    pub enclosing: Vec<LoopId>,
}

impl LoopInfo {
    pub fn hoist_depth(&self) -> u32 {
        self.annotation.hoist_depth()
    }

    pub fn offload(&self) -> bool {
        self.annotation == Annotation::Offload
    }
}

/// Union of the sets of all annotated loops of a function over one struct.
#[derive(Clone, Debug)]
pub struct KernelSummary {
    pub function: String,
    pub sets: AccessSets,
    pub loops: usize,
}

#[derive(Clone, Debug)]
pub struct Analysis {
    pub loops: Vec<LoopInfo>,
    pub kernels: Vec<KernelSummary>,
    facts: HashMap<String, FnFacts>,
    disjoint: HashMap<String, HashSet<(String, String)>>,
}

fn must_write(l: &ForLoop, def: &StructDef) -> Vec<String> {
    if !matches!(l.range, LoopRange::Container(_)) {
        return Vec::new();
    }
    let mut out = BTreeSet::new();
    for s in &l.body.stmts {
        if let StmtKind::Assign {
            target,
            op: AssignOp::Set,
            ..
        } = &s.kind
        {
            if let ExprKind::Field { base, field } = &target.kind {
                if matches!(&base.kind, ExprKind::Var(n) if *n == l.binder) {
                    if let Some(i) = def.field_index(field) {
                        out.insert(i);
                    }
                }
            }
        }
    }
    out.into_iter().map(|i| def.fields[i].name.clone()).collect()
}

pub(crate) fn disjoint_pairs(b: &Block, out: &mut HashSet<(String, String)>) {
    for s in &b.stmts {
        match &s.kind {
            StmtKind::AssumeDisjoint(a, c) => {
                out.insert((a.clone(), c.clone()));
                out.insert((c.clone(), a.clone()));
            }
            StmtKind::If {
                then_block, else_block, ..
            } => {
                disjoint_pairs(then_block, out);
                if let Some(e) = else_block {
                    disjoint_pairs(e, out);
                }
            }
            StmtKind::For(l) => disjoint_pairs(&l.body, out),
            _ => {}
        }
    }
}

fn field_list(def: &StructDef, idx: &BTreeSet<usize>) -> String {
    idx.iter()
        .map(|&i| def.fields[i].name.as_str())
        .collect::<Vec<_>>()
        .join(",")
}

/// Computes the access sets of every annotated loop. Fails on escapes and on
/// `return` inside converted code.
pub fn analyze_program(prog: &Program) -> Result<Analysis, CompileError> {
    let summaries = summarize(prog);
    let mut loops = Vec::new();
    let mut facts = HashMap::new();
    let mut disjoint = HashMap::new();
    for f in prog.functions.iter().filter(|f| !f.is_extern()) {
        let body = f.body.as_ref().expect("defined function");
        let ff = walk_function(prog, f, &summaries);
        let mut annotated = Vec::new();
        collect_annotated(body, &mut Vec::new(), &mut annotated);
        for (l, enclosing) in annotated {
            let id = l.span.offset;
            let container = l.container().expect("checked container").to_string();
            let (kind, strukt) = match f.params.iter().find(|p| p.name == container).map(|p| &p.ty) {
                Some(Type::Container(k, s)) => (*k, s.clone()),
                _ => {
                    return Err(CompileError::Unsupported {
                        span: l.span,
                        message: format!("container '{container}' must be a parameter"),
                    })
                }
            };
            let def = prog.struct_def(&strukt).expect("checked struct");
            if let Some(e) = ff.escapes.iter().find(|e| e.view == Some(id)) {
                return Err(CompileError::Escape {
                    span: e.span,
                    message: format!(
                        "element of '{container}' is passed to '{}', whose accesses are unknown",
                        e.callee
                    ),
                });
            }
            if let Some(e) = ff
                .escapes
                .iter()
                .find(|e| e.loops.contains(&id) && e.base == Base::Container(container.clone()))
            {
                return Err(CompileError::Escape {
                    span: e.span,
                    message: format!("records of '{container}' reach '{}' while its view is active", e.callee),
                });
            }
            let mut a_in = BTreeSet::new();
            let mut a_out = BTreeSet::new();
            for e in ff.events.iter().filter(|e| e.view == Some(id)) {
                match e.access {
                    Access::Read => a_in.insert(e.field),
                    Access::Write => a_out.insert(e.field),
                };
            }
            loops.push(LoopInfo {
                id,
                function: f.name.clone(),
                span: l.span,
                container,
                container_kind: kind,
                indexed: matches!(l.range, LoopRange::Range { .. }),
                annotation: l.annotation.clone(),
                sets: AccessSets::from_indices(def, &a_in, &a_out),
                must_write: must_write(l, def),
                enclosing,
            });
        }
        for l in loops.iter().filter(|l| l.function == f.name) {
            let region = match l.hoist_depth() as usize {
                0 => l.id,
                n => l.enclosing[l.enclosing.len() - n],
            };
            if let Some((_, span)) = ff.returns.iter().find(|(ls, _)| ls.contains(&region)) {
                return Err(CompileError::Unsupported {
                    span: *span,
                    message: "'return' inside a converted loop or its hoisted region".into(),
                });
            }
        }
        let mut pairs = HashSet::new();
        disjoint_pairs(body, &mut pairs);
        disjoint.insert(f.name.clone(), pairs);
        facts.insert(f.name.clone(), ff);
    }
    let mut kernels: Vec<KernelSummary> = Vec::new();
    for l in &loops {
        let def = prog.struct_def(&l.sets.strukt).expect("checked struct");
        match kernels
            .iter_mut()
            .find(|k| k.function == l.function && k.sets.strukt == l.sets.strukt)
        {
            Some(k) => {
                k.sets.union(&l.sets, def);
                k.loops += 1;
            }
            None => kernels.push(KernelSummary {
                function: l.function.clone(),
                sets: l.sets.clone(),
                loops: 1,
            }),
        }
    }
    Ok(Analysis {
        loops,
        kernels,
        facts,
        disjoint,
    })
}

fn collect_annotated<'a>(b: &'a Block, stack: &mut Vec<LoopId>, out: &mut Vec<(&'a ForLoop, Vec<LoopId>)>) {
    for s in &b.stmts {
        match &s.kind {
            StmtKind::For(l) => {
                if l.annotation.is_conversion() {
                    out.push((l, stack.clone()));
                }
                stack.push(l.span.offset);
                collect_annotated(&l.body, stack, out);
                stack.pop();
            }
            StmtKind::If {
                then_block, else_block, ..
            } => {
                collect_annotated(then_block, stack, out);
                if let Some(e) = else_block {
                    collect_annotated(e, stack, out);
                }
            }
            _ => {}
        }
    }
}

/// Accesses to a loop's struct that bypass its view, grouped by route.
struct Conflict {
    route: String,
    view: Option<LoopId>,
    reads: BTreeSet<usize>,
    writes: BTreeSet<usize>,
    conflict: BTreeSet<usize>,
    span: Span,
}

impl Analysis {
    pub fn loop_info(&self, id: LoopId) -> Option<&LoopInfo> {
        self.loops.iter().find(|l| l.id == id)
    }

    fn exempt(&self, function: &str, a: &str, base: &Base) -> bool {
        match base {
            Base::Container(c) => self
                .disjoint
                .get(function)
                .is_some_and(|d| d.contains(&(a.to_string(), c.clone()))),
            Base::StructParam(_) => false,
        }
    }

    /// Accesses selected by `inside` that conflict with `l`'s view: writes to any
    /// viewed field, or reads of a field the view writes.
    fn conflicts(&self, prog: &Program, l: &LoopInfo, inside: impl Fn(&[LoopId]) -> bool) -> Option<Conflict> {
        let def = prog.struct_def(&l.sets.strukt)?;
        let f = prog.function(&l.function)?;
        let facts = self.facts.get(&l.function)?;
        let viewed: BTreeSet<usize> = l.sets.touched(def).iter().filter_map(|n| def.field_index(n)).collect();
        let written: BTreeSet<usize> = l.sets.a_out.iter().filter_map(|n| def.field_index(n)).collect();
        let mut groups: BTreeMap<(Base, Option<LoopId>), Conflict> = BTreeMap::new();
        for e in &facts.events {
            if e.view == Some(l.id)
                || e.strukt != l.sets.strukt
                || !inside(&e.loops)
                || self.exempt(&l.function, &l.container, &e.base)
            {
                continue;
            }
            let route = match &e.base {
                Base::Container(c) => c.clone(),
                Base::StructParam(i) => f.params[*i].name.clone(),
            };
            let g = groups.entry((e.base.clone(), e.view)).or_insert_with(|| Conflict {
                route,
                view: e.view,
                reads: BTreeSet::new(),
                writes: BTreeSet::new(),
                conflict: BTreeSet::new(),
                span: e.span,
            });
            let hit = match e.access {
                Access::Read => {
                    g.reads.insert(e.field);
                    written.contains(&e.field)
                }
                Access::Write => {
                    g.writes.insert(e.field);
                    viewed.contains(&e.field)
                }
            };
            if hit {
                if g.conflict.is_empty() {
                    g.span = e.span;
                }
                g.conflict.insert(e.field);
            }
        }
        groups.into_values().find(|g| !g.conflict.is_empty())
    }

    /// Rejects accesses inside an annotated loop that may touch the same records
    /// as its view while disagreeing on written fields. Nested views are the
    /// common case; direct container indexing and `&S` parameters count too.
    pub fn check_aliasing(&self, prog: &Program) -> Result<(), CompileError> {
        for l in &self.loops {
            let def = prog.struct_def(&l.sets.strukt).expect("checked struct");
            if let Some(c) = self.conflicts(prog, l, |ls| ls.contains(&l.id)) {
                let idx =
                    |names: &[String]| -> BTreeSet<usize> { names.iter().filter_map(|n| def.field_index(n)).collect() };
                return Err(CompileError::AliasAmbiguity {
                    span: c.view.and_then(|v| self.loop_info(v)).map_or(c.span, |m| m.span),
                    detail: Box::new(AliasConflict {
                        outer: l.container.clone(),
                        inner: c.route,
                        outer_in: field_list(def, &idx(&l.sets.a_in)),
                        outer_out: field_list(def, &idx(&l.sets.a_out)),
                        inner_in: field_list(def, &c.reads),
                        inner_out: field_list(def, &c.writes),
                        conflict: field_list(def, &c.conflict),
                    }),
                });
            }
        }
        Ok(())
    }

    /// Rejects hoisting when code in the hoisted region but outside the loop
    /// touches records of the view in a way the hoisted copy would not see.
    pub fn check_hoist(&self, prog: &Program) -> Result<(), CompileError> {
        for l in self.loops.iter().filter(|l| l.hoist_depth() > 0) {
            let n = l.hoist_depth() as usize;
            let region = l.enclosing[l.enclosing.len() - n];
            let def = prog.struct_def(&l.sets.strukt).expect("checked struct");
            if let Some(c) = self.conflicts(prog, l, |ls| ls.contains(&region) && !ls.contains(&l.id)) {
                let verb = if c.writes.iter().any(|f| c.conflict.contains(f)) {
                    "writes"
                } else {
                    "reads"
                };
                return Err(CompileError::StaleView {
                    span: c.span,
                    message: format!(
                        "'{}' {verb} {{{}}} inside the region the view of '{}' is hoisted over",
                        c.route,
                        field_list(def, &c.conflict),
                        l.container
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Full analysis: access sets, then aliasing and hoist validity.
pub fn analyze(prog: &Program) -> Result<Analysis, CompileError> {
    let a = analyze_program(prog)?;
    a.check_aliasing(prog)?;
    a.check_hoist(prog)?;
    Ok(a)
}

/// Access sets of one annotated loop of `prog`.
pub fn analyze_loop(prog: &Program, l: &ForLoop) -> Result<AccessSets, CompileError> {
    let a = analyze_program(prog)?;
    a.loop_info(l.span.offset)
        .map(|i| i.sets.clone())
        .ok_or_else(|| CompileError::InternalInvariant("loop is not annotated".into()))
}
