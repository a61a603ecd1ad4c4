//! Rewrites annotated loops into gather / rewritten loop / scatter.
//!
//! For a loop `L` over container `c` with id `N`:
//!
//! ```text
//! let soa_n_N: i64 = len(c);
//! let f_N: buffer<T> = alloc(soa_n_N);        one per field in A_in ∪ A_out
//! for soa_i_N in 0..soa_n_N { f_N[soa_i_N] = c[soa_i_N].f; }   gathered fields
//! for soa_i_N in 0..soa_n_N { ...p.f → f_N[soa_i_N]... }       the original body
//! for soa_i_N in 0..soa_n_N { c[soa_i_N].f = f_N[soa_i_N]; }   A_out
//! free f_N;
//! ```
//!
//! A hoisted loop keeps only its main loop in place; its declarations, gather,
//! scatter and frees wrap the enclosing loop `n` levels up. Calls that receive
//! a view element are redirected to clones of the callee taking the view's
//! buffers and the element index.

use std::collections::{BTreeMap, HashMap, HashSet};

use crate::analysis::{self, Analysis, FieldClass, LoopId, LoopInfo};
use crate::ast::*;
use crate::error::CompileError;

/// Required alignment of every view buffer, in bytes.
pub const BUFFER_ALIGN: usize = 64;

/// Deterministic, injective name for a temporary derived from `base`.
pub fn mangle(base: &str, loop_id: LoopId) -> String {
    format!("{base}_{loop_id}")
}

/// One SoA buffer of a view.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewBuffer {
    pub field: String,
    pub name: String,
    pub ty: FieldType,
    /// Offset of the field inside the AoS record.
    pub offset: usize,
    pub size: usize,
    pub class: FieldClass,
    pub dir: MapDir,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewPlan {
    pub loop_id: LoopId,
    pub container: String,
    pub container_kind: ContainerKind,
    pub strukt: String,
    /// Copied into the buffers before the loop: A_in, plus written fields
    /// whose slots the loop may leave unassigned.
    pub gather_fields: Vec<String>,
    /// Allocated without a copy; every iteration assigns them.
    pub alloc_only_fields: Vec<String>,
    /// Copied back after the loop: A_out.
    pub scatter_fields: Vec<String>,
    /// All buffers in declaration order of the struct.
    pub buffers: Vec<ViewBuffer>,
    pub alignment: usize,
    pub hoist_depth: u32,
    pub offload: bool,
    pub index_var: String,
    pub len_var: String,
}

impl ViewPlan {
    pub fn buffer(&self, field: &str) -> Option<&ViewBuffer> {
        self.buffers.iter().find(|b| b.field == field)
    }
}

/// Builds the materialisation recipe of one analyzed loop, named with `id`.
pub fn plan_view(info: &LoopInfo, prog: &Program, id: LoopId) -> ViewPlan {
    let def = prog.struct_def(&info.sets.strukt).expect("analyzed struct");
    let sets = &info.sets;
    // Slots of a write-only field are undefined unless every iteration of a
    // full container sweep assigns them; a hoisted loop may run zero times.
    let defined = |f: &str| !info.indexed && info.hoist_depth() == 0 && info.must_write.iter().any(|m| m == f);
    let mut gather = Vec::new();
    let mut alloc_only = Vec::new();
    let mut buffers = Vec::new();
    for (field, class) in sets.classification(def) {
        let fd = def.field(&field).expect("struct field");
        let preserved = class == FieldClass::WriteOnly && !defined(&field);
        if class == FieldClass::WriteOnly && !preserved {
            alloc_only.push(field.clone());
        } else {
            gather.push(field.clone());
        }
        buffers.push(ViewBuffer {
            name: mangle(&field, id),
            field,
            ty: fd.ty,
            offset: fd.offset,
            size: fd.size(),
            class,
            dir: if preserved { MapDir::ToFrom } else { class.map_dir() },
        });
    }
    ViewPlan {
        loop_id: id,
        container: info.container.clone(),
        container_kind: info.container_kind,
        strukt: def.name.clone(),
        gather_fields: gather,
        alloc_only_fields: alloc_only,
        scatter_fields: sets.a_out.clone(),
        buffers,
        alignment: BUFFER_ALIGN,
        hoist_depth: info.hoist_depth(),
        offload: info.offload(),
        index_var: mangle("soa_i", id),
        len_var: mangle("soa_n", id),
    }
}

fn collect_names(prog: &Program) -> HashSet<String> {
    fn expr(e: &Expr, out: &mut HashSet<String>) {
        match &e.kind {
            ExprKind::Var(n) => {
                out.insert(n.clone());
            }
            ExprKind::Field { base, .. } => expr(base, out),
            ExprKind::Index { base, index } => {
                expr(base, out);
                expr(index, out);
            }
            ExprKind::Call { name, args } => {
                out.insert(name.clone());
                args.iter().for_each(|a| expr(a, out));
            }
            ExprKind::Unary { expr: i, .. } => expr(i, out),
            ExprKind::Binary { lhs, rhs, .. } => {
                expr(lhs, out);
                expr(rhs, out);
            }
            ExprKind::VecLit(items) => items.iter().for_each(|a| expr(a, out)),
            _ => {}
        }
    }
    fn block(b: &Block, out: &mut HashSet<String>) {
        for s in &b.stmts {
            match &s.kind {
                StmtKind::Let { name, init, .. } => {
                    out.insert(name.clone());
                    expr(init, out);
                }
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
                    block(then_block, out);
                    if let Some(e) = else_block {
                        block(e, out);
                    }
                }
                StmtKind::For(l) => {
                    out.insert(l.binder.clone());
                    if let LoopRange::Range { start, end } = &l.range {
                        expr(start, out);
                        expr(end, out);
                    }
                    block(&l.body, out);
                }
                StmtKind::Expr(e) => expr(e, out),
                StmtKind::Return(Some(e)) => expr(e, out),
                StmtKind::Free(n) => {
                    out.insert(n.clone());
                }
                StmtKind::Return(None) | StmtKind::AssumeDisjoint(..) => {}
            }
        }
    }
    let mut out = HashSet::new();
    for f in &prog.functions {
        out.insert(f.name.clone());
        for p in &f.params {
            out.insert(p.name.clone());
        }
        if let Some(b) = &f.body {
            block(b, &mut out);
        }
    }
    out
}

/// Assigns each annotated loop a name id: its source offset, moved past any id
/// whose temporaries would collide with an existing identifier.
fn assign_ids(prog: &Program, a: &Analysis) -> HashMap<LoopId, LoopId> {
    let names = collect_names(prog);
    let mut used = HashSet::new();
    let mut out = HashMap::new();
    for l in &a.loops {
        let def = prog.struct_def(&l.sets.strukt).expect("analyzed struct");
        let mut id = l.id;
        loop {
            let clash = used.contains(&id)
                || def
                    .fields
                    .iter()
                    .map(|f| f.name.as_str())
                    .chain(prog.functions.iter().map(|f| f.name.as_str()))
                    .chain(["soa_i", "soa_n"])
                    .any(|b| names.contains(&mangle(b, id)));
            if !clash {
                break;
            }
            id += 1;
        }
        used.insert(id);
        out.insert(l.id, id);
    }
    out
}

fn var(name: &str, span: Span) -> Expr {
    Expr::var(name, span)
}

fn stmt(kind: StmtKind, span: Span) -> Stmt {
    Stmt { kind, span }
}

fn int(v: i64, span: Span) -> Expr {
    Expr::new(ExprKind::Int(v), span)
}

fn range_loop(index: &str, len: &str, body: Vec<Stmt>, annotation: Annotation, span: Span) -> Stmt {
    stmt(
        StmtKind::For(ForLoop {
            annotation,
            target: None,
            binder: index.to_string(),
            range: LoopRange::Range {
                start: int(0, span),
                end: var(len, span),
            },
            body: Block { stmts: body },
            span,
        }),
        span,
    )
}

/// Declarations plus gather loop.
fn prologue(plan: &ViewPlan, span: Span) -> Vec<Stmt> {
    let mut out = vec![stmt(
        StmtKind::Let {
            name: plan.len_var.clone(),
            ty: Some(Type::Scalar(ScalarKind::I64)),
            init: Expr::call("len", vec![var(&plan.container, span)], span),
        },
        span,
    )];
    for b in &plan.buffers {
        out.push(stmt(
            StmtKind::Let {
                name: b.name.clone(),
                ty: Some(Type::Buffer(b.ty)),
                init: Expr::call("alloc", vec![var(&plan.len_var, span)], span),
            },
            span,
        ));
    }
    let copies: Vec<Stmt> = plan
        .gather_fields
        .iter()
        .map(|f| {
            let b = plan.buffer(f).expect("gathered field has a buffer");
            let elem = Expr::index(var(&plan.container, span), var(&plan.index_var, span));
            stmt(
                StmtKind::Assign {
                    target: Expr::index(var(&b.name, span), var(&plan.index_var, span)),
                    op: AssignOp::Set,
                    value: Expr::field(elem, f),
                },
                span,
            )
        })
        .collect();
    if !copies.is_empty() {
        out.push(range_loop(
            &plan.index_var,
            &plan.len_var,
            copies,
            Annotation::None,
            span,
        ));
    }
    out
}

/// Scatter loop plus frees.
fn epilogue(plan: &ViewPlan, span: Span) -> Vec<Stmt> {
    let mut out = Vec::new();
    let copies: Vec<Stmt> = plan
        .scatter_fields
        .iter()
        .map(|f| {
            let b = plan.buffer(f).expect("scattered field has a buffer");
            let elem = Expr::index(var(&plan.container, span), var(&plan.index_var, span));
            stmt(
                StmtKind::Assign {
                    target: Expr::field(elem, f),
                    op: AssignOp::Set,
                    value: Expr::index(var(&b.name, span), var(&plan.index_var, span)),
                },
                span,
            )
        })
        .collect();
    if !copies.is_empty() {
        out.push(range_loop(
            &plan.index_var,
            &plan.len_var,
            copies,
            Annotation::None,
            span,
        ));
    }
    for b in &plan.buffers {
        out.push(stmt(StmtKind::Free(b.name.clone()), span));
    }
    out
}

/// Clone request: callee plus, per parameter, the view bound to it.
type SpecKey = (String, Vec<Option<LoopId>>);

#[derive(Clone, Debug)]
enum Binding {
    /// Element of the view with this name id.
    View(LoopId),
    Container,
    Other,
}

struct Rewriter<'a> {
    prog: &'a Program,
    /// Plans by name id.
    plans: &'a BTreeMap<LoopId, ViewPlan>,
    /// Source loop id → name id.
    ids: &'a HashMap<LoopId, LoopId>,
    /// Host loop (source id) → hoisted plans it wraps, outermost first.
    hosted: &'a HashMap<LoopId, Vec<LoopId>>,
    scopes: Vec<Vec<(String, Binding)>>,
    /// Container → view of the innermost enclosing `@soa_target` loop.
    claims: Vec<(String, LoopId)>,
    /// Callee clones still to be produced.
    requests: Vec<SpecKey>,
    /// Set while re-walking rewritten callees: views are already materialised.
    cloning: bool,
}

fn param_binding(p: &Param) -> (String, Binding) {
    let b = match p.ty {
        Type::Container(..) => Binding::Container,
        _ => Binding::Other,
    };
    (p.name.clone(), b)
}

fn spec_name(key: &SpecKey) -> String {
    key.1.iter().flatten().fold(key.0.clone(), |n, id| mangle(&n, *id))
}

impl<'a> Rewriter<'a> {
    fn lookup(&self, name: &str) -> Option<&Binding> {
        self.scopes
            .iter()
            .rev()
            .flat_map(|s| s.iter().rev())
            .find(|(n, _)| n == name)
            .map(|(_, b)| b)
    }

    fn declare(&mut self, name: &str, b: Binding) {
        self.scopes
            .last_mut()
            .expect("rewriter scope")
            .push((name.to_string(), b));
    }

    /// View and index expression of a record expression that denotes a view
    /// element.
    fn view_element(&mut self, e: &Expr) -> Result<Option<(LoopId, Expr)>, CompileError> {
        match &e.kind {
            ExprKind::Var(n) => match self.lookup(n) {
                Some(Binding::View(id)) => {
                    let plan = &self.plans[id];
                    Ok(Some((*id, var(&plan.index_var, e.span))))
                }
                _ => Ok(None),
            },
            ExprKind::Index { base, index } => {
                let ExprKind::Var(c) = &base.kind else {
                    return Ok(None);
                };
                if !matches!(self.lookup(c), Some(Binding::Container)) {
                    return Ok(None);
                }
                let claim = self.claims.iter().rev().find(|(n, _)| n == c).map(|(_, id)| *id);
                match claim {
                    Some(id) => {
                        let idx = self.expr(index)?;
                        Ok(Some((id, idx)))
                    }
                    None => Ok(None),
                }
            }
            _ => Ok(None),
        }
    }

    fn expr(&mut self, e: &Expr) -> Result<Expr, CompileError> {
        let span = e.span;
        let kind = match &e.kind {
            ExprKind::Var(n) => {
                if let Some(Binding::View(_)) = self.lookup(n) {
                    return Err(CompileError::InternalInvariant(format!(
                        "view element '{n}' used outside a field access or call at {span}"
                    )));
                }
                e.kind.clone()
            }
            ExprKind::Field { base, field } => {
                if let Some((id, idx)) = self.view_element(base)? {
                    let plan = &self.plans[&id];
                    let b = plan.buffer(field).ok_or_else(|| {
                        CompileError::InternalInvariant(format!(
                            "field '{field}' accessed through view {id} has no buffer"
                        ))
                    })?;
                    return Ok(Expr::index(var(&b.name, span), idx));
                }
                ExprKind::Field {
                    base: Box::new(self.expr(base)?),
                    field: field.clone(),
                }
            }
            ExprKind::Index { base, index } => ExprKind::Index {
                base: Box::new(self.expr(base)?),
                index: Box::new(self.expr(index)?),
            },
            ExprKind::Call { name, args } => return self.call(name, args, span),
            ExprKind::Unary { op, expr } => ExprKind::Unary {
                op: *op,
                expr: Box::new(self.expr(expr)?),
            },
            ExprKind::Binary { op, lhs, rhs } => ExprKind::Binary {
                op: *op,
                lhs: Box::new(self.expr(lhs)?),
                rhs: Box::new(self.expr(rhs)?),
            },
            ExprKind::VecLit(items) => ExprKind::VecLit(items.iter().map(|i| self.expr(i)).collect::<Result<_, _>>()?),
            ExprKind::Float(_) | ExprKind::Int(_) | ExprKind::Bool(_) => e.kind.clone(),
        };
        Ok(Expr::new(kind, span))
    }

    fn call(&mut self, name: &str, args: &[Expr], span: Span) -> Result<Expr, CompileError> {
        let mut plain = Vec::new();
        let mut bound = Vec::new();
        let mut views = Vec::new();
        let is_user = self.prog.function(name).is_some_and(|f| !f.is_extern());
        for a in args {
            match self.view_element(a)? {
                Some((id, idx)) if is_user => {
                    if views.contains(&Some(id)) {
                        return Err(CompileError::Unsupported {
                            span,
                            message: format!("two elements of one view passed to '{name}'"),
                        });
                    }
                    views.push(Some(id));
                    bound.push((id, idx));
                }
                Some(_) => {
                    return Err(CompileError::InternalInvariant(format!(
                        "view element escapes to '{name}' at {span}"
                    )))
                }
                None => {
                    views.push(None);
                    plain.push(self.expr(a)?);
                }
            }
        }
        if bound.is_empty() {
            return Ok(Expr::call(name, plain, span));
        }
        let key = (name.to_string(), views);
        let callee = spec_name(&key);
        if !self.requests.contains(&key) {
            self.requests.push(key);
        }
        for (id, idx) in bound {
            let plan = &self.plans[&id];
            plain.extend(plan.buffers.iter().map(|b| var(&b.name, span)));
            plain.push(idx);
        }
        Ok(Expr::call(callee, plain, span))
    }

    fn block(&mut self, b: &Block) -> Result<Block, CompileError> {
        self.scopes.push(Vec::new());
        let mut stmts = Vec::new();
        for s in &b.stmts {
            self.stmt(s, &mut stmts)?;
        }
        self.scopes.pop();
        Ok(Block { stmts })
    }

    fn stmt(&mut self, s: &Stmt, out: &mut Vec<Stmt>) -> Result<(), CompileError> {
        let kind = match &s.kind {
            StmtKind::Let { name, ty, init } => {
                let init = self.expr(init)?;
                self.declare(name, Binding::Other);
                StmtKind::Let {
                    name: name.clone(),
                    ty: ty.clone(),
                    init,
                }
            }
            StmtKind::Assign { target, op, value } => StmtKind::Assign {
                target: self.expr(target)?,
                op: *op,
                value: self.expr(value)?,
            },
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => StmtKind::If {
                cond: self.expr(cond)?,
                then_block: self.block(then_block)?,
                else_block: else_block.as_ref().map(|e| self.block(e)).transpose()?,
            },
            StmtKind::For(l) => return self.for_loop(l, out),
            StmtKind::Expr(e) => StmtKind::Expr(self.expr(e)?),
            StmtKind::Return(v) => StmtKind::Return(v.as_ref().map(|e| self.expr(e)).transpose()?),
            // The assertion has been consumed by the analysis.
            StmtKind::AssumeDisjoint(..) => return Ok(()),
            StmtKind::Free(_) => s.kind.clone(),
        };
        out.push(stmt(kind, s.span));
        Ok(())
    }

    fn for_loop(&mut self, l: &ForLoop, out: &mut Vec<Stmt>) -> Result<(), CompileError> {
        let src_id = l.span.offset;
        let span = l.span;
        let view =
            if l.annotation.is_conversion() {
                Some(*self.ids.get(&src_id).ok_or_else(|| {
                    CompileError::InternalInvariant(format!("annotated loop at {span} was not analyzed"))
                })?)
            } else {
                None
            };
        self.scopes.push(Vec::new());
        let range = match &l.range {
            LoopRange::Range { start, end } => LoopRange::Range {
                start: self.expr(start)?,
                end: self.expr(end)?,
            },
            r @ LoopRange::Container(_) => r.clone(),
        };
        let claimed = match (&l.target, view) {
            (Some(c), Some(id)) => {
                self.claims.push((c.clone(), id));
                true
            }
            _ => false,
        };
        match (&l.range, view) {
            (LoopRange::Container(_), Some(id)) => self.declare(&l.binder, Binding::View(id)),
            _ => self.declare(&l.binder, Binding::Other),
        }
        let body = self.block(&l.body)?;
        if claimed {
            self.claims.pop();
        }
        self.scopes.pop();

        let main = match view {
            None => stmt(
                StmtKind::For(ForLoop {
                    annotation: l.annotation.clone(),
                    target: None,
                    binder: l.binder.clone(),
                    range,
                    body,
                    span,
                }),
                span,
            ),
            Some(id) => {
                let plan = &self.plans[&id];
                let annotation = if plan.offload {
                    Annotation::Target(self.map_clauses(plan, &body))
                } else {
                    Annotation::None
                };
                match range {
                    LoopRange::Container(_) => range_loop(&plan.index_var, &plan.len_var, body.stmts, annotation, span),
                    range @ LoopRange::Range { .. } => stmt(
                        StmtKind::For(ForLoop {
                            annotation,
                            target: None,
                            binder: l.binder.clone(),
                            range,
                            body,
                            span,
                        }),
                        span,
                    ),
                }
            }
        };

        // Views materialised around this statement, outermost first.
        let mut wrap: Vec<&ViewPlan> = Vec::new();
        if let Some(id) = view {
            let plan = &self.plans[&id];
            if plan.hoist_depth == 0 {
                wrap.push(plan);
            }
        }
        if let Some(h) = self.hosted.get(&src_id).filter(|_| !self.cloning) {
            wrap.extend(h.iter().map(|id| &self.plans[id]));
        }
        for p in &wrap {
            out.extend(prologue(p, span));
        }
        out.push(main);
        for p in wrap.iter().rev() {
            out.extend(epilogue(p, span));
        }
        Ok(())
    }

    /// Map clauses for an offloaded loop: its own buffers, then buffers of
    /// other views that live outside the loop but are used inside it.
    fn map_clauses(&self, plan: &ViewPlan, body: &Block) -> Vec<MapClause> {
        let mut out: Vec<MapClause> = plan
            .buffers
            .iter()
            .map(|b| MapClause {
                dir: b.dir,
                buffer: b.name.clone(),
                len: plan.len_var.clone(),
            })
            .collect();
        let mut used = HashSet::new();
        let mut declared = HashSet::new();
        buffer_uses(body, &mut used, &mut declared);
        for other in self.plans.values().filter(|p| p.loop_id != plan.loop_id) {
            for b in &other.buffers {
                if used.contains(&b.name) && !declared.contains(&b.name) {
                    out.push(MapClause {
                        dir: b.dir,
                        buffer: b.name.clone(),
                        len: other.len_var.clone(),
                    });
                }
            }
        }
        out
    }
}

fn buffer_uses(b: &Block, used: &mut HashSet<String>, declared: &mut HashSet<String>) {
    fn expr(e: &Expr, used: &mut HashSet<String>) {
        match &e.kind {
            ExprKind::Var(n) => {
                used.insert(n.clone());
            }
            ExprKind::Field { base, .. } => expr(base, used),
            ExprKind::Index { base, index } => {
                expr(base, used);
                expr(index, used);
            }
            ExprKind::Call { args, .. } => args.iter().for_each(|a| expr(a, used)),
            ExprKind::Unary { expr: i, .. } => expr(i, used),
            ExprKind::Binary { lhs, rhs, .. } => {
                expr(lhs, used);
                expr(rhs, used);
            }
            ExprKind::VecLit(items) => items.iter().for_each(|a| expr(a, used)),
            _ => {}
        }
    }
    for s in &b.stmts {
        match &s.kind {
            StmtKind::Let { name, init, .. } => {
                declared.insert(name.clone());
                expr(init, used);
            }
            StmtKind::Assign { target, value, .. } => {
                expr(target, used);
                expr(value, used);
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                expr(cond, used);
                buffer_uses(then_block, used, declared);
                if let Some(e) = else_block {
                    buffer_uses(e, used, declared);
                }
            }
            StmtKind::For(l) => {
                if let LoopRange::Range { start, end } = &l.range {
                    expr(start, used);
                    expr(end, used);
                }
                buffer_uses(&l.body, used, declared);
            }
            StmtKind::Expr(e) | StmtKind::Return(Some(e)) => expr(e, used),
            _ => {}
        }
    }
}

/// Result of the rewrite with the plans that drove it.
#[derive(Clone, Debug)]
pub struct Rewritten {
    pub program: Program,
    /// Plans keyed by name id, in source order of the loops.
    pub plans: Vec<ViewPlan>,
}

/// Analyzes, checks and rewrites every annotated loop of `prog`.
pub fn rewrite(prog: &Program) -> Result<Program, CompileError> {
    let a = analysis::analyze(prog)?;
    rewrite_analyzed(prog, &a).map(|r| r.program)
}

/// Rewrites with a given analysis. The aliasing and hoist checks are the
/// caller's responsibility; skipping them can change program results.
pub fn rewrite_analyzed(prog: &Program, a: &Analysis) -> Result<Rewritten, CompileError> {
    if a.loops.is_empty() {
        return Ok(Rewritten {
            program: prog.clone(),
            plans: Vec::new(),
        });
    }
    let ids = assign_ids(prog, a);
    let mut plans = BTreeMap::new();
    let mut ordered = Vec::new();
    let mut hosted: HashMap<LoopId, Vec<LoopId>> = HashMap::new();
    for l in &a.loops {
        let id = ids[&l.id];
        let plan = plan_view(l, prog, id);
        ordered.push(plan.clone());
        plans.insert(id, plan);
        let n = l.hoist_depth() as usize;
        if n > 0 {
            hosted.entry(l.enclosing[l.enclosing.len() - n]).or_default().push(id);
        }
    }
    let mut rw = Rewriter {
        prog,
        plans: &plans,
        ids: &ids,
        hosted: &hosted,
        scopes: Vec::new(),
        claims: Vec::new(),
        requests: Vec::new(),
        cloning: false,
    };
    let mut functions = Vec::new();
    for f in &prog.functions {
        let body = match &f.body {
            None => None,
            Some(b) => {
                rw.scopes = vec![f.params.iter().map(param_binding).collect()];
                Some(rw.block(b)?)
            }
        };
        functions.push(FunctionDef { body, ..f.clone() });
    }

    // Clones for calls that receive view elements, cut from the rewritten
    // callees so their own views are already materialised.
    let rewritten = functions.clone();
    let mut done = 0;
    let mut emitted = HashSet::new();
    while done < rw.requests.len() {
        let key = rw.requests[done].clone();
        done += 1;
        let name = spec_name(&key);
        if !emitted.insert(name.clone()) {
            continue;
        }
        let orig = rewritten
            .iter()
            .find(|f| f.name == key.0)
            .ok_or_else(|| CompileError::InternalInvariant(format!("no callee '{}'", key.0)))?;
        let mut params = Vec::new();
        let mut scope = Vec::new();
        for (p, v) in orig.params.iter().zip(&key.1) {
            match v {
                None => {
                    params.push(p.clone());
                    scope.push(param_binding(p));
                }
                Some(id) => scope.push((p.name.clone(), Binding::View(*id))),
            }
        }
        for id in key.1.iter().flatten() {
            let plan = &plans[id];
            for b in &plan.buffers {
                params.push(Param {
                    name: b.name.clone(),
                    ty: Type::Buffer(b.ty),
                    span: orig.span,
                });
            }
            params.push(Param {
                name: plan.index_var.clone(),
                ty: Type::Scalar(ScalarKind::I64),
                span: orig.span,
            });
        }
        rw.scopes = vec![scope];
        rw.cloning = true;
        let body = orig.body.as_ref().map(|b| rw.block(b)).transpose()?;
        functions.push(FunctionDef {
            name,
            params,
            ret: orig.ret,
            body,
            span: orig.span,
        });
    }
    Ok(Rewritten {
        program: Program {
            structs: prog.structs.clone(),
            functions,
        },
        plans: ordered,
    })
}
