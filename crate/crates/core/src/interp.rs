//! Tree-walking reference interpreter.
//!
//! Records live in one pool per struct. A container is a list of pool
//! indices; a slice owns its records, a ptrlist refers to records of the pool
//! (`None` is a null reference). Record references remember the annotated loop
//! whose binder produced them, which attributes traced accesses to that loop.
//!
//! JSON form of the inputs, as read by [`inputs_from_json`]:
//!
//! ```text
//! { "pools": { "S": [ {"field": 1.0, "vec": [1.0, 2.0], ...}, ... ] },
//!   "args":  { "slice_param": [ {record}, ... ],
//!              "ptrlist_param": [ 0, 3, null ],
//!              "scalar_param": 0.5 } }
//! ```
//!
//! Missing record fields default to zero / false. Non-finite floats are
//! written as the strings `"NaN"`, `"inf"` and `"-inf"`.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::rc::Rc;

use serde_json::{json, Map, Value as Json};
use thiserror::Error;

use crate::analysis::{Access, LoopId};
use crate::ast::*;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum Trap {
    #[error("division by zero")]
    DivisionByZero,
    #[error("index {index} out of bounds for length {len}")]
    OutOfBounds { index: i64, len: usize },
    #[error("null reference in ptrlist")]
    NullReference,
    #[error("read of an unassigned buffer slot")]
    Uninitialized,
    #[error("use of freed buffer")]
    UseAfterFree,
    #[error("negative buffer length {0}")]
    NegativeLength(i64),
    #[error("call of extern function '{0}'")]
    ExternCall(String),
    #[error("'{0}' finished without returning a value")]
    MissingReturn(String),
    #[error("bad input: {0}")]
    BadInput(String),
}

/// Reference to a record: pool of its struct plus index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecRef {
    pub pool: usize,
    pub index: usize,
    /// Annotated loop whose view element this is.
    pub view: Option<LoopId>,
}

#[derive(Debug)]
pub struct BufferData {
    slots: Vec<Option<Value>>,
    freed: bool,
}

#[derive(Clone, Debug)]
pub enum Value {
    F64(f64),
    I64(i64),
    I32(i32),
    Bool(bool),
    Vector(Vec<f64>),
    Record(RecRef),
    Container { pool: usize, elems: Rc<Vec<Option<usize>>> },
    Buffer(Rc<RefCell<BufferData>>),
}

/// Floats compare by bit pattern, so equality is exact agreement.
impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::F64(a), Value::F64(b)) => a.to_bits() == b.to_bits(),
            (Value::I64(a), Value::I64(b)) => a == b,
            (Value::I32(a), Value::I32(b)) => a == b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Vector(a), Value::Vector(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (Value::Record(a), Value::Record(b)) => a.pool == b.pool && a.index == b.index,
            (Value::Container { pool: p, elems: a }, Value::Container { pool: q, elems: b }) => p == q && a == b,
            (Value::Buffer(a), Value::Buffer(b)) => Rc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl Value {
    pub fn zero(ty: FieldType) -> Value {
        match ty {
            FieldType::Scalar(ScalarKind::F64) => Value::F64(0.0),
            FieldType::Scalar(ScalarKind::I64) => Value::I64(0),
            FieldType::Scalar(ScalarKind::I32) => Value::I32(0),
            FieldType::Scalar(ScalarKind::Bool) => Value::Bool(false),
            FieldType::Vector(k) => Value::Vector(vec![0.0; k]),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::F64(v) => Some(*v),
            _ => None,
        }
    }

    fn as_int(&self) -> Option<i64> {
        match self {
            Value::I64(v) => Some(*v),
            Value::I32(v) => Some(*v as i64),
            _ => None,
        }
    }

    fn as_bool(&self) -> bool {
        matches!(self, Value::Bool(true))
    }
}

/// Literal integers are i64 until they meet an i32.
fn coerce(v: Value, ty: &Type) -> Value {
    match (v, ty) {
        (Value::I64(i), Type::Scalar(ScalarKind::I32)) => Value::I32(i as i32),
        (v, _) => v,
    }
}

pub type Record = Vec<Value>;

#[derive(Clone, Debug, PartialEq)]
pub enum Arg {
    Scalar(Value),
    Slice(Vec<Record>),
    PtrList(Vec<Option<usize>>),
}

/// Entry-point inputs: initial pool contents and arguments by parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Inputs {
    pub pools: BTreeMap<String, Vec<Record>>,
    pub args: BTreeMap<String, Arg>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outputs {
    /// Final contents of the input pools.
    pub pools: BTreeMap<String, Vec<Record>>,
    /// Final contents of slice arguments.
    pub slices: BTreeMap<String, Vec<Record>>,
    pub ret: Option<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub loop_id: LoopId,
    pub strukt: String,
    pub record: usize,
    pub field: String,
    pub access: Access,
}

/// Field accesses made through view elements of annotated loops.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn fields(&self, loop_id: LoopId, access: Access) -> BTreeSet<String> {
        self.events
            .iter()
            .filter(|e| e.loop_id == loop_id && e.access == access)
            .map(|e| e.field.clone())
            .collect()
    }

    pub fn loops(&self) -> BTreeSet<LoopId> {
        self.events.iter().map(|e| e.loop_id).collect()
    }
}

/// Write counters per buffer-slot store and per record-field store.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counters {
    pub record_stores: u64,
    pub buffer_stores: u64,
}

enum Flow {
    Normal,
    Return(Option<Value>),
}

enum Root {
    Local(usize),
    Field(RecRef, usize),
    Slot(Rc<RefCell<BufferData>>, usize),
}

struct Place {
    root: Root,
    elem: Option<usize>,
}

struct Frame {
    vars: Vec<(String, Value)>,
    marks: Vec<usize>,
}

struct Machine<'p> {
    prog: &'p Program,
    pool_structs: Vec<&'p StructDef>,
    pools: Vec<Vec<Record>>,
    frames: Vec<Frame>,
    claims: Vec<(String, LoopId)>,
    trace: Option<Vec<TraceEvent>>,
    counters: Counters,
}

type R<T> = Result<T, Trap>;

fn index_in(i: i64, len: usize) -> R<usize> {
    if i < 0 || i as u64 >= len as u64 {
        Err(Trap::OutOfBounds { index: i, len })
    } else {
        Ok(i as usize)
    }
}

impl<'p> Machine<'p> {
    fn new(prog: &'p Program) -> Self {
        Machine {
            prog,
            pool_structs: prog.structs.iter().collect(),
            pools: vec![Vec::new(); prog.structs.len()],
            frames: Vec::new(),
            claims: Vec::new(),
            trace: None,
            counters: Counters::default(),
        }
    }

    fn pool_of(&self, strukt: &str) -> R<usize> {
        self.pool_structs
            .iter()
            .position(|s| s.name == strukt)
            .ok_or_else(|| Trap::BadInput(format!("unknown struct '{strukt}'")))
    }

    fn frame(&mut self) -> &mut Frame {
        self.frames.last_mut().expect("active frame")
    }

    fn lookup(&self, name: &str) -> Option<usize> {
        let f = self.frames.last()?;
        f.vars.iter().rposition(|(n, _)| n == name)
    }

    fn get(&self, name: &str) -> &Value {
        let i = self.lookup(name).expect("checked variable");
        &self.frames.last().expect("frame").vars[i].1
    }

    fn declare(&mut self, name: &str, v: Value) {
        self.frame().vars.push((name.to_string(), v));
    }

    fn push_scope(&mut self) {
        let f = self.frame();
        let n = f.vars.len();
        f.marks.push(n);
    }

    fn pop_scope(&mut self) {
        let f = self.frame();
        let n = f.marks.pop().expect("scope mark");
        f.vars.truncate(n);
    }

    fn record_event(&mut self, r: RecRef, field: usize, access: Access) {
        if let (Some(t), Some(view)) = (&mut self.trace, r.view) {
            let def = self.pool_structs[r.pool];
            t.push(TraceEvent {
                loop_id: view,
                strukt: def.name.clone(),
                record: r.index,
                field: def.fields[field].name.clone(),
                access,
            });
        }
    }

    fn field_index(&self, r: RecRef, field: &str) -> usize {
        self.pool_structs[r.pool].field_index(field).expect("checked field")
    }

    fn record(&mut self, e: &Expr) -> R<RecRef> {
        match self.eval(e)? {
            Value::Record(r) => Ok(r),
            other => panic!("record expected, found {other:?}"),
        }
    }

    fn buffer_slot(b: &Rc<RefCell<BufferData>>, i: i64) -> R<Value> {
        let d = b.borrow();
        if d.freed {
            return Err(Trap::UseAfterFree);
        }
        let i = index_in(i, d.slots.len())?;
        d.slots[i].clone().ok_or(Trap::Uninitialized)
    }

    fn eval(&mut self, e: &Expr) -> R<Value> {
        match &e.kind {
            ExprKind::Float(v) => Ok(Value::F64(*v)),
            ExprKind::Int(v) => Ok(Value::I64(*v)),
            ExprKind::Bool(v) => Ok(Value::Bool(*v)),
            ExprKind::Var(n) => Ok(self.get(n).clone()),
            ExprKind::Field { base, field } => {
                let r = self.record(base)?;
                let fi = self.field_index(r, field);
                self.record_event(r, fi, Access::Read);
                Ok(self.pools[r.pool][r.index][fi].clone())
            }
            ExprKind::Index { base, index } => {
                let b = self.eval(base)?;
                let i = self.eval(index)?.as_int().expect("checked index");
                match b {
                    Value::Container { pool, elems } => {
                        let k = index_in(i, elems.len())?;
                        let index = elems[k].ok_or(Trap::NullReference)?;
                        let view = match &base.kind {
                            ExprKind::Var(c) => self.claims.iter().rev().find(|(n, _)| n == c).map(|(_, id)| *id),
                            _ => None,
                        };
                        Ok(Value::Record(RecRef { pool, index, view }))
                    }
                    Value::Buffer(buf) => Self::buffer_slot(&buf, i),
                    Value::Vector(v) => Ok(Value::F64(v[index_in(i, v.len())?])),
                    other => panic!("indexing {other:?}"),
                }
            }
            ExprKind::Call { name, args } => self.call(name, args),
            ExprKind::Unary { op, expr } => {
                let v = self.eval(expr)?;
                Ok(match (op, v) {
                    (UnOp::Neg, Value::F64(x)) => Value::F64(-x),
                    (UnOp::Neg, Value::I64(x)) => Value::I64(x.wrapping_neg()),
                    (UnOp::Neg, Value::I32(x)) => Value::I32(x.wrapping_neg()),
                    (UnOp::Not, Value::Bool(b)) => Value::Bool(!b),
                    (_, v) => panic!("unary operand {v:?}"),
                })
            }
            ExprKind::Binary { op, lhs, rhs } => {
                if matches!(op, BinOp::And | BinOp::Or) {
                    let l = self.eval(lhs)?.as_bool();
                    return match (op, l) {
                        (BinOp::And, false) => Ok(Value::Bool(false)),
                        (BinOp::Or, true) => Ok(Value::Bool(true)),
                        _ => Ok(Value::Bool(self.eval(rhs)?.as_bool())),
                    };
                }
                let l = self.eval(lhs)?;
                let r = self.eval(rhs)?;
                binary(*op, l, r)
            }
            ExprKind::VecLit(items) => {
                let mut v = Vec::with_capacity(items.len());
                for it in items {
                    v.push(self.eval(it)?.as_f64().expect("checked f64 element"));
                }
                Ok(Value::Vector(v))
            }
        }
    }

    fn call(&mut self, name: &str, args: &[Expr]) -> R<Value> {
        match name {
            "sqrt" | "abs" | "floor" => {
                let x = self.eval(&args[0])?;
                Ok(match (name, x) {
                    ("sqrt", Value::F64(x)) => Value::F64(x.sqrt()),
                    ("abs", Value::F64(x)) => Value::F64(x.abs()),
                    ("floor", Value::F64(x)) => Value::F64(x.floor()),
                    (_, v) => panic!("intrinsic operand {v:?}"),
                })
            }
            "min" | "max" => {
                let a = self.eval(&args[0])?;
                let b = self.eval(&args[1])?;
                let (a, b) = unify(a, b);
                // `a < b ? a : b`, matching the C backend.
                let pick_a = match (&a, &b) {
                    (Value::F64(x), Value::F64(y)) => {
                        if name == "min" {
                            x < y
                        } else {
                            x > y
                        }
                    }
                    _ => {
                        let (x, y) = (a.as_int().expect("int"), b.as_int().expect("int"));
                        if name == "min" {
                            x < y
                        } else {
                            x > y
                        }
                    }
                };
                Ok(if pick_a { a } else { b })
            }
            "len" => match self.eval(&args[0])? {
                Value::Container { elems, .. } => Ok(Value::I64(elems.len() as i64)),
                Value::Buffer(b) => {
                    let d = b.borrow();
                    if d.freed {
                        return Err(Trap::UseAfterFree);
                    }
                    Ok(Value::I64(d.slots.len() as i64))
                }
                v => panic!("len of {v:?}"),
            },
            "alloc" => {
                let n = self.eval(&args[0])?.as_int().expect("int length");
                if n < 0 {
                    return Err(Trap::NegativeLength(n));
                }
                Ok(Value::Buffer(Rc::new(RefCell::new(BufferData {
                    slots: vec![None; n as usize],
                    freed: false,
                }))))
            }
            _ => {
                let f = self.prog.function(name).expect("checked function");
                let mut vals = Vec::with_capacity(args.len());
                for (p, a) in f.params.iter().zip(args) {
                    vals.push(coerce(self.eval(a)?, &p.ty));
                }
                self.invoke(f, vals)
            }
        }
    }

    fn invoke(&mut self, f: &'p FunctionDef, args: Vec<Value>) -> R<Value> {
        let Some(body) = &f.body else {
            return Err(Trap::ExternCall(f.name.clone()));
        };
        let vars = f.params.iter().map(|p| p.name.clone()).zip(args).collect();
        self.frames.push(Frame {
            vars,
            marks: Vec::new(),
        });
        let saved_claims = std::mem::take(&mut self.claims);
        let flow = self.block(body);
        self.claims = saved_claims;
        self.frames.pop();
        match flow? {
            Flow::Return(Some(v)) => Ok(coerce(v, &Type::Scalar(f.ret.expect("checked return type")))),
            _ if f.ret.is_some() => Err(Trap::MissingReturn(f.name.clone())),
            _ => Ok(Value::Bool(false)),
        }
    }

    fn block(&mut self, b: &Block) -> R<Flow> {
        self.push_scope();
        let mut flow = Flow::Normal;
        for s in &b.stmts {
            match self.stmt(s) {
                Ok(Flow::Normal) => {}
                Ok(f) => {
                    flow = f;
                    break;
                }
                Err(e) => {
                    self.pop_scope();
                    return Err(e);
                }
            }
        }
        self.pop_scope();
        Ok(flow)
    }

    fn place(&mut self, e: &Expr) -> R<Place> {
        match &e.kind {
            ExprKind::Var(n) => Ok(Place {
                root: Root::Local(self.lookup(n).expect("checked variable")),
                elem: None,
            }),
            ExprKind::Field { base, field } => {
                let r = self.record(base)?;
                let fi = self.field_index(r, field);
                Ok(Place {
                    root: Root::Field(r, fi),
                    elem: None,
                })
            }
            ExprKind::Index { base, index } => {
                let i = self.eval(index)?.as_int().expect("checked index");
                // A vector element, or a buffer slot.
                let is_buffer = match &base.kind {
                    ExprKind::Var(n) => matches!(self.get(n), Value::Buffer(_)),
                    _ => false,
                };
                if is_buffer {
                    let ExprKind::Var(n) = &base.kind else { unreachable!() };
                    let Value::Buffer(b) = self.get(n).clone() else {
                        unreachable!()
                    };
                    let len = {
                        let d = b.borrow();
                        if d.freed {
                            return Err(Trap::UseAfterFree);
                        }
                        d.slots.len()
                    };
                    let k = index_in(i, len)?;
                    return Ok(Place {
                        root: Root::Slot(b, k),
                        elem: None,
                    });
                }
                let mut p = self.place(base)?;
                let len = match self.load_root(&p.root, false)? {
                    Value::Vector(v) => v.len(),
                    v => panic!("element of {v:?}"),
                };
                p.elem = Some(index_in(i, len)?);
                Ok(p)
            }
            _ => panic!("not a place"),
        }
    }

    fn load_root(&mut self, root: &Root, traced: bool) -> R<Value> {
        match root {
            Root::Local(i) => Ok(self.frames.last().expect("frame").vars[*i].1.clone()),
            Root::Field(r, fi) => {
                if traced {
                    self.record_event(*r, *fi, Access::Read);
                }
                Ok(self.pools[r.pool][r.index][*fi].clone())
            }
            Root::Slot(b, k) => Self::buffer_slot(b, *k as i64),
        }
    }

    fn load(&mut self, p: &Place) -> R<Value> {
        let v = self.load_root(&p.root, true)?;
        Ok(match (p.elem, v) {
            (Some(k), Value::Vector(v)) => Value::F64(v[k]),
            (_, v) => v,
        })
    }

    fn store(&mut self, p: &Place, v: Value) -> R<()> {
        let v = match p.elem {
            None => v,
            Some(k) => {
                let Value::Vector(mut whole) = self.load_root(&p.root, false)? else {
                    panic!("vector expected")
                };
                whole[k] = v.as_f64().expect("f64 element");
                Value::Vector(whole)
            }
        };
        match &p.root {
            Root::Local(i) => {
                let slot = &mut self.frame().vars[*i].1;
                *slot = match slot {
                    Value::I32(_) => coerce(v, &Type::Scalar(ScalarKind::I32)),
                    _ => v,
                };
            }
            Root::Field(r, fi) => {
                self.record_event(*r, *fi, Access::Write);
                self.counters.record_stores += 1;
                let ty = self.pool_structs[r.pool].fields[*fi].ty;
                self.pools[r.pool][r.index][*fi] = coerce(v, &Type::from_field(ty));
            }
            Root::Slot(b, k) => {
                self.counters.buffer_stores += 1;
                let mut d = b.borrow_mut();
                if d.freed {
                    return Err(Trap::UseAfterFree);
                }
                d.slots[*k] = Some(v);
            }
        }
        Ok(())
    }

    fn stmt(&mut self, s: &Stmt) -> R<Flow> {
        match &s.kind {
            StmtKind::Let { name, ty, init } => {
                let v = self.eval(init)?;
                let v = match ty {
                    Some(t) => coerce(v, t),
                    None => v,
                };
                self.declare(name, v);
            }
            StmtKind::Assign { target, op, value } => {
                let p = self.place(target)?;
                let v = self.eval(value)?;
                let v = match op.binary() {
                    None => v,
                    Some(b) => {
                        let old = self.load(&p)?;
                        binary(b, old, v)?
                    }
                };
                self.store(&p, v)?;
            }
            StmtKind::If {
                cond,
                then_block,
                else_block,
            } => {
                if self.eval(cond)?.as_bool() {
                    return self.block(then_block);
                } else if let Some(e) = else_block {
                    return self.block(e);
                }
            }
            StmtKind::For(l) => return self.for_loop(l),
            StmtKind::Expr(e) => {
                self.eval(e)?;
            }
            StmtKind::Return(v) => {
                let v = v.as_ref().map(|e| self.eval(e)).transpose()?;
                return Ok(Flow::Return(v));
            }
            StmtKind::AssumeDisjoint(..) => {}
            StmtKind::Free(n) => {
                if let Value::Buffer(b) = self.get(n) {
                    let mut d = b.borrow_mut();
                    if d.freed {
                        return Err(Trap::UseAfterFree);
                    }
                    d.freed = true;
                    d.slots = Vec::new();
                }
            }
        }
        Ok(Flow::Normal)
    }

    fn for_loop(&mut self, l: &ForLoop) -> R<Flow> {
        let view = l.annotation.is_conversion().then_some(l.span.offset);
        match &l.range {
            LoopRange::Range { start, end } => {
                let a = self.eval(start)?.as_int().expect("int bound");
                let b = self.eval(end)?.as_int().expect("int bound");
                let claimed = match (&l.target, view) {
                    (Some(c), Some(id)) => {
                        self.claims.push((c.clone(), id));
                        true
                    }
                    _ => false,
                };
                let mut result = Ok(Flow::Normal);
                for i in a..b {
                    self.push_scope();
                    self.declare(&l.binder, Value::I64(i));
                    let f = self.block(&l.body);
                    self.pop_scope();
                    match f {
                        Ok(Flow::Normal) => {}
                        other => {
                            result = other;
                            break;
                        }
                    }
                }
                if claimed {
                    self.claims.pop();
                }
                result
            }
            LoopRange::Container(c) => {
                let Value::Container { pool, elems } = self.get(c).clone() else {
                    panic!("container expected")
                };
                for e in elems.iter() {
                    let index = e.ok_or(Trap::NullReference)?;
                    self.push_scope();
                    self.declare(&l.binder, Value::Record(RecRef { pool, index, view }));
                    let f = self.block(&l.body);
                    self.pop_scope();
                    match f? {
                        Flow::Normal => {}
                        r => return Ok(r),
                    }
                }
                Ok(Flow::Normal)
            }
        }
    }
}

fn unify(a: Value, b: Value) -> (Value, Value) {
    match (a, b) {
        (Value::I32(x), Value::I64(y)) => (Value::I32(x), Value::I32(y as i32)),
        (Value::I64(x), Value::I32(y)) => (Value::I32(x as i32), Value::I32(y)),
        p => p,
    }
}

fn binary(op: BinOp, l: Value, r: Value) -> R<Value> {
    use BinOp::*;
    let (l, r) = unify(l, r);
    Ok(match (l, r) {
        (Value::F64(a), Value::F64(b)) => match op {
            Add => Value::F64(a + b),
            Sub => Value::F64(a - b),
            Mul => Value::F64(a * b),
            Div => {
                if b == 0.0 {
                    return Err(Trap::DivisionByZero);
                }
                Value::F64(a / b)
            }
            Eq => Value::Bool(a == b),
            Ne => Value::Bool(a != b),
            Lt => Value::Bool(a < b),
            Le => Value::Bool(a <= b),
            Gt => Value::Bool(a > b),
            Ge => Value::Bool(a >= b),
            Rem | And | Or => panic!("float operator {op:?}"),
        },
        (Value::I64(a), Value::I64(b)) => int_op(op, a, b, Value::I64)?,
        (Value::I32(a), Value::I32(b)) => {
            let v = int_op(op, a as i64, b as i64, Value::I64)?;
            match v {
                Value::I64(x) => Value::I32(x as i32),
                v => v,
            }
        }
        (Value::Bool(a), Value::Bool(b)) => match op {
            Eq => Value::Bool(a == b),
            Ne => Value::Bool(a != b),
            _ => panic!("bool operator {op:?}"),
        },
        (l, r) => panic!("operands {l:?} {op:?} {r:?}"),
    })
}

/// Integer arithmetic wraps; i32 operands are widened and truncated after.
fn int_op(op: BinOp, a: i64, b: i64, wrap: fn(i64) -> Value) -> R<Value> {
    use BinOp::*;
    Ok(match op {
        Add => wrap(a.wrapping_add(b)),
        Sub => wrap(a.wrapping_sub(b)),
        Mul => wrap(a.wrapping_mul(b)),
        Div | Rem => {
            if b == 0 {
                return Err(Trap::DivisionByZero);
            }
            wrap(if op == Div {
                a.wrapping_div(b)
            } else {
                a.wrapping_rem(b)
            })
        }
        Eq => Value::Bool(a == b),
        Ne => Value::Bool(a != b),
        Lt => Value::Bool(a < b),
        Le => Value::Bool(a <= b),
        Gt => Value::Bool(a > b),
        Ge => Value::Bool(a >= b),
        And | Or => panic!("logical operator on integers"),
    })
}

fn check_record(def: &StructDef, r: &Record) -> R<()> {
    if r.len() != def.fields.len() {
        return Err(Trap::BadInput(format!(
            "record of '{}' has {} fields, expected {}",
            def.name,
            r.len(),
            def.fields.len()
        )));
    }
    for (f, v) in def.fields.iter().zip(r) {
        let ok = matches!(
            (f.ty, v),
            (FieldType::Scalar(ScalarKind::F64), Value::F64(_))
                | (FieldType::Scalar(ScalarKind::I64), Value::I64(_))
                | (FieldType::Scalar(ScalarKind::I32), Value::I32(_))
                | (FieldType::Scalar(ScalarKind::Bool), Value::Bool(_))
        ) || matches!((f.ty, v), (FieldType::Vector(k), Value::Vector(x)) if x.len() == k);
        if !ok {
            return Err(Trap::BadInput(format!("field '{}.{}' holds {v:?}", def.name, f.name)));
        }
    }
    Ok(())
}

fn run(prog: &Program, entry: &str, inputs: &Inputs, traced: bool) -> R<(Outputs, Trace, Counters)> {
    let f = prog
        .function(entry)
        .ok_or_else(|| Trap::BadInput(format!("no function '{entry}'")))?;
    let mut m = Machine::new(prog);
    if traced {
        m.trace = Some(Vec::new());
    }
    let mut pool_lens = BTreeMap::new();
    for (s, recs) in &inputs.pools {
        let pool = m.pool_of(s)?;
        for r in recs {
            check_record(m.pool_structs[pool], r)?;
        }
        m.pools[pool] = recs.clone();
        pool_lens.insert(s.clone(), recs.len());
    }
    let mut args = Vec::new();
    let mut slices = Vec::new();
    for p in &f.params {
        let a = inputs
            .args
            .get(&p.name)
            .ok_or_else(|| Trap::BadInput(format!("missing argument '{}'", p.name)))?;
        let v = match (&p.ty, a) {
            (Type::Container(ContainerKind::Slice, s), Arg::Slice(recs)) => {
                let pool = m.pool_of(s)?;
                let start = m.pools[pool].len();
                for r in recs {
                    check_record(m.pool_structs[pool], r)?;
                    m.pools[pool].push(r.clone());
                }
                let idx: Vec<Option<usize>> = (start..start + recs.len()).map(Some).collect();
                slices.push((p.name.clone(), pool, start, recs.len()));
                Value::Container {
                    pool,
                    elems: Rc::new(idx),
                }
            }
            (Type::Container(ContainerKind::PtrList, s), Arg::PtrList(ix)) => {
                let pool = m.pool_of(s)?;
                let n = pool_lens.get(s).copied().unwrap_or(0);
                if let Some(bad) = ix.iter().flatten().find(|&&i| i >= n) {
                    return Err(Trap::BadInput(format!(
                        "'{}' refers to record {bad} of a pool of {n}",
                        p.name
                    )));
                }
                Value::Container {
                    pool,
                    elems: Rc::new(ix.clone()),
                }
            }
            (Type::Scalar(k), Arg::Scalar(v)) => {
                let v = coerce(v.clone(), &p.ty);
                let ok = matches!(
                    (k, &v),
                    (ScalarKind::F64, Value::F64(_))
                        | (ScalarKind::I64, Value::I64(_))
                        | (ScalarKind::I32, Value::I32(_))
                        | (ScalarKind::Bool, Value::Bool(_))
                );
                if !ok {
                    return Err(Trap::BadInput(format!("argument '{}' must be {}", p.name, k.name())));
                }
                v
            }
            (Type::Vector(k), Arg::Scalar(Value::Vector(x))) if x.len() == *k => Value::Vector(x.clone()),
            (t, _) => {
                return Err(Trap::BadInput(format!(
                    "argument '{}' does not match parameter type {t}",
                    p.name
                )))
            }
        };
        args.push(v);
    }
    let ret = m.invoke(f, args)?;
    let ret = f.ret.map(|_| ret);
    let mut out = Outputs {
        pools: BTreeMap::new(),
        slices: BTreeMap::new(),
        ret,
    };
    for (s, n) in pool_lens {
        let pool = m.pool_of(&s)?;
        out.pools.insert(s, m.pools[pool][..n].to_vec());
    }
    for (name, pool, start, n) in slices {
        out.slices.insert(name, m.pools[pool][start..start + n].to_vec());
    }
    let trace = Trace {
        events: m.trace.take().unwrap_or_default(),
    };
    Ok((out, trace, m.counters))
}

/// Runs `entry` on `inputs`.
pub fn interpret(prog: &Program, entry: &str, inputs: &Inputs) -> Result<Outputs, Trap> {
    run(prog, entry, inputs, false).map(|(o, _, _)| o)
}

/// Runs `entry` and records every field access made through a view element.
pub fn interpret_traced(prog: &Program, entry: &str, inputs: &Inputs) -> Result<(Outputs, Trace), Trap> {
    run(prog, entry, inputs, true).map(|(o, t, _)| (o, t))
}

/// Runs `entry` and counts record-field and buffer-slot stores.
pub fn interpret_counted(prog: &Program, entry: &str, inputs: &Inputs) -> Result<(Outputs, Counters), Trap> {
    run(prog, entry, inputs, false).map(|(o, _, c)| (o, c))
}

fn f64_to_json(v: f64) -> Json {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("NaN")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn f64_from_json(j: &Json) -> Option<f64> {
    match j {
        Json::Number(n) => n.as_f64(),
        Json::String(s) => match s.as_str() {
            "NaN" => Some(f64::NAN),
            "inf" => Some(f64::INFINITY),
            "-inf" => Some(f64::NEG_INFINITY),
            _ => None,
        },
        _ => None,
    }
}

pub fn value_to_json(v: &Value) -> Json {
    match v {
        Value::F64(x) => f64_to_json(*x),
        Value::I64(x) => json!(x),
        Value::I32(x) => json!(x),
        Value::Bool(b) => json!(b),
        Value::Vector(xs) => Json::Array(xs.iter().map(|x| f64_to_json(*x)).collect()),
        other => json!(format!("{other:?}")),
    }
}

fn value_from_json(j: &Json, ty: FieldType, what: &str) -> R<Value> {
    let bad = || Trap::BadInput(format!("'{what}' expects {ty}, found {j}"));
    match ty {
        FieldType::Scalar(ScalarKind::F64) => f64_from_json(j).map(Value::F64).ok_or_else(bad),
        FieldType::Scalar(ScalarKind::I64) => j.as_i64().map(Value::I64).ok_or_else(bad),
        FieldType::Scalar(ScalarKind::I32) => j
            .as_i64()
            .and_then(|v| i32::try_from(v).ok())
            .map(Value::I32)
            .ok_or_else(bad),
        FieldType::Scalar(ScalarKind::Bool) => j.as_bool().map(Value::Bool).ok_or_else(bad),
        FieldType::Vector(k) => {
            let a = j.as_array().filter(|a| a.len() == k).ok_or_else(bad)?;
            a.iter()
                .map(|x| f64_from_json(x).ok_or_else(bad))
                .collect::<R<Vec<_>>>()
                .map(Value::Vector)
        }
    }
}

pub fn record_to_json(def: &StructDef, r: &Record) -> Json {
    let mut m = Map::new();
    for (f, v) in def.fields.iter().zip(r) {
        m.insert(f.name.clone(), value_to_json(v));
    }
    Json::Object(m)
}

pub fn record_from_json(def: &StructDef, j: &Json) -> R<Record> {
    let obj = j
        .as_object()
        .ok_or_else(|| Trap::BadInput(format!("record of '{}' must be an object", def.name)))?;
    if let Some(k) = obj.keys().find(|k| def.field(k).is_none()) {
        return Err(Trap::BadInput(format!("'{}' has no field '{k}'", def.name)));
    }
    def.fields
        .iter()
        .map(|f| match obj.get(&f.name) {
            Some(v) => value_from_json(v, f.ty, &format!("{}.{}", def.name, f.name)),
            None => Ok(Value::zero(f.ty)),
        })
        .collect()
}

/// Reads inputs for `entry` in the documented JSON form.
pub fn inputs_from_json(prog: &Program, entry: &str, j: &Json) -> Result<Inputs, Trap> {
    let f = prog
        .function(entry)
        .ok_or_else(|| Trap::BadInput(format!("no function '{entry}'")))?;
    let mut inputs = Inputs::default();
    if let Some(pools) = j.get("pools") {
        let pools = pools
            .as_object()
            .ok_or_else(|| Trap::BadInput("'pools' must be an object".into()))?;
        for (s, recs) in pools {
            let def = prog
                .struct_def(s)
                .ok_or_else(|| Trap::BadInput(format!("unknown struct '{s}'")))?;
            let recs = recs
                .as_array()
                .ok_or_else(|| Trap::BadInput(format!("pool '{s}' must be an array")))?;
            let recs = recs.iter().map(|r| record_from_json(def, r)).collect::<R<_>>()?;
            inputs.pools.insert(s.clone(), recs);
        }
    }
    let empty = Map::new();
    let args = match j.get("args") {
        Some(a) => a
            .as_object()
            .ok_or_else(|| Trap::BadInput("'args' must be an object".into()))?,
        None => &empty,
    };
    for p in &f.params {
        let a = args
            .get(&p.name)
            .ok_or_else(|| Trap::BadInput(format!("missing argument '{}'", p.name)))?;
        let arg = match &p.ty {
            Type::Container(ContainerKind::Slice, s) => {
                let def = prog.struct_def(s).expect("checked struct");
                let recs = a
                    .as_array()
                    .ok_or_else(|| Trap::BadInput(format!("'{}' must be an array", p.name)))?;
                Arg::Slice(recs.iter().map(|r| record_from_json(def, r)).collect::<R<_>>()?)
            }
            Type::Container(ContainerKind::PtrList, _) => {
                let ix = a
                    .as_array()
                    .ok_or_else(|| Trap::BadInput(format!("'{}' must be an array", p.name)))?;
                Arg::PtrList(
                    ix.iter()
                        .map(|x| match x {
                            Json::Null => Ok(None),
                            x => x
                                .as_u64()
                                .map(|v| Some(v as usize))
                                .ok_or_else(|| Trap::BadInput(format!("'{}' holds {x}, not an index", p.name))),
                        })
                        .collect::<R<_>>()?,
                )
            }
            Type::Scalar(k) => Arg::Scalar(value_from_json(a, FieldType::Scalar(*k), &p.name)?),
            Type::Vector(k) => Arg::Scalar(value_from_json(a, FieldType::Vector(*k), &p.name)?),
            t => {
                return Err(Trap::BadInput(format!(
                    "entry parameter '{}' of type {t} cannot be supplied",
                    p.name
                )))
            }
        };
        inputs.args.insert(p.name.clone(), arg);
    }
    Ok(inputs)
}

pub fn outputs_to_json(prog: &Program, out: &Outputs) -> Json {
    let records = |s: &str, recs: &[Record]| -> Json {
        let def = prog.struct_def(s).expect("known struct");
        Json::Array(recs.iter().map(|r| record_to_json(def, r)).collect())
    };
    let mut pools = Map::new();
    for (s, recs) in &out.pools {
        pools.insert(s.clone(), records(s, recs));
    }
    let mut args = Map::new();
    for (name, recs) in &out.slices {
        // Slice records carry their struct through the pool they were placed in.
        let s = prog
            .functions
            .iter()
            .flat_map(|f| &f.params)
            .find(|p| &p.name == name)
            .and_then(|p| p.ty.struct_name())
            .unwrap_or_default();
        args.insert(name.clone(), records(s, recs));
    }
    json!({
        "return": out.ret.as_ref().map(value_to_json).unwrap_or(Json::Null),
        "pools": pools,
        "args": args,
    })
}
