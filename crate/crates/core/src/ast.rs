//! Owned abstract syntax tree for the kernel language.
//!
//! Every node carries a [`Span`]. Spans never participate in equality, so two
//! trees compare equal iff they are structurally identical.

use std::fmt;

#[derive(Clone, Copy, Debug, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
    pub offset: u32,
}

impl Span {
    pub fn new(line: u32, col: u32, offset: u32) -> Self {
        Span { line, col, offset }
    }
}

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScalarKind {
    F64,
    I64,
    I32,
    Bool,
}

impl ScalarKind {
    pub fn size(self) -> usize {
        match self {
            ScalarKind::F64 | ScalarKind::I64 => 8,
            ScalarKind::I32 => 4,
            ScalarKind::Bool => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScalarKind::F64 => "f64",
            ScalarKind::I64 => "i64",
            ScalarKind::I32 => "i32",
            ScalarKind::Bool => "bool",
        }
    }
}

/// Type of a struct field or of a buffer element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldType {
    Scalar(ScalarKind),
    /// Fixed-length `f64[k]`.
    Vector(usize),
}

impl FieldType {
    pub fn size(self) -> usize {
        match self {
            FieldType::Scalar(k) => k.size(),
            FieldType::Vector(n) => 8 * n,
        }
    }
}

impl fmt::Display for FieldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldType::Scalar(k) => f.write_str(k.name()),
            FieldType::Vector(n) => write!(f, "f64[{n}]"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ContainerKind {
    /// Contiguous records.
    Slice,
    /// Array of references to records that may live anywhere.
    PtrList,
}

impl ContainerKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ContainerKind::Slice => "slice",
            ContainerKind::PtrList => "ptrlist",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Type {
    Scalar(ScalarKind),
    Vector(usize),
    StructRef(String),
    Container(ContainerKind, String),
    Buffer(FieldType),
}

impl Type {
    pub fn from_field(ty: FieldType) -> Type {
        match ty {
            FieldType::Scalar(k) => Type::Scalar(k),
            FieldType::Vector(n) => Type::Vector(n),
        }
    }

    /// The struct this type refers to, for struct references and containers.
    pub fn struct_name(&self) -> Option<&str> {
        match self {
            Type::StructRef(s) | Type::Container(_, s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Scalar(k) => f.write_str(k.name()),
            Type::Vector(n) => write!(f, "f64[{n}]"),
            Type::StructRef(s) => write!(f, "&{s}"),
            Type::Container(k, s) => write!(f, "{}<{s}>", k.keyword()),
            Type::Buffer(t) => write!(f, "buffer<{t}>"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldDef {
    pub name: String,
    pub ty: FieldType,
    /// Byte offset inside the packed record.
    pub offset: usize,
    pub span: Span,
}

impl FieldDef {
    pub fn size(&self) -> usize {
        self.ty.size()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StructDef {
    pub name: String,
    pub fields: Vec<FieldDef>,
    pub span: Span,
}

impl StructDef {
    /// Packed record size in bytes.
    pub fn size(&self) -> usize {
        self.fields.iter().map(FieldDef::size).sum()
    }

    pub fn field(&self, name: &str) -> Option<&FieldDef> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: Type,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionDef {
    pub name: String,
    pub params: Vec<Param>,
    pub ret: Option<ScalarKind>,
    /// `None` for `extern fn` declarations.
    pub body: Option<Block>,
    pub span: Span,
}

impl FunctionDef {
    pub fn is_extern(&self) -> bool {
        self.body.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Block {
    pub stmts: Vec<Stmt>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AssignOp {
    Set,
    Add,
    Sub,
    Mul,
    Div,
}

impl AssignOp {
    pub fn symbol(self) -> &'static str {
        match self {
            AssignOp::Set => "=",
            AssignOp::Add => "+=",
            AssignOp::Sub => "-=",
            AssignOp::Mul => "*=",
            AssignOp::Div => "/=",
        }
    }

    pub fn binary(self) -> Option<BinOp> {
        match self {
            AssignOp::Set => None,
            AssignOp::Add => Some(BinOp::Add),
            AssignOp::Sub => Some(BinOp::Sub),
            AssignOp::Mul => Some(BinOp::Mul),
            AssignOp::Div => Some(BinOp::Div),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StmtKind {
    Let {
        name: String,
        ty: Option<Type>,
        init: Expr,
    },
    Assign {
        target: Expr,
        op: AssignOp,
        value: Expr,
    },
    If {
        cond: Expr,
        then_block: Block,
        else_block: Option<Block>,
    },
    For(ForLoop),
    Expr(Expr),
    Return(Option<Expr>),
    /// `@assume_disjoint(a, b);` the user asserts the two containers share no record.
    AssumeDisjoint(String, String),
    /// Release of a view buffer.
    Free(String),
}

/// View-conversion annotation preceding a `for` statement.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Annotation {
    None,
    /// `@soa_convert`
    Convert,
    /// `@soa_convert_hoist(n)`
    ConvertHoist(u32),
    /// `@soa_offload`: convert and run the loop through OpenMP target offloading.
    Offload,
    /// Left behind by the rewrite on an offloaded loop: the device map clauses.
    Target(Vec<MapClause>),
}

impl Annotation {
    /// True for the three user-facing conversion annotations.
    pub fn is_conversion(&self) -> bool {
        matches!(
            self,
            Annotation::Convert | Annotation::ConvertHoist(_) | Annotation::Offload
        )
    }

    pub fn hoist_depth(&self) -> u32 {
        match self {
            Annotation::ConvertHoist(n) => *n,
            _ => 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MapDir {
    To,
    From,
    ToFrom,
}

impl MapDir {
    pub fn keyword(self) -> &'static str {
        match self {
            MapDir::To => "to",
            MapDir::From => "from",
            MapDir::ToFrom => "tofrom",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MapClause {
    pub dir: MapDir,
    pub buffer: String,
    /// Variable holding the buffer length.
    pub len: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LoopRange {
    /// `for p in c`
    Container(String),
    /// `for i in a..b`
    Range { start: Expr, end: Expr },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForLoop {
    pub annotation: Annotation,
    /// `@soa_target(c)`: the container an indexed loop converts.
    pub target: Option<String>,
    pub binder: String,
    pub range: LoopRange,
    pub body: Block,
    pub span: Span,
}

impl ForLoop {
    /// Container converted by this loop, if it is a conversion candidate.
    pub fn container(&self) -> Option<&str> {
        match (&self.range, &self.target) {
            (_, Some(t)) => Some(t),
            (LoopRange::Container(c), None) => Some(c),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge
        )
    }
}

#[derive(Clone, Debug)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

#[derive(Clone, Debug)]
pub enum ExprKind {
    Float(f64),
    Int(i64),
    Bool(bool),
    Var(String),
    /// `base.field` where base is a struct reference or an indexed container.
    Field {
        base: Box<Expr>,
        field: String,
    },
    /// `base[index]` on containers, buffers and vectors.
    Index {
        base: Box<Expr>,
        index: Box<Expr>,
    },
    Call {
        name: String,
        args: Vec<Expr>,
    },
    Unary {
        op: UnOp,
        expr: Box<Expr>,
    },
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    VecLit(Vec<Expr>),
}

impl PartialEq for ExprKind {
    fn eq(&self, other: &Self) -> bool {
        use ExprKind::*;
        match (self, other) {
            // Literals compare by bit pattern so that -0.0 and 0.0 stay distinct.
            (Float(a), Float(b)) => a.to_bits() == b.to_bits(),
            (Int(a), Int(b)) => a == b,
            (Bool(a), Bool(b)) => a == b,
            (Var(a), Var(b)) => a == b,
            (Field { base: a, field: f }, Field { base: b, field: g }) => a == b && f == g,
            (Index { base: a, index: i }, Index { base: b, index: j }) => a == b && i == j,
            (Call { name: a, args: x }, Call { name: b, args: y }) => a == b && x == y,
            (Unary { op: a, expr: x }, Unary { op: b, expr: y }) => a == b && x == y,
            (
                Binary {
                    op: a,
                    lhs: l1,
                    rhs: r1,
                },
                Binary {
                    op: b,
                    lhs: l2,
                    rhs: r2,
                },
            ) => a == b && l1 == l2 && r1 == r2,
            (VecLit(a), VecLit(b)) => a == b,
            _ => false,
        }
    }
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    pub fn var(name: impl Into<String>, span: Span) -> Self {
        Expr::new(ExprKind::Var(name.into()), span)
    }

    pub fn index(base: Expr, index: Expr) -> Self {
        let span = base.span;
        Expr::new(
            ExprKind::Index {
                base: Box::new(base),
                index: Box::new(index),
            },
            span,
        )
    }

    pub fn field(base: Expr, field: impl Into<String>) -> Self {
        let span = base.span;
        Expr::new(
            ExprKind::Field {
                base: Box::new(base),
                field: field.into(),
            },
            span,
        )
    }

    pub fn call(name: impl Into<String>, args: Vec<Expr>, span: Span) -> Self {
        Expr::new(
            ExprKind::Call {
                name: name.into(),
                args,
            },
            span,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Program {
    pub structs: Vec<StructDef>,
    pub functions: Vec<FunctionDef>,
}

impl Program {
    pub fn is_empty(&self) -> bool {
        self.structs.is_empty() && self.functions.is_empty()
    }

    pub fn struct_def(&self, name: &str) -> Option<&StructDef> {
        self.structs.iter().find(|s| s.name == name)
    }

    pub fn function(&self, name: &str) -> Option<&FunctionDef> {
        self.functions.iter().find(|f| f.name == name)
    }
}

/// Names of the built-in functions.
pub const INTRINSICS: &[&str] = &["sqrt", "abs", "min", "max", "floor", "len", "alloc"];

pub fn is_intrinsic(name: &str) -> bool {
    INTRINSICS.contains(&name)
}

/// Depth-first visit of every `for` loop in a block, outermost first.
pub fn visit_loops<'a>(block: &'a Block, f: &mut impl FnMut(&'a ForLoop, usize)) {
    fn walk<'a>(block: &'a Block, depth: usize, f: &mut impl FnMut(&'a ForLoop, usize)) {
        for stmt in &block.stmts {
            match &stmt.kind {
                StmtKind::For(l) => {
                    f(l, depth);
                    walk(&l.body, depth + 1, f);
                }
                StmtKind::If {
                    then_block, else_block, ..
                } => {
                    walk(then_block, depth, f);
                    if let Some(e) = else_block {
                        walk(e, depth, f);
                    }
                }
                _ => {}
            }
        }
    }
    walk(block, 0, f);
}
