//! Surface abstract syntax: what the parser produces, before desugaring
//! into the core language. Values and computations are coalesced here and
//! separated during elaboration.

use crate::span::Span;
use crate::syntax::{LabelFlavor, Pattern, Prim};

#[derive(Debug, Clone, PartialEq)]
pub struct SExpr {
    pub kind: SExprKind,
    pub span: Span,
}

impl SExpr {
    pub fn new(kind: SExprKind, span: Span) -> SExpr {
        SExpr { kind, span }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SBinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Gt,
    Concat,
    Cons,
    /// The choice sugar `x <> y`.
    Choice,
}

impl SBinOp {
    pub fn prim(self) -> Option<Prim> {
        Some(match self {
            SBinOp::Add => Prim::Add,
            SBinOp::Sub => Prim::Sub,
            SBinOp::Mul => Prim::Mul,
            SBinOp::Eq => Prim::Eq,
            SBinOp::Gt => Prim::Gt,
            SBinOp::Concat => Prim::Concat,
            SBinOp::Cons | SBinOp::Choice => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SExprKind {
    Var(String),
    Unit,
    Int(i64),
    Bool(bool),
    Str(String),
    Char(char),
    Pair(Box<SExpr>, Box<SExpr>),
    ListLit(Vec<SExpr>),
    Lam(Pattern, Box<SExpr>),
    App(Box<SExpr>, Box<SExpr>),
    BinOp(SBinOp, Box<SExpr>, Box<SExpr>),
    Prim1(Prim, Box<SExpr>),
    Return(Box<SExpr>),
    /// `do p <- e1; e2`, or `e1; e2` when the binder is absent.
    Seq(Option<Pattern>, Box<SExpr>, Box<SExpr>),
    OpCall(String, Box<SExpr>, Option<(Pattern, Box<SExpr>)>),
    ScCall(
        String,
        Box<SExpr>,
        (Pattern, Box<SExpr>),
        Option<(Pattern, Box<SExpr>)>,
    ),
    HandleWith(Box<SExpr>, Box<SExpr>),
    HandlerLit(Box<SHandler>),
    LetIn(String, Box<SExpr>, Box<SExpr>),
    If(Box<SExpr>, Box<SExpr>, Box<SExpr>),
    Case(Box<SExpr>, Vec<SArm>),
    Absurd(Box<SExpr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SArm {
    pub pat: SCasePattern,
    /// Optional equality guard `| e1 = e2`.
    pub guard: Option<(SExpr, SExpr)>,
    pub body: SExpr,
    pub span: Span,
}

/// Case patterns before constructor-name resolution.
#[derive(Debug, Clone, PartialEq)]
pub enum SCasePattern {
    Wild,
    Unit,
    Name(String, Vec<SCasePattern>),
    Nil,
    Cons(Box<SCasePattern>, Box<SCasePattern>),
    Pair(Box<SCasePattern>, Box<SCasePattern>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SHandler {
    pub annotation: SType,
    pub clauses: Vec<SClause>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SClause {
    Return {
        binder: Pattern,
        body: SExpr,
    },
    Op {
        label: String,
        param: Pattern,
        karg: Pattern,
        body: SExpr,
    },
    Sc {
        label: String,
        param: Pattern,
        parg: Pattern,
        karg: Pattern,
        body: SExpr,
    },
    Fwd {
        farg: Pattern,
        parg: Pattern,
        karg: Pattern,
        body: SExpr,
    },
    Bind {
        xarg: Pattern,
        karg: Pattern,
        body: SExpr,
    },
}

// ---------------------------------------------------------------------------
// Surface types
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SType {
    pub kind: STypeKind,
    pub span: Span,
}

impl SType {
    pub fn new(kind: STypeKind, span: Span) -> SType {
        SType { kind, span }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum STypeKind {
    Unit,
    /// Uppercase name: base type or datatype. Lowercase: type variable.
    Named(String),
    Pair(Box<SType>, Box<SType>),
    App(Box<SType>, Vec<SType>),
    Sum(Box<SType>, Box<SType>),
    Fun(Box<SType>, Box<SCompType>),
    HandlerT(Box<SCompType>, Box<SCompType>),
    /// `fun a -> T`: a single-parameter type operator.
    Lam(String, Box<SType>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SCompType {
    pub val: SType,
    pub row: SRow,
    pub span: Span,
}

/// Row items are plain names here; whether the final item is a label or a
/// row-variable tail is resolved against the effect declarations later.
#[derive(Debug, Clone, PartialEq)]
pub struct SRow {
    pub items: Vec<String>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SScheme {
    pub vars: Vec<String>,
    pub body: SType,
    pub span: Span,
}

// ---------------------------------------------------------------------------
// Declarations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum SDecl {
    Effect {
        flavor: LabelFlavor,
        name: String,
        param: SType,
        result: SType,
        span: Span,
    },
    Data {
        name: String,
        params: Vec<String>,
        ctors: Vec<(String, Vec<SType>)>,
        span: Span,
    },
    /// A standalone signature `name : scheme`, attached to the next def.
    Annot {
        name: String,
        scheme: SScheme,
        span: Span,
    },
    Def {
        name: String,
        params: Vec<Pattern>,
        body: SExpr,
        span: Span,
    },
    Main {
        body: SExpr,
        span: Span,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SProgram {
    pub decls: Vec<SDecl>,
}
