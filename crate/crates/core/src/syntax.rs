//! Core term language: values, computations, handlers and programs, plus
//! capture-avoiding substitution, free variables and alpha-equivalence.

use crate::span::Span;
use crate::types::{TypeScheme, ValueType};
use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelFlavor {
    Op,
    Sc,
}

impl fmt::Display for LabelFlavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelFlavor::Op => write!(f, "op"),
            LabelFlavor::Sc => write!(f, "sc"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Label {
    pub name: String,
    pub flavor: LabelFlavor,
}

impl Label {
    pub fn op(name: impl Into<String>) -> Label {
        Label {
            name: name.into(),
            flavor: LabelFlavor::Op,
        }
    }

    pub fn sc(name: impl Into<String>) -> Label {
        Label {
            name: name.into(),
            flavor: LabelFlavor::Sc,
        }
    }
}

/// Binder patterns: plain names, wildcards and (nested) pair patterns.
/// Pair patterns in lambda position are required by the forwarding rule,
/// whose resumption takes the pair of handled computations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    Wild,
    Var(String),
    Pair(Box<Pattern>, Box<Pattern>),
}

impl Pattern {
    pub fn var(name: impl Into<String>) -> Pattern {
        Pattern::Var(name.into())
    }

    pub fn pair(a: Pattern, b: Pattern) -> Pattern {
        Pattern::Pair(Box::new(a), Box::new(b))
    }

    pub fn bound_names(&self, out: &mut BTreeSet<String>) {
        match self {
            Pattern::Wild => {}
            Pattern::Var(x) => {
                out.insert(x.clone());
            }
            Pattern::Pair(a, b) => {
                a.bound_names(out);
                b.bound_names(out);
            }
        }
    }

    pub fn binds(&self, name: &str) -> bool {
        match self {
            Pattern::Wild => false,
            Pattern::Var(x) => x == name,
            Pattern::Pair(a, b) => a.binds(name) || b.binds(name),
        }
    }
}

/// Patterns in case arms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CasePattern {
    Wild,
    Var(String),
    Unit,
    Pair(Box<CasePattern>, Box<CasePattern>),
    Nil,
    Cons(Box<CasePattern>, Box<CasePattern>),
    Ctor(String, Vec<CasePattern>),
}

impl CasePattern {
    pub fn bound_names(&self, out: &mut BTreeSet<String>) {
        match self {
            CasePattern::Wild | CasePattern::Unit | CasePattern::Nil => {}
            CasePattern::Var(x) => {
                out.insert(x.clone());
            }
            CasePattern::Pair(a, b) | CasePattern::Cons(a, b) => {
                a.bound_names(out);
                b.bound_names(out);
            }
            CasePattern::Ctor(_, args) => {
                for a in args {
                    a.bound_names(out);
                }
            }
        }
    }

    pub fn binds(&self, name: &str) -> bool {
        let mut s = BTreeSet::new();
        self.bound_names(&mut s);
        s.contains(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prim {
    Add,
    Sub,
    Mul,
    Eq,
    Gt,
    Concat,
    Head,
    Read,
}

impl Prim {
    pub fn name(self) -> &'static str {
        match self {
            Prim::Add => "+",
            Prim::Sub => "-",
            Prim::Mul => "*",
            Prim::Eq => "=",
            Prim::Gt => ">",
            Prim::Concat => "++",
            Prim::Head => "head",
            Prim::Read => "read",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Prim::Head | Prim::Read => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Value {
    pub kind: ValueKind,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub enum ValueKind {
    Unit,
    Var(String),
    Pair(Box<Value>, Box<Value>),
    Lam(Pattern, Box<Computation>),
    Handler(Box<Handler>),
    Int(i64),
    Bool(bool),
    Str(String),
    Char(char),
    /// nil/cons, left/right and user-declared datatype constructors.
    Ctor(String, Vec<Value>),
}

impl Value {
    pub fn new(kind: ValueKind) -> Value {
        Value {
            kind,
            span: Span::DUMMY,
        }
    }

    pub fn with_span(kind: ValueKind, span: Span) -> Value {
        Value { kind, span }
    }

    pub fn unit() -> Value {
        Value::new(ValueKind::Unit)
    }

    pub fn var(name: impl Into<String>) -> Value {
        Value::new(ValueKind::Var(name.into()))
    }

    pub fn int(i: i64) -> Value {
        Value::new(ValueKind::Int(i))
    }

    pub fn bool(b: bool) -> Value {
        Value::new(ValueKind::Bool(b))
    }

    pub fn str(s: impl Into<String>) -> Value {
        Value::new(ValueKind::Str(s.into()))
    }

    pub fn char(c: char) -> Value {
        Value::new(ValueKind::Char(c))
    }

    pub fn pair(a: Value, b: Value) -> Value {
        Value::new(ValueKind::Pair(Box::new(a), Box::new(b)))
    }

    pub fn lam(p: Pattern, c: Computation) -> Value {
        Value::new(ValueKind::Lam(p, Box::new(c)))
    }

    pub fn ctor(name: impl Into<String>, args: Vec<Value>) -> Value {
        Value::new(ValueKind::Ctor(name.into(), args))
    }

    pub fn list(items: Vec<Value>) -> Value {
        let mut v = Value::ctor("nil", vec![]);
        for item in items.into_iter().rev() {
            v = Value::ctor("cons", vec![item, v]);
        }
        v
    }

    /// Collects a cons chain into a Vec when the value is a proper list.
    pub fn as_list(&self) -> Option<Vec<&Value>> {
        let mut out = Vec::new();
        let mut cur = self;
        loop {
            match &cur.kind {
                ValueKind::Ctor(n, args) if n == "nil" && args.is_empty() => return Some(out),
                ValueKind::Ctor(n, args) if n == "cons" && args.len() == 2 => {
                    out.push(&args[0]);
                    cur = &args[1];
                }
                _ => return None,
            }
        }
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        alpha_eq_value(self, other)
    }
}

impl Eq for Value {}

#[derive(Debug, Clone)]
pub struct Computation {
    pub kind: CompKind,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub enum CompKind {
    Return(Value),
    Op {
        label: Label,
        arg: Value,
        binder: Pattern,
        cont: Box<Computation>,
    },
    Sc {
        label: Label,
        arg: Value,
        scoped_binder: Pattern,
        scoped: Box<Computation>,
        cont_binder: Pattern,
        cont: Box<Computation>,
    },
    Handle {
        handler: Value,
        body: Box<Computation>,
    },
    Do {
        binder: Pattern,
        first: Box<Computation>,
        rest: Box<Computation>,
    },
    App {
        func: Value,
        arg: Value,
    },
    Let {
        name: String,
        value: Value,
        body: Box<Computation>,
    },
    Case {
        scrutinee: Value,
        arms: Vec<(CasePattern, Computation)>,
    },
    If {
        cond: Value,
        then_branch: Box<Computation>,
        else_branch: Box<Computation>,
    },
    Absurd(Value),
    PrimApp {
        prim: Prim,
        args: Vec<Value>,
    },
}

impl Computation {
    pub fn new(kind: CompKind) -> Computation {
        Computation {
            kind,
            span: Span::DUMMY,
        }
    }

    pub fn with_span(kind: CompKind, span: Span) -> Computation {
        Computation { kind, span }
    }

    pub fn ret(v: Value) -> Computation {
        Computation::new(CompKind::Return(v))
    }

    pub fn op(label: Label, arg: Value, binder: Pattern, cont: Computation) -> Computation {
        Computation::new(CompKind::Op {
            label,
            arg,
            binder,
            cont: Box::new(cont),
        })
    }

    pub fn sc(
        label: Label,
        arg: Value,
        scoped_binder: Pattern,
        scoped: Computation,
        cont_binder: Pattern,
        cont: Computation,
    ) -> Computation {
        Computation::new(CompKind::Sc {
            label,
            arg,
            scoped_binder,
            scoped: Box::new(scoped),
            cont_binder,
            cont: Box::new(cont),
        })
    }

    pub fn handle(handler: Value, body: Computation) -> Computation {
        Computation::new(CompKind::Handle {
            handler,
            body: Box::new(body),
        })
    }

    pub fn do_(binder: Pattern, first: Computation, rest: Computation) -> Computation {
        Computation::new(CompKind::Do {
            binder,
            first: Box::new(first),
            rest: Box::new(rest),
        })
    }

    pub fn app(func: Value, arg: Value) -> Computation {
        Computation::new(CompKind::App { func, arg })
    }

    pub fn let_(name: impl Into<String>, value: Value, body: Computation) -> Computation {
        Computation::new(CompKind::Let {
            name: name.into(),
            value,
            body: Box::new(body),
        })
    }

    pub fn if_(cond: Value, then_branch: Computation, else_branch: Computation) -> Computation {
        Computation::new(CompKind::If {
            cond,
            then_branch: Box::new(then_branch),
            else_branch: Box::new(else_branch),
        })
    }

    pub fn prim(prim: Prim, args: Vec<Value>) -> Computation {
        Computation::new(CompKind::PrimApp { prim, args })
    }
}

impl PartialEq for Computation {
    fn eq(&self, other: &Self) -> bool {
        alpha_eq_comp(self, other)
    }
}

impl Eq for Computation {}

#[derive(Debug, Clone, PartialEq)]
pub struct OpClause {
    pub label: Label,
    pub param: Pattern,
    pub karg: Pattern,
    pub body: Computation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScClause {
    pub label: Label,
    pub param: Pattern,
    pub parg: Pattern,
    pub karg: Pattern,
    pub body: Computation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FwdClause {
    pub farg: Pattern,
    pub parg: Pattern,
    pub karg: Pattern,
    pub body: Computation,
}

/// A handler: return clause, ordered operation clauses and one forwarding
/// clause. `fwd` is absent only for ill-formed input; the typechecker
/// reports that as MissingFwd. `bind_origin` keeps the surface bind clause
/// so the direct E-Bind stepping mode can replay it.
#[derive(Debug, Clone, PartialEq)]
pub struct Handler {
    pub ret_binder: Pattern,
    pub ret_body: Computation,
    pub op_clauses: Vec<OpClause>,
    pub sc_clauses: Vec<ScClause>,
    pub fwd: Option<FwdClause>,
    pub bind_origin: Option<(Pattern, Pattern, Computation)>,
    pub annotation: ValueType,
}

impl Handler {
    pub fn find_op(&self, name: &str) -> Option<&OpClause> {
        self.op_clauses.iter().find(|c| c.label.name == name)
    }

    pub fn find_sc(&self, name: &str) -> Option<&ScClause> {
        self.sc_clauses.iter().find(|c| c.label.name == name)
    }

    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.op_clauses {
            out.push(c.label.name.clone());
        }
        for c in &self.sc_clauses {
            out.push(c.label.name.clone());
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct EffectDecl {
    pub label: Label,
    pub param_ty: ValueType,
    pub result_ty: ValueType,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct DataDecl {
    pub name: String,
    pub params: Vec<crate::types::TyVar>,
    pub ctors: Vec<(String, Vec<ValueType>)>,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct TopDef {
    pub name: String,
    pub annotation: Option<TypeScheme>,
    pub body: Value,
    pub span: Span,
}

/// A named top-level computation (e.g. the example programs); expanded at
/// use sites during desugaring and kept here so tools can report its type.
#[derive(Debug, Clone)]
pub struct CompAlias {
    pub name: String,
    pub body: Computation,
    pub span: Span,
}

#[derive(Debug, Clone, Default)]
pub struct Program {
    pub effects: Vec<EffectDecl>,
    pub datas: Vec<DataDecl>,
    pub defs: Vec<TopDef>,
    pub aliases: Vec<CompAlias>,
    pub main: Option<Computation>,
    /// First fresh type/row variable id not used by parsed annotations.
    pub next_var: u32,
}

// ---------------------------------------------------------------------------
// Free variables
// ---------------------------------------------------------------------------

pub fn free_vars_value(v: &Value) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    fv_value(v, &mut Vec::new(), &mut out);
    out
}

pub fn free_vars_comp(c: &Computation) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    fv_comp(c, &mut Vec::new(), &mut out);
    out
}

fn pattern_names(p: &Pattern) -> Vec<String> {
    let mut s = BTreeSet::new();
    p.bound_names(&mut s);
    s.into_iter().collect()
}

fn fv_value(v: &Value, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match &v.kind {
        ValueKind::Unit
        | ValueKind::Int(_)
        | ValueKind::Bool(_)
        | ValueKind::Str(_)
        | ValueKind::Char(_) => {}
        ValueKind::Var(x) => {
            if !bound.iter().any(|b| b == x) {
                out.insert(x.clone());
            }
        }
        ValueKind::Pair(a, b) => {
            fv_value(a, bound, out);
            fv_value(b, bound, out);
        }
        ValueKind::Lam(p, c) => {
            let names = pattern_names(p);
            let n = names.len();
            bound.extend(names);
            fv_comp(c, bound, out);
            bound.truncate(bound.len() - n);
        }
        ValueKind::Handler(h) => fv_handler(h, bound, out),
        ValueKind::Ctor(_, args) => {
            for a in args {
                fv_value(a, bound, out);
            }
        }
    }
}

fn fv_handler(h: &Handler, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    {
        let names = pattern_names(&h.ret_binder);
        let n = names.len();
        bound.extend(names);
        fv_comp(&h.ret_body, bound, out);
        bound.truncate(bound.len() - n);
    }
    for c in &h.op_clauses {
        let mut names = pattern_names(&c.param);
        names.extend(pattern_names(&c.karg));
        let n = names.len();
        bound.extend(names);
        fv_comp(&c.body, bound, out);
        bound.truncate(bound.len() - n);
    }
    for c in &h.sc_clauses {
        let mut names = pattern_names(&c.param);
        names.extend(pattern_names(&c.parg));
        names.extend(pattern_names(&c.karg));
        let n = names.len();
        bound.extend(names);
        fv_comp(&c.body, bound, out);
        bound.truncate(bound.len() - n);
    }
    if let Some(fwd) = &h.fwd {
        let mut names = pattern_names(&fwd.farg);
        names.extend(pattern_names(&fwd.parg));
        names.extend(pattern_names(&fwd.karg));
        let n = names.len();
        bound.extend(names);
        fv_comp(&fwd.body, bound, out);
        bound.truncate(bound.len() - n);
    }
}

fn fv_comp(c: &Computation, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
    match &c.kind {
        CompKind::Return(v) | CompKind::Absurd(v) => fv_value(v, bound, out),
        CompKind::Op {
            arg, binder, cont, ..
        } => {
            fv_value(arg, bound, out);
            let names = pattern_names(binder);
            let n = names.len();
            bound.extend(names);
            fv_comp(cont, bound, out);
            bound.truncate(bound.len() - n);
        }
        CompKind::Sc {
            arg,
            scoped_binder,
            scoped,
            cont_binder,
            cont,
            ..
        } => {
            fv_value(arg, bound, out);
            let names = pattern_names(scoped_binder);
            let n = names.len();
            bound.extend(names);
            fv_comp(scoped, bound, out);
            bound.truncate(bound.len() - n);
            let names = pattern_names(cont_binder);
            let n = names.len();
            bound.extend(names);
            fv_comp(cont, bound, out);
            bound.truncate(bound.len() - n);
        }
        CompKind::Handle { handler, body } => {
            fv_value(handler, bound, out);
            fv_comp(body, bound, out);
        }
        CompKind::Do {
            binder,
            first,
            rest,
        } => {
            fv_comp(first, bound, out);
            let names = pattern_names(binder);
            let n = names.len();
            bound.extend(names);
            fv_comp(rest, bound, out);
            bound.truncate(bound.len() - n);
        }
        CompKind::App { func, arg } => {
            fv_value(func, bound, out);
            fv_value(arg, bound, out);
        }
        CompKind::Let { name, value, body } => {
            fv_value(value, bound, out);
            bound.push(name.clone());
            fv_comp(body, bound, out);
            bound.pop();
        }
        CompKind::Case { scrutinee, arms } => {
            fv_value(scrutinee, bound, out);
            for (pat, body) in arms {
                let mut names = BTreeSet::new();
                pat.bound_names(&mut names);
                let n = names.len();
                bound.extend(names);
                fv_comp(body, bound, out);
                bound.truncate(bound.len() - n);
            }
        }
        CompKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            fv_value(cond, bound, out);
            fv_comp(then_branch, bound, out);
            fv_comp(else_branch, bound, out);
        }
        CompKind::PrimApp { args, .. } => {
            for a in args {
                fv_value(a, bound, out);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Substitution
// ---------------------------------------------------------------------------

/// Picks a name based on `base` that avoids everything in `avoid`.
fn fresh_name(base: &str, avoid: &BTreeSet<String>) -> String {
    let stem: String = base
        .trim_end_matches(|c: char| c.is_ascii_digit())
        .to_string();
    let stem = if stem.is_empty() { "x".to_string() } else { stem };
    for i in 1u32.. {
        let cand = format!("{stem}{i}");
        if !avoid.contains(&cand) {
            return cand;
        }
    }
    unreachable!()
}

#[derive(Clone)]
struct Subst {
    map: Vec<(String, Value)>,
}

impl Subst {
    fn one(name: &str, v: Value) -> Subst {
        Subst {
            map: vec![(name.to_string(), v)],
        }
    }

    fn lookup(&self, name: &str) -> Option<&Value> {
        self.map.iter().rev().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    fn remove(&self, names: &BTreeSet<String>) -> Subst {
        Subst {
            map: self
                .map
                .iter()
                .filter(|(n, _)| !names.contains(n))
                .cloned()
                .collect(),
        }
    }

    fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    fn range_free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for (_, v) in &self.map {
            out.extend(free_vars_value(v));
        }
        out
    }
}

/// Capture-avoiding substitution of a single variable in a computation.
pub fn substitute(c: &Computation, name: &str, v: &Value) -> Computation {
    subst_comp(c, &Subst::one(name, v.clone()))
}

pub fn substitute_value(target: &Value, name: &str, v: &Value) -> Value {
    subst_value(target, &Subst::one(name, v.clone()))
}

/// Substitutes several variables at once (used when a pattern binds a pair).
pub fn substitute_many(c: &Computation, bindings: &[(String, Value)]) -> Computation {
    subst_comp(
        c,
        &Subst {
            map: bindings.to_vec(),
        },
    )
}

/// Renames a binder pattern so it avoids `avoid`, returning the renamed
/// pattern and the renaming as a substitution over the binder's names.
fn freshen_pattern(p: &Pattern, avoid: &BTreeSet<String>) -> (Pattern, Subst) {
    let mut renames = Vec::new();
    let mut avoid = avoid.clone();
    let fresh = freshen_pattern_inner(p, &mut avoid, &mut renames);
    (
        fresh,
        Subst {
            map: renames
                .into_iter()
                .map(|(old, new)| (old, Value::var(new)))
                .collect(),
        },
    )
}

fn freshen_pattern_inner(
    p: &Pattern,
    avoid: &mut BTreeSet<String>,
    renames: &mut Vec<(String, String)>,
) -> Pattern {
    match p {
        Pattern::Wild => Pattern::Wild,
        Pattern::Var(x) => {
            if avoid.contains(x) {
                let newx = fresh_name(x, avoid);
                avoid.insert(newx.clone());
                renames.push((x.clone(), newx.clone()));
                Pattern::Var(newx)
            } else {
                avoid.insert(x.clone());
                Pattern::Var(x.clone())
            }
        }
        Pattern::Pair(a, b) => Pattern::pair(
            freshen_pattern_inner(a, avoid, renames),
            freshen_pattern_inner(b, avoid, renames),
        ),
    }
}

/// Prepares a binder for descending under it: drops shadowed entries from
/// the substitution and alpha-renames the binder when any of its names would
/// capture a free variable of the substitution range.
fn under_binder(p: &Pattern, s: &Subst) -> (Pattern, Subst, Option<Subst>) {
    let mut names = BTreeSet::new();
    p.bound_names(&mut names);
    let s = s.remove(&names);
    if s.is_empty() {
        return (p.clone(), s, None);
    }
    let range_fv = s.range_free_vars();
    if names.iter().any(|n| range_fv.contains(n)) {
        let mut avoid = range_fv;
        avoid.extend(names);
        let (p2, ren) = freshen_pattern(p, &avoid);
        (p2, s, Some(ren))
    } else {
        (p.clone(), s, None)
    }
}

fn subst_comp_under(p: &Pattern, body: &Computation, s: &Subst) -> (Pattern, Computation) {
    let (p2, s2, ren) = under_binder(p, s);
    let body = match ren {
        Some(r) => subst_comp(body, &r),
        None => body.clone(),
    };
    if s2.is_empty() {
        (p2, body)
    } else {
        (p2, subst_comp(&body, &s2))
    }
}

fn subst_value(v: &Value, s: &Subst) -> Value {
    if s.is_empty() {
        return v.clone();
    }
    let kind = match &v.kind {
        ValueKind::Unit
        | ValueKind::Int(_)
        | ValueKind::Bool(_)
        | ValueKind::Str(_)
        | ValueKind::Char(_) => v.kind.clone(),
        ValueKind::Var(x) => match s.lookup(x) {
            Some(r) => return r.clone(),
            None => v.kind.clone(),
        },
        ValueKind::Pair(a, b) => {
            ValueKind::Pair(Box::new(subst_value(a, s)), Box::new(subst_value(b, s)))
        }
        ValueKind::Lam(p, c) => {
            let (p2, c2) = subst_comp_under(p, c, s);
            ValueKind::Lam(p2, Box::new(c2))
        }
        ValueKind::Handler(h) => ValueKind::Handler(Box::new(subst_handler(h, s))),
        ValueKind::Ctor(n, args) => {
            ValueKind::Ctor(n.clone(), args.iter().map(|a| subst_value(a, s)).collect())
        }
    };
    Value::with_span(kind, v.span)
}

fn subst_clause_body(pats: &[&Pattern], body: &Computation, s: &Subst) -> (Vec<Pattern>, Computation) {
    // Sequentially treat each binder; they jointly scope over the body.
    let mut names = BTreeSet::new();
    for p in pats {
        p.bound_names(&mut names);
    }
    let s = s.remove(&names);
    if s.is_empty() {
        return (pats.iter().map(|p| (*p).clone()).collect(), body.clone());
    }
    let range_fv = s.range_free_vars();
    if names.iter().any(|n| range_fv.contains(n)) {
        let mut avoid = range_fv;
        avoid.extend(names.iter().cloned());
        let mut out_pats = Vec::new();
        let mut renames = Vec::new();
        for p in pats {
            out_pats.push(freshen_pattern_inner(p, &mut avoid, &mut renames));
        }
        let ren = Subst {
            map: renames
                .into_iter()
                .map(|(old, new)| (old, Value::var(new)))
                .collect(),
        };
        let body = subst_comp(body, &ren);
        (out_pats, subst_comp(&body, &s))
    } else {
        (
            pats.iter().map(|p| (*p).clone()).collect(),
            subst_comp(body, &s),
        )
    }
}

fn subst_handler(h: &Handler, s: &Subst) -> Handler {
    let (ps, ret_body) = subst_clause_body(&[&h.ret_binder], &h.ret_body, s);
    let ret_binder = ps.into_iter().next().unwrap();
    let op_clauses = h
        .op_clauses
        .iter()
        .map(|c| {
            let (ps, body) = subst_clause_body(&[&c.param, &c.karg], &c.body, s);
            let mut it = ps.into_iter();
            OpClause {
                label: c.label.clone(),
                param: it.next().unwrap(),
                karg: it.next().unwrap(),
                body,
            }
        })
        .collect();
    let sc_clauses = h
        .sc_clauses
        .iter()
        .map(|c| {
            let (ps, body) = subst_clause_body(&[&c.param, &c.parg, &c.karg], &c.body, s);
            let mut it = ps.into_iter();
            ScClause {
                label: c.label.clone(),
                param: it.next().unwrap(),
                parg: it.next().unwrap(),
                karg: it.next().unwrap(),
                body,
            }
        })
        .collect();
    let fwd = h.fwd.as_ref().map(|f| {
        let (ps, body) = subst_clause_body(&[&f.farg, &f.parg, &f.karg], &f.body, s);
        let mut it = ps.into_iter();
        FwdClause {
            farg: it.next().unwrap(),
            parg: it.next().unwrap(),
            karg: it.next().unwrap(),
            body,
        }
    });
    let bind_origin = h.bind_origin.as_ref().map(|(x, k, body)| {
        let (ps, body) = subst_clause_body(&[x, k], body, s);
        let mut it = ps.into_iter();
        (it.next().unwrap(), it.next().unwrap(), body)
    });
    Handler {
        ret_binder,
        ret_body,
        op_clauses,
        sc_clauses,
        fwd,
        bind_origin,
        annotation: h.annotation.clone(),
    }
}

fn subst_comp(c: &Computation, s: &Subst) -> Computation {
    if s.is_empty() {
        return c.clone();
    }
    let kind = match &c.kind {
        CompKind::Return(v) => CompKind::Return(subst_value(v, s)),
        CompKind::Absurd(v) => CompKind::Absurd(subst_value(v, s)),
        CompKind::Op {
            label,
            arg,
            binder,
            cont,
        } => {
            let arg = subst_value(arg, s);
            let (binder, cont) = subst_comp_under(binder, cont, s);
            CompKind::Op {
                label: label.clone(),
                arg,
                binder,
                cont: Box::new(cont),
            }
        }
        CompKind::Sc {
            label,
            arg,
            scoped_binder,
            scoped,
            cont_binder,
            cont,
        } => {
            let arg = subst_value(arg, s);
            let (scoped_binder, scoped) = subst_comp_under(scoped_binder, scoped, s);
            let (cont_binder, cont) = subst_comp_under(cont_binder, cont, s);
            CompKind::Sc {
                label: label.clone(),
                arg,
                scoped_binder,
                scoped: Box::new(scoped),
                cont_binder,
                cont: Box::new(cont),
            }
        }
        CompKind::Handle { handler, body } => CompKind::Handle {
            handler: subst_value(handler, s),
            body: Box::new(subst_comp(body, s)),
        },
        CompKind::Do {
            binder,
            first,
            rest,
        } => {
            let first = subst_comp(first, s);
            let (binder, rest) = subst_comp_under(binder, rest, s);
            CompKind::Do {
                binder,
                first: Box::new(first),
                rest: Box::new(rest),
            }
        }
        CompKind::App { func, arg } => CompKind::App {
            func: subst_value(func, s),
            arg: subst_value(arg, s),
        },
        CompKind::Let { name, value, body } => {
            let value = subst_value(value, s);
            let pat = Pattern::var(name.clone());
            let (pat, body) = subst_comp_under(&pat, body, s);
            let name = match pat {
                Pattern::Var(n) => n,
                _ => unreachable!(),
            };
            CompKind::Let {
                name,
                value,
                body: Box::new(body),
            }
        }
        CompKind::Case { scrutinee, arms } => {
            let scrutinee = subst_value(scrutinee, s);
            let arms = arms
                .iter()
                .map(|(pat, body)| subst_case_arm(pat, body, s))
                .collect();
            CompKind::Case { scrutinee, arms }
        }
        CompKind::If {
            cond,
            then_branch,
            else_branch,
        } => CompKind::If {
            cond: subst_value(cond, s),
            then_branch: Box::new(subst_comp(then_branch, s)),
            else_branch: Box::new(subst_comp(else_branch, s)),
        },
        CompKind::PrimApp { prim, args } => CompKind::PrimApp {
            prim: *prim,
            args: args.iter().map(|a| subst_value(a, s)).collect(),
        },
    };
    Computation::with_span(kind, c.span)
}

fn subst_case_arm(
    pat: &CasePattern,
    body: &Computation,
    s: &Subst,
) -> (CasePattern, Computation) {
    let mut names = BTreeSet::new();
    pat.bound_names(&mut names);
    let s = s.remove(&names);
    if s.is_empty() {
        return (pat.clone(), body.clone());
    }
    let range_fv = s.range_free_vars();
    if names.iter().any(|n| range_fv.contains(n)) {
        let mut avoid = range_fv;
        avoid.extend(names.iter().cloned());
        let mut renames = Vec::new();
        let pat2 = freshen_case_pattern(pat, &mut avoid, &mut renames);
        let ren = Subst {
            map: renames
                .into_iter()
                .map(|(old, new)| (old, Value::var(new)))
                .collect(),
        };
        let body = subst_comp(body, &ren);
        (pat2, subst_comp(&body, &s))
    } else {
        (pat.clone(), subst_comp(body, &s))
    }
}

fn freshen_case_pattern(
    p: &CasePattern,
    avoid: &mut BTreeSet<String>,
    renames: &mut Vec<(String, String)>,
) -> CasePattern {
    match p {
        CasePattern::Wild | CasePattern::Unit | CasePattern::Nil => p.clone(),
        CasePattern::Var(x) => {
            if avoid.contains(x) {
                let newx = fresh_name(x, avoid);
                avoid.insert(newx.clone());
                renames.push((x.clone(), newx.clone()));
                CasePattern::Var(newx)
            } else {
                avoid.insert(x.clone());
                CasePattern::Var(x.clone())
            }
        }
        CasePattern::Pair(a, b) => CasePattern::Pair(
            Box::new(freshen_case_pattern(a, avoid, renames)),
            Box::new(freshen_case_pattern(b, avoid, renames)),
        ),
        CasePattern::Cons(a, b) => CasePattern::Cons(
            Box::new(freshen_case_pattern(a, avoid, renames)),
            Box::new(freshen_case_pattern(b, avoid, renames)),
        ),
        CasePattern::Ctor(n, args) => CasePattern::Ctor(
            n.clone(),
            args.iter()
                .map(|a| freshen_case_pattern(a, avoid, renames))
                .collect(),
        ),
    }
}

/// Renames the names of `pat` that clash with `clash`, rewriting `body`
/// accordingly. Used by reduction rules that move a term under an existing
/// binder (e.g. algebraicity bubbling), which must not capture its free
/// variables.
pub fn rename_pattern_avoiding(
    pat: &Pattern,
    body: &Computation,
    clash: &BTreeSet<String>,
) -> (Pattern, Computation) {
    let mut names = BTreeSet::new();
    pat.bound_names(&mut names);
    if names.is_disjoint(clash) {
        return (pat.clone(), body.clone());
    }
    let mut avoid: BTreeSet<String> = clash.clone();
    avoid.extend(free_vars_comp(body));
    avoid.extend(names.iter().cloned());
    let mut renames: Vec<(String, Value)> = Vec::new();
    let pat2 = rename_targets(pat, clash, &mut avoid, &mut renames);
    let body2 = substitute_many(body, &renames);
    (pat2, body2)
}

fn rename_targets(
    pat: &Pattern,
    clash: &BTreeSet<String>,
    avoid: &mut BTreeSet<String>,
    renames: &mut Vec<(String, Value)>,
) -> Pattern {
    match pat {
        Pattern::Wild => Pattern::Wild,
        Pattern::Var(x) => {
            if clash.contains(x) {
                let newx = fresh_name(x, avoid);
                avoid.insert(newx.clone());
                renames.push((x.clone(), Value::var(newx.clone())));
                Pattern::Var(newx)
            } else {
                Pattern::Var(x.clone())
            }
        }
        Pattern::Pair(a, b) => Pattern::pair(
            rename_targets(a, clash, avoid, renames),
            rename_targets(b, clash, avoid, renames),
        ),
    }
}

// ---------------------------------------------------------------------------
// Alpha-equivalence
// ---------------------------------------------------------------------------

#[derive(Default, Clone)]
struct AlphaEnv {
    pairs: Vec<(String, String)>,
}

impl AlphaEnv {
    fn push_pattern(&mut self, a: &Pattern, b: &Pattern) -> Option<usize> {
        match (a, b) {
            (Pattern::Wild, Pattern::Wild) => Some(0),
            (Pattern::Var(x), Pattern::Var(y)) => {
                self.pairs.push((x.clone(), y.clone()));
                Some(1)
            }
            (Pattern::Pair(a1, a2), Pattern::Pair(b1, b2)) => {
                let n1 = self.push_pattern(a1, b1)?;
                let n2 = self.push_pattern(a2, b2)?;
                Some(n1 + n2)
            }
            _ => None,
        }
    }

    fn push_case_pattern(&mut self, a: &CasePattern, b: &CasePattern) -> Option<usize> {
        match (a, b) {
            (CasePattern::Wild, CasePattern::Wild)
            | (CasePattern::Unit, CasePattern::Unit)
            | (CasePattern::Nil, CasePattern::Nil) => Some(0),
            (CasePattern::Var(x), CasePattern::Var(y)) => {
                self.pairs.push((x.clone(), y.clone()));
                Some(1)
            }
            (CasePattern::Pair(a1, a2), CasePattern::Pair(b1, b2))
            | (CasePattern::Cons(a1, a2), CasePattern::Cons(b1, b2)) => {
                let n1 = self.push_case_pattern(a1, b1)?;
                let n2 = self.push_case_pattern(a2, b2)?;
                Some(n1 + n2)
            }
            (CasePattern::Ctor(n1, args1), CasePattern::Ctor(n2, args2)) => {
                if n1 != n2 || args1.len() != args2.len() {
                    return None;
                }
                let mut total = 0;
                for (x, y) in args1.iter().zip(args2) {
                    total += self.push_case_pattern(x, y)?;
                }
                Some(total)
            }
            _ => None,
        }
    }

    fn pop(&mut self, n: usize) {
        self.pairs.truncate(self.pairs.len() - n);
    }

    fn vars_match(&self, x: &str, y: &str) -> bool {
        for (a, b) in self.pairs.iter().rev() {
            let hit_a = a == x;
            let hit_b = b == y;
            if hit_a || hit_b {
                return hit_a && hit_b;
            }
        }
        x == y
    }
}

pub fn alpha_eq_value(a: &Value, b: &Value) -> bool {
    aeq_value(a, b, &mut AlphaEnv::default())
}

pub fn alpha_eq_comp(a: &Computation, b: &Computation) -> bool {
    aeq_comp(a, b, &mut AlphaEnv::default())
}

fn aeq_value(a: &Value, b: &Value, env: &mut AlphaEnv) -> bool {
    match (&a.kind, &b.kind) {
        (ValueKind::Unit, ValueKind::Unit) => true,
        (ValueKind::Int(x), ValueKind::Int(y)) => x == y,
        (ValueKind::Bool(x), ValueKind::Bool(y)) => x == y,
        (ValueKind::Str(x), ValueKind::Str(y)) => x == y,
        (ValueKind::Char(x), ValueKind::Char(y)) => x == y,
        (ValueKind::Var(x), ValueKind::Var(y)) => env.vars_match(x, y),
        (ValueKind::Pair(a1, a2), ValueKind::Pair(b1, b2)) => {
            aeq_value(a1, b1, env) && aeq_value(a2, b2, env)
        }
        (ValueKind::Lam(p1, c1), ValueKind::Lam(p2, c2)) => match env.push_pattern(p1, p2) {
            Some(n) => {
                let r = aeq_comp(c1, c2, env);
                env.pop(n);
                r
            }
            None => false,
        },
        (ValueKind::Handler(h1), ValueKind::Handler(h2)) => aeq_handler(h1, h2, env),
        (ValueKind::Ctor(n1, args1), ValueKind::Ctor(n2, args2)) => {
            n1 == n2
                && args1.len() == args2.len()
                && args1.iter().zip(args2).all(|(x, y)| aeq_value(x, y, env))
        }
        _ => false,
    }
}

fn aeq_binders_body(
    ps1: &[&Pattern],
    ps2: &[&Pattern],
    c1: &Computation,
    c2: &Computation,
    env: &mut AlphaEnv,
) -> bool {
    if ps1.len() != ps2.len() {
        return false;
    }
    let mut total = 0;
    for (p1, p2) in ps1.iter().zip(ps2) {
        match env.push_pattern(p1, p2) {
            Some(n) => total += n,
            None => {
                env.pop(total);
                return false;
            }
        }
    }
    let r = aeq_comp(c1, c2, env);
    env.pop(total);
    r
}

fn aeq_handler(h1: &Handler, h2: &Handler, env: &mut AlphaEnv) -> bool {
    if h1.op_clauses.len() != h2.op_clauses.len()
        || h1.sc_clauses.len() != h2.sc_clauses.len()
        || h1.fwd.is_some() != h2.fwd.is_some()
    {
        return false;
    }
    if !aeq_binders_body(
        &[&h1.ret_binder],
        &[&h2.ret_binder],
        &h1.ret_body,
        &h2.ret_body,
        env,
    ) {
        return false;
    }
    for (c1, c2) in h1.op_clauses.iter().zip(&h2.op_clauses) {
        if c1.label != c2.label
            || !aeq_binders_body(
                &[&c1.param, &c1.karg],
                &[&c2.param, &c2.karg],
                &c1.body,
                &c2.body,
                env,
            )
        {
            return false;
        }
    }
    for (c1, c2) in h1.sc_clauses.iter().zip(&h2.sc_clauses) {
        if c1.label != c2.label
            || !aeq_binders_body(
                &[&c1.param, &c1.parg, &c1.karg],
                &[&c2.param, &c2.parg, &c2.karg],
                &c1.body,
                &c2.body,
                env,
            )
        {
            return false;
        }
    }
    match (&h1.fwd, &h2.fwd) {
        (Some(f1), Some(f2)) => aeq_binders_body(
            &[&f1.farg, &f1.parg, &f1.karg],
            &[&f2.farg, &f2.parg, &f2.karg],
            &f1.body,
            &f2.body,
            env,
        ),
        (None, None) => true,
        _ => false,
    }
}

fn aeq_comp(a: &Computation, b: &Computation, env: &mut AlphaEnv) -> bool {
    match (&a.kind, &b.kind) {
        (CompKind::Return(v1), CompKind::Return(v2))
        | (CompKind::Absurd(v1), CompKind::Absurd(v2)) => aeq_value(v1, v2, env),
        (
            CompKind::Op {
                label: l1,
                arg: a1,
                binder: p1,
                cont: c1,
            },
            CompKind::Op {
                label: l2,
                arg: a2,
                binder: p2,
                cont: c2,
            },
        ) => l1 == l2 && aeq_value(a1, a2, env) && aeq_binders_body(&[p1], &[p2], c1, c2, env),
        (
            CompKind::Sc {
                label: l1,
                arg: a1,
                scoped_binder: sb1,
                scoped: s1,
                cont_binder: cb1,
                cont: c1,
            },
            CompKind::Sc {
                label: l2,
                arg: a2,
                scoped_binder: sb2,
                scoped: s2,
                cont_binder: cb2,
                cont: c2,
            },
        ) => {
            l1 == l2
                && aeq_value(a1, a2, env)
                && aeq_binders_body(&[sb1], &[sb2], s1, s2, env)
                && aeq_binders_body(&[cb1], &[cb2], c1, c2, env)
        }
        (
            CompKind::Handle {
                handler: h1,
                body: b1,
            },
            CompKind::Handle {
                handler: h2,
                body: b2,
            },
        ) => aeq_value(h1, h2, env) && aeq_comp(b1, b2, env),
        (
            CompKind::Do {
                binder: p1,
                first: f1,
                rest: r1,
            },
            CompKind::Do {
                binder: p2,
                first: f2,
                rest: r2,
            },
        ) => aeq_comp(f1, f2, env) && aeq_binders_body(&[p1], &[p2], r1, r2, env),
        (
            CompKind::App {
                func: f1,
                arg: a1,
            },
            CompKind::App {
                func: f2,
                arg: a2,
            },
        ) => aeq_value(f1, f2, env) && aeq_value(a1, a2, env),
        (
            CompKind::Let {
                name: n1,
                value: v1,
                body: b1,
            },
            CompKind::Let {
                name: n2,
                value: v2,
                body: b2,
            },
        ) => {
            aeq_value(v1, v2, env)
                && aeq_binders_body(
                    &[&Pattern::var(n1.clone())],
                    &[&Pattern::var(n2.clone())],
                    b1,
                    b2,
                    env,
                )
        }
        (
            CompKind::Case {
                scrutinee: s1,
                arms: arms1,
            },
            CompKind::Case {
                scrutinee: s2,
                arms: arms2,
            },
        ) => {
            if !aeq_value(s1, s2, env) || arms1.len() != arms2.len() {
                return false;
            }
            arms1.iter().zip(arms2).all(|((p1, c1), (p2, c2))| {
                match env.push_case_pattern(p1, p2) {
                    Some(n) => {
                        let r = aeq_comp(c1, c2, env);
                        env.pop(n);
                        r
                    }
                    None => false,
                }
            })
        }
        (
            CompKind::If {
                cond: c1,
                then_branch: t1,
                else_branch: e1,
            },
            CompKind::If {
                cond: c2,
                then_branch: t2,
                else_branch: e2,
            },
        ) => aeq_value(c1, c2, env) && aeq_comp(t1, t2, env) && aeq_comp(e1, e2, env),
        (
            CompKind::PrimApp {
                prim: p1,
                args: a1,
            },
            CompKind::PrimApp {
                prim: p2,
                args: a2,
            },
        ) => p1 == p2 && a1.len() == a2.len() && a1.iter().zip(a2).all(|(x, y)| aeq_value(x, y, env)),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ret_var(x: &str) -> Computation {
        Computation::ret(Value::var(x))
    }

    #[test]
    fn substitute_direct() {
        // substitute(return x, x, ()) = return ()
        let c = ret_var("x");
        let r = substitute(&c, "x", &Value::unit());
        assert_eq!(r, Computation::ret(Value::unit()));
    }

    #[test]
    fn substitute_capture_avoiding() {
        // substitute(λy. return x, x, y) = λy1. return y
        let lam = Value::lam(Pattern::var("y"), ret_var("x"));
        let c = Computation::ret(lam);
        let r = substitute(&c, "x", &Value::var("y"));
        let expect = Computation::ret(Value::lam(Pattern::var("z"), ret_var("y")));
        assert_eq!(r, expect);
    }

    #[test]
    fn substitute_under_do_binder() {
        // substitute(do p <- return b; op choose () (q. return (p,q)), b, true)
        let c = Computation::do_(
            Pattern::var("p"),
            Computation::ret(Value::var("b")),
            Computation::op(
                Label::op("choose"),
                Value::unit(),
                Pattern::var("q"),
                Computation::ret(Value::pair(Value::var("p"), Value::var("q"))),
            ),
        );
        let r = substitute(&c, "b", &Value::bool(true));
        let expect = Computation::do_(
            Pattern::var("p"),
            Computation::ret(Value::bool(true)),
            Computation::op(
                Label::op("choose"),
                Value::unit(),
                Pattern::var("q"),
                Computation::ret(Value::pair(Value::var("p"), Value::var("q"))),
            ),
        );
        assert_eq!(r, expect);
    }

    #[test]
    fn shadowed_binder_not_substituted() {
        // substitute(do x <- return 1; return x, x, 9) leaves the bound x alone
        let c = Computation::do_(
            Pattern::var("x"),
            Computation::ret(Value::int(1)),
            ret_var("x"),
        );
        let r = substitute(&c, "x", &Value::int(9));
        assert_eq!(r, c);
    }

    #[test]
    fn free_vars_examples() {
        let lam = Value::lam(Pattern::var("x"), ret_var("x"));
        assert!(free_vars_value(&lam).is_empty());

        let c = Computation::do_(
            Pattern::var("x"),
            Computation::ret(Value::var("y")),
            Computation::ret(Value::pair(Value::var("x"), Value::var("z"))),
        );
        let fv = free_vars_comp(&c);
        assert_eq!(
            fv.into_iter().collect::<Vec<_>>(),
            vec!["y".to_string(), "z".to_string()]
        );
    }

    #[test]
    fn alpha_eq_renamed_lambda() {
        let a = Value::lam(Pattern::var("x"), ret_var("x"));
        let b = Value::lam(Pattern::var("y"), ret_var("y"));
        assert!(alpha_eq_value(&a, &b));
        let c = Value::lam(Pattern::var("x"), ret_var("z"));
        assert!(!alpha_eq_value(&a, &c));
    }

    #[test]
    fn alpha_eq_pair_pattern() {
        let a = Value::lam(
            Pattern::pair(Pattern::var("z"), Pattern::var("s")),
            Computation::app(Value::var("k"), Value::var("z")),
        );
        let b = Value::lam(
            Pattern::pair(Pattern::var("u"), Pattern::var("v")),
            Computation::app(Value::var("k"), Value::var("u")),
        );
        assert!(alpha_eq_value(&a, &b));
    }

    #[test]
    fn list_roundtrip() {
        let v = Value::list(vec![Value::int(1), Value::int(2)]);
        let items = v.as_list().unwrap();
        assert_eq!(items.len(), 2);
        assert_eq!(*items[0], Value::int(1));
    }
}
