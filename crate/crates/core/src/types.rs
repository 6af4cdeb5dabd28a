//! Type grammar: value types, computation types, effect rows, and schemes,
//! together with row/type equivalence, type reduction, well-scopedness and
//! scheme instantiation.

use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TyVar(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowVar(pub u32);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValueType {
    Unit,
    Int,
    Bool,
    Str,
    Char,
    Empty,
    Pair(Box<ValueType>, Box<ValueType>),
    Fun(Box<ValueType>, Box<ComputationType>),
    HandlerTy(Box<ComputationType>, Box<ComputationType>),
    Var(TyVar),
    /// Single-parameter type operator, only introduced by handler annotations.
    TyLam(TyVar, Box<ValueType>),
    TyApp(Box<ValueType>, Box<ValueType>),
    List(Box<ValueType>),
    Sum(Box<ValueType>, Box<ValueType>),
    Data(String, Vec<ValueType>),
}

impl ValueType {
    pub fn fun(dom: ValueType, cod: ComputationType) -> ValueType {
        ValueType::Fun(Box::new(dom), Box::new(cod))
    }

    pub fn pair(a: ValueType, b: ValueType) -> ValueType {
        ValueType::Pair(Box::new(a), Box::new(b))
    }

    pub fn list(a: ValueType) -> ValueType {
        ValueType::List(Box::new(a))
    }

    pub fn sum(a: ValueType, b: ValueType) -> ValueType {
        ValueType::Sum(Box::new(a), Box::new(b))
    }

    pub fn handler(c: ComputationType, d: ComputationType) -> ValueType {
        ValueType::HandlerTy(Box::new(c), Box::new(d))
    }

    pub fn app(m: ValueType, a: ValueType) -> ValueType {
        ValueType::TyApp(Box::new(m), Box::new(a))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComputationType {
    pub val: ValueType,
    pub row: EffectRow,
}

impl ComputationType {
    pub fn new(val: ValueType, row: EffectRow) -> ComputationType {
        ComputationType { val, row }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowTail {
    Closed,
    Var(RowVar),
}

/// An effect row: a sequence of labels with an optional row-variable tail.
/// Labels keep their multiplicity; only the order of distinct labels is
/// insignificant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectRow {
    pub labels: Vec<String>,
    pub tail: RowTail,
}

impl EffectRow {
    pub fn closed(labels: Vec<String>) -> EffectRow {
        EffectRow {
            labels,
            tail: RowTail::Closed,
        }
    }

    pub fn open(labels: Vec<String>, tail: RowVar) -> EffectRow {
        EffectRow {
            labels,
            tail: RowTail::Var(tail),
        }
    }

    pub fn empty() -> EffectRow {
        EffectRow::closed(vec![])
    }

    pub fn var(v: RowVar) -> EffectRow {
        EffectRow::open(vec![], v)
    }

    /// Sorted labels (multiplicity preserved) plus the tail.
    pub fn canonical(&self) -> EffectRow {
        let mut labels = self.labels.clone();
        labels.sort();
        EffectRow {
            labels,
            tail: self.tail,
        }
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    /// Per-label multiplicities.
    pub fn multiplicities(&self) -> BTreeMap<&str, usize> {
        let mut m = BTreeMap::new();
        for l in &self.labels {
            *m.entry(l.as_str()).or_insert(0) += 1;
        }
        m
    }
}

/// Prenex type scheme: quantified type and row variables over a value type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeScheme {
    pub ty_vars: Vec<TyVar>,
    pub row_vars: Vec<RowVar>,
    pub body: ValueType,
}

impl TypeScheme {
    pub fn mono(body: ValueType) -> TypeScheme {
        TypeScheme {
            ty_vars: vec![],
            row_vars: vec![],
            body,
        }
    }
}

#[derive(Debug, Clone)]
pub enum CtxEntry {
    TermVar(String, TypeScheme),
    TyVarEntry(TyVar),
    RowVarEntry(RowVar),
}

/// Ordered typing context.
#[derive(Debug, Clone, Default)]
pub struct TypeContext {
    pub entries: Vec<CtxEntry>,
}

impl TypeContext {
    pub fn new() -> TypeContext {
        TypeContext { entries: vec![] }
    }

    pub fn push_term(&mut self, name: impl Into<String>, scheme: TypeScheme) {
        self.entries.push(CtxEntry::TermVar(name.into(), scheme));
    }

    pub fn push_ty_var(&mut self, v: TyVar) {
        self.entries.push(CtxEntry::TyVarEntry(v));
    }

    pub fn push_row_var(&mut self, v: RowVar) {
        self.entries.push(CtxEntry::RowVarEntry(v));
    }

    pub fn truncate(&mut self, len: usize) {
        self.entries.truncate(len);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup_term(&self, name: &str) -> Option<&TypeScheme> {
        self.entries.iter().rev().find_map(|e| match e {
            CtxEntry::TermVar(n, s) if n == name => Some(s),
            _ => None,
        })
    }

    pub fn has_ty_var(&self, v: TyVar) -> bool {
        self.entries
            .iter()
            .any(|e| matches!(e, CtxEntry::TyVarEntry(w) if *w == v))
    }

    pub fn has_row_var(&self, v: RowVar) -> bool {
        self.entries
            .iter()
            .any(|e| matches!(e, CtxEntry::RowVarEntry(w) if *w == v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemeError {
    ArityMismatch {
        expected_tys: usize,
        got_tys: usize,
        expected_rows: usize,
        got_rows: usize,
    },
}

impl fmt::Display for SchemeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeError::ArityMismatch {
                expected_tys,
                got_tys,
                expected_rows,
                got_rows,
            } => write!(
                f,
                "instantiation arity mismatch: expected {expected_tys} type and {expected_rows} row arguments, got {got_tys} and {got_rows}"
            ),
        }
    }
}

/// Simultaneous substitution of type and row variables.
pub fn subst_value_type(
    t: &ValueType,
    ty_map: &BTreeMap<TyVar, ValueType>,
    row_map: &BTreeMap<RowVar, EffectRow>,
) -> ValueType {
    match t {
        ValueType::Unit
        | ValueType::Int
        | ValueType::Bool
        | ValueType::Str
        | ValueType::Char
        | ValueType::Empty => t.clone(),
        ValueType::Pair(a, b) => ValueType::pair(
            subst_value_type(a, ty_map, row_map),
            subst_value_type(b, ty_map, row_map),
        ),
        ValueType::Fun(a, c) => ValueType::fun(
            subst_value_type(a, ty_map, row_map),
            subst_computation_type(c, ty_map, row_map),
        ),
        ValueType::HandlerTy(c, d) => ValueType::handler(
            subst_computation_type(c, ty_map, row_map),
            subst_computation_type(d, ty_map, row_map),
        ),
        ValueType::Var(v) => ty_map.get(v).cloned().unwrap_or_else(|| t.clone()),
        ValueType::TyLam(v, body) => {
            // Binders are globally fresh, so shadowing cannot occur; still,
            // drop a mapping for the binder defensively.
            if ty_map.contains_key(v) {
                let mut inner = ty_map.clone();
                inner.remove(v);
                ValueType::TyLam(*v, Box::new(subst_value_type(body, &inner, row_map)))
            } else {
                ValueType::TyLam(*v, Box::new(subst_value_type(body, ty_map, row_map)))
            }
        }
        ValueType::TyApp(m, a) => ValueType::app(
            subst_value_type(m, ty_map, row_map),
            subst_value_type(a, ty_map, row_map),
        ),
        ValueType::List(a) => ValueType::list(subst_value_type(a, ty_map, row_map)),
        ValueType::Sum(a, b) => ValueType::sum(
            subst_value_type(a, ty_map, row_map),
            subst_value_type(b, ty_map, row_map),
        ),
        ValueType::Data(n, args) => ValueType::Data(
            n.clone(),
            args.iter()
                .map(|a| subst_value_type(a, ty_map, row_map))
                .collect(),
        ),
    }
}

pub fn subst_computation_type(
    c: &ComputationType,
    ty_map: &BTreeMap<TyVar, ValueType>,
    row_map: &BTreeMap<RowVar, EffectRow>,
) -> ComputationType {
    ComputationType {
        val: subst_value_type(&c.val, ty_map, row_map),
        row: subst_row(&c.row, row_map),
    }
}

pub fn subst_row(row: &EffectRow, row_map: &BTreeMap<RowVar, EffectRow>) -> EffectRow {
    match row.tail {
        RowTail::Closed => row.clone(),
        RowTail::Var(v) => match row_map.get(&v) {
            None => row.clone(),
            Some(r) => {
                let expanded = subst_row(r, row_map);
                let mut labels = row.labels.clone();
                labels.extend(expanded.labels);
                EffectRow {
                    labels,
                    tail: expanded.tail,
                }
            }
        },
    }
}

/// Beta-normalizes type applications (Q-AppAbs). Handler annotations only
/// admit single-parameter operators, so this terminates.
pub fn reduce_type(t: &ValueType) -> ValueType {
    match t {
        ValueType::Unit
        | ValueType::Int
        | ValueType::Bool
        | ValueType::Str
        | ValueType::Char
        | ValueType::Empty
        | ValueType::Var(_) => t.clone(),
        ValueType::Pair(a, b) => ValueType::pair(reduce_type(a), reduce_type(b)),
        ValueType::Fun(a, c) => ValueType::fun(reduce_type(a), reduce_computation_type(c)),
        ValueType::HandlerTy(c, d) => {
            ValueType::handler(reduce_computation_type(c), reduce_computation_type(d))
        }
        ValueType::TyLam(v, body) => ValueType::TyLam(*v, Box::new(reduce_type(body))),
        ValueType::TyApp(m, a) => {
            let m = reduce_type(m);
            let a = reduce_type(a);
            match m {
                ValueType::TyLam(v, body) => {
                    let mut map = BTreeMap::new();
                    map.insert(v, a);
                    reduce_type(&subst_value_type(&body, &map, &BTreeMap::new()))
                }
                m => ValueType::app(m, a),
            }
        }
        ValueType::List(a) => ValueType::list(reduce_type(a)),
        ValueType::Sum(a, b) => ValueType::sum(reduce_type(a), reduce_type(b)),
        ValueType::Data(n, args) => {
            ValueType::Data(n.clone(), args.iter().map(reduce_type).collect())
        }
    }
}

pub fn reduce_computation_type(c: &ComputationType) -> ComputationType {
    ComputationType {
        val: reduce_type(&c.val),
        row: c.row.clone(),
    }
}

/// Row equivalence: the congruence closure of R-Refl/R-Symm/R-Trans/R-Head/
/// R-Swap, decided by comparing canonical forms.
pub fn row_equiv(a: &EffectRow, b: &EffectRow) -> bool {
    a.canonical() == b.canonical()
}

fn ty_vars_correspond(
    a: TyVar,
    b: TyVar,
    map: &BTreeMap<TyVar, TyVar>,
    rmap: &BTreeMap<TyVar, TyVar>,
) -> bool {
    match (map.get(&a), rmap.get(&b)) {
        (Some(&mb), Some(&ma)) => mb == b && ma == a,
        (None, None) => a == b,
        _ => false,
    }
}

fn type_equiv_inner(
    a: &ValueType,
    b: &ValueType,
    map: &mut BTreeMap<TyVar, TyVar>,
    rmap: &mut BTreeMap<TyVar, TyVar>,
) -> bool {
    match (a, b) {
        (ValueType::Unit, ValueType::Unit)
        | (ValueType::Int, ValueType::Int)
        | (ValueType::Bool, ValueType::Bool)
        | (ValueType::Str, ValueType::Str)
        | (ValueType::Char, ValueType::Char)
        | (ValueType::Empty, ValueType::Empty) => true,
        (ValueType::Pair(a1, b1), ValueType::Pair(a2, b2))
        | (ValueType::Sum(a1, b1), ValueType::Sum(a2, b2)) => {
            type_equiv_inner(a1, a2, map, rmap) && type_equiv_inner(b1, b2, map, rmap)
        }
        (ValueType::Fun(a1, c1), ValueType::Fun(a2, c2)) => {
            type_equiv_inner(a1, a2, map, rmap) && comp_equiv_inner(c1, c2, map, rmap)
        }
        (ValueType::HandlerTy(c1, d1), ValueType::HandlerTy(c2, d2)) => {
            comp_equiv_inner(c1, c2, map, rmap) && comp_equiv_inner(d1, d2, map, rmap)
        }
        (ValueType::Var(v), ValueType::Var(w)) => ty_vars_correspond(*v, *w, map, rmap),
        (ValueType::TyLam(v, b1), ValueType::TyLam(w, b2)) => {
            let old_f = map.insert(*v, *w);
            let old_b = rmap.insert(*w, *v);
            let r = type_equiv_inner(b1, b2, map, rmap);
            match old_f {
                Some(x) => {
                    map.insert(*v, x);
                }
                None => {
                    map.remove(v);
                }
            }
            match old_b {
                Some(x) => {
                    rmap.insert(*w, x);
                }
                None => {
                    rmap.remove(w);
                }
            }
            r
        }
        (ValueType::TyApp(m1, a1), ValueType::TyApp(m2, a2)) => {
            type_equiv_inner(m1, m2, map, rmap) && type_equiv_inner(a1, a2, map, rmap)
        }
        (ValueType::List(a1), ValueType::List(a2)) => type_equiv_inner(a1, a2, map, rmap),
        (ValueType::Data(n1, args1), ValueType::Data(n2, args2)) => {
            n1 == n2
                && args1.len() == args2.len()
                && args1
                    .iter()
                    .zip(args2)
                    .all(|(x, y)| type_equiv_inner(x, y, map, rmap))
        }
        _ => false,
    }
}

fn comp_equiv_inner(
    a: &ComputationType,
    b: &ComputationType,
    map: &mut BTreeMap<TyVar, TyVar>,
    rmap: &mut BTreeMap<TyVar, TyVar>,
) -> bool {
    type_equiv_inner(&a.val, &b.val, map, rmap) && row_equiv(&a.row, &b.row)
}

/// Type equivalence: Q-AppAbs-normalize both sides, then compare structurally
/// modulo row equivalence and alpha-equivalence of type-operator binders.
pub fn type_equiv(a: &ValueType, b: &ValueType) -> bool {
    let a = reduce_type(a);
    let b = reduce_type(b);
    type_equiv_inner(&a, &b, &mut BTreeMap::new(), &mut BTreeMap::new())
}

pub fn comp_type_equiv(a: &ComputationType, b: &ComputationType) -> bool {
    let a = reduce_computation_type(a);
    let b = reduce_computation_type(b);
    comp_equiv_inner(&a, &b, &mut BTreeMap::new(), &mut BTreeMap::new())
}

/// Scheme equivalence up to renaming and reordering of the quantified
/// variables. Free variables must match exactly.
pub fn scheme_alpha_eq(a: &TypeScheme, b: &TypeScheme) -> bool {
    if a.ty_vars.len() != b.ty_vars.len() || a.row_vars.len() != b.row_vars.len() {
        return false;
    }
    let mut ty_map: BTreeMap<TyVar, TyVar> = BTreeMap::new();
    let mut row_map: BTreeMap<RowVar, RowVar> = BTreeMap::new();
    scheme_body_match(a, b, &a.body, &b.body, &mut ty_map, &mut row_map)
}

fn bind_ty(
    a: &TypeScheme,
    b: &TypeScheme,
    x: TyVar,
    y: TyVar,
    ty_map: &mut BTreeMap<TyVar, TyVar>,
) -> bool {
    let xb = a.ty_vars.contains(&x);
    let yb = b.ty_vars.contains(&y);
    match (xb, yb) {
        (false, false) => x == y,
        (true, true) => match ty_map.get(&x) {
            Some(&m) => m == y,
            None => {
                if ty_map.values().any(|&m| m == y) {
                    false
                } else {
                    ty_map.insert(x, y);
                    true
                }
            }
        },
        _ => false,
    }
}

fn bind_row(
    a: &TypeScheme,
    b: &TypeScheme,
    x: RowVar,
    y: RowVar,
    row_map: &mut BTreeMap<RowVar, RowVar>,
) -> bool {
    let xb = a.row_vars.contains(&x);
    let yb = b.row_vars.contains(&y);
    match (xb, yb) {
        (false, false) => x == y,
        (true, true) => match row_map.get(&x) {
            Some(&m) => m == y,
            None => {
                if row_map.values().any(|&m| m == y) {
                    false
                } else {
                    row_map.insert(x, y);
                    true
                }
            }
        },
        _ => false,
    }
}

fn rows_match(
    a: &TypeScheme,
    b: &TypeScheme,
    r1: &EffectRow,
    r2: &EffectRow,
    row_map: &mut BTreeMap<RowVar, RowVar>,
) -> bool {
    let c1 = r1.canonical();
    let c2 = r2.canonical();
    if c1.labels != c2.labels {
        return false;
    }
    match (c1.tail, c2.tail) {
        (RowTail::Closed, RowTail::Closed) => true,
        (RowTail::Var(x), RowTail::Var(y)) => bind_row(a, b, x, y, row_map),
        _ => false,
    }
}

fn scheme_body_match(
    sa: &TypeScheme,
    sb: &TypeScheme,
    t1: &ValueType,
    t2: &ValueType,
    ty_map: &mut BTreeMap<TyVar, TyVar>,
    row_map: &mut BTreeMap<RowVar, RowVar>,
) -> bool {
    let t1 = reduce_type(t1);
    let t2 = reduce_type(t2);
    match (&t1, &t2) {
        (ValueType::Unit, ValueType::Unit)
        | (ValueType::Int, ValueType::Int)
        | (ValueType::Bool, ValueType::Bool)
        | (ValueType::Str, ValueType::Str)
        | (ValueType::Char, ValueType::Char)
        | (ValueType::Empty, ValueType::Empty) => true,
        (ValueType::Var(x), ValueType::Var(y)) => bind_ty(sa, sb, *x, *y, ty_map),
        (ValueType::Pair(a1, b1), ValueType::Pair(a2, b2))
        | (ValueType::Sum(a1, b1), ValueType::Sum(a2, b2)) => {
            scheme_body_match(sa, sb, a1, a2, ty_map, row_map)
                && scheme_body_match(sa, sb, b1, b2, ty_map, row_map)
        }
        (ValueType::List(a1), ValueType::List(a2)) => {
            scheme_body_match(sa, sb, a1, a2, ty_map, row_map)
        }
        (ValueType::Fun(a1, c1), ValueType::Fun(a2, c2)) => {
            scheme_body_match(sa, sb, a1, a2, ty_map, row_map)
                && scheme_body_match(sa, sb, &c1.val, &c2.val, ty_map, row_map)
                && rows_match(sa, sb, &c1.row, &c2.row, row_map)
        }
        (ValueType::HandlerTy(c1, d1), ValueType::HandlerTy(c2, d2)) => {
            scheme_body_match(sa, sb, &c1.val, &c2.val, ty_map, row_map)
                && rows_match(sa, sb, &c1.row, &c2.row, row_map)
                && scheme_body_match(sa, sb, &d1.val, &d2.val, ty_map, row_map)
                && rows_match(sa, sb, &d1.row, &d2.row, row_map)
        }
        (ValueType::Data(n1, args1), ValueType::Data(n2, args2)) => {
            n1 == n2
                && args1.len() == args2.len()
                && args1
                    .iter()
                    .zip(args2)
                    .all(|(x, y)| scheme_body_match(sa, sb, x, y, ty_map, row_map))
        }
        (ValueType::TyLam(_, _), ValueType::TyLam(_, _)) => type_equiv(&t1, &t2),
        _ => false,
    }
}

/// Well-scopedness of a value type under a context (the W-* rules).
pub fn well_scoped_value(ctx: &TypeContext, t: &ValueType) -> bool {
    match t {
        ValueType::Unit
        | ValueType::Int
        | ValueType::Bool
        | ValueType::Str
        | ValueType::Char
        | ValueType::Empty => true,
        ValueType::Pair(a, b) | ValueType::Sum(a, b) => {
            well_scoped_value(ctx, a) && well_scoped_value(ctx, b)
        }
        ValueType::Fun(a, c) => well_scoped_value(ctx, a) && well_scoped_comp(ctx, c),
        ValueType::HandlerTy(c, d) => well_scoped_comp(ctx, c) && well_scoped_comp(ctx, d),
        ValueType::Var(v) => ctx.has_ty_var(*v),
        ValueType::TyLam(v, body) => {
            let mut inner = ctx.clone();
            inner.push_ty_var(*v);
            well_scoped_value(&inner, body)
        }
        ValueType::TyApp(m, a) => well_scoped_value(ctx, m) && well_scoped_value(ctx, a),
        ValueType::List(a) => well_scoped_value(ctx, a),
        ValueType::Data(_, args) => args.iter().all(|a| well_scoped_value(ctx, a)),
    }
}

pub fn well_scoped_comp(ctx: &TypeContext, c: &ComputationType) -> bool {
    well_scoped_value(ctx, &c.val) && well_scoped_row(ctx, &c.row)
}

pub fn well_scoped_row(ctx: &TypeContext, row: &EffectRow) -> bool {
    match row.tail {
        RowTail::Closed => true,
        RowTail::Var(v) => ctx.has_row_var(v),
    }
}

pub fn well_scoped_scheme(ctx: &TypeContext, s: &TypeScheme) -> bool {
    let mut inner = ctx.clone();
    for v in &s.ty_vars {
        inner.push_ty_var(*v);
    }
    for v in &s.row_vars {
        inner.push_row_var(*v);
    }
    well_scoped_value(&inner, &s.body)
}

/// σ-instantiation with explicit arguments.
pub fn scheme_instantiate(
    s: &TypeScheme,
    ty_args: &[ValueType],
    row_args: &[EffectRow],
) -> Result<ValueType, SchemeError> {
    if ty_args.len() != s.ty_vars.len() || row_args.len() != s.row_vars.len() {
        return Err(SchemeError::ArityMismatch {
            expected_tys: s.ty_vars.len(),
            got_tys: ty_args.len(),
            expected_rows: s.row_vars.len(),
            got_rows: row_args.len(),
        });
    }
    let ty_map: BTreeMap<TyVar, ValueType> = s
        .ty_vars
        .iter()
        .copied()
        .zip(ty_args.iter().cloned())
        .collect();
    let row_map: BTreeMap<RowVar, EffectRow> = s
        .row_vars
        .iter()
        .copied()
        .zip(row_args.iter().cloned())
        .collect();
    Ok(subst_value_type(&s.body, &ty_map, &row_map))
}

/// Free type and row variables of a value type, in first-occurrence order.
pub fn free_type_vars(t: &ValueType) -> (Vec<TyVar>, Vec<RowVar>) {
    let mut tys = Vec::new();
    let mut rows = Vec::new();
    let mut bound = Vec::new();
    collect_free(t, &mut tys, &mut rows, &mut bound);
    (tys, rows)
}

fn collect_free(
    t: &ValueType,
    tys: &mut Vec<TyVar>,
    rows: &mut Vec<RowVar>,
    bound: &mut Vec<TyVar>,
) {
    match t {
        ValueType::Unit
        | ValueType::Int
        | ValueType::Bool
        | ValueType::Str
        | ValueType::Char
        | ValueType::Empty => {}
        ValueType::Pair(a, b) | ValueType::Sum(a, b) | ValueType::TyApp(a, b) => {
            collect_free(a, tys, rows, bound);
            collect_free(b, tys, rows, bound);
        }
        ValueType::Fun(a, c) => {
            collect_free(a, tys, rows, bound);
            collect_free_comp(c, tys, rows, bound);
        }
        ValueType::HandlerTy(c, d) => {
            collect_free_comp(c, tys, rows, bound);
            collect_free_comp(d, tys, rows, bound);
        }
        ValueType::Var(v) => {
            if !bound.contains(v) && !tys.contains(v) {
                tys.push(*v);
            }
        }
        ValueType::TyLam(v, body) => {
            bound.push(*v);
            collect_free(body, tys, rows, bound);
            bound.pop();
        }
        ValueType::List(a) => collect_free(a, tys, rows, bound),
        ValueType::Data(_, args) => {
            for a in args {
                collect_free(a, tys, rows, bound);
            }
        }
    }
}

fn collect_free_comp(
    c: &ComputationType,
    tys: &mut Vec<TyVar>,
    rows: &mut Vec<RowVar>,
    bound: &mut Vec<TyVar>,
) {
    collect_free(&c.val, tys, rows, bound);
    if let RowTail::Var(v) = c.row.tail {
        if !rows.contains(&v) {
            rows.push(v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(s: &str) -> String {
        s.to_string()
    }

    #[test]
    fn swap_distinct_labels() {
        let a = EffectRow::closed(vec![l("choose"), l("once")]);
        let b = EffectRow::closed(vec![l("once"), l("choose")]);
        assert!(row_equiv(&a, &b));
    }

    #[test]
    fn multiplicity_preserved() {
        let a = EffectRow::open(vec![l("choose"), l("choose")], RowVar(0));
        let b = EffectRow::open(vec![l("choose")], RowVar(0));
        assert!(!row_equiv(&a, &b));
    }

    #[test]
    fn distinct_row_vars_differ() {
        let a = EffectRow::var(RowVar(0));
        let b = EffectRow::var(RowVar(1));
        assert!(!row_equiv(&a, &b));
    }

    #[test]
    fn q_app_abs_single_step() {
        // (λα.(α,α)) Bool ≡ (Bool,Bool)
        let m = ValueType::TyLam(
            TyVar(0),
            Box::new(ValueType::pair(
                ValueType::Var(TyVar(0)),
                ValueType::Var(TyVar(0)),
            )),
        );
        let app = ValueType::app(m, ValueType::Bool);
        assert!(type_equiv(
            &app,
            &ValueType::pair(ValueType::Bool, ValueType::Bool)
        ));
    }

    #[test]
    fn comp_type_row_swap() {
        let a = ComputationType::new(
            ValueType::Bool,
            EffectRow::closed(vec![l("once"), l("choose")]),
        );
        let b = ComputationType::new(
            ValueType::Bool,
            EffectRow::closed(vec![l("choose"), l("once")]),
        );
        assert!(comp_type_equiv(&a, &b));
    }

    #[test]
    fn list_app_abs() {
        // List Int ≡ (λα. List α) Int
        let m = ValueType::TyLam(TyVar(3), Box::new(ValueType::list(ValueType::Var(TyVar(3)))));
        let app = ValueType::app(m, ValueType::Int);
        assert!(type_equiv(&ValueType::list(ValueType::Int), &app));
    }

    #[test]
    fn reduce_no_redex_is_identity() {
        let t = ValueType::Int;
        assert_eq!(reduce_type(&t), ValueType::Int);
    }

    #[test]
    fn reduce_under_fun_codomain() {
        // (λα. Int -<mu>-> (α,Int)) applied under a Fun codomain reduces in place.
        let m = ValueType::TyLam(
            TyVar(7),
            Box::new(ValueType::fun(
                ValueType::Int,
                ComputationType::new(
                    ValueType::pair(ValueType::Var(TyVar(7)), ValueType::Int),
                    EffectRow::var(RowVar(1)),
                ),
            )),
        );
        let t = ValueType::fun(
            ValueType::Bool,
            ComputationType::new(ValueType::app(m, ValueType::Bool), EffectRow::empty()),
        );
        let r = reduce_type(&t);
        let expect = ValueType::fun(
            ValueType::Bool,
            ComputationType::new(
                ValueType::fun(
                    ValueType::Int,
                    ComputationType::new(
                        ValueType::pair(ValueType::Bool, ValueType::Int),
                        EffectRow::var(RowVar(1)),
                    ),
                ),
                EffectRow::empty(),
            ),
        );
        assert_eq!(r, expect);
    }

    #[test]
    fn well_scoped_examples() {
        let ctx = TypeContext::new();
        assert!(!well_scoped_value(&ctx, &ValueType::Var(TyVar(0))));
        let mut ctx2 = TypeContext::new();
        ctx2.push_row_var(RowVar(0));
        assert!(well_scoped_row(
            &ctx2,
            &EffectRow::open(vec![l("choose")], RowVar(0))
        ));
    }

    #[test]
    fn instantiate_mono_scheme() {
        let s = TypeScheme::mono(ValueType::Int);
        assert_eq!(scheme_instantiate(&s, &[], &[]), Ok(ValueType::Int));
    }

    #[test]
    fn instantiate_arity_mismatch() {
        let s = TypeScheme {
            ty_vars: vec![TyVar(0)],
            row_vars: vec![],
            body: ValueType::Var(TyVar(0)),
        };
        assert!(scheme_instantiate(&s, &[], &[]).is_err());
    }

    #[test]
    fn instantiate_handler_scheme() {
        // (∀α. α!<F> ⇒ List α!<>) at Bool
        let f = EffectRow::closed(vec![l("choose"), l("once")]);
        let s = TypeScheme {
            ty_vars: vec![TyVar(0)],
            row_vars: vec![],
            body: ValueType::handler(
                ComputationType::new(ValueType::Var(TyVar(0)), f.clone()),
                ComputationType::new(
                    ValueType::list(ValueType::Var(TyVar(0))),
                    EffectRow::empty(),
                ),
            ),
        };
        let inst = scheme_instantiate(&s, &[ValueType::Bool], &[]).unwrap();
        assert_eq!(
            inst,
            ValueType::handler(
                ComputationType::new(ValueType::Bool, f),
                ComputationType::new(ValueType::list(ValueType::Bool), EffectRow::empty()),
            )
        );
    }

    #[test]
    fn scheme_alpha_eq_permutes_quantifiers() {
        // ∀a b. (a, b)  ~  ∀b a. (a, b)
        let s1 = TypeScheme {
            ty_vars: vec![TyVar(0), TyVar(1)],
            row_vars: vec![],
            body: ValueType::pair(ValueType::Var(TyVar(0)), ValueType::Var(TyVar(1))),
        };
        let s2 = TypeScheme {
            ty_vars: vec![TyVar(5), TyVar(4)],
            row_vars: vec![],
            body: ValueType::pair(ValueType::Var(TyVar(4)), ValueType::Var(TyVar(5))),
        };
        assert!(scheme_alpha_eq(&s1, &s2));
    }

    #[test]
    fn scheme_alpha_eq_rejects_non_linear() {
        let s1 = TypeScheme {
            ty_vars: vec![TyVar(0), TyVar(1)],
            row_vars: vec![],
            body: ValueType::pair(ValueType::Var(TyVar(0)), ValueType::Var(TyVar(1))),
        };
        let s2 = TypeScheme {
            ty_vars: vec![TyVar(2), TyVar(3)],
            row_vars: vec![],
            body: ValueType::pair(ValueType::Var(TyVar(2)), ValueType::Var(TyVar(2))),
        };
        assert!(!scheme_alpha_eq(&s1, &s2));
    }
}
