//! Syntax-directed type-and-effect checking and inference: row unification
//! with an occurs check, let-generalization, and polymorphic handler typing
//! against explicit type-operator annotations. Types are reduced before
//! unifying, so the annotated operator applications never require
//! higher-order unification.

use crate::pretty::{pretty_comp_type, pretty_scheme, pretty_type};
use crate::span::{LineMap, Span};
use crate::syntax::*;
use crate::types::*;
use std::collections::{BTreeMap, HashMap, HashSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    UnboundVar,
    LabelFlavorMismatch,
    RowMismatch,
    TypeMismatch,
    OccursCheck,
    AnnotationArity,
    MissingFwd,
    NonExhaustiveCase,
    UnknownLabel,
}

impl DiagnosticKind {
    pub fn name(self) -> &'static str {
        match self {
            DiagnosticKind::UnboundVar => "UnboundVar",
            DiagnosticKind::LabelFlavorMismatch => "LabelFlavorMismatch",
            DiagnosticKind::RowMismatch => "RowMismatch",
            DiagnosticKind::TypeMismatch => "TypeMismatch",
            DiagnosticKind::OccursCheck => "OccursCheck",
            DiagnosticKind::AnnotationArity => "AnnotationArity",
            DiagnosticKind::MissingFwd => "MissingFwd",
            DiagnosticKind::NonExhaustiveCase => "NonExhaustiveCase",
            DiagnosticKind::UnknownLabel => "UnknownLabel",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub span: Span,
    pub expected: String,
    pub actual: String,
    pub note: String,
}

impl Diagnostic {
    /// `file:line:col: <kind>: expected <T> but found <U>` rendering.
    pub fn render(&self, file: &str, lines: &LineMap) -> String {
        let (line, col) = lines.line_col(self.span.lo);
        let mut s = format!("{file}:{line}:{col}: {}", self.kind.name());
        if !self.expected.is_empty() || !self.actual.is_empty() {
            s.push_str(&format!(
                ": expected {} but found {}",
                self.expected, self.actual
            ));
        }
        if !self.note.is_empty() {
            s.push_str(&format!(" ({})", self.note));
        }
        s
    }
}

/// Unification substitution plus the fresh-variable supply. Rigid variables
/// are skolem constants: they unify only with themselves.
#[derive(Debug, Clone, Default)]
pub struct InferenceState {
    ty_subst: HashMap<u32, ValueType>,
    row_subst: HashMap<u32, EffectRow>,
    next: u32,
    rigid_tys: HashSet<u32>,
    rigid_rows: HashSet<u32>,
}

enum UnifyErr {
    Mismatch,
    Rows,
    Occurs,
}

impl InferenceState {
    pub fn new(next: u32) -> InferenceState {
        InferenceState {
            next,
            ..Default::default()
        }
    }

    pub fn fresh_ty(&mut self) -> TyVar {
        let v = TyVar(self.next);
        self.next += 1;
        v
    }

    pub fn fresh_row(&mut self) -> RowVar {
        let v = RowVar(self.next);
        self.next += 1;
        v
    }

    pub fn fresh_rigid_ty(&mut self) -> TyVar {
        let v = self.fresh_ty();
        self.rigid_tys.insert(v.0);
        v
    }

    pub fn fresh_rigid_row(&mut self) -> RowVar {
        let v = self.fresh_row();
        self.rigid_rows.insert(v.0);
        v
    }

    pub fn is_rigid_ty(&self, v: TyVar) -> bool {
        self.rigid_tys.contains(&v.0)
    }

    pub fn is_rigid_row(&self, v: RowVar) -> bool {
        self.rigid_rows.contains(&v.0)
    }

    pub fn apply_ty(&self, t: &ValueType) -> ValueType {
        match t {
            ValueType::Unit
            | ValueType::Int
            | ValueType::Bool
            | ValueType::Str
            | ValueType::Char
            | ValueType::Empty => t.clone(),
            ValueType::Var(v) => match self.ty_subst.get(&v.0) {
                Some(r) => self.apply_ty(r),
                None => t.clone(),
            },
            ValueType::Pair(a, b) => ValueType::pair(self.apply_ty(a), self.apply_ty(b)),
            ValueType::Fun(a, c) => ValueType::fun(self.apply_ty(a), self.apply_comp(c)),
            ValueType::HandlerTy(c, d) => {
                ValueType::handler(self.apply_comp(c), self.apply_comp(d))
            }
            ValueType::TyLam(v, b) => ValueType::TyLam(*v, Box::new(self.apply_ty(b))),
            ValueType::TyApp(m, a) => ValueType::app(self.apply_ty(m), self.apply_ty(a)),
            ValueType::List(a) => ValueType::list(self.apply_ty(a)),
            ValueType::Sum(a, b) => ValueType::sum(self.apply_ty(a), self.apply_ty(b)),
            ValueType::Data(n, args) => ValueType::Data(
                n.clone(),
                args.iter().map(|a| self.apply_ty(a)).collect(),
            ),
        }
    }

    pub fn apply_row(&self, r: &EffectRow) -> EffectRow {
        match r.tail {
            RowTail::Closed => r.clone(),
            RowTail::Var(v) => match self.row_subst.get(&v.0) {
                None => r.clone(),
                Some(rest) => {
                    let rest = self.apply_row(rest);
                    let mut labels = r.labels.clone();
                    labels.extend(rest.labels);
                    EffectRow {
                        labels,
                        tail: rest.tail,
                    }
                }
            },
        }
    }

    pub fn apply_comp(&self, c: &ComputationType) -> ComputationType {
        ComputationType {
            val: self.apply_ty(&c.val),
            row: self.apply_row(&c.row),
        }
    }

    fn occurs_ty(&self, v: TyVar, t: &ValueType) -> bool {
        match t {
            ValueType::Var(w) => *w == v,
            ValueType::Unit
            | ValueType::Int
            | ValueType::Bool
            | ValueType::Str
            | ValueType::Char
            | ValueType::Empty => false,
            ValueType::Pair(a, b) | ValueType::Sum(a, b) | ValueType::TyApp(a, b) => {
                self.occurs_ty(v, a) || self.occurs_ty(v, b)
            }
            ValueType::Fun(a, c) => self.occurs_ty(v, a) || self.occurs_ty(v, &c.val),
            ValueType::HandlerTy(c, d) => {
                self.occurs_ty(v, &c.val) || self.occurs_ty(v, &d.val)
            }
            ValueType::TyLam(_, b) => self.occurs_ty(v, b),
            ValueType::List(a) => self.occurs_ty(v, a),
            ValueType::Data(_, args) => args.iter().any(|a| self.occurs_ty(v, a)),
        }
    }

    fn bind_ty(&mut self, v: TyVar, t: ValueType) -> Result<(), UnifyErr> {
        if let ValueType::Var(w) = &t {
            if *w == v {
                return Ok(());
            }
        }
        if self.occurs_ty(v, &t) {
            return Err(UnifyErr::Occurs);
        }
        debug_assert_eq!(self.apply_ty(&t), t, "substitution must be pre-applied");
        self.ty_subst.insert(v.0, t);
        Ok(())
    }

    fn bind_row(&mut self, v: RowVar, r: EffectRow) -> Result<(), UnifyErr> {
        if let RowTail::Var(w) = r.tail {
            if w == v {
                if r.labels.is_empty() {
                    return Ok(());
                }
                return Err(UnifyErr::Occurs);
            }
        }
        debug_assert_eq!(self.apply_row(&r), r, "substitution must be pre-applied");
        self.row_subst.insert(v.0, r);
        Ok(())
    }

    /// Most general unifier of two value types, reducing first.
    fn unify_ty(&mut self, a: &ValueType, b: &ValueType) -> Result<(), UnifyErr> {
        let a = reduce_type(&self.apply_ty(a));
        let b = reduce_type(&self.apply_ty(b));
        match (&a, &b) {
            (ValueType::Var(v), ValueType::Var(w)) if v == w => Ok(()),
            (ValueType::Var(v), _) if !self.is_rigid_ty(*v) => self.bind_ty(*v, b),
            (_, ValueType::Var(w)) if !self.is_rigid_ty(*w) => self.bind_ty(*w, a),
            (ValueType::Unit, ValueType::Unit)
            | (ValueType::Int, ValueType::Int)
            | (ValueType::Bool, ValueType::Bool)
            | (ValueType::Str, ValueType::Str)
            | (ValueType::Char, ValueType::Char)
            | (ValueType::Empty, ValueType::Empty) => Ok(()),
            (ValueType::Pair(a1, b1), ValueType::Pair(a2, b2))
            | (ValueType::Sum(a1, b1), ValueType::Sum(a2, b2)) => {
                self.unify_ty(a1, a2)?;
                self.unify_ty(b1, b2)
            }
            (ValueType::Fun(a1, c1), ValueType::Fun(a2, c2)) => {
                self.unify_ty(a1, a2)?;
                self.unify_comp(c1, c2)
            }
            (ValueType::HandlerTy(c1, d1), ValueType::HandlerTy(c2, d2)) => {
                self.unify_comp(c1, c2)?;
                self.unify_comp(d1, d2)
            }
            (ValueType::List(a1), ValueType::List(a2)) => self.unify_ty(a1, a2),
            (ValueType::Data(n1, args1), ValueType::Data(n2, args2))
                if n1 == n2 && args1.len() == args2.len() =>
            {
                for (x, y) in args1.iter().zip(args2) {
                    self.unify_ty(x, y)?;
                }
                Ok(())
            }
            (ValueType::TyLam(v, b1), ValueType::TyLam(w, b2)) => {
                // Identify the binders with a shared rigid variable.
                let fresh = self.fresh_rigid_ty();
                let mut m1 = BTreeMap::new();
                m1.insert(*v, ValueType::Var(fresh));
                let mut m2 = BTreeMap::new();
                m2.insert(*w, ValueType::Var(fresh));
                let b1 = subst_value_type(b1, &m1, &BTreeMap::new());
                let b2 = subst_value_type(b2, &m2, &BTreeMap::new());
                self.unify_ty(&b1, &b2)
            }
            _ => Err(UnifyErr::Mismatch),
        }
    }

    fn unify_comp(&mut self, a: &ComputationType, b: &ComputationType) -> Result<(), UnifyErr> {
        self.unify_ty(&a.val, &b.val)?;
        self.unify_row(&a.row, &b.row)
    }

    /// Row unification: match per-label multiplicities; surplus labels on
    /// one side are absorbed by the other side's tail variable.
    fn unify_row(&mut self, a: &EffectRow, b: &EffectRow) -> Result<(), UnifyErr> {
        let a = self.apply_row(a).canonical();
        let b = self.apply_row(b).canonical();
        // Remove the common multiset of labels.
        let mut surplus_a: Vec<String> = Vec::new();
        let mut b_labels = b.labels.clone();
        for l in &a.labels {
            match b_labels.iter().position(|m| m == l) {
                Some(i) => {
                    b_labels.remove(i);
                }
                None => surplus_a.push(l.clone()),
            }
        }
        let surplus_b = b_labels;
        match (a.tail, b.tail) {
            (RowTail::Closed, RowTail::Closed) => {
                if surplus_a.is_empty() && surplus_b.is_empty() {
                    Ok(())
                } else {
                    Err(UnifyErr::Rows)
                }
            }
            (RowTail::Var(v), RowTail::Closed) => {
                if !surplus_a.is_empty() {
                    return Err(UnifyErr::Rows);
                }
                if self.is_rigid_row(v) {
                    return if surplus_b.is_empty() {
                        Err(UnifyErr::Rows) // rigid tail vs closed row
                    } else {
                        Err(UnifyErr::Rows)
                    };
                }
                self.bind_row(v, EffectRow::closed(surplus_b))
            }
            (RowTail::Closed, RowTail::Var(w)) => {
                if !surplus_b.is_empty() {
                    return Err(UnifyErr::Rows);
                }
                if self.is_rigid_row(w) {
                    return Err(UnifyErr::Rows);
                }
                self.bind_row(w, EffectRow::closed(surplus_a))
            }
            (RowTail::Var(v), RowTail::Var(w)) => {
                if v == w {
                    return if surplus_a.is_empty() && surplus_b.is_empty() {
                        Ok(())
                    } else {
                        Err(UnifyErr::Occurs)
                    };
                }
                match (self.is_rigid_row(v), self.is_rigid_row(w)) {
                    (false, false) => {
                        let fresh = self.fresh_row();
                        self.bind_row(v, EffectRow::open(surplus_b, fresh))?;
                        self.bind_row(w, EffectRow::open(surplus_a, fresh))
                    }
                    (false, true) => {
                        if !surplus_a.is_empty() {
                            return Err(UnifyErr::Rows);
                        }
                        self.bind_row(v, EffectRow::open(surplus_b, w))
                    }
                    (true, false) => {
                        if !surplus_b.is_empty() {
                            return Err(UnifyErr::Rows);
                        }
                        self.bind_row(w, EffectRow::open(surplus_a, v))
                    }
                    (true, true) => Err(UnifyErr::Rows),
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct SigInfo {
    flavor: LabelFlavor,
    param: ValueType,
    result: ValueType,
    free_tys: Vec<TyVar>,
    free_rows: Vec<RowVar>,
}

#[derive(Debug, Clone)]
struct DataInfo {
    params: Vec<TyVar>,
    ctors: Vec<(String, Vec<ValueType>)>,
}

/// Result of checking a whole program.
#[derive(Debug, Clone, Default)]
pub struct ProgramTypes {
    pub def_schemes: Vec<(String, TypeScheme)>,
    pub alias_types: Vec<(String, ComputationType)>,
    pub main_type: Option<ComputationType>,
}

pub struct Checker {
    pub st: InferenceState,
    pub ctx: TypeContext,
    sigs: HashMap<String, SigInfo>,
    datas: HashMap<String, DataInfo>,
    ctor_index: HashMap<String, String>,
    pub diags: Vec<Diagnostic>,
}

impl Checker {
    pub fn new(next_var: u32) -> Checker {
        Checker {
            st: InferenceState::new(next_var),
            ctx: TypeContext::new(),
            sigs: HashMap::new(),
            datas: HashMap::new(),
            ctor_index: HashMap::new(),
            diags: Vec::new(),
        }
    }

    pub fn from_program_decls(p: &Program) -> Checker {
        let mut ck = Checker::new(p.next_var);
        ck.load_decls(p);
        ck
    }

    pub fn load_decls(&mut self, p: &Program) {
        for e in &p.effects {
            let (free_tys, free_rows) = {
                let (mut t1, mut r1) = free_type_vars(&e.param_ty);
                let (t2, r2) = free_type_vars(&e.result_ty);
                for t in t2 {
                    if !t1.contains(&t) {
                        t1.push(t);
                    }
                }
                for r in r2 {
                    if !r1.contains(&r) {
                        r1.push(r);
                    }
                }
                (t1, r1)
            };
            self.sigs.insert(
                e.label.name.clone(),
                SigInfo {
                    flavor: e.label.flavor,
                    param: e.param_ty.clone(),
                    result: e.result_ty.clone(),
                    free_tys,
                    free_rows,
                },
            );
        }
        for d in &p.datas {
            self.datas.insert(
                d.name.clone(),
                DataInfo {
                    params: d.params.clone(),
                    ctors: d.ctors.clone(),
                },
            );
            for (cname, _) in &d.ctors {
                self.ctor_index.insert(cname.clone(), d.name.clone());
            }
        }
    }

    fn diag(
        &mut self,
        kind: DiagnosticKind,
        span: Span,
        expected: impl Into<String>,
        actual: impl Into<String>,
        note: impl Into<String>,
    ) {
        self.diags.push(Diagnostic {
            kind,
            span,
            expected: expected.into(),
            actual: actual.into(),
            note: note.into(),
        });
    }

    // -----------------------------------------------------------------------
    // Unification entry points (record diagnostics, recover with fresh vars)
    // -----------------------------------------------------------------------

    pub fn unify_value(&mut self, a: &ValueType, b: &ValueType, span: Span, note: &str) -> bool {
        match self.st.unify_ty(a, b) {
            Ok(()) => true,
            Err(e) => {
                let kind = match e {
                    UnifyErr::Occurs => DiagnosticKind::OccursCheck,
                    UnifyErr::Rows => DiagnosticKind::RowMismatch,
                    UnifyErr::Mismatch => DiagnosticKind::TypeMismatch,
                };
                let ea = pretty_type(&reduce_type(&self.st.apply_ty(a)));
                let eb = pretty_type(&reduce_type(&self.st.apply_ty(b)));
                self.diag(kind, span, ea, eb, note);
                false
            }
        }
    }

    pub fn unify_comp_types(
        &mut self,
        a: &ComputationType,
        b: &ComputationType,
        span: Span,
        note: &str,
    ) -> bool {
        let va = self.unify_value(&a.val, &b.val, span, note);
        va & self.unify_row(&a.row, &b.row, span, note)
    }

    pub fn unify_row(&mut self, a: &EffectRow, b: &EffectRow, span: Span, note: &str) -> bool {
        match self.st.unify_row(a, b) {
            Ok(()) => true,
            Err(e) => {
                let kind = match e {
                    UnifyErr::Occurs => DiagnosticKind::OccursCheck,
                    _ => DiagnosticKind::RowMismatch,
                };
                let ea = crate::pretty::pretty_row(&self.st.apply_row(a));
                let eb = crate::pretty::pretty_row(&self.st.apply_row(b));
                self.diag(kind, span, ea, eb, note);
                false
            }
        }
    }

    /// `l ∈ E`, enforced by row extension: E must contain `l` or end in a
    /// flexible tail that absorbs it.
    fn require_member(&mut self, label: &str, row: &EffectRow, span: Span) {
        let want = EffectRow::open(vec![label.to_string()], self.st.fresh_row());
        self.unify_row(
            row,
            &want,
            span,
            &format!("operation `{label}` must be a member of the effect row"),
        );
    }

    // -----------------------------------------------------------------------
    // Schemes
    // -----------------------------------------------------------------------

    pub fn instantiate(&mut self, s: &TypeScheme) -> ValueType {
        let tys: Vec<ValueType> = s
            .ty_vars
            .iter()
            .map(|_| ValueType::Var(self.st.fresh_ty()))
            .collect();
        let rows: Vec<EffectRow> = s
            .row_vars
            .iter()
            .map(|_| EffectRow::var(self.st.fresh_row()))
            .collect();
        scheme_instantiate(s, &tys, &rows).expect("quantifier arity matches by construction")
    }

    /// Rigid (skolem) instantiation, for checking a definition body against
    /// its declared signature.
    fn instantiate_rigid(&mut self, s: &TypeScheme) -> ValueType {
        let tys: Vec<ValueType> = s
            .ty_vars
            .iter()
            .map(|_| ValueType::Var(self.st.fresh_rigid_ty()))
            .collect();
        let rows: Vec<EffectRow> = s
            .row_vars
            .iter()
            .map(|_| EffectRow::var(self.st.fresh_rigid_row()))
            .collect();
        scheme_instantiate(s, &tys, &rows).expect("quantifier arity matches by construction")
    }

    /// Quantifies the flexible variables of `a` that do not occur free in
    /// the context.
    pub fn generalize(&mut self, a: &ValueType) -> TypeScheme {
        let a = reduce_type(&self.st.apply_ty(a));
        let (tys, rows) = free_type_vars(&a);
        let (ctx_tys, ctx_rows) = self.ctx_free_vars();
        let ty_vars: Vec<TyVar> = tys
            .into_iter()
            .filter(|v| !self.st.is_rigid_ty(*v) && !ctx_tys.contains(&v.0))
            .collect();
        let row_vars: Vec<RowVar> = rows
            .into_iter()
            .filter(|v| !self.st.is_rigid_row(*v) && !ctx_rows.contains(&v.0))
            .collect();
        TypeScheme {
            ty_vars,
            row_vars,
            body: a,
        }
    }

    fn ctx_free_vars(&self) -> (HashSet<u32>, HashSet<u32>) {
        let mut tys = HashSet::new();
        let mut rows = HashSet::new();
        for e in &self.ctx.entries {
            match e {
                CtxEntry::TermVar(_, s) => {
                    let body = self.st.apply_ty(&s.body);
                    let (ts, rs) = free_type_vars(&body);
                    for t in ts {
                        if !s.ty_vars.contains(&t) {
                            tys.insert(t.0);
                        }
                    }
                    for r in rs {
                        if !s.row_vars.contains(&r) {
                            rows.insert(r.0);
                        }
                    }
                }
                CtxEntry::TyVarEntry(v) => {
                    tys.insert(v.0);
                }
                CtxEntry::RowVarEntry(v) => {
                    rows.insert(v.0);
                }
            }
        }
        (tys, rows)
    }

    fn instantiate_sig(&mut self, sig: &SigInfo) -> (ValueType, ValueType) {
        let ty_map: BTreeMap<TyVar, ValueType> = sig
            .free_tys
            .iter()
            .map(|v| (*v, ValueType::Var(self.st.fresh_ty())))
            .collect();
        let row_map: BTreeMap<RowVar, EffectRow> = sig
            .free_rows
            .iter()
            .map(|v| (*v, EffectRow::var(self.st.fresh_row())))
            .collect();
        (
            subst_value_type(&sig.param, &ty_map, &row_map),
            subst_value_type(&sig.result, &ty_map, &row_map),
        )
    }

    // -----------------------------------------------------------------------
    // Patterns
    // -----------------------------------------------------------------------

    /// Introduces a binder pattern at a fresh type, returning that type.
    fn pattern_type(&mut self, pat: &Pattern) -> ValueType {
        match pat {
            Pattern::Wild => ValueType::Var(self.st.fresh_ty()),
            Pattern::Var(x) => {
                let t = ValueType::Var(self.st.fresh_ty());
                self.ctx.push_term(x.clone(), TypeScheme::mono(t.clone()));
                t
            }
            Pattern::Pair(a, b) => {
                let ta = self.pattern_type(a);
                let tb = self.pattern_type(b);
                ValueType::pair(ta, tb)
            }
        }
    }

    /// Introduces a binder pattern at a known type.
    fn bind_pattern(&mut self, pat: &Pattern, ty: &ValueType, span: Span) {
        match pat {
            Pattern::Wild => {}
            Pattern::Var(x) => {
                self.ctx
                    .push_term(x.clone(), TypeScheme::mono(self.st.apply_ty(ty)));
            }
            Pattern::Pair(a, b) => {
                let ta = ValueType::Var(self.st.fresh_ty());
                let tb = ValueType::Var(self.st.fresh_ty());
                self.unify_value(
                    ty,
                    &ValueType::pair(ta.clone(), tb.clone()),
                    span,
                    "pair pattern requires a pair type",
                );
                self.bind_pattern(a, &ta, span);
                self.bind_pattern(b, &tb, span);
            }
        }
    }

    fn bind_case_pattern(&mut self, pat: &CasePattern, ty: &ValueType, span: Span) {
        match pat {
            CasePattern::Wild => {}
            CasePattern::Var(x) => {
                self.ctx
                    .push_term(x.clone(), TypeScheme::mono(self.st.apply_ty(ty)));
            }
            CasePattern::Unit => {
                self.unify_value(ty, &ValueType::Unit, span, "unit pattern");
            }
            CasePattern::Pair(a, b) => {
                let ta = ValueType::Var(self.st.fresh_ty());
                let tb = ValueType::Var(self.st.fresh_ty());
                self.unify_value(
                    ty,
                    &ValueType::pair(ta.clone(), tb.clone()),
                    span,
                    "pair pattern requires a pair type",
                );
                self.bind_case_pattern(a, &ta, span);
                self.bind_case_pattern(b, &tb, span);
            }
            CasePattern::Nil => {
                let resolved = reduce_type(&self.st.apply_ty(ty));
                if !matches!(resolved, ValueType::Str) {
                    let elem = ValueType::Var(self.st.fresh_ty());
                    self.unify_value(ty, &ValueType::list(elem), span, "list pattern");
                }
            }
            CasePattern::Cons(h, t) => {
                let resolved = reduce_type(&self.st.apply_ty(ty));
                if matches!(resolved, ValueType::Str) {
                    self.bind_case_pattern(h, &ValueType::Char, span);
                    self.bind_case_pattern(t, &ValueType::Str, span);
                } else {
                    let elem = ValueType::Var(self.st.fresh_ty());
                    self.unify_value(ty, &ValueType::list(elem.clone()), span, "list pattern");
                    self.bind_case_pattern(h, &elem, span);
                    self.bind_case_pattern(t, &ValueType::list(elem), span);
                }
            }
            CasePattern::Ctor(name, args) => match name.as_str() {
                "left" | "right" => {
                    let ta = ValueType::Var(self.st.fresh_ty());
                    let tb = ValueType::Var(self.st.fresh_ty());
                    self.unify_value(
                        ty,
                        &ValueType::sum(ta.clone(), tb.clone()),
                        span,
                        "sum pattern requires a sum type",
                    );
                    let field = if name == "left" { ta } else { tb };
                    if args.len() == 1 {
                        self.bind_case_pattern(&args[0], &field, span);
                    } else {
                        self.diag(
                            DiagnosticKind::TypeMismatch,
                            span,
                            "1 argument",
                            format!("{}", args.len()),
                            format!("constructor `{name}`"),
                        );
                    }
                }
                _ => match self.ctor_index.get(name).cloned() {
                    Some(data_name) => {
                        let info = self.datas.get(&data_name).cloned().expect("indexed");
                        let ty_map: BTreeMap<TyVar, ValueType> = info
                            .params
                            .iter()
                            .map(|v| (*v, ValueType::Var(self.st.fresh_ty())))
                            .collect();
                        let data_ty = ValueType::Data(
                            data_name.clone(),
                            info.params
                                .iter()
                                .map(|v| ty_map[v].clone())
                                .collect(),
                        );
                        self.unify_value(ty, &data_ty, span, "constructor pattern");
                        let fields = &info
                            .ctors
                            .iter()
                            .find(|(n, _)| n == name)
                            .expect("indexed")
                            .1;
                        if fields.len() != args.len() {
                            self.diag(
                                DiagnosticKind::TypeMismatch,
                                span,
                                format!("{} arguments", fields.len()),
                                format!("{}", args.len()),
                                format!("constructor `{name}`"),
                            );
                            return;
                        }
                        for (f, a) in fields.iter().zip(args) {
                            let ft = subst_value_type(f, &ty_map, &BTreeMap::new());
                            self.bind_case_pattern(a, &ft, span);
                        }
                    }
                    None => {
                        self.diag(
                            DiagnosticKind::UnboundVar,
                            span,
                            "a declared constructor",
                            name.clone(),
                            "unknown constructor in pattern",
                        );
                    }
                },
            },
        }
    }

    // -----------------------------------------------------------------------
    // Values
    // -----------------------------------------------------------------------

    pub fn infer_value(&mut self, v: &Value) -> ValueType {
        let span = v.span;
        match &v.kind {
            ValueKind::Unit => ValueType::Unit,
            ValueKind::Int(_) => ValueType::Int,
            ValueKind::Bool(_) => ValueType::Bool,
            ValueKind::Str(_) => ValueType::Str,
            ValueKind::Char(_) => ValueType::Char,
            ValueKind::Var(x) => match self.ctx.lookup_term(x).cloned() {
                Some(s) => self.instantiate(&s),
                None => {
                    self.diag(
                        DiagnosticKind::UnboundVar,
                        span,
                        "a bound variable",
                        x.clone(),
                        "",
                    );
                    ValueType::Var(self.st.fresh_ty())
                }
            },
            ValueKind::Pair(a, b) => {
                ValueType::pair(self.infer_value(a), self.infer_value(b))
            }
            ValueKind::Lam(pat, body) => {
                let mark = self.ctx.len();
                let dom = self.pattern_type(pat);
                let cod = self.infer_computation(body);
                self.ctx.truncate(mark);
                ValueType::fun(dom, cod)
            }
            ValueKind::Handler(h) => self.check_handler(h, span),
            ValueKind::Ctor(name, args) => {
                let arg_tys: Vec<ValueType> =
                    args.iter().map(|a| self.infer_value(a)).collect();
                match name.as_str() {
                    "nil" => ValueType::list(ValueType::Var(self.st.fresh_ty())),
                    "cons" => {
                        let elem = ValueType::Var(self.st.fresh_ty());
                        if arg_tys.len() == 2 {
                            self.unify_value(&arg_tys[0], &elem, span, "list element");
                            self.unify_value(
                                &arg_tys[1],
                                &ValueType::list(elem.clone()),
                                span,
                                "list tail",
                            );
                        }
                        ValueType::list(elem)
                    }
                    "left" => ValueType::sum(
                        arg_tys[0].clone(),
                        ValueType::Var(self.st.fresh_ty()),
                    ),
                    "right" => ValueType::sum(
                        ValueType::Var(self.st.fresh_ty()),
                        arg_tys[0].clone(),
                    ),
                    _ => match self.ctor_index.get(name).cloned() {
                        Some(data_name) => {
                            let info = self.datas.get(&data_name).cloned().expect("indexed");
                            let ty_map: BTreeMap<TyVar, ValueType> = info
                                .params
                                .iter()
                                .map(|p| (*p, ValueType::Var(self.st.fresh_ty())))
                                .collect();
                            let fields = &info
                                .ctors
                                .iter()
                                .find(|(n, _)| n == name)
                                .expect("indexed")
                                .1;
                            if fields.len() == arg_tys.len() {
                                for (f, a) in fields.iter().zip(&arg_tys) {
                                    let ft = subst_value_type(f, &ty_map, &BTreeMap::new());
                                    self.unify_value(a, &ft, span, "constructor argument");
                                }
                            } else {
                                self.diag(
                                    DiagnosticKind::TypeMismatch,
                                    span,
                                    format!("{} arguments", fields.len()),
                                    format!("{}", arg_tys.len()),
                                    format!("constructor `{name}`"),
                                );
                            }
                            ValueType::Data(
                                data_name,
                                info.params.iter().map(|p| ty_map[p].clone()).collect(),
                            )
                        }
                        None => {
                            self.diag(
                                DiagnosticKind::UnboundVar,
                                span,
                                "a declared constructor",
                                name.clone(),
                                "",
                            );
                            ValueType::Var(self.st.fresh_ty())
                        }
                    },
                }
            }
        }
    }

    // -----------------------------------------------------------------------
    // Computations
    // -----------------------------------------------------------------------

    pub fn infer_computation(&mut self, c: &Computation) -> ComputationType {
        let span = c.span;
        match &c.kind {
            CompKind::Return(v) => {
                let t = self.infer_value(v);
                ComputationType::new(t, EffectRow::var(self.st.fresh_row()))
            }
            CompKind::Op {
                label,
                arg,
                binder,
                cont,
            } => {
                let (param, result) = self.lookup_sig(label, span);
                let ta = self.infer_value(arg);
                self.unify_value(&param, &ta, arg.span.join(span), "operation parameter");
                let mark = self.ctx.len();
                self.bind_pattern(binder, &result, span);
                let cty = self.infer_computation(cont);
                self.ctx.truncate(mark);
                self.require_member(&label.name, &cty.row, span);
                self.st.apply_comp(&cty)
            }
            CompKind::Sc {
                label,
                arg,
                scoped_binder,
                scoped,
                cont_binder,
                cont,
            } => {
                let (param, result) = self.lookup_sig(label, span);
                let ta = self.infer_value(arg);
                self.unify_value(&param, &ta, arg.span.join(span), "operation parameter");
                let mark = self.ctx.len();
                self.bind_pattern(scoped_binder, &result, span);
                let c1 = self.infer_computation(scoped);
                self.ctx.truncate(mark);
                // The scoped result type is shared with the continuation binder.
                let mark = self.ctx.len();
                self.bind_pattern(cont_binder, &c1.val, span);
                let c2 = self.infer_computation(cont);
                self.ctx.truncate(mark);
                self.unify_row(
                    &c1.row,
                    &c2.row,
                    span,
                    "scoped computation and continuation share an effect row",
                );
                self.require_member(&label.name, &c2.row, span);
                self.st.apply_comp(&c2)
            }
            CompKind::Handle { handler, body } => {
                let th0 = self.infer_value(handler);
                let th = reduce_type(&self.st.apply_ty(&th0));
                let (c1, d1) = match th {
                    ValueType::HandlerTy(c1, d1) => (*c1, *d1),
                    ValueType::Var(v) if !self.st.is_rigid_ty(v) => {
                        let c1 = ComputationType::new(
                            ValueType::Var(self.st.fresh_ty()),
                            EffectRow::var(self.st.fresh_row()),
                        );
                        let d1 = ComputationType::new(
                            ValueType::Var(self.st.fresh_ty()),
                            EffectRow::var(self.st.fresh_row()),
                        );
                        self.unify_value(
                            &ValueType::Var(v),
                            &ValueType::handler(c1.clone(), d1.clone()),
                            handler.span.join(span),
                            "handled-with value",
                        );
                        (c1, d1)
                    }
                    other => {
                        self.diag(
                            DiagnosticKind::TypeMismatch,
                            handler.span.join(span),
                            "a handler type C => D",
                            pretty_type(&other),
                            "with/handle requires a handler",
                        );
                        let c1 = ComputationType::new(
                            ValueType::Var(self.st.fresh_ty()),
                            EffectRow::var(self.st.fresh_row()),
                        );
                        let d1 = ComputationType::new(
                            ValueType::Var(self.st.fresh_ty()),
                            EffectRow::var(self.st.fresh_row()),
                        );
                        (c1, d1)
                    }
                };
                let c2 = self.infer_computation(body);
                self.unify_comp_types(&c1, &c2, span, "handled computation");
                self.st.apply_comp(&d1)
            }
            CompKind::Do {
                binder,
                first,
                rest,
            } => {
                let c1 = self.infer_computation(first);
                let mark = self.ctx.len();
                self.bind_pattern(binder, &c1.val, span);
                let c2 = self.infer_computation(rest);
                self.ctx.truncate(mark);
                self.unify_row(
                    &c1.row,
                    &c2.row,
                    span,
                    "both parts of a do-sequence share an effect row",
                );
                self.st.apply_comp(&c2)
            }
            CompKind::App { func, arg } => {
                let tf0 = self.infer_value(func);
                let tf = reduce_type(&self.st.apply_ty(&tf0));
                match tf {
                    ValueType::Fun(dom, cod) => {
                        let ta = self.infer_value(arg);
                        self.unify_value(&dom, &ta, span, "function argument");
                        self.st.apply_comp(&cod)
                    }
                    ValueType::Var(v) if !self.st.is_rigid_ty(v) => {
                        let dom = ValueType::Var(self.st.fresh_ty());
                        let cod = ComputationType::new(
                            ValueType::Var(self.st.fresh_ty()),
                            EffectRow::var(self.st.fresh_row()),
                        );
                        self.unify_value(
                            &ValueType::Var(v),
                            &ValueType::fun(dom.clone(), cod.clone()),
                            span,
                            "application head",
                        );
                        let ta = self.infer_value(arg);
                        self.unify_value(&dom, &ta, span, "function argument");
                        self.st.apply_comp(&cod)
                    }
                    other => {
                        self.diag(
                            DiagnosticKind::TypeMismatch,
                            func.span.join(span),
                            "a function type A -> C",
                            pretty_type(&other),
                            "application of a non-function",
                        );
                        self.infer_value(arg);
                        ComputationType::new(
                            ValueType::Var(self.st.fresh_ty()),
                            EffectRow::var(self.st.fresh_row()),
                        )
                    }
                }
            }
            CompKind::Let { name, value, body } => {
                let tv = self.infer_value(value);
                let scheme = self.generalize(&tv);
                let mark = self.ctx.len();
                self.ctx.push_term(name.clone(), scheme);
                let cb = self.infer_computation(body);
                self.ctx.truncate(mark);
                cb
            }
            CompKind::Case { scrutinee, arms } => {
                let ts = self.infer_value(scrutinee);
                let out = ComputationType::new(
                    ValueType::Var(self.st.fresh_ty()),
                    EffectRow::var(self.st.fresh_row()),
                );
                for (pat, body) in arms {
                    let mark = self.ctx.len();
                    self.bind_case_pattern(pat, &ts, span);
                    let cb = self.infer_computation(body);
                    self.ctx.truncate(mark);
                    self.unify_comp_types(&out, &cb, body.span.join(span), "case arms agree");
                }
                self.check_exhaustive(&ts, arms, span);
                self.st.apply_comp(&out)
            }
            CompKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let tc = self.infer_value(cond);
                self.unify_value(&tc, &ValueType::Bool, cond.span.join(span), "if condition");
                let ct = self.infer_computation(then_branch);
                let ce = self.infer_computation(else_branch);
                self.unify_comp_types(&ct, &ce, span, "if branches agree");
                self.st.apply_comp(&ct)
            }
            CompKind::Absurd(v) => {
                let tv = self.infer_value(v);
                self.unify_value(&tv, &ValueType::Empty, v.span.join(span), "absurd argument");
                ComputationType::new(
                    ValueType::Var(self.st.fresh_ty()),
                    EffectRow::var(self.st.fresh_row()),
                )
            }
            CompKind::PrimApp { prim, args } => {
                let arg_tys: Vec<ValueType> =
                    args.iter().map(|a| self.infer_value(a)).collect();
                let row = EffectRow::var(self.st.fresh_row());
                let val = match prim {
                    Prim::Add | Prim::Sub | Prim::Mul | Prim::Gt => {
                        for t in &arg_tys {
                            self.unify_value(t, &ValueType::Int, span, "arithmetic operand");
                        }
                        if *prim == Prim::Gt {
                            ValueType::Bool
                        } else {
                            ValueType::Int
                        }
                    }
                    Prim::Eq => {
                        if arg_tys.len() == 2 {
                            let a = arg_tys[0].clone();
                            let b = arg_tys[1].clone();
                            self.unify_value(&a, &b, span, "equality operands agree");
                        }
                        ValueType::Bool
                    }
                    Prim::Concat => {
                        let a = reduce_type(&self.st.apply_ty(&arg_tys[0]));
                        let b = reduce_type(&self.st.apply_ty(&arg_tys[1]));
                        if matches!(a, ValueType::Str) || matches!(b, ValueType::Str) {
                            self.unify_value(&arg_tys[0], &ValueType::Str, span, "++ operand");
                            self.unify_value(&arg_tys[1], &ValueType::Str, span, "++ operand");
                            ValueType::Str
                        } else {
                            let elem = ValueType::Var(self.st.fresh_ty());
                            let list = ValueType::list(elem);
                            self.unify_value(&arg_tys[0], &list, span, "++ operand");
                            self.unify_value(&arg_tys[1], &list, span, "++ operand");
                            list
                        }
                    }
                    Prim::Head => {
                        let elem = ValueType::Var(self.st.fresh_ty());
                        self.unify_value(
                            &arg_tys[0],
                            &ValueType::list(elem.clone()),
                            span,
                            "head operand",
                        );
                        elem
                    }
                    Prim::Read => {
                        let a = reduce_type(&self.st.apply_ty(&arg_tys[0]));
                        if matches!(a, ValueType::Str) {
                            self.unify_value(&arg_tys[0], &ValueType::Str, span, "read operand");
                        } else {
                            self.unify_value(
                                &arg_tys[0],
                                &ValueType::list(ValueType::Char),
                                span,
                                "read operand",
                            );
                        }
                        ValueType::Int
                    }
                };
                ComputationType::new(val, row)
            }
        }
    }

    fn lookup_sig(&mut self, label: &Label, span: Span) -> (ValueType, ValueType) {
        match self.sigs.get(&label.name).cloned() {
            Some(sig) => {
                if sig.flavor != label.flavor {
                    self.diag(
                        DiagnosticKind::LabelFlavorMismatch,
                        span,
                        format!("{} operation", sig.flavor),
                        format!("{} invocation", label.flavor),
                        format!("label `{}`", label.name),
                    );
                }
                self.instantiate_sig(&sig)
            }
            None => {
                self.diag(
                    DiagnosticKind::UnknownLabel,
                    span,
                    "a declared effect label",
                    label.name.clone(),
                    "",
                );
                (
                    ValueType::Var(self.st.fresh_ty()),
                    ValueType::Var(self.st.fresh_ty()),
                )
            }
        }
    }

    // -----------------------------------------------------------------------
    // Handlers
    // -----------------------------------------------------------------------

    /// Checks a handler against its type-operator annotation and returns a
    /// type `A!<F> => M A!<E>` with `A` fresh, ready for instantiation at
    /// the application site (or generalization at a let).
    pub fn check_handler(&mut self, h: &Handler, span: Span) -> ValueType {
        // Re-instantiate the annotation's free variables per check, so the
        // same literal can be checked at several sites.
        let m = self.freshen_annotation(&h.annotation);
        let m = match m {
            ValueType::TyLam(_, _) => m,
            other => {
                self.diag(
                    DiagnosticKind::AnnotationArity,
                    span,
                    "a one-parameter type operator `fun a -> T`",
                    pretty_type(&other),
                    "handler annotation",
                );
                let v = self.st.fresh_ty();
                ValueType::TyLam(v, Box::new(ValueType::Var(v)))
            }
        };
        let alpha = self.st.fresh_rigid_ty();
        let row_e = EffectRow::var(self.st.fresh_row());
        let m_alpha = reduce_type(&ValueType::app(m.clone(), ValueType::Var(alpha)));
        let clause_ty = ComputationType::new(m_alpha.clone(), row_e.clone());

        // Return clause: x : alpha |- c_r : M alpha!<E>
        let mark = self.ctx.len();
        self.bind_pattern(&h.ret_binder, &ValueType::Var(alpha), span);
        let tr = self.infer_computation(&h.ret_body);
        self.ctx.truncate(mark);
        self.unify_comp_types(&clause_ty, &tr, h.ret_body.span.join(span), "return clause");

        // Algebraic clauses: k : B -> M alpha!<E>
        for clause in &h.op_clauses {
            if let Some(sig) = self.sigs.get(&clause.label.name) {
                if sig.flavor != LabelFlavor::Op {
                    self.diag(
                        DiagnosticKind::LabelFlavorMismatch,
                        span,
                        "an algebraic (op) label",
                        format!("scoped label `{}`", clause.label.name),
                        "op clause",
                    );
                }
            }
            let (param, result) = self.lookup_sig(&clause.label, span);
            let mark = self.ctx.len();
            self.bind_pattern(&clause.param, &param, span);
            let k_ty = ValueType::fun(result, clause_ty.clone());
            self.bind_pattern(&clause.karg, &k_ty, span);
            let tb = self.infer_computation(&clause.body);
            self.ctx.truncate(mark);
            self.unify_comp_types(
                &clause_ty,
                &tb,
                clause.body.span.join(span),
                &format!("op clause `{}`", clause.label.name),
            );
        }

        // Scoped clauses: fresh rigid beta;
        //   p : B -> M beta!<E>,  k : beta -> M alpha!<E>
        for clause in &h.sc_clauses {
            if let Some(sig) = self.sigs.get(&clause.label.name) {
                if sig.flavor != LabelFlavor::Sc {
                    self.diag(
                        DiagnosticKind::LabelFlavorMismatch,
                        span,
                        "a scoped (sc) label",
                        format!("algebraic label `{}`", clause.label.name),
                        "sc clause",
                    );
                }
            }
            let (param, result) = self.lookup_sig(&clause.label, span);
            let beta = self.st.fresh_rigid_ty();
            let m_beta = reduce_type(&ValueType::app(m.clone(), ValueType::Var(beta)));
            let mark = self.ctx.len();
            self.bind_pattern(&clause.param, &param, span);
            let p_ty = ValueType::fun(result, ComputationType::new(m_beta, row_e.clone()));
            self.bind_pattern(&clause.parg, &p_ty, span);
            let k_ty = ValueType::fun(ValueType::Var(beta), clause_ty.clone());
            self.bind_pattern(&clause.karg, &k_ty, span);
            let tb = self.infer_computation(&clause.body);
            self.ctx.truncate(mark);
            self.unify_comp_types(
                &clause_ty,
                &tb,
                clause.body.span.join(span),
                &format!("sc clause `{}`", clause.label.name),
            );
        }

        // Forwarding clause: fresh rigid a, b;
        //   p : a -> M b!<E>, k : b -> M alpha!<E>,
        //   f : forall g d. ((a -> g!<E>), (g -> d!<E>)) -> d!<E>
        match &h.fwd {
            Some(fwd) => {
                let av = self.st.fresh_rigid_ty();
                let bv = self.st.fresh_rigid_ty();
                let m_b = reduce_type(&ValueType::app(m.clone(), ValueType::Var(bv)));
                let p_ty = ValueType::fun(
                    ValueType::Var(av),
                    ComputationType::new(m_b, row_e.clone()),
                );
                let k_ty = ValueType::fun(ValueType::Var(bv), clause_ty.clone());
                let g = self.st.fresh_ty();
                let d = self.st.fresh_ty();
                let f_scheme = TypeScheme {
                    ty_vars: vec![g, d],
                    row_vars: vec![],
                    body: ValueType::fun(
                        ValueType::pair(
                            ValueType::fun(
                                ValueType::Var(av),
                                ComputationType::new(ValueType::Var(g), row_e.clone()),
                            ),
                            ValueType::fun(
                                ValueType::Var(g),
                                ComputationType::new(ValueType::Var(d), row_e.clone()),
                            ),
                        ),
                        ComputationType::new(ValueType::Var(d), row_e.clone()),
                    ),
                };
                let mark = self.ctx.len();
                match &fwd.farg {
                    Pattern::Var(fname) => {
                        self.ctx.push_term(fname.clone(), f_scheme);
                    }
                    Pattern::Wild => {}
                    Pattern::Pair(_, _) => {
                        self.diag(
                            DiagnosticKind::TypeMismatch,
                            span,
                            "a variable",
                            "a pair pattern".to_string(),
                            "fwd clause resumption binder",
                        );
                    }
                }
                self.bind_pattern(&fwd.parg, &p_ty, span);
                self.bind_pattern(&fwd.karg, &k_ty, span);
                let tb = self.infer_computation(&fwd.body);
                self.ctx.truncate(mark);
                self.unify_comp_types(&clause_ty, &tb, fwd.body.span.join(span), "fwd clause");
            }
            None => {
                self.diag(
                    DiagnosticKind::MissingFwd,
                    span,
                    "a `fwd` (or `bind`) clause",
                    "none".to_string(),
                    "every handler needs a forwarding clause",
                );
            }
        }

        // F = labels(oprs); E
        let row_f = EffectRow {
            labels: h.labels(),
            tail: row_e.tail,
        };
        let result = ValueType::handler(
            ComputationType::new(ValueType::Var(alpha), row_f),
            ComputationType::new(m_alpha, row_e),
        );
        let applied = reduce_type(&self.st.apply_ty(&result));
        // SD-Handler instantiates the clause-checking alpha at an arbitrary
        // type; replace the rigid alpha by a fresh flexible variable.
        let fresh_a = self.st.fresh_ty();
        let mut map = BTreeMap::new();
        map.insert(alpha, ValueType::Var(fresh_a));
        let final_ty = subst_value_type(&applied, &map, &BTreeMap::new());
        // No other clause-local rigid variable may escape into the
        // handler's type (a scoped result type leaking out).
        let (escaped_tys, _) = free_type_vars(&final_ty);
        for v in escaped_tys {
            if self.st.is_rigid_ty(v) {
                self.diag(
                    DiagnosticKind::TypeMismatch,
                    span,
                    "a handler type independent of clause-local type variables",
                    pretty_type(&final_ty),
                    "a scoped result type escapes the handler's carrier",
                );
            }
        }
        final_ty
    }

    fn freshen_annotation(&mut self, m: &ValueType) -> ValueType {
        let (tys, rows) = free_type_vars(m);
        let ty_map: BTreeMap<TyVar, ValueType> = tys
            .into_iter()
            .map(|v| (v, ValueType::Var(self.st.fresh_ty())))
            .collect();
        let row_map: BTreeMap<RowVar, EffectRow> = rows
            .into_iter()
            .map(|v| (v, EffectRow::var(self.st.fresh_row())))
            .collect();
        subst_value_type(m, &ty_map, &row_map)
    }

    // -----------------------------------------------------------------------
    // Exhaustiveness
    // -----------------------------------------------------------------------

    fn check_exhaustive(&mut self, scrutinee_ty: &ValueType, arms: &[(CasePattern, Computation)], span: Span) {
        let pats: Vec<&CasePattern> = arms.iter().map(|(p, _)| p).collect();
        let ty = reduce_type(&self.st.apply_ty(scrutinee_ty));
        if !self.covers(&ty, &pats) {
            self.diag(
                DiagnosticKind::NonExhaustiveCase,
                span,
                "an exhaustive case analysis",
                pretty_type(&ty),
                "add missing arms or a wildcard",
            );
        }
    }

    fn irrefutable(&self, ty: &ValueType, p: &CasePattern) -> bool {
        match p {
            CasePattern::Wild | CasePattern::Var(_) => true,
            CasePattern::Unit => matches!(reduce_type(&self.st.apply_ty(ty)), ValueType::Unit),
            CasePattern::Pair(a, b) => {
                match reduce_type(&self.st.apply_ty(ty)) {
                    ValueType::Pair(ta, tb) => {
                        self.irrefutable(&ta, a) && self.irrefutable(&tb, b)
                    }
                    _ => false,
                }
            }
            _ => false,
        }
    }

    fn covers(&self, ty: &ValueType, pats: &[&CasePattern]) -> bool {
        if pats.iter().any(|p| self.irrefutable(ty, p)) {
            return true;
        }
        match ty {
            ValueType::List(elem) => {
                let nil = pats.iter().any(|p| matches!(p, CasePattern::Nil));
                let heads: Vec<&CasePattern> = pats
                    .iter()
                    .filter_map(|p| match p {
                        CasePattern::Cons(h, _) => Some(h.as_ref()),
                        _ => None,
                    })
                    .collect();
                let tails: Vec<&CasePattern> = pats
                    .iter()
                    .filter_map(|p| match p {
                        CasePattern::Cons(_, t) => Some(t.as_ref()),
                        _ => None,
                    })
                    .collect();
                let cons = pats.iter().any(|p| {
                    matches!(p, CasePattern::Cons(h, t)
                        if self.irrefutable(elem, h) && self.irrefutable(&ValueType::list((**elem).clone()), t))
                }) || (!heads.is_empty()
                    && self.covers(elem, &heads)
                    && self.covers(&ValueType::list((**elem).clone()), &tails));
                nil && cons
            }
            ValueType::Str => {
                let nil = pats.iter().any(|p| matches!(p, CasePattern::Nil));
                let cons = pats.iter().any(|p| {
                    matches!(p, CasePattern::Cons(h, t)
                        if self.irrefutable(&ValueType::Char, h) && self.irrefutable(&ValueType::Str, t))
                });
                nil && cons
            }
            ValueType::Sum(a, b) => {
                self.ctor_covered("left", a, pats) && self.ctor_covered("right", b, pats)
            }
            ValueType::Data(name, args) => match self.datas.get(name) {
                Some(info) => {
                    let ty_map: BTreeMap<TyVar, ValueType> = info
                        .params
                        .iter()
                        .copied()
                        .zip(args.iter().cloned())
                        .collect();
                    info.ctors.iter().all(|(cname, fields)| {
                        let matching: Vec<&[CasePattern]> = pats
                            .iter()
                            .filter_map(|p| match p {
                                CasePattern::Ctor(n, ps) if n == cname => Some(ps.as_slice()),
                                _ => None,
                            })
                            .collect();
                        if matching.is_empty() {
                            return false;
                        }
                        let field_tys: Vec<ValueType> = fields
                            .iter()
                            .map(|f| subst_value_type(f, &ty_map, &BTreeMap::new()))
                            .collect();
                        // Covered if some arm has all-irrefutable arguments,
                        // or for single-field constructors, the argument
                        // column itself is exhaustive.
                        let all_irref = matching.iter().any(|ps| {
                            ps.iter()
                                .zip(&field_tys)
                                .all(|(p, t)| self.irrefutable(t, p))
                        });
                        if all_irref {
                            return true;
                        }
                        if field_tys.len() == 1 {
                            let col: Vec<&CasePattern> =
                                matching.iter().map(|ps| &ps[0]).collect();
                            return self.covers(&field_tys[0], &col);
                        }
                        false
                    })
                }
                None => false,
            },
            _ => false,
        }
    }

    fn ctor_covered(&self, name: &str, field_ty: &ValueType, pats: &[&CasePattern]) -> bool {
        let matching: Vec<&CasePattern> = pats
            .iter()
            .filter_map(|p| match p {
                CasePattern::Ctor(n, ps) if n == name && ps.len() == 1 => Some(&ps[0]),
                _ => None,
            })
            .collect();
        !matching.is_empty()
            && (matching.iter().any(|p| self.irrefutable(field_ty, p))
                || self.covers(field_ty, &matching))
    }

    // -----------------------------------------------------------------------
    // Programs
    // -----------------------------------------------------------------------

    /// Checks every definition in order (annotated ones against their
    /// signatures), then the computation aliases, then `main`. Processing
    /// continues past failing definitions; diagnostics accumulate.
    pub fn typecheck_program(&mut self, p: &Program) -> ProgramTypes {
        self.load_decls(p);
        let mut out = ProgramTypes::default();

        // Annotated definitions are visible up front (mutual recursion).
        for def in &p.defs {
            if let Some(ann) = &def.annotation {
                self.ctx.push_term(def.name.clone(), ann.clone());
            }
        }

        for def in &p.defs {
            match &def.annotation {
                Some(ann) => {
                    let skolem = self.instantiate_rigid(ann);
                    let tb = self.infer_value(&def.body);
                    self.unify_value(
                        &tb,
                        &skolem,
                        def.span,
                        &format!("definition `{}` matches its signature", def.name),
                    );
                    out.def_schemes.push((def.name.clone(), ann.clone()));
                }
                None => {
                    if free_vars_value(&def.body).contains(&def.name)
                        && self.ctx.lookup_term(&def.name).is_none()
                    {
                        self.diag(
                            DiagnosticKind::UnboundVar,
                            def.span,
                            "a type signature",
                            def.name.clone(),
                            "recursive definitions require a signature",
                        );
                    }
                    let tb = self.infer_value(&def.body);
                    let scheme = self.generalize(&tb);
                    self.ctx.push_term(def.name.clone(), scheme.clone());
                    out.def_schemes.push((def.name.clone(), scheme));
                }
            }
        }

        for alias in &p.aliases {
            let ct = self.infer_computation(&alias.body);

            out.alias_types
                .push((alias.name.clone(), self.st.apply_comp(&ct)));
        }

        if let Some(main) = &p.main {
            let ct = self.infer_computation(main);
            out.main_type = Some(self.st.apply_comp(&ct));
        }

        // Render everything through the final substitution.
        for (_, s) in out.def_schemes.iter_mut() {
            s.body = reduce_type(&self.st.apply_ty(&s.body));
        }
        for (_, c) in out.alias_types.iter_mut() {
            *c = self.st.apply_comp(c);
            c.val = reduce_type(&c.val);
        }
        if let Some(m) = &mut out.main_type {
            *m = self.st.apply_comp(m);
            m.val = reduce_type(&m.val);
        }
        out
    }

    /// Infers and generalizes a single value after program checking (REPL).
    pub fn infer_and_generalize(&mut self, v: &Value) -> TypeScheme {
        let t = self.infer_value(v);
        self.generalize(&t)
    }
}

/// Convenience wrapper: typecheck a whole program with a fresh checker.
pub fn typecheck_program(p: &Program) -> (ProgramTypes, Vec<Diagnostic>) {
    let mut ck = Checker::new(p.next_var);
    let out = ck.typecheck_program(p);
    (out, ck.diags)
}

/// A human-readable dump of inferred schemes, used by `check`.
pub fn render_program_types(t: &ProgramTypes) -> String {
    let mut out = String::new();
    for (name, scheme) in &t.def_schemes {
        out.push_str(&format!("{name} : {}\n", pretty_scheme(scheme)));
    }
    for (name, cty) in &t.alias_types {
        out.push_str(&format!("{name} : {}\n", pretty_comp_type(cty)));
    }
    if let Some(m) = &t.main_type {
        out.push_str(&format!("main : {}\n", pretty_comp_type(m)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::desugar::Desugarer;
    use crate::parser::{parse_program, parse_scheme};

    fn check_src(src: &str) -> (ProgramTypes, Vec<Diagnostic>) {
        let sp = parse_program(src).unwrap();
        let p = Desugarer::desugar_program(&sp).unwrap();
        typecheck_program(&p)
    }

    fn scheme_of(src: &str, name: &str) -> TypeScheme {
        let (out, diags) = check_src(src);
        assert!(diags.is_empty(), "diagnostics: {diags:?}");
        out.def_schemes
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("no def {name}"))
            .1
            .clone()
    }

    fn expect_scheme(src: &str, name: &str, expected: &str) {
        let got = scheme_of(src, name);
        let mut d = Desugarer::new();
        // Declare the labels the expectation mentions.
        let sp = parse_program(src).unwrap();
        let p = Desugarer::desugar_program(&sp).unwrap();
        d = Desugarer::from_program(&p);
        let want = d.convert_scheme(&parse_scheme(expected).unwrap()).unwrap();
        assert!(
            scheme_alpha_eq(&got, &want),
            "{name}: inferred {} but expected {}",
            pretty_scheme(&got),
            pretty_scheme(&want)
        );
    }

    #[test]
    fn identity_function_scheme() {
        expect_scheme("id x = return x\n", "id", "forall a mu. a -> a!<mu>");
    }

    #[test]
    fn unbound_var_diagnosed() {
        let (_, diags) = check_src("main = return missing\n");
        assert!(diags.iter().any(|d| d.kind == DiagnosticKind::UnboundVar));
    }

    #[test]
    fn unknown_label_diagnosed() {
        let (_, diags) = check_src("main = op nope () (y. return y)\n");
        assert!(diags.iter().any(|d| d.kind == DiagnosticKind::UnknownLabel));
    }

    #[test]
    fn flavor_mismatch_diagnosed() {
        let src = "\
effect sc once : () ~> ()
main = op once () (y. return y)
";
        let (_, diags) = check_src(src);
        assert!(diags
            .iter()
            .any(|d| d.kind == DiagnosticKind::LabelFlavorMismatch));
    }

    #[test]
    fn closed_row_lacks_label_is_mismatch() {
        // A handler over <choose> applied to a computation also using ask:
        // the handled row is closed, so ask cannot be absorbed.
        let src = "\
effect op choose : () ~> Bool
effect op ask : () ~> Int
h : forall a. a!<choose> => List a!<>
h = handler [fun a -> List a] { return x -> return [x], op choose _ k -> do xs <- k true; do ys <- k false; xs ++ ys, bind x k -> return [] }
main = with h handle do b <- op choose () (y. return y); do n <- op ask () (y. return y); return b
";
        let (_, diags) = check_src(src);
        assert!(
            diags.iter().any(|d| d.kind == DiagnosticKind::RowMismatch),
            "diags: {diags:?}"
        );
    }

    #[test]
    fn return_mints_fresh_row() {
        let (out, diags) = check_src("main = return ()\n");
        assert!(diags.is_empty());
        let m = out.main_type.unwrap();
        assert_eq!(m.val, ValueType::Unit);
        assert!(matches!(m.row.tail, RowTail::Var(_)));
        assert!(m.row.labels.is_empty());
    }

    #[test]
    fn op_membership_in_row() {
        let src = "\
effect op choose : () ~> Bool
main = op choose () (b. return b)
";
        let (out, diags) = check_src(src);
        assert!(diags.is_empty(), "{diags:?}");
        let m = out.main_type.unwrap();
        assert_eq!(m.val, ValueType::Bool);
        assert!(m.row.contains("choose"));
    }

    #[test]
    fn raise_with_absurd_gives_any_type() {
        let src = "\
effect op raise : String ~> Empty
main = do x <- op raise \"e\" (y. absurd y); return (x + 1)
";
        let (out, diags) = check_src(src);
        assert!(diags.is_empty(), "{diags:?}");
        let m = out.main_type.unwrap();
        assert_eq!(m.val, ValueType::Int);
        assert!(m.row.contains("raise"));
    }

    #[test]
    fn nd_handler_scheme() {
        let src = "\
effect op choose : () ~> Bool
concatMap : forall a b mu. List a -> ((a -> List b!<mu>) -> List b!<mu>)!<mu>
concatMap xs f = case xs of
  | [] -> return []
  | (b :: bs) -> do as <- f b; do as' <- concatMap bs f; as ++ as'
h_ND = handler [fun a -> List a] { return x -> return [x], op choose _ k -> do xs <- k true; do ys <- k false; xs ++ ys, bind x k -> concatMap x k }
";
        expect_scheme(src, "h_ND", "forall a mu. a!<choose; mu> => List a!<mu>");
    }

    #[test]
    fn once_handler_scheme() {
        let src = "\
effect op choose : () ~> Bool
effect sc once : () ~> ()
concatMap : forall a b mu. List a -> ((a -> List b!<mu>) -> List b!<mu>)!<mu>
concatMap xs f = case xs of
  | [] -> return []
  | (b :: bs) -> do as <- f b; do as' <- concatMap bs f; as ++ as'
h_once = handler [fun a -> List a] { return x -> return [x], op choose _ k -> do xs <- k true; do ys <- k false; xs ++ ys, sc once _ p k -> do ts <- p (); do b <- ts = []; if b then return [] else do t <- head ts; k t, bind x k -> concatMap x k }
";
        expect_scheme(
            src,
            "h_once",
            "forall a mu. a!<choose; once; mu> => List a!<mu>",
        );
    }

    #[test]
    fn monomorphic_handler_cannot_handle_scoped_result() {
        // Handlers must stay polymorphic in the scoped result type: a once
        // clause whose body treats it as Bool (via the if) pins the rigid
        // variable and is rejected at the scoped result type.
        let src = "\
effect op choose : () ~> Bool
effect sc once : () ~> ()
h_mono = handler [fun a -> List a] { return x -> return [x], op choose _ k -> do xs <- k true; do ys <- k false; xs ++ ys, sc once _ p k -> do ts <- p (); do t <- head ts; if t then k t else k t, bind x k -> return [] }
c_once = sc once () (_. op choose () (b. return b)) (p. do q <- op choose () (b. return b); return (p, q))
main = with h_mono handle c_once
";
        let (_, diags) = check_src(src);
        assert!(
            diags.iter().any(|d| d.kind == DiagnosticKind::TypeMismatch),
            "diags: {diags:?}"
        );

        // The scoped-result-polymorphic version of the same handler is fine.
        let good = "\
effect op choose : () ~> Bool
effect sc once : () ~> ()
h_once = handler [fun a -> List a] { return x -> return [x], op choose _ k -> do xs <- k true; do ys <- k false; xs ++ ys, sc once _ p k -> do ts <- p (); do b <- ts = []; if b then return [] else do t <- head ts; k t, bind x k -> return [] }
c_once = sc once () (_. op choose () (b. return b)) (p. do q <- op choose () (b. return b); return (p, q))
main = with h_once handle c_once
";
        let (_, diags) = check_src(good);
        assert!(diags.is_empty(), "diags: {diags:?}");
    }

    #[test]
    fn c_once_type() {
        let src = "\
effect op choose : () ~> Bool
effect sc once : () ~> ()
c_once = sc once () (_. op choose () (b. return b)) (p. do q <- op choose () (b. return b); return (p, q))
";
        let (out, diags) = check_src(src);
        assert!(diags.is_empty(), "{diags:?}");
        let (_, cty) = &out.alias_types[0];
        assert_eq!(
            cty.val,
            ValueType::pair(ValueType::Bool, ValueType::Bool)
        );
        assert!(cty.row.contains("once") && cty.row.contains("choose"));
        assert!(matches!(cty.row.tail, RowTail::Var(_)));
    }

    #[test]
    fn recursion_without_annotation_diagnosed() {
        let src = "loop x = loop x\n";
        let (_, diags) = check_src(src);
        assert!(diags
            .iter()
            .any(|d| d.kind == DiagnosticKind::UnboundVar && d.note.contains("recursive")));
    }

    #[test]
    fn annotation_too_general_rejected() {
        let src = "\
f : forall a. a -> a!<>
f x = return 0
";
        let (_, diags) = check_src(src);
        assert!(
            diags.iter().any(|d| d.kind == DiagnosticKind::TypeMismatch),
            "diags: {diags:?}"
        );
    }

    #[test]
    fn non_exhaustive_case_diagnosed() {
        let src = "\
data T a = only a | other a
f x = case x of | only y -> return y
";
        let (_, diags) = check_src(src);
        assert!(diags
            .iter()
            .any(|d| d.kind == DiagnosticKind::NonExhaustiveCase));
    }

    #[test]
    fn exhaustive_nested_list_patterns_accepted() {
        let src = "\
data CutList a = opened (List a) | closed (List a)
f x = case x of
  | opened [] -> return 0
  | closed [] -> return 1
  | opened (b :: bs) -> return 2
  | closed (b :: bs) -> return 3
";
        let (_, diags) = check_src(src);
        assert!(
            !diags.iter().any(|d| d.kind == DiagnosticKind::NonExhaustiveCase),
            "diags: {diags:?}"
        );
    }

    #[test]
    fn missing_fwd_diagnosed() {
        let src = "h = handler [fun a -> a] { return x -> return x }\n";
        let (_, diags) = check_src(src);
        assert!(diags.iter().any(|d| d.kind == DiagnosticKind::MissingFwd));
    }

    #[test]
    fn generalize_examples() {
        let mut ck = Checker::new(0);
        let a = ck.st.fresh_ty();
        let mu = ck.st.fresh_row();
        let t = ValueType::fun(
            ValueType::Var(a),
            ComputationType::new(ValueType::Var(a), EffectRow::var(mu)),
        );
        let s = ck.generalize(&t);
        assert_eq!(s.ty_vars.len(), 1);
        assert_eq!(s.row_vars.len(), 1);

        // A variable free in the context is not quantified.
        let b = ck.st.fresh_ty();
        ck.ctx
            .push_term("x", TypeScheme::mono(ValueType::Var(b)));
        let t2 = ValueType::fun(
            ValueType::Var(b),
            ComputationType::new(ValueType::Bool, EffectRow::empty()),
        );
        let s2 = ck.generalize(&t2);
        assert!(s2.ty_vars.is_empty());
    }

    #[test]
    fn inferring_twice_gives_alpha_equivalent_schemes() {
        let src = "\
effect op choose : () ~> Bool
h = handler [fun a -> List a] { return x -> return [x], op choose _ k -> do xs <- k true; do ys <- k false; xs ++ ys, bind x k -> return [] }
";
        let s1 = scheme_of(src, "h");
        let s2 = scheme_of(src, "h");
        assert!(scheme_alpha_eq(&s1, &s2));
    }

    #[test]
    fn unify_row_absorbs_into_tail() {
        // unify(<choose; r1>, <once; choose>) => r1 := <once>
        let mut st = InferenceState::new(0);
        let r1 = st.fresh_row();
        let a = EffectRow::open(vec!["choose".into()], r1);
        let b = EffectRow::closed(vec!["once".into(), "choose".into()]);
        st.unify_row(&a, &b).map_err(|_| "fail").unwrap();
        let solved = st.apply_row(&EffectRow::var(r1));
        assert!(row_equiv(&solved, &EffectRow::closed(vec!["once".into()])));
    }

    #[test]
    fn unify_closed_distinct_singletons_fails() {
        let mut st = InferenceState::new(0);
        let a = EffectRow::closed(vec!["choose".into()]);
        let b = EffectRow::closed(vec!["once".into()]);
        assert!(st.unify_row(&a, &b).is_err());
    }

    #[test]
    fn unify_reduces_before_matching() {
        // unify((fun b -> List b) Int, List g) => g := Int
        let mut st = InferenceState::new(0);
        let b = st.fresh_ty();
        let g = st.fresh_ty();
        let m = ValueType::TyLam(b, Box::new(ValueType::list(ValueType::Var(b))));
        let lhs = ValueType::app(m, ValueType::Int);
        let rhs = ValueType::list(ValueType::Var(g));
        st.unify_ty(&lhs, &rhs).map_err(|_| "fail").unwrap();
        assert_eq!(st.apply_ty(&ValueType::Var(g)), ValueType::Int);
    }

    #[test]
    fn occurs_check_fires() {
        let mut st = InferenceState::new(0);
        let a = st.fresh_ty();
        let r = st.unify_ty(
            &ValueType::Var(a),
            &ValueType::list(ValueType::Var(a)),
        );
        assert!(matches!(r, Err(UnifyErr::Occurs)));
    }
}
