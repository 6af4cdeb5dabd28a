//! Elaboration from surface syntax into the core language: separates values
//! from computations (inserting `do`/`return` where the surface coalesces
//! them), expands the operation sugar and the choice operator, resolves
//! constructor names, desugars guards and bind clauses, and converts
//! surface types into core types.

use crate::span::Span;
use crate::surface::*;
use crate::syntax::*;
use crate::types::{
    ComputationType, EffectRow, RowTail, RowVar, TypeScheme, TyVar, ValueType,
};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq)]
pub struct DesugarError {
    pub message: String,
    pub span: Span,
}

impl std::fmt::Display for DesugarError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

fn err<T>(message: impl Into<String>, span: Span) -> Result<T, DesugarError> {
    Err(DesugarError {
        message: message.into(),
        span,
    })
}

#[derive(Debug, Clone)]
pub struct CtorInfo {
    pub data_name: String,
    pub arity: usize,
}

/// Holds declaration tables and fresh-variable supplies while lowering a
/// program; the REPL keeps one alive across inputs.
#[derive(Debug, Clone)]
pub struct Desugarer {
    pub effects: BTreeMap<String, LabelFlavor>,
    pub ctors: BTreeMap<String, CtorInfo>,
    pub datas: BTreeMap<String, usize>,
    aliases: BTreeMap<String, Computation>,
    next_ty_var: u32,
    next_tmp: u32,
}

impl Default for Desugarer {
    fn default() -> Self {
        Self::new()
    }
}

impl Desugarer {
    pub fn new() -> Desugarer {
        let mut ctors = BTreeMap::new();
        ctors.insert(
            "left".to_string(),
            CtorInfo {
                data_name: "+".to_string(),
                arity: 1,
            },
        );
        ctors.insert(
            "right".to_string(),
            CtorInfo {
                data_name: "+".to_string(),
                arity: 1,
            },
        );
        ctors.insert(
            "nil".to_string(),
            CtorInfo {
                data_name: "List".to_string(),
                arity: 0,
            },
        );
        ctors.insert(
            "cons".to_string(),
            CtorInfo {
                data_name: "List".to_string(),
                arity: 2,
            },
        );
        Desugarer {
            effects: BTreeMap::new(),
            ctors,
            datas: BTreeMap::new(),
            aliases: BTreeMap::new(),
            next_ty_var: 0,
            next_tmp: 0,
        }
    }

    /// Rebuilds the lowering context of an already-desugared program so
    /// further inputs (REPL lines, a second file) can be lowered against it.
    pub fn from_program(p: &Program) -> Desugarer {
        let mut d = Desugarer::new();
        for e in &p.effects {
            d.effects.insert(e.label.name.clone(), e.label.flavor);
        }
        for data in &p.datas {
            d.datas.insert(data.name.clone(), data.params.len());
            for (cname, fields) in &data.ctors {
                d.ctors.insert(
                    cname.clone(),
                    CtorInfo {
                        data_name: data.name.clone(),
                        arity: fields.len(),
                    },
                );
            }
        }
        for a in &p.aliases {
            d.aliases.insert(a.name.clone(), a.body.clone());
        }
        d.next_ty_var = p.next_var;
        d
    }

    pub fn next_var(&self) -> u32 {
        self.next_ty_var
    }

    pub fn alias(&self, name: &str) -> Option<&Computation> {
        self.aliases.get(name)
    }

    fn fresh_ty_var(&mut self) -> TyVar {
        let v = TyVar(self.next_ty_var);
        self.next_ty_var += 1;
        v
    }

    fn fresh_row_var(&mut self) -> RowVar {
        let v = RowVar(self.next_ty_var);
        self.next_ty_var += 1;
        v
    }

    fn gensym(&mut self, stem: &str) -> String {
        self.next_tmp += 1;
        format!("_{stem}{}", self.next_tmp)
    }

    // -----------------------------------------------------------------------
    // Declarations
    // -----------------------------------------------------------------------

    pub fn desugar_program(sp: &SProgram) -> Result<Program, DesugarError> {
        let mut d = Desugarer::new();
        let mut prog = Program::default();
        d.extend_program(sp, &mut prog)?;
        Ok(prog)
    }

    pub fn extend_program(
        &mut self,
        sp: &SProgram,
        prog: &mut Program,
    ) -> Result<(), DesugarError> {
        let mut pending: Option<(String, SScheme, Span)> = None;
        for decl in &sp.decls {
            if let Some((name, _, span)) = &pending {
                if !matches!(decl, SDecl::Def { name: n, .. } if n == name) {
                    return err(
                        format!("signature for `{name}` is not followed by its definition"),
                        *span,
                    );
                }
            }
            match decl {
                SDecl::Effect {
                    flavor,
                    name,
                    param,
                    result,
                    span,
                } => {
                    if self.effects.contains_key(name) {
                        return err(format!("effect `{name}` declared twice"), *span);
                    }
                    self.effects.insert(name.clone(), *flavor);
                    let mut env = TypeEnv::new();
                    env.auto_bind = true;
                    let param_ty = self.convert_type(param, &mut env)?;
                    let result_ty = self.convert_type(result, &mut env)?;
                    prog.effects.push(EffectDecl {
                        label: Label {
                            name: name.clone(),
                            flavor: *flavor,
                        },
                        param_ty,
                        result_ty,
                        span: *span,
                    });
                }
                SDecl::Data {
                    name,
                    params,
                    ctors,
                    span,
                } => {
                    if self.datas.contains_key(name) || is_base_type(name) || name == "List" {
                        return err(format!("type `{name}` declared twice"), *span);
                    }
                    self.datas.insert(name.clone(), params.len());
                    let mut env = TypeEnv::new();
                    let mut param_vars = Vec::new();
                    for p in params {
                        let v = self.fresh_ty_var();
                        env.ty_vars.insert(p.clone(), v);
                        param_vars.push(v);
                    }
                    let mut out_ctors = Vec::new();
                    for (cname, fields) in ctors {
                        if self.ctors.contains_key(cname) {
                            return err(format!("constructor `{cname}` declared twice"), *span);
                        }
                        let mut out_fields = Vec::new();
                        for f in fields {
                            out_fields.push(self.convert_type(f, &mut env)?);
                        }
                        self.ctors.insert(
                            cname.clone(),
                            CtorInfo {
                                data_name: name.clone(),
                                arity: out_fields.len(),
                            },
                        );
                        out_ctors.push((cname.clone(), out_fields));
                    }
                    prog.datas.push(DataDecl {
                        name: name.clone(),
                        params: param_vars,
                        ctors: out_ctors,
                        span: *span,
                    });
                }
                SDecl::Annot { name, scheme, span } => {
                    pending = Some((name.clone(), scheme.clone(), *span));
                }
                SDecl::Def {
                    name,
                    params,
                    body,
                    span,
                } => {
                    let annotation = match pending.take() {
                        Some((aname, scheme, aspan)) => {
                            if aname != *name {
                                return err(
                                    format!(
                                        "signature names `{aname}` but definition names `{name}`"
                                    ),
                                    aspan,
                                );
                            }
                            Some(self.convert_scheme(&scheme)?)
                        }
                        None => None,
                    };
                    if params.is_empty() {
                        // Try as a value first; fall back to a computation alias.
                        let mut binds = Vec::new();
                        let attempt = self.elab_value(body, &mut binds);
                        match attempt {
                            Ok(v) if binds.is_empty() => {
                                prog.defs.push(TopDef {
                                    name: name.clone(),
                                    annotation,
                                    body: v,
                                    span: *span,
                                });
                            }
                            _ => {
                                if annotation.is_some() {
                                    return err(
                                        format!(
                                            "`{name}` has a signature but its body is a computation; only value definitions may be annotated"
                                        ),
                                        *span,
                                    );
                                }
                                let c = self.elab_comp(body)?;
                                self.aliases.insert(name.clone(), c.clone());
                                prog.aliases.push(CompAlias {
                                    name: name.clone(),
                                    body: c,
                                    span: *span,
                                });
                            }
                        }
                    } else {
                        let v = self.elab_fun_def(params, body)?;
                        prog.defs.push(TopDef {
                            name: name.clone(),
                            annotation,
                            body: v,
                            span: *span,
                        });
                    }
                }
                SDecl::Main { body, span } => {
                    if prog.main.is_some() {
                        return err("`main` defined twice", *span);
                    }
                    prog.main = Some(self.elab_comp(body)?);
                }
            }
        }
        if let Some((name, _, span)) = pending {
            return err(format!("signature for `{name}` has no definition"), span);
        }
        prog.next_var = self.next_ty_var;
        Ok(())
    }

    fn elab_fun_def(&mut self, params: &[Pattern], body: &SExpr) -> Result<Value, DesugarError> {
        let inner = self.elab_comp(body)?;
        let mut it = params.iter().rev();
        let last = it.next().expect("nonempty params");
        let mut v = Value::lam(last.clone(), inner);
        for p in it {
            v = Value::lam(p.clone(), Computation::ret(v));
        }
        Ok(v)
    }

    // -----------------------------------------------------------------------
    // Expressions
    // -----------------------------------------------------------------------

    fn wrap(&self, binds: Vec<(String, Computation)>, body: Computation) -> Computation {
        let mut out = body;
        for (name, c) in binds.into_iter().rev() {
            out = Computation::do_(Pattern::Var(name), c, out);
        }
        out
    }

    /// Elaborates an expression required in value position. Computations are
    /// bound to a temporary via an emitted `do` binding.
    pub fn elab_value(
        &mut self,
        e: &SExpr,
        binds: &mut Vec<(String, Computation)>,
    ) -> Result<Value, DesugarError> {
        let span = e.span;
        match &e.kind {
            SExprKind::Var(x) => {
                if self.aliases.contains_key(x) {
                    return err(
                        format!(
                            "`{x}` names a computation and cannot be used as a value; wrap it in a function"
                        ),
                        span,
                    );
                }
                if let Some(info) = self.ctors.get(x) {
                    if info.arity == 0 {
                        return Ok(Value::with_span(ValueKind::Ctor(x.clone(), vec![]), span));
                    }
                    return err(
                        format!("constructor `{x}` expects {} arguments", info.arity),
                        span,
                    );
                }
                Ok(Value::with_span(ValueKind::Var(x.clone()), span))
            }
            SExprKind::Unit => Ok(Value::with_span(ValueKind::Unit, span)),
            SExprKind::Int(n) => Ok(Value::with_span(ValueKind::Int(*n), span)),
            SExprKind::Bool(b) => Ok(Value::with_span(ValueKind::Bool(*b), span)),
            SExprKind::Str(s) => Ok(Value::with_span(ValueKind::Str(s.clone()), span)),
            SExprKind::Char(c) => Ok(Value::with_span(ValueKind::Char(*c), span)),
            SExprKind::Pair(a, b) => {
                let va = self.elab_value(a, binds)?;
                let vb = self.elab_value(b, binds)?;
                Ok(Value::with_span(
                    ValueKind::Pair(Box::new(va), Box::new(vb)),
                    span,
                ))
            }
            SExprKind::ListLit(items) => {
                let mut vs = Vec::new();
                for i in items {
                    vs.push(self.elab_value(i, binds)?);
                }
                Ok(Value::with_span(Value::list(vs).kind, span))
            }
            SExprKind::Lam(p, body) => {
                let c = self.elab_comp(body)?;
                Ok(Value::with_span(
                    ValueKind::Lam(p.clone(), Box::new(c)),
                    span,
                ))
            }
            SExprKind::HandlerLit(h) => {
                let handler = self.desugar_handler(h)?;
                Ok(Value::with_span(
                    ValueKind::Handler(Box::new(handler)),
                    span,
                ))
            }
            SExprKind::BinOp(SBinOp::Cons, hd, tl) => {
                let vh = self.elab_value(hd, binds)?;
                let vt = self.elab_value(tl, binds)?;
                Ok(Value::with_span(
                    ValueKind::Ctor("cons".into(), vec![vh, vt]),
                    span,
                ))
            }
            SExprKind::App(_, _) => {
                // Constructor applications stay values; anything else is a
                // computation bound to a temporary.
                let (head, args) = spine(e);
                if let SExprKind::Var(name) = &head.kind {
                    if let Some(info) = self.ctors.get(name).cloned() {
                        if info.arity != args.len() {
                            return err(
                                format!(
                                    "constructor `{name}` expects {} arguments, got {}",
                                    info.arity,
                                    args.len()
                                ),
                                span,
                            );
                        }
                        let mut vs = Vec::new();
                        for a in args {
                            vs.push(self.elab_value(a, binds)?);
                        }
                        return Ok(Value::with_span(ValueKind::Ctor(name.clone(), vs), span));
                    }
                }
                self.bind_computation(e, binds)
            }
            _ => self.bind_computation(e, binds),
        }
    }

    pub(crate) fn bind_computation(
        &mut self,
        e: &SExpr,
        binds: &mut Vec<(String, Computation)>,
    ) -> Result<Value, DesugarError> {
        let c = self.elab_comp(e)?;
        let t = self.gensym("g");
        binds.push((t.clone(), c));
        Ok(Value::with_span(ValueKind::Var(t), e.span))
    }

    /// Elaborates an expression in computation position.
    pub fn elab_comp(&mut self, e: &SExpr) -> Result<Computation, DesugarError> {
        let span = e.span;
        match &e.kind {
            SExprKind::Var(x) => {
                if let Some(body) = self.aliases.get(x) {
                    return Ok(body.clone());
                }
                let mut binds = Vec::new();
                let v = self.elab_value(e, &mut binds)?;
                Ok(self.wrap(binds, Computation::with_span(CompKind::Return(v), span)))
            }
            SExprKind::Unit
            | SExprKind::Int(_)
            | SExprKind::Bool(_)
            | SExprKind::Str(_)
            | SExprKind::Char(_)
            | SExprKind::Pair(_, _)
            | SExprKind::ListLit(_)
            | SExprKind::Lam(_, _)
            | SExprKind::HandlerLit(_) => {
                let mut binds = Vec::new();
                let v = self.elab_value(e, &mut binds)?;
                Ok(self.wrap(binds, Computation::with_span(CompKind::Return(v), span)))
            }
            SExprKind::Return(inner) => {
                let mut binds = Vec::new();
                let v = self.elab_value(inner, &mut binds)?;
                Ok(self.wrap(binds, Computation::with_span(CompKind::Return(v), span)))
            }
            SExprKind::Seq(binder, first, rest) => {
                let c1 = self.elab_comp(first)?;
                let c2 = self.elab_comp(rest)?;
                let pat = binder.clone().unwrap_or(Pattern::Wild);
                Ok(Computation::with_span(
                    CompKind::Do {
                        binder: pat,
                        first: Box::new(c1),
                        rest: Box::new(c2),
                    },
                    span,
                ))
            }
            SExprKind::App(_, _) => {
                let (head, args) = spine(e);
                if let SExprKind::Var(name) = &head.kind {
                    if self.ctors.contains_key(name) {
                        let mut binds = Vec::new();
                        let v = self.elab_value(e, &mut binds)?;
                        return Ok(
                            self.wrap(binds, Computation::with_span(CompKind::Return(v), span))
                        );
                    }
                }
                let mut binds = Vec::new();
                let vhead = self.elab_value(head, &mut binds)?;
                let mut args_iter = args.into_iter();
                let first_arg = match args_iter.next() {
                    Some(a) => self.elab_value(a, &mut binds)?,
                    None => unreachable!("App spine has at least one argument"),
                };
                let mut acc = Computation::with_span(
                    CompKind::App {
                        func: vhead,
                        arg: first_arg,
                    },
                    span,
                );
                for a in args_iter {
                    let t = self.gensym("g");
                    binds.push((t.clone(), acc));
                    let va = self.elab_value(a, &mut binds)?;
                    acc = Computation::with_span(
                        CompKind::App {
                            func: Value::var(t),
                            arg: va,
                        },
                        span,
                    );
                }
                Ok(self.wrap(binds, acc))
            }
            SExprKind::BinOp(op, lhs, rhs) => match op {
                SBinOp::Choice => {
                    let then_c = self.elab_comp(lhs)?;
                    let else_c = self.elab_comp(rhs)?;
                    Ok(Computation::with_span(
                        CompKind::Op {
                            label: Label::op("choose"),
                            arg: Value::unit(),
                            binder: Pattern::var("b"),
                            cont: Box::new(Computation::if_(Value::var("b"), then_c, else_c)),
                        },
                        span,
                    ))
                }
                SBinOp::Cons => {
                    let mut binds = Vec::new();
                    let v = self.elab_value(e, &mut binds)?;
                    Ok(self.wrap(binds, Computation::with_span(CompKind::Return(v), span)))
                }
                _ => {
                    let prim = op.prim().expect("cons/choice handled above");
                    let mut binds = Vec::new();
                    let va = self.elab_value(lhs, &mut binds)?;
                    let vb = self.elab_value(rhs, &mut binds)?;
                    Ok(self.wrap(
                        binds,
                        Computation::with_span(
                            CompKind::PrimApp {
                                prim,
                                args: vec![va, vb],
                            },
                            span,
                        ),
                    ))
                }
            },
            SExprKind::Prim1(prim, arg) => {
                let mut binds = Vec::new();
                let v = self.elab_value(arg, &mut binds)?;
                Ok(self.wrap(
                    binds,
                    Computation::with_span(
                        CompKind::PrimApp {
                            prim: *prim,
                            args: vec![v],
                        },
                        span,
                    ),
                ))
            }
            SExprKind::OpCall(name, arg, cont) => {
                let flavor = LabelFlavor::Op;
                let mut binds = Vec::new();
                let varg = self.elab_value(arg, &mut binds)?;
                let (binder, cont) = match cont {
                    Some((p, body)) => (p.clone(), self.elab_comp(body)?),
                    None => (
                        Pattern::var("y"),
                        Computation::ret(Value::var("y")),
                    ),
                };
                Ok(self.wrap(
                    binds,
                    Computation::with_span(
                        CompKind::Op {
                            label: Label {
                                name: name.clone(),
                                flavor,
                            },
                            arg: varg,
                            binder,
                            cont: Box::new(cont),
                        },
                        span,
                    ),
                ))
            }
            SExprKind::ScCall(name, arg, (sbinder, sbody), cont) => {
                let flavor = LabelFlavor::Sc;
                let mut binds = Vec::new();
                let varg = self.elab_value(arg, &mut binds)?;
                let scoped = self.elab_comp(sbody)?;
                let (cont_binder, cont) = match cont {
                    Some((p, body)) => (p.clone(), self.elab_comp(body)?),
                    None => (
                        Pattern::var("z"),
                        Computation::ret(Value::var("z")),
                    ),
                };
                Ok(self.wrap(
                    binds,
                    Computation::with_span(
                        CompKind::Sc {
                            label: Label {
                                name: name.clone(),
                                flavor,
                            },
                            arg: varg,
                            scoped_binder: sbinder.clone(),
                            scoped: Box::new(scoped),
                            cont_binder,
                            cont: Box::new(cont),
                        },
                        span,
                    ),
                ))
            }
            SExprKind::HandleWith(h, body) => {
                let mut binds = Vec::new();
                let vh = self.elab_value(h, &mut binds)?;
                let cb = self.elab_comp(body)?;
                Ok(self.wrap(
                    binds,
                    Computation::with_span(
                        CompKind::Handle {
                            handler: vh,
                            body: Box::new(cb),
                        },
                        span,
                    ),
                ))
            }
            SExprKind::LetIn(name, value, body) => {
                let mut binds = Vec::new();
                let v = self.elab_value(value, &mut binds)?;
                if !binds.is_empty() {
                    return err(
                        "`let` binds a value; use `do x <- c; ...` for computations",
                        value.span,
                    );
                }
                let cb = self.elab_comp(body)?;
                Ok(Computation::with_span(
                    CompKind::Let {
                        name: name.clone(),
                        value: v,
                        body: Box::new(cb),
                    },
                    span,
                ))
            }
            SExprKind::If(cond, t, f) => {
                let mut binds = Vec::new();
                let vc = self.elab_value(cond, &mut binds)?;
                let ct = self.elab_comp(t)?;
                let cf = self.elab_comp(f)?;
                Ok(self.wrap(
                    binds,
                    Computation::with_span(
                        CompKind::If {
                            cond: vc,
                            then_branch: Box::new(ct),
                            else_branch: Box::new(cf),
                        },
                        span,
                    ),
                ))
            }
            SExprKind::Case(scrut, arms) => {
                let mut binds = Vec::new();
                let vs = self.elab_value(scrut, &mut binds)?;
                let desugared = self.elab_arms(&vs, arms, span)?;
                Ok(self.wrap(
                    binds,
                    Computation::with_span(
                        CompKind::Case {
                            scrutinee: vs,
                            arms: desugared,
                        },
                        span,
                    ),
                ))
            }
            SExprKind::Absurd(arg) => {
                let mut binds = Vec::new();
                let v = self.elab_value(arg, &mut binds)?;
                Ok(self.wrap(binds, Computation::with_span(CompKind::Absurd(v), span)))
            }
        }
    }

    /// Guard desugaring: an arm `p | g -> b` becomes `p -> if g then b else
    /// <case over the remaining arms>`.
    fn elab_arms(
        &mut self,
        scrutinee: &Value,
        arms: &[SArm],
        span: Span,
    ) -> Result<Vec<(CasePattern, Computation)>, DesugarError> {
        let mut out: Vec<(CasePattern, Computation)> = Vec::new();
        for arm in arms.iter().rev() {
            let pat = self.resolve_case_pattern(&arm.pat, arm.span)?;
            let body = self.elab_comp(&arm.body)?;
            let body = match &arm.guard {
                None => body,
                Some((l, r)) => {
                    let mut binds = Vec::new();
                    let vl = self.elab_value(l, &mut binds)?;
                    let vr = self.elab_value(r, &mut binds)?;
                    let fallthrough = Computation::with_span(
                        CompKind::Case {
                            scrutinee: scrutinee.clone(),
                            arms: out.clone(),
                        },
                        span,
                    );
                    let g = self.gensym("g");
                    binds.push((
                        g.clone(),
                        Computation::prim(Prim::Eq, vec![vl, vr]),
                    ));
                    self.wrap(binds, Computation::if_(Value::var(g), body, fallthrough))
                }
            };
            out.insert(0, (pat, body));
        }
        Ok(out)
    }

    fn resolve_case_pattern(
        &self,
        p: &SCasePattern,
        span: Span,
    ) -> Result<CasePattern, DesugarError> {
        Ok(match p {
            SCasePattern::Wild => CasePattern::Wild,
            SCasePattern::Unit => CasePattern::Unit,
            SCasePattern::Nil => CasePattern::Nil,
            SCasePattern::Cons(a, b) => CasePattern::Cons(
                Box::new(self.resolve_case_pattern(a, span)?),
                Box::new(self.resolve_case_pattern(b, span)?),
            ),
            SCasePattern::Pair(a, b) => CasePattern::Pair(
                Box::new(self.resolve_case_pattern(a, span)?),
                Box::new(self.resolve_case_pattern(b, span)?),
            ),
            SCasePattern::Name(n, args) => match self.ctors.get(n) {
                Some(info) => {
                    if info.arity != args.len() {
                        return err(
                            format!(
                                "constructor `{n}` expects {} arguments in pattern, got {}",
                                info.arity,
                                args.len()
                            ),
                            span,
                        );
                    }
                    let mut out = Vec::new();
                    for a in args {
                        out.push(self.resolve_case_pattern(a, span)?);
                    }
                    CasePattern::Ctor(n.clone(), out)
                }
                None if args.is_empty() => CasePattern::Var(n.clone()),
                None => {
                    return err(format!("unknown constructor `{n}` in pattern"), span);
                }
            },
        })
    }

    // -----------------------------------------------------------------------
    // Handlers
    // -----------------------------------------------------------------------

    pub fn desugar_handler(&mut self, sh: &SHandler) -> Result<Handler, DesugarError> {
        let mut env = TypeEnv::new();
        env.auto_bind = true;
        let annotation = self.convert_type(&sh.annotation, &mut env)?;

        let mut ret: Option<(Pattern, Computation)> = None;
        let mut op_clauses: Vec<OpClause> = Vec::new();
        let mut sc_clauses: Vec<ScClause> = Vec::new();
        let mut fwd: Option<FwdClause> = None;
        let mut bind_origin: Option<(Pattern, Pattern, Computation)> = None;

        for clause in &sh.clauses {
            match clause {
                SClause::Return { binder, body } => {
                    if ret.is_some() {
                        return err("handler has two return clauses", sh.span);
                    }
                    ret = Some((binder.clone(), self.elab_comp(body)?));
                }
                SClause::Op {
                    label,
                    param,
                    karg,
                    body,
                } => {
                    let flavor = LabelFlavor::Op;
                    // First occurrence wins; later duplicates are dropped.
                    if op_clauses.iter().any(|c| c.label.name == *label)
                        || sc_clauses.iter().any(|c| c.label.name == *label)
                    {
                        continue;
                    }
                    op_clauses.push(OpClause {
                        label: Label {
                            name: label.clone(),
                            flavor,
                        },
                        param: param.clone(),
                        karg: karg.clone(),
                        body: self.elab_comp(body)?,
                    });
                }
                SClause::Sc {
                    label,
                    param,
                    parg,
                    karg,
                    body,
                } => {
                    let flavor = LabelFlavor::Sc;
                    if op_clauses.iter().any(|c| c.label.name == *label)
                        || sc_clauses.iter().any(|c| c.label.name == *label)
                    {
                        continue;
                    }
                    sc_clauses.push(ScClause {
                        label: Label {
                            name: label.clone(),
                            flavor,
                        },
                        param: param.clone(),
                        parg: parg.clone(),
                        karg: karg.clone(),
                        body: self.elab_comp(body)?,
                    });
                }
                SClause::Fwd {
                    farg,
                    parg,
                    karg,
                    body,
                } => {
                    if fwd.is_some() {
                        return err("handler has two fwd clauses", sh.span);
                    }
                    if bind_origin.is_some() {
                        return err(
                            "handler declares both `bind` and `fwd`; pick one",
                            sh.span,
                        );
                    }
                    fwd = Some(FwdClause {
                        farg: farg.clone(),
                        parg: parg.clone(),
                        karg: karg.clone(),
                        body: self.elab_comp(body)?,
                    });
                }
                SClause::Bind { xarg, karg, body } => {
                    if fwd.is_some() {
                        return err(
                            "handler declares both `bind` and `fwd`; pick one",
                            sh.span,
                        );
                    }
                    if bind_origin.is_some() {
                        return err("handler has two bind clauses", sh.span);
                    }
                    bind_origin = Some((xarg.clone(), karg.clone(), self.elab_comp(body)?));
                }
            }
        }

        let (ret_binder, ret_body) = match ret {
            Some(r) => r,
            None => return err("handler is missing a return clause", sh.span),
        };

        let h = Handler {
            ret_binder,
            ret_body,
            op_clauses,
            sc_clauses,
            fwd,
            bind_origin,
            annotation,
        };
        desugar_bind(h)
    }

    // -----------------------------------------------------------------------
    // Types
    // -----------------------------------------------------------------------

    pub fn convert_scheme(&mut self, s: &SScheme) -> Result<TypeScheme, DesugarError> {
        // Classify the quantified names by where they occur in the body.
        let mut row_names = BTreeSet::new();
        collect_row_names(&s.body, &self.effects, &mut row_names);
        let mut env = TypeEnv::new();
        let mut ty_vars = Vec::new();
        let mut row_vars = Vec::new();
        for v in &s.vars {
            if row_names.contains(v) {
                let rv = self.fresh_row_var();
                env.row_vars.insert(v.clone(), rv);
                row_vars.push(rv);
            } else {
                let tv = self.fresh_ty_var();
                env.ty_vars.insert(v.clone(), tv);
                ty_vars.push(tv);
            }
        }
        let body = self.convert_type(&s.body, &mut env)?;
        Ok(TypeScheme {
            ty_vars,
            row_vars,
            body,
        })
    }

    pub fn convert_type(
        &mut self,
        t: &SType,
        env: &mut TypeEnv,
    ) -> Result<ValueType, DesugarError> {
        let span = t.span;
        Ok(match &t.kind {
            STypeKind::Unit => ValueType::Unit,
            STypeKind::Named(n) => {
                if n.chars().next().is_some_and(|c| c.is_uppercase()) {
                    match n.as_str() {
                        "Int" => ValueType::Int,
                        "Bool" => ValueType::Bool,
                        "String" => ValueType::Str,
                        "Char" => ValueType::Char,
                        "Empty" => ValueType::Empty,
                        "List" => return err("`List` needs a type argument", span),
                        other => match self.datas.get(other) {
                            Some(0) => ValueType::Data(other.to_string(), vec![]),
                            Some(k) => {
                                return err(
                                    format!("type `{other}` expects {k} arguments"),
                                    span,
                                )
                            }
                            None => return err(format!("unknown type `{other}`"), span),
                        },
                    }
                } else {
                    match env.ty_vars.get(n) {
                        Some(v) => ValueType::Var(*v),
                        None if env.auto_bind => {
                            let v = self.fresh_ty_var();
                            env.ty_vars.insert(n.clone(), v);
                            ValueType::Var(v)
                        }
                        None => return err(format!("unbound type variable `{n}`"), span),
                    }
                }
            }
            STypeKind::Pair(a, b) => ValueType::pair(
                self.convert_type(a, env)?,
                self.convert_type(b, env)?,
            ),
            STypeKind::Sum(a, b) => ValueType::sum(
                self.convert_type(a, env)?,
                self.convert_type(b, env)?,
            ),
            STypeKind::App(head, args) => match &head.kind {
                STypeKind::Named(n) if n == "List" => {
                    if args.len() != 1 {
                        return err("`List` takes exactly one argument", span);
                    }
                    ValueType::list(self.convert_type(&args[0], env)?)
                }
                STypeKind::Named(n)
                    if n.chars().next().is_some_and(|c| c.is_uppercase()) =>
                {
                    match self.datas.get(n).copied() {
                        Some(k) if k == args.len() => {
                            let mut out = Vec::new();
                            for a in args {
                                out.push(self.convert_type(a, env)?);
                            }
                            ValueType::Data(n.clone(), out)
                        }
                        Some(k) => {
                            return err(
                                format!("type `{n}` expects {k} arguments, got {}", args.len()),
                                span,
                            )
                        }
                        None => return err(format!("unknown type `{n}`"), span),
                    }
                }
                STypeKind::Named(n) => {
                    return err(
                        format!("type variable `{n}` cannot be applied to arguments"),
                        span,
                    )
                }
                _ => {
                    let mut acc = self.convert_type(head, env)?;
                    for a in args {
                        acc = ValueType::app(acc, self.convert_type(a, env)?);
                    }
                    acc
                }
            },
            STypeKind::Fun(dom, cod) => ValueType::fun(
                self.convert_type(dom, env)?,
                self.convert_comp_type(cod, env)?,
            ),
            STypeKind::HandlerT(c, d) => ValueType::handler(
                self.convert_comp_type(c, env)?,
                self.convert_comp_type(d, env)?,
            ),
            STypeKind::Lam(v, body) => {
                let tv = self.fresh_ty_var();
                let shadowed = env.ty_vars.insert(v.clone(), tv);
                let b = self.convert_type(body, env)?;
                match shadowed {
                    Some(old) => {
                        env.ty_vars.insert(v.clone(), old);
                    }
                    None => {
                        env.ty_vars.remove(v);
                    }
                }
                ValueType::TyLam(tv, Box::new(b))
            }
        })
    }

    pub fn convert_comp_type(
        &mut self,
        c: &SCompType,
        env: &mut TypeEnv,
    ) -> Result<ComputationType, DesugarError> {
        let val = self.convert_type(&c.val, env)?;
        let row = self.convert_row(&c.row, env)?;
        Ok(ComputationType::new(val, row))
    }

    pub fn convert_row(&mut self, r: &SRow, env: &mut TypeEnv) -> Result<EffectRow, DesugarError> {
        let mut labels = Vec::new();
        let mut tail = RowTail::Closed;
        for (i, item) in r.items.iter().enumerate() {
            if self.effects.contains_key(item) {
                labels.push(item.clone());
            } else if i + 1 == r.items.len() {
                let v = match env.row_vars.get(item) {
                    Some(v) => *v,
                    None if env.auto_bind => {
                        let v = self.fresh_row_var();
                        env.row_vars.insert(item.clone(), v);
                        v
                    }
                    None => {
                        return err(
                            format!("unbound row variable or unknown effect `{item}`"),
                            r.span,
                        )
                    }
                };
                tail = RowTail::Var(v);
            } else {
                return err(
                    format!("unknown effect label `{item}` (only the last row item may be a row variable)"),
                    r.span,
                );
            }
        }
        Ok(EffectRow { labels, tail })
    }
}

/// Completes a handler whose forwarding was written as `bind x k -> c`:
/// installs `fwd f p k -> f (p, \x. c)`, leaving everything else unchanged.
/// Handlers that already carry a fwd clause pass through unchanged.
pub fn desugar_bind(mut h: Handler) -> Result<Handler, DesugarError> {
    if h.fwd.is_some() && h.bind_origin.is_some() {
        return Err(DesugarError {
            message: "handler declares both `bind` and `fwd`; pick one".into(),
            span: Span::DUMMY,
        });
    }
    if let Some((xarg, karg, body)) = &h.bind_origin {
        let fv = free_vars_comp(body);
        let fname = pick_fresh("f", &fv);
        let pname = pick_fresh("p", &fv);
        // The bind body's `k` is deliberately captured by the fwd clause's
        // continuation binder.
        let fwd_body = Computation::app(
            Value::var(fname.clone()),
            Value::pair(
                Value::var(pname.clone()),
                Value::lam(xarg.clone(), body.clone()),
            ),
        );
        h.fwd = Some(FwdClause {
            farg: Pattern::Var(fname),
            parg: Pattern::Var(pname),
            karg: karg.clone(),
            body: fwd_body,
        });
    }
    Ok(h)
}

fn pick_fresh(stem: &str, avoid: &BTreeSet<String>) -> String {
    if !avoid.contains(stem) {
        return stem.to_string();
    }
    for i in 1u32.. {
        let cand = format!("{stem}{i}");
        if !avoid.contains(&cand) {
            return cand;
        }
    }
    unreachable!()
}

fn is_base_type(n: &str) -> bool {
    matches!(n, "Int" | "Bool" | "String" | "Char" | "Empty")
}

fn spine(e: &SExpr) -> (&SExpr, Vec<&SExpr>) {
    let mut args = Vec::new();
    let mut cur = e;
    while let SExprKind::App(f, a) = &cur.kind {
        args.push(a.as_ref());
        cur = f;
    }
    args.reverse();
    (cur, args)
}

/// Names that occur in row positions anywhere in a surface type and are not
/// declared effect labels; used to classify `forall` binders.
fn collect_row_names(
    t: &SType,
    effects: &BTreeMap<String, LabelFlavor>,
    out: &mut BTreeSet<String>,
) {
    match &t.kind {
        STypeKind::Unit | STypeKind::Named(_) => {}
        STypeKind::Pair(a, b) | STypeKind::Sum(a, b) => {
            collect_row_names(a, effects, out);
            collect_row_names(b, effects, out);
        }
        STypeKind::App(h, args) => {
            collect_row_names(h, effects, out);
            for a in args {
                collect_row_names(a, effects, out);
            }
        }
        STypeKind::Fun(a, c) => {
            collect_row_names(a, effects, out);
            collect_row_names_comp(c, effects, out);
        }
        STypeKind::HandlerT(c, d) => {
            collect_row_names_comp(c, effects, out);
            collect_row_names_comp(d, effects, out);
        }
        STypeKind::Lam(_, b) => collect_row_names(b, effects, out),
    }
}

fn collect_row_names_comp(
    c: &SCompType,
    effects: &BTreeMap<String, LabelFlavor>,
    out: &mut BTreeSet<String>,
) {
    collect_row_names(&c.val, effects, out);
    for item in &c.row.items {
        if !effects.contains_key(item) {
            out.insert(item.clone());
        }
    }
}

/// Name-to-variable environment used while converting surface types.
#[derive(Debug, Clone, Default)]
pub struct TypeEnv {
    pub ty_vars: BTreeMap<String, TyVar>,
    pub row_vars: BTreeMap<String, RowVar>,
    /// When set, unknown lowercase names become fresh variables (handler
    /// annotations and effect signatures); otherwise they are errors.
    pub auto_bind: bool,
}

impl TypeEnv {
    pub fn new() -> TypeEnv {
        TypeEnv::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{parse_expr, parse_program};

    fn desugar_comp(src: &str) -> Computation {
        let e = parse_expr(src).unwrap();
        let mut d = Desugarer::new();
        d.effects.insert("choose".into(), LabelFlavor::Op);
        d.effects.insert("once".into(), LabelFlavor::Sc);
        d.effects.insert("ask".into(), LabelFlavor::Op);
        d.elab_comp(&e).unwrap()
    }

    #[test]
    fn op_sugar_gets_trivial_continuation() {
        let c = desugar_comp("op ask ()");
        match c.kind {
            CompKind::Op { binder, cont, .. } => {
                assert_eq!(binder, Pattern::var("y"));
                assert_eq!(*cont, Computation::ret(Value::var("y")));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn sc_sugar_gets_trivial_continuation() {
        let c = desugar_comp("sc once () (_. op choose () (b. return b))");
        match c.kind {
            CompKind::Sc {
                cont_binder, cont, ..
            } => {
                assert_eq!(cont_binder, Pattern::var("z"));
                assert_eq!(*cont, Computation::ret(Value::var("z")));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn choice_expands_to_choose() {
        let c = desugar_comp("op ask () <> return 2");
        match c.kind {
            CompKind::Op { label, cont, .. } => {
                assert_eq!(label.name, "choose");
                assert!(matches!(cont.kind, CompKind::If { .. }));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn application_anf() {
        // k true (d - 1) becomes do g1 <- k true; do g2 <- d - 1; g1 g2
        let c = desugar_comp("k true (d - 1)");
        match &c.kind {
            CompKind::Do { first, rest, .. } => {
                assert!(matches!(first.kind, CompKind::App { .. }));
                match &rest.kind {
                    CompKind::Do { first, rest, .. } => {
                        assert!(matches!(first.kind, CompKind::PrimApp { .. }));
                        assert!(matches!(rest.kind, CompKind::App { .. }));
                    }
                    other => panic!("unexpected rest: {other:?}"),
                }
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn value_in_computation_position_returns() {
        let c = desugar_comp("x");
        assert_eq!(c, Computation::ret(Value::var("x")));
    }

    #[test]
    fn bind_desugars_to_fwd() {
        // bind x k -> concatMap x k  ==>  fwd f p k -> f (p, \x. concatMap x k)
        let src = "handler [fun a -> List a] { return x -> return [x], bind x k -> concatMap x k }";
        let e = parse_expr(src).unwrap();
        let mut d = Desugarer::new();
        let mut binds = Vec::new();
        let v = d.elab_value(&e, &mut binds).unwrap();
        let h = match v.kind {
            ValueKind::Handler(h) => h,
            other => panic!("unexpected: {other:?}"),
        };
        let fwd = h.fwd.as_ref().expect("fwd clause");
        assert_eq!(fwd.farg, Pattern::var("f"));
        assert_eq!(fwd.parg, Pattern::var("p"));
        assert_eq!(fwd.karg, Pattern::var("k"));
        // Body is f (p, \x. concatMap x k)
        let expect = Computation::app(
            Value::var("f"),
            Value::pair(
                Value::var("p"),
                Value::lam(
                    Pattern::var("x"),
                    Computation::do_(
                        Pattern::var("_g"),
                        Computation::app(Value::var("concatMap"), Value::var("x")),
                        Computation::app(Value::var("_g"), Value::var("k")),
                    ),
                ),
            ),
        );
        assert!(alpha_eq_comp(&fwd.body, &expect));
        assert!(h.bind_origin.is_some());
    }

    #[test]
    fn fwd_handler_unchanged() {
        let src = "handler [fun a -> a] { return x -> return x, fwd f p k -> f (p, k) }";
        let e = parse_expr(src).unwrap();
        let mut d = Desugarer::new();
        let mut binds = Vec::new();
        let v = d.elab_value(&e, &mut binds).unwrap();
        let h = match v.kind {
            ValueKind::Handler(h) => h,
            other => panic!("unexpected: {other:?}"),
        };
        assert!(h.bind_origin.is_none());
        let fwd = h.fwd.as_ref().unwrap();
        let expect = Computation::app(
            Value::var("f"),
            Value::pair(Value::var("p"), Value::var("k")),
        );
        assert!(alpha_eq_comp(&fwd.body, &expect));
    }

    #[test]
    fn both_bind_and_fwd_rejected() {
        let src = "handler [fun a -> a] { return x -> return x, bind x k -> k x, fwd f p k -> f (p, k) }";
        let e = parse_expr(src).unwrap();
        let mut d = Desugarer::new();
        let mut binds = Vec::new();
        let r = d.elab_value(&e, &mut binds);
        assert!(r.is_err());
        assert!(r.unwrap_err().message.contains("both"));
    }

    #[test]
    fn alias_expansion() {
        let src = "\
effect op choose : () ~> Bool
c_ND1 = op choose () (b. if b then return 1 else return 2)
main = with h_ND handle c_ND1
";
        let sp = parse_program(src).unwrap();
        let p = Desugarer::desugar_program(&sp).unwrap();
        assert_eq!(p.aliases.len(), 1);
        let main = p.main.unwrap();
        match main.kind {
            CompKind::Handle { body, .. } => {
                assert!(matches!(body.kind, CompKind::Op { .. }));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn alias_as_value_rejected() {
        let src = "\
effect op choose : () ~> Bool
c1 = op choose () (b. return b)
main = f c1
";
        let sp = parse_program(src).unwrap();
        let r = Desugarer::desugar_program(&sp);
        assert!(r.is_err());
    }

    #[test]
    fn guard_desugars_to_if_with_fallthrough() {
        let c = desugar_comp(
            "case x of | left e' | e' = e -> return 1 | _ -> return 2",
        );
        match &c.kind {
            CompKind::Case { arms, .. } => {
                assert_eq!(arms.len(), 2);
                match &arms[0].1.kind {
                    CompKind::Do { rest, .. } => {
                        assert!(matches!(rest.kind, CompKind::If { .. }));
                    }
                    other => panic!("unexpected guard desugar: {other:?}"),
                }
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn scheme_classifies_row_vars() {
        let mut d = Desugarer::new();
        d.effects.insert("raise".into(), LabelFlavor::Op);
        d.effects.insert("catch".into(), LabelFlavor::Sc);
        let s = crate::parser::parse_scheme("forall a mu. a!<raise; catch; mu> => String + a!<mu>")
            .unwrap();
        let scheme = d.convert_scheme(&s).unwrap();
        assert_eq!(scheme.ty_vars.len(), 1);
        assert_eq!(scheme.row_vars.len(), 1);
        match &scheme.body {
            ValueType::HandlerTy(c, dd) => {
                assert_eq!(c.row.labels, vec!["raise".to_string(), "catch".to_string()]);
                assert_eq!(c.row.tail, RowTail::Var(scheme.row_vars[0]));
                assert_eq!(dd.val, ValueType::sum(ValueType::Str, ValueType::Var(scheme.ty_vars[0])));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn multi_equation_style_def_becomes_curried_lambda() {
        let src = "concatMap xs f = case xs of | [] -> return [] | (b :: bs) -> f b\n";
        let sp = parse_program(src).unwrap();
        let p = Desugarer::desugar_program(&sp).unwrap();
        let def = &p.defs[0];
        match &def.body.kind {
            ValueKind::Lam(p1, body) => {
                assert_eq!(*p1, Pattern::var("xs"));
                match &body.kind {
                    CompKind::Return(v) => assert!(matches!(v.kind, ValueKind::Lam(_, _))),
                    other => panic!("unexpected: {other:?}"),
                }
            }
            other => panic!("unexpected: {other:?}"),
        }
    }
}
