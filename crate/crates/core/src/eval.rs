//! Small-step operational semantics: the computation-reduction rules with
//! generalized forwarding, delta rules for primitives, a fuel-bounded
//! driver, and a trace recorder. Handling is deep: every continuation the
//! handling rules substitute re-wraps the original handler.

use crate::syntax::*;
use std::collections::{BTreeSet, HashMap};

/// Top-level definition environment. Names resolve lazily at use sites, so
/// recursive definitions unfold on demand.
#[derive(Debug, Clone, Default)]
pub struct Env {
    pub defs: HashMap<String, Value>,
}

impl Env {
    pub fn new() -> Env {
        Env::default()
    }

    pub fn from_program(p: &Program) -> Env {
        let mut defs = HashMap::new();
        for d in &p.defs {
            defs.insert(d.name.clone(), d.body.clone());
        }
        Env { defs }
    }

    pub fn insert(&mut self, name: impl Into<String>, v: Value) {
        self.defs.insert(name.into(), v);
    }

    /// Chases variable references through the definition environment.
    pub fn resolve<'a>(&'a self, v: &'a Value) -> &'a Value {
        let mut cur = v;
        let mut hops = 0;
        while let ValueKind::Var(x) = &cur.kind {
            match self.defs.get(x) {
                Some(next) => {
                    cur = next;
                    hops += 1;
                    if hops > 10_000 {
                        return cur;
                    }
                }
                None => return cur,
            }
        }
        cur
    }
}

/// Which rule fires when a handler meets an unknown scoped operation:
/// the generalized forwarding clause (the normal route) or the original
/// bind rule replayed directly from the surface bind clause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepMode {
    #[default]
    Fwd,
    DirectBind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StuckKind {
    IllFormed,
    PrimError,
    UnknownName,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepResult {
    Stepped(Computation, &'static str),
    NormalReturn(Value),
    NormalOp(Label, Value, Pattern, Computation),
    NormalSc(Label, Value, Pattern, Computation, Pattern, Computation),
    Stuck { kind: StuckKind, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalOutcome {
    Return(Value),
    Op(Label, Value, Pattern, Computation),
    Sc(Label, Value, Pattern, Computation, Pattern, Computation),
    Stuck { kind: StuckKind, reason: String },
    FuelExhausted(Computation),
}

impl EvalOutcome {
    pub fn as_return(&self) -> Option<&Value> {
        match self {
            EvalOutcome::Return(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trace {
    /// Rule applied and the term reached by that step.
    pub steps: Vec<(String, Computation)>,
    pub outcome: EvalOutcome,
    pub fuel_used: u64,
}

pub const DEFAULT_FUEL: u64 = 1_000_000;

fn stuck(kind: StuckKind, reason: impl Into<String>) -> StepResult {
    StepResult::Stuck {
        kind,
        reason: reason.into(),
    }
}

/// Matches a binder pattern against a value, producing bindings.
fn match_binder(env: &Env, pat: &Pattern, v: &Value) -> Result<Vec<(String, Value)>, String> {
    match pat {
        Pattern::Wild => Ok(vec![]),
        Pattern::Var(x) => Ok(vec![(x.clone(), v.clone())]),
        Pattern::Pair(a, b) => {
            let rv = env.resolve(v);
            match &rv.kind {
                ValueKind::Pair(v1, v2) => {
                    let mut out = match_binder(env, a, v1)?;
                    out.extend(match_binder(env, b, v2)?);
                    Ok(out)
                }
                _ => Err(format!(
                    "pair pattern does not match value {}",
                    crate::pretty::pretty_value(rv)
                )),
            }
        }
    }
}

fn match_case(env: &Env, pat: &CasePattern, v: &Value) -> Option<Vec<(String, Value)>> {
    let v = env.resolve(v);
    match pat {
        CasePattern::Wild => Some(vec![]),
        CasePattern::Var(x) => Some(vec![(x.clone(), v.clone())]),
        CasePattern::Unit => matches!(v.kind, ValueKind::Unit).then(Vec::new),
        CasePattern::Pair(a, b) => match &v.kind {
            ValueKind::Pair(v1, v2) => {
                let mut out = match_case(env, a, v1)?;
                out.extend(match_case(env, b, v2)?);
                Some(out)
            }
            _ => None,
        },
        CasePattern::Nil => match &v.kind {
            ValueKind::Ctor(n, args) if n == "nil" && args.is_empty() => Some(vec![]),
            ValueKind::Str(s) if s.is_empty() => Some(vec![]),
            _ => None,
        },
        CasePattern::Cons(hp, tp) => match &v.kind {
            ValueKind::Ctor(n, args) if n == "cons" && args.len() == 2 => {
                let mut out = match_case(env, hp, &args[0])?;
                out.extend(match_case(env, tp, &args[1])?);
                Some(out)
            }
            ValueKind::Str(s) if !s.is_empty() => {
                let mut chars = s.chars();
                let head = Value::char(chars.next().unwrap());
                let tail = Value::str(chars.as_str());
                let mut out = match_case(env, hp, &head)?;
                out.extend(match_case(env, tp, &tail)?);
                Some(out)
            }
            _ => None,
        },
        CasePattern::Ctor(n, ps) => match &v.kind {
            ValueKind::Ctor(n2, args) if n == n2 && ps.len() == args.len() => {
                let mut out = Vec::new();
                for (p, a) in ps.iter().zip(args) {
                    out.extend(match_case(env, p, a)?);
                }
                Some(out)
            }
            _ => None,
        },
    }
}

/// Delta rules for primitive operations. Total except `head []` and a
/// malformed `read`, which are runtime primitive errors.
pub fn delta(env: &Env, prim: Prim, args: &[Value]) -> StepResult {
    let rargs: Vec<&Value> = args.iter().map(|a| env.resolve(a)).collect();
    match prim {
        Prim::Add | Prim::Sub | Prim::Mul | Prim::Gt => {
            match (&rargs[0].kind, &rargs[1].kind) {
                (ValueKind::Int(a), ValueKind::Int(b)) => {
                    let v = match prim {
                        Prim::Add => Value::int(a + b),
                        Prim::Sub => Value::int(a - b),
                        Prim::Mul => Value::int(a * b),
                        Prim::Gt => Value::bool(a > b),
                        _ => unreachable!(),
                    };
                    StepResult::Stepped(Computation::ret(v), "E-Prim")
                }
                _ => stuck(
                    StuckKind::IllFormed,
                    format!("`{}` applied to non-integers", prim.name()),
                ),
            }
        }
        Prim::Eq => match value_eq_ground(rargs[0], rargs[1]) {
            Some(b) => StepResult::Stepped(Computation::ret(Value::bool(b)), "E-Prim"),
            None => stuck(StuckKind::PrimError, "`=` applied to non-comparable values"),
        },
        Prim::Concat => match (&rargs[0].kind, &rargs[1].kind) {
            (ValueKind::Str(a), ValueKind::Str(b)) => {
                StepResult::Stepped(Computation::ret(Value::str(format!("{a}{b}"))), "E-Prim")
            }
            _ => match (rargs[0].as_list(), rargs[1].as_list()) {
                (Some(xs), Some(ys)) => {
                    let mut items: Vec<Value> = xs.into_iter().cloned().collect();
                    items.extend(ys.into_iter().cloned());
                    StepResult::Stepped(Computation::ret(Value::list(items)), "E-Prim")
                }
                _ => stuck(
                    StuckKind::IllFormed,
                    "`++` applied to non-lists/non-strings",
                ),
            },
        },
        Prim::Head => match rargs[0].as_list() {
            Some(items) => match items.first() {
                Some(h) => StepResult::Stepped(Computation::ret((*h).clone()), "E-Prim"),
                None => stuck(StuckKind::PrimError, "head of empty list"),
            },
            None => stuck(StuckKind::IllFormed, "`head` applied to a non-list"),
        },
        Prim::Read => {
            let text = match &rargs[0].kind {
                ValueKind::Str(s) => Some(s.clone()),
                _ => rargs[0].as_list().map(|items| {
                    items
                        .iter()
                        .filter_map(|i| match &i.kind {
                            ValueKind::Char(c) => Some(*c),
                            _ => None,
                        })
                        .collect::<String>()
                }),
            };
            match text.and_then(|t| t.parse::<i64>().ok()) {
                Some(n) => StepResult::Stepped(Computation::ret(Value::int(n)), "E-Prim"),
                None => stuck(StuckKind::PrimError, "`read` applied to a non-numeral"),
            }
        }
    }
}

/// Structural equality on ground values; None when incomparable
/// (functions, handlers).
fn value_eq_ground(a: &Value, b: &Value) -> Option<bool> {
    match (&a.kind, &b.kind) {
        (ValueKind::Unit, ValueKind::Unit) => Some(true),
        (ValueKind::Int(x), ValueKind::Int(y)) => Some(x == y),
        (ValueKind::Bool(x), ValueKind::Bool(y)) => Some(x == y),
        (ValueKind::Str(x), ValueKind::Str(y)) => Some(x == y),
        (ValueKind::Char(x), ValueKind::Char(y)) => Some(x == y),
        (ValueKind::Pair(a1, a2), ValueKind::Pair(b1, b2)) => {
            Some(value_eq_ground(a1, b1)? && value_eq_ground(a2, b2)?)
        }
        (ValueKind::Ctor(n1, args1), ValueKind::Ctor(n2, args2)) => {
            if n1 != n2 || args1.len() != args2.len() {
                return Some(false);
            }
            for (x, y) in args1.iter().zip(args2) {
                if !value_eq_ground(x, y)? {
                    return Some(false);
                }
            }
            Some(true)
        }
        // A string is a list of characters; allow mixed comparison.
        (ValueKind::Str(s), ValueKind::Ctor(_, _)) => {
            let items = b.as_list()?;
            Some(string_matches_chars(s, &items))
        }
        (ValueKind::Ctor(_, _), ValueKind::Str(s)) => {
            let items = a.as_list()?;
            Some(string_matches_chars(s, &items))
        }
        _ => None,
    }
}

fn string_matches_chars(s: &str, items: &[&Value]) -> bool {
    let chars: Vec<char> = s.chars().collect();
    if chars.len() != items.len() {
        return false;
    }
    chars.iter().zip(items).all(|(c, v)| match &v.kind {
        ValueKind::Char(c2) => c == c2,
        _ => false,
    })
}

fn subst_bindings(c: &Computation, bindings: Vec<(String, Value)>) -> Computation {
    if bindings.is_empty() {
        c.clone()
    } else {
        substitute_many(c, &bindings)
    }
}

/// The wrapped continuation `\y. with h handle c` used by the handling
/// rules; the binder is renamed when it would capture a free variable of
/// the handler value.
fn handled_fn(handler: &Value, binder: &Pattern, body: &Computation) -> Value {
    let hv = free_vars_value(handler);
    let (binder, body) = rename_pattern_avoiding(binder, body, &hv);
    Value::lam(binder, Computation::handle(handler.clone(), body))
}

fn fresh_distinct(stem: &str, avoid: &BTreeSet<String>, also: &[&str]) -> String {
    if !avoid.contains(stem) && !also.contains(&stem) {
        return stem.to_string();
    }
    for i in 1u32.. {
        let cand = format!("{stem}{i}");
        if !avoid.contains(&cand) && !also.iter().any(|a| *a == cand) {
            return cand;
        }
    }
    unreachable!()
}

/// The pair-taking resumption `\(p', k'). sc l v (y. p' y) (z. k' z)`
/// substituted for the fwd clause's `f` parameter.
fn fwd_resumption(label: &Label, arg: &Value) -> Value {
    let avoid = free_vars_value(arg);
    let p = fresh_distinct("p'", &avoid, &[]);
    let k = fresh_distinct("k'", &avoid, &[&p]);
    Value::lam(
        Pattern::pair(Pattern::var(p.clone()), Pattern::var(k.clone())),
        Computation::sc(
            label.clone(),
            arg.clone(),
            Pattern::var("y"),
            Computation::app(Value::var(p), Value::var("y")),
            Pattern::var("z"),
            Computation::app(Value::var(k), Value::var("z")),
        ),
    )
}

/// Applies exactly one reduction rule. The rule name reported is the
/// innermost axiom; congruence steps (E-Do, E-Hand) locate the redex
/// implicitly.
pub fn step(c: &Computation, env: &Env, mode: StepMode) -> StepResult {
    match &c.kind {
        CompKind::Return(v) => StepResult::NormalReturn(v.clone()),
        CompKind::Op {
            label,
            arg,
            binder,
            cont,
        } => StepResult::NormalOp(label.clone(), arg.clone(), binder.clone(), (**cont).clone()),
        CompKind::Sc {
            label,
            arg,
            scoped_binder,
            scoped,
            cont_binder,
            cont,
        } => StepResult::NormalSc(
            label.clone(),
            arg.clone(),
            scoped_binder.clone(),
            (**scoped).clone(),
            cont_binder.clone(),
            (**cont).clone(),
        ),
        CompKind::App { func, arg } => {
            let f = env.resolve(func);
            match &f.kind {
                ValueKind::Lam(pat, body) => match match_binder(env, pat, arg) {
                    Ok(bindings) => {
                        StepResult::Stepped(subst_bindings(body, bindings), "E-AppAbs")
                    }
                    Err(m) => stuck(StuckKind::IllFormed, m),
                },
                ValueKind::Var(x) => stuck(
                    StuckKind::UnknownName,
                    format!("unknown name `{x}` in application"),
                ),
                _ => stuck(
                    StuckKind::IllFormed,
                    format!(
                        "cannot apply non-function {}",
                        crate::pretty::pretty_value(f)
                    ),
                ),
            }
        }
        CompKind::Let { name, value, body } => {
            StepResult::Stepped(substitute(body, name, value), "E-Let")
        }
        CompKind::Do {
            binder,
            first,
            rest,
        } => match &first.kind {
            CompKind::Return(v) => match match_binder(env, binder, v) {
                Ok(bindings) => StepResult::Stepped(subst_bindings(rest, bindings), "E-DoRet"),
                Err(m) => stuck(StuckKind::IllFormed, m),
            },
            CompKind::Op {
                label,
                arg,
                binder: y,
                cont,
            } => {
                // do x <- op l v (y. c1); c2  ~>  op l v (y. do x <- c1; c2)
                let moved_fv = free_vars_comp(rest);
                let (y2, c1) = rename_pattern_avoiding(y, cont, &moved_fv);
                StepResult::Stepped(
                    Computation::op(
                        label.clone(),
                        arg.clone(),
                        y2,
                        Computation::do_(binder.clone(), c1, (**rest).clone()),
                    ),
                    "E-DoOp",
                )
            }
            CompKind::Sc {
                label,
                arg,
                scoped_binder,
                scoped,
                cont_binder: z,
                cont,
            } => {
                // do x <- sc l v (y. c1) (z. c2); c3
                //   ~> sc l v (y. c1) (z. do x <- c2; c3)
                let moved_fv = free_vars_comp(rest);
                let (z2, c2) = rename_pattern_avoiding(z, cont, &moved_fv);
                StepResult::Stepped(
                    Computation::sc(
                        label.clone(),
                        arg.clone(),
                        scoped_binder.clone(),
                        (**scoped).clone(),
                        z2,
                        Computation::do_(binder.clone(), c2, (**rest).clone()),
                    ),
                    "E-DoSc",
                )
            }
            _ => match step(first, env, mode) {
                StepResult::Stepped(first2, rule) => StepResult::Stepped(
                    Computation::do_(binder.clone(), first2, (**rest).clone()),
                    rule,
                ),
                s @ StepResult::Stuck { .. } => s,
                _ => unreachable!("normal forms handled above"),
            },
        },
        CompKind::Handle { handler, body } => {
            let hval = env.resolve(handler);
            let h = match &hval.kind {
                ValueKind::Handler(h) => h.as_ref(),
                ValueKind::Var(x) => {
                    return stuck(
                        StuckKind::UnknownName,
                        format!("unknown name `{x}` in handler position"),
                    )
                }
                _ => {
                    return match &body.kind {
                        // Only inspect the handler once the body is normal.
                        CompKind::Return(_) | CompKind::Op { .. } | CompKind::Sc { .. } => stuck(
                            StuckKind::IllFormed,
                            format!(
                                "cannot handle with non-handler {}",
                                crate::pretty::pretty_value(hval)
                            ),
                        ),
                        _ => match step(body, env, mode) {
                            StepResult::Stepped(b2, rule) => StepResult::Stepped(
                                Computation::handle(handler.clone(), b2),
                                rule,
                            ),
                            s @ StepResult::Stuck { .. } => s,
                            _ => unreachable!(),
                        },
                    }
                }
            };
            match &body.kind {
                CompKind::Return(v) => match match_binder(env, &h.ret_binder, v) {
                    Ok(bindings) => {
                        StepResult::Stepped(subst_bindings(&h.ret_body, bindings), "E-HandRet")
                    }
                    Err(m) => stuck(StuckKind::IllFormed, m),
                },
                CompKind::Op {
                    label,
                    arg,
                    binder,
                    cont,
                } => match h.find_op(&label.name) {
                    Some(clause) => {
                        let resume = handled_fn(handler, binder, cont);
                        let mut bindings = match match_binder(env, &clause.param, arg) {
                            Ok(b) => b,
                            Err(m) => return stuck(StuckKind::IllFormed, m),
                        };
                        match match_binder(env, &clause.karg, &resume) {
                            Ok(b) => bindings.extend(b),
                            Err(m) => return stuck(StuckKind::IllFormed, m),
                        }
                        StepResult::Stepped(subst_bindings(&clause.body, bindings), "E-HandOp")
                    }
                    None => {
                        // op l v (y. with h handle c1)
                        let hv = free_vars_value(handler);
                        let (y2, c1) = rename_pattern_avoiding(binder, cont, &hv);
                        StepResult::Stepped(
                            Computation::op(
                                label.clone(),
                                arg.clone(),
                                y2,
                                Computation::handle(handler.clone(), c1),
                            ),
                            "E-FwdOp",
                        )
                    }
                },
                CompKind::Sc {
                    label,
                    arg,
                    scoped_binder,
                    scoped,
                    cont_binder,
                    cont,
                } => match h.find_sc(&label.name) {
                    Some(clause) => {
                        let p = handled_fn(handler, scoped_binder, scoped);
                        let k = handled_fn(handler, cont_binder, cont);
                        let mut bindings = match match_binder(env, &clause.param, arg) {
                            Ok(b) => b,
                            Err(m) => return stuck(StuckKind::IllFormed, m),
                        };
                        match match_binder(env, &clause.parg, &p) {
                            Ok(b) => bindings.extend(b),
                            Err(m) => return stuck(StuckKind::IllFormed, m),
                        }
                        match match_binder(env, &clause.karg, &k) {
                            Ok(b) => bindings.extend(b),
                            Err(m) => return stuck(StuckKind::IllFormed, m),
                        }
                        StepResult::Stepped(subst_bindings(&clause.body, bindings), "E-HandSc")
                    }
                    None => {
                        if mode == StepMode::DirectBind {
                            if let Some((xarg, karg, bind_body)) = &h.bind_origin {
                                // sc l v (y. with h handle c1)
                                //      (x. c [ (\z. with h handle c2) / k ])
                                let hv = free_vars_value(handler);
                                let (y2, c1) =
                                    rename_pattern_avoiding(scoped_binder, scoped, &hv);
                                let k = handled_fn(handler, cont_binder, cont);
                                let bindings = match match_binder(env, karg, &k) {
                                    Ok(b) => b,
                                    Err(m) => return stuck(StuckKind::IllFormed, m),
                                };
                                let new_cont = subst_bindings(bind_body, bindings);
                                return StepResult::Stepped(
                                    Computation::sc(
                                        label.clone(),
                                        arg.clone(),
                                        y2,
                                        Computation::handle(handler.clone(), c1),
                                        xarg.clone(),
                                        new_cont,
                                    ),
                                    "E-Bind",
                                );
                            }
                        }
                        match &h.fwd {
                            Some(fwd) => {
                                let p = handled_fn(handler, scoped_binder, scoped);
                                let k = handled_fn(handler, cont_binder, cont);
                                let f = fwd_resumption(label, arg);
                                let mut bindings = match match_binder(env, &fwd.parg, &p) {
                                    Ok(b) => b,
                                    Err(m) => return stuck(StuckKind::IllFormed, m),
                                };
                                match match_binder(env, &fwd.karg, &k) {
                                    Ok(b) => bindings.extend(b),
                                    Err(m) => return stuck(StuckKind::IllFormed, m),
                                }
                                match match_binder(env, &fwd.farg, &f) {
                                    Ok(b) => bindings.extend(b),
                                    Err(m) => return stuck(StuckKind::IllFormed, m),
                                }
                                StepResult::Stepped(
                                    subst_bindings(&fwd.body, bindings),
                                    "E-FwdSc",
                                )
                            }
                            None => stuck(
                                StuckKind::IllFormed,
                                format!(
                                    "handler has no clause for scoped operation `{}` and no forwarding clause",
                                    label.name
                                ),
                            ),
                        }
                    }
                },
                _ => match step(body, env, mode) {
                    StepResult::Stepped(b2, rule) => {
                        StepResult::Stepped(Computation::handle(handler.clone(), b2), rule)
                    }
                    s @ StepResult::Stuck { .. } => s,
                    _ => unreachable!("normal forms handled above"),
                },
            }
        }
        CompKind::If {
            cond,
            then_branch,
            else_branch,
        } => match &env.resolve(cond).kind {
            ValueKind::Bool(true) => StepResult::Stepped((**then_branch).clone(), "E-If"),
            ValueKind::Bool(false) => StepResult::Stepped((**else_branch).clone(), "E-If"),
            _ => stuck(StuckKind::IllFormed, "if condition is not a boolean"),
        },
        CompKind::Case { scrutinee, arms } => {
            for (pat, arm_body) in arms {
                if let Some(bindings) = match_case(env, pat, scrutinee) {
                    return StepResult::Stepped(subst_bindings(arm_body, bindings), "E-Case");
                }
            }
            stuck(
                StuckKind::IllFormed,
                format!(
                    "no case arm matches {}",
                    crate::pretty::pretty_value(env.resolve(scrutinee))
                ),
            )
        }
        CompKind::Absurd(_) => stuck(StuckKind::IllFormed, "absurd applied to a value"),
        CompKind::PrimApp { prim, args } => delta(env, *prim, args),
    }
}

/// Iterates `step` to a normal form, a stuck state, or fuel exhaustion.
pub fn evaluate(c: &Computation, env: &Env, fuel: u64) -> EvalOutcome {
    evaluate_mode(c, env, fuel, StepMode::Fwd)
}

pub fn evaluate_mode(c: &Computation, env: &Env, fuel: u64, mode: StepMode) -> EvalOutcome {
    let mut cur = c.clone();
    let mut used = 0u64;
    loop {
        match step(&cur, env, mode) {
            StepResult::Stepped(next, _) => {
                used += 1;
                if used >= fuel {
                    return EvalOutcome::FuelExhausted(next);
                }
                cur = next;
            }
            StepResult::NormalReturn(v) => return EvalOutcome::Return(v),
            StepResult::NormalOp(l, v, p, c1) => return EvalOutcome::Op(l, v, p, c1),
            StepResult::NormalSc(l, v, p1, c1, p2, c2) => {
                return EvalOutcome::Sc(l, v, p1, c1, p2, c2)
            }
            StepResult::Stuck { kind, reason } => return EvalOutcome::Stuck { kind, reason },
        }
    }
}

/// Runs like `evaluate` but records the rule-annotated step sequence.
pub fn trace(c: &Computation, env: &Env, fuel: u64) -> Trace {
    trace_mode(c, env, fuel, StepMode::Fwd)
}

pub fn trace_mode(c: &Computation, env: &Env, fuel: u64, mode: StepMode) -> Trace {
    let mut steps = Vec::new();
    let mut cur = c.clone();
    let mut used = 0u64;
    loop {
        match step(&cur, env, mode) {
            StepResult::Stepped(next, rule) => {
                used += 1;
                steps.push((rule.to_string(), next.clone()));
                if used >= fuel {
                    return Trace {
                        steps,
                        outcome: EvalOutcome::FuelExhausted(next),
                        fuel_used: used,
                    };
                }
                cur = next;
            }
            StepResult::NormalReturn(v) => {
                return Trace {
                    steps,
                    outcome: EvalOutcome::Return(v),
                    fuel_used: used,
                }
            }
            StepResult::NormalOp(l, v, p, c1) => {
                return Trace {
                    steps,
                    outcome: EvalOutcome::Op(l, v, p, c1),
                    fuel_used: used,
                }
            }
            StepResult::NormalSc(l, v, p1, c1, p2, c2) => {
                return Trace {
                    steps,
                    outcome: EvalOutcome::Sc(l, v, p1, c1, p2, c2),
                    fuel_used: used,
                }
            }
            StepResult::Stuck { kind, reason } => {
                return Trace {
                    steps,
                    outcome: EvalOutcome::Stuck { kind, reason },
                    fuel_used: used,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::desugar::Desugarer;
    use crate::parser::parse_expr;

    fn ctx() -> Desugarer {
        let mut d = Desugarer::new();
        for (l, f) in [
            ("choose", LabelFlavor::Op),
            ("get", LabelFlavor::Op),
            ("inc", LabelFlavor::Op),
            ("ask", LabelFlavor::Op),
            ("once", LabelFlavor::Sc),
            ("catch", LabelFlavor::Sc),
        ] {
            d.effects.insert(l.into(), f);
        }
        d
    }

    fn comp(d: &mut Desugarer, src: &str) -> Computation {
        d.elab_comp(&parse_expr(src).unwrap()).unwrap()
    }

    fn h_nd(d: &mut Desugarer) -> Value {
        let src = "handler [fun a -> List a] { return x -> return [x], op choose _ k -> do xs <- k true; do ys <- k false; xs ++ ys, bind x k -> concat_map x k }";
        let e = parse_expr(src).unwrap();
        let mut binds = Vec::new();
        d.elab_value(&e, &mut binds).map_err(|e| e.message).unwrap()
    }

    #[test]
    fn do_ret_steps() {
        let mut d = ctx();
        let c = comp(&mut d, "do x <- return 1; return x");
        let env = Env::new();
        match step(&c, &env, StepMode::Fwd) {
            StepResult::Stepped(c2, rule) => {
                assert_eq!(rule, "E-DoRet");
                assert_eq!(c2, Computation::ret(Value::int(1)));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn do_op_bubbles() {
        let mut d = ctx();
        let c = comp(
            &mut d,
            "do x <- op choose () (b. return b); return (x, x)",
        );
        let env = Env::new();
        match step(&c, &env, StepMode::Fwd) {
            StepResult::Stepped(c2, rule) => {
                assert_eq!(rule, "E-DoOp");
                match c2.kind {
                    CompKind::Op { cont, .. } => {
                        assert!(matches!(cont.kind, CompKind::Do { .. }));
                    }
                    other => panic!("unexpected: {other:?}"),
                }
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn do_sc_bubbles() {
        let mut d = ctx();
        let c = comp(
            &mut d,
            "do x <- sc once () (_. return 1) (z. return z); return x",
        );
        let env = Env::new();
        match step(&c, &env, StepMode::Fwd) {
            StepResult::Stepped(c2, rule) => {
                assert_eq!(rule, "E-DoSc");
                match c2.kind {
                    CompKind::Sc { scoped, cont, .. } => {
                        assert_eq!(*scoped, Computation::ret(Value::int(1)));
                        assert!(matches!(cont.kind, CompKind::Do { .. }));
                    }
                    other => panic!("unexpected: {other:?}"),
                }
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn fwd_op_through_handler_without_clause() {
        // step(with h_get handle op choose () (b. return b))
        //   = op choose () (b. with h_get handle return b), rule E-FwdOp
        let mut d = ctx();
        let src = "with (handler [fun a -> a] { return x -> return x, op get _ k -> k 2, bind x k -> k x }) handle op choose () (b. return b)";
        let c = comp(&mut d, src);
        let env = Env::new();
        match step(&c, &env, StepMode::Fwd) {
            StepResult::Stepped(c2, rule) => {
                assert_eq!(rule, "E-FwdOp");
                match &c2.kind {
                    CompKind::Op { label, cont, .. } => {
                        assert_eq!(label.name, "choose");
                        assert!(matches!(cont.kind, CompKind::Handle { .. }));
                    }
                    other => panic!("unexpected: {other:?}"),
                }
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn hand_op_uses_clause() {
        let mut d = ctx();
        let mut env = Env::new();
        env.insert("h_nd", h_nd(&mut d));
        let c = comp(&mut d, "with h_nd handle op choose () (b. return b)");
        match step(&c, &env, StepMode::Fwd) {
            StepResult::Stepped(_, rule) => assert_eq!(rule, "E-HandOp"),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn nd_handler_collects_both_branches() {
        let mut d = ctx();
        let mut env = Env::new();
        env.insert("h_nd", h_nd(&mut d));
        let c = comp(
            &mut d,
            "with h_nd handle op choose () (b. if b then return 1 else return 2)",
        );
        let out = evaluate(&c, &env, 10_000);
        assert_eq!(
            out,
            EvalOutcome::Return(Value::list(vec![Value::int(1), Value::int(2)]))
        );
    }

    #[test]
    fn delta_prims() {
        let env = Env::new();
        match delta(&env, Prim::Add, &[Value::int(0), Value::int(1)]) {
            StepResult::Stepped(c, _) => assert_eq!(c, Computation::ret(Value::int(1))),
            other => panic!("unexpected: {other:?}"),
        }
        match delta(
            &env,
            Prim::Concat,
            &[
                Value::list(vec![Value::int(1)]),
                Value::list(vec![Value::int(2)]),
            ],
        ) {
            StepResult::Stepped(c, _) => {
                assert_eq!(
                    c,
                    Computation::ret(Value::list(vec![Value::int(1), Value::int(2)]))
                )
            }
            other => panic!("unexpected: {other:?}"),
        }
        match delta(&env, Prim::Eq, &[Value::list(vec![]), Value::list(vec![])]) {
            StepResult::Stepped(c, _) => assert_eq!(c, Computation::ret(Value::bool(true))),
            other => panic!("unexpected: {other:?}"),
        }
        match delta(&env, Prim::Head, &[Value::list(vec![])]) {
            StepResult::Stuck { kind, .. } => assert_eq!(kind, StuckKind::PrimError),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn unknown_top_level_name_is_distinct_stuck() {
        let mut d = ctx();
        let c = comp(&mut d, "missing ()");
        let env = Env::new();
        match step(&c, &env, StepMode::Fwd) {
            StepResult::Stuck { kind, .. } => assert_eq!(kind, StuckKind::UnknownName),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn fuel_exhaustion_is_reported() {
        let mut d = ctx();
        let mut env = Env::new();
        // loop = \x. loop x
        env.insert(
            "loop",
            Value::lam(
                Pattern::var("x"),
                Computation::app(Value::var("loop"), Value::var("x")),
            ),
        );
        let c = comp(&mut d, "loop ()");
        match evaluate(&c, &env, 50) {
            EvalOutcome::FuelExhausted(_) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn trace_records_rules_and_replays() {
        let mut d = ctx();
        let mut env = Env::new();
        env.insert("h_nd", h_nd(&mut d));
        let c = comp(
            &mut d,
            "with h_nd handle op choose () (b. if b then return 1 else return 2)",
        );
        let t = trace(&c, &env, 10_000);
        let rules: Vec<&str> = t.steps.iter().map(|(r, _)| r.as_str()).collect();
        assert_eq!(rules[0], "E-HandOp");
        assert!(rules.contains(&"E-AppAbs"));
        assert!(rules.contains(&"E-HandRet"));
        assert!(matches!(t.outcome, EvalOutcome::Return(_)));
        // Replay: stepping from the initial term reproduces each snapshot.
        let mut cur = c.clone();
        for (rule, snap) in &t.steps {
            match step(&cur, &env, StepMode::Fwd) {
                StepResult::Stepped(next, r) => {
                    assert_eq!(r, rule);
                    assert!(alpha_eq_comp(&next, snap));
                    cur = next;
                }
                other => panic!("unexpected: {other:?}"),
            }
        }
    }

    #[test]
    fn trace_of_return_is_empty() {
        let env = Env::new();
        let t = trace(&Computation::ret(Value::unit()), &env, 10);
        assert!(t.steps.is_empty());
        assert_eq!(t.outcome, EvalOutcome::Return(Value::unit()));
    }

    #[test]
    fn normal_op_at_top() {
        let mut d = ctx();
        let c = comp(&mut d, "op choose () (b. return b)");
        let env = Env::new();
        match evaluate(&c, &env, 10) {
            EvalOutcome::Op(l, _, _, _) => assert_eq!(l.name, "choose"),
            other => panic!("unexpected: {other:?}"),
        }
    }
}
