//! Pretty-printing of terms, types and schemes. Term output re-parses to an
//! alpha-equivalent core term; type output follows the conventional
//! notation: `A!<l1; l2; mu>`, `A -> C`, `C => D`, `forall a mu. ...`.

use crate::syntax::*;
use crate::types::*;
use std::collections::BTreeMap;
use std::fmt::Write;

// ---------------------------------------------------------------------------
// Terms
// ---------------------------------------------------------------------------

pub fn pretty_value(v: &Value) -> String {
    let mut s = String::new();
    write_value(&mut s, v, false, usize::MAX);
    s
}

pub fn pretty_comp(c: &Computation) -> String {
    let mut s = String::new();
    write_comp(&mut s, c, usize::MAX);
    s
}

/// Depth-limited rendering for traces; elided subterms print as `..`.
pub fn pretty_comp_depth(c: &Computation, depth: usize) -> String {
    let mut s = String::new();
    write_comp(&mut s, c, depth);
    s
}

fn write_pattern(out: &mut String, p: &Pattern) {
    match p {
        Pattern::Wild => out.push('_'),
        Pattern::Var(x) => out.push_str(x),
        Pattern::Pair(a, b) => {
            out.push('(');
            write_pattern(out, a);
            let mut rest = b.as_ref();
            loop {
                out.push_str(", ");
                match rest {
                    Pattern::Pair(x, y) => {
                        write_pattern(out, x);
                        rest = y;
                    }
                    _ => {
                        write_pattern(out, rest);
                        break;
                    }
                }
            }
            out.push(')');
        }
    }
}

fn write_case_pattern(out: &mut String, p: &CasePattern, atom: bool) {
    match p {
        CasePattern::Wild => out.push('_'),
        CasePattern::Var(x) => out.push_str(x),
        CasePattern::Unit => out.push_str("()"),
        CasePattern::Pair(a, b) => {
            out.push('(');
            write_case_pattern(out, a, false);
            out.push_str(", ");
            write_case_pattern(out, b, false);
            out.push(')');
        }
        CasePattern::Nil => out.push_str("[]"),
        CasePattern::Cons(a, b) => {
            out.push('(');
            write_case_pattern(out, a, true);
            out.push_str(" :: ");
            write_case_pattern(out, b, false);
            out.push(')');
        }
        CasePattern::Ctor(n, args) => {
            if atom && !args.is_empty() {
                out.push('(');
            }
            out.push_str(n);
            for a in args {
                out.push(' ');
                write_case_pattern(out, a, true);
            }
            if atom && !args.is_empty() {
                out.push(')');
            }
        }
    }
}

/// `atom`: the surrounding context requires an atomic form, so lambdas,
/// handlers and constructor applications get parentheses.
fn write_value(out: &mut String, v: &Value, atom: bool, depth: usize) {
    if depth == 0 {
        out.push_str("..");
        return;
    }
    match &v.kind {
        ValueKind::Unit => out.push_str("()"),
        ValueKind::Var(x) => out.push_str(x),
        ValueKind::Int(n) => {
            let _ = write!(out, "{n}");
        }
        ValueKind::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        ValueKind::Str(s) => {
            let _ = write!(out, "{s:?}");
        }
        ValueKind::Char(c) => {
            let _ = write!(out, "{c:?}");
        }
        ValueKind::Pair(a, b) => {
            out.push('(');
            write_value(out, a, false, depth - 1);
            let mut rest = b;
            loop {
                out.push(',');
                match &rest.kind {
                    ValueKind::Pair(x, y) => {
                        write_value(out, x, false, depth - 1);
                        rest = y;
                    }
                    _ => {
                        write_value(out, rest, false, depth - 1);
                        break;
                    }
                }
            }
            out.push(')');
        }
        ValueKind::Lam(p, c) => {
            if atom {
                out.push('(');
            }
            out.push('\\');
            write_pattern(out, p);
            out.push_str(". ");
            write_comp(out, c, depth - 1);
            if atom {
                out.push(')');
            }
        }
        ValueKind::Handler(h) => write_handler(out, h, atom, depth),
        ValueKind::Ctor(name, args) => {
            if let Some(items) = v.as_list() {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    write_value(out, item, false, depth.saturating_sub(1));
                }
                out.push(']');
                return;
            }
            if name == "cons" && args.len() == 2 {
                // Improper list; fall back to infix cons.
                if atom {
                    out.push('(');
                }
                write_value(out, &args[0], true, depth - 1);
                out.push_str(" :: ");
                write_value(out, &args[1], true, depth - 1);
                if atom {
                    out.push(')');
                }
                return;
            }
            if args.is_empty() {
                out.push_str(name);
                return;
            }
            if atom {
                out.push('(');
            }
            out.push_str(name);
            for a in args {
                out.push(' ');
                write_value(out, a, true, depth - 1);
            }
            if atom {
                out.push(')');
            }
        }
    }
}

fn write_handler(out: &mut String, h: &Handler, atom: bool, depth: usize) {
    if atom {
        out.push('(');
    }
    out.push_str("handler [");
    out.push_str(&pretty_type(&h.annotation));
    out.push_str("] { return ");
    write_pattern(out, &h.ret_binder);
    out.push_str(" -> ");
    write_comp(out, &h.ret_body, depth.saturating_sub(1));
    for c in &h.op_clauses {
        out.push_str(", op ");
        out.push_str(&c.label.name);
        out.push(' ');
        write_pattern(out, &c.param);
        out.push(' ');
        write_pattern(out, &c.karg);
        out.push_str(" -> ");
        write_comp(out, &c.body, depth.saturating_sub(1));
    }
    for c in &h.sc_clauses {
        out.push_str(", sc ");
        out.push_str(&c.label.name);
        out.push(' ');
        write_pattern(out, &c.param);
        out.push(' ');
        write_pattern(out, &c.parg);
        out.push(' ');
        write_pattern(out, &c.karg);
        out.push_str(" -> ");
        write_comp(out, &c.body, depth.saturating_sub(1));
    }
    match (&h.bind_origin, &h.fwd) {
        (Some((x, k, body)), _) => {
            out.push_str(", bind ");
            write_pattern(out, x);
            out.push(' ');
            write_pattern(out, k);
            out.push_str(" -> ");
            write_comp(out, body, depth.saturating_sub(1));
        }
        (None, Some(f)) => {
            out.push_str(", fwd ");
            write_pattern(out, &f.farg);
            out.push(' ');
            write_pattern(out, &f.parg);
            out.push(' ');
            write_pattern(out, &f.karg);
            out.push_str(" -> ");
            write_comp(out, &f.body, depth.saturating_sub(1));
        }
        (None, None) => {}
    }
    out.push_str(" }");
    if atom {
        out.push(')');
    }
}

/// True for computation forms that stop before `;` when re-parsed, so they
/// can head a `do` binding without parentheses.
fn closed_for_seq_head(c: &Computation) -> bool {
    matches!(
        c.kind,
        CompKind::Return(_)
            | CompKind::App { .. }
            | CompKind::PrimApp { .. }
            | CompKind::Op { .. }
            | CompKind::Sc { .. }
            | CompKind::Absurd(_)
    )
}

fn write_comp(out: &mut String, c: &Computation, depth: usize) {
    if depth == 0 {
        out.push_str("..");
        return;
    }
    match &c.kind {
        CompKind::Return(v) => {
            out.push_str("return ");
            write_value(out, v, true, depth - 1);
        }
        CompKind::Op {
            label,
            arg,
            binder,
            cont,
        } => {
            out.push_str("op ");
            out.push_str(&label.name);
            out.push(' ');
            write_value(out, arg, true, depth - 1);
            out.push_str(" (");
            write_pattern(out, binder);
            out.push_str(". ");
            write_comp(out, cont, depth - 1);
            out.push(')');
        }
        CompKind::Sc {
            label,
            arg,
            scoped_binder,
            scoped,
            cont_binder,
            cont,
        } => {
            out.push_str("sc ");
            out.push_str(&label.name);
            out.push(' ');
            write_value(out, arg, true, depth - 1);
            out.push_str(" (");
            write_pattern(out, scoped_binder);
            out.push_str(". ");
            write_comp(out, scoped, depth - 1);
            out.push_str(") (");
            write_pattern(out, cont_binder);
            out.push_str(". ");
            write_comp(out, cont, depth - 1);
            out.push(')');
        }
        CompKind::Handle { handler, body } => {
            out.push_str("with ");
            write_value(out, handler, true, depth - 1);
            out.push_str(" handle ");
            write_comp(out, body, depth - 1);
        }
        CompKind::Do {
            binder,
            first,
            rest,
        } => {
            out.push_str("do ");
            write_pattern(out, binder);
            out.push_str(" <- ");
            if closed_for_seq_head(first) {
                write_comp(out, first, depth - 1);
            } else {
                out.push('(');
                write_comp(out, first, depth - 1);
                out.push(')');
            }
            out.push_str("; ");
            write_comp(out, rest, depth - 1);
        }
        CompKind::App { func, arg } => {
            write_value(out, func, true, depth - 1);
            out.push(' ');
            write_value(out, arg, true, depth - 1);
        }
        CompKind::Let { name, value, body } => {
            out.push_str("let ");
            out.push_str(name);
            out.push_str(" = ");
            write_value(out, value, true, depth - 1);
            out.push_str(" in ");
            write_comp(out, body, depth - 1);
        }
        CompKind::Case { scrutinee, arms } => {
            out.push_str("case ");
            write_value(out, scrutinee, true, depth - 1);
            out.push_str(" of");
            for (pat, body) in arms {
                out.push_str(" | ");
                write_case_pattern(out, pat, false);
                out.push_str(" -> ");
                if matches!(body.kind, CompKind::Case { .. }) {
                    out.push('(');
                    write_comp(out, body, depth - 1);
                    out.push(')');
                } else {
                    write_comp(out, body, depth - 1);
                }
            }
        }
        CompKind::If {
            cond,
            then_branch,
            else_branch,
        } => {
            out.push_str("if ");
            write_value(out, cond, true, depth - 1);
            out.push_str(" then ");
            write_comp(out, then_branch, depth - 1);
            out.push_str(" else ");
            write_comp(out, else_branch, depth - 1);
        }
        CompKind::Absurd(v) => {
            out.push_str("absurd ");
            write_value(out, v, true, depth - 1);
        }
        CompKind::PrimApp { prim, args } => match prim {
            Prim::Head | Prim::Read => {
                out.push_str(prim.name());
                out.push(' ');
                write_value(out, &args[0], true, depth - 1);
            }
            _ => {
                write_value(out, &args[0], true, depth - 1);
                out.push(' ');
                out.push_str(prim.name());
                out.push(' ');
                write_value(out, &args[1], true, depth - 1);
            }
        },
    }
}

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Assigns display names to type and row variables in order of appearance.
#[derive(Debug, Default)]
pub struct TypeNamer {
    ty_names: BTreeMap<TyVar, String>,
    row_names: BTreeMap<RowVar, String>,
}

const TY_NAMES: &[&str] = &["a", "b", "c", "d", "e'", "f'", "g'"];
const ROW_NAMES: &[&str] = &["mu", "nu", "rho", "eps", "phi"];

impl TypeNamer {
    pub fn new() -> TypeNamer {
        TypeNamer::default()
    }

    pub fn ty_name(&mut self, v: TyVar) -> String {
        if let Some(n) = self.ty_names.get(&v) {
            return n.clone();
        }
        let i = self.ty_names.len();
        let name = if i < TY_NAMES.len() {
            TY_NAMES[i].to_string()
        } else {
            format!("a{}", i - TY_NAMES.len() + 1)
        };
        self.ty_names.insert(v, name.clone());
        name
    }

    pub fn row_name(&mut self, v: RowVar) -> String {
        if let Some(n) = self.row_names.get(&v) {
            return n.clone();
        }
        let i = self.row_names.len();
        let name = if i < ROW_NAMES.len() {
            ROW_NAMES[i].to_string()
        } else {
            format!("mu{}", i - ROW_NAMES.len() + 1)
        };
        self.row_names.insert(v, name.clone());
        name
    }
}

pub fn pretty_type(t: &ValueType) -> String {
    let mut namer = TypeNamer::new();
    pretty_type_with(t, &mut namer)
}

pub fn pretty_type_with(t: &ValueType, namer: &mut TypeNamer) -> String {
    let mut s = String::new();
    write_type(&mut s, t, Prec::Top, namer);
    s
}

pub fn pretty_comp_type(c: &ComputationType) -> String {
    let mut namer = TypeNamer::new();
    pretty_comp_type_with(c, &mut namer)
}

pub fn pretty_comp_type_with(c: &ComputationType, namer: &mut TypeNamer) -> String {
    let mut s = String::new();
    write_comp_type(&mut s, c, namer);
    s
}

pub fn pretty_row(r: &EffectRow) -> String {
    let mut namer = TypeNamer::new();
    let mut s = String::new();
    write_row(&mut s, r, &mut namer);
    s
}

pub fn pretty_scheme(s: &TypeScheme) -> String {
    let mut namer = TypeNamer::new();
    let mut out = String::new();
    if !s.ty_vars.is_empty() || !s.row_vars.is_empty() {
        out.push_str("forall");
        for v in &s.ty_vars {
            out.push(' ');
            out.push_str(&namer.ty_name(*v));
        }
        for v in &s.row_vars {
            out.push(' ');
            out.push_str(&namer.row_name(*v));
        }
        out.push_str(". ");
    }
    write_type(&mut out, &s.body, Prec::Top, &mut namer);
    out
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Prec {
    Top,    // arrows, handler types
    Sum,    // sums
    App,    // type application
    Atom,
}

fn write_type(out: &mut String, t: &ValueType, prec: Prec, namer: &mut TypeNamer) {
    match t {
        ValueType::Unit => out.push_str("()"),
        ValueType::Int => out.push_str("Int"),
        ValueType::Bool => out.push_str("Bool"),
        ValueType::Str => out.push_str("String"),
        ValueType::Char => out.push_str("Char"),
        ValueType::Empty => out.push_str("Empty"),
        ValueType::Var(v) => out.push_str(&namer.ty_name(*v)),
        ValueType::Pair(a, b) => {
            out.push('(');
            write_type(out, a, Prec::Top, namer);
            let mut rest = b;
            loop {
                out.push_str(", ");
                match rest.as_ref() {
                    ValueType::Pair(x, y) => {
                        write_type(out, x, Prec::Top, namer);
                        rest = y;
                    }
                    _ => {
                        write_type(out, rest, Prec::Top, namer);
                        break;
                    }
                }
            }
            out.push(')');
        }
        ValueType::Fun(a, c) => {
            if prec > Prec::Top {
                out.push('(');
            }
            write_type(out, a, Prec::Sum, namer);
            out.push_str(" -> ");
            write_comp_type(out, c, namer);
            if prec > Prec::Top {
                out.push(')');
            }
        }
        ValueType::HandlerTy(c, d) => {
            if prec > Prec::Top {
                out.push('(');
            }
            write_comp_type(out, c, namer);
            out.push_str(" => ");
            write_comp_type(out, d, namer);
            if prec > Prec::Top {
                out.push(')');
            }
        }
        ValueType::TyLam(v, body) => {
            if prec > Prec::Top {
                out.push('(');
            }
            out.push_str("fun ");
            out.push_str(&namer.ty_name(*v));
            out.push_str(" -> ");
            write_type(out, body, Prec::Top, namer);
            if prec > Prec::Top {
                out.push(')');
            }
        }
        ValueType::TyApp(m, a) => {
            if prec > Prec::App {
                out.push('(');
            }
            write_type(out, m, Prec::Atom, namer);
            out.push(' ');
            write_type(out, a, Prec::Atom, namer);
            if prec > Prec::App {
                out.push(')');
            }
        }
        ValueType::List(a) => {
            if prec > Prec::App {
                out.push('(');
            }
            out.push_str("List ");
            write_type(out, a, Prec::Atom, namer);
            if prec > Prec::App {
                out.push(')');
            }
        }
        ValueType::Sum(a, b) => {
            if prec > Prec::Sum {
                out.push('(');
            }
            write_type(out, a, Prec::App, namer);
            out.push_str(" + ");
            write_type(out, b, Prec::Sum, namer);
            if prec > Prec::Sum {
                out.push(')');
            }
        }
        ValueType::Data(n, args) => {
            if args.is_empty() {
                out.push_str(n);
            } else {
                if prec > Prec::App {
                    out.push('(');
                }
                out.push_str(n);
                for a in args {
                    out.push(' ');
                    write_type(out, a, Prec::Atom, namer);
                }
                if prec > Prec::App {
                    out.push(')');
                }
            }
        }
    }
}

fn write_comp_type(out: &mut String, c: &ComputationType, namer: &mut TypeNamer) {
    // Functions and handler types bind looser than `!`, so parenthesize.
    let needs_parens = matches!(c.val, ValueType::Fun(_, _) | ValueType::HandlerTy(_, _));
    if needs_parens {
        out.push('(');
        write_type(out, &c.val, Prec::Top, namer);
        out.push(')');
    } else {
        write_type(out, &c.val, Prec::Sum, namer);
    }
    out.push('!');
    write_row(out, &c.row, namer);
}

fn write_row(out: &mut String, r: &EffectRow, namer: &mut TypeNamer) {
    let canon = r.canonical();
    out.push('<');
    let mut first = true;
    for l in &canon.labels {
        if !first {
            out.push_str("; ");
        }
        out.push_str(l);
        first = false;
    }
    if let RowTail::Var(v) = canon.tail {
        if !first {
            out.push_str("; ");
        }
        out.push_str(&namer.row_name(v));
    }
    out.push('>');
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::desugar::Desugarer;
    use crate::parser::parse_expr;
    use crate::syntax::Pattern;

    #[test]
    fn pretty_values() {
        assert_eq!(pretty_value(&Value::unit()), "()");
        assert_eq!(
            pretty_value(&Value::list(vec![Value::int(1), Value::int(2)])),
            "[1,2]"
        );
        assert_eq!(
            pretty_value(&Value::pair(Value::bool(true), Value::int(1))),
            "(true,1)"
        );
        assert_eq!(
            pretty_value(&Value::ctor(
                "opened",
                vec![Value::list(vec![Value::pair(
                    Value::int(56),
                    Value::str("")
                )])]
            )),
            "opened [(56,\"\")]"
        );
        assert_eq!(
            pretty_value(&Value::ctor("right", vec![Value::str("fail")])),
            "right \"fail\""
        );
    }

    #[test]
    fn pretty_return_unit() {
        assert_eq!(pretty_comp(&Computation::ret(Value::unit())), "return ()");
    }

    #[test]
    fn pretty_row_fixed_rendering() {
        let r = EffectRow::open(vec!["choose".into(), "once".into()], RowVar(0));
        assert_eq!(pretty_row(&r), "<choose; once; mu>");
    }

    #[test]
    fn pretty_scheme_identity() {
        // forall a mu. a -> a!<mu>
        let s = TypeScheme {
            ty_vars: vec![TyVar(0)],
            row_vars: vec![RowVar(1)],
            body: ValueType::fun(
                ValueType::Var(TyVar(0)),
                ComputationType::new(ValueType::Var(TyVar(0)), EffectRow::var(RowVar(1))),
            ),
        };
        assert_eq!(pretty_scheme(&s), "forall a mu. a -> a!<mu>");
    }

    #[test]
    fn pretty_handler_scheme() {
        // forall a mu. a!<choose; once; mu> => List a!<mu>
        let a = TyVar(0);
        let mu = RowVar(1);
        let s = TypeScheme {
            ty_vars: vec![a],
            row_vars: vec![mu],
            body: ValueType::handler(
                ComputationType::new(
                    ValueType::Var(a),
                    EffectRow::open(vec!["once".into(), "choose".into()], mu),
                ),
                ComputationType::new(ValueType::list(ValueType::Var(a)), EffectRow::var(mu)),
            ),
        };
        assert_eq!(
            pretty_scheme(&s),
            "forall a mu. a!<choose; once; mu> => List a!<mu>"
        );
    }

    #[test]
    fn roundtrip_core_computations() {
        let sources = [
            "return ()",
            "op choose () (b. if b then return 1 else return 2)",
            "sc once () (_. op choose () (b. return b)) (p. do q <- op choose () (b. return b); return (p,q))",
            "do x <- return 1; return x",
            "with h handle op ask () (y. return y)",
            "case xs of | [] -> return [] | (b :: bs) -> return b",
            "let id = \\x. return x in id ()",
            "x + 1",
            "head xs",
            "absurd y",
        ];
        for src in sources {
            let mut d = Desugarer::new();
            d.effects.insert("choose".into(), crate::syntax::LabelFlavor::Op);
            d.effects.insert("ask".into(), crate::syntax::LabelFlavor::Op);
            d.effects.insert("once".into(), crate::syntax::LabelFlavor::Sc);
            let c1 = d.elab_comp(&parse_expr(src).unwrap()).unwrap();
            let printed = pretty_comp(&c1);
            let c2 = d.elab_comp(&parse_expr(&printed).unwrap_or_else(|e| {
                panic!("re-parse failed for {printed:?}: {e}")
            })).unwrap();
            assert!(
                alpha_eq_comp(&c1, &c2),
                "round-trip mismatch:\n  src: {src}\n  printed: {printed}"
            );
        }
    }

    #[test]
    fn roundtrip_nested_do_parenthesized() {
        let c = Computation::do_(
            Pattern::var("x"),
            Computation::do_(
                Pattern::var("y"),
                Computation::ret(Value::int(1)),
                Computation::ret(Value::var("y")),
            ),
            Computation::ret(Value::var("x")),
        );
        let printed = pretty_comp(&c);
        let mut d = Desugarer::new();
        let c2 = d.elab_comp(&parse_expr(&printed).unwrap()).unwrap();
        assert!(alpha_eq_comp(&c, &c2), "printed: {printed}");
    }

    #[test]
    fn depth_limit_elides() {
        let c = Computation::do_(
            Pattern::var("x"),
            Computation::ret(Value::int(1)),
            Computation::ret(Value::var("x")),
        );
        let s = pretty_comp_depth(&c, 2);
        assert!(s.contains(".."), "{s}");
    }
}
