//! Recursive-descent parser for the surface language. Top-level
//! declarations start at column one; continuation lines are indented.

use crate::lexer::{lex, LexError, Tok, Token};
use crate::span::Span;
use crate::surface::*;
use crate::syntax::{LabelFlavor, Pattern, Prim};

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub span: Span,
    pub expected: Vec<String>,
    pub found: String,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "expected {} but found {}",
            self.expected.join(" or "),
            self.found
        )
    }
}

impl From<LexError> for ParseError {
    fn from(e: LexError) -> ParseError {
        ParseError {
            span: e.span,
            expected: vec![],
            found: e.message,
        }
    }
}

pub fn parse_program(src: &str) -> Result<SProgram, ParseError> {
    let tokens = lex(src)?;
    let mut decls = Vec::new();
    // Split the token stream into declaration groups at column-one tokens.
    let mut starts: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter_map(|(i, t)| if t.line_start { Some(i) } else { None })
        .collect();
    if !tokens.is_empty() && (starts.is_empty() || starts[0] != 0) {
        starts.insert(0, 0);
    }
    for (idx, &start) in starts.iter().enumerate() {
        let end = starts.get(idx + 1).copied().unwrap_or(tokens.len());
        let mut p = Parser::new(&tokens[start..end]);
        let decl = p.parse_decl()?;
        p.expect_end()?;
        decls.push(decl);
    }
    Ok(SProgram { decls })
}

/// Parses a single expression (REPL input and tests).
pub fn parse_expr(src: &str) -> Result<SExpr, ParseError> {
    let tokens = lex(src)?;
    let mut p = Parser::new(&tokens);
    let e = p.parse_expr()?;
    p.expect_end()?;
    Ok(e)
}

/// Parses a single declaration (REPL input).
pub fn parse_decl(src: &str) -> Result<SDecl, ParseError> {
    let tokens = lex(src)?;
    let mut p = Parser::new(&tokens);
    let d = p.parse_decl()?;
    p.expect_end()?;
    Ok(d)
}

/// Parses a type scheme (used by tests and the prelude manifest).
pub fn parse_scheme(src: &str) -> Result<SScheme, ParseError> {
    let tokens = lex(src)?;
    let mut p = Parser::new(&tokens);
    let s = p.parse_scheme()?;
    p.expect_end()?;
    Ok(s)
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    /// Furthest failure seen, for error reporting.
    furthest: Option<ParseError>,
}

impl<'a> Parser<'a> {
    fn new(toks: &'a [Token]) -> Parser<'a> {
        Parser {
            toks,
            pos: 0,
            furthest: None,
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|t| &t.tok)
    }

    fn span(&self) -> Span {
        self.toks
            .get(self.pos)
            .map(|t| t.span)
            .or_else(|| self.toks.last().map(|t| Span::new(t.span.hi, t.span.hi)))
            .unwrap_or(Span::DUMMY)
    }

    fn prev_span(&self) -> Span {
        if self.pos == 0 {
            Span::DUMMY
        } else {
            self.toks[self.pos - 1].span
        }
    }

    fn advance(&mut self) -> Option<&Token> {
        let t = self.toks.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&mut self, expected: &str) -> Result<T, ParseError> {
        let found = match self.peek() {
            Some(t) => format!("{t}"),
            None => "end of input".to_string(),
        };
        let e = ParseError {
            span: self.span(),
            expected: vec![expected.to_string()],
            found,
        };
        match &mut self.furthest {
            Some(f) if f.span.lo > e.span.lo => {}
            Some(f) if f.span.lo == e.span.lo => {
                if !f.expected.contains(&e.expected[0]) {
                    f.expected.push(e.expected[0].clone());
                }
            }
            _ => self.furthest = Some(e.clone()),
        }
        Err(self.furthest.clone().unwrap_or(e))
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<Span, ParseError> {
        if self.peek() == Some(&tok) {
            let s = self.span();
            self.pos += 1;
            Ok(s)
        } else {
            self.err(&format!("`{tok}`"))
        }
    }

    fn expect_end(&mut self) -> Result<(), ParseError> {
        if self.pos == self.toks.len() {
            Ok(())
        } else {
            self.err("end of declaration")
        }
    }

    fn lower_ident(&mut self) -> Result<(String, Span), ParseError> {
        match self.peek() {
            Some(Tok::LowerIdent(s)) => {
                let s = s.clone();
                let sp = self.span();
                self.pos += 1;
                Ok((s, sp))
            }
            _ => self.err("identifier"),
        }
    }

    // -----------------------------------------------------------------------
    // Declarations
    // -----------------------------------------------------------------------

    fn parse_decl(&mut self) -> Result<SDecl, ParseError> {
        let lo = self.span();
        match self.peek() {
            Some(Tok::Effect) => {
                self.advance();
                let flavor = match self.peek() {
                    Some(Tok::Op) => {
                        self.advance();
                        LabelFlavor::Op
                    }
                    Some(Tok::Sc) => {
                        self.advance();
                        LabelFlavor::Sc
                    }
                    _ => return self.err("`op` or `sc`"),
                };
                let (name, _) = self.lower_ident()?;
                self.expect(Tok::Colon)?;
                let param = self.parse_type()?;
                self.expect(Tok::Squiggly)?;
                let result = self.parse_type()?;
                Ok(SDecl::Effect {
                    flavor,
                    name,
                    param,
                    result,
                    span: lo.join(self.prev_span()),
                })
            }
            Some(Tok::Data) => {
                self.advance();
                let name = match self.peek() {
                    Some(Tok::UpperIdent(s)) => {
                        let s = s.clone();
                        self.advance();
                        s
                    }
                    _ => return self.err("datatype name"),
                };
                let mut params = Vec::new();
                while let Some(Tok::LowerIdent(p)) = self.peek() {
                    params.push(p.clone());
                    self.advance();
                }
                self.expect(Tok::Eq)?;
                let mut ctors = Vec::new();
                loop {
                    let (cname, _) = self.lower_ident()?;
                    let mut fields = Vec::new();
                    while self.starts_type_atom() {
                        fields.push(self.parse_type_atom()?);
                    }
                    ctors.push((cname, fields));
                    if !self.eat(&Tok::Pipe) {
                        break;
                    }
                }
                Ok(SDecl::Data {
                    name,
                    params,
                    ctors,
                    span: lo.join(self.prev_span()),
                })
            }
            Some(Tok::Main) => {
                self.advance();
                self.expect(Tok::Eq)?;
                let body = self.parse_expr()?;
                Ok(SDecl::Main {
                    body,
                    span: lo.join(self.prev_span()),
                })
            }
            Some(Tok::LowerIdent(_)) => {
                let (name, _) = self.lower_ident()?;
                if self.eat(&Tok::Colon) {
                    let scheme = self.parse_scheme()?;
                    return Ok(SDecl::Annot {
                        name,
                        scheme,
                        span: lo.join(self.prev_span()),
                    });
                }
                let mut params = Vec::new();
                while self.peek() != Some(&Tok::Eq) {
                    params.push(self.parse_pattern()?);
                }
                self.expect(Tok::Eq)?;
                let body = self.parse_expr()?;
                Ok(SDecl::Def {
                    name,
                    params,
                    body,
                    span: lo.join(self.prev_span()),
                })
            }
            _ => self.err("declaration"),
        }
    }

    // -----------------------------------------------------------------------
    // Patterns
    // -----------------------------------------------------------------------

    fn parse_pattern(&mut self) -> Result<Pattern, ParseError> {
        match self.peek() {
            Some(Tok::Underscore) => {
                self.advance();
                Ok(Pattern::Wild)
            }
            Some(Tok::LowerIdent(x)) => {
                let x = x.clone();
                self.advance();
                Ok(Pattern::Var(x))
            }
            Some(Tok::LParen) => {
                self.advance();
                let first = self.parse_pattern()?;
                if self.peek() == Some(&Tok::Comma) {
                    let mut items = vec![first];
                    while self.eat(&Tok::Comma) {
                        items.push(self.parse_pattern()?);
                    }
                    self.expect(Tok::RParen)?;
                    let mut it = items.into_iter().rev();
                    let mut acc = it.next().unwrap();
                    for x in it {
                        acc = Pattern::pair(x, acc);
                    }
                    Ok(acc)
                } else {
                    self.expect(Tok::RParen)?;
                    Ok(first)
                }
            }
            _ => self.err("pattern"),
        }
    }

    // -----------------------------------------------------------------------
    // Expressions
    // -----------------------------------------------------------------------

    fn parse_expr(&mut self) -> Result<SExpr, ParseError> {
        self.parse_seq()
    }

    /// seq := stmt (";" seq)?   with   stmt := "do"? (pat "<-")? open
    fn parse_seq(&mut self) -> Result<SExpr, ParseError> {
        let lo = self.span();
        self.eat(&Tok::Do);
        // Try `pat <-`.
        let save = self.pos;
        let binder = match self.parse_pattern() {
            Ok(p) if self.peek() == Some(&Tok::LArrow) => {
                self.advance();
                Some(p)
            }
            _ => {
                self.pos = save;
                None
            }
        };
        let first = self.parse_open()?;
        if self.eat(&Tok::Semi) {
            let rest = self.parse_seq()?;
            let span = lo.join(rest.span);
            Ok(SExpr::new(
                SExprKind::Seq(binder, Box::new(first), Box::new(rest)),
                span,
            ))
        } else {
            match binder {
                // `do x <- c` with no continuation is an error.
                Some(_) => self.err("`;` and a continuation after `<-` binding"),
                None => Ok(first),
            }
        }
    }

    /// Open-ended forms that extend maximally to the right, else operators.
    fn parse_open(&mut self) -> Result<SExpr, ParseError> {
        let lo = self.span();
        match self.peek() {
            Some(Tok::Backslash) => {
                self.advance();
                let pat = self.parse_pattern()?;
                self.expect(Tok::Dot)?;
                let body = self.parse_expr()?;
                let span = lo.join(body.span);
                Ok(SExpr::new(SExprKind::Lam(pat, Box::new(body)), span))
            }
            Some(Tok::Let) => {
                self.advance();
                let (name, _) = self.lower_ident()?;
                self.expect(Tok::Eq)?;
                let value = self.parse_open()?;
                self.expect(Tok::In)?;
                let body = self.parse_expr()?;
                let span = lo.join(body.span);
                Ok(SExpr::new(
                    SExprKind::LetIn(name, Box::new(value), Box::new(body)),
                    span,
                ))
            }
            Some(Tok::If) => {
                self.advance();
                let cond = self.parse_choice()?;
                self.expect(Tok::Then)?;
                let then_branch = self.parse_expr()?;
                self.expect(Tok::Else)?;
                let else_branch = self.parse_expr()?;
                let span = lo.join(else_branch.span);
                Ok(SExpr::new(
                    SExprKind::If(
                        Box::new(cond),
                        Box::new(then_branch),
                        Box::new(else_branch),
                    ),
                    span,
                ))
            }
            Some(Tok::Case) => {
                self.advance();
                let scrutinee = self.parse_choice()?;
                self.expect(Tok::Of)?;
                let mut arms = Vec::new();
                self.eat(&Tok::Pipe);
                loop {
                    arms.push(self.parse_arm()?);
                    if !self.eat(&Tok::Pipe) {
                        break;
                    }
                }
                let span = lo.join(self.prev_span());
                Ok(SExpr::new(SExprKind::Case(Box::new(scrutinee), arms), span))
            }
            Some(Tok::With) => {
                self.advance();
                let handler = if self.peek() == Some(&Tok::Handler) {
                    self.parse_handler_lit()?
                } else {
                    self.parse_app()?
                };
                self.expect(Tok::Handle)?;
                let body = self.parse_expr()?;
                let span = lo.join(body.span);
                Ok(SExpr::new(
                    SExprKind::HandleWith(Box::new(handler), Box::new(body)),
                    span,
                ))
            }
            _ => self.parse_choice(),
        }
    }

    fn parse_arm(&mut self) -> Result<SArm, ParseError> {
        let lo = self.span();
        let pat = self.parse_case_pattern()?;
        let guard = if self.eat(&Tok::Pipe) {
            let lhs = self.parse_cons()?;
            self.expect(Tok::Eq)?;
            let rhs = self.parse_cons()?;
            Some((lhs, rhs))
        } else {
            None
        };
        self.expect(Tok::Arrow)?;
        let body = self.parse_arm_body()?;
        let span = lo.join(body.span);
        Ok(SArm {
            pat,
            guard,
            body,
            span,
        })
    }

    /// Arm bodies stop at `|` (the next arm) by construction: no expression
    /// rule consumes a bare `|`.
    fn parse_arm_body(&mut self) -> Result<SExpr, ParseError> {
        self.parse_seq()
    }

    fn parse_case_pattern(&mut self) -> Result<SCasePattern, ParseError> {
        let head = self.parse_case_pattern_app()?;
        if self.eat(&Tok::ColonColon) {
            let tail = self.parse_case_pattern()?;
            Ok(SCasePattern::Cons(Box::new(head), Box::new(tail)))
        } else {
            Ok(head)
        }
    }

    fn parse_case_pattern_app(&mut self) -> Result<SCasePattern, ParseError> {
        match self.peek() {
            Some(Tok::LowerIdent(n)) => {
                let n = n.clone();
                self.advance();
                let mut args = Vec::new();
                while self.starts_case_pattern_atom() {
                    args.push(self.parse_case_pattern_atom()?);
                }
                Ok(SCasePattern::Name(n, args))
            }
            _ => self.parse_case_pattern_atom(),
        }
    }

    fn starts_case_pattern_atom(&self) -> bool {
        matches!(
            self.peek(),
            Some(Tok::Underscore)
                | Some(Tok::LowerIdent(_))
                | Some(Tok::LBracket)
                | Some(Tok::LParen)
        )
    }

    fn parse_case_pattern_atom(&mut self) -> Result<SCasePattern, ParseError> {
        match self.peek() {
            Some(Tok::Underscore) => {
                self.advance();
                Ok(SCasePattern::Wild)
            }
            Some(Tok::LowerIdent(n)) => {
                let n = n.clone();
                self.advance();
                Ok(SCasePattern::Name(n, vec![]))
            }
            Some(Tok::LBracket) => {
                self.advance();
                self.expect(Tok::RBracket)?;
                Ok(SCasePattern::Nil)
            }
            Some(Tok::LParen) => {
                self.advance();
                if self.eat(&Tok::RParen) {
                    return Ok(SCasePattern::Unit);
                }
                let first = self.parse_case_pattern()?;
                if self.peek() == Some(&Tok::Comma) {
                    let mut items = vec![first];
                    while self.eat(&Tok::Comma) {
                        items.push(self.parse_case_pattern()?);
                    }
                    self.expect(Tok::RParen)?;
                    let mut it = items.into_iter().rev();
                    let mut acc = it.next().unwrap();
                    for x in it {
                        acc = SCasePattern::Pair(Box::new(x), Box::new(acc));
                    }
                    Ok(acc)
                } else {
                    self.expect(Tok::RParen)?;
                    Ok(first)
                }
            }
            _ => self.err("case pattern"),
        }
    }

    /// choice := cmp ("<>" cmp)*, left associative.
    fn parse_choice(&mut self) -> Result<SExpr, ParseError> {
        let mut lhs = self.parse_cmp()?;
        while self.eat(&Tok::Diamond) {
            let rhs = self.parse_cmp()?;
            let span = lhs.span.join(rhs.span);
            lhs = SExpr::new(
                SExprKind::BinOp(SBinOp::Choice, Box::new(lhs), Box::new(rhs)),
                span,
            );
        }
        Ok(lhs)
    }

    /// cmp := cons (("="|">") cons)?, non-associative.
    fn parse_cmp(&mut self) -> Result<SExpr, ParseError> {
        let lhs = self.parse_cons()?;
        let op = match self.peek() {
            Some(Tok::Eq) => SBinOp::Eq,
            Some(Tok::Gt) => SBinOp::Gt,
            _ => return Ok(lhs),
        };
        self.advance();
        let rhs = self.parse_cons()?;
        let span = lhs.span.join(rhs.span);
        Ok(SExpr::new(
            SExprKind::BinOp(op, Box::new(lhs), Box::new(rhs)),
            span,
        ))
    }

    /// cons := additive ("::" cons)?, right associative.
    fn parse_cons(&mut self) -> Result<SExpr, ParseError> {
        let lhs = self.parse_additive()?;
        if self.eat(&Tok::ColonColon) {
            let rhs = self.parse_cons()?;
            let span = lhs.span.join(rhs.span);
            Ok(SExpr::new(
                SExprKind::BinOp(SBinOp::Cons, Box::new(lhs), Box::new(rhs)),
                span,
            ))
        } else {
            Ok(lhs)
        }
    }

    fn parse_additive(&mut self) -> Result<SExpr, ParseError> {
        let mut lhs = self.parse_multitive()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => SBinOp::Add,
                Some(Tok::Minus) => SBinOp::Sub,
                Some(Tok::PlusPlus) => SBinOp::Concat,
                _ => return Ok(lhs),
            };
            self.advance();
            let rhs = self.parse_multitive()?;
            let span = lhs.span.join(rhs.span);
            lhs = SExpr::new(SExprKind::BinOp(op, Box::new(lhs), Box::new(rhs)), span);
        }
    }

    fn parse_multitive(&mut self) -> Result<SExpr, ParseError> {
        let mut lhs = self.parse_app()?;
        while self.eat(&Tok::Star) {
            let rhs = self.parse_app()?;
            let span = lhs.span.join(rhs.span);
            lhs = SExpr::new(
                SExprKind::BinOp(SBinOp::Mul, Box::new(lhs), Box::new(rhs)),
                span,
            );
        }
        Ok(lhs)
    }

    /// Application by juxtaposition, plus the keyword-led operand forms
    /// (`return`, `op`, `sc`, `absurd`, `head`, `read`).
    fn parse_app(&mut self) -> Result<SExpr, ParseError> {
        let lo = self.span();
        match self.peek() {
            Some(Tok::Return) => {
                self.advance();
                let arg = self.parse_app()?;
                let span = lo.join(arg.span);
                Ok(SExpr::new(SExprKind::Return(Box::new(arg)), span))
            }
            Some(Tok::Absurd) => {
                self.advance();
                let arg = self.parse_atom()?;
                let span = lo.join(arg.span);
                Ok(SExpr::new(SExprKind::Absurd(Box::new(arg)), span))
            }
            Some(Tok::Head) => {
                self.advance();
                let arg = self.parse_atom()?;
                let span = lo.join(arg.span);
                Ok(SExpr::new(
                    SExprKind::Prim1(Prim::Head, Box::new(arg)),
                    span,
                ))
            }
            Some(Tok::Read) => {
                self.advance();
                let arg = self.parse_atom()?;
                let span = lo.join(arg.span);
                Ok(SExpr::new(
                    SExprKind::Prim1(Prim::Read, Box::new(arg)),
                    span,
                ))
            }
            Some(Tok::Op) => {
                self.advance();
                let (label, _) = self.lower_ident()?;
                let arg = self.parse_atom()?;
                let cont = self.try_parse_binder_group()?;
                let span = lo.join(self.prev_span());
                Ok(SExpr::new(
                    SExprKind::OpCall(label, Box::new(arg), cont.map(|(p, e)| (p, Box::new(e)))),
                    span,
                ))
            }
            Some(Tok::Sc) => {
                self.advance();
                let (label, _) = self.lower_ident()?;
                let arg = self.parse_atom()?;
                let scoped = self.parse_scoped_group()?;
                let cont = self.try_parse_binder_group()?;
                let span = lo.join(self.prev_span());
                Ok(SExpr::new(
                    SExprKind::ScCall(
                        label,
                        Box::new(arg),
                        (scoped.0, Box::new(scoped.1)),
                        cont.map(|(p, e)| (p, Box::new(e))),
                    ),
                    span,
                ))
            }
            _ => {
                let mut head = self.parse_atom()?;
                while self.starts_atom() {
                    let arg = self.parse_atom()?;
                    let span = head.span.join(arg.span);
                    head = SExpr::new(SExprKind::App(Box::new(head), Box::new(arg)), span);
                }
                Ok(head)
            }
        }
    }

    /// `( pattern . expr )` — continuation/scoped-computation group.
    fn try_parse_binder_group(&mut self) -> Result<Option<(Pattern, SExpr)>, ParseError> {
        if self.peek() != Some(&Tok::LParen) {
            return Ok(None);
        }
        let save = self.pos;
        self.advance();
        let pat = match self.parse_pattern() {
            Ok(p) => p,
            Err(_) => {
                self.pos = save;
                return Ok(None);
            }
        };
        if !self.eat(&Tok::Dot) {
            self.pos = save;
            return Ok(None);
        }
        let body = self.parse_expr()?;
        self.expect(Tok::RParen)?;
        Ok(Some((pat, body)))
    }

    /// The scoped-computation group of `sc`: `( (pattern .)? expr )`; a
    /// missing binder is a wildcard.
    fn parse_scoped_group(&mut self) -> Result<(Pattern, SExpr), ParseError> {
        if let Some(g) = self.try_parse_binder_group()? {
            return Ok(g);
        }
        self.expect(Tok::LParen)?;
        let body = self.parse_expr()?;
        self.expect(Tok::RParen)?;
        Ok((Pattern::Wild, body))
    }

    fn starts_atom(&self) -> bool {
        matches!(
            self.peek(),
            Some(Tok::LowerIdent(_))
                | Some(Tok::Int(_))
                | Some(Tok::Str(_))
                | Some(Tok::Char(_))
                | Some(Tok::True)
                | Some(Tok::False)
                | Some(Tok::LParen)
                | Some(Tok::LBracket)
        )
    }

    fn parse_atom(&mut self) -> Result<SExpr, ParseError> {
        let lo = self.span();
        match self.peek() {
            Some(Tok::LowerIdent(x)) => {
                let x = x.clone();
                self.advance();
                Ok(SExpr::new(SExprKind::Var(x), lo))
            }
            Some(Tok::Int(n)) => {
                let n = *n;
                self.advance();
                Ok(SExpr::new(SExprKind::Int(n), lo))
            }
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.advance();
                Ok(SExpr::new(SExprKind::Str(s), lo))
            }
            Some(Tok::Char(c)) => {
                let c = *c;
                self.advance();
                Ok(SExpr::new(SExprKind::Char(c), lo))
            }
            Some(Tok::True) => {
                self.advance();
                Ok(SExpr::new(SExprKind::Bool(true), lo))
            }
            Some(Tok::False) => {
                self.advance();
                Ok(SExpr::new(SExprKind::Bool(false), lo))
            }
            Some(Tok::LBracket) => {
                self.advance();
                let mut items = Vec::new();
                if self.peek() != Some(&Tok::RBracket) {
                    loop {
                        items.push(self.parse_open()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                self.expect(Tok::RBracket)?;
                let span = lo.join(self.prev_span());
                Ok(SExpr::new(SExprKind::ListLit(items), span))
            }
            Some(Tok::LParen) => {
                self.advance();
                if self.eat(&Tok::RParen) {
                    return Ok(SExpr::new(SExprKind::Unit, lo.join(self.prev_span())));
                }
                let first = self.parse_expr()?;
                if self.peek() == Some(&Tok::Comma) {
                    let mut items = vec![first];
                    while self.eat(&Tok::Comma) {
                        items.push(self.parse_expr()?);
                    }
                    self.expect(Tok::RParen)?;
                    let span = lo.join(self.prev_span());
                    let mut it = items.into_iter().rev();
                    let mut acc = it.next().unwrap();
                    for x in it {
                        let sp = x.span.join(acc.span);
                        acc = SExpr::new(SExprKind::Pair(Box::new(x), Box::new(acc)), sp);
                    }
                    Ok(SExpr::new(acc.kind, span))
                } else {
                    self.expect(Tok::RParen)?;
                    Ok(first)
                }
            }
            Some(Tok::Handler) => self.parse_handler_lit(),
            _ => self.err("expression"),
        }
    }

    // -----------------------------------------------------------------------
    // Handlers
    // -----------------------------------------------------------------------

    fn parse_handler_lit(&mut self) -> Result<SExpr, ParseError> {
        let lo = self.span();
        self.expect(Tok::Handler)?;
        self.expect(Tok::LBracket)?;
        let annotation = self.parse_type()?;
        self.expect(Tok::RBracket)?;
        self.expect(Tok::LBrace)?;
        let mut clauses = Vec::new();
        loop {
            clauses.push(self.parse_clause()?);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(Tok::RBrace)?;
        let span = lo.join(self.prev_span());
        Ok(SExpr::new(
            SExprKind::HandlerLit(Box::new(SHandler {
                annotation,
                clauses,
                span,
            })),
            span,
        ))
    }

    fn parse_clause(&mut self) -> Result<SClause, ParseError> {
        match self.peek() {
            Some(Tok::Return) => {
                self.advance();
                let binder = self.parse_pattern()?;
                self.expect(Tok::Arrow)?;
                let body = self.parse_expr()?;
                Ok(SClause::Return { binder, body })
            }
            Some(Tok::Op) => {
                self.advance();
                let (label, _) = self.lower_ident()?;
                let param = self.parse_pattern()?;
                let karg = self.parse_pattern()?;
                self.expect(Tok::Arrow)?;
                let body = self.parse_expr()?;
                Ok(SClause::Op {
                    label,
                    param,
                    karg,
                    body,
                })
            }
            Some(Tok::Sc) => {
                self.advance();
                let (label, _) = self.lower_ident()?;
                let param = self.parse_pattern()?;
                let parg = self.parse_pattern()?;
                let karg = self.parse_pattern()?;
                self.expect(Tok::Arrow)?;
                let body = self.parse_expr()?;
                Ok(SClause::Sc {
                    label,
                    param,
                    parg,
                    karg,
                    body,
                })
            }
            Some(Tok::Fwd) => {
                self.advance();
                let farg = self.parse_pattern()?;
                let parg = self.parse_pattern()?;
                let karg = self.parse_pattern()?;
                self.expect(Tok::Arrow)?;
                let body = self.parse_expr()?;
                Ok(SClause::Fwd {
                    farg,
                    parg,
                    karg,
                    body,
                })
            }
            Some(Tok::Bind) => {
                self.advance();
                let xarg = self.parse_pattern()?;
                let karg = self.parse_pattern()?;
                self.expect(Tok::Arrow)?;
                let body = self.parse_expr()?;
                Ok(SClause::Bind { xarg, karg, body })
            }
            _ => self.err("handler clause"),
        }
    }

    // -----------------------------------------------------------------------
    // Types
    // -----------------------------------------------------------------------

    fn parse_scheme(&mut self) -> Result<SScheme, ParseError> {
        let lo = self.span();
        let mut vars = Vec::new();
        if self.eat(&Tok::Forall) {
            loop {
                match self.peek() {
                    Some(Tok::LowerIdent(v)) => {
                        vars.push(v.clone());
                        self.advance();
                    }
                    Some(Tok::Dot) => break,
                    _ => return self.err("type variable or `.`"),
                }
            }
            self.expect(Tok::Dot)?;
        }
        let body = self.parse_type()?;
        Ok(SScheme {
            vars,
            body,
            span: lo.join(self.prev_span()),
        })
    }

    /// ty := bang (("->" | "=>") ty)?
    fn parse_type(&mut self) -> Result<SType, ParseError> {
        let lo = self.span();
        if self.peek() == Some(&Tok::Fun) {
            self.advance();
            let (v, _) = self.lower_ident()?;
            self.expect(Tok::Arrow)?;
            let body = self.parse_type()?;
            let span = lo.join(body.span);
            return Ok(SType::new(STypeKind::Lam(v, Box::new(body)), span));
        }
        let (first, first_row) = self.parse_type_bang()?;
        match self.peek() {
            Some(Tok::Arrow) => {
                self.advance();
                if first_row.is_some() {
                    return self.err("value type before `->` (found a computation type)");
                }
                let cod = self.parse_comp_type()?;
                let span = lo.join(self.prev_span());
                Ok(SType::new(
                    STypeKind::Fun(Box::new(first), Box::new(cod)),
                    span,
                ))
            }
            Some(Tok::FatArrow) => {
                self.advance();
                let lhs_row = match first_row {
                    Some(r) => r,
                    None => return self.err("computation type `A!<E>` before `=>`"),
                };
                let lhs_span = first.span;
                let lhs = SCompType {
                    val: first,
                    row: lhs_row,
                    span: lhs_span,
                };
                let rhs = self.parse_comp_type()?;
                let span = lo.join(self.prev_span());
                Ok(SType::new(
                    STypeKind::HandlerT(Box::new(lhs), Box::new(rhs)),
                    span,
                ))
            }
            _ => {
                if first_row.is_some() {
                    self.err("`->`, `=>` or a value type (a bare computation type is not a value type)")
                } else {
                    Ok(first)
                }
            }
        }
    }

    fn parse_comp_type(&mut self) -> Result<SCompType, ParseError> {
        let lo = self.span();
        let (val, row) = self.parse_type_bang()?;
        match row {
            Some(row) => Ok(SCompType {
                val,
                row,
                span: lo.join(self.prev_span()),
            }),
            None => self.err("computation type `A!<E>`"),
        }
    }

    /// bang := sum ("!" "<" row ">")?; also recurses for nested arrows so
    /// that `A -> B!<E>` parses as the codomain of the arrow.
    fn parse_type_bang(&mut self) -> Result<(SType, Option<SRow>), ParseError> {
        let lo = self.span();
        let sum = self.parse_type_sum()?;
        // An arrow may appear here (value types include functions); it binds
        // tighter than `=>` and the `!` applies to the codomain side.
        let sum = if self.peek() == Some(&Tok::Arrow) {
            self.advance();
            let cod = self.parse_comp_type()?;
            let span = lo.join(self.prev_span());
            return Ok((
                SType::new(STypeKind::Fun(Box::new(sum), Box::new(cod)), span),
                None,
            ));
        } else {
            sum
        };
        if self.peek() == Some(&Tok::Bang) {
            self.advance();
            let row = self.parse_row()?;
            Ok((sum, Some(row)))
        } else {
            Ok((sum, None))
        }
    }

    fn parse_row(&mut self) -> Result<SRow, ParseError> {
        let lo = self.span();
        // `<>` lexes as a single diamond token.
        if self.eat(&Tok::Diamond) {
            return Ok(SRow {
                items: vec![],
                span: lo.join(self.prev_span()),
            });
        }
        self.expect(Tok::Lt)?;
        let mut items = Vec::new();
        if self.peek() != Some(&Tok::Gt) {
            loop {
                let (name, _) = self.lower_ident()?;
                items.push(name);
                if !self.eat(&Tok::Semi) {
                    break;
                }
            }
        }
        self.expect(Tok::Gt)?;
        Ok(SRow {
            items,
            span: lo.join(self.prev_span()),
        })
    }

    fn parse_type_sum(&mut self) -> Result<SType, ParseError> {
        let lhs = self.parse_type_app()?;
        if self.eat(&Tok::Plus) {
            let rhs = self.parse_type_sum()?;
            let span = lhs.span.join(rhs.span);
            Ok(SType::new(
                STypeKind::Sum(Box::new(lhs), Box::new(rhs)),
                span,
            ))
        } else {
            Ok(lhs)
        }
    }

    fn parse_type_app(&mut self) -> Result<SType, ParseError> {
        let head = self.parse_type_atom()?;
        let mut args = Vec::new();
        while self.starts_type_atom() {
            args.push(self.parse_type_atom()?);
        }
        if args.is_empty() {
            Ok(head)
        } else {
            let span = head.span.join(args.last().unwrap().span);
            Ok(SType::new(STypeKind::App(Box::new(head), args), span))
        }
    }

    fn starts_type_atom(&self) -> bool {
        matches!(
            self.peek(),
            Some(Tok::LParen) | Some(Tok::LowerIdent(_)) | Some(Tok::UpperIdent(_))
        )
    }

    fn parse_type_atom(&mut self) -> Result<SType, ParseError> {
        let lo = self.span();
        match self.peek() {
            Some(Tok::LParen) => {
                self.advance();
                if self.eat(&Tok::RParen) {
                    return Ok(SType::new(STypeKind::Unit, lo.join(self.prev_span())));
                }
                let first = self.parse_type()?;
                if self.peek() == Some(&Tok::Comma) {
                    let mut items = vec![first];
                    while self.eat(&Tok::Comma) {
                        items.push(self.parse_type()?);
                    }
                    self.expect(Tok::RParen)?;
                    let span = lo.join(self.prev_span());
                    let mut it = items.into_iter().rev();
                    let mut acc = it.next().unwrap();
                    for x in it {
                        let sp = x.span.join(acc.span);
                        acc = SType::new(STypeKind::Pair(Box::new(x), Box::new(acc)), sp);
                    }
                    Ok(SType::new(acc.kind, span))
                } else {
                    self.expect(Tok::RParen)?;
                    Ok(first)
                }
            }
            Some(Tok::LowerIdent(n)) | Some(Tok::UpperIdent(n)) => {
                let n = n.clone();
                self.advance();
                Ok(SType::new(STypeKind::Named(n), lo))
            }
            _ => self.err("type"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_return_unit() {
        let e = parse_expr("return ()").unwrap();
        match e.kind {
            SExprKind::Return(inner) => assert_eq!(inner.kind, SExprKind::Unit),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn parse_do_missing_body_fails() {
        let err = parse_expr("do x <- return 1").unwrap_err();
        assert!(!err.expected.is_empty());
    }

    #[test]
    fn parse_sc_with_two_binders() {
        let e = parse_expr(
            "sc once () (_. op choose () (b. return b)) (p. do q <- op choose () (b. return b); return (p, q))",
        )
        .unwrap();
        match e.kind {
            SExprKind::ScCall(label, _, (spat, _), cont) => {
                assert_eq!(label, "once");
                assert_eq!(spat, Pattern::Wild);
                let (cpat, _) = cont.expect("continuation group");
                assert_eq!(cpat, Pattern::Var("p".into()));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn parse_sc_without_cont() {
        let e = parse_expr("sc local (\\a. return (2 * a)) (do z <- op ask (); return z)").unwrap();
        match e.kind {
            SExprKind::ScCall(label, _, (spat, _), cont) => {
                assert_eq!(label, "local");
                assert_eq!(spat, Pattern::Wild);
                assert!(cont.is_none());
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn parse_op_sugar_no_cont() {
        let e = parse_expr("op ask ()").unwrap();
        match e.kind {
            SExprKind::OpCall(label, _, cont) => {
                assert_eq!(label, "ask");
                assert!(cont.is_none());
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn diamond_is_left_assoc() {
        let e = parse_expr("op token '0' <> op token '1' <> op token '2'").unwrap();
        match e.kind {
            SExprKind::BinOp(SBinOp::Choice, lhs, _) => match lhs.kind {
                SExprKind::BinOp(SBinOp::Choice, _, _) => {}
                other => panic!("unexpected lhs: {other:?}"),
            },
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn seq_without_do() {
        let e = parse_expr("op token '+'; op cut ()").unwrap();
        assert!(matches!(e.kind, SExprKind::Seq(None, _, _)));
    }

    #[test]
    fn application_binds_tighter_than_star() {
        let e = parse_expr("f x * g y").unwrap();
        match e.kind {
            SExprKind::BinOp(SBinOp::Mul, lhs, rhs) => {
                assert!(matches!(lhs.kind, SExprKind::App(_, _)));
                assert!(matches!(rhs.kind, SExprKind::App(_, _)));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn parse_program_splits_decls() {
        let src = "\
effect op choose : () ~> Bool
c_ND1 = op choose () (b. if b then return 1 else return 2)
main = with h_ND handle c_ND1
";
        let p = parse_program(src).unwrap();
        assert_eq!(p.decls.len(), 3);
        assert!(matches!(p.decls[0], SDecl::Effect { .. }));
        assert!(matches!(p.decls[1], SDecl::Def { .. }));
        assert!(matches!(p.decls[2], SDecl::Main { .. }));
    }

    #[test]
    fn parse_continuation_lines() {
        let src = "\
concatMap : forall a b mu. List a -> ((a -> List b!<mu>) -> List b!<mu>)!<mu>
concatMap xs f = case xs of
  | [] -> return []
  | (b :: bs) -> do as <- f b; do as' <- concatMap bs f; as ++ as'
";
        let p = parse_program(src).unwrap();
        assert_eq!(p.decls.len(), 2);
        assert!(matches!(p.decls[0], SDecl::Annot { .. }));
        match &p.decls[1] {
            SDecl::Def { name, params, body, .. } => {
                assert_eq!(name, "concatMap");
                assert_eq!(params.len(), 2);
                assert!(matches!(body.kind, SExprKind::Case(_, _)));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn parse_handler_literal() {
        let src = "handler [fun a -> List a] { return x -> return [x], op choose _ k -> do xs <- k true; do ys <- k false; xs ++ ys, bind x k -> concatMap x k }";
        let e = parse_expr(src).unwrap();
        match e.kind {
            SExprKind::HandlerLit(h) => {
                assert_eq!(h.clauses.len(), 3);
                assert!(matches!(h.annotation.kind, STypeKind::Lam(_, _)));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn parse_handler_type_scheme() {
        let s = parse_scheme("forall a mu. a!<raise; catch; mu> => String + a!<mu>").unwrap();
        assert_eq!(s.vars, vec!["a".to_string(), "mu".to_string()]);
        assert!(matches!(s.body.kind, STypeKind::HandlerT(_, _)));
    }

    #[test]
    fn parse_fun_type_with_rows() {
        let s =
            parse_scheme("forall a mu. a!<token; fail; mu> => (String -> (a, String)!<fail; mu>)!<fail; mu>")
                .unwrap();
        match s.body.kind {
            STypeKind::HandlerT(_, d) => {
                assert_eq!(d.row.items, vec!["fail".to_string(), "mu".to_string()]);
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn parse_empty_row() {
        let s = parse_scheme("a!<> => List a!<>").unwrap();
        match s.body.kind {
            STypeKind::HandlerT(c, _) => assert!(c.row.items.is_empty()),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn parse_case_with_guard() {
        let e = parse_expr("case x of | left e' | e' = e -> return e' | _ -> return y").unwrap();
        match e.kind {
            SExprKind::Case(_, arms) => {
                assert_eq!(arms.len(), 2);
                assert!(arms[0].guard.is_some());
                assert!(arms[1].guard.is_none());
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn parse_effect_decl_with_row_in_signature() {
        let p = parse_program("effect sc local : (Int -> Int!<mu>) ~> ()\n").unwrap();
        match &p.decls[0] {
            SDecl::Effect { flavor, name, .. } => {
                assert_eq!(*flavor, LabelFlavor::Sc);
                assert_eq!(name, "local");
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn determinism() {
        let src = "main = do x <- return 1; return x\n";
        assert_eq!(parse_program(src).unwrap(), parse_program(src).unwrap());
    }

    #[test]
    fn data_decl() {
        let p = parse_program("data CutList a = opened (List a) | closed (List a)\n").unwrap();
        match &p.decls[0] {
            SDecl::Data { name, params, ctors, .. } => {
                assert_eq!(name, "CutList");
                assert_eq!(params, &vec!["a".to_string()]);
                assert_eq!(ctors.len(), 2);
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn lambda_with_pair_pattern() {
        let e = parse_expr("\\(z, s'). do k' <- k z; k' s'").unwrap();
        match e.kind {
            SExprKind::Lam(p, _) => {
                assert_eq!(p, Pattern::pair(Pattern::var("z"), Pattern::var("s'")));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn with_parenthesized_computation_head_application() {
        let e = parse_expr("(with h_token handle expr ()) \"(2+5)*8\"").unwrap();
        assert!(matches!(e.kind, SExprKind::App(_, _)));
    }
}
