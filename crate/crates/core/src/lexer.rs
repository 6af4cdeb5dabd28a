//! Lexer for the surface language. Tokens record whether they start a line
//! at column one; top-level declarations are split on that flag.

use crate::span::Span;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    // literals and names
    LowerIdent(String),
    UpperIdent(String),
    Int(i64),
    Str(String),
    Char(char),
    // keywords
    Return,
    Op,
    Sc,
    With,
    Handle,
    Handler,
    Do,
    Let,
    In,
    Fwd,
    Bind,
    If,
    Then,
    Else,
    Case,
    Of,
    Data,
    Effect,
    Main,
    Forall,
    Fun,
    True,
    False,
    Absurd,
    Head,
    Read,
    // punctuation
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Semi,
    Dot,
    Backslash,
    Arrow,     // ->
    LArrow,    // <-
    FatArrow,  // =>
    Squiggly,  // ~>
    Eq,        // =
    Colon,     // :
    ColonColon,// ::
    Plus,
    Minus,
    Star,
    PlusPlus,  // ++
    Gt,
    Diamond,   // <>
    Bang,      // !
    Lt,        // < (only inside rows)
    Pipe,      // |
    Underscore,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::LowerIdent(s) | Tok::UpperIdent(s) => write!(f, "{s}"),
            Tok::Int(i) => write!(f, "{i}"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::Char(c) => write!(f, "{c:?}"),
            Tok::Return => write!(f, "return"),
            Tok::Op => write!(f, "op"),
            Tok::Sc => write!(f, "sc"),
            Tok::With => write!(f, "with"),
            Tok::Handle => write!(f, "handle"),
            Tok::Handler => write!(f, "handler"),
            Tok::Do => write!(f, "do"),
            Tok::Let => write!(f, "let"),
            Tok::In => write!(f, "in"),
            Tok::Fwd => write!(f, "fwd"),
            Tok::Bind => write!(f, "bind"),
            Tok::If => write!(f, "if"),
            Tok::Then => write!(f, "then"),
            Tok::Else => write!(f, "else"),
            Tok::Case => write!(f, "case"),
            Tok::Of => write!(f, "of"),
            Tok::Data => write!(f, "data"),
            Tok::Effect => write!(f, "effect"),
            Tok::Main => write!(f, "main"),
            Tok::Forall => write!(f, "forall"),
            Tok::Fun => write!(f, "fun"),
            Tok::True => write!(f, "true"),
            Tok::False => write!(f, "false"),
            Tok::Absurd => write!(f, "absurd"),
            Tok::Head => write!(f, "head"),
            Tok::Read => write!(f, "read"),
            Tok::LParen => write!(f, "("),
            Tok::RParen => write!(f, ")"),
            Tok::LBrace => write!(f, "{{"),
            Tok::RBrace => write!(f, "}}"),
            Tok::LBracket => write!(f, "["),
            Tok::RBracket => write!(f, "]"),
            Tok::Comma => write!(f, ","),
            Tok::Semi => write!(f, ";"),
            Tok::Dot => write!(f, "."),
            Tok::Backslash => write!(f, "\\"),
            Tok::Arrow => write!(f, "->"),
            Tok::LArrow => write!(f, "<-"),
            Tok::FatArrow => write!(f, "=>"),
            Tok::Squiggly => write!(f, "~>"),
            Tok::Eq => write!(f, "="),
            Tok::Colon => write!(f, ":"),
            Tok::ColonColon => write!(f, "::"),
            Tok::Plus => write!(f, "+"),
            Tok::Minus => write!(f, "-"),
            Tok::Star => write!(f, "*"),
            Tok::PlusPlus => write!(f, "++"),
            Tok::Gt => write!(f, ">"),
            Tok::Diamond => write!(f, "<>"),
            Tok::Bang => write!(f, "!"),
            Tok::Lt => write!(f, "<"),
            Tok::Pipe => write!(f, "|"),
            Tok::Underscore => write!(f, "_"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
    /// True when this token is the first on its line at column one.
    pub line_start: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexError {
    pub message: String,
    pub span: Span,
}

fn keyword(s: &str) -> Option<Tok> {
    Some(match s {
        "return" => Tok::Return,
        "op" => Tok::Op,
        "sc" => Tok::Sc,
        "with" => Tok::With,
        "handle" => Tok::Handle,
        "handler" => Tok::Handler,
        "do" => Tok::Do,
        "let" => Tok::Let,
        "in" => Tok::In,
        "fwd" => Tok::Fwd,
        "bind" => Tok::Bind,
        "if" => Tok::If,
        "then" => Tok::Then,
        "else" => Tok::Else,
        "case" => Tok::Case,
        "of" => Tok::Of,
        "data" => Tok::Data,
        "effect" => Tok::Effect,
        "main" => Tok::Main,
        "forall" => Tok::Forall,
        "fun" => Tok::Fun,
        "true" => Tok::True,
        "false" => Tok::False,
        "absurd" => Tok::Absurd,
        "head" => Tok::Head,
        "read" => Tok::Read,
        _ => return None,
    })
}

pub fn lex(src: &str) -> Result<Vec<Token>, LexError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0usize;
    let mut at_line_start = true;

    macro_rules! push {
        ($tok:expr, $lo:expr, $hi:expr) => {{
            out.push(Token {
                tok: $tok,
                span: Span::new($lo as u32, $hi as u32),
                line_start: at_line_start,
            });
            at_line_start = false;
        }};
    }

    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b'\n' => {
                i += 1;
                at_line_start = true;
            }
            b' ' | b'\t' | b'\r' => {
                i += 1;
                // Indented content does not start a declaration.
                if b != b'\r' {
                    at_line_start = false;
                }
            }
            b'-' if i + 1 < bytes.len() && bytes[i + 1] == b'-' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            b'-' if i + 1 < bytes.len() && bytes[i + 1] == b'>' => {
                push!(Tok::Arrow, i, i + 2);
                i += 2;
            }
            b'-' => {
                push!(Tok::Minus, i, i + 1);
                i += 1;
            }
            b'~' if i + 1 < bytes.len() && bytes[i + 1] == b'>' => {
                push!(Tok::Squiggly, i, i + 2);
                i += 2;
            }
            b'=' if i + 1 < bytes.len() && bytes[i + 1] == b'>' => {
                push!(Tok::FatArrow, i, i + 2);
                i += 2;
            }
            b'=' => {
                push!(Tok::Eq, i, i + 1);
                i += 1;
            }
            b'<' if i + 1 < bytes.len() && bytes[i + 1] == b'-' => {
                push!(Tok::LArrow, i, i + 2);
                i += 2;
            }
            b'<' if i + 1 < bytes.len() && bytes[i + 1] == b'>' => {
                push!(Tok::Diamond, i, i + 2);
                i += 2;
            }
            b'<' => {
                push!(Tok::Lt, i, i + 1);
                i += 1;
            }
            b'>' => {
                push!(Tok::Gt, i, i + 1);
                i += 1;
            }
            b'+' if i + 1 < bytes.len() && bytes[i + 1] == b'+' => {
                push!(Tok::PlusPlus, i, i + 2);
                i += 2;
            }
            b'+' => {
                push!(Tok::Plus, i, i + 1);
                i += 1;
            }
            b'*' => {
                push!(Tok::Star, i, i + 1);
                i += 1;
            }
            b'!' => {
                push!(Tok::Bang, i, i + 1);
                i += 1;
            }
            b'|' => {
                push!(Tok::Pipe, i, i + 1);
                i += 1;
            }
            b'(' => {
                push!(Tok::LParen, i, i + 1);
                i += 1;
            }
            b')' => {
                push!(Tok::RParen, i, i + 1);
                i += 1;
            }
            b'{' => {
                push!(Tok::LBrace, i, i + 1);
                i += 1;
            }
            b'}' => {
                push!(Tok::RBrace, i, i + 1);
                i += 1;
            }
            b'[' => {
                push!(Tok::LBracket, i, i + 1);
                i += 1;
            }
            b']' => {
                push!(Tok::RBracket, i, i + 1);
                i += 1;
            }
            b',' => {
                push!(Tok::Comma, i, i + 1);
                i += 1;
            }
            b';' => {
                push!(Tok::Semi, i, i + 1);
                i += 1;
            }
            b'.' => {
                push!(Tok::Dot, i, i + 1);
                i += 1;
            }
            b'\\' => {
                push!(Tok::Backslash, i, i + 1);
                i += 1;
            }
            b':' if i + 1 < bytes.len() && bytes[i + 1] == b':' => {
                push!(Tok::ColonColon, i, i + 2);
                i += 2;
            }
            b':' => {
                push!(Tok::Colon, i, i + 1);
                i += 1;
            }
            b'"' => {
                let lo = i;
                i += 1;
                let mut s = String::new();
                loop {
                    if i >= bytes.len() {
                        return Err(LexError {
                            message: "unterminated string literal".into(),
                            span: Span::new(lo as u32, i as u32),
                        });
                    }
                    match bytes[i] {
                        b'"' => {
                            i += 1;
                            break;
                        }
                        b'\\' => {
                            i += 1;
                            if i >= bytes.len() {
                                return Err(LexError {
                                    message: "unterminated escape".into(),
                                    span: Span::new(lo as u32, i as u32),
                                });
                            }
                            s.push(unescape(bytes[i], lo, i)?);
                            i += 1;
                        }
                        c => {
                            s.push(c as char);
                            i += 1;
                        }
                    }
                }
                push!(Tok::Str(s), lo, i);
            }
            b'\'' => {
                let lo = i;
                i += 1;
                if i >= bytes.len() {
                    return Err(LexError {
                        message: "unterminated character literal".into(),
                        span: Span::new(lo as u32, i as u32),
                    });
                }
                let c = if bytes[i] == b'\\' {
                    i += 1;
                    if i >= bytes.len() {
                        return Err(LexError {
                            message: "unterminated escape".into(),
                            span: Span::new(lo as u32, i as u32),
                        });
                    }
                    let c = unescape(bytes[i], lo, i)?;
                    i += 1;
                    c
                } else {
                    let c = bytes[i] as char;
                    i += 1;
                    c
                };
                if i >= bytes.len() || bytes[i] != b'\'' {
                    return Err(LexError {
                        message: "unterminated character literal".into(),
                        span: Span::new(lo as u32, i as u32),
                    });
                }
                i += 1;
                push!(Tok::Char(c), lo, i);
            }
            b'0'..=b'9' => {
                let lo = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let text = &src[lo..i];
                let n: i64 = text.parse().map_err(|_| LexError {
                    message: format!("integer literal out of range: {text}"),
                    span: Span::new(lo as u32, i as u32),
                })?;
                push!(Tok::Int(n), lo, i);
            }
            b'_' => {
                let lo = i;
                i += 1;
                if i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    while i < bytes.len() && ident_char(bytes[i]) {
                        i += 1;
                    }
                    push!(Tok::LowerIdent(src[lo..i].to_string()), lo, i);
                } else {
                    push!(Tok::Underscore, lo, i);
                }
            }
            c if c.is_ascii_lowercase() => {
                let lo = i;
                while i < bytes.len() && ident_char(bytes[i]) {
                    i += 1;
                }
                let text = &src[lo..i];
                match keyword(text) {
                    Some(k) => push!(k, lo, i),
                    None => push!(Tok::LowerIdent(text.to_string()), lo, i),
                }
            }
            c if c.is_ascii_uppercase() => {
                let lo = i;
                while i < bytes.len() && ident_char(bytes[i]) {
                    i += 1;
                }
                push!(Tok::UpperIdent(src[lo..i].to_string()), lo, i);
            }
            c => {
                return Err(LexError {
                    message: format!("unexpected character {:?}", c as char),
                    span: Span::new(i as u32, i as u32 + 1),
                });
            }
        }
    }
    Ok(out)
}

fn ident_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'\''
}

fn unescape(b: u8, lo: usize, at: usize) -> Result<char, LexError> {
    Ok(match b {
        b'n' => '\n',
        b't' => '\t',
        b'r' => '\r',
        b'\\' => '\\',
        b'\'' => '\'',
        b'"' => '"',
        b'0' => '\0',
        other => {
            return Err(LexError {
                message: format!("unknown escape \\{}", other as char),
                span: Span::new(lo as u32, at as u32 + 1),
            })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(src: &str) -> Vec<Tok> {
        lex(src).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn basic_tokens() {
        assert_eq!(
            toks("return ()"),
            vec![Tok::Return, Tok::LParen, Tok::RParen]
        );
        assert_eq!(
            toks("do x <- c1; c2"),
            vec![
                Tok::Do,
                Tok::LowerIdent("x".into()),
                Tok::LArrow,
                Tok::LowerIdent("c1".into()),
                Tok::Semi,
                Tok::LowerIdent("c2".into()),
            ]
        );
    }

    #[test]
    fn primes_in_idents() {
        assert_eq!(toks("expr' s'"), vec![
            Tok::LowerIdent("expr'".into()),
            Tok::LowerIdent("s'".into()),
        ]);
    }

    #[test]
    fn char_and_string_literals() {
        assert_eq!(toks("'0' '+'"), vec![Tok::Char('0'), Tok::Char('+')]);
        assert_eq!(toks(r#""(2+5)*8""#), vec![Tok::Str("(2+5)*8".into())]);
        assert_eq!(toks(r#""""#), vec![Tok::Str(String::new())]);
    }

    #[test]
    fn comments_skipped() {
        assert_eq!(toks("x -- comment\ny"), vec![
            Tok::LowerIdent("x".into()),
            Tok::LowerIdent("y".into()),
        ]);
    }

    #[test]
    fn line_start_flags() {
        let ts = lex("a b\nc\n  d").unwrap();
        let flags: Vec<bool> = ts.iter().map(|t| t.line_start).collect();
        assert_eq!(flags, vec![true, false, true, false]);
    }

    #[test]
    fn operators() {
        assert_eq!(toks("-> <- => ~> <> ++ :: ~>"), vec![
            Tok::Arrow,
            Tok::LArrow,
            Tok::FatArrow,
            Tok::Squiggly,
            Tok::Diamond,
            Tok::PlusPlus,
            Tok::ColonColon,
            Tok::Squiggly,
        ]);
    }

    #[test]
    fn deterministic() {
        let a = lex("do x <- return 1; return x").unwrap();
        let b = lex("do x <- return 1; return x").unwrap();
        assert_eq!(a, b);
    }
}
