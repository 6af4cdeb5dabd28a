//! The handler and helper corpus, shipped as `.lsc` sources compiled at
//! startup. Every definition must typecheck with zero diagnostics and its
//! scheme must alpha-match the manifest's expectation.

use crate::desugar::Desugarer;
use crate::eval::Env;
use crate::infer::{Checker, Diagnostic, ProgramTypes};
use crate::parser;
use crate::pretty::pretty_scheme;
use crate::span::LineMap;
use crate::syntax::Program;
use crate::types::scheme_alpha_eq;
use std::fmt;
use std::path::Path;

/// Prelude sources in load order.
pub const PRELUDE_FILES: &[(&str, &str)] = &[
    ("effects.lsc", include_str!("../../../prelude/effects.lsc")),
    ("nondet.lsc", include_str!("../../../prelude/nondet.lsc")),
    ("state.lsc", include_str!("../../../prelude/state.lsc")),
    ("except.lsc", include_str!("../../../prelude/except.lsc")),
    ("reader.lsc", include_str!("../../../prelude/reader.lsc")),
    ("cutlist.lsc", include_str!("../../../prelude/cutlist.lsc")),
    ("depth.lsc", include_str!("../../../prelude/depth.lsc")),
    ("parser.lsc", include_str!("../../../prelude/parser.lsc")),
];

/// Expected schemes for the exported definitions, written in the surface
/// scheme notation.
pub const PRELUDE_MANIFEST: &[(&str, &str)] = &[
    (
        "concatMap",
        "forall a b mu. List b -> ((b -> List a!<mu>) -> List a!<mu>)!<mu>",
    ),
    ("h_ND", "forall a mu. a!<choose; mu> => List a!<mu>"),
    ("h_get", "forall a mu. a!<get; mu> => a!<mu>"),
    ("h_once", "forall a mu. a!<choose; once; mu> => List a!<mu>"),
    (
        "h_once_x",
        "forall a mu. a!<choose; once_x; mu> => List a!<mu>",
    ),
    (
        "h_inc",
        "forall a mu. a!<inc; mu> => (Int -> (a, Int)!<mu>)!<mu>",
    ),
    (
        "h_inc_x",
        "forall a mu. a!<inc; mu> => (Int -> (a, Int)!<mu>)!<mu>",
    ),
    (
        "run_inc",
        "forall a mu nu. Int -> ((() -> a!<inc; mu>) -> (a, Int)!<mu>)!<nu>",
    ),
    (
        "exceptMap",
        "forall a b mu. String + b -> ((b -> String + a!<mu>) -> String + a!<mu>)!<mu>",
    ),
    (
        "h_except",
        "forall a mu. a!<raise; catch; mu> => String + a!<mu>",
    ),
    (
        "h_except_x",
        "forall a mu. a!<raise; mu> => String + a!<mu>",
    ),
    (
        "h_read",
        "forall a mu. a!<ask; local; mu> => (Int -> a!<mu>)!<mu>",
    ),
    ("h_foo", "forall a mu. a!<foo; ask; mu> => a!<ask; mu>"),
    (
        "run_read",
        "forall a mu nu. Int -> ((() -> a!<ask; local; mu>) -> a!<mu>)!<nu>",
    ),
    (
        "append_CutList",
        "forall a mu. CutList a -> (CutList a -> CutList a!<mu>)!<mu>",
    ),
    ("close", "forall a mu. CutList a -> CutList a!<mu>"),
    ("open", "forall a mu. CutList a -> CutList a!<mu>"),
    ("isclose", "forall a mu. CutList a -> Bool!<mu>"),
    (
        "concatMap_CutList",
        "forall a b mu. CutList b -> ((b -> CutList a!<mu>) -> CutList a!<mu>)!<mu>",
    ),
    (
        "h_cut",
        "forall a mu. a!<choose; fail; cut; call; mu> => CutList a!<mu>",
    ),
    (
        "h_depth",
        "forall a mu. a!<choose; fail; depth; mu> => (Int -> List (a, Int)!<mu>)!<mu>",
    ),
    ("failure", "forall a mu. () -> a!<fail; mu>"),
    (
        "h_token",
        "forall a mu. a!<token; fail; mu> => (String -> (a, String)!<fail; mu>)!<fail; mu>",
    ),
    (
        "h_token_lookahead",
        "forall a mu. a!<token; fail; mu> => (String -> (a, String)!<fail; mu>)!<fail; mu>",
    ),
    ("digit", "forall mu. () -> Char!<token; choose; mu>"),
    (
        "many1",
        "forall a mu. (() -> a!<choose; mu>) -> List a!<choose; mu>",
    ),
    ("expr'", "forall mu. () -> Int!<token; choose; mu>"),
    ("term'", "forall mu. () -> Int!<token; choose; mu>"),
    ("factor", "forall mu. () -> Int!<token; choose; mu>"),
    (
        "expr",
        "forall mu. () -> Int!<token; choose; cut; call; mu>",
    ),
    (
        "term",
        "forall mu. () -> Int!<token; choose; cut; call; mu>",
    ),
];

#[derive(Debug)]
pub enum PreludeError {
    Parse { file: String, message: String },
    Desugar { file: String, message: String },
    Type { diagnostics: Vec<String> },
    ManifestMismatch { mismatches: Vec<String> },
    Io { file: String, message: String },
}

impl fmt::Display for PreludeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PreludeError::Parse { file, message } => {
                write!(f, "prelude parse error in {file}: {message}")
            }
            PreludeError::Desugar { file, message } => {
                write!(f, "prelude desugar error in {file}: {message}")
            }
            PreludeError::Type { diagnostics } => {
                writeln!(f, "prelude does not typecheck:")?;
                for d in diagnostics {
                    writeln!(f, "  {d}")?;
                }
                Ok(())
            }
            PreludeError::ManifestMismatch { mismatches } => {
                writeln!(f, "prelude schemes differ from the manifest:")?;
                for m in mismatches {
                    writeln!(f, "  {m}")?;
                }
                Ok(())
            }
            PreludeError::Io { file, message } => {
                write!(f, "cannot read prelude file {file}: {message}")
            }
        }
    }
}

/// A loaded prelude: the combined program, its definition environment for
/// evaluation, and the inferred types.
#[derive(Debug, Clone)]
pub struct Prelude {
    pub program: Program,
    pub env: Env,
    pub types: ProgramTypes,
    pub diagnostics: Vec<Diagnostic>,
}

impl Prelude {
    /// A desugaring context primed with the prelude's declarations, for
    /// lowering further files or REPL inputs against it.
    pub fn desugarer(&self) -> Desugarer {
        Desugarer::from_program(&self.program)
    }

    /// A checker primed with the prelude's declarations and schemes.
    pub fn checker(&self) -> Checker {
        let mut ck = Checker::from_program_decls(&self.program);
        let mut next = self.program.next_var;
        for (name, scheme) in &self.types.def_schemes {
            for v in &scheme.ty_vars {
                next = next.max(v.0 + 1);
            }
            for v in &scheme.row_vars {
                next = next.max(v.0 + 1);
            }
            ck.ctx.push_term(name.clone(), scheme.clone());
        }
        let mut ck2 = Checker::from_program_decls(&self.program);
        ck2.st = crate::infer::InferenceState::new(next.max(100_000));
        for (name, scheme) in &self.types.def_schemes {
            ck2.ctx.push_term(name.clone(), scheme.clone());
        }
        ck2
    }
}

fn load_sources(sources: &[(String, String)]) -> Result<Prelude, PreludeError> {
    let mut desugarer = Desugarer::new();
    let mut program = Program::default();
    for (file, src) in sources {
        let sp = parser::parse_program(src).map_err(|e| {
            let lines = LineMap::new(src);
            let (line, col) = lines.line_col(e.span.lo);
            PreludeError::Parse {
                file: file.clone(),
                message: format!("{line}:{col}: {e}"),
            }
        })?;
        desugarer
            .extend_program(&sp, &mut program)
            .map_err(|e| {
                let lines = LineMap::new(src);
                let (line, col) = lines.line_col(e.span.lo);
                PreludeError::Desugar {
                    file: file.clone(),
                    message: format!("{line}:{col}: {e}"),
                }
            })?;
    }
    let mut ck = Checker::new(program.next_var);
    let types = ck.typecheck_program(&program);
    if !ck.diags.is_empty() {
        // Render against the concatenated sources; spans are per-file, so
        // only the kind and message help here, which is enough to act on.
        let rendered: Vec<String> = ck
            .diags
            .iter()
            .map(|d| {
                format!(
                    "{}: expected {} but found {} ({})",
                    d.kind.name(),
                    d.expected,
                    d.actual,
                    d.note
                )
            })
            .collect();
        return Err(PreludeError::Type {
            diagnostics: rendered,
        });
    }

    // Manifest verification.
    let mut d = Desugarer::from_program(&program);
    let mut mismatches = Vec::new();
    for (name, expected_src) in PRELUDE_MANIFEST {
        let expected = parser::parse_scheme(expected_src)
            .map_err(|e| PreludeError::Parse {
                file: format!("manifest entry {name}"),
                message: format!("{e}"),
            })
            .and_then(|s| {
                d.convert_scheme(&s).map_err(|e| PreludeError::Desugar {
                    file: format!("manifest entry {name}"),
                    message: format!("{e}"),
                })
            })?;
        match types.def_schemes.iter().find(|(n, _)| n == name) {
            Some((_, inferred)) => {
                if !scheme_alpha_eq(inferred, &expected) {
                    mismatches.push(format!(
                        "{name}: inferred `{}` but manifest expects `{}`",
                        pretty_scheme(inferred),
                        pretty_scheme(&expected)
                    ));
                }
            }
            None => mismatches.push(format!("{name}: missing from the prelude")),
        }
    }
    if !mismatches.is_empty() {
        return Err(PreludeError::ManifestMismatch { mismatches });
    }

    let env = Env::from_program(&program);
    Ok(Prelude {
        program,
        env,
        types,
        diagnostics: vec![],
    })
}

/// Loads the embedded prelude, or the directory named by `LSC_PRELUDE`
/// when that variable is set.
pub fn load_prelude() -> Result<Prelude, PreludeError> {
    match std::env::var_os("LSC_PRELUDE") {
        Some(dir) => load_prelude_from_dir(Path::new(&dir)),
        None => load_embedded_prelude(),
    }
}

pub fn load_embedded_prelude() -> Result<Prelude, PreludeError> {
    let sources: Vec<(String, String)> = PRELUDE_FILES
        .iter()
        .map(|(n, s)| (n.to_string(), s.to_string()))
        .collect();
    load_sources(&sources)
}

pub fn load_prelude_from_dir(dir: &Path) -> Result<Prelude, PreludeError> {
    let mut sources = Vec::new();
    for (name, _) in PRELUDE_FILES {
        let path = dir.join(name);
        let src = std::fs::read_to_string(&path).map_err(|e| PreludeError::Io {
            file: path.display().to_string(),
            message: e.to_string(),
        })?;
        sources.push((name.to_string(), src));
    }
    load_sources(&sources)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prelude_loads_and_matches_manifest() {
        match load_embedded_prelude() {
            Ok(p) => {
                assert!(p.program.main.is_none());
                assert!(!p.program.defs.is_empty());
            }
            Err(e) => panic!("{e}"),
        }
    }
}
