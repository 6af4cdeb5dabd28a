//! Reference interpreter and type-and-effect checker for a small
//! fine-grained call-by-value calculus with built-in algebraic and scoped
//! effects & handlers, row-polymorphic effect typing and Hindley-Milner
//! style inference.

pub mod span;
pub mod types;
pub mod syntax;
pub mod lexer;
pub mod surface;
pub mod parser;
pub mod desugar;
pub mod pretty;
pub mod eval;
pub mod infer;
pub mod prelude;
