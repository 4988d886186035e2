//! Probabilistic Kleene algebra with angelic nondeterminism, interpreted over
//! distributions on multisets of strings.
//!
//! A program denotes a probability distribution over *multisets* of output
//! strings: a string is accepted with a multiplicity, with some probability.
//! Nondeterministic choice (`&`) forks independent agents and pools their
//! outputs; probabilistic choice (`+[r]`) flips an exact rational coin;
//! composition (`;`) extends every emitted string with an independent
//! continuation sample. Everything observable at output depth `n` is computed
//! exactly, in rational arithmetic.
//!
//! The crate provides:
//!
//! - [`syntax`]: the expression language, validation, substitution;
//! - [`semantics`]: the exact kernel of distributions over truncated
//!   multisets and its operations;
//! - [`eval`]: the compositional depth-`n` evaluator for expressions;
//! - [`automaton`]: the automaton model, its one-step normal form, and two
//!   independent evaluation strategies;
//! - [`kleene`]: translations between expressions, automata, and equation
//!   systems, in both directions;
//! - [`rewrite`]: the sound equational rewrite rules, normalization, and the
//!   syntactic Brzozowski derivative;
//! - [`sampler`]: an agent-based Monte-Carlo sampler for cross-validation;
//! - [`generate`]: seeded random generators for expressions, automata, and
//!   distributions;
//! - [`json`]: canonical JSON renderings of the public value types.

pub mod automaton;
pub mod eval;
pub mod generate;
pub mod json;
pub mod kleene;
pub mod rewrite;
pub mod sampler;
pub mod semantics;
pub mod syntax;

pub use semantics::{Budget, Distance, FinDist, SemanticsError, TruncMultiset, Word};
pub use syntax::{Alphabet, Expr, ExprKind};

use thiserror::Error;

/// Any error the library can produce.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] syntax::ParseError),
    #[error(transparent)]
    Alphabet(#[from] syntax::AlphabetError),
    #[error(transparent)]
    Validate(#[from] syntax::ValidateError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    AutomatonShape(#[from] automaton::AutomatonError),
    #[error(transparent)]
    System(#[from] kleene::SystemError),
    #[error(transparent)]
    Rewrite(#[from] rewrite::RewriteError),
    #[error(transparent)]
    Json(#[from] json::JsonError),
}

pub type Result<T> = std::result::Result<T, Error>;
