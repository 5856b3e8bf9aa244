use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A tree would exceed the configured node budget.
    #[error("tree of arity {arity} and depth {depth} exceeds the leaf budget of {budget}")]
    Size {
        arity: usize,
        depth: usize,
        budget: usize,
    },

    /// The moments violate Jensen's inequality `f^p <= F`.
    #[error("infeasible moments: f^p = {fp} exceeds F = {big_f} (p = {p})")]
    InfeasibleMoments { p: f64, fp: f64, big_f: f64 },

    /// A power law whose integrals do not converge for the requested exponent.
    #[error("divergent integral: exponent {exponent} times p = {p} is not below 1")]
    Divergent { exponent: f64, p: f64 },

    /// Input with the wrong number of pieces or leaves.
    #[error("shape mismatch: expected {expected} values, found {found}")]
    Shape { expected: usize, found: usize },

    /// Malformed text input.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A numerical procedure failed to converge or bracket.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
