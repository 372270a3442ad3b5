//! Computational laboratory for the family of elliptic curves
//! `y^2 = x^3 + ax + b`.
//!
//! The crate is layered bottom-up:
//!
//! * [`arith`]: Jacobi symbols, factorizations, Gauss sums, small character groups.
//! * [`curves`]: per-curve Hecke coefficients, mollifier coefficients, root-number
//!   identity and approximate functional equation partial sums.
//! * [`charsums`]: exact complete sums over residue classes, the main-term Euler
//!   product and the Poisson identity check.
//! * [`moments`]: weighted family sweeps and growth-law fits.
//! * [`asymptotics`]: Dirichlet-sum oracles for the contour-integral asymptotics.
//!
//! Integer data (`a(n)`, complete sums) is kept exact; `lambda(n) = a(n)/sqrt(n)`
//! is only formed where a smoothing kernel is applied.

pub mod arith;
pub mod asymptotics;
pub mod charsums;
pub mod curves;
pub mod moments;
pub mod weight;

mod reduce;

pub use reduce::{pairwise_sum, KahanSum};

/// Errors shared by all modules.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid modulus {0}: expected a positive odd integer")]
    InvalidModulus(i128),
    #[error("{a} has no inverse modulo {n}")]
    NoInverse { a: i128, n: i128 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("truncation insufficient: {0}")]
    TruncationInsufficient(String),
    #[error("cost guard: {0}")]
    Cost(String),
    #[error("memory guard: {0}")]
    Memory(String),
    #[error("ambiguous conductor: {0}")]
    AmbiguousConductor(String),
}

pub type Result<T> = std::result::Result<T, Error>;
