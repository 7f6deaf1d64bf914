use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the numerical pipeline.
///
/// Variants are grouped by exit-code class: `InvalidInput` maps to a config
/// error, everything else to a numerical failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("custom M-sequence invalid at index {index}: {reason}")]
    InvalidSequence { index: usize, reason: String },

    #[error("weight evaluation saturated at k_max = {k_max} for x = {x:.6e}; increase k_max")]
    Saturated { x: f64, k_max: usize },

    #[error("gentil ratio still increasing at k_max; check inconclusive for gamma = {gamma}")]
    InconclusiveGentil { gamma: f64 },

    #[error("derivative majorant sum diverges at k = {k}")]
    DivergentMajorant { k: usize },

    #[error(
        "Newton iteration failed to converge after {iters} iterations (residual {residual:.3e})"
    )]
    NewtonDivergence { iters: usize, residual: f64 },

    #[error("periodic point count mismatch at period {period}: expected {expected}, found {found}{detail}")]
    CountMismatch {
        period: usize,
        expected: usize,
        found: usize,
        detail: String,
    },

    #[error("near-parabolic periodic point at x = {x:.12} (|1 - (T^n)'| = {margin:.3e})")]
    NearParabolic { x: f64, margin: f64 },

    #[error("quadrature size {required} exceeds cap {cap}; increase cap or reduce K")]
    QuadratureCap { required: usize, cap: usize },

    #[error("block weight underflow (log h = {log_h:.1}); reduce K or raise theta")]
    WeightUnderflow { log_h: f64 },

    #[error("flat traces t_1..t_{needed} required for regularized determinant of order {order}")]
    MissingTraces { order: usize, needed: usize },

    #[error("no converged resonances across truncation sizes {k_list:?}")]
    NoConvergedResonances { k_list: Vec<usize> },

    #[error("eigenvalue iteration failed to triangularize a {dim}x{dim} matrix")]
    EigenvalueFailure { dim: usize },

    #[error("series for {name} did not converge within {cap} terms at argument {arg:.6e}")]
    SeriesNonConvergence { name: String, cap: usize, arg: f64 },

    #[error("supremum scan for {name} hit cap {cap} without certified decay")]
    SupremumCap { name: String, cap: usize },
}
