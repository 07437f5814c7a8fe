//! Error type shared by all modules.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Rejected before any computation (bad dimension, bounds, envelope).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// The mesh does not resolve the smallest concentration scale.
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    /// Annulus radii are not strictly nested; carries the offending level.
    #[error("annulus radii not nested at level {ell}: B_{ell} has radius {radius:.6e}, B_{} has radius {outer:.6e}", ell - 1)]
    NonNestedAnnuli { ell: usize, radius: f64, outer: f64 },

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    /// Improper radial integral whose tail decay estimate does not close.
    #[error("non-convergent tail: integrand decays like r^(-{decay:.2}) but needs more than r^(-{needed:.2})")]
    NonConvergentTail { decay: f64, needed: f64 },

    /// Saddle (bordered) system is singular; names the degenerate constraint
    /// when one can be identified.
    #[error("singular saddle system: {0}")]
    SingularSystem(String),

    #[error("singular linear system: {0}")]
    SingularMatrix(String),

    /// Collocation system too ill-conditioned to trust.
    #[error("collocation system ill-conditioned: condition estimate {cond:.3e} exceeds {limit:.3e}")]
    IllConditioned { cond: f64, limit: f64 },

    /// Newton ran out of iterations; carries the residual history.
    #[error("newton did not converge after {iterations} iterations; final residual {final_residual:.6e}")]
    NewtonDivergence {
        iterations: usize,
        final_residual: f64,
        history: Vec<f64>,
    },

    /// Newton iterate left the admissible parameter region.
    #[error("newton iterate left the admissible region: {0}")]
    LeftAdmissibleRegion(String),

    /// Weighted Picard iteration with contraction estimates >= 1.
    #[error("picard iteration diverged at iteration {iteration}: contraction estimates {estimates:?}; retry with smaller eps")]
    PicardDiverged { iteration: usize, estimates: Vec<f64> },

    /// Least-squares fit rejected because its residual is untrustworthy.
    #[error("fit rejected: relative residual {residual:.3e} above {limit:.3e} (condition {cond:.3e})")]
    FitRejected { residual: f64, limit: f64, cond: f64 },

    /// Solution did not present the expected tower structure.
    #[error("extraction failed: {0}")]
    Extraction(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    ConfigParse(String),
}

impl Error {
    /// Process exit code contract: 2 for validation, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_)
            | Error::IndexOutOfRange(_)
            | Error::ConfigParse(_)
            | Error::Io(_) => 2,
            _ => 3,
        }
    }
}
