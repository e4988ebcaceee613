use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Which estimator produced a [`FitResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Estimator {
    /// Non-penalized corrected least squares on a selected support.
    PostSelection,
    /// ℓ1-penalized corrected least squares over an ℓ1 ball.
    L1Cls,
    /// ℓ1-penalized least squares on uncorrected moments.
    Lasso,
}

/// How a restricted refit was solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolvePath {
    /// Positive definite sub-block, solved as a linear system.
    LinearSystem,
    /// Near-singular PSD sub-block, solved with an eigen pseudo-inverse.
    PseudoInverse,
    /// Indefinite sub-block (or radius violated), projected gradient on the ℓ1 ball.
    ProjectedGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Coefficients, length `p`. Exactly zero off `support_used` for refits.
    pub beta: DVector<f64>,
    /// 0-based indices, ascending.
    pub support_used: Vec<usize>,
    pub estimator: Estimator,
    pub iterations: usize,
    /// Corrected loss for refits; penalized objective for ℓ1 fits.
    pub objective: f64,
    pub converged: bool,
    pub fallback_used: bool,
    pub solve_path: Option<SolvePath>,
    pub wall_time: f64,
}
