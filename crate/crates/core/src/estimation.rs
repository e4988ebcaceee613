//! Stage two: non-penalized corrected least squares on a selected support,
//! the ordinary Lasso baseline, and train/test tuning.

use std::time::Instant;

use nalgebra::{DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::{Estimator, FitResult, SolvePath};
use crate::linalg;
use crate::moments::{corrected_moments, uncorrected_moments, CorrectedMoments, SurrogateDataset};
use crate::selection::{self, cs_screen, SolverOptions};

/// Minimum eigenvalue of `Γ_TT` above which the restricted problem is solved
/// as a linear system.
pub const PD_THRESHOLD: f64 = 1e-8;

/// Default fraction of rows held out for tuning.
pub const DEFAULT_TEST_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RadiusPolicy {
    /// The ball only bounds the indefinite fallback.
    FallbackOnly,
    /// The solution must lie in the ball; an exact solution outside it is
    /// replaced by the constrained one.
    Enforce,
}

/// Minimizes `½ β'Γβ − γ̂'β` subject to `β_j = 0` off `support`.
///
/// A positive definite sub-block is solved directly. A PSD sub-block whose
/// smallest eigenvalue is below [`PD_THRESHOLD`] goes through an eigen
/// pseudo-inverse. An indefinite sub-block has no finite minimizer, so
/// projected gradient over the ℓ1 ball of radius `opts.radius` is used
/// instead and `fallback_used` is set.
pub fn post_cls_fit(m: &CorrectedMoments, support: &[usize], opts: &SolverOptions) -> Result<FitResult> {
    refit(m, support, opts, RadiusPolicy::FallbackOnly)
}

/// As [`post_cls_fit`] but the result is also required to satisfy
/// `‖β‖₁ ≤ opts.radius`.
pub fn post_cls_fit_constrained(
    m: &CorrectedMoments,
    support: &[usize],
    opts: &SolverOptions,
) -> Result<FitResult> {
    refit(m, support, opts, RadiusPolicy::Enforce)
}

fn refit(
    m: &CorrectedMoments,
    support: &[usize],
    opts: &SolverOptions,
    policy: RadiusPolicy,
) -> Result<FitResult> {
    let start = Instant::now();
    if support.is_empty() {
        return Err(Error::EmptySelection);
    }
    let p = m.p();
    let mut idx = support.to_vec();
    idx.sort_unstable();
    idx.dedup();
    if let Some(&bad) = idx.iter().find(|&&j| j >= p) {
        return Err(Error::invalid(format!("support index {bad} out of range for p = {p}")));
    }

    let (sub, rhs) = m.restrict(&idx);
    let eig = SymmetricEigen::new(sub.clone());
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);

    let mut iterations = 0;
    let mut converged = true;
    let (mut coef, mut path) = if min_eig >= PD_THRESHOLD {
        let coef = match sub.clone().cholesky() {
            Some(chol) => chol.solve(&rhs),
            None => sub
                .clone()
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::invalid("restricted system is singular"))?,
        };
        (coef, SolvePath::LinearSystem)
    } else if min_eig >= 0.0 {
        (pseudo_inverse_solve(&eig, &rhs), SolvePath::PseudoInverse)
    } else {
        let out = selection::projected_gradient(&sub, &rhs, &opts.with_lambda(0.0))?;
        iterations = out.iterations;
        converged = out.converged;
        (out.beta, SolvePath::ProjectedGradient)
    };

    if policy == RadiusPolicy::Enforce
        && path != SolvePath::ProjectedGradient
        && linalg::l1_norm(&coef) > opts.radius
    {
        let out = selection::projected_gradient(&sub, &rhs, &opts.with_lambda(0.0))?;
        iterations = out.iterations;
        converged = out.converged;
        coef = out.beta;
        path = SolvePath::ProjectedGradient;
    }

    let beta = linalg::embed(&coef, &idx, p);
    let objective = m.loss_unchecked(&beta);
    if !objective.is_finite() {
        return Err(Error::Diverged { iteration: iterations });
    }
    Ok(FitResult {
        beta,
        support_used: idx,
        estimator: Estimator::PostSelection,
        iterations,
        objective,
        converged,
        fallback_used: path != SolvePath::LinearSystem,
        solve_path: Some(path),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn pseudo_inverse_solve(eig: &SymmetricEigen<f64, nalgebra::Dyn>, rhs: &DVector<f64>) -> DVector<f64> {
    let top = eig.eigenvalues.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let cutoff = PD_THRESHOLD.max(top * 1e-12);
    let q = &eig.eigenvectors;
    let proj = q.tr_mul(rhs);
    let scaled = DVector::from_fn(proj.len(), |i, _| {
        let ev = eig.eigenvalues[i];
        if ev > cutoff {
            proj[i] / ev
        } else {
            0.0
        }
    });
    q * scaled
}

/// ℓ1-penalized least squares on the uncorrected moments `Z'Z/n`, `Z'y/n`,
/// ignoring covariate noise. Same solver as [`selection::l1_cls_fit`].
pub fn lasso_fit(data: &SurrogateDataset, lambda: f64, opts: &SolverOptions) -> Result<FitResult> {
    let m = uncorrected_moments(data)?;
    selection::fit_penalized(&m, &opts.with_lambda(lambda), Estimator::Lasso)
}

/// What to fit for each grid value during tuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FitRule {
    /// Grid values are screening sizes `a_n` (rounded to integers); the fit is
    /// correlation screening followed by [`post_cls_fit`].
    ScreenRefit(SolverOptions),
    /// As `ScreenRefit`, with the refit held to the ℓ1 ball through
    /// [`post_cls_fit_constrained`].
    ConstrainedScreenRefit(SolverOptions),
    /// Grid values are `λ`; the fit is ℓ1-CLS.
    L1Cls(SolverOptions),
    /// Grid values are `λ`; the fit is the ordinary Lasso, scored with the
    /// uncorrected loss.
    Lasso(SolverOptions),
}

impl FitRule {
    /// Fits one grid value on precomputed training moments.
    pub fn fit(&self, moments: &CorrectedMoments, value: f64) -> Result<FitResult> {
        match self {
            FitRule::ScreenRefit(opts) => {
                let a_n = screen_size(value)?;
                let sel = cs_screen(moments.gamma_vec(), a_n)?;
                post_cls_fit(moments, &sel.support, opts)
            }
            FitRule::ConstrainedScreenRefit(opts) => {
                let a_n = screen_size(value)?;
                let sel = cs_screen(moments.gamma_vec(), a_n)?;
                post_cls_fit_constrained(moments, &sel.support, opts)
            }
            FitRule::L1Cls(opts) => selection::l1_cls_fit(moments, &opts.with_lambda(value)),
            FitRule::Lasso(opts) => selection::fit_penalized(moments, &opts.with_lambda(value), Estimator::Lasso),
        }
    }

    /// Moments this rule fits and scores with.
    pub fn moments(&self, data: &SurrogateDataset) -> Result<CorrectedMoments> {
        match self {
            FitRule::Lasso(_) => uncorrected_moments(data),
            _ => corrected_moments(data),
        }
    }
}

fn screen_size(value: f64) -> Result<usize> {
    if !value.is_finite() || value < 0.5 {
        return Err(Error::EmptySelection);
    }
    Ok(value.round() as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub best: f64,
    pub grid: Vec<f64>,
    /// Test loss per grid value, `+∞` where the fit failed.
    pub losses: Vec<f64>,
}

/// Fits every grid value on `train` and scores it with the test set's loss.
/// Returns the minimizer, ties to the smaller grid value. Grid points are
/// evaluated in parallel; the result does not depend on scheduling.
pub fn cross_validate(
    train: &SurrogateDataset,
    test: &SurrogateDataset,
    grid: &[f64],
    rule: &FitRule,
) -> Result<CvOutcome> {
    if grid.is_empty() {
        return Err(Error::invalid("tuning grid is empty"));
    }
    if train.p() != test.p() {
        return Err(Error::DimensionMismatch {
            context: "train/test dimension",
            expected: train.p(),
            found: test.p(),
        });
    }
    if train.noise().kind() != test.noise().kind() {
        return Err(Error::invalid("train and test sets use different noise models"));
    }
    let train_m = rule.moments(train)?;
    let test_m = rule.moments(test)?;
    let losses: Vec<f64> = grid
        .par_iter()
        .map(|&value| match rule.fit(&train_m, value) {
            Ok(fit) => {
                let loss = test_m.loss_unchecked(&fit.beta);
                if loss.is_finite() {
                    loss
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        })
        .collect();

    let mut best_idx = 0;
    for i in 1..grid.len() {
        let better = losses[i] < losses[best_idx]
            || (losses[i] == losses[best_idx] && grid[i] < grid[best_idx]);
        if better {
            best_idx = i;
        }
    }
    Ok(CvOutcome {
        best: grid[best_idx],
        grid: grid.to_vec(),
        losses,
    })
}

/// Splits off the last `test_fraction` of rows. For the missing model each
/// half re-estimates its own `ρ̂` when `reestimate_rates` is set.
pub fn train_test_split(
    data: &SurrogateDataset,
    test_fraction: f64,
    reestimate_rates: bool,
) -> Result<(SurrogateDataset, SurrogateDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid("test fraction must lie in (0, 1)"));
    }
    let n = data.n();
    let n_test = ((n as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::invalid(format!("cannot split {n} rows with test fraction {test_fraction}")));
    }
    let n_train = n - n_test;
    let train = data.rows(0, n_train)?;
    let test = data.rows(n_train, n)?;
    if reestimate_rates {
        Ok((train.with_estimated_rates()?, test.with_estimated_rates()?))
    } else {
        Ok((train, test))
    }
}

/// `{1, 2, …, min(p, ⌊n / log p⌋)}`, never empty.
pub fn screen_size_grid(n: usize, p: usize) -> Vec<f64> {
    let cap = if p > 1 {
        ((n as f64) / (p as f64).ln()).floor() as usize
    } else {
        n
    };
    let top = p.min(cap).max(1);
    (1..=top).map(|a| a as f64).collect()
}

/// `{0, 0.05, …, 1}`.
pub fn penalty_grid() -> Vec<f64> {
    (0..=20).map(|k| k as f64 / 20.0).collect()
}

/// Corrected loss of `beta` under `data`'s own moments.
pub fn holdout_loss(data: &SurrogateDataset, beta: &DVector<f64>) -> Result<f64> {
    let m = corrected_moments(data)?;
    crate::moments::corrected_loss(beta, &m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    fn restricted_residual(m: &CorrectedMoments, fit: &FitResult) -> DVector<f64> {
        let (sub, rhs) = m.restrict(&fit.support_used);
        let coef = linalg::select_vec(&fit.beta, &fit.support_used);
        &sub * coef - rhs
    }

    #[test]
    fn identity_block_inverts_to_itself() {
        let m = CorrectedMoments::new(DMatrix::identity(3, 3), v(&[1.0, 2.0, 3.0]), 1).unwrap();
        let fit = post_cls_fit(&m, &[0, 2], &SolverOptions::new(10.0, 0.0)).unwrap();
        assert_eq!(fit.beta.as_slice(), &[1.0, 0.0, 3.0]);
        assert_eq!(fit.solve_path, Some(SolvePath::LinearSystem));
        assert!(!fit.fallback_used);
        assert_abs_diff_eq!(fit.objective, m.loss_unchecked(&fit.beta), epsilon = 1e-10);
    }

    #[test]
    fn empty_support_is_an_error() {
        let m = CorrectedMoments::new(DMatrix::identity(2, 2), v(&[1.0, 2.0]), 1).unwrap();
        assert!(matches!(
            post_cls_fit(&m, &[], &SolverOptions::new(1.0, 0.0)),
            Err(Error::EmptySelection)
        ));
        assert!(post_cls_fit(&m, &[5], &SolverOptions::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn indefinite_block_falls_back_to_ball() {
        let g = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, -0.3, 0.0, 0.0, 0.0, 2.0]);
        let m = CorrectedMoments::new(g, v(&[0.5, 0.1, 0.7]), 1).unwrap();
        let fit = post_cls_fit(&m, &[0, 1], &SolverOptions::new(3.0, 0.0)).unwrap();
        assert!(fit.fallback_used);
        assert_eq!(fit.solve_path, Some(SolvePath::ProjectedGradient));
        assert_eq!(fit.beta[2], 0.0);
        assert!(linalg::l1_norm(&fit.beta) <= 3.0 + 1e-12);
    }

    #[test]
    fn singular_psd_block_uses_pseudo_inverse() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let m = CorrectedMoments::new(g, v(&[2.0, 2.0]), 1).unwrap();
        let fit = post_cls_fit(&m, &[0, 1], &SolverOptions::new(10.0, 0.0)).unwrap();
        assert_eq!(fit.solve_path, Some(SolvePath::PseudoInverse));
        assert!(fit.fallback_used);
        // minimum-norm solution of [1 1; 1 1] b = [2 2]
        assert_abs_diff_eq!(fit.beta, v(&[1.0, 1.0]), epsilon = 1e-10);
    }

    #[test]
    fn constrained_refit_respects_radius() {
        let m = CorrectedMoments::new(DMatrix::identity(2, 2), v(&[3.0, 1.0]), 1).unwrap();
        let free = post_cls_fit(&m, &[0, 1], &SolverOptions::new(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(free.beta, v(&[3.0, 1.0]), epsilon = 1e-12);
        let mut opts = SolverOptions::new(1.0, 0.0);
        opts.rel_tol = 1e-12;
        let tight = post_cls_fit_constrained(&m, &[0, 1], &opts).unwrap();
        assert!(tight.fallback_used);
        assert_abs_diff_eq!(tight.beta, v(&[1.0, 0.0]), epsilon = 1e-6);
    }

    #[test]
    fn linear_system_residual_is_tiny() {
        let a = DMatrix::from_fn(6, 6, |i, j| ((i + 2 * j) as f64 * 0.71).cos());
        let g = a.tr_mul(&a) + DMatrix::identity(6, 6) * 0.2;
        let gv = v(&[1.0, -0.3, 2.0, 0.0, 0.5, -1.5]);
        let m = CorrectedMoments::new(g, gv.clone(), 1).unwrap();
        let fit = post_cls_fit(&m, &[0, 2, 5], &SolverOptions::new(10.0, 0.0)).unwrap();
        let resid = restricted_residual(&m, &fit);
        let scale = linalg::max_abs_vec(&linalg::select_vec(&gv, &[0, 2, 5]));
        assert!(linalg::max_abs_vec(&resid) <= 1e-8 * scale);
        for j in [1, 3, 4] {
            assert_eq!(fit.beta[j].to_bits(), 0.0f64.to_bits());
        }
    }

    #[test]
    fn grids_follow_tuning_ranges() {
        let g = screen_size_grid(500, 100);
        assert_eq!(g.first(), Some(&1.0));
        assert_eq!(g.last(), Some(&100.0));
        let g = screen_size_grid(100, 500);
        assert_eq!(g.len(), (100.0 / 500f64.ln()).floor() as usize);
        let lam = penalty_grid();
        assert_eq!(lam.len(), 21);
        assert_abs_diff_eq!(lam[20], 1.0, epsilon = 1e-12);
    }
}
