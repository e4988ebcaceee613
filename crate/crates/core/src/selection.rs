//! Stage one: support recovery.
//!
//! Correlation screening keeps the `a_n` coordinates of largest `|γ̂_j|`.
//! ℓ1-CLS minimizes `½ β'Γβ − γ̂'β + λ‖β‖₁` over `‖β‖₁ ≤ R` with composite
//! projected gradient steps
//!
//! ```text
//! β ← Π_R( S_{ηλ}( β − η (Γβ − γ̂) ) )
//! ```
//!
//! where `S` is soft-thresholding and `Π_R` the Euclidean projection onto the
//! ℓ1 ball of radius `R`. The composition is the exact proximal map of
//! `λ‖·‖₁` plus the ball indicator.

use std::cmp::Ordering;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{Estimator, FitResult};
use crate::linalg;
use crate::moments::CorrectedMoments;

const POWER_ITERS: usize = 50;
const POWER_TOL: f64 = 1e-6;
const MAX_HALVINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMethod {
    Cs,
    L1Cls,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// 0-based, ascending.
    pub support: Vec<usize>,
    pub method: SelectionMethod,
    /// `a_n` for screening, `λ` for ℓ1-CLS.
    pub tuning: f64,
    /// `|γ̂|` for screening, `β̂` for ℓ1-CLS.
    pub scores: Option<DVector<f64>>,
}

impl SelectionResult {
    pub fn from_l1_fit(fit: &FitResult, lambda: f64) -> Self {
        Self {
            support: fit.support_used.clone(),
            method: SelectionMethod::L1Cls,
            tuning: lambda,
            scores: Some(fit.beta.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepRule {
    /// `η = 1/L`, `L` the largest absolute eigenvalue of `Γ`.
    Fixed,
    /// Halve `η` until the quadratic upper bound holds.
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub rel_tol: f64,
    pub step_rule: StepRule,
    /// Radius `R` of the ℓ1 ball.
    pub radius: f64,
    pub lambda: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            rel_tol: 1e-6,
            step_rule: StepRule::Fixed,
            radius: f64::INFINITY,
            lambda: 0.0,
        }
    }
}

impl SolverOptions {
    pub fn new(radius: f64, lambda: f64) -> Self {
        Self {
            radius,
            lambda,
            ..Self::default()
        }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::invalid("rel_tol must be positive"));
        }
        if !(self.radius > 0.0) {
            return Err(Error::invalid("radius must be positive"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid("lambda must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Indices of the `a_n` largest `|γ̂_j|`, ties to the smaller index.
pub fn cs_screen(gamma_vec: &DVector<f64>, a_n: usize) -> Result<SelectionResult> {
    if a_n < 1 {
        return Err(Error::EmptySelection);
    }
    if gamma_vec.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("screening scores must be finite"));
    }
    let scores = gamma_vec.abs();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(a_n.min(scores.len()));
    order.sort_unstable();
    Ok(SelectionResult {
        support: order,
        method: SelectionMethod::Cs,
        tuning: a_n as f64,
        scores: Some(scores),
    })
}

pub fn soft_threshold(v: &DVector<f64>, t: f64) -> DVector<f64> {
    v.map(|x| x.signum() * (x.abs() - t).max(0.0))
}

/// Euclidean projection onto `{w : ‖w‖₁ ≤ radius}` (sort-based).
pub fn project_l1_ball(v: &DVector<f64>, radius: f64) -> Result<DVector<f64>> {
    if !(radius > 0.0) {
        return Err(Error::invalid("projection radius must be positive"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("cannot project non-finite vector"));
    }
    Ok(project_l1_unchecked(v, radius))
}

fn project_l1_unchecked(v: &DVector<f64>, radius: f64) -> DVector<f64> {
    if linalg::l1_norm(v) <= radius {
        return v.clone();
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in mags.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - radius) / (k + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    soft_threshold(v, tau)
}

/// Default support tolerance `1e-6 · max(1, ‖β‖∞)`.
pub fn default_support_tol(beta: &DVector<f64>) -> f64 {
    1e-6 * linalg::max_abs_vec(beta).max(1.0)
}

/// `{ j : |β_j| > tol }`, 0-based.
pub fn support(beta: &DVector<f64>, tol: f64) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter(|(_, b)| b.abs() > tol)
        .map(|(j, _)| j)
        .collect()
}

pub(crate) struct SolverOutput {
    pub beta: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized objective of every iterate, starting from `β = 0`.
    #[cfg_attr(not(test), allow(dead_code))]
    pub history: Vec<f64>,
}

fn penalized(gamma: &DMatrix<f64>, gvec: &DVector<f64>, lambda: f64, beta: &DVector<f64>) -> f64 {
    0.5 * beta.dot(&(gamma * beta)) - gvec.dot(beta) + lambda * linalg::l1_norm(beta)
}

/// Composite projected gradient on `½ β'Γβ − γ̂'β + λ‖β‖₁`, `‖β‖₁ ≤ R`.
/// Returns the best iterate seen, which matters when `Γ` is indefinite.
pub(crate) fn projected_gradient(
    gamma: &DMatrix<f64>,
    gvec: &DVector<f64>,
    opts: &SolverOptions,
) -> Result<SolverOutput> {
    opts.validate()?;
    let p = gvec.len();
    let lambda = opts.lambda;
    let mut eta = match opts.step_rule {
        StepRule::Fixed => {
            let l = linalg::spectral_radius(gamma, POWER_ITERS, POWER_TOL);
            if l > 0.0 && l.is_finite() {
                1.0 / l
            } else {
                1.0
            }
        }
        StepRule::Backtracking => 1.0,
    };

    let mut beta = DVector::zeros(p);
    let mut obj = penalized(gamma, gvec, lambda, &beta);
    let mut best = (beta.clone(), obj);
    let mut history = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=opts.max_iters {
        iterations = it;
        let grad = gamma * &beta - gvec;
        let step = |eta: f64| {
            let moved = &beta - &grad * eta;
            project_l1_unchecked(&soft_threshold(&moved, eta * lambda), opts.radius)
        };
        let mut cand = step(eta);
        if opts.step_rule == StepRule::Backtracking {
            let smooth = |b: &DVector<f64>| 0.5 * b.dot(&(gamma * b)) - gvec.dot(b);
            let f0 = smooth(&beta);
            for _ in 0..MAX_HALVINGS {
                let d = &cand - &beta;
                let bound = f0 + grad.dot(&d) + d.norm_squared() / (2.0 * eta);
                if smooth(&cand) <= bound + 1e-12 * bound.abs().max(1.0) {
                    break;
                }
                eta *= 0.5;
                cand = step(eta);
            }
        }
        let next = penalized(gamma, gvec, lambda, &cand);
        if !next.is_finite() {
            return Err(Error::Diverged { iteration: it });
        }
        beta = cand;
        history.push(next);
        if next < best.1 {
            best = (beta.clone(), next);
        }
        let scale = obj.abs().max(next.abs());
        let change = (next - obj).abs();
        obj = next;
        if change <= opts.rel_tol * scale {
            converged = true;
            break;
        }
    }

    Ok(SolverOutput {
        beta: best.0,
        objective: best.1,
        iterations,
        converged,
        history,
    })
}

/// ℓ1-penalized corrected least squares over the ℓ1 ball.
///
/// Intended for the missing-covariate model, where the loss is convex in
/// practice. For the additive model `Γ` may be indefinite; the ball keeps the
/// iterates bounded and the best iterate is returned.
pub fn l1_cls_fit(m: &CorrectedMoments, opts: &SolverOptions) -> Result<FitResult> {
    fit_penalized(m, opts, Estimator::L1Cls)
}

pub(crate) fn fit_penalized(
    m: &CorrectedMoments,
    opts: &SolverOptions,
    estimator: Estimator,
) -> Result<FitResult> {
    let start = Instant::now();
    let out = projected_gradient(m.gamma_mat(), m.gamma_vec(), opts)?;
    let tol = default_support_tol(&out.beta);
    Ok(FitResult {
        support_used: support(&out.beta, tol),
        beta: out.beta,
        estimator,
        iterations: out.iterations,
        objective: out.objective,
        converged: out.converged,
        fallback_used: false,
        solve_path: None,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    #[test]
    fn screening_examples() {
        let sel = cs_screen(&v(&[0.1, -3.0, 2.0, 0.5]), 2).unwrap();
        assert_eq!(sel.support, vec![1, 2]);
        let sel = cs_screen(&v(&[0.1, -3.0, 2.0, 0.5]), 4).unwrap();
        assert_eq!(sel.support, vec![0, 1, 2, 3]);
        let sel = cs_screen(&v(&[0.1, -3.0]), 10).unwrap();
        assert_eq!(sel.support, vec![0, 1]);
        let sel = cs_screen(&v(&[1.0, 1.0, 0.0]), 1).unwrap();
        assert_eq!(sel.support, vec![0]);
    }

    #[test]
    fn screening_rejects_empty_selection() {
        let err = cs_screen(&v(&[1.0]), 0).unwrap_err();
        assert_eq!(err.to_string(), "empty selection not allowed");
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_l1_ball(&v(&[0.3, -0.2]), 1.0).unwrap(), v(&[0.3, -0.2]));
        let out = project_l1_ball(&v(&[3.0, 0.0]), 1.0).unwrap();
        assert_abs_diff_eq!(out, v(&[1.0, 0.0]), epsilon = 1e-15);
        // KKT: (2 - τ) + (1 - τ) = 1 gives τ = 1
        let out = project_l1_ball(&v(&[2.0, 1.0]), 1.0).unwrap();
        assert_abs_diff_eq!(out, v(&[1.0, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn projection_matches_grid_search_in_the_plane() {
        let targets = [v(&[2.0, 1.0]), v(&[-0.7, 1.9]), v(&[0.4, 0.45]), v(&[-3.0, -0.2])];
        let radius = 1.0;
        for target in &targets {
            let got = project_l1_ball(target, radius).unwrap();
            let mut best = (f64::INFINITY, 0.0, 0.0);
            let steps = 2000;
            for i in 0..=steps {
                let a = -radius + 2.0 * radius * i as f64 / steps as f64;
                let rem = radius - a.abs();
                // the nearest point of the ball is on the boundary or is the target
                for b in [rem, -rem, target[1].clamp(-rem, rem)] {
                    let d = (a - target[0]).powi(2) + (b - target[1]).powi(2);
                    if d < best.0 {
                        best = (d, a, b);
                    }
                }
            }
            assert!((got[0] - best.1).abs() < 1e-3 && (got[1] - best.2).abs() < 1e-3,
                "{target:?}: {got:?} vs grid ({}, {})", best.1, best.2);
        }
    }

    #[test]
    fn support_examples() {
        assert_eq!(support(&v(&[0.0, 1e-12, 0.5]), 1e-8), vec![2]);
        assert!(support(&DVector::zeros(3), 1e-8).is_empty());
        assert_eq!(support(&v(&[-2.0, 3.0]), 0.0), vec![0, 1]);
    }

    #[test]
    fn l1_cls_identity_examples() {
        let m = CorrectedMoments::new(DMatrix::identity(3, 3), v(&[0.9, 0.0, 0.0]), 1).unwrap();
        let fit = l1_cls_fit(&m, &SolverOptions::new(10.0, 0.0)).unwrap();
        assert_abs_diff_eq!(fit.beta, v(&[0.9, 0.0, 0.0]), epsilon = 1e-9);

        // closed form for identity Γ: sign(γ̂)·max(|γ̂| − λ, 0)
        let m = CorrectedMoments::new(DMatrix::identity(3, 3), v(&[0.9, 0.2, 0.0]), 1).unwrap();
        let fit = l1_cls_fit(&m, &SolverOptions::new(10.0, 0.3)).unwrap();
        assert_abs_diff_eq!(fit.beta, v(&[0.6, 0.0, 0.0]), epsilon = 1e-9);
        assert_eq!(fit.support_used, vec![0]);

        // dense grid search at p = 3 over a box containing the minimizer
        let obj = |b: [f64; 3]| {
            0.5 * (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]) - 0.9 * b[0] - 0.2 * b[1]
                + 0.3 * (b[0].abs() + b[1].abs() + b[2].abs())
        };
        let mut best = (f64::INFINITY, [0.0; 3]);
        let grid: Vec<f64> = (0..=60).map(|i| -0.5 + i as f64 * 0.025).collect();
        for &a in &grid {
            for &b in &grid {
                for &c in &grid {
                    let f = obj([a, b, c]);
                    if f < best.0 {
                        best = (f, [a, b, c]);
                    }
                }
            }
        }
        for k in 0..3 {
            assert!((fit.beta[k] - best.1[k]).abs() <= 0.0125 + 1e-12);
        }
        assert!(fit.objective <= best.0 + 1e-12);
    }

    #[test]
    fn huge_penalty_zeroes_everything() {
        let m = CorrectedMoments::new(DMatrix::identity(3, 3) * 2.0, v(&[0.9, -0.2, 0.4]), 1).unwrap();
        let fit = l1_cls_fit(&m, &SolverOptions::new(10.0, 0.9)).unwrap();
        assert!(fit.beta.iter().all(|&b| b == 0.0));
        assert!(fit.support_used.is_empty());
        assert!(fit.converged);
    }

    #[test]
    fn unconstrained_fit_solves_linear_system() {
        let g = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.5, -0.3, 0.1, -0.3, 1.0]);
        let gv = v(&[1.0, -0.5, 0.25]);
        let exact = g.clone().lu().solve(&gv).unwrap();
        let m = CorrectedMoments::new(g, gv.clone(), 1).unwrap();
        let mut opts = SolverOptions::new(10.0 * linalg::l1_norm(&gv) / 0.5, 0.0);
        opts.rel_tol = 1e-14;
        let fit = l1_cls_fit(&m, &opts).unwrap();
        assert_abs_diff_eq!(fit.beta, exact, epsilon = 1e-6);
    }

    #[test]
    fn backtracking_reaches_same_optimum() {
        let g = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.5, -0.3, 0.1, -0.3, 1.0]);
        let m = CorrectedMoments::new(g, v(&[1.0, -0.5, 0.25]), 1).unwrap();
        let mut fixed = SolverOptions::new(0.6, 0.05);
        fixed.rel_tol = 1e-12;
        let bt = SolverOptions {
            step_rule: StepRule::Backtracking,
            ..fixed
        };
        let a = l1_cls_fit(&m, &fixed).unwrap();
        let b = l1_cls_fit(&m, &bt).unwrap();
        assert_abs_diff_eq!(a.objective, b.objective, epsilon = 1e-8);
        assert!(linalg::l1_norm(&a.beta) <= 0.6 + 1e-12);
    }

    #[test]
    fn indefinite_gamma_stays_in_ball() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        let m = CorrectedMoments::new(g, v(&[0.2, 0.1]), 1).unwrap();
        let fit = l1_cls_fit(&m, &SolverOptions::new(2.0, 0.0)).unwrap();
        assert!(linalg::l1_norm(&fit.beta) <= 2.0 + 1e-12);
        // unbounded below without the ball; the ball minimum puts mass on the
        // negative-curvature coordinate
        assert!(fit.beta[1].abs() > 1.0);
    }

    #[test]
    fn objective_is_monotone_for_psd_gamma() {
        let a = DMatrix::from_fn(5, 5, |i, j| ((i * 5 + j) as f64 * 0.37).sin());
        let g = a.tr_mul(&a) + DMatrix::identity(5, 5) * 0.01;
        let gv = v(&[1.0, -2.0, 0.5, 0.0, 0.3]);
        for (radius, lambda) in [(1.5, 0.1), (100.0, 0.0), (0.3, 0.5)] {
            let opts = SolverOptions {
                max_iters: 500,
                rel_tol: 1e-300,
                ..SolverOptions::new(radius, lambda)
            };
            let out = projected_gradient(&g, &gv, &opts).unwrap();
            for w in out.history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{w:?}");
            }
            assert_abs_diff_eq!(out.objective, penalized(&g, &gv, lambda, &out.beta), epsilon = 1e-12);
        }
    }

    #[test]
    fn options_are_validated() {
        let m = CorrectedMoments::new(DMatrix::identity(2, 2), v(&[1.0, 1.0]), 1).unwrap();
        assert!(l1_cls_fit(&m, &SolverOptions::new(0.0, 0.1)).is_err());
        assert!(l1_cls_fit(&m, &SolverOptions::new(1.0, -0.1)).is_err());
        let bad = SolverOptions { max_iters: 0, ..SolverOptions::new(1.0, 0.0) };
        assert!(l1_cls_fit(&m, &bad).is_err());
    }

    proptest! {
        #[test]
        fn projection_is_idempotent_and_in_ball(
            xs in prop::collection::vec(-10.0f64..10.0, 1..12),
            radius in 0.01f64..5.0,
        ) {
            let x = DVector::from_vec(xs);
            let once = project_l1_ball(&x, radius).unwrap();
            let twice = project_l1_ball(&once, radius).unwrap();
            let norm = linalg::l1_norm(&once);
            prop_assert!(norm <= radius + 1e-12);
            if linalg::l1_norm(&x) > radius {
                prop_assert!((norm - radius).abs() <= 1e-10);
            } else {
                prop_assert_eq!(&once, &x);
            }
            for k in 0..x.len() {
                prop_assert!((once[k] - twice[k]).abs() <= 1e-12);
            }
        }

        #[test]
        fn screening_size_and_scale_invariance(
            xs in prop::collection::vec(-5.0f64..5.0, 1..30),
            a_n in 1usize..40,
            scale in 0.01f64..100.0,
        ) {
            let g = DVector::from_vec(xs);
            let sel = cs_screen(&g, a_n).unwrap();
            prop_assert_eq!(sel.support.len(), a_n.min(g.len()));
            let scaled = cs_screen(&(&g * scale), a_n).unwrap();
            // rescaling can only merge ties through rounding; compare magnitudes
            let sum = |s: &[usize]| s.iter().map(|&j| g[j].abs()).sum::<f64>();
            prop_assert!((sum(&sel.support) - sum(&scaled.support)).abs() < 1e-9);
        }
    }
}
