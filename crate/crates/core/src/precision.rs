//! Precision matrix estimation from Gaussian data with missing entries by
//! per-column neighborhood regression.
//!
//! For each column `j`, the coefficients `θʲ = Σ₋ⱼ₋ⱼ⁻¹ Σ₋ⱼⱼ` of the regression
//! of `Xʲ` on the remaining columns are estimated by screening plus a
//! restricted corrected least squares refit. Column `j` of the precision
//! matrix is then `dⱼ` on the diagonal and `−dⱼ θʲ` elsewhere, with
//! `dⱼ = (Σⱼⱼ − Σⱼ₋ⱼ θʲ)⁻¹`. The assembled matrix is symmetrized by averaging
//! with its transpose.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{post_cls_fit_constrained, screen_size_grid};
use crate::linalg;
use crate::moments::{corrected_covariance, CorrectedMoments, NoiseModel, SurrogateDataset};
use crate::selection::{cs_screen, SolverOptions};

/// Residual variances below this magnitude are rejected.
pub const RESIDUAL_VARIANCE_FLOOR: f64 = 1e-10;

/// One column's regression on the others.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodFit {
    pub column: usize,
    /// Length `p − 1`, indexed over the columns other than `column`.
    pub theta: DVector<f64>,
    /// Selected positions in the full `0..p` indexing.
    pub support: Vec<usize>,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    pub theta: DMatrix<f64>,
    /// Before symmetrization.
    pub theta_raw: DMatrix<f64>,
    pub d: DVector<f64>,
    pub neighborhoods: Vec<NeighborhoodFit>,
    /// Columns whose residual variance came out negative (`d̂_j < 0`).
    pub negative_residual: Vec<usize>,
}

impl PrecisionEstimate {
    pub fn neighborhood_supports(&self) -> Vec<Vec<usize>> {
        self.neighborhoods.iter().map(|f| f.support.clone()).collect()
    }
}

fn others(p: usize, j: usize) -> Vec<usize> {
    (0..p).filter(|&k| k != j).collect()
}

fn missing_rates(data: &SurrogateDataset) -> Result<&DVector<f64>> {
    match data.noise() {
        NoiseModel::Missing { rho } => Ok(rho),
        NoiseModel::Additive { .. } => Err(Error::invalid(
            "precision estimation requires the missing-covariate model",
        )),
    }
}

/// `(Γʲ, γ̂ʲ) = (Σ̂₋ⱼ₋ⱼ, (Z₋ⱼ'Zⱼ/n) ⊘ (1−ρ₋ⱼ)(1−ρⱼ))` with `Σ̂ = (Z'Z/n) ⊘ M`.
pub fn neighborhood_moments(data: &SurrogateDataset, j: usize) -> Result<CorrectedMoments> {
    let sigma_hat = corrected_covariance(data)?;
    neighborhood_moments_from(data, &sigma_hat, j)
}

fn neighborhood_moments_from(
    data: &SurrogateDataset,
    sigma_hat: &DMatrix<f64>,
    j: usize,
) -> Result<CorrectedMoments> {
    let p = data.p();
    if p < 2 {
        return Err(Error::invalid("neighborhood regression needs p >= 2"));
    }
    if j >= p {
        return Err(Error::invalid(format!("column {j} out of range for p = {p}")));
    }
    let rho = missing_rates(data)?;
    let rest = others(p, j);
    let z = data.z();
    let n = data.n() as f64;
    let target = z.column(j);
    let gamma_vec = DVector::from_iterator(
        rest.len(),
        rest.iter()
            .map(|&k| z.column(k).dot(&target) / n / ((1.0 - rho[k]) * (1.0 - rho[j]))),
    );
    CorrectedMoments::new(linalg::select_square(sigma_hat, &rest), gamma_vec, data.n())
}

/// Screens `γ̂ʲ` at level `a_n` and refits on the selected coordinates inside
/// the ℓ1 ball of radius `radius`.
pub fn fit_neighborhood(
    data: &SurrogateDataset,
    j: usize,
    a_n: usize,
    radius: f64,
) -> Result<NeighborhoodFit> {
    let sigma_hat = corrected_covariance(data)?;
    fit_neighborhood_from(data, &sigma_hat, j, a_n, radius)
}

fn fit_neighborhood_from(
    data: &SurrogateDataset,
    sigma_hat: &DMatrix<f64>,
    j: usize,
    a_n: usize,
    radius: f64,
) -> Result<NeighborhoodFit> {
    let p = data.p();
    if a_n < 1 || a_n > p.saturating_sub(1) {
        return Err(Error::invalid(format!("a_n = {a_n} must lie in [1, {}]", p.saturating_sub(1))));
    }
    let m = neighborhood_moments_from(data, sigma_hat, j)?;
    let sel = cs_screen(m.gamma_vec(), a_n)?;
    let fit = post_cls_fit_constrained(&m, &sel.support, &SolverOptions::new(radius, 0.0))?;
    let rest = others(p, j);
    Ok(NeighborhoodFit {
        column: j,
        support: fit.support_used.iter().map(|&k| rest[k]).collect(),
        theta: fit.beta,
        fallback_used: fit.fallback_used,
    })
}

/// Builds `Θ̃` column by column and symmetrizes it.
pub fn assemble_precision(fits: &[NeighborhoodFit], sigma_hat: &DMatrix<f64>) -> Result<PrecisionEstimate> {
    let p = sigma_hat.nrows();
    if fits.len() != p {
        return Err(Error::DimensionMismatch {
            context: "neighborhood fits",
            expected: p,
            found: fits.len(),
        });
    }
    let mut raw = DMatrix::zeros(p, p);
    let mut d = DVector::zeros(p);
    let mut negative = Vec::new();
    for (j, fit) in fits.iter().enumerate() {
        if fit.column != j || fit.theta.len() + 1 != p {
            return Err(Error::invalid(format!("neighborhood fit {j} does not match column layout")));
        }
        let rest = others(p, j);
        let explained: f64 = rest.iter().zip(fit.theta.iter()).map(|(&k, t)| sigma_hat[(j, k)] * t).sum();
        let resid = sigma_hat[(j, j)] - explained;
        if !(resid.abs() >= RESIDUAL_VARIANCE_FLOOR) {
            return Err(Error::ResidualVarianceDegenerate { column: j, value: resid });
        }
        let dj = 1.0 / resid;
        if dj < 0.0 {
            negative.push(j);
        }
        d[j] = dj;
        raw[(j, j)] = dj;
        for (&k, t) in rest.iter().zip(fit.theta.iter()) {
            raw[(k, j)] = -dj * t;
        }
    }
    Ok(PrecisionEstimate {
        theta: symmetrize(&raw),
        theta_raw: raw,
        d,
        neighborhoods: fits.to_vec(),
        negative_residual: negative,
    })
}

/// `(Θ̃ + Θ̃')/2`.
pub fn symmetrize(theta_raw: &DMatrix<f64>) -> DMatrix<f64> {
    linalg::symmetrize(theta_raw)
}

/// Full pipeline: corrected covariance, `p` neighborhood fits (in parallel),
/// assembly and symmetrization.
pub fn estimate_precision(data: &SurrogateDataset, a_n: usize, radius: f64) -> Result<PrecisionEstimate> {
    missing_rates(data)?;
    if data.p() < 2 {
        return Err(Error::invalid("precision estimation needs p >= 2"));
    }
    let sigma_hat = corrected_covariance(data)?;
    let fits = (0..data.p())
        .into_par_iter()
        .map(|j| {
            fit_neighborhood_from(data, &sigma_hat, j, a_n, radius).map_err(|e| Error::Column {
                column: j,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    assemble_precision(&fits, &sigma_hat)
}

/// Chooses a shared `a_n` by train/test tuning of the first column's
/// neighborhood regression, scored by the test set's corrected loss.
pub fn tune_neighborhood_size(
    train: &SurrogateDataset,
    test: &SurrogateDataset,
    radius: f64,
) -> Result<(usize, Vec<f64>)> {
    let p = train.p();
    if p < 2 || test.p() != p {
        return Err(Error::invalid("tuning needs matching datasets with p >= 2"));
    }
    let train_sigma = corrected_covariance(train)?;
    let test_m = neighborhood_moments(test, 0)?;
    let grid: Vec<usize> = screen_size_grid(train.n(), p - 1)
        .into_iter()
        .map(|a| a as usize)
        .collect();
    let losses: Vec<f64> = grid
        .par_iter()
        .map(|&a_n| match fit_neighborhood_from(train, &train_sigma, 0, a_n, radius) {
            Ok(fit) => {
                let loss = test_m.loss_unchecked(&fit.theta);
                if loss.is_finite() {
                    loss
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        })
        .collect();
    let mut best = 0;
    for i in 1..grid.len() {
        if losses[i] < losses[best] {
            best = i;
        }
    }
    Ok((grid[best], losses))
}
