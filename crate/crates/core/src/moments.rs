//! Surrogate datasets and the bias-corrected quadratic loss `½ β'Γβ − γ̂'β`.
//!
//! Two observation mechanisms are supported:
//!
//! * additive noise, `Z = X + W` with known noise covariance `Σ_w`, corrected as
//!   `Γ = Z'Z/n − Σ_w`, `γ̂ = Z'y/n`;
//! * missing covariates, where entry `(i, j)` is observed with probability
//!   `1 − ρ_j` and unobserved entries are stored as zeros plus a mask, corrected
//!   as `Γ = (Z'Z/n) ⊘ M`, `γ̂ = (Z'y/n) ⊘ (1 − ρ)`.
//!
//! `Γ` is not guaranteed to be positive semidefinite in either case.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg;

const SIGMA_W_SYMMETRY_TOL: f64 = 1e-12;

/// Default cap on the number of supports enumerated by [`rse_bounds`].
pub const RSE_DEFAULT_CAP: u128 = 1_000_000;

/// How the observed covariates relate to the true design.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    /// `Z = X + W`, `Cov(W) = sigma_w`.
    Additive { sigma_w: DMatrix<f64> },
    /// Column `j` is observed with probability `1 − rho[j]`.
    Missing { rho: DVector<f64> },
}

impl NoiseModel {
    pub fn kind(&self) -> NoiseKind {
        match self {
            NoiseModel::Additive { .. } => NoiseKind::Additive,
            NoiseModel::Missing { .. } => NoiseKind::Missing,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        match self {
            NoiseModel::Additive { sigma_w } => {
                if sigma_w.nrows() != p || sigma_w.ncols() != p {
                    return Err(Error::DimensionMismatch {
                        context: "sigma_w",
                        expected: p,
                        found: sigma_w.nrows().max(sigma_w.ncols()),
                    });
                }
                for i in 0..p {
                    for j in 0..i {
                        if (sigma_w[(i, j)] - sigma_w[(j, i)]).abs() > SIGMA_W_SYMMETRY_TOL {
                            return Err(Error::invalid(format!(
                                "sigma_w is not symmetric at ({i}, {j})"
                            )));
                        }
                    }
                }
                if sigma_w.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid("sigma_w has non-finite entries"));
                }
                Ok(())
            }
            NoiseModel::Missing { rho } => {
                if rho.len() != p {
                    return Err(Error::DimensionMismatch {
                        context: "rho",
                        expected: p,
                        found: rho.len(),
                    });
                }
                check_rates(rho)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Additive,
    Missing,
}

impl std::fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoiseKind::Additive => f.write_str("additive"),
            NoiseKind::Missing => f.write_str("missing"),
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" | "add" => Ok(NoiseKind::Additive),
            "missing" | "miss" => Ok(NoiseKind::Missing),
            other => Err(Error::invalid(format!("unknown noise kind `{other}`"))),
        }
    }
}

fn check_rates(rho: &DVector<f64>) -> Result<()> {
    for (column, &value) in rho.iter().enumerate() {
        if !(0.0..1.0).contains(&value) {
            return Err(Error::InvalidMissingRate { column, value });
        }
    }
    Ok(())
}

/// Observed covariates `Z`, an optional observation mask, the response and
/// the declared noise model.
#[derive(Debug, Clone)]
pub struct SurrogateDataset {
    z: DMatrix<f64>,
    mask: Option<DMatrix<bool>>,
    y: Option<DVector<f64>>,
    noise: NoiseModel,
}

impl SurrogateDataset {
    /// Validating constructor. For the missing model the mask is required and
    /// `z` must already be zero wherever the mask is `false`.
    pub fn new(
        z: DMatrix<f64>,
        mask: Option<DMatrix<bool>>,
        y: Option<DVector<f64>>,
        noise: NoiseModel,
    ) -> Result<Self> {
        let (n, p) = z.shape();
        if n == 0 || p == 0 {
            return Err(Error::InvalidDataset("Z must have at least one row and one column".into()));
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidDataset("Z has non-finite entries".into()));
        }
        if let Some(y) = &y {
            if y.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "response length",
                    expected: n,
                    found: y.len(),
                });
            }
            if y.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidDataset("y has non-finite entries".into()));
            }
        }
        noise.validate(p)?;
        match (&noise, &mask) {
            (NoiseModel::Additive { .. }, Some(_)) => {
                return Err(Error::InvalidDataset(
                    "additive noise model cannot be combined with a missingness mask".into(),
                ))
            }
            (NoiseModel::Missing { .. }, None) => {
                return Err(Error::InvalidDataset("missing noise model requires a mask".into()))
            }
            (NoiseModel::Missing { .. }, Some(mask)) => {
                if mask.shape() != (n, p) {
                    return Err(Error::DimensionMismatch {
                        context: "mask shape",
                        expected: n * p,
                        found: mask.nrows() * mask.ncols(),
                    });
                }
                for (zij, &obs) in z.iter().zip(mask.iter()) {
                    if !obs && *zij != 0.0 {
                        return Err(Error::InvalidDataset(
                            "Z must be zero at unobserved entries".into(),
                        ));
                    }
                }
            }
            (NoiseModel::Additive { .. }, None) => {}
        }
        Ok(Self { z, mask, y, noise })
    }

    pub fn additive(z: DMatrix<f64>, y: Option<DVector<f64>>, sigma_w: DMatrix<f64>) -> Result<Self> {
        Self::new(z, None, y, NoiseModel::Additive { sigma_w })
    }

    /// Missing-covariate dataset with `ρ̂` estimated from the mask. Entries of
    /// `z` where the mask is `false` are zero-filled.
    pub fn missing(mut z: DMatrix<f64>, mask: DMatrix<bool>, y: Option<DVector<f64>>) -> Result<Self> {
        if z.shape() != mask.shape() {
            return Err(Error::DimensionMismatch {
                context: "mask shape",
                expected: z.nrows() * z.ncols(),
                found: mask.nrows() * mask.ncols(),
            });
        }
        for (zij, &obs) in z.iter_mut().zip(mask.iter()) {
            if !obs {
                *zij = 0.0;
            }
        }
        let rho = estimate_missing_rates(&mask)?;
        Self::new(z, Some(mask), y, NoiseModel::Missing { rho })
    }

    /// Missing-covariate dataset with user-supplied rates.
    pub fn missing_with_rates(
        mut z: DMatrix<f64>,
        mask: DMatrix<bool>,
        y: Option<DVector<f64>>,
        rho: DVector<f64>,
    ) -> Result<Self> {
        if z.shape() == mask.shape() {
            for (zij, &obs) in z.iter_mut().zip(mask.iter()) {
                if !obs {
                    *zij = 0.0;
                }
            }
        }
        Self::new(z, Some(mask), y, NoiseModel::Missing { rho })
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn mask(&self) -> Option<&DMatrix<bool>> {
        self.mask.as_ref()
    }

    pub fn y(&self) -> Option<&DVector<f64>> {
        self.y.as_ref()
    }

    pub fn response(&self) -> Result<&DVector<f64>> {
        self.y.as_ref().ok_or(Error::MissingResponse)
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Rows `start..end`, keeping the noise model unchanged.
    pub fn rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n() {
            return Err(Error::invalid(format!(
                "row range {start}..{end} invalid for n = {}",
                self.n()
            )));
        }
        let len = end - start;
        Self::new(
            self.z.rows(start, len).into_owned(),
            self.mask.as_ref().map(|m| m.rows(start, len).into_owned()),
            self.y.as_ref().map(|y| y.rows(start, len).into_owned()),
            self.noise.clone(),
        )
    }

    /// Replaces `ρ` by the observed-entry frequencies of this dataset's mask.
    /// No-op for the additive model.
    pub fn with_estimated_rates(self) -> Result<Self> {
        match &self.mask {
            Some(mask) => {
                let rho = estimate_missing_rates(mask)?;
                Ok(Self {
                    noise: NoiseModel::Missing { rho },
                    ..self
                })
            }
            None => Ok(self),
        }
    }
}

/// `Γ` and `γ̂` of the corrected quadratic loss.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedMoments {
    gamma_mat: DMatrix<f64>,
    gamma_vec: DVector<f64>,
    n: usize,
}

impl CorrectedMoments {
    /// Builds moments from explicit parts. `gamma_mat` is symmetrized.
    pub fn new(gamma_mat: DMatrix<f64>, gamma_vec: DVector<f64>, n: usize) -> Result<Self> {
        let p = gamma_vec.len();
        if gamma_mat.nrows() != p || gamma_mat.ncols() != p {
            return Err(Error::DimensionMismatch {
                context: "gamma matrix",
                expected: p,
                found: gamma_mat.nrows().max(gamma_mat.ncols()),
            });
        }
        if gamma_mat.iter().chain(gamma_vec.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("corrected moments contain non-finite entries"));
        }
        Ok(Self {
            gamma_mat: linalg::symmetrize(&gamma_mat),
            gamma_vec,
            n,
        })
    }

    pub fn gamma_mat(&self) -> &DMatrix<f64> {
        &self.gamma_mat
    }

    pub fn gamma_vec(&self) -> &DVector<f64> {
        &self.gamma_vec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.gamma_vec.len()
    }

    /// `(Γ_SS, γ̂_S)` for an index set `S`.
    pub fn restrict(&self, idx: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        (
            linalg::select_square(&self.gamma_mat, idx),
            linalg::select_vec(&self.gamma_vec, idx),
        )
    }

    pub(crate) fn loss_unchecked(&self, beta: &DVector<f64>) -> f64 {
        0.5 * beta.dot(&(&self.gamma_mat * beta)) - self.gamma_vec.dot(beta)
    }
}

/// `ρ̂_j = 1 − (observed count in column j) / n`.
pub fn estimate_missing_rates(mask: &DMatrix<bool>) -> Result<DVector<f64>> {
    let n = mask.nrows();
    if n == 0 {
        return Err(Error::InvalidDataset("mask has no rows".into()));
    }
    let mut rho = DVector::zeros(mask.ncols());
    for (j, col) in mask.column_iter().enumerate() {
        let observed = col.iter().filter(|&&b| b).count();
        if observed == 0 {
            return Err(Error::DegenerateColumn { column: j });
        }
        rho[j] = 1.0 - observed as f64 / n as f64;
    }
    Ok(rho)
}

/// `M_ij = (1−ρ_i)(1−ρ_j)` off the diagonal, `M_ii = 1−ρ_i`.
pub fn build_mask_matrix(rho: &DVector<f64>) -> Result<DMatrix<f64>> {
    check_rates(rho)?;
    let p = rho.len();
    Ok(DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0 - rho[i]
        } else {
            (1.0 - rho[i]) * (1.0 - rho[j])
        }
    }))
}

/// Bias-corrected estimate of `Σ_x` from `Z` alone (the `Γ` half of the
/// moments). Works for datasets without a response.
pub fn corrected_covariance(data: &SurrogateDataset) -> Result<DMatrix<f64>> {
    let n = data.n() as f64;
    let gram = data.z().tr_mul(data.z()) / n;
    let gamma = match data.noise() {
        NoiseModel::Additive { sigma_w } => gram - sigma_w,
        NoiseModel::Missing { rho } => {
            let m = build_mask_matrix(rho)?;
            gram.component_div(&m)
        }
    };
    Ok(linalg::symmetrize(&gamma))
}

/// `(Γ, γ̂)` for the dataset's declared noise model.
pub fn corrected_moments(data: &SurrogateDataset) -> Result<CorrectedMoments> {
    let y = data.response()?;
    let n = data.n() as f64;
    let cross = data.z().tr_mul(y) / n;
    let gamma_vec = match data.noise() {
        NoiseModel::Additive { .. } => cross,
        NoiseModel::Missing { rho } => {
            check_rates(rho)?;
            cross.component_div(&rho.map(|r| 1.0 - r))
        }
    };
    let gamma_mat = corrected_covariance(data)?;
    CorrectedMoments::new(gamma_mat, gamma_vec, data.n())
}

/// `(Z'Z/n, Z'y/n)` with no correction, as used by the ordinary Lasso.
pub fn uncorrected_moments(data: &SurrogateDataset) -> Result<CorrectedMoments> {
    let y = data.response()?;
    let n = data.n() as f64;
    let gram = data.z().tr_mul(data.z()) / n;
    let cross = data.z().tr_mul(y) / n;
    CorrectedMoments::new(gram, cross, data.n())
}

/// `½ β'Γβ − γ̂'β`.
pub fn corrected_loss(beta: &DVector<f64>, m: &CorrectedMoments) -> Result<f64> {
    if beta.len() != m.p() {
        return Err(Error::DimensionMismatch {
            context: "coefficient length",
            expected: m.p(),
            found: beta.len(),
        });
    }
    Ok(m.loss_unchecked(beta))
}

/// Restricted sparse eigenvalues of `Γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RseBounds {
    pub kappa: f64,
    pub phi: f64,
}

/// Exact `κ(m)`, `φ(m)` by enumerating every support `T ∪ E` with
/// `|E| ≤ max_extra`, `E ⊆ T^c`. Meant for small instances.
pub fn rse_bounds(m: &CorrectedMoments, truth: &[usize], max_extra: usize) -> Result<RseBounds> {
    rse_bounds_with_cap(m, truth, max_extra, RSE_DEFAULT_CAP)
}

pub fn rse_bounds_with_cap(
    m: &CorrectedMoments,
    truth: &[usize],
    max_extra: usize,
    cap: u128,
) -> Result<RseBounds> {
    let p = m.p();
    let mut base: Vec<usize> = truth.to_vec();
    base.sort_unstable();
    base.dedup();
    if base.iter().any(|&i| i >= p) {
        return Err(Error::invalid("support index out of range"));
    }
    if base.len() + max_extra > p {
        return Err(Error::invalid(format!(
            "|T| + max_extra = {} exceeds p = {p}",
            base.len() + max_extra
        )));
    }
    let rest: Vec<usize> = (0..p).filter(|i| base.binary_search(i).is_err()).collect();
    let candidates = (0..=max_extra).fold(0u128, |acc, k| acc.saturating_add(binomial(rest.len(), k)));
    if candidates > cap {
        return Err(Error::DiagnosticTooLarge { candidates, cap });
    }

    let mut kappa = f64::INFINITY;
    let mut phi = f64::NEG_INFINITY;
    for k in 0..=max_extra {
        for_each_combination(rest.len(), k, |combo| {
            let mut support = base.clone();
            support.extend(combo.iter().map(|&c| rest[c]));
            if support.is_empty() {
                return;
            }
            let sub = linalg::select_square(m.gamma_mat(), &support);
            let eig = SymmetricEigen::new(sub);
            for &ev in eig.eigenvalues.iter() {
                kappa = kappa.min(ev);
                phi = phi.max(ev);
            }
        });
    }
    Ok(RseBounds { kappa, phi })
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        // advance to the next k-subset in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] < n - k + i {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}
