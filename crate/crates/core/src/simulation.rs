//! Seeded data-generating processes for the simulation study.
//!
//! Every generator is a pure function of its arguments. Randomness comes from
//! ChaCha20 streams keyed by [`derive_seed`], which hashes a text label into
//! the base seed, so the draws for `X`, `W`, the mask, `ρ`, `ε` and `β₀` never
//! share a stream. Changing `σ_ε`, for instance, leaves `X` untouched.
//!
//! Derivation tree used by [`gen_regression`] (seed `s`):
//!
//! ```text
//! s ── "beta0" ── gen_beta0
//!   ├─ "x"     ── design rows
//!   ├─ "w"     ── additive noise rows
//!   ├─ "rho"   ── per-column missing rates
//!   ├─ "mask"  ── observation indicators
//!   └─ "eps"   ── regression errors
//! ```

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{NoiseKind, SurrogateDataset};

/// Mixes a label into a seed: FNV-1a over the label bytes, then a
/// SplitMix64 finalizer over `seed ^ hash`.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ h)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, label: &str) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(derive_seed(seed, label))
}

/// Parameters of one regression data set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub noise_kind: NoiseKind,
    pub sigma_eps: f64,
    /// AR(1) correlation of the additive noise.
    pub ar_phi: f64,
    /// Scale of the additive noise covariance.
    pub c_w: f64,
    /// Support of the uniform draw of each `ρ_j`.
    pub rho_range: (f64, f64),
    /// Variance scale of the design.
    pub c_x: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 200,
            p: 100,
            s: 4,
            noise_kind: NoiseKind::Additive,
            sigma_eps: 0.25,
            ar_phi: 0.5,
            c_w: 0.25,
            rho_range: (0.05, 0.75),
            c_x: 1.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::invalid("n and p must be positive"));
        }
        if self.s > self.p {
            return Err(Error::invalid(format!("s = {} exceeds p = {}", self.s, self.p)));
        }
        // σ_ε = 0 is allowed for noiseless checks
        if !(self.sigma_eps >= 0.0) {
            return Err(Error::invalid("sigma_eps must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.ar_phi) {
            return Err(Error::invalid("ar_phi must lie in [0, 1)"));
        }
        if !(self.c_w >= 0.0) || !(self.c_x > 0.0) {
            return Err(Error::invalid("c_w must be non-negative and c_x positive"));
        }
        check_rho_range(self.rho_range)
    }
}

fn check_rho_range((lo, hi): (f64, f64)) -> Result<()> {
    if !(0.0 <= lo && lo <= hi && hi < 1.0) {
        return Err(Error::invalid(format!("rho range ({lo}, {hi}) must satisfy 0 <= lo <= hi < 1")));
    }
    Ok(())
}

/// Sparse coefficients: the first `s` entries are `±U(1, 4)` with a fair
/// sign, the rest zero.
pub fn gen_beta0(p: usize, s: usize, seed: u64) -> Result<DVector<f64>> {
    if s > p {
        return Err(Error::invalid(format!("s = {s} exceeds p = {p}")));
    }
    let mut rng = rng_for(seed, "beta0");
    let mut beta = DVector::zeros(p);
    for j in 0..s {
        let negative: bool = rng.random_bool(0.5);
        let magnitude: f64 = rng.random_range(1.0..4.0);
        beta[j] = if negative { -magnitude } else { magnitude };
    }
    Ok(beta)
}

/// `Σ_ij = scale · φ^|i−j|`.
pub fn ar1_covariance(p: usize, phi: f64, scale: f64) -> Result<DMatrix<f64>> {
    if !(phi.abs() < 1.0) || !(scale > 0.0) {
        return Err(Error::invalid("AR(1) covariance needs |phi| < 1 and scale > 0"));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| {
        scale * phi.powi((i as i64 - j as i64).unsigned_abs() as i32)
    }))
}

/// `n` i.i.d. rows from `N(0, Σ)`, computed as `G L'` with `G` standard
/// normal (filled row by row) and `Σ = L L'`.
pub fn sample_gaussian(n: usize, sigma: &DMatrix<f64>, seed: u64) -> Result<DMatrix<f64>> {
    let p = sigma.nrows();
    if sigma.ncols() != p {
        return Err(Error::invalid("covariance must be square"));
    }
    let chol = sigma.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let mut rng = rng_for(seed, "gaussian");
    let draws: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
    let g = DMatrix::from_row_slice(n, p, &draws);
    Ok(g * chol.l().transpose())
}

pub fn draw_missing_rates(p: usize, (lo, hi): (f64, f64), seed: u64) -> DVector<f64> {
    let mut rng = rng_for(seed, "rho");
    DVector::from_fn(p, |_, _| if hi > lo { rng.random_range(lo..hi) } else { lo })
}

/// Entry `(i, j)` observed with probability `1 − ρ_j`, drawn row by row.
pub fn draw_mask(n: usize, rho: &DVector<f64>, seed: u64) -> DMatrix<bool> {
    let p = rho.len();
    let mut rng = rng_for(seed, "mask");
    let cells: Vec<bool> = (0..n * p).map(|k| rng.random::<f64>() >= rho[k % p]).collect();
    DMatrix::from_row_slice(n, p, &cells)
}

/// One simulated regression data set with its ground truth.
#[derive(Debug, Clone)]
pub struct SimulatedRegression {
    pub data: SurrogateDataset,
    pub beta0: DVector<f64>,
    /// 0-based true support.
    pub support: Vec<usize>,
    /// Unobserved design.
    pub x: DMatrix<f64>,
    /// Missing rates used to draw the mask (missing model only).
    pub true_rho: Option<DVector<f64>>,
}

/// `y = Xβ₀ + ε` with `X ~ N(0, c_x I)`, `ε ~ N(0, σ_ε²)`. The additive model
/// observes `Z = X + W`, `W ~ N(0, c_w·AR1(φ))`; the missing model draws
/// `ρ_j ~ U(rho_range)` and zero-fills unobserved entries, carrying `ρ̂`
/// estimated from the mask.
pub fn gen_regression(config: &SimConfig) -> Result<SimulatedRegression> {
    config.validate()?;
    let SimConfig { n, p, s, seed, .. } = *config;
    let beta0 = gen_beta0(p, s, seed)?;
    let x = sample_gaussian(n, &(DMatrix::identity(p, p) * config.c_x), derive_seed(seed, "x"))?;

    let mut rng = rng_for(seed, "eps");
    let eps = DVector::from_fn(n, |_, _| config.sigma_eps * rng.sample::<f64, _>(StandardNormal));
    let y = &x * &beta0 + eps;

    let (data, true_rho) = match config.noise_kind {
        NoiseKind::Additive => {
            if config.c_w > 0.0 {
                let sigma_w = ar1_covariance(p, config.ar_phi, config.c_w)?;
                let w = sample_gaussian(n, &sigma_w, derive_seed(seed, "w"))?;
                (SurrogateDataset::additive(&x + w, Some(y), sigma_w)?, None)
            } else {
                (SurrogateDataset::additive(x.clone(), Some(y), DMatrix::zeros(p, p))?, None)
            }
        }
        NoiseKind::Missing => {
            let rho = draw_missing_rates(p, config.rho_range, derive_seed(seed, "rho"));
            let mask = draw_mask(n, &rho, derive_seed(seed, "mask"));
            (SurrogateDataset::missing(x.clone(), mask, Some(y))?, Some(rho))
        }
    };

    Ok(SimulatedRegression {
        data,
        support: (0..s).collect(),
        beta0,
        x,
        true_rho,
    })
}

/// A precision matrix and its inverse.
#[derive(Debug, Clone)]
pub struct PrecisionPair {
    pub theta: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

/// `max(1, round(p/20))`.
pub fn default_structure_size(p: usize) -> usize {
    ((p as f64 / 20.0).round() as usize).max(1)
}

/// Banded precision: unit diagonal and `0.5^|i−j|` within the band.
/// A bandwidth of zero gives the identity.
pub fn generate_band_precision(p: usize, bandwidth: usize) -> Result<PrecisionPair> {
    if p == 0 || (p > 1 && bandwidth >= p) {
        return Err(Error::invalid(format!("bandwidth {bandwidth} must be below p = {p}")));
    }
    let raw = DMatrix::from_fn(p, p, |i, j| {
        let d = (i as i64 - j as i64).unsigned_abs() as usize;
        if d == 0 {
            1.0
        } else if d <= bandwidth {
            0.5f64.powi(d as i32)
        } else {
            0.0
        }
    });
    normalize_precision(raw)
}

/// Block-diagonal precision with `n_clusters` near-equal blocks, unit diagonal
/// and `0.5` inside each block.
pub fn generate_cluster_precision(p: usize, n_clusters: usize) -> Result<PrecisionPair> {
    if n_clusters == 0 || n_clusters > p {
        return Err(Error::invalid(format!("need 1 <= n_clusters <= p, got {n_clusters}")));
    }
    let base = p / n_clusters;
    let extra = p % n_clusters;
    let mut block_of = Vec::with_capacity(p);
    for b in 0..n_clusters {
        let size = base + usize::from(b < extra);
        block_of.extend(std::iter::repeat_n(b, size));
    }
    let raw = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if block_of[i] == block_of[j] {
            0.5
        } else {
            0.0
        }
    });
    normalize_precision(raw)
}

/// PD repair when needed, then rescale so that `diag(Σ) = 1`.
fn normalize_precision(mut theta: DMatrix<f64>) -> Result<PrecisionPair> {
    let p = theta.nrows();
    let min_eig = SymmetricEigen::new(theta.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min_eig <= 0.0 {
        let boost = min_eig.abs() + 0.1;
        for i in 0..p {
            theta[(i, i)] += boost;
        }
    }
    let sigma = spd_inverse(&theta)?;
    let scale = DVector::from_fn(p, |i, _| 1.0 / sigma[(i, i)].sqrt());
    let mut sigma = DMatrix::from_fn(p, p, |i, j| sigma[(i, j)] * scale[i] * scale[j]);
    for i in 0..p {
        sigma[(i, i)] = 1.0;
    }
    let theta = spd_inverse(&sigma)?;
    Ok(PrecisionPair { theta, sigma })
}

fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let inv = a.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.inverse();
    Ok(crate::linalg::symmetrize(&inv))
}

/// Graph-setting data: `X ~ N(0, c_x Σ)` with missingness as in
/// [`gen_regression`] and no response.
pub fn gen_graph_data(
    sigma: &DMatrix<f64>,
    n: usize,
    c_x: f64,
    rho_range: (f64, f64),
    seed: u64,
) -> Result<SurrogateDataset> {
    if !(c_x > 0.0) || n == 0 {
        return Err(Error::invalid("need c_x > 0 and n > 0"));
    }
    check_rho_range(rho_range)?;
    let x = sample_gaussian(n, &(sigma * c_x), derive_seed(seed, "x"))?;
    let rho = draw_missing_rates(sigma.nrows(), rho_range, derive_seed(seed, "rho"));
    let mask = draw_mask(n, &rho, derive_seed(seed, "mask"));
    SurrogateDataset::missing(x, mask, None)
}
