//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use postcls::project_l1_ball;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// `½ βᵀGβ − cᵀβ + λ‖β‖₁`, written out as plain loops.
pub fn penalized(g: &DMatrix<f64>, c: &DVector<f64>, lambda: f64, b: &DVector<f64>) -> f64 {
    let p = b.len();
    let mut quad = 0.0;
    for i in 0..p {
        for j in 0..p {
            quad += b[i] * g[(i, j)] * b[j];
        }
    }
    let lin: f64 = (0..p).map(|i| c[i] * b[i]).sum();
    let l1: f64 = b.iter().map(|x| x.abs()).sum();
    0.5 * quad - lin + lambda * l1
}

/// A random positive definite `p × p` matrix with smallest eigenvalue at least `floor`.
pub fn random_pd(p: usize, floor: f64, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(p + 2, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    a.tr_mul(&a) / (p + 2) as f64 + DMatrix::identity(p, p) * floor
}

pub fn random_vec(p: usize, rng: &mut ChaCha20Rng) -> DVector<f64> {
    DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Exact minimum of the penalized objective over the ℓ1 ball for positive
/// definite `g`, by enumerating sign patterns. On each orthant face the
/// objective is a smooth quadratic, so the minimizer is either the face's
/// unconstrained stationary point or its stationary point on `σᵀβ = R`.
pub fn exact_ball_minimum(g: &DMatrix<f64>, c: &DVector<f64>, lambda: f64, radius: f64) -> (f64, DVector<f64>) {
    let p = c.len();
    let mut best = (penalized(g, c, lambda, &DVector::zeros(p)), DVector::zeros(p));
    let faces = 3usize.pow(p as u32);
    for code in 1..faces {
        let mut signs = vec![0.0; p];
        let mut k = code;
        for s in signs.iter_mut() {
            *s = [0.0, 1.0, -1.0][k % 3];
            k /= 3;
        }
        let active: Vec<usize> = (0..p).filter(|&j| signs[j] != 0.0).collect();
        let ga = DMatrix::from_fn(active.len(), active.len(), |r, s| g[(active[r], active[s])]);
        let sa = DVector::from_iterator(active.len(), active.iter().map(|&j| signs[j]));
        let ca = DVector::from_iterator(active.len(), active.iter().map(|&j| c[j] - lambda * signs[j]));
        let Some(chol) = ga.cholesky() else { continue };
        let u = chol.solve(&ca);
        let v = chol.solve(&sa);
        let mut candidates = vec![u.clone()];
        if radius.is_finite() {
            let mu = (sa.dot(&u) - radius) / sa.dot(&v);
            if mu >= -1e-12 {
                candidates.push(&u - &v * mu);
            }
        }
        for cand in candidates {
            let fits_signs = cand.iter().zip(sa.iter()).all(|(b, s)| b * s >= -1e-12);
            let l1: f64 = cand.iter().map(|x| x.abs()).sum();
            if !fits_signs || l1 > radius * (1.0 + 1e-12) {
                continue;
            }
            let mut full = DVector::zeros(p);
            for (k, &j) in active.iter().enumerate() {
                full[j] = cand[k];
            }
            let val = penalized(g, c, lambda, &full);
            if val < best.0 {
                best = (val, full);
            }
        }
    }
    best
}

/// Multi-start coordinate pattern search inside the ball, halving the step
/// until it falls below `1e-10`. A derivative-free cross-check.
pub fn pattern_search_minimum(
    g: &DMatrix<f64>,
    c: &DVector<f64>,
    lambda: f64,
    radius: f64,
    starts: usize,
    rng: &mut ChaCha20Rng,
) -> f64 {
    let p = c.len();
    let scale = if radius.is_finite() { radius } else { 10.0 };
    let mut best = f64::INFINITY;
    for _ in 0..starts {
        let raw = DVector::from_fn(p, |_, _| rng.random_range(-scale..scale));
        let mut x = project_l1_ball(&raw, radius).unwrap();
        let mut fx = penalized(g, c, lambda, &x);
        let mut h = scale / 2.0;
        while h > 1e-10 {
            let mut improved = false;
            for j in 0..p {
                for dir in [1.0, -1.0] {
                    let mut y = x.clone();
                    y[j] += dir * h;
                    let y = project_l1_ball(&y, radius).unwrap();
                    let fy = penalized(g, c, lambda, &y);
                    if fy < fx - 1e-15 {
                        x = y;
                        fx = fy;
                        improved = true;
                    }
                }
            }
            if !improved {
                h /= 2.0;
            }
        }
        best = best.min(fx);
    }
    best
}

/// Minimizes `½ βᵀGβ − cᵀβ` over two coordinates by repeatedly refining a
/// square grid around the incumbent.
pub fn zoom_grid_2d(g: &DMatrix<f64>, c: &DVector<f64>, half_width: f64) -> (f64, [f64; 2]) {
    let loss = |b0: f64, b1: f64| {
        0.5 * (g[(0, 0)] * b0 * b0 + 2.0 * g[(0, 1)] * b0 * b1 + g[(1, 1)] * b1 * b1) - c[0] * b0 - c[1] * b1
    };
    let steps = 200;
    let (mut center, mut w) = ([0.0, 0.0], half_width);
    let mut best = (loss(0.0, 0.0), center);
    for _ in 0..12 {
        for i in 0..=steps {
            for k in 0..=steps {
                let b0 = center[0] - w + 2.0 * w * i as f64 / steps as f64;
                let b1 = center[1] - w + 2.0 * w * k as f64 / steps as f64;
                let v = loss(b0, b1);
                if v < best.0 {
                    best = (v, [b0, b1]);
                }
            }
        }
        center = best.1;
        w *= 0.05;
    }
    best
}
