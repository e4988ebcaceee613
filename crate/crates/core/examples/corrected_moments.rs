//! Bias correction of second moments under both noise models.
//!
//! Run with `cargo run --example corrected_moments`.

use postcls::moments::RseBounds;
use postcls::{corrected_moments, rse_bounds, uncorrected_moments, NoiseKind, SimConfig};

fn main() -> postcls::Result<()> {
    for kind in [NoiseKind::Additive, NoiseKind::Missing] {
        let sim = postcls::gen_regression(&SimConfig {
            n: 5000,
            p: 6,
            s: 2,
            noise_kind: kind,
            seed: 1,
            ..SimConfig::default()
        })?;
        let naive = uncorrected_moments(&sim.data)?;
        let fixed = corrected_moments(&sim.data)?;
        // X has identity covariance, so Γ should be close to I.
        println!("{kind}: diag Z'Z/n = {:.3?}", naive.gamma_mat().diagonal().as_slice());
        println!("{kind}: diag Γ     = {:.3?}", fixed.gamma_mat().diagonal().as_slice());
        println!("{kind}: γ̂ = {:.3?}  β0 = {:.3?}", fixed.gamma_vec().as_slice(), sim.beta0.as_slice());

        let RseBounds { kappa, phi } = rse_bounds(&fixed, &sim.support, 2)?;
        println!("{kind}: restricted eigenvalues over |T| + 2 supports in [{kappa:.3}, {phi:.3}]\n");
    }
    Ok(())
}
