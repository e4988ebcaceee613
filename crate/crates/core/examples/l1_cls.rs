//! ℓ1-penalized corrected least squares along a penalty path, next to the
//! ordinary Lasso that ignores the missingness.
//!
//! Run with `cargo run --example l1_cls`.

use postcls::{corrected_moments, l1_cls_fit, lasso_fit, ree, NoiseKind, SimConfig, SolverOptions};

fn main() -> postcls::Result<()> {
    let sim = postcls::gen_regression(&SimConfig {
        n: 400,
        p: 100,
        s: 4,
        noise_kind: NoiseKind::Missing,
        seed: 3,
        ..SimConfig::default()
    })?;
    let moments = corrected_moments(&sim.data)?;
    let opts = SolverOptions::new(1.1 * sim.beta0.lp_norm(1), 0.0);

    println!("lambda  l1cls: |supp|  REE     iters | lasso: |supp|  REE");
    for lambda in [0.0, 0.1, 0.2, 0.4, 0.8] {
        let corrected = l1_cls_fit(&moments, &opts.with_lambda(lambda))?;
        let naive = lasso_fit(&sim.data, lambda, &opts)?;
        println!(
            "{lambda:>5.2}  {:>12}  {:.4}  {:>5} | {:>12}  {:.4}",
            corrected.support_used.len(),
            ree(&corrected.beta, &sim.beta0)?,
            corrected.iterations,
            naive.support_used.len(),
            ree(&naive.beta, &sim.beta0)?,
        );
    }
    Ok(())
}
