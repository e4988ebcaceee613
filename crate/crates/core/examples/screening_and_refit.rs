//! Correlation screening followed by the corrected least-squares refit.
//!
//! Run with `cargo run --example screening_and_refit`.

use postcls::{corrected_moments, cs_screen, post_cls_fit, ree, NoiseKind, SimConfig, SolverOptions};

fn main() -> postcls::Result<()> {
    let sim = postcls::gen_regression(&SimConfig {
        n: 500,
        p: 200,
        s: 4,
        noise_kind: NoiseKind::Additive,
        seed: 7,
        ..SimConfig::default()
    })?;
    let moments = corrected_moments(&sim.data)?;
    let opts = SolverOptions::new(1.1 * sim.beta0.lp_norm(1), 0.0);

    for a_n in [2, 4, 8, 16] {
        let selected = cs_screen(moments.gamma_vec(), a_n)?;
        let fit = post_cls_fit(&moments, &selected.support, &opts)?;
        let covered = sim.support.iter().all(|j| selected.support.contains(j));
        println!(
            "a_n = {a_n:>2}: truth covered {covered:5}, REE {:.4}, solved by {:?}",
            ree(&fit.beta, &sim.beta0)?,
            fit.solve_path.unwrap()
        );
    }
    Ok(())
}
