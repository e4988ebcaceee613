//! Train/test tuning of every method, then a refit on all rows.
//!
//! Run with `cargo run --example cross_validation`.

use postcls::estimation::DEFAULT_TEST_FRACTION;
use postcls::harness::{fit_tuned, tune_curve, Method};
use postcls::{false_positives, ree, NoiseKind, SimConfig};

fn main() -> postcls::Result<()> {
    let sim = postcls::gen_regression(&SimConfig {
        n: 500,
        p: 100,
        s: 4,
        noise_kind: NoiseKind::Missing,
        seed: 11,
        ..SimConfig::default()
    })?;
    let radius = 1.1 * sim.beta0.lp_norm(1);

    let curve = tune_curve(&sim.data, Method::CsPost, DEFAULT_TEST_FRACTION, radius)?;
    println!("screen size curve (first 10 points):");
    for (a, loss) in curve.grid.iter().zip(&curve.losses).take(10) {
        println!("  a_n = {a:>2}  test loss {loss:.4}");
    }

    for method in [Method::CsPost, Method::L1Cls, Method::Lasso] {
        let fit = fit_tuned(&sim.data, method, DEFAULT_TEST_FRACTION, radius)?;
        println!(
            "{method:>8}: tuning {:>5}, REE {:.4}, false positives {}",
            fit.tuning_value,
            ree(&fit.fit.beta, &sim.beta0)?,
            false_positives(&fit.selected, &sim.support)
        );
    }
    Ok(())
}
