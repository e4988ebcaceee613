//! Nodewise precision-matrix estimation from data with missing entries.
//!
//! Run with `cargo run --example precision_matrix`.

use postcls::estimation::train_test_split;
use postcls::precision::tune_neighborhood_size;
use postcls::{column_norm_error, estimate_precision, gen_graph_data, generate_band_precision, generate_cluster_precision};

fn main() -> postcls::Result<()> {
    let graphs = [
        ("band", generate_band_precision(30, 2)?),
        ("cluster", generate_cluster_precision(30, 3)?),
    ];
    for (name, truth) in graphs {
        let p = truth.theta.nrows();
        let radius = 2.0
            * (0..p)
                .map(|j| (0..p).filter(|&k| k != j).map(|k| truth.theta[(k, j)].abs()).sum::<f64>() / truth.theta[(j, j)])
                .fold(0.0, f64::max);
        for n in [200, 800, 3200] {
            let data = gen_graph_data(&truth.sigma, n, 1.0, (0.05, 0.4), 5)?;
            let (train, test) = train_test_split(&data, 0.5, true)?;
            let (a_n, _) = tune_neighborhood_size(&train, &test, radius)?;
            let est = estimate_precision(&data, a_n, radius)?;
            println!(
                "{name:>7} n = {n:>4}: a_n = {a_n}, column-norm error {:.3}, floored residuals {}",
                column_norm_error(&est.theta, &truth.theta)?,
                est.negative_residual.len()
            );
        }
    }
    Ok(())
}
