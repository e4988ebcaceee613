//! A small experiment grid rendered as the results table.
//!
//! Run with `cargo run --example simulation_grid`. The full grids are
//! available as `GridSpec::sample_size_by_dimension` and
//! `GridSpec::sample_size_sweep`, or through `postcls experiment --preset`.

use postcls::harness::{render_results, run_grid, EmitOptions, GridSpec};
use postcls::NoiseKind;

fn main() -> postcls::Result<()> {
    let spec = GridSpec {
        scenario: "demo".into(),
        n_values: vec![100, 200],
        p_values: vec![50],
        s_values: vec![4],
        noise_kind: NoiseKind::Missing,
        replicates: 2,
        base_seed: 2,
        ..GridSpec::default()
    };
    println!("{} cells x {} methods", spec.cell_count(), spec.methods.len());
    let records = run_grid(&spec, 4)?;
    print!("{}", render_results(&records, EmitOptions::default()));

    let full = GridSpec::sample_size_by_dimension(NoiseKind::Additive);
    println!("\nfull n-by-p grid: {} cells", full.cell_count());
    Ok(())
}
