//! Reading and writing data sets and configuration documents.
//!
//! Run with `cargo run --example dataset_io`.

use postcls::io::{parse_config, read_dataset, rates_of, write_dataset, NoiseSpec};
use postcls::{NoiseKind, SimConfig};

fn main() -> postcls::Result<()> {
    let dir = std::env::temp_dir().join("postcls-dataset-io");
    std::fs::create_dir_all(&dir).map_err(|e| postcls::Error::Io { path: dir.clone(), source: e })?;
    let path = dir.join("data.csv");

    let config: SimConfig = parse_config("n = 8\np = 3\ns = 1\nnoise_kind = missing\nrho_range = 0.2, 0.5\nseed = 4")
        .map_err(postcls::Error::InvalidArgument)?;
    let sim = postcls::gen_regression(&config)?;
    write_dataset(&path, &sim.data)?;
    println!("{}", std::fs::read_to_string(&path).unwrap());

    let back = read_dataset(&path, NoiseSpec::Missing)?;
    assert_eq!(back.noise().kind(), NoiseKind::Missing);
    println!("estimated missing rates: {:.3?}", rates_of(&back).unwrap().as_slice());
    println!("drawn missing rates:     {:.3?}", sim.true_rho.unwrap().as_slice());
    Ok(())
}
