use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use postcls::estimation::DEFAULT_TEST_FRACTION;
use postcls::harness::{self, EmitOptions, GridSpec, Method};
use postcls::io::{self, NoiseSpec};
use postcls::moments::{NoiseKind, NoiseModel, SurrogateDataset};
use postcls::precision::{estimate_precision, tune_neighborhood_size};
use postcls::simulation::{self, SimConfig};
use postcls::{train_test_split, Error, Result};

#[derive(Parser)]
#[command(name = "postcls", version, about = "Corrected least squares for noisy or missing covariates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic data set.
    Simulate(SimulateArgs),
    /// Fit one method to one data set.
    Fit(FitArgs),
    /// Estimate a precision matrix by nodewise regression.
    Precision(PrecisionArgs),
    /// Run a simulation grid and write one row per fitted model.
    Experiment(ExperimentArgs),
    /// Dump the cross-validation curve of one method.
    Tune(TuneArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Comma-separated data set with header; `y` is the response, `NA` marks missing entries.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "missing")]
    noise: NoiseArg,
    /// Known noise covariance (additive model), one row per line.
    #[arg(long, conflicts_with_all = ["ar1_phi"])]
    sigma_w: Option<PathBuf>,
    /// Use `scale · AR1(phi)` as the noise covariance (additive model).
    #[arg(long)]
    ar1_phi: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    ar1_scale: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Additive,
    Missing,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    CsPost,
    L1cls,
    Lasso,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::CsPost => Method::CsPost,
            MethodArg::L1cls => Method::L1Cls,
            MethodArg::Lasso => Method::Lasso,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GraphArg {
    Band,
    Cluster,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// n in 100..=500 step 40, p in 100..=490 step 65, s in {4, 8}.
    GridNp,
    /// p = 750, s = 4, n in 50..=500 step 5.
    GridN,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON or `key = value` document with simulation fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long, value_enum)]
    noise: Option<NoiseArg>,
    /// Emit covariates from a sparse precision structure instead of a regression.
    #[arg(long, value_enum)]
    graph: Option<GraphArg>,
    /// Bandwidth or cluster count for `--graph`.
    #[arg(long)]
    structure: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the true coefficients (or precision matrix) next to the output.
    #[arg(long)]
    save_coefs: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "cs-post")]
    method: MethodArg,
    /// Screen size for cs-post, penalty for l1cls and lasso; tuned by cross-validation if absent.
    #[arg(long)]
    tuning: Option<f64>,
    /// ℓ1-ball radius of the solver.
    #[arg(long, default_value_t = f64::INFINITY)]
    radius: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PrecisionArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Neighbourhood screen size; tuned on the first column if absent.
    #[arg(long)]
    screen_size: Option<usize>,
    #[arg(long, default_value_t = f64::INFINITY)]
    radius: f64,
    #[arg(long)]
    out: PathBuf,
    /// Per-column support size, residual precision and fallback flag.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON or `key = value` document with grid fields.
    #[arg(long, required_unless_present = "preset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with = "config")]
    preset: Option<Preset>,
    /// Noise model for `--preset`.
    #[arg(long, value_enum, default_value = "missing")]
    noise: NoiseArg,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
    /// Write estimated and true coefficients to `<out>.coefs.csv`.
    #[arg(long)]
    save_coefs: bool,
    #[arg(long)]
    no_timing: bool,
    /// Exit with status 1 if any cell failed.
    #[arg(long)]
    strict: bool,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value = "cs-post")]
    method: MethodArg,
    #[arg(long, default_value_t = f64::INFINITY)]
    radius: f64,
    #[arg(long, default_value_t = DEFAULT_TEST_FRACTION)]
    test_fraction: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn noise_kind(arg: NoiseArg) -> NoiseKind {
    match arg {
        NoiseArg::Additive => NoiseKind::Additive,
        NoiseArg::Missing => NoiseKind::Missing,
    }
}

fn load(args: &DataArgs) -> Result<SurrogateDataset> {
    let spec = match args.noise {
        NoiseArg::Missing => NoiseSpec::Missing,
        NoiseArg::Additive => {
            let sigma_w = if let Some(path) = &args.sigma_w {
                io::read_matrix(path)?
            } else if let Some(phi) = args.ar1_phi {
                let p = io::read_table(&args.data)?.z.ncols();
                simulation::ar1_covariance(p, phi, args.ar1_scale)?
            } else {
                return Err(Error::InvalidArgument(
                    "the additive model needs --sigma-w or --ar1-phi".into(),
                ));
            };
            NoiseSpec::Additive { sigma_w }
        }
    };
    io::read_dataset(&args.data, spec)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn write_or_print(out: Option<&Path>, body: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, body).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg: SimConfig = match &args.config {
        Some(path) => io::read_config(path)?,
        None => SimConfig::default(),
    };
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.n {
        cfg.n = v;
    }
    if let Some(v) = args.p {
        cfg.p = v;
    }
    if let Some(v) = args.s {
        cfg.s = v;
    }
    if let Some(v) = args.noise {
        cfg.noise_kind = noise_kind(v);
    }
    cfg.validate()?;

    if let Some(graph) = args.graph {
        let size = args.structure.unwrap_or_else(|| simulation::default_structure_size(cfg.p));
        let pair = match graph {
            GraphArg::Band => simulation::generate_band_precision(cfg.p, size)?,
            GraphArg::Cluster => simulation::generate_cluster_precision(cfg.p, size)?,
        };
        let data = simulation::gen_graph_data(&pair.sigma, cfg.n, cfg.c_x, cfg.rho_range, cfg.seed)?;
        io::write_dataset(&args.out, &data)?;
        if args.save_coefs {
            io::write_matrix(sibling(&args.out, ".theta.csv"), &pair.theta)?;
        }
        return Ok(());
    }

    let sim = simulation::gen_regression(&cfg)?;
    io::write_dataset(&args.out, &sim.data)?;
    if let NoiseModel::Additive { sigma_w } = sim.data.noise() {
        io::write_matrix(sibling(&args.out, ".sigma_w.csv"), sigma_w)?;
    }
    if args.save_coefs {
        let beta0 = DMatrix::from_column_slice(cfg.p, 1, sim.beta0.as_slice());
        io::write_matrix(sibling(&args.out, ".beta0.csv"), &beta0)?;
    }
    Ok(())
}

fn fit(args: FitArgs) -> Result<()> {
    let data = load(&args.data)?;
    let method = Method::from(args.method);
    let mf = match args.tuning {
        Some(v) => harness::fit_at(&data, method, v, args.radius)?,
        None => harness::fit_tuned(&data, method, DEFAULT_TEST_FRACTION, args.radius)?,
    };
    eprintln!(
        "method={method} tuning={} support={:?} iterations={} converged={}",
        mf.tuning_value,
        mf.selected.iter().map(|j| j + 1).collect::<Vec<_>>(),
        mf.fit.iterations,
        mf.fit.converged
    );
    let mut body = String::from("index,coefficient\n");
    for (j, b) in mf.fit.beta.iter().enumerate() {
        body.push_str(&format!("{},{b:.16e}\n", j + 1));
    }
    write_or_print(args.out.as_deref(), &body)
}

fn precision(args: PrecisionArgs) -> Result<()> {
    let data = load(&args.data)?;
    let a_n = match args.screen_size {
        Some(a) => a,
        None => {
            let reestimate = data.noise().kind() == NoiseKind::Missing;
            let (train, test) = train_test_split(&data, DEFAULT_TEST_FRACTION, reestimate)?;
            let (a, _) = tune_neighborhood_size(&train, &test, args.radius)?;
            eprintln!("tuned screen size {a}");
            a
        }
    };
    let est = estimate_precision(&data, a_n, args.radius)?;
    if !est.negative_residual.is_empty() {
        eprintln!("warning: residual variance floored for columns {:?}", est.negative_residual.iter().map(|j| j + 1).collect::<Vec<_>>());
    }
    io::write_matrix(&args.out, &est.theta)?;
    if let Some(path) = &args.diagnostics {
        io::write_precision_diagnostics(path, &est)?;
    }
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<bool> {
    let mut spec: GridSpec = match (&args.config, args.preset) {
        (Some(path), _) => io::read_config(path)?,
        (None, Some(Preset::GridNp)) => GridSpec::sample_size_by_dimension(noise_kind(args.noise)),
        (None, Some(Preset::GridN)) => GridSpec::sample_size_sweep(noise_kind(args.noise)),
        (None, None) => unreachable!("clap requires --config or --preset"),
    };
    if let Some(seed) = args.seed {
        spec.base_seed = seed;
    }
    if let Some(r) = args.replicates {
        spec.replicates = r;
    }
    let records = harness::run_grid(&spec, args.workers)?;
    harness::emit_results(&records, &args.out, EmitOptions { no_timing: args.no_timing })?;
    if args.save_coefs {
        harness::emit_coefficients(&records, sibling(&args.out, ".coefs.csv"))?;
    }
    let mut clean = true;
    for (i, r) in records.iter().enumerate() {
        if let Some(e) = &r.error {
            clean = false;
            eprintln!("row {}: n={} p={} s={} {}: {e}", i + 1, r.n, r.p, r.s, r.method);
        }
    }
    Ok(clean || !args.strict)
}

fn tune(args: TuneArgs) -> Result<()> {
    let data = load(&args.data)?;
    let method = Method::from(args.method);
    let cv = harness::tune_curve(&data, method, args.test_fraction, args.radius)?;
    let mut body = String::from("value,loss\n");
    for (v, l) in cv.grid.iter().zip(&cv.losses) {
        let loss = if l.is_finite() { format!("{l:.16e}") } else { "NA".into() };
        body.push_str(&format!("{v},{loss}\n"));
    }
    eprintln!("best {}", cv.best);
    write_or_print(args.out.as_deref(), &body)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Fit(a) => fit(a).map(|_| true),
        Command::Precision(a) => precision(a).map(|_| true),
        Command::Experiment(a) => experiment(a),
        Command::Tune(a) => tune(a).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
