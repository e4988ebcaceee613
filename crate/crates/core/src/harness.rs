//! Metrics, experiment grids and result files.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    cross_validate, lasso_fit, penalty_grid, post_cls_fit_constrained, screen_size_grid, train_test_split, CvOutcome,
    FitRule, DEFAULT_TEST_FRACTION,
};
use crate::fit::FitResult;
use crate::linalg;
use crate::moments::{corrected_moments, NoiseKind, SurrogateDataset};
use crate::selection::{self, cs_screen, SolverOptions};
use crate::simulation::{derive_seed, gen_regression, SimConfig};

/// Fixed header of the results file.
pub const RESULTS_HEADER: &str = "scenario,n,p,s,noise,method,seed,tuning,ree,fp,tpr,wall_s";

/// Cover-size constant `D` in the rate function.
pub const COVER_CONSTANT: f64 = 100.0;

/// `‖β̂ − β₀‖₂ / ‖β₀‖₂`.
pub fn ree(beta_hat: &DVector<f64>, beta0: &DVector<f64>) -> Result<f64> {
    if beta_hat.len() != beta0.len() {
        return Err(Error::DimensionMismatch {
            context: "coefficient length",
            expected: beta0.len(),
            found: beta_hat.len(),
        });
    }
    let denom = beta0.norm();
    if denom == 0.0 {
        return Err(Error::invalid("relative error undefined for a zero coefficient vector"));
    }
    Ok((beta_hat - beta0).norm() / denom)
}

/// `|T̂ − T|`.
pub fn false_positives(selected: &[usize], truth: &[usize]) -> usize {
    let truth: BTreeSet<usize> = truth.iter().copied().collect();
    selected.iter().collect::<BTreeSet<_>>().into_iter().filter(|j| !truth.contains(j)).count()
}

/// `|T̂ ∩ T| / |T|`, or 1 for an empty truth.
pub fn true_positive_rate(selected: &[usize], truth: &[usize]) -> f64 {
    let truth: BTreeSet<usize> = truth.iter().copied().collect();
    if truth.is_empty() {
        return 1.0;
    }
    let sel: BTreeSet<usize> = selected.iter().copied().collect();
    sel.intersection(&truth).count() as f64 / truth.len() as f64
}

/// Largest column ℓ2 norm of `A − B`.
pub fn column_norm_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            context: "matrix shape",
            expected: a.nrows() * a.ncols(),
            found: b.nrows() * b.ncols(),
        });
    }
    Ok((a - b).column_iter().map(|c| c.norm()).fold(0.0, f64::max))
}

/// `√(m log p / n) + √((m+s) log D / n) + √((m + s + log(1/c₃)) / n)`, `D = 100`.
pub fn rate_bound_en(m: usize, s: usize, p: usize, n: usize, c3: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n must be positive"));
    }
    if !(c3 > 0.0 && c3 <= 1.0) {
        return Err(Error::invalid("c3 must lie in (0, 1]"));
    }
    let n = n as f64;
    let (m, s) = (m as f64, s as f64);
    let log_p = (p.max(1) as f64).ln();
    Ok((m * log_p / n).sqrt()
        + ((m + s) * COVER_CONSTANT.ln() / n).sqrt()
        + ((m + s + (1.0 / c3).ln()) / n).sqrt())
}

/// Estimators compared in an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    /// Correlation screening followed by the corrected refit.
    #[serde(rename = "cs_post")]
    CsPost,
    #[serde(rename = "l1cls")]
    L1Cls,
    #[serde(rename = "lasso")]
    Lasso,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(match self {
            Method::CsPost => "CS+post",
            Method::L1Cls => "L1CLS",
            Method::Lasso => "Lasso",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cs_post" | "cs+post" | "cs" | "post" => Ok(Method::CsPost),
            "l1cls" | "l1-cls" | "l1_cls" => Ok(Method::L1Cls),
            "lasso" => Ok(Method::Lasso),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub scenario: String,
    #[serde(deserialize_with = "one_or_many")]
    pub n_values: Vec<usize>,
    #[serde(deserialize_with = "one_or_many")]
    pub p_values: Vec<usize>,
    #[serde(deserialize_with = "one_or_many")]
    pub s_values: Vec<usize>,
    pub noise_kind: NoiseKind,
    pub replicates: usize,
    pub base_seed: u64,
    #[serde(deserialize_with = "one_or_many")]
    pub methods: Vec<Method>,
    pub sigma_eps: f64,
    pub ar_phi: f64,
    pub c_w: f64,
    pub rho_range: (f64, f64),
    pub c_x: f64,
    pub test_fraction: f64,
    /// ℓ1-ball radius as a multiple of `‖β₀‖₁`.
    pub radius_factor: f64,
}

fn one_or_many<'de, D, T>(de: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

impl Default for GridSpec {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            scenario: "grid".into(),
            n_values: vec![200],
            p_values: vec![100],
            s_values: vec![4],
            noise_kind: NoiseKind::Additive,
            replicates: 1,
            base_seed: 0,
            methods: vec![Method::CsPost, Method::L1Cls, Method::Lasso],
            sigma_eps: sim.sigma_eps,
            ar_phi: sim.ar_phi,
            c_w: sim.c_w,
            rho_range: sim.rho_range,
            c_x: sim.c_x,
            test_fraction: DEFAULT_TEST_FRACTION,
            radius_factor: 1.1,
        }
    }
}

impl GridSpec {
    /// `n ∈ {100, 140, …, 500}`, `p ∈ {100, 165, …, 490}`, `s ∈ {4, 8}`.
    pub fn sample_size_by_dimension(noise_kind: NoiseKind) -> Self {
        Self {
            scenario: format!("{noise_kind}-grid-np"),
            n_values: (100..=500).step_by(40).collect(),
            p_values: (100..=500).step_by(65).collect(),
            s_values: vec![4, 8],
            noise_kind,
            ..Self::default()
        }
    }

    /// `p = 750`, `s = 4`, `n ∈ {50, 55, …, 500}`.
    pub fn sample_size_sweep(noise_kind: NoiseKind) -> Self {
        Self {
            scenario: format!("{noise_kind}-grid-n"),
            n_values: (50..=500).step_by(5).collect(),
            p_values: vec![750],
            s_values: vec![4],
            noise_kind,
            ..Self::default()
        }
    }

    pub fn cell_count(&self) -> usize {
        self.n_values.len() * self.p_values.len() * self.s_values.len() * self.replicates
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() || self.p_values.is_empty() || self.s_values.is_empty() {
            return Err(Error::invalid("grid value lists must be nonempty"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method is required"));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("replicates must be positive"));
        }
        let all = self.n_values.iter().chain(&self.p_values).chain(&self.s_values);
        if all.copied().any(|v| v == 0) {
            return Err(Error::invalid("grid values must be positive"));
        }
        if !(self.radius_factor > 0.0) {
            return Err(Error::invalid("radius_factor must be positive"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::invalid("test_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    fn sim_config(&self, n: usize, p: usize, s: usize, seed: u64) -> SimConfig {
        SimConfig {
            n,
            p,
            s,
            noise_kind: self.noise_kind,
            sigma_eps: self.sigma_eps,
            ar_phi: self.ar_phi,
            c_w: self.c_w,
            rho_range: self.rho_range,
            c_x: self.c_x,
            seed,
        }
    }
}

/// One fitted model in one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub scenario: String,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub noise_kind: NoiseKind,
    pub method: Method,
    pub seed: u64,
    pub tuning_value: f64,
    pub ree: f64,
    pub false_positives: usize,
    pub true_positive_rate: f64,
    pub wall_time_s: f64,
    pub beta_hat: Vec<f64>,
    pub beta0: Vec<f64>,
    /// Set when the cell failed; metric fields are then meaningless.
    pub error: Option<String>,
}

/// Outcome of one tuned method on one data set.
#[derive(Debug, Clone)]
pub struct MethodFit {
    pub tuning_value: f64,
    pub fit: FitResult,
    /// Nonzero coefficients of the final estimate, used for false-positive
    /// accounting.
    pub selected: Vec<usize>,
    /// Screened set for CS+post, the estimated support otherwise.
    pub screened: Vec<usize>,
}

fn nonzero(beta: &DVector<f64>) -> Vec<usize> {
    selection::support(beta, selection::default_support_tol(beta))
}

fn rule_for(method: Method, opts: SolverOptions) -> FitRule {
    match method {
        Method::CsPost => FitRule::ConstrainedScreenRefit(opts),
        Method::L1Cls => FitRule::L1Cls(opts),
        Method::Lasso => FitRule::Lasso(opts),
    }
}

/// Cross-validation curve of `method` over its default grid, using the
/// trailing `test_fraction` of rows as the test set.
pub fn tune_curve(data: &SurrogateDataset, method: Method, test_fraction: f64, radius: f64) -> Result<CvOutcome> {
    let opts = SolverOptions::new(radius, 0.0);
    let reestimate = data.noise().kind() == NoiseKind::Missing;
    let (train, test) = train_test_split(data, test_fraction, reestimate)?;
    let grid = match method {
        Method::CsPost => screen_size_grid(train.n(), data.p()),
        Method::L1Cls | Method::Lasso => penalty_grid(),
    };
    cross_validate(&train, &test, &grid, &rule_for(method, opts))
}

/// Fits `method` on all rows at a given tuning value. The CS+post refit is
/// held to the same ℓ1 ball as the penalized methods.
pub fn fit_at(data: &SurrogateDataset, method: Method, value: f64, radius: f64) -> Result<MethodFit> {
    let opts = SolverOptions::new(radius, 0.0);
    match method {
        Method::CsPost => {
            let a_n = value.round();
            if !(a_n >= 1.0) {
                return Err(Error::invalid(format!("screen size must be at least 1, got {value}")));
            }
            let m = corrected_moments(data)?;
            let sel = cs_screen(m.gamma_vec(), a_n as usize)?;
            let fit = post_cls_fit_constrained(&m, &sel.support, &opts)?;
            Ok(MethodFit {
                tuning_value: a_n,
                selected: nonzero(&fit.beta),
                screened: sel.support,
                fit,
            })
        }
        Method::L1Cls | Method::Lasso => {
            let fit = if method == Method::L1Cls {
                selection::l1_cls_fit(&corrected_moments(data)?, &opts.with_lambda(value))?
            } else {
                lasso_fit(data, value, &opts)?
            };
            Ok(MethodFit {
                tuning_value: value,
                selected: nonzero(&fit.beta),
                screened: fit.support_used.clone(),
                fit,
            })
        }
    }
}

/// Tunes `method` by cross-validation, then refits on all rows.
pub fn fit_tuned(data: &SurrogateDataset, method: Method, test_fraction: f64, radius: f64) -> Result<MethodFit> {
    let cv = tune_curve(data, method, test_fraction, radius)?;
    fit_at(data, method, cv.best, radius)
}

fn run_cell(spec: &GridSpec, n: usize, p: usize, s: usize, rep: usize) -> Vec<ExperimentRecord> {
    let seed = derive_seed(spec.base_seed, &format!("cell/{n}/{p}/{s}/{rep}"));
    let blank = |method: Method, error: String| ExperimentRecord {
        scenario: spec.scenario.clone(),
        n,
        p,
        s,
        noise_kind: spec.noise_kind,
        method,
        seed,
        tuning_value: f64::NAN,
        ree: f64::NAN,
        false_positives: 0,
        true_positive_rate: f64::NAN,
        wall_time_s: 0.0,
        beta_hat: Vec::new(),
        beta0: Vec::new(),
        error: Some(error),
    };
    let sim = match gen_regression(&spec.sim_config(n, p, s, seed)) {
        Ok(sim) => sim,
        Err(e) => return spec.methods.iter().map(|&m| blank(m, e.to_string())).collect(),
    };
    let radius = spec.radius_factor * linalg::l1_norm(&sim.beta0);
    spec.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let outcome = fit_tuned(&sim.data, method, spec.test_fraction, radius)
                .and_then(|mf| ree(&mf.fit.beta, &sim.beta0).map(|r| (mf, r)));
            let elapsed = start.elapsed().as_secs_f64();
            match outcome {
                Ok((mf, r)) => ExperimentRecord {
                    scenario: spec.scenario.clone(),
                    n,
                    p,
                    s,
                    noise_kind: spec.noise_kind,
                    method,
                    seed,
                    tuning_value: mf.tuning_value,
                    ree: r,
                    false_positives: false_positives(&mf.selected, &sim.support),
                    true_positive_rate: true_positive_rate(&mf.selected, &sim.support),
                    wall_time_s: elapsed,
                    beta_hat: mf.fit.beta.iter().copied().collect(),
                    beta0: sim.beta0.iter().copied().collect(),
                    error: None,
                },
                Err(e) => blank(method, e.to_string()),
            }
        })
        .collect()
}

/// Runs every `(n, p, s, replicate)` cell on a pool of `workers` threads.
/// Records come back in lexicographic cell order, methods in spec order,
/// whatever the scheduling. Failed cells become error records.
pub fn run_grid(spec: &GridSpec, workers: usize) -> Result<Vec<ExperimentRecord>> {
    spec.validate()?;
    let mut cells = Vec::with_capacity(spec.cell_count());
    for &n in &spec.n_values {
        for &p in &spec.p_values {
            for &s in &spec.s_values {
                for rep in 0..spec.replicates {
                    cells.push((n, p, s, rep));
                }
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
    let per_cell: Vec<Vec<ExperimentRecord>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(n, p, s, rep)| run_cell(spec, n, p, s, rep))
            .collect()
    });
    Ok(per_cell.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EmitOptions {
    /// Write zero wall times so that output is reproducible byte for byte.
    pub no_timing: bool,
}

fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "NA".to_string()
    }
}

/// Renders records as the results CSV.
pub fn render_results(records: &[ExperimentRecord], opts: EmitOptions) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in records {
        let wall = if opts.no_timing { 0.0 } else { r.wall_time_s };
        let (tuning, ree, fp, tpr) = if r.error.is_some() {
            ("NA".to_string(), "NA".to_string(), "NA".to_string(), "NA".to_string())
        } else {
            (
                fmt_float(r.tuning_value),
                fmt_float(r.ree),
                r.false_positives.to_string(),
                fmt_float(r.true_positive_rate),
            )
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.scenario,
            r.n,
            r.p,
            r.s,
            r.noise_kind,
            r.method,
            r.seed,
            tuning,
            ree,
            fp,
            tpr,
            fmt_float(wall)
        ));
    }
    out
}

pub fn emit_results(records: &[ExperimentRecord], path: impl AsRef<Path>, opts: EmitOptions) -> Result<()> {
    let path = path.as_ref();
    let mut file = crate::io::create(path)?;
    file.write_all(render_results(records, opts).as_bytes())
        .and_then(|_| file.flush())
        .map_err(|e| Error::io(path, e))
}

/// Coefficient sidecar: for every results row (1-based, matching the data
/// lines of the results file) one `beta0` line and one `beta_hat` line.
pub fn emit_coefficients(records: &[ExperimentRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut body = String::from("row,kind,values\n");
    for (i, r) in records.iter().enumerate() {
        for (kind, values) in [("beta0", &r.beta0), ("beta_hat", &r.beta_hat)] {
            let joined: Vec<String> = values.iter().map(|v| format!("{v:.16e}")).collect();
            body.push_str(&format!("{},{},{}\n", i + 1, kind, joined.join(";")));
        }
    }
    let mut file = crate::io::create(path)?;
    file.write_all(body.as_bytes())
        .and_then(|_| file.flush())
        .map_err(|e| Error::io(path, e))
}

/// `(row, beta0, beta_hat)` as stored in the coefficient sidecar.
pub type CoefficientRow = (usize, Vec<f64>, Vec<f64>);

/// Parses a sidecar written by [`emit_coefficients`].
pub fn read_coefficients(path: impl AsRef<Path>) -> Result<Vec<CoefficientRow>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Parse {
        path: path.to_path_buf(),
        message: msg.to_string(),
    };
    let mut out: Vec<CoefficientRow> = Vec::new();
    for line in text.lines().skip(1) {
        let mut parts = line.splitn(3, ',');
        let row: usize = parts.next().and_then(|r| r.parse().ok()).ok_or_else(|| bad("bad row index"))?;
        let kind = parts.next().ok_or_else(|| bad("missing kind"))?;
        let values: Vec<f64> = match parts.next() {
            Some("") | None => Vec::new(),
            Some(v) => v
                .split(';')
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("bad coefficient"))?,
        };
        match kind {
            "beta0" => out.push((row, values, Vec::new())),
            "beta_hat" => match out.last_mut() {
                Some(last) if last.0 == row => last.2 = values,
                _ => return Err(bad("beta_hat without beta0")),
            },
            _ => return Err(bad("unknown kind")),
        }
    }
    Ok(out)
}
