//! Delimited text formats.
//!
//! Datasets are comma-separated with a header row. A column named `y` holds
//! the response; every other column is a covariate, in file order. Missing
//! covariate entries are written as the literal token `NA`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::moments::{NoiseModel, SurrogateDataset};
use crate::precision::PrecisionEstimate;

pub const MISSING_TOKEN: &str = "NA";
pub const RESPONSE_COLUMN: &str = "y";

/// How to interpret a table read from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseSpec {
    Additive { sigma_w: DMatrix<f64> },
    /// Rates estimated from the observed-entry frequencies.
    Missing,
    MissingWithRates { rho: DVector<f64> },
}

/// A parsed table before a noise model is attached.
#[derive(Debug, Clone)]
pub struct Table {
    pub columns: Vec<String>,
    /// Covariates, `0.0` at missing entries.
    pub z: DMatrix<f64>,
    pub mask: DMatrix<bool>,
    pub y: Option<DVector<f64>>,
}

impl Table {
    pub fn has_missing(&self) -> bool {
        self.mask.iter().any(|&b| !b)
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn read_table(path: impl AsRef<Path>) -> Result<Table> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let y_col = header.iter().position(|h| h == RESPONSE_COLUMN);
    if header.iter().filter(|h| *h == RESPONSE_COLUMN).count() > 1 {
        return Err(parse_err(path, "more than one `y` column"));
    }
    let z_cols: Vec<usize> = (0..header.len()).filter(|&c| Some(c) != y_col).collect();
    if z_cols.is_empty() {
        return Err(parse_err(path, "no covariate columns"));
    }

    let mut values = Vec::new();
    let mut observed = Vec::new();
    let mut ys = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(path, format!("row {} has {} fields, expected {}", line + 2, record.len(), header.len())));
        }
        for &c in &z_cols {
            let field = &record[c];
            if field == MISSING_TOKEN {
                values.push(0.0);
                observed.push(false);
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_err(path, format!("row {}: cannot parse `{field}`", line + 2)))?;
                values.push(v);
                observed.push(true);
            }
        }
        if let Some(c) = y_col {
            let field = &record[c];
            let v: f64 = field.parse().map_err(|_| {
                parse_err(path, format!("row {}: response `{field}` is not a number", line + 2))
            })?;
            ys.push(v);
        }
    }
    let n = observed.len() / z_cols.len();
    if n == 0 {
        return Err(parse_err(path, "no data rows"));
    }
    Ok(Table {
        columns: z_cols.iter().map(|&c| header[c].clone()).collect(),
        z: DMatrix::from_row_slice(n, z_cols.len(), &values),
        mask: DMatrix::from_row_slice(n, z_cols.len(), &observed),
        y: y_col.map(|_| DVector::from_vec(ys)),
    })
}

pub fn read_dataset(path: impl AsRef<Path>, noise: NoiseSpec) -> Result<SurrogateDataset> {
    let path = path.as_ref();
    let table = read_table(path)?;
    match noise {
        NoiseSpec::Additive { sigma_w } => {
            if table.has_missing() {
                return Err(parse_err(path, "`NA` entries cannot be combined with additive noise"));
            }
            SurrogateDataset::additive(table.z, table.y, sigma_w)
        }
        NoiseSpec::Missing => SurrogateDataset::missing(table.z, table.mask, table.y),
        NoiseSpec::MissingWithRates { rho } => {
            SurrogateDataset::missing_with_rates(table.z, table.mask, table.y, rho)
        }
    }
}

pub fn write_dataset(path: impl AsRef<Path>, data: &SurrogateDataset) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let p = data.p();
    let mut header: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
    if data.y().is_some() {
        header.push(RESPONSE_COLUMN.to_string());
    }
    let mut body = header.join(",");
    body.push('\n');
    for i in 0..data.n() {
        let mut fields = Vec::with_capacity(p + 1);
        for j in 0..p {
            let observed = data.mask().is_none_or(|m| m[(i, j)]);
            fields.push(if observed {
                data.z()[(i, j)].to_string()
            } else {
                MISSING_TOKEN.to_string()
            });
        }
        if let Some(y) = data.y() {
            fields.push(y[i].to_string());
        }
        body.push_str(&fields.join(","));
        body.push('\n');
    }
    out.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a numeric matrix, one row per line, comma-separated. A first line
/// that does not parse as numbers is treated as a header and skipped.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if line == 0 => continue,
            Err(_) => return Err(parse_err(path, format!("row {}: not numeric", line + 1))),
        }
    }
    let ncols = rows.first().map(Vec::len).ok_or_else(|| parse_err(path, "empty matrix"))?;
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(parse_err(path, "ragged matrix rows"));
    }
    let flat: Vec<f64> = rows.concat();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

pub fn write_matrix(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let mut body = String::new();
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        body.push_str(&fields.join(","));
        body.push('\n');
    }
    out.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// One row per column: 1-based index, `|T̂_j|`, `d̂_j`, fallback flag.
pub fn write_precision_diagnostics(path: impl AsRef<Path>, est: &PrecisionEstimate) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    let mut body = String::from("column,support_size,d,fallback\n");
    for (j, fit) in est.neighborhoods.iter().enumerate() {
        body.push_str(&format!(
            "{},{},{},{}\n",
            j + 1,
            fit.support.len(),
            est.d[j],
            fit.fallback_used
        ));
    }
    out.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a configuration document into `T`.
///
/// JSON objects are accepted as is. Anything else is read as flat
/// `key = value` lines, `#` starting a comment. A value is taken as JSON when
/// it parses as JSON, as a list when it contains commas, and as a bare string
/// otherwise. Keys absent from the document keep their defaults.
pub fn read_config<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|message| parse_err(path, message))
}

pub fn parse_config<T: DeserializeOwned>(text: &str) -> std::result::Result<T, String> {
    if text.trim_start().starts_with('{') {
        return serde_json::from_str(text).map_err(|e| e.to_string());
    }
    let mut map = serde_json::Map::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        map.insert(key.trim().to_string(), config_value(value.trim()));
    }
    serde_json::from_value(Value::Object(map)).map_err(|e| e.to_string())
}

fn config_value(raw: &str) -> Value {
    if let Ok(v) = serde_json::from_str::<Value>(raw) {
        return v;
    }
    if raw.contains(',') {
        return Value::Array(raw.split(',').map(|item| config_value(item.trim())).collect());
    }
    Value::String(raw.to_string())
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Extracts the missing rates of a dataset, if any.
pub fn rates_of(data: &SurrogateDataset) -> Option<&DVector<f64>> {
    match data.noise() {
        NoiseModel::Missing { rho } => Some(rho),
        NoiseModel::Additive { .. } => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn reads_na_tokens_as_missing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "a,y,b\n1.5,2,NA\nNA,3,4\n0.5,-1,2\n").unwrap();
        let data = read_dataset(&path, NoiseSpec::Missing).unwrap();
        assert_eq!(data.n(), 3);
        assert_eq!(data.p(), 2);
        assert_eq!(data.y().unwrap().as_slice(), &[2.0, 3.0, -1.0]);
        assert_eq!(data.z()[(1, 0)], 0.0);
        assert!(!data.mask().unwrap()[(0, 1)]);
        let rho = rates_of(&data).unwrap();
        assert!((rho[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn additive_rejects_na() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "a,y\nNA,1\n2,3\n").unwrap();
        let err = read_dataset(&path, NoiseSpec::Additive { sigma_w: DMatrix::zeros(1, 1) }).unwrap_err();
        assert!(err.to_string().contains("additive"));
    }

    #[test]
    fn bad_number_reports_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "a,y\n1,2\nfoo,3\n").unwrap();
        let err = read_table(&path).unwrap_err();
        assert!(err.to_string().contains("row 3"), "{err}");
    }

    #[test]
    fn dataset_round_trips_through_text() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let z = DMatrix::from_row_slice(3, 2, &[0.1, 1.0 / 3.0, -2.5, 0.0, 1e-17, 7.0]);
        let mask = DMatrix::from_row_slice(3, 2, &[true, true, true, false, true, true]);
        let y = DVector::from_vec(vec![1.0, std::f64::consts::PI, -0.0]);
        let data = SurrogateDataset::missing(z, mask, Some(y)).unwrap();
        write_dataset(&path, &data).unwrap();
        let back = read_dataset(&path, NoiseSpec::Missing).unwrap();
        assert_eq!(back.z(), data.z());
        assert_eq!(back.mask(), data.mask());
        assert_eq!(back.y(), data.y());
    }

    #[test]
    fn flat_config_matches_json() {
        use crate::simulation::SimConfig;
        let flat: SimConfig = parse_config("n = 50\n# comment\np = 20\nnoise_kind = missing\nrho_range = 0.1, 0.2\n").unwrap();
        let json: SimConfig =
            parse_config(r#"{"n": 50, "p": 20, "noise_kind": "missing", "rho_range": [0.1, 0.2]}"#).unwrap();
        assert_eq!(flat, json);
        assert_eq!(flat.s, SimConfig::default().s);
        assert!(parse_config::<SimConfig>("n 50").is_err());
    }

    #[test]
    fn matrix_round_trip_with_optional_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 2, &[0.25, 0.125, 0.125, 0.25]);
        write_matrix(&path, &m).unwrap();
        assert_eq!(read_matrix(&path).unwrap(), m);
        fs::write(&path, "c1,c2\n1,2\n3,4\n").unwrap();
        assert_eq!(read_matrix(&path).unwrap(), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    }
}
