//! Partially observed time-series panels: CSV ingestion, simulated sparsity
//! and synthetic generators with known ground truth.
//!
//! A panel is an `m × q` grid (rows are time steps, columns are variables)
//! with a per-cell observation mask. Missing cells hold `NaN` and are never
//! read through the public accessors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{Months, NaiveDate, NaiveDateTime};
use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{normal, rng};

/// Measurement scale of a column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    /// Values drawn from a finite, strictly increasing level set.
    Ordinal {
        levels: Vec<f64>,
    },
}

impl ColumnKind {
    /// Ordinal column with levels `1..=k`.
    pub fn ordinal(k: usize) -> Self {
        ColumnKind::Ordinal {
            levels: (1..=k).map(|l| l as f64).collect(),
        }
    }

    pub fn is_ordinal(&self) -> bool {
        matches!(self, ColumnKind::Ordinal { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

/// Column declaration for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<ColumnSpec>,
    /// Tokens other than the empty string that denote a missing cell.
    #[serde(default = "default_missing_tokens")]
    pub missing_tokens: Vec<String>,
}

fn default_missing_tokens() -> Vec<String> {
    vec!["NA".to_string()]
}

impl Schema {
    pub fn continuous<S: AsRef<str>>(names: &[S]) -> Self {
        Schema {
            columns: names
                .iter()
                .map(|n| ColumnSpec {
                    name: n.as_ref().to_string(),
                    kind: ColumnKind::Continuous,
                })
                .collect(),
            missing_tokens: default_missing_tokens(),
        }
    }

    fn is_missing(&self, token: &str) -> bool {
        token.is_empty() || self.missing_tokens.iter().any(|t| t == token)
    }
}

/// A time-indexed panel with a per-cell observation mask.
#[derive(Debug, Clone)]
pub struct ObservationMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
    kinds: Vec<ColumnKind>,
    names: Vec<String>,
    time_index: Vec<NaiveDateTime>,
}

impl PartialEq for ObservationMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.mask == other.mask
            && self.kinds == other.kinds
            && self.names == other.names
            && self.time_index == other.time_index
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.mask)
                .all(|((a, b), &seen)| !seen || a.to_bits() == b.to_bits())
    }
}

impl ObservationMatrix {
    /// Builds a panel from row-major values and mask. Values at unobserved
    /// cells are discarded.
    pub fn new(
        values: Vec<f64>,
        mask: Vec<bool>,
        kinds: Vec<ColumnKind>,
        names: Vec<String>,
        time_index: Vec<NaiveDateTime>,
    ) -> Result<Self> {
        let rows = time_index.len();
        let cols = names.len();
        if rows == 0 || cols == 0 {
            return Err(Error::Empty("panel needs at least one row and one column".into()));
        }
        if kinds.len() != cols {
            return Err(Error::LengthMismatch(format!(
                "{} column kinds for {cols} columns",
                kinds.len()
            )));
        }
        if values.len() != rows * cols || mask.len() != rows * cols {
            return Err(Error::LengthMismatch(format!(
                "expected {} cells, got {} values and {} mask entries",
                rows * cols,
                values.len(),
                mask.len()
            )));
        }
        if let Some(i) = time_index.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::Timestamp {
                line: i + 3,
                reason: "time index is not strictly increasing".into(),
            });
        }
        for (j, kind) in kinds.iter().enumerate() {
            if let ColumnKind::Ordinal { levels } = kind {
                if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Schema(format!(
                        "ordinal levels of '{}' must be non-empty and strictly increasing",
                        names[j]
                    )));
                }
            }
        }
        let mut values = values;
        for (idx, v) in values.iter_mut().enumerate() {
            if !mask[idx] {
                *v = f64::NAN;
                continue;
            }
            let j = idx % cols;
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite observed value at row {}, column '{}'",
                    idx / cols,
                    names[j]
                )));
            }
            if let ColumnKind::Ordinal { levels } = &kinds[j] {
                if !levels.contains(v) {
                    return Err(Error::UnknownLevel {
                        line: idx / cols + 2,
                        column: names[j].clone(),
                        token: v.to_string(),
                    });
                }
            }
        }
        Ok(ObservationMatrix {
            rows,
            cols,
            values,
            mask,
            kinds,
            names,
            time_index,
        })
    }

    /// Fully observed continuous panel from a dense matrix, with a monthly
    /// index starting January 2000.
    pub fn from_dense(data: &DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let (rows, cols) = data.shape();
        let values = (0..rows).flat_map(|i| (0..cols).map(move |j| data[(i, j)])).collect();
        ObservationMatrix::new(
            values,
            vec![true; rows * cols],
            vec![ColumnKind::Continuous; cols],
            names,
            monthly_index(2000, rows),
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn time_index(&self) -> &[NaiveDateTime] {
        &self.time_index
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// The value at `(i, j)` if observed.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let idx = i * self.cols + j;
        self.mask[idx].then(|| self.values[idx])
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.cols + j]
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// Observed values of column `j`, in row order.
    pub fn observed_column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).filter_map(|i| self.get(i, j)).collect()
    }

    /// Column `j` of a complete panel.
    pub fn column(&self, j: usize) -> Result<Vec<f64>> {
        (0..self.rows)
            .map(|i| {
                self.get(i, j).ok_or_else(|| {
                    Error::Precondition(format!("column '{}' has a missing cell at row {i}", self.names[j]))
                })
            })
            .collect()
    }

    /// The panel as a dense `rows × cols` matrix; every cell must be observed.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if let Some(idx) = self.mask.iter().position(|&m| !m) {
            return Err(Error::Precondition(format!(
                "panel has a missing cell at row {}, column '{}'",
                idx / self.cols,
                self.names[idx % self.cols]
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.values))
    }

    /// Marks the cell observed with value `v`.
    pub(crate) fn set(&mut self, i: usize, j: usize, v: f64) {
        let idx = i * self.cols + j;
        self.values[idx] = v;
        self.mask[idx] = true;
    }

    /// Marks the cell missing.
    pub fn erase(&mut self, i: usize, j: usize) {
        let idx = i * self.cols + j;
        self.values[idx] = f64::NAN;
        self.mask[idx] = false;
    }

    /// Keeps only the first `n` rows.
    pub fn head(&self, n: usize) -> Result<Self> {
        let n = n.min(self.rows);
        ObservationMatrix::new(
            self.values[..n * self.cols].to_vec(),
            self.mask[..n * self.cols].to_vec(),
            self.kinds.clone(),
            self.names.clone(),
            self.time_index[..n].to_vec(),
        )
    }

    pub fn schema(&self) -> Schema {
        Schema {
            columns: self
                .names
                .iter()
                .zip(&self.kinds)
                .map(|(name, kind)| ColumnSpec {
                    name: name.clone(),
                    kind: kind.clone(),
                })
                .collect(),
            missing_tokens: default_missing_tokens(),
        }
    }

    /// Writes the panel as CSV. Missing cells become empty fields.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.cols + 1);
        for i in 0..self.rows {
            record.clear();
            record.push(format_timestamp(&self.time_index[i]));
            for j in 0..self.cols {
                record.push(self.get(i, j).map(|v| v.to_string()).unwrap_or_default());
            }
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(BufWriter::new(file))
    }
}

/// `n` consecutive month starts beginning January of `year`.
pub fn monthly_index(year: i32, n: usize) -> Vec<NaiveDateTime> {
    let start = NaiveDate::from_ymd_opt(year, 1, 1)
        .expect("valid year")
        .and_hms_opt(0, 0, 0)
        .expect("midnight");
    (0..n).map(|i| start + Months::new(i as u32)).collect()
}

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    if t.time() == chrono::NaiveTime::MIN {
        t.format("%Y-%m-%d").to_string()
    } else {
        t.format("%Y-%m-%dT%H:%M:%S").to_string()
    }
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return d.and_hms_opt(0, 0, 0);
    }
    NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

/// Reads a panel from CSV. The first column is the timestamp; the remaining
/// header names must match the schema in order.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<ObservationMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(Error::Empty("CSV has no header".into())),
    };
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let declared: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
    if names != declared {
        return Err(Error::Schema(format!(
            "header {names:?} does not match declared columns {declared:?}"
        )));
    }
    let cols = names.len();
    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut time_index = Vec::new();
    for (k, rec) in records.enumerate() {
        let rec = rec?;
        let line = k + 2;
        if rec.len() != cols + 1 {
            return Err(Error::Arity {
                line,
                expected: cols + 1,
                found: rec.len(),
            });
        }
        let ts = parse_timestamp(&rec[0]).ok_or_else(|| Error::Timestamp {
            line,
            reason: format!("'{}' is not an ISO-8601 timestamp", &rec[0]),
        })?;
        if time_index.last().is_some_and(|prev| *prev >= ts) {
            return Err(Error::Timestamp {
                line,
                reason: "time index is not strictly increasing".into(),
            });
        }
        time_index.push(ts);
        for (j, spec) in schema.columns.iter().enumerate() {
            let token = rec[j + 1].trim();
            if schema.is_missing(token) {
                values.push(f64::NAN);
                mask.push(false);
                continue;
            }
            let v: f64 = token.parse().map_err(|_| Error::NotNumeric {
                line,
                column: spec.name.clone(),
                token: token.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NotNumeric {
                    line,
                    column: spec.name.clone(),
                    token: token.to_string(),
                });
            }
            if let ColumnKind::Ordinal { levels } = &spec.kind {
                if !levels.contains(&v) {
                    return Err(Error::UnknownLevel {
                        line,
                        column: spec.name.clone(),
                        token: token.to_string(),
                    });
                }
            }
            values.push(v);
            mask.push(true);
        }
    }
    if time_index.is_empty() {
        return Err(Error::Empty("CSV has a header but no data rows".into()));
    }
    ObservationMatrix::new(
        values,
        mask,
        schema.columns.iter().map(|c| c.kind.clone()).collect(),
        names,
        time_index,
    )
}

/// Reads a panel from a CSV file.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<ObservationMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(BufReader::new(file), schema)
}

/// Reads a CSV file treating every column as continuous.
pub fn load_csv_continuous(path: &Path) -> Result<ObservationMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let header = match rdr.records().next() {
        Some(h) => h?,
        None => return Err(Error::Empty(format!("{} is empty", path.display()))),
    };
    let names: Vec<&str> = header.iter().skip(1).map(str::trim).collect();
    load_csv(path, &Schema::continuous(&names))
}

/// Cells erased by [`apply_mask`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub seed: u64,
    pub fraction: f64,
    /// `(row, col)` pairs in row-major order.
    #[serde(rename = "cells")]
    pub erased_cells: Vec<(usize, usize)>,
    /// Values the erased cells held, aligned with `erased_cells`.
    #[serde(skip)]
    pub truth: Vec<f64>,
}

/// Erases `round(fraction × observed)` observed cells chosen uniformly
/// without replacement.
pub fn apply_mask(matrix: &ObservationMatrix, fraction: f64, seed: u64) -> Result<(ObservationMatrix, MaskRecord)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidArgument(format!(
            "mask fraction {fraction} outside [0, 1]"
        )));
    }
    let observed: Vec<usize> = (0..matrix.rows * matrix.cols).filter(|&idx| matrix.mask[idx]).collect();
    if observed.is_empty() {
        return Err(Error::Precondition("no observed cells to mask".into()));
    }
    let count = (fraction * observed.len() as f64).round() as usize;
    let mut rng = rng::rng_from_seed(seed);
    let mut picked: Vec<usize> = sample(&mut rng, observed.len(), count)
        .into_iter()
        .map(|k| observed[k])
        .collect();
    picked.sort_unstable();

    let mut out = matrix.clone();
    let mut record = MaskRecord {
        seed,
        fraction,
        erased_cells: Vec::with_capacity(count),
        truth: Vec::with_capacity(count),
    };
    for idx in picked {
        let (i, j) = (idx / matrix.cols, idx % matrix.cols);
        record.truth.push(matrix.values[idx]);
        record.erased_cells.push((i, j));
        out.erase(i, j);
    }
    Ok((out, record))
}

impl MaskRecord {
    /// Restores the ground truth values from the unmasked source panel.
    pub fn attach_truth(&mut self, original: &ObservationMatrix) -> Result<()> {
        self.truth = self
            .erased_cells
            .iter()
            .map(|&(i, j)| {
                original
                    .get(i, j)
                    .ok_or_else(|| Error::Precondition(format!("masked cell ({i}, {j}) missing in source")))
            })
            .collect::<Result<_>>()?;
        Ok(())
    }
}

/// Marginal distribution of a generated column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Normal {
        mean: f64,
        sd: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    Exponential {
        rate: f64,
    },
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    /// Levels `1..=k` with the given probabilities.
    Ordinal {
        probs: Vec<f64>,
    },
}

impl Marginal {
    pub fn standard_normal() -> Self {
        Marginal::Normal { mean: 0.0, sd: 1.0 }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Marginal::Normal { sd, .. } => *sd > 0.0,
            Marginal::Uniform { low, high } => low < high,
            Marginal::Exponential { rate } => *rate > 0.0,
            Marginal::LogNormal { sigma, .. } => *sigma > 0.0,
            Marginal::Ordinal { probs } => {
                !probs.is_empty() && probs.iter().all(|&p| p > 0.0) && (probs.iter().sum::<f64>() - 1.0).abs() < 1e-9
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid marginal {self:?}")))
        }
    }

    fn kind(&self) -> ColumnKind {
        match self {
            Marginal::Ordinal { probs } => ColumnKind::ordinal(probs.len()),
            _ => ColumnKind::Continuous,
        }
    }

    /// Maps a latent standard normal draw to the data scale.
    pub fn from_latent(&self, z: f64) -> f64 {
        match self {
            Marginal::Normal { mean, sd } => mean + sd * z,
            Marginal::Uniform { low, high } => low + (high - low) * normal::cdf(z),
            Marginal::Exponential { rate } => -normal::cdf(-z).ln() / rate,
            Marginal::LogNormal { mu, sigma } => (mu + sigma * z).exp(),
            Marginal::Ordinal { probs } => {
                let u = normal::cdf(z);
                let mut acc = 0.0;
                for (k, p) in probs.iter().enumerate() {
                    acc += p;
                    if u <= acc {
                        return (k + 1) as f64;
                    }
                }
                probs.len() as f64
            }
        }
    }
}

/// Checks that `sigma` is a symmetric unit-diagonal positive definite matrix
/// and returns its lower Cholesky factor.
pub(crate) fn correlation_cholesky(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q = sigma.nrows();
    if q == 0 || sigma.ncols() != q {
        return Err(Error::InvalidArgument("sigma must be a non-empty square matrix".into()));
    }
    for i in 0..q {
        if (sigma[(i, i)] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "sigma diagonal entry {i} is {}, expected 1",
                sigma[(i, i)]
            )));
        }
        for j in 0..i {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 {
                return Err(Error::InvalidArgument("sigma is not symmetric".into()));
            }
        }
    }
    sigma
        .clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))
}

/// Draws `n` fully observed rows from a Gaussian copula with correlation
/// `sigma` and the given marginals.
pub fn gen_copula_sample(
    sigma: &DMatrix<f64>,
    marginals: &[Marginal],
    n: usize,
    seed: u64,
) -> Result<ObservationMatrix> {
    let chol = correlation_cholesky(sigma)?;
    let q = sigma.nrows();
    if marginals.len() != q {
        return Err(Error::LengthMismatch(format!(
            "{} marginals for a {q}×{q} sigma",
            marginals.len()
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    for m in marginals {
        m.validate()?;
    }
    let mut rng = rng::rng_from_seed(seed);
    let mut values = Vec::with_capacity(n * q);
    let mut eps = vec![0.0; q];
    for _ in 0..n {
        for e in eps.iter_mut() {
            *e = StandardNormal.sample(&mut rng);
        }
        for j in 0..q {
            let z: f64 = (0..=j).map(|k| chol[(j, k)] * eps[k]).sum();
            values.push(marginals[j].from_latent(z));
        }
    }
    ObservationMatrix::new(
        values,
        vec![true; n * q],
        marginals.iter().map(Marginal::kind).collect(),
        (1..=q).map(|j| format!("x{j}")).collect(),
        monthly_index(2000, n),
    )
}

/// Parameters of the synthetic monthly load generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeasonalParams {
    pub n_periods: usize,
    pub base: f64,
    pub trend: f64,
    pub seasonal_amp: f64,
    pub noise_sd: f64,
    pub n_features: usize,
    pub start_year: i32,
}

impl Default for SeasonalParams {
    fn default() -> Self {
        SeasonalParams {
            n_periods: 108,
            base: 100.0,
            trend: 0.5,
            seasonal_amp: 20.0,
            noise_sd: 2.0,
            n_features: 12,
            start_year: 2013,
        }
    }
}

pub const SEASON: usize = 12;

impl SeasonalParams {
    /// Noise-free target at period `t` (may be negative).
    pub fn signal(&self, t: i64) -> f64 {
        let phase = t.rem_euclid(SEASON as i64) as f64;
        self.base
            + self.trend * t as f64
            + self.seasonal_amp * (2.0 * std::f64::consts::PI * phase / SEASON as f64).sin()
    }
}

const MAX_FEATURE_LAG: usize = 3;

/// Monthly load panel: a `load` target column followed by `n_features`
/// lagged, scaled and noisy copies of it.
pub fn gen_seasonal_load(params: &SeasonalParams, seed: u64) -> Result<ObservationMatrix> {
    if params.noise_sd < 0.0 || !params.noise_sd.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise_sd must be non-negative, got {}",
            params.noise_sd
        )));
    }
    if params.n_periods < 2 * SEASON {
        return Err(Error::InvalidArgument(format!(
            "need at least {} periods, got {}",
            2 * SEASON,
            params.n_periods
        )));
    }
    if params.n_features == 0 {
        return Err(Error::InvalidArgument("n_features must be at least 1".into()));
    }
    let mut rng = rng::rng_from_seed(seed);
    let mut draw = |sd: f64| -> f64 {
        let e: f64 = StandardNormal.sample(&mut rng);
        sd * e
    };
    let n = params.n_periods;
    // target[k] is period k - MAX_FEATURE_LAG
    let target: Vec<f64> = (0..n + MAX_FEATURE_LAG)
        .map(|k| params.signal(k as i64 - MAX_FEATURE_LAG as i64) + draw(params.noise_sd))
        .collect();
    let q = params.n_features + 1;
    let mut values = Vec::with_capacity(n * q);
    for t in 0..n {
        values.push(target[t + MAX_FEATURE_LAG]);
        for f in 0..params.n_features {
            let lag = f % (MAX_FEATURE_LAG + 1);
            let scale = 0.5 + 0.1 * f as f64;
            let offset = 10.0 * (f % 3) as f64;
            let v = offset + scale * target[t + MAX_FEATURE_LAG - lag] + draw(params.noise_sd);
            values.push(v);
        }
    }
    let mut names = vec!["load".to_string()];
    names.extend((1..=params.n_features).map(|f| format!("f{f:02}")));
    ObservationMatrix::new(
        values,
        vec![true; n * q],
        vec![ColumnKind::Continuous; q],
        names,
        monthly_index(params.start_year, n),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "timestamp,a,b\n2020-01-01,1.5,2\n2020-02-01,,3\n2020-03-01,4,5\n";

    #[test]
    fn parses_missing_cell() {
        let m = read_csv(SMALL.as_bytes(), &Schema::continuous(&["a", "b"])).unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 2));
        assert_eq!(m.observed_count(), 5);
        assert_eq!(m.get(1, 0), None);
        assert_eq!(m.get(0, 0), Some(1.5));
    }

    #[test]
    fn full_csv_has_full_mask() {
        let csv = "timestamp,a\n2020-01-01,1\n2020-02-01,2\n";
        let m = read_csv(csv.as_bytes(), &Schema::continuous(&["a"])).unwrap();
        assert!(m.is_complete());
    }

    #[test]
    fn sentinel_counts_as_missing() {
        let csv = "timestamp,a\n2020-01-01,NA\n2020-02-01,2\n";
        let m = read_csv(csv.as_bytes(), &Schema::continuous(&["a"])).unwrap();
        assert_eq!(m.observed_count(), 1);
    }

    #[test]
    fn wrong_arity_names_line() {
        let csv = "timestamp,a,b\n2020-01-01,1,2\n2020-02-01,3\n";
        let err = read_csv(csv.as_bytes(), &Schema::continuous(&["a", "b"])).unwrap_err();
        assert!(
            matches!(
                err,
                Error::Arity {
                    line: 3,
                    expected: 3,
                    found: 2
                }
            ),
            "{err}"
        );
        assert!(err.to_string().contains("line 3"));
    }

    #[test]
    fn rejects_bad_tokens() {
        let csv = "timestamp,a\n2020-01-01,abc\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &Schema::continuous(&["a"])),
            Err(Error::NotNumeric { .. })
        ));
        let schema = Schema {
            columns: vec![ColumnSpec {
                name: "a".into(),
                kind: ColumnKind::ordinal(3),
            }],
            missing_tokens: vec![],
        };
        let csv = "timestamp,a\n2020-01-01,4\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &schema),
            Err(Error::UnknownLevel { .. })
        ));
        assert!(matches!(read_csv("".as_bytes(), &schema), Err(Error::Empty(_))));
        assert!(matches!(
            read_csv("timestamp,a\n".as_bytes(), &schema),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn rejects_unordered_time() {
        let csv = "timestamp,a\n2020-02-01,1\n2020-01-01,2\n";
        assert!(matches!(
            read_csv(csv.as_bytes(), &Schema::continuous(&["a"])),
            Err(Error::Timestamp { line: 3, .. })
        ));
    }

    #[test]
    fn mask_zero_is_identity() {
        let m = gen_seasonal_load(&SeasonalParams::default(), 1).unwrap();
        let (out, rec) = apply_mask(&m, 0.0, 9).unwrap();
        assert_eq!(out, m);
        assert!(rec.erased_cells.is_empty());
    }

    #[test]
    fn mask_tenth_of_hundred_by_ten() {
        let sigma = DMatrix::identity(10, 10);
        let m = gen_copula_sample(&sigma, &vec![Marginal::standard_normal(); 10], 100, 3).unwrap();
        let (out, rec) = apply_mask(&m, 0.1, 4).unwrap();
        assert_eq!(rec.erased_cells.len(), 100);
        assert_eq!(out.observed_count(), 900);
        for (&(i, j), &v) in rec.erased_cells.iter().zip(&rec.truth) {
            assert!(!out.is_observed(i, j));
            assert_eq!(m.get(i, j), Some(v));
        }
    }

    #[test]
    fn mask_all() {
        let m = read_csv(SMALL.as_bytes(), &Schema::continuous(&["a", "b"])).unwrap();
        let (out, rec) = apply_mask(&m, 1.0, 0).unwrap();
        assert_eq!(out.observed_count(), 0);
        assert_eq!(rec.erased_cells.len(), 5);
        assert!(!rec.erased_cells.contains(&(1, 0)));
    }

    #[test]
    fn mask_rejects_bad_fraction() {
        let m = read_csv(SMALL.as_bytes(), &Schema::continuous(&["a", "b"])).unwrap();
        assert!(matches!(apply_mask(&m, 1.5, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(apply_mask(&m, -0.1, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn mask_record_json_shape() {
        let rec = MaskRecord {
            seed: 3,
            fraction: 0.1,
            erased_cells: vec![(0, 1), (2, 0)],
            truth: vec![1.0, 2.0],
        };
        let s = serde_json::to_string(&rec).unwrap();
        assert_eq!(s, r#"{"seed":3,"fraction":0.1,"cells":[[0,1],[2,0]]}"#);
    }

    #[test]
    fn seasonal_degenerate_is_constant() {
        let p = SeasonalParams {
            trend: 0.0,
            seasonal_amp: 0.0,
            noise_sd: 0.0,
            ..Default::default()
        };
        let m = gen_seasonal_load(&p, 5).unwrap();
        assert!(m.column(0).unwrap().iter().all(|&v| v == 100.0));
    }

    #[test]
    fn seasonal_noiseless_is_periodic() {
        let p = SeasonalParams {
            trend: 0.0,
            noise_sd: 0.0,
            ..Default::default()
        };
        let y = gen_seasonal_load(&p, 5).unwrap().column(0).unwrap();
        for t in 0..y.len() - SEASON {
            assert_eq!(y[t], y[t + SEASON]);
        }
    }

    #[test]
    fn seasonal_year_over_year_step_is_twelve_trends() {
        let p = SeasonalParams {
            noise_sd: 0.0,
            ..Default::default()
        };
        let y = gen_seasonal_load(&p, 5).unwrap().column(0).unwrap();
        for t in 0..y.len() - SEASON {
            assert!((y[t + SEASON] - y[t] - 6.0).abs() < 1e-9);
        }
    }

    #[test]
    fn seasonal_default_shape() {
        let m = gen_seasonal_load(&SeasonalParams::default(), 0).unwrap();
        assert_eq!((m.rows(), m.cols()), (108, 13));
        assert_eq!(format_timestamp(&m.time_index()[0]), "2013-01-01");
        assert_eq!(format_timestamp(&m.time_index()[107]), "2021-12-01");
        let bad = SeasonalParams {
            noise_sd: -1.0,
            ..Default::default()
        };
        assert!(gen_seasonal_load(&bad, 0).is_err());
    }

    #[test]
    fn copula_sample_rejects_bad_sigma() {
        let m = vec![Marginal::standard_normal(); 2];
        let not_pd = DMatrix::from_row_slice(2, 2, &[1.0, 1.2, 1.2, 1.0]);
        assert!(matches!(
            gen_copula_sample(&not_pd, &m, 10, 0),
            Err(Error::NotPositiveDefinite(_))
        ));
        let bad_diag = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            gen_copula_sample(&bad_diag, &m, 10, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn copula_sample_univariate() {
        let sigma = DMatrix::identity(1, 1);
        let m = gen_copula_sample(&sigma, &[Marginal::Exponential { rate: 2.0 }], 4000, 1).unwrap();
        let xs = m.column(0).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(xs.iter().all(|&x| x >= 0.0));
        assert!((mean - 0.5).abs() < 0.03, "{mean}");
    }

    #[test]
    fn ordinal_marginal_levels() {
        let sigma = DMatrix::identity(1, 1);
        let marg = Marginal::Ordinal {
            probs: vec![0.2, 0.5, 0.3],
        };
        let m = gen_copula_sample(&sigma, &[marg], 5000, 2).unwrap();
        let xs = m.column(0).unwrap();
        let frac1 = xs.iter().filter(|&&x| x == 1.0).count() as f64 / 5000.0;
        assert!((frac1 - 0.2).abs() < 0.02);
        assert!(xs.iter().all(|x| [1.0, 2.0, 3.0].contains(x)));
    }
}
