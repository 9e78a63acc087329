//! Gaussian copula completion of mixed continuous/ordinal panels.
//!
//! Each column is mapped to a latent standard normal coordinate through its
//! empirical marginal; the latent rows share a correlation matrix `Σ` that is
//! estimated by EM over the partially observed rows. Missing cells are then
//! imputed by pushing the conditional latent mean back through the inverse
//! marginal.
//!
//! Continuous observations pin their latent coordinate to a point, ordinal
//! observations only to the interval between two consecutive cut-points.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, MaskRecord, ObservationMatrix};
use crate::error::{Error, Result};
use crate::normal;

/// Smallest eigenvalue a projected correlation matrix may have.
pub const MIN_EIGENVALUE: f64 = 1e-6;
const SYMMETRY_TOL: f64 = 1e-10;
const MAX_CONDITION: f64 = 1e12;
const ORDINAL_MAX_SWEEPS: usize = 50;
const ORDINAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalKind {
    Continuous,
    Ordinal,
}

/// Empirical marginal of one column and its map to and from latent space.
///
/// For continuous columns `support` holds the sorted distinct observed values
/// and `ecdf_probs` their rescaled mid-ranks `rank / (m_obs + 1)`. For ordinal
/// columns `support` holds the observed levels and `ecdf_probs` the cumulative
/// frequencies at the `k - 1` inner cut-points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalTransform {
    pub kind: MarginalKind,
    pub support: Vec<f64>,
    pub ecdf_probs: Vec<f64>,
}

impl MarginalTransform {
    /// Fits the marginal of one column from its observed values.
    pub fn fit(observed: &[f64], kind: MarginalKind) -> Result<Self> {
        if observed.is_empty() {
            return Err(Error::Precondition("column has no observed cells".into()));
        }
        let mut sorted = observed.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut support = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for &v in &sorted {
            if support.last() == Some(&v) {
                *counts.last_mut().unwrap() += 1;
            } else {
                support.push(v);
                counts.push(1);
            }
        }
        if support.len() < 2 {
            return Err(Error::Precondition(format!(
                "constant column (single observed value {}) has no invertible marginal",
                support[0]
            )));
        }
        let n = sorted.len() as f64;
        let ecdf_probs = match kind {
            MarginalKind::Continuous => {
                let mut below = 0usize;
                counts
                    .iter()
                    .map(|&c| {
                        // mid-rank of a tie block
                        let rank = below as f64 + (c as f64 + 1.0) / 2.0;
                        below += c;
                        rank / (n + 1.0)
                    })
                    .collect()
            }
            MarginalKind::Ordinal => {
                let mut acc = 0usize;
                counts[..counts.len() - 1]
                    .iter()
                    .map(|&c| {
                        acc += c;
                        acc as f64 / n
                    })
                    .collect()
            }
        };
        Ok(MarginalTransform {
            kind,
            support,
            ecdf_probs,
        })
    }

    fn continuous_prob(&self, x: f64) -> f64 {
        let s = &self.support;
        let p = &self.ecdf_probs;
        match s.binary_search_by(|v| v.total_cmp(&x)) {
            Ok(k) => p[k],
            Err(0) => p[0],
            Err(k) if k == s.len() => p[k - 1],
            Err(k) => {
                let w = (x - s[k - 1]) / (s[k] - s[k - 1]);
                p[k - 1] + w * (p[k] - p[k - 1])
            }
        }
    }

    /// Latent value of a continuous observation.
    pub fn forward(&self, x: f64) -> f64 {
        normal::quantile(self.continuous_prob(x))
    }

    /// Latent cut-points `Φ⁻¹(F_k)` of an ordinal marginal.
    pub fn cut_points(&self) -> Vec<f64> {
        self.ecdf_probs.iter().map(|&p| normal::quantile(p)).collect()
    }

    /// Latent interval of an ordinal observation.
    pub fn interval(&self, x: f64) -> Result<(f64, f64)> {
        let k = self
            .support
            .iter()
            .position(|&l| l == x)
            .ok_or_else(|| Error::Precondition(format!("ordinal value {x} was never observed")))?;
        let lo = if k == 0 {
            f64::NEG_INFINITY
        } else {
            normal::quantile(self.ecdf_probs[k - 1])
        };
        let hi = if k == self.support.len() - 1 {
            f64::INFINITY
        } else {
            normal::quantile(self.ecdf_probs[k])
        };
        Ok((lo, hi))
    }

    /// Maps a latent value back to the data scale.
    pub fn inverse(&self, z: f64) -> f64 {
        match self.kind {
            MarginalKind::Continuous => {
                let p = normal::cdf(z);
                let s = &self.support;
                let probs = &self.ecdf_probs;
                if p <= probs[0] {
                    return s[0];
                }
                if p >= probs[probs.len() - 1] {
                    return s[s.len() - 1];
                }
                let k = probs.partition_point(|&q| q < p);
                if probs[k] == p {
                    return s[k];
                }
                let w = (p - probs[k - 1]) / (probs[k] - probs[k - 1]);
                s[k - 1] + w * (s[k] - s[k - 1])
            }
            MarginalKind::Ordinal => {
                let cuts = self.cut_points();
                let k = cuts.iter().position(|&c| z <= c).unwrap_or(cuts.len());
                self.support[k]
            }
        }
    }

    /// The data value at latent zero.
    pub fn median(&self) -> f64 {
        self.inverse(0.0)
    }
}

/// Fits one marginal per column of `matrix`.
pub fn fit_marginals(matrix: &ObservationMatrix) -> Result<Vec<MarginalTransform>> {
    (0..matrix.cols())
        .map(|j| {
            let kind = match matrix.kinds()[j] {
                ColumnKind::Continuous => MarginalKind::Continuous,
                ColumnKind::Ordinal { .. } => MarginalKind::Ordinal,
            };
            MarginalTransform::fit(&matrix.observed_column(j), kind).map_err(|e| match e {
                Error::Precondition(msg) => Error::Precondition(format!("column '{}': {msg}", matrix.names()[j])),
                other => other,
            })
        })
        .collect()
}

/// What is known about one latent row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RowConstraint {
    /// Continuous observations: `(col, latent value)`.
    pub exact: Vec<(usize, f64)>,
    /// Ordinal observations: `(col, lo, hi)` with `lo < hi`.
    pub interval: Vec<(usize, f64, f64)>,
    pub missing: Vec<usize>,
}

impl RowConstraint {
    pub fn observed_count(&self) -> usize {
        self.exact.len() + self.interval.len()
    }
}

/// Latent constraints of every row of `matrix` under `marginals`.
pub fn row_constraints(matrix: &ObservationMatrix, marginals: &[MarginalTransform]) -> Result<Vec<RowConstraint>> {
    if marginals.len() != matrix.cols() {
        return Err(Error::LengthMismatch(format!(
            "{} marginals for {} columns",
            marginals.len(),
            matrix.cols()
        )));
    }
    (0..matrix.rows())
        .map(|i| {
            let mut c = RowConstraint::default();
            for (j, marg) in marginals.iter().enumerate() {
                match matrix.get(i, j) {
                    None => c.missing.push(j),
                    Some(x) => match marg.kind {
                        MarginalKind::Continuous => c.exact.push((j, marg.forward(x))),
                        MarginalKind::Ordinal => {
                            let (lo, hi) = marg.interval(x)?;
                            c.interval.push((j, lo, hi));
                        }
                    },
                }
            }
            Ok(c)
        })
        .collect()
}

fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

fn guarded_cholesky(block: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let chol = block
        .cholesky()
        .ok_or_else(|| Error::Singular("observed block of sigma is not positive definite".into()))?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if (hi / lo).powi(2) > MAX_CONDITION {
        return Err(Error::Singular(format!(
            "observed block of sigma is ill-conditioned (estimate {:.3e})",
            (hi / lo).powi(2)
        )));
    }
    Ok(chol)
}

/// Conditional first and second latent moments of one row,
/// `E[z | constraint, Σ]` and `E[z zᵀ | constraint, Σ]`.
///
/// Continuous and missing coordinates are conditioned exactly. Ordinal
/// coordinates take truncated-normal moments given the current means of the
/// other observed coordinates, swept until the means stop moving, and then
/// enter the conditioning with their truncated variances.
pub fn e_step(sigma: &DMatrix<f64>, constraint: &RowConstraint, ridge: f64) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let q = sigma.nrows();
    let n_obs = constraint.observed_count();
    if n_obs == 0 {
        return Ok((DVector::zeros(q), sigma.clone()));
    }

    let mut obs: Vec<usize> = Vec::with_capacity(n_obs);
    let mut mean_o = DVector::zeros(n_obs);
    let mut var_o = DVector::zeros(n_obs);
    // (position in obs, lo, hi)
    let mut bounds: Vec<(usize, f64, f64)> = Vec::with_capacity(constraint.interval.len());
    {
        let mut e = constraint.exact.iter().peekable();
        let mut d = constraint.interval.iter().peekable();
        loop {
            let take_exact = match (e.peek(), d.peek()) {
                (Some(a), Some(b)) => a.0 < b.0,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => break,
            };
            let k = obs.len();
            if take_exact {
                let &(j, z) = e.next().unwrap();
                obs.push(j);
                mean_o[k] = z;
            } else {
                let &(j, lo, hi) = d.next().unwrap();
                obs.push(j);
                let (m, v) = normal::truncated_moments(lo, hi);
                mean_o[k] = m;
                var_o[k] = v;
                bounds.push((k, lo, hi));
            }
        }
    }

    let mut s_oo = submatrix(sigma, &obs, &obs);
    for k in 0..n_obs {
        s_oo[(k, k)] += ridge;
    }
    let chol = guarded_cholesky(s_oo)?;

    if !bounds.is_empty() {
        let precision = chol.inverse();
        for _ in 0..ORDINAL_MAX_SWEEPS {
            let mut moved = 0.0f64;
            for &(a, lo, hi) in &bounds {
                let paa = precision[(a, a)];
                let pz: f64 = (0..n_obs).map(|b| precision[(a, b)] * mean_o[b]).sum();
                let cond_mean = mean_o[a] - pz / paa;
                let cond_sd = (1.0 / paa).sqrt();
                let (tm, tv) = normal::truncated_moments((lo - cond_mean) / cond_sd, (hi - cond_mean) / cond_sd);
                let updated = cond_mean + cond_sd * tm;
                moved = moved.max((updated - mean_o[a]).abs() / mean_o[a].abs().max(1.0));
                mean_o[a] = updated;
                var_o[a] = tv / paa;
            }
            if moved < ORDINAL_TOL {
                break;
            }
        }
    }

    let mis = &constraint.missing;
    let mut e_z = DVector::zeros(q);
    let mut e_zz = DMatrix::zeros(q, q);
    for (a, &ja) in obs.iter().enumerate() {
        e_z[ja] = mean_o[a];
        for (b, &jb) in obs.iter().enumerate() {
            e_zz[(ja, jb)] = mean_o[a] * mean_o[b];
        }
        e_zz[(ja, ja)] += var_o[a];
    }
    if mis.is_empty() {
        return Ok((e_z, e_zz));
    }

    let s_om = submatrix(sigma, &obs, mis);
    // regression of missing on observed: B = Σ_mo Σ_oo⁻¹
    let b = chol.solve(&s_om).transpose();
    let mu_m = &b * &mean_o;
    let b_var = DMatrix::from_fn(mis.len(), n_obs, |r, c| b[(r, c)] * var_o[c]);
    let cov_m = submatrix(sigma, mis, mis) - &b * &s_om + &b_var * b.transpose();
    for (r, &jr) in mis.iter().enumerate() {
        e_z[jr] = mu_m[r];
        for (c, &jc) in obs.iter().enumerate() {
            let v = mu_m[r] * mean_o[c] + b_var[(r, c)];
            e_zz[(jr, jc)] = v;
            e_zz[(jc, jr)] = v;
        }
        for (c, &jc) in mis.iter().enumerate() {
            e_zz[(jr, jc)] = mu_m[r] * mu_m[c] + cov_m[(r, c)];
        }
    }
    Ok((e_z, e_zz))
}

/// Rescales a symmetric matrix with positive diagonal to unit diagonal and,
/// if needed, lifts its spectrum so the smallest eigenvalue is at least
/// [`MIN_EIGENVALUE`].
pub fn project_correlation(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let q = s.nrows();
    if s.ncols() != q || q == 0 {
        return Err(Error::InvalidArgument("expected a non-empty square matrix".into()));
    }
    let scale = s.amax().max(1.0);
    for i in 0..q {
        if !(s[(i, i)] > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "diagonal entry {i} is {}, must be positive",
                s[(i, i)]
            )));
        }
        for j in 0..i {
            if (s[(i, j)] - s[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidArgument(format!("matrix is not symmetric at ({i}, {j})")));
            }
        }
    }
    let mut r = unit_diagonal(s);
    let eig = SymmetricEigen::new(r.clone());
    if eig.eigenvalues.min() >= MIN_EIGENVALUE {
        return Ok(r);
    }
    // Clipping raises the diagonal above one, so the rescale shrinks the
    // spectrum again; lift the floor until the rescaled minimum clears it.
    let target = MIN_EIGENVALUE * (1.0 + 1e-4);
    let mut floor = target;
    for _ in 0..100 {
        let clipped = eig.eigenvalues.map(|l| l.max(floor));
        let lifted = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        let max_diag = lifted.diagonal().max();
        r = unit_diagonal(&lifted);
        if floor / max_diag >= target {
            break;
        }
        floor = target * max_diag;
    }
    Ok(r)
}

fn unit_diagonal(s: &DMatrix<f64>) -> DMatrix<f64> {
    let q = s.nrows();
    let d: Vec<f64> = (0..q).map(|i| s[(i, i)].sqrt()).collect();
    DMatrix::from_fn(q, q, |i, j| {
        if i == j {
            1.0
        } else {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            0.5 * (s[(a, b)] + s[(b, a)]) / (d[a] * d[b])
        }
    })
}

/// Sum over rows of the latent log-density of the observations: exact
/// coordinates through the Gaussian density of `Σ` restricted to them,
/// ordinal coordinates through the probability of their interval given the
/// exact ones.
pub fn pseudo_loglik(sigma: &DMatrix<f64>, constraints: &[RowConstraint]) -> Result<f64> {
    let mut total = 0.0;
    for c in constraints {
        if c.observed_count() == 0 {
            continue;
        }
        let cols: Vec<usize> = c.exact.iter().map(|&(j, _)| j).collect();
        let z = DVector::from_iterator(cols.len(), c.exact.iter().map(|&(_, v)| v));
        let chol = if cols.is_empty() {
            None
        } else {
            let block = submatrix(sigma, &cols, &cols);
            let chol = match block.clone().cholesky() {
                Some(ch) => ch,
                None => {
                    log::warn!("singular observed block in log-likelihood, adding ridge 1e-8");
                    let n = block.nrows();
                    (block + DMatrix::identity(n, n) * 1e-8)
                        .cholesky()
                        .ok_or_else(|| Error::Singular("observed block not repairable".into()))?
                }
            };
            let w = chol
                .l_dirty()
                .solve_lower_triangular(&z)
                .ok_or_else(|| Error::Singular("triangular solve failed".into()))?;
            let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
            total += -0.5 * w.norm_squared() - 0.5 * log_det - cols.len() as f64 * normal::HALF_LN_2PI;
            Some(chol)
        };
        for &(j, lo, hi) in &c.interval {
            let (mean, var) = match &chol {
                None => (0.0, 1.0),
                Some(ch) => {
                    let s_cj = DVector::from_iterator(cols.len(), cols.iter().map(|&k| sigma[(k, j)]));
                    let coef = ch.solve(&s_cj);
                    (coef.dot(&z), (1.0 - coef.dot(&s_cj)).max(1e-12))
                }
            };
            let sd = var.sqrt();
            total += normal::ln_interval_mass((lo - mean) / sd, (hi - mean) / sd);
        }
    }
    Ok(total)
}

/// EM settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Relative Frobenius change of `Σ` below which EM stops.
    pub tol: f64,
    /// Added to the diagonal of observed blocks before solving.
    pub ridge: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iters: 100,
            tol: 1e-4,
            ridge: 1e-8,
        }
    }
}

/// One EM iteration: `(iteration, relative Frobenius change, pseudo log-likelihood)`.
pub type TraceEntry = (usize, f64, f64);

/// A fitted Gaussian copula.
#[derive(Debug, Clone, PartialEq)]
pub struct CopulaModel {
    pub sigma: DMatrix<f64>,
    pub marginals: Vec<MarginalTransform>,
    pub em_trace: Vec<TraceEntry>,
    /// False when EM stopped at `max_iters` without meeting the tolerance.
    pub converged: bool,
}

#[derive(Serialize, Deserialize)]
struct CopulaModelJson {
    sigma: Vec<f64>,
    marginals: Vec<MarginalTransform>,
    em_trace: Vec<TraceEntry>,
}

impl Serialize for CopulaModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let q = self.sigma.nrows();
        CopulaModelJson {
            sigma: (0..q)
                .flat_map(|i| (0..q).map(move |j| (i, j)))
                .map(|ij| self.sigma[ij])
                .collect(),
            marginals: self.marginals.clone(),
            em_trace: self.em_trace.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CopulaModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = CopulaModelJson::deserialize(deserializer)?;
        let q = raw.marginals.len();
        if raw.sigma.len() != q * q {
            return Err(serde::de::Error::custom(format!(
                "sigma has {} entries for {q} marginals",
                raw.sigma.len()
            )));
        }
        Ok(CopulaModel {
            sigma: DMatrix::from_row_slice(q, q, &raw.sigma),
            marginals: raw.marginals,
            converged: true,
            em_trace: raw.em_trace,
        })
    }
}

fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Average of the per-row second moments (the M-step). Rows are reduced in
/// index order so the result does not depend on the thread count.
fn m_step(sigma: &DMatrix<f64>, constraints: &[RowConstraint], ridge: f64) -> Result<DMatrix<f64>> {
    let q = sigma.nrows();
    let moments: Vec<DMatrix<f64>> = constraints
        .par_iter()
        .map(|c| e_step(sigma, c, ridge).map(|(_, zz)| zz))
        .collect::<Result<_>>()?;
    let mut acc = DMatrix::zeros(q, q);
    for zz in &moments {
        acc += zz;
    }
    Ok(acc / constraints.len() as f64)
}

/// Fits marginals and the latent correlation matrix by EM, starting from the
/// identity.
pub fn em_fit(matrix: &ObservationMatrix, config: &EmConfig) -> Result<CopulaModel> {
    let rows_with_data = (0..matrix.rows())
        .filter(|&i| (0..matrix.cols()).any(|j| matrix.is_observed(i, j)))
        .count();
    if rows_with_data < 2 {
        return Err(Error::Precondition(format!(
            "EM needs at least 2 rows with an observed cell, found {rows_with_data}"
        )));
    }
    if config.max_iters == 0 || !(config.tol > 0.0) || config.ridge < 0.0 {
        return Err(Error::InvalidArgument(format!("invalid EM config {config:?}")));
    }
    let marginals = fit_marginals(matrix)?;
    let q = matrix.cols();
    let mut model = CopulaModel {
        sigma: DMatrix::identity(q, q),
        marginals,
        em_trace: Vec::new(),
        converged: true,
    };
    if q == 1 {
        return Ok(model);
    }
    let constraints = row_constraints(matrix, &model.marginals)?;
    model.converged = false;
    for iter in 1..=config.max_iters {
        let moments = m_step(&model.sigma, &constraints, config.ridge)?;
        let next = project_correlation(&moments)?;
        let delta = frobenius(&(&next - &model.sigma)) / frobenius(&model.sigma);
        let ll = pseudo_loglik(&next, &constraints)?;
        model.em_trace.push((iter, delta, ll));
        model.sigma = next;
        if delta < config.tol {
            model.converged = true;
            break;
        }
    }
    if !model.converged {
        log::warn!(
            "copula EM did not reach tol {} within {} iterations",
            config.tol,
            config.max_iters
        );
    }
    Ok(model)
}

/// Result of [`impute`].
#[derive(Debug, Clone)]
pub struct Imputation {
    pub completed: ObservationMatrix,
    /// Rows with no observed cell, filled with marginal medians.
    pub degenerate_rows: Vec<usize>,
}

impl CopulaModel {
    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn pseudo_loglik(&self, constraints: &[RowConstraint]) -> Result<f64> {
        pseudo_loglik(&self.sigma, constraints)
    }
}

/// Fills every missing cell with the inverse marginal of its conditional
/// latent mean. Observed cells are left untouched.
pub fn impute(model: &CopulaModel, matrix: &ObservationMatrix) -> Result<Imputation> {
    if matrix.cols() != model.dim() {
        return Err(Error::LengthMismatch(format!(
            "model has {} columns, panel has {}",
            model.dim(),
            matrix.cols()
        )));
    }
    for (j, (kind, marg)) in matrix.kinds().iter().zip(&model.marginals).enumerate() {
        if kind.is_ordinal() != (marg.kind == MarginalKind::Ordinal) {
            return Err(Error::Schema(format!(
                "column '{}' kind differs from the fitted marginal",
                matrix.names()[j]
            )));
        }
    }
    let constraints = row_constraints(matrix, &model.marginals)?;
    let ridge = EmConfig::default().ridge;
    let fills: Vec<Option<DVector<f64>>> = constraints
        .par_iter()
        .map(|c| {
            if c.missing.is_empty() || c.observed_count() == 0 {
                Ok(None)
            } else {
                e_step(&model.sigma, c, ridge).map(|(ez, _)| Some(ez))
            }
        })
        .collect::<Result<_>>()?;

    let mut completed = matrix.clone();
    let mut degenerate_rows = Vec::new();
    for (i, (c, fill)) in constraints.iter().zip(&fills).enumerate() {
        match fill {
            Some(ez) => {
                for &j in &c.missing {
                    completed.set(i, j, model.marginals[j].inverse(ez[j]));
                }
            }
            None if !c.missing.is_empty() => {
                degenerate_rows.push(i);
                for &j in &c.missing {
                    completed.set(i, j, model.marginals[j].median());
                }
            }
            None => {}
        }
    }
    if !degenerate_rows.is_empty() {
        log::warn!(
            "{} row(s) had no observed cell and were filled with marginal medians",
            degenerate_rows.len()
        );
    }
    Ok(Imputation {
        completed,
        degenerate_rows,
    })
}

/// Baseline: fills missing cells with their column's observed mean.
pub fn mean_impute(matrix: &ObservationMatrix) -> Result<ObservationMatrix> {
    let mut out = matrix.clone();
    for j in 0..matrix.cols() {
        let obs = matrix.observed_column(j);
        if obs.is_empty() {
            return Err(Error::Precondition(format!(
                "column '{}' has no observed cells",
                matrix.names()[j]
            )));
        }
        let mean = obs.iter().sum::<f64>() / obs.len() as f64;
        for i in 0..matrix.rows() {
            if !matrix.is_observed(i, j) {
                out.set(i, j, mean);
            }
        }
    }
    Ok(out)
}

/// Mean absolute error of `completed` on the erased cells of `record`.
pub fn recovery_mae(completed: &ObservationMatrix, record: &MaskRecord) -> Result<f64> {
    if record.truth.len() != record.erased_cells.len() {
        return Err(Error::Precondition("mask record carries no ground truth".into()));
    }
    if record.erased_cells.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (&(i, j), &truth) in record.erased_cells.iter().zip(&record.truth) {
        let v = completed
            .get(i, j)
            .ok_or_else(|| Error::Precondition(format!("cell ({i}, {j}) was not imputed")))?;
        sum += (v - truth).abs();
    }
    Ok(sum / record.erased_cells.len() as f64)
}
