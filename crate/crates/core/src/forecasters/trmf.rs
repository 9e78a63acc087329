//! Temporally regularized matrix factorization `Y ≈ Λ S`.
//!
//! The objective minimized by alternating exact block updates is
//!
//! ```text
//! ‖Y − ΛS‖² + λ(‖Λ‖² + ‖S‖²) + κ(Σ_r Σ_t (S_rt − Σ_l w_rl S_r,t−l)² + λ‖W‖²)
//! ```
//!
//! with one autoregression per factor row over a shared lag set.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_data, ForecastTask, Predict, Standardizer, TrainedForecaster};
use crate::error::{Error, Result};
use crate::evaluation::mape;
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrmfParams {
    /// Number of latent factors.
    pub k: usize,
    pub lags: Vec<usize>,
    /// Ridge weight on loadings, factors and AR weights.
    pub lambda: f64,
    /// Weight of the temporal autoregressive penalty.
    pub kappa: f64,
    pub sweeps: usize,
}

impl Default for TrmfParams {
    fn default() -> Self {
        TrmfParams {
            k: 4,
            lags: vec![1, 12],
            lambda: 0.1,
            kappa: 0.1,
            sweeps: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrmfModel {
    /// `q × k`.
    pub loadings: DMatrix<f64>,
    /// `k × m`.
    pub factors: DMatrix<f64>,
    /// `k × |lags|`.
    pub ar_weights: DMatrix<f64>,
    pub params: TrmfParams,
    /// Objective after each sweep.
    pub objective: Vec<f64>,
}

impl TrmfModel {
    fn max_lag(&self) -> usize {
        self.params.lags.iter().copied().max().unwrap_or(0)
    }

    pub fn reconstruction(&self) -> DMatrix<f64> {
        &self.loadings * &self.factors
    }

    /// Autoregressive forecast of the factor column that follows `history`
    /// (`k × len`).
    fn ar_step(&self, history: &DMatrix<f64>) -> DVector<f64> {
        let len = history.ncols();
        DVector::from_fn(self.factors.nrows(), |r, _| {
            self.params
                .lags
                .iter()
                .enumerate()
                .map(|(li, &l)| self.ar_weights[(r, li)] * history[(r, len - l)])
                .sum()
        })
    }

    fn objective_value(&self, y: &DMatrix<f64>) -> f64 {
        let p = &self.params;
        let fit = (y - self.reconstruction()).norm_squared();
        let ridge = p.lambda * (self.loadings.norm_squared() + self.factors.norm_squared());
        let mut ar = 0.0;
        for r in 0..self.factors.nrows() {
            for t in self.max_lag()..self.factors.ncols() {
                let pred: f64 = p
                    .lags
                    .iter()
                    .enumerate()
                    .map(|(li, &l)| self.ar_weights[(r, li)] * self.factors[(r, t - l)])
                    .sum();
                ar += (self.factors[(r, t)] - pred).powi(2);
            }
        }
        fit + ridge + p.kappa * (ar + p.lambda * self.ar_weights.norm_squared())
    }

    fn update_loadings(&mut self, y: &DMatrix<f64>) -> Result<()> {
        let k = self.factors.nrows();
        let mut gram = &self.factors * self.factors.transpose();
        for i in 0..k {
            gram[(i, i)] += self.params.lambda;
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Singular("loading update is singular; use lambda > 0".into()))?;
        // Λᵀ = (S Sᵀ + λI)⁻¹ S Yᵀ
        self.loadings = chol.solve(&(&self.factors * y.transpose())).transpose();
        Ok(())
    }

    fn update_factors(&mut self, y: &DMatrix<f64>) -> Result<()> {
        let (k, m) = self.factors.shape();
        let p = &self.params;
        let lt_l = self.loadings.transpose() * &self.loadings;
        let lt_y = self.loadings.transpose() * y;
        let idx = |r: usize, t: usize| r * m + t;
        let mut h = DMatrix::<f64>::zeros(k * m, k * m);
        let mut rhs = DVector::<f64>::zeros(k * m);
        for r in 0..k {
            for t in 0..m {
                rhs[idx(r, t)] = lt_y[(r, t)];
                h[(idx(r, t), idx(r, t))] += p.lambda;
                for r2 in 0..k {
                    h[(idx(r, t), idx(r2, t))] += lt_l[(r, r2)];
                }
            }
        }
        if p.kappa > 0.0 {
            let max_lag = self.max_lag();
            for r in 0..k {
                for t in max_lag..m {
                    let mut terms = vec![(t, 1.0)];
                    terms.extend(
                        p.lags
                            .iter()
                            .enumerate()
                            .map(|(li, &l)| (t - l, -self.ar_weights[(r, li)])),
                    );
                    for &(a, ca) in &terms {
                        for &(b, cb) in &terms {
                            h[(idx(r, a), idx(r, b))] += p.kappa * ca * cb;
                        }
                    }
                }
            }
        }
        let sol = h
            .cholesky()
            .ok_or_else(|| Error::Singular("factor update is singular; use lambda > 0".into()))?
            .solve(&rhs);
        self.factors = DMatrix::from_row_slice(k, m, sol.as_slice());
        Ok(())
    }

    fn update_ar(&mut self) -> Result<()> {
        let (k, m) = self.factors.shape();
        let max_lag = self.max_lag();
        let nl = self.params.lags.len();
        let rows = m - max_lag;
        for r in 0..k {
            let x = DMatrix::from_fn(rows, nl, |i, li| self.factors[(r, max_lag + i - self.params.lags[li])]);
            let s = DVector::from_fn(rows, |i, _| self.factors[(r, max_lag + i)]);
            let mut gram = x.transpose() * &x;
            for i in 0..nl {
                gram[(i, i)] += self.params.lambda;
            }
            let rhs = x.transpose() * s;
            let w = match gram.clone().cholesky() {
                Some(c) => c.solve(&rhs),
                None => gram
                    .svd(true, true)
                    .solve(&rhs, 1e-12)
                    .map_err(|e| Error::Singular(format!("AR weight update: {e}")))?,
            };
            for li in 0..nl {
                self.ar_weights[(r, li)] = w[li];
            }
        }
        Ok(())
    }
}

/// Alternating minimization on the `q × m` matrix `y`.
pub fn fit_trmf(y: &DMatrix<f64>, params: &TrmfParams, seed: u64) -> Result<TrmfModel> {
    fit_trmf_observed(y, params, seed, |_| Ok(()))
}

/// As [`fit_trmf`], calling `after_sweep` with the model after every sweep.
pub fn fit_trmf_observed(
    y: &DMatrix<f64>,
    params: &TrmfParams,
    seed: u64,
    mut after_sweep: impl FnMut(&TrmfModel) -> Result<()>,
) -> Result<TrmfModel> {
    let (q, m) = y.shape();
    if params.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if params.k > q.min(m) {
        return Err(Error::Precondition(format!(
            "k = {} exceeds min(q, m) = {}",
            params.k,
            q.min(m)
        )));
    }
    if params.lags.is_empty() || params.lags.contains(&0) {
        return Err(Error::InvalidArgument("lags must be non-empty and positive".into()));
    }
    let max_lag = *params.lags.iter().max().expect("non-empty");
    if max_lag >= m {
        return Err(Error::Precondition(format!(
            "largest lag {max_lag} is not below m = {m}"
        )));
    }
    if !(params.lambda >= 0.0 && params.kappa >= 0.0) {
        return Err(Error::InvalidArgument("lambda and kappa must be non-negative".into()));
    }
    if params.sweeps == 0 {
        return Err(Error::InvalidArgument("sweeps must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut model = TrmfModel {
        loadings: DMatrix::zeros(q, params.k),
        factors: DMatrix::from_fn(params.k, m, |_, _| StandardNormal.sample(&mut rng)),
        ar_weights: DMatrix::zeros(params.k, params.lags.len()),
        params: params.clone(),
        objective: Vec::with_capacity(params.sweeps),
    };
    for sweep in 0..params.sweeps {
        model.update_loadings(y)?;
        model.update_factors(y)?;
        model.update_ar()?;
        let obj = model.objective_value(y);
        if !obj.is_finite() {
            return Err(Error::Numerical(format!("objective is {obj} after sweep {sweep}")));
        }
        model.objective.push(obj);
        after_sweep(&model)?;
    }
    Ok(model)
}

/// Extends every factor row by its autoregression and returns the
/// `q × horizon` reconstruction of the future columns.
pub fn forecast_trmf(model: &TrmfModel, horizon: usize) -> Result<DMatrix<f64>> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let (k, m) = model.factors.shape();
    let mut history = model.factors.clone().resize_horizontally(m + horizon, 0.0);
    for h in 0..horizon {
        let next = model.ar_step(&history.columns(0, m + h).into_owned());
        history.set_column(m + h, &next);
    }
    debug_assert_eq!(history.nrows(), k);
    Ok(&model.loadings * history.columns(m, horizon))
}

/// TRMF over every column of the panel, forecasting the target row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrmfForecaster {
    pub model: TrmfModel,
    pub scalers: Vec<Standardizer>,
    pub target: usize,
}

impl TrmfForecaster {
    /// Factor columns for rows `0..t`, folding in rows past the fitted span
    /// one at a time: each new column solves
    /// `min ‖y − Λs‖² + λ‖s‖² + κ‖s − ŝ‖²` with `ŝ` its AR forecast.
    fn factor_history(&self, data: &DMatrix<f64>, t: usize) -> DMatrix<f64> {
        let m = self.model.factors.ncols();
        if t <= m {
            return self.model.factors.columns(0, t).into_owned();
        }
        let p = &self.model.params;
        let lam = &self.model.loadings;
        let mut sys = lam.transpose() * lam;
        for i in 0..sys.nrows() {
            sys[(i, i)] += p.lambda + p.kappa;
        }
        let chol = sys.cholesky();
        let mut hist = self.model.factors.clone().resize_horizontally(t, 0.0);
        for u in m..t {
            let prior = self.model.ar_step(&hist.columns(0, u).into_owned());
            let y = DVector::from_fn(lam.nrows(), |i, _| self.scalers[i].forward(data[(u, i)]));
            let rhs = lam.transpose() * y + prior.scale(p.kappa);
            let s = match &chol {
                Some(c) => c.solve(&rhs),
                None => prior,
            };
            hist.set_column(u, &s);
        }
        hist
    }
}

impl Predict for TrmfForecaster {
    fn predict_at(&self, data: &DMatrix<f64>, t: usize) -> Result<f64> {
        if t < self.model.max_lag() || t > data.nrows() {
            return Err(Error::InvalidArgument(format!("row {t} lacks lag history")));
        }
        let next = self.model.ar_step(&self.factor_history(data, t));
        let z = self.model.loadings.row(self.target).dot(&next.transpose());
        Ok(self.scalers[self.target].inverse(z))
    }

    fn to_json(&self) -> serde_json::Value {
        json!({
            "kind": "trmf",
            "hyper": self.model.params,
            "loadings": self.model.loadings.transpose().iter().collect::<Vec<_>>(),
            "factors": self.model.factors.transpose().iter().collect::<Vec<_>>(),
            "ar_weights": self.model.ar_weights.transpose().iter().collect::<Vec<_>>(),
            "objective": self.model.objective,
            "scalers": self.scalers,
        })
    }
}

/// Fits on the training rows of every column; one sweep per round.
pub fn fit_trmf_forecaster(
    task: &ForecastTask,
    data: &DMatrix<f64>,
    params: &TrmfParams,
    seed: u64,
) -> Result<TrainedForecaster> {
    check_data(task, data)?;
    let train = task.train_range.clone();
    if train.start != 0 {
        return Err(Error::InvalidArgument(
            "TRMF needs a training span starting at row 0".into(),
        ));
    }
    let q = data.ncols();
    let scalers: Vec<Standardizer> = (0..q)
        .map(|j| Standardizer::fit(&data.view((0, j), (train.end, 1)).iter().copied().collect::<Vec<_>>()))
        .collect();
    let y = DMatrix::from_fn(q, train.end, |i, t| scalers[i].forward(data[(t, i)]));
    let actual: Vec<f64> = task
        .validation_range
        .clone()
        .map(|t| data[(t, task.target_column)])
        .collect();
    let mut round_errors = Vec::with_capacity(params.sweeps);
    let model = fit_trmf_observed(&y, params, derive_seed(seed, "trmf"), |model| {
        let f = TrmfForecaster {
            model: model.clone(),
            scalers: scalers.clone(),
            target: task.target_column,
        };
        let pred = task
            .validation_range
            .clone()
            .map(|t| f.predict_at(data, t))
            .collect::<Result<Vec<_>>>()?;
        round_errors.push(mape(&actual, &pred)?);
        Ok(())
    })?;
    let forecaster = TrmfForecaster {
        model,
        scalers,
        target: task.target_column,
    };
    TrainedForecaster::new("trmf", round_errors, Arc::new(forecaster))
}
