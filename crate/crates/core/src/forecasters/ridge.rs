use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_data, design_row, range_mape, ForecastTask, Predict, Standardizer, TrainedForecaster};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RidgeParams {
    pub lags: Vec<usize>,
    /// Penalty on the standardized coefficients; the intercept is free.
    pub ridge: f64,
}

impl Default for RidgeParams {
    fn default() -> Self {
        RidgeParams {
            lags: vec![1, 2, 3, 12],
            ridge: 1.0,
        }
    }
}

/// Linear autoregression on target lags and lag-1 feature columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeAr {
    pub target: usize,
    pub features: Vec<usize>,
    pub params: RidgeParams,
    /// Coefficients on the original scale, lags first.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl RidgeAr {
    /// Closed-form fit on the training rows of `task`.
    pub fn fit(task: &ForecastTask, data: &DMatrix<f64>, params: &RidgeParams) -> Result<Self> {
        check_data(task, data)?;
        if params.lags.is_empty() || params.lags.contains(&0) {
            return Err(Error::InvalidArgument("lags must be non-empty and positive".into()));
        }
        if !(params.ridge >= 0.0) || !params.ridge.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ridge {} must be finite and >= 0",
                params.ridge
            )));
        }
        let max_lag = *params.lags.iter().max().expect("non-empty");
        let first = task.train_range.start.max(max_lag).max(1);
        if first >= task.train_range.end {
            return Err(Error::Precondition(format!(
                "training span {:?} is not longer than the largest lag {max_lag}",
                task.train_range
            )));
        }
        let series: Vec<f64> = data.column(task.target_column).iter().copied().collect();
        let feats: Vec<Vec<f64>> = task
            .features
            .iter()
            .map(|&j| data.column(j).iter().copied().collect())
            .collect();
        let rows: Vec<Vec<f64>> = (first..task.train_range.end)
            .map(|t| design_row(&series, &feats, &params.lags, t))
            .collect();
        let y: Vec<f64> = (first..task.train_range.end).map(|t| series[t]).collect();
        let p = rows[0].len();
        let n = rows.len();

        let scalers: Vec<Standardizer> = (0..p)
            .map(|c| Standardizer::fit(&rows.iter().map(|r| r[c]).collect::<Vec<_>>()))
            .collect();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let x = DMatrix::from_fn(n, p, |i, c| scalers[c].forward(rows[i][c]));
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

        let mut gram = x.transpose() * &x;
        for c in 0..p {
            gram[(c, c)] += params.ridge;
        }
        let rhs = x.transpose() * yc;
        let eig = gram.clone().symmetric_eigenvalues();
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
        if !(lo > 1e-12 * hi.max(1.0)) {
            return Err(Error::Singular(format!(
                "normal equations are singular (smallest eigenvalue {lo:e}); use ridge > 0"
            )));
        }
        let beta = gram
            .cholesky()
            .ok_or_else(|| Error::Singular("normal equations are not positive definite; use ridge > 0".into()))?
            .solve(&rhs);

        let coefficients: Vec<f64> = beta.iter().zip(&scalers).map(|(b, s)| b / s.scale).collect();
        let intercept = y_mean - coefficients.iter().zip(&scalers).map(|(c, s)| c * s.mean).sum::<f64>();
        Ok(RidgeAr {
            target: task.target_column,
            features: task.features.clone(),
            params: params.clone(),
            coefficients,
            intercept,
        })
    }
}

impl Predict for RidgeAr {
    fn predict_at(&self, data: &DMatrix<f64>, t: usize) -> Result<f64> {
        let max_lag = *self.params.lags.iter().max().expect("fitted lags");
        if t < max_lag.max(1) || t > data.nrows() {
            return Err(Error::InvalidArgument(format!("row {t} lacks lag history")));
        }
        let mut y = self.intercept;
        let mut k = 0;
        for &l in &self.params.lags {
            y += self.coefficients[k] * data[(t - l, self.target)];
            k += 1;
        }
        for &j in &self.features {
            y += self.coefficients[k] * data[(t - 1, j)];
            k += 1;
        }
        Ok(y)
    }

    fn to_json(&self) -> serde_json::Value {
        json!({
            "kind": "ridge_ar",
            "hyper": self.params,
            "features": self.features,
            "coefficients": self.coefficients,
            "intercept": self.intercept,
        })
    }
}

pub fn fit_ridge_ar(task: &ForecastTask, data: &DMatrix<f64>, params: &RidgeParams) -> Result<TrainedForecaster> {
    let model = RidgeAr::fit(task, data, params)?;
    let err = range_mape(&model, data, task.target_column, task.validation_range.clone())?;
    TrainedForecaster::new("ridge_ar", vec![err, err], Arc::new(model))
}
