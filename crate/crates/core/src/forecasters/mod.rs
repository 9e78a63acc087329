//! Base forecasters over a completed panel.
//!
//! Every learner is fit on the training span and scored one step ahead on the
//! validation span after each of its training rounds; those scores become the
//! error stream the ensemble weighs. Forecasting period `t` reads only rows
//! strictly before `t`.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::mape;

pub mod gbt;
pub mod naive;
pub mod ridge;
pub mod tcn;
pub mod trmf;

pub use gbt::{fit_gbt, GbtModel, GbtParams};
pub use naive::naive_seasonal;
pub use ridge::{fit_ridge_ar, RidgeAr, RidgeParams};
pub use tcn::{dilated_causal_conv, fit_tcn, TcnModel, TcnParams};
pub use trmf::{fit_trmf, fit_trmf_forecaster, forecast_trmf, TrmfModel, TrmfParams};

/// What to forecast and which rows play which role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastTask {
    pub target_column: usize,
    /// Number of periods forecast after the validation span.
    pub horizon: usize,
    pub train_range: Range<usize>,
    pub validation_range: Range<usize>,
    /// Extra columns used as regressors, at lag 1.
    #[serde(default)]
    pub features: Vec<usize>,
}

impl ForecastTask {
    /// The last `horizon` rows are held out, the `validation` rows before
    /// them score training rounds and everything earlier is training data.
    pub fn holdout(rows: usize, target_column: usize, validation: usize, horizon: usize) -> Result<Self> {
        if validation + horizon >= rows {
            return Err(Error::InvalidArgument(format!(
                "{rows} rows leave no training data after {validation} validation and {horizon} holdout periods"
            )));
        }
        let train_end = rows - horizon - validation;
        Ok(ForecastTask {
            target_column,
            horizon,
            train_range: 0..train_end,
            validation_range: train_end..train_end + validation,
            features: Vec::new(),
        })
    }

    /// Rows forecast for evaluation.
    pub fn test_range(&self) -> Range<usize> {
        self.validation_range.end..self.validation_range.end + self.horizon
    }

    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        if self.train_range.is_empty() || self.validation_range.is_empty() {
            return Err(Error::InvalidArgument("empty training or validation span".into()));
        }
        if self.validation_range.start < self.train_range.end {
            return Err(Error::InvalidArgument(format!(
                "validation span {:?} must follow training span {:?}",
                self.validation_range, self.train_range
            )));
        }
        if self.test_range().end > rows {
            return Err(Error::InvalidArgument(format!(
                "forecast span {:?} runs past the {rows} available rows",
                self.test_range()
            )));
        }
        if self.target_column >= cols {
            return Err(Error::InvalidArgument(format!(
                "target column {} out of range for {cols} columns",
                self.target_column
            )));
        }
        for &f in &self.features {
            if f >= cols {
                return Err(Error::InvalidArgument(format!("feature column {f} out of range")));
            }
            if f == self.target_column {
                return Err(Error::InvalidArgument("target column cannot also be a feature".into()));
            }
        }
        Ok(())
    }
}

/// A fitted model that forecasts one period ahead.
pub trait Predict: Send + Sync {
    /// Forecast of the target at row `t` from rows `0..t` of `data`.
    fn predict_at(&self, data: &DMatrix<f64>, t: usize) -> Result<f64>;

    /// Hyperparameters and fitted parameters.
    fn to_json(&self) -> serde_json::Value;
}

/// A fitted base model together with its per-round validation errors.
#[derive(Clone)]
pub struct TrainedForecaster {
    pub name: String,
    /// Validation MAPE (percent) after each training round.
    pub round_errors: Vec<f64>,
    model: Arc<dyn Predict>,
}

impl fmt::Debug for TrainedForecaster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrainedForecaster")
            .field("name", &self.name)
            .field("round_errors", &self.round_errors)
            .finish_non_exhaustive()
    }
}

impl TrainedForecaster {
    /// Wraps a fitted model. A single-round stream is repeated so the
    /// forecaster always reports at least two rounds.
    pub fn new(name: impl Into<String>, mut round_errors: Vec<f64>, model: Arc<dyn Predict>) -> Result<Self> {
        let name = name.into();
        if round_errors.is_empty() {
            return Err(Error::InvalidArgument(format!("'{name}' has no round errors")));
        }
        if let Some(e) = round_errors.iter().find(|e| !e.is_finite() || **e < 0.0) {
            return Err(Error::Numerical(format!("'{name}' produced round error {e}")));
        }
        if round_errors.len() == 1 {
            round_errors.push(round_errors[0]);
        }
        Ok(TrainedForecaster {
            name,
            round_errors,
            model,
        })
    }

    /// Final round count.
    pub fn rounds(&self) -> usize {
        self.round_errors.len()
    }

    pub fn predict_at(&self, data: &DMatrix<f64>, t: usize) -> Result<f64> {
        self.model.predict_at(data, t)
    }

    /// One-step-ahead forecasts for every row in `range`.
    pub fn forecast(&self, data: &DMatrix<f64>, range: Range<usize>) -> Result<Vec<f64>> {
        range.map(|t| self.predict_at(data, t)).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "name": self.name,
            "round_errors": self.round_errors,
            "model": self.model.to_json(),
        })
    }
}

/// One entry of a forecaster roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForecasterSpec {
    NaiveSeasonal {
        #[serde(default = "default_period")]
        period: usize,
    },
    RidgeAr(RidgeParams),
    Gbt(GbtParams),
    Tcn(TcnParams),
    Trmf(TrmfParams),
}

fn default_period() -> usize {
    naive::DEFAULT_PERIOD
}

impl ForecasterSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ForecasterSpec::NaiveSeasonal { .. } => "naive_seasonal",
            ForecasterSpec::RidgeAr(_) => "ridge_ar",
            ForecasterSpec::Gbt(_) => "gbt",
            ForecasterSpec::Tcn(_) => "tcn",
            ForecasterSpec::Trmf(_) => "trmf",
        }
    }

    /// The five-model bank used by default.
    pub fn default_roster() -> Vec<ForecasterSpec> {
        vec![
            ForecasterSpec::Tcn(TcnParams::default()),
            ForecasterSpec::Gbt(GbtParams::default()),
            ForecasterSpec::Trmf(TrmfParams::default()),
            ForecasterSpec::RidgeAr(RidgeParams::default()),
            ForecasterSpec::NaiveSeasonal {
                period: naive::DEFAULT_PERIOD,
            },
        ]
    }

    /// Fits the learner; `seed` drives any random initialisation.
    pub fn fit(&self, task: &ForecastTask, data: &DMatrix<f64>, seed: u64) -> Result<TrainedForecaster> {
        match self {
            ForecasterSpec::NaiveSeasonal { period } => naive_seasonal(task, data, *period),
            ForecasterSpec::RidgeAr(p) => fit_ridge_ar(task, data, p),
            ForecasterSpec::Gbt(p) => fit_gbt(task, data, p),
            ForecasterSpec::Tcn(p) => fit_tcn(task, data, p, seed),
            ForecasterSpec::Trmf(p) => fit_trmf_forecaster(task, data, p, seed),
        }
    }
}

/// One-step-ahead MAPE of `model` over `range`.
pub(crate) fn range_mape<P: Predict + ?Sized>(
    model: &P,
    data: &DMatrix<f64>,
    target: usize,
    range: Range<usize>,
) -> Result<f64> {
    let actual: Vec<f64> = range.clone().map(|t| data[(t, target)]).collect();
    let predicted = range.map(|t| model.predict_at(data, t)).collect::<Result<Vec<_>>>()?;
    mape(&actual, &predicted)
}

/// Location and scale of a series over the training rows. A constant series
/// gets unit scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub scale: f64,
}

impl Standardizer {
    pub fn fit(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        Standardizer {
            mean,
            scale: if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 },
        }
    }

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.mean) / self.scale
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.scale + self.mean
    }
}

/// Regressors for row `t`: `series` at each lag, then each feature column
/// at lag 1.
pub(crate) fn design_row(series: &[f64], features: &[Vec<f64>], lags: &[usize], t: usize) -> Vec<f64> {
    let mut row: Vec<f64> = lags.iter().map(|&l| series[t - l]).collect();
    row.extend(features.iter().map(|f| f[t - 1]));
    row
}

pub(crate) fn check_data(task: &ForecastTask, data: &DMatrix<f64>) -> Result<()> {
    task.validate(data.nrows(), data.ncols())?;
    if let Some(v) = data.iter().find(|v| !v.is_finite()) {
        return Err(Error::Precondition(format!(
            "forecasters need a completed panel, found {v}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holdout_split() {
        let task = ForecastTask::holdout(108, 0, 12, 12).unwrap();
        assert_eq!(task.train_range, 0..84);
        assert_eq!(task.validation_range, 84..96);
        assert_eq!(task.test_range(), 96..108);
        task.validate(108, 13).unwrap();
        assert!(ForecastTask::holdout(24, 0, 12, 12).is_err());
    }

    #[test]
    fn task_rejects_bad_layouts() {
        let mut task = ForecastTask::holdout(50, 0, 5, 5).unwrap();
        task.features = vec![0];
        assert!(task.validate(50, 3).is_err());
        task.features = vec![1];
        task.horizon = 0;
        assert!(task.validate(50, 3).is_err());
        task.horizon = 6;
        assert!(task.validate(50, 3).is_err());
    }

    #[test]
    fn single_round_is_padded() {
        struct Zero;
        impl Predict for Zero {
            fn predict_at(&self, _: &DMatrix<f64>, _: usize) -> Result<f64> {
                Ok(0.0)
            }
            fn to_json(&self) -> serde_json::Value {
                serde_json::Value::Null
            }
        }
        let f = TrainedForecaster::new("z", vec![3.0], Arc::new(Zero)).unwrap();
        assert_eq!(f.round_errors, vec![3.0, 3.0]);
        assert!(TrainedForecaster::new("z", vec![f64::NAN], Arc::new(Zero)).is_err());
    }

    #[test]
    fn roster_json_round_trip() {
        let roster = ForecasterSpec::default_roster();
        let json = serde_json::to_string(&roster).unwrap();
        let back: Vec<ForecasterSpec> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, roster);
        let short: Vec<ForecasterSpec> =
            serde_json::from_str(r#"[{"kind":"naive_seasonal"},{"kind":"gbt","n_rounds":5}]"#).unwrap();
        assert_eq!(short[0], ForecasterSpec::NaiveSeasonal { period: 12 });
        match &short[1] {
            ForecasterSpec::Gbt(p) => assert_eq!(p.n_rounds, 5),
            other => panic!("{other:?}"),
        }
    }
}
