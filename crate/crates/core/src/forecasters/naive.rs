use std::sync::Arc;

use nalgebra::DMatrix;
use serde_json::json;

use super::{check_data, range_mape, ForecastTask, Predict, TrainedForecaster};
use crate::error::{Error, Result};

pub const DEFAULT_PERIOD: usize = 12;

/// Repeats the value observed one season earlier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NaiveSeasonal {
    pub target: usize,
    pub period: usize,
}

impl Predict for NaiveSeasonal {
    fn predict_at(&self, data: &DMatrix<f64>, t: usize) -> Result<f64> {
        if t < self.period || t > data.nrows() {
            return Err(Error::InvalidArgument(format!(
                "row {t} has no value one period ({}) earlier",
                self.period
            )));
        }
        Ok(data[(t - self.period, self.target)])
    }

    fn to_json(&self) -> serde_json::Value {
        json!({ "kind": "naive_seasonal", "period": self.period })
    }
}

pub fn naive_seasonal(task: &ForecastTask, data: &DMatrix<f64>, period: usize) -> Result<TrainedForecaster> {
    check_data(task, data)?;
    if period == 0 {
        return Err(Error::InvalidArgument("period must be at least 1".into()));
    }
    if task.train_range.end < period {
        return Err(Error::Precondition(format!(
            "training span of {} rows is shorter than the period {period}",
            task.train_range.end
        )));
    }
    let model = NaiveSeasonal {
        target: task.target_column,
        period,
    };
    let err = range_mape(&model, data, task.target_column, task.validation_range.clone())?;
    TrainedForecaster::new("naive_seasonal", vec![err, err], Arc::new(model))
}
