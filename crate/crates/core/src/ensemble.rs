//! Adaptive exponential weighting of base forecasters by cumulative
//! validation error.
//!
//! Model `t` with error stream `err(1..R_t)` gets `λ_t = √(1/ln R_t)`; at
//! round `r` its weight is proportional to `exp(−λ_t · CE_t(r))`, where
//! `CE_t(r)` is the running sum of its errors, frozen once `r > R_t`. The
//! ensemble forecast is the final-round weighted sum of member forecasts.

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::mape;
use crate::forecasters::TrainedForecaster;

/// Sum of the first `r` errors (1-based `r`).
pub fn cumulative_error(errs: &[f64], r: usize) -> Result<f64> {
    if r == 0 || r > errs.len() {
        return Err(Error::InvalidArgument(format!("round {r} outside 1..={}", errs.len())));
    }
    if let Some(e) = errs[..r].iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "error {e} is not a finite non-negative value"
        )));
    }
    Ok(errs[..r].iter().sum())
}

/// `√(1 / ln R)`; needs `R ≥ 2`.
pub fn compute_lambda(rounds: usize) -> Result<f64> {
    if rounds <= 1 {
        return Err(Error::InvalidArgument(format!(
            "final round {rounds} gives ln R <= 0; at least 2 rounds are needed"
        )));
    }
    Ok((1.0 / (rounds as f64).ln()).sqrt())
}

/// Softmin weights `exp(−λ_t CE_t) / Σ_n exp(−λ_n CE_n)`, evaluated in log
/// space.
pub fn update_weights(ce: &[f64], lambda: &[f64]) -> Result<Vec<f64>> {
    if ce.len() != lambda.len() {
        return Err(Error::LengthMismatch(format!(
            "{} cumulative errors, {} lambdas",
            ce.len(),
            lambda.len()
        )));
    }
    if ce.is_empty() {
        return Err(Error::InvalidArgument("no models to weigh".into()));
    }
    if ce.iter().chain(lambda).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(
            "cumulative errors and lambdas must be finite and non-negative".into(),
        ));
    }
    let logits: Vec<f64> = ce.iter().zip(lambda).map(|(c, l)| -l * c).collect();
    let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logits.iter().map(|a| (a - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / total).collect())
}

/// `Σ_t w_t · ŷ_t`.
pub fn aggregate(preds: &[f64], weights: &[f64]) -> Result<f64> {
    if preds.len() != weights.len() {
        return Err(Error::LengthMismatch(format!(
            "{} forecasts, {} weights",
            preds.len(),
            weights.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("no forecasts to combine".into()));
    }
    let sum = preds.iter().zip(weights).map(|(p, w)| p * w).sum::<f64>();
    // Rounding can push the sum a hair outside the forecast range.
    let lo = preds.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = preds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(sum.clamp(lo, hi))
}

/// Per-round weighting state of every member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleState {
    pub model_names: Vec<String>,
    pub err: Vec<Vec<f64>>,
    /// `ce[t][r − 1]`, padded with the frozen final value up to the longest
    /// stream.
    pub ce: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    /// `weights[r − 1]` is the weight vector at round `r`.
    pub weights: Vec<Vec<f64>>,
    pub final_weights: Vec<f64>,
}

impl EnsembleState {
    /// Runs the weighting recursion over the error streams.
    pub fn from_errors(model_names: Vec<String>, err: Vec<Vec<f64>>) -> Result<Self> {
        if err.is_empty() {
            return Err(Error::InvalidArgument("ensemble needs at least one model".into()));
        }
        if model_names.len() != err.len() {
            return Err(Error::LengthMismatch(format!(
                "{} names for {} error streams",
                model_names.len(),
                err.len()
            )));
        }
        let lambda = err
            .iter()
            .map(|e| compute_lambda(e.len()))
            .collect::<Result<Vec<_>>>()?;
        let rounds = err.iter().map(Vec::len).max().expect("non-empty");
        let mut ce: Vec<Vec<f64>> = Vec::with_capacity(err.len());
        for e in &err {
            let mut path = Vec::with_capacity(rounds);
            for r in 1..=rounds {
                path.push(cumulative_error(e, r.min(e.len()))?);
            }
            ce.push(path);
        }
        let weights = (0..rounds)
            .map(|r| {
                let at: Vec<f64> = ce.iter().map(|c| c[r]).collect();
                update_weights(&at, &lambda)
            })
            .collect::<Result<Vec<_>>>()?;
        let final_weights = weights.last().expect("at least two rounds").clone();
        Ok(EnsembleState {
            model_names,
            err,
            ce,
            lambda,
            weights,
            final_weights,
        })
    }

    pub fn rounds(&self) -> usize {
        self.weights.len()
    }

    pub fn trace(&self) -> ConvergenceTrace {
        let rows = (0..self.rounds())
            .map(|r| TraceRow {
                round: r + 1,
                err: self.err.iter().map(|e| e.get(r).copied()).collect(),
                ce: self.ce.iter().map(|c| c[r]).collect(),
                weights: self.weights[r].clone(),
            })
            .collect();
        ConvergenceTrace {
            model_names: self.model_names.clone(),
            rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    /// `None` once the model is past its final round.
    pub err: Vec<Option<f64>>,
    pub ce: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Round-by-round errors, cumulative errors and weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub model_names: Vec<String>,
    pub rows: Vec<TraceRow>,
}

impl ConvergenceTrace {
    /// Columns `round`, then `err_<m>`, `ce_<m>`, `w_<m>` for each model.
    /// Errors past a model's final round are left empty.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["round".to_string()];
        for name in &self.model_names {
            header.push(format!("err_{name}"));
            header.push(format!("ce_{name}"));
            header.push(format!("w_{name}"));
        }
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![row.round.to_string()];
            for t in 0..self.model_names.len() {
                rec.push(row.err[t].map_or_else(String::new, |e| e.to_string()));
                rec.push(row.ce[t].to_string());
                rec.push(row.weights[t].to_string());
            }
            w.write_record(&rec)?;
        }
        finish_csv(w)
    }
}

pub(crate) fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::io("<csv buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Output of [`run_ensemble`].
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    /// Ensemble forecast for each period of the forecast span.
    pub forecasts: Vec<f64>,
    /// `member_forecasts[t]` holds model `t`'s forecasts for the same span.
    pub member_forecasts: Vec<Vec<f64>>,
    pub state: EnsembleState,
    pub trace: ConvergenceTrace,
}

/// Weighs `models` by their validation error streams and combines their
/// one-step forecasts over `span`.
pub fn run_ensemble(models: &[TrainedForecaster], data: &DMatrix<f64>, span: Range<usize>) -> Result<EnsembleRun> {
    let state = EnsembleState::from_errors(
        models.iter().map(|m| m.name.clone()).collect(),
        models.iter().map(|m| m.round_errors.clone()).collect(),
    )?;
    let member_forecasts = models
        .iter()
        .map(|m| m.forecast(data, span.clone()))
        .collect::<Result<Vec<_>>>()?;
    let forecasts = (0..span.len())
        .map(|i| {
            let preds: Vec<f64> = member_forecasts.iter().map(|f| f[i]).collect();
            aggregate(&preds, &state.final_weights)
        })
        .collect::<Result<Vec<_>>>()?;
    let trace = state.trace();
    Ok(EnsembleRun {
        forecasts,
        member_forecasts,
        state,
        trace,
    })
}

/// One prefix of the ablation path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationStep {
    pub prefix_size: usize,
    pub models: Vec<String>,
    pub mape: f64,
}

/// Orders models by final validation error (ties: larger final weight in the
/// full ensemble, then name) and scores the ensemble of each prefix on
/// `span`.
pub fn ablation(
    models: &[TrainedForecaster],
    data: &DMatrix<f64>,
    target: usize,
    span: Range<usize>,
) -> Result<Vec<AblationStep>> {
    let full = EnsembleState::from_errors(
        models.iter().map(|m| m.name.clone()).collect(),
        models.iter().map(|m| m.round_errors.clone()).collect(),
    )?;
    let mut order: Vec<usize> = (0..models.len()).collect();
    let last = |k: usize| *models[k].round_errors.last().expect("R >= 2");
    order.sort_by(|&a, &b| {
        last(a)
            .total_cmp(&last(b))
            .then_with(|| full.final_weights[b].total_cmp(&full.final_weights[a]))
            .then_with(|| models[a].name.cmp(&models[b].name))
    });
    let actual: Vec<f64> = span.clone().map(|t| data[(t, target)]).collect();
    let mut steps = Vec::with_capacity(models.len());
    for n in 1..=order.len() {
        let prefix: Vec<TrainedForecaster> = order[..n].iter().map(|&k| models[k].clone()).collect();
        let run = run_ensemble(&prefix, data, span.clone())?;
        steps.push(AblationStep {
            prefix_size: n,
            models: prefix.iter().map(|m| m.name.clone()).collect(),
            mape: mape(&actual, &run.forecasts)?,
        });
    }
    Ok(steps)
}

/// Columns `prefix_size`, `models` (joined with `+`), `mape`.
pub fn ablation_csv(steps: &[AblationStep]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["prefix_size", "models", "mape"])?;
    for s in steps {
        w.write_record([s.prefix_size.to_string(), s.models.join("+"), s.mape.to_string()])?;
    }
    finish_csv(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecasters::Predict;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    #[test]
    fn cumulative_error_cases() {
        assert_eq!(cumulative_error(&[0.5], 1).unwrap(), 0.5);
        assert_abs_diff_eq!(cumulative_error(&[0.1, 0.2, 0.3], 2).unwrap(), 0.3, epsilon = 1e-15);
        assert_eq!(cumulative_error(&[0.0; 4], 3).unwrap(), 0.0);
        assert!(cumulative_error(&[0.1], 2).is_err());
        assert!(cumulative_error(&[0.1], 0).is_err());
    }

    #[test]
    fn lambda_cases() {
        assert_abs_diff_eq!(compute_lambda(100).unwrap(), 0.465_991, epsilon = 1e-6);
        assert_abs_diff_eq!(compute_lambda(2).unwrap(), 1.20112, epsilon = 1e-5);
        assert!(compute_lambda(1).is_err());
        assert!(compute_lambda(0).is_err());
    }

    #[test]
    fn weight_cases() {
        assert_eq!(update_weights(&[3.0; 4], &[1.0; 4]).unwrap(), vec![0.25; 4]);
        assert_eq!(update_weights(&[7.0], &[0.3]).unwrap(), vec![1.0]);
        let w = update_weights(&[1.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(w[0], 0.73106, epsilon = 1e-5);
        assert_abs_diff_eq!(w[1], 0.26894, epsilon = 1e-5);
        let w = update_weights(&[1e6, 1e6 + 1.0], &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(w[0], 0.73106, epsilon = 1e-5);
    }

    #[test]
    fn aggregate_cases() {
        assert_abs_diff_eq!(
            aggregate(&[1.0, 2.0, 6.0], &[1.0 / 3.0; 3]).unwrap(),
            3.0,
            epsilon = 1e-12
        );
        assert_eq!(aggregate(&[4.0, 9.0], &[0.0, 1.0]).unwrap(), 9.0);
        assert_abs_diff_eq!(
            aggregate(&[10.0, 20.0], &[0.73106, 0.26894]).unwrap(),
            12.6894,
            epsilon = 1e-3
        );
        assert!(aggregate(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn zero_error_model_dominates() {
        let s = EnsembleState::from_errors(vec!["a".into(), "b".into()], vec![vec![0.0; 10], vec![0.5; 10]]).unwrap();
        // CE = (0, 5), λ = √(1/ln 10)
        let expected = 1.0 / (1.0 + (-compute_lambda(10).unwrap() * 5.0).exp());
        assert_abs_diff_eq!(s.final_weights[0], expected, epsilon = 1e-12);
        assert!(s.final_weights[0] > 0.95);
    }

    #[test]
    fn identical_models_split_evenly() {
        let e = vec![0.3, 0.2, 0.1];
        let s = EnsembleState::from_errors(vec!["a".into(), "b".into()], vec![e.clone(), e]).unwrap();
        for w in &s.weights {
            assert_eq!(w, &vec![0.5, 0.5]);
        }
    }

    #[test]
    fn shorter_streams_freeze() {
        let s = EnsembleState::from_errors(vec!["a".into(), "b".into()], vec![vec![1.0, 1.0], vec![0.1; 5]]).unwrap();
        assert_eq!(s.rounds(), 5);
        assert_eq!(s.ce[0], vec![1.0, 2.0, 2.0, 2.0, 2.0]);
        let trace = s.trace();
        assert_eq!(trace.rows[4].err[0], None);
        let csv = trace.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "round,err_a,ce_a,w_a,err_b,ce_b,w_b");
        assert_eq!(lines.len(), 6);
        assert!(lines[5].starts_with("5,,2,"));
    }

    struct Constant(f64);
    impl Predict for Constant {
        fn predict_at(&self, _: &DMatrix<f64>, _: usize) -> Result<f64> {
            Ok(self.0)
        }
        fn to_json(&self) -> serde_json::Value {
            serde_json::json!(self.0)
        }
    }

    fn member(name: &str, value: f64, errs: Vec<f64>) -> TrainedForecaster {
        TrainedForecaster::new(name, errs, Arc::new(Constant(value))).unwrap()
    }

    #[test]
    fn single_model_passthrough() {
        let data = DMatrix::from_element(10, 1, 100.0);
        let run = run_ensemble(&[member("a", 97.5, vec![1.0, 2.0])], &data, 5..10).unwrap();
        assert_eq!(run.forecasts, vec![97.5; 5]);
        assert!(run_ensemble(&[], &data, 5..10).is_err());
    }

    #[test]
    fn ablation_orders_and_duplicates() {
        let data = DMatrix::from_element(10, 1, 100.0);
        let models = vec![
            member("worse", 90.0, vec![5.0, 5.0]),
            member("best", 101.0, vec![1.0, 1.0]),
        ];
        let steps = ablation(&models, &data, 0, 6..10).unwrap();
        assert_eq!(steps[0].models, vec!["best"]);
        assert_abs_diff_eq!(steps[0].mape, 1.0, epsilon = 1e-12);
        assert_eq!(steps.len(), 2);

        let dup = vec![
            member("best", 101.0, vec![1.0, 1.0]),
            member("best2", 101.0, vec![1.0, 1.0]),
        ];
        let steps = ablation(&dup, &data, 0, 6..10).unwrap();
        assert_eq!(steps[0].mape, steps[1].mape);
        let csv = ablation_csv(&steps).unwrap();
        assert_eq!(csv.lines().nth(2).unwrap(), format!("2,best+best2,{}", steps[1].mape));
    }
}
