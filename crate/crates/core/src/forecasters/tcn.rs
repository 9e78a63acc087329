//! Single-channel dilated causal convolution network.
//!
//! Each layer computes `h = tanh(conv(h_prev, kernel, dilation) + bias)`; the
//! head reads `hidden·h_last + skip·x + bias` at position `s` as the forecast
//! of position `s + 1`. The network runs on the standardized target series.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_data, ForecastTask, Predict, Standardizer, TrainedForecaster};
use crate::error::{Error, Result};
use crate::evaluation::mape;
use crate::rng::{derive_seed, rng_from_seed};

/// `out[s] = Σ_i f[i] · x[s − ν·i]`, with indices before the start read as 0.
pub fn dilated_causal_conv(x: &[f64], f: &[f64], dilation: usize) -> Result<Vec<f64>> {
    if x.is_empty() || f.is_empty() {
        return Err(Error::InvalidArgument("empty series or kernel".into()));
    }
    if dilation == 0 {
        return Err(Error::InvalidArgument("dilation must be at least 1".into()));
    }
    Ok(conv(x, f, dilation, 0.0))
}

fn conv(x: &[f64], f: &[f64], dilation: usize, bias: f64) -> Vec<f64> {
    (0..x.len())
        .map(|s| {
            bias + f
                .iter()
                .enumerate()
                .take_while(|(i, _)| i * dilation <= s)
                .map(|(i, w)| w * x[s - i * dilation])
                .sum::<f64>()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TcnParams {
    pub kernel_size: usize,
    /// One layer per entry.
    pub dilations: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for TcnParams {
    fn default() -> Self {
        TcnParams {
            kernel_size: 3,
            dilations: vec![1, 2],
            epochs: 200,
            learning_rate: 0.01,
        }
    }
}

impl TcnParams {
    pub fn receptive_field(&self) -> usize {
        1 + self.kernel_size.saturating_sub(1) * self.dilations.iter().sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnLayer {
    pub kernel: Vec<f64>,
    pub dilation: usize,
    pub bias: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcnHead {
    pub hidden: f64,
    pub skip: f64,
    pub bias: f64,
}

/// Network weights plus the scaling of the series they were trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcnModel {
    pub layers: Vec<TcnLayer>,
    pub head: TcnHead,
    pub scaler: Standardizer,
    pub target: usize,
    pub params: TcnParams,
}

impl TcnModel {
    /// Random weights; biases start at zero.
    pub fn init(params: &TcnParams, seed: u64) -> Result<Self> {
        if params.kernel_size == 0 || params.dilations.is_empty() || params.dilations.contains(&0) {
            return Err(Error::InvalidArgument(
                "kernel size, layer count and dilations must be positive".into(),
            ));
        }
        let mut rng = rng_from_seed(seed);
        let scale = 1.0 / (params.kernel_size as f64).sqrt();
        let normal = Normal::new(0.0, scale).expect("positive scale");
        let layers = params
            .dilations
            .iter()
            .map(|&dilation| TcnLayer {
                kernel: (0..params.kernel_size).map(|_| normal.sample(&mut rng)).collect(),
                dilation,
                bias: 0.0,
            })
            .collect();
        let head = TcnHead {
            hidden: normal.sample(&mut rng),
            skip: normal.sample(&mut rng),
            bias: 0.0,
        };
        Ok(TcnModel {
            layers,
            head,
            scaler: Standardizer { mean: 0.0, scale: 1.0 },
            target: 0,
            params: params.clone(),
        })
    }

    pub fn receptive_field(&self) -> usize {
        1 + self
            .layers
            .iter()
            .map(|l| (l.kernel.len() - 1) * l.dilation)
            .sum::<usize>()
    }

    /// Activations of every layer on the standardized series `x`.
    pub fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = acts.last().map_or(x, Vec::as_slice);
            let h = conv(input, &layer.kernel, layer.dilation, layer.bias)
                .into_iter()
                .map(f64::tanh)
                .collect();
            acts.push(h);
        }
        acts
    }

    /// Head output at every position of the standardized series.
    pub fn outputs(&self, x: &[f64]) -> Vec<f64> {
        let acts = self.activations(x);
        let last = acts.last().expect("at least one layer");
        x.iter()
            .zip(last)
            .map(|(x, h)| self.head.hidden * h + self.head.skip * x + self.head.bias)
            .collect()
    }

    /// Number of trainable weights.
    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.kernel.len() + 1).sum::<usize>() + 3
    }

    /// Weights flattened layer by layer (kernel, then bias), head last.
    pub fn weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            w.extend_from_slice(&l.kernel);
            w.push(l.bias);
        }
        w.extend([self.head.hidden, self.head.skip, self.head.bias]);
        w
    }

    pub fn set_weights(&mut self, w: &[f64]) {
        assert_eq!(w.len(), self.n_params());
        let mut k = 0;
        for l in &mut self.layers {
            let j = l.kernel.len();
            l.kernel.copy_from_slice(&w[k..k + j]);
            l.bias = w[k + j];
            k += j + 1;
        }
        self.head = TcnHead {
            hidden: w[k],
            skip: w[k + 1],
            bias: w[k + 2],
        };
    }

    /// Mean squared one-step error over `positions` of the standardized
    /// series and its gradient in [`weights`](Self::weights) order.
    pub fn loss_and_grad(&self, x: &[f64], positions: Range<usize>) -> (f64, Vec<f64>) {
        assert!(positions.end < x.len() && !positions.is_empty());
        let n = x.len();
        let count = positions.len() as f64;
        let acts = self.activations(x);
        let last = acts.last().expect("at least one layer");

        let mut loss = 0.0;
        let mut d_out = vec![0.0; n];
        for s in positions {
            let o = self.head.hidden * last[s] + self.head.skip * x[s] + self.head.bias;
            let e = o - x[s + 1];
            loss += e * e / count;
            d_out[s] = 2.0 * e / count;
        }
        let head_grad = [
            d_out.iter().zip(last).map(|(d, h)| d * h).sum::<f64>(),
            d_out.iter().zip(x).map(|(d, x)| d * x).sum::<f64>(),
            d_out.iter().sum::<f64>(),
        ];

        // Back through the layers, last to first.
        let mut layer_grads: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut d_h: Vec<f64> = d_out.iter().map(|d| d * self.head.hidden).collect();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let h = &acts[li];
            let input = if li == 0 { x } else { &acts[li - 1] };
            let d_pre: Vec<f64> = d_h.iter().zip(h).map(|(d, h)| d * (1.0 - h * h)).collect();
            let mut g = vec![0.0; layer.kernel.len() + 1];
            let mut d_in = vec![0.0; n];
            for s in 0..n {
                if d_pre[s] == 0.0 {
                    continue;
                }
                for (i, w) in layer.kernel.iter().enumerate() {
                    let lag = i * layer.dilation;
                    if lag > s {
                        break;
                    }
                    g[i] += d_pre[s] * input[s - lag];
                    d_in[s - lag] += d_pre[s] * w;
                }
                g[layer.kernel.len()] += d_pre[s];
            }
            layer_grads.push(g);
            d_h = d_in;
        }
        let mut grad: Vec<f64> = layer_grads.into_iter().rev().flatten().collect();
        grad.extend(head_grad);
        (loss, grad)
    }

    fn standardized(&self, data: &DMatrix<f64>, end: usize) -> Vec<f64> {
        (0..end).map(|t| self.scaler.forward(data[(t, self.target)])).collect()
    }

    /// One-step forecasts for each row in `range`, from a single pass.
    fn forecast_range(&self, data: &DMatrix<f64>, range: Range<usize>) -> Vec<f64> {
        let out = self.outputs(&self.standardized(data, range.end - 1));
        range.map(|t| self.scaler.inverse(out[t - 1])).collect()
    }
}

impl Predict for TcnModel {
    fn predict_at(&self, data: &DMatrix<f64>, t: usize) -> Result<f64> {
        if t == 0 || t > data.nrows() {
            return Err(Error::InvalidArgument(format!("row {t} has no history")));
        }
        Ok(self.forecast_range(data, t..t + 1)[0])
    }

    fn to_json(&self) -> serde_json::Value {
        json!({
            "kind": "tcn",
            "hyper": self.params,
            "layers": self.layers,
            "head": self.head,
            "scaler": self.scaler,
        })
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            lr,
        }
    }

    fn update(&mut self, w: &mut [f64], g: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for k in 0..w.len() {
            self.m[k] = Self::BETA1 * self.m[k] + (1.0 - Self::BETA1) * g[k];
            self.v[k] = Self::BETA2 * self.v[k] + (1.0 - Self::BETA2) * g[k] * g[k];
            w[k] -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + Self::EPS);
        }
    }
}

/// Full-batch training on the standardized target; one epoch per round.
pub fn fit_tcn(task: &ForecastTask, data: &DMatrix<f64>, params: &TcnParams, seed: u64) -> Result<TrainedForecaster> {
    check_data(task, data)?;
    if params.epochs == 0 || !(params.learning_rate > 0.0) {
        return Err(Error::InvalidArgument(
            "epochs and learning rate must be positive".into(),
        ));
    }
    let rf = params.receptive_field();
    let train = task.train_range.clone();
    if train.len() <= rf {
        return Err(Error::Precondition(format!(
            "training span of {} rows does not exceed the receptive field {rf}",
            train.len()
        )));
    }
    let mut model = TcnModel::init(params, derive_seed(seed, "tcn"))?;
    model.target = task.target_column;
    let train_values: Vec<f64> = train.clone().map(|t| data[(t, task.target_column)]).collect();
    model.scaler = Standardizer::fit(&train_values);

    let x = model.standardized(data, train.end);
    let positions = train.start + rf - 1..train.end - 1;
    let actual: Vec<f64> = task
        .validation_range
        .clone()
        .map(|t| data[(t, task.target_column)])
        .collect();
    let mut w = model.weights();
    let mut adam = Adam::new(w.len(), params.learning_rate);
    let mut round_errors = Vec::with_capacity(params.epochs);
    for epoch in 0..params.epochs {
        let (loss, grad) = model.loss_and_grad(&x, positions.clone());
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "training diverged at epoch {epoch} (loss {loss}); lower the learning rate"
            )));
        }
        adam.update(&mut w, &grad);
        model.set_weights(&w);
        let pred = model.forecast_range(data, task.validation_range.clone());
        if pred.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical(format!("non-finite forecast after epoch {epoch}")));
        }
        round_errors.push(mape(&actual, &pred)?);
    }
    TrainedForecaster::new("tcn", round_errors, Arc::new(model))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_kernel() {
        let x = [3.0, -1.0, 4.0, 1.5];
        for nu in 1..4 {
            assert_eq!(dilated_causal_conv(&x, &[1.0], nu).unwrap(), x.to_vec());
        }
    }

    #[test]
    fn dilated_sum_by_hand() {
        let out = dilated_causal_conv(&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 1.0], 2).unwrap();
        assert_eq!(out, vec![1.0, 2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn conv_rejects_empty() {
        assert!(dilated_causal_conv(&[], &[1.0], 1).is_err());
        assert!(dilated_causal_conv(&[1.0], &[], 1).is_err());
        assert!(dilated_causal_conv(&[1.0], &[1.0], 0).is_err());
    }

    #[test]
    fn network_is_causal() {
        let x: Vec<f64> = (0..30).map(|k| (k as f64 * 0.3).sin()).collect();
        for dilations in [vec![1], vec![1, 2], vec![2, 1, 4], vec![3, 3]] {
            for kernel_size in [1, 2, 3] {
                let p = TcnParams {
                    kernel_size,
                    dilations: dilations.clone(),
                    ..TcnParams::default()
                };
                let m = TcnModel::init(&p, 7).unwrap();
                let base = m.outputs(&x);
                for s in 0..x.len() - 1 {
                    let mut y = x.clone();
                    y[s + 1] += 10.0;
                    let out = m.outputs(&y);
                    assert_eq!(&out[..=s], &base[..=s], "{dilations:?} k={kernel_size} s={s}");
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let x: Vec<f64> = (0..20).map(|k| (k as f64 * 0.7).sin() + 0.1 * k as f64).collect();
        let mut m = TcnModel::init(&TcnParams::default(), 3).unwrap();
        let mut w = m.weights();
        for (k, v) in w.iter_mut().enumerate() {
            *v += 0.05 * k as f64 - 0.2;
        }
        m.set_weights(&w);
        let positions = 4..19;
        let (_, grad) = m.loss_and_grad(&x, positions.clone());
        let h = 1e-6;
        for k in 0..w.len() {
            let mut probe = m.clone();
            let mut wp = w.clone();
            wp[k] += h;
            probe.set_weights(&wp);
            let up = probe.loss_and_grad(&x, positions.clone()).0;
            wp[k] -= 2.0 * h;
            probe.set_weights(&wp);
            let down = probe.loss_and_grad(&x, positions.clone()).0;
            let numeric = (up - down) / (2.0 * h);
            let rel = (grad[k] - numeric).abs() / grad[k].abs().max(numeric.abs()).max(1e-8);
            assert!(rel < 1e-4, "weight {k}: analytic {} numeric {numeric}", grad[k]);
        }
    }

    #[test]
    fn constant_series_fits() {
        let data = DMatrix::from_element(60, 1, 250.0);
        let task = ForecastTask::holdout(60, 0, 12, 12).unwrap();
        let f = fit_tcn(
            &task,
            &data,
            &TcnParams {
                epochs: 50,
                ..TcnParams::default()
            },
            1,
        )
        .unwrap();
        assert_eq!(f.rounds(), 50);
        assert!(*f.round_errors.last().unwrap() < 1.0);
    }

    #[test]
    fn learns_a_smooth_series() {
        let data = DMatrix::from_fn(100, 1, |t, _| 50.0 + 10.0 * (t as f64 * 0.5).sin());
        let task = ForecastTask::holdout(100, 0, 10, 10).unwrap();
        let f = fit_tcn(
            &task,
            &data,
            &TcnParams {
                epochs: 400,
                ..TcnParams::default()
            },
            5,
        )
        .unwrap();
        assert!(
            f.round_errors[399] < 0.5 * f.round_errors[0],
            "{} vs {}",
            f.round_errors[399],
            f.round_errors[0]
        );
    }

    #[test]
    fn receptive_field_too_long() {
        let data = DMatrix::from_element(30, 1, 1.0);
        let task = ForecastTask::holdout(30, 0, 12, 12).unwrap();
        let p = TcnParams {
            dilations: vec![1, 2],
            kernel_size: 3,
            ..TcnParams::default()
        };
        assert_eq!(p.receptive_field(), 7);
        let err = fit_tcn(&task, &data, &p, 0).unwrap_err();
        assert_eq!(err.category(), "precondition");
    }

    #[test]
    fn divergence_is_reported() {
        let data = DMatrix::from_fn(60, 1, |t, _| 10.0 + (t % 5) as f64);
        let task = ForecastTask::holdout(60, 0, 6, 6).unwrap();
        let p = TcnParams {
            learning_rate: 1e200,
            epochs: 20,
            ..TcnParams::default()
        };
        let err = fit_tcn(&task, &data, &p, 0).unwrap_err();
        assert_eq!(err.category(), "numerical");
    }

    #[test]
    fn same_seed_same_model() {
        let data = DMatrix::from_fn(60, 1, |t, _| 10.0 + (t % 7) as f64);
        let task = ForecastTask::holdout(60, 0, 6, 6).unwrap();
        let a = fit_tcn(
            &task,
            &data,
            &TcnParams {
                epochs: 30,
                ..TcnParams::default()
            },
            9,
        )
        .unwrap();
        let b = fit_tcn(
            &task,
            &data,
            &TcnParams {
                epochs: 30,
                ..TcnParams::default()
            },
            9,
        )
        .unwrap();
        assert_eq!(a.round_errors, b.round_errors);
        assert_eq!(a.to_json(), b.to_json());
    }
}
