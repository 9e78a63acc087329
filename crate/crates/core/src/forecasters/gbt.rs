//! Second-order gradient boosting of regression trees under squared loss.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{check_data, design_row, ForecastTask, Predict, TrainedForecaster};
use crate::error::{Error, Result};
use crate::evaluation::mape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub n_rounds: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf weights.
    pub reg_alpha: f64,
    /// Penalty per leaf.
    pub reg_gamma: f64,
    pub lags: Vec<usize>,
    /// Seasonal difference applied to target and features; 0 disables it.
    pub season: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_rounds: 100,
            max_depth: 3,
            min_leaf: 1,
            learning_rate: 0.1,
            reg_alpha: 1.0,
            reg_gamma: 0.0,
            lags: vec![1, 2, 3, 12],
            season: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        weight: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Axis-aligned regression tree; node 0 is the root. Rows with
/// `x[feature] < threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { weight } => return weight,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    k = if x[feature] < threshold { left } else { right };
                }
            }
        }
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// A boosted ensemble: `base_score + learning_rate · Σ trees`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    pub params: GbtParams,
    /// `½ Σ (y − ŷ)²` on the training rows, before any tree and after each.
    pub train_loss: Vec<f64>,
}

impl GbtModel {
    /// Boosts on the rows of `x` (one sample per row).
    pub fn train(x: &DMatrix<f64>, y: &[f64], params: &GbtParams) -> Result<Self> {
        let n = x.nrows();
        if n != y.len() {
            return Err(Error::LengthMismatch(format!("{n} rows, {} targets", y.len())));
        }
        if params.min_leaf == 0 || params.max_depth == 0 {
            return Err(Error::InvalidArgument(
                "min_leaf and max_depth must be at least 1".into(),
            ));
        }
        if !(params.learning_rate > 0.0 && params.learning_rate <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} outside (0, 1]",
                params.learning_rate
            )));
        }
        if params.reg_alpha < 0.0 || params.reg_gamma < 0.0 {
            return Err(Error::InvalidArgument("regularisation must be non-negative".into()));
        }
        if n < 2 * params.min_leaf {
            return Err(Error::Precondition(format!(
                "{n} training rows cannot hold two leaves of {} rows",
                params.min_leaf
            )));
        }
        let base_score = y.iter().sum::<f64>() / n as f64;
        let mut pred = vec![base_score; n];
        let loss = |pred: &[f64]| 0.5 * pred.iter().zip(y).map(|(p, y)| (y - p).powi(2)).sum::<f64>();
        let mut model = GbtModel {
            base_score,
            learning_rate: params.learning_rate,
            trees: Vec::new(),
            params: params.clone(),
            train_loss: vec![loss(&pred)],
        };
        // Sorted row order per feature, reused at every node.
        let order: Vec<Vec<usize>> = (0..x.ncols())
            .map(|f| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| x[(a, f)].total_cmp(&x[(b, f)]).then(a.cmp(&b)));
                idx
            })
            .collect();

        for round in 0..params.n_rounds {
            let grad: Vec<f64> = pred.iter().zip(y).map(|(p, y)| p - y).collect();
            let mut builder = TreeBuilder {
                x,
                grad: &grad,
                order: &order,
                params,
                nodes: Vec::new(),
            };
            let rows: Vec<bool> = vec![true; n];
            builder.grow(&rows, 0);
            let tree = Tree { nodes: builder.nodes };
            if round == 0 && tree.nodes.len() == 1 {
                // a constant target is already fit by the base score
                if model.train_loss[0] <= 1e-24 * (1.0 + y.iter().map(|v| v * v).sum::<f64>()) {
                    break;
                }
                return Err(Error::Precondition(
                    "no admissible split in the first round; features are degenerate".into(),
                ));
            }
            for (i, p) in pred.iter_mut().enumerate() {
                let row: Vec<f64> = x.row(i).iter().copied().collect();
                *p += params.learning_rate * tree.predict(&row);
            }
            model.train_loss.push(loss(&pred));
            model.trees.push(tree);
        }
        Ok(model)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.predict_rounds(x, self.trees.len())
    }

    /// Prediction using only the first `rounds` trees.
    pub fn predict_rounds(&self, x: &[f64], rounds: usize) -> f64 {
        self.base_score + self.learning_rate * self.trees[..rounds].iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

struct TreeBuilder<'a> {
    x: &'a DMatrix<f64>,
    grad: &'a [f64],
    order: &'a [Vec<usize>],
    params: &'a GbtParams,
    nodes: Vec<Node>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl TreeBuilder<'_> {
    /// Appends the subtree for the rows flagged in `member` and returns its
    /// node index. Hessians are all 1 under squared loss, so `H` is a count.
    fn grow(&mut self, member: &[bool], depth: usize) -> usize {
        let alpha = self.params.reg_alpha;
        let g: f64 = (0..member.len()).filter(|&i| member[i]).map(|i| self.grad[i]).sum();
        let h = member.iter().filter(|&&m| m).count() as f64;
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf {
            weight: -g / (h + alpha),
        });
        if depth >= self.params.max_depth {
            return at;
        }
        let Some(best) = self.best_split(member, g, h) else {
            return at;
        };
        let left_rows: Vec<bool> = (0..member.len())
            .map(|i| member[i] && self.x[(i, best.feature)] < best.threshold)
            .collect();
        let right_rows: Vec<bool> = (0..member.len()).map(|i| member[i] && !left_rows[i]).collect();
        let left = self.grow(&left_rows, depth + 1);
        let right = self.grow(&right_rows, depth + 1);
        self.nodes[at] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        at
    }

    fn best_split(&self, member: &[bool], g: f64, h: f64) -> Option<BestSplit> {
        let alpha = self.params.reg_alpha;
        let min_leaf = self.params.min_leaf as f64;
        let score = |g: f64, h: f64| g * g / (h + alpha);
        let parent = score(g, h);
        let mut best: Option<BestSplit> = None;
        for (f, order) in self.order.iter().enumerate() {
            let (mut gl, mut hl) = (0.0, 0.0);
            let mut prev: Option<f64> = None;
            for &i in order.iter().filter(|&&i| member[i]) {
                let v = self.x[(i, f)];
                if let Some(p) = prev {
                    if v > p && hl >= min_leaf && h - hl >= min_leaf {
                        let gain = 0.5 * (score(gl, hl) + score(g - gl, h - hl) - parent) - self.params.reg_gamma;
                        if gain > 1e-12 * parent.max(1e-300) && best.as_ref().is_none_or(|b| gain > b.gain) {
                            best = Some(BestSplit {
                                gain,
                                feature: f,
                                threshold: 0.5 * (p + v),
                            });
                        }
                    }
                }
                gl += self.grad[i];
                hl += 1.0;
                prev = Some(v);
            }
        }
        best
    }
}

/// Boosting forecaster on seasonally differenced lags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtForecaster {
    pub target: usize,
    pub features: Vec<usize>,
    pub booster: GbtModel,
    /// Trees used at prediction time.
    pub rounds: usize,
}

fn difference(series: &[f64], season: usize) -> Vec<f64> {
    if season == 0 {
        return series.to_vec();
    }
    (0..series.len())
        .map(|t| {
            if t >= season {
                series[t] - series[t - season]
            } else {
                f64::NAN
            }
        })
        .collect()
}

impl GbtForecaster {
    fn first_row(params: &GbtParams) -> usize {
        params.season + params.lags.iter().copied().max().unwrap_or(0).max(1)
    }

    fn regressors(&self, data: &DMatrix<f64>, t: usize) -> Vec<f64> {
        let season = self.booster.params.season;
        let take = |j: usize| difference(&data.column(j).as_slice()[..t], season);
        let series = take(self.target);
        let feats: Vec<Vec<f64>> = self.features.iter().map(|&j| take(j)).collect();
        design_row(&series, &feats, &self.booster.params.lags, t)
    }

    fn predict_with(&self, data: &DMatrix<f64>, t: usize, rounds: usize) -> Result<f64> {
        if t < Self::first_row(&self.booster.params) || t > data.nrows() {
            return Err(Error::InvalidArgument(format!("row {t} lacks lag history")));
        }
        let season = self.booster.params.season;
        let base = if season == 0 {
            0.0
        } else {
            data[(t - season, self.target)]
        };
        Ok(base + self.booster.predict_rounds(&self.regressors(data, t), rounds))
    }
}

impl Predict for GbtForecaster {
    fn predict_at(&self, data: &DMatrix<f64>, t: usize) -> Result<f64> {
        self.predict_with(data, t, self.rounds)
    }

    fn to_json(&self) -> serde_json::Value {
        json!({
            "kind": "gbt",
            "hyper": self.booster.params,
            "features": self.features,
            "base_score": self.booster.base_score,
            "learning_rate": self.booster.learning_rate,
            "trees": self.booster.trees,
        })
    }
}

pub fn fit_gbt(task: &ForecastTask, data: &DMatrix<f64>, params: &GbtParams) -> Result<TrainedForecaster> {
    check_data(task, data)?;
    if params.lags.is_empty() || params.lags.contains(&0) {
        return Err(Error::InvalidArgument("lags must be non-empty and positive".into()));
    }
    let first = task.train_range.start.max(GbtForecaster::first_row(params));
    if first >= task.train_range.end {
        return Err(Error::Precondition(format!(
            "training span {:?} is too short for lags {:?} with season {}",
            task.train_range, params.lags, params.season
        )));
    }
    let series: Vec<f64> = data.column(task.target_column).iter().copied().collect();
    let target = difference(&series, params.season);
    let feats: Vec<Vec<f64>> = task
        .features
        .iter()
        .map(|&j| difference(data.column(j).as_slice(), params.season))
        .collect();
    let span = first..task.train_range.end;
    let rows: Vec<Vec<f64>> = span
        .clone()
        .map(|t| design_row(&target, &feats, &params.lags, t))
        .collect();
    let y: Vec<f64> = span.map(|t| target[t]).collect();
    let x = DMatrix::from_fn(rows.len(), rows[0].len(), |i, c| rows[i][c]);
    let booster = GbtModel::train(&x, &y, params)?;

    let model = GbtForecaster {
        target: task.target_column,
        features: task.features.clone(),
        rounds: booster.trees.len(),
        booster,
    };
    let actual: Vec<f64> = task.validation_range.clone().map(|t| series[t]).collect();
    let mut round_errors = Vec::with_capacity(model.rounds);
    for r in 1..=model.rounds.max(1) {
        let r = r.min(model.rounds);
        let pred = task
            .validation_range
            .clone()
            .map(|t| model.predict_with(data, t, r))
            .collect::<Result<Vec<_>>>()?;
        round_errors.push(mape(&actual, &pred)?);
    }
    TrainedForecaster::new("gbt", round_errors, Arc::new(model))
}
