//! Forecast accuracy statistics: MAPE, Mean-MAPE ± std, Win/Loss against the
//! ensemble, Friedman average ranks and the Wilcoxon signed-rank test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// Largest effective sample size for which the Wilcoxon p-value is exact.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// Mean absolute percentage error, in percent.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch(format!(
            "{} actuals, {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::InvalidArgument("MAPE of an empty series".into()));
    }
    let mut sum = 0.0;
    for (i, (&a, &p)) in actual.iter().zip(predicted).enumerate() {
        if a == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "actual value at index {i} is zero, MAPE undefined"
            )));
        }
        sum += ((a - p) / a).abs();
    }
    Ok(100.0 * sum / actual.len() as f64)
}

/// Arithmetic mean and population standard deviation of per-period MAPEs.
pub fn mean_std_mape(per_period: &[f64]) -> Result<(f64, f64)> {
    if per_period.len() < 2 {
        return Err(Error::Precondition(format!(
            "Mean-MAPE needs at least 2 periods, got {}",
            per_period.len()
        )));
    }
    let n = per_period.len() as f64;
    let mean = per_period.iter().sum::<f64>() / n;
    let var = per_period.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Periods where the ensemble is at least as accurate as the baseline
/// (wins, ties included) and where it is worse (losses).
pub fn win_loss(ensemble: &[f64], baseline: &[f64]) -> Result<(usize, usize)> {
    if ensemble.len() != baseline.len() {
        return Err(Error::LengthMismatch(format!(
            "{} ensemble periods, {} baseline periods",
            ensemble.len(),
            baseline.len()
        )));
    }
    let wins = ensemble.iter().zip(baseline).filter(|(e, b)| e <= b).count();
    Ok((wins, ensemble.len() - wins))
}

/// Ranks of `values` in ascending order, 1-based, ties sharing the average
/// of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

/// Friedman average rank of each model over a `periods × models` grid of
/// errors. Rank 1 is the most accurate.
pub fn friedman_rank(grid: &[Vec<f64>]) -> Result<Vec<f64>> {
    let models = grid.first().map_or(0, Vec::len);
    if grid.is_empty() || models < 2 {
        return Err(Error::Precondition(
            "Friedman ranks need at least one period and two models".into(),
        ));
    }
    let mut sums = vec![0.0; models];
    for (t, row) in grid.iter().enumerate() {
        if row.len() != models {
            return Err(Error::LengthMismatch(format!(
                "period {t} has {} models, expected {models}",
                row.len()
            )));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite error {v} in period {t}")));
        }
        for (s, r) in sums.iter_mut().zip(average_ranks(row)) {
            *s += r;
        }
    }
    Ok(sums.into_iter().map(|s| s / grid.len() as f64).collect())
}

/// Outcome of a two-sided Wilcoxon signed-rank test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// `min(W+, W−)`.
    pub statistic: f64,
    pub p_value: f64,
    /// Pairs left after dropping zero differences.
    pub n_effective: usize,
    pub exact: bool,
    /// Set when every difference is zero; `p_value` is then 1.
    pub degenerate: bool,
}

/// Two-sided Wilcoxon signed-rank test of `a − b`.
///
/// Zero differences are dropped and tied magnitudes share average ranks. For
/// up to [`WILCOXON_EXACT_MAX_N`] pairs the p-value is the exact
/// permutation probability over all sign assignments; above that a normal
/// approximation with tie and continuity corrections is used.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(format!(
            "{} vs {} paired observations",
            a.len(),
            b.len()
        )));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|&v| v != 0.0).collect();
    if let Some(v) = d.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite difference {v}")));
    }
    let n = d.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            p_value: 1.0,
            n_effective: 0,
            exact: true,
            degenerate: true,
        });
    }
    let magnitudes: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = average_ranks(&magnitudes);
    // average ranks are multiples of 1/2
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let plus2: usize = d.iter().zip(&doubled).filter(|(v, _)| **v > 0.0).map(|(_, r)| r).sum();
    let total2: usize = doubled.iter().sum();
    let w2 = plus2.min(total2 - plus2);
    let statistic = w2 as f64 / 2.0;

    if n <= WILCOXON_EXACT_MAX_N {
        let counts = signed_rank_sum_counts(&doubled);
        let tail: u64 = counts[..=w2].iter().sum();
        let p = (2.0 * tail as f64 / (1u64 << n) as f64).min(1.0);
        return Ok(WilcoxonResult {
            statistic,
            p_value: p,
            n_effective: n,
            exact: true,
            degenerate: false,
        });
    }

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = magnitudes.clone();
    sorted.sort_by(f64::total_cmp);
    let mut k = 0;
    while k < n {
        let mut e = k + 1;
        while e < n && sorted[e] == sorted[k] {
            e += 1;
        }
        let t = (e - k) as f64;
        tie_term += t * t * t - t;
        k = e;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let z = ((statistic - mean).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(WilcoxonResult {
        statistic,
        p_value: (2.0 * normal::cdf(-z)).min(1.0),
        n_effective: n,
        exact: false,
        degenerate: false,
    })
}

/// Number of sign assignments giving each (doubled) positive-rank sum.
fn signed_rank_sum_counts(doubled_ranks: &[usize]) -> Vec<u64> {
    let total: usize = doubled_ranks.iter().sum();
    let mut counts = vec![0u64; total + 1];
    counts[0] = 1;
    let mut reach = 0;
    for &r in doubled_ranks {
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    counts
}

/// Accuracy summary of a set of forecasters against the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub periods: Vec<String>,
    /// Model names, the ensemble included.
    pub models: Vec<String>,
    pub ensemble: String,
    /// `periods × models`, in percent.
    pub per_period_mape: Vec<Vec<f64>>,
    pub mean_mape: Vec<f64>,
    pub std_mape: Vec<f64>,
    /// `(wins, losses)` of the ensemble against each model; for the ensemble
    /// itself, the totals over all baselines.
    pub win_loss: Vec<(usize, usize)>,
    pub f_rank: Vec<f64>,
    /// Wilcoxon test of the ensemble against each baseline; `None` for the
    /// ensemble column.
    pub wilcoxon: Vec<Option<WilcoxonResult>>,
}

/// Assembles the report from a `periods × models` MAPE grid.
pub fn build_report_from_mape(
    periods: Vec<String>,
    models: Vec<String>,
    grid: Vec<Vec<f64>>,
    ensemble: &str,
) -> Result<EvaluationReport> {
    let ens = models
        .iter()
        .position(|m| m == ensemble)
        .ok_or_else(|| Error::InvalidArgument(format!("no ensemble column '{ensemble}'")))?;
    if grid.len() != periods.len() {
        return Err(Error::LengthMismatch(format!(
            "{} periods, {} grid rows",
            periods.len(),
            grid.len()
        )));
    }
    let column = |k: usize| -> Vec<f64> { grid.iter().map(|row| row[k]).collect() };
    let f_rank = friedman_rank(&grid)?;
    let ens_col = column(ens);
    let mut mean_mape = Vec::with_capacity(models.len());
    let mut std_mape = Vec::with_capacity(models.len());
    let mut win_loss_v = Vec::with_capacity(models.len());
    let mut wilcoxon = Vec::with_capacity(models.len());
    let mut totals = (0, 0);
    for (k, name) in models.iter().enumerate() {
        let col = column(k);
        if col.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument(format!("negative MAPE for '{name}'")));
        }
        let (m, s) = mean_std_mape(&col)?;
        mean_mape.push(m);
        std_mape.push(s);
        if k == ens {
            win_loss_v.push((0, 0));
            wilcoxon.push(None);
        } else {
            let wl = win_loss(&ens_col, &col)?;
            totals.0 += wl.0;
            totals.1 += wl.1;
            win_loss_v.push(wl);
            wilcoxon.push(Some(wilcoxon_signed_rank(&ens_col, &col)?));
        }
    }
    win_loss_v[ens] = totals;
    Ok(EvaluationReport {
        periods,
        models,
        ensemble: ensemble.to_string(),
        per_period_mape: grid,
        mean_mape,
        std_mape,
        win_loss: win_loss_v,
        f_rank,
        wilcoxon,
    })
}

/// Assembles the report from actuals and each model's per-period forecasts.
pub fn build_report(
    periods: Vec<String>,
    actuals: &[f64],
    forecasts: &[(String, Vec<f64>)],
    ensemble: &str,
) -> Result<EvaluationReport> {
    if periods.len() != actuals.len() {
        return Err(Error::LengthMismatch(format!(
            "{} period labels for {} actuals",
            periods.len(),
            actuals.len()
        )));
    }
    let mut grid = vec![Vec::with_capacity(forecasts.len()); actuals.len()];
    for (name, preds) in forecasts {
        if preds.len() != actuals.len() {
            return Err(Error::LengthMismatch(format!(
                "'{name}' has {} forecasts for {} periods",
                preds.len(),
                actuals.len()
            )));
        }
        for (t, (&a, &p)) in actuals.iter().zip(preds).enumerate() {
            grid[t].push(mape(&[a], &[p])?);
        }
    }
    build_report_from_mape(
        periods,
        forecasts.iter().map(|(n, _)| n.clone()).collect(),
        grid,
        ensemble,
    )
}

impl EvaluationReport {
    /// CSV with models as columns, one row per period and the summary rows
    /// `mean_mape`, `std_mape`, `win_loss`, `f_rank` and `p_value` appended.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["period".to_string()];
        header.extend(self.models.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.periods.iter().zip(&self.per_period_mape) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        let summary: [(&str, Vec<String>); 5] = [
            ("mean_mape", self.mean_mape.iter().map(f64::to_string).collect()),
            ("std_mape", self.std_mape.iter().map(f64::to_string).collect()),
            (
                "win_loss",
                self.win_loss.iter().map(|(w, l)| format!("{w}/{l}")).collect(),
            ),
            ("f_rank", self.f_rank.iter().map(f64::to_string).collect()),
            (
                "p_value",
                self.wilcoxon
                    .iter()
                    .map(|t| t.map_or_else(|| "-".to_string(), |t| t.p_value.to_string()))
                    .collect(),
            ),
        ];
        for (label, cells) in summary {
            let mut rec = vec![label.to_string()];
            rec.extend(cells);
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("<report csv>", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn model_index(&self, name: &str) -> Option<usize> {
        self.models.iter().position(|m| m == name)
    }
}
