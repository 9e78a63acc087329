//! Experiment driver behind the `sparsecast` binary.
//!
//! A run is configured by one JSON document ([`ExperimentConfig`]); the
//! `--out` and `--seed` flags override its keys. Every command writes the
//! resolved config next to its artifacts, and all outputs are a pure
//! function of the config and input files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::info;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::copula::{em_fit, impute, mean_impute, recovery_mae, CopulaModel, EmConfig};
use crate::dataset::{
    apply_mask, format_timestamp, gen_seasonal_load, load_csv, load_csv_continuous, MaskRecord, ObservationMatrix,
    Schema, SeasonalParams,
};
use crate::ensemble::{ablation, ablation_csv, run_ensemble, AblationStep, EnsembleRun};
use crate::error::Error;
use crate::evaluation::{build_report, EvaluationReport};
use crate::forecasters::{ForecastTask, ForecasterSpec, TrainedForecaster};
use crate::rng::derive_seed;

/// Name of the ensemble column in reports.
pub const ENSEMBLE: &str = "ensemble";

#[derive(Debug, Parser)]
#[command(
    name = "sparsecast",
    version,
    about = "Sparse multivariate forecasting with copula imputation and adaptive ensembles"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment config; defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Root seed (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic panel and its masked copy.
    Synth,
    /// Mask, fit the copula and write the completed panel.
    Impute,
    /// Full pipeline: impute, fit the roster, ensemble and evaluate.
    Run,
    /// Ablation path over the roster.
    Ablate,
    /// Recompute the report from stored forecasts.
    Eval {
        /// CSV with a period column followed by one column per model.
        #[arg(long)]
        forecasts: PathBuf,
        /// CSV with a period column and the actual values.
        #[arg(long)]
        actuals: PathBuf,
        /// Column of `forecasts` holding the ensemble.
        #[arg(long, default_value = ENSEMBLE)]
        ensemble: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SeasonalParams),
    Csv {
        path: PathBuf,
        /// Column kinds; all continuous when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schema: Option<Schema>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    /// Share of observed cells erased before imputation; 0 disables masking.
    pub fraction: f64,
    /// Mask seed; derived from the root seed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            fraction: 0.1,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    pub target: String,
    pub horizon: usize,
    pub validation: usize,
    /// Extra regressor columns, by name.
    pub features: Vec<String>,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            target: "load".into(),
            horizon: 12,
            validation: 12,
            features: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    pub mask: MaskConfig,
    pub copula: EmConfig,
    pub roster: Vec<ForecasterSpec>,
    pub task: TaskConfig,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            data: DataSource::Synthetic(SeasonalParams::default()),
            mask: MaskConfig::default(),
            copula: EmConfig::default(),
            roster: ForecasterSpec::default_roster(),
            task: TaskConfig::default(),
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(0.0..=1.0).contains(&self.mask.fraction) {
            return Err(Error::InvalidArgument(format!(
                "mask fraction {} outside [0, 1]",
                self.mask.fraction
            )));
        }
        if self.roster.is_empty() {
            return Err(Error::InvalidArgument("forecaster roster is empty".into()));
        }
        if self.task.horizon == 0 || self.task.validation == 0 {
            return Err(Error::InvalidArgument(
                "horizon and validation must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn mask_seed(&self) -> u64 {
        self.mask.seed.unwrap_or_else(|| derive_seed(self.seed, "mask"))
    }
}

/// A failure tagged with the pipeline stage it came from.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage: {}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

impl StageError {
    pub fn category(&self) -> &'static str {
        self.source.category()
    }

    /// `error[<category>]: <message>` on a single line.
    pub fn one_line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {msg}", self.category())
    }
}

trait Stage<T> {
    fn stage(self, stage: &'static str) -> Result<T, StageError>;
}

impl<T> Stage<T> for Result<T, Error> {
    fn stage(self, stage: &'static str) -> Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

pub type CliResult<T> = Result<T, StageError>;

/// Resolves the config from the flags and runs the chosen command.
pub fn run_cli(cli: Cli) -> CliResult<PathBuf> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path).stage("config")?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = cli.out {
        config.out = out;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate().stage("config")?;
    match cli.command {
        Command::Synth => cmd_synth(&config),
        Command::Impute => cmd_impute(&config).map(|_| ()),
        Command::Run => cmd_run(&config).map(|_| ()),
        Command::Ablate => cmd_ablate(&config).map(|_| ()),
        Command::Eval {
            forecasts,
            actuals,
            ensemble,
        } => cmd_eval(&config, &forecasts, &actuals, &ensemble).map(|_| ()),
    }?;
    Ok(config.out)
}

struct Output<'a> {
    dir: &'a Path,
}

impl<'a> Output<'a> {
    fn create(config: &'a ExperimentConfig) -> CliResult<Self> {
        let dir = config.out.as_path();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)).stage("output")?;
        let out = Output { dir };
        out.json(
            "config.json",
            &serde_json::to_value(config).map_err(Error::from).stage("output")?,
        )?;
        Ok(out)
    }

    fn text(&self, name: &str, body: &str) -> CliResult<()> {
        let path = self.dir.join(name);
        info!("writing {}", path.display());
        fs::write(&path, body).map_err(|e| Error::io(&path, e)).stage("output")
    }

    fn json(&self, name: &str, value: &serde_json::Value) -> CliResult<()> {
        let mut body = serde_json::to_string_pretty(value)
            .map_err(Error::from)
            .stage("output")?;
        body.push('\n');
        self.text(name, &body)
    }

    fn matrix(&self, name: &str, m: &ObservationMatrix) -> CliResult<()> {
        let mut buf = Vec::new();
        m.write_csv(&mut buf).stage("output")?;
        self.text(name, &String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

fn load_data(config: &ExperimentConfig) -> Result<ObservationMatrix, Error> {
    match &config.data {
        DataSource::Synthetic(params) => gen_seasonal_load(params, derive_seed(config.seed, "data")),
        DataSource::Csv {
            path,
            schema: Some(schema),
        } => load_csv(path, schema),
        DataSource::Csv { path, schema: None } => load_csv_continuous(path),
    }
}

/// Source panel, masked copy and the mask record (with ground truth).
fn load_and_mask(config: &ExperimentConfig) -> CliResult<(ObservationMatrix, ObservationMatrix, Option<MaskRecord>)> {
    let source = load_data(config).stage("data")?;
    info!("loaded {} x {} panel", source.rows(), source.cols());
    if config.mask.fraction == 0.0 {
        return Ok((source.clone(), source, None));
    }
    let (masked, record) = apply_mask(&source, config.mask.fraction, config.mask_seed()).stage("mask")?;
    info!("masked {} cells", record.erased_cells.len());
    Ok((source, masked, Some(record)))
}

fn mask_json(record: &MaskRecord) -> serde_json::Value {
    json!({
        "seed": record.seed,
        "fraction": record.fraction,
        "cells": record.erased_cells,
        "truth": record.truth,
    })
}

pub fn cmd_synth(config: &ExperimentConfig) -> CliResult<()> {
    if !matches!(config.data, DataSource::Synthetic(_)) {
        return Err(Error::InvalidArgument("synth needs a synthetic data source".into())).stage("config");
    }
    let (source, masked, record) = load_and_mask(config)?;
    let out = Output::create(config)?;
    out.matrix("data.csv", &source)?;
    if let Some(record) = record {
        out.matrix("masked.csv", &masked)?;
        out.json("truth.json", &mask_json(&record))?;
    }
    Ok(())
}

/// Copula fit on the masked panel and the completed result.
pub struct Completion {
    pub source: ObservationMatrix,
    pub masked: ObservationMatrix,
    pub record: Option<MaskRecord>,
    pub model: CopulaModel,
    pub completed: ObservationMatrix,
    pub recovery: Option<serde_json::Value>,
}

fn complete(config: &ExperimentConfig) -> CliResult<Completion> {
    let (source, masked, mut record) = load_and_mask(config)?;
    let model = em_fit(&masked, &config.copula).stage("impute")?;
    info!(
        "copula EM: {} iterations, converged = {}",
        model.em_trace.len(),
        model.converged
    );
    let completed = impute(&model, &masked).stage("impute")?.completed;
    let recovery = match record.as_mut() {
        Some(r) => {
            r.attach_truth(&source).stage("impute")?;
            let copula_mae = recovery_mae(&completed, r).stage("impute")?;
            let baseline = mean_impute(&masked).stage("impute")?;
            let mean_mae = recovery_mae(&baseline, r).stage("impute")?;
            Some(json!({
                "cells": r.erased_cells.len(),
                "copula_mae": copula_mae,
                "mean_imputation_mae": mean_mae,
                "ratio": if mean_mae > 0.0 { copula_mae / mean_mae } else { 0.0 },
            }))
        }
        None => None,
    };
    Ok(Completion {
        source,
        masked,
        record,
        model,
        completed,
        recovery,
    })
}

fn write_completion(out: &Output, c: &Completion) -> CliResult<()> {
    out.matrix("completed.csv", &c.completed)?;
    out.json(
        "copula.json",
        &serde_json::to_value(&c.model).map_err(Error::from).stage("output")?,
    )?;
    if let Some(record) = &c.record {
        out.json("mask.json", &mask_json(record))?;
    }
    if let Some(recovery) = &c.recovery {
        out.json("recovery.json", recovery)?;
    }
    Ok(())
}

pub fn cmd_impute(config: &ExperimentConfig) -> CliResult<Completion> {
    let c = complete(config)?;
    let out = Output::create(config)?;
    write_completion(&out, &c)?;
    Ok(c)
}

fn resolve_task(config: &ExperimentConfig, panel: &ObservationMatrix) -> Result<ForecastTask, Error> {
    let column = |name: &str| {
        panel
            .column_index(name)
            .ok_or_else(|| Error::InvalidArgument(format!("no column named '{name}'")))
    };
    let mut task = ForecastTask::holdout(
        panel.rows(),
        column(&config.task.target)?,
        config.task.validation,
        config.task.horizon,
    )?;
    task.features = config
        .task
        .features
        .iter()
        .map(|f| column(f))
        .collect::<Result<_, _>>()?;
    task.validate(panel.rows(), panel.cols())?;
    Ok(task)
}

/// Fits every roster entry in parallel. Names repeat-suffixed to stay unique.
pub fn fit_roster(
    roster: &[ForecasterSpec],
    task: &ForecastTask,
    data: &DMatrix<f64>,
    seed: u64,
) -> Result<Vec<TrainedForecaster>, Error> {
    let names = unique_names(roster);
    roster
        .par_iter()
        .zip(names.par_iter())
        .map(|(spec, name)| {
            let mut f = spec.fit(task, data, derive_seed(seed, name))?;
            info!("fitted {name}: {} rounds", f.rounds());
            f.name = name.clone();
            Ok(f)
        })
        .collect()
}

fn unique_names(roster: &[ForecasterSpec]) -> Vec<String> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    roster
        .iter()
        .map(|s| {
            let n = seen.entry(s.name()).or_insert(0);
            *n += 1;
            if *n == 1 {
                s.name().to_string()
            } else {
                format!("{}_{}", s.name(), n)
            }
        })
        .collect()
}

/// Everything `run` produces.
pub struct RunOutput {
    pub completion: Completion,
    pub task: ForecastTask,
    pub models: Vec<TrainedForecaster>,
    pub ensemble: EnsembleRun,
    pub report: EvaluationReport,
}

fn periods(panel: &ObservationMatrix, range: std::ops::Range<usize>) -> Vec<String> {
    range.map(|t| format_timestamp(&panel.time_index()[t])).collect()
}

fn fit_stage(
    config: &ExperimentConfig,
    c: &Completion,
) -> CliResult<(ForecastTask, DMatrix<f64>, Vec<TrainedForecaster>)> {
    let task = resolve_task(config, &c.completed).stage("task")?;
    let data = c.completed.to_dense().stage("fit")?;
    let models = fit_roster(&config.roster, &task, &data, derive_seed(config.seed, "fit")).stage("fit")?;
    Ok((task, data, models))
}

pub fn cmd_run(config: &ExperimentConfig) -> CliResult<RunOutput> {
    let completion = complete(config)?;
    let (task, data, models) = fit_stage(config, &completion)?;
    let span = task.test_range();
    let ensemble = run_ensemble(&models, &data, span.clone()).stage("ensemble")?;
    let labels = periods(&completion.completed, span.clone());
    let actual: Vec<f64> = span.clone().map(|t| data[(t, task.target_column)]).collect();
    let mut columns: Vec<(String, Vec<f64>)> = models
        .iter()
        .zip(&ensemble.member_forecasts)
        .map(|(m, f)| (m.name.clone(), f.clone()))
        .collect();
    columns.push((ENSEMBLE.to_string(), ensemble.forecasts.clone()));
    let report = build_report(labels.clone(), &actual, &columns, ENSEMBLE).stage("evaluate")?;

    let out = Output::create(config)?;
    write_completion(&out, &completion)?;
    out.json(
        "models.json",
        &json!(models.iter().map(TrainedForecaster::to_json).collect::<Vec<_>>()),
    )?;
    out.text(
        "forecasts.csv",
        &forecasts_csv(&labels, &actual, &columns).stage("output")?,
    )?;
    out.text("trace.csv", &ensemble.trace.to_csv().stage("output")?)?;
    out.json(
        "ensemble.json",
        &serde_json::to_value(&ensemble.state)
            .map_err(Error::from)
            .stage("output")?,
    )?;
    out.json(
        "report.json",
        &serde_json::to_value(&report).map_err(Error::from).stage("output")?,
    )?;
    out.text("report.csv", &report.to_csv().stage("output")?)?;
    Ok(RunOutput {
        completion,
        task,
        models,
        ensemble,
        report,
    })
}

pub fn cmd_ablate(config: &ExperimentConfig) -> CliResult<Vec<AblationStep>> {
    if config.roster.len() < 2 {
        return Err(Error::InvalidArgument("ablation needs at least two models".into())).stage("config");
    }
    let completion = complete(config)?;
    let (task, data, models) = fit_stage(config, &completion)?;
    let steps = ablation(&models, &data, task.target_column, task.test_range()).stage("ablate")?;
    let out = Output::create(config)?;
    out.text("ablation.csv", &ablation_csv(&steps).stage("output")?)?;
    Ok(steps)
}

/// `period,actual,<model>...` rows.
pub fn forecasts_csv(labels: &[String], actual: &[f64], columns: &[(String, Vec<f64>)]) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["period".to_string(), "actual".to_string()];
    header.extend(columns.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    for (i, label) in labels.iter().enumerate() {
        let mut rec = vec![label.clone(), actual[i].to_string()];
        rec.extend(columns.iter().map(|(_, v)| v[i].to_string()));
        w.write_record(&rec)?;
    }
    crate::ensemble::finish_csv(w)
}

/// Column names, period labels and numeric rows of a table.
type Table = (Vec<String>, Vec<String>, Vec<Vec<f64>>);

/// Header and rows of a CSV whose first column is a period label.
fn read_table(path: &Path) -> Result<Table, Error> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema(format!("{}: {other:?}", path.display())),
    })?;
    let header: Vec<String> = rdr.headers()?.iter().skip(1).map(|h| h.trim().to_string()).collect();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        labels.push(rec.get(0).unwrap_or_default().trim().to_string());
        let row = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(c, tok)| {
                tok.trim().parse::<f64>().map_err(|_| Error::NotNumeric {
                    line,
                    column: header.get(c).cloned().unwrap_or_default(),
                    token: tok.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Empty(format!("{} has no data rows", path.display())));
    }
    Ok((header, labels, rows))
}

pub fn cmd_eval(
    config: &ExperimentConfig,
    forecasts: &Path,
    actuals: &Path,
    ensemble: &str,
) -> CliResult<EvaluationReport> {
    let (models, labels, grid) = read_table(forecasts).stage("eval")?;
    let (_, actual_labels, actual_rows) = read_table(actuals).stage("eval")?;
    if labels != actual_labels {
        return Err(Error::LengthMismatch(format!(
            "forecast periods {labels:?} do not match actual periods {actual_labels:?}"
        )))
        .stage("eval");
    }
    // A leading `actual` column in the forecasts file is not a model.
    let skip = usize::from(models.first().is_some_and(|m| m == "actual"));
    let actual: Vec<f64> = actual_rows
        .iter()
        .map(|r| {
            r.first()
                .copied()
                .ok_or_else(|| Error::Schema("actuals file has no value column".into()))
        })
        .collect::<Result<_, _>>()
        .stage("eval")?;
    let columns: Vec<(String, Vec<f64>)> = models
        .iter()
        .enumerate()
        .skip(skip)
        .map(|(k, name)| (name.clone(), grid.iter().map(|r| r[k]).collect()))
        .collect();
    let report = build_report(labels, &actual, &columns, ensemble).stage("evaluate")?;
    let out = Output::create(config)?;
    out.json(
        "report.json",
        &serde_json::to_value(&report).map_err(Error::from).stage("output")?,
    )?;
    out.text("report.csv", &report.to_csv().stage("output")?)?;
    Ok(report)
}
