use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sparsecast"))
}

fn run(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = bin();
    cmd.args(args).arg("--out").arg(out);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_owned).collect())
        .collect();
    (header, rows)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["run"], None, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "config.json",
        "completed.csv",
        "copula.json",
        "mask.json",
        "recovery.json",
        "models.json",
        "forecasts.csv",
        "trace.csv",
        "ensemble.json",
        "report.json",
        "report.csv",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let recovery: Value = serde_json::from_str(&fs::read_to_string(out.join("recovery.json")).unwrap()).unwrap();
    assert!(recovery["ratio"].as_f64().unwrap() < 1.0);
    let (header, rows) = read_csv(&out.join("forecasts.csv"));
    assert_eq!(header.first().unwrap(), "period");
    assert_eq!(header.last().unwrap(), "ensemble");
    assert_eq!(rows.len(), 12);
}

#[test]
fn same_seed_gives_identical_bytes_regardless_of_threads() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut snapshots = Vec::new();
    for threads in ["1", "6"] {
        let o = bin()
            .args(["run", "--seed", "3", "--out"])
            .arg(&out)
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (
                    e.file_name().to_string_lossy().into_owned(),
                    fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        snapshots.push(files);
    }
    assert_eq!(snapshots[0], snapshots[1]);
}

#[test]
fn different_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&["synth", "--seed", "1"], None, &a).status.success());
    assert!(run(&["synth", "--seed", "2"], None, &b).status.success());
    assert_ne!(
        fs::read(a.join("data.csv")).unwrap(),
        fs::read(b.join("data.csv")).unwrap()
    );
}

#[test]
fn single_model_roster_passes_through() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"roster": [{"kind": "ridge_ar"}]}"#);
    let out = dir.path().join("out");
    let o = run(&["run"], Some(&config), &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&out.join("forecasts.csv"));
    assert_eq!(header, ["period", "actual", "ridge_ar", "ensemble"]);
    for r in rows {
        let member: f64 = r[2].parse().unwrap();
        let ens: f64 = r[3].parse().unwrap();
        assert!((member - ens).abs() <= 1e-12 * member.abs());
    }
}

#[test]
fn eval_reproduces_statistics_from_a_percentage_grid() {
    let grid: [[f64; 3]; 4] = [[5.0, 2.0, 1.0], [3.0, 4.0, 2.0], [1.0, 6.0, 1.5], [8.0, 1.0, 0.5]];
    let dir = tempfile::tempdir().unwrap();
    let mut forecasts = String::from("period,a,b,ensemble\n");
    let mut actuals = String::from("period,actual\n");
    for (t, row) in grid.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|m| format!("{}", 100.0 * (1.0 + m / 100.0))).collect();
        forecasts.push_str(&format!("p{t},{}\n", cells.join(",")));
        actuals.push_str(&format!("p{t},100\n"));
    }
    fs::write(dir.path().join("f.csv"), forecasts).unwrap();
    fs::write(dir.path().join("a.csv"), actuals).unwrap();
    let out = dir.path().join("out");
    let o = bin()
        .arg("eval")
        .arg("--forecasts")
        .arg(dir.path().join("f.csv"))
        .arg("--actuals")
        .arg(dir.path().join("a.csv"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let mean: Vec<f64> = report["mean_mape"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    for (k, want) in [4.25, 3.25, 1.25].into_iter().enumerate() {
        assert!((mean[k] - want).abs() < 1e-9, "{mean:?}");
    }
    assert_eq!(report["win_loss"][0], serde_json::json!([3, 1]));
    assert_eq!(report["win_loss"][1], serde_json::json!([4, 0]));
    // per-period ranks (1 = best): a [3,2,1,3], b [2,3,3,2], ensemble [1,1,2,1]
    let ranks: Vec<f64> = report["f_rank"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    for (got, want) in ranks.iter().zip([2.25, 2.5, 1.25]) {
        assert!((got - want).abs() < 1e-12, "{ranks:?}");
    }
}

#[test]
fn eval_of_perfect_forecasts_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("f.csv"),
        "period,actual,a,ensemble\nx,10,10,10\ny,20,20,20\n",
    )
    .unwrap();
    fs::write(dir.path().join("a.csv"), "period,actual\nx,10\ny,20\n").unwrap();
    let out = dir.path().join("out");
    let o = bin()
        .arg("eval")
        .arg("--forecasts")
        .arg(dir.path().join("f.csv"))
        .arg("--actuals")
        .arg(dir.path().join("a.csv"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["models"], serde_json::json!(["a", "ensemble"]));
    for v in report["mean_mape"].as_array().unwrap() {
        assert_eq!(v.as_f64().unwrap(), 0.0);
    }
}

#[test]
fn eval_rejects_single_period_and_misaligned_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("one.csv"), "period,a,ensemble\nx,10,11\n").unwrap();
    fs::write(dir.path().join("one_a.csv"), "period,actual\nx,10\n").unwrap();
    fs::write(dir.path().join("two_a.csv"), "period,actual\nx,10\nz,12\n").unwrap();
    let eval = |f: &str, a: &str| {
        bin()
            .arg("eval")
            .arg("--forecasts")
            .arg(dir.path().join(f))
            .arg("--actuals")
            .arg(dir.path().join(a))
            .arg("--out")
            .arg(dir.path().join("out"))
            .output()
            .unwrap()
    };
    let o = eval("one.csv", "one_a.csv");
    assert!(!o.status.success());
    let o = eval("one.csv", "two_a.csv");
    assert!(!o.status.success());
    assert!(stderr(&o).contains("error[alignment]"), "{}", stderr(&o));
}

#[test]
fn impute_without_mask_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"mask": {"fraction": 0.0}}"#);
    let out = dir.path().join("out");
    assert!(run(&["synth"], Some(&config), &out).status.success());
    let o = run(&["impute"], Some(&config), &out);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(out.join("data.csv")).unwrap(),
        fs::read(out.join("completed.csv")).unwrap()
    );
}

#[test]
fn csv_source_round_trips_through_impute() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("synth");
    assert!(run(&["synth"], None, &out).status.success());
    let body = format!(
        r#"{{"data": {{"source": "csv", "path": {}}}, "mask": {{"fraction": 0.0}}}}"#,
        serde_json::to_string(&out.join("masked.csv")).unwrap()
    );
    let config = write_config(dir.path(), &body);
    let imp = dir.path().join("imp");
    let o = run(&["impute"], Some(&config), &imp);
    assert!(o.status.success(), "{}", stderr(&o));
    let (_, rows) = read_csv(&imp.join("completed.csv"));
    assert!(rows.iter().flatten().all(|c| !c.is_empty()));
}

#[test]
fn constant_target_fails_with_one_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = String::from("time,load,x1\n");
    for t in 0..60 {
        body.push_str(&format!(
            "{}-{:02}-01,5,{}\n",
            2000 + t / 12,
            t % 12 + 1,
            t as f64 * 0.5 + (t % 7) as f64
        ));
    }
    fs::write(dir.path().join("flat.csv"), body).unwrap();
    let config = write_config(
        dir.path(),
        &format!(
            r#"{{"data": {{"source": "csv", "path": {}}}}}"#,
            serde_json::to_string(&dir.path().join("flat.csv")).unwrap()
        ),
    );
    let o = run(&["impute"], Some(&config), &dir.path().join("out"));
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.starts_with("error["), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
}

#[test]
fn bad_arguments_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"data": {"source": "synthetic", "n_features": 0}}"#);
    let o = run(&["synth"], Some(&config), &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error[argument]"), "{}", stderr(&o));

    let config = write_config(dir.path(), r#"{"mask": {"fraction": 1.5}}"#);
    let o = run(&["synth"], Some(&config), &dir.path().join("out"));
    assert!(!o.status.success());

    let config = write_config(dir.path(), r#"{"unknown": 1}"#);
    let o = run(&["synth"], Some(&config), &dir.path().join("out"));
    assert!(stderr(&o).contains("error[parse]"), "{}", stderr(&o));

    let o = run(
        &["synth"],
        Some(&dir.path().join("absent.json")),
        &dir.path().join("out"),
    );
    assert!(stderr(&o).contains("error[io]"), "{}", stderr(&o));
}

#[test]
fn ablation_path_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["ablate"], None, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let (header, rows) = read_csv(&out.join("ablation.csv"));
    assert_eq!(header.len(), 3, "{header:?}");
    assert_eq!(rows.len(), 5);
    assert!(!rows[4][1].is_empty());
}
