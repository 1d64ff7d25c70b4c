use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mmc_core::metrics::segment_report;
use mmc_hvdc::config::{parse_config_with, Overrides, Profile};
use mmc_hvdc::output::{count_csv_rows, read_trace};
use mmc_hvdc::run::report_options;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mmc-hvdc"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    bin().arg("run").args(args).output().expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fast_run_writes_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let res = run(&["--profile", "fast", "--duration", "0.3", "--out-dir", out]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("reduct %"), "{stdout}");

    let manifest = read_json(&dir.path().join("manifest.json"));
    assert_eq!(manifest["trace_records"], 12_000);
    let files = manifest["files"].as_array().unwrap();
    assert_eq!(files.len(), 6);
    for f in files {
        let name = f["path"].as_str().unwrap();
        let rows = f["rows"].as_u64().unwrap() as usize;
        let path = dir.path().join(name);
        assert!(path.exists(), "{name} missing");
        if name.ends_with(".csv") {
            assert_eq!(count_csv_rows(&path).unwrap(), rows, "{name}");
        }
    }
    assert_eq!(manifest["config"]["profile"], "fast");
}

#[test]
fn written_series_reproduce_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let overrides = Overrides {
        profile: Some(Profile::Fast),
        duration: Some(0.3),
        ..Overrides::default()
    };
    let config = parse_config_with(None, &overrides).unwrap();
    let outcome = mmc_hvdc::run::execute(&config, dir.path()).unwrap();

    let trace = read_trace(dir.path(), config.scenario.params, config.scenario.current_amplitude()).unwrap();
    assert_eq!(trace.len(), outcome.trace.len());
    let report = segment_report(&trace, &config.scenario.nsw_schedule, &report_options(&config));
    assert_eq!(report.len(), outcome.report.len());
    for (a, b) in report.iter().zip(&outcome.report) {
        // statuses are stored exactly, so counts match exactly
        assert_eq!(a.f_s_per_sm, b.f_s_per_sm);
        assert_eq!(a.mean_transitions, b.mean_transitions);
        assert!((a.izm_ratio - b.izm_ratio).abs() < 1e-6);
        assert!((a.tracking_rmse_pct - b.tracking_rmse_pct).abs() < 1e-6);
        for (x, y) in a.ripple_pct.iter().zip(&b.ripple_pct) {
            assert!((x - y).abs() < 1e-5, "{x} vs {y}");
        }
    }

    let mut rdr = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), report.len());
    for (row, seg) in rows.iter().zip(&report) {
        let f_s: f64 = row[4].parse().unwrap();
        assert!((f_s - seg.f_s_mean).abs() <= 1e-6 * seg.f_s_mean.max(1.0));
        assert_eq!(row[3].parse::<usize>().unwrap(), seg.n_sw_max);
    }
}

#[test]
fn config_file_schedule_is_used() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs_dir().join("custom_schedule.toml");
    let res = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let summary = read_json(&dir.path().join("summary.json"));
    let limits: Vec<u64> = summary["segments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["nsw_max"].as_u64().unwrap())
        .collect();
    assert_eq!(limits, vec![6, 1]);
}

#[test]
fn v1f2_ignores_the_limit() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&[
        "--profile",
        "fast",
        "--algorithm",
        "v1f2",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let summary = read_json(&dir.path().join("summary.json"));
    let f: Vec<f64> = summary["segments"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["f_s_mean_hz"].as_f64().unwrap())
        .collect();
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    assert!(f.iter().all(|x| (x / mean - 1.0).abs() < 0.05), "{f:?}");
}

#[test]
fn bad_configs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let res = run(&["--config", "/nonexistent/config.toml", "--out-dir", out]);
    assert_eq!(res.status.code(), Some(2));

    let unknown = dir.path().join("unknown.toml");
    std::fs::write(&unknown, "[system]\nbogus = 1\n").unwrap();
    let res = run(&["--config", unknown.to_str().unwrap(), "--out-dir", out]);
    assert_eq!(res.status.code(), Some(2));

    let negative = dir.path().join("negative.toml");
    std::fs::write(&negative, "[system]\ncapacitance = -1.0\n").unwrap();
    let res = run(&["--config", negative.to_str().unwrap(), "--out-dir", out]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("system.capacitance"));

    let gap = dir.path().join("gap.toml");
    std::fs::write(
        &gap,
        "[scenario]\nprofile = \"fast\"\nduration = 0.2\nnsw_schedule = [{ start = 0.0, end = 0.1, n_sw_max = 6 }, { start = 0.12, end = 0.2, n_sw_max = 0 }]\n",
    )
    .unwrap();
    let res = run(&["--config", gap.to_str().unwrap(), "--out-dir", out]);
    assert_eq!(res.status.code(), Some(2));

    assert!(!Path::new(out).exists(), "no outputs on config errors");
}

#[test]
fn unknown_algorithm_is_rejected_by_the_parser() {
    let res = run(&["--algorithm", "v9", "--profile", "fast"]);
    assert!(!res.status.success());
}
