use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use mmc_core::metrics::{segment_report, ReportOptions, SegmentMetrics};
use mmc_core::{run_scenario, Phase, SimTrace};

use crate::config::RunConfig;
use crate::output::{
    phase_file_name, summary_table, write_json, write_phase_csv, write_summary_csv, write_switching_csv, OutputFile,
    RunManifest, SummaryRow,
};

pub struct RunOutcome {
    pub trace: SimTrace,
    pub report: Vec<SegmentMetrics>,
    pub files: Vec<OutputFile>,
}

pub fn report_options(config: &RunConfig) -> ReportOptions {
    ReportOptions {
        phase: Phase::A,
        settle: config.settle,
        warmup: config.scenario.warmup,
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

/// Simulates, evaluates and writes every output file into `out_dir`.
pub fn execute(config: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    let started = unix_now();
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let trace = run_scenario(&config.scenario)?;
    let report = segment_report(&trace, &config.scenario.nsw_schedule, &report_options(config));

    let mut files = Vec::new();
    let mut record = |name: String, rows: usize| {
        files.push(OutputFile {
            path: PathBuf::from(name),
            rows,
        })
    };
    for phase in Phase::ALL {
        let name = phase_file_name(phase);
        let rows = write_phase_csv(&out_dir.join(&name), &trace, phase)?;
        record(name, rows);
    }
    let rows = write_summary_csv(&out_dir.join("summary.csv"), &report)?;
    record("summary.csv".into(), rows);
    let rows = write_switching_csv(&out_dir.join("switching_frequency.csv"), &report)?;
    record("switching_frequency.csv".into(), rows);

    let summary: Vec<SummaryRow> = report.iter().map(SummaryRow::from).collect();
    write_json(
        &out_dir.join("summary.json"),
        &serde_json::json!({
            "algorithm": config.scenario.algorithm,
            "segments": summary,
            "details": report,
        }),
    )?;
    record("summary.json".into(), summary.len());

    let manifest = RunManifest {
        config,
        version: env!("CARGO_PKG_VERSION"),
        started_unix_s: started,
        finished_unix_s: unix_now(),
        trace_records: trace.len(),
        files: files.clone(),
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;

    Ok(RunOutcome { trace, report, files })
}

pub fn print_summary(config: &RunConfig, outcome: &RunOutcome) {
    println!(
        "algorithm {}  profile {:?}  {} steps  phase a",
        config.scenario.algorithm.name(),
        config.profile,
        outcome.trace.len()
    );
    print!("{}", summary_table(&outcome.report));
}
