//! Output files of a run: per-phase time series, per-segment summary,
//! switching-frequency table and the run manifest.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mmc_core::metrics::SegmentMetrics;
use mmc_core::sim::PhaseTrace;
use mmc_core::{Phase, SimTrace, SystemParams};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// `%.9g`-style formatting: nine significant digits, trailing zeros dropped,
/// exponent form only for very large or small magnitudes.
pub fn fmt_g9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..9).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        return format!("{mantissa}e{exp}");
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn phase_file_name(phase: Phase) -> String {
    format!("phase_{}.csv", phase.name())
}

pub fn phase_header(n: usize) -> Vec<String> {
    let mut header: Vec<String> = ["t", "phase", "i_ref", "i", "i_z", "v_s", "nsw_max"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=2 * n).map(|j| format!("vC_{j}")));
    header.extend((1..=2 * n).map(|j| format!("u_{j}")));
    header
}

pub fn write_phase_csv(path: &Path, trace: &SimTrace, phase: Phase) -> Result<usize> {
    let n = trace.params.n;
    let mut w = csv::Writer::from_writer(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ));
    w.write_record(phase_header(n))?;
    let ph = trace.phase(phase);
    let mut row: Vec<String> = Vec::with_capacity(7 + 4 * n);
    for k in 0..trace.len() {
        row.clear();
        row.push(fmt_g9(trace.time[k]));
        row.push(phase.name().to_string());
        row.push(fmt_g9(ph.i_ref[k]));
        row.push(fmt_g9(ph.i[k]));
        row.push(fmt_g9(ph.i_z[k]));
        row.push(fmt_g9(ph.v_s[k]));
        row.push(trace.nsw_max[k].to_string());
        row.extend(trace.cap_voltages(phase, k).iter().map(|&v| fmt_g9(v)));
        row.extend(trace.statuses(phase, Some(k)).iter().map(|&u| u8::from(u).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(trace.len())
}

/// Rebuilds a trace from the three phase files of an output directory.
/// Initial statuses are taken as all bypassed, as in every run.
pub fn read_trace(dir: &Path, params: SystemParams, current_amplitude: f64) -> Result<SimTrace> {
    let n = params.n;
    let mut trace = SimTrace {
        params,
        current_amplitude,
        time: Vec::new(),
        nsw_max: Vec::new(),
        v_dc: Vec::new(),
        phases: Vec::new(),
        initial_u: vec![vec![false; 2 * n]; 3],
    };
    for phase in Phase::ALL {
        let path = dir.join(phase_file_name(phase));
        let mut r = csv::Reader::from_path(&path).with_context(|| format!("opening {}", path.display()))?;
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != phase_header(n) {
            bail!("{} has an unexpected header", path.display());
        }
        let mut ph = PhaseTrace::default();
        let (mut time, mut nsw) = (Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let f = |i: usize| -> Result<f64> { Ok(rec[i].parse::<f64>()?) };
            time.push(f(0)?);
            ph.i_ref.push(f(2)?);
            ph.i.push(f(3)?);
            ph.i_z.push(f(4)?);
            ph.v_s.push(f(5)?);
            nsw.push(rec[6].parse::<usize>()?);
            for j in 0..2 * n {
                ph.v_c.push(f(7 + j)?);
            }
            for j in 0..2 * n {
                ph.u.push(&rec[7 + 2 * n + j] == "1");
            }
        }
        if phase == Phase::A {
            trace.time = time;
            trace.nsw_max = nsw;
        }
        trace.phases.push(ph);
    }
    trace.v_dc = vec![params.v_dc; trace.time.len()];
    Ok(trace)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub segment: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub nsw_max: usize,
    pub f_s_mean_hz: f64,
    pub reduction_pct: Option<f64>,
    pub ripple_mean_pct: f64,
    pub ripple_spread_pp: f64,
    pub izm_ratio_pct: f64,
    pub tracking_rmse_pct: f64,
    pub transitions_per_arm_step: f64,
}

impl From<&SegmentMetrics> for SummaryRow {
    fn from(s: &SegmentMetrics) -> Self {
        let ripple_mean = s.ripple_pct.iter().sum::<f64>() / s.ripple_pct.len() as f64;
        let max = s.ripple_pct.iter().copied().fold(f64::MIN, f64::max);
        let min = s.ripple_pct.iter().copied().fold(f64::MAX, f64::min);
        Self {
            segment: s.segment,
            t_start: s.window.start,
            t_end: s.window.end,
            nsw_max: s.n_sw_max,
            f_s_mean_hz: s.f_s_mean,
            reduction_pct: s.reduction_pct,
            ripple_mean_pct: ripple_mean,
            ripple_spread_pp: max - min,
            izm_ratio_pct: s.izm_ratio,
            tracking_rmse_pct: s.tracking_rmse_pct,
            transitions_per_arm_step: s.mean_transitions,
        }
    }
}

/// Human-readable table, as printed to standard output.
pub fn summary_table(report: &[SegmentMetrics]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:>3} {:>13} {:>6} {:>10} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
        "seg", "window [s]", "N_sw", "f_s [Hz]", "reduct %", "ripple %", "spread", "i_z %", "rmse %"
    ));
    for s in report {
        let row = SummaryRow::from(s);
        let reduction = row.reduction_pct.map_or("-".to_string(), |r| format!("{r:.1}"));
        out.push_str(&format!(
            "{:>3} {:>6.3}-{:<6.3} {:>6} {:>10.1} {:>9} {:>9.3} {:>9.3} {:>9.2} {:>9.2}\n",
            row.segment,
            row.t_start,
            row.t_end,
            row.nsw_max,
            row.f_s_mean_hz,
            reduction,
            row.ripple_mean_pct,
            row.ripple_spread_pp,
            row.izm_ratio_pct,
            row.tracking_rmse_pct,
        ));
    }
    out
}

pub fn write_summary_csv(path: &Path, report: &[SegmentMetrics]) -> Result<usize> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "segment",
        "t_start",
        "t_end",
        "nsw_max",
        "f_s_mean_hz",
        "reduction_pct",
        "ripple_mean_pct",
        "ripple_spread_pp",
        "izm_ratio_pct",
        "tracking_rmse_pct",
        "transitions_per_arm_step",
    ])?;
    for s in report {
        let r = SummaryRow::from(s);
        w.write_record([
            r.segment.to_string(),
            fmt_g9(r.t_start),
            fmt_g9(r.t_end),
            r.nsw_max.to_string(),
            fmt_g9(r.f_s_mean_hz),
            r.reduction_pct.map_or(String::new(), fmt_g9),
            fmt_g9(r.ripple_mean_pct),
            fmt_g9(r.ripple_spread_pp),
            fmt_g9(r.izm_ratio_pct),
            fmt_g9(r.tracking_rmse_pct),
            fmt_g9(r.transitions_per_arm_step),
        ])?;
    }
    w.flush()?;
    Ok(report.len())
}

/// Per-submodule switching frequency per segment, long format.
pub fn write_switching_csv(path: &Path, report: &[SegmentMetrics]) -> Result<usize> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["segment", "nsw_max", "sm", "arm", "f_s_hz", "ripple_pct"])?;
    let mut rows = 0;
    for s in report {
        let n = s.f_s_per_sm.len() / 2;
        for (j, (f, r)) in s.f_s_per_sm.iter().zip(&s.ripple_pct).enumerate() {
            let arm = if j < n { "upper" } else { "lower" };
            w.write_record([
                s.segment.to_string(),
                s.n_sw_max.to_string(),
                (j + 1).to_string(),
                arm.to_string(),
                fmt_g9(*f),
                fmt_g9(*r),
            ])?;
            rows += 1;
        }
    }
    w.flush()?;
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: PathBuf,
    /// Data rows, header excluded.
    pub rows: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest<'a> {
    pub config: &'a RunConfig,
    pub version: &'static str,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub trace_records: usize,
    pub files: Vec<OutputFile>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Counts data rows (lines after the header) of a written CSV file.
pub fn count_csv_rows(path: &Path) -> Result<usize> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.records().count())
}
