//! Evaluation quantities computed from a [`SimTrace`].
//!
//! A window `(start, end]` selects the records whose time stamp lies in it.

use std::f64::consts::SQRT_2;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::sim::{NswSchedule, Phase, SimTrace};

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

/// Record indices falling in `window`.
pub fn records(trace: &SimTrace, window: Window) -> Range<usize> {
    let lo = trace.time.partition_point(|&t| t <= window.start + TIME_EPS);
    let hi = trace.time.partition_point(|&t| t <= window.end + TIME_EPS);
    lo..hi.max(lo)
}

fn non_empty(trace: &SimTrace, window: Window) -> Range<usize> {
    assert!(window.length() > 0.0, "empty window ({}, {}]", window.start, window.end);
    let range = records(trace, window);
    assert!(
        !range.is_empty(),
        "no records in window ({}, {}]",
        window.start,
        window.end
    );
    range
}

fn previous(k: usize) -> Option<usize> {
    k.checked_sub(1)
}

/// Turn-on events of one submodule per second. A full on/off cycle counts
/// once.
pub fn effective_switching_frequency(trace: &SimTrace, phase: Phase, sm: usize, window: Window) -> f64 {
    assert!(sm < 2 * trace.params.n, "submodule index {sm} out of range");
    let range = non_empty(trace, window);
    let turn_ons = range
        .filter(|&k| !trace.statuses(phase, previous(k))[sm] && trace.statuses(phase, Some(k))[sm])
        .count();
    turn_ons as f64 / window.length()
}

/// Peak-to-peak capacitor voltage as a percentage of its mean.
pub fn ripple_percent(trace: &SimTrace, phase: Phase, sm: usize, window: Window) -> f64 {
    assert!(sm < 2 * trace.params.n, "submodule index {sm} out of range");
    let range = non_empty(trace, window);
    let count = range.len() as f64;
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for k in range {
        let v = trace.cap_voltages(phase, k)[sm];
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
    }
    100.0 * (hi - lo) / (sum / count)
}

fn ratio_percent(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        100.0 * num / den
    }
}

/// Largest deviation of the leg current from its window mean, relative to
/// the peak AC current in the window.
pub fn circulating_ratio(trace: &SimTrace, phase: Phase, window: Window) -> f64 {
    let range = non_empty(trace, window);
    let ph = trace.phase(phase);
    let i_z = &ph.i_z[range.clone()];
    let mean = i_z.iter().sum::<f64>() / i_z.len() as f64;
    let deviation = i_z.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max);
    let amplitude = ph.i[range].iter().map(|x| x.abs()).fold(0.0, f64::max);
    ratio_percent(deviation, amplitude)
}

/// RMS tracking error as a percentage of the reference RMS value.
pub fn tracking_rmse(trace: &SimTrace, phase: Phase, window: Window) -> f64 {
    let range = non_empty(trace, window);
    let ph = trace.phase(phase);
    let count = range.len() as f64;
    let sq: f64 = range.map(|k| (ph.i[k] - ph.i_ref[k]).powi(2)).sum();
    ratio_percent((sq / count).sqrt(), trace.current_amplitude / SQRT_2)
}

/// Status changes `(upper, lower)` between record `k - 1` and record `k`.
pub fn arm_transitions(trace: &SimTrace, phase: Phase, k: usize) -> (usize, usize) {
    let n = trace.params.n;
    let before = trace.statuses(phase, previous(k));
    let after = trace.statuses(phase, Some(k));
    let changed = |r: Range<usize>| r.filter(|&j| before[j] != after[j]).count();
    (changed(0..n), changed(n..2 * n))
}

/// Mean status changes per arm and step over the window.
pub fn mean_arm_transitions(trace: &SimTrace, phase: Phase, window: Window) -> f64 {
    let range = non_empty(trace, window);
    let count = range.len() as f64;
    let total: usize = range
        .map(|k| {
            let (up, low) = arm_transitions(trace, phase, k);
            up + low
        })
        .sum();
    total as f64 / (2.0 * count)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMetrics {
    pub segment: usize,
    /// Evaluated span, after the settle margin.
    pub window: Window,
    pub n_sw_max: usize,
    /// Hz, one entry per submodule (upper arm first).
    pub f_s_per_sm: Vec<f64>,
    pub f_s_mean: f64,
    /// %, one entry per submodule.
    pub ripple_pct: Vec<f64>,
    pub izm_ratio: f64,
    pub tracking_rmse_pct: f64,
    pub mean_transitions: f64,
    /// Reduction of `f_s_mean` against the unconstrained segments (%).
    pub reduction_pct: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub phase: Phase,
    /// Excluded at the start of every segment (s).
    pub settle: f64,
    /// Segments ending at or before this time are skipped (s).
    pub warmup: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            phase: Phase::A,
            settle: 0.02,
            warmup: 0.0,
        }
    }
}

pub fn segment_metrics(
    trace: &SimTrace,
    phase: Phase,
    segment: usize,
    n_sw_max: usize,
    window: Window,
) -> SegmentMetrics {
    let sms = 0..2 * trace.params.n;
    let f_s_per_sm: Vec<f64> = sms
        .clone()
        .map(|sm| effective_switching_frequency(trace, phase, sm, window))
        .collect();
    let f_s_mean = f_s_per_sm.iter().sum::<f64>() / f_s_per_sm.len() as f64;
    SegmentMetrics {
        segment,
        window,
        n_sw_max,
        f_s_mean,
        f_s_per_sm,
        ripple_pct: sms.map(|sm| ripple_percent(trace, phase, sm, window)).collect(),
        izm_ratio: circulating_ratio(trace, phase, window),
        tracking_rmse_pct: tracking_rmse(trace, phase, window),
        mean_transitions: mean_arm_transitions(trace, phase, window),
        reduction_pct: None,
    }
}

/// Metrics for every schedule segment after the warm-up, in time order.
pub fn segment_report(trace: &SimTrace, schedule: &NswSchedule, options: &ReportOptions) -> Vec<SegmentMetrics> {
    let mut report: Vec<SegmentMetrics> = schedule
        .segments
        .iter()
        .enumerate()
        .filter(|(_, seg)| seg.end > options.warmup + TIME_EPS)
        .map(|(idx, seg)| {
            let start = (seg.start + options.settle).max(options.warmup);
            assert!(start < seg.end, "settle margin swallows segment {idx}");
            segment_metrics(trace, options.phase, idx, seg.n_sw_max, Window::new(start, seg.end))
        })
        .collect();
    fill_reductions(&mut report, trace.params.n);
    report
}

/// Sets `reduction_pct` relative to the mean `f_s_mean` of the segments with
/// no effective constraint (`n_sw_max == n`).
pub fn fill_reductions(report: &mut [SegmentMetrics], n: usize) {
    let baseline: Vec<f64> = report.iter().filter(|s| s.n_sw_max >= n).map(|s| s.f_s_mean).collect();
    if baseline.is_empty() {
        return;
    }
    let reference = baseline.iter().sum::<f64>() / baseline.len() as f64;
    if reference <= 0.0 {
        return;
    }
    for seg in report.iter_mut() {
        seg.reduction_pct = Some(100.0 * (1.0 - seg.f_s_mean / reference));
    }
}
