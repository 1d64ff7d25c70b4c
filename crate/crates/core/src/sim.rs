//! Back-to-back HVDC scenario: the test converter's three phase legs on a
//! stiff grid, with the remote converter abstracted as the DC-side source.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{step_phase, ParamsError, PhaseLegState, SystemParams};
use crate::modulation::{modulate_phase, Algorithm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Electrical lag of this phase behind phase A (rad).
    pub fn offset(self) -> f64 {
        self.index() as f64 * 2.0 * PI / 3.0
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::A => "a",
            Phase::B => "b",
            Phase::C => "c",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DcModel {
    /// Constant DC bus voltage.
    Stiff,
    /// One lumped pi section between a stiff source and the converter bus.
    PiLine,
}

impl std::str::FromStr for DcModel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "stiff" => Ok(DcModel::Stiff),
            "piline" => Ok(DcModel::PiLine),
            other => Err(format!("unknown dc model `{other}` (expected stiff or piline)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NswSegment {
    pub start: f64,
    pub end: f64,
    pub n_sw_max: usize,
}

/// Piecewise-constant limit on switching events per arm per step.
///
/// Segments are half-open `(start, end]`; the first one also contains its
/// start time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NswSchedule {
    pub segments: Vec<NswSegment>,
}

const TIME_EPS: f64 = 1e-9;

impl NswSchedule {
    pub fn constant(duration: f64, n_sw_max: usize) -> Self {
        Self {
            segments: vec![NswSegment {
                start: 0.0,
                end: duration,
                n_sw_max,
            }],
        }
    }

    /// An unconstrained lead-in up to `warmup`, then `n, 0, 1, ..., n-1, n`
    /// in segments of `segment` seconds. For `n = 6`, a 1 s lead-in and
    /// 0.2 s segments this is the 1 s to 2.6 s staircase of the test case.
    pub fn staircase(n: usize, warmup: f64, segment: f64) -> Self {
        let levels = std::iter::once(n).chain(0..n).chain(std::iter::once(n));
        let mut segments = vec![NswSegment {
            start: 0.0,
            end: warmup,
            n_sw_max: n,
        }];
        for (k, level) in levels.enumerate() {
            segments.push(NswSegment {
                start: warmup + k as f64 * segment,
                end: warmup + (k + 1) as f64 * segment,
                n_sw_max: level,
            });
        }
        if warmup <= 0.0 {
            segments.remove(0);
        }
        Self { segments }
    }

    pub fn end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end)
    }

    pub fn validate(&self, duration: f64, n: usize) -> Result<(), String> {
        let first = self.segments.first().ok_or("schedule has no segments")?;
        if first.start.abs() > TIME_EPS {
            return Err(format!("schedule must start at 0, starts at {}", first.start));
        }
        for (k, seg) in self.segments.iter().enumerate() {
            let ordered = seg.start.is_finite() && seg.end.is_finite() && seg.end > seg.start;
            if !ordered {
                return Err(format!("segment {k} is empty: ({}, {}]", seg.start, seg.end));
            }
            if seg.n_sw_max > n {
                return Err(format!("segment {k} has n_sw_max = {} outside [0, {n}]", seg.n_sw_max));
            }
            if k > 0 && (seg.start - self.segments[k - 1].end).abs() > TIME_EPS {
                return Err(format!("segment {k} does not start where segment {} ends", k - 1));
            }
        }
        if (self.end() - duration).abs() > TIME_EPS {
            return Err(format!("schedule ends at {} but the run lasts {duration}", self.end()));
        }
        Ok(())
    }

    /// Segment index containing `t`.
    pub fn segment_at(&self, t: f64) -> usize {
        let first = self.segments.first().expect("empty schedule");
        assert!(t >= first.start - TIME_EPS, "t = {t} before schedule start");
        self.segments
            .iter()
            .position(|s| t <= s.end + TIME_EPS)
            .unwrap_or_else(|| panic!("t = {t} after schedule end {}", self.end()))
    }

    pub fn nsw_at(&self, t: f64) -> usize {
        self.segments[self.segment_at(t)].n_sw_max
    }

    /// The schedule cut (or kept) to end at `duration`.
    pub fn truncated(&self, duration: f64) -> Self {
        let mut segments: Vec<NswSegment> = self
            .segments
            .iter()
            .filter(|s| s.start < duration - TIME_EPS)
            .copied()
            .collect();
        if let Some(last) = segments.last_mut() {
            last.end = last.end.min(duration);
        }
        Self { segments }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub params: SystemParams,
    /// Simulated time (s); a whole number of sampling periods.
    pub duration: f64,
    /// Start-up interval excluded from metrics (s).
    pub warmup: f64,
    /// Active power delivered to the AC grid (W).
    pub p_ref: f64,
    /// Grid phase voltage amplitude (V).
    pub v_s_peak: f64,
    pub algorithm: Algorithm,
    pub nsw_schedule: NswSchedule,
    pub dc_model: DcModel,
    pub line_length_km: f64,
    /// Line capacitance per km (F/km).
    pub line_capacitance: f64,
    /// Line inductance per km (H/km).
    pub line_inductance: f64,
}

impl ScenarioConfig {
    /// Full-length test case: 1 s start-up then eight 0.2 s segments.
    pub fn full() -> Self {
        let params = SystemParams::default();
        Self {
            params,
            duration: 2.6,
            warmup: 1.0,
            p_ref: 13.18e6,
            v_s_peak: 25.5e3,
            algorithm: Algorithm::V1FC,
            nsw_schedule: NswSchedule::staircase(params.n, 1.0, 0.2),
            dc_model: DcModel::Stiff,
            line_length_km: 5.0,
            line_capacitance: 16e-6,
            line_inductance: 50e-6,
        }
    }

    /// Same system with a 0.1 s start-up and 0.05 s segments.
    pub fn fast() -> Self {
        let mut cfg = Self::full();
        cfg.duration = 0.5;
        cfg.warmup = 0.1;
        cfg.nsw_schedule = NswSchedule::staircase(cfg.params.n, 0.1, 0.05);
        cfg
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.params.sample_period).round() as usize
    }

    /// Peak of the reference current for unity power factor.
    pub fn current_amplitude(&self) -> f64 {
        2.0 * self.p_ref / (3.0 * self.v_s_peak)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.params.validate()?;
        let invalid = |key: &'static str, reason: String| Err(ConfigError::Invalid { key, reason });
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return invalid("duration", format!("must be > 0, got {}", self.duration));
        }
        if !(self.warmup >= 0.0 && self.warmup < self.duration) {
            return invalid("warmup", format!("must lie in [0, duration), got {}", self.warmup));
        }
        let steps = self.duration / self.params.sample_period;
        if (steps - steps.round()).abs() > 1e-6 {
            return invalid(
                "duration",
                format!(
                    "{} s is not a whole number of sampling periods ({} s)",
                    self.duration, self.params.sample_period
                ),
            );
        }
        if !(self.v_s_peak.is_finite() && self.v_s_peak > 0.0) {
            return invalid("v_s_peak", format!("must be > 0, got {}", self.v_s_peak));
        }
        if !self.p_ref.is_finite() {
            return invalid("p_ref", "must be finite".into());
        }
        for (key, value) in [
            ("line_length_km", self.line_length_km),
            ("line_capacitance", self.line_capacitance),
            ("line_inductance", self.line_inductance),
        ] {
            let ok = value.is_finite()
                && if self.dc_model == DcModel::PiLine {
                    value > 0.0
                } else {
                    value >= 0.0
                };
            if !ok {
                return invalid(key, format!("must be positive, got {value}"));
            }
        }
        if let Err(reason) = self.nsw_schedule.validate(self.duration, self.params.n) {
            return invalid("nsw_schedule", reason);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("state became non-finite at step {step} (t = {time:.6} s)")]
    Diverged { step: usize, time: f64 },
}

pub fn reference_current(config: &ScenarioConfig, t: f64, phase: Phase) -> f64 {
    let omega = 2.0 * PI * config.params.grid_frequency;
    config.current_amplitude() * (omega * t - phase.offset()).sin()
}

pub fn grid_voltage(config: &ScenarioConfig, t: f64, phase: Phase) -> f64 {
    let omega = 2.0 * PI * config.params.grid_frequency;
    config.v_s_peak * (omega * t - phase.offset()).sin()
}

/// Recorded signals of one phase leg, one entry per step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub i_ref: Vec<f64>,
    pub i: Vec<f64>,
    pub i_z: Vec<f64>,
    pub v_s: Vec<f64>,
    /// Capacitor voltages, `2n` per step (upper arm first).
    pub v_c: Vec<f64>,
    /// Statuses, `2n` per step.
    pub u: Vec<bool>,
}

impl PhaseTrace {
    fn with_capacity(steps: usize, n: usize) -> Self {
        Self {
            i_ref: Vec::with_capacity(steps),
            i: Vec::with_capacity(steps),
            i_z: Vec::with_capacity(steps),
            v_s: Vec::with_capacity(steps),
            v_c: Vec::with_capacity(steps * 2 * n),
            u: Vec::with_capacity(steps * 2 * n),
        }
    }

    fn push(&mut self, state: &PhaseLegState, i_ref: f64) {
        self.i_ref.push(i_ref);
        self.i.push(state.i);
        self.i_z.push(state.i_z);
        self.v_s.push(state.v_s);
        self.v_c.extend_from_slice(&state.upper.v_c);
        self.v_c.extend_from_slice(&state.lower.v_c);
        self.u.extend_from_slice(&state.upper.u);
        self.u.extend_from_slice(&state.lower.u);
    }

    pub fn len(&self) -> usize {
        self.i.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i.is_empty()
    }
}

/// Output of [`run_scenario`]. Record `k` holds the state at
/// `time[k] = (k + 1) T_s`, after the decision taken at `k T_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub params: SystemParams,
    /// Reference current amplitude (A).
    pub current_amplitude: f64,
    pub time: Vec<f64>,
    pub nsw_max: Vec<usize>,
    pub v_dc: Vec<f64>,
    pub phases: Vec<PhaseTrace>,
    /// Statuses before the first step, `2n` per phase.
    pub initial_u: Vec<Vec<bool>>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn phase(&self, phase: Phase) -> &PhaseTrace {
        &self.phases[phase.index()]
    }

    /// Statuses of one phase at record `k`; `None` means before the first
    /// step.
    pub fn statuses(&self, phase: Phase, k: Option<usize>) -> &[bool] {
        let width = 2 * self.params.n;
        match k {
            Some(k) => &self.phase(phase).u[k * width..(k + 1) * width],
            None => &self.initial_u[phase.index()],
        }
    }

    pub fn cap_voltages(&self, phase: Phase, k: usize) -> &[f64] {
        let width = 2 * self.params.n;
        &self.phase(phase).v_c[k * width..(k + 1) * width]
    }
}

/// Lumped pi line fed from a stiff source. The source-side shunt capacitor
/// sits across the source and drops out.
#[derive(Debug, Clone, Copy)]
struct PiLine {
    v_source: f64,
    inductance: f64,
    bus_capacitance: f64,
    i_line: f64,
    v_bus: f64,
}

impl PiLine {
    fn new(config: &ScenarioConfig) -> Self {
        let i_dc = config.p_ref / config.params.v_dc;
        Self {
            v_source: config.params.v_dc,
            inductance: config.line_inductance * config.line_length_km,
            bus_capacitance: config.line_capacitance * config.line_length_km / 2.0,
            i_line: i_dc,
            v_bus: config.params.v_dc,
        }
    }

    /// Semi-implicit Euler: current first, then the bus voltage with the new
    /// current.
    fn step(&mut self, i_load: f64, ts: f64) {
        self.i_line += ts / self.inductance * (self.v_source - self.v_bus);
        self.v_bus += ts / self.bus_capacitance * (self.i_line - i_load);
    }
}

/// Slow PI loop on a leg's mean capacitor voltage that trims the DC share of
/// the leg current. Without it, small prediction errors accumulate as leg
/// energy drift.
#[derive(Debug, Clone, Copy, Default)]
struct LegBalancer {
    integral: f64,
}

impl LegBalancer {
    /// A/V
    const KP: f64 = 0.05;
    /// A/(V s)
    const KI: f64 = 0.25;

    fn dc_share(&mut self, config: &ScenarioConfig, state: &PhaseLegState, v_dc: f64, ts: f64) -> f64 {
        let n = config.params.n;
        let mean = state.upper.v_c.iter().chain(&state.lower.v_c).sum::<f64>() / (2 * n) as f64;
        let error = v_dc / n as f64 - mean;
        self.integral += error * ts;
        config.p_ref / (3.0 * v_dc) + Self::KP * error + Self::KI * self.integral
    }
}

/// Runs the scenario for `config.duration` seconds, one modulation decision
/// per sampling period and phase.
pub fn run_scenario(config: &ScenarioConfig) -> Result<SimTrace, SimError> {
    config.validate()?;
    let params = config.params;
    let ts = params.sample_period;
    let steps = config.steps();

    let mut states: Vec<PhaseLegState> = Phase::ALL
        .iter()
        .map(|&ph| PhaseLegState {
            v_s: grid_voltage(config, 0.0, ph),
            ..PhaseLegState::initial(&params)
        })
        .collect();
    let initial_u = states.iter().map(|s| s.statuses().u).collect();

    let mut balancers = [LegBalancer::default(); 3];
    let mut line = (config.dc_model == DcModel::PiLine).then(|| PiLine::new(config));
    let mut trace = SimTrace {
        params,
        current_amplitude: config.current_amplitude(),
        time: Vec::with_capacity(steps),
        nsw_max: Vec::with_capacity(steps),
        v_dc: Vec::with_capacity(steps),
        phases: (0..3).map(|_| PhaseTrace::with_capacity(steps, params.n)).collect(),
        initial_u,
    };

    for k in 0..steps {
        let t_next = (k + 1) as f64 * ts;
        let mut step_params = params;
        if let Some(line) = &line {
            step_params.v_dc = line.v_bus;
        }
        let n_sw_max = config.nsw_schedule.nsw_at(t_next);

        for ((ph, state), balancer) in Phase::ALL.iter().zip(states.iter_mut()).zip(&mut balancers) {
            let i_ref = reference_current(config, t_next, *ph);
            let i_z_dc = balancer.dc_share(config, state, step_params.v_dc, ts);
            let result = modulate_phase(state, i_ref, i_z_dc, n_sw_max, config.algorithm, &step_params);
            let next = step_phase(state, &result.decision, grid_voltage(config, t_next, *ph), &step_params);
            *state = next;
        }
        if let Some(line) = &mut line {
            line.step(states.iter().map(|s| s.i_z).sum(), ts);
        }

        let finite = states.iter().all(PhaseLegState::is_finite)
            && line.is_none_or(|l| l.v_bus.is_finite() && l.i_line.is_finite());
        if !finite {
            return Err(SimError::Diverged { step: k, time: t_next });
        }

        trace.time.push(t_next);
        trace.nsw_max.push(n_sw_max);
        trace.v_dc.push(step_params.v_dc);
        for (ph, state) in Phase::ALL.iter().zip(&states) {
            trace.phases[ph.index()].push(state, reference_current(config, t_next, *ph));
        }
    }
    Ok(trace)
}
