//! Scenario configuration files.
//!
//! TOML with four optional tables; every key may be omitted and falls back to
//! the selected profile. Dotted keys (`system.n = 6`) work as well as tables.
//!
//! ```toml
//! [system]
//! n = 6
//! v_dc = 60e3
//! capacitance = 2.5e-3
//! arm_inductance = 3e-3
//! grid_resistance = 0.03
//! grid_inductance = 5e-3
//! sample_period = 25e-6
//! grid_frequency = 60.0
//! w_ac = 1.0
//! w_circ = 1.0
//!
//! [scenario]
//! profile = "full"          # or "fast"
//! duration = 2.6
//! warmup = 1.0
//! p_ref = 13.18e6
//! v_s_peak = 25.5e3
//! algorithm = "v1fc"
//! dc_model = "stiff"         # or "piline"
//! nsw_schedule = [{ start = 0.0, end = 2.6, n_sw_max = 6 }]
//!
//! [line]
//! length_km = 5.0
//! capacitance_per_km = 16e-6
//! inductance_per_km = 50e-6
//!
//! [metrics]
//! settle = 0.02
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use mmc_core::sim::NswSegment;
use mmc_core::{Algorithm, DcModel, NswSchedule, ScenarioConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config file {path}: {message}")]
    Syntax { path: PathBuf, message: String },
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Full,
    Fast,
}

impl Profile {
    pub fn scenario(self) -> ScenarioConfig {
        match self {
            Profile::Full => ScenarioConfig::full(),
            Profile::Fast => ScenarioConfig::fast(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    system: SystemSection,
    #[serde(default)]
    scenario: ScenarioSection,
    #[serde(default)]
    line: LineSection,
    #[serde(default)]
    metrics: MetricsSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    n: Option<usize>,
    v_dc: Option<f64>,
    capacitance: Option<f64>,
    arm_inductance: Option<f64>,
    grid_resistance: Option<f64>,
    grid_inductance: Option<f64>,
    sample_period: Option<f64>,
    grid_frequency: Option<f64>,
    w_ac: Option<f64>,
    w_circ: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSection {
    profile: Option<Profile>,
    duration: Option<f64>,
    warmup: Option<f64>,
    p_ref: Option<f64>,
    v_s_peak: Option<f64>,
    algorithm: Option<String>,
    dc_model: Option<String>,
    nsw_schedule: Option<Vec<NswSegment>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineSection {
    length_km: Option<f64>,
    capacitance_per_km: Option<f64>,
    inductance_per_km: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricsSection {
    settle: Option<f64>,
}

/// Everything needed for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub profile: Profile,
    pub scenario: ScenarioConfig,
    /// Settle margin excluded at each segment start (s).
    pub settle: f64,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub algorithm: Option<Algorithm>,
    pub duration: Option<f64>,
    pub dc_model: Option<DcModel>,
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

/// Stretches or cuts a schedule to end at `duration`.
fn fit_schedule(schedule: &NswSchedule, duration: f64) -> NswSchedule {
    let mut fitted = schedule.truncated(duration);
    if let Some(last) = fitted.segments.last_mut() {
        last.end = duration;
    }
    fitted
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    parse_config_with(Some(path), &Overrides::default())
}

pub fn parse_config_with(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let file = match path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                path: path.to_path_buf(),
                source,
            })?;
            toml::from_str::<FileConfig>(&text).map_err(|e| ConfigError::Syntax {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
        }
        None => FileConfig::default(),
    };
    resolve(file, overrides)
}

/// Parses configuration text directly (no file).
pub fn parse_config_str(text: &str, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let file = toml::from_str::<FileConfig>(text).map_err(|e| ConfigError::Syntax {
        path: PathBuf::from("<string>"),
        message: e.to_string(),
    })?;
    resolve(file, overrides)
}

fn resolve(file: FileConfig, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let profile = overrides.profile.or(file.scenario.profile).unwrap_or(Profile::Full);
    let mut cfg = profile.scenario();

    let sys = &file.system;
    let p = &mut cfg.params;
    let n_changed = sys.n.is_some_and(|n| n != p.n);
    macro_rules! take {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src {
                $dst = v;
            }
        };
    }
    take!(p.n, sys.n);
    take!(p.v_dc, sys.v_dc);
    take!(p.capacitance, sys.capacitance);
    take!(p.arm_inductance, sys.arm_inductance);
    take!(p.grid_resistance, sys.grid_resistance);
    take!(p.grid_inductance, sys.grid_inductance);
    take!(p.sample_period, sys.sample_period);
    take!(p.grid_frequency, sys.grid_frequency);
    take!(p.w_ac, sys.w_ac);
    take!(p.w_circ, sys.w_circ);

    let sc = &file.scenario;
    take!(cfg.duration, sc.duration);
    take!(cfg.warmup, sc.warmup);
    take!(cfg.p_ref, sc.p_ref);
    take!(cfg.v_s_peak, sc.v_s_peak);
    if let Some(name) = &sc.algorithm {
        cfg.algorithm = Algorithm::from_str(name).map_err(|e| invalid("scenario.algorithm", e))?;
    }
    if let Some(name) = &sc.dc_model {
        cfg.dc_model = DcModel::from_str(name).map_err(|e| invalid("scenario.dc_model", e))?;
    }
    take!(cfg.line_length_km, file.line.length_km);
    take!(cfg.line_capacitance, file.line.capacitance_per_km);
    take!(cfg.line_inductance, file.line.inductance_per_km);

    take!(cfg.algorithm, overrides.algorithm);
    take!(cfg.dc_model, overrides.dc_model);
    take!(cfg.duration, overrides.duration);

    match &sc.nsw_schedule {
        Some(segments) => {
            cfg.nsw_schedule = NswSchedule {
                segments: segments.clone(),
            };
            if overrides.duration.is_some() {
                cfg.nsw_schedule = fit_schedule(&cfg.nsw_schedule, cfg.duration);
            }
        }
        None => {
            if n_changed {
                // The profile staircase is built for its own n.
                let base = profile.scenario();
                let seg = base.nsw_schedule.segments[1].end - base.nsw_schedule.segments[1].start;
                cfg.nsw_schedule = NswSchedule::staircase(cfg.params.n, base.warmup, seg);
            }
            cfg.nsw_schedule = fit_schedule(&cfg.nsw_schedule, cfg.duration);
        }
    }

    let settle = file.metrics.settle.unwrap_or(0.02);
    if !(settle.is_finite() && settle >= 0.0) {
        return Err(invalid("metrics.settle", format!("must be >= 0, got {settle}")));
    }

    cfg.validate().map_err(|e| match e {
        mmc_core::sim::ConfigError::Params(mmc_core::model::ParamsError::OutOfRange {
            key,
            requirement,
            value,
        }) => invalid(&format!("system.{key}"), format!("must be {requirement}, got {value}")),
        mmc_core::sim::ConfigError::Params(mmc_core::model::ParamsError::NoSubmodules) => {
            invalid("system.n", "must be at least 1")
        }
        mmc_core::sim::ConfigError::Invalid { key, reason } => {
            let section = match key {
                "line_length_km" | "line_capacitance" | "line_inductance" => "line",
                _ => "scenario",
            };
            invalid(&format!("{section}.{key}"), reason)
        }
    })?;
    for seg in cfg.nsw_schedule.segments.iter() {
        if seg.end > cfg.warmup && seg.end - seg.start.max(cfg.warmup) <= settle {
            return Err(invalid(
                "metrics.settle",
                format!("{settle} s leaves nothing of segment ({}, {}]", seg.start, seg.end),
            ));
        }
    }

    Ok(RunConfig {
        profile,
        scenario: cfg,
        settle,
    })
}
