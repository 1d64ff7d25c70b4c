//! Converter state and the one-step discrete-time prediction model of a
//! half-bridge MMC phase leg.
//!
//! Sign conventions: a positive arm current charges every inserted submodule
//! capacitor of that arm. The AC output current `i` and the leg current `i_z`
//! are related to the arm currents by
//!
//! ```text
//! i_up  = i_z + i/2
//! i_low = i_z - i/2
//! ```
//!
//! so that `i = i_up - i_low` and `i_z = (i_up + i_low)/2`. Every piece of
//! code that needs arm currents goes through [`arm_currents`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("`{key}` must be {requirement}, got {value}")]
    OutOfRange {
        key: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("`n` must be at least 1")]
    NoSubmodules,
}

/// Electrical constants of one MMC together with the objective weights used
/// by the modulation stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Submodules per arm.
    pub n: usize,
    /// DC link voltage (V).
    pub v_dc: f64,
    /// Submodule capacitance (F).
    pub capacitance: f64,
    /// Arm inductance `l` (H).
    pub arm_inductance: f64,
    /// Grid-side series resistance `R` (Ω).
    pub grid_resistance: f64,
    /// Grid-side series inductance `L` (H).
    pub grid_inductance: f64,
    /// Sampling period (s).
    pub sample_period: f64,
    /// Grid frequency (Hz).
    pub grid_frequency: f64,
    /// Weight of the AC tracking term.
    pub w_ac: f64,
    /// Weight of the circulating-current term.
    pub w_circ: f64,
}

impl Default for SystemParams {
    /// The 7-level, 50 MVA test converter.
    fn default() -> Self {
        Self {
            n: 6,
            v_dc: 60e3,
            capacitance: 2.5e-3,
            arm_inductance: 3e-3,
            grid_resistance: 0.03,
            grid_inductance: 5e-3,
            sample_period: 25e-6,
            grid_frequency: 60.0,
            w_ac: 1.0,
            w_circ: 1.0,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        if self.n == 0 {
            return Err(ParamsError::NoSubmodules);
        }
        let positive = [
            ("v_dc", self.v_dc),
            ("capacitance", self.capacitance),
            ("arm_inductance", self.arm_inductance),
            ("grid_inductance", self.grid_inductance),
            ("sample_period", self.sample_period),
            ("grid_frequency", self.grid_frequency),
        ];
        for (key, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ParamsError::OutOfRange {
                    key,
                    requirement: "finite and > 0",
                    value,
                });
            }
        }
        let non_negative = [
            ("grid_resistance", self.grid_resistance),
            ("w_ac", self.w_ac),
            ("w_circ", self.w_circ),
        ];
        for (key, value) in non_negative {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ParamsError::OutOfRange {
                    key,
                    requirement: "finite and >= 0",
                    value,
                });
            }
        }
        Ok(())
    }

    /// Equivalent AC-side inductance `L' = L + l/2`.
    pub fn l_eq(&self) -> f64 {
        self.grid_inductance + self.arm_inductance / 2.0
    }

    /// `K' = R + L'/T_s`.
    pub fn k_eq(&self) -> f64 {
        self.grid_resistance + self.l_eq() / self.sample_period
    }

    /// Nominal submodule voltage `V_dc / n`.
    pub fn nominal_cap_voltage(&self) -> f64 {
        self.v_dc / self.n as f64
    }
}

/// One arm: capacitor voltages, insertion statuses and the arm current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub v_c: Vec<f64>,
    pub u: Vec<bool>,
    pub i_arm: f64,
}

impl ArmState {
    /// All capacitors at `v0`, all submodules bypassed, no current.
    pub fn uniform(n: usize, v0: f64) -> Self {
        Self {
            v_c: vec![v0; n],
            u: vec![false; n],
            i_arm: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.v_c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_c.is_empty()
    }

    pub fn inserted(&self) -> usize {
        self.u.iter().filter(|&&on| on).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseLegState {
    pub upper: ArmState,
    pub lower: ArmState,
    /// AC output current (A).
    pub i: f64,
    /// Leg (circulating) current (A).
    pub i_z: f64,
    /// Grid phase voltage sample (V).
    pub v_s: f64,
}

impl PhaseLegState {
    /// Equilibrium start: capacitors at `V_dc/n`, everything bypassed, zero
    /// currents.
    pub fn initial(params: &SystemParams) -> Self {
        let v0 = params.nominal_cap_voltage();
        Self {
            upper: ArmState::uniform(params.n, v0),
            lower: ArmState::uniform(params.n, v0),
            i: 0.0,
            i_z: 0.0,
            v_s: 0.0,
        }
    }

    pub fn statuses(&self) -> SwitchDecision {
        let mut u = self.upper.u.clone();
        u.extend_from_slice(&self.lower.u);
        SwitchDecision { u }
    }

    pub fn is_finite(&self) -> bool {
        [self.i, self.i_z, self.v_s, self.upper.i_arm, self.lower.i_arm]
            .iter()
            .chain(&self.upper.v_c)
            .chain(&self.lower.v_c)
            .all(|x| x.is_finite())
    }
}

/// Insertion vector for one phase leg: entries `0..n` are the upper arm,
/// `n..2n` the lower arm.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SwitchDecision {
    pub u: Vec<bool>,
}

impl SwitchDecision {
    pub fn new(upper: &[bool], lower: &[bool]) -> Self {
        assert_eq!(upper.len(), lower.len(), "arms must have equal length");
        let mut u = upper.to_vec();
        u.extend_from_slice(lower);
        Self { u }
    }

    pub fn n(&self) -> usize {
        self.u.len() / 2
    }

    pub fn upper(&self) -> &[bool] {
        &self.u[..self.n()]
    }

    pub fn lower(&self) -> &[bool] {
        &self.u[self.n()..]
    }
}

/// Arm currents `(i_up, i_low)` from the AC and leg currents.
pub fn arm_currents(i: f64, i_z: f64) -> (f64, f64) {
    (i_z + i / 2.0, i_z - i / 2.0)
}

/// Inverse of [`arm_currents`]: `(i, i_z)`.
pub fn output_and_leg_currents(i_up: f64, i_low: f64) -> (f64, f64) {
    (i_up - i_low, (i_up + i_low) / 2.0)
}

/// AC current at `t + T_s`. The grid voltage at `t + T_s` is taken as the
/// supplied `v_s`.
pub fn predict_ac_current(params: &SystemParams, v_up_next: f64, v_low_next: f64, v_s: f64, i_now: f64) -> f64 {
    assert!(
        v_up_next.is_finite() && v_low_next.is_finite() && v_s.is_finite() && i_now.is_finite(),
        "non-finite input to predict_ac_current"
    );
    ((v_low_next - v_up_next) / 2.0 - v_s + params.l_eq() / params.sample_period * i_now) / params.k_eq()
}

/// Capacitor voltages at `t + T_s` given the statuses applied over the step.
pub fn anticipate_capacitor_voltages(arm: &ArmState, i_arm: f64, u_next: &[bool], params: &SystemParams) -> Vec<f64> {
    assert_eq!(arm.v_c.len(), u_next.len(), "status vector length mismatch");
    let dv = params.sample_period * i_arm / params.capacitance;
    arm.v_c
        .iter()
        .zip(u_next)
        .map(|(&v, &on)| if on { v + dv } else { v })
        .collect()
}

/// Voltage across an arm: the sum of inserted capacitor voltages.
pub fn arm_voltage(v_c_next: &[f64], u_next: &[bool]) -> f64 {
    assert_eq!(v_c_next.len(), u_next.len(), "status vector length mismatch");
    v_c_next.iter().zip(u_next).filter(|(_, &on)| on).map(|(v, _)| v).sum()
}

/// Leg current at `t + T_s`.
pub fn predict_circulating_current(params: &SystemParams, v_up_next: f64, v_low_next: f64, i_z_now: f64) -> f64 {
    params.sample_period / (2.0 * params.arm_inductance) * (params.v_dc - v_low_next - v_up_next) + i_z_now
}

/// Advances one phase leg by one sampling period under `decision`.
///
/// Capacitors integrate the arm currents measured at `t`; the new arm
/// voltages then drive the AC and leg currents; the arm currents are
/// recomposed last.
pub fn step_phase(
    state: &PhaseLegState,
    decision: &SwitchDecision,
    v_s_next: f64,
    params: &SystemParams,
) -> PhaseLegState {
    let n = state.upper.len();
    assert_eq!(decision.u.len(), 2 * n, "decision length must be 2n");
    let (u_up, u_low) = (decision.upper(), decision.lower());

    let v_up_caps = anticipate_capacitor_voltages(&state.upper, state.upper.i_arm, u_up, params);
    let v_low_caps = anticipate_capacitor_voltages(&state.lower, state.lower.i_arm, u_low, params);
    let v_up = arm_voltage(&v_up_caps, u_up);
    let v_low = arm_voltage(&v_low_caps, u_low);

    let i = predict_ac_current(params, v_up, v_low, v_s_next, state.i);
    let i_z = predict_circulating_current(params, v_up, v_low, state.i_z);
    let (i_up, i_low) = arm_currents(i, i_z);

    PhaseLegState {
        upper: ArmState {
            v_c: v_up_caps,
            u: u_up.to_vec(),
            i_arm: i_up,
        },
        lower: ArmState {
            v_c: v_low_caps,
            u: u_low.to_vec(),
            i_arm: i_low,
        },
        i,
        i_z,
        v_s: v_s_next,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn derived_constants() {
        let p = SystemParams::default();
        assert!(close(p.l_eq(), 6.5e-3));
        assert!(close(p.k_eq(), 260.03));
        assert!(close(p.nominal_cap_voltage(), 10e3));
        p.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_values() {
        let with = |f: fn(&mut SystemParams)| {
            let mut p = SystemParams::default();
            f(&mut p);
            p.validate()
        };
        assert_eq!(with(|p| p.n = 0), Err(ParamsError::NoSubmodules));
        assert!(matches!(
            with(|p| p.capacitance = 0.0),
            Err(ParamsError::OutOfRange { key: "capacitance", .. })
        ));
        assert!(with(|p| p.grid_resistance = -1.0).is_err());
        assert!(with(|p| p.grid_resistance = 0.0).is_ok());
    }

    #[test]
    fn ac_current_examples() {
        let p = SystemParams::default();
        assert_eq!(predict_ac_current(&p, 30e3, 30e3, 0.0, 0.0), 0.0);
        // 1000 / 260.03
        assert!(close(
            predict_ac_current(&p, 29e3, 31e3, 0.0, 0.0),
            3.845_710_110_371_880_3
        ));
        // 10 * 260 / 260.03
        assert!(close(
            predict_ac_current(&p, 30e3, 30e3, 0.0, 10.0),
            9.998_846_286_966_888
        ));
    }

    #[test]
    #[should_panic(expected = "non-finite")]
    fn ac_current_rejects_nan() {
        predict_ac_current(&SystemParams::default(), f64::NAN, 0.0, 0.0, 0.0);
    }

    #[test]
    fn capacitor_anticipation() {
        let p = SystemParams::default();
        let arm = ArmState {
            v_c: vec![10e3, 9.9e3, 10.1e3],
            u: vec![true, false, true],
            i_arm: 100.0,
        };
        assert_eq!(anticipate_capacitor_voltages(&arm, 100.0, &[false; 3], &p), arm.v_c);
        assert_eq!(anticipate_capacitor_voltages(&arm, 0.0, &[true; 3], &p), arm.v_c);
        let next = anticipate_capacitor_voltages(&arm, 100.0, &[true, false, false], &p);
        assert!(close(next[0], 10001.0));
        assert_eq!(next[1], 9.9e3);
    }

    #[test]
    #[should_panic(expected = "length mismatch")]
    fn capacitor_anticipation_length_mismatch() {
        let arm = ArmState::uniform(3, 10e3);
        anticipate_capacitor_voltages(&arm, 1.0, &[true; 2], &SystemParams::default());
    }

    #[test]
    fn arm_voltage_examples() {
        assert_eq!(arm_voltage(&[10e3; 6], &[false; 6]), 0.0);
        assert_eq!(arm_voltage(&[10e3; 6], &[true, true, true, false, false, false]), 30e3);
        assert_eq!(
            arm_voltage(
                &[10100.0, 9900.0, 10000.0, 10000.0, 10050.0, 9950.0],
                &[true, false, true, false, true, false]
            ),
            30150.0
        );
    }

    #[test]
    fn circulating_current_examples() {
        let p = SystemParams::default();
        assert_eq!(predict_circulating_current(&p, 30e3, 30e3, 0.0), 0.0);
        assert!(close(predict_circulating_current(&p, 29880.0, 29880.0, 0.0), 1.0));
        assert_eq!(predict_circulating_current(&p, 30e3, 30e3, 5.0), 5.0);
    }

    #[test]
    fn current_decomposition_round_trip() {
        let (up, low) = arm_currents(100.0, 20.0);
        assert_eq!((up, low), (70.0, -30.0));
        assert_eq!(output_and_leg_currents(up, low), (100.0, 20.0));
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let p = SystemParams::default();
        let state = PhaseLegState::initial(&p);
        let on = [true, true, true, false, false, false];
        let decision = SwitchDecision::new(&on, &on);
        let next = step_phase(&state, &decision, 0.0, &p);
        assert_eq!(next.i, 0.0);
        assert_eq!(next.i_z, 0.0);
        assert_eq!(next.upper.v_c, state.upper.v_c);
        assert_eq!(next.lower.v_c, state.lower.v_c);
        assert_eq!(next.statuses(), decision);
    }

    #[test]
    fn inserted_capacitors_drift_by_exact_increment() {
        let p = SystemParams::default();
        let mut state = PhaseLegState::initial(&p);
        state.i = 80.0;
        state.i_z = 30.0;
        let (i_up, i_low) = arm_currents(state.i, state.i_z);
        state.upper.i_arm = i_up;
        state.lower.i_arm = i_low;
        state.upper.u = vec![true, false, true, false, true, false];
        state.lower.u = vec![false, true, false, true, false, true];
        let decision = state.statuses();
        let next = step_phase(&state, &decision, 100.0, &p);
        for (arm_now, arm_next) in [(&state.upper, &next.upper), (&state.lower, &next.lower)] {
            let dv = p.sample_period * arm_now.i_arm / p.capacitance;
            for j in 0..p.n {
                if arm_now.u[j] {
                    assert_eq!(arm_next.v_c[j], arm_now.v_c[j] + dv);
                } else {
                    assert_eq!(arm_next.v_c[j], arm_now.v_c[j]);
                }
            }
        }
        assert_eq!(next.v_s, 100.0);
        let (i_up, i_low) = arm_currents(next.i, next.i_z);
        assert_eq!((next.upper.i_arm, next.lower.i_arm), (i_up, i_low));
    }
}
