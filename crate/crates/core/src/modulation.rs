//! Per-step switching decision for one phase leg.
//!
//! Two stages. Sorting ranks the submodules of each arm; selection then picks
//! how many of the top-ranked submodules to insert in each arm so that the
//! predicted AC current and leg current land as close as possible to their
//! targets. Only prefixes of the sorted order are ever inserted.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::model::{arm_currents, ArmState, PhaseLegState, SwitchDecision, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Conventional voltage-balancing sort.
    V1F2,
    /// Voltage-balancing sort with a cap on switching events per arm.
    V1FC,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::V1F2 => "v1f2",
            Algorithm::V1FC => "v1fc",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "v1f2" => Ok(Algorithm::V1F2),
            "v1fc" => Ok(Algorithm::V1FC),
            other => Err(format!("unknown algorithm `{other}` (expected v1f2 or v1fc)")),
        }
    }
}

/// Arm voltages that would put the AC current on its reference and the leg
/// current at zero after one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmTargets {
    pub v_up: f64,
    pub v_low: f64,
}

/// Sort keys of the submodule at one position of the final order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SortKey {
    /// Anticipated capacitor voltage.
    pub v_c: f64,
    /// Switching events accumulated over positions `0..=m` if this prefix is
    /// inserted.
    pub n_sw: usize,
    /// Excess of `n_sw` over the allowed number of events.
    pub mu: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortedArm {
    /// Submodule indices (0-based) in insertion-priority order.
    pub order: Vec<usize>,
    pub keys: Vec<SortKey>,
}

impl SortedArm {
    /// Statuses that insert the first `m` submodules of the order.
    pub fn prefix_statuses(&self, m: usize) -> Vec<bool> {
        assert!(m <= self.order.len(), "prefix longer than arm");
        let mut u = vec![false; self.order.len()];
        for &j in &self.order[..m] {
            u[j] = true;
        }
        u
    }
}

/// An insertion count per arm with its objective value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub m_up: usize,
    pub m_low: usize,
    pub f_value: f64,
}

impl Selection {
    /// Smaller objective first, then fewer upper, then fewer lower insertions.
    fn better_than(&self, other: &Selection) -> bool {
        match self.f_value.total_cmp(&other.f_value) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => (self.m_up, self.m_low) < (other.m_up, other.m_low),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub selection: Selection,
    pub decision: SwitchDecision,
    pub upper: SortedArm,
    pub lower: SortedArm,
}

pub fn compute_targets(params: &SystemParams, i_ref: f64, i_now: f64, i_z_now: f64, v_s_now: f64) -> ArmTargets {
    let common = params.v_dc / 2.0 + params.arm_inductance / params.sample_period * i_z_now;
    let diff = params.k_eq() * i_ref + v_s_now - params.l_eq() / params.sample_period * i_now;
    ArmTargets {
        v_up: common - diff,
        v_low: common + diff,
    }
}

/// Weighted deviation of the AC current from its reference plus the weighted
/// leg current, both one step ahead.
pub fn objective_f(params: &SystemParams, targets: &ArmTargets, v_up_next: f64, v_low_next: f64) -> f64 {
    let dv_up = targets.v_up - v_up_next;
    let dv_low = targets.v_low - v_low_next;
    let (a, b) = objective_coefficients(params);
    a * (dv_low - dv_up).abs() + b * (dv_low + dv_up).abs()
}

fn objective_coefficients(params: &SystemParams) -> (f64, f64) {
    (
        params.w_ac / (2.0 * params.k_eq()),
        params.w_circ * params.sample_period / (2.0 * params.arm_inductance),
    )
}

/// Capacitor voltages assuming every submodule were inserted for the step.
fn anticipated_if_inserted(arm: &ArmState, i_arm: f64, params: &SystemParams) -> Vec<f64> {
    let dv = params.sample_period * i_arm / params.capacitance;
    arm.v_c.iter().map(|v| v + dv).collect()
}

/// Stable sort of `order` by anticipated voltage: ascending when the arm
/// current charges the capacitors (`i_arm >= 0`), descending otherwise.
fn sort_by_voltage(order: &mut [usize], v_ant: &[f64], i_arm: f64) {
    if i_arm >= 0.0 {
        order.sort_by(|&a, &b| v_ant[a].total_cmp(&v_ant[b]));
    } else {
        order.sort_by(|&a, &b| v_ant[b].total_cmp(&v_ant[a]));
    }
}

/// Stable sort putting currently inserted submodules first.
fn sort_by_status(order: &mut [usize], u_now: &[bool]) {
    order.sort_by_key(|&j| !u_now[j]);
}

/// Cumulative turn-on count and its excess over `n_sw_max`, along `order`.
fn switching_keys(order: &[usize], u_now: &[bool], v_ant: &[f64], n_sw_max: usize) -> Vec<SortKey> {
    let mut n_sw = 0;
    order
        .iter()
        .map(|&j| {
            n_sw += usize::from(!u_now[j]);
            SortKey {
                v_c: v_ant[j],
                n_sw,
                mu: n_sw.saturating_sub(n_sw_max),
            }
        })
        .collect()
}

fn check_ordering_preserved(arm: &ArmState, v_ant: &[f64]) {
    // A uniform shift cannot reverse the order of two voltages.
    for a in 0..arm.len() {
        for b in 0..arm.len() {
            if arm.v_c[a] < arm.v_c[b] {
                assert!(v_ant[a] <= v_ant[b], "anticipation reordered submodules");
            }
        }
    }
}

/// Conventional sort: inserted submodules first, then by anticipated
/// voltage. All penalties are zero.
pub fn sort_v1f2(arm: &ArmState, i_arm: f64, params: &SystemParams) -> SortedArm {
    let v_ant = anticipated_if_inserted(arm, i_arm, params);
    debug_assert!({
        check_ordering_preserved(arm, &v_ant);
        true
    });
    let mut order: Vec<usize> = (0..arm.len()).collect();
    sort_by_status(&mut order, &arm.u);
    sort_by_voltage(&mut order, &v_ant, i_arm);
    let keys = switching_keys(&order, &arm.u, &v_ant, usize::MAX)
        .into_iter()
        .map(|k| SortKey { mu: 0, ..k })
        .collect();
    SortedArm { order, keys }
}

/// Cascaded sort limiting the number of turn-on events per arm.
///
/// After the status and voltage sorts, the voltage order is walked once. A
/// bypassed submodule is admitted while fewer than `n_sw_max` turn-on events
/// have been admitted ahead of it; inserted submodules never add an event.
/// The final stable sort on the penalty moves the non-admitted submodules
/// behind all admitted ones, each group keeping its voltage order. The keys
/// returned are the cumulative counts along that final order, so every prefix
/// of length `m` costs `keys[m - 1].n_sw` turn-on events.
pub fn sort_v1fc(arm: &ArmState, i_arm: f64, n_sw_max: usize, params: &SystemParams) -> SortedArm {
    assert!(n_sw_max <= arm.len(), "n_sw_max {n_sw_max} outside [0, {}]", arm.len());
    let v_ant = anticipated_if_inserted(arm, i_arm, params);
    let mut order: Vec<usize> = (0..arm.len()).collect();
    sort_by_status(&mut order, &arm.u);
    sort_by_voltage(&mut order, &v_ant, i_arm);

    let mut admitted = 0;
    let mut penalty = vec![0usize; arm.len()];
    for &j in &order {
        let n_sw = admitted + usize::from(!arm.u[j]);
        let mu = n_sw.saturating_sub(n_sw_max);
        if mu == 0 {
            admitted = n_sw;
        }
        penalty[j] = mu;
    }
    order.sort_by_key(|&j| penalty[j]);

    let keys = switching_keys(&order, &arm.u, &v_ant, n_sw_max);
    SortedArm { order, keys }
}

/// Running sums `[0, v_1, v_1 + v_2, ...]` of the voltages in sorted order.
pub fn cumulative_sums(sorted: &SortedArm, v_c_next: &[f64]) -> Vec<f64> {
    assert_eq!(sorted.order.len(), v_c_next.len(), "voltage vector length mismatch");
    let mut sums = Vec::with_capacity(v_c_next.len() + 1);
    let mut acc = 0.0;
    sums.push(acc);
    for &j in &sorted.order {
        acc += v_c_next[j];
        sums.push(acc);
    }
    sums
}

fn is_non_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[0] <= w[1])
}

/// Index `k` in `0..n` with `sums[k] <= x < sums[k + 1]`, clamped to the
/// first or last bracket when `x` lies outside the range.
fn bracket(sums: &[f64], x: f64) -> usize {
    let n = sums.len() - 1;
    let above = sums.partition_point(|&s| s <= x);
    above.saturating_sub(1).min(n - 1)
}

fn evaluate(
    alpha: &[f64],
    beta: &[f64],
    targets: &ArmTargets,
    params: &SystemParams,
    m_up: usize,
    m_low: usize,
) -> Selection {
    Selection {
        m_up,
        m_low,
        f_value: objective_f(params, targets, alpha[m_up], beta[m_low]),
    }
}

fn check_sums(alpha: &[f64], beta: &[f64]) {
    assert!(alpha.len() >= 2, "cumulative sums need n >= 1");
    assert_eq!(alpha.len(), beta.len(), "arms must have equal length");
}

/// Evaluates only the four corner pairs around the targets' brackets.
///
/// Exact for equal capacitor voltages; with unequal voltages a pair outside
/// the brackets can occasionally win, which is why [`select_optimal`] scans
/// a bracket per row instead.
pub fn select_four_candidates(alpha: &[f64], beta: &[f64], targets: &ArmTargets, params: &SystemParams) -> Selection {
    check_sums(alpha, beta);
    let i = bracket(alpha, targets.v_up);
    let j = bracket(beta, targets.v_low);
    let mut best: Option<Selection> = None;
    for (m_up, m_low) in [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)] {
        let cand = evaluate(alpha, beta, targets, params, m_up, m_low);
        if best.is_none_or(|b| cand.better_than(&b)) {
            best = Some(cand);
        }
    }
    best.expect("four candidates evaluated")
}

/// Globally optimal `(m_up, m_low)` over all prefix pairs.
///
/// For a fixed upper count the objective is convex in the lower arm voltage,
/// and the lower sums are monotone, so each row's minimum sits at one of the
/// two sums bracketing the row's continuous minimiser. That makes `2(n + 1)`
/// evaluations enough. Non-monotone sums fall back to the full scan.
pub fn select_optimal(alpha: &[f64], beta: &[f64], targets: &ArmTargets, params: &SystemParams) -> Selection {
    check_sums(alpha, beta);
    if !is_non_decreasing(alpha) || !is_non_decreasing(beta) {
        return brute_force_select(alpha, beta, targets, params);
    }
    let (a, b) = objective_coefficients(params);
    let mut best: Option<Selection> = None;
    for m_up in 0..alpha.len() {
        let dv_up = targets.v_up - alpha[m_up];
        // Row objective a|y - x| + b|y + x| in y = dv_low is minimised at
        // y = x when a >= b, else at y = -x.
        let dv_low_star = if a >= b { dv_up } else { -dv_up };
        let k = bracket(beta, targets.v_low - dv_low_star);
        let mut row = evaluate(alpha, beta, targets, params, m_up, k);
        let right = evaluate(alpha, beta, targets, params, m_up, k + 1);
        if right.better_than(&row) {
            row = right;
        }
        // The row minimum may be a plateau; take its smallest lower count.
        while row.m_low > 0 {
            let left = evaluate(alpha, beta, targets, params, m_up, row.m_low - 1);
            if left.f_value == row.f_value {
                row = left;
            } else {
                break;
            }
        }
        if best.is_none_or(|b| row.better_than(&b)) {
            best = Some(row);
        }
    }
    best.expect("at least one row")
}

/// Exhaustive scan of all `(n + 1)^2` prefix pairs.
pub fn brute_force_select(alpha: &[f64], beta: &[f64], targets: &ArmTargets, params: &SystemParams) -> Selection {
    check_sums(alpha, beta);
    let mut best: Option<Selection> = None;
    for m_up in 0..alpha.len() {
        for m_low in 0..beta.len() {
            let cand = evaluate(alpha, beta, targets, params, m_up, m_low);
            if best.is_none_or(|b| cand.better_than(&b)) {
                best = Some(cand);
            }
        }
    }
    best.expect("non-empty scan")
}

pub fn sort_arm(arm: &ArmState, i_arm: f64, n_sw_max: usize, algorithm: Algorithm, params: &SystemParams) -> SortedArm {
    match algorithm {
        Algorithm::V1F2 => sort_v1f2(arm, i_arm, params),
        Algorithm::V1FC => sort_v1fc(arm, i_arm, n_sw_max, params),
    }
}

/// Sort both arms, build cumulative sums, select the insertion counts and
/// map them back onto submodule indices.
///
/// `i_z_dc` is the DC share of the leg current; only `i_z - i_z_dc` is
/// treated as circulating current to be suppressed.
pub fn modulate_phase(
    state: &PhaseLegState,
    i_ref: f64,
    i_z_dc: f64,
    n_sw_max: usize,
    algorithm: Algorithm,
    params: &SystemParams,
) -> SelectionResult {
    let (i_up, i_low) = arm_currents(state.i, state.i_z);
    let upper = sort_arm(&state.upper, i_up, n_sw_max, algorithm, params);
    let lower = sort_arm(&state.lower, i_low, n_sw_max, algorithm, params);

    let alpha = cumulative_sums(&upper, &anticipated_if_inserted(&state.upper, i_up, params));
    let beta = cumulative_sums(&lower, &anticipated_if_inserted(&state.lower, i_low, params));
    let targets = compute_targets(params, i_ref, state.i, state.i_z - i_z_dc, state.v_s);
    let selection = select_optimal(&alpha, &beta, &targets, params);

    let decision = SwitchDecision::new(
        &upper.prefix_statuses(selection.m_up),
        &lower.prefix_statuses(selection.m_low),
    );
    SelectionResult {
        selection,
        decision,
        upper,
        lower,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
    }

    fn arm(v_c: &[f64], u: &[bool]) -> ArmState {
        ArmState {
            v_c: v_c.to_vec(),
            u: u.to_vec(),
            i_arm: 0.0,
        }
    }

    #[test]
    fn targets_examples() {
        let p = SystemParams::default();
        let t = compute_targets(&p, 0.0, 0.0, 0.0, 0.0);
        assert_eq!((t.v_up, t.v_low), (30e3, 30e3));
        let t = compute_targets(&p, 100.0, 0.0, 0.0, 0.0);
        assert!(close(t.v_up, 3997.0));
        assert!(close(t.v_low, 56003.0));
    }

    #[test]
    fn objective_examples() {
        let p = SystemParams::default();
        let t = ArmTargets {
            v_up: 25e3,
            v_low: 35e3,
        };
        assert_eq!(objective_f(&p, &t, 25e3, 35e3), 0.0);
        // dv_up = 100, dv_low = -100
        assert!(close(objective_f(&p, &t, 24_900.0, 35_100.0), 0.384_571_011_037_188_05));
        // dv_up = dv_low = 120
        assert!(close(objective_f(&p, &t, 24_880.0, 34_880.0), 1.0));
    }

    #[test]
    fn v1f2_sort_direction() {
        let p = SystemParams::default();
        let a = arm(&[3e3, 1e3, 2e3], &[false; 3]);
        assert_eq!(sort_v1f2(&a, 10.0, &p).order, vec![1, 2, 0]);
        assert_eq!(sort_v1f2(&a, -10.0, &p).order, vec![0, 2, 1]);
        let flat = arm(&[10e3; 4], &[false; 4]);
        assert_eq!(sort_v1f2(&flat, 5.0, &p).order, vec![0, 1, 2, 3]);
        assert_eq!(sort_v1f2(&flat, -5.0, &p).order, vec![0, 1, 2, 3]);
        assert!(sort_v1f2(&a, 10.0, &p).keys.iter().all(|k| k.mu == 0));
    }

    #[test]
    fn v1f2_zero_current_sorts_ascending() {
        let p = SystemParams::default();
        let a = arm(&[3e3, 1e3, 2e3], &[false; 3]);
        assert_eq!(sort_v1f2(&a, 0.0, &p).order, vec![1, 2, 0]);
    }

    #[test]
    fn v1fc_small_instance() {
        // statuses [1,0,1], voltages [10,9,11], charging, no turn-on allowed:
        // voltage order is [1,0,2]; submodule 1 is off and gets pushed back.
        let p = SystemParams::default();
        let a = arm(&[10.0, 9.0, 11.0], &[true, false, true]);
        let s = sort_v1fc(&a, 1.0, 0, &p);
        assert_eq!(s.order, vec![0, 2, 1]);
        let n_sw: Vec<_> = s.keys.iter().map(|k| k.n_sw).collect();
        let mu: Vec<_> = s.keys.iter().map(|k| k.mu).collect();
        assert_eq!(n_sw, vec![0, 0, 1]);
        assert_eq!(mu, vec![0, 0, 1]);
        // One turn-on allowed: plain voltage order.
        assert_eq!(sort_v1fc(&a, 1.0, 1, &p).order, vec![1, 0, 2]);
    }

    #[test]
    fn v1fc_all_on_is_voltage_order() {
        let p = SystemParams::default();
        let a = arm(&[10.2e3, 9.8e3, 10.0e3, 10.1e3], &[true; 4]);
        let s = sort_v1fc(&a, 3.0, 0, &p);
        assert_eq!(s.order, vec![1, 2, 3, 0]);
        assert!(s.keys.iter().all(|k| k.n_sw == 0 && k.mu == 0));
    }

    #[test]
    fn v1fc_relaxed_matches_v1f2() {
        let p = SystemParams::default();
        let a = arm(
            &[10.2e3, 9.8e3, 10.0e3, 10.1e3, 9.9e3, 10.0e3],
            &[true, false, false, true, true, false],
        );
        for i_arm in [-50.0, 0.0, 50.0] {
            assert_eq!(sort_v1fc(&a, i_arm, 6, &p).order, sort_v1f2(&a, i_arm, &p).order);
        }
    }

    #[test]
    #[should_panic(expected = "outside")]
    fn v1fc_rejects_out_of_range_limit() {
        let a = ArmState::uniform(3, 10e3);
        sort_v1fc(&a, 1.0, 4, &SystemParams::default());
    }

    #[test]
    fn cumulative_sum_examples() {
        let s = SortedArm {
            order: (0..6).collect(),
            keys: vec![],
        };
        let sums = cumulative_sums(&s, &[10e3; 6]);
        assert_eq!(sums, vec![0.0, 10e3, 20e3, 30e3, 40e3, 50e3, 60e3]);
        let s = SortedArm {
            order: vec![2, 0, 1],
            keys: vec![],
        };
        let sums = cumulative_sums(&s, &[10.0e3, 10.1e3, 9.9e3]);
        assert_eq!(sums[0], 0.0);
        assert!(close(sums[1], 9.9e3));
        assert!(close(sums[2], 19.9e3));
        assert!(close(sums[3], 30.0e3));
    }

    #[test]
    fn exact_target_is_selected() {
        let p = SystemParams::default();
        let alpha = [0.0, 9.9e3, 19.9e3, 30.0e3];
        let beta = [0.0, 10.2e3, 20.1e3, 30.3e3];
        let t = ArmTargets {
            v_up: alpha[2],
            v_low: beta[1],
        };
        let sel = select_optimal(&alpha, &beta, &t, &p);
        assert_eq!((sel.m_up, sel.m_low, sel.f_value), (2, 1, 0.0));
        assert_eq!(select_four_candidates(&alpha, &beta, &t, &p), sel);
    }

    #[test]
    fn balanced_targets_give_half_insertion() {
        let p = SystemParams::default();
        let sums: Vec<f64> = (0..=6).map(|k| k as f64 * 10e3).collect();
        let t = ArmTargets {
            v_up: 30e3,
            v_low: 30e3,
        };
        let sel = brute_force_select(&sums, &sums, &t, &p);
        assert_eq!((sel.m_up, sel.m_low, sel.f_value), (3, 3, 0.0));
    }

    #[test]
    fn midpoint_targets_fixture() {
        // Both targets halfway into the first bracket with uniform 10 kV
        // capacitors; brute force over all 49 pairs.
        let p = SystemParams::default();
        let sums: Vec<f64> = (0..=6).map(|k| k as f64 * 10e3).collect();
        let t = ArmTargets { v_up: 5e3, v_low: 5e3 };
        let brute = brute_force_select(&sums, &sums, &t, &p);
        // (0,0) and (1,1) leave the AC term at zero and the leg term at
        // b*10e3 with b = T_s/(2l); (0,1) and (1,0) cost a*10e3 only.
        let a = 1.0 / (2.0 * p.k_eq());
        assert_eq!((brute.m_up, brute.m_low), (0, 1));
        assert!(close(brute.f_value, a * 10e3));
        assert_eq!(select_optimal(&sums, &sums, &t, &p), brute);
    }

    #[test]
    fn targets_outside_range_are_clamped() {
        let p = SystemParams::default();
        let sums: Vec<f64> = (0..=6).map(|k| k as f64 * 10e3).collect();
        let t = ArmTargets {
            v_up: -6e3,
            v_low: 70e3,
        };
        let sel = select_optimal(&sums, &sums, &t, &p);
        assert_eq!(sel, brute_force_select(&sums, &sums, &t, &p));
        let four = select_four_candidates(&sums, &sums, &t, &p);
        assert!(four.m_up <= 1 && four.m_low >= 5);
    }

    #[test]
    fn non_monotone_sums_fall_back_to_full_scan() {
        let p = SystemParams::default();
        let alpha = [0.0, 10e3, 5e3, 15e3];
        let beta = [0.0, -2e3, 8e3, 18e3];
        for (u, l) in [(4e3, 9e3), (12e3, -1e3), (6e3, 17e3)] {
            let t = ArmTargets { v_up: u, v_low: l };
            assert_eq!(
                select_optimal(&alpha, &beta, &t, &p),
                brute_force_select(&alpha, &beta, &t, &p)
            );
        }
    }

    #[test]
    fn single_submodule_arm() {
        let p = SystemParams::default();
        let alpha = [0.0, 10e3];
        let beta = [0.0, 9e3];
        for (u, l) in [(0.0, 0.0), (7e3, 2e3), (11e3, 11e3), (-1e3, 4e3)] {
            let t = ArmTargets { v_up: u, v_low: l };
            assert_eq!(
                select_optimal(&alpha, &beta, &t, &p),
                brute_force_select(&alpha, &beta, &t, &p)
            );
        }
    }

    #[test]
    fn idle_state_inserts_half_of_each_arm() {
        let p = SystemParams::default();
        let state = PhaseLegState::initial(&p);
        for algorithm in [Algorithm::V1F2, Algorithm::V1FC] {
            let r = modulate_phase(&state, 0.0, 0.0, 0, algorithm, &p);
            assert_eq!((r.selection.m_up, r.selection.m_low), (3, 3));
            assert_eq!(r.selection.f_value, 0.0);
            assert_eq!(r.decision.upper(), &[true, true, true, false, false, false]);
        }
    }

    #[test]
    fn algorithm_parsing() {
        assert_eq!("V1FC".parse::<Algorithm>(), Ok(Algorithm::V1FC));
        assert_eq!("v1f2".parse::<Algorithm>(), Ok(Algorithm::V1F2));
        assert!("pwm".parse::<Algorithm>().is_err());
    }
}
