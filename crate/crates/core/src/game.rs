//! Per-user cost, closed-form best power, and best response over channels.
//!
//! Users *minimize* `tau * (gamma0 - G p / I)^2 + xi * p`. For a fixed
//! interference level `I` the unconstrained minimizer is
//! `gamma0 I / G - xi I^2 / (2 tau G^2)`; it is clamped into the power range
//! and, in nearest-level mode, resolved to whichever neighbouring level has
//! the lower cost (the cost is convex, so that neighbour is the discrete
//! optimum).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::radio::InterferenceObservation;
use crate::scenario::{Scenario, SnapMode};

/// Cost parameters of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights {
    pub gamma0: f64,
    pub gain: f64,
    pub tau: f64,
    pub xi: f64,
}

impl CostWeights {
    pub fn of_user(scenario: &Scenario, i: usize) -> Self {
        let u = scenario.user(i);
        Self {
            gamma0: u.gamma0,
            gain: scenario.gain(i),
            tau: u.tau,
            xi: u.xi,
        }
    }

    #[inline]
    pub fn cost(&self, power: f64, interference: f64) -> f64 {
        let shortfall = self.gamma0 - self.gain * power / interference;
        self.tau * shortfall * shortfall + self.xi * power
    }

    /// Unconstrained stationary point of the cost in `power`.
    #[inline]
    pub fn raw_best_power(&self, interference: f64) -> f64 {
        self.gamma0 * interference / self.gain
            - self.xi * interference * interference / (2.0 * self.tau * self.gain * self.gain)
    }
}

/// Feasible transmit powers.
#[derive(Debug, Clone, Copy)]
pub struct PowerSpace<'a> {
    pub p_min: f64,
    pub p_max: f64,
    pub snap_mode: SnapMode,
    pub levels: &'a [f64],
}

impl<'a> PowerSpace<'a> {
    pub fn of(scenario: &'a Scenario) -> Self {
        Self {
            p_min: scenario.p_min(),
            p_max: scenario.p_max(),
            snap_mode: scenario.snap_mode(),
            levels: scenario.power_levels().unwrap_or(&[]),
        }
    }

    /// Clamping only, regardless of the scenario's snap mode.
    pub fn continuous(scenario: &'a Scenario) -> Self {
        Self {
            snap_mode: SnapMode::Continuous,
            ..Self::of(scenario)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerChoice {
    pub power: f64,
    /// Closed-form value before clamping and snapping.
    pub raw_power: f64,
    pub clamped: bool,
    pub snapped: bool,
    /// The closed form went negative: interference beyond the bound that
    /// keeps the best power non-negative. `power` is then the lowest
    /// admissible power.
    pub negative_raw: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BestResponse {
    pub channel: usize,
    pub power: f64,
    pub utility: f64,
    pub raw_power: f64,
    pub clamped: bool,
    pub snapped: bool,
    pub negative_raw: bool,
}

/// Cost of user `i` transmitting at `power` against interference `interference`.
pub fn utility(scenario: &Scenario, i: usize, power: f64, interference: f64) -> f64 {
    CostWeights::of_user(scenario, i).cost(power, interference)
}

/// Best power against a fixed interference level, with the weight-ratio
/// precondition checked.
pub fn best_power(
    weights: &CostWeights,
    interference: f64,
    space: &PowerSpace<'_>,
) -> Result<PowerChoice> {
    let CostWeights {
        gamma0,
        gain,
        tau,
        xi,
    } = *weights;
    if !(gamma0 > 0.0 && gain > 0.0 && tau >= 0.0 && xi > 0.0 && interference > 0.0) {
        return Err(Error::Precondition(format!(
            "best power needs positive inputs (gamma0={gamma0}, G={gain}, tau={tau}, xi={xi}, I={interference})"
        )));
    }
    let min_ratio = 2.0 * space.p_max / (gamma0 * gamma0);
    if tau / xi < min_ratio {
        return Err(Error::Precondition(format!(
            "tau/xi = {:e} < 2*p_max/gamma0^2 = {min_ratio:e}",
            tau / xi
        )));
    }
    if space.snap_mode == SnapMode::NearestLevel && space.levels.is_empty() {
        return Err(Error::Precondition(
            "nearest-level snapping without power levels".into(),
        ));
    }
    Ok(solve_power(weights, interference, space))
}

/// Best power for inputs already known to be valid (validated scenario).
pub(crate) fn solve_power(
    weights: &CostWeights,
    interference: f64,
    space: &PowerSpace<'_>,
) -> PowerChoice {
    let raw = weights.raw_best_power(interference);
    let negative_raw = raw < 0.0;
    let clamped_value = if negative_raw {
        space.p_min
    } else {
        raw.clamp(space.p_min, space.p_max)
    };
    let clamped = clamped_value != raw;
    match space.snap_mode {
        SnapMode::Continuous => PowerChoice {
            power: clamped_value,
            raw_power: raw,
            clamped,
            snapped: false,
            negative_raw,
        },
        SnapMode::NearestLevel => {
            let power = snap_to_level(weights, interference, clamped_value, space.levels);
            PowerChoice {
                power,
                raw_power: raw,
                clamped,
                snapped: true,
                negative_raw,
            }
        }
    }
}

/// Lower-cost neighbour of `target` among the sorted `levels`; the lower
/// power wins a tie.
fn snap_to_level(weights: &CostWeights, interference: f64, target: f64, levels: &[f64]) -> f64 {
    let upper = levels.partition_point(|&l| l < target);
    let below = upper.checked_sub(1).map(|n| levels[n]);
    let above = levels.get(upper).copied();
    match (below, above) {
        (_, Some(a)) if a == target => a,
        (Some(b), Some(a)) => {
            if weights.cost(a, interference) < weights.cost(b, interference) {
                a
            } else {
                b
            }
        }
        (Some(b), None) => b,
        (None, Some(a)) => a,
        (None, None) => unreachable!("levels checked non-empty"),
    }
}

/// Best (channel, power) for user `i` against its observed interference.
/// Ties go to the lowest channel index.
pub fn best_response(
    scenario: &Scenario,
    observation: &InterferenceObservation,
    i: usize,
) -> BestResponse {
    let weights = CostWeights::of_user(scenario, i);
    let space = PowerSpace::of(scenario);
    let mut best: Option<BestResponse> = None;
    for (channel, &interference) in observation.per_channel.iter().enumerate() {
        let choice = solve_power(&weights, interference, &space);
        let utility = weights.cost(choice.power, interference);
        if best.is_none_or(|b| utility < b.utility) {
            best = Some(BestResponse {
                channel,
                power: choice.power,
                utility,
                raw_power: choice.raw_power,
                clamped: choice.clamped,
                snapped: choice.snapped,
                negative_raw: choice.negative_raw,
            });
        }
    }
    best.expect("scenario has at least one channel")
}

/// Cost of the best power on every channel (the counterfactuals used by
/// regret learning).
pub fn best_costs_per_channel(
    scenario: &Scenario,
    observation: &InterferenceObservation,
    i: usize,
) -> Vec<f64> {
    let weights = CostWeights::of_user(scenario, i);
    let space = PowerSpace::of(scenario);
    observation
        .per_channel
        .iter()
        .map(|&interference| {
            weights.cost(
                solve_power(&weights, interference, &space).power,
                interference,
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelFeasibility {
    /// `I <= 2 tau gamma0 / xi`: the closed-form power is non-negative.
    pub nonnegative_power_ok: bool,
    /// `I < tau gamma0 G / xi`: best power increases with interference.
    pub monotone_response_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub user: usize,
    /// `tau/xi >= 2 p_max / gamma0^2`.
    pub weight_ratio_ok: bool,
    pub per_channel: Vec<ChannelFeasibility>,
}

impl FeasibilityReport {
    pub fn all_ok(&self) -> bool {
        self.weight_ratio_ok
            && self
                .per_channel
                .iter()
                .all(|c| c.nonnegative_power_ok && c.monotone_response_ok)
    }
}

pub fn channel_feasibility(scenario: &Scenario, i: usize, interference: f64) -> ChannelFeasibility {
    let u = scenario.user(i);
    ChannelFeasibility {
        nonnegative_power_ok: interference <= 2.0 * u.tau * u.gamma0 / u.xi,
        monotone_response_ok: interference < u.tau * u.gamma0 * scenario.gain(i) / u.xi,
    }
}

pub fn check_feasibility(
    scenario: &Scenario,
    observation: &InterferenceObservation,
    i: usize,
) -> FeasibilityReport {
    FeasibilityReport {
        user: i,
        weight_ratio_ok: scenario.user(i).weight_ratio_ok(scenario.p_max()),
        per_channel: observation
            .per_channel
            .iter()
            .map(|&x| channel_feasibility(scenario, i, x))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{UserConfig, DEFAULT_ETA_MW};

    const LEVELS: [f64; 8] = [29.04, 32.67, 36.3, 42.24, 46.2, 50.69, 55.18, 57.42];
    const G: f64 = 5.278031643091577;

    fn default_weights() -> CostWeights {
        CostWeights {
            gamma0: 1e9,
            gain: G,
            tau: 1.0,
            xi: 1e-4,
        }
    }

    fn space(snap_mode: SnapMode) -> PowerSpace<'static> {
        PowerSpace {
            p_min: 29.04,
            p_max: 57.42,
            snap_mode,
            levels: &LEVELS,
        }
    }

    #[test]
    fn cost_on_target_is_power_term() {
        let w = CostWeights {
            gamma0: 100.0,
            gain: 2.0,
            tau: 3.0,
            xi: 0.5,
        };
        // G p / I = 2 * 5 / 0.1 = 100.
        assert!((w.cost(5.0, 0.1) - 2.5).abs() < 1e-12);
        let w0 = CostWeights { tau: 0.0, ..w };
        assert_eq!(w0.cost(7.0, 123.0), 3.5);
    }

    #[test]
    fn closed_form_at_defaults() {
        let w = default_weights();
        let c = best_power(&w, 2.6e-7, &space(SnapMode::Continuous)).unwrap();
        // 49.260788411587940708... by 40-digit evaluation
        assert!((c.power - 49.26078841158794).abs() < 1e-9);
        assert!(!c.clamped && !c.snapped && !c.negative_raw);
        // residual of the quadratic term is negligible at the exact optimum
        let u = w.cost(c.power, 2.6e-7);
        assert!((u - 4.926078841158794e-3).abs() < 1e-9, "{u}");

        let s = best_power(&w, 2.6e-7, &space(SnapMode::NearestLevel)).unwrap();
        // cost(50.69) = 8.4176e14 < cost(46.2) = 3.8607e15
        assert_eq!(s.power, 50.69);
        assert!(s.snapped);
    }

    #[test]
    fn tiny_interference_clamps_to_floor() {
        let c = best_power(&default_weights(), 1e-12, &space(SnapMode::Continuous)).unwrap();
        assert!((c.raw_power - 1.894645708137998e-4).abs() < 1e-15);
        assert_eq!(c.power, 29.04);
        assert!(c.clamped);
    }

    #[test]
    fn zero_tau_fails_precondition() {
        let w = CostWeights {
            tau: 0.0,
            ..default_weights()
        };
        assert!(matches!(
            best_power(&w, 2.6e-7, &space(SnapMode::Continuous)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn negative_raw_returns_floor() {
        let w = CostWeights {
            gamma0: 10.0,
            gain: 1.0,
            tau: 1.0,
            xi: 1.0,
        };
        // 2 tau gamma0 / xi = 20; beyond it the closed form is negative.
        let c = best_power(
            &w,
            25.0,
            &PowerSpace {
                p_min: 1.0,
                p_max: 2.0,
                snap_mode: SnapMode::Continuous,
                levels: &[],
            },
        )
        .unwrap();
        assert!(c.raw_power < 0.0);
        assert!(c.negative_raw);
        assert_eq!(c.power, 1.0);
    }

    #[test]
    fn snapping_matches_discrete_argmin() {
        let w = default_weights();
        let sp = space(SnapMode::NearestLevel);
        for k in 0..400 {
            let interference = 1e-7 * (1.0 + k as f64 * 0.01);
            let c = best_power(&w, interference, &sp).unwrap();
            let brute = LEVELS
                .iter()
                .copied()
                .min_by(|a, b| {
                    w.cost(*a, interference)
                        .total_cmp(&w.cost(*b, interference))
                })
                .unwrap();
            assert_eq!(c.power, brute, "I = {interference}");
        }
    }

    fn scenario(n_users: usize) -> Scenario {
        let users = (0..n_users)
            .map(|i| UserConfig::at(i, i as f64 * 2.0, 0.0))
            .collect();
        Scenario::new(
            users,
            vec![11, 12, 13],
            29.04,
            57.42,
            Some(LEVELS.to_vec()),
            2.4,
            SnapMode::NearestLevel,
        )
        .unwrap()
    }

    #[test]
    fn best_response_prefers_quiet_channel() {
        let s = scenario(1);
        let obs = InterferenceObservation {
            user: 0,
            per_channel: vec![DEFAULT_ETA_MW + 0.5, DEFAULT_ETA_MW, 1.0],
        };
        let br = best_response(&s, &obs, 0);
        assert_eq!(br.channel, 1);
        assert_eq!(br.power, 50.69);
    }

    #[test]
    fn best_response_ties_to_lowest_channel() {
        let s = scenario(1);
        let obs = InterferenceObservation::noise_only(&s, 0);
        assert_eq!(best_response(&s, &obs, 0).channel, 0);
    }

    #[test]
    fn single_channel_best_response() {
        let s = Scenario::new(
            vec![UserConfig::at(0, 0.0, 0.0)],
            vec![20],
            29.04,
            57.42,
            None,
            2.4,
            SnapMode::Continuous,
        )
        .unwrap();
        let br = best_response(&s, &InterferenceObservation::noise_only(&s, 0), 0);
        assert_eq!(br.channel, 0);
        assert!((br.power - 49.26078841158794).abs() < 1e-9);
    }

    #[test]
    fn feasibility_at_defaults() {
        let s = scenario(1);
        let r = check_feasibility(&s, &InterferenceObservation::noise_only(&s, 0), 0);
        assert!(r.all_ok());
        // 2 * 57.42 / 1e18 = 1.1484e-16 <= 1e4
        assert!((s.user(0).min_weight_ratio(57.42) - 1.1484e-16).abs() < 1e-28);

        let over = 2.0 * 1.0 * 1e9 / 1e-4 + 1.0;
        let f = channel_feasibility(&s, 0, over);
        assert!(!f.nonnegative_power_ok);
    }
}
