//! Radio model: log-distance link gain, same-channel aggregate interference
//! and SINR. Everything here works in linear mW; dB is only for reporting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::Scenario;

/// One user's choice in a round. `channel` indexes `Scenario::channels()`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub channel: usize,
    pub power: f64,
}

impl Action {
    pub fn new(channel: usize, power: f64) -> Self {
        Self { channel, power }
    }
}

/// Joint action of all users, indexed by user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub actions: Vec<Action>,
}

impl StrategyProfile {
    pub fn new(actions: Vec<Action>) -> Self {
        Self { actions }
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        if self.actions.len() != scenario.num_users() {
            return Err(Error::LengthMismatch {
                expected: scenario.num_users(),
                actual: self.actions.len(),
            });
        }
        for (i, a) in self.actions.iter().enumerate() {
            if a.channel >= scenario.num_channels() {
                return Err(Error::Domain(format!(
                    "user {i}: channel index {} out of range",
                    a.channel
                )));
            }
            if !(a.power >= scenario.p_min() && a.power <= scenario.p_max()) {
                return Err(Error::Domain(format!(
                    "user {i}: power {} outside [{}, {}]",
                    a.power,
                    scenario.p_min(),
                    scenario.p_max()
                )));
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> impl Iterator<Item = usize> + '_ {
        self.actions.iter().map(|a| a.channel)
    }

    /// True when no two users share a channel.
    pub fn all_distinct(&self) -> bool {
        let mut seen: Vec<usize> = self.channels().collect();
        seen.sort_unstable();
        seen.windows(2).all(|w| w[0] != w[1])
    }
}

/// Aggregate interference-plus-noise seen by one user on every channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceObservation {
    pub user: usize,
    pub per_channel: Vec<f64>,
}

impl InterferenceObservation {
    /// Noise-only observation, used before any measurement exists.
    pub fn noise_only(scenario: &Scenario, user: usize) -> Self {
        Self {
            user,
            per_channel: vec![scenario.user(user).eta; scenario.num_channels()],
        }
    }
}

/// `s / d^delta`.
pub fn link_gain(s: f64, d: f64, delta: f64) -> Result<f64> {
    if !(s > 0.0 && d > 0.0 && delta > 0.0) {
        return Err(Error::Domain(format!(
            "link gain needs positive inputs (s={s}, d={d}, delta={delta})"
        )));
    }
    Ok(s / d.powf(delta))
}

/// Noise plus the path-loss-weighted power of every other user on channel `j`.
/// Users on other channels contribute nothing.
pub fn interference(scenario: &Scenario, profile: &StrategyProfile, i: usize, j: usize) -> f64 {
    let sum: f64 = profile
        .actions
        .iter()
        .enumerate()
        .filter(|&(k, a)| k != i && a.channel == j)
        .map(|(k, a)| scenario.coupling(i, k) * a.power)
        .sum();
    scenario.user(i).eta + sum
}

pub fn observe(
    scenario: &Scenario,
    profile: &StrategyProfile,
    i: usize,
) -> InterferenceObservation {
    let per_channel = (0..scenario.num_channels())
        .map(|j| interference(scenario, profile, i, j))
        .collect();
    InterferenceObservation {
        user: i,
        per_channel,
    }
}

/// SINR of user `i` on the channel it occupies in `profile`.
pub fn sinr(scenario: &Scenario, profile: &StrategyProfile, i: usize) -> f64 {
    let a = profile.actions[i];
    sinr_at(
        scenario.gain(i),
        a.power,
        interference(scenario, profile, i, a.channel),
    )
}

#[inline]
pub fn sinr_at(gain: f64, power: f64, interference: f64) -> f64 {
    gain * power / interference
}

pub fn to_db(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("dB of non-positive ratio {x}")));
    }
    Ok(10.0 * x.log10())
}
