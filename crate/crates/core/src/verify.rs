//! Brute-force oracles: pure-NE enumeration, unilateral-deviation scan of a
//! single profile, and the swap-deviation check of an empirical joint
//! distribution.
//!
//! Every utility is evaluated through `radio::interference` and
//! `CostWeights::cost`, the same code the engine uses.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::RoundRecord;
use crate::error::{Error, Result};
use crate::game::{check_feasibility, CostWeights, FeasibilityReport};
use crate::radio::{interference, observe, Action, StrategyProfile};
use crate::scenario::Scenario;

/// Largest joint profile count `brute_force_ne` will enumerate.
pub const ENUMERATION_LIMIT: f64 = 1e8;
/// Uniform points added to the levels for deviation scans.
pub const DEFAULT_GRID_POINTS: usize = 512;
/// Allowed slack on the total mass of an empirical distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Powers a deviating user may try.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerGrid {
    /// The scenario's discrete levels.
    Levels,
    /// `k` evenly spaced points on `[p_min, p_max]`, endpoints included.
    Uniform(usize),
    /// Levels plus `k` uniform points.
    LevelsAndUniform(usize),
}

impl Default for PowerGrid {
    fn default() -> Self {
        PowerGrid::LevelsAndUniform(DEFAULT_GRID_POINTS)
    }
}

impl PowerGrid {
    /// Sorted, de-duplicated powers. A scenario without levels contributes
    /// its two bounds in place of the levels.
    pub fn powers(&self, scenario: &Scenario) -> Result<Vec<f64>> {
        let levels = || match scenario.power_levels() {
            Some(l) => l.to_vec(),
            None => vec![scenario.p_min(), scenario.p_max()],
        };
        let uniform = |k: usize| -> Result<Vec<f64>> {
            if k < 2 {
                return Err(Error::Config(format!(
                    "uniform power grid needs at least 2 points, got {k}"
                )));
            }
            let (lo, hi) = (scenario.p_min(), scenario.p_max());
            Ok((0..k)
                .map(|n| {
                    if n + 1 == k {
                        hi
                    } else {
                        lo + (hi - lo) * n as f64 / (k - 1) as f64
                    }
                })
                .collect())
        };
        let mut powers = match *self {
            PowerGrid::Levels => levels(),
            PowerGrid::Uniform(k) => uniform(k)?,
            PowerGrid::LevelsAndUniform(k) => {
                let mut p = levels();
                p.extend(uniform(k)?);
                p
            }
        };
        powers.sort_by(f64::total_cmp);
        powers.dedup();
        Ok(powers)
    }
}

impl fmt::Display for PowerGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PowerGrid::Levels => write!(f, "levels"),
            PowerGrid::Uniform(k) => write!(f, "uniform:{k}"),
            PowerGrid::LevelsAndUniform(k) => write!(f, "levels+uniform:{k}"),
        }
    }
}

impl FromStr for PowerGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let count = |k: &str| {
            k.parse::<usize>()
                .map_err(|_| Error::Config(format!("bad grid size {k:?} in power grid {s:?}")))
        };
        if s == "levels" {
            Ok(PowerGrid::Levels)
        } else if let Some(k) = s.strip_prefix("uniform:") {
            Ok(PowerGrid::Uniform(count(k)?))
        } else if let Some(k) = s.strip_prefix("levels+uniform:") {
            Ok(PowerGrid::LevelsAndUniform(count(k)?))
        } else {
            Err(Error::Config(format!(
                "power grid must be levels, uniform:K or levels+uniform:K, got {s:?}"
            )))
        }
    }
}

/// Best unilateral deviation of one user.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserDeviation {
    pub user: usize,
    pub current_utility: f64,
    /// Channel index of the best deviation.
    pub best_channel: usize,
    pub best_power: f64,
    pub best_utility: f64,
    /// `current - best`, floored at 0.
    pub improvement: f64,
    pub relative_improvement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileCheck {
    pub max_improvement: f64,
    pub max_relative_improvement: f64,
    pub per_user: Vec<UserDeviation>,
}

impl ProfileCheck {
    pub fn is_epsilon_ne(&self, relative_eps: f64) -> bool {
        self.max_relative_improvement <= relative_eps
    }
}

/// Scans every channel and grid power for each user with the others fixed.
/// The user's current action is always part of the comparison.
pub fn check_profile(
    scenario: &Scenario,
    profile: &StrategyProfile,
    grid: &PowerGrid,
) -> Result<ProfileCheck> {
    profile.validate(scenario)?;
    let powers = grid.powers(scenario)?;
    let per_user: Vec<UserDeviation> = (0..scenario.num_users())
        .map(|i| {
            let weights = CostWeights::of_user(scenario, i);
            let obs = observe(scenario, profile, i);
            let own = profile.actions[i];
            let current = weights.cost(own.power, obs.per_channel[own.channel]);
            let (mut best_channel, mut best_power, mut best_utility) =
                (own.channel, own.power, current);
            for (j, &x) in obs.per_channel.iter().enumerate() {
                for &p in &powers {
                    let u = weights.cost(p, x);
                    if u < best_utility {
                        (best_channel, best_power, best_utility) = (j, p, u);
                    }
                }
            }
            let improvement = (current - best_utility).max(0.0);
            UserDeviation {
                user: i,
                current_utility: current,
                best_channel,
                best_power,
                best_utility,
                improvement,
                relative_improvement: relative(improvement, current),
            }
        })
        .collect();
    let max_improvement = per_user.iter().map(|d| d.improvement).fold(0.0, f64::max);
    let max_relative_improvement = per_user
        .iter()
        .map(|d| d.relative_improvement)
        .fold(0.0, f64::max);
    Ok(ProfileCheck {
        max_improvement,
        max_relative_improvement,
        per_user,
    })
}

fn relative(amount: f64, reference: f64) -> f64 {
    if amount == 0.0 {
        0.0
    } else {
        amount / reference.abs()
    }
}

/// A pure NE found by enumeration, as channel ids and grid powers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeProfile {
    pub channels: Vec<u32>,
    pub powers: Vec<f64>,
    pub utilities: Vec<f64>,
}

/// Enumerates every joint (channel, grid power) profile and returns those
/// where no user can strictly lower its own cost by a unilateral change,
/// ordered by profile encoding.
pub fn brute_force_ne(scenario: &Scenario, grid: &PowerGrid) -> Result<Vec<NeProfile>> {
    let powers = grid.powers(scenario)?;
    let m = scenario.num_users();
    let base = scenario.num_channels() * powers.len();
    let count = (base as f64).powi(m as i32);
    if count > ENUMERATION_LIMIT {
        return Err(Error::InstanceTooLarge {
            profiles: count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let total = base.pow(m as u32);
    let decode = |mut code: usize| -> StrategyProfile {
        let actions = (0..m)
            .map(|_| {
                let digit = code % base;
                code /= base;
                Action::new(digit / powers.len(), powers[digit % powers.len()])
            })
            .collect();
        StrategyProfile::new(actions)
    };

    // best[i][opponents] is user i's lowest cost against that opponent
    // configuration; opponents are encoded by dropping user i's digit.
    let opponents = total / base;
    let best: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let stride = base.pow(i as u32);
            let weights = CostWeights::of_user(scenario, i);
            (0..opponents)
                .into_par_iter()
                .map(|opp| {
                    let code = (opp / stride) * stride * base + opp % stride;
                    let profile = decode(code);
                    let mut lowest = f64::INFINITY;
                    for j in 0..scenario.num_channels() {
                        let x = interference(scenario, &profile, i, j);
                        for &p in &powers {
                            lowest = lowest.min(weights.cost(p, x));
                        }
                    }
                    lowest
                })
                .collect()
        })
        .collect();

    let found = (0..total)
        .into_par_iter()
        .filter_map(|code| {
            let profile = decode(code);
            let mut utilities = Vec::with_capacity(m);
            for i in 0..m {
                let stride = base.pow(i as u32);
                let opp = (code / (stride * base)) * stride + code % stride;
                let a = profile.actions[i];
                let u = CostWeights::of_user(scenario, i)
                    .cost(a.power, interference(scenario, &profile, i, a.channel));
                if u > best[i][opp] {
                    return None;
                }
                utilities.push(u);
            }
            Some(NeProfile {
                channels: profile
                    .actions
                    .iter()
                    .map(|a| scenario.channels()[a.channel])
                    .collect(),
                powers: profile.actions.iter().map(|a| a.power).collect(),
                utilities,
            })
        })
        .collect();
    Ok(found)
}

/// Empirical distribution over joint profiles. Identical profiles (bitwise
/// equal powers) are merged.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    pub entries: Vec<(StrategyProfile, f64)>,
}

impl EmpiricalDistribution {
    pub fn new(entries: Vec<(StrategyProfile, f64)>) -> Self {
        Self { entries }
    }

    pub fn point_mass(profile: StrategyProfile) -> Self {
        Self {
            entries: vec![(profile, 1.0)],
        }
    }

    /// Frequency of each profile played in `rounds`.
    pub fn from_rounds(rounds: &[RoundRecord]) -> Result<Self> {
        if rounds.is_empty() {
            return Err(Error::EmptyTrace);
        }
        let mut counts: BTreeMap<Vec<(usize, u64)>, (StrategyProfile, usize)> = BTreeMap::new();
        for r in rounds {
            let profile = r.profile();
            let key = profile
                .actions
                .iter()
                .map(|a| (a.channel, a.power.to_bits()))
                .collect();
            counts.entry(key).or_insert((profile, 0)).1 += 1;
        }
        let n = rounds.len() as f64;
        Ok(Self {
            entries: counts
                .into_values()
                .map(|(p, c)| (p, c as f64 / n))
                .collect(),
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|(_, w)| w).sum()
    }
}

/// Largest swap-deviation gain over the empirical distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CeReport {
    pub epsilon: f64,
    /// The same violation divided by the deviator's expected cost over the
    /// recommendations it swaps away from.
    pub relative_epsilon: f64,
    pub user: Option<usize>,
    pub from_channel: Option<usize>,
    pub to_channel: Option<usize>,
    pub to_power: Option<f64>,
}

/// For every user `i`, recommended channel `c` and replacement action
/// `(c', p')` on the grid, sums `w * (u_i(played) - u_i((c', p'), others))`
/// over the profiles where `i` played `c`. Returns the largest sum, floored
/// at 0; zero means no swap pays off.
pub fn check_ce(
    empirical: &EmpiricalDistribution,
    scenario: &Scenario,
    grid: &PowerGrid,
) -> Result<CeReport> {
    let mass = empirical.total_mass();
    if !((mass - 1.0).abs() <= NORMALIZATION_TOLERANCE)
        || empirical.entries.iter().any(|(_, w)| !(*w >= 0.0))
    {
        return Err(Error::NotNormalized(mass));
    }
    for (p, _) in &empirical.entries {
        p.validate(scenario)?;
    }
    let powers = grid.powers(scenario)?;
    let n = scenario.num_channels();
    let g = powers.len();
    let mut report = CeReport {
        epsilon: 0.0,
        relative_epsilon: 0.0,
        user: None,
        from_channel: None,
        to_channel: None,
        to_power: None,
    };
    for i in 0..scenario.num_users() {
        let weights = CostWeights::of_user(scenario, i);
        // gain[c][c' * g + k] accumulates the swap c -> (c', powers[k]).
        let mut gain = vec![vec![0.0; n * g]; n];
        let mut expected = vec![0.0; n];
        for (profile, w) in &empirical.entries {
            if *w == 0.0 {
                continue;
            }
            let obs = observe(scenario, profile, i);
            let a = profile.actions[i];
            let played = weights.cost(a.power, obs.per_channel[a.channel]);
            expected[a.channel] += w * played;
            let row = &mut gain[a.channel];
            for (j, &x) in obs.per_channel.iter().enumerate() {
                for (k, &p) in powers.iter().enumerate() {
                    row[j * g + k] += w * (played - weights.cost(p, x));
                }
            }
        }
        for c in 0..n {
            for (idx, &v) in gain[c].iter().enumerate() {
                if v > report.epsilon {
                    report = CeReport {
                        epsilon: v,
                        relative_epsilon: relative(v, expected[c]),
                        user: Some(i),
                        from_channel: Some(c),
                        to_channel: Some(idx / g),
                        to_power: Some(powers[idx % g]),
                    };
                }
            }
        }
    }
    Ok(report)
}

/// Output of a verification run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    pub power_grid: String,
    pub grid_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pure_ne: Option<Vec<NeProfile>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidate: Option<ProfileCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ce: Option<CeReport>,
    /// Feasibility flags of each user against the candidate profile.
    pub conditions: Vec<FeasibilityReport>,
    pub eps: f64,
    pub passed: bool,
}

/// Feasibility flags for every user at `profile`.
pub fn profile_conditions(
    scenario: &Scenario,
    profile: &StrategyProfile,
) -> Vec<FeasibilityReport> {
    (0..scenario.num_users())
        .map(|i| check_feasibility(scenario, &observe(scenario, profile, i), i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{best_power, PowerSpace};
    use crate::scenario::{SnapMode, UserConfig};

    const LEVELS: [f64; 8] = [29.04, 32.67, 36.3, 42.24, 46.2, 50.69, 55.18, 57.42];

    fn scenario(positions: &[(f64, f64)], channels: Vec<u32>) -> Scenario {
        let users = positions
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| UserConfig::at(i, x, y))
            .collect();
        Scenario::new(
            users,
            channels,
            29.04,
            57.42,
            Some(LEVELS.to_vec()),
            2.4,
            SnapMode::NearestLevel,
        )
        .unwrap()
    }

    #[test]
    fn grid_parsing_and_contents() {
        let s = scenario(&[(0.0, 0.0)], vec![11]);
        assert_eq!("levels".parse::<PowerGrid>().unwrap(), PowerGrid::Levels);
        assert_eq!(
            "uniform:9".parse::<PowerGrid>().unwrap(),
            PowerGrid::Uniform(9)
        );
        assert_eq!(
            "levels+uniform:512".parse::<PowerGrid>().unwrap(),
            PowerGrid::default()
        );
        assert!("uniform:x".parse::<PowerGrid>().is_err());
        assert!("cubic".parse::<PowerGrid>().is_err());
        assert!(PowerGrid::Uniform(1).powers(&s).is_err());

        let u = PowerGrid::Uniform(512).powers(&s).unwrap();
        assert_eq!(u.len(), 512);
        assert_eq!((u[0], u[511]), (29.04, 57.42));
        // Both endpoints are levels too.
        assert_eq!(
            PowerGrid::LevelsAndUniform(512).powers(&s).unwrap().len(),
            518
        );
        assert_eq!(PowerGrid::Levels.powers(&s).unwrap(), LEVELS.to_vec());
    }

    #[test]
    fn single_user_ne_is_the_argmin() {
        let s = scenario(&[(0.0, 0.0)], vec![11, 12]);
        let ne = brute_force_ne(&s, &PowerGrid::Levels).unwrap();
        let w = CostWeights::of_user(&s, 0);
        let best = LEVELS
            .iter()
            .map(|&p| w.cost(p, s.user(0).eta))
            .fold(f64::INFINITY, f64::min);
        // Both channels are noise-only, so both are minimizers.
        assert_eq!(ne.len(), 2);
        for p in &ne {
            assert_eq!(p.utilities[0], best);
            assert_eq!(p.powers[0], 50.69);
        }
        assert_eq!(ne[0].channels, vec![11]);
        assert_eq!(ne[1].channels, vec![12]);
    }

    #[test]
    fn strongly_coupled_pair_separates() {
        let s = scenario(&[(0.0, 0.0), (1.0, 0.0)], vec![11, 12]);
        let ne = brute_force_ne(&s, &PowerGrid::Levels).unwrap();
        assert_eq!(ne.len(), 2);
        for p in &ne {
            assert_ne!(p.channels[0], p.channels[1]);
            assert_eq!(p.powers, vec![50.69, 50.69]);
        }
    }

    #[test]
    fn five_by_five_is_too_large() {
        let s = Scenario::table_default();
        match brute_force_ne(&s, &PowerGrid::Levels) {
            Err(Error::InstanceTooLarge { profiles, .. }) => assert_eq!(profiles, 40f64.powi(5)),
            other => panic!("expected instance-too-large, got {other:?}"),
        }
    }

    #[test]
    fn lone_user_at_level_argmin_has_no_improvement() {
        let s = scenario(&[(0.0, 0.0)], vec![11]);
        let p = StrategyProfile::new(vec![Action::new(0, 50.69)]);
        let check = check_profile(&s, &p, &PowerGrid::Levels).unwrap();
        assert_eq!(check.max_improvement, 0.0);

        // The continuous optimum beats every grid point.
        let w = CostWeights::of_user(&s, 0);
        let opt = best_power(&w, s.user(0).eta, &PowerSpace::continuous(&s))
            .unwrap()
            .power;
        let p = StrategyProfile::new(vec![Action::new(0, opt)]);
        assert_eq!(
            check_profile(&s, &p, &PowerGrid::default())
                .unwrap()
                .max_improvement,
            0.0
        );
    }

    #[test]
    fn collision_beside_empty_channel_has_improvement() {
        let s = Scenario::table_default();
        let mut actions: Vec<Action> = (0..5).map(|i| Action::new(i, 50.69)).collect();
        actions[1].channel = 0;
        let p = StrategyProfile::new(actions);
        let check = check_profile(&s, &p, &PowerGrid::default()).unwrap();
        assert!(check.max_improvement > 0.0);
        let d = &check.per_user[1];
        assert_eq!(d.best_channel, 1);
        // Moving off the collision recovers nearly the whole cost.
        assert!(d.relative_improvement > 0.99);
    }

    #[test]
    fn point_mass_ce_matches_profile_check() {
        let s = Scenario::table_default();
        let ne = StrategyProfile::new((0..5).map(|i| Action::new(i, 50.69)).collect());
        let grid = PowerGrid::Levels;
        assert_eq!(check_profile(&s, &ne, &grid).unwrap().max_improvement, 0.0);
        assert_eq!(
            check_ce(&EmpiricalDistribution::point_mass(ne), &s, &grid)
                .unwrap()
                .epsilon,
            0.0
        );

        let mut actions: Vec<Action> = (0..5).map(|i| Action::new(i, 50.69)).collect();
        actions[3].channel = 2;
        let bad = StrategyProfile::new(actions);
        let improvement = check_profile(&s, &bad, &grid).unwrap().max_improvement;
        let ce = check_ce(&EmpiricalDistribution::point_mass(bad), &s, &grid).unwrap();
        assert!(improvement > 0.0);
        assert_eq!(ce.epsilon, improvement);
    }

    #[test]
    fn unnormalized_distribution_rejected() {
        let s = scenario(&[(0.0, 0.0)], vec![11]);
        let p = StrategyProfile::new(vec![Action::new(0, 50.69)]);
        let d = EmpiricalDistribution::new(vec![(p.clone(), 0.5)]);
        assert!(matches!(
            check_ce(&d, &s, &PowerGrid::Levels),
            Err(Error::NotNormalized(_))
        ));
        let d = EmpiricalDistribution::new(vec![(p.clone(), 0.5), (p, 0.5)]);
        assert_eq!(check_ce(&d, &s, &PowerGrid::Levels).unwrap().epsilon, 0.0);
    }

    #[test]
    fn mixing_two_collisions_is_not_an_equilibrium() {
        let s = scenario(&[(0.0, 0.0), (1.0, 0.0)], vec![11, 12]);
        let both_on = |c| StrategyProfile::new(vec![Action::new(c, 50.69), Action::new(c, 50.69)]);
        let d = EmpiricalDistribution::new(vec![(both_on(0), 0.5), (both_on(1), 0.5)]);
        let ce = check_ce(&d, &s, &PowerGrid::Levels).unwrap();
        assert!(ce.epsilon > 0.0);
        assert_ne!(ce.from_channel, ce.to_channel);
    }
}
