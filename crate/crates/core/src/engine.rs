//! Synchronous round engine for the learning game and the no-learning
//! baseline.
//!
//! A learning round: every user picks a channel from its regret state, sets
//! the best power for that channel against what it observed last round
//! (noise only in round one), the joint profile is realized, and every user
//! observes interference on all channels and updates its regrets. Once all
//! users have locked a channel, powers are driven to their joint fixed point
//! and the settled profile is held for the rest of the horizon.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{self, CostWeights, PowerSpace};
use crate::learning::{RegretState, DEFAULT_LOCK_THRESHOLD};
use crate::radio::{self, Action, InterferenceObservation, StrategyProfile};
use crate::scenario::{Point, Scenario};

pub const DEFAULT_MAX_ITERATIONS: usize = 500;
pub const SETTLE_TOLERANCE_MW: f64 = 1e-9;
pub const SETTLE_MAX_ROUNDS: usize = 1000;

pub const BASELINE_DEFINITION: &str =
    "each user draws a uniform random channel once, transmits at p_max every round, no learning";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Disg,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisgConfig {
    pub seed: u64,
    pub max_iterations: usize,
    pub lock_threshold: f64,
}

impl DisgConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            lock_threshold: DEFAULT_LOCK_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserRound {
    pub channel: usize,
    pub channel_id: u32,
    pub power: f64,
    pub sinr: f64,
    pub sinr_db: f64,
    pub utility: f64,
    pub max_omega: f64,
    pub locked: bool,
    /// Interference-plus-noise on every channel, mW.
    pub observation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub iter: usize,
    pub users: Vec<UserRound>,
}

impl RoundRecord {
    pub fn profile(&self) -> StrategyProfile {
        StrategyProfile::new(
            self.users
                .iter()
                .map(|u| Action::new(u.channel, u.power))
                .collect(),
        )
    }

    pub fn mean_sinr(&self) -> f64 {
        self.users.iter().map(|u| u.sinr).sum::<f64>() / self.users.len() as f64
    }

    pub fn all_locked(&self) -> bool {
        self.users.iter().all(|u| u.locked)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationCounts {
    /// Interference above the bound that keeps the closed-form power non-negative.
    pub nonnegative_power: usize,
    /// Interference at or above the bound where best power stops increasing with it.
    pub monotone_response: usize,
    /// Closed-form best power came out negative and was replaced by the floor.
    pub negative_raw_power: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SettleInfo {
    pub iterations: usize,
    pub residual_mw: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSummary {
    pub converged: bool,
    /// First round in which every user was locked (the settled round).
    pub convergence_iter: Option<usize>,
    pub final_assignment: Vec<u32>,
    pub final_powers: Vec<f64>,
    pub distinct_channels: bool,
    pub avg_sinr_db: f64,
    pub avg_sinr_db_last_quartile: f64,
    /// Mean linear SINR across users of each round, in dB.
    pub round_avg_sinr_db: Vec<f64>,
    pub feasibility_violations: ViolationCounts,
    pub settle: Option<SettleInfo>,
    pub positions: Vec<Point>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_definition: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    pub scenario_fingerprint: String,
    pub seed: u64,
    pub mode: RunMode,
    pub lock_threshold: Option<f64>,
    pub max_iterations: usize,
    pub rounds: Vec<RoundRecord>,
    pub summary: TraceSummary,
}

impl Trace {
    /// Rounds played before every user had locked.
    pub fn learning_rounds(&self) -> &[RoundRecord] {
        match self.summary.convergence_iter {
            Some(c) => &self.rounds[..c - 1],
            None => &self.rounds,
        }
    }

    pub fn final_profile(&self) -> Option<StrategyProfile> {
        self.rounds.last().map(RoundRecord::profile)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settled {
    pub powers: Vec<f64>,
    /// Power updates applied before the change dropped below tolerance.
    pub iterations: usize,
    pub residual: f64,
}

/// Simultaneous best-power iteration on a fixed channel assignment, with
/// clamping into `[p_min, p_max]` and no snapping.
pub fn settle_powers(
    scenario: &Scenario,
    assignment: &[usize],
    initial: &[f64],
    tolerance: f64,
    max_rounds: usize,
) -> Result<Settled> {
    let m = scenario.num_users();
    if assignment.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: assignment.len(),
        });
    }
    if initial.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            actual: initial.len(),
        });
    }
    if let Some(&c) = assignment.iter().find(|&&c| c >= scenario.num_channels()) {
        return Err(Error::Domain(format!("channel index {c} out of range")));
    }
    let space = PowerSpace::continuous(scenario);
    let weights: Vec<CostWeights> = (0..m).map(|i| CostWeights::of_user(scenario, i)).collect();
    let mut profile = StrategyProfile::new(
        assignment
            .iter()
            .zip(initial)
            .map(|(&c, &p)| Action::new(c, p))
            .collect(),
    );
    let mut residual = f64::INFINITY;
    for round in 0..max_rounds {
        let next: Vec<f64> = (0..m)
            .map(|i| {
                let interference = radio::interference(scenario, &profile, i, assignment[i]);
                game::solve_power(&weights[i], interference, &space).power
            })
            .collect();
        residual = profile
            .actions
            .iter()
            .zip(&next)
            .map(|(a, p)| (a.power - p).abs())
            .fold(0.0, f64::max);
        if residual < tolerance {
            return Ok(Settled {
                powers: next,
                iterations: round,
                residual,
            });
        }
        for (a, p) in profile.actions.iter_mut().zip(next) {
            a.power = p;
        }
    }
    Err(Error::NotSettled {
        rounds: max_rounds,
        residual,
        powers: profile.actions.iter().map(|a| a.power).collect(),
    })
}

fn record_profile(
    scenario: &Scenario,
    iter: usize,
    profile: &StrategyProfile,
    omega: impl Fn(usize) -> (f64, bool),
) -> (RoundRecord, Vec<InterferenceObservation>) {
    let observations: Vec<InterferenceObservation> = (0..scenario.num_users())
        .map(|i| radio::observe(scenario, profile, i))
        .collect();
    let users = profile
        .actions
        .iter()
        .zip(&observations)
        .enumerate()
        .map(|(i, (a, obs))| {
            let interference = obs.per_channel[a.channel];
            let sinr = radio::sinr_at(scenario.gain(i), a.power, interference);
            let (max_omega, locked) = omega(i);
            UserRound {
                channel: a.channel,
                channel_id: scenario.channels()[a.channel],
                power: a.power,
                sinr,
                sinr_db: radio::to_db(sinr).expect("sinr is positive"),
                utility: game::utility(scenario, i, a.power, interference),
                max_omega,
                locked,
                observation: obs.per_channel.clone(),
            }
        })
        .collect();
    (RoundRecord { iter, users }, observations)
}

fn count_violations(scenario: &Scenario, record: &RoundRecord, counts: &mut ViolationCounts) {
    for (i, u) in record.users.iter().enumerate() {
        let f = game::channel_feasibility(scenario, i, u.observation[u.channel]);
        counts.nonnegative_power += usize::from(!f.nonnegative_power_ok);
        counts.monotone_response += usize::from(!f.monotone_response_ok);
    }
}

fn summarize(
    scenario: &Scenario,
    rounds: &[RoundRecord],
    converged: bool,
    convergence_iter: Option<usize>,
    feasibility_violations: ViolationCounts,
    settle: Option<SettleInfo>,
    baseline_definition: Option<String>,
) -> Result<TraceSummary> {
    let last = rounds.last().ok_or(Error::EmptyTrace)?;
    let profile = last.profile();
    Ok(TraceSummary {
        converged,
        convergence_iter,
        final_assignment: last.users.iter().map(|u| u.channel_id).collect(),
        final_powers: last.users.iter().map(|u| u.power).collect(),
        distinct_channels: profile.all_distinct(),
        avg_sinr_db: average_sinr_rounds(rounds, 1.0)?,
        avg_sinr_db_last_quartile: average_sinr_rounds(rounds, 0.25)?,
        round_avg_sinr_db: rounds
            .iter()
            .map(|r| radio::to_db(r.mean_sinr()))
            .collect::<Result<_>>()?,
        feasibility_violations,
        settle,
        positions: scenario.users().iter().map(|u| u.position).collect(),
        baseline_definition,
    })
}

/// Runs the regret-learning game.
pub fn run_disg(scenario: &Scenario, config: &DisgConfig) -> Result<Trace> {
    if config.max_iterations == 0 {
        return Err(Error::Config("max_iterations must be at least 1".into()));
    }
    let m = scenario.num_users();
    let n = scenario.num_channels();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut states = (0..m)
        .map(|i| RegretState::new(i, n, config.lock_threshold))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<CostWeights> = (0..m).map(|i| CostWeights::of_user(scenario, i)).collect();
    let space = PowerSpace::of(scenario);
    let mut previous: Vec<InterferenceObservation> = (0..m)
        .map(|i| InterferenceObservation::noise_only(scenario, i))
        .collect();

    let mut rounds: Vec<RoundRecord> = Vec::with_capacity(config.max_iterations);
    let mut violations = ViolationCounts::default();
    let mut convergence_iter = None;
    let mut settle_info = None;

    for iter in 1..=config.max_iterations {
        let channels: Vec<usize> = states
            .iter_mut()
            .map(|s| s.select_channel(&mut rng))
            .collect();
        let mut actions = Vec::with_capacity(m);
        for (i, &c) in channels.iter().enumerate() {
            let choice = game::solve_power(&weights[i], previous[i].per_channel[c], &space);
            violations.negative_raw_power += usize::from(choice.negative_raw);
            actions.push(Action::new(c, choice.power));
        }
        let mut profile = StrategyProfile::new(actions);

        if states.iter().all(RegretState::is_locked) {
            let initial: Vec<f64> = profile.actions.iter().map(|a| a.power).collect();
            let info = match settle_powers(
                scenario,
                &channels,
                &initial,
                SETTLE_TOLERANCE_MW,
                SETTLE_MAX_ROUNDS,
            ) {
                Ok(s) => {
                    for (a, p) in profile.actions.iter_mut().zip(&s.powers) {
                        a.power = *p;
                    }
                    SettleInfo {
                        iterations: s.iterations,
                        residual_mw: s.residual,
                        converged: true,
                    }
                }
                Err(Error::NotSettled {
                    rounds,
                    residual,
                    powers,
                }) => {
                    for (a, p) in profile.actions.iter_mut().zip(&powers) {
                        a.power = *p;
                    }
                    SettleInfo {
                        iterations: rounds,
                        residual_mw: residual,
                        converged: false,
                    }
                }
                Err(e) => return Err(e),
            };
            let (record, _) = record_profile(scenario, iter, &profile, |_| (1.0, true));
            count_violations(scenario, &record, &mut violations);
            // The settled profile is a fixed point; hold it to the horizon.
            rounds.push(record.clone());
            for t in iter + 1..=config.max_iterations {
                rounds.push(RoundRecord {
                    iter: t,
                    ..record.clone()
                });
            }
            convergence_iter = Some(iter);
            settle_info = Some(info);
            break;
        }

        let (mut record, observations) = record_profile(scenario, iter, &profile, |_| (0.0, false));
        for (i, obs) in observations.iter().enumerate() {
            let actual = record.users[i].utility;
            let mut counterfactual = game::best_costs_per_channel(scenario, obs, i);
            counterfactual[channels[i]] = actual;
            states[i].update_round(actual, &counterfactual)?;
            record.users[i].max_omega = states[i].max_omega();
            record.users[i].locked = states[i].is_locked();
        }
        count_violations(scenario, &record, &mut violations);
        rounds.push(record);
        previous = observations;
    }

    let converged = convergence_iter.is_some();
    let summary = summarize(
        scenario,
        &rounds,
        converged,
        convergence_iter,
        violations,
        settle_info,
        None,
    )?;
    Ok(Trace {
        scenario_fingerprint: scenario.fingerprint(),
        seed: config.seed,
        mode: RunMode::Disg,
        lock_threshold: Some(config.lock_threshold),
        max_iterations: config.max_iterations,
        rounds,
        summary,
    })
}

/// Fixed random channels at full power, no learning.
pub fn run_baseline(scenario: &Scenario, seed: u64, iterations: usize) -> Result<Trace> {
    if iterations == 0 {
        return Err(Error::Config("iterations must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = scenario.num_channels();
    let profile = StrategyProfile::new(
        (0..scenario.num_users())
            .map(|_| Action::new(rng.gen_range(0..n), scenario.p_max()))
            .collect(),
    );
    let (record, _) = record_profile(scenario, 1, &profile, |_| (1.0, false));
    let mut violations = ViolationCounts::default();
    let rounds: Vec<RoundRecord> = (1..=iterations)
        .map(|iter| {
            count_violations(scenario, &record, &mut violations);
            RoundRecord {
                iter,
                ..record.clone()
            }
        })
        .collect();
    let summary = summarize(
        scenario,
        &rounds,
        false,
        None,
        violations,
        None,
        Some(BASELINE_DEFINITION.to_string()),
    )?;
    Ok(Trace {
        scenario_fingerprint: scenario.fingerprint(),
        seed,
        mode: RunMode::Baseline,
        lock_threshold: None,
        max_iterations: iterations,
        rounds,
        summary,
    })
}

/// One seed of a sweep: a learning run and a baseline run side by side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRun {
    pub seed: u64,
    pub converged: bool,
    pub convergence_iter: Option<usize>,
    pub distinct_channels: bool,
    pub final_assignment: Vec<u32>,
    /// Last-quartile average SINR of the learning run, dB.
    pub disg_avg_sinr_db: f64,
    /// Last-quartile average SINR of the baseline run, dB.
    pub baseline_avg_sinr_db: f64,
    pub gap_db: f64,
    pub baseline_collision: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub scenario_fingerprint: String,
    pub seeds: usize,
    pub max_iterations: usize,
    pub lock_threshold: f64,
    pub baseline_definition: String,
    pub convergence_rate: f64,
    /// Fraction of seeds that converged with every user on its own channel.
    pub distinct_rate: f64,
    pub mean_gap_db: f64,
    pub min_gap_db: f64,
    pub runs: Vec<SweepRun>,
}

pub fn sweep_seed(scenario: &Scenario, config: &DisgConfig) -> Result<SweepRun> {
    let disg = run_disg(scenario, config)?;
    let base = run_baseline(scenario, config.seed, config.max_iterations)?;
    let collided = !base.summary.distinct_channels;
    Ok(SweepRun {
        seed: config.seed,
        converged: disg.summary.converged,
        convergence_iter: disg.summary.convergence_iter,
        distinct_channels: disg.summary.distinct_channels,
        final_assignment: disg.summary.final_assignment,
        disg_avg_sinr_db: disg.summary.avg_sinr_db_last_quartile,
        baseline_avg_sinr_db: base.summary.avg_sinr_db_last_quartile,
        gap_db: disg.summary.avg_sinr_db_last_quartile - base.summary.avg_sinr_db_last_quartile,
        baseline_collision: collided,
    })
}

/// Runs seeds `0..seeds` in parallel; results are ordered by seed.
pub fn sweep(
    scenario: &Scenario,
    seeds: usize,
    max_iterations: usize,
    lock_threshold: f64,
) -> Result<SweepReport> {
    if seeds == 0 {
        return Err(Error::Config("seed count must be at least 1".into()));
    }
    let runs = (0..seeds as u64)
        .into_par_iter()
        .map(|seed| {
            sweep_seed(
                scenario,
                &DisgConfig {
                    seed,
                    max_iterations,
                    lock_threshold,
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let k = seeds as f64;
    let rate = |f: fn(&SweepRun) -> bool| runs.iter().filter(|r| f(r)).count() as f64 / k;
    Ok(SweepReport {
        scenario_fingerprint: scenario.fingerprint(),
        seeds,
        max_iterations,
        lock_threshold,
        baseline_definition: BASELINE_DEFINITION.to_string(),
        convergence_rate: rate(|r| r.converged),
        distinct_rate: rate(|r| r.converged && r.distinct_channels),
        mean_gap_db: runs.iter().map(|r| r.gap_db).sum::<f64>() / k,
        min_gap_db: runs.iter().map(|r| r.gap_db).fold(f64::INFINITY, f64::min),
        runs,
    })
}

fn average_sinr_rounds(rounds: &[RoundRecord], window: f64) -> Result<f64> {
    if rounds.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::Domain(format!("window {window} outside (0, 1]")));
    }
    let count = ((window * rounds.len() as f64).ceil() as usize).clamp(1, rounds.len());
    let tail = &rounds[rounds.len() - count..];
    let mean = tail.iter().map(RoundRecord::mean_sinr).sum::<f64>() / count as f64;
    radio::to_db(mean)
}

/// Mean over the last `ceil(window * rounds)` rounds of the per-round mean
/// linear SINR, in dB. Averaging happens in the linear domain.
pub fn average_sinr(trace: &Trace, window: f64) -> Result<f64> {
    average_sinr_rounds(&trace.rounds, window)
}

/// Largest relative discrepancy between recorded SINR/utility and values
/// recomputed from each round's recorded profile.
pub fn audit_trace(scenario: &Scenario, trace: &Trace) -> f64 {
    let mut worst: f64 = 0.0;
    for record in &trace.rounds {
        let profile = record.profile();
        for (i, u) in record.users.iter().enumerate() {
            let sinr = radio::sinr(scenario, &profile, i);
            let interference = radio::interference(scenario, &profile, i, u.channel);
            let utility = game::utility(scenario, i, u.power, interference);
            worst = worst
                .max((sinr - u.sinr).abs() / sinr)
                .max((utility - u.utility).abs() / utility);
        }
    }
    worst
}
