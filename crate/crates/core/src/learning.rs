//! Regret-matching channel selection for a single user.
//!
//! Each round the user records, for every channel `j`, how much lower its
//! cost would have been had it played `j` at that channel's best power
//! against the same round's interference. Channel probabilities are
//! proportional to the positive time-averaged regrets. A user first tries
//! every channel once in random order, then samples from its mixed strategy,
//! and commits permanently to its most likely channel once that probability
//! reaches the lock threshold. The commitment only happens on the channel the
//! user played in the round just accumulated, and only if no other channel
//! would have been cheaper in that round.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_LOCK_THRESHOLD: f64 = 0.9;

/// Probabilities proportional to `regrets`; uniform when they are all zero.
pub fn mixed_strategy(regrets: &[f64]) -> Vec<f64> {
    let n = regrets.len();
    let total: f64 = regrets.iter().sum();
    if total > 0.0 {
        regrets.iter().map(|r| r / total).collect()
    } else {
        vec![1.0 / n as f64; n]
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = j;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretState {
    user: usize,
    /// Rounds accumulated so far.
    t: u64,
    cumulative_diff: Vec<f64>,
    visited: Vec<bool>,
    omega: Vec<f64>,
    locked: Option<usize>,
    lock_threshold: f64,
    /// Channel returned by the previous `select_channel` call.
    last_played: Option<usize>,
    /// No channel would have been cheaper in the last accumulated round.
    last_round_optimal: bool,
}

impl RegretState {
    pub fn new(user: usize, num_channels: usize, lock_threshold: f64) -> Result<Self> {
        if num_channels == 0 {
            return Err(Error::State("no channels".into()));
        }
        let lower = if num_channels == 1 {
            0.0
        } else {
            1.0 / num_channels as f64
        };
        if !(lock_threshold > lower && lock_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "lock threshold {lock_threshold} outside ({lower}, 1] for {num_channels} channels"
            )));
        }
        let mut state = Self {
            user,
            t: 0,
            cumulative_diff: vec![0.0; num_channels],
            visited: vec![false; num_channels],
            omega: vec![1.0 / num_channels as f64; num_channels],
            locked: None,
            lock_threshold,
            last_played: None,
            last_round_optimal: true,
        };
        // With nothing to choose between there is nothing to learn.
        if num_channels == 1 {
            state.visited[0] = true;
            state.locked = Some(0);
        }
        Ok(state)
    }

    pub fn user(&self) -> usize {
        self.user
    }

    pub fn iteration(&self) -> u64 {
        self.t
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn max_omega(&self) -> f64 {
        self.omega.iter().copied().fold(0.0, f64::max)
    }

    pub fn locked_channel(&self) -> Option<usize> {
        self.locked
    }

    pub fn is_locked(&self) -> bool {
        self.locked.is_some()
    }

    pub fn lock_threshold(&self) -> f64 {
        self.lock_threshold
    }

    pub fn all_visited(&self) -> bool {
        self.visited.iter().all(|&v| v)
    }

    pub fn cumulative_diff(&self) -> &[f64] {
        &self.cumulative_diff
    }

    /// Time-averaged positive regret for not having played channel `j`.
    pub fn regret(&self, j: usize) -> Result<f64> {
        if self.t == 0 {
            return Err(Error::State(
                "regret undefined before the first round".into(),
            ));
        }
        let diff = self
            .cumulative_diff
            .get(j)
            .ok_or_else(|| Error::State(format!("channel index {j} out of range")))?;
        Ok((diff / self.t as f64).max(0.0))
    }

    pub fn regrets(&self) -> Vec<f64> {
        if self.t == 0 {
            return vec![0.0; self.cumulative_diff.len()];
        }
        let t = self.t as f64;
        self.cumulative_diff
            .iter()
            .map(|d| (d / t).max(0.0))
            .collect()
    }

    /// Accumulates one round. `counterfactual[j]` is the cost the user would
    /// have had on channel `j`; the entry for the channel actually played
    /// must equal `actual_utility`.
    pub fn update_round(&mut self, actual_utility: f64, counterfactual: &[f64]) -> Result<()> {
        if counterfactual.len() != self.cumulative_diff.len() {
            return Err(Error::LengthMismatch {
                expected: self.cumulative_diff.len(),
                actual: counterfactual.len(),
            });
        }
        self.t += 1;
        self.last_round_optimal = counterfactual.iter().all(|&alt| actual_utility <= alt);
        for (acc, &alt) in self.cumulative_diff.iter_mut().zip(counterfactual) {
            *acc += actual_utility - alt;
        }
        self.omega = match self.locked {
            Some(c) => point_mass(self.omega.len(), c),
            None => mixed_strategy(&self.regrets()),
        };
        Ok(())
    }

    /// Channel to play next round.
    pub fn select_channel<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        if let Some(c) = self.locked {
            return c;
        }
        let unvisited: Vec<usize> = (0..self.visited.len())
            .filter(|&j| !self.visited[j])
            .collect();
        let choice = if !unvisited.is_empty() {
            let j = unvisited[rng.gen_range(0..unvisited.len())];
            self.visited[j] = true;
            j
        } else {
            let best = argmax(&self.omega);
            // A lock must be confirmed by the round just played: on that
            // channel, with nothing cheaper available in hindsight.
            let confirmed = self.last_round_optimal && self.last_played.is_none_or(|c| c == best);
            if self.max_omega() >= self.lock_threshold && confirmed {
                self.locked = Some(best);
                self.omega = point_mass(self.omega.len(), best);
                best
            } else {
                WeightedIndex::new(&self.omega)
                    .expect("omega is a valid distribution")
                    .sample(rng)
            }
        };
        self.last_played = Some(choice);
        choice
    }

    /// Replaces the mixed strategy directly (tests and what-if analysis).
    pub fn set_omega(&mut self, omega: Vec<f64>) -> Result<()> {
        if omega.len() != self.omega.len() {
            return Err(Error::LengthMismatch {
                expected: self.omega.len(),
                actual: omega.len(),
            });
        }
        let total: f64 = omega.iter().sum();
        if omega.iter().any(|&w| w < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::State("omega must be a probability vector".into()));
        }
        self.omega = omega;
        Ok(())
    }

    pub fn mark_all_visited(&mut self) {
        self.visited.iter_mut().for_each(|v| *v = true);
    }
}

fn point_mass(n: usize, c: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[c] = 1.0;
    v
}
