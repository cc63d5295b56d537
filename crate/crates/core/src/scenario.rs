//! Scenario description: users (one per body sensor network), the shared
//! channel set, transmit-power bounds and radio constants.
//!
//! A [`Scenario`] is immutable once built and is only obtainable through
//! validation, so every downstream module may assume its invariants.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result, Violation};
use crate::radio;

/// Users closer than this are rejected: the cross-user path loss diverges.
pub const MIN_SEPARATION_M: f64 = 0.01;

pub const DEFAULT_S: f64 = 1.0;
pub const DEFAULT_D_M: f64 = 0.5;
pub const DEFAULT_ETA_MW: f64 = 2.6e-7;
pub const DEFAULT_GAMMA0: f64 = 1e9;
pub const DEFAULT_TAU: f64 = 1.0;
pub const DEFAULT_XI: f64 = 1e-4;

/// Bundled five-network scenario (5 channels, 8 discrete power levels).
pub const DEFAULT_SCENARIO_JSON: &str = include_str!("../scenarios/default.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SnapMode {
    Continuous,
    #[default]
    NearestLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Per-network radio and game parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserConfig {
    pub id: usize,
    pub position: Point,
    /// Attenuation coefficient of the intra-network link.
    pub s: f64,
    /// Largest sensor-to-control-node distance, meters.
    pub d: f64,
    /// Background noise power, mW.
    pub eta: f64,
    /// Target SINR, linear.
    pub gamma0: f64,
    /// Weight on the squared SINR shortfall.
    pub tau: f64,
    /// Weight on transmit power.
    pub xi: f64,
}

impl UserConfig {
    /// A user at `(x, y)` with every other parameter at its default.
    pub fn at(id: usize, x: f64, y: f64) -> Self {
        Self {
            id,
            position: Point::new(x, y),
            s: DEFAULT_S,
            d: DEFAULT_D_M,
            eta: DEFAULT_ETA_MW,
            gamma0: DEFAULT_GAMMA0,
            tau: DEFAULT_TAU,
            xi: DEFAULT_XI,
        }
    }

    /// Smallest `tau/xi` for which the closed-form best power is attainable
    /// inside the power range.
    pub fn min_weight_ratio(&self, p_max: f64) -> f64 {
        2.0 * p_max / (self.gamma0 * self.gamma0)
    }

    pub fn weight_ratio_ok(&self, p_max: f64) -> bool {
        self.tau / self.xi >= self.min_weight_ratio(p_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    users: Vec<UserConfig>,
    channels: Vec<u32>,
    p_min: f64,
    p_max: f64,
    power_levels: Option<Vec<f64>>,
    delta: f64,
    snap_mode: SnapMode,
    #[serde(skip)]
    gains: Vec<f64>,
    /// `coupling[i * m + k] = S_k / v_ki^delta`, zero on the diagonal.
    #[serde(skip)]
    coupling: Vec<f64>,
}

impl Scenario {
    /// Builds and validates a scenario. Every violated invariant is reported.
    pub fn new(
        users: Vec<UserConfig>,
        channels: Vec<u32>,
        p_min: f64,
        p_max: f64,
        power_levels: Option<Vec<f64>>,
        delta: f64,
        snap_mode: SnapMode,
    ) -> Result<Self> {
        let violations = validate(
            &users,
            &channels,
            p_min,
            p_max,
            power_levels.as_deref(),
            delta,
            snap_mode,
        );
        if !violations.is_empty() {
            return Err(Error::Validation(violations));
        }
        let m = users.len();
        let gains = users
            .iter()
            .map(|u| radio::link_gain(u.s, u.d, delta))
            .collect::<Result<Vec<_>>>()?;
        let mut coupling = vec![0.0; m * m];
        for i in 0..m {
            for k in 0..m {
                if i != k {
                    let v = users[i].position.distance(&users[k].position);
                    coupling[i * m + k] = users[k].s / v.powf(delta);
                }
            }
        }
        Ok(Self {
            users,
            channels,
            p_min,
            p_max,
            power_levels,
            delta,
            snap_mode,
            gains,
            coupling,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.resolve()
    }

    /// The bundled default scenario.
    pub fn table_default() -> Self {
        Self::from_json_str(DEFAULT_SCENARIO_JSON).expect("bundled default scenario is valid")
    }

    pub fn users(&self) -> &[UserConfig] {
        &self.users
    }

    pub fn user(&self, i: usize) -> &UserConfig {
        &self.users[i]
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channels(&self) -> &[u32] {
        &self.channels
    }

    pub fn channel_index(&self, id: u32) -> Option<usize> {
        self.channels.iter().position(|&c| c == id)
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn power_levels(&self) -> Option<&[f64]> {
        self.power_levels.as_deref()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn snap_mode(&self) -> SnapMode {
        self.snap_mode
    }

    /// Same scenario with a different snap mode.
    pub fn with_snap_mode(&self, snap_mode: SnapMode) -> Result<Self> {
        Self::new(
            self.users.clone(),
            self.channels.clone(),
            self.p_min,
            self.p_max,
            self.power_levels.clone(),
            self.delta,
            snap_mode,
        )
    }

    /// Intra-network link gain of user `i`.
    pub fn gain(&self, i: usize) -> f64 {
        self.gains[i]
    }

    /// Path-loss-weighted coupling `S_k / v^delta` of interferer `k` at user `i`.
    pub fn coupling(&self, i: usize, k: usize) -> f64 {
        self.coupling[i * self.users.len() + k]
    }

    /// Hex SHA-256 of the canonical JSON form of the scenario.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Euclidean distance between the control nodes of users `i` and `k`.
pub fn pairwise_distance(scenario: &Scenario, i: usize, k: usize) -> Result<f64> {
    let m = scenario.num_users();
    if i >= m || k >= m {
        return Err(Error::Domain(format!(
            "user index out of range ({i}, {k}) for {m} users"
        )));
    }
    if i == k {
        return Err(Error::Domain(format!(
            "distance requested between user {i} and itself"
        )));
    }
    let v = scenario.users[i]
        .position
        .distance(&scenario.users[k].position);
    if v < MIN_SEPARATION_M {
        return Err(Error::Domain(format!("users {i} and {k} are {v} m apart")));
    }
    Ok(v)
}

fn validate(
    users: &[UserConfig],
    channels: &[u32],
    p_min: f64,
    p_max: f64,
    levels: Option<&[f64]>,
    delta: f64,
    snap_mode: SnapMode,
) -> Vec<Violation> {
    let mut out = Vec::new();
    if users.is_empty() {
        out.push(Violation::global("at least one user is required"));
    }
    if channels.is_empty() {
        out.push(Violation::global("at least one channel is required"));
    }
    for (n, c) in channels.iter().enumerate() {
        if channels[..n].contains(c) {
            out.push(Violation::global(format!("duplicate channel id {c}")));
        }
    }
    if !(p_min > 0.0 && p_min.is_finite()) {
        out.push(Violation::global(format!(
            "p_min must be positive (got {p_min})"
        )));
    }
    if !(p_max >= p_min && p_max.is_finite()) {
        out.push(Violation::global(format!(
            "p_max must be >= p_min (got {p_max} < {p_min})"
        )));
    }
    match levels {
        Some(levels) => {
            if levels.is_empty() {
                out.push(Violation::global(
                    "power_levels must not be empty when given",
                ));
            }
            if levels.windows(2).any(|w| w[1] <= w[0]) {
                out.push(Violation::global(
                    "power_levels must be strictly increasing",
                ));
            }
            for &l in levels {
                if !(l >= p_min && l <= p_max) {
                    out.push(Violation::global(format!(
                        "power level {l} outside [{p_min}, {p_max}]"
                    )));
                }
            }
        }
        None if snap_mode == SnapMode::NearestLevel => {
            out.push(Violation::global(
                "snap_mode nearest-level requires power_levels",
            ));
        }
        None => {}
    }
    if !(delta > 0.0 && delta.is_finite()) {
        out.push(Violation::global(format!(
            "delta must be positive (got {delta})"
        )));
    }

    for (n, u) in users.iter().enumerate() {
        if users[..n].iter().any(|o| o.id == u.id) {
            out.push(Violation::user(u.id, "duplicate user id"));
        }
        let positive = [
            ("s", u.s),
            ("d", u.d),
            ("eta", u.eta),
            ("gamma0", u.gamma0),
            ("xi", u.xi),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                out.push(Violation::user(
                    u.id,
                    format!("{name} must be positive (got {value})"),
                ));
            }
        }
        if !(u.tau >= 0.0 && u.tau.is_finite()) {
            out.push(Violation::user(
                u.id,
                format!("tau must be non-negative (got {})", u.tau),
            ));
        }
        if u.xi > 0.0 && u.gamma0 > 0.0 && !u.weight_ratio_ok(p_max) {
            out.push(Violation::user(
                u.id,
                format!(
                    "tau/xi = {:e} violates the power-feasibility condition tau/xi >= 2*p_max/gamma0^2 = {:e}",
                    u.tau / u.xi,
                    u.min_weight_ratio(p_max)
                ),
            ));
        }
        if !(u.position.x.is_finite() && u.position.y.is_finite()) {
            out.push(Violation::user(u.id, "position must be finite"));
        }
        for o in &users[..n] {
            let v = u.position.distance(&o.position);
            if v < MIN_SEPARATION_M {
                out.push(Violation::user(
                    u.id,
                    format!(
                        "within {v} m of user {} (minimum separation {MIN_SEPARATION_M} m)",
                        o.id
                    ),
                ));
            }
        }
    }
    out
}

/// On-disk scenario document.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub users: Vec<UserEntry>,
    pub channels: Vec<u32>,
    pub p_min_mw: f64,
    pub p_max_mw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_levels_mw: Option<Vec<f64>>,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snap_mode: Option<SnapMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<Placement>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct UserEntry {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_mw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
}

/// Uniform random placement of users that do not list a position.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub field: [f64; 2],
    pub seed: u64,
}

impl ScenarioFile {
    pub fn resolve(self) -> Result<Scenario> {
        let mut rng = self
            .placement
            .as_ref()
            .map(|p| ChaCha8Rng::seed_from_u64(p.seed));
        let mut missing = Vec::new();
        let mut users = Vec::with_capacity(self.users.len());
        for entry in &self.users {
            // One draw per user keeps positions stable when others are pinned.
            let drawn = match (&mut rng, &self.placement) {
                (Some(rng), Some(p)) => {
                    Some([rng.gen::<f64>() * p.field[0], rng.gen::<f64>() * p.field[1]])
                }
                _ => None,
            };
            let Some([x, y]) = entry.position.or(drawn) else {
                missing.push(Violation::user(
                    entry.id,
                    "no position and no placement block",
                ));
                continue;
            };
            users.push(UserConfig {
                id: entry.id,
                position: Point::new(x, y),
                s: entry.s.unwrap_or(DEFAULT_S),
                d: entry.d.unwrap_or(DEFAULT_D_M),
                eta: entry.eta_mw.unwrap_or(DEFAULT_ETA_MW),
                gamma0: entry.gamma0.unwrap_or(DEFAULT_GAMMA0),
                tau: entry.tau.unwrap_or(DEFAULT_TAU),
                xi: entry.xi.unwrap_or(DEFAULT_XI),
            });
        }
        if !missing.is_empty() {
            return Err(Error::Validation(missing));
        }
        if let Some(p) = &self.placement {
            if !(p.field[0] > 0.0 && p.field[1] > 0.0) {
                return Err(Error::Validation(vec![Violation::global(
                    "placement field must be positive",
                )]));
            }
        }
        let snap_mode = self.snap_mode.unwrap_or(if self.power_levels_mw.is_some() {
            SnapMode::NearestLevel
        } else {
            SnapMode::Continuous
        });
        Scenario::new(
            users,
            self.channels,
            self.p_min_mw,
            self.p_max_mw,
            self.power_levels_mw,
            self.delta,
            snap_mode,
        )
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Scenario::from_json_str(&text)
}
