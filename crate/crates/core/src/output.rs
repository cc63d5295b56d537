//! Trace CSV and summary JSON, written atomically, plus a trace CSV reader.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{RunMode, Trace, TraceSummary};
use crate::error::{Error, Result};
use crate::radio::{Action, StrategyProfile};
use crate::scenario::Scenario;

/// One CSV row: one user in one round. `channel` is the channel id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub user: usize,
    pub channel: u32,
    pub power_mw: f64,
    pub sinr_linear: f64,
    pub sinr_db: f64,
    pub utility: f64,
    pub max_omega: f64,
    pub locked: bool,
}

pub const TRACE_HEADER: &str =
    "iter,user,channel,power_mw,sinr_linear,sinr_db,utility,max_omega,locked";

#[derive(Debug, Serialize)]
pub struct SummaryFile<'a> {
    pub scenario_fingerprint: &'a str,
    pub seed: u64,
    pub mode: RunMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lock_threshold: Option<f64>,
    pub max_iterations: usize,
    pub rounds: usize,
    #[serde(flatten)]
    pub summary: &'a TraceSummary,
}

pub fn trace_rows(trace: &Trace) -> impl Iterator<Item = TraceRow> + '_ {
    trace.rounds.iter().flat_map(|r| {
        r.users.iter().enumerate().map(move |(user, u)| TraceRow {
            iter: r.iter,
            user,
            channel: u.channel_id,
            power_mw: u.power,
            sinr_linear: u.sinr,
            sinr_db: u.sinr_db,
            utility: u.utility,
            max_omega: u.max_omega,
            locked: u.locked,
        })
    })
}

pub fn trace_csv(trace: &Trace) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in trace_rows(trace) {
        w.serialize(row)
            .map_err(|e| Error::Config(format!("cannot encode trace row: {e}")))?;
    }
    w.into_inner()
        .map_err(|e| Error::Config(format!("cannot encode trace: {e}")))
}

pub fn summary_json(trace: &Trace) -> Result<String> {
    let file = SummaryFile {
        scenario_fingerprint: &trace.scenario_fingerprint,
        seed: trace.seed,
        mode: trace.mode,
        lock_threshold: trace.lock_threshold,
        max_iterations: trace.max_iterations,
        rounds: trace.rounds.len(),
        summary: &trace.summary,
    };
    to_json(&file)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("cannot encode JSON: {e}")))?;
    text.push('\n');
    Ok(text)
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let wrap = |source| Error::Write {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(wrap)?;
    tmp.write_all(bytes).map_err(wrap)?;
    tmp.as_file().sync_all().map_err(wrap)?;
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}

/// Rounds read back from a trace CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTrace {
    /// Rows grouped by round, users in order.
    pub rounds: Vec<Vec<TraceRow>>,
}

impl CsvTrace {
    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::MalformedTrace(e.to_string()))?;
        if header.iter().collect::<Vec<_>>().join(",") != TRACE_HEADER {
            return Err(Error::MalformedTrace(format!(
                "expected header {TRACE_HEADER}"
            )));
        }
        let mut rounds: Vec<Vec<TraceRow>> = Vec::new();
        for (line, row) in reader.deserialize::<TraceRow>().enumerate() {
            let row = row.map_err(|e| Error::MalformedTrace(format!("row {}: {e}", line + 1)))?;
            match rounds.last_mut() {
                Some(r) if r[0].iter == row.iter => {
                    if row.user != r.len() {
                        return Err(Error::MalformedTrace(format!(
                            "round {}: users out of order",
                            row.iter
                        )));
                    }
                    r.push(row);
                }
                last => {
                    if let Some(prev) = last {
                        if row.iter <= prev[0].iter {
                            return Err(Error::MalformedTrace(format!(
                                "round {} out of order",
                                row.iter
                            )));
                        }
                    }
                    if row.user != 0 {
                        return Err(Error::MalformedTrace(format!(
                            "round {} does not start at user 0",
                            row.iter
                        )));
                    }
                    rounds.push(vec![row]);
                }
            }
        }
        if rounds.is_empty() {
            return Err(Error::EmptyTrace);
        }
        let users = rounds[0].len();
        if let Some(r) = rounds.iter().find(|r| r.len() != users) {
            return Err(Error::MalformedTrace(format!(
                "round {} has {} users, expected {users}",
                r[0].iter,
                r.len()
            )));
        }
        Ok(Self { rounds })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Profile of round `index` (0-based position in the file), with channel
    /// ids mapped back to indices of `scenario`.
    pub fn profile(&self, scenario: &Scenario, index: usize) -> Result<StrategyProfile> {
        let rows = &self.rounds[index];
        if rows.len() != scenario.num_users() {
            return Err(Error::LengthMismatch {
                expected: scenario.num_users(),
                actual: rows.len(),
            });
        }
        let actions = rows
            .iter()
            .map(|r| {
                scenario
                    .channel_index(r.channel)
                    .map(|c| Action::new(c, r.power_mw))
                    .ok_or_else(|| {
                        Error::MalformedTrace(format!(
                            "round {}: channel {} not in scenario",
                            r.iter, r.channel
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let profile = StrategyProfile::new(actions);
        profile.validate(scenario)?;
        Ok(profile)
    }

    pub fn final_profile(&self, scenario: &Scenario) -> Result<StrategyProfile> {
        self.profile(scenario, self.rounds.len() - 1)
    }

    /// Number of rounds before the first round in which every user is
    /// locked; all rounds if that never happens.
    pub fn learning_len(&self) -> usize {
        self.rounds
            .iter()
            .position(|r| r.iter().all(|u| u.locked))
            .unwrap_or(self.rounds.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_baseline, run_disg, DisgConfig};

    #[test]
    fn csv_round_trips_exactly() {
        let s = Scenario::table_default();
        let trace = run_disg(
            &s,
            &DisgConfig {
                max_iterations: 60,
                ..DisgConfig::new(3)
            },
        )
        .unwrap();
        let bytes = trace_csv(&trace).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert!(text.starts_with(TRACE_HEADER));
        let back = CsvTrace::parse(&text).unwrap();
        assert_eq!(back.rounds.len(), trace.rounds.len());
        let rows: Vec<TraceRow> = trace_rows(&trace).collect();
        assert_eq!(back.rounds.concat(), rows);
        assert_eq!(
            back.final_profile(&s).unwrap(),
            trace.final_profile().unwrap()
        );
        assert_eq!(back.learning_len(), trace.learning_rounds().len());
    }

    #[test]
    fn baseline_has_no_learning_end() {
        let s = Scenario::table_default();
        let trace = run_baseline(&s, 0, 10).unwrap();
        let back =
            CsvTrace::parse(&String::from_utf8(trace_csv(&trace).unwrap()).unwrap()).unwrap();
        assert_eq!(back.learning_len(), 10);
    }

    #[test]
    fn malformed_traces_rejected() {
        assert!(matches!(
            CsvTrace::parse("a,b\n1,2\n"),
            Err(Error::MalformedTrace(_))
        ));
        assert!(matches!(
            CsvTrace::parse(&format!("{TRACE_HEADER}\n")),
            Err(Error::EmptyTrace)
        ));
        let bad = format!("{TRACE_HEADER}\n1,0,11,30.0,1.0,0.0,1.0,1.0,maybe\n");
        assert!(matches!(
            CsvTrace::parse(&bad),
            Err(Error::MalformedTrace(_))
        ));
        let gap = format!("{TRACE_HEADER}\n1,1,11,30.0,1.0,0.0,1.0,1.0,true\n");
        assert!(matches!(
            CsvTrace::parse(&gap),
            Err(Error::MalformedTrace(_))
        ));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.json");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(write_atomic(dir.path().join("missing/out.json"), b"x").is_err());
    }
}
