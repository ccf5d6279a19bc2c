//! Append-only experiment journal, one JSON object per line.
//!
//! Record schema (`journal_version` 1):
//!
//! ```text
//! {"journal_version":1,
//!  "spec":{"id":7,"purpose":"CLASSIFY","point":{...}|null,"fault_model":"ALWAYS","fo_handler":"m1"|null},
//!  "observation":{"trace":[...],"exit":"NORMAL","reach_counts":[[point,count],...],"events":[...]},
//!  "verdict":{"reason":"OK"},"wall_ms":3,"health":"HEALTHY"}
//! ```
//!
//! Experiments are looked up by their key (purpose, point, fault model,
//! handler), not by id, so a resumed campaign replays whatever is already
//! recorded and only runs what is missing.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::target::Health;
use super::{ExperimentKey, ExperimentSpec};
use crate::model::{Observation, OracleVerdict, PerturbationPoint};

pub const JOURNAL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub journal_version: u32,
    pub spec: ExperimentSpec,
    pub observation: JournalObservation,
    pub verdict: OracleVerdict,
    pub wall_ms: u64,
    /// Outcome of the health check that followed the experiment.
    pub health: Health,
}

impl ExperimentRecord {
    pub fn corrupted_target(&self) -> bool {
        self.health != Health::Healthy
    }
}

/// [`Observation`] with the reach map as a list, since JSON object keys
/// must be strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JournalObservation {
    pub trace: Vec<String>,
    pub exit: crate::model::ExitKind,
    pub reach_counts: Vec<(PerturbationPoint, u64)>,
    pub events: Vec<crate::model::MonitorEvent>,
}

impl From<Observation> for JournalObservation {
    fn from(o: Observation) -> Self {
        Self {
            trace: o.trace,
            exit: o.exit,
            reach_counts: o.reach_counts.into_iter().collect(),
            events: o.events,
        }
    }
}

impl From<JournalObservation> for Observation {
    fn from(o: JournalObservation) -> Self {
        Self {
            trace: o.trace,
            exit: o.exit,
            reach_counts: o.reach_counts.into_iter().collect(),
            events: o.events,
        }
    }
}

#[derive(Debug)]
pub struct Journal {
    path: Option<PathBuf>,
    file: Option<File>,
    records: BTreeMap<ExperimentKey, ExperimentRecord>,
    max_id: Option<u64>,
}

impl Journal {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            file: None,
            records: BTreeMap::new(),
            max_id: None,
        }
    }

    /// Opens (or creates) a journal file, loading every complete record.
    /// A torn final line from an interrupted write is ignored.
    pub fn open(path: &Path) -> Result<Self, JournalError> {
        let io = |source| JournalError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut journal = Self::in_memory();
        if path.exists() {
            let text = std::fs::read(path).map_err(io)?;
            let complete = match text.iter().rposition(|b| *b == b'\n') {
                Some(i) => &text[..=i],
                None => &[][..],
            };
            for (i, line) in BufReader::new(complete).lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: ExperimentRecord =
                    serde_json::from_str(&line).map_err(|e| JournalError::Corrupt {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                if rec.journal_version != JOURNAL_VERSION {
                    return Err(JournalError::Corrupt {
                        path: path.to_path_buf(),
                        line: i + 1,
                        message: format!("unsupported journal_version {}", rec.journal_version),
                    });
                }
                journal.remember(rec);
            }
            if complete.len() != text.len() {
                // drop the torn tail so appends start on a fresh line
                let f = OpenOptions::new().write(true).open(path).map_err(io)?;
                f.set_len(complete.len() as u64).map_err(io)?;
            }
        }
        journal.file = Some(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(io)?,
        );
        journal.path = Some(path.to_path_buf());
        Ok(journal)
    }

    fn remember(&mut self, rec: ExperimentRecord) {
        self.max_id = Some(self.max_id.map_or(rec.spec.id, |m| m.max(rec.spec.id)));
        self.records.insert(rec.spec.key(), rec);
    }

    pub fn get(&self, key: &ExperimentKey) -> Option<&ExperimentRecord> {
        self.records.get(key)
    }

    pub fn next_id(&self) -> u64 {
        self.max_id.map_or(0, |m| m + 1)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &ExperimentRecord> {
        self.records.values()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Persists a record (flushed and synced) before making it visible.
    pub fn append(&mut self, rec: ExperimentRecord) -> Result<(), JournalError> {
        if let (Some(file), Some(path)) = (self.file.as_mut(), self.path.as_ref()) {
            let io = |source| JournalError::Io {
                path: path.clone(),
                source,
            };
            let mut line = serde_json::to_string(&rec).expect("records always serialize");
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(io)?;
            file.sync_data().map_err(io)?;
        }
        self.remember(rec);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::Purpose;
    use crate::model::{ExitKind, FaultModel, MethodRef, VerdictReason};

    fn record(id: u64, location: u32) -> ExperimentRecord {
        let point = PerturbationPoint::new(MethodRef::new("m0").unwrap(), location, "E");
        ExperimentRecord {
            journal_version: JOURNAL_VERSION,
            spec: ExperimentSpec {
                id,
                purpose: Purpose::Classify,
                point: Some(point.clone()),
                fault_model: FaultModel::Always,
                fo_handler: None,
            },
            observation: JournalObservation {
                trace: vec!["a".into()],
                exit: ExitKind::Normal,
                reach_counts: vec![(point, 2)],
                events: vec![],
            },
            verdict: OracleVerdict::fail(VerdictReason::Freeze),
            wall_ms: 1,
            health: Health::Healthy,
        }
    }

    #[test]
    fn reopen_replays_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.jsonl");
        {
            let mut j = Journal::open(&path).unwrap();
            j.append(record(0, 0)).unwrap();
            j.append(record(1, 1)).unwrap();
        }
        let j = Journal::open(&path).unwrap();
        assert_eq!(j.len(), 2);
        assert_eq!(j.next_id(), 2);
        let r = record(1, 1);
        assert_eq!(j.get(&r.spec.key()), Some(&r));
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.jsonl");
        {
            let mut j = Journal::open(&path).unwrap();
            j.append(record(0, 0)).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"journal_version\":1,\"spe").unwrap();
        drop(f);
        let mut j = Journal::open(&path).unwrap();
        assert_eq!(j.len(), 1);
        j.append(record(1, 1)).unwrap();
        assert_eq!(Journal::open(&path).unwrap().len(), 2);
    }

    #[test]
    fn corrupt_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.jsonl");
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(
            Journal::open(&path),
            Err(JournalError::Corrupt { line: 1, .. })
        ));
    }
}
