//! Append-only JSONL results store with crash-tolerant reopening and
//! compaction.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::gold::{CellScores, Prediction};
use crate::contexts::ContextStrategy;
use crate::corpus::TaskKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    /// Scored as an empty answer.
    ContextLengthExceeded,
    /// Not scored; retried on the next run.
    ProviderError,
    /// Context could not be built or the answer could not be read; not scored.
    Failed,
}

impl CellStatus {
    pub fn is_scored(self) -> bool {
        matches!(self, CellStatus::Ok | CellStatus::ContextLengthExceeded)
    }

    /// Whether a rerun leaves the cell alone.
    pub fn is_final(self) -> bool {
        self != CellStatus::ProviderError
    }
}

/// Wall-clock and cache facts; excluded from determinism comparisons.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Execution {
    pub latency_ms: u64,
    pub elapsed_ms: u64,
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub encounter_id: String,
    pub task: TaskKind,
    pub strategy: ContextStrategy,
    pub provider: String,
    pub model: String,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub prompt_hash: Option<String>,
    pub response_hash: Option<String>,
    pub prompt_tokens: usize,
    pub ehr_tokens: usize,
    pub prediction: Option<Prediction>,
    pub parse_issues: usize,
    pub parse_flags: usize,
    pub scores: Option<CellScores>,
    pub execution: Execution,
}

impl RunRecord {
    /// Position of the cell in the canonical matrix order.
    pub fn sort_key(&self) -> (String, TaskKind, ContextStrategy, String, String) {
        (self.encounter_id.clone(), self.task, self.strategy, self.provider.clone(), self.model.clone())
    }

    /// The record with wall-clock fields zeroed.
    pub fn without_execution(&self) -> RunRecord {
        RunRecord { execution: Execution::default(), ..self.clone() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("results store {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("results store {path} is corrupt at line {line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
}

pub struct ResultsStore {
    path: PathBuf,
    writer: Mutex<File>,
}

impl ResultsStore {
    /// Opens (creating if needed) and reads back existing records. A torn
    /// final line from an interrupted write is cut off; any other unreadable
    /// line is corruption.
    pub fn open(path: &Path) -> Result<(Self, Vec<RunRecord>), StoreError> {
        let io = |source| StoreError::Io { path: path.display().to_string(), source };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let records = if path.exists() { read_records(path, true)? } else { Vec::new() };
        let writer = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok((Self { path: path.to_path_buf(), writer: Mutex::new(writer) }, records))
    }

    /// Serialized append of one record, flushed before returning.
    pub fn append(&self, r: &RunRecord) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(r).expect("record serializes");
        line.push('\n');
        let mut w = self.writer.lock().expect("store writer lock");
        w.write_all(line.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|source| StoreError::Io { path: self.path.display().to_string(), source })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Reads every record. With `repair`, a torn unterminated last line is
/// truncated away on disk.
pub fn read_records(path: &Path, repair: bool) -> Result<Vec<RunRecord>, StoreError> {
    let io = |source| StoreError::Io { path: path.display().to_string(), source };
    let raw = fs::read(path).map_err(io)?;
    let mut out = Vec::new();
    let mut good_len = 0usize;
    let mut reader = BufReader::new(&raw[..]);
    let mut line = Vec::new();
    let mut n = 0;
    loop {
        line.clear();
        let read = reader.read_until(b'\n', &mut line).map_err(io)?;
        if read == 0 {
            break;
        }
        n += 1;
        let terminated = line.ends_with(b"\n");
        let text = String::from_utf8_lossy(&line);
        if text.trim().is_empty() {
            good_len += read;
            continue;
        }
        match serde_json::from_str::<RunRecord>(text.trim_end()) {
            Ok(r) if terminated => {
                out.push(r);
                good_len += read;
            }
            Ok(_) | Err(_) if !terminated => {
                log::warn!("{}: dropping torn final line {n}", path.display());
                if repair {
                    let f = OpenOptions::new().write(true).open(path).map_err(io)?;
                    f.set_len(good_len as u64).map_err(io)?;
                }
                break;
            }
            Ok(_) => unreachable!(),
            Err(e) => return Err(StoreError::Corrupt { path: path.display().to_string(), line: n, message: e.to_string() }),
        }
    }
    Ok(out)
}

/// Keeps the last record per run id, in canonical order.
pub fn canonicalize(records: Vec<RunRecord>) -> Vec<RunRecord> {
    let mut by_id: BTreeMap<String, RunRecord> = BTreeMap::new();
    for r in records {
        by_id.insert(r.run_id.clone(), r);
    }
    let mut out: Vec<RunRecord> = by_id.into_values().collect();
    out.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()).then_with(|| a.run_id.cmp(&b.run_id)));
    out
}

/// Rewrites the store with one record per run id in canonical order.
/// Returns (records before, records after).
pub fn compact(path: &Path) -> Result<(usize, usize), StoreError> {
    let io = |source| StoreError::Io { path: path.display().to_string(), source };
    let records = read_records(path, true)?;
    let before = records.len();
    let records = canonicalize(records);
    let mut body = String::new();
    for r in &records {
        body.push_str(&serde_json::to_string(r).expect("record serializes"));
        body.push('\n');
    }
    let tmp = path.with_extension("jsonl.tmp");
    fs::write(&tmp, body).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)?;
    Ok((before, records.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, enc: &str, status: CellStatus) -> RunRecord {
        RunRecord {
            run_id: id.into(),
            encounter_id: enc.into(),
            task: TaskKind::Imaging,
            strategy: ContextStrategy::Rag(20),
            provider: "p".into(),
            model: "m".into(),
            status,
            error: None,
            prompt_hash: None,
            response_hash: None,
            prompt_tokens: 0,
            ehr_tokens: 0,
            prediction: None,
            parse_issues: 0,
            parse_flags: 0,
            scores: None,
            execution: Execution { latency_ms: 5, elapsed_ms: 6, cached: false },
        }
    }

    #[test]
    fn torn_tail_is_dropped_and_repaired() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("r.jsonl");
        {
            let (s, existing) = ResultsStore::open(&p).unwrap();
            assert!(existing.is_empty());
            s.append(&rec("a", "E1", CellStatus::Ok)).unwrap();
            s.append(&rec("b", "E2", CellStatus::Ok)).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&p).unwrap();
        f.write_all(b"{\"run_id\":\"c\",\"enc").unwrap();
        drop(f);
        let (s, existing) = ResultsStore::open(&p).unwrap();
        assert_eq!(existing.len(), 2);
        s.append(&rec("c", "E3", CellStatus::Ok)).unwrap();
        assert_eq!(read_records(&p, false).unwrap().len(), 3);
    }

    #[test]
    fn corrupt_middle_line_is_fatal() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("r.jsonl");
        let good = serde_json::to_string(&rec("a", "E1", CellStatus::Ok)).unwrap();
        fs::write(&p, format!("{good}\nnot json\n{good}\n")).unwrap();
        assert!(matches!(ResultsStore::open(&p), Err(StoreError::Corrupt { line: 2, .. })));
    }

    #[test]
    fn compaction_dedups_and_orders() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("r.jsonl");
        let (s, _) = ResultsStore::open(&p).unwrap();
        s.append(&rec("x", "E2", CellStatus::ProviderError)).unwrap();
        s.append(&rec("y", "E1", CellStatus::Ok)).unwrap();
        s.append(&rec("x", "E2", CellStatus::Ok)).unwrap();
        drop(s);
        assert_eq!(compact(&p).unwrap(), (3, 2));
        let back = read_records(&p, false).unwrap();
        assert_eq!(back.iter().map(|r| r.run_id.as_str()).collect::<Vec<_>>(), ["y", "x"]);
        assert_eq!(back[1].status, CellStatus::Ok);
    }
}
