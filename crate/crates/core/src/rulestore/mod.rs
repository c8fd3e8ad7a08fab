//! Ruling database: scholar rulings (authoritative) and cached machine
//! classifications, plus scholar accounts and login sessions.
//!
//! Entries live in a line-delimited JSON log. Every write rewrites the log
//! through a temp file and an atomic rename, so readers of the file never see
//! a partial write; superseded revisions stay in the log until [`RuleStore::close`]
//! compacts it. In memory, readers share an immutable snapshot behind an
//! `Arc` and writers, serialized by a mutex, publish a new snapshot only
//! after the file replacement succeeds.

mod atomic;
mod auth;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::Ticker;
use crate::featurex::{explain, Explanation};
use crate::features::{FeatureVector, Label, Provenance};

pub use atomic::FaultHook;
pub use auth::{Clock, HashParams, ManualClock, ScholarAccount, Session, SystemClock, DEFAULT_TOKEN_TTL};

pub const SYSTEM_EDITOR: &str = "system";
const MAX_NAME: usize = 100;
const MAX_VERDICT_TEXT: usize = 200;
const MAX_NOTE: usize = 4000;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store i/o: {0}")]
    Io(#[from] io::Error),
    #[error("{}:{line}: {message}", path.display())]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("malformed entry: {0}")]
    Malformed(String),
    #[error("invalid or expired token")]
    InvalidToken,
    #[error("bad credentials")]
    BadCredentials,
    #[error("scholar id `{0}` already exists")]
    DuplicateAccount(String),
    #[error("no {provenance} entry for {ticker}")]
    NotFound { ticker: String, provenance: String },
    #[error("scholar entries cannot be deleted")]
    ScholarDelete,
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulingEntry {
    pub ticker: Ticker,
    #[serde(default)]
    pub name: Option<String>,
    pub features: FeatureVector,
    pub verdict: Label,
    pub verdict_text: String,
    pub provenance: Provenance,
    pub explanation: Explanation,
    /// Scholar's free-text reasoning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Scholar id, or `system` for machine entries.
    pub editor: String,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub revision: u64,
}

impl RulingEntry {
    /// A machine entry ready for [`RuleStore::cache_machine_ruling`]; the
    /// store assigns revision and timestamps.
    pub fn machine(ticker: Ticker, name: Option<String>, features: FeatureVector, verdict: Label) -> Self {
        let explanation = explain(&features, verdict, Provenance::Machine, None);
        RulingEntry {
            ticker,
            name,
            verdict_text: explanation.verdict_text.clone(),
            features,
            verdict,
            provenance: Provenance::Machine,
            explanation,
            note: None,
            editor: SYSTEM_EDITOR.to_owned(),
            created_at: DateTime::UNIX_EPOCH,
            updated_at: DateTime::UNIX_EPOCH,
            revision: 0,
        }
    }
}

/// Scholar-supplied fields of a ruling; everything else is filled in by the
/// store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RulingDraft {
    #[serde(default)]
    pub ticker: Option<Ticker>,
    #[serde(default)]
    pub name: Option<String>,
    pub features: FeatureVector,
    pub verdict: Label,
    /// Display text; defaults to the bare verdict.
    #[serde(default)]
    pub verdict_text: Option<String>,
    #[serde(default)]
    pub note: Option<String>,
}

impl RulingDraft {
    fn validate(&self) -> Result<(), StoreError> {
        let too_long = |field: &str, v: &Option<String>, max: usize| match v {
            Some(s) if s.chars().count() > max => {
                Err(StoreError::Malformed(format!("{field} longer than {max} characters")))
            }
            _ => Ok(()),
        };
        too_long("name", &self.name, MAX_NAME)?;
        too_long("verdict_text", &self.verdict_text, MAX_VERDICT_TEXT)?;
        too_long("note", &self.note, MAX_NOTE)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Slot {
    scholar: Option<RulingEntry>,
    machine: Option<RulingEntry>,
    /// Highest revision ever issued for the ticker.
    revision: u64,
}

impl Slot {
    fn get(&self, p: Provenance) -> Option<&RulingEntry> {
        match p {
            Provenance::Scholar => self.scholar.as_ref(),
            Provenance::Machine => self.machine.as_ref(),
        }
    }

    fn get_mut(&mut self, p: Provenance) -> &mut Option<RulingEntry> {
        match p {
            Provenance::Scholar => &mut self.scholar,
            Provenance::Machine => &mut self.machine,
        }
    }

    fn preferred(&self) -> Option<&RulingEntry> {
        self.scholar.as_ref().or(self.machine.as_ref())
    }
}

/// Immutable view of the store at one point in time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Snapshot {
    slots: BTreeMap<Ticker, Slot>,
}

impl Snapshot {
    /// Scholar entry over machine entry. Ticker matches (case-insensitive)
    /// beat name matches; among several name matches, a scholar entry wins,
    /// then the smallest ticker.
    pub fn lookup(&self, query: &str) -> Option<&RulingEntry> {
        let q = query.trim();
        if q.is_empty() {
            return None;
        }
        if let Some(slot) = Ticker::new(&q.to_ascii_uppercase()).ok().and_then(|t| self.slots.get(&t)) {
            if let Some(e) = slot.preferred() {
                return Some(e);
            }
        }
        let by_name = |e: &&RulingEntry| e.name.as_deref().is_some_and(|n| n.trim().eq_ignore_ascii_case(q));
        let slots = || self.slots.values();
        slots()
            .filter_map(|s| s.scholar.as_ref())
            .find(by_name)
            .or_else(|| slots().filter_map(|s| s.machine.as_ref()).find(by_name))
    }

    pub fn get(&self, ticker: &Ticker, provenance: Provenance) -> Option<&RulingEntry> {
        self.slots.get(ticker).and_then(|s| s.get(provenance))
    }

    /// Every current entry, by ticker, scholar before machine.
    pub fn list_all(&self) -> Vec<&RulingEntry> {
        self.slots
            .values()
            .flat_map(|s| s.scholar.iter().chain(s.machine.iter()))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.list_all().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last_revision(&self, ticker: &Ticker) -> u64 {
        self.slots.get(ticker).map_or(0, |s| s.revision)
    }

    fn apply(&mut self, rec: LogRecord) {
        match rec {
            LogRecord::Put(e) => {
                let slot = self.slots.entry(e.ticker.clone()).or_default();
                slot.revision = slot.revision.max(e.revision);
                let p = e.provenance;
                *slot.get_mut(p) = Some(*e);
            }
            LogRecord::Delete {
                ticker,
                provenance,
                revision,
            } => {
                let slot = self.slots.entry(ticker).or_default();
                slot.revision = slot.revision.max(revision);
                *slot.get_mut(provenance) = None;
            }
        }
    }

    /// Minimal log reproducing this snapshot: one line per current entry, plus
    /// a tombstone where a ticker's revision counter would otherwise be lost.
    fn compacted(&self) -> Vec<LogRecord> {
        let mut out = Vec::new();
        for (t, slot) in &self.slots {
            let entries: Vec<&RulingEntry> = slot.scholar.iter().chain(slot.machine.iter()).collect();
            if entries.iter().map(|e| e.revision).max().unwrap_or(0) < slot.revision {
                out.push(LogRecord::Delete {
                    ticker: t.clone(),
                    provenance: Provenance::Machine,
                    revision: slot.revision,
                });
            }
            out.extend(entries.into_iter().map(|e| LogRecord::Put(Box::new(e.clone()))));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum LogRecord {
    Put(Box<RulingEntry>),
    Delete {
        ticker: Ticker,
        provenance: Provenance,
        revision: u64,
    },
}

fn encode(records: &[LogRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("log record serializes"));
        out.push('\n');
    }
    out
}

#[derive(Clone)]
pub struct StoreOptions {
    pub hash_params: HashParams,
    pub token_ttl: Duration,
    pub clock: Arc<dyn Clock>,
}

impl Default for StoreOptions {
    fn default() -> Self {
        StoreOptions {
            hash_params: HashParams::default(),
            token_ttl: DEFAULT_TOKEN_TTL,
            clock: Arc::new(SystemClock),
        }
    }
}

struct Writer {
    /// Log lines as currently on disk.
    log: Vec<LogRecord>,
    fault_hook: Option<FaultHook>,
}

pub struct RuleStore {
    path: PathBuf,
    snapshot: RwLock<Arc<Snapshot>>,
    writer: Mutex<Writer>,
    auth: auth::Auth,
    clock: Arc<dyn Clock>,
}

fn read_log(path: &Path) -> Result<Vec<LogRecord>, StoreError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| StoreError::Corrupt {
                path: path.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

impl RuleStore {
    /// Opens (or starts) the store at `store_path` with accounts in
    /// `accounts_path`. A temp file left by an interrupted write is discarded.
    pub fn open(store_path: &Path, accounts_path: &Path, opts: StoreOptions) -> Result<Self, StoreError> {
        atomic::discard_stale_temp(store_path);
        let log = read_log(store_path)?;
        let mut snap = Snapshot::default();
        for r in log.iter().cloned() {
            snap.apply(r);
        }
        let auth = auth::Auth::open(accounts_path, opts.hash_params, opts.token_ttl, opts.clock.clone())?;
        Ok(RuleStore {
            path: store_path.to_owned(),
            snapshot: RwLock::new(Arc::new(snap)),
            writer: Mutex::new(Writer { log, fault_hook: None }),
            auth,
            clock: opts.clock,
        })
    }

    /// Installs a hook run between writing the temp file and renaming it.
    pub fn set_fault_hook(&self, hook: Option<FaultHook>) {
        self.writer.lock().unwrap().fault_hook = hook;
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap().clone()
    }

    pub fn lookup(&self, query: &str) -> Option<RulingEntry> {
        self.snapshot().lookup(query).cloned()
    }

    pub fn list_all(&self) -> Vec<RulingEntry> {
        self.snapshot().list_all().into_iter().cloned().collect()
    }

    /// Appends `rec` to the log, replaces the file, then publishes the new
    /// snapshot. On any failure both the file and the in-memory state keep
    /// their previous contents.
    fn commit(&self, build: impl FnOnce(&Snapshot, DateTime<Utc>) -> Result<LogRecord, StoreError>) -> Result<Snapshot, StoreError> {
        let mut w = self.writer.lock().unwrap();
        let current = self.snapshot();
        let rec = build(&current, self.clock.now())?;
        let mut next = (*current).clone();
        next.apply(rec.clone());
        w.log.push(rec);
        let written = atomic::replace_file(&self.path, encode(&w.log).as_bytes(), w.fault_hook.as_ref());
        if let Err(e) = written {
            w.log.pop();
            return Err(e.into());
        }
        *self.snapshot.write().unwrap() = Arc::new(next.clone());
        Ok(next)
    }

    fn next_times(prev: Option<&RulingEntry>, now: DateTime<Utc>) -> (DateTime<Utc>, DateTime<Utc>) {
        match prev {
            Some(p) => {
                // updated_at strictly advances even if the clock did not
                let updated = now.max(p.updated_at + Duration::microseconds(1));
                (p.created_at, updated)
            }
            None => (now, now),
        }
    }

    pub fn upsert_scholar_ruling(&self, token: &str, ticker: &Ticker, draft: RulingDraft) -> Result<RulingEntry, StoreError> {
        let editor = self.auth.authenticate(token)?;
        if !self.auth.is_registered(&editor) {
            return Err(StoreError::InvalidToken);
        }
        draft.validate()?;
        if let Some(t) = &draft.ticker {
            if t != ticker {
                return Err(StoreError::Malformed(format!("body ticker {t} does not match {ticker}")));
            }
        }
        let snap = self.commit(|snap, now| {
            let prev = snap.get(ticker, Provenance::Scholar);
            let (created_at, updated_at) = Self::next_times(prev, now);
            let verdict_text = draft
                .verdict_text
                .as_deref()
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .unwrap_or(draft.verdict.as_str())
                .to_owned();
            let features = draft.features.without_evidence();
            Ok(LogRecord::Put(Box::new(RulingEntry {
                ticker: ticker.clone(),
                name: draft.name.map(|n| n.trim().to_owned()).filter(|n| !n.is_empty()),
                explanation: explain(&features, draft.verdict, Provenance::Scholar, Some(&verdict_text)),
                features,
                verdict: draft.verdict,
                verdict_text,
                provenance: Provenance::Scholar,
                note: draft.note,
                editor,
                created_at,
                updated_at,
                revision: snap.last_revision(ticker) + 1,
            })))
        })?;
        Ok(snap.get(ticker, Provenance::Scholar).cloned().expect("just written"))
    }

    /// Replaces the machine entry for the ticker; scholar entries are never
    /// touched.
    pub fn cache_machine_ruling(&self, entry: RulingEntry) -> Result<RulingEntry, StoreError> {
        if entry.provenance != Provenance::Machine {
            return Err(StoreError::Malformed("cached rulings must have machine provenance".into()));
        }
        if entry.editor != SYSTEM_EDITOR {
            return Err(StoreError::Malformed(format!("machine entries are edited by `{SYSTEM_EDITOR}`")));
        }
        if entry.verdict_text != entry.verdict.probable_text() {
            return Err(StoreError::Malformed("machine verdict text must be the probable-verdict form".into()));
        }
        let ticker = entry.ticker.clone();
        let snap = self.commit(|snap, now| {
            let prev = snap.get(&ticker, Provenance::Machine);
            let (created_at, updated_at) = Self::next_times(prev, now);
            Ok(LogRecord::Put(Box::new(RulingEntry {
                created_at,
                updated_at,
                revision: snap.last_revision(&ticker) + 1,
                ..entry
            })))
        })?;
        Ok(snap.get(&ticker, Provenance::Machine).cloned().expect("just written"))
    }

    /// Drops the cached machine entry (scholar entries can only be
    /// superseded).
    pub fn delete_ruling(&self, token: &str, ticker: &Ticker, provenance: Provenance) -> Result<(), StoreError> {
        self.auth.authenticate(token)?;
        if provenance == Provenance::Scholar {
            return Err(StoreError::ScholarDelete);
        }
        self.commit(|snap, _| {
            if snap.get(ticker, Provenance::Machine).is_none() {
                return Err(StoreError::NotFound {
                    ticker: ticker.to_string(),
                    provenance: "machine".into(),
                });
            }
            Ok(LogRecord::Delete {
                ticker: ticker.clone(),
                provenance,
                revision: snap.last_revision(ticker) + 1,
            })
        })?;
        Ok(())
    }

    pub fn login(&self, id: &str, password: &str) -> Result<Session, StoreError> {
        self.auth.login(id, password)
    }

    pub fn authenticate(&self, token: &str) -> Result<String, StoreError> {
        self.auth.authenticate(token)
    }

    pub fn add_account(&self, id: &str, display_name: &str, password: &str) -> Result<ScholarAccount, StoreError> {
        self.auth.add_account(id, display_name, password)
    }

    pub fn accounts(&self) -> Vec<ScholarAccount> {
        self.auth.accounts()
    }

    /// Rewrites the log as a compact snapshot.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut w = self.writer.lock().unwrap();
        let compacted = self.snapshot().compacted();
        atomic::replace_file(&self.path, encode(&compacted).as_bytes(), w.fault_hook.as_ref())?;
        w.log = compacted;
        Ok(())
    }

    pub fn close(self) -> Result<(), StoreError> {
        self.compact()
    }
}
