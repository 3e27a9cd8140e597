//! Interactive review sessions over a shared [`Engine`].
//!
//! Every mutation is appended to a JSON-lines log and synced before it takes
//! effect. Opening a manager on an existing log replays the recorded
//! operations through the engine, which rebuilds identical sessions.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::engine::{BatchItem, Engine, RetrievalSettings, ReviewSession};
use crate::error::{Error, Result};
use crate::feedback::StrategyConfig;

const SNIPPET_CHARS: usize = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_doc_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub query_text: Option<String>,
    #[serde(default)]
    pub strategy: StrategyConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackRequest {
    pub accepted: Vec<String>,
    pub declined: Vec<String>,
    /// Iteration the client believes it is answering; a mismatch is stale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iteration: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchEntry {
    pub doc_id: String,
    pub para_id: String,
    pub snippet: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub iteration: usize,
    pub accepted: usize,
    pub reviewed: usize,
    /// Present when topic labels are known for the query document.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relevant: Option<usize>,
    /// No unreviewed candidates remain.
    pub exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub batch: Vec<String>,
    pub accepted: Vec<String>,
    pub declined: Vec<String>,
    pub accepted_total: usize,
    pub reviewed_total: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub query: CreateRequest,
    pub strategy: StrategyConfig,
    pub settings: RetrievalSettings,
    pub batch: Vec<BatchEntry>,
    pub progress: Progress,
    pub iteration: usize,
    pub created: u64,
    pub updated: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum LogRecord {
    Create { id: String, request: CreateRequest, at: u64 },
    Feedback { id: String, accepted: Vec<String>, declined: Vec<String>, at: u64 },
    Delete { id: String },
}

#[derive(Debug, Clone)]
struct Entry {
    id: String,
    request: CreateRequest,
    session: ReviewSession,
    relevant: Option<HashSet<String>>,
    history: Vec<TraceEntry>,
    created: u64,
    updated: u64,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub struct SessionManager {
    engine: Arc<Engine>,
    settings: RetrievalSettings,
    /// Paragraph id → text.
    snippets: HashMap<String, String>,
    /// Document id → topic codes.
    labels: HashMap<String, BTreeSet<String>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    log: Option<Mutex<File>>,
    log_path: Option<PathBuf>,
}

impl SessionManager {
    /// In-memory manager without persistence.
    pub fn new(engine: Arc<Engine>, settings: RetrievalSettings) -> Result<Self> {
        settings.validate()?;
        Ok(SessionManager {
            engine,
            settings,
            snippets: HashMap::new(),
            labels: HashMap::new(),
            sessions: RwLock::new(HashMap::new()),
            log: None,
            log_path: None,
        })
    }

    pub fn with_snippets(mut self, snippets: HashMap<String, String>) -> Self {
        self.snippets = snippets;
        self
    }

    pub fn with_labels(mut self, labels: HashMap<String, BTreeSet<String>>) -> Self {
        self.labels = labels;
        self
    }

    /// Persists sessions to `path`, replaying any operations already there.
    /// Call after the snippets and labels are attached.
    pub fn persist_to(mut self, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if path.exists() {
            let lines: Vec<String> = BufReader::new(File::open(&path)?).lines().collect::<std::io::Result<_>>()?;
            let last = lines.iter().rposition(|l| !l.trim().is_empty());
            for (n, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let locator = format!("{}:{}", path.display(), n + 1);
                let record: LogRecord = match serde_json::from_str(line) {
                    Ok(r) => r,
                    // a torn final write is dropped; anything earlier is corruption
                    Err(e) if Some(n) == last => {
                        log::warn!("{locator}: dropping incomplete session record: {e}");
                        let mut kept: String = lines[..n].iter().map(|l| format!("{l}\n")).collect();
                        if kept.trim().is_empty() {
                            kept.clear();
                        }
                        std::fs::write(&path, kept)?;
                        continue;
                    }
                    Err(e) => return Err(Error::parse(locator, e)),
                };
                self.replay(record).map_err(|e| Error::parse(locator, e))?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        self.log = Some(Mutex::new(file));
        self.log_path = Some(path);
        Ok(self)
    }

    pub fn log_path(&self) -> Option<&Path> {
        self.log_path.as_deref()
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    fn replay(&self, record: LogRecord) -> Result<()> {
        match record {
            LogRecord::Create { id, request, at } => {
                let entry = self.build(id.clone(), request, at)?;
                self.sessions.write().expect("session map poisoned").insert(id, Arc::new(Mutex::new(entry)));
            }
            LogRecord::Feedback { id, accepted, declined, at } => {
                let slot = self.slot(&id)?;
                let mut entry = slot.lock().expect("session poisoned");
                let next = self.advance(&entry, &accepted, &declined, at)?;
                *entry = next;
            }
            LogRecord::Delete { id } => {
                self.sessions.write().expect("session map poisoned").remove(&id);
            }
        }
        Ok(())
    }

    fn append(&self, record: &LogRecord) -> Result<()> {
        if let Some(log) = &self.log {
            let mut line = serde_json::to_string(record)?;
            line.push('\n');
            let mut f = log.lock().expect("log poisoned");
            f.write_all(line.as_bytes())?;
            f.sync_data()?;
        }
        Ok(())
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<Entry>>> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownSession(id.to_string()))
    }

    fn build(&self, id: String, request: CreateRequest, at: u64) -> Result<Entry> {
        let (query, relevant) = match (&request.query_doc_id, &request.query_text) {
            (Some(doc), None) => {
                let q = self.engine.query_for_doc(doc)?;
                (q, self.relevant_for(doc))
            }
            (None, Some(text)) => (self.engine.query_for_text(text)?, None),
            _ => return Err(Error::invalid("give exactly one of query_doc_id and query_text")),
        };
        let session = ReviewSession::start(&self.engine, query, request.strategy, self.settings)?;
        Ok(Entry { id, request, session, relevant, history: Vec::new(), created: at, updated: at })
    }

    /// Documents sharing a topic with `doc`, when labels are known.
    fn relevant_for(&self, doc: &str) -> Option<HashSet<String>> {
        let topics = self.labels.get(doc).filter(|t| !t.is_empty())?;
        let store = self.engine.store();
        let set: HashSet<String> = self
            .labels
            .iter()
            .filter(|(d, ts)| d.as_str() != doc && !ts.is_disjoint(topics) && store.doc_index(d).is_some())
            .map(|(d, _)| d.clone())
            .collect();
        (!set.is_empty()).then_some(set)
    }

    fn advance(&self, entry: &Entry, accepted: &[String], declined: &[String], at: u64) -> Result<Entry> {
        let state = entry.session.state();
        if let Some(d) = accepted.iter().chain(declined).find(|d| state.is_reviewed(d)) {
            return Err(Error::Conflict(format!("document {d} was reviewed in an earlier batch")));
        }
        let batch: Vec<String> = entry.session.batch().iter().map(|b| b.doc_id.clone()).collect();
        let mut next = entry.clone();
        next.session.submit(&self.engine, accepted, declined)?;
        next.updated = at;
        let progress = progress_of(&next);
        next.history.push(TraceEntry {
            iteration: next.session.iteration(),
            batch,
            accepted: accepted.to_vec(),
            declined: declined.to_vec(),
            accepted_total: progress.accepted,
            reviewed_total: progress.reviewed,
            recall: progress.recall,
            at,
        });
        Ok(next)
    }

    fn view(&self, entry: &Entry) -> SessionView {
        SessionView {
            session_id: entry.id.clone(),
            query: entry.request.clone(),
            strategy: *entry.session.strategy(),
            settings: *entry.session.settings(),
            batch: entry.session.batch().iter().map(|b| self.batch_entry(b)).collect(),
            progress: progress_of(entry),
            iteration: entry.session.iteration(),
            created: entry.created,
            updated: entry.updated,
        }
    }

    fn batch_entry(&self, item: &BatchItem) -> BatchEntry {
        let text = self.snippets.get(&item.para_id).map(String::as_str).unwrap_or("");
        let snippet = match text.char_indices().nth(SNIPPET_CHARS) {
            Some((cut, _)) => format!("{}…", &text[..cut]),
            None => text.to_string(),
        };
        BatchEntry { doc_id: item.doc_id.clone(), para_id: item.para_id.clone(), snippet, score: item.score }
    }

    pub fn create_session(&self, request: CreateRequest) -> Result<SessionView> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let at = now();
        let entry = self.build(id.clone(), request.clone(), at)?;
        self.append(&LogRecord::Create { id: id.clone(), request, at })?;
        let view = self.view(&entry);
        self.sessions.write().expect("session map poisoned").insert(id, Arc::new(Mutex::new(entry)));
        Ok(view)
    }

    pub fn get_session(&self, id: &str) -> Result<SessionView> {
        let slot = self.slot(id)?;
        let entry = slot.lock().expect("session poisoned");
        Ok(self.view(&entry))
    }

    pub fn submit_feedback(&self, id: &str, request: &FeedbackRequest) -> Result<SessionView> {
        let slot = self.slot(id)?;
        let mut entry = slot.lock().expect("session poisoned");
        if let Some(it) = request.iteration {
            if it != entry.session.iteration() {
                return Err(Error::Conflict(format!(
                    "batch for iteration {it} is already resolved; session is at {}",
                    entry.session.iteration()
                )));
            }
        }
        let at = now();
        let next = self.advance(&entry, &request.accepted, &request.declined, at)?;
        self.append(&LogRecord::Feedback {
            id: id.to_string(),
            accepted: request.accepted.clone(),
            declined: request.declined.clone(),
            at,
        })?;
        *entry = next;
        Ok(self.view(&entry))
    }

    pub fn trace(&self, id: &str) -> Result<Vec<TraceEntry>> {
        let slot = self.slot(id)?;
        let entry = slot.lock().expect("session poisoned");
        Ok(entry.history.clone())
    }

    pub fn delete_session(&self, id: &str) -> Result<()> {
        let mut map = self.sessions.write().expect("session map poisoned");
        if !map.contains_key(id) {
            return Err(Error::UnknownSession(id.to_string()));
        }
        self.append(&LogRecord::Delete { id: id.to_string() })?;
        map.remove(id);
        Ok(())
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("session map poisoned").keys().cloned().collect();
        ids.sort();
        ids
    }
}

fn progress_of(entry: &Entry) -> Progress {
    let state = entry.session.state();
    let (recall, relevant) = match &entry.relevant {
        Some(rel) => {
            let hit = state.accepted_docs().iter().filter(|d| rel.contains(*d)).count();
            (Some(hit as f64 / rel.len() as f64), Some(rel.len()))
        }
        None => (None, None),
    };
    Progress {
        iteration: entry.session.iteration(),
        accepted: state.accepted_docs().len(),
        reviewed: entry.session.reviewed_count(),
        recall,
        relevant,
        exhausted: entry.session.batch().is_empty(),
    }
}
