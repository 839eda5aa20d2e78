//! Sessions: an append-only JSON-lines event log per session, and the service
//! that runs user turns against it.
//!
//! An event is written and flushed before anyone else sees it. The in-memory
//! state of a session is always the fold of its log, so a restarted process
//! picks up exactly where the old one stopped.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::hash::Hasher;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifacts::ArtifactStore;
use crate::llm::{ChatProvider, Script, ScriptedProvider};
use crate::orchestrator::{
    Limits, Orchestrator, ReplayError, SessionEvent, SessionState, TurnOutcome,
};
use crate::toolkit::{SandboxBackend, SandboxSessions, ToolRegistry};

const TITLE_CHARS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Idle,
    Running,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub title: String,
    pub status: SessionStatus,
    pub event_count: u64,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("unknown session `{0}`")]
    NotFound(String),
    #[error("session `{0}` is already running a turn")]
    Conflict(String),
    #[error("message text is empty")]
    EmptyMessage,
    #[error("storage: {0}")]
    Storage(#[from] io::Error),
    #[error("corrupt log for session `{session}` at seq {seq}: {message}")]
    Corrupt {
        session: String,
        seq: u64,
        message: String,
    },
    #[error("turn could not be recorded: {0}")]
    Orchestrator(String),
}

/// Files under one directory: `<id>.json` for metadata, `<id>.jsonl` for
/// events.
#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredMeta {
    session_id: String,
    created_at: DateTime<Utc>,
    title: String,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-')
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, SessionError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn meta_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    fn log_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.jsonl"))
    }

    fn write_meta(&self, meta: &StoredMeta) -> Result<(), SessionError> {
        let tmp = self.dir.join(format!("{}.json.tmp", meta.session_id));
        fs::write(
            &tmp,
            serde_json::to_vec_pretty(meta).expect("meta serializes"),
        )?;
        fs::rename(tmp, self.meta_path(&meta.session_id))?;
        Ok(())
    }

    fn create(&self) -> Result<StoredMeta, SessionError> {
        let meta = StoredMeta {
            session_id: uuid::Uuid::new_v4().simple().to_string(),
            created_at: Utc::now(),
            title: String::new(),
        };
        File::create(self.log_path(&meta.session_id))?;
        self.write_meta(&meta)?;
        Ok(meta)
    }

    fn read_meta(&self, id: &str) -> Result<StoredMeta, SessionError> {
        if !valid_id(id) {
            return Err(SessionError::NotFound(id.to_string()));
        }
        let bytes = fs::read(self.meta_path(id)).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => SessionError::NotFound(id.to_string()),
            _ => e.into(),
        })?;
        serde_json::from_slice(&bytes).map_err(|e| SessionError::Corrupt {
            session: id.to_string(),
            seq: 0,
            message: format!("metadata: {e}"),
        })
    }

    /// Reads a log. Line `n` must hold the event with seq `n`.
    pub fn read_log(&self, id: &str) -> Result<Vec<SessionEvent>, SessionError> {
        let file = File::open(self.log_path(id)).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => SessionError::NotFound(id.to_string()),
            _ => e.into(),
        })?;
        let mut events = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let corrupt = |message: String| SessionError::Corrupt {
                session: id.to_string(),
                seq: n as u64,
                message,
            };
            let event: SessionEvent =
                serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            if event.seq != n as u64 {
                return Err(corrupt(format!(
                    "found seq {} on line {}",
                    event.seq,
                    n + 1
                )));
            }
            events.push(event);
        }
        Ok(events)
    }

    fn append(&self, id: &str, event: &SessionEvent) -> io::Result<()> {
        let mut line = serde_json::to_vec(event).map_err(io::Error::other)?;
        line.push(b'\n');
        let mut f = OpenOptions::new().append(true).open(self.log_path(id))?;
        f.write_all(&line)?;
        f.sync_data()
    }

    fn ids(&self) -> Result<Vec<String>, SessionError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".jsonl") {
                if valid_id(id) && self.meta_path(id).exists() {
                    ids.push(id.to_string());
                }
            }
        }
        Ok(ids)
    }
}

/// Where agents get their model from.
#[derive(Clone)]
pub enum ProviderSource {
    /// Every session replays the same script from the position its log has
    /// reached.
    Scripted(Arc<Script>),
    Shared(Arc<dyn ChatProvider>),
}

/// Everything a turn needs besides the session itself.
#[derive(Clone)]
pub struct ServiceConfig {
    pub provider: ProviderSource,
    pub tools: Arc<ToolRegistry>,
    pub artifact_dir: PathBuf,
    pub sandbox_backend: Arc<dyn SandboxBackend>,
    pub limits: Limits,
}

struct Slot {
    meta: Mutex<StoredMeta>,
    events: RwLock<Vec<SessionEvent>>,
    state: Mutex<SessionState>,
    running: AtomicBool,
    failed: AtomicBool,
    sandboxes: Mutex<Option<SandboxSessions>>,
}

/// Sessions in one directory, loaded on first use.
pub struct SessionService {
    store: SessionStore,
    config: ServiceConfig,
    slots: Mutex<HashMap<String, Arc<Slot>>>,
}

/// Resets the running flag however the turn ends.
struct RunGuard<'a>(&'a AtomicBool);

impl Drop for RunGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

fn artifact_seed(session: &str, seq: u64) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(session.as_bytes());
    h.write_u64(seq);
    h.finish()
}

impl SessionService {
    pub fn new(store: SessionStore, config: ServiceConfig) -> Self {
        Self {
            store,
            config,
            slots: Mutex::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn load_slot(
        &self,
        meta: StoredMeta,
        events: Vec<SessionEvent>,
    ) -> Result<Arc<Slot>, SessionError> {
        let state = SessionState::replay(&events).map_err(|ReplayError { seq, message }| {
            SessionError::Corrupt {
                session: meta.session_id.clone(),
                seq,
                message,
            }
        })?;
        Ok(Arc::new(Slot {
            meta: Mutex::new(meta),
            events: RwLock::new(events),
            state: Mutex::new(state),
            running: AtomicBool::new(false),
            failed: AtomicBool::new(false),
            sandboxes: Mutex::new(None),
        }))
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, SessionError> {
        if let Some(s) = self.slots.lock().get(id) {
            return Ok(Arc::clone(s));
        }
        let meta = self.store.read_meta(id)?;
        let events = self.store.read_log(id)?;
        let slot = self.load_slot(meta, events)?;
        Ok(Arc::clone(
            self.slots.lock().entry(id.to_string()).or_insert(slot),
        ))
    }

    fn describe(slot: &Slot) -> SessionMeta {
        let m = slot.meta.lock().clone();
        let status = if slot.running.load(Ordering::SeqCst) {
            SessionStatus::Running
        } else if slot.failed.load(Ordering::SeqCst) {
            SessionStatus::Failed
        } else {
            SessionStatus::Idle
        };
        SessionMeta {
            session_id: m.session_id,
            created_at: m.created_at,
            title: m.title,
            status,
            event_count: slot.events.read().len() as u64,
        }
    }

    pub fn create_session(&self) -> Result<SessionMeta, SessionError> {
        let meta = self.store.create()?;
        let id = meta.session_id.clone();
        let slot = self.load_slot(meta, Vec::new())?;
        let out = Self::describe(&slot);
        self.slots.lock().insert(id, slot);
        Ok(out)
    }

    pub fn session(&self, id: &str) -> Result<SessionMeta, SessionError> {
        Ok(Self::describe(&*self.slot(id)?))
    }

    /// All sessions, newest first.
    pub fn list_sessions(&self) -> Result<Vec<SessionMeta>, SessionError> {
        let mut out = Vec::new();
        for id in self.store.ids()? {
            out.push(self.session(&id)?);
        }
        out.sort_by(|a, b| {
            b.created_at
                .cmp(&a.created_at)
                .then_with(|| a.session_id.cmp(&b.session_id))
        });
        Ok(out)
    }

    /// Events with seq greater than `after` (all when `None`).
    pub fn history(&self, id: &str, after: Option<u64>) -> Result<Vec<SessionEvent>, SessionError> {
        let slot = self.slot(id)?;
        let events = slot.events.read();
        let start = after.map_or(0, |a| (a + 1).min(events.len() as u64) as usize);
        Ok(events[start..].to_vec())
    }

    /// Rebuilds a session's state from its log on disk.
    pub fn replay(&self, id: &str) -> Result<SessionState, SessionError> {
        self.store.read_meta(id)?;
        let events = self.store.read_log(id)?;
        SessionState::replay(&events).map_err(|ReplayError { seq, message }| {
            SessionError::Corrupt {
                session: id.to_string(),
                seq,
                message,
            }
        })
    }

    /// Runs one user turn. `on_event` sees each event after it is on disk.
    pub fn post_user_message(
        &self,
        id: &str,
        text: &str,
        on_event: &mut dyn FnMut(&SessionEvent),
    ) -> Result<TurnOutcome, SessionError> {
        if text.trim().is_empty() {
            return Err(SessionError::EmptyMessage);
        }
        let slot = self.slot(id)?;
        if slot
            .running
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .is_err()
        {
            return Err(SessionError::Conflict(id.to_string()));
        }
        let _guard = RunGuard(&slot.running);

        if slot.failed.swap(false, Ordering::SeqCst) {
            let events = self.store.read_log(id)?;
            let fresh = self.load_slot(slot.meta.lock().clone(), events)?;
            *slot.state.lock() = fresh.state.lock().clone();
            *slot.events.write() = fresh.events.read().clone();
        }
        {
            let mut meta = slot.meta.lock();
            if meta.title.is_empty() {
                meta.title = text.trim().chars().take(TITLE_CHARS).collect();
                self.store.write_meta(&meta)?;
            }
        }

        let mut state = slot.state.lock();
        let provider: Arc<dyn ChatProvider> = match &self.config.provider {
            ProviderSource::Scripted(script) => Arc::new(ScriptedProvider::resume(
                Arc::clone(script),
                state.provider_calls,
            )),
            ProviderSource::Shared(p) => Arc::clone(p),
        };
        let artifacts = ArtifactStore::seeded(
            &self.config.artifact_dir,
            artifact_seed(id, state.next_seq()),
        )?;
        let mut sandboxes_slot = slot.sandboxes.lock();
        let sandboxes = sandboxes_slot.get_or_insert_with(|| {
            SandboxSessions::new(
                Arc::clone(&self.config.sandbox_backend),
                self.store.dir().join(format!("{id}.work")),
            )
        });

        let store = &self.store;
        let events = &slot.events;
        let mut sink = |event: &SessionEvent| -> Result<(), String> {
            store.append(id, event).map_err(|e| e.to_string())?;
            events.write().push(event.clone());
            on_event(event);
            Ok(())
        };
        let mut orchestrator = Orchestrator {
            provider: provider.as_ref(),
            tools: &self.config.tools,
            artifacts: &artifacts,
            sandboxes,
            limits: self.config.limits,
        };
        match orchestrator.run_user_turn(&mut state, text, &mut sink) {
            Ok(outcome) => Ok(outcome),
            Err(e) => {
                slot.failed.store(true, Ordering::SeqCst);
                Err(SessionError::Orchestrator(e.to_string()))
            }
        }
    }
}
