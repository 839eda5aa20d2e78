//! Stateful code sandboxes.
//!
//! A [`SandboxSession`] owns one long-lived guest process (or stub
//! interpreter). Definitions persist across calls within a session and are
//! never shared between sessions.

mod process;
mod stub;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Attachment, AttachmentKind, ToolOutput, ToolResult};
use crate::artifacts::ArtifactStore;

pub use process::{ProcessBackend, SandboxProcessError};
pub use stub::{StubBackend, StubInterpreter};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Runtime {
    Python,
    R,
    Julia,
}

impl Runtime {
    /// The guest identifier, which is also the tool name.
    pub fn as_str(self) -> &'static str {
        match self {
            Runtime::Python => "python",
            Runtime::R => "r",
            Runtime::Julia => "julia",
        }
    }

    pub fn from_tool_name(name: &str) -> Option<Self> {
        match name {
            "python" => Some(Runtime::Python),
            "r" => Some(Runtime::R),
            "julia" => Some(Runtime::Julia),
            _ => None,
        }
    }
}

impl fmt::Display for Runtime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What one execution produced. `error` is a code error reported by the
/// guest; infrastructure problems are [`SandboxError`]s instead.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExecOutput {
    pub stdout: String,
    pub stderr: String,
    pub error: Option<String>,
    /// PNG bytes, in emission order.
    pub images: Vec<Vec<u8>>,
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("{runtime} runtime unavailable: {message}")]
    Unavailable { runtime: Runtime, message: String },
    #[error("execution timed out after {}s; the {runtime} session was restarted and its state lost", .limit.as_secs())]
    Timeout { runtime: Runtime, limit: Duration },
    #[error("sandbox i/o failed: {0}")]
    Io(#[from] std::io::Error),
}

pub trait SandboxProcess: Send {
    fn exec(&mut self, code: &str, timeout: Duration) -> Result<ExecOutput, SandboxError>;
}

pub trait SandboxBackend: Send + Sync {
    /// Starts a fresh guest whose working directory is `workdir`.
    fn start(
        &self,
        runtime: Runtime,
        workdir: &Path,
    ) -> Result<Box<dyn SandboxProcess>, SandboxError>;
}

pub struct SandboxSession {
    pub session_id: String,
    pub runtime: Runtime,
    process: Box<dyn SandboxProcess>,
}

impl fmt::Debug for SandboxSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SandboxSession")
            .field("session_id", &self.session_id)
            .field("runtime", &self.runtime)
            .finish_non_exhaustive()
    }
}

impl SandboxSession {
    pub fn open(
        backend: &dyn SandboxBackend,
        session_id: impl Into<String>,
        runtime: Runtime,
        workdir: &Path,
    ) -> Result<Self, SandboxError> {
        Ok(Self {
            session_id: session_id.into(),
            runtime,
            process: backend.start(runtime, workdir)?,
        })
    }
}

/// The sandboxes of one specialist task, opened lazily per runtime.
pub struct SandboxSessions {
    backend: Arc<dyn SandboxBackend>,
    workdir: PathBuf,
    timeout: Duration,
    scope: String,
    open: BTreeMap<Runtime, SandboxSession>,
}

impl fmt::Debug for SandboxSessions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SandboxSessions")
            .field("workdir", &self.workdir)
            .field("scope", &self.scope)
            .field("open", &self.open.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl SandboxSessions {
    pub fn new(backend: Arc<dyn SandboxBackend>, workdir: PathBuf) -> Self {
        Self {
            backend,
            workdir,
            timeout: DEFAULT_TIMEOUT,
            scope: String::new(),
            open: BTreeMap::new(),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Closes every open sandbox and names the next ones after `scope`.
    pub fn reset(&mut self, scope: impl Into<String>) {
        self.open.clear();
        self.scope = scope.into();
    }

    pub fn session(&mut self, runtime: Runtime) -> Result<&mut SandboxSession, SandboxError> {
        if !self.open.contains_key(&runtime) {
            let id = format!("{}:{}", self.scope, runtime);
            let s = SandboxSession::open(self.backend.as_ref(), id, runtime, &self.workdir)?;
            self.open.insert(runtime, s);
        }
        Ok(self.open.get_mut(&runtime).expect("inserted above"))
    }

    /// Runs code in the runtime's session, opening it if needed. A timed-out
    /// guest is discarded so the next call starts fresh.
    pub fn exec(
        &mut self,
        runtime: Runtime,
        code: &str,
        artifacts: &ArtifactStore,
    ) -> Result<ToolResult, SandboxError> {
        let timeout = self.timeout;
        let session = self.session(runtime)?;
        let result = sandbox_exec(session, code, timeout, artifacts);
        if matches!(result, Err(SandboxError::Timeout { .. })) {
            self.open.remove(&runtime);
        }
        result
    }
}

/// Executes code and packages the output as a tool result, storing each
/// emitted image as a PNG artifact.
pub fn sandbox_exec(
    session: &mut SandboxSession,
    code: &str,
    timeout: Duration,
    artifacts: &ArtifactStore,
) -> Result<ToolResult, SandboxError> {
    let out = session.process.exec(code, timeout)?;
    let mut attachments = Vec::new();
    let mut text = out.stdout.clone();
    if !out.stderr.is_empty() {
        text.push_str(&out.stderr);
    }
    for png in out.images.iter().filter(|b| !b.is_empty()) {
        let name = artifacts.fresh_name("png");
        artifacts.write(&name, png)?;
        if !text.is_empty() && !text.ends_with('\n') {
            text.push('\n');
        }
        text.push_str(&format!("[image: {name}]\n"));
        attachments.push(Attachment {
            kind: AttachmentKind::Image,
            reference: name,
            media_type: "image/png".into(),
        });
    }
    Ok(match out.error {
        None => ToolResult::success(ToolOutput { text, attachments }),
        Some(err) => {
            if !text.is_empty() && !text.ends_with('\n') {
                text.push('\n');
            }
            text.push_str(&err);
            ToolResult {
                text,
                attachments,
                ok: false,
                error: Some(err.lines().last().unwrap_or_default().to_string()),
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sessions(dir: &Path) -> SandboxSessions {
        SandboxSessions::new(Arc::new(StubBackend), dir.to_path_buf())
    }

    #[test]
    fn definitions_persist_within_a_session_only() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::seeded(dir.path(), 3).unwrap();
        let mut a = sessions(dir.path());
        a.reset("task-1");
        assert!(a.exec(Runtime::Python, "a = 41", &store).unwrap().ok);
        let r = a.exec(Runtime::Python, "print(a + 1)", &store).unwrap();
        assert!(r.text.contains("42"));
        assert_eq!(
            a.session(Runtime::Python).unwrap().session_id,
            "task-1:python"
        );

        // R is a separate guest
        let r = a.exec(Runtime::R, "print(a)", &store).unwrap();
        assert!(!r.ok);

        let mut b = sessions(dir.path());
        let r = b.exec(Runtime::Python, "print(a)", &store).unwrap();
        assert!(!r.ok);
        assert_eq!(
            r.error.as_deref(),
            Some("NameError: name 'a' is not defined")
        );

        a.reset("task-2");
        assert!(!a.exec(Runtime::Python, "print(a)", &store).unwrap().ok);
    }

    #[test]
    fn images_are_stored_as_attachments() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::seeded(dir.path(), 3).unwrap();
        let mut s = sessions(dir.path());
        let r = s.exec(Runtime::Python, "figure('x')", &store).unwrap();
        assert!(r.ok);
        assert_eq!(r.attachments.len(), 1);
        let att = &r.attachments[0];
        assert_eq!(att.kind, AttachmentKind::Image);
        assert!(att.reference.ends_with(".png"));
        assert!(!store.read(&att.reference).unwrap().is_empty());
        assert!(r.text.contains(&att.reference));
    }

    #[test]
    fn syntax_errors_are_code_errors() {
        let dir = tempfile::tempdir().unwrap();
        let store = ArtifactStore::seeded(dir.path(), 3).unwrap();
        let mut s = sessions(dir.path());
        let r = s.exec(Runtime::Python, "x = = 1", &store).unwrap();
        assert!(!r.ok);
        assert!(r.error.unwrap().starts_with("SyntaxError"));
    }
}
