//! Building a [`SessionService`] from paths and a provider choice.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use copilot_core::lake::{DataLake, LakeError};
use copilot_core::llm::{LiveProvider, Script, ScriptError};
use copilot_core::orchestrator::Limits;
use copilot_core::rag::{Corpus, RagError};
use copilot_core::session::{
    ProviderSource, ServiceConfig, SessionError, SessionService, SessionStore,
};
use copilot_core::toolkit::{ProcessBackend, SandboxBackend, StandardTools, StubBackend};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderChoice {
    Scripted(PathBuf),
    /// Reads `PROVIDER_ENDPOINT` and `PROVIDER_KEY`.
    Live,
    /// Read-only use: any turn fails with a provider error.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SandboxChoice {
    Stub,
    Process,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub session_dir: PathBuf,
    pub artifact_dir: PathBuf,
    /// Directory of `<table>.csv` files; an empty lake when absent.
    pub lake_path: Option<PathBuf>,
    /// Corpus JSON or JSONL; an empty corpus when absent.
    pub corpus_path: Option<PathBuf>,
    pub provider: ProviderChoice,
    pub sandbox: SandboxChoice,
    pub budget: Option<u32>,
}

#[derive(Debug, Error)]
pub enum BootError {
    #[error("data lake: {0}")]
    Lake(#[from] LakeError),
    #[error("corpus: {0}")]
    Corpus(#[from] RagError),
    #[error("script {path}: {source}")]
    Script { path: PathBuf, source: ScriptError },
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("PROVIDER_ENDPOINT is not set")]
    NoEndpoint,
    #[error("budget must be positive")]
    Budget,
    #[error(transparent)]
    Session(#[from] SessionError),
}

fn load_script(path: &Path) -> Result<Script, BootError> {
    let text = std::fs::read_to_string(path).map_err(|source| BootError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    Script::from_jsonl(&text).map_err(|source| BootError::Script {
        path: path.to_path_buf(),
        source,
    })
}

impl Settings {
    pub fn build(&self) -> Result<SessionService, BootError> {
        let lake = match &self.lake_path {
            Some(p) => DataLake::load_fixture(p)?,
            None => DataLake::empty()?,
        };
        let corpus = match &self.corpus_path {
            Some(p) => Corpus::load(p)?,
            None => Corpus::new(Vec::new())?,
        };
        let provider = match &self.provider {
            ProviderChoice::Scripted(path) => {
                ProviderSource::Scripted(Arc::new(load_script(path)?))
            }
            ProviderChoice::Live => ProviderSource::Shared(Arc::new(
                LiveProvider::from_env().ok_or(BootError::NoEndpoint)?,
            )),
            ProviderChoice::Disabled => ProviderSource::Scripted(Arc::new(Script::new(Vec::new()))),
        };
        let rag_provider = match &provider {
            ProviderSource::Shared(p) => Some(Arc::clone(p)),
            ProviderSource::Scripted(_) => None,
        };
        let tools = StandardTools {
            lake: Arc::new(lake),
            corpus: Arc::new(corpus),
            rag_provider,
            julia: false,
        }
        .registry();
        let sandbox_backend: Arc<dyn SandboxBackend> = match self.sandbox {
            SandboxChoice::Stub => Arc::new(StubBackend),
            SandboxChoice::Process => Arc::new(ProcessBackend::default()),
        };
        let mut limits = Limits::default();
        if let Some(b) = self.budget {
            if b == 0 {
                return Err(BootError::Budget);
            }
            limits.budget = b;
        }
        std::fs::create_dir_all(&self.artifact_dir).map_err(|source| BootError::Read {
            path: self.artifact_dir.clone(),
            source,
        })?;
        let store = SessionStore::open(&self.session_dir)?;
        Ok(SessionService::new(
            store,
            ServiceConfig {
                provider,
                tools: Arc::new(tools),
                artifact_dir: self.artifact_dir.clone(),
                sandbox_backend,
                limits,
            },
        ))
    }
}
