use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context};
use fmea_core::generation::{ContextMode, GenerationServices, GenerationStepResult};
use fmea_core::index::VectorStore;
use fmea_core::ingestion::Ingestor;
use fmea_core::model::{GenerationStep, StudyId};
use fmea_core::persistence::Database;

use crate::config::{Config, Providers};

/// A generated result waiting for review, redeemable once by its token.
#[derive(Debug, Clone)]
pub struct Staged {
    pub token: String,
    pub result: GenerationStepResult,
    pub mode: ContextMode,
}

/// Shared handles for all requests. Cloning is cheap.
#[derive(Clone)]
pub struct AppState {
    pub(crate) inner: Arc<Inner>,
}

pub(crate) struct Inner {
    pub db: Arc<Database>,
    pub store: Arc<VectorStore>,
    pub store_path: Option<PathBuf>,
    pub ingestor: Ingestor,
    pub generation: GenerationServices,
    pub text_label: String,
    pub embedding_label: String,
    /// At most one staged result per (study, step); a newer generation
    /// replaces the older one and invalidates its token.
    pub staged: Mutex<HashMap<(StudyId, GenerationStep), Staged>>,
    study_locks: Mutex<HashMap<StudyId, Arc<tokio::sync::Mutex<()>>>>,
    /// Serializes ingestion so the store file is written by one request at a time.
    pub ingest_lock: Mutex<()>,
}

impl AppState {
    pub fn new(db: Database, store: VectorStore, store_path: Option<PathBuf>, providers: Providers) -> anyhow::Result<Self> {
        if store.dim() != providers.embedder.dim() {
            bail!("vector store holds {}-dim vectors but the embedder makes {}", store.dim(), providers.embedder.dim());
        }
        let db = Arc::new(db);
        let store = Arc::new(store);
        let mut generation =
            GenerationServices::new(providers.text.clone(), providers.embedder.clone(), store.clone(), db.clone());
        generation.templates = providers.templates.clone();
        generation.reformat_retry = true;
        Ok(Self {
            inner: Arc::new(Inner {
                ingestor: Ingestor::new(providers.text, providers.embedder),
                db,
                store,
                store_path,
                generation,
                text_label: providers.text_label,
                embedding_label: providers.embedding_label,
                staged: Mutex::new(HashMap::new()),
                study_locks: Mutex::new(HashMap::new()),
                ingest_lock: Mutex::new(()),
            }),
        })
    }

    /// Opens the database and vector store named in `config`.
    pub fn from_config(config: &Config) -> anyhow::Result<Self> {
        let providers = config.providers()?;
        let db = match &config.db_path {
            Some(p) => Database::open(p).with_context(|| format!("opening database {}", p.display()))?,
            None => Database::open_in_memory()?,
        };
        let store = match &config.vector_store_path {
            Some(p) if p.exists() => {
                VectorStore::load(p).with_context(|| format!("loading vector store {}", p.display()))?
            }
            _ => VectorStore::new(providers.embedder.dim()),
        };
        Self::new(db, store, config.vector_store_path.clone(), providers)
    }

    /// In-memory state, for tests and examples.
    pub fn in_memory(providers: Providers) -> anyhow::Result<Self> {
        let store = VectorStore::new(providers.embedder.dim());
        Self::new(Database::open_in_memory()?, store, None, providers)
    }

    pub fn database(&self) -> &Database {
        &self.inner.db
    }

    pub fn store(&self) -> &VectorStore {
        &self.inner.store
    }

    pub fn generation_services(&self) -> &GenerationServices {
        &self.inner.generation
    }

    pub fn set_generation_services(&mut self, f: impl FnOnce(&mut GenerationServices)) {
        let inner = Arc::get_mut(&mut self.inner).expect("configure before sharing the state");
        f(&mut inner.generation);
    }

    /// The lock that serializes generate and accept calls for one study.
    pub(crate) fn study_lock(&self, id: &StudyId) -> Arc<tokio::sync::Mutex<()>> {
        self.inner.study_locks.lock().unwrap().entry(id.clone()).or_default().clone()
    }
}
