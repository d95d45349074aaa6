use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use rand::rngs::StdRng;
use rand::SeedableRng;
use sensorlab_core::{
    compute_report, EngagementReport, EventRecord, ReplayError, ReportError, Repository, ScoringEngine, StorageError,
    Workflow,
};

use crate::error::ApiError;
use crate::gateway::{Gateway, GatewayConfig};
use crate::store::{SqlRepository, Store};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// SQLite file; `None` keeps everything in memory.
    pub db: Option<PathBuf>,
    pub photo_dir: PathBuf,
    pub session_ttl: chrono::Duration,
    pub gateway: GatewayConfig,
    pub engine: ScoringEngine,
}

impl ServiceConfig {
    pub fn new(db: Option<PathBuf>, photo_dir: PathBuf) -> Self {
        ServiceConfig {
            db,
            photo_dir,
            session_ttl: chrono::Duration::hours(24),
            gateway: GatewayConfig::default(),
            engine: ScoringEngine::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error("cannot open database: {0}")]
    Database(StorageError),
    #[error("cannot create photo directory {}: {source}", .path.display())]
    Photos { path: PathBuf, source: std::io::Error },
}

pub(crate) struct Inner {
    pub store: Mutex<Store>,
    pub workflow: Workflow,
    pub engine: ScoringEngine,
    pub gateway: Gateway,
    pub photo_dir: PathBuf,
    pub session_ttl: chrono::Duration,
    /// Join codes only; tokens and salts come from the OS generator.
    pub codes: Mutex<StdRng>,
}

impl Inner {
    pub fn store(&self) -> MutexGuard<'_, Store> {
        self.store.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Shared handle to the running service.
#[derive(Clone)]
pub struct AppState {
    pub(crate) inner: Arc<Inner>,
}

impl AppState {
    pub fn open(config: ServiceConfig, gateway: Gateway) -> Result<Self, StartError> {
        let store = match &config.db {
            Some(path) => Store::open(path),
            None => Store::in_memory(),
        }
        .map_err(StartError::Database)?;
        std::fs::create_dir_all(&config.photo_dir)
            .map_err(|source| StartError::Photos { path: config.photo_dir.clone(), source })?;
        Ok(AppState {
            inner: Arc::new(Inner {
                store: Mutex::new(store),
                workflow: Workflow::default(),
                engine: config.engine,
                gateway,
                photo_dir: config.photo_dir,
                session_ttl: config.session_ttl,
                codes: Mutex::new(StdRng::from_os_rng()),
            }),
        })
    }

    pub fn gateway(&self) -> &Gateway {
        &self.inner.gateway
    }

    /// Replays a log into the database in one transaction.
    pub fn load_log(&self, events: &[EventRecord]) -> Result<(), LoadError> {
        let inner = &self.inner;
        let mut store = inner.store();
        store.transaction(|tx| Ok::<_, LoadError>(inner.workflow.replay(&mut SqlRepository::new(tx), events)?))
    }

    pub fn export_log(&self) -> Result<Vec<EventRecord>, StorageError> {
        self.inner.store().repo().events()
    }

    /// The engagement report over everything stored.
    pub fn report(&self) -> Result<EngagementReport, LoadError> {
        let store = self.inner.store();
        let repo = store.repo();
        Ok(compute_report(&repo.events()?, &repo.inquiries()?, &self.inner.engine)?)
    }

    pub fn is_empty(&self) -> Result<bool, StorageError> {
        self.inner.store().is_empty()
    }

    /// Runs `f` against the store on the blocking pool.
    pub(crate) async fn read<T: Send + 'static>(
        &self,
        f: impl FnOnce(&Inner, &Store) -> Result<T, ApiError> + Send + 'static,
    ) -> Result<T, ApiError> {
        let inner = Arc::clone(&self.inner);
        tokio::task::spawn_blocking(move || {
            let store = inner.store();
            f(&inner, &store)
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
    }

    /// Runs `f` in one transaction on the blocking pool. Nothing it wrote
    /// survives an error.
    pub(crate) async fn write<T: Send + 'static>(
        &self,
        f: impl FnOnce(&Inner, &mut SqlRepository<'_>) -> Result<T, ApiError> + Send + 'static,
    ) -> Result<T, ApiError> {
        let inner = Arc::clone(&self.inner);
        tokio::task::spawn_blocking(move || {
            let mut store = inner.store();
            store.transaction(|tx| f(&inner, &mut SqlRepository::new(tx)))
        })
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Report(#[from] ReportError),
}
