use std::future::Future;
use std::sync::Arc;

use crisisbot::classifier::{CalibrationReport, ClassifyError};
use crisisbot::corpus::{load_catalog, CorpusError, DEFAULT_VALIDATION_FRACTION};
use crisisbot::datastore::{Store, StoreError, UnansweredLog};
use crisisbot::dialogue::connector::{RegistryError, ServiceRegistry};
use crisisbot::dialogue::{DialogueError, Engine};
use crisisbot::embednet::{load_model, model_version, ArtifactError};
use crisisbot::pipeline::{calibrate_catalog, PipelineError};

use crate::config::{ConfigError, GatewayConfig};
use crate::platform::{MessengerSimulator, SIMULATOR_PLATFORM};
use crate::Gateway;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("model: {0}")]
    Model(#[from] ArtifactError),
    #[error("catalog: {0}")]
    Catalog(#[from] CorpusError),
    #[error("services: {0}")]
    Services(#[from] RegistryError),
    #[error("calibration: {0}")]
    Calibration(#[from] ClassifyError),
    #[error("calibration: {0}")]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Engine(#[from] DialogueError),
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone)]
pub struct LoadedEngine {
    pub engine: Arc<Engine>,
    pub model_version: String,
}

impl LoadedEngine {
    pub fn new(engine: Engine) -> Self {
        let model_version = model_version(engine.model());
        Self { engine: Arc::new(engine), model_version }
    }
}

/// Threshold: explicit value, else a calibration report, else recalibrated
/// on the held-out split recreated from the model's seed.
pub fn load_engine(cfg: &GatewayConfig) -> Result<LoadedEngine, LoadError> {
    let model = load_model(cfg.model_path()?)?;
    let catalog = load_catalog(cfg.catalog_path()?)?;
    let registry = match &cfg.services {
        Some(path) => ServiceRegistry::load(path)?,
        None => ServiceRegistry::default(),
    };
    let threshold = match (cfg.threshold, &cfg.calibration) {
        (Some(t), _) => t,
        (None, Some(path)) => CalibrationReport::read(path)?.threshold,
        (None, None) => calibrate_catalog(&catalog, &model, DEFAULT_VALIDATION_FRACTION)?.threshold,
    };
    std::fs::create_dir_all(&cfg.data_dir)?;
    let sink = Arc::new(UnansweredLog::in_dir(&cfg.data_dir));
    let engine = Engine::new(model, threshold, catalog, registry, sink)?;
    Ok(LoadedEngine::new(engine))
}

/// Binds, starts answering health checks right away, loads the engine in
/// the background and serves until `shutdown` resolves. A load failure
/// stops the server and is returned.
pub async fn serve(cfg: GatewayConfig, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), LoadError> {
    std::fs::create_dir_all(&cfg.data_dir)?;
    let store = Arc::new(Store::open(&cfg.data_dir)?);
    let gateway = Gateway::builder(store)
        .webhook_secret(cfg.webhook_secret.clone())
        .adapter(SIMULATOR_PLATFORM, Arc::new(MessengerSimulator::new()))
        .static_dir(cfg.static_dir.clone())
        .build();
    let listener = tokio::net::TcpListener::bind(&cfg.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);

    let (failed_tx, failed_rx) = tokio::sync::oneshot::channel::<LoadError>();
    let loading = gateway.clone();
    tokio::spawn(async move {
        match tokio::task::spawn_blocking(move || load_engine(&cfg)).await {
            Ok(Ok(loaded)) => {
                log::info!("engine ready: model {} threshold {}", loaded.model_version, loaded.engine.threshold());
                loading.install(loaded);
            }
            Ok(Err(e)) => {
                let _ = failed_tx.send(e);
            }
            Err(e) => log::error!("engine loader panicked: {e}"),
        }
    });

    let failure = Arc::new(std::sync::Mutex::new(None));
    let record = failure.clone();
    let stop = async move {
        tokio::select! {
            _ = shutdown => {}
            Ok(e) = failed_rx => {
                log::error!("engine failed to load: {e}");
                *record.lock().unwrap() = Some(e);
            }
        }
    };
    axum::serve(listener, gateway.router()).with_graceful_shutdown(stop).await?;
    let failure = failure.lock().unwrap().take();
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
