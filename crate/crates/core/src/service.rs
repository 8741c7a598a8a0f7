//! HTTP/JSON service: dataset upload, recommendation, the blind study flow
//! and evaluation runs.
//!
//! Every error body has the shape `{"error": kind, "message": text}` plus
//! `raw_text` when a model response could not be parsed.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{AppConfig, ConfigError};
use crate::corpus::import_corpus;
use crate::dataset::{load_csv_with, sketch, ColumnType, DataTable, DatasetError, LoadOptions, TableSketch};
use crate::enrichment::CorpusTriple;
use crate::evallm::{comparison_table, evaluate_predictions, EvalConfig, EvalError, EvalReport, Prediction};
use crate::gateway::{sha256_hex, Gateway, GatewayError};
use crate::prompt::PromptForge;
use crate::recommend::{recommend, RecommendError, RecommendOutcome};
use crate::study::{Rating, StudyError, StudySample, StudyStore};

const BODY_LIMIT: usize = 64 * 1024 * 1024;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
    raw_text: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            kind,
            message: message.into(),
            raw_text: None,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({"error": self.kind, "message": self.message});
        if let Some(raw) = self.raw_text {
            body["raw_text"] = Value::String(raw);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<DatasetError> for ApiError {
    fn from(e: DatasetError) -> Self {
        let status = match e {
            DatasetError::TooLarge { .. } => StatusCode::PAYLOAD_TOO_LARGE,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, "DatasetError", e.to_string())
    }
}

impl From<GatewayError> for ApiError {
    fn from(e: GatewayError) -> Self {
        let (status, kind) = match e {
            GatewayError::BackendUnavailable { .. } => (StatusCode::SERVICE_UNAVAILABLE, "BackendUnavailable"),
            GatewayError::AuthError { .. } | GatewayError::MissingSecret(_) => (StatusCode::BAD_GATEWAY, "AuthError"),
            _ => (StatusCode::BAD_GATEWAY, "GatewayError"),
        };
        ApiError::new(status, kind, e.to_string())
    }
}

impl From<RecommendError> for ApiError {
    fn from(e: RecommendError) -> Self {
        match e {
            RecommendError::Gateway(g) => g.into(),
            RecommendError::Prompt(p) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "PromptError", p.to_string()),
            RecommendError::Response(r) => {
                let kind = match r {
                    crate::response::ResponseError::MissingSection { .. } => "MissingSection",
                    crate::response::ResponseError::SpecSyntaxError { .. } => "SpecSyntaxError",
                    crate::response::ResponseError::NoSpecFound { .. } => "NoSpecFound",
                };
                let mut err = ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, kind, r.to_string());
                err.raw_text = Some(r.raw_text().to_string());
                err
            }
        }
    }
}

impl From<StudyError> for ApiError {
    fn from(e: StudyError) -> Self {
        let (status, kind) = match e {
            StudyError::PoolExhausted { .. } => (StatusCode::CONFLICT, "PoolExhausted"),
            StudyError::NotAssigned { .. } => (StatusCode::FORBIDDEN, "NotAssigned"),
            StudyError::RangeError(_) => (StatusCode::UNPROCESSABLE_ENTITY, "RangeError"),
            StudyError::EmptyInput => (StatusCode::CONFLICT, "EmptyInput"),
            StudyError::UnknownSample(_) => (StatusCode::NOT_FOUND, "UnknownSample"),
            StudyError::DuplicateSample(_) => (StatusCode::CONFLICT, "DuplicateSample"),
            StudyError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "StorageError"),
        };
        ApiError::new(status, kind, e.to_string())
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        let status = match e {
            EvalError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, "EvalError", e.to_string())
    }
}

impl From<ConfigError> for ApiError {
    fn from(e: ConfigError) -> Self {
        let kind = match e {
            ConfigError::UnknownBackend(_) => "UnknownBackend",
            _ => "ConfigError",
        };
        ApiError::new(StatusCode::BAD_REQUEST, kind, e.to_string())
    }
}

fn storage_error(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "StorageError", e.to_string())
}

// -- datasets

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetEntry {
    id: String,
    name: String,
    #[serde(default)]
    column_types: BTreeMap<String, ColumnType>,
}

/// Uploaded tables: CSV files plus an append-only index under
/// `<data_dir>/datasets`.
#[derive(Debug)]
pub struct DatasetStore {
    dir: PathBuf,
    max_cells: usize,
    tables: RwLock<HashMap<String, Arc<DataTable>>>,
}

impl DatasetStore {
    pub fn open(dir: &Path, max_cells: usize) -> Result<Self, String> {
        fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        let store = DatasetStore {
            dir: dir.to_path_buf(),
            max_cells,
            tables: RwLock::new(HashMap::new()),
        };
        let index = dir.join("index.jsonl");
        if index.exists() {
            let text = fs::read_to_string(&index).map_err(|e| e.to_string())?;
            let mut tables = store.tables.write().unwrap();
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let entry: DatasetEntry = serde_json::from_str(line).map_err(|e| format!("{}: {e}", index.display()))?;
                let bytes = fs::read(dir.join(format!("{}.csv", entry.id))).map_err(|e| e.to_string())?;
                let table = load_csv_with(&bytes, &entry.name, &store.options(entry.column_types))
                    .map_err(|e| format!("dataset {}: {e}", entry.id))?;
                tables.insert(entry.id, Arc::new(table));
            }
        }
        Ok(store)
    }

    fn options(&self, column_types: BTreeMap<String, ColumnType>) -> LoadOptions {
        LoadOptions {
            max_cells: self.max_cells,
            type_overrides: column_types,
        }
    }

    /// Loads and stores a table. The id is a content hash, so uploading the
    /// same data twice returns the same id.
    pub fn insert(
        &self,
        name: &str,
        csv: &str,
        column_types: BTreeMap<String, ColumnType>,
    ) -> Result<(String, Arc<DataTable>), ApiError> {
        let mut key = format!("{name}\n");
        for (c, t) in &column_types {
            key.push_str(&format!("{c}={t}\n"));
        }
        key.push_str(csv);
        let id = sha256_hex(&key)[..16].to_string();
        if let Some(t) = self.get(&id) {
            return Ok((id, t));
        }
        let table = Arc::new(load_csv_with(csv.as_bytes(), name, &self.options(column_types.clone()))?);
        let mut tables = self.tables.write().unwrap();
        if !tables.contains_key(&id) {
            fs::write(self.dir.join(format!("{id}.csv")), csv).map_err(storage_error)?;
            let entry = DatasetEntry {
                id: id.clone(),
                name: name.to_string(),
                column_types,
            };
            let mut f = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(self.dir.join("index.jsonl"))
                .map_err(storage_error)?;
            writeln!(f, "{}", serde_json::to_string(&entry).map_err(storage_error)?).map_err(storage_error)?;
            tables.insert(id.clone(), table.clone());
        }
        Ok((id, table))
    }

    pub fn get(&self, id: &str) -> Option<Arc<DataTable>> {
        self.tables.read().unwrap().get(id).cloned()
    }
}

// -- state

pub struct AppState {
    config: AppConfig,
    forge: PromptForge,
    datasets: DatasetStore,
    gateways: Mutex<HashMap<String, Arc<Gateway>>>,
    study: StudyStore,
    truth: Option<Arc<Vec<CorpusTriple>>>,
    reports: Mutex<BTreeMap<String, EvalReport>>,
}

impl AppState {
    /// Opens the stores under the data directory, imports the configured
    /// corpus and loads the configured study pool.
    pub fn open(config: AppConfig) -> Result<Self, String> {
        let forge = config.forge().map_err(|e| e.to_string())?;
        let datasets = DatasetStore::open(&config.data_dir.join("datasets"), crate::dataset::DEFAULT_MAX_CELLS)?;
        let study = StudyStore::open(&config.data_dir.join("study"), config.study_seed).map_err(|e| e.to_string())?;
        if let Some(pool) = &config.study_pool {
            let samples = read_samples(pool)?;
            let known: std::collections::HashSet<String> = study.samples().into_iter().map(|s| s.id).collect();
            let fresh: Vec<StudySample> = samples.into_iter().filter(|s| !known.contains(&s.id)).collect();
            study.add_samples(fresh).map_err(|e| e.to_string())?;
        }
        let truth = match &config.corpus {
            Some(index) => {
                let imported = import_corpus(index).map_err(|e| e.to_string())?;
                if !imported.quarantined.is_empty() {
                    tracing::warn!(n = imported.quarantined.len(), "corpus records quarantined on import");
                }
                Some(Arc::new(imported.triples))
            }
            None => None,
        };
        Ok(AppState {
            config,
            forge,
            datasets,
            gateways: Mutex::new(HashMap::new()),
            study,
            truth,
            reports: Mutex::new(BTreeMap::new()),
        })
    }

    /// Ground truth for `/eval/run`, replacing whatever the config imported.
    pub fn with_truth(mut self, triples: Vec<CorpusTriple>) -> Self {
        self.truth = Some(Arc::new(triples));
        self
    }

    pub fn study(&self) -> &StudyStore {
        &self.study
    }

    pub fn datasets(&self) -> &DatasetStore {
        &self.datasets
    }

    fn gateway(&self, tag: &str) -> Result<Arc<Gateway>, ApiError> {
        let mut gateways = self.gateways.lock().unwrap();
        if let Some(g) = gateways.get(tag) {
            return Ok(g.clone());
        }
        let gw = Arc::new(Gateway::new(self.config.backend(tag)?)?);
        gateways.insert(tag.to_string(), gw.clone());
        Ok(gw)
    }
}

fn read_samples(path: &Path) -> Result<Vec<StudySample>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1)))
        .collect()
}

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/datasets", post(upload_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/recommend", post(post_recommend))
        .route("/study/next", get(study_next))
        .route("/study/rating", post(study_rating))
        .route("/study/summary", get(study_summary))
        .route("/study/samples", post(study_samples))
        .route("/eval/run", post(eval_run))
        .route("/eval/report", get(eval_report))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

/// Binds and serves until Ctrl-C.
pub async fn serve(state: AppState) -> std::io::Result<()> {
    let listen = state.config.listen.clone();
    let listener = tokio::net::TcpListener::bind(&listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(Arc::new(state)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

// -- handlers

#[derive(Debug, Deserialize)]
struct UploadBody {
    name: String,
    csv: String,
    #[serde(default)]
    column_types: BTreeMap<String, ColumnType>,
}

#[derive(Debug, Serialize)]
struct DatasetView {
    id: String,
    sketch: TableSketch,
}

async fn upload_dataset(State(st): State<Shared>, Json(body): Json<UploadBody>) -> Result<Response, ApiError> {
    let (id, table) = tokio::task::spawn_blocking(move || st.datasets.insert(&body.name, &body.csv, body.column_types))
        .await
        .map_err(storage_error)??;
    Ok((StatusCode::CREATED, Json(DatasetView { id, sketch: sketch(&table) })).into_response())
}

async fn get_dataset(State(st): State<Shared>, UrlPath(id): UrlPath<String>) -> Result<Json<DatasetView>, ApiError> {
    let table = st.datasets.get(&id).ok_or_else(|| dataset_not_found(&id))?;
    Ok(Json(DatasetView { id, sketch: sketch(&table) }))
}

fn dataset_not_found(id: &str) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "DatasetNotFound", format!("no dataset `{id}`"))
}

#[derive(Debug, Deserialize)]
struct RecommendBody {
    dataset_id: String,
    query: String,
    backend: String,
}

async fn post_recommend(State(st): State<Shared>, Json(body): Json<RecommendBody>) -> Result<Json<RecommendOutcome>, ApiError> {
    let table = st.datasets.get(&body.dataset_id).ok_or_else(|| dataset_not_found(&body.dataset_id))?;
    let gw = st.gateway(&body.backend)?;
    let out = tokio::task::spawn_blocking(move || recommend(&table, &body.query, &gw, &st.forge))
        .await
        .map_err(storage_error)??;
    Ok(Json(out))
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    participant: String,
}

async fn study_next(State(st): State<Shared>, Query(q): Query<NextQuery>) -> Result<Response, ApiError> {
    let item = st.study.next(&q.participant)?;
    Ok(Json(item).into_response())
}

async fn study_rating(State(st): State<Shared>, Json(rating): Json<Rating>) -> Result<Response, ApiError> {
    st.study.record_rating(rating)?;
    Ok(Json(json!({"ok": true})).into_response())
}

async fn study_summary(State(st): State<Shared>) -> Result<Response, ApiError> {
    Ok(Json(st.study.summary()?).into_response())
}

async fn study_samples(State(st): State<Shared>, Json(samples): Json<Vec<StudySample>>) -> Result<Response, ApiError> {
    let n = st.study.add_samples(samples)?;
    Ok((StatusCode::CREATED, Json(json!({"added": n}))).into_response())
}

#[derive(Debug, Deserialize)]
struct EvalBody {
    model: String,
    predictions: Vec<Prediction>,
    #[serde(default)]
    config: Option<EvalConfig>,
}

async fn eval_run(State(st): State<Shared>, Json(body): Json<EvalBody>) -> Result<Json<EvalReport>, ApiError> {
    let truth = st
        .truth
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "NoCorpus", "no ground-truth corpus configured"))?;
    let cfg = body.config.unwrap_or(st.config.eval);
    let (_, report) = evaluate_predictions(&body.model, &body.predictions, &truth, &cfg)?;
    st.reports.lock().unwrap().insert(report.model_name.clone(), report.clone());
    Ok(Json(report))
}

#[derive(Debug, Deserialize)]
struct ReportQuery {
    model: Option<String>,
}

async fn eval_report(State(st): State<Shared>, Query(q): Query<ReportQuery>) -> Result<Response, ApiError> {
    let reports = st.reports.lock().unwrap();
    match q.model {
        Some(m) => {
            let r = reports
                .get(&m)
                .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "NoReport", format!("no report for `{m}`")))?;
            Ok(Json(r).into_response())
        }
        None => {
            let list: Vec<EvalReport> = reports.values().cloned().collect();
            let table = if list.is_empty() { String::new() } else { comparison_table(&list) };
            Ok(Json(json!({"reports": list, "table": table})).into_response())
        }
    }
}
