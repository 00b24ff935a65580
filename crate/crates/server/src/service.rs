//! HTTP session service.
//!
//! A session holds an uploaded composite, mask and optional ground truth,
//! the fitted stack and the last adjustment. Each session lives in its own
//! directory under the session root:
//!
//! ```text
//! <root>/<id>/composite.{png,ppm}  mask.{png,ppm}  gt.{png,ppm}
//! <root>/<id>/stack.dccf           params.json
//! ```
//!
//! Fits hold the session's write lock, so previews of that session wait for
//! the fit to finish. A second fit on a busy session gets 409.

use std::collections::HashMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dccf::image::fit_within;
use dccf::io::{decode_image, decode_mask, decode_stack, encode_png, encode_stack, write_atomic, ImageFormat};
use dccf::{fit, render_adjusted, Adjustment, Error, FilterStack, FitConfig, LossMode, Mask, RgbImage};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::RwLock;
use tower_http::cors::CorsLayer;

pub const PREVIEW_MAX_SIDE: usize = 512;
const UPLOAD_LIMIT: usize = 256 << 20;

/// JSON error body `{code, message}` with an HTTP status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id}"))
    }

    fn not_fitted() -> Self {
        Self::new(StatusCode::CONFLICT, "not_fitted", "session has no fitted stack")
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(e) => ApiError::internal(e.to_string()),
            Error::NonFinite { .. } => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "numerical", e.to_string()),
            other => ApiError::bad_request(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "code": self.code, "message": self.message }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

/// Persisted session metadata.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Params {
    soft_mask: bool,
    composite_file: String,
    mask_file: String,
    gt_file: Option<String>,
    #[serde(default)]
    adjustment: Adjustment,
    #[serde(default)]
    fit: Option<FitRequest>,
    #[serde(default)]
    report: Option<Value>,
}

struct Session {
    dir: PathBuf,
    composite: RgbImage,
    preview: RgbImage,
    gt: Option<RgbImage>,
    mask: Mask,
    stack: Option<FilterStack>,
    params: Params,
}

impl Session {
    fn fitted(&self) -> ApiResult<&FilterStack> {
        self.stack.as_ref().ok_or_else(ApiError::not_fitted)
    }

    fn save_params(&self) -> ApiResult<()> {
        let text = serde_json::to_vec_pretty(&self.params).expect("params serialize");
        write_atomic(&self.dir.join("params.json"), &text)?;
        Ok(())
    }

    fn load(dir: &Path) -> dccf::Result<Self> {
        let params: Params = serde_json::from_slice(&fs::read(dir.join("params.json"))?)
            .map_err(|e| Error::CorruptHeader(format!("params.json: {e}")))?;
        let composite = decode_image(&fs::read(dir.join(&params.composite_file))?)?;
        let mask = decode_mask(&fs::read(dir.join(&params.mask_file))?, params.soft_mask)?;
        let gt = match &params.gt_file {
            Some(f) => Some(decode_image(&fs::read(dir.join(f))?)?),
            None => None,
        };
        let stack_path = dir.join("stack.dccf");
        let stack = if stack_path.exists() { Some(decode_stack(&fs::read(stack_path)?)?) } else { None };
        Ok(Self { dir: dir.to_path_buf(), preview: preview_of(&composite), composite, gt, mask, stack, params })
    }
}

fn preview_of(img: &RgbImage) -> RgbImage {
    let (w, h) = fit_within(img.dims(), PREVIEW_MAX_SIDE);
    if (w, h) == img.dims() {
        img.clone()
    } else {
        img.resize_area(w, h)
    }
}

struct Slot {
    fitting: AtomicBool,
    session: Arc<RwLock<Session>>,
}

/// Shared service state.
#[derive(Clone)]
pub struct AppState {
    root: PathBuf,
    sessions: Arc<RwLock<HashMap<String, Arc<Slot>>>>,
}

impl AppState {
    /// Opens `root`, creating it if needed and restoring every session
    /// found there. Unreadable session directories are skipped.
    pub fn open(root: impl Into<PathBuf>) -> dccf::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(&root)? {
            let entry = entry?;
            if !entry.file_type()?.is_dir() {
                continue;
            }
            let id = entry.file_name().to_string_lossy().into_owned();
            match Session::load(&entry.path()) {
                Ok(s) => {
                    sessions.insert(id, Arc::new(Slot { fitting: AtomicBool::new(false), session: Arc::new(RwLock::new(s)) }));
                }
                Err(e) => eprintln!("skipping session {id}: {e}"),
            }
        }
        Ok(Self { root, sessions: Arc::new(RwLock::new(sessions)) })
    }

    async fn slot(&self, id: &str) -> ApiResult<Arc<Slot>> {
        self.sessions.read().await.get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }

    pub async fn session_ids(&self) -> Vec<String> {
        self.sessions.read().await.keys().cloned().collect()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(session_info))
        .route("/sessions/{id}/fit", post(fit_session))
        .route("/sessions/{id}/preview", get(preview))
        .route("/sessions/{id}/adjust", post(adjust))
        .route("/sessions/{id}/export", get(export))
        .layer(DefaultBodyLimit::max(UPLOAD_LIMIT))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Binds `addr` and serves until the process is stopped.
pub async fn serve(addr: SocketAddr, session_dir: PathBuf) -> std::io::Result<()> {
    let state = AppState::open(session_dir).map_err(|e| std::io::Error::other(e.to_string()))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

fn png_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

fn file_name(stem: &str, bytes: &[u8]) -> ApiResult<String> {
    let ext = match ImageFormat::sniff(bytes)? {
        ImageFormat::Png => "png",
        ImageFormat::Ppm => "ppm",
    };
    Ok(format!("{stem}.{ext}"))
}

async fn create_session(State(state): State<AppState>, mut multipart: Multipart) -> ApiResult<Response> {
    let mut parts: HashMap<String, Bytes> = HashMap::new();
    while let Some(field) = multipart.next_field().await.map_err(|e| ApiError::bad_request(e.to_string()))? {
        let name = field.name().unwrap_or_default().to_owned();
        let data = field.bytes().await.map_err(|e| ApiError::bad_request(e.to_string()))?;
        parts.insert(name, data);
    }
    let composite_bytes = parts.remove("composite").ok_or_else(|| ApiError::bad_request("missing composite"))?;
    let mask_bytes = parts.remove("mask").ok_or_else(|| ApiError::bad_request("missing mask"))?;
    let gt_bytes = parts.remove("gt");
    let soft_mask = match parts.remove("soft") {
        Some(b) => matches!(b.as_ref(), b"1" | b"true"),
        None => false,
    };

    let composite = decode_image(&composite_bytes).map_err(|e| ApiError::bad_request(format!("composite: {e}")))?;
    let mask = decode_mask(&mask_bytes, soft_mask).map_err(|e| ApiError::bad_request(format!("mask: {e}")))?;
    if mask.dims() != composite.dims() {
        return Err(ApiError::bad_request(format!("mask is {:?}, composite is {:?}", mask.dims(), composite.dims())));
    }
    let gt = match &gt_bytes {
        Some(b) => {
            let gt = decode_image(b).map_err(|e| ApiError::bad_request(format!("gt: {e}")))?;
            if gt.dims() != composite.dims() {
                return Err(ApiError::bad_request(format!("gt is {:?}, composite is {:?}", gt.dims(), composite.dims())));
            }
            Some(gt)
        }
        None => None,
    };

    let id = uuid::Uuid::new_v4().simple().to_string();
    let dir = state.root.join(&id);
    fs::create_dir_all(&dir).map_err(|e| ApiError::internal(e.to_string()))?;
    let params = Params {
        soft_mask,
        composite_file: file_name("composite", &composite_bytes)?,
        mask_file: file_name("mask", &mask_bytes)?,
        gt_file: gt_bytes.as_ref().map(|b| file_name("gt", b)).transpose()?,
        ..Params::default()
    };
    write_atomic(&dir.join(&params.composite_file), &composite_bytes)?;
    write_atomic(&dir.join(&params.mask_file), &mask_bytes)?;
    if let (Some(f), Some(b)) = (&params.gt_file, &gt_bytes) {
        write_atomic(&dir.join(f), b)?;
    }
    let session = Session { dir, preview: preview_of(&composite), composite, gt, mask, stack: None, params };
    session.save_params()?;
    let slot = Arc::new(Slot { fitting: AtomicBool::new(false), session: Arc::new(RwLock::new(session)) });
    state.sessions.write().await.insert(id.clone(), slot);
    Ok((StatusCode::CREATED, Json(json!({ "id": id }))).into_response())
}

async fn session_info(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let slot = state.slot(&id).await?;
    let s = slot.session.read().await;
    Ok(Json(json!({
        "id": id,
        "width": s.composite.width(),
        "height": s.composite.height(),
        "preview_width": s.preview.width(),
        "preview_height": s.preview.height(),
        "has_gt": s.gt.is_some(),
        "fitted": s.stack.is_some(),
        "adjustment": s.params.adjustment,
        "report": s.params.report,
    })))
}

/// Body of `POST /sessions/{id}/fit`. Every field is optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitRequest {
    pub grid: usize,
    pub mode: LossMode,
    pub iters: usize,
    pub seed: u64,
}

impl Default for FitRequest {
    fn default() -> Self {
        let cfg = FitConfig::default();
        Self { grid: cfg.grid_w, mode: cfg.mode, iters: cfg.max_iters, seed: cfg.seed }
    }
}

fn parse_json<T: serde::de::DeserializeOwned + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid body: {e}")))
}

struct FitGuard<'a>(&'a AtomicBool);

impl Drop for FitGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

async fn fit_session(State(state): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let slot = state.slot(&id).await?;
    let req: FitRequest = parse_json(&body)?;
    if req.grid == 0 || req.iters == 0 {
        return Err(ApiError::bad_request("grid and iters must be positive"));
    }
    if slot.fitting.compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst).is_err() {
        return Err(ApiError::new(StatusCode::CONFLICT, "fit_running", "a fit is already running for this session"));
    }
    let _guard = FitGuard(&slot.fitting);
    let mut session = slot.session.clone().write_owned().await;
    if session.gt.is_none() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no_gt", "session has no ground truth"));
    }
    let cfg = FitConfig { grid_w: req.grid, grid_h: req.grid, mode: req.mode, max_iters: req.iters, seed: req.seed, ..FitConfig::default() };
    let report = tokio::task::spawn_blocking(move || -> ApiResult<Value> {
        let s = &mut *session;
        let gt = s.gt.as_ref().expect("checked above");
        let (stack, report) = fit(&s.composite, gt, &s.mask, &cfg)?;
        // serve exactly what is on disk
        let bytes = encode_stack(&stack);
        write_atomic(&s.dir.join("stack.dccf"), &bytes)?;
        s.stack = Some(decode_stack(&bytes)?);
        let json = report.to_json();
        s.params.adjustment = Adjustment::default();
        s.params.fit = Some(req);
        s.params.report = Some(json.clone());
        s.save_params()?;
        Ok(json)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(json!({ "report": report })))
}

#[derive(Debug, Deserialize)]
pub struct PreviewQuery {
    pub stage: Option<String>,
}

async fn preview(State(state): State<AppState>, UrlPath(id): UrlPath<String>, Query(q): Query<PreviewQuery>) -> ApiResult<Response> {
    let stage = match q.stage.as_deref() {
        None => 4,
        Some(s) => match s.parse::<usize>() {
            Ok(n) if (1..=4).contains(&n) => n,
            _ => return Err(ApiError::bad_request(format!("stage {s:?} outside 1..=4"))),
        },
    };
    let slot = state.slot(&id).await?;
    let session = slot.session.clone().read_owned().await;
    session.fitted()?;
    render(move || {
        let img = render_adjusted(&session.preview, session.fitted()?, &Adjustment::default(), stage)?;
        Ok(encode_png(&img)?)
    })
    .await
}

async fn adjust(State(state): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Response> {
    let adjustment: Adjustment = parse_json(&body)?;
    let slot = state.slot(&id).await?;
    let mut session = slot.session.clone().write_owned().await;
    adjustment.validate(session.fitted()?)?;
    let bytes = {
        let session = &mut *session;
        session.params.adjustment = adjustment.clone();
        session.save_params()?;
        let stack = session.fitted()?;
        let img = render_adjusted(&session.preview, stack, &adjustment, 4)?;
        encode_png(&img)?
    };
    drop(session);
    Ok(png_response(bytes))
}

async fn export(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let slot = state.slot(&id).await?;
    let session = slot.session.clone().read_owned().await;
    session.fitted()?;
    render(move || {
        let img = render_adjusted(&session.composite, session.fitted()?, &session.params.adjustment, 4)?;
        Ok(encode_png(&img)?)
    })
    .await
}

async fn render(job: impl FnOnce() -> ApiResult<Vec<u8>> + Send + 'static) -> ApiResult<Response> {
    let bytes = tokio::task::spawn_blocking(job).await.map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(png_response(bytes))
}
