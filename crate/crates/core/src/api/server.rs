use std::collections::{BTreeMap, VecDeque};
use std::convert::Infallible;
use std::fs;
use std::future::Future;
use std::io;
use std::path::{Path as FsPath, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine as _;
use futures::Stream;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tokio::sync::{watch, Mutex};

use super::{
    candidate_image_path, ApiError, BrushRequest, CandidateView, CreateSessionRequest, FillRequest, GenerateResponse,
    LayerResponse, LayerView, PromptRequest, RateRequest, SessionRef, TickRequest, TickResponse, WeightRequest,
};
use crate::layers::{LayerId, LayerProps};
use crate::persist::{load_session, persist_session};
use crate::raster::encode_png;
use crate::session::{
    CandidateMeta, EditCommand, Session, SessionConfig, SessionError, SessionEvent, SessionSummary, WorkflowKind,
    DEFAULT_CADENCE_MS, DEFAULT_CANVAS,
};

/// Largest accepted canvas side.
pub const MAX_CANVAS_SIDE: u32 = 4096;

const SESSION_META: &str = "session.json";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TickMode {
    /// The clock only moves on explicit tick requests.
    #[default]
    Manual,
    /// A background task advances each running loop with wall time.
    Wall,
}

impl FromStr for TickMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "manual" => Ok(TickMode::Manual),
            "wall" => Ok(TickMode::Wall),
            _ => Err(format!("tick mode must be wall or manual, got {s:?}")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub data_dir: Option<PathBuf>,
    pub tick_mode: TickMode,
    pub cadence_ms: u64,
    pub canvas: (u32, u32),
    /// Embed candidate PNGs as base64 in generate responses.
    pub inline_images: bool,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            data_dir: None,
            tick_mode: TickMode::Manual,
            cadence_ms: DEFAULT_CADENCE_MS,
            canvas: DEFAULT_CANVAS,
            inline_images: false,
        }
    }
}

struct Slot {
    info: SessionRef,
    session: Mutex<Session>,
    /// Current log length; bumped after every command for stream wakeups.
    log_len: watch::Sender<usize>,
    /// Wall instant corresponding to virtual time 0.
    wall_origin: Instant,
}

struct Inner {
    config: ServerConfig,
    sessions: RwLock<BTreeMap<String, Arc<Slot>>>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn unix_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn parse_id(raw: &str, what: &str) -> Result<u64, ApiError> {
    raw.parse()
        .map_err(|_| ApiError::bad_request(format!("{what} id must be an unsigned integer, got {raw:?}")))
}

impl AppState {
    pub fn new(config: ServerConfig) -> Self {
        AppState {
            inner: Arc::new(Inner {
                config,
                sessions: RwLock::new(BTreeMap::new()),
            }),
        }
    }

    /// State pre-populated with previously persisted sessions.
    pub fn with_sessions(config: ServerConfig, sessions: Vec<(SessionRef, Session)>) -> Self {
        let state = Self::new(config);
        for (info, session) in sessions {
            state.insert(info, session);
        }
        state
    }

    pub fn config(&self) -> &ServerConfig {
        &self.inner.config
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.inner.sessions.read().expect("session map lock").keys().cloned().collect()
    }

    fn insert(&self, info: SessionRef, session: Session) -> Arc<Slot> {
        let back = Duration::from_millis(session.clock());
        let now = Instant::now();
        let slot = Arc::new(Slot {
            log_len: watch::Sender::new(session.log().len()),
            wall_origin: now.checked_sub(back).unwrap_or(now),
            session: Mutex::new(session),
            info: info.clone(),
        });
        self.inner
            .sessions
            .write()
            .expect("session map lock")
            .insert(info.id, slot.clone());
        slot
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.inner
            .sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }

    fn session_dir(&self, id: &str) -> Option<PathBuf> {
        self.inner.config.data_dir.as_ref().map(|d| d.join(id))
    }

    fn persist(&self, slot: &Slot, session: &Session) -> Result<(), ApiError> {
        if let Some(dir) = self.session_dir(&slot.info.id) {
            persist_session(session, &dir)?;
        }
        Ok(())
    }

    /// Runs one command under the session lock, then persists and wakes
    /// stream subscribers.
    async fn command<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session) -> Result<T, SessionError>,
    ) -> Result<T, ApiError> {
        let slot = self.slot(id)?;
        let mut session = slot.session.lock().await;
        let out = f(&mut session)?;
        self.persist(&slot, &session)?;
        slot.log_len.send_replace(session.log().len());
        Ok(out)
    }

    async fn query<T>(&self, id: &str, f: impl FnOnce(&Session) -> T) -> Result<T, ApiError> {
        let slot = self.slot(id)?;
        let session = slot.session.lock().await;
        Ok(f(&session))
    }

    fn create(&self, req: CreateSessionRequest) -> Result<SessionRef, ApiError> {
        let workflow: WorkflowKind = req
            .workflow
            .parse()
            .map_err(|e: String| ApiError::new(StatusCode::BAD_REQUEST, "invalid_workflow", e))?;
        let cfg = &self.inner.config;
        let width = req.width.unwrap_or(cfg.canvas.0);
        let height = req.height.unwrap_or(cfg.canvas.1);
        if width > MAX_CANVAS_SIDE || height > MAX_CANVAS_SIDE {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "invalid_dims",
                format!("canvas sides are limited to {MAX_CANVAS_SIDE}, got {width}x{height}"),
            ));
        }
        let defaults = SessionConfig::default();
        let config = SessionConfig {
            cadence_ms: req.cadence_ms.unwrap_or(cfg.cadence_ms),
            persistence: req.persistence.unwrap_or(defaults.persistence),
            background: req.background.unwrap_or(defaults.background),
            influence_weight: req.influence_weight.unwrap_or(defaults.influence_weight),
        };
        let session = Session::create(workflow, width, height, req.seed, config)?;
        let info = SessionRef {
            id: uuid::Uuid::new_v4().simple().to_string(),
            created_at: unix_ms(),
            workflow,
        };
        if let Some(dir) = self.session_dir(&info.id) {
            persist_session(&session, &dir)?;
            let meta = serde_json::to_vec_pretty(&info).expect("session ref serializes");
            fs::write(dir.join(SESSION_META), meta)
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "persist_failed", e.to_string()))?;
        }
        self.insert(info.clone(), session);
        Ok(info)
    }

    /// One pass of the wall-clock driver: every running loop whose next
    /// boundary has passed is ticked to the current wall offset.
    pub async fn wall_tick(&self) {
        let slots: Vec<Arc<Slot>> = self.inner.sessions.read().expect("session map lock").values().cloned().collect();
        for slot in slots {
            let now = slot.wall_origin.elapsed().as_millis() as u64;
            let mut session = slot.session.lock().await;
            let due = session.next_boundary().is_some_and(|b| b <= now) && now >= session.clock();
            if !due {
                continue;
            }
            match session.tick(now) {
                Ok(_) => {
                    if let Err(e) = self.persist(&slot, &session) {
                        tracing::warn!(session = %slot.info.id, error = %e.message, "persist after wall tick failed");
                    }
                    slot.log_len.send_replace(session.log().len());
                }
                Err(e) => tracing::warn!(session = %slot.info.id, error = %e, "wall tick failed"),
            }
        }
    }
}

/// Loads every persisted session under `data_dir`. Directories that fail
/// to replay are skipped with a warning.
pub fn load_sessions(data_dir: &FsPath) -> io::Result<Vec<(SessionRef, Session)>> {
    let mut out = Vec::new();
    if !data_dir.exists() {
        return Ok(out);
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(data_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(SESSION_META).is_file())
        .collect();
    dirs.sort();
    for dir in dirs {
        let info: SessionRef = match fs::read(dir.join(SESSION_META)).map_err(|e| e.to_string()).and_then(|raw| {
            serde_json::from_slice(&raw).map_err(|e| e.to_string())
        }) {
            Ok(info) => info,
            Err(e) => {
                tracing::warn!(dir = %dir.display(), error = %e, "skipping session with unreadable metadata");
                continue;
            }
        };
        match load_session(&dir) {
            Ok(session) => out.push((info, session)),
            Err(e) => tracing::warn!(dir = %dir.display(), error = %e, "skipping session that failed to load"),
        }
    }
    Ok(out)
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(session_summary))
        .route("/sessions/{id}/prompt", post(set_prompt))
        .route("/sessions/{id}/weight", post(set_weight))
        .route("/sessions/{id}/generate", post(generate))
        .route("/sessions/{id}/parallel/start", post(start_parallel))
        .route("/sessions/{id}/parallel/stop", post(stop_parallel))
        .route("/sessions/{id}/tick", post(tick))
        .route("/sessions/{id}/candidates", get(list_candidates))
        .route("/sessions/{id}/import/{cid}", post(import_candidate))
        .route("/sessions/{id}/layers", get(list_layers).post(add_layer))
        .route("/sessions/{id}/layers/{lid}/brush", post(brush))
        .route("/sessions/{id}/layers/{lid}/fill", post(fill))
        .route("/sessions/{id}/layers/{lid}/props", post(props))
        .route("/sessions/{id}/snapshot.png", get(snapshot))
        .route("/sessions/{id}/log", get(log))
        .route("/sessions/{id}/rate", post(rate))
        .route("/sessions/{id}/events", get(events))
        .route("/candidates/{file}", get(candidate_png))
        .with_state(state)
}

/// Serves until `shutdown` resolves. In wall tick mode a driver task
/// advances running loops alongside.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    let ticker = (state.config().tick_mode == TickMode::Wall).then(|| {
        let state = state.clone();
        let period = Duration::from_millis((state.config().cadence_ms / 4).clamp(10, 250));
        tokio::spawn(async move {
            let mut interval = tokio::time::interval(period);
            loop {
                interval.tick().await;
                state.wall_tick().await;
            }
        })
    });
    let result = axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await;
    if let Some(t) = ticker {
        t.abort();
    }
    result
}

fn png_response(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn create_session(State(st): State<AppState>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let req: CreateSessionRequest = parse(&body)?;
    let info = st.create(req)?;
    Ok((StatusCode::CREATED, Json(info)))
}

async fn list_sessions(State(st): State<AppState>) -> Json<Vec<SessionRef>> {
    let sessions = st.inner.sessions.read().expect("session map lock");
    Json(sessions.values().map(|s| s.info.clone()).collect())
}

async fn session_summary(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionSummary>, ApiError> {
    Ok(Json(st.query(&id, Session::summary).await?))
}

async fn set_prompt(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<StatusCode, ApiError> {
    let req: PromptRequest = parse(&body)?;
    st.command(&id, |s| {
        s.set_prompt(req.text);
        Ok(())
    })
    .await?;
    Ok(StatusCode::OK)
}

async fn set_weight(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<StatusCode, ApiError> {
    let req: WeightRequest = parse(&body)?;
    st.command(&id, |s| s.set_weight(req.weight)).await?;
    Ok(StatusCode::OK)
}

async fn generate(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<GenerateResponse>, ApiError> {
    let inline = st.config().inline_images;
    let (meta, png) = st
        .command(&id, |s| {
            let cid = s.turn_generate()?;
            let c = s.candidate(cid).expect("fresh candidate is cached");
            let png = if inline { Some(encode_png(&c.image).map_err(crate::layers::LayerError::from)?) } else { None };
            Ok((CandidateMeta::from(c), png))
        })
        .await?;
    Ok(Json(GenerateResponse {
        candidate: meta.id,
        latent_digest: meta.latent_digest,
        image_digest: meta.image_digest,
        image_url: candidate_image_path(&id, meta.id),
        image_png_base64: png.map(|b| base64::engine::general_purpose::STANDARD.encode(b)),
    }))
}

async fn start_parallel(State(st): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    st.command(&id, Session::start_parallel).await?;
    Ok(StatusCode::OK)
}

async fn stop_parallel(State(st): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    st.command(&id, Session::stop_parallel).await?;
    Ok(StatusCode::OK)
}

async fn tick(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<TickResponse>, ApiError> {
    let req: TickRequest = parse(&body)?;
    let candidates = st.command(&id, |s| s.tick(req.now_ms)).await?;
    Ok(Json(TickResponse { candidates }))
}

async fn list_candidates(
    State(st): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Vec<CandidateView>>, ApiError> {
    let metas = st.query(&id, |s| s.cache().iter().map(CandidateMeta::from).collect::<Vec<_>>()).await?;
    Ok(Json(
        metas
            .into_iter()
            .map(|meta| CandidateView {
                image_url: candidate_image_path(&id, meta.id),
                meta,
            })
            .collect(),
    ))
}

async fn candidate_png(State(st): State<AppState>, Path(file): Path<String>) -> Result<Response, ApiError> {
    let bad = || ApiError::not_found(format!("no candidate image {file:?}"));
    let stem = file.strip_suffix(".png").ok_or_else(bad)?;
    let (sid, cid) = stem.rsplit_once('_').ok_or_else(bad)?;
    let cid: u64 = cid.parse().map_err(|_| bad())?;
    let image = st
        .query(sid, |s| s.candidate(cid).map(|c| c.image.clone()))
        .await?
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_candidate", format!("unknown candidate {cid}")))?;
    let png = encode_png(&image).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "encode", e.to_string()))?;
    Ok(png_response(png))
}

async fn import_candidate(
    State(st): State<AppState>,
    Path((id, cid)): Path<(String, String)>,
) -> Result<Json<LayerResponse>, ApiError> {
    let cid = parse_id(&cid, "candidate")?;
    let layer = st.command(&id, |s| s.import_candidate(cid)).await?;
    Ok(Json(LayerResponse { layer }))
}

async fn list_layers(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<Vec<LayerView>>, ApiError> {
    Ok(Json(st.query(&id, |s| s.canvas().layers().iter().map(LayerView::from).collect()).await?))
}

async fn add_layer(State(st): State<AppState>, Path(id): Path<String>) -> Result<Json<LayerResponse>, ApiError> {
    let layer = st
        .command(&id, |s| s.edit(EditCommand::AddLayer))
        .await?
        .expect("add_layer always creates a layer");
    Ok(Json(LayerResponse { layer }))
}

async fn edit(st: &AppState, id: &str, command: EditCommand) -> Result<StatusCode, ApiError> {
    st.command(id, |s| s.edit(command)).await?;
    Ok(StatusCode::OK)
}

async fn brush(
    State(st): State<AppState>,
    Path((id, lid)): Path<(String, String)>,
    body: Bytes,
) -> Result<StatusCode, ApiError> {
    let layer = LayerId(parse_id(&lid, "layer")?);
    let r: BrushRequest = parse(&body)?;
    let command = EditCommand::Brush {
        layer,
        x: r.x,
        y: r.y,
        radius: r.radius,
        color: r.color,
    };
    edit(&st, &id, command).await
}

async fn fill(
    State(st): State<AppState>,
    Path((id, lid)): Path<(String, String)>,
    body: Bytes,
) -> Result<StatusCode, ApiError> {
    let layer = LayerId(parse_id(&lid, "layer")?);
    let r: FillRequest = parse(&body)?;
    let command = EditCommand::Fill {
        layer,
        x0: r.x0,
        y0: r.y0,
        x1: r.x1,
        y1: r.y1,
        color: r.color,
    };
    edit(&st, &id, command).await
}

async fn props(
    State(st): State<AppState>,
    Path((id, lid)): Path<(String, String)>,
    body: Bytes,
) -> Result<StatusCode, ApiError> {
    let layer = LayerId(parse_id(&lid, "layer")?);
    let props: LayerProps = parse(&body)?;
    edit(&st, &id, EditCommand::Props { layer, props }).await
}

async fn snapshot(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let flat = st.query(&id, Session::flatten).await?;
    let png = encode_png(&flat).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "encode", e.to_string()))?;
    Ok(png_response(png))
}

async fn log(State(st): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let text = st
        .query(&id, |s| {
            let mut out = String::new();
            for e in s.log() {
                out.push_str(&e.to_json_line());
                out.push('\n');
            }
            out
        })
        .await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text).into_response())
}

async fn rate(State(st): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<StatusCode, ApiError> {
    let req: RateRequest = parse(&body)?;
    st.command(&id, |s| s.record_rating(req.measure, req.score)).await?;
    Ok(StatusCode::OK)
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    /// Last index the client has already seen.
    from: Option<u64>,
}

fn frame(event: &SessionEvent) -> Event {
    Event::default()
        .id(event.index.to_string())
        .event(event.body.kind())
        .data(event.to_json_line())
}

async fn events(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let slot = st.slot(&id)?;
    let last_seen = match q.from {
        Some(v) => Some(v),
        None => headers
            .get("last-event-id")
            .and_then(|v| v.to_str().ok())
            .map(|v| v.trim().parse().map_err(|_| ApiError::bad_request(format!("bad Last-Event-ID {v:?}"))))
            .transpose()?,
    };
    let next = last_seen.map_or(0, |v| v as usize + 1);
    let rx = slot.log_len.subscribe();
    let stream = futures::stream::unfold(
        (slot, rx, next, VecDeque::new()),
        |(slot, mut rx, mut next, mut pending)| async move {
            loop {
                if let Some(event) = pending.pop_front() {
                    return Some((Ok(frame(&event)), (slot, rx, next, pending)));
                }
                {
                    let session = slot.session.lock().await;
                    let log = session.log();
                    if next < log.len() {
                        pending.extend(log[next..].iter().cloned());
                        next = log.len();
                        continue;
                    }
                }
                if rx.changed().await.is_err() {
                    return None;
                }
            }
        },
    );
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}
