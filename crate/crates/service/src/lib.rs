//! HTTP session API for playing against a human answerer.
//!
//! Each session wraps a [`Game`]. Question computation runs on the blocking
//! pool against a game clone; the session lock is only held to read or swap
//! state, never across an await. Every state transition is persisted to
//! `<run_dir>/sessions/<id>.json`, so a restarted service picks up where it
//! left off, re-running any computation that was in flight.

mod config;
mod error;

pub use config::parse_session_config;
pub use error::ApiError;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use infogain_core::acquisition::EstimatorKind;
use infogain_core::backend::{mix_seed, Backend};
use infogain_core::controller::{Fallback, Game, NoEvaluator, Outcome, SessionConfig};
use infogain_core::harness::BackendFactory;
use infogain_core::types::Answer;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    /// A question is pending and an answer may be submitted.
    AwaitingAnswer,
    /// The next question (or the first one) is being computed.
    Computing,
    Finished,
}

/// Persisted form of a session.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SessionFile {
    id: String,
    config: SessionConfig,
    status: SessionStatus,
    game: Option<Game>,
    /// The answer being applied while `Computing`; `None` while computing
    /// the first question.
    pending_answer: Option<Answer>,
    error: Option<String>,
}

struct Inner {
    run_dir: PathBuf,
    factory: Arc<dyn BackendFactory>,
    sessions: Mutex<HashMap<String, Arc<Mutex<SessionFile>>>>,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct Service {
    inner: Arc<Inner>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuestionView {
    pub id: String,
    pub text: String,
    pub options: Vec<OptionView>,
    pub guess: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptionView {
    pub label: String,
    pub text: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistoryEntry {
    pub question: String,
    pub answer_label: String,
    pub answer_text: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BeliefView {
    pub count: usize,
    pub hypotheses: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreView {
    pub question_id: String,
    pub text: String,
    pub score: Option<f64>,
    pub chosen: bool,
}

/// What a client sees of a session.
#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub id: String,
    pub status: SessionStatus,
    pub turn: usize,
    pub budget: usize,
    pub strategy: String,
    pub pending_question: Option<QuestionView>,
    pub history: Vec<HistoryEntry>,
    pub belief: BeliefView,
    pub estimator: Option<EstimatorKind>,
    pub scores: Vec<ScoreView>,
    pub fallbacks: Vec<Fallback>,
    pub outcome: Option<Outcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
struct Created {
    id: String,
    status: SessionStatus,
}

#[derive(Debug, Deserialize)]
struct AnswerBody {
    label: String,
}

fn snapshot(s: &SessionFile) -> Snapshot {
    let game = s.game.as_ref();
    let pending = game
        .and_then(|g| g.pending.as_ref())
        .filter(|_| s.status == SessionStatus::AwaitingAnswer);
    let history = game
        .map(|g| {
            g.history
                .pairs()
                .iter()
                .map(|(q, a)| {
                    let opt = &q.options[a.option_index];
                    HistoryEntry { question: q.text.clone(), answer_label: opt.label.clone(), answer_text: opt.text.clone() }
                })
                .collect()
        })
        .unwrap_or_default();
    let hypotheses = game.map(|g| g.belief.texts()).unwrap_or_default();
    Snapshot {
        id: s.id.clone(),
        status: s.status,
        turn: game.map_or(1, Game::turn),
        budget: s.config.budget,
        strategy: s.config.strategy.to_string(),
        pending_question: pending.map(|p| QuestionView {
            id: p.chosen.id.clone(),
            text: p.chosen.text.clone(),
            options: p
                .chosen
                .options
                .iter()
                .map(|o| OptionView { label: o.label.clone(), text: o.text.clone() })
                .collect(),
            guess: p.chosen.is_guess(),
        }),
        history,
        belief: BeliefView { count: hypotheses.len(), hypotheses },
        estimator: pending.and_then(|p| p.estimator),
        scores: pending
            .map(|p| {
                p.candidates
                    .iter()
                    .enumerate()
                    .map(|(i, c)| ScoreView {
                        question_id: c.question.id.clone(),
                        text: c.question.text.clone(),
                        score: c.score,
                        chosen: p.chosen_index == Some(i),
                    })
                    .collect()
            })
            .unwrap_or_default(),
        fallbacks: pending.map(|p| p.fallbacks.clone()).unwrap_or_default(),
        outcome: game.and_then(|g| g.outcome.clone()),
        error: s.error.clone(),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

/// Runs one computation: the first question when `game` is `None`,
/// otherwise applying `answer` and preparing the next question.
fn compute(
    factory: &dyn BackendFactory,
    config: &SessionConfig,
    game: Option<Game>,
    answer: Option<Answer>,
) -> Result<Game, String> {
    let turn = game.as_ref().map_or(0, |g| g.turns.len());
    let questioner: Box<dyn Backend> =
        factory.questioner(mix_seed(&[config.seed, turn as u64])).map_err(|e| e.to_string())?;
    let result = match (game, answer) {
        (None, _) => Game::start(config.clone(), None, questioner.as_ref()).map_err(|e| e.to_string()),
        (Some(mut g), Some(a)) => g.observe(a, questioner.as_ref(), &NoEvaluator).map(|_| g).map_err(|e| e.to_string()),
        (Some(g), None) => {
            let mut g = g;
            g.prepare(questioner.as_ref());
            Ok(g)
        }
    };
    // Blocking HTTP clients own a runtime that must not be torn down on a
    // thread tied to the async runtime.
    std::thread::spawn(move || drop(questioner));
    result
}

impl Service {
    /// Opens the run directory and loads any persisted sessions. Call
    /// [`Service::resume`] from inside the runtime to restart computations
    /// that were interrupted.
    pub fn new(run_dir: impl Into<PathBuf>, factory: Arc<dyn BackendFactory>) -> std::io::Result<Self> {
        let run_dir = run_dir.into();
        let dir = run_dir.join("sessions");
        std::fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path)?;
            match serde_json::from_str::<SessionFile>(&text) {
                Ok(s) => {
                    sessions.insert(s.id.clone(), Arc::new(Mutex::new(s)));
                }
                Err(e) => log::warn!("skipping unreadable session {}: {e}", path.display()),
            }
        }
        log::info!("loaded {} sessions from {}", sessions.len(), dir.display());
        Ok(Self { inner: Arc::new(Inner { run_dir, factory, sessions: Mutex::new(sessions) }) })
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/sessions", post(create_session))
            .route("/sessions/{id}", get(get_session))
            .route("/sessions/{id}/answer", post(submit_answer))
            .route("/sessions/{id}/transcript", get(get_transcript))
            .with_state(self.clone())
    }

    /// Restarts every computation that was in flight when the service
    /// last stopped.
    pub fn resume(&self) {
        let ids: Vec<String> = {
            let sessions = self.inner.sessions.lock().expect("sessions lock");
            sessions
                .iter()
                .filter(|(_, s)| s.lock().expect("session lock").status == SessionStatus::Computing)
                .map(|(id, _)| id.clone())
                .collect()
        };
        for id in ids {
            log::info!("resuming computation for session {id}");
            let svc = self.clone();
            tokio::spawn(async move { svc.run_computation(&id).await });
        }
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<SessionFile>>, ApiError> {
        self.inner
            .sessions
            .lock()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(id))
    }

    fn persist(&self, s: &SessionFile) {
        let path = self.inner.run_dir.join("sessions").join(format!("{}.json", s.id));
        let result = serde_json::to_vec_pretty(s)
            .map_err(std::io::Error::other)
            .and_then(|bytes| write_atomic(&path, &bytes));
        if let Err(e) = result {
            log::error!("failed to persist session {}: {e}", s.id);
        }
    }

    /// Runs the computation a `Computing` session is waiting on and stores
    /// the result.
    async fn run_computation(&self, id: &str) {
        let Ok(session) = self.session(id) else { return };
        let (config, game, answer) = {
            let s = session.lock().expect("session lock");
            if s.status != SessionStatus::Computing {
                return;
            }
            (s.config.clone(), s.game.clone(), s.pending_answer.clone())
        };
        let factory = self.inner.factory.clone();
        let result = tokio::task::spawn_blocking(move || compute(factory.as_ref(), &config, game, answer))
            .await
            .unwrap_or_else(|e| Err(format!("computation panicked: {e}")));
        let mut s = session.lock().expect("session lock");
        s.pending_answer = None;
        match result {
            Ok(game) => {
                s.status = if game.is_finished() { SessionStatus::Finished } else { SessionStatus::AwaitingAnswer };
                if let Some(Outcome::Aborted { error, .. }) = &game.outcome {
                    s.error = Some(error.clone());
                }
                s.game = Some(game);
            }
            Err(e) => {
                log::error!("session {id} failed: {e}");
                s.status = SessionStatus::Finished;
                s.error = Some(e);
            }
        }
        self.persist(&s);
    }
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return serde_json::from_str("null")
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", e.to_string()));
    }
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", e.to_string()))
}

async fn create_session(State(svc): State<Service>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let value: Value = parse_json(&body)?;
    let config = parse_session_config(&value).map_err(ApiError::invalid_config)?;
    let id = uuid::Uuid::new_v4().to_string();
    let file = SessionFile {
        id: id.clone(),
        config,
        status: SessionStatus::Computing,
        game: None,
        pending_answer: None,
        error: None,
    };
    svc.persist(&file);
    svc.inner
        .sessions
        .lock()
        .expect("sessions lock")
        .insert(id.clone(), Arc::new(Mutex::new(file)));
    log::info!("created session {id}");
    let bg = svc.clone();
    let bg_id = id.clone();
    tokio::spawn(async move { bg.run_computation(&bg_id).await });
    Ok((StatusCode::CREATED, Json(Created { id, status: SessionStatus::Computing })))
}

async fn get_session(State(svc): State<Service>, UrlPath(id): UrlPath<String>) -> Result<Json<Snapshot>, ApiError> {
    let session = svc.session(&id)?;
    let s = session.lock().expect("session lock");
    Ok(Json(snapshot(&s)))
}

/// Accepts an answer to the pending question, waits for the next question
/// to be computed, and returns the new snapshot.
async fn submit_answer(
    State(svc): State<Service>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> Result<Json<Snapshot>, ApiError> {
    let body: AnswerBody = parse_json(&body)?;
    let session = svc.session(&id)?;
    {
        let mut s = session.lock().expect("session lock");
        match s.status {
            SessionStatus::Computing => return Err(ApiError::conflict("a computation is already in progress")),
            SessionStatus::Finished => return Err(ApiError::conflict("the session has finished")),
            SessionStatus::AwaitingAnswer => {}
        }
        let pending = s
            .game
            .as_ref()
            .and_then(|g| g.pending.as_ref())
            .ok_or_else(|| ApiError::internal("awaiting an answer without a pending question"))?;
        let answer = pending.chosen.answer(&body.label).ok_or_else(|| {
            let labels: Vec<&str> = pending.chosen.options.iter().map(|o| o.label.as_str()).collect();
            ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "unknown_label",
                format!("label {:?} is not one of {labels:?}", body.label),
            )
        })?;
        s.status = SessionStatus::Computing;
        s.pending_answer = Some(answer);
        svc.persist(&s);
    }
    svc.run_computation(&id).await;
    let s = session.lock().expect("session lock");
    Ok(Json(snapshot(&s)))
}

/// The game record so far; `outcome` is null until the session finishes.
async fn get_transcript(State(svc): State<Service>, UrlPath(id): UrlPath<String>) -> Result<Json<Value>, ApiError> {
    let session = svc.session(&id)?;
    let s = session.lock().expect("session lock");
    let game = s
        .game
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "not_ready", "the first question is still being computed"))?;
    let mut record = serde_json::to_value(game.record()).map_err(|e| ApiError::internal(e.to_string()))?;
    if !game.is_finished() {
        record["outcome"] = Value::Null;
    }
    Ok(Json(record))
}

/// Serves the API on `addr` until the process is stopped.
pub async fn serve(service: Service, addr: std::net::SocketAddr) -> std::io::Result<()> {
    service.resume();
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, service.router()).await
}
