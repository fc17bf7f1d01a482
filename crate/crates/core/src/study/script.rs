//! Timed replay scripts and their runner.
//!
//! A script is a JSON document:
//!
//! ```json
//! {"name": "t1-w1", "workflow": "W1", "width": 256, "height": 256, "seed": "42",
//!  "events": [{"at": 0, "action": "set_prompt", "text": "..."},
//!             {"at": 1500, "action": "generate"}]}
//! ```
//!
//! Before each action whose `at` lies past the session clock, the runner
//! issues a tick to `at`, so background candidates land exactly where a
//! live session would produce them.

use std::error::Error as StdError;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hash::Digest64;
use crate::layers::{LayerId, LayerProps};
use crate::raster::Rgba;
use crate::session::{
    Command, CommandOutput, EditCommand, Measure, ModeHistogram, Session, SessionConfig, SessionError, SessionSummary,
    WorkflowKind, DEFAULT_CANVAS,
};

/// Sessions are bounded at fifteen minutes of virtual time.
pub const TIME_LIMIT_MS: u64 = 15 * 60 * 1000;

type BoxError = Box<dyn StdError + Send + Sync>;

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("script json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("event {event}: {message}")]
    Invalid { event: usize, message: String },
    #[error("session setup failed: {0}")]
    Setup(#[source] BoxError),
    #[error("event {event} ({action}): {source}")]
    Command {
        event: usize,
        action: &'static str,
        #[source]
        source: BoxError,
    },
    #[error("collecting the outcome failed: {0}")]
    Outcome(#[source] BoxError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ScriptAction {
    SetPrompt {
        text: String,
    },
    SetWeight {
        weight: f64,
    },
    Generate,
    StartParallel,
    StopParallel,
    /// Advance the clock to the event's `at`.
    Tick,
    AddLayer,
    Brush {
        layer: LayerId,
        x: i64,
        y: i64,
        radius: u32,
        color: Rgba,
    },
    Fill {
        layer: LayerId,
        x0: i64,
        y0: i64,
        x1: i64,
        y1: i64,
        color: Rgba,
    },
    Props {
        layer: LayerId,
        #[serde(flatten)]
        props: LayerProps,
    },
    Import {
        candidate: u64,
    },
    Rate {
        measure: Measure,
        score: i64,
    },
}

impl ScriptAction {
    pub fn name(&self) -> &'static str {
        match self {
            ScriptAction::SetPrompt { .. } => "set_prompt",
            ScriptAction::SetWeight { .. } => "set_weight",
            ScriptAction::Generate => "generate",
            ScriptAction::StartParallel => "start_parallel",
            ScriptAction::StopParallel => "stop_parallel",
            ScriptAction::Tick => "tick",
            ScriptAction::AddLayer => "add_layer",
            ScriptAction::Brush { .. } => "brush",
            ScriptAction::Fill { .. } => "fill",
            ScriptAction::Props { .. } => "props",
            ScriptAction::Import { .. } => "import",
            ScriptAction::Rate { .. } => "rate",
        }
    }

    fn to_command(&self, at: u64) -> Command {
        match self.clone() {
            ScriptAction::SetPrompt { text } => Command::SetPrompt { text },
            ScriptAction::SetWeight { weight } => Command::SetWeight { weight },
            ScriptAction::Generate => Command::Generate,
            ScriptAction::StartParallel => Command::StartParallel,
            ScriptAction::StopParallel => Command::StopParallel,
            ScriptAction::Tick => Command::Tick { now_ms: at },
            ScriptAction::AddLayer => Command::Edit {
                edit: EditCommand::AddLayer,
            },
            ScriptAction::Brush {
                layer,
                x,
                y,
                radius,
                color,
            } => Command::Edit {
                edit: EditCommand::Brush {
                    layer,
                    x,
                    y,
                    radius,
                    color,
                },
            },
            ScriptAction::Fill {
                layer,
                x0,
                y0,
                x1,
                y1,
                color,
            } => Command::Edit {
                edit: EditCommand::Fill {
                    layer,
                    x0,
                    y0,
                    x1,
                    y1,
                    color,
                },
            },
            ScriptAction::Props { layer, props } => Command::Edit {
                edit: EditCommand::Props { layer, props },
            },
            ScriptAction::Import { candidate } => Command::Import { candidate },
            ScriptAction::Rate { measure, score } => Command::Rate { measure, score },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptEvent {
    /// Virtual milliseconds since session start.
    pub at: u64,
    #[serde(flatten)]
    pub action: ScriptAction,
}

fn default_width() -> u32 {
    DEFAULT_CANVAS.0
}

fn default_height() -> u32 {
    DEFAULT_CANVAS.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayScript {
    pub name: String,
    pub workflow: WorkflowKind,
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height: u32,
    #[serde(with = "crate::hash::u64_string")]
    pub seed: u64,
    #[serde(default)]
    pub config: SessionConfig,
    #[serde(default)]
    pub events: Vec<ScriptEvent>,
}

impl ReplayScript {
    pub fn from_json(text: &str) -> Result<Self, ScriptError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Static checks: non-decreasing timestamps within the time limit and
    /// actions the workflow supports.
    pub fn validate(&self) -> Result<(), ScriptError> {
        let mut last = 0;
        for (event, e) in self.events.iter().enumerate() {
            let invalid = |message: String| ScriptError::Invalid { event, message };
            if e.at < last {
                return Err(invalid(format!("timestamp {} precedes {}", e.at, last)));
            }
            if e.at > TIME_LIMIT_MS {
                return Err(invalid(format!("timestamp {} exceeds the {TIME_LIMIT_MS} ms limit", e.at)));
            }
            last = e.at;
            match (&e.action, self.workflow) {
                (ScriptAction::SetWeight { .. }, WorkflowKind::W1) => {
                    return Err(invalid("set_weight is not available in W1".into()))
                }
                (ScriptAction::StartParallel | ScriptAction::StopParallel, w) if w != WorkflowKind::W3 => {
                    return Err(invalid(format!("{} is not available in {w}", e.action.name())))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Deterministic per-run metrics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub name: String,
    pub workflow: WorkflowKind,
    pub final_digest: Digest64,
    pub cache_size: usize,
    pub import_count: usize,
    pub provenance_depth: usize,
    pub mode_histogram: ModeHistogram,
    pub duration_ms: u64,
    pub latent_digests: Vec<Digest64>,
    pub log_len: usize,
}

impl SessionOutcome {
    pub fn from_summary(name: impl Into<String>, s: SessionSummary) -> Self {
        SessionOutcome {
            name: name.into(),
            workflow: s.workflow,
            final_digest: s.final_digest,
            cache_size: s.cache_size,
            import_count: s.import_count,
            provenance_depth: s.provenance_depth,
            mode_histogram: s.mode_histogram,
            duration_ms: s.clock,
            latent_digests: s.latent_digests,
            log_len: s.log_len,
        }
    }
}

/// Anything that can host a session: the in-process orchestrator or a
/// remote service.
pub trait ScriptDriver {
    type Error: StdError + Send + Sync + 'static;

    fn create(&mut self, script: &ReplayScript) -> Result<(), Self::Error>;
    fn apply(&mut self, command: Command) -> Result<CommandOutput, Self::Error>;
    fn summary(&mut self) -> Result<SessionSummary, Self::Error>;
}

/// Drives an in-process [`Session`].
#[derive(Debug, Default)]
pub struct EmbeddedDriver {
    session: Option<Session>,
}

impl EmbeddedDriver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn session(&self) -> Option<&Session> {
        self.session.as_ref()
    }

    pub fn into_session(self) -> Option<Session> {
        self.session
    }

    fn live(&mut self) -> &mut Session {
        self.session.as_mut().expect("create runs before any command")
    }
}

impl ScriptDriver for EmbeddedDriver {
    type Error = SessionError;

    fn create(&mut self, script: &ReplayScript) -> Result<(), SessionError> {
        self.session = Some(Session::create(
            script.workflow,
            script.width,
            script.height,
            script.seed,
            script.config,
        )?);
        Ok(())
    }

    fn apply(&mut self, command: Command) -> Result<CommandOutput, SessionError> {
        self.live().apply(command)
    }

    fn summary(&mut self) -> Result<SessionSummary, SessionError> {
        Ok(self.live().summary())
    }
}

pub fn run_script_with<D: ScriptDriver>(script: &ReplayScript, driver: &mut D) -> Result<SessionOutcome, ScriptError> {
    script.validate()?;
    driver.create(script).map_err(|e| ScriptError::Setup(Box::new(e)))?;
    let mut clock = 0;
    for (event, e) in script.events.iter().enumerate() {
        let fail = |source: D::Error| ScriptError::Command {
            event,
            action: e.action.name(),
            source: Box::new(source),
        };
        if e.at > clock && e.action != ScriptAction::Tick {
            driver.apply(Command::Tick { now_ms: e.at }).map_err(fail)?;
        }
        clock = clock.max(e.at);
        driver.apply(e.action.to_command(e.at)).map_err(fail)?;
    }
    let summary = driver.summary().map_err(|e| ScriptError::Outcome(Box::new(e)))?;
    Ok(SessionOutcome::from_summary(&script.name, summary))
}

/// Runs a script against a fresh in-process session.
pub fn run_script(script: &ReplayScript) -> Result<SessionOutcome, ScriptError> {
    run_script_with(script, &mut EmbeddedDriver::new())
}

/// The nine bundled task scripts, tasks T1-T3 by workflows W1-W3.
pub const BUNDLED_SCRIPTS: [(&str, &str); 9] = [
    ("t1-w1", include_str!("../../scripts/t1-w1.json")),
    ("t1-w2", include_str!("../../scripts/t1-w2.json")),
    ("t1-w3", include_str!("../../scripts/t1-w3.json")),
    ("t2-w1", include_str!("../../scripts/t2-w1.json")),
    ("t2-w2", include_str!("../../scripts/t2-w2.json")),
    ("t2-w3", include_str!("../../scripts/t2-w3.json")),
    ("t3-w1", include_str!("../../scripts/t3-w1.json")),
    ("t3-w2", include_str!("../../scripts/t3-w2.json")),
    ("t3-w3", include_str!("../../scripts/t3-w3.json")),
];

pub fn bundled_scripts() -> Vec<ReplayScript> {
    BUNDLED_SCRIPTS
        .iter()
        .map(|(name, text)| ReplayScript::from_json(text).unwrap_or_else(|e| panic!("bundled script {name}: {e}")))
        .collect()
}

pub fn bundled_script(name: &str) -> Option<ReplayScript> {
    BUNDLED_SCRIPTS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| ReplayScript::from_json(text).unwrap_or_else(|e| panic!("bundled script {n}: {e}")))
}
