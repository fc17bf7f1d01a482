//! HTTP/JSON front door for sessions.
//!
//! Every command endpoint locks its session, runs exactly one orchestrator
//! operation and, when a data directory is configured, persists the session
//! before answering. The event stream is a read-only view of the log: a
//! client passes the last index it has seen and receives everything after
//! it, so reconnecting never loses frames.

mod client;
mod error;
mod server;

pub use client::{ClientError, HttpDriver};
pub use error::{ApiError, ErrorBody};
pub use server::{load_sessions, router, serve, AppState, ServerConfig, TickMode};

use serde::{Deserialize, Serialize};

use crate::hash::Digest64;
use crate::layers::{Layer, LayerId, LayerOrigin};
use crate::raster::Rgba;
use crate::session::{CandidateMeta, Measure, WorkflowKind};

/// Body of `POST /sessions`. Unset fields fall back to server defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub workflow: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
    #[serde(default, with = "crate::hash::u64_string")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cadence_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub persistence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub influence_weight: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background: Option<Rgba>,
}

/// Public handle of a hosted session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRef {
    pub id: String,
    /// Unix milliseconds.
    pub created_at: u64,
    pub workflow: WorkflowKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightRequest {
    #[serde(alias = "w")]
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TickRequest {
    pub now_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRequest {
    pub measure: Measure,
    pub score: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BrushRequest {
    pub x: i64,
    pub y: i64,
    pub radius: u32,
    pub color: Rgba,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FillRequest {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
    pub color: Rgba,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub candidate: u64,
    pub latent_digest: Digest64,
    pub image_digest: Digest64,
    pub image_url: String,
    /// Base64 PNG, only when the server runs with inline images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_png_base64: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TickResponse {
    pub candidates: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerResponse {
    pub layer: LayerId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    #[serde(flatten)]
    pub meta: CandidateMeta,
    pub image_url: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerView {
    pub id: LayerId,
    pub opacity: f64,
    pub visible: bool,
    pub origin: LayerOrigin,
}

impl From<&Layer> for LayerView {
    fn from(l: &Layer) -> Self {
        LayerView {
            id: l.id,
            opacity: l.opacity,
            visible: l.visible,
            origin: l.origin,
        }
    }
}

/// URL path of a candidate's PNG.
pub fn candidate_image_path(session: &str, candidate: u64) -> String {
    format!("/candidates/{session}_{candidate}.png")
}
