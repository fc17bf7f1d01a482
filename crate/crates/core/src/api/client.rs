use reqwest::blocking::{Client, Response};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use super::{
    BrushRequest, CreateSessionRequest, ErrorBody, FillRequest, GenerateResponse, LayerResponse, PromptRequest,
    RateRequest, SessionRef, TickRequest, TickResponse, WeightRequest,
};
use crate::session::{Command, CommandOutput, EditCommand, SessionSummary};
use crate::study::{ReplayScript, ScriptDriver};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server answered {status} {code}: {message}")]
    Api { status: u16, code: String, message: String },
    #[error("no session created yet")]
    NoSession,
}

/// Drives a session hosted by a remote server, one request per command.
#[derive(Debug)]
pub struct HttpDriver {
    base: String,
    client: Client,
    session: Option<String>,
}

impl HttpDriver {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpDriver {
            base: base_url.into().trim_end_matches('/').to_string(),
            client: Client::new(),
            session: None,
        }
    }

    pub fn session_id(&self) -> Option<&str> {
        self.session.as_deref()
    }

    fn url(&self, path: &str) -> Result<String, ClientError> {
        let id = self.session.as_ref().ok_or(ClientError::NoSession)?;
        Ok(format!("{}/sessions/{id}{path}", self.base))
    }

    fn check(resp: Response) -> Result<Response, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().unwrap_or_default();
        let (code, message) = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(b) => (b.code, b.message),
            Err(_) => ("unknown".to_string(), text),
        };
        Err(ClientError::Api {
            status: status.as_u16(),
            code,
            message,
        })
    }

    fn post<B: Serialize + ?Sized>(&self, path: &str, body: &B) -> Result<Response, ClientError> {
        Self::check(self.client.post(self.url(path)?).json(body).send()?)
    }

    fn post_empty(&self, path: &str) -> Result<Response, ClientError> {
        Self::check(self.client.post(self.url(path)?).send()?)
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Ok(Self::check(self.client.get(self.url(path)?).send()?)?.json()?)
    }

    /// Raw JSONL event log of the current session.
    pub fn log_text(&self) -> Result<String, ClientError> {
        Ok(Self::check(self.client.get(self.url("/log")?).send()?)?.text()?)
    }
}

impl ScriptDriver for HttpDriver {
    type Error = ClientError;

    fn create(&mut self, script: &ReplayScript) -> Result<(), ClientError> {
        let c = script.config;
        let body = CreateSessionRequest {
            workflow: script.workflow.to_string(),
            width: Some(script.width),
            height: Some(script.height),
            seed: script.seed,
            cadence_ms: Some(c.cadence_ms),
            persistence: Some(c.persistence),
            influence_weight: Some(c.influence_weight),
            background: Some(c.background),
        };
        let resp = Self::check(self.client.post(format!("{}/sessions", self.base)).json(&body).send()?)?;
        let info: SessionRef = resp.json()?;
        self.session = Some(info.id);
        Ok(())
    }

    fn apply(&mut self, command: Command) -> Result<CommandOutput, ClientError> {
        let mut out = CommandOutput::default();
        match command {
            Command::SetPrompt { text } => {
                self.post("/prompt", &PromptRequest { text })?;
            }
            Command::SetWeight { weight } => {
                self.post("/weight", &WeightRequest { weight })?;
            }
            Command::Generate => {
                let r: GenerateResponse = self.post_empty("/generate")?.json()?;
                out.candidates.push(r.candidate);
            }
            Command::StartParallel => {
                self.post_empty("/parallel/start")?;
            }
            Command::StopParallel => {
                self.post_empty("/parallel/stop")?;
            }
            Command::Tick { now_ms } => {
                let r: TickResponse = self.post("/tick", &TickRequest { now_ms })?.json()?;
                out.candidates = r.candidates;
            }
            Command::Import { candidate } => {
                let r: LayerResponse = self.post_empty(&format!("/import/{candidate}"))?.json()?;
                out.layer = Some(r.layer);
            }
            Command::Rate { measure, score } => {
                self.post("/rate", &RateRequest { measure, score })?;
            }
            Command::Edit { edit } => match edit {
                EditCommand::AddLayer => {
                    let r: LayerResponse = self.post_empty("/layers")?.json()?;
                    out.layer = Some(r.layer);
                }
                EditCommand::Brush {
                    layer,
                    x,
                    y,
                    radius,
                    color,
                } => {
                    self.post(&format!("/layers/{layer}/brush"), &BrushRequest { x, y, radius, color })?;
                }
                EditCommand::Fill {
                    layer,
                    x0,
                    y0,
                    x1,
                    y1,
                    color,
                } => {
                    self.post(&format!("/layers/{layer}/fill"), &FillRequest { x0, y0, x1, y1, color })?;
                }
                EditCommand::Props { layer, props } => {
                    self.post(&format!("/layers/{layer}/props"), &props)?;
                }
            },
        }
        Ok(out)
    }

    fn summary(&mut self) -> Result<SessionSummary, ClientError> {
        self.get("")
    }
}
