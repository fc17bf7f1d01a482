//! Per-session state machine for the three workflows.
//!
//! A session owns the artist's layer stack, the append-only candidate
//! cache, the W2 latent chain, the background-loop schedule and an
//! append-only event log. Every operation either fails without touching the
//! state or succeeds and appends its events. The virtual clock only moves on
//! [`Session::tick`]; everything else happens at the current clock.

mod event;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use event::{classify_cycle, EditCommand, EventBody, Measure, Origin, SessionEvent, WorkflowKind};

use crate::engine::{
    CycleMode, EngineError, GeneratedCandidate, GenerationBackend, GenerationRequest, LatentVector, ProceduralEngine,
    DEFAULT_PERSISTENCE, GRID,
};
use crate::hash::Digest64;
use crate::layers::{LayerError, LayerId, LayerOrigin, LayerStack};
use crate::provenance::{EdgeKind, NodeRef, ProvenanceError, ProvenanceGraph};
use crate::raster::{pixel_digest, RasterImage, Rgba};

pub const DEFAULT_CADENCE_MS: u64 = 2000;
pub const DEFAULT_INFLUENCE_WEIGHT: f64 = 0.5;
pub const DEFAULT_CANVAS: (u32, u32) = (512, 512);

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("canvas must be at least {GRID}x{GRID}, got {width}x{height}")]
    InvalidDims { width: u32, height: u32 },
    #[error("influence weight is pinned to 0 in W1")]
    WeightPinned,
    #[error("influence weight {0} outside [0, 1]")]
    InvalidWeight(f64),
    #[error("parallel mode is unavailable in {0}")]
    ModeUnavailable(WorkflowKind),
    #[error("clock cannot move back from {clock} to {now}")]
    ClockRegression { clock: u64, now: u64 },
    #[error("unknown candidate {0}")]
    UnknownCandidate(u64),
    #[error("rating {0} outside 1..=7")]
    RatingOutOfRange(i64),
    #[error("log entry {0} is not a CandidateReady event")]
    NotCandidateReady(u64),
    #[error("cadence must be positive")]
    InvalidCadence,
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Provenance(#[from] ProvenanceError),
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log is empty")]
    Empty,
    #[error("first event must be Create")]
    MissingCreate,
    #[error("event {index}: expected index {expected}")]
    IndexGap { index: u64, expected: u64 },
    #[error("event {index} does not match the replayed session")]
    Mismatch { index: u64 },
    #[error("event {index}: {source}")]
    Session {
        index: u64,
        #[source]
        source: SessionError,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub cadence_ms: u64,
    pub persistence: f64,
    pub background: Rgba,
    /// Starting influence weight for W2/W3; W1 is always 0.
    pub influence_weight: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            cadence_ms: DEFAULT_CADENCE_MS,
            persistence: DEFAULT_PERSISTENCE,
            background: Rgba::WHITE,
            influence_weight: DEFAULT_INFLUENCE_WEIGHT,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub measure: Measure,
    pub score: u8,
    pub workflow: WorkflowKind,
    pub at: u64,
}

#[derive(Clone, Copy, Debug)]
struct ParallelLoop {
    next_boundary: u64,
}

/// Serializable view of a cached candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateMeta {
    pub id: u64,
    pub created_at: u64,
    pub cycle_mode: CycleMode,
    pub prompt: String,
    #[serde(with = "crate::hash::u64_string")]
    pub seed: u64,
    pub influence_weight: f64,
    pub snapshot_digest: Option<Digest64>,
    pub prior_latent_digest: Option<Digest64>,
    pub latent_digest: Digest64,
    pub image_digest: Digest64,
    pub latent: LatentVector,
}

impl From<&GeneratedCandidate> for CandidateMeta {
    fn from(c: &GeneratedCandidate) -> Self {
        CandidateMeta {
            id: c.id,
            created_at: c.created_at,
            cycle_mode: c.cycle_mode,
            prompt: c.request.prompt.clone(),
            seed: c.request.seed,
            influence_weight: c.request.influence_weight,
            snapshot_digest: c.request.snapshot.as_deref().map(pixel_digest),
            prior_latent_digest: c.request.prior_latent.map(|l| l.digest()),
            latent_digest: c.latent.digest(),
            image_digest: pixel_digest(&c.image),
            latent: c.latent,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeHistogram {
    pub turn_taking: usize,
    pub parallel: usize,
}

/// Summary statistics of a session at its current state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub workflow: WorkflowKind,
    pub width: u32,
    pub height: u32,
    pub clock: u64,
    pub final_digest: Digest64,
    pub cache_size: usize,
    pub import_count: usize,
    pub provenance_depth: usize,
    pub mode_histogram: ModeHistogram,
    pub latent_digests: Vec<Digest64>,
    pub log_len: usize,
}

/// One state-changing request, as issued by scripts, the HTTP layer and
/// the C ABI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    SetPrompt { text: String },
    SetWeight { weight: f64 },
    Generate,
    StartParallel,
    StopParallel,
    Tick { now_ms: u64 },
    Edit { edit: EditCommand },
    Import { candidate: u64 },
    Rate { measure: Measure, score: i64 },
}

/// What a command produced.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommandOutput {
    pub candidates: Vec<u64>,
    pub layer: Option<LayerId>,
}

pub struct Session {
    workflow: WorkflowKind,
    config: SessionConfig,
    base_seed: u64,
    canvas: LayerStack,
    prompt: String,
    influence_weight: f64,
    seed_counter: u64,
    cache: Vec<GeneratedCandidate>,
    latent_chain: Option<LatentVector>,
    parallel: Option<ParallelLoop>,
    clock: u64,
    log: Vec<SessionEvent>,
    provenance: ProvenanceGraph,
    ratings: Vec<Rating>,
    next_snapshot: u64,
    backend: Arc<dyn GenerationBackend>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("workflow", &self.workflow)
            .field("clock", &self.clock)
            .field("cache", &self.cache.len())
            .field("layers", &self.canvas.len())
            .field("log", &self.log.len())
            .finish_non_exhaustive()
    }
}

impl Session {
    /// New session with the in-tree procedural engine.
    pub fn create(
        workflow: WorkflowKind,
        width: u32,
        height: u32,
        base_seed: u64,
        config: SessionConfig,
    ) -> Result<Self, SessionError> {
        let engine = ProceduralEngine::new(config.persistence)?;
        Self::with_backend(workflow, width, height, base_seed, config, Arc::new(engine))
    }

    pub fn with_backend(
        workflow: WorkflowKind,
        width: u32,
        height: u32,
        base_seed: u64,
        config: SessionConfig,
        backend: Arc<dyn GenerationBackend>,
    ) -> Result<Self, SessionError> {
        if width < GRID || height < GRID {
            return Err(SessionError::InvalidDims { width, height });
        }
        if config.cadence_ms == 0 {
            return Err(SessionError::InvalidCadence);
        }
        if !(0.0..=1.0).contains(&config.influence_weight) {
            return Err(SessionError::InvalidWeight(config.influence_weight));
        }
        if !(0.0..=1.0).contains(&config.persistence) {
            return Err(EngineError::PersistenceOutOfRange(config.persistence).into());
        }
        let influence_weight = match workflow {
            WorkflowKind::W1 => 0.0,
            _ => config.influence_weight,
        };
        let canvas = LayerStack::new(width, height, config.background);
        let mut session = Session {
            workflow,
            config,
            base_seed,
            prompt: String::new(),
            influence_weight,
            seed_counter: 0,
            cache: Vec::new(),
            latent_chain: None,
            parallel: None,
            clock: 0,
            log: Vec::new(),
            provenance: ProvenanceGraph::new(),
            ratings: Vec::new(),
            next_snapshot: 1,
            backend,
            canvas,
        };
        session.push(EventBody::Create {
            workflow,
            width,
            height,
            seed: base_seed,
            cadence_ms: config.cadence_ms,
            persistence: config.persistence,
            background: session.canvas.background(),
            influence_weight,
        });
        Ok(session)
    }

    pub fn workflow(&self) -> WorkflowKind {
        self.workflow
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn dims(&self) -> (u32, u32) {
        self.canvas.dims()
    }

    pub fn canvas(&self) -> &LayerStack {
        &self.canvas
    }

    pub fn prompt(&self) -> &str {
        &self.prompt
    }

    pub fn influence_weight(&self) -> f64 {
        self.influence_weight
    }

    pub fn seed_counter(&self) -> u64 {
        self.seed_counter
    }

    pub fn cache(&self) -> &[GeneratedCandidate] {
        &self.cache
    }

    pub fn candidate(&self, id: u64) -> Option<&GeneratedCandidate> {
        // ids are 1-based and dense
        id.checked_sub(1).and_then(|i| self.cache.get(i as usize))
    }

    pub fn latent_chain(&self) -> Option<&LatentVector> {
        self.latent_chain.as_ref()
    }

    pub fn parallel_running(&self) -> bool {
        self.parallel.is_some()
    }

    /// Virtual time of the next background generation, if the loop runs.
    pub fn next_boundary(&self) -> Option<u64> {
        self.parallel.map(|p| p.next_boundary)
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn log(&self) -> &[SessionEvent] {
        &self.log
    }

    pub fn provenance(&self) -> &ProvenanceGraph {
        &self.provenance
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn flatten(&self) -> RasterImage {
        self.canvas.flatten()
    }

    fn push(&mut self, body: EventBody) -> u64 {
        let index = self.log.len() as u64;
        self.log.push(SessionEvent {
            index,
            at: self.clock,
            body,
        });
        index
    }

    pub fn set_prompt(&mut self, text: impl Into<String>) {
        let text = text.into();
        self.prompt.clone_from(&text);
        self.push(EventBody::SetPrompt { text });
    }

    pub fn set_weight(&mut self, weight: f64) -> Result<(), SessionError> {
        if self.workflow == WorkflowKind::W1 {
            return Err(SessionError::WeightPinned);
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(SessionError::InvalidWeight(weight));
        }
        self.influence_weight = weight;
        self.push(EventBody::SetWeight { weight });
        Ok(())
    }

    fn next_seed(&self) -> u64 {
        self.base_seed.wrapping_add(self.seed_counter)
    }

    /// Builds the workflow's request. W3 attaches the current flatten only
    /// when the weight is non-zero; at zero the snapshot cannot affect the
    /// result.
    fn build_request(&self) -> GenerationRequest {
        let mut request = GenerationRequest::text(self.prompt.clone(), self.next_seed());
        match self.workflow {
            WorkflowKind::W1 => {}
            WorkflowKind::W2 => request.prior_latent = self.latent_chain,
            WorkflowKind::W3 => {
                request.influence_weight = self.influence_weight;
                if self.influence_weight > 0.0 {
                    request.snapshot = Some(Arc::new(self.canvas.flatten()));
                }
            }
        }
        request
    }

    /// Runs one generation and appends its candidate, provenance and
    /// CandidateReady event. The request event must already be logged.
    fn run_generation(
        &mut self,
        request: GenerationRequest,
        request_index: u64,
        origin: Origin,
        created_at: u64,
    ) -> Result<u64, SessionError> {
        let (width, height) = self.dims();
        let generated = self.backend.generate(&request, width, height)?;
        let id = self.cache.len() as u64 + 1;

        if request.snapshot.is_some() {
            let snap = NodeRef::Snapshot(self.next_snapshot);
            self.next_snapshot += 1;
            self.provenance.add_node(snap)?;
            let layers: Vec<LayerId> = self.canvas.contributing_layers().collect();
            for layer in layers {
                self.provenance.add_edge(NodeRef::Layer(layer), snap, EdgeKind::CompositedInto)?;
            }
            self.provenance.add_node(NodeRef::Candidate(id))?;
            self.provenance.add_edge(
                snap,
                NodeRef::Candidate(id),
                EdgeKind::ConditionedOn {
                    weight: request.influence_weight,
                },
            )?;
        } else {
            self.provenance.add_node(NodeRef::Candidate(id))?;
        }

        if self.workflow == WorkflowKind::W2 {
            self.latent_chain = Some(generated.latent);
        }
        self.seed_counter += 1;

        let ready_index = self.log.len() as u64;
        let provisional = EventBody::CandidateReady {
            candidate: id,
            request_index,
            origin,
            cycle_mode: CycleMode::TurnTaking,
            seed: request.seed,
            created_at,
            latent_digest: generated.latent.digest(),
            image_digest: pixel_digest(&generated.image),
        };
        self.push(provisional);
        let mode = classify_cycle(&self.log, ready_index as usize)?;
        if let EventBody::CandidateReady { cycle_mode, .. } = &mut self.log[ready_index as usize].body {
            *cycle_mode = mode;
        }

        self.cache.push(GeneratedCandidate {
            id,
            image: Arc::new(generated.image),
            latent: generated.latent,
            request,
            created_at,
            cycle_mode: mode,
        });
        Ok(id)
    }

    /// Explicit generation (one turn). Returns the new candidate id.
    pub fn turn_generate(&mut self) -> Result<u64, SessionError> {
        let request = self.build_request();
        // Validate before logging so a failing request leaves no trace.
        let (width, height) = self.dims();
        if let Some(snapshot) = &request.snapshot {
            if snapshot.dims() != (width, height) {
                return Err(EngineError::SnapshotDims {
                    expected: (width, height),
                    actual: snapshot.dims(),
                }
                .into());
            }
        }
        let log_len = self.log.len();
        let request_index = self.push(EventBody::Generate { seed: request.seed });
        let clock = self.clock;
        match self.run_generation(request, request_index, Origin::Request, clock) {
            Ok(id) => Ok(id),
            Err(e) => {
                self.log.truncate(log_len);
                Err(e)
            }
        }
    }

    pub fn start_parallel(&mut self) -> Result<(), SessionError> {
        if self.workflow != WorkflowKind::W3 {
            return Err(SessionError::ModeUnavailable(self.workflow));
        }
        if self.parallel.is_none() {
            self.parallel = Some(ParallelLoop {
                next_boundary: self.clock + self.config.cadence_ms,
            });
        }
        self.push(EventBody::StartParallel);
        Ok(())
    }

    pub fn stop_parallel(&mut self) -> Result<(), SessionError> {
        if self.workflow != WorkflowKind::W3 {
            return Err(SessionError::ModeUnavailable(self.workflow));
        }
        self.parallel = None;
        self.push(EventBody::StopParallel);
        Ok(())
    }

    /// Advances the virtual clock to `now`. While the background loop runs,
    /// one candidate is produced per cadence boundary crossed, each
    /// conditioned on the canvas as it stands at this tick.
    pub fn tick(&mut self, now: u64) -> Result<Vec<u64>, SessionError> {
        if now < self.clock {
            return Err(SessionError::ClockRegression { clock: self.clock, now });
        }
        self.clock = now;
        let tick_index = self.push(EventBody::Tick { now_ms: now });
        let mut produced = Vec::new();
        let cadence = self.config.cadence_ms;
        while let Some(ParallelLoop { next_boundary }) = self.parallel {
            if next_boundary > now {
                break;
            }
            let request = self.build_request();
            let id = self.run_generation(request, tick_index, Origin::Background, next_boundary)?;
            produced.push(id);
            self.parallel = Some(ParallelLoop {
                next_boundary: next_boundary + cadence,
            });
        }
        Ok(produced)
    }

    /// Imports a cached candidate as a new top layer. The cache keeps the
    /// candidate; importing it again yields another layer.
    pub fn import_candidate(&mut self, candidate: u64) -> Result<LayerId, SessionError> {
        let image = self
            .candidate(candidate)
            .ok_or(SessionError::UnknownCandidate(candidate))?
            .image
            .as_ref()
            .clone();
        let layer = self
            .canvas
            .add_layer(image, LayerOrigin::ImportedFrom { candidate })?;
        self.provenance.add_node(NodeRef::Layer(layer))?;
        self.provenance
            .add_edge(NodeRef::Candidate(candidate), NodeRef::Layer(layer), EdgeKind::ImportedAs)?;
        self.push(EventBody::Import { candidate, layer });
        Ok(layer)
    }

    /// Applies a canvas edit. Returns the id of a newly created layer, if
    /// the command creates one.
    pub fn edit(&mut self, command: EditCommand) -> Result<Option<LayerId>, SessionError> {
        let created_layer = match &command {
            EditCommand::AddLayer => {
                let id = self.canvas.add_blank_layer();
                self.provenance.add_node(NodeRef::Layer(id))?;
                Some(id)
            }
            EditCommand::Brush {
                layer,
                x,
                y,
                radius,
                color,
            } => {
                self.canvas.brush_stroke(*layer, *x, *y, *radius, *color)?;
                None
            }
            EditCommand::Fill {
                layer,
                x0,
                y0,
                x1,
                y1,
                color,
            } => {
                self.canvas.rect_fill(*layer, *x0, *y0, *x1, *y1, *color)?;
                None
            }
            EditCommand::Props { layer, props } => {
                self.canvas.set_layer_props(*layer, *props)?;
                None
            }
        };
        self.push(EventBody::Edit {
            command,
            created_layer,
        });
        Ok(created_layer)
    }

    pub fn record_rating(&mut self, measure: Measure, score: i64) -> Result<(), SessionError> {
        if !(1..=7).contains(&score) {
            return Err(SessionError::RatingOutOfRange(score));
        }
        let score = score as u8;
        self.ratings.push(Rating {
            measure,
            score,
            workflow: self.workflow,
            at: self.clock,
        });
        self.push(EventBody::Rate { measure, score });
        Ok(())
    }

    /// Ratings grouped by measure, then workflow.
    pub fn ratings_by_measure(&self) -> BTreeMap<Measure, BTreeMap<WorkflowKind, Vec<u8>>> {
        let mut out: BTreeMap<Measure, BTreeMap<WorkflowKind, Vec<u8>>> = BTreeMap::new();
        for r in &self.ratings {
            out.entry(r.measure).or_default().entry(r.workflow).or_default().push(r.score);
        }
        out
    }

    pub fn import_count(&self) -> usize {
        self.log
            .iter()
            .filter(|e| matches!(e.body, EventBody::Import { .. }))
            .count()
    }

    pub fn summary(&self) -> SessionSummary {
        let mut hist = ModeHistogram::default();
        for c in &self.cache {
            match c.cycle_mode {
                CycleMode::TurnTaking => hist.turn_taking += 1,
                CycleMode::Parallel => hist.parallel += 1,
            }
        }
        let (width, height) = self.dims();
        SessionSummary {
            workflow: self.workflow,
            width,
            height,
            clock: self.clock,
            final_digest: pixel_digest(&self.flatten()),
            cache_size: self.cache.len(),
            import_count: self.import_count(),
            provenance_depth: self.provenance.depth(),
            mode_histogram: hist,
            latent_digests: self.cache.iter().map(|c| c.latent.digest()).collect(),
            log_len: self.log.len(),
        }
    }

    pub fn apply(&mut self, command: Command) -> Result<CommandOutput, SessionError> {
        let mut out = CommandOutput::default();
        match command {
            Command::SetPrompt { text } => self.set_prompt(text),
            Command::SetWeight { weight } => self.set_weight(weight)?,
            Command::Generate => out.candidates.push(self.turn_generate()?),
            Command::StartParallel => self.start_parallel()?,
            Command::StopParallel => self.stop_parallel()?,
            Command::Tick { now_ms } => out.candidates = self.tick(now_ms)?,
            Command::Edit { edit } => out.layer = self.edit(edit)?,
            Command::Import { candidate } => out.layer = Some(self.import_candidate(candidate)?),
            Command::Rate { measure, score } => self.record_rating(measure, score)?,
        }
        Ok(out)
    }

    /// Rebuilds a session from its event log with the procedural engine,
    /// checking that every recorded event is reproduced exactly.
    pub fn replay(events: impl IntoIterator<Item = SessionEvent>) -> Result<Session, ReplayError> {
        let mut events = events.into_iter();
        let first = events.next().ok_or(ReplayError::Empty)?;
        let EventBody::Create {
            workflow,
            width,
            height,
            seed,
            cadence_ms,
            persistence,
            background,
            influence_weight,
        } = first.body
        else {
            return Err(ReplayError::MissingCreate);
        };
        if first.index != 0 {
            return Err(ReplayError::IndexGap {
                index: first.index,
                expected: 0,
            });
        }
        let config = SessionConfig {
            cadence_ms,
            persistence,
            background,
            influence_weight,
        };
        let mut session = Session::create(workflow, width, height, seed, config)
            .map_err(|source| ReplayError::Session { index: 0, source })?;
        if session.log[0] != first {
            return Err(ReplayError::Mismatch { index: 0 });
        }

        for (expected, event) in (1u64..).zip(events) {
            if event.index != expected {
                return Err(ReplayError::IndexGap {
                    index: event.index,
                    expected,
                });
            }
            let index = event.index;
            if matches!(event.body, EventBody::CandidateReady { .. }) {
                // Produced by an earlier command; must already match.
                if session.log.get(index as usize) != Some(&event) {
                    return Err(ReplayError::Mismatch { index });
                }
                continue;
            }
            if session.log.len() as u64 != index || (event.at != session.clock && !matches!(event.body, EventBody::Tick { .. })) {
                return Err(ReplayError::Mismatch { index });
            }
            session
                .apply_recorded(&event.body)
                .map_err(|source| ReplayError::Session { index, source })?;
            if session.log.get(index as usize) != Some(&event) {
                return Err(ReplayError::Mismatch { index });
            }
        }
        Ok(session)
    }

    fn apply_recorded(&mut self, body: &EventBody) -> Result<(), SessionError> {
        match body {
            EventBody::Create { .. } | EventBody::CandidateReady { .. } => {
                return Err(SessionError::NotCandidateReady(self.log.len() as u64));
            }
            EventBody::SetPrompt { text } => self.set_prompt(text.clone()),
            EventBody::SetWeight { weight } => self.set_weight(*weight)?,
            EventBody::Generate { .. } => {
                self.turn_generate()?;
            }
            EventBody::Import { candidate, .. } => {
                self.import_candidate(*candidate)?;
            }
            EventBody::Edit { command, .. } => {
                self.edit(command.clone())?;
            }
            EventBody::StartParallel => self.start_parallel()?,
            EventBody::StopParallel => self.stop_parallel()?,
            EventBody::Tick { now_ms } => {
                self.tick(*now_ms)?;
            }
            EventBody::Rate { measure, score } => self.record_rating(*measure, i64::from(*score))?,
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{encode_snapshot, fresh_latent, iterate_latent};

    fn session(workflow: WorkflowKind) -> Session {
        Session::create(workflow, 16, 16, 100, SessionConfig::default()).unwrap()
    }

    #[test]
    fn create_contracts() {
        let w1 = session(WorkflowKind::W1);
        assert_eq!(w1.influence_weight(), 0.0);
        assert_eq!(w1.clock(), 0);
        assert!(w1.cache().is_empty() && w1.canvas().is_empty() && w1.prompt().is_empty());
        let mut w1 = w1;
        assert!(matches!(w1.set_weight(0.4), Err(SessionError::WeightPinned)));

        let w2 = session(WorkflowKind::W2);
        assert!(w2.latent_chain().is_none());
        let w3 = session(WorkflowKind::W3);
        assert_eq!(w3.influence_weight(), 0.5);
        assert!(matches!(
            Session::create(WorkflowKind::W3, 3, 16, 0, SessionConfig::default()),
            Err(SessionError::InvalidDims { .. })
        ));
    }

    #[test]
    fn w1_generations_ignore_history() {
        let mut s = session(WorkflowKind::W1);
        s.set_prompt("a dog");
        let a = s.turn_generate().unwrap();
        let layer = s.import_candidate(a).unwrap();
        s.edit(EditCommand::Fill {
            layer,
            x0: 0,
            y0: 0,
            x1: 15,
            y1: 15,
            color: Rgba::BLACK,
        })
        .unwrap();
        let b = s.turn_generate().unwrap();
        let (ca, cb) = (s.candidate(a).unwrap(), s.candidate(b).unwrap());
        assert_ne!(ca.latent, cb.latent);
        assert_eq!(ca.latent, fresh_latent("a dog", 100));
        assert_eq!(cb.latent, fresh_latent("a dog", 101));
        assert!(cb.request.snapshot.is_none() && cb.request.prior_latent.is_none());
        assert_eq!(cb.cycle_mode, CycleMode::TurnTaking);
    }

    #[test]
    fn w2_chains_latents() {
        let mut s = session(WorkflowKind::W2);
        s.set_prompt("joy");
        let a = s.turn_generate().unwrap();
        let b = s.turn_generate().unwrap();
        let first = s.candidate(a).unwrap().latent;
        let second = s.candidate(b).unwrap().latent;
        assert_eq!(second, iterate_latent(&first, "joy", 101, 0.7).unwrap());
        assert_eq!(s.latent_chain(), Some(&second));
        assert!(s.candidate(b).unwrap().request.snapshot.is_none());
    }

    #[test]
    fn w3_full_weight_encodes_flatten() {
        let mut s = session(WorkflowKind::W3);
        let l = s.edit(EditCommand::AddLayer).unwrap().unwrap();
        s.edit(EditCommand::Brush {
            layer: l,
            x: 4,
            y: 4,
            radius: 3,
            color: Rgba::opaque(200, 30, 30),
        })
        .unwrap();
        s.set_weight(1.0).unwrap();
        let id = s.turn_generate().unwrap();
        assert_eq!(s.candidate(id).unwrap().latent, encode_snapshot(&s.flatten()).unwrap());
    }

    #[test]
    fn parallel_only_in_w3() {
        for wf in [WorkflowKind::W1, WorkflowKind::W2] {
            let mut s = session(wf);
            assert!(matches!(s.start_parallel(), Err(SessionError::ModeUnavailable(_))));
            assert!(matches!(s.stop_parallel(), Err(SessionError::ModeUnavailable(_))));
            assert!(!s.parallel_running());
        }
        let mut s = session(WorkflowKind::W3);
        s.start_parallel().unwrap();
        s.start_parallel().unwrap();
        assert!(s.parallel_running());
        assert_eq!(s.tick(2000).unwrap(), vec![1]);
        s.stop_parallel().unwrap();
        assert!(s.tick(10_000).unwrap().is_empty());
    }

    #[test]
    fn tick_crosses_boundaries() {
        let mut s = session(WorkflowKind::W3);
        assert!(s.tick(5000).unwrap().is_empty());
        let mut s = session(WorkflowKind::W3);
        s.start_parallel().unwrap();
        let ids = s.tick(4500).unwrap();
        assert_eq!(ids, vec![1, 2]);
        let created: Vec<u64> = s.cache().iter().map(|c| c.created_at).collect();
        assert_eq!(created, vec![2000, 4000]);
        assert!(s.cache().iter().all(|c| c.cycle_mode == CycleMode::Parallel));
        assert_eq!(s.tick(5999).unwrap(), Vec::<u64>::new());
        assert_eq!(s.tick(6000).unwrap(), vec![3]);
        assert!(matches!(s.tick(10), Err(SessionError::ClockRegression { .. })));
    }

    #[test]
    fn double_start_keeps_schedule() {
        let mut s = session(WorkflowKind::W3);
        s.start_parallel().unwrap();
        s.tick(1500).unwrap();
        s.start_parallel().unwrap();
        assert_eq!(s.tick(2000).unwrap(), vec![1]);
    }

    #[test]
    fn edits_between_ticks_change_parallel_candidates() {
        let mut s = session(WorkflowKind::W3);
        s.set_prompt("city");
        s.start_parallel().unwrap();
        let l = s.edit(EditCommand::AddLayer).unwrap().unwrap();
        s.tick(2000).unwrap();
        let before = s.cache()[0].request.snapshot.clone().unwrap();
        s.edit(EditCommand::Fill {
            layer: l,
            x0: 0,
            y0: 0,
            x1: 7,
            y1: 7,
            color: Rgba::BLACK,
        })
        .unwrap();
        s.tick(4000).unwrap();
        let after = s.cache()[1].request.snapshot.clone().unwrap();
        assert_ne!(before, after);
        assert_eq!(*after, s.flatten());
    }

    #[test]
    fn import_twice_makes_two_layers_and_keeps_cache() {
        let mut s = session(WorkflowKind::W3);
        let c = s.turn_generate().unwrap();
        let l1 = s.import_candidate(c).unwrap();
        let l2 = s.import_candidate(c).unwrap();
        assert_ne!(l1, l2);
        assert_eq!(s.cache().len(), 1);
        assert_eq!(s.flatten(), *s.candidate(c).unwrap().image);
        assert!(matches!(s.import_candidate(9), Err(SessionError::UnknownCandidate(9))));
        s.provenance().validate_imports([l1, l2]).unwrap();
    }

    #[test]
    fn ratings_validate_and_group() {
        let mut s = session(WorkflowKind::W2);
        assert!(matches!(s.record_rating(Measure::Art, 8), Err(SessionError::RatingOutOfRange(8))));
        assert!(s.record_rating(Measure::Art, 0).is_err());
        s.record_rating(Measure::Art, 4).unwrap();
        s.record_rating(Measure::Ownership, 6).unwrap();
        let grouped = s.ratings_by_measure();
        assert_eq!(grouped[&Measure::Art][&WorkflowKind::W2], vec![4]);
        assert_eq!(grouped[&Measure::Ownership][&WorkflowKind::W2], vec![6]);
    }

    #[test]
    fn failed_commands_leave_no_trace() {
        let mut s = session(WorkflowKind::W3);
        let len = s.log().len();
        assert!(s.edit(EditCommand::Brush { layer: LayerId(5), x: 0, y: 0, radius: 1, color: Rgba::BLACK }).is_err());
        assert!(s.set_weight(2.0).is_err());
        assert!(s.tick(5).is_ok());
        assert!(s.tick(1).is_err());
        assert_eq!(s.log().len(), len + 1);
    }

    #[test]
    fn w3_provenance_depth_after_one_import() {
        let mut s = session(WorkflowKind::W3);
        s.set_weight(0.0).unwrap();
        let c = s.turn_generate().unwrap();
        s.import_candidate(c).unwrap();
        assert_eq!(s.provenance().depth(), 1);
        s.set_weight(0.5).unwrap();
        s.turn_generate().unwrap();
        // layer -> snapshot -> candidate, preceded by candidate -> layer
        assert_eq!(s.provenance().depth(), 3);
    }

    #[test]
    fn replay_reproduces_log() {
        let mut s = session(WorkflowKind::W3);
        s.set_prompt("pixel city");
        let l = s.edit(EditCommand::AddLayer).unwrap().unwrap();
        s.edit(EditCommand::Brush { layer: l, x: 3, y: 3, radius: 2, color: Rgba::new(0, 90, 200, 180) }).unwrap();
        s.start_parallel().unwrap();
        s.tick(4100).unwrap();
        s.import_candidate(2).unwrap();
        s.set_weight(0.8).unwrap();
        s.turn_generate().unwrap();
        s.record_rating(Measure::Usability, 6).unwrap();

        let replayed = Session::replay(s.log().to_vec()).unwrap();
        assert_eq!(replayed.log(), s.log());
        assert_eq!(replayed.summary(), s.summary());

        let mut tampered = s.log().to_vec();
        if let EventBody::SetPrompt { text } = &mut tampered[1].body {
            text.push('!');
        }
        assert!(matches!(Session::replay(tampered), Err(ReplayError::Mismatch { .. })));
        assert!(matches!(Session::replay(s.log()[1..].to_vec()), Err(ReplayError::MissingCreate)));
    }
}
