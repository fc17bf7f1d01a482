use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::CycleMode;
use crate::hash::{u64_string, Digest64};
use crate::layers::{LayerId, LayerProps};
use crate::raster::Rgba;

use super::SessionError;

/// The three studied workflows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WorkflowKind {
    /// Basic turn-taking: every generation is independent of history.
    W1,
    /// Iterative turn-taking: generations chain through the previous latent.
    W2,
    /// Parallel/hybrid: snapshot-conditioned, with an optional background loop.
    W3,
}

impl WorkflowKind {
    pub const ALL: [WorkflowKind; 3] = [WorkflowKind::W1, WorkflowKind::W2, WorkflowKind::W3];

    pub fn as_str(self) -> &'static str {
        match self {
            WorkflowKind::W1 => "W1",
            WorkflowKind::W2 => "W2",
            WorkflowKind::W3 => "W3",
        }
    }
}

impl fmt::Display for WorkflowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WorkflowKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "W1" => Ok(WorkflowKind::W1),
            "W2" => Ok(WorkflowKind::W2),
            "W3" => Ok(WorkflowKind::W3),
            _ => Err(format!("unknown workflow {s:?}, expected W1, W2 or W3")),
        }
    }
}

/// Questionnaire measures, each rated on a 7-point scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Ownership,
    Satisfaction,
    Usability,
    Expectation,
    Explainability,
    Art,
}

impl Measure {
    pub const ALL: [Measure; 6] = [
        Measure::Ownership,
        Measure::Satisfaction,
        Measure::Usability,
        Measure::Expectation,
        Measure::Explainability,
        Measure::Art,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Ownership => "ownership",
            Measure::Satisfaction => "satisfaction",
            Measure::Usability => "usability",
            Measure::Expectation => "expectation",
            Measure::Explainability => "explainability",
            Measure::Art => "art",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measure {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Measure::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown measure {s:?}"))
    }
}

/// Canvas edit commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditCommand {
    /// New transparent artist layer on top.
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
}

/// Who asked for a generation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// An explicit generate command.
    Request,
    /// The background loop on a tick.
    Background,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    Create {
        workflow: WorkflowKind,
        width: u32,
        height: u32,
        #[serde(with = "u64_string")]
        seed: u64,
        cadence_ms: u64,
        persistence: f64,
        background: Rgba,
        influence_weight: f64,
    },
    SetPrompt {
        text: String,
    },
    SetWeight {
        weight: f64,
    },
    Generate {
        #[serde(with = "u64_string")]
        seed: u64,
    },
    CandidateReady {
        candidate: u64,
        request_index: u64,
        origin: Origin,
        cycle_mode: CycleMode,
        #[serde(with = "u64_string")]
        seed: u64,
        created_at: u64,
        latent_digest: Digest64,
        image_digest: Digest64,
    },
    Import {
        candidate: u64,
        layer: LayerId,
    },
    Edit {
        command: EditCommand,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        created_layer: Option<LayerId>,
    },
    StartParallel,
    StopParallel,
    Tick {
        now_ms: u64,
    },
    Rate {
        measure: Measure,
        score: u8,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::Create { .. } => "Create",
            EventBody::SetPrompt { .. } => "SetPrompt",
            EventBody::SetWeight { .. } => "SetWeight",
            EventBody::Generate { .. } => "Generate",
            EventBody::CandidateReady { .. } => "CandidateReady",
            EventBody::Import { .. } => "Import",
            EventBody::Edit { .. } => "Edit",
            EventBody::StartParallel => "StartParallel",
            EventBody::StopParallel => "StopParallel",
            EventBody::Tick { .. } => "Tick",
            EventBody::Rate { .. } => "Rate",
        }
    }
}

/// One log line. Serialized field order is `index, at, kind, payload`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub index: u64,
    /// Virtual milliseconds.
    pub at: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

impl SessionEvent {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("events always serialize")
    }
}

/// Infers the cycle mode of the generation announced at `log[ready_index]`.
///
/// Parallel when the background loop initiated it, or when any edit was
/// logged between its request and its readiness; turn-taking otherwise.
pub fn classify_cycle(log: &[SessionEvent], ready_index: usize) -> Result<CycleMode, SessionError> {
    let Some(SessionEvent {
        body: EventBody::CandidateReady {
            origin, request_index, ..
        },
        ..
    }) = log.get(ready_index)
    else {
        return Err(SessionError::NotCandidateReady(ready_index as u64));
    };
    if *origin == Origin::Background {
        return Ok(CycleMode::Parallel);
    }
    let start = (*request_index as usize + 1).min(ready_index);
    let edited = log[start..ready_index]
        .iter()
        .any(|e| matches!(e.body, EventBody::Edit { .. }));
    Ok(if edited {
        CycleMode::Parallel
    } else {
        CycleMode::TurnTaking
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(index: u64, at: u64, body: EventBody) -> SessionEvent {
        SessionEvent { index, at, body }
    }

    fn ready(index: u64, request_index: u64, origin: Origin) -> SessionEvent {
        ev(
            index,
            10,
            EventBody::CandidateReady {
                candidate: 1,
                request_index,
                origin,
                cycle_mode: CycleMode::TurnTaking,
                seed: 1,
                created_at: 10,
                latent_digest: Digest64(1),
                image_digest: Digest64(2),
            },
        )
    }

    #[test]
    fn canonical_line_layout() {
        let e = ev(3, 1500, EventBody::Generate { seed: u64::MAX });
        assert_eq!(
            e.to_json_line(),
            r#"{"index":3,"at":1500,"kind":"Generate","payload":{"seed":"18446744073709551615"}}"#
        );
        let back: SessionEvent = serde_json::from_str(&e.to_json_line()).unwrap();
        assert_eq!(back, e);

        let unit = ev(4, 1500, EventBody::StartParallel);
        assert_eq!(unit.to_json_line(), r#"{"index":4,"at":1500,"kind":"StartParallel"}"#);
        assert_eq!(serde_json::from_str::<SessionEvent>(&unit.to_json_line()).unwrap(), unit);
    }

    #[test]
    fn edit_payload_round_trips() {
        let e = ev(
            7,
            0,
            EventBody::Edit {
                command: EditCommand::Props {
                    layer: LayerId(2),
                    props: LayerProps {
                        opacity: Some(0.3),
                        visible: None,
                        index: Some(0),
                    },
                },
                created_layer: None,
            },
        );
        let line = e.to_json_line();
        assert!(line.contains(r#""command":{"op":"props","layer":2,"opacity":0.3,"index":0}"#), "{line}");
        assert_eq!(serde_json::from_str::<SessionEvent>(&line).unwrap(), e);
    }

    #[test]
    fn classify_plain_request_is_turn_taking() {
        let log = vec![
            ev(0, 0, EventBody::SetPrompt { text: "x".into() }),
            ev(1, 10, EventBody::Generate { seed: 1 }),
            ready(2, 1, Origin::Request),
        ];
        assert_eq!(classify_cycle(&log, 2).unwrap(), CycleMode::TurnTaking);
    }

    #[test]
    fn classify_background_is_parallel() {
        let log = vec![ev(0, 10, EventBody::Tick { now_ms: 10 }), ready(1, 0, Origin::Background)];
        assert_eq!(classify_cycle(&log, 1).unwrap(), CycleMode::Parallel);
    }

    #[test]
    fn classify_interleaved_edit_is_parallel() {
        let edit = EventBody::Edit {
            command: EditCommand::AddLayer,
            created_layer: Some(LayerId(1)),
        };
        let log = vec![
            ev(0, 0, edit.clone()),
            ev(1, 10, EventBody::Generate { seed: 1 }),
            ev(2, 10, edit.clone()),
            ready(3, 1, Origin::Request),
            ev(4, 10, edit),
        ];
        assert_eq!(classify_cycle(&log, 3).unwrap(), CycleMode::Parallel);
        // edits before the request or after readiness do not count
        let mut quiet = log.clone();
        quiet.remove(2);
        let mut q = quiet;
        for (i, e) in q.iter_mut().enumerate() {
            e.index = i as u64;
        }
        if let EventBody::CandidateReady { request_index, .. } = &mut q[2].body {
            *request_index = 1;
        }
        assert_eq!(classify_cycle(&q, 2).unwrap(), CycleMode::TurnTaking);
        assert!(matches!(classify_cycle(&q, 0), Err(SessionError::NotCandidateReady(0))));
    }

    #[test]
    fn names_parse() {
        assert_eq!("w3".parse::<WorkflowKind>().unwrap(), WorkflowKind::W3);
        assert!("W4".parse::<WorkflowKind>().is_err());
        assert_eq!("Art".parse::<Measure>().unwrap(), Measure::Art);
        assert!("joy".parse::<Measure>().is_err());
    }
}
