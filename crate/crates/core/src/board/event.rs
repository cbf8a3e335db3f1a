use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::{Attestation, BoardDefinition};
use crate::domain::{RiskAssessment, RoamStatus, ScoreBasis, StrideCategory};
use crate::model::CardSeed;
use crate::rules::{Rule, Verdict};
use crate::scoring::{CriScore, FactorSet};

/// One entry of the board's append-only log.
///
/// Payloads are self-contained state deltas: replaying the log needs neither
/// the knowledge base nor the rule engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Dense, starting at 1.
    pub sequence: u64,
    /// Board revision after this event.
    pub revision: u64,
    pub timestamp: DateTime<Utc>,
    pub actor: String,
    #[serde(flatten)]
    pub payload: EventPayload,
}

impl Event {
    pub fn kind(&self) -> EventKind {
        self.payload.kind()
    }

    pub fn card_id(&self) -> Option<&str> {
        self.payload.card_id()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    BoardCreated,
    CardImported,
    CardMoved,
    MoveRejected,
    ThreatAttached,
    RiskScored,
    CategoryScored,
    ControlAttached,
    RoamSet,
    RiskEliminated,
    Deferred,
    Undeferred,
    NoThreatsAttested,
    CardValidated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventPayload {
    BoardCreated {
        name: String,
        definition: BoardDefinition,
        rules: Vec<Rule>,
    },
    CardImported {
        card: CardSeed,
    },
    CardMoved {
        card_id: String,
        from: usize,
        to: usize,
    },
    MoveRejected {
        card_id: String,
        from: usize,
        to: usize,
        verdict: Verdict,
    },
    ThreatAttached {
        card_id: String,
        risk: RiskAssessment,
    },
    RiskScored {
        card_id: String,
        risk_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        factors: Option<FactorSet>,
        score: CriScore,
        basis: ScoreBasis,
    },
    CategoryScored {
        card_id: String,
        category: StrideCategory,
        score: CriScore,
        risk_ids: Vec<String>,
    },
    ControlAttached {
        card_id: String,
        risk_id: String,
        control_ids: Vec<String>,
    },
    RoamSet {
        card_id: String,
        risk_id: String,
        status: RoamStatus,
    },
    /// A risk set to Resolved and removed from its card. Carries the final
    /// snapshot so reports can still list it.
    RiskEliminated {
        card_id: String,
        risk: RiskAssessment,
    },
    Deferred {
        card_id: String,
        risk_id: String,
    },
    Undeferred {
        card_id: String,
        risk_id: String,
    },
    NoThreatsAttested {
        card_id: String,
        attestation: Attestation,
    },
    CardValidated {
        card_id: String,
    },
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            Self::BoardCreated { .. } => EventKind::BoardCreated,
            Self::CardImported { .. } => EventKind::CardImported,
            Self::CardMoved { .. } => EventKind::CardMoved,
            Self::MoveRejected { .. } => EventKind::MoveRejected,
            Self::ThreatAttached { .. } => EventKind::ThreatAttached,
            Self::RiskScored { .. } => EventKind::RiskScored,
            Self::CategoryScored { .. } => EventKind::CategoryScored,
            Self::ControlAttached { .. } => EventKind::ControlAttached,
            Self::RoamSet { .. } => EventKind::RoamSet,
            Self::RiskEliminated { .. } => EventKind::RiskEliminated,
            Self::Deferred { .. } => EventKind::Deferred,
            Self::Undeferred { .. } => EventKind::Undeferred,
            Self::NoThreatsAttested { .. } => EventKind::NoThreatsAttested,
            Self::CardValidated { .. } => EventKind::CardValidated,
        }
    }

    pub fn card_id(&self) -> Option<&str> {
        match self {
            Self::BoardCreated { .. } => None,
            Self::CardImported { card } => Some(&card.id),
            Self::CardMoved { card_id, .. }
            | Self::MoveRejected { card_id, .. }
            | Self::ThreatAttached { card_id, .. }
            | Self::RiskScored { card_id, .. }
            | Self::CategoryScored { card_id, .. }
            | Self::ControlAttached { card_id, .. }
            | Self::RoamSet { card_id, .. }
            | Self::RiskEliminated { card_id, .. }
            | Self::Deferred { card_id, .. }
            | Self::Undeferred { card_id, .. }
            | Self::NoThreatsAttested { card_id, .. }
            | Self::CardValidated { card_id } => Some(card_id),
        }
    }
}

/// Parse a newline-delimited JSON event log. Blank lines are skipped.
pub fn parse_event_log(text: &str) -> Result<Vec<Event>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Render events as newline-delimited JSON, one record per line.
pub fn render_event_log<'a>(events: impl IntoIterator<Item = &'a Event>) -> String {
    let mut out = String::new();
    for event in events {
        out.push_str(&serde_json::to_string(event).expect("events serialize"));
        out.push('\n');
    }
    out
}
