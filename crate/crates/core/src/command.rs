//! Serializable board mutations with optimistic concurrency.
//!
//! Both the HTTP service and the local CLI drive boards through
//! [`apply_command`], so the two modes share one code path.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::{Board, BoardError, Event, ScoreInput};
use crate::domain::{RoamKind, RoamStatus, StrideCategory};
use crate::knowledge::KnowledgeBase;
use crate::model::ArchitectureModel;
use crate::rules::Verdict;
use crate::scoring::{Band, FactorSet};

/// A column given by index or by key/name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Handle(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Command {
    ImportAssets {
        model: ArchitectureModel,
    },
    Move {
        card_id: String,
        to: ColumnRef,
        #[serde(default)]
        approvals: BTreeSet<String>,
    },
    AttachThreats {
        card_id: String,
        threat_ids: Vec<String>,
    },
    ScoreRisk {
        card_id: String,
        risk_id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        factors: Option<FactorSet>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        likelihood: Option<Band>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        impact: Option<Band>,
    },
    ApplyCategoryScore {
        card_id: String,
        category: StrideCategory,
        likelihood: Band,
        impact: Band,
    },
    AttachControls {
        card_id: String,
        risk_id: String,
        control_ids: Vec<String>,
    },
    SetRoam {
        card_id: String,
        risk_id: String,
        status: RoamKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        owner: Option<String>,
    },
    MarkDeferred {
        card_id: String,
        risk_id: String,
        deferred: bool,
    },
    AttestNoThreats {
        card_id: String,
        note: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutationCommand {
    /// Revision the client last saw. May instead come from an `If-Match`
    /// header, but must be present one way or the other.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_revision: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor: Option<String>,
    #[serde(flatten)]
    pub command: Command,
}

impl MutationCommand {
    pub fn new(expected_revision: u64, actor: &str, command: Command) -> Self {
        Self {
            expected_revision: Some(expected_revision),
            actor: Some(actor.to_string()),
            command,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandOutcome {
    pub revision: u64,
    /// Present for moves, approved or not.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    /// Ids created or touched, e.g. new risk ids.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ids: Vec<String>,
    #[serde(default)]
    pub events: Vec<Event>,
}

impl CommandOutcome {
    pub fn rejected(&self) -> bool {
        self.verdict.as_ref().is_some_and(|v| !v.approved())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommandError {
    #[error("revision conflict: expected {expected}, board is at {current}")]
    Conflict { expected: u64, current: u64 },
    #[error("expected_revision is required")]
    MissingRevision,
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Board(#[from] BoardError),
}

/// Apply one command if the board is still at the expected revision.
pub fn apply_command(
    board: &mut Board,
    kb: &KnowledgeBase,
    cmd: &MutationCommand,
) -> Result<CommandOutcome, CommandError> {
    let expected = cmd.expected_revision.ok_or(CommandError::MissingRevision)?;
    if expected != board.revision() {
        return Err(CommandError::Conflict {
            expected,
            current: board.revision(),
        });
    }
    let actor = cmd.actor.as_deref().unwrap_or("anonymous");
    let first_new = board.events().len();
    let mut verdict = None;
    let mut ids = Vec::new();
    match &cmd.command {
        Command::ImportAssets { model } => {
            model
                .validate()
                .map_err(|e| CommandError::Invalid(e.to_string()))?;
            board.import_assets(model, actor)?;
            ids = model.components.iter().map(|c| c.id.clone()).collect();
        }
        Command::Move {
            card_id,
            to,
            approvals,
        } => {
            let target = match to {
                ColumnRef::Index(i) => *i,
                ColumnRef::Handle(h) => board
                    .definition()
                    .resolve(h)
                    .ok_or_else(|| BoardError::UnknownColumn(h.clone()))?,
            };
            verdict = Some(board.move_card(card_id, target, actor, approvals.clone())?);
        }
        Command::AttachThreats {
            card_id,
            threat_ids,
        } => {
            ids = board.attach_threats(card_id, threat_ids, kb, actor)?;
        }
        Command::ScoreRisk {
            card_id,
            risk_id,
            factors,
            likelihood,
            impact,
        } => {
            let input = match (factors, likelihood, impact) {
                (Some(f), None, None) => ScoreInput::Factors(*f),
                (None, Some(l), Some(i)) => ScoreInput::Bands {
                    likelihood: *l,
                    impact: *i,
                },
                _ => {
                    return Err(CommandError::Invalid(
                        "score_risk needs either factors or both likelihood and impact".into(),
                    ))
                }
            };
            board.score_risk(card_id, risk_id, input, actor)?;
            ids.push(risk_id.clone());
        }
        Command::ApplyCategoryScore {
            card_id,
            category,
            likelihood,
            impact,
        } => {
            ids = board.apply_category_score(card_id, *category, *likelihood, *impact, actor)?;
        }
        Command::AttachControls {
            card_id,
            risk_id,
            control_ids,
        } => {
            board.attach_controls(card_id, risk_id, control_ids, kb, actor)?;
            ids.push(risk_id.clone());
        }
        Command::SetRoam {
            card_id,
            risk_id,
            status,
            owner,
        } => {
            let status = roam_status(*status, owner.as_deref())?;
            board.set_roam(card_id, risk_id, status, actor)?;
            ids.push(risk_id.clone());
        }
        Command::MarkDeferred {
            card_id,
            risk_id,
            deferred,
        } => {
            board.mark_deferred(card_id, risk_id, *deferred, actor)?;
            ids.push(risk_id.clone());
        }
        Command::AttestNoThreats { card_id, note } => {
            board.attest_no_threats(card_id, note, actor)?;
        }
    }
    Ok(CommandOutcome {
        revision: board.revision(),
        verdict,
        ids,
        events: board.events()[first_new..].to_vec(),
    })
}

/// Build a ROAM status from its kind and an owner for `Owned`.
pub fn roam_status(kind: RoamKind, owner: Option<&str>) -> Result<RoamStatus, CommandError> {
    let status = match kind {
        RoamKind::Unset => RoamStatus::Unset,
        RoamKind::Resolved => RoamStatus::Resolved,
        RoamKind::Owned => {
            RoamStatus::owned(owner.unwrap_or_default()).map_err(BoardError::from)?
        }
        RoamKind::Accepted => RoamStatus::Accepted,
        RoamKind::Mitigated => RoamStatus::Mitigated,
    };
    if kind != RoamKind::Owned && owner.is_some() {
        return Err(CommandError::Invalid("owner only applies to Owned".into()));
    }
    Ok(status)
}
