//! The risk-assessment Kanban board.
//!
//! Components are cards; columns are methodology steps. Each card owns the
//! elements produced for it (risks, their scores, controls, ROAM status).
//! Every mutation is recorded as one or more [`Event`]s and the board state
//! only ever changes by applying those events, so replaying the log
//! reproduces the board exactly.
//!
//! Editing is column-gated: threats are attached and scored in the risk
//! definition column, controls are attached in the controls column, and
//! ROAM statuses are set in the controls or validation column. Card moves go
//! through the rule engine in [`crate::rules`].

mod definition;
mod event;

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use definition::{BoardDefinition, ColumnRole, ColumnSpec};
pub use event::{parse_event_log, render_event_log, Event, EventKind, EventPayload};

use crate::domain::{self, DomainError, RiskAssessment, RoamStatus, ScoreBasis, StrideCategory};
use crate::knowledge::KnowledgeBase;
use crate::model::{ArchitectureModel, CardSeed};
use crate::rules::{
    self, check_rule, default_ruleset, evaluate_movement, BoardStore, Condition, Failure,
    MovementRequest, Rule, RulesError, Verdict,
};
use crate::scoring::{compute_cri, score_from_factors, Band, FactorSet, ScoringError};

pub const BOARD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoardError {
    #[error("unknown card `{0}`")]
    UnknownCard(String),
    #[error("unknown risk `{risk}` on card `{card}`")]
    UnknownRisk { card: String, risk: String },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("{0}")]
    WrongColumn(String),
    #[error("empty model: nothing to import")]
    EmptyModel,
    #[error("duplicate card id `{0}`")]
    DuplicateCard(String),
    #[error("unknown threat `{0}`")]
    UnknownThreat(String),
    #[error("threat `{threat}` is already attached to card `{card}`")]
    DuplicateThreat { card: String, threat: String },
    #[error("unknown control `{0}`")]
    UnknownControl(String),
    #[error("no {0} given")]
    NothingGiven(&'static str),
    #[error("score before selecting controls: risk `{0}` has no CRI")]
    Unscored(String),
    #[error("risk `{0}` must be scored before it can be Accepted or Mitigated")]
    ScoreRequired(String),
    #[error("card `{0}` has risks; a no-threat attestation only applies to cards without risks")]
    HasRisks(String),
    #[error("change would leave card `{card}` inconsistent with its column: {}", describe(.failures))]
    WouldViolate {
        card: String,
        failures: Vec<Failure>,
    },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Rules(#[from] RulesError),
    #[error("invalid board definition: {0}")]
    InvalidDefinition(String),
    #[error("invalid event log: {0}")]
    Replay(String),
    #[error("invalid board document: {0}")]
    Document(String),
}

fn describe(failures: &[Failure]) -> String {
    failures
        .iter()
        .map(|f| f.justification.as_str())
        .collect::<Vec<_>>()
        .join("; ")
}

/// An explicit statement that a component has no applicable threats.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attestation {
    pub actor: String,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetCard {
    pub id: String,
    pub name: String,
    pub asset_type: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
    pub column_index: usize,
    #[serde(default)]
    pub risks: Vec<RiskAssessment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub no_threat_attestation: Option<Attestation>,
    #[serde(default)]
    pub fully_addressed: bool,
    /// Number of risks ever attached; risk ids are never reused.
    #[serde(default)]
    pub risks_created: u32,
}

impl AssetCard {
    fn from_seed(seed: &CardSeed) -> Self {
        Self {
            id: seed.id.clone(),
            name: seed.name.clone(),
            asset_type: seed.asset_type.clone(),
            description: seed.description.clone(),
            provider: seed.provider.clone(),
            column_index: 0,
            risks: Vec::new(),
            no_threat_attestation: None,
            fully_addressed: false,
            risks_created: 0,
        }
    }

    #[cfg(test)]
    pub(crate) fn new_for_test(id: &str, column_index: usize) -> Self {
        let mut card = Self::from_seed(&CardSeed {
            id: id.into(),
            name: id.into(),
            asset_type: "service".into(),
            description: String::new(),
            provider: None,
        });
        card.column_index = column_index;
        card
    }

    pub fn risk(&self, risk_id: &str) -> Option<&RiskAssessment> {
        self.risks.iter().find(|r| r.id == risk_id)
    }

    fn risk_mut(&mut self, risk_id: &str) -> Option<&mut RiskAssessment> {
        self.risks.iter_mut().find(|r| r.id == risk_id)
    }

    fn has_threat(&self, threat_id: &str) -> bool {
        self.risks.iter().any(|r| r.threat_id == threat_id)
    }
}

/// How likelihood and impact are supplied when scoring a single risk.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreInput {
    /// Factor groups; missing groups are filled from the risk's pre-filled
    /// values (the catalog's impact defaults).
    Factors(FactorSet),
    Bands {
        likelihood: Band,
        impact: Band,
    },
}

/// Source of event timestamps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Clock {
    #[default]
    System,
    Fixed(DateTime<Utc>),
}

impl Clock {
    pub fn now(&self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Fixed(at) => *at,
        }
    }
}

/// The persisted board state: everything except the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardSnapshot {
    pub board_version: u32,
    pub name: String,
    pub definition: BoardDefinition,
    pub rules: Vec<Rule>,
    pub cards: Vec<AssetCard>,
    pub revision: u64,
}

impl BoardStore for BoardSnapshot {
    fn definition(&self) -> &BoardDefinition {
        &self.definition
    }

    fn card(&self, card_id: &str) -> Option<&AssetCard> {
        self.cards.iter().find(|c| c.id == card_id)
    }
}

impl BoardSnapshot {
    /// Canonical JSON rendering of the board document.
    pub fn to_canonical_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("board serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, BoardError> {
        let snap: BoardSnapshot =
            serde_json::from_str(text).map_err(|e| BoardError::Document(e.to_string()))?;
        if snap.board_version != BOARD_VERSION {
            return Err(BoardError::Document(format!(
                "unsupported board version {}",
                snap.board_version
            )));
        }
        snap.definition
            .validate()
            .map_err(BoardError::InvalidDefinition)?;
        rules::validate_ruleset(&snap.rules, &snap.definition)?;
        Ok(snap)
    }

    fn card_mut(&mut self, card_id: &str) -> Result<&mut AssetCard, String> {
        self.cards
            .iter_mut()
            .find(|c| c.id == card_id)
            .ok_or_else(|| format!("unknown card `{card_id}`"))
    }

    fn apply(&mut self, event: &Event) -> Result<(), String> {
        if event.revision < self.revision || event.revision > self.revision + 1 {
            return Err(format!(
                "event {} has revision {} but board is at {}",
                event.sequence, event.revision, self.revision
            ));
        }
        let columns = self.definition.columns.len();
        match &event.payload {
            EventPayload::BoardCreated { .. } => {
                return Err(format!("BoardCreated at sequence {}", event.sequence));
            }
            EventPayload::CardImported { card } => {
                if self.card(&card.id).is_some() {
                    return Err(format!("card `{}` imported twice", card.id));
                }
                self.cards.push(AssetCard::from_seed(card));
            }
            EventPayload::CardMoved { card_id, from, to } => {
                let card = self.card_mut(card_id)?;
                if card.column_index != *from || *to >= columns {
                    return Err(format!("invalid move of `{card_id}` from {from} to {to}"));
                }
                card.column_index = *to;
            }
            EventPayload::MoveRejected { card_id, .. }
            | EventPayload::CardValidated { card_id } => {
                self.card_mut(card_id)?;
            }
            EventPayload::ThreatAttached { card_id, risk } => {
                let card = self.card_mut(card_id)?;
                if card.risk(&risk.id).is_some() {
                    return Err(format!("risk `{}` attached twice", risk.id));
                }
                card.risks.push(risk.clone());
                card.risks_created += 1;
                card.no_threat_attestation = None;
            }
            EventPayload::RiskScored {
                card_id,
                risk_id,
                factors,
                score,
                basis,
            } => {
                let risk = find_risk(self.card_mut(card_id)?, risk_id)?;
                if factors.is_some() {
                    risk.factors = *factors;
                }
                risk.score = Some(*score);
                risk.basis = Some(*basis);
            }
            EventPayload::CategoryScored {
                card_id,
                risk_ids,
                score,
                ..
            } => {
                let card = self.card_mut(card_id)?;
                for risk_id in risk_ids {
                    let risk = find_risk(card, risk_id)?;
                    risk.score = Some(*score);
                    risk.basis = Some(ScoreBasis::Category);
                }
            }
            EventPayload::ControlAttached {
                card_id,
                risk_id,
                control_ids,
            } => {
                let risk = find_risk(self.card_mut(card_id)?, risk_id)?;
                risk.controls.extend(control_ids.iter().cloned());
            }
            EventPayload::RoamSet {
                card_id,
                risk_id,
                status,
            } => {
                let risk = find_risk(self.card_mut(card_id)?, risk_id)?;
                risk.roam = status.clone();
            }
            EventPayload::RiskEliminated { card_id, risk } => {
                let card = self.card_mut(card_id)?;
                let before = card.risks.len();
                card.risks.retain(|r| r.id != risk.id);
                if card.risks.len() == before {
                    return Err(format!("eliminated risk `{}` not on card", risk.id));
                }
            }
            EventPayload::Deferred { card_id, risk_id } => {
                find_risk(self.card_mut(card_id)?, risk_id)?.deferred = true;
            }
            EventPayload::Undeferred { card_id, risk_id } => {
                find_risk(self.card_mut(card_id)?, risk_id)?.deferred = false;
            }
            EventPayload::NoThreatsAttested {
                card_id,
                attestation,
            } => {
                self.card_mut(card_id)?.no_threat_attestation = Some(attestation.clone());
            }
        }
        self.revision = event.revision;
        if let Some(card_id) = event.card_id() {
            let validation = self.definition.index_of_role(ColumnRole::Validation);
            let card = self.card_mut(card_id)?;
            card.fully_addressed = card.column_index == validation
                && domain::is_fully_addressed(&card.risks)
                && (!card.risks.is_empty() || card.no_threat_attestation.is_some());
        }
        Ok(())
    }

    /// Content rules (scored, controlled) guarding every column the card has
    /// already entered. Used to refuse edits that would undo a gate.
    fn gate_violations(&self, card_id: &str) -> Vec<Failure> {
        let Some(card) = self.card(card_id) else {
            return Vec::new();
        };
        self.rules
            .iter()
            .filter(|r| {
                matches!(
                    r.condition,
                    Condition::AllRisksScored | Condition::AllRisksControlled
                )
            })
            .filter_map(|rule| {
                let target = self.definition.column_by_name(&rule.target)?;
                if target == 0 || target > card.column_index {
                    return None;
                }
                let request = MovementRequest {
                    card_id: card.id.clone(),
                    from_index: target - 1,
                    to_index: target,
                    actor: String::new(),
                    approvals: BTreeSet::new(),
                };
                check_rule(rule, &request, card, &self.definition)
            })
            .collect()
    }
}

fn find_risk<'a>(card: &'a mut AssetCard, risk_id: &str) -> Result<&'a mut RiskAssessment, String> {
    card.risk_mut(risk_id)
        .ok_or_else(|| format!("unknown risk `{risk_id}`"))
}

/// Pending events of one mutation, applied to a scratch copy of the state.
struct Tx {
    next: BoardSnapshot,
    events: Vec<Event>,
    base_sequence: u64,
    revision: u64,
    actor: String,
    clock: Clock,
}

impl Tx {
    fn push(&mut self, payload: EventPayload) -> Result<(), BoardError> {
        let event = Event {
            sequence: self.base_sequence + self.events.len() as u64 + 1,
            revision: self.revision,
            timestamp: self.clock.now(),
            actor: self.actor.clone(),
            payload,
        };
        self.next.apply(&event).map_err(BoardError::Replay)?;
        self.events.push(event);
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Board {
    snapshot: BoardSnapshot,
    events: Vec<Event>,
    clock: Clock,
}

impl PartialEq for Board {
    fn eq(&self, other: &Self) -> bool {
        self.snapshot == other.snapshot && self.events == other.events
    }
}

impl Board {
    pub fn new(
        name: &str,
        definition: BoardDefinition,
        rules: Vec<Rule>,
        actor: &str,
    ) -> Result<Self, BoardError> {
        Self::with_clock(name, definition, rules, actor, Clock::System)
    }

    pub fn with_clock(
        name: &str,
        definition: BoardDefinition,
        rules: Vec<Rule>,
        actor: &str,
        clock: Clock,
    ) -> Result<Self, BoardError> {
        definition
            .validate()
            .map_err(BoardError::InvalidDefinition)?;
        rules::validate_ruleset(&rules, &definition)?;
        let created = Event {
            sequence: 1,
            revision: 0,
            timestamp: clock.now(),
            actor: actor.to_string(),
            payload: EventPayload::BoardCreated {
                name: name.to_string(),
                definition: definition.clone(),
                rules: rules.clone(),
            },
        };
        Ok(Self {
            snapshot: BoardSnapshot {
                board_version: BOARD_VERSION,
                name: name.to_string(),
                definition,
                rules,
                cards: Vec::new(),
                revision: 0,
            },
            events: vec![created],
            clock,
        })
    }

    /// The standard four-column board with the default rule set.
    pub fn default_board(name: &str) -> Self {
        Self::new(
            name,
            BoardDefinition::default_four_column(),
            default_ruleset(),
            "system",
        )
        .expect("default board is valid")
    }

    /// Rebuild a board from its event log.
    pub fn replay(events: Vec<Event>) -> Result<Self, BoardError> {
        let mut iter = events.iter();
        let first = iter
            .next()
            .ok_or_else(|| BoardError::Replay("empty event log".into()))?;
        let EventPayload::BoardCreated {
            name,
            definition,
            rules,
        } = &first.payload
        else {
            return Err(BoardError::Replay(
                "log must start with BoardCreated".into(),
            ));
        };
        if first.sequence != 1 || first.revision != 0 {
            return Err(BoardError::Replay(
                "BoardCreated must have sequence 1 and revision 0".into(),
            ));
        }
        definition
            .validate()
            .map_err(BoardError::InvalidDefinition)?;
        rules::validate_ruleset(rules, definition)?;
        let mut snapshot = BoardSnapshot {
            board_version: BOARD_VERSION,
            name: name.clone(),
            definition: definition.clone(),
            rules: rules.clone(),
            cards: Vec::new(),
            revision: 0,
        };
        for (i, event) in iter.enumerate() {
            let expected = i as u64 + 2;
            if event.sequence != expected {
                return Err(BoardError::Replay(format!(
                    "expected sequence {expected}, found {}",
                    event.sequence
                )));
            }
            snapshot.apply(event).map_err(BoardError::Replay)?;
        }
        Ok(Self {
            snapshot,
            events,
            clock: Clock::System,
        })
    }

    pub fn set_clock(&mut self, clock: Clock) {
        self.clock = clock;
    }

    pub fn snapshot(&self) -> &BoardSnapshot {
        &self.snapshot
    }

    pub fn name(&self) -> &str {
        &self.snapshot.name
    }

    pub fn definition(&self) -> &BoardDefinition {
        &self.snapshot.definition
    }

    pub fn rules(&self) -> &[Rule] {
        &self.snapshot.rules
    }

    pub fn cards(&self) -> &[AssetCard] {
        &self.snapshot.cards
    }

    pub fn card(&self, card_id: &str) -> Option<&AssetCard> {
        self.snapshot.card(card_id)
    }

    pub fn revision(&self) -> u64 {
        self.snapshot.revision
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    /// Events with a sequence number greater than `sequence`.
    pub fn events_since(&self, sequence: u64) -> &[Event] {
        let start = (sequence as usize).min(self.events.len());
        &self.events[start..]
    }

    pub fn last_sequence(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn to_document_json(&self) -> String {
        self.snapshot.to_canonical_json()
    }

    fn begin(&self, actor: &str, accepted: bool) -> Tx {
        Tx {
            next: self.snapshot.clone(),
            events: Vec::new(),
            base_sequence: self.last_sequence(),
            revision: self.snapshot.revision + u64::from(accepted),
            actor: actor.to_string(),
            clock: self.clock,
        }
    }

    fn finish(&mut self, tx: Tx) {
        self.snapshot = tx.next;
        self.events.extend(tx.events);
    }

    fn existing_card(&self, card_id: &str) -> Result<&AssetCard, BoardError> {
        self.card(card_id)
            .ok_or_else(|| BoardError::UnknownCard(card_id.to_string()))
    }

    fn existing_risk<'a>(
        &'a self,
        card_id: &str,
        risk_id: &str,
    ) -> Result<(&'a AssetCard, &'a RiskAssessment), BoardError> {
        let card = self.existing_card(card_id)?;
        let risk = card.risk(risk_id).ok_or_else(|| BoardError::UnknownRisk {
            card: card_id.to_string(),
            risk: risk_id.to_string(),
        })?;
        Ok((card, risk))
    }

    fn require_role(
        &self,
        card: &AssetCard,
        roles: &[ColumnRole],
        what: &str,
    ) -> Result<(), BoardError> {
        let def = self.definition();
        if def
            .role_at(card.column_index)
            .is_some_and(|role| roles.contains(&role))
        {
            return Ok(());
        }
        let allowed: Vec<&str> = roles
            .iter()
            .map(|r| def.name_at(def.index_of_role(*r)))
            .collect();
        Err(BoardError::WrongColumn(format!(
            "{what} only in {} (card `{}` is in {})",
            allowed.join(" or "),
            card.id,
            def.name_at(card.column_index)
        )))
    }

    /// Create one card per model component in the first column.
    pub fn import_assets(
        &mut self,
        model: &ArchitectureModel,
        actor: &str,
    ) -> Result<(), BoardError> {
        let seeds = model.to_assets();
        if seeds.is_empty() {
            return Err(BoardError::EmptyModel);
        }
        let mut seen = BTreeSet::new();
        for seed in &seeds {
            if self.card(&seed.id).is_some() || !seen.insert(seed.id.as_str()) {
                return Err(BoardError::DuplicateCard(seed.id.clone()));
            }
        }
        let mut tx = self.begin(actor, true);
        for card in seeds {
            tx.push(EventPayload::CardImported { card })?;
        }
        self.finish(tx);
        Ok(())
    }

    /// Attach catalog threats to a card as unscored risks.
    pub fn attach_threats(
        &mut self,
        card_id: &str,
        threat_ids: &[String],
        kb: &KnowledgeBase,
        actor: &str,
    ) -> Result<Vec<String>, BoardError> {
        let card = self.existing_card(card_id)?;
        self.require_role(card, &[ColumnRole::RiskDefinition], "threat attachment")?;
        if threat_ids.is_empty() {
            return Err(BoardError::NothingGiven("threats"));
        }
        let mut seen = BTreeSet::new();
        let mut risks = Vec::new();
        for (n, threat_id) in threat_ids.iter().enumerate() {
            let threat = kb
                .threat(threat_id)
                .ok_or_else(|| BoardError::UnknownThreat(threat_id.clone()))?;
            if card.has_threat(threat_id) || !seen.insert(threat_id.as_str()) {
                return Err(BoardError::DuplicateThreat {
                    card: card_id.to_string(),
                    threat: threat_id.clone(),
                });
            }
            let factors = threat
                .impact_defaults
                .map(|d| d.to_factor_set())
                .filter(|f| !f.is_empty());
            risks.push(RiskAssessment {
                id: format!("{}.R{}", card.id, card.risks_created as usize + n + 1),
                threat_id: threat.id.clone(),
                title: threat.title.clone(),
                stride: threat.stride,
                factors,
                score: None,
                basis: None,
                roam: RoamStatus::Unset,
                controls: BTreeSet::new(),
                deferred: false,
            });
        }
        let ids = risks.iter().map(|r| r.id.clone()).collect();
        let mut tx = self.begin(actor, true);
        for risk in risks {
            tx.push(EventPayload::ThreatAttached {
                card_id: card_id.to_string(),
                risk,
            })?;
        }
        self.finish(tx);
        Ok(ids)
    }

    /// Score one risk from factors or from directly entered bands.
    pub fn score_risk(
        &mut self,
        card_id: &str,
        risk_id: &str,
        input: ScoreInput,
        actor: &str,
    ) -> Result<(), BoardError> {
        let (card, risk) = self.existing_risk(card_id, risk_id)?;
        self.require_role(card, &[ColumnRole::RiskDefinition], "scoring")?;
        let (factors, score, basis) = match input {
            ScoreInput::Factors(given) => {
                let merged = match &risk.factors {
                    Some(prefilled) => given.or(prefilled),
                    None => given,
                };
                let score = score_from_factors(&merged)?;
                (Some(merged), score, ScoreBasis::Factors)
            }
            ScoreInput::Bands { likelihood, impact } => {
                (None, compute_cri(likelihood, impact), ScoreBasis::Direct)
            }
        };
        let mut tx = self.begin(actor, true);
        tx.push(EventPayload::RiskScored {
            card_id: card_id.to_string(),
            risk_id: risk_id.to_string(),
            factors,
            score,
            basis,
        })?;
        self.finish(tx);
        Ok(())
    }

    /// Apply one likelihood/impact pair to every risk of a STRIDE category
    /// that has no per-threat score. Returns the ids that were scored.
    pub fn apply_category_score(
        &mut self,
        card_id: &str,
        category: StrideCategory,
        likelihood: Band,
        impact: Band,
        actor: &str,
    ) -> Result<Vec<String>, BoardError> {
        let card = self.existing_card(card_id)?;
        self.require_role(card, &[ColumnRole::RiskDefinition], "scoring")?;
        let risk_ids: Vec<String> = card
            .risks
            .iter()
            .filter(|r| r.stride == category)
            .filter(|r| !r.basis.is_some_and(ScoreBasis::is_per_threat))
            .map(|r| r.id.clone())
            .collect();
        let mut tx = self.begin(actor, true);
        tx.push(EventPayload::CategoryScored {
            card_id: card_id.to_string(),
            category,
            score: compute_cri(likelihood, impact),
            risk_ids: risk_ids.clone(),
        })?;
        self.finish(tx);
        Ok(risk_ids)
    }

    pub fn attach_controls(
        &mut self,
        card_id: &str,
        risk_id: &str,
        control_ids: &[String],
        kb: &KnowledgeBase,
        actor: &str,
    ) -> Result<(), BoardError> {
        let (card, risk) = self.existing_risk(card_id, risk_id)?;
        self.require_role(card, &[ColumnRole::ControlDefinition], "control selection")?;
        if !risk.is_scored() {
            return Err(BoardError::Unscored(risk_id.to_string()));
        }
        if control_ids.is_empty() {
            return Err(BoardError::NothingGiven("controls"));
        }
        let mut unique = BTreeSet::new();
        for id in control_ids {
            if kb.control(id).is_none() {
                return Err(BoardError::UnknownControl(id.clone()));
            }
            unique.insert(id.clone());
        }
        let mut tx = self.begin(actor, true);
        tx.push(EventPayload::ControlAttached {
            card_id: card_id.to_string(),
            risk_id: risk_id.to_string(),
            control_ids: unique.into_iter().collect(),
        })?;
        self.finish(tx);
        Ok(())
    }

    /// Set a ROAM status. Resolved removes the risk from the card.
    pub fn set_roam(
        &mut self,
        card_id: &str,
        risk_id: &str,
        status: RoamStatus,
        actor: &str,
    ) -> Result<(), BoardError> {
        status.validate()?;
        let (card, risk) = self.existing_risk(card_id, risk_id)?;
        self.require_role(
            card,
            &[ColumnRole::ControlDefinition, ColumnRole::Validation],
            "ROAM status",
        )?;
        if status.is_addressing() && !risk.is_scored() {
            return Err(BoardError::ScoreRequired(risk_id.to_string()));
        }
        let payload = if status == RoamStatus::Resolved {
            let mut risk = risk.clone();
            risk.roam = RoamStatus::Resolved;
            EventPayload::RiskEliminated {
                card_id: card_id.to_string(),
                risk,
            }
        } else {
            EventPayload::RoamSet {
                card_id: card_id.to_string(),
                risk_id: risk_id.to_string(),
                status,
            }
        };
        let mut tx = self.begin(actor, true);
        tx.push(payload)?;
        self.check_consistent(&tx, card_id)?;
        self.finish(tx);
        Ok(())
    }

    /// Set or clear the deferred flag. Clearing is refused when the risk
    /// would then break a gate the card has already passed.
    pub fn mark_deferred(
        &mut self,
        card_id: &str,
        risk_id: &str,
        deferred: bool,
        actor: &str,
    ) -> Result<(), BoardError> {
        self.existing_risk(card_id, risk_id)?;
        let payload = if deferred {
            EventPayload::Deferred {
                card_id: card_id.to_string(),
                risk_id: risk_id.to_string(),
            }
        } else {
            EventPayload::Undeferred {
                card_id: card_id.to_string(),
                risk_id: risk_id.to_string(),
            }
        };
        let mut tx = self.begin(actor, true);
        tx.push(payload)?;
        self.check_consistent(&tx, card_id)?;
        self.finish(tx);
        Ok(())
    }

    /// Record that a risk-free component has no applicable threats.
    pub fn attest_no_threats(
        &mut self,
        card_id: &str,
        note: &str,
        actor: &str,
    ) -> Result<(), BoardError> {
        let card = self.existing_card(card_id)?;
        self.require_role(
            card,
            &[ColumnRole::RiskDefinition, ColumnRole::ControlDefinition],
            "no-threat attestation",
        )?;
        if !card.risks.is_empty() {
            return Err(BoardError::HasRisks(card_id.to_string()));
        }
        if note.trim().is_empty() {
            return Err(BoardError::NothingGiven("attestation note"));
        }
        let mut tx = self.begin(actor, true);
        tx.push(EventPayload::NoThreatsAttested {
            card_id: card_id.to_string(),
            attestation: Attestation {
                actor: actor.to_string(),
                note: note.to_string(),
            },
        })?;
        self.finish(tx);
        Ok(())
    }

    /// Ask the approval module to move a card. A rejection is recorded in
    /// the log but leaves the board state and revision untouched.
    pub fn move_card(
        &mut self,
        card_id: &str,
        target: usize,
        actor: &str,
        approvals: BTreeSet<String>,
    ) -> Result<Verdict, BoardError> {
        let card = self.existing_card(card_id)?;
        if target >= self.definition().columns.len() {
            return Err(BoardError::UnknownColumn(target.to_string()));
        }
        let from = card.column_index;
        let request = MovementRequest {
            card_id: card_id.to_string(),
            from_index: from,
            to_index: target,
            actor: actor.to_string(),
            approvals,
        };
        let verdict = evaluate_movement(&request, self.rules(), &self.snapshot)?;
        let mut tx = self.begin(actor, verdict.approved());
        if verdict.approved() {
            tx.push(EventPayload::CardMoved {
                card_id: card_id.to_string(),
                from,
                to: target,
            })?;
            let validated = tx.next.card(card_id).is_some_and(|c| c.fully_addressed);
            if validated {
                tx.push(EventPayload::CardValidated {
                    card_id: card_id.to_string(),
                })?;
            }
        } else {
            tx.push(EventPayload::MoveRejected {
                card_id: card_id.to_string(),
                from,
                to: target,
                verdict: verdict.clone(),
            })?;
        }
        self.finish(tx);
        Ok(verdict)
    }

    fn check_consistent(&self, tx: &Tx, card_id: &str) -> Result<(), BoardError> {
        let failures = tx.next.gate_violations(card_id);
        if failures.is_empty() {
            Ok(())
        } else {
            Err(BoardError::WouldViolate {
                card: card_id.to_string(),
                failures,
            })
        }
    }
}
