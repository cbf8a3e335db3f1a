//! Risk-assessment reports.
//!
//! A report can be requested at any board state. Risks still on cards are
//! listed per card; risks removed by a Resolved status are recovered from
//! the event log.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::board::{Attestation, Board, BoardSnapshot, Event, EventPayload};
use crate::domain::{RiskAssessment, RoamStatus, StrideCategory};
use crate::knowledge::KnowledgeBase;
use crate::scoring::{Band, CriLevel};

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "md" | "markdown" => Ok(Self::Markdown),
            other => Err(format!(
                "unknown report format `{other}` (expected json or md)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlLine {
    pub id: String,
    pub title: String,
    pub ccm_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskLine {
    pub risk_id: String,
    pub threat_id: String,
    pub title: String,
    pub stride: StrideCategory,
    pub likelihood: Option<Band>,
    pub impact: Option<Band>,
    pub cri: Option<u8>,
    pub level: Option<CriLevel>,
    pub roam: RoamStatus,
    pub controls: Vec<ControlLine>,
    pub deferred: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardSection {
    pub card_id: String,
    pub name: String,
    pub asset_type: String,
    pub column: String,
    pub fully_addressed: bool,
    pub attestation: Option<Attestation>,
    pub risks: Vec<RiskLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminatedRisk {
    pub card_id: String,
    pub risk: RiskLine,
    pub actor: String,
    pub sequence: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub cards: usize,
    pub fully_addressed: usize,
    pub risks: usize,
    pub unscored: usize,
    pub deferred: usize,
    pub eliminated: usize,
    pub per_column: BTreeMap<String, usize>,
    pub per_roam: BTreeMap<String, usize>,
    pub per_level: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub report_version: u32,
    pub board: String,
    pub revision: u64,
    /// Timestamp of the newest event, so the same board always yields the
    /// same report.
    pub generated_at: Option<DateTime<Utc>>,
    pub cards: Vec<CardSection>,
    pub eliminated: Vec<EliminatedRisk>,
    pub summary: ReportSummary,
}

fn risk_line(risk: &RiskAssessment, kb: &KnowledgeBase) -> RiskLine {
    let controls = risk
        .controls
        .iter()
        .map(|id| match kb.control(id) {
            Some(c) => ControlLine {
                id: c.id.clone(),
                title: c.title.clone(),
                ccm_ids: c.ccm_ids.iter().cloned().collect(),
            },
            None => ControlLine {
                id: id.clone(),
                title: id.clone(),
                ccm_ids: Vec::new(),
            },
        })
        .collect();
    RiskLine {
        risk_id: risk.id.clone(),
        threat_id: risk.threat_id.clone(),
        title: risk.title.clone(),
        stride: risk.stride,
        likelihood: risk.score.map(|s| s.likelihood()),
        impact: risk.score.map(|s| s.impact()),
        cri: risk.score.map(|s| s.cri()),
        level: risk.level(),
        roam: risk.roam.clone(),
        controls,
        deferred: risk.deferred,
    }
}

/// Build the report for a board state and its event log.
pub fn generate_report(
    snapshot: &BoardSnapshot,
    events: &[Event],
    kb: &KnowledgeBase,
) -> RiskReport {
    let cards: Vec<CardSection> = snapshot
        .cards
        .iter()
        .map(|card| CardSection {
            card_id: card.id.clone(),
            name: card.name.clone(),
            asset_type: card.asset_type.clone(),
            column: snapshot.definition.name_at(card.column_index).to_string(),
            fully_addressed: card.fully_addressed,
            attestation: card.no_threat_attestation.clone(),
            risks: card.risks.iter().map(|r| risk_line(r, kb)).collect(),
        })
        .collect();
    let eliminated: Vec<EliminatedRisk> = events
        .iter()
        .filter_map(|e| match &e.payload {
            EventPayload::RiskEliminated { card_id, risk } => Some(EliminatedRisk {
                card_id: card_id.clone(),
                risk: risk_line(risk, kb),
                actor: e.actor.clone(),
                sequence: e.sequence,
            }),
            _ => None,
        })
        .collect();
    let summary = summarize(&cards, eliminated.len());
    RiskReport {
        report_version: REPORT_VERSION,
        board: snapshot.name.clone(),
        revision: snapshot.revision,
        generated_at: events.last().map(|e| e.timestamp),
        cards,
        eliminated,
        summary,
    }
}

/// Report for a board using its own event log.
pub fn board_report(board: &Board, kb: &KnowledgeBase) -> RiskReport {
    generate_report(board.snapshot(), board.events(), kb)
}

fn summarize(cards: &[CardSection], eliminated: usize) -> ReportSummary {
    let mut s = ReportSummary {
        cards: cards.len(),
        eliminated,
        ..Default::default()
    };
    for card in cards {
        *s.per_column.entry(card.column.clone()).or_default() += 1;
        s.fully_addressed += usize::from(card.fully_addressed);
        for risk in &card.risks {
            s.risks += 1;
            s.deferred += usize::from(risk.deferred);
            *s.per_roam
                .entry(risk.roam.kind().as_str().to_string())
                .or_default() += 1;
            match risk.level {
                Some(level) => *s.per_level.entry(level.to_string()).or_default() += 1,
                None => s.unscored += 1,
            }
        }
    }
    s
}

impl RiskReport {
    /// Every risk id in the report, on cards and eliminated.
    pub fn risk_ids(&self) -> BTreeSet<&str> {
        self.cards
            .iter()
            .flat_map(|c| c.risks.iter())
            .chain(self.eliminated.iter().map(|e| &e.risk))
            .map(|r| r.risk_id.as_str())
            .collect()
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Markdown => self.to_markdown(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_markdown(&self) -> String {
        let mut md = String::new();
        let _ = writeln!(md, "# Risk report: {}\n", cell(&self.board));
        let generated = self
            .generated_at
            .map(|t| t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(md, "Revision {}, generated {generated}.\n", self.revision);

        let s = &self.summary;
        md.push_str("## Summary\n\n");
        let _ = writeln!(
            md,
            "- Components: {} ({} fully addressed)",
            s.cards, s.fully_addressed
        );
        let _ = writeln!(
            md,
            "- Risks on cards: {} ({} unscored, {} deferred)",
            s.risks, s.unscored, s.deferred
        );
        let _ = writeln!(md, "- Eliminated risks: {}", s.eliminated);
        let _ = writeln!(md, "- By column: {}", tally(&s.per_column));
        let _ = writeln!(md, "- By ROAM status: {}", tally(&s.per_roam));
        let _ = writeln!(md, "- By CRI level: {}\n", tally(&s.per_level));

        for card in &self.cards {
            let _ = writeln!(
                md,
                "## Component: {} ({})\n",
                cell(&card.name),
                card.card_id
            );
            let _ = writeln!(md, "- Type: {}", card.asset_type);
            let _ = writeln!(md, "- Column: {}", card.column);
            let _ = writeln!(
                md,
                "- Fully addressed: {}",
                if card.fully_addressed { "yes" } else { "no" }
            );
            if let Some(a) = &card.attestation {
                let _ = writeln!(
                    md,
                    "- No-threat attestation by {}: {}",
                    a.actor,
                    cell(&a.note)
                );
            }
            md.push('\n');
            if card.risks.is_empty() {
                md.push_str("No risks recorded.\n\n");
            } else {
                risk_table(&mut md, card.risks.iter());
            }
        }

        md.push_str("## Eliminated risks\n\n");
        if self.eliminated.is_empty() {
            md.push_str("None.\n");
        } else {
            md.push_str("| Risk | Component | Threat | Resolved by | Event |\n");
            md.push_str("|---|---|---|---|---|\n");
            for e in &self.eliminated {
                let _ = writeln!(
                    md,
                    "| {} | {} | {} {} | {} | {} |",
                    e.risk.risk_id,
                    e.card_id,
                    e.risk.threat_id,
                    cell(&e.risk.title),
                    cell(&e.actor),
                    e.sequence
                );
            }
        }
        md
    }
}

fn risk_table<'a>(md: &mut String, risks: impl Iterator<Item = &'a RiskLine>) {
    md.push_str("| Risk | Threat | STRIDE | L | I | CRI | Level | ROAM | Controls | Deferred |\n");
    md.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
    let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    for r in risks {
        let roam = match &r.roam {
            RoamStatus::Owned { owner } => format!("Owned ({})", cell(owner)),
            other => other.kind().as_str().to_string(),
        };
        let controls = if r.controls.is_empty() {
            "-".to_string()
        } else {
            r.controls
                .iter()
                .map(|c| {
                    if c.ccm_ids.is_empty() {
                        c.id.clone()
                    } else {
                        format!("{} (CCM {})", c.id, c.ccm_ids.join(", "))
                    }
                })
                .collect::<Vec<_>>()
                .join("; ")
        };
        let _ = writeln!(
            md,
            "| {} | {} {} | {} | {} | {} | {} | {} | {} | {} | {} |",
            r.risk_id,
            r.threat_id,
            cell(&r.title),
            r.stride.label(),
            opt(r.likelihood.map(|b| b.value().to_string())),
            opt(r.impact.map(|b| b.value().to_string())),
            opt(r.cri.map(|c| c.to_string())),
            opt(r.level.map(|l| l.to_string())),
            roam,
            controls,
            if r.deferred { "yes" } else { "no" }
        );
    }
    md.push('\n');
}

fn tally(map: &BTreeMap<String, usize>) -> String {
    if map.is_empty() {
        return "none".into();
    }
    map.iter()
        .map(|(k, v)| format!("{k} {v}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn cell(text: &str) -> String {
    text.replace('|', "\\|").replace('\n', " ")
}
