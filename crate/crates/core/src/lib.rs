//! Rule-gated Kanban engine for component-level security risk assessment.
//!
//! Components of an architecture model become cards on a board whose
//! columns follow a four-step risk methodology. Cards collect threats,
//! CRI scores, security controls and ROAM statuses, and may only move
//! between columns when the board's rules approve the move.

pub mod board;
pub mod command;
pub mod domain;
pub mod knowledge;
pub mod model;
pub mod report;
pub mod rules;
pub mod scoring;

pub use board::{AssetCard, Attestation, Board, BoardError, BoardSnapshot, Clock, ScoreInput};
pub use command::{apply_command, Command, CommandError, CommandOutcome, MutationCommand};
pub use domain::{RiskAssessment, RoamKind, RoamStatus, ScoreBasis, StrideCategory};
pub use knowledge::KnowledgeBase;
pub use model::ArchitectureModel;
pub use report::{generate_report, ReportFormat, RiskReport};
pub use rules::{Rule, Verdict};
pub use scoring::{Band, CriLevel, CriScore, FactorGroup, FactorSet};
