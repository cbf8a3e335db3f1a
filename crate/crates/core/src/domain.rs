//! STRIDE categories, ROAM statuses and per-asset risk assessments.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::{CriLevel, CriScore, FactorSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("unknown STRIDE category `{0}`")]
    UnknownStride(String),
    #[error("unknown ROAM status `{0}`")]
    UnknownRoam(String),
    #[error("owner identity required for Owned status")]
    MissingOwner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StrideCategory {
    SpoofingIdentity,
    Tampering,
    Repudiation,
    InformationDisclosure,
    DenialOfService,
    ElevationOfPrivilege,
}

impl StrideCategory {
    pub const ALL: [StrideCategory; 6] = [
        Self::SpoofingIdentity,
        Self::Tampering,
        Self::Repudiation,
        Self::InformationDisclosure,
        Self::DenialOfService,
        Self::ElevationOfPrivilege,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SpoofingIdentity => "SpoofingIdentity",
            Self::Tampering => "Tampering",
            Self::Repudiation => "Repudiation",
            Self::InformationDisclosure => "InformationDisclosure",
            Self::DenialOfService => "DenialOfService",
            Self::ElevationOfPrivilege => "ElevationOfPrivilege",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::SpoofingIdentity => "Spoofing identity",
            Self::Tampering => "Tampering",
            Self::Repudiation => "Repudiation",
            Self::InformationDisclosure => "Information disclosure",
            Self::DenialOfService => "Denial of service",
            Self::ElevationOfPrivilege => "Elevation of privilege",
        }
    }
}

impl fmt::Display for StrideCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrideCategory {
    type Err = DomainError;

    /// Accepts the canonical names, the human labels, single letters
    /// (S/T/R/I/D/E) and a few common abbreviations, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let cat = match norm.as_str() {
            "s" | "spoofing" | "spoofingidentity" => Self::SpoofingIdentity,
            "t" | "tampering" => Self::Tampering,
            "r" | "repudiation" => Self::Repudiation,
            "i" | "informationdisclosure" | "disclosure" => Self::InformationDisclosure,
            "d" | "denialofservice" | "dos" => Self::DenialOfService,
            "e" | "elevationofprivilege" | "eop" => Self::ElevationOfPrivilege,
            _ => return Err(DomainError::UnknownStride(s.to_string())),
        };
        Ok(cat)
    }
}

/// ROAM status of a risk. `Unset` until the team picks one.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum RoamStatus {
    #[default]
    Unset,
    Resolved,
    Owned {
        owner: String,
    },
    Accepted,
    Mitigated,
}

impl RoamStatus {
    pub fn owned(owner: impl Into<String>) -> Result<Self, DomainError> {
        let owner = owner.into();
        if owner.trim().is_empty() {
            return Err(DomainError::MissingOwner);
        }
        Ok(Self::Owned { owner })
    }

    pub fn kind(&self) -> RoamKind {
        match self {
            Self::Unset => RoamKind::Unset,
            Self::Resolved => RoamKind::Resolved,
            Self::Owned { .. } => RoamKind::Owned,
            Self::Accepted => RoamKind::Accepted,
            Self::Mitigated => RoamKind::Mitigated,
        }
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        match self {
            Self::Owned { owner } if owner.trim().is_empty() => Err(DomainError::MissingOwner),
            _ => Ok(()),
        }
    }

    /// Accepted and Mitigated are the only statuses that close a risk.
    pub fn is_addressing(&self) -> bool {
        matches!(self, Self::Accepted | Self::Mitigated)
    }
}

impl fmt::Display for RoamStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Owned { owner } => write!(f, "Owned({owner})"),
            other => f.write_str(other.kind().as_str()),
        }
    }
}

/// ROAM status without payload, used by rule conditions and summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RoamKind {
    Unset,
    Resolved,
    Owned,
    Accepted,
    Mitigated,
}

impl RoamKind {
    pub const ALL: [RoamKind; 5] = [
        Self::Unset,
        Self::Resolved,
        Self::Owned,
        Self::Accepted,
        Self::Mitigated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Unset => "Unset",
            Self::Resolved => "Resolved",
            Self::Owned => "Owned",
            Self::Accepted => "Accepted",
            Self::Mitigated => "Mitigated",
        }
    }
}

impl fmt::Display for RoamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoamKind {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| DomainError::UnknownRoam(s.to_string()))
    }
}

/// How a risk got its current score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreBasis {
    /// Computed from a complete factor set.
    Factors,
    /// Likelihood and impact bands entered directly for this threat.
    Direct,
    /// Inherited from a per-STRIDE-category score; replaced by later
    /// category scores, never overrides a per-threat score.
    Category,
}

impl ScoreBasis {
    pub fn is_per_threat(self) -> bool {
        !matches!(self, Self::Category)
    }
}

/// A catalogued threat instantiated on one asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub id: String,
    pub threat_id: String,
    /// Threat title captured when the threat was attached.
    pub title: String,
    pub stride: StrideCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<FactorSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<CriScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis: Option<ScoreBasis>,
    #[serde(default)]
    pub roam: RoamStatus,
    #[serde(default)]
    pub controls: BTreeSet<String>,
    #[serde(default)]
    pub deferred: bool,
}

impl RiskAssessment {
    pub fn level(&self) -> Option<CriLevel> {
        self.score.map(|s| s.level())
    }

    pub fn is_scored(&self) -> bool {
        self.score.is_some()
    }

    /// An Accepted Low-level risk may stay without controls.
    pub fn exempt_from_controls(&self) -> bool {
        self.roam == RoamStatus::Accepted && self.level() == Some(CriLevel::Low)
    }
}

/// True when every non-deferred risk is Accepted or Mitigated. Vacuously
/// true for an empty list; the board decides whether an empty card needs an
/// attestation.
pub fn is_fully_addressed(risks: &[RiskAssessment]) -> bool {
    risks
        .iter()
        .filter(|r| !r.deferred)
        .all(|r| r.roam.is_addressing())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn risk(roam: RoamStatus) -> RiskAssessment {
        RiskAssessment {
            id: "c.R1".into(),
            threat_id: "T1".into(),
            title: "t".into(),
            stride: StrideCategory::Tampering,
            factors: None,
            score: None,
            basis: None,
            roam,
            controls: BTreeSet::new(),
            deferred: false,
        }
    }

    #[test]
    fn fully_addressed_examples() {
        assert!(is_fully_addressed(&[]));
        assert!(is_fully_addressed(&[
            risk(RoamStatus::Accepted),
            risk(RoamStatus::Mitigated)
        ]));
        assert!(!is_fully_addressed(&[
            risk(RoamStatus::Accepted),
            risk(RoamStatus::owned("alice").unwrap())
        ]));
    }

    #[test]
    fn deferred_risks_do_not_block() {
        let mut pending = risk(RoamStatus::Unset);
        pending.deferred = true;
        assert!(is_fully_addressed(&[risk(RoamStatus::Mitigated), pending]));
    }

    #[test]
    fn owned_requires_owner() {
        assert_eq!(RoamStatus::owned(""), Err(DomainError::MissingOwner));
        assert_eq!(RoamStatus::owned("  "), Err(DomainError::MissingOwner));
        let bad: RoamStatus = serde_json::from_str(r#"{"status":"Owned","owner":""}"#).unwrap();
        assert_eq!(bad.validate(), Err(DomainError::MissingOwner));
    }

    #[test]
    fn stride_has_six_categories_and_parses_aliases() {
        assert_eq!(StrideCategory::ALL.len(), 6);
        for cat in StrideCategory::ALL {
            assert_eq!(cat.as_str().parse::<StrideCategory>().unwrap(), cat);
            assert_eq!(cat.label().parse::<StrideCategory>().unwrap(), cat);
        }
        assert_eq!(
            "dos".parse::<StrideCategory>().unwrap(),
            StrideCategory::DenialOfService
        );
        assert!("phishing".parse::<StrideCategory>().is_err());
    }

    #[test]
    fn roam_json_shape() {
        let owned = RoamStatus::owned("bob").unwrap();
        assert_eq!(
            serde_json::to_string(&owned).unwrap(),
            r#"{"status":"Owned","owner":"bob"}"#
        );
        assert_eq!(
            serde_json::to_string(&RoamStatus::Mitigated).unwrap(),
            r#"{"status":"Mitigated"}"#
        );
    }
}
