//! Composite Risk Index (CRI) scoring.
//!
//! Likelihood and impact are each estimated from OWASP-style factor groups
//! valued on a 0-9 scale. The mean of a side's eight factors is quantized
//! onto a 1-5 band and the CRI is the product of the two bands:
//!
//! ```text
//! likelihood = band(mean(threat_agent ++ vulnerability))
//! impact     = band(mean(technical_impact ++ business_impact))
//! cri        = likelihood * impact            (1..=25)
//! ```
//!
//! Band table (uniform over [0, 9]):
//!
//! | value         | band |
//! |---------------|------|
//! | [0.0, 1.8)    | 1    |
//! | [1.8, 3.6)    | 2    |
//! | [3.6, 5.4)    | 3    |
//! | [5.4, 7.2)    | 4    |
//! | [7.2, 9.0]    | 5    |
//!
//! Level table: Low for CRI 1-5, Medium for 6-12, High for 13-25.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lowest admissible factor value.
pub const FACTOR_MIN: f64 = 0.0;
/// Highest admissible factor value.
pub const FACTOR_MAX: f64 = 9.0;

/// Number of factors in every group.
pub const FACTORS_PER_GROUP: usize = 4;

/// Upper (exclusive) edges of bands 1 through 4. Everything at or above the
/// last edge, up to 9, is band 5.
const BAND_EDGES: [f64; 4] = [1.8, 3.6, 5.4, 7.2];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("empty factor group")]
    EmptyFactorGroup,
    #[error("factor out of range: {0} is not within [0, 9]")]
    FactorOutOfRange(f64),
    #[error("factor group must contain exactly {FACTORS_PER_GROUP} factors, got {0}")]
    GroupSize(usize),
    #[error("incomplete factor set, missing groups: {}", join_groups(.0))]
    IncompleteFactorSet(Vec<FactorGroupKind>),
    #[error("band out of range: {0} is not within 1..=5")]
    BandOutOfRange(u8),
    #[error("CRI out of range: {0} is not within 1..=25")]
    CriOutOfRange(u32),
    #[error("inconsistent CRI score: {0}")]
    InconsistentScore(String),
    #[error("unknown risk level `{0}`")]
    UnknownLevel(String),
}

fn join_groups(groups: &[FactorGroupKind]) -> String {
    groups
        .iter()
        .map(|g| g.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

fn check_factor(value: f64) -> Result<f64, ScoringError> {
    if (FACTOR_MIN..=FACTOR_MAX).contains(&value) {
        Ok(value)
    } else {
        Err(ScoringError::FactorOutOfRange(value))
    }
}

/// The four OWASP factor groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorGroupKind {
    ThreatAgent,
    Vulnerability,
    TechnicalImpact,
    BusinessImpact,
}

impl FactorGroupKind {
    pub const ALL: [FactorGroupKind; 4] = [
        Self::ThreatAgent,
        Self::Vulnerability,
        Self::TechnicalImpact,
        Self::BusinessImpact,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ThreatAgent => "threat_agent",
            Self::Vulnerability => "vulnerability",
            Self::TechnicalImpact => "technical_impact",
            Self::BusinessImpact => "business_impact",
        }
    }

    /// Factor names, in the positional order used by [`FactorGroup`].
    pub fn factor_names(self) -> [&'static str; FACTORS_PER_GROUP] {
        match self {
            Self::ThreatAgent => ["skill level", "motive", "opportunity", "size"],
            Self::Vulnerability => [
                "ease of discovery",
                "ease of exploit",
                "awareness",
                "intrusion detection",
            ],
            Self::TechnicalImpact => [
                "loss of confidentiality",
                "loss of integrity",
                "loss of availability",
                "loss of accountability",
            ],
            Self::BusinessImpact => [
                "financial damage",
                "reputation damage",
                "non-compliance",
                "privacy violation",
            ],
        }
    }
}

impl fmt::Display for FactorGroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Four factor values, each in [0, 9].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FactorGroup([f64; FACTORS_PER_GROUP]);

impl FactorGroup {
    pub fn new(values: [f64; FACTORS_PER_GROUP]) -> Result<Self, ScoringError> {
        for v in values {
            check_factor(v)?;
        }
        Ok(Self(values))
    }

    /// A group with every factor set to `value`.
    pub fn uniform(value: f64) -> Result<Self, ScoringError> {
        Self::new([value; FACTORS_PER_GROUP])
    }

    pub fn values(&self) -> &[f64; FACTORS_PER_GROUP] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for FactorGroup {
    type Error = ScoringError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        let arr: [f64; FACTORS_PER_GROUP] = values
            .as_slice()
            .try_into()
            .map_err(|_| ScoringError::GroupSize(values.len()))?;
        Self::new(arr)
    }
}

impl From<FactorGroup> for Vec<f64> {
    fn from(group: FactorGroup) -> Self {
        group.0.to_vec()
    }
}

/// Factor values for one risk. Groups may be missing while an assessment
/// is in progress (e.g. only the impact defaults from the catalog are known).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FactorSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threat_agent: Option<FactorGroup>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vulnerability: Option<FactorGroup>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub technical_impact: Option<FactorGroup>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub business_impact: Option<FactorGroup>,
}

impl FactorSet {
    pub fn complete(
        threat_agent: FactorGroup,
        vulnerability: FactorGroup,
        technical_impact: FactorGroup,
        business_impact: FactorGroup,
    ) -> Self {
        Self {
            threat_agent: Some(threat_agent),
            vulnerability: Some(vulnerability),
            technical_impact: Some(technical_impact),
            business_impact: Some(business_impact),
        }
    }

    /// Every factor in all four groups set to `value`.
    pub fn uniform(value: f64) -> Result<Self, ScoringError> {
        let g = FactorGroup::uniform(value)?;
        Ok(Self::complete(g, g, g, g))
    }

    pub fn group(&self, kind: FactorGroupKind) -> Option<&FactorGroup> {
        match kind {
            FactorGroupKind::ThreatAgent => self.threat_agent.as_ref(),
            FactorGroupKind::Vulnerability => self.vulnerability.as_ref(),
            FactorGroupKind::TechnicalImpact => self.technical_impact.as_ref(),
            FactorGroupKind::BusinessImpact => self.business_impact.as_ref(),
        }
    }

    pub fn group_mut(&mut self, kind: FactorGroupKind) -> &mut Option<FactorGroup> {
        match kind {
            FactorGroupKind::ThreatAgent => &mut self.threat_agent,
            FactorGroupKind::Vulnerability => &mut self.vulnerability,
            FactorGroupKind::TechnicalImpact => &mut self.technical_impact,
            FactorGroupKind::BusinessImpact => &mut self.business_impact,
        }
    }

    pub fn missing_groups(&self) -> Vec<FactorGroupKind> {
        FactorGroupKind::ALL
            .into_iter()
            .filter(|k| self.group(*k).is_none())
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.missing_groups().is_empty()
    }

    pub fn is_empty(&self) -> bool {
        FactorGroupKind::ALL
            .iter()
            .all(|k| self.group(*k).is_none())
    }

    /// Fill groups missing here from `other`.
    pub fn or(mut self, other: &FactorSet) -> FactorSet {
        for kind in FactorGroupKind::ALL {
            let slot = self.group_mut(kind);
            if slot.is_none() {
                *slot = other.group(kind).copied();
            }
        }
        self
    }
}

/// A quantized likelihood or impact value on the 1-5 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Band(u8);

impl Band {
    pub const MIN: Band = Band(1);
    pub const MAX: Band = Band(5);

    pub fn new(value: u8) -> Result<Self, ScoringError> {
        if (1..=5).contains(&value) {
            Ok(Band(value))
        } else {
            Err(ScoringError::BandOutOfRange(value))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Band> {
        (1..=5).map(Band)
    }
}

impl TryFrom<u8> for Band {
    type Error = ScoringError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Band::new(value)
    }
}

impl From<Band> for u8 {
    fn from(band: Band) -> Self {
        band.0
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Treatment level of a CRI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CriLevel {
    Low,
    Medium,
    High,
}

impl CriLevel {
    pub const ALL: [CriLevel; 3] = [CriLevel::Low, CriLevel::Medium, CriLevel::High];

    /// Medium and High risks require mitigation; Low risks may be left untreated.
    pub fn requires_treatment(self) -> bool {
        self >= CriLevel::Medium
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Low => "Low",
            Self::Medium => "Medium",
            Self::High => "High",
        }
    }
}

impl fmt::Display for CriLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CriLevel {
    type Err = ScoringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Self::Low),
            "medium" => Ok(Self::Medium),
            "high" => Ok(Self::High),
            _ => Err(ScoringError::UnknownLevel(s.to_string())),
        }
    }
}

/// A computed risk score. Only constructible through [`compute_cri`] (or
/// deserialization, which re-checks the product and level).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawCriScore")]
pub struct CriScore {
    likelihood: Band,
    impact: Band,
    cri: u8,
    level: CriLevel,
}

#[derive(Deserialize)]
struct RawCriScore {
    likelihood: Band,
    impact: Band,
    cri: u8,
    level: CriLevel,
}

impl TryFrom<RawCriScore> for CriScore {
    type Error = ScoringError;

    fn try_from(raw: RawCriScore) -> Result<Self, Self::Error> {
        let score = compute_cri(raw.likelihood, raw.impact);
        if score.cri != raw.cri || score.level != raw.level {
            return Err(ScoringError::InconsistentScore(format!(
                "{} x {} does not give cri {} ({})",
                raw.likelihood, raw.impact, raw.cri, raw.level
            )));
        }
        Ok(score)
    }
}

impl CriScore {
    pub fn likelihood(&self) -> Band {
        self.likelihood
    }

    pub fn impact(&self) -> Band {
        self.impact
    }

    pub fn cri(&self) -> u8 {
        self.cri
    }

    pub fn level(&self) -> CriLevel {
        self.level
    }
}

impl fmt::Display for CriScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "L{} x I{} = {} ({})",
            self.likelihood, self.impact, self.cri, self.level
        )
    }
}

/// Arithmetic mean of a factor group.
pub fn average_factor_group(factors: &[f64]) -> Result<f64, ScoringError> {
    if factors.is_empty() {
        return Err(ScoringError::EmptyFactorGroup);
    }
    let mut sum = 0.0;
    for &v in factors {
        sum += check_factor(v)?;
    }
    Ok(sum / factors.len() as f64)
}

/// Map a value in [0, 9] onto the 1-5 band scale.
pub fn quantize_band(value: f64) -> Result<Band, ScoringError> {
    check_factor(value)?;
    let band = BAND_EDGES.iter().take_while(|edge| value >= **edge).count() as u8 + 1;
    Ok(Band(band))
}

pub fn compute_cri(likelihood: Band, impact: Band) -> CriScore {
    let cri = likelihood.0 * impact.0;
    CriScore {
        likelihood,
        impact,
        cri,
        // product of two bands is always within 1..=25
        level: level_for(cri),
    }
}

fn level_for(cri: u8) -> CriLevel {
    match cri {
        0..=5 => CriLevel::Low,
        6..=12 => CriLevel::Medium,
        _ => CriLevel::High,
    }
}

pub fn cri_level(cri: u32) -> Result<CriLevel, ScoringError> {
    if !(1..=25).contains(&cri) {
        return Err(ScoringError::CriOutOfRange(cri));
    }
    Ok(level_for(cri as u8))
}

/// Score a complete factor set.
pub fn score_from_factors(factors: &FactorSet) -> Result<CriScore, ScoringError> {
    let missing = factors.missing_groups();
    if !missing.is_empty() {
        return Err(ScoringError::IncompleteFactorSet(missing));
    }
    let side = |a: FactorGroupKind, b: FactorGroupKind| -> Result<Band, ScoringError> {
        let values: Vec<f64> = [a, b]
            .iter()
            .flat_map(|k| factors.group(*k).map(|g| g.0).unwrap_or_default())
            .collect();
        quantize_band(average_factor_group(&values)?)
    };
    let likelihood = side(FactorGroupKind::ThreatAgent, FactorGroupKind::Vulnerability)?;
    let impact = side(
        FactorGroupKind::TechnicalImpact,
        FactorGroupKind::BusinessImpact,
    )?;
    Ok(compute_cri(likelihood, impact))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band(v: u8) -> Band {
        Band::new(v).unwrap()
    }

    #[test]
    fn average_examples() {
        assert_eq!(average_factor_group(&[5.0, 5.0, 5.0, 5.0]).unwrap(), 5.0);
        assert_eq!(average_factor_group(&[0.0; 4]).unwrap(), 0.0);
        assert_eq!(average_factor_group(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2.5);
    }

    #[test]
    fn average_errors() {
        assert_eq!(
            average_factor_group(&[]).unwrap_err().to_string(),
            "empty factor group"
        );
        let err = average_factor_group(&[1.0, 9.5]).unwrap_err();
        assert!(err.to_string().starts_with("factor out of range"));
        assert!(average_factor_group(&[f64::NAN]).is_err());
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize_band(0.0).unwrap(), band(1));
        assert_eq!(quantize_band(9.0).unwrap(), band(5));
        assert_eq!(quantize_band(4.5).unwrap(), band(3));
    }

    #[test]
    fn quantize_band_edges() {
        let cases = [
            (1.79, 1),
            (1.8, 2),
            (3.59, 2),
            (3.6, 3),
            (5.39, 3),
            (5.4, 4),
            (7.19, 4),
            (7.2, 5),
        ];
        for (v, b) in cases {
            assert_eq!(quantize_band(v).unwrap(), band(b), "value {v}");
        }
        assert!(quantize_band(-0.01).is_err());
        assert!(quantize_band(9.01).is_err());
    }

    #[test]
    fn cri_examples() {
        assert_eq!(compute_cri(band(1), band(1)).cri(), 1);
        assert_eq!(compute_cri(band(5), band(5)).cri(), 25);
        assert_eq!(compute_cri(band(2), band(3)).cri(), 6);
    }

    #[test]
    fn level_examples() {
        assert_eq!(cri_level(1).unwrap(), CriLevel::Low);
        assert_eq!(cri_level(9).unwrap(), CriLevel::Medium);
        assert_eq!(cri_level(20).unwrap(), CriLevel::High);
        assert_eq!(cri_level(5).unwrap(), CriLevel::Low);
        assert_eq!(cri_level(6).unwrap(), CriLevel::Medium);
        assert_eq!(cri_level(12).unwrap(), CriLevel::Medium);
        assert_eq!(cri_level(13).unwrap(), CriLevel::High);
        assert!(cri_level(0).is_err());
        assert!(cri_level(26).is_err());
    }

    #[test]
    fn score_examples() {
        let max = score_from_factors(&FactorSet::uniform(9.0).unwrap()).unwrap();
        assert_eq!(
            (max.likelihood(), max.impact(), max.cri()),
            (band(5), band(5), 25)
        );

        let min = score_from_factors(&FactorSet::uniform(0.0).unwrap()).unwrap();
        assert_eq!(
            (min.likelihood(), min.impact(), min.cri()),
            (band(1), band(1), 1)
        );

        // means 5.0 and 2.0 fall in bands 3 and 2
        let five = FactorGroup::uniform(5.0).unwrap();
        let two = FactorGroup::uniform(2.0).unwrap();
        let mixed = score_from_factors(&FactorSet::complete(five, five, two, two)).unwrap();
        assert_eq!(mixed.likelihood(), band(3));
        assert_eq!(mixed.impact(), band(2));
        assert_eq!(mixed.cri(), 6);
        assert_eq!(mixed.level(), CriLevel::Medium);
    }

    #[test]
    fn incomplete_set_lists_missing_groups() {
        let mut set = FactorSet::uniform(3.0).unwrap();
        set.vulnerability = None;
        set.business_impact = None;
        let err = score_from_factors(&set).unwrap_err();
        assert_eq!(
            err,
            ScoringError::IncompleteFactorSet(vec![
                FactorGroupKind::Vulnerability,
                FactorGroupKind::BusinessImpact
            ])
        );
        assert!(err.to_string().contains("vulnerability, business_impact"));
    }

    #[test]
    fn group_deserialization_validates() {
        assert!(serde_json::from_str::<FactorGroup>("[1,2,3,4]").is_ok());
        assert!(serde_json::from_str::<FactorGroup>("[1,2,3]").is_err());
        assert!(serde_json::from_str::<FactorGroup>("[1,2,3,10]").is_err());
        assert!(serde_json::from_str::<Band>("0").is_err());
    }

    #[test]
    fn score_deserialization_rejects_tampered_product() {
        let ok = r#"{"likelihood":3,"impact":2,"cri":6,"level":"Medium"}"#;
        assert_eq!(serde_json::from_str::<CriScore>(ok).unwrap().cri(), 6);
        let bad = r#"{"likelihood":3,"impact":2,"cri":7,"level":"Medium"}"#;
        assert!(serde_json::from_str::<CriScore>(bad).is_err());
    }

    #[test]
    fn or_fills_missing_groups_only() {
        let mut partial = FactorSet::default();
        partial.threat_agent = Some(FactorGroup::uniform(1.0).unwrap());
        let defaults = FactorSet::uniform(7.0).unwrap();
        let merged = partial.or(&defaults);
        assert_eq!(merged.threat_agent.unwrap().values(), &[1.0; 4]);
        assert_eq!(merged.business_impact.unwrap().values(), &[7.0; 4]);
    }
}
