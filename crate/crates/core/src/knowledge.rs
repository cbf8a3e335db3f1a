//! Threat and security-control catalog.
//!
//! The knowledge base holds asset-type tags, threats (each classified under
//! a STRIDE category and scoped to asset types), security controls with
//! NIST-style identifiers and CCM cross-references, and threat→control
//! mappings that say from which CRI level a control becomes required.
//!
//! A knowledge base is an immutable value. [`KnowledgeBase::extend`] returns
//! a new value; user additions are persisted as an overlay document so the
//! shipped catalog file is never rewritten.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::StrideCategory;
use crate::scoring::{CriLevel, FactorGroup, FactorSet};

pub const KB_VERSION: u32 = 1;
pub const KB_OVERLAY_VERSION: u32 = 1;

const BUILTIN_CATALOG: &str = include_str!("../data/knowledge_base.json");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KnowledgeError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported knowledge base version {0}")]
    UnsupportedVersion(u32),
    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },
    #[error("dangling reference to {kind} `{id}`")]
    DanglingReference { kind: &'static str, id: String },
    #[error("threat `{threat}` references unknown asset type `{tag}`")]
    UnknownAssetType { threat: String, tag: String },
    #[error("empty {0}")]
    Empty(&'static str),
}

impl From<serde_json::Error> for KnowledgeError {
    fn from(err: serde_json::Error) -> Self {
        KnowledgeError::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}

/// Pre-populated impact factors for a threat.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ImpactDefaults {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub technical: Option<FactorGroup>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub business: Option<FactorGroup>,
}

impl ImpactDefaults {
    pub fn to_factor_set(self) -> FactorSet {
        FactorSet {
            technical_impact: self.technical,
            business_impact: self.business,
            ..FactorSet::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreatEntry {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    pub stride: StrideCategory,
    /// Empty means the threat applies to every asset type.
    #[serde(default)]
    pub asset_types: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impact_defaults: Option<ImpactDefaults>,
}

impl ThreatEntry {
    pub fn applies_to(&self, asset_type: &str) -> bool {
        self.asset_types.is_empty() || self.asset_types.contains(asset_type)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlEntry {
    /// NIST-style identifier, e.g. `AC-3`.
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub ccm_ids: BTreeSet<String>,
    /// How fulfillment of the control is measured.
    #[serde(default)]
    pub measurement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreatControlMapping {
    pub threat_id: String,
    pub control_id: String,
    /// Lowest CRI level at which the control is required for the threat.
    pub minimum_level: CriLevel,
}

/// A single catalog addition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CatalogEntry {
    AssetType { name: String },
    Threat(ThreatEntry),
    Control(ControlEntry),
    Mapping(ThreatControlMapping),
}

/// User additions on top of a base catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeOverlay {
    pub kb_overlay_version: u32,
    #[serde(default)]
    pub entries: Vec<CatalogEntry>,
}

impl Default for KnowledgeOverlay {
    fn default() -> Self {
        Self {
            kb_overlay_version: KB_OVERLAY_VERSION,
            entries: Vec::new(),
        }
    }
}

impl KnowledgeOverlay {
    pub fn parse(text: &str) -> Result<Self, KnowledgeError> {
        let overlay: KnowledgeOverlay = serde_json::from_str(text)?;
        if overlay.kb_overlay_version != KB_OVERLAY_VERSION {
            return Err(KnowledgeError::UnsupportedVersion(
                overlay.kb_overlay_version,
            ));
        }
        Ok(overlay)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("overlay serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct KnowledgeDocument {
    kb_version: u32,
    #[serde(default)]
    asset_types: Vec<String>,
    #[serde(default)]
    threats: Vec<ThreatEntry>,
    #[serde(default)]
    controls: Vec<ControlEntry>,
    #[serde(default)]
    mappings: Vec<ThreatControlMapping>,
}

/// Controls suggested for a threat at a given CRI level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlRecommendation {
    pub threat_id: String,
    pub level: CriLevel,
    pub required: Vec<ControlEntry>,
    pub optional: Vec<ControlEntry>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeBase {
    asset_types: BTreeSet<String>,
    threats: BTreeMap<String, ThreatEntry>,
    controls: BTreeMap<String, ControlEntry>,
    mappings: Vec<ThreatControlMapping>,
}

impl KnowledgeBase {
    /// The illustrative catalog shipped with the crate.
    pub fn builtin() -> Self {
        Self::load(BUILTIN_CATALOG).expect("shipped catalog is valid")
    }

    /// Parse and validate a knowledge-base JSON document.
    pub fn load(document: &str) -> Result<Self, KnowledgeError> {
        let doc: KnowledgeDocument = serde_json::from_str(document)?;
        if doc.kb_version != KB_VERSION {
            return Err(KnowledgeError::UnsupportedVersion(doc.kb_version));
        }
        let mut kb = KnowledgeBase::default();
        for tag in doc.asset_types {
            kb.insert(CatalogEntry::AssetType { name: tag })?;
        }
        for threat in doc.threats {
            kb.insert(CatalogEntry::Threat(threat))?;
        }
        for control in doc.controls {
            kb.insert(CatalogEntry::Control(control))?;
        }
        for mapping in doc.mappings {
            kb.insert(CatalogEntry::Mapping(mapping))?;
        }
        Ok(kb)
    }

    pub fn to_document(&self) -> String {
        let doc = KnowledgeDocument {
            kb_version: KB_VERSION,
            asset_types: self.asset_types.iter().cloned().collect(),
            threats: self.threats.values().cloned().collect(),
            controls: self.controls.values().cloned().collect(),
            mappings: self.mappings.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("knowledge base serializes")
    }

    pub fn asset_types(&self) -> &BTreeSet<String> {
        &self.asset_types
    }

    pub fn threats(&self) -> impl Iterator<Item = &ThreatEntry> {
        self.threats.values()
    }

    pub fn controls(&self) -> impl Iterator<Item = &ControlEntry> {
        self.controls.values()
    }

    pub fn mappings(&self) -> &[ThreatControlMapping] {
        &self.mappings
    }

    pub fn threat(&self, id: &str) -> Option<&ThreatEntry> {
        self.threats.get(id)
    }

    pub fn control(&self, id: &str) -> Option<&ControlEntry> {
        self.controls.get(id)
    }

    /// Threats applicable to `asset_type`, ordered by id. Unknown types only
    /// see universally applicable threats.
    pub fn recommend_threats(&self, asset_type: &str) -> Vec<&ThreatEntry> {
        self.threats
            .values()
            .filter(|t| t.applies_to(asset_type))
            .collect()
    }

    /// Split the control catalog into controls required for `threat_id` at
    /// `level` and everything else. Low-level risks never require controls.
    pub fn recommend_controls(
        &self,
        threat_id: &str,
        level: CriLevel,
    ) -> Result<ControlRecommendation, KnowledgeError> {
        if !self.threats.contains_key(threat_id) {
            return Err(KnowledgeError::DanglingReference {
                kind: "threat",
                id: threat_id.to_string(),
            });
        }
        let required_ids: BTreeSet<&str> = if level.requires_treatment() {
            self.mappings
                .iter()
                .filter(|m| m.threat_id == threat_id && m.minimum_level <= level)
                .map(|m| m.control_id.as_str())
                .collect()
        } else {
            BTreeSet::new()
        };
        let (required, optional) = self
            .controls
            .values()
            .cloned()
            .partition(|c| required_ids.contains(c.id.as_str()));
        Ok(ControlRecommendation {
            threat_id: threat_id.to_string(),
            level,
            required,
            optional,
        })
    }

    /// A new knowledge base with `entry` added; `self` is untouched.
    pub fn extend(&self, entry: CatalogEntry) -> Result<KnowledgeBase, KnowledgeError> {
        let mut next = self.clone();
        next.insert(entry)?;
        Ok(next)
    }

    pub fn apply_overlay(
        &self,
        overlay: &KnowledgeOverlay,
    ) -> Result<KnowledgeBase, KnowledgeError> {
        let mut next = self.clone();
        for entry in &overlay.entries {
            next.insert(entry.clone())?;
        }
        Ok(next)
    }

    fn insert(&mut self, entry: CatalogEntry) -> Result<(), KnowledgeError> {
        match entry {
            CatalogEntry::AssetType { name } => {
                if name.trim().is_empty() {
                    return Err(KnowledgeError::Empty("asset type tag"));
                }
                if !self.asset_types.insert(name.clone()) {
                    return Err(KnowledgeError::DuplicateId {
                        kind: "asset type",
                        id: name,
                    });
                }
            }
            CatalogEntry::Threat(threat) => {
                if threat.id.trim().is_empty() {
                    return Err(KnowledgeError::Empty("threat id"));
                }
                if self.threats.contains_key(&threat.id) {
                    return Err(KnowledgeError::DuplicateId {
                        kind: "threat",
                        id: threat.id,
                    });
                }
                if let Some(tag) = threat
                    .asset_types
                    .iter()
                    .find(|t| !self.asset_types.contains(*t))
                {
                    return Err(KnowledgeError::UnknownAssetType {
                        threat: threat.id.clone(),
                        tag: tag.clone(),
                    });
                }
                self.threats.insert(threat.id.clone(), threat);
            }
            CatalogEntry::Control(control) => {
                if control.id.trim().is_empty() {
                    return Err(KnowledgeError::Empty("control id"));
                }
                if self.controls.contains_key(&control.id) {
                    return Err(KnowledgeError::DuplicateId {
                        kind: "control",
                        id: control.id,
                    });
                }
                self.controls.insert(control.id.clone(), control);
            }
            CatalogEntry::Mapping(mapping) => {
                if !self.threats.contains_key(&mapping.threat_id) {
                    return Err(KnowledgeError::DanglingReference {
                        kind: "threat",
                        id: mapping.threat_id,
                    });
                }
                if !self.controls.contains_key(&mapping.control_id) {
                    return Err(KnowledgeError::DanglingReference {
                        kind: "control",
                        id: mapping.control_id,
                    });
                }
                if self
                    .mappings
                    .iter()
                    .any(|m| m.threat_id == mapping.threat_id && m.control_id == mapping.control_id)
                {
                    return Err(KnowledgeError::DuplicateId {
                        kind: "mapping",
                        id: format!("{}->{}", mapping.threat_id, mapping.control_id),
                    });
                }
                self.mappings.push(mapping);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_doc(mapping_control: &str, second_threat_id: &str) -> String {
        format!(
            r#"{{
  "kb_version": 1,
  "asset_types": ["database", "gateway"],
  "threats": [
    {{"id": "T1", "title": "one", "description": "", "stride": "Tampering", "asset_types": ["database"]}},
    {{"id": "{second_threat_id}", "title": "two", "description": "", "stride": "SpoofingIdentity", "asset_types": ["gateway"],
      "impact_defaults": {{"technical": [1,2,3,4], "business": [5,6,7,8]}}}}
  ],
  "controls": [
    {{"id": "C1", "title": "c1", "ccm_ids": ["IAM-01"], "measurement": "m"}},
    {{"id": "C2", "title": "c2", "ccm_ids": [], "measurement": "m"}},
    {{"id": "C3", "title": "c3", "ccm_ids": ["EKM-02"], "measurement": "m"}}
  ],
  "mappings": [
    {{"threat_id": "T1", "control_id": "C1", "minimum_level": "Medium"}},
    {{"threat_id": "T1", "control_id": "C2", "minimum_level": "High"}},
    {{"threat_id": "T2", "control_id": "C3", "minimum_level": "Medium"}},
    {{"threat_id": "T2", "control_id": "{mapping_control}", "minimum_level": "High"}}
  ]
}}"#
        )
    }

    fn ids(controls: &[ControlEntry]) -> Vec<&str> {
        controls.iter().map(|c| c.id.as_str()).collect()
    }

    #[test]
    fn load_counts() {
        let kb = KnowledgeBase::load(&small_doc("C1", "T2")).unwrap();
        assert_eq!(kb.threats().count(), 2);
        assert_eq!(kb.controls().count(), 3);
        assert_eq!(kb.mappings().len(), 4);
    }

    #[test]
    fn dangling_control_is_named() {
        let err = KnowledgeBase::load(&small_doc("XX-9", "T2")).unwrap_err();
        assert!(err.to_string().contains("XX-9"), "{err}");
    }

    #[test]
    fn duplicate_threat_rejected() {
        let err = KnowledgeBase::load(&small_doc("C1", "T1")).unwrap_err();
        assert_eq!(
            err,
            KnowledgeError::DuplicateId {
                kind: "threat",
                id: "T1".into()
            }
        );
    }

    #[test]
    fn parse_error_has_location() {
        let err =
            KnowledgeBase::load("{\n  \"kb_version\": 1,\n  \"threats\": [,]\n}").unwrap_err();
        match err {
            KnowledgeError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_asset_tag_rejected() {
        let doc = r#"{"kb_version":1,"asset_types":[],"threats":[{"id":"T1","title":"x","stride":"Tampering","asset_types":["db"]}]}"#;
        assert!(matches!(
            KnowledgeBase::load(doc),
            Err(KnowledgeError::UnknownAssetType { .. })
        ));
    }

    fn recommend_kb() -> KnowledgeBase {
        let doc = r#"{"kb_version":1,"asset_types":["database","gateway"],
          "threats":[
            {"id":"T1","title":"a","stride":"Tampering","asset_types":["database"]},
            {"id":"T2","title":"b","stride":"Tampering","asset_types":["gateway"]},
            {"id":"T3","title":"c","stride":"Repudiation","asset_types":[]}],
          "controls":[{"id":"C1","title":"1"},{"id":"C2","title":"2"},{"id":"C3","title":"3"}],
          "mappings":[
            {"threat_id":"T1","control_id":"C1","minimum_level":"Medium"},
            {"threat_id":"T1","control_id":"C2","minimum_level":"High"}]}"#;
        KnowledgeBase::load(doc).unwrap()
    }

    #[test]
    fn threat_recommendations_follow_asset_type() {
        let kb = recommend_kb();
        let pick = |t: &str| -> Vec<String> {
            kb.recommend_threats(t)
                .iter()
                .map(|t| t.id.clone())
                .collect()
        };
        assert_eq!(pick("database"), ["T1", "T3"]);
        assert_eq!(pick("gateway"), ["T2", "T3"]);
        assert_eq!(pick("quantum"), ["T3"]);
    }

    #[test]
    fn control_recommendations_by_level() {
        let kb = recommend_kb();
        let high = kb.recommend_controls("T1", CriLevel::High).unwrap();
        assert_eq!(ids(&high.required), ["C1", "C2"]);
        assert_eq!(ids(&high.optional), ["C3"]);

        let medium = kb.recommend_controls("T1", CriLevel::Medium).unwrap();
        assert_eq!(ids(&medium.required), ["C1"]);
        assert_eq!(ids(&medium.optional), ["C2", "C3"]);

        let low = kb.recommend_controls("T1", CriLevel::Low).unwrap();
        assert!(low.required.is_empty());
        assert_eq!(ids(&low.optional), ["C1", "C2", "C3"]);

        assert!(kb.recommend_controls("T404", CriLevel::High).is_err());
    }

    #[test]
    fn extend_keeps_original() {
        let kb = recommend_kb();
        let t9 = ThreatEntry {
            id: "T9".into(),
            title: "nine".into(),
            description: String::new(),
            stride: StrideCategory::DenialOfService,
            asset_types: BTreeSet::new(),
            impact_defaults: None,
        };
        let kb2 = kb.extend(CatalogEntry::Threat(t9.clone())).unwrap();
        assert!(kb2.threat("T9").is_some());
        assert!(kb.threat("T9").is_none());

        let kb3 = kb2
            .extend(CatalogEntry::Mapping(ThreatControlMapping {
                threat_id: "T9".into(),
                control_id: "C1".into(),
                minimum_level: CriLevel::Medium,
            }))
            .unwrap();
        assert_eq!(kb3.mappings().len(), 3);

        let err = kb3
            .extend(CatalogEntry::Mapping(ThreatControlMapping {
                threat_id: "T404".into(),
                control_id: "C1".into(),
                minimum_level: CriLevel::Low,
            }))
            .unwrap_err();
        assert_eq!(
            err,
            KnowledgeError::DanglingReference {
                kind: "threat",
                id: "T404".into()
            }
        );
        assert!(matches!(
            kb3.extend(CatalogEntry::Threat(t9)),
            Err(KnowledgeError::DuplicateId { .. })
        ));
    }

    #[test]
    fn overlay_round_trip() {
        let overlay = KnowledgeOverlay {
            kb_overlay_version: 1,
            entries: vec![
                CatalogEntry::AssetType {
                    name: "queue".into(),
                },
                CatalogEntry::Control(ControlEntry {
                    id: "SC-99".into(),
                    title: "x".into(),
                    description: String::new(),
                    ccm_ids: BTreeSet::new(),
                    measurement: String::new(),
                }),
            ],
        };
        let parsed = KnowledgeOverlay::parse(&overlay.to_json()).unwrap();
        assert_eq!(parsed, overlay);
        let kb = recommend_kb().apply_overlay(&parsed).unwrap();
        assert!(kb.asset_types().contains("queue"));
        assert!(kb.control("SC-99").is_some());
    }

    #[test]
    fn builtin_catalog_shape() {
        let kb = KnowledgeBase::builtin();
        assert_eq!(kb.threats().count(), 12);
        for cat in StrideCategory::ALL {
            assert_eq!(kb.threats().filter(|t| t.stride == cat).count(), 2, "{cat}");
        }
        assert!(kb.controls().count() >= 15);
        // every asset type gets at least two suggestions
        for tag in kb.asset_types() {
            assert!(kb.recommend_threats(tag).len() >= 2, "{tag}");
        }
        // every threat has something required at High
        for t in kb.threats() {
            let rec = kb.recommend_controls(&t.id, CriLevel::High).unwrap();
            assert!(!rec.required.is_empty(), "{}", t.id);
        }
    }

    #[test]
    fn impact_defaults_become_factor_groups() {
        let kb = KnowledgeBase::load(&small_doc("C1", "T2")).unwrap();
        let set = kb
            .threat("T2")
            .unwrap()
            .impact_defaults
            .unwrap()
            .to_factor_set();
        assert!(set.threat_agent.is_none());
        assert_eq!(set.business_impact.unwrap().values(), &[5.0, 6.0, 7.0, 8.0]);
    }
}
