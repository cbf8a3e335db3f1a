//! Architecture model documents.
//!
//! A deliberately small, versioned stand-in for a full cloud modelling
//! language: named components with an asset-type tag, plus communication
//! links between them. JSON and YAML are both accepted.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u32),
    #[error("duplicate component id `{0}`")]
    DuplicateComponent(String),
    #[error("link endpoint `{0}` does not name a component")]
    DanglingEndpoint(String),
    #[error("component `{0}` has an empty id or asset type")]
    EmptyField(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub id: String,
    pub name: String,
    /// Asset-type tag used for threat recommendation, e.g. `database`.
    #[serde(rename = "type")]
    pub asset_type: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub channel: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureModel {
    pub model_version: u32,
    pub name: String,
    #[serde(default)]
    pub components: Vec<ComponentSpec>,
    #[serde(default)]
    pub links: Vec<Link>,
}

/// What the board needs to create a card for a component.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CardSeed {
    pub id: String,
    pub name: String,
    pub asset_type: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
}

impl ArchitectureModel {
    /// Parse a JSON or YAML model document and validate it.
    pub fn parse(document: &str) -> Result<Self, ModelError> {
        let trimmed = document.trim_start();
        let model: ArchitectureModel = if trimmed.starts_with('{') {
            serde_json::from_str(document).map_err(|e| ModelError::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?
        } else {
            serde_yaml::from_str(document).map_err(|e| {
                let (line, column) = e
                    .location()
                    .map(|l| (l.line(), l.column()))
                    .unwrap_or((0, 0));
                ModelError::Parse {
                    line,
                    column,
                    message: e.to_string(),
                }
            })?
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.model_version != MODEL_VERSION {
            return Err(ModelError::UnsupportedVersion(self.model_version));
        }
        let mut ids = BTreeSet::new();
        for c in &self.components {
            if c.id.trim().is_empty() || c.asset_type.trim().is_empty() {
                return Err(ModelError::EmptyField(c.id.clone()));
            }
            if !ids.insert(c.id.as_str()) {
                return Err(ModelError::DuplicateComponent(c.id.clone()));
            }
        }
        for link in &self.links {
            for end in [&link.from, &link.to] {
                if !ids.contains(end.as_str()) {
                    return Err(ModelError::DanglingEndpoint(end.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("model serializes")
    }

    /// One card seed per component, in declaration order.
    pub fn to_assets(&self) -> Vec<CardSeed> {
        self.components
            .iter()
            .map(|c| CardSeed {
                id: c.id.clone(),
                name: c.name.clone(),
                asset_type: c.asset_type.clone(),
                description: c.description.clone(),
                provider: c.provider.clone(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MOBILITY: &str = include_str!("../data/models/smart-mobility.yaml");
    pub(crate) const FLIGHTS: &str = include_str!("../data/models/flight-scheduling.json");

    #[test]
    fn smart_mobility_has_four_components() {
        let model = ArchitectureModel::parse(MOBILITY).unwrap();
        assert_eq!(model.components.len(), 4);
        let db = model
            .components
            .iter()
            .find(|c| c.id == "database")
            .unwrap();
        assert_eq!(db.asset_type, "database");
    }

    #[test]
    fn flight_scheduling_has_five_components() {
        let model = ArchitectureModel::parse(FLIGHTS).unwrap();
        assert_eq!(model.components.len(), 5);
    }

    #[test]
    fn dangling_link_rejected() {
        let doc = r#"{"model_version":1,"name":"x",
            "components":[{"id":"a","name":"A","type":"service"}],
            "links":[{"from":"a","to":"ghost","channel":"http"}]}"#;
        assert_eq!(
            ArchitectureModel::parse(doc),
            Err(ModelError::DanglingEndpoint("ghost".into()))
        );
    }

    #[test]
    fn duplicate_component_rejected() {
        let doc = "model_version: 1\nname: x\ncomponents:\n  - {id: a, name: A, type: ui}\n  - {id: a, name: B, type: ui}\n";
        assert_eq!(
            ArchitectureModel::parse(doc),
            Err(ModelError::DuplicateComponent("a".into()))
        );
    }

    #[test]
    fn yaml_parse_error_has_location() {
        let doc = "model_version: 1\nname: x\ncomponents: [\n";
        match ArchitectureModel::parse(doc) {
            Err(ModelError::Parse { line, .. }) => assert!(line >= 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_asset_type_rejected() {
        let doc =
            r#"{"model_version":1,"name":"x","components":[{"id":"a","name":"A","type":" "}]}"#;
        assert!(matches!(
            ArchitectureModel::parse(doc),
            Err(ModelError::EmptyField(_))
        ));
    }

    #[test]
    fn assets_mirror_components() {
        let model = ArchitectureModel::parse(MOBILITY).unwrap();
        let seeds = model.to_assets();
        assert_eq!(seeds.len(), 4);
        for (seed, comp) in seeds.iter().zip(&model.components) {
            assert_eq!(seed.id, comp.id);
            assert_eq!(seed.asset_type, comp.asset_type);
        }

        let empty = ArchitectureModel {
            model_version: 1,
            name: "empty".into(),
            components: vec![],
            links: vec![],
        };
        assert!(empty.to_assets().is_empty());
    }

    #[test]
    fn json_and_yaml_round_trip() {
        let model = ArchitectureModel::parse(FLIGHTS).unwrap();
        assert_eq!(ArchitectureModel::parse(&model.to_json()).unwrap(), model);
        assert_eq!(ArchitectureModel::parse(&model.to_yaml()).unwrap(), model);
    }
}
