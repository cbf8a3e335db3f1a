use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// What a column is for; decides which edits are allowed there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    /// Imported components waiting for analysis.
    Intake,
    /// Threat identification and risk evaluation.
    RiskDefinition,
    /// Control selection and ROAM status.
    ControlDefinition,
    /// Finished assessments.
    Validation,
}

const ROLE_ORDER: [ColumnRole; 4] = [
    ColumnRole::Intake,
    ColumnRole::RiskDefinition,
    ColumnRole::ControlDefinition,
    ColumnRole::Validation,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    /// Short handle for CLIs and URLs.
    pub key: String,
    pub role: ColumnRole,
    /// 1-based methodology steps this column covers. Empty for the intake
    /// and validation columns.
    #[serde(default)]
    pub steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoardDefinition {
    pub columns: Vec<ColumnSpec>,
    pub methodology_steps: Vec<String>,
}

impl BoardDefinition {
    /// Four columns; the four methodology steps are merged pairwise into the
    /// two middle columns.
    pub fn default_four_column() -> Self {
        let col = |name: &str, key: &str, role, steps: Vec<usize>| ColumnSpec {
            name: name.into(),
            key: key.into(),
            role,
            steps,
        };
        Self {
            columns: vec![
                col(
                    "Components definition",
                    "components",
                    ColumnRole::Intake,
                    vec![],
                ),
                col(
                    "Risks definition",
                    "risks",
                    ColumnRole::RiskDefinition,
                    vec![1, 2],
                ),
                col(
                    "Security controls definition",
                    "controls",
                    ColumnRole::ControlDefinition,
                    vec![3, 4],
                ),
                col("Validation", "validation", ColumnRole::Validation, vec![]),
            ],
            methodology_steps: vec![
                "Risk identification".into(),
                "Risk evaluation".into(),
                "Mitigation actions selection".into(),
                "Risk status evaluation".into(),
            ],
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let roles: Vec<ColumnRole> = self.columns.iter().map(|c| c.role).collect();
        if roles != ROLE_ORDER {
            return Err(format!(
                "columns must have roles {ROLE_ORDER:?} in order, got {roles:?}"
            ));
        }
        let mut names = BTreeSet::new();
        let mut keys = BTreeSet::new();
        for c in &self.columns {
            if c.name.trim().is_empty() || c.key.trim().is_empty() {
                return Err("column name and key must not be empty".into());
            }
            if c.name == crate::rules::ANY_TARGET || c.key.parse::<usize>().is_ok() {
                return Err(format!("column `{}` uses a reserved name or key", c.name));
            }
            if !names.insert(c.name.to_lowercase()) {
                return Err(format!("duplicate column name `{}`", c.name));
            }
            if !keys.insert(c.key.to_lowercase()) {
                return Err(format!("duplicate column key `{}`", c.key));
            }
        }
        let first = &self.columns[0];
        let last = &self.columns[self.columns.len() - 1];
        if !first.steps.is_empty() || !last.steps.is_empty() {
            return Err("intake and validation columns carry no methodology steps".into());
        }
        // middle columns partition 1..=n in order, each non-empty
        let middle = &self.columns[1..self.columns.len() - 1];
        if middle.iter().any(|c| c.steps.is_empty()) {
            return Err("every methodology column must map at least one step".into());
        }
        let covered: Vec<usize> = middle
            .iter()
            .flat_map(|c| c.steps.iter().copied())
            .collect();
        let expected: Vec<usize> = (1..=self.methodology_steps.len()).collect();
        if covered != expected {
            return Err(format!(
                "methodology columns must cover steps {expected:?} in order, got {covered:?}"
            ));
        }
        Ok(())
    }

    pub fn column_by_name(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn index_of_role(&self, role: ColumnRole) -> usize {
        self.columns
            .iter()
            .position(|c| c.role == role)
            .expect("validated definitions contain every role")
    }

    pub fn role_at(&self, index: usize) -> Option<ColumnRole> {
        self.columns.get(index).map(|c| c.role)
    }

    pub fn name_at(&self, index: usize) -> &str {
        self.columns
            .get(index)
            .map(|c| c.name.as_str())
            .unwrap_or("?")
    }

    /// Resolve a column from an index, key or name (case-insensitive).
    pub fn resolve(&self, handle: &str) -> Option<usize> {
        let handle = handle.trim();
        if let Ok(i) = handle.parse::<usize>() {
            return (i < self.columns.len()).then_some(i);
        }
        self.columns
            .iter()
            .position(|c| c.key.eq_ignore_ascii_case(handle) || c.name.eq_ignore_ascii_case(handle))
    }
}
