use std::path::{Path, PathBuf};

use serde::Deserialize;

pub const ENV_DATA_DIR: &str = "RISKBOARD_DATA_DIR";
pub const ENV_BIND: &str = "RISKBOARD_BIND";
pub const ENV_KB: &str = "RISKBOARD_KB";

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: String,
    /// Knowledge-base file; the built-in catalog when absent.
    pub knowledge_base: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("riskboard-data"),
            bind: "127.0.0.1:8080".into(),
            knowledge_base: None,
        }
    }
}

impl ServiceConfig {
    /// Read an optional TOML file, then apply environment overrides.
    pub fn load(file: Option<&Path>) -> anyhow::Result<Self> {
        let mut config = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
                toml::from_str(&text)?
            }
            None => Self::default(),
        };
        config.apply_env(|key| std::env::var(key).ok());
        Ok(config)
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(dir) = lookup(ENV_DATA_DIR) {
            self.data_dir = dir.into();
        }
        if let Some(bind) = lookup(ENV_BIND) {
            self.bind = bind;
        }
        if let Some(kb) = lookup(ENV_KB) {
            self.knowledge_base = Some(kb.into());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_then_env() {
        let mut config: ServiceConfig =
            toml::from_str("data_dir = \"/srv/boards\"\nbind = \"0.0.0.0:9000\"").unwrap();
        assert_eq!(config.data_dir, PathBuf::from("/srv/boards"));
        assert_eq!(config.knowledge_base, None);
        config.apply_env(|k| (k == ENV_BIND).then(|| "127.0.0.1:1".to_string()));
        assert_eq!(config.bind, "127.0.0.1:1");
        assert_eq!(config.data_dir, PathBuf::from("/srv/boards"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<ServiceConfig>("colour = 1").is_err());
    }
}
