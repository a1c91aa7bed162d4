use std::path::Path;

use credtrack_core::sim::SceneScript;
use credtrack_core::{Error, Result, TrackerConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Contents of a `--config` file. Both tables are optional; missing keys take
/// their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tracker: TrackerConfig,
    pub scene: SceneScript,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { tracker: TrackerConfig::default(), scene: SceneScript::drifting(500) }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text)?;
        config.tracker.validate()?;
        config.scene.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", p.display())))?;
                RunConfig::from_toml(&text)
            }
        }
    }

    /// Digest of the effective configuration, independent of file layout.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_toml("[tracker]\npolicy = \"interval\"\n[scene]\nlength = 40\n").unwrap();
        assert_eq!(c.tracker.policy, credtrack_core::MemoryPolicy::Interval);
        assert_eq!(c.tracker.n_w, 5);
        assert_eq!(c.scene.length, 40);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[tracker]\nwindow = 3\n").is_err());
        assert!(RunConfig::from_toml("[trakcer]\n").is_err());
    }

    #[test]
    fn digest_ignores_formatting() {
        let a = RunConfig::from_toml("[tracker]\nn_w = 5\n").unwrap();
        let b = RunConfig::from_toml("[tracker]\n\n   n_w=5 # same\n").unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), RunConfig::from_toml("[tracker]\nn_w = 4\n").unwrap().digest());
    }
}
