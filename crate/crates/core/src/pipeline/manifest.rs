use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::error::{Error, Result};

/// What a run needs to be repeated: the command, its configuration and the
/// code version.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub config: String,
}

pub fn config_hash(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(cfg.to_text().as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            config_sha256: config_hash(cfg),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: cfg.to_text(),
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "command = {}\nversion = {}\nseed = {}\nconfig_sha256 = {}\n\n[config]\n{}",
            self.command, self.version, self.seed, self.config_sha256, self.config
        )
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("manifest.txt");
        std::fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_config() {
        let a = RunConfig::default();
        let b = RunConfig { seed: 1, ..RunConfig::default() };
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
        let m = Manifest::new("train", &b);
        assert!(m.to_text().contains("seed = 1"));
        assert_eq!(RunConfig::parse(m.to_text().split("[config]\n").nth(1).unwrap()).unwrap(), b);
    }
}
