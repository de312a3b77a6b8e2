use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use myoseg::model::NetworkConfig;
use myoseg::optim::{AdamConfig, TrainPlan};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub train_manifest: PathBuf,
    /// Held-out manifest. Without it the training manifest is split by case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_manifest: Option<PathBuf>,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
}

fn default_validation_fraction() -> f64 {
    0.2
}

/// Complete description of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub train: TrainPlan,
    #[serde(default)]
    pub optimizer: AdamConfig,
    pub data: DataPaths,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Parse and validate. Relative paths are resolved against the directory
    /// holding the config file.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        cfg.data.train_manifest = resolve(&cfg.data.train_manifest);
        cfg.data.test_manifest = cfg.data.test_manifest.as_deref().map(resolve);
        cfg.output_dir = resolve(&cfg.output_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.network.validate().map_err(CliError::usage)?;
        self.train.validate().map_err(CliError::usage)?;
        let o = &self.optimizer;
        if !(o.lr >= 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.eps > 0.0) {
            return Err(CliError::Usage("optimizer needs lr >= 0, betas in [0, 1), eps > 0".into()));
        }
        if !(0.0..1.0).contains(&self.data.validation_fraction) {
            return Err(CliError::Usage("validation_fraction must lie in [0, 1)".into()));
        }
        for m in std::iter::once(&self.data.train_manifest).chain(self.data.test_manifest.as_ref()) {
            if !m.is_file() {
                return Err(CliError::Usage(format!("manifest {} does not exist", m.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        fs::write(&p, r#"{"data": {"train_manifest": "m.json"}, "output_dir": "out", "lr": 1}"#).unwrap();
        assert!(matches!(RunConfig::load(&p), Err(CliError::Usage(_))));
        fs::write(
            &p,
            r#"{"data": {"train_manifest": "m.json"}, "output_dir": "out", "network": {"levles": 3}}"#,
        )
        .unwrap();
        assert!(matches!(RunConfig::load(&p), Err(CliError::Usage(_))));
    }

    #[test]
    fn relative_paths_follow_config() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        fs::write(&p, r#"{"data": {"train_manifest": "m.json"}, "output_dir": "out"}"#).unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.data.train_manifest, dir.path().join("m.json"));
        assert_eq!(cfg.output_dir, dir.path().join("out"));
        assert_eq!(cfg.train, TrainPlan::default());
        // manifest missing
        assert!(matches!(cfg.validate(), Err(CliError::Usage(_))));
    }
}
