//! Run configuration: one TOML file, optionally overridden by flags.
//!
//! ```toml
//! seed = 7          # required
//! runs = 10
//!
//! [paths]
//! data_dir = "data"
//! output_dir = "out"
//!
//! [synth]           # any SynthConfig field
//! months = 20
//!
//! [plan]            # any TransferPlan field
//! source_farm_id = "farm2"
//! meta_input_mode = "all_three"
//!
//! [ae]              # AeTrainConfig, defaults to the full five-layer stack
//! [dbn]             # DbnTrainConfig
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use atl_core::autoencoder::AeTrainConfig;
use atl_core::dataio::{SynthConfig, TargetChannel};
use atl_core::dbn::DbnTrainConfig;
use atl_core::transfer::{MetaInputMode, ModelConfigs, TransferPlan};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Run the cross-task (power to speed) protocol instead of the schedule.
    #[serde(default)]
    pub cross_task: bool,
    pub paths: Paths,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub plan: TransferPlan,
    #[serde(default)]
    pub ae: AeTrainConfig,
    #[serde(default)]
    pub dbn: DbnTrainConfig,
}

fn default_runs() -> usize {
    10
}

/// Flag values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub meta_inputs: Option<MetaInputMode>,
    pub target: Option<TargetChannel>,
    pub cross_task: bool,
    pub source_farm: Option<String>,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        for p in [&mut cfg.paths.data_dir, &mut cfg.paths.output_dir] {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(r) = o.runs {
            self.runs = r;
        }
        if let Some(m) = o.meta_inputs {
            self.plan.meta_input_mode = m;
        }
        if let Some(t) = o.target {
            self.plan.target_channel = t;
        }
        if o.cross_task {
            self.cross_task = true;
        }
        if let Some(f) = &o.source_farm {
            self.plan.source_farm_id = f.clone();
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.runs == 0 {
            return Err(CliError::Usage("runs must be at least 1".into()));
        }
        if self.cross_task && self.plan.target_channel != TargetChannel::Speed {
            return Err(CliError::Usage("--cross-task needs --target speed".into()));
        }
        self.plan.validate()?;
        self.ae.validate()?;
        self.dbn.validate()?;
        Ok(())
    }

    pub fn models(&self) -> ModelConfigs {
        ModelConfigs {
            ae: self.ae.clone(),
            dbn: self.dbn.clone(),
        }
    }

    /// SHA-256 of the resolved configuration without the seed and paths,
    /// so moving a run directory does not change its stamp.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        let obj = v.as_object_mut().expect("config is an object");
        obj.remove("seed");
        obj.remove("paths");
        let bytes = serde_json::to_vec(&v).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = "seed = 3\n[paths]\ndata_dir = \"d\"\noutput_dir = \"o\"\n";

    #[test]
    fn minimal_file_gets_defaults() {
        let c = RunConfig::from_toml(MIN, Path::new("/base")).unwrap();
        assert_eq!(c.runs, 10);
        assert_eq!(c.paths.data_dir, PathBuf::from("/base/d"));
        assert_eq!(c.plan, TransferPlan::default());
        assert_eq!(c.ae, AeTrainConfig::default());
        assert_eq!(c.dbn.widths, vec![120, 50, 20, 5]);
    }

    #[test]
    fn seed_is_required() {
        let e = RunConfig::from_toml("[paths]\ndata_dir = \"d\"\noutput_dir = \"o\"\n", Path::new("."));
        assert!(matches!(e, Err(CliError::Usage(m)) if m.contains("seed")));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml(&format!("{MIN}bogus = 1\n"), Path::new(".")).is_err());
    }

    #[test]
    fn flags_win() {
        let mut c = RunConfig::from_toml(MIN, Path::new(".")).unwrap();
        c.apply(&Overrides {
            seed: Some(9),
            runs: Some(2),
            meta_inputs: Some(MetaInputMode::LastOnly),
            source_farm: Some("farm4".into()),
            ..Overrides::default()
        });
        assert_eq!((c.seed, c.runs), (9, 2));
        assert_eq!(c.plan.meta_input_mode, MetaInputMode::LastOnly);
        assert_eq!(c.plan.source_farm_id, "farm4");
    }

    #[test]
    fn hash_ignores_seed_and_paths_only() {
        let a = RunConfig::from_toml(MIN, Path::new("/x")).unwrap();
        let mut b = RunConfig::from_toml(MIN, Path::new("/y")).unwrap();
        b.seed = 100;
        assert_eq!(a.hash(), b.hash());
        b.runs = 3;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn toml_round_trip() {
        let a = RunConfig::from_toml(MIN, Path::new("/x")).unwrap();
        let b = RunConfig::from_toml(&a.to_toml(), Path::new("/elsewhere")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cross_task_needs_speed() {
        let mut c = RunConfig::from_toml(MIN, Path::new(".")).unwrap();
        c.cross_task = true;
        assert!(c.validate().is_err());
        c.plan.target_channel = TargetChannel::Speed;
        assert!(c.validate().is_ok());
    }
}
