//! Training job files: model size, split, privacy target and the trainer
//! configuration in one TOML document.

use std::path::Path;

use serde::{Deserialize, Serialize};

use vpmix::model::PriorSpec;
use vpmix::trainer::TrainConfig;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub k: usize,
    pub priors: PriorSpec,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { k: 5, priors: PriorSpec::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Fraction of rows held out for test NLL.
    pub test_fraction: f64,
    /// Seed of the train/test split; defaults to the training seed.
    pub split_seed: Option<u64>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { test_fraction: 0.2, split_seed: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrivacySection {
    pub delta: f64,
}

impl Default for PrivacySection {
    fn default() -> Self {
        PrivacySection { delta: 1e-5 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobConfig {
    pub model: ModelSection,
    pub data: DataSection,
    pub privacy: PrivacySection,
    pub train: TrainConfig,
}

impl JobConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("job config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.model.k == 0 {
            return Err(CliError::validation("model.k must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.data.test_fraction) {
            return Err(CliError::validation("data.test_fraction must be in [0, 1)"));
        }
        if !(self.privacy.delta > 0.0 && self.privacy.delta < 1.0) {
            return Err(CliError::validation("privacy.delta must be in (0, 1)"));
        }
        self.train.validate()?;
        Ok(())
    }
}
