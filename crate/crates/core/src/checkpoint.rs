//! Versioned JSON checkpoints: the model, the variational parameters and
//! enough provenance to rerun or audit the job.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Schema};
use crate::model::{constrain, synthetic_dataset, MixtureSpec, ModelError, ThetaCon, VariationalParams};
use crate::trainer::{streams, TrainConfig};

pub const CHECKPOINT_FORMAT: &str = "vpmix-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a usable checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Names of the maps from unconstrained to constrained parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transforms {
    pub simplex: String,
    pub positive: String,
}

impl Default for Transforms {
    fn default() -> Self {
        Transforms { simplex: "centred-stick-breaking".into(), positive: "exp".into() }
    }
}

/// Master seed plus the stream each random consumer drew from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLineage {
    pub master: u64,
    pub streams: BTreeMap<String, u64>,
}

impl SeedLineage {
    pub fn for_training(master: u64) -> Self {
        let streams = [
            ("init", streams::INIT),
            ("subsample", streams::SUBSAMPLE),
            ("eta", streams::ETA),
            ("dealer-noise", streams::DEALER_NOISE),
            ("party-noise-base", streams::PARTY_NOISE),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        SeedLineage { master, streams }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub spec: MixtureSpec,
    /// Column bounds and labels, needed to write data in original units.
    pub schema: Option<Schema>,
    pub xi: VariationalParams,
    pub transforms: Transforms,
    pub seed: SeedLineage,
    /// Which loop produced the parameters.
    pub trainer: String,
    pub iterations: u64,
    pub final_train_nll: Option<f64>,
    /// The training configuration, echoed for provenance.
    pub config: Option<TrainConfig>,
}

impl Checkpoint {
    pub fn new(spec: MixtureSpec, schema: Option<Schema>, xi: VariationalParams, trainer: &str, config: Option<TrainConfig>) -> Self {
        let seed = SeedLineage::for_training(config.as_ref().map_or(0, |c| c.seed));
        let iterations = config.as_ref().map_or(0, |c| c.iterations);
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            spec,
            schema,
            xi,
            transforms: Transforms::default(),
            seed,
            trainer: trainer.into(),
            iterations,
            final_train_nll: None,
            config,
        }
    }

    pub fn validate(&self) -> Result<(), CheckpointError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(CheckpointError::Format(format!("format tag {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Format(format!("unsupported version {}", self.version)));
        }
        if self.transforms != Transforms::default() {
            return Err(CheckpointError::Format(format!("unknown transforms {:?}", self.transforms)));
        }
        self.spec.validate()?;
        self.xi.validate(&self.spec.layout())?;
        if let Some(s) = &self.schema {
            if !s.matches(&self.spec) {
                return Err(CheckpointError::Format("schema does not match the model features".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let c: Checkpoint = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|e| CheckpointError::Io { path: path.display().to_string(), source: e })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path).map_err(|e| CheckpointError::Io { path: path.display().to_string(), source: e })?;
        Self::from_json(&text)
    }

    /// Constrained parameters at the variational mean.
    pub fn point_estimate(&self) -> Result<ThetaCon, CheckpointError> {
        Ok(constrain(&self.spec, &self.spec.layout(), &self.xi.mu)?.theta)
    }

    /// `n` synthetic rows from the point estimate.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Dataset, CheckpointError> {
        let theta = self.point_estimate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(synthetic_dataset(&self.spec, &theta, n, &mut rng)?)
    }
}
