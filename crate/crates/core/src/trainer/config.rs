use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::fixedpoint::{DivConfig, InitialGuess, DEFAULT_EXP_SQUARINGS, DEFAULT_INV_SQRT_ITERATIONS};
use crate::mpc::{Schedule, TranscriptMode};
use crate::noise::NoiseTopology;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    /// The gradient circuit evaluated on plaintext ring words.
    #[default]
    FixedPoint,
    /// The same circuit on additive shares with a simulated dealer.
    Mpc,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subsampling {
    #[default]
    Poisson,
    FixedSize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { kind: OptimizerKind::Adam, lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Plaintext baseline noise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineNoise {
    #[default]
    Continuous,
    Discrete,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Noise multiplier; zero disables noise (no privacy).
    pub sigma: f64,
    pub topology: NoiseTopology,
    pub baseline: BaselineNoise,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { sigma: 2.042, topology: NoiseTopology::TrustedThirdParty, baseline: BaselineNoise::Continuous }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizerConfig {
    pub enabled: bool,
    /// Lower threshold on `max_k LF`; `None` uses `-8 / P`.
    pub threshold: Option<f64>,
    /// Upper bound on `max_k LF` after shifting; `None` uses `20 / P`.
    pub ceiling: Option<f64>,
    pub step: f64,
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        NormalizerConfig { enabled: true, threshold: None, ceiling: None, step: 0.01 }
    }
}

impl NormalizerConfig {
    pub fn threshold_for(&self, parties: usize) -> f64 {
        self.threshold.unwrap_or(-8.0 / parties as f64)
    }

    pub fn ceiling_for(&self, parties: usize) -> f64 {
        self.ceiling.unwrap_or(20.0 / parties as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointConfig {
    pub div_iterations: u32,
    pub initial_guess: InitialGuess,
    pub exp_squarings: u32,
    pub inv_sqrt_iterations: u32,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig {
            div_iterations: 10,
            initial_guess: InitialGuess::AffineFallback,
            exp_squarings: DEFAULT_EXP_SQUARINGS,
            inv_sqrt_iterations: DEFAULT_INV_SQRT_ITERATIONS,
        }
    }
}

impl FixedPointConfig {
    pub fn div(&self) -> DivConfig {
        DivConfig { iterations: self.div_iterations, initial_guess_mode: self.initial_guess, exp_squarings: self.exp_squarings }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    /// Standard deviation of the random initial mean; zero starts at the
    /// prior-centred point (uniform simplices, unit Beta parameters).
    pub mu_std: f64,
    pub scale: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig { mu_std: 0.5, scale: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub triple_budget: Option<u64>,
    pub transcript: TranscriptMode,
    pub schedule: Schedule,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: u64,
    /// Expected minibatch size; the sampling ratio is `batch / N`.
    pub batch: usize,
    /// Clipping threshold `C`.
    pub clip: f64,
    pub seed: u64,
    pub backend: Backend,
    pub subsampling: Subsampling,
    /// Evaluate every this many iterations; zero means once per epoch.
    pub eval_every: u64,
    pub noise: NoiseConfig,
    pub optimizer: OptimizerConfig,
    pub normalizer: NormalizerConfig,
    pub fixed_point: FixedPointConfig,
    pub init: InitConfig,
    pub mpc: MpcConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1000,
            batch: 100,
            clip: 1.0,
            seed: 0,
            backend: Backend::FixedPoint,
            subsampling: Subsampling::Poisson,
            eval_every: 0,
            noise: NoiseConfig::default(),
            optimizer: OptimizerConfig::default(),
            normalizer: NormalizerConfig::default(),
            fixed_point: FixedPointConfig::default(),
            init: InitConfig::default(),
            mpc: MpcConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Sampling ratio for a training set of `n` rows.
    pub fn sampling_ratio(&self, n: usize) -> f64 {
        self.batch as f64 / n as f64
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch == 0 {
            return bad("batch must be positive");
        }
        if !(self.clip.is_finite() && self.clip > 0.0) {
            return bad("clipping threshold must be positive and finite");
        }
        if !(self.noise.sigma.is_finite() && self.noise.sigma >= 0.0) {
            return bad("noise multiplier must be finite and non-negative");
        }
        let o = &self.optimizer;
        if !(o.lr.is_finite() && o.lr >= 0.0) || !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || o.eps <= 0.0
        {
            return bad("invalid optimizer parameters");
        }
        let n = &self.normalizer;
        if !(n.step.is_finite() && n.step > 0.0) {
            return bad("normalizer step must be positive");
        }
        if n.threshold.is_some_and(|t| !(t < 0.0)) {
            return bad("normalizer threshold must be negative");
        }
        let fp = &self.fixed_point;
        self.fixed_point.div().validate().map_err(|e| TrainError::Config(e.to_string()))?;
        if fp.inv_sqrt_iterations == 0 {
            return bad("inverse square root needs at least one iteration");
        }
        if !(self.init.scale.is_finite() && self.init.scale > 0.0) || !(self.init.mu_std >= 0.0) {
            return bad("invalid initialization");
        }
        Ok(())
    }

    /// Checks that depend on the training set size and party count.
    pub fn validate_for(&self, n_rows: usize, parties: usize) -> Result<(), TrainError> {
        self.validate()?;
        if n_rows == 0 {
            return Err(TrainError::Config("empty training set".into()));
        }
        let q = self.sampling_ratio(n_rows);
        if !(q > 0.0 && q <= 1.0) {
            return Err(TrainError::Config(format!("sampling ratio {q} outside (0, 1]")));
        }
        if self.backend == Backend::Mpc && parties < 2 {
            return Err(TrainError::Config("the MPC backend needs at least two parties".into()));
        }
        if self.noise.topology == NoiseTopology::Distributed && parties < 2 {
            return Err(TrainError::Config("distributed noise needs at least two parties".into()));
        }
        if let (Some(t), Some(c)) = (self.normalizer.threshold, self.normalizer.ceiling) {
            if c < t + self.normalizer.step {
                return Err(TrainError::Config("normalizer ceiling below threshold".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let c = TrainConfig::default();
        assert_eq!(TrainConfig::from_toml(&c.to_toml()).unwrap(), c);
        let partial = TrainConfig::from_toml("iterations = 5\n[noise]\nsigma = 0.0\n").unwrap();
        assert_eq!(partial.iterations, 5);
        assert_eq!(partial.noise.sigma, 0.0);
        assert_eq!(partial.batch, 100);
        assert!(TrainConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn rejects_infinite_clip_and_bad_ratio() {
        let mut c = TrainConfig { clip: f64::INFINITY, ..TrainConfig::default() };
        assert!(c.validate().is_err());
        c.clip = 1.0;
        assert!(c.validate_for(50, 2).is_err());
        assert!(c.validate_for(100, 2).is_ok());
        c.batch = 0;
        assert!(c.validate().is_err());
        let c = TrainConfig { backend: Backend::Mpc, ..TrainConfig::default() };
        assert!(c.validate_for(1000, 1).is_err());
    }
}
