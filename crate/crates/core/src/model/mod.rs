//! Mixture model with party-factorized component densities.
//!
//! Each component is a product over features of Beta (continuous, on `[0,1]`)
//! or Categorical densities, so the component density factorizes over the
//! parties owning the features. Parameters are inferred with a mean-field
//! Gaussian in an unconstrained space: stick-breaking for every simplex and
//! `log` for Beta shape parameters.
//!
//! Two parameter vectors recur:
//! * the *constrained* layout `[pi_1..pi_K | party 0 | ... | party P-1]`,
//!   each party block holding its per-component parameters `k`-major; the
//!   per-example likelihood gradient is clipped in this layout;
//! * the *unconstrained* layout, with the same ordering and `K-1` (resp.
//!   `C-1`) coordinates per simplex.

mod density;
mod transform;
mod variational;

pub use density::{
    compute_normalizer, local_dmat, local_log_density, log_likelihood, mean_nll, per_example_gradients, synthetic_dataset,
};
pub use transform::{stick_breaking, stick_breaking_pullback, StickBreak};
pub use variational::{
    constrain, elbo_gradient, log_prior, prior_entropy_grad, prior_grad_con, pullback, sample_theta, Constrained, ThetaSample,
    VariationalParams,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid mixture specification: {0}")]
    InvalidSpec(String),
    #[error("feature {feature} row {row}: value {value} outside [0, 1]")]
    Domain { feature: String, row: usize, value: f64 },
    #[error("feature {feature} row {row}: category {value} out of range for {n} categories")]
    CategoryOutOfRange { feature: String, row: usize, value: u32, n: usize },
    #[error("feature {feature}: column type does not match the specification")]
    ColumnKind { feature: String },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureKind {
    /// Beta density on a feature pre-normalized to `[0, 1]`.
    ContinuousBeta,
    Categorical { n_categories: usize },
}

impl FeatureKind {
    pub fn con_dims(&self) -> usize {
        match self {
            FeatureKind::ContinuousBeta => 2,
            FeatureKind::Categorical { n_categories } => *n_categories,
        }
    }

    pub fn uncon_dims(&self) -> usize {
        match self {
            FeatureKind::ContinuousBeta => 2,
            FeatureKind::Categorical { n_categories } => n_categories - 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
    pub party: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    /// Symmetric Dirichlet concentration for the mixing weights.
    pub alpha: f64,
    /// Symmetric Dirichlet concentration for categorical probabilities.
    pub beta: f64,
    /// Gamma prior on each Beta shape parameter.
    pub gamma_shape: f64,
    pub gamma_rate: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec { alpha: 1.0, beta: 1.0, gamma_shape: 1.0, gamma_rate: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub k: usize,
    pub features: Vec<FeatureSpec>,
    #[serde(default)]
    pub priors: PriorSpec,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidSpec(m));
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if self.features.is_empty() {
            return bad("no features".into());
        }
        let mut names = std::collections::HashSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) {
                return bad(format!("duplicate feature name {}", f.name));
            }
            if let FeatureKind::Categorical { n_categories } = f.kind {
                if n_categories < 2 {
                    return bad(format!("feature {} needs at least 2 categories", f.name));
                }
            }
        }
        let p = self.n_parties();
        for party in 0..p {
            if !self.features.iter().any(|f| f.party == party) {
                return bad(format!("party {party} owns no feature"));
            }
        }
        let pr = &self.priors;
        if ![pr.alpha, pr.beta, pr.gamma_shape, pr.gamma_rate].iter().all(|v| v.is_finite() && *v > 0.0) {
            return bad("prior parameters must be positive".into());
        }
        Ok(())
    }

    pub fn n_parties(&self) -> usize {
        self.features.iter().map(|f| f.party + 1).max().unwrap_or(0)
    }

    /// Global indices of the features a party owns, in specification order.
    pub fn party_features(&self, party: usize) -> Vec<usize> {
        self.features.iter().enumerate().filter(|(_, f)| f.party == party).map(|(i, _)| i).collect()
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self)
    }
}

/// Position of one (component, feature) parameter block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub party: usize,
    pub component: usize,
    pub feature: usize,
    pub kind: FeatureKind,
    pub con_offset: usize,
    pub uncon_offset: usize,
}

/// Maps parameter blocks to offsets in the constrained and unconstrained vectors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub k: usize,
    pub blocks: Vec<Block>,
    pub con_len: usize,
    pub uncon_len: usize,
    /// Per-component constrained dimension of each party.
    pub party_dims: Vec<usize>,
    /// Start of each party's region in the constrained vector.
    pub party_offsets: Vec<usize>,
}

impl ParamLayout {
    fn new(spec: &MixtureSpec) -> Self {
        let k = spec.k;
        let mut blocks = Vec::new();
        let (mut con, mut uncon) = (k, k - 1);
        let mut party_dims = Vec::new();
        let mut party_offsets = Vec::new();
        for p in 0..spec.n_parties() {
            let feats = spec.party_features(p);
            party_offsets.push(con);
            party_dims.push(feats.iter().map(|&f| spec.features[f].kind.con_dims()).sum());
            for c in 0..k {
                for &f in &feats {
                    let kind = spec.features[f].kind;
                    blocks.push(Block { party: p, component: c, feature: f, kind, con_offset: con, uncon_offset: uncon });
                    con += kind.con_dims();
                    uncon += kind.uncon_dims();
                }
            }
        }
        ParamLayout { k, blocks, con_len: con, uncon_len: uncon, party_dims, party_offsets }
    }

    /// Offset of party `p`, component `k` within the constrained vector.
    pub fn party_component_offset(&self, p: usize, k: usize) -> usize {
        self.party_offsets[p] + k * self.party_dims[p]
    }

    pub fn block(&self, component: usize, feature: usize) -> &Block {
        self.blocks.iter().find(|b| b.component == component && b.feature == feature).expect("block exists")
    }
}

/// Parameters of one feature in one component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureParams {
    Beta { a: f64, b: f64 },
    Categorical(Vec<f64>),
}

/// Constrained parameters: mixing weights and `params[k][feature]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaCon {
    pub pi: Vec<f64>,
    pub params: Vec<Vec<FeatureParams>>,
}

impl ThetaCon {
    /// Flattens into the constrained layout.
    pub fn to_vec(&self, layout: &ParamLayout) -> Vec<f64> {
        let mut v = vec![0.0; layout.con_len];
        v[..layout.k].copy_from_slice(&self.pi);
        for b in &layout.blocks {
            match &self.params[b.component][b.feature] {
                FeatureParams::Beta { a, b: bb } => {
                    v[b.con_offset] = *a;
                    v[b.con_offset + 1] = *bb;
                }
                FeatureParams::Categorical(w) => v[b.con_offset..b.con_offset + w.len()].copy_from_slice(w),
            }
        }
        v
    }

    pub fn from_vec(spec: &MixtureSpec, layout: &ParamLayout, v: &[f64]) -> Result<Self> {
        if v.len() != layout.con_len {
            return Err(ModelError::Dimension { expected: layout.con_len, actual: v.len() });
        }
        let mut params = vec![Vec::with_capacity(spec.features.len()); spec.k];
        for (k, row) in params.iter_mut().enumerate() {
            for f in 0..spec.features.len() {
                let b = layout.block(k, f);
                row.push(match b.kind {
                    FeatureKind::ContinuousBeta => FeatureParams::Beta { a: v[b.con_offset], b: v[b.con_offset + 1] },
                    FeatureKind::Categorical { n_categories } => {
                        FeatureParams::Categorical(v[b.con_offset..b.con_offset + n_categories].to_vec())
                    }
                });
            }
        }
        Ok(ThetaCon { pi: v[..spec.k].to_vec(), params })
    }
}
