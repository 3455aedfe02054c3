use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::model::{FeatureKind, FeatureSpec, MixtureSpec, PriorSpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Distance of normalized continuous values from 0 and 1.
pub const NUDGE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ColumnSchema {
    /// Min-max normalized into the open unit interval.
    Continuous { min: f64, max: f64 },
    Categorical { categories: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaFeature {
    pub name: String,
    pub party: usize,
    #[serde(flatten)]
    pub column: ColumnSchema,
}

impl SchemaFeature {
    pub fn kind(&self) -> FeatureKind {
        match &self.column {
            ColumnSchema::Continuous { .. } => FeatureKind::ContinuousBeta,
            ColumnSchema::Categorical { categories } => FeatureKind::Categorical { n_categories: categories.len() },
        }
    }

    /// Maps a raw value into `[NUDGE, 1 - NUDGE]`.
    pub fn normalize(&self, x: f64) -> f64 {
        match self.column {
            ColumnSchema::Continuous { min, max } => ((x - min) / (max - min)).clamp(NUDGE, 1.0 - NUDGE),
            ColumnSchema::Categorical { .. } => panic!("normalize called on categorical feature {}", self.name),
        }
    }

    pub fn denormalize(&self, u: f64) -> f64 {
        match self.column {
            ColumnSchema::Continuous { min, max } => (min + u * (max - min)).clamp(min, max),
            ColumnSchema::Categorical { .. } => panic!("denormalize called on categorical feature {}", self.name),
        }
    }
}

/// Ordered description of the columns a model consumes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub version: u32,
    pub features: Vec<SchemaFeature>,
}

impl Schema {
    pub fn new(features: Vec<SchemaFeature>) -> Result<Self, DataError> {
        let s = Schema { version: SCHEMA_VERSION, features };
        s.validate()?;
        Ok(s)
    }

    pub fn from_toml(text: &str) -> Result<Self, DataError> {
        let s: Schema = toml::from_str(text).map_err(|e| DataError::Schema(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::Schema(m));
        if self.version != SCHEMA_VERSION {
            return bad(format!("unsupported schema version {}", self.version));
        }
        if self.features.is_empty() {
            return bad("schema has no features".into());
        }
        let mut names = HashSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) {
                return bad(format!("duplicate feature name {:?}", f.name));
            }
            match &f.column {
                ColumnSchema::Continuous { min, max } => {
                    if !(min.is_finite() && max.is_finite() && min < max) {
                        return bad(format!("feature {:?}: bounds need min < max", f.name));
                    }
                }
                ColumnSchema::Categorical { categories } => {
                    if categories.len() < 2 {
                        return bad(format!("feature {:?}: needs at least two categories", f.name));
                    }
                    let mut seen = HashSet::new();
                    if let Some(c) = categories.iter().find(|c| !seen.insert(c.as_str())) {
                        return bad(format!("feature {:?}: duplicate category {c:?}", f.name));
                    }
                }
            }
        }
        let parties = self.n_parties();
        if let Some(p) = (0..parties).find(|p| !self.features.iter().any(|f| f.party == *p)) {
            return bad(format!("party {p} holds no features"));
        }
        Ok(())
    }

    pub fn n_parties(&self) -> usize {
        self.features.iter().map(|f| f.party + 1).max().unwrap_or(0)
    }

    pub fn feature_specs(&self) -> Vec<FeatureSpec> {
        self.features.iter().map(|f| FeatureSpec { name: f.name.clone(), kind: f.kind(), party: f.party }).collect()
    }

    pub fn mixture_spec(&self, k: usize, priors: PriorSpec) -> MixtureSpec {
        MixtureSpec { k, features: self.feature_specs(), priors }
    }

    /// Global indices of the features `party` holds.
    pub fn party_features(&self, party: usize) -> Vec<usize> {
        (0..self.features.len()).filter(|&i| self.features[i].party == party).collect()
    }

    /// Checks that a model was built from this schema.
    pub fn matches(&self, spec: &MixtureSpec) -> bool {
        spec.features == self.feature_specs()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) const EXAMPLE: &str = r#"
version = 1

[[features]]
name = "age"
party = 0
kind = "continuous"
min = 17.0
max = 90.0

[[features]]
name = "sex"
party = 0
kind = "categorical"
categories = ["F", "M"]

[[features]]
name = "hours"
party = 1
kind = "continuous"
min = 1.0
max = 99.0
"#;

    #[test]
    fn parses_and_round_trips() {
        let s = Schema::from_toml(EXAMPLE).unwrap();
        assert_eq!(s.n_parties(), 2);
        assert_eq!(s.features[1].kind(), FeatureKind::Categorical { n_categories: 2 });
        assert_eq!(Schema::from_toml(&s.to_toml()).unwrap(), s);
        assert!(s.matches(&s.mixture_spec(3, PriorSpec::default())));
    }

    #[test]
    fn normalization_nudges_endpoints() {
        let s = Schema::from_toml(EXAMPLE).unwrap();
        let age = &s.features[0];
        assert_eq!(age.normalize(90.0), 1.0 - NUDGE);
        assert_eq!(age.normalize(17.0), NUDGE);
        let mid = age.normalize(53.5);
        assert!((mid - 0.5).abs() < 1e-15);
        assert!((age.denormalize(mid) - 53.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_schemas() {
        let dup = EXAMPLE.replace("\"hours\"", "\"age\"");
        assert!(matches!(Schema::from_toml(&dup), Err(DataError::Schema(_))));
        let bounds = EXAMPLE.replace("max = 99.0", "max = 1.0");
        assert!(Schema::from_toml(&bounds).is_err());
        let gap = EXAMPLE.replace("party = 1", "party = 2");
        assert!(Schema::from_toml(&gap).is_err());
        let cats = EXAMPLE.replace("[\"F\", \"M\"]", "[\"F\", \"F\"]");
        assert!(Schema::from_toml(&cats).is_err());
    }
}
