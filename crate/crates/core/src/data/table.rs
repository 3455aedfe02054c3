use serde::{Deserialize, Serialize};

use crate::model::{FeatureKind, MixtureSpec, ModelError};

/// One normalized feature column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Column {
    Continuous(Vec<f64>),
    Categorical(Vec<u32>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Continuous(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Continuous(v) => Column::Continuous(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&r| v[r]).collect()),
        }
    }

    /// Checks the column against a feature kind.
    pub fn check(&self, name: &str, kind: FeatureKind) -> Result<(), ModelError> {
        match (self, kind) {
            (Column::Continuous(v), FeatureKind::ContinuousBeta) => {
                if let Some((row, &value)) = v.iter().enumerate().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
                    return Err(ModelError::Domain { feature: name.into(), row, value });
                }
                Ok(())
            }
            (Column::Categorical(v), FeatureKind::Categorical { n_categories }) => {
                if let Some((row, &value)) = v.iter().enumerate().find(|(_, c)| **c as usize >= n_categories) {
                    return Err(ModelError::CategoryOutOfRange { feature: name.into(), row, value, n: n_categories });
                }
                Ok(())
            }
            _ => Err(ModelError::ColumnKind { feature: name.into() }),
        }
    }
}

/// Normalized table whose columns follow the feature order of a [`MixtureSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub n_rows: usize,
    pub columns: Vec<Column>,
}

impl Dataset {
    pub fn new(columns: Vec<Column>) -> Result<Self, ModelError> {
        let n_rows = columns.first().map_or(0, Column::len);
        if let Some(c) = columns.iter().find(|c| c.len() != n_rows) {
            return Err(ModelError::Dimension { expected: n_rows, actual: c.len() });
        }
        Ok(Dataset { n_rows, columns })
    }

    pub fn validate(&self, spec: &MixtureSpec) -> Result<(), ModelError> {
        if self.columns.len() != spec.features.len() {
            return Err(ModelError::Dimension { expected: spec.features.len(), actual: self.columns.len() });
        }
        for (c, f) in self.columns.iter().zip(&spec.features) {
            if c.len() != self.n_rows {
                return Err(ModelError::Dimension { expected: self.n_rows, actual: c.len() });
            }
            c.check(&f.name, f.kind)?;
        }
        Ok(())
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset { n_rows: rows.len(), columns: self.columns.iter().map(|c| c.select(rows)).collect() }
    }

    pub fn all_rows(&self) -> Vec<usize> {
        (0..self.n_rows).collect()
    }

    /// Splits the columns by owning party, keeping row order.
    pub fn partition(&self, spec: &MixtureSpec) -> Result<PartitionedDataset, ModelError> {
        self.validate(spec)?;
        let blocks = (0..spec.n_parties())
            .map(|p| {
                let features = spec.party_features(p);
                let columns = features.iter().map(|&f| self.columns[f].clone()).collect();
                PartyBlock { party: p, features, columns }
            })
            .collect();
        Ok(PartitionedDataset { n_rows: self.n_rows, blocks })
    }
}

/// The columns one party holds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartyBlock {
    pub party: usize,
    /// Global feature indices, aligned with `columns`.
    pub features: Vec<usize>,
    pub columns: Vec<Column>,
}

impl PartyBlock {
    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Column::len)
    }
}

/// Per-party blocks over one shared row order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionedDataset {
    pub n_rows: usize,
    pub blocks: Vec<PartyBlock>,
}

impl PartitionedDataset {
    pub fn n_parties(&self) -> usize {
        self.blocks.len()
    }

    pub fn select_rows(&self, rows: &[usize]) -> PartitionedDataset {
        let blocks = self
            .blocks
            .iter()
            .map(|b| PartyBlock { party: b.party, features: b.features.clone(), columns: b.columns.iter().map(|c| c.select(rows)).collect() })
            .collect();
        PartitionedDataset { n_rows: rows.len(), blocks }
    }

    /// Reassembles the table in global feature order.
    pub fn join(&self) -> Dataset {
        let n_features = self.blocks.iter().map(|b| b.features.len()).sum();
        let mut cols: Vec<Option<Column>> = vec![None; n_features];
        for b in &self.blocks {
            for (&f, c) in b.features.iter().zip(&b.columns) {
                cols[f] = Some(c.clone());
            }
        }
        Dataset { n_rows: self.n_rows, columns: cols.into_iter().map(|c| c.expect("exhaustive partition")).collect() }
    }
}
