//! Tabular data: normalized columns, schema-driven CSV ingestion, vertical
//! partitioning, splitting and synthetic export.

mod csv_io;
mod files;
mod schema;
mod split;
mod table;

use std::path::Path;

use thiserror::Error;

use crate::model::ModelError;

pub use csv_io::{export_synthetic, ingest, ingest_reader, write_csv, CsvTable};
pub use files::{party_file_name, read_manifest, read_partition, write_partition, Manifest, PartyFile, MANIFEST_FILE, ROW_ID};
pub use schema::{ColumnSchema, Schema, SchemaFeature, NUDGE, SCHEMA_VERSION};
pub use split::{split, split_indices, split_partitioned};
pub use table::{Column, Dataset, PartitionedDataset, PartyBlock};

/// Errors carry the file and 1-based line of the offending record.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{file}, line {line}: {message}")]
    Csv { file: String, line: u64, message: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("{file}: missing column {column:?}")]
    MissingColumn { file: String, column: String },
    #[error("{file}, line {line}, column {column:?}: missing value")]
    MissingValue { file: String, line: u64, column: String },
    #[error("{file}, line {line}, column {column:?}: cannot parse {value:?} as a number")]
    Unparsable { file: String, line: u64, column: String, value: String },
    #[error("{file}, line {line}, column {column:?}: unknown category {value:?}")]
    UnknownCategory { file: String, line: u64, column: String, value: String },
    #[error("{file}, line {line}, column {column:?}: {value} outside declared bounds [{min}, {max}]")]
    OutOfBounds { file: String, line: u64, column: String, value: f64, min: f64, max: f64 },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{file}: checksum does not match the manifest")]
    Checksum { file: String },
    #[error("{file}: row order differs from the manifest")]
    RowOrder { file: String },
    #[error("split: {0}")]
    Split(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.display().to_string(), source }
    }
}
