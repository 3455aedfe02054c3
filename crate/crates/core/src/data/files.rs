//! Per-party block files and their manifest.
//!
//! `party_<p>.csv` holds a `row_id` column followed by party `p`'s columns,
//! copied cell for cell from the input. `manifest.json` records the schema,
//! the row count, a SHA-256 per file and one over the `row_id` sequence, so
//! a loader can tell a reordered or edited block from a good one.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use csv::WriterBuilder;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::csv_io::CsvTable;
use super::schema::Schema;
use super::{DataError, PartitionedDataset, PartyBlock};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;
pub const ROW_ID: &str = "row_id";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartyFile {
    pub party: usize,
    pub file: String,
    pub features: Vec<String>,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub n_rows: usize,
    pub schema: Schema,
    pub parties: Vec<PartyFile>,
    /// SHA-256 over the newline-joined `row_id` values.
    pub row_order_sha256: String,
}

pub fn party_file_name(p: usize) -> String {
    format!("party_{p}.csv")
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn row_order_hash(ids: &[String]) -> String {
    sha256_hex(ids.join("\n").as_bytes())
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>, DataError> {
    let wr = |e: csv::Error| DataError::Csv { file: "<output>".into(), line: 0, message: e.to_string() };
    let mut w = WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).map_err(wr)?;
    for r in rows {
        w.write_record(&r).map_err(wr)?;
    }
    w.into_inner().map_err(|e| DataError::Csv { file: "<output>".into(), line: 0, message: e.to_string() })
}

/// Validates `table` against the schema and writes one block file per party
/// plus the manifest. Re-running on the same input writes identical bytes.
pub fn write_partition(table: &CsvTable, schema: &Schema, out_dir: &Path) -> Result<Manifest, DataError> {
    schema.validate()?;
    // full validation first, so nothing is written for a bad input
    table.to_dataset(schema)?;
    fs::create_dir_all(out_dir).map_err(|e| DataError::io(out_dir, e))?;
    let ids: Vec<String> = (0..table.n_rows()).map(|i| i.to_string()).collect();
    let mut parties = Vec::new();
    for p in 0..schema.n_parties() {
        let feats = schema.party_features(p);
        let names: Vec<&str> = feats.iter().map(|&f| schema.features[f].name.as_str()).collect();
        let cols = names.iter().map(|n| table.column_index(n)).collect::<Result<Vec<_>, _>>()?;
        let mut header = vec![ROW_ID];
        header.extend(&names);
        let rows = table.records.iter().zip(&ids).map(|(r, id)| {
            let mut row = vec![id.clone()];
            row.extend(cols.iter().map(|&c| r.get(c).unwrap_or("").to_string()));
            row
        });
        let bytes = csv_bytes(&header, rows)?;
        let file = party_file_name(p);
        let path = out_dir.join(&file);
        fs::write(&path, &bytes).map_err(|e| DataError::io(&path, e))?;
        parties.push(PartyFile { party: p, file, features: names.iter().map(|s| s.to_string()).collect(), sha256: sha256_hex(&bytes) });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        n_rows: table.n_rows(),
        schema: schema.clone(),
        parties,
        row_order_sha256: row_order_hash(&ids),
    };
    let path = out_dir.join(MANIFEST_FILE);
    let mut f = fs::File::create(&path).map_err(|e| DataError::io(&path, e))?;
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    f.write_all(text.as_bytes()).and_then(|_| f.write_all(b"\n")).map_err(|e| DataError::io(&path, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, DataError> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| DataError::io(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| DataError::Manifest(e.to_string()))?;
    if m.version != MANIFEST_VERSION {
        return Err(DataError::Manifest(format!("unsupported manifest version {}", m.version)));
    }
    m.schema.validate()?;
    if m.parties.len() != m.schema.n_parties() {
        return Err(DataError::Manifest(format!(
            "manifest lists {} block files for {} parties",
            m.parties.len(),
            m.schema.n_parties()
        )));
    }
    Ok(m)
}

/// Loads the party blocks of a partition directory, verifying checksums and
/// that every block lists the same row ids in the same order.
pub fn read_partition(dir: &Path) -> Result<(Schema, PartitionedDataset), DataError> {
    let m = read_manifest(dir)?;
    let mut blocks = Vec::new();
    for (p, pf) in m.parties.iter().enumerate() {
        if pf.party != p {
            return Err(DataError::Manifest(format!("block {p} is labelled party {}", pf.party)));
        }
        let path: PathBuf = dir.join(&pf.file);
        let bytes = fs::read(&path).map_err(|e| DataError::io(&path, e))?;
        if sha256_hex(&bytes) != pf.sha256 {
            return Err(DataError::Checksum { file: path.display().to_string() });
        }
        let table = CsvTable::from_reader(bytes.as_slice(), &path.display().to_string())?;
        if table.n_rows() != m.n_rows {
            return Err(DataError::Manifest(format!("{} has {} rows, expected {}", pf.file, table.n_rows(), m.n_rows)));
        }
        let id_col = table.column_index(ROW_ID)?;
        let ids: Vec<String> = table.records.iter().map(|r| r.get(id_col).unwrap_or("").to_string()).collect();
        if row_order_hash(&ids) != m.row_order_sha256 {
            return Err(DataError::RowOrder { file: path.display().to_string() });
        }
        let features = m.schema.party_features(p);
        let columns = table.parse_columns(&m.schema, &features)?;
        blocks.push(PartyBlock { party: p, features, columns });
    }
    Ok((m.schema, PartitionedDataset { n_rows: m.n_rows, blocks }))
}
