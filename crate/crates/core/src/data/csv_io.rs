use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use csv::{ReaderBuilder, StringRecord, Trim, WriterBuilder};

use super::schema::{ColumnSchema, Schema};
use super::{Column, DataError, Dataset};

/// A CSV file held as text, with the file line of every record.
#[derive(Clone, Debug)]
pub struct CsvTable {
    pub source: String,
    pub header: Vec<String>,
    pub records: Vec<StringRecord>,
    pub lines: Vec<u64>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self, DataError> {
        let f = File::open(path).map_err(|e| DataError::io(path, e))?;
        Self::from_reader(f, &path.display().to_string())
    }

    pub fn from_reader<R: Read>(r: R, source: &str) -> Result<Self, DataError> {
        let csv_err = |e: csv::Error| {
            let line = e.position().map_or(0, |p| p.line());
            DataError::Csv { file: source.to_string(), line, message: e.to_string() }
        };
        let mut rdr = ReaderBuilder::new().trim(Trim::All).from_reader(r);
        let header = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let mut records = Vec::new();
        let mut lines = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            lines.push(rec.position().map_or(0, |p| p.line()));
            records.push(rec);
        }
        Ok(CsvTable { source: source.to_string(), header, records, lines })
    }

    pub fn n_rows(&self) -> usize {
        self.records.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize, DataError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn { file: self.source.clone(), column: name.to_string() })
    }

    /// Parses and normalizes the given schema features.
    pub fn parse_columns(&self, schema: &Schema, features: &[usize]) -> Result<Vec<Column>, DataError> {
        features
            .iter()
            .map(|&fi| {
                let f = &schema.features[fi];
                let ci = self.column_index(&f.name)?;
                let cells = self.records.iter().zip(&self.lines).map(|(r, &line)| {
                    let cell = r.get(ci).unwrap_or("");
                    if cell.is_empty() {
                        Err(DataError::MissingValue { file: self.source.clone(), line, column: f.name.clone() })
                    } else {
                        Ok((line, cell))
                    }
                });
                match &f.column {
                    ColumnSchema::Continuous { min, max } => cells
                        .map(|c| {
                            let (line, cell) = c?;
                            let x: f64 = cell.parse().ok().filter(|x: &f64| x.is_finite()).ok_or_else(|| DataError::Unparsable {
                                file: self.source.clone(),
                                line,
                                column: f.name.clone(),
                                value: cell.to_string(),
                            })?;
                            if x < *min || x > *max {
                                return Err(DataError::OutOfBounds {
                                    file: self.source.clone(),
                                    line,
                                    column: f.name.clone(),
                                    value: x,
                                    min: *min,
                                    max: *max,
                                });
                            }
                            Ok(f.normalize(x))
                        })
                        .collect::<Result<Vec<_>, _>>()
                        .map(Column::Continuous),
                    ColumnSchema::Categorical { categories } => cells
                        .map(|c| {
                            let (line, cell) = c?;
                            categories.iter().position(|l| l == cell).map(|i| i as u32).ok_or_else(|| DataError::UnknownCategory {
                                file: self.source.clone(),
                                line,
                                column: f.name.clone(),
                                value: cell.to_string(),
                            })
                        })
                        .collect::<Result<Vec<_>, _>>()
                        .map(Column::Categorical),
                }
            })
            .collect()
    }

    pub fn to_dataset(&self, schema: &Schema) -> Result<Dataset, DataError> {
        let all: Vec<usize> = (0..schema.features.len()).collect();
        let columns = self.parse_columns(schema, &all)?;
        Ok(Dataset { n_rows: self.n_rows(), columns })
    }
}

/// Reads a CSV file, validating and normalizing every schema column.
/// Columns not named in the schema are ignored.
pub fn ingest(path: &Path, schema: &Schema) -> Result<Dataset, DataError> {
    CsvTable::read(path)?.to_dataset(schema)
}

pub fn ingest_reader<R: Read>(r: R, schema: &Schema) -> Result<Dataset, DataError> {
    CsvTable::from_reader(r, "<input>")?.to_dataset(schema)
}

/// Writes a dataset in original units and labels, in schema column order.
pub fn write_csv<W: Write>(w: W, data: &Dataset, schema: &Schema) -> Result<(), DataError> {
    if data.columns.len() != schema.features.len() {
        return Err(DataError::Schema(format!(
            "dataset has {} columns, schema has {}",
            data.columns.len(),
            schema.features.len()
        )));
    }
    let mut wtr = WriterBuilder::new().from_writer(w);
    let wr = |e: csv::Error| DataError::Csv { file: "<output>".into(), line: 0, message: e.to_string() };
    wtr.write_record(schema.features.iter().map(|f| f.name.as_str())).map_err(wr)?;
    for r in 0..data.n_rows {
        let row: Vec<String> = schema
            .features
            .iter()
            .zip(&data.columns)
            .map(|(f, c)| match (&f.column, c) {
                (ColumnSchema::Continuous { .. }, Column::Continuous(v)) => Ok(f.denormalize(v[r]).to_string()),
                (ColumnSchema::Categorical { categories }, Column::Categorical(v)) => categories
                    .get(v[r] as usize)
                    .cloned()
                    .ok_or_else(|| DataError::Schema(format!("category index {} out of range for {}", v[r], f.name))),
                _ => Err(DataError::Schema(format!("column kind mismatch for {}", f.name))),
            })
            .collect::<Result<_, _>>()?;
        wtr.write_record(&row).map_err(wr)?;
    }
    wtr.flush().map_err(|e| DataError::io(Path::new("<output>"), e))?;
    Ok(())
}

/// Writes generated rows as a CSV with the schema's header order.
pub fn export_synthetic(data: &Dataset, schema: &Schema, path: &Path) -> Result<(), DataError> {
    let f = File::create(path).map_err(|e| DataError::io(path, e))?;
    write_csv(std::io::BufWriter::new(f), data, schema)
}
