//! RFC-4180 CSV ingestion and emission. UTF-8, mandatory header row,
//! "." decimal separator. Missing values are a hard error.

use super::{Column, ColumnData, ColumnSchema, Kind, Role, TabularDataset};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemaFile {
    pub columns: Vec<ColumnSchema>,
}

pub fn read_schema_json(path: &Path) -> Result<Vec<ColumnSchema>> {
    let text = std::fs::read_to_string(path)?;
    let file: SchemaFile = serde_json::from_str(&text)?;
    Ok(file.columns)
}

pub fn write_schema_json(path: &Path, schema: &[ColumnSchema]) -> Result<()> {
    let file = SchemaFile {
        columns: schema.to_vec(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
    Ok(())
}

pub fn load_csv(path: &Path, schema: &[ColumnSchema]) -> Result<TabularDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::EmptyFile);
    }
    let mut positions = Vec::with_capacity(schema.len());
    for s in schema {
        match headers.iter().position(|h| h == s.name) {
            Some(p) => positions.push(p),
            None => return Err(Error::MissingColumn(s.name.clone())),
        }
    }

    enum Builder {
        Numeric(Vec<f64>),
        Categorical { ids: Vec<u32>, classes: Vec<String> },
    }
    let mut builders: Vec<Builder> = schema
        .iter()
        .map(|s| match s.kind {
            Kind::Numeric => Builder::Numeric(Vec::new()),
            Kind::Categorical => Builder::Categorical {
                ids: Vec::new(),
                classes: Vec::new(),
            },
        })
        .collect();

    let mut n_rows = 0usize;
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        for (ci, s) in schema.iter().enumerate() {
            let raw = record.get(positions[ci]).unwrap_or("");
            if raw.is_empty() {
                return Err(Error::MissingValue {
                    row: row_idx,
                    col: s.name.clone(),
                });
            }
            match &mut builders[ci] {
                Builder::Numeric(values) => {
                    let v: f64 = raw.parse().map_err(|_| Error::UnparsableValue {
                        row: row_idx,
                        col: s.name.clone(),
                        value: raw.to_string(),
                    })?;
                    if s.role == Role::Target && v != 0.0 && v != 1.0 {
                        return Err(Error::UnparsableValue {
                            row: row_idx,
                            col: s.name.clone(),
                            value: raw.to_string(),
                        });
                    }
                    values.push(v);
                }
                Builder::Categorical { ids, classes } => {
                    let id = match classes.iter().position(|c| c == raw) {
                        Some(i) => i as u32,
                        None => {
                            classes.push(raw.to_string());
                            (classes.len() - 1) as u32
                        }
                    };
                    ids.push(id);
                }
            }
        }
        n_rows += 1;
    }
    if n_rows == 0 {
        return Err(Error::EmptyFile);
    }
    let columns = schema
        .iter()
        .zip(builders)
        .map(|(s, b)| Column {
            schema: s.clone(),
            data: match b {
                Builder::Numeric(v) => ColumnData::Numeric(v),
                Builder::Categorical { ids, classes } => ColumnData::Categorical { ids, classes },
            },
        })
        .collect();
    TabularDataset::new(columns)
}

pub fn write_csv(ds: &TabularDataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let names: Vec<&str> = ds.columns().iter().map(|c| c.name()).collect();
    writer.write_record(&names)?;
    for row in 0..ds.n_rows() {
        let fields: Vec<String> = ds.columns().iter().map(|c| c.render(row)).collect();
        writer.write_record(&fields)?;
    }
    writer.flush()?;
    Ok(())
}
