//! Dataset files: a directory holding a CSV triplet plus `metadata.json`, or a
//! single JSON document with the values as a base64 payload of little-endian
//! f64 in row-major (space-major) order.

use std::fs;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::SpatioTemporalField;
use crate::filters::FilterSpec;
use crate::pde_solvers::ScenarioMeta;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    Csv,
    Json,
}

impl std::str::FromStr for DatasetFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(Error::InvalidArgument(format!("unknown dataset format '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct DatasetMeta {
    pub scenario: Option<ScenarioMeta>,
    pub noise_level: f64,
    pub seed: Option<u64>,
    /// Filters applied after noise, in order.
    #[serde(default)]
    pub filters: Vec<FilterSpec>,
    /// Free-form provenance, e.g. the run config that produced the file.
    #[serde(default)]
    pub extra: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub field: SpatioTemporalField,
    pub meta: DatasetMeta,
}

#[derive(Serialize, Deserialize)]
struct JsonDataset {
    format: String,
    nx: usize,
    nt: usize,
    x: Vec<f64>,
    t: Vec<f64>,
    values_b64: String,
    metadata: DatasetMeta,
}

const JSON_TAG: &str = "vcpde-dataset-v1";

fn write_column(path: &Path, name: &str, v: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([name])?;
    for x in v {
        w.write_record([x.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn read_column(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            rec.get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("bad number in {}", path.display())))
        })
        .collect()
}

/// Writes `ds` and returns the files created. For CSV, `path` is a directory.
pub fn write_dataset(ds: &Dataset, path: &Path, format: DatasetFormat) -> Result<Vec<PathBuf>> {
    let f = &ds.field;
    match format {
        DatasetFormat::Csv => {
            fs::create_dir_all(path)?;
            let values = path.join("values.csv");
            let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&values)?;
            for i in 0..f.nx() {
                w.write_record((0..f.nt()).map(|j| f.get(i, j).to_string()))?;
            }
            w.flush()?;
            let (x, t, meta) = (path.join("x.csv"), path.join("t.csv"), path.join("metadata.json"));
            write_column(&x, "x", f.x())?;
            write_column(&t, "t", f.t())?;
            fs::write(&meta, serde_json::to_string_pretty(&ds.meta)?)?;
            Ok(vec![values, x, t, meta])
        }
        DatasetFormat::Json => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            let mut bytes = Vec::with_capacity(8 * f.nx() * f.nt());
            for i in 0..f.nx() {
                for j in 0..f.nt() {
                    bytes.extend_from_slice(&f.get(i, j).to_le_bytes());
                }
            }
            let doc = JsonDataset {
                format: JSON_TAG.into(),
                nx: f.nx(),
                nt: f.nt(),
                x: f.x().to_vec(),
                t: f.t().to_vec(),
                values_b64: B64.encode(bytes),
                metadata: ds.meta.clone(),
            };
            fs::write(path, serde_json::to_string_pretty(&doc)?)?;
            Ok(vec![path.to_path_buf()])
        }
    }
}

/// Reads a dataset directory (CSV) or JSON file.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    if path.is_dir() {
        let x = read_column(&path.join("x.csv"))?;
        let t = read_column(&path.join("t.csv"))?;
        let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path.join("values.csv"))?;
        let mut data = Vec::with_capacity(x.len() * t.len());
        let mut rows = 0;
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != t.len() {
                return Err(Error::Format(format!("values row {rows} has {} entries, expected {}", rec.len(), t.len())));
            }
            for s in rec.iter() {
                data.push(s.trim().parse::<f64>().map_err(|e| Error::Format(format!("values row {rows}: {e}")))?);
            }
            rows += 1;
        }
        if rows != x.len() {
            return Err(Error::Format(format!("values has {rows} rows, x has {}", x.len())));
        }
        let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(path.join("metadata.json"))?)?;
        let values = DMatrix::from_row_slice(x.len(), t.len(), &data);
        Ok(Dataset { field: SpatioTemporalField::new(values, x, t)?, meta })
    } else {
        let doc: JsonDataset = serde_json::from_str(&fs::read_to_string(path)?)?;
        if doc.format != JSON_TAG {
            return Err(Error::Format(format!("unknown dataset tag '{}'", doc.format)));
        }
        let bytes = B64.decode(doc.values_b64.as_bytes()).map_err(|e| Error::Format(format!("base64 payload: {e}")))?;
        if bytes.len() != 8 * doc.nx * doc.nt || doc.x.len() != doc.nx || doc.t.len() != doc.nt {
            return Err(Error::Format("payload size disagrees with the grid".into()));
        }
        let data: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        let values = DMatrix::from_row_slice(doc.nx, doc.nt, &data);
        Ok(Dataset { field: SpatioTemporalField::new(values, doc.x, doc.t)?, meta: doc.metadata })
    }
}
