use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{Error, Result};

/// One fixed-size vector with its id and optional label/pair metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorRecord {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<String>,
    pub values: Vec<f64>,
}

/// A set of equal-dimension vectors with provenance metadata, the on-disk
/// carrier for pooled representations and Fisher Vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorSet {
    pub dim: usize,
    /// Free-form provenance: source, normalizations, aggregation, seeds.
    pub provenance: Value,
    pub records: Vec<VectorRecord>,
}

impl VectorSet {
    pub fn new(dim: usize, provenance: Value, records: Vec<VectorRecord>) -> Result<Self> {
        for r in &records {
            if r.values.len() != dim {
                return Err(Error::Data(format!(
                    "vector '{}' has dimension {}, header says {dim}",
                    r.id,
                    r.values.len()
                )));
            }
        }
        Ok(Self { dim, provenance, records })
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.values.clone()).collect()
    }

    pub fn labels(&self) -> Result<Vec<i64>> {
        self.records
            .iter()
            .map(|r| {
                r.label.ok_or_else(|| Error::Data(format!("vector '{}' has no label", r.id)))
            })
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    dim: usize,
    count: usize,
    provenance: Value,
}

const FORMAT_TAG: &str = "rnnfv-vectors";

pub fn save_vector_set(vs: &VectorSet, path: &Path) -> Result<()> {
    let mut out = String::new();
    let header = Header {
        format: FORMAT_TAG.into(),
        dim: vs.dim,
        count: vs.records.len(),
        provenance: vs.provenance.clone(),
    };
    out.push_str(&serde_json::to_string(&header)?);
    out.push('\n');
    for r in &vs.records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    super::atomic_write(path, out.as_bytes())
}

pub fn load_vector_set(path: &Path) -> Result<VectorSet> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))??;
    let header: Header = serde_json::from_str(&header_line)
        .map_err(|e| Error::Data(format!("{}: malformed header: {e}", path.display())))?;
    if header.format != FORMAT_TAG {
        return Err(Error::Data(format!(
            "{}: unexpected format tag '{}'",
            path.display(),
            header.format
        )));
    }
    let mut records = Vec::with_capacity(header.count);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    VectorSet::new(header.dim, header.provenance, records)
}
