use std::collections::BTreeSet;
use std::io::{BufRead, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::rnn::FeatureSequence;
use crate::{Error, Result};

/// One dataset entry: a feature sequence (or symbol-id sequence) plus the
/// optional grouping and pairing metadata the pipelines use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<i64>,
    /// Records sharing a group must not straddle a train/validation split.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    /// Ground-truth partner id on the other retrieval side.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vectors: Option<Vec<Vec<f32>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symbols: Option<Vec<usize>>,
}

impl DatasetRecord {
    pub fn from_sequence(seq: &FeatureSequence) -> Self {
        Self {
            id: seq.id.clone(),
            label: seq.label,
            group: None,
            pair: None,
            vectors: Some(
                seq.vectors.iter().map(|v| v.iter().map(|&x| x as f32).collect()).collect(),
            ),
            symbols: None,
        }
    }

    pub fn to_sequence(&self) -> Result<FeatureSequence> {
        let vectors = self
            .vectors
            .as_ref()
            .ok_or_else(|| Error::Data(format!("record '{}' has no vectors", self.id)))?;
        FeatureSequence::new(
            self.id.clone(),
            vectors.iter().map(|v| v.iter().map(|&x| x as f64).collect()).collect(),
            self.label,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceDataset {
    pub dim: usize,
    pub records: Vec<DatasetRecord>,
}

impl SequenceDataset {
    pub fn new(dim: usize, records: Vec<DatasetRecord>) -> Result<Self> {
        let ds = Self { dim, records };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for r in &self.records {
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Data(format!("duplicate record id '{}'", r.id)));
            }
            if let Some(vs) = &r.vectors {
                for (i, v) in vs.iter().enumerate() {
                    if v.len() != self.dim {
                        return Err(Error::Data(format!(
                            "record '{}' element {i} has dimension {}, header says {}",
                            r.id,
                            v.len(),
                            self.dim
                        )));
                    }
                }
            }
            if r.vectors.is_none() && r.symbols.is_none() {
                return Err(Error::Data(format!(
                    "record '{}' has neither vectors nor symbols",
                    r.id
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// All records as feature sequences.
    pub fn sequences(&self) -> Result<Vec<FeatureSequence>> {
        self.records.iter().map(DatasetRecord::to_sequence).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// Header line JSON, then one JSON record per line.
    Text,
    /// Packed little-endian binary with magic "SQFV1".
    Binary,
}

#[derive(Debug, Serialize, Deserialize)]
struct TextHeader {
    format: String,
    dim: usize,
    count: usize,
}

const TEXT_FORMAT_TAG: &str = "rnnfv-dataset";
const BINARY_MAGIC: &[u8; 5] = b"SQFV1";

pub fn save_dataset(ds: &SequenceDataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let mut out = String::new();
    let header =
        TextHeader { format: TEXT_FORMAT_TAG.into(), dim: ds.dim, count: ds.records.len() };
    out.push_str(&serde_json::to_string(&header)?);
    out.push('\n');
    for r in &ds.records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    super::atomic_write(path, out.as_bytes())
}

pub fn save_dataset_binary(ds: &SequenceDataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(BINARY_MAGIC);
    buf.write_u32::<LittleEndian>(ds.dim as u32)?;
    buf.write_u64::<LittleEndian>(ds.records.len() as u64)?;
    for r in &ds.records {
        let vectors = r.vectors.as_ref().ok_or_else(|| {
            Error::Data(format!("record '{}': binary format only carries vector records", r.id))
        })?;
        buf.write_u32::<LittleEndian>(r.id.len() as u32)?;
        buf.extend_from_slice(r.id.as_bytes());
        buf.write_i32::<LittleEndian>(r.label.map(|l| l as i32).unwrap_or(-1))?;
        buf.write_u32::<LittleEndian>(vectors.len() as u32)?;
        for v in vectors {
            for &x in v {
                buf.write_f32::<LittleEndian>(x)?;
            }
        }
    }
    super::atomic_write(path, &buf)
}

pub fn load_dataset(path: &Path) -> Result<SequenceDataset> {
    let mut file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut magic = [0u8; 5];
    let n = file.read(&mut magic)?;
    if n == 5 && &magic == BINARY_MAGIC {
        return load_binary(file, path);
    }
    drop(file);
    load_text(path)
}

fn load_text(path: &Path) -> Result<SequenceDataset> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))??;
    let header: TextHeader = serde_json::from_str(&header_line)
        .map_err(|e| Error::Data(format!("{}: malformed header: {e}", path.display())))?;
    if header.format != TEXT_FORMAT_TAG {
        return Err(Error::Data(format!(
            "{}: unexpected format tag '{}'",
            path.display(),
            header.format
        )));
    }
    let mut records = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}: record {}: {e}", path.display(), i + 1)))?;
        records.push(record);
    }
    if records.len() != header.count {
        return Err(Error::Data(format!(
            "{}: header promises {} records, found {}",
            path.display(),
            header.count,
            records.len()
        )));
    }
    SequenceDataset::new(header.dim, records)
}

fn load_binary(mut file: std::fs::File, path: &Path) -> Result<SequenceDataset> {
    let dim = file.read_u32::<LittleEndian>()? as usize;
    let count = file.read_u64::<LittleEndian>()? as usize;
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let id_len = file.read_u32::<LittleEndian>()? as usize;
        let mut id_bytes = vec![0u8; id_len];
        file.read_exact(&mut id_bytes)?;
        let id = String::from_utf8(id_bytes)
            .map_err(|_| Error::Data(format!("{}: record {i}: invalid utf-8 id", path.display())))?;
        let label_raw = file.read_i32::<LittleEndian>()?;
        let label = if label_raw < 0 { None } else { Some(label_raw as i64) };
        let n = file.read_u32::<LittleEndian>()? as usize;
        let mut vectors = Vec::with_capacity(n);
        for _ in 0..n {
            let mut v = Vec::with_capacity(dim);
            for _ in 0..dim {
                v.push(file.read_f32::<LittleEndian>()?);
            }
            vectors.push(v);
        }
        records.push(DatasetRecord {
            id,
            label,
            group: None,
            pair: None,
            vectors: Some(vectors),
            symbols: None,
        });
    }
    SequenceDataset::new(dim, records)
}

/// Converts between the text and binary representations; lossless at f32.
pub fn convert_dataset(input: &Path, output: &Path, to: DatasetFormat) -> Result<()> {
    let ds = load_dataset(input)?;
    match to {
        DatasetFormat::Text => save_dataset(&ds, output),
        DatasetFormat::Binary => save_dataset_binary(&ds, output),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> SequenceDataset {
        SequenceDataset::new(
            2,
            vec![
                DatasetRecord {
                    id: "a".into(),
                    label: Some(0),
                    group: Some("g1".into()),
                    pair: None,
                    vectors: Some(vec![vec![1.0, 2.0], vec![3.5, -0.25]]),
                    symbols: None,
                },
                DatasetRecord {
                    id: "b".into(),
                    label: None,
                    group: None,
                    pair: Some("a".into()),
                    vectors: Some(vec![vec![0.125, -7.0]]),
                    symbols: None,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn text_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let ds = toy();
        save_dataset(&ds, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(ds, loaded);
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.sqfv");
        let ds = toy();
        save_dataset_binary(&ds, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(loaded.dim, 2);
        assert_eq!(loaded.records[0].vectors, ds.records[0].vectors);
        assert_eq!(loaded.records[0].label, Some(0));
        assert_eq!(loaded.records[1].label, None);
        // group/pair metadata lives only in the text format
        assert_eq!(loaded.records[0].group, None);
    }

    #[test]
    fn dimension_mismatch_names_record() {
        let err = SequenceDataset::new(
            3,
            vec![DatasetRecord {
                id: "bad".into(),
                label: None,
                group: None,
                pair: None,
                vectors: Some(vec![vec![1.0, 2.0]]),
                symbols: None,
            }],
        )
        .unwrap_err();
        assert!(err.to_string().contains("bad"));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = DatasetRecord {
            id: "x".into(),
            label: None,
            group: None,
            pair: None,
            vectors: Some(vec![vec![1.0]]),
            symbols: None,
        };
        assert!(SequenceDataset::new(1, vec![r.clone(), r]).is_err());
    }

    #[test]
    fn empty_dataset_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        let ds = SequenceDataset::new(4, vec![]).unwrap();
        save_dataset(&ds, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert!(loaded.is_empty());
        assert_eq!(loaded.dim, 4);
    }

    #[test]
    fn convert_text_binary_text() {
        let dir = tempfile::tempdir().unwrap();
        let t1 = dir.path().join("a.jsonl");
        let b = dir.path().join("a.sqfv");
        let t2 = dir.path().join("b.jsonl");
        let mut ds = toy();
        // strip text-only metadata so the trip is exact
        for r in ds.records.iter_mut() {
            r.group = None;
            r.pair = None;
        }
        save_dataset(&ds, &t1).unwrap();
        convert_dataset(&t1, &b, DatasetFormat::Binary).unwrap();
        convert_dataset(&b, &t2, DatasetFormat::Text).unwrap();
        assert_eq!(load_dataset(&t2).unwrap(), ds);
    }
}
