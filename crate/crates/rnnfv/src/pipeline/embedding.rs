use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rnn::EmbeddingTable;
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    count: usize,
    dim: usize,
}

const FORMAT_TAG: &str = "rnnfv-embeddings";

/// Text format: JSON header line, then one `token v1 v2 ...` line per symbol.
/// Values are carried at single precision.
pub fn save_embedding_table(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    let header = Header {
        format: FORMAT_TAG.into(),
        count: table.alphabet_size(),
        dim: table.dim(),
    };
    out.push_str(&serde_json::to_string(&header)?);
    out.push('\n');
    for (tok, vec) in table.alphabet.iter().zip(&table.vectors) {
        if tok.contains(char::is_whitespace) {
            return Err(Error::Data(format!("token '{tok}' contains whitespace")));
        }
        out.push_str(tok);
        for &v in vec {
            out.push(' ');
            out.push_str(&format!("{}", v as f32));
        }
        out.push('\n');
    }
    super::atomic_write(path, out.as_bytes())
}

pub fn load_embedding_table(path: &Path) -> Result<EmbeddingTable> {
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
    let mut alphabet = Vec::with_capacity(header.count);
    let mut vectors = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts
            .next()
            .ok_or_else(|| Error::Data(format!("{}: line {}: missing token", path.display(), i + 2)))?;
        let vec: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| {
                    Error::Data(format!("{}: line {}: bad number '{p}'", path.display(), i + 2))
                })
            })
            .collect::<Result<_>>()?;
        if vec.len() != header.dim {
            return Err(Error::Data(format!(
                "{}: token '{token}' has {} values, header says {}",
                path.display(),
                vec.len(),
                header.dim
            )));
        }
        alphabet.push(token.to_string());
        vectors.push(vec);
    }
    if alphabet.len() != header.count {
        return Err(Error::Data(format!(
            "{}: header promises {} tokens, found {}",
            path.display(),
            header.count,
            alphabet.len()
        )));
    }
    EmbeddingTable::new(alphabet, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        let table = EmbeddingTable::new(
            vec!["the".into(), "cat".into(), "sat".into()],
            vec![vec![0.5, -0.25], vec![1.0, 2.0], vec![-3.5, 0.125]],
        )
        .unwrap();
        save_embedding_table(&table, &path).unwrap();
        let loaded = load_embedding_table(&path).unwrap();
        assert_eq!(loaded, table);
    }

    #[test]
    fn duplicate_tokens_rejected_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        std::fs::write(
            &path,
            "{\"format\":\"rnnfv-embeddings\",\"count\":2,\"dim\":1}\nfoo 1.0\nfoo 2.0\n",
        )
        .unwrap();
        assert!(load_embedding_table(&path).is_err());
    }
}
