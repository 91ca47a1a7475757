use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::eval::LinearSvmModel;
use crate::fv::GmmModel;
use crate::numeric::{CcaModel, PcaModel};
use crate::rnn::RnnModel;
use crate::{Error, Result};

pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Pca,
    Cca,
    Gmm,
    Rnn,
    Svm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "lowercase")]
pub enum ModelPayload {
    Pca(PcaModel),
    Cca(CcaModel),
    Gmm(GmmModel),
    Rnn(RnnModel),
    Svm(LinearSvmModel),
}

impl ModelPayload {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelPayload::Pca(_) => ModelKind::Pca,
            ModelPayload::Cca(_) => ModelKind::Cca,
            ModelPayload::Gmm(_) => ModelKind::Gmm,
            ModelPayload::Rnn(_) => ModelKind::Rnn,
            ModelPayload::Svm(_) => ModelKind::Svm,
        }
    }
}

/// Versioned single-file model container. Double-precision payloads
/// round-trip bitwise (JSON numbers use the shortest exact representation).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelContainer {
    pub format: String,
    pub version: u32,
    #[serde(flatten)]
    pub payload: ModelPayload,
}

const FORMAT_TAG: &str = "rnnfv-model";

pub fn export_model(payload: &ModelPayload, path: &Path) -> Result<()> {
    let container = ModelContainer {
        format: FORMAT_TAG.into(),
        version: CONTAINER_VERSION,
        payload: payload.clone(),
    };
    let json = serde_json::to_string(&container)?;
    super::atomic_write(path, json.as_bytes())
}

pub fn import_model(path: &Path) -> Result<ModelPayload> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    // version/format checks happen before payload decoding: no partial loads
    let probe: serde_json::Value = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Data(format!("{}: corrupt container: {e}", path.display())))?;
    let format = probe.get("format").and_then(|v| v.as_str()).unwrap_or("");
    if format != FORMAT_TAG {
        return Err(Error::Data(format!(
            "{}: not a model container (format tag '{format}')",
            path.display()
        )));
    }
    let version = probe.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != CONTAINER_VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported container version {version} (expected {CONTAINER_VERSION})",
            path.display()
        )));
    }
    let container: ModelContainer = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Data(format!("{}: corrupt container: {e}", path.display())))?;
    Ok(container.payload)
}

/// Imports and requires a specific model kind, for callers that know what
/// they expect (e.g. loading an RNN checkpoint).
pub fn import_model_expecting(path: &Path, kind: ModelKind) -> Result<ModelPayload> {
    let payload = import_model(path)?;
    if payload.kind() != kind {
        return Err(Error::Data(format!(
            "{}: container holds a {:?} model, expected {:?}",
            path.display(),
            payload.kind(),
            kind
        )));
    }
    Ok(payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnn::{rnn_init, RnnArchitecture, RnnMode};

    fn rnn_model() -> RnnModel {
        rnn_init(
            &RnnArchitecture {
                input_dim: 3,
                fc1_units: Some(4),
                leaky_relu_slope: 0.1,
                lstm_units: 4,
                output_dim: 3,
                mode: RnnMode::Regression,
                dropout_rate: 0.2,
            },
            99,
        )
        .unwrap()
    }

    #[test]
    fn rnn_round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = rnn_model();
        export_model(&ModelPayload::Rnn(model.clone()), &path).unwrap();
        match import_model(&path).unwrap() {
            ModelPayload::Rnn(loaded) => {
                let a = model.flatten();
                let b = loaded.flatten();
                assert_eq!(a.len(), b.len());
                for (x, y) in a.iter().zip(&b) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
            other => panic!("wrong payload kind {:?}", other.kind()),
        }
    }

    #[test]
    fn unknown_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = rnn_model();
        export_model(&ModelPayload::Rnn(model), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let bumped = text.replace("\"version\":1", "\"version\":999");
        std::fs::write(&path, bumped).unwrap();
        let err = import_model(&path).unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    #[test]
    fn kind_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let gmm = GmmModel {
            k: 1,
            weights: vec![1.0],
            means: vec![vec![0.0]],
            stddevs: vec![vec![1.0]],
        };
        export_model(&ModelPayload::Gmm(gmm), &path).unwrap();
        assert!(import_model_expecting(&path, ModelKind::Rnn).is_err());
        assert!(import_model_expecting(&path, ModelKind::Gmm).is_ok());
    }

    #[test]
    fn corrupt_container_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, "{not json").unwrap();
        assert!(import_model(&path).is_err());
    }
}
