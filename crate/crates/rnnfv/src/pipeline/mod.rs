//! Persistence formats, the synthetic order-discrimination generator, and the
//! end-to-end classification and retrieval recipes behind the CLI.

mod container;
mod dataset;
mod embedding;
mod run;
mod synth;
mod vectors;

pub use container::{
    export_model, import_model, import_model_expecting, ModelContainer, ModelKind, ModelPayload,
};
pub use dataset::{
    convert_dataset, load_dataset, save_dataset, save_dataset_binary, DatasetFormat,
    DatasetRecord, SequenceDataset,
};
pub use embedding::{load_embedding_table, save_embedding_table};
pub use run::{
    run_classify, run_retrieve, CcaConfig, FvConfig, GmmConfig, PoolingMethod, PreprocessConfig,
    RetrievalReport, RnnConfig, RunConfig, RunPaths, RunReport, SvmConfig, TaskKind,
};
pub use synth::generate_order_task;
pub use vectors::{load_vector_set, save_vector_set, VectorRecord, VectorSet};

use std::io::Write;
use std::path::Path;

/// Atomic file write: write to a sibling temp file, then rename into place.
pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> crate::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
    ));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
