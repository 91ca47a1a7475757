//! Pooling methods (mean vector, GMM Fisher Vector, RNN Fisher Vector) and
//! the normalization chain that turns a raw gradient into a representation:
//! optional Fisher-information whitening, signed power compression, L2.

mod gmm;
mod normalize;

pub use gmm::{gmm_fit, gmm_fit_with_history, gmm_fv, gmm_log_likelihood, GmmModel};
pub use normalize::{
    fim_estimate, fim_normalize, l2_normalize, normalize_chain, power_normalize, FimDiagonal,
    NormalizationConfig,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rnn::{rnn_backprop, RnnModel, SequenceRef};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FvSource {
    Mean,
    GmmFv,
    RnnFv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Fim,
    Power { alpha: f64 },
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimestepAggregation {
    Mean,
    Sum,
}

/// Which weight block of the RNN gradient forms the representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientScope {
    OutputLayer,
    AllWeights,
}

/// A fixed-size gradient-derived representation with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherVector {
    pub values: Vec<f64>,
    pub source: FvSource,
    pub normalizations: Vec<Normalization>,
    pub timestep_aggregation: Option<TimestepAggregation>,
    /// Set when the raw gradient was identically zero (perfect predictor).
    pub degenerate: bool,
}

impl FisherVector {
    pub fn raw(values: Vec<f64>, source: FvSource) -> Self {
        let degenerate = values.iter().all(|&v| v == 0.0);
        Self { values, source, normalizations: Vec::new(), timestep_aggregation: None, degenerate }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Arithmetic mean of the sequence elements.
pub fn mean_pool(seq: &crate::rnn::FeatureSequence) -> Result<Vec<f64>> {
    if seq.is_empty() {
        return Err(Error::Data("mean_pool of empty sequence".into()));
    }
    let d = seq.dim();
    let mut out = vec![0.0; d];
    for v in &seq.vectors {
        for (o, &x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    let n = seq.len() as f64;
    for o in out.iter_mut() {
        *o /= n;
    }
    Ok(out)
}

/// The RNN Fisher Vector: the NLL gradient restricted to `scope`, divided by
/// the sequence length under mean aggregation.
pub fn rnn_fv<'a>(
    model: &RnnModel,
    seq: impl Into<SequenceRef<'a>>,
    aggregation: TimestepAggregation,
    scope: GradientScope,
) -> Result<FisherVector> {
    let seq = seq.into();
    let n = seq.len() as f64;
    let grad = rnn_backprop(model, seq)?;
    let mut values: Vec<f64> = match scope {
        GradientScope::OutputLayer => grad.output_layer().to_vec(),
        GradientScope::AllWeights => grad.flat,
    };
    if aggregation == TimestepAggregation::Mean {
        for v in values.iter_mut() {
            *v /= n;
        }
    }
    let mut fv = FisherVector::raw(values, FvSource::RnnFv);
    fv.timestep_aggregation = Some(aggregation);
    Ok(fv)
}

/// A deterministic, seeded coordinate subset (strictly increasing indices).
/// The same seed must be reused for every FV within a run.
pub fn subsample_indices(dim: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    if count > dim {
        return Err(Error::Config(format!(
            "cannot subsample {count} coordinates from dimension {dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut all: Vec<usize> = (0..dim).collect();
    all.shuffle(&mut rng);
    let mut chosen: Vec<usize> = all.into_iter().take(count).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Restricts an FV to a seeded coordinate subset.
pub fn subsample_coordinates(fv: &FisherVector, count: usize, seed: u64) -> Result<FisherVector> {
    let idx = subsample_indices(fv.dim(), count, seed)?;
    let values: Vec<f64> = idx.iter().map(|&i| fv.values[i]).collect();
    Ok(FisherVector { values, ..fv.clone() })
}

/// Concatenates already-normalized FVs in the given order.
pub fn concat_fuse(fvs: &[FisherVector]) -> Result<FisherVector> {
    if fvs.is_empty() {
        return Err(Error::Config("concat_fuse of empty list".into()));
    }
    let mut values = Vec::with_capacity(fvs.iter().map(|f| f.dim()).sum());
    for f in fvs {
        values.extend_from_slice(&f.values);
    }
    Ok(FisherVector {
        values,
        source: fvs[0].source,
        normalizations: fvs[0].normalizations.clone(),
        timestep_aggregation: fvs[0].timestep_aggregation,
        degenerate: fvs.iter().all(|f| f.degenerate),
    })
}
