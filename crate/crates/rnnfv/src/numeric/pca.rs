use serde::{Deserialize, Serialize};

use super::{stack_rows, Matrix, Vector};
use crate::{Error, Result};

/// Principal component analysis fitted by SVD of the centered sample matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// K x D, rows are principal directions (orthonormal).
    pub components: Vec<Vec<f64>>,
    /// Non-negative, non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.len()
    }
}

const RANK_TOL: f64 = 1e-10;

/// Fits a PCA on the given samples, keeping the top `target_dim` directions.
///
/// `target_dim` is clamped to the numerical rank of the centered data
/// (singular values above `1e-10` times the largest) with a warning.
pub fn pca_fit(samples: &[Vec<f64>], target_dim: usize) -> Result<PcaModel> {
    if samples.len() < 2 {
        return Err(Error::Data(format!(
            "pca_fit needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if target_dim == 0 {
        return Err(Error::Config("pca target_dim must be >= 1".into()));
    }
    let x = stack_rows(samples)?;
    let n = x.nrows();
    let d = x.ncols();
    let mean = x.row_mean();
    let mut centered = x;
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }

    let svd = centered.svd(false, true);
    let v_t = svd.v_t.expect("svd requested v_t");
    let sv = &svd.singular_values;

    let max_sv = sv.iter().cloned().fold(0.0f64, f64::max);
    let rank = if max_sv == 0.0 {
        0
    } else {
        sv.iter().filter(|&&s| s > RANK_TOL * max_sv).count()
    };
    // Degenerate data (all samples identical) keeps one zero-variance direction
    // so transform/inverse-transform still have a defined shape.
    let rank = rank.max(1).min(v_t.nrows());
    let k = if target_dim > rank {
        log::warn!(
            "pca target_dim {} exceeds numerical rank {}; clamping",
            target_dim,
            rank
        );
        rank
    } else {
        target_dim
    };
    let k = k.min(n - 1).max(1).min(d);

    let components: Vec<Vec<f64>> = (0..k).map(|i| v_t.row(i).iter().cloned().collect()).collect();
    let explained_variance: Vec<f64> = (0..k).map(|i| sv[i] * sv[i] / (n as f64 - 1.0)).collect();

    Ok(PcaModel {
        mean: mean.iter().cloned().collect(),
        components,
        explained_variance,
    })
}

/// Projects `v` onto the principal directions: `components . (v - mean)`.
pub fn pca_transform(model: &PcaModel, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != model.input_dim() {
        return Err(Error::Data(format!(
            "pca_transform dimension mismatch: vector has {}, model expects {}",
            v.len(),
            model.input_dim()
        )));
    }
    let centered: Vec<f64> = v.iter().zip(&model.mean).map(|(a, m)| a - m).collect();
    Ok(model
        .components
        .iter()
        .map(|c| c.iter().zip(&centered).map(|(a, b)| a * b).sum())
        .collect())
}

/// Maps a projected vector back to input space: `mean + components^T . y`.
pub fn pca_inverse_transform(model: &PcaModel, y: &[f64]) -> Result<Vec<f64>> {
    if y.len() != model.output_dim() {
        return Err(Error::Data(format!(
            "pca_inverse_transform dimension mismatch: vector has {}, model expects {}",
            y.len(),
            model.output_dim()
        )));
    }
    let mut out = Vector::from_vec(model.mean.clone());
    for (c, &yi) in model.components.iter().zip(y) {
        for (o, &ci) in out.iter_mut().zip(c) {
            *o += yi * ci;
        }
    }
    Ok(out.iter().cloned().collect())
}

// test-only helper exposed for the acceptance suite
#[doc(hidden)]
pub fn _pca_matrix(model: &PcaModel) -> Matrix {
    Matrix::from_fn(model.components.len(), model.input_dim(), |i, j| {
        model.components[i][j]
    })
}
