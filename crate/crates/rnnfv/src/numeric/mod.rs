//! Dense linear algebra building blocks shared by every other module:
//! PCA via SVD, ridge-regularized CCA, and cosine similarity.

mod cca;
mod pca;

pub use cca::{cca_fit, cca_transform, CcaModel, CcaSide};
pub use pca::{pca_fit, pca_inverse_transform, pca_transform, PcaModel};

use crate::{Error, Result};

/// Row-major dense matrix carrier used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;

/// Stacks equal-length sample vectors into an n-by-d matrix.
pub(crate) fn stack_rows(samples: &[Vec<f64>]) -> Result<Matrix> {
    if samples.is_empty() {
        return Err(Error::Data("no samples".into()));
    }
    let d = samples[0].len();
    for (i, s) in samples.iter().enumerate() {
        if s.len() != d {
            return Err(Error::Data(format!(
                "sample {i} has dimension {} but expected {d}",
                s.len()
            )));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data(format!("sample {i} contains non-finite values")));
        }
    }
    Ok(Matrix::from_fn(samples.len(), d, |i, j| samples[i][j]))
}

/// Cosine similarity of two non-zero vectors of equal dimension.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Data(format!(
            "dimension mismatch: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Data("cosine similarity of zero vector".into()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}
