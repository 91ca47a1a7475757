use serde::{Deserialize, Serialize};

use super::{FisherVector, Normalization};
use crate::{Error, Result};

/// Per-parameter Fisher information, approximated as the training-set mean of
/// squared log-likelihood partials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FimDiagonal {
    pub values: Vec<f64>,
    pub floor: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormalizationConfig {
    pub power_alpha: f64,
    pub apply_l2: bool,
    pub apply_fim: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        // FIM whitening is available but off by default; it was not observed
        // to help in practice.
        Self { power_alpha: 0.5, apply_l2: true, apply_fim: false }
    }
}

pub const FIM_FLOOR: f64 = 1e-12;

/// Mean of squared gradients over the training set, floored at 1e-12.
pub fn fim_estimate(gradients: &[FisherVector]) -> Result<FimDiagonal> {
    if gradients.is_empty() {
        return Err(Error::Data("fim_estimate over empty gradient set".into()));
    }
    let dim = gradients[0].dim();
    let mut acc = vec![0.0; dim];
    for g in gradients {
        if g.dim() != dim {
            return Err(Error::Data(format!(
                "fim_estimate dimension mismatch: {} vs {dim}",
                g.dim()
            )));
        }
        for (a, &v) in acc.iter_mut().zip(&g.values) {
            *a += v * v;
        }
    }
    let n = gradients.len() as f64;
    for a in acc.iter_mut() {
        *a = (*a / n).max(FIM_FLOOR);
    }
    Ok(FimDiagonal { values: acc, floor: FIM_FLOOR })
}

/// Elementwise `fv / sqrt(F)`.
pub fn fim_normalize(fv: &FisherVector, fim: &FimDiagonal) -> Result<FisherVector> {
    if fv.dim() != fim.values.len() {
        return Err(Error::Data(format!(
            "fim_normalize dimension mismatch: {} vs {}",
            fv.dim(),
            fim.values.len()
        )));
    }
    let values: Vec<f64> =
        fv.values.iter().zip(&fim.values).map(|(&v, &f)| v / f.sqrt()).collect();
    let mut out = FisherVector { values, ..fv.clone() };
    out.normalizations.push(Normalization::Fim);
    Ok(out)
}

/// Signed power compression `sign(z) |z|^alpha` applied elementwise.
pub fn power_normalize(fv: &FisherVector, alpha: f64) -> Result<FisherVector> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("power alpha must be in [0, 1], got {alpha}")));
    }
    let values: Vec<f64> = fv
        .values
        .iter()
        .map(|&z| if z == 0.0 { 0.0 } else { z.signum() * z.abs().powf(alpha) })
        .collect();
    let mut out = FisherVector { values, ..fv.clone() };
    out.normalizations.push(Normalization::Power { alpha });
    Ok(out)
}

/// Scales to unit L2 norm; a zero vector passes through with its degenerate
/// flag set instead of failing.
pub fn l2_normalize(fv: &FisherVector) -> Result<FisherVector> {
    let norm = fv.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut out = if norm == 0.0 {
        let mut z = fv.clone();
        z.degenerate = true;
        z
    } else {
        let values: Vec<f64> = fv.values.iter().map(|v| v / norm).collect();
        FisherVector { values, ..fv.clone() }
    };
    out.normalizations.push(Normalization::L2);
    Ok(out)
}

/// The full chain in fixed order: fim? -> power -> l2.
pub fn normalize_chain(
    fv: &FisherVector,
    cfg: &NormalizationConfig,
    fim: Option<&FimDiagonal>,
) -> Result<FisherVector> {
    let mut out = fv.clone();
    if cfg.apply_fim {
        let fim = fim.ok_or_else(|| {
            Error::Config("FIM normalization requested but no FIM diagonal supplied".into())
        })?;
        out = fim_normalize(&out, fim)?;
    }
    out = power_normalize(&out, cfg.power_alpha)?;
    if cfg.apply_l2 {
        out = l2_normalize(&out)?;
    }
    Ok(out)
}
