use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RnnMode {
    /// Predict the next vector; linear output, squared-error likelihood.
    Regression,
    /// Predict the next symbol; softmax output, cross-entropy likelihood.
    Classification,
}

/// Shape and hyperparameters of the FC -> LSTM -> output network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnArchitecture {
    pub input_dim: usize,
    /// `None` feeds the input straight into the LSTM.
    pub fc1_units: Option<usize>,
    pub leaky_relu_slope: f64,
    pub lstm_units: usize,
    /// Equals `input_dim` in regression mode, alphabet size in classification.
    pub output_dim: usize,
    pub mode: RnnMode,
    pub dropout_rate: f64,
}

impl RnnArchitecture {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.lstm_units == 0 || self.output_dim == 0 {
            return Err(Error::Config("architecture unit counts must be >= 1".into()));
        }
        if self.fc1_units == Some(0) {
            return Err(Error::Config("fc1_units must be >= 1 when present".into()));
        }
        if self.leaky_relu_slope <= 0.0 {
            return Err(Error::Config("leaky_relu_slope must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout_rate must be in [0, 1)".into()));
        }
        if self.mode == RnnMode::Regression && self.output_dim != self.input_dim {
            return Err(Error::Config(format!(
                "regression output_dim {} must equal input_dim {}",
                self.output_dim, self.input_dim
            )));
        }
        Ok(())
    }

    /// Dimension of the LSTM input (FC1 output, or the raw input).
    pub fn lstm_input_dim(&self) -> usize {
        self.fc1_units.unwrap_or(self.input_dim)
    }
}

/// All parameter tensors of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnWeights {
    /// H1 x D and H1, absent when FC1 is bypassed.
    pub fc1_w: Option<DMatrix<f64>>,
    pub fc1_b: Option<DVector<f64>>,
    /// Gate weights in order input, forget, cell candidate, output.
    /// Each `w_x` is H2 x In, each `w_h` is H2 x H2, each bias H2.
    pub lstm_w_x: [DMatrix<f64>; 4],
    pub lstm_w_h: [DMatrix<f64>; 4],
    pub lstm_b: [DVector<f64>; 4],
    /// output_dim x H2 and output_dim.
    pub out_w: DMatrix<f64>,
    pub out_b: DVector<f64>,
}

pub const GATE_INPUT: usize = 0;
pub const GATE_FORGET: usize = 1;
pub const GATE_CELL: usize = 2;
pub const GATE_OUTPUT: usize = 3;

/// Flat parameter-vector layout: FC1 (w row-major, then bias), LSTM gates in
/// order i/f/g/o (w_x, w_h, bias each), output layer (w row-major, then bias).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub fc1_len: usize,
    pub lstm_len: usize,
    pub out_len: usize,
}

impl ParamLayout {
    pub fn total(&self) -> usize {
        self.fc1_len + self.lstm_len + self.out_len
    }

    /// Flat-index range holding the output-layer weights and bias.
    pub fn output_layer_range(&self) -> std::ops::Range<usize> {
        let start = self.fc1_len + self.lstm_len;
        start..start + self.out_len
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnnModel {
    pub architecture: RnnArchitecture,
    pub weights: RnnWeights,
    pub rng_seed: u64,
}

impl RnnModel {
    pub fn layout(&self) -> ParamLayout {
        let a = &self.architecture;
        let fc1_len = match a.fc1_units {
            Some(h1) => h1 * a.input_dim + h1,
            None => 0,
        };
        let in_dim = a.lstm_input_dim();
        let h2 = a.lstm_units;
        let lstm_len = 4 * (h2 * in_dim + h2 * h2 + h2);
        let out_len = a.output_dim * h2 + a.output_dim;
        ParamLayout { fc1_len, lstm_len, out_len }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total()
    }

    /// Serializes all weights into the canonical flat layout.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        flatten_weights(&self.weights, &mut out);
        out
    }

    /// Rebuilds the weight tensors from a flat vector in the canonical layout.
    pub fn unflatten(&self, flat: &[f64]) -> Result<RnnWeights> {
        if flat.len() != self.param_count() {
            return Err(Error::Config(format!(
                "flat parameter vector has length {}, expected {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut w = self.weights.clone();
        let mut pos = 0usize;
        visit_tensors_mut(&mut w, |slice| {
            slice.copy_from_slice(&flat[pos..pos + slice.len()]);
            pos += slice.len();
        });
        Ok(w)
    }
}

/// Appends every tensor, row-major, in the canonical order.
pub(crate) fn flatten_weights(w: &RnnWeights, out: &mut Vec<f64>) {
    let push_mat = |m: &DMatrix<f64>, out: &mut Vec<f64>| {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.push(m[(i, j)]);
            }
        }
    };
    if let (Some(fw), Some(fb)) = (&w.fc1_w, &w.fc1_b) {
        push_mat(fw, out);
        out.extend(fb.iter());
    }
    for g in 0..4 {
        push_mat(&w.lstm_w_x[g], out);
        push_mat(&w.lstm_w_h[g], out);
        out.extend(w.lstm_b[g].iter());
    }
    push_mat(&w.out_w, out);
    out.extend(w.out_b.iter());
}

/// Visits every tensor as a mutable row-major slice, in the canonical order.
pub(crate) fn visit_tensors_mut(w: &mut RnnWeights, mut f: impl FnMut(&mut [f64])) {
    fn mat_rows(m: &mut DMatrix<f64>, f: &mut impl FnMut(&mut [f64])) {
        // DMatrix is column-major; expose row-major through a scratch buffer.
        let (r, c) = (m.nrows(), m.ncols());
        let mut buf = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                buf[i * c + j] = m[(i, j)];
            }
        }
        f(&mut buf);
        for i in 0..r {
            for j in 0..c {
                m[(i, j)] = buf[i * c + j];
            }
        }
    }
    if let Some(fw) = &mut w.fc1_w {
        mat_rows(fw, &mut f);
    }
    if let Some(fb) = &mut w.fc1_b {
        f(fb.as_mut_slice());
    }
    for g in 0..4 {
        mat_rows(&mut w.lstm_w_x[g], &mut f);
        mat_rows(&mut w.lstm_w_h[g], &mut f);
        f(w.lstm_b[g].as_mut_slice());
    }
    mat_rows(&mut w.out_w, &mut f);
    f(w.out_b.as_mut_slice());
}

/// Deterministic scaled-uniform initialization. Forget-gate bias starts at 1,
/// all other biases at 0.
pub fn rnn_init(arch: &RnnArchitecture, seed: u64) -> Result<RnnModel> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniform_mat = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
        let s = (6.0 / (rows + cols) as f64).sqrt();
        // row-major fill so the layout matches `flatten`
        let mut m = DMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = rng.gen_range(-s..s);
            }
        }
        m
    };

    let (fc1_w, fc1_b) = match arch.fc1_units {
        Some(h1) => (
            Some(uniform_mat(h1, arch.input_dim, &mut rng)),
            Some(DVector::zeros(h1)),
        ),
        None => (None, None),
    };
    let in_dim = arch.lstm_input_dim();
    let h2 = arch.lstm_units;
    let lstm_w_x: [DMatrix<f64>; 4] = std::array::from_fn(|_| uniform_mat(h2, in_dim, &mut rng));
    let lstm_w_h: [DMatrix<f64>; 4] = std::array::from_fn(|_| uniform_mat(h2, h2, &mut rng));
    let mut lstm_b: [DVector<f64>; 4] = std::array::from_fn(|_| DVector::zeros(h2));
    lstm_b[GATE_FORGET].fill(1.0);
    let out_w = uniform_mat(arch.output_dim, h2, &mut rng);
    let out_b = DVector::zeros(arch.output_dim);

    Ok(RnnModel {
        architecture: arch.clone(),
        weights: RnnWeights { fc1_w, fc1_b, lstm_w_x, lstm_w_h, lstm_b, out_w, out_b },
        rng_seed: seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> RnnArchitecture {
        RnnArchitecture {
            input_dim: 5,
            fc1_units: Some(8),
            leaky_relu_slope: 0.1,
            lstm_units: 8,
            output_dim: 5,
            mode: RnnMode::Regression,
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = arch();
        let m1 = rnn_init(&a, 42).unwrap();
        let m2 = rnn_init(&a, 42).unwrap();
        assert_eq!(m1.flatten(), m2.flatten());
    }

    #[test]
    fn different_seeds_differ() {
        let a = arch();
        let m1 = rnn_init(&a, 1).unwrap();
        let m2 = rnn_init(&a, 2).unwrap();
        assert_ne!(m1.flatten(), m2.flatten());
    }

    #[test]
    fn output_layer_param_count() {
        let m = rnn_init(&arch(), 0).unwrap();
        assert_eq!(m.layout().out_len, 5 * 8 + 5);
    }

    #[test]
    fn flatten_round_trip() {
        let m = rnn_init(&arch(), 3).unwrap();
        let flat = m.flatten();
        assert_eq!(flat.len(), m.param_count());
        let rebuilt = m.unflatten(&flat).unwrap();
        assert_eq!(rebuilt, m.weights);
    }

    #[test]
    fn forget_bias_is_one() {
        let m = rnn_init(&arch(), 0).unwrap();
        assert!(m.weights.lstm_b[GATE_FORGET].iter().all(|&b| b == 1.0));
        assert!(m.weights.lstm_b[GATE_INPUT].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn invalid_architecture_rejected() {
        let mut a = arch();
        a.dropout_rate = 1.0;
        assert!(rnn_init(&a, 0).is_err());
        let mut a = arch();
        a.output_dim = 7;
        assert!(rnn_init(&a, 0).is_err());
    }
}
