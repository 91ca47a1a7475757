use nalgebra::DVector;
use rand::Rng;

use super::model::{RnnMode, RnnModel, GATE_CELL, GATE_FORGET, GATE_INPUT, GATE_OUTPUT};
use super::sequence::SequenceRef;
use crate::{Error, Result};

/// Per-timestep state cached during the forward pass; everything backprop
/// needs to run exactly.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub input: DVector<f64>,
    /// FC1 pre-activation (absent when FC1 is bypassed).
    pub fc1_pre: Option<DVector<f64>>,
    /// LSTM input after FC1 activation and (in training) dropout.
    pub lstm_in: DVector<f64>,
    pub dropout_mask: Option<DVector<f64>>,
    /// Activated gate values i, f, g, o.
    pub gates: [DVector<f64>; 4],
    pub cell: DVector<f64>,
    pub cell_tanh: DVector<f64>,
    pub hidden: DVector<f64>,
}

/// Targets the loss is computed against.
#[derive(Debug, Clone)]
pub(crate) enum Targets {
    Vectors(Vec<DVector<f64>>),
    Symbols(Vec<usize>),
}

/// Outputs and cached state of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// v_0..v_{N-1}; logits in classification mode.
    pub outputs: Vec<Vec<f64>>,
    /// Softmax rows (classification mode only), each summing to 1.
    pub probs: Option<Vec<Vec<f64>>>,
    pub(crate) steps: Vec<StepCache>,
    pub(crate) targets: Targets,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Builds the shifted input list (zero start element, then the first N-1
/// elements) and the targets.
fn prepare(model: &RnnModel, seq: SequenceRef<'_>) -> Result<(Vec<DVector<f64>>, Targets)> {
    let d = model.architecture.input_dim;
    match (model.architecture.mode, seq) {
        (RnnMode::Regression, SequenceRef::Features(fs)) => {
            if fs.dim() != d {
                return Err(Error::Data(format!(
                    "sequence '{}' has dimension {} but model expects {d}",
                    fs.id,
                    fs.dim()
                )));
            }
            let mut inputs = vec![DVector::zeros(d)];
            for v in &fs.vectors[..fs.len() - 1] {
                inputs.push(DVector::from_row_slice(v));
            }
            let targets = fs.vectors.iter().map(|v| DVector::from_row_slice(v)).collect();
            Ok((inputs, Targets::Vectors(targets)))
        }
        (RnnMode::Classification, SequenceRef::Symbols(ss)) => {
            let table = &ss.embeddings;
            if table.dim() != d {
                return Err(Error::Data(format!(
                    "embedding dimension {} but model expects {d}",
                    table.dim()
                )));
            }
            if table.alphabet_size() != model.architecture.output_dim {
                return Err(Error::Data(format!(
                    "alphabet size {} but model output_dim {}",
                    table.alphabet_size(),
                    model.architecture.output_dim
                )));
            }
            let mut inputs = vec![DVector::zeros(d)];
            for &s in &ss.symbols[..ss.len() - 1] {
                inputs.push(DVector::from_row_slice(&table.vectors[s]));
            }
            Ok((inputs, Targets::Symbols(ss.symbols.clone())))
        }
        (RnnMode::Regression, SequenceRef::Symbols(_)) => Err(Error::Config(
            "regression model cannot consume a symbol sequence".into(),
        )),
        (RnnMode::Classification, SequenceRef::Features(_)) => Err(Error::Config(
            "classification model cannot consume a feature sequence".into(),
        )),
    }
}

/// Runs the network over the sequence, emitting one output per timestep.
///
/// `inference_mode` disables dropout; training passes an RNG for the masks.
pub fn rnn_forward<'a>(
    model: &RnnModel,
    seq: impl Into<SequenceRef<'a>>,
    inference_mode: bool,
) -> Result<ForwardTrace> {
    rnn_forward_impl(model, seq.into(), inference_mode, None)
}

pub(crate) fn rnn_forward_impl(
    model: &RnnModel,
    seq: SequenceRef<'_>,
    inference_mode: bool,
    mut dropout_rng: Option<&mut dyn rand::RngCore>,
) -> Result<ForwardTrace> {
    let (inputs, targets) = prepare(model, seq)?;
    let arch = &model.architecture;
    let w = &model.weights;
    let h2 = arch.lstm_units;
    let rate = arch.dropout_rate;
    let use_dropout = !inference_mode && rate > 0.0;

    let mut hidden = DVector::zeros(h2);
    let mut cell = DVector::zeros(h2);
    let mut steps = Vec::with_capacity(inputs.len());
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut probs = if arch.mode == RnnMode::Classification {
        Some(Vec::with_capacity(inputs.len()))
    } else {
        None
    };

    for input in inputs {
        let (fc1_pre, mut lstm_in) = match (&w.fc1_w, &w.fc1_b) {
            (Some(fw), Some(fb)) => {
                let pre = fw * &input + fb;
                let act = pre.map(|x| if x > 0.0 { x } else { arch.leaky_relu_slope * x });
                (Some(pre), act)
            }
            _ => (None, input.clone()),
        };

        let dropout_mask = if use_dropout {
            let rng = dropout_rng
                .as_deref_mut()
                .expect("training forward pass requires an RNG for dropout");
            let keep = 1.0 - rate;
            let mask =
                DVector::from_fn(lstm_in.len(), |_, _| {
                    if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 }
                });
            lstm_in.component_mul_assign(&mask);
            Some(mask)
        } else {
            None
        };

        let gate_pre: [DVector<f64>; 4] = std::array::from_fn(|g| {
            &w.lstm_w_x[g] * &lstm_in + &w.lstm_w_h[g] * &hidden + &w.lstm_b[g]
        });
        let gates: [DVector<f64>; 4] = [
            gate_pre[GATE_INPUT].map(sigmoid),
            gate_pre[GATE_FORGET].map(sigmoid),
            gate_pre[GATE_CELL].map(f64::tanh),
            gate_pre[GATE_OUTPUT].map(sigmoid),
        ];
        cell = gates[GATE_FORGET].component_mul(&cell) + gates[GATE_INPUT].component_mul(&gates[GATE_CELL]);
        let cell_tanh = cell.map(f64::tanh);
        hidden = gates[GATE_OUTPUT].component_mul(&cell_tanh);

        let v = &w.out_w * &hidden + &w.out_b;
        if let Some(p) = probs.as_mut() {
            let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            p.push(exps.into_iter().map(|e| e / sum).collect());
        }
        outputs.push(v.iter().cloned().collect());

        steps.push(StepCache {
            input,
            fc1_pre,
            lstm_in,
            dropout_mask,
            gates,
            cell: cell.clone(),
            cell_tanh,
            hidden: hidden.clone(),
        });
    }

    Ok(ForwardTrace { outputs, probs, steps, targets })
}

/// Negative log-likelihood of a feature sequence under a regression model:
/// `(N D / 2) ln 2pi + 1/2 sum ||x_{i+1} - v_i||^2`.
pub fn nll_regression(model: &RnnModel, seq: &super::FeatureSequence) -> Result<f64> {
    if model.architecture.mode != RnnMode::Regression {
        return Err(Error::Config("nll_regression requires a regression model".into()));
    }
    let trace = rnn_forward(model, seq, true)?;
    Ok(nll_from_trace(model, &trace))
}

/// Negative log-likelihood of a symbol sequence under a classification model:
/// the summed per-step cross-entropy.
pub fn nll_classification(model: &RnnModel, seq: &super::SymbolSequence) -> Result<f64> {
    if model.architecture.mode != RnnMode::Classification {
        return Err(Error::Config("nll_classification requires a classification model".into()));
    }
    let trace = rnn_forward(model, seq, true)?;
    Ok(nll_from_trace(model, &trace))
}

/// Recomputes the sequence NLL from an existing trace.
pub(crate) fn nll_from_trace(model: &RnnModel, trace: &ForwardTrace) -> f64 {
    match &trace.targets {
        Targets::Vectors(targets) => {
            let n = trace.len() as f64;
            let d = model.architecture.input_dim as f64;
            let residual: f64 = trace
                .outputs
                .iter()
                .zip(targets)
                .map(|(v, t)| v.iter().zip(t.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
                .sum();
            n * d / 2.0 * (2.0 * std::f64::consts::PI).ln() + 0.5 * residual
        }
        Targets::Symbols(targets) => {
            let probs = trace.probs.as_ref().expect("classification trace has probs");
            probs
                .iter()
                .zip(targets)
                .map(|(p, &t)| -p[t].max(f64::MIN_POSITIVE).ln())
                .sum()
        }
    }
}
