//! Verifies the backpropagation-through-time gradient against central finite
//! differences of the sequence negative log-likelihood, in both regression
//! (next-vector) and classification (next-symbol) modes.
//!
//! Run with `cargo run --release --example gradient_check`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rnnfv::rnn::{
    nll_classification, nll_regression, rnn_backprop, rnn_init, EmbeddingTable, FeatureSequence,
    RnnArchitecture, RnnMode, RnnModel, SymbolSequence,
};
use rnnfv::Result;

fn finite_diff(model: &RnnModel, nll: impl Fn(&RnnModel) -> f64, eps: f64) -> Vec<f64> {
    let flat = model.flatten();
    let mut grad = vec![0.0; flat.len()];
    for k in 0..flat.len() {
        let mut plus = flat.clone();
        plus[k] += eps;
        let mut minus = flat.clone();
        minus[k] -= eps;
        let mut mp = model.clone();
        mp.weights = model.unflatten(&plus).unwrap();
        let mut mm = model.clone();
        mm.weights = model.unflatten(&minus).unwrap();
        grad[k] = (nll(&mp) - nll(&mm)) / (2.0 * eps);
    }
    grad
}

fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .filter(|(x, y)| x.abs() + y.abs() > 1e-8)
        .map(|(x, y)| (x - y).abs() / (x.abs() + y.abs()))
        .fold(0.0, f64::max)
}

/// Nudges every parameter off zero so no pre-activation sits exactly on the
/// leaky-ReLU kink, where central differences are meaningless.
fn jitter(model: &mut RnnModel, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = model.flatten();
    for v in flat.iter_mut() {
        *v += rng.gen_range(0.01..0.05) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
    }
    model.weights = model.unflatten(&flat).unwrap();
}

fn main() -> Result<()> {
    env_logger::init();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // regression mode
    let arch = RnnArchitecture {
        input_dim: 5,
        fc1_units: Some(8),
        leaky_relu_slope: 0.1,
        lstm_units: 8,
        output_dim: 5,
        mode: RnnMode::Regression,
        dropout_rate: 0.0,
    };
    let mut model = rnn_init(&arch, 11)?;
    jitter(&mut model, 12);
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let seq = FeatureSequence::new(
            format!("seq-{i}"),
            (0..4).map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
            None,
        )?;
        let analytic = rnn_backprop(&model, &seq)?;
        let numeric = finite_diff(&model, |m| nll_regression(m, &seq).unwrap(), 1e-5);
        worst = worst.max(max_rel_error(&analytic.flat, &numeric));
    }
    println!("regression: max relative error over 10 sequences = {worst:.3e}");

    // classification mode
    let arch = RnnArchitecture {
        input_dim: 4,
        fc1_units: Some(6),
        leaky_relu_slope: 0.1,
        lstm_units: 6,
        output_dim: 7,
        mode: RnnMode::Classification,
        dropout_rate: 0.0,
    };
    let mut model = rnn_init(&arch, 21)?;
    jitter(&mut model, 22);
    let table = Arc::new(EmbeddingTable::new(
        (0..7).map(|i| format!("tok{i}")).collect(),
        (0..7).map(|i| (0..4).map(|j| ((i * 3 + j) as f64).sin()).collect()).collect(),
    )?);
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let symbols: Vec<usize> = (0..5).map(|_| rng.gen_range(0..7)).collect();
        let seq = SymbolSequence::new(format!("seq-{i}"), symbols, Arc::clone(&table))?;
        let analytic = rnn_backprop(&model, &seq)?;
        let numeric = finite_diff(&model, |m| nll_classification(m, &seq).unwrap(), 1e-5);
        worst = worst.max(max_rel_error(&analytic.flat, &numeric));
    }
    println!("classification: max relative error over 10 sequences = {worst:.3e}");
    Ok(())
}
