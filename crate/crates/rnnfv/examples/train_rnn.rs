//! Trains the next-element prediction network on synthetic smooth sequences,
//! prints the loss curve, and shows that the trained model round-trips
//! through the on-disk container bit for bit.
//!
//! Run with `cargo run --release --example train_rnn`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rnnfv::pipeline::{export_model, import_model, ModelPayload};
use rnnfv::rnn::{
    rnn_init, rnn_train, FeatureSequence, RnnArchitecture, RnnMode, SequenceRef, TrainConfig,
};
use rnnfv::Result;

/// A noisy sinusoid: predictable from its own past, unlike white noise.
fn smooth_sequence(rng: &mut ChaCha8Rng, id: usize, n: usize, d: usize) -> FeatureSequence {
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let freq: f64 = rng.gen_range(0.2..0.5);
    let vectors = (0..n)
        .map(|t| {
            (0..d)
                .map(|j| {
                    (phase + freq * t as f64 + j as f64).sin() + rng.gen_range(-0.05..0.05)
                })
                .collect()
        })
        .collect();
    FeatureSequence::new(format!("seq-{id}"), vectors, None).unwrap()
}

fn main() -> Result<()> {
    env_logger::init();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (n, d) = (12, 4);
    let train: Vec<FeatureSequence> = (0..200).map(|i| smooth_sequence(&mut rng, i, n, d)).collect();
    let valid: Vec<FeatureSequence> =
        (0..40).map(|i| smooth_sequence(&mut rng, 1000 + i, n, d)).collect();

    let arch = RnnArchitecture {
        input_dim: d,
        fc1_units: Some(12),
        leaky_relu_slope: 0.1,
        lstm_units: 12,
        output_dim: d,
        mode: RnnMode::Regression,
        dropout_rate: 0.1,
    };
    let model = rnn_init(&arch, 7)?;
    let cfg = TrainConfig { epochs: 15, learning_rate: 3e-3, seed: 7, ..TrainConfig::default() };

    let train_refs: Vec<SequenceRef> = train.iter().map(SequenceRef::from).collect();
    let valid_refs: Vec<SequenceRef> = valid.iter().map(SequenceRef::from).collect();
    let mut last = None;
    let curve = rnn_train(&model, &train_refs, &valid_refs, &cfg, |ck| last = Some(ck.model))?;
    println!("epoch  train_nll  valid_nll");
    for (e, t, v) in &curve {
        println!("{e:>5}  {t:>9.3}  {v:>9.3}");
    }
    let first = curve.first().unwrap().1;
    let final_nll = curve.last().unwrap().1;
    println!("training NLL dropped from {first:.3} to {final_nll:.3}");

    // persistence round trip
    let trained = last.expect("at least one epoch");
    let dir = std::env::temp_dir().join("rnnfv-train-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.json");
    export_model(&ModelPayload::Rnn(trained.clone()), &path)?;
    match import_model(&path)? {
        ModelPayload::Rnn(loaded) => {
            let same = trained
                .flatten()
                .iter()
                .zip(loaded.flatten())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            println!("container round trip bitwise identical: {same}");
        }
        _ => unreachable!(),
    }
    Ok(())
}
