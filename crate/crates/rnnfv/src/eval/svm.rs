use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One-vs-all linear SVM: one hinge-loss classifier per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmModel {
    pub classes: Vec<i64>,
    /// Per-class weight vector, aligned with `classes`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub c: f64,
}

const SVM_EPOCHS: usize = 100;

/// Trains per-class hinge-loss classifiers by Pegasos-style stochastic
/// subgradient descent with `lambda = 1 / (C n)`, a fixed epoch budget, and
/// seeded shuffling. Classes are sorted ascending; training is deterministic.
pub fn svm_train(features: &[Vec<f64>], labels: &[i64], c: f64, seed: u64) -> Result<LinearSvmModel> {
    if features.is_empty() {
        return Err(Error::Data("svm_train on empty data".into()));
    }
    if features.len() != labels.len() {
        return Err(Error::Data(format!(
            "svm_train: {} features but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if c <= 0.0 {
        return Err(Error::Config(format!("svm C must be > 0, got {c}")));
    }
    let d = features[0].len();
    for (i, f) in features.iter().enumerate() {
        if f.len() != d {
            return Err(Error::Data(format!(
                "svm_train: feature {i} has dimension {}, expected {d}",
                f.len()
            )));
        }
    }
    let mut classes: Vec<i64> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::Data("svm_train needs at least 2 classes".into()));
    }

    let n = features.len();
    let lambda = 1.0 / (c * n as f64);
    let mut weights = Vec::with_capacity(classes.len());
    let mut biases = Vec::with_capacity(classes.len());

    for (ci, &class) in classes.iter().enumerate() {
        let targets: Vec<f64> =
            labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(ci as u64));
        let mut order: Vec<usize> = (0..n).collect();
        let mut t = 0u64;
        for _ in 0..SVM_EPOCHS {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (lambda * t as f64);
                let margin = targets[i]
                    * (w.iter().zip(&features[i]).map(|(a, b)| a * b).sum::<f64>() + b);
                let shrink = 1.0 - eta * lambda;
                for wj in w.iter_mut() {
                    *wj *= shrink;
                }
                if margin < 1.0 {
                    let s = eta * targets[i];
                    for (wj, &xj) in w.iter_mut().zip(&features[i]) {
                        *wj += s * xj;
                    }
                    b += s;
                }
            }
        }
        weights.push(w);
        biases.push(b);
    }

    Ok(LinearSvmModel { classes, weights, biases, c })
}

/// Per-class decision values for a vector.
pub fn svm_decision_values(model: &LinearSvmModel, v: &[f64]) -> Result<Vec<f64>> {
    if v.len() != model.weights[0].len() {
        return Err(Error::Data(format!(
            "svm_predict dimension mismatch: {} vs {}",
            v.len(),
            model.weights[0].len()
        )));
    }
    Ok(model
        .weights
        .iter()
        .zip(&model.biases)
        .map(|(w, b)| w.iter().zip(v).map(|(a, x)| a * x).sum::<f64>() + b)
        .collect())
}

/// Argmax over per-class decision values; ties break to the smallest class id.
pub fn svm_predict(model: &LinearSvmModel, v: &[f64]) -> Result<i64> {
    let scores = svm_decision_values(model, v)?;
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    Ok(model.classes[best])
}

/// Fraction of correct predictions on a labeled set.
pub fn classify_accuracy(model: &LinearSvmModel, features: &[Vec<f64>], labels: &[i64]) -> Result<f64> {
    if features.is_empty() {
        return Err(Error::Data("classify_accuracy on empty set".into()));
    }
    let mut correct = 0usize;
    for (f, &l) in features.iter().zip(labels) {
        if svm_predict(model, f)? == l {
            correct += 1;
        }
    }
    Ok(correct as f64 / features.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Linearly separable 2-class toy with margin >= 1.
    fn separable() -> (Vec<Vec<f64>>, Vec<i64>) {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let t = i as f64 * 0.1;
            features.push(vec![2.0 + t, 1.0 + 0.5 * t]);
            labels.push(0);
            features.push(vec![-2.0 - t, -1.0 - 0.5 * t]);
            labels.push(1);
        }
        (features, labels)
    }

    #[test]
    fn separable_toy_reaches_full_training_accuracy() {
        let (x, y) = separable();
        let model = svm_train(&x, &y, 1.0, 0).unwrap();
        assert_eq!(classify_accuracy(&model, &x, &y).unwrap(), 1.0);
    }

    #[test]
    fn deep_interior_point_classified() {
        let (x, y) = separable();
        let model = svm_train(&x, &y, 1.0, 0).unwrap();
        assert_eq!(svm_predict(&model, &[10.0, 5.0]).unwrap(), 0);
        assert_eq!(svm_predict(&model, &[-10.0, -5.0]).unwrap(), 1);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = separable();
        let a = svm_train(&x, &y, 1.0, 42).unwrap();
        let b = svm_train(&x, &y, 1.0, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_c_rejected() {
        let (x, y) = separable();
        assert!(svm_train(&x, &y, 0.0, 0).is_err());
        assert!(svm_train(&x, &y, -1.0, 0).is_err());
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![1.0], vec![2.0]];
        let y = vec![3, 3];
        assert!(svm_train(&x, &y, 1.0, 0).is_err());
    }

    #[test]
    fn tie_breaks_to_smallest_class() {
        let model = LinearSvmModel {
            classes: vec![2, 5, 9],
            weights: vec![vec![0.0, 0.0]; 3],
            biases: vec![1.5, 1.5, 1.5],
            c: 1.0,
        };
        assert_eq!(svm_predict(&model, &[3.0, 4.0]).unwrap(), 2);
    }

    #[test]
    fn argmax_invariant_to_positive_scaling() {
        let (x, y) = separable();
        let model = svm_train(&x, &y, 1.0, 1).unwrap();
        let mut scaled = model.clone();
        for w in scaled.weights.iter_mut() {
            for v in w.iter_mut() {
                *v *= 3.5;
            }
        }
        for b in scaled.biases.iter_mut() {
            *b *= 3.5;
        }
        for f in &x {
            assert_eq!(svm_predict(&model, f).unwrap(), svm_predict(&scaled, f).unwrap());
        }
    }

    #[test]
    fn accuracy_zero_when_all_labels_wrong() {
        let (x, y) = separable();
        let model = svm_train(&x, &y, 1.0, 0).unwrap();
        let wrong: Vec<i64> = y.iter().map(|&l| 1 - l).collect();
        assert_eq!(classify_accuracy(&model, &x, &wrong).unwrap(), 0.0);
    }
}
