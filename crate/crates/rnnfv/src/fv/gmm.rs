use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FisherVector, FvSource};
use crate::rnn::FeatureSequence;
use crate::{Error, Result};

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    /// Mixture weights, positive and summing to 1.
    pub weights: Vec<f64>,
    /// k x D.
    pub means: Vec<Vec<f64>>,
    /// k x D standard deviations, all positive.
    pub stddevs: Vec<Vec<f64>>,
}

impl GmmModel {
    pub fn dim(&self) -> usize {
        self.means[0].len()
    }
}

const VARIANCE_FLOOR: f64 = 1e-6;
const EM_MAX_ITERS: usize = 100;
const EM_REL_TOL: f64 = 1e-6;
const LN_2PI: f64 = 1.8378770664093453;

fn log_component_density(x: &[f64], mean: &[f64], std: &[f64]) -> f64 {
    let mut ll = 0.0;
    for ((&xi, &mi), &si) in x.iter().zip(mean).zip(std) {
        let z = (xi - mi) / si;
        ll += -0.5 * LN_2PI - si.ln() - 0.5 * z * z;
    }
    ll
}

fn log_sum_exp(vals: &[f64]) -> f64 {
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + vals.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Total log-likelihood of a vector set under the model.
pub fn gmm_log_likelihood(model: &GmmModel, vectors: &[Vec<f64>]) -> f64 {
    let log_w: Vec<f64> = model.weights.iter().map(|w| w.ln()).collect();
    vectors
        .iter()
        .map(|x| {
            let per: Vec<f64> = (0..model.k)
                .map(|k| log_w[k] + log_component_density(x, &model.means[k], &model.stddevs[k]))
                .collect();
            log_sum_exp(&per)
        })
        .sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by a few Lloyd iterations.
fn kmeans_init(vectors: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = vectors.len();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(vectors[rng.gen_range(0..n)].clone());
    while centers.len() < k {
        let d2: Vec<f64> = vectors
            .iter()
            .map(|v| centers.iter().map(|c| sq_dist(v, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let dist = WeightedIndex::new(&d2).expect("non-negative weights");
            dist.sample(rng)
        } else {
            rng.gen_range(0..n)
        };
        centers.push(vectors[next].clone());
    }

    let d = vectors[0].len();
    for _ in 0..10 {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for v in vectors {
            let (best, _) = centers
                .iter()
                .enumerate()
                .map(|(i, c)| (i, sq_dist(v, c)))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            counts[best] += 1;
            for (s, &x) in sums[best].iter_mut().zip(v) {
                *s += x;
            }
        }
        for i in 0..k {
            if counts[i] > 0 {
                for (c, s) in centers[i].iter_mut().zip(&sums[i]) {
                    *c = s / counts[i] as f64;
                }
            }
        }
    }
    centers
}

/// Fits a diagonal-covariance GMM by EM and returns the per-iteration
/// log-likelihood history alongside the model.
pub fn gmm_fit_with_history(
    vectors: &[Vec<f64>],
    k: usize,
    seed: u64,
) -> Result<(GmmModel, Vec<f64>)> {
    if k == 0 {
        return Err(Error::Config("gmm k must be >= 1".into()));
    }
    if vectors.len() < k {
        return Err(Error::Data(format!(
            "gmm_fit needs at least k={k} vectors, got {}",
            vectors.len()
        )));
    }
    let d = vectors[0].len();
    for (i, v) in vectors.iter().enumerate() {
        if v.len() != d {
            return Err(Error::Data(format!(
                "gmm_fit vector {i} has dimension {}, expected {d}",
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data(format!("gmm_fit vector {i} is non-finite")));
        }
    }
    let n = vectors.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // global variance as the starting spread and as a variance-floor scale
    let mut global_mean = vec![0.0; d];
    for v in vectors {
        for (m, &x) in global_mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    for m in global_mean.iter_mut() {
        *m /= n as f64;
    }
    let mut global_var = vec![0.0; d];
    for v in vectors {
        for ((g, &x), &m) in global_var.iter_mut().zip(v).zip(&global_mean) {
            *g += (x - m) * (x - m);
        }
    }
    for g in global_var.iter_mut() {
        *g = (*g / n as f64).max(VARIANCE_FLOOR);
    }

    let means = kmeans_init(vectors, k, &mut rng);
    let mut model = GmmModel {
        k,
        weights: vec![1.0 / k as f64; k],
        means,
        stddevs: vec![global_var.iter().map(|v| v.sqrt()).collect(); k],
    };

    let mut history = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..EM_MAX_ITERS {
        // E step
        let log_w: Vec<f64> = model.weights.iter().map(|w| w.ln()).collect();
        let mut resp = vec![vec![0.0; k]; n];
        let mut ll = 0.0;
        for (i, x) in vectors.iter().enumerate() {
            let per: Vec<f64> = (0..k)
                .map(|j| log_w[j] + log_component_density(x, &model.means[j], &model.stddevs[j]))
                .collect();
            let lse = log_sum_exp(&per);
            ll += lse;
            for j in 0..k {
                resp[i][j] = (per[j] - lse).exp();
            }
        }
        history.push(ll);

        // M step
        for j in 0..k {
            let nk: f64 = resp.iter().map(|r| r[j]).sum();
            if nk < 1e-10 {
                continue; // dead component keeps its parameters
            }
            model.weights[j] = nk / n as f64;
            let mut mean = vec![0.0; d];
            for (r, x) in resp.iter().zip(vectors) {
                for (m, &xi) in mean.iter_mut().zip(x) {
                    *m += r[j] * xi;
                }
            }
            for m in mean.iter_mut() {
                *m /= nk;
            }
            let mut var = vec![0.0; d];
            for (r, x) in resp.iter().zip(vectors) {
                for ((v, &xi), &m) in var.iter_mut().zip(x).zip(&mean) {
                    *v += r[j] * (xi - m) * (xi - m);
                }
            }
            for v in var.iter_mut() {
                *v = (*v / nk).max(VARIANCE_FLOOR);
            }
            model.means[j] = mean;
            model.stddevs[j] = var.iter().map(|v| v.sqrt()).collect();
        }
        // renormalize weights (floored dead components can leave drift)
        let wsum: f64 = model.weights.iter().sum();
        for w in model.weights.iter_mut() {
            *w /= wsum;
        }

        if prev_ll.is_finite() && (ll - prev_ll).abs() < EM_REL_TOL * ll.abs().max(1.0) {
            break;
        }
        prev_ll = ll;
    }

    Ok((model, history))
}

/// EM-fitted diagonal-covariance mixture; deterministic for a fixed seed.
pub fn gmm_fit(vectors: &[Vec<f64>], k: usize, seed: u64) -> Result<GmmModel> {
    gmm_fit_with_history(vectors, k, seed).map(|(m, _)| m)
}

/// Closed-form gradient of the sequence log-likelihood with respect to the
/// means and standard deviations, concatenated as [d/dmu | d/dsigma],
/// unnormalized. Order-invariant by the additivity of the log-likelihood.
pub fn gmm_fv(model: &GmmModel, seq: &FeatureSequence) -> Result<FisherVector> {
    if seq.is_empty() {
        return Err(Error::Data("gmm_fv of empty sequence".into()));
    }
    let d = model.dim();
    if seq.dim() != d {
        return Err(Error::Data(format!(
            "gmm_fv dimension mismatch: sequence {} vs model {d}",
            seq.dim()
        )));
    }
    let k = model.k;
    let log_w: Vec<f64> = model.weights.iter().map(|w| w.ln()).collect();
    let mut d_mu = vec![0.0; k * d];
    let mut d_sigma = vec![0.0; k * d];
    for x in &seq.vectors {
        let per: Vec<f64> = (0..k)
            .map(|j| log_w[j] + log_component_density(x, &model.means[j], &model.stddevs[j]))
            .collect();
        let lse = log_sum_exp(&per);
        for j in 0..k {
            let gamma = (per[j] - lse).exp();
            for i in 0..d {
                let s = model.stddevs[j][i];
                let diff = x[i] - model.means[j][i];
                d_mu[j * d + i] += gamma * diff / (s * s);
                d_sigma[j * d + i] += gamma * (diff * diff / (s * s * s) - 1.0 / s);
            }
        }
    }
    let mut values = d_mu;
    values.extend(d_sigma);
    Ok(FisherVector::raw(values, FvSource::GmmFv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::StandardNormal;

    fn randn(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| StandardNormal.sample(rng)).collect()
    }

    #[test]
    fn k1_is_maximum_likelihood_gaussian() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<Vec<f64>> =
            (0..200).map(|_| vec![2.0 + randn(&mut rng, 1)[0], -1.0 + 0.5 * randn(&mut rng, 1)[0]]).collect();
        let model = gmm_fit(&data, 1, 0).unwrap();
        assert_eq!(model.weights, vec![1.0]);
        let n = data.len() as f64;
        let mean: Vec<f64> = (0..2).map(|i| data.iter().map(|v| v[i]).sum::<f64>() / n).collect();
        let var: Vec<f64> = (0..2)
            .map(|i| data.iter().map(|v| (v[i] - mean[i]).powi(2)).sum::<f64>() / n)
            .collect();
        for i in 0..2 {
            assert_abs_diff_eq!(model.means[0][i], mean[i], epsilon = 1e-6);
            assert_abs_diff_eq!(model.stddevs[0][i], var[i].sqrt(), epsilon = 1e-4);
        }
    }

    #[test]
    fn separated_clusters_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut data = Vec::new();
        for _ in 0..150 {
            let mut v = randn(&mut rng, 3);
            for x in v.iter_mut() {
                *x = *x * 0.1 + 5.0;
            }
            data.push(v);
        }
        for _ in 0..150 {
            let mut v = randn(&mut rng, 3);
            for x in v.iter_mut() {
                *x = *x * 0.1 - 5.0;
            }
            data.push(v);
        }
        let model = gmm_fit(&data, 2, 3).unwrap();
        let mut found = [false; 2];
        for m in &model.means {
            if m.iter().all(|&x| (x - 5.0).abs() < 0.1) {
                found[0] = true;
            }
            if m.iter().all(|&x| (x + 5.0).abs() < 0.1) {
                found[1] = true;
            }
        }
        assert!(found[0] && found[1], "means {:?}", model.means);
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data: Vec<Vec<f64>> = (0..60).map(|_| randn(&mut rng, 4)).collect();
        let a = gmm_fit(&data, 3, 11).unwrap();
        let b = gmm_fit(&data, 3, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn k_greater_than_count_rejected() {
        assert!(gmm_fit(&[vec![1.0], vec![2.0]], 3, 0).is_err());
    }

    #[test]
    fn em_log_likelihood_non_decreasing() {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let data: Vec<Vec<f64>> = (0..80).map(|_| randn(&mut rng, 3)).collect();
            let (_, history) = gmm_fit_with_history(&data, 4, seed).unwrap();
            for w in history.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "seed {seed}: ll dropped {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn fv_at_mode_closed_form() {
        // k=1, sigma=1, every x_i equal to mu: mu block zero, sigma block -N
        let model = GmmModel {
            k: 1,
            weights: vec![1.0],
            means: vec![vec![0.5, -0.2]],
            stddevs: vec![vec![1.0, 1.0]],
        };
        let n = 7;
        let seq = FeatureSequence::new("s", vec![vec![0.5, -0.2]; n], None).unwrap();
        let fv = gmm_fv(&model, &seq).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(fv.values[i], 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(fv.values[2 + i], -(n as f64), epsilon = 1e-12);
        }
    }

    #[test]
    fn fv_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<Vec<f64>> = (0..40).map(|_| randn(&mut rng, 5)).collect();
        let model = gmm_fit(&data, 3, 1).unwrap();
        let seq = FeatureSequence::new(
            "s",
            (0..20).map(|_| randn(&mut rng, 5)).collect::<Vec<_>>(),
            None,
        )
        .unwrap();
        let fv = gmm_fv(&model, &seq).unwrap();
        let eps = 1e-6;
        let d = model.dim();
        for j in 0..model.k {
            for i in 0..d {
                // d/dmu
                let mut plus = model.clone();
                plus.means[j][i] += eps;
                let mut minus = model.clone();
                minus.means[j][i] -= eps;
                let numeric = (gmm_log_likelihood(&plus, &seq.vectors)
                    - gmm_log_likelihood(&minus, &seq.vectors))
                    / (2.0 * eps);
                let analytic = fv.values[j * d + i];
                assert!(
                    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8) < 1e-6,
                    "mu[{j}][{i}]: {analytic} vs {numeric}"
                );
                // d/dsigma
                let mut plus = model.clone();
                plus.stddevs[j][i] += eps;
                let mut minus = model.clone();
                minus.stddevs[j][i] -= eps;
                let numeric = (gmm_log_likelihood(&plus, &seq.vectors)
                    - gmm_log_likelihood(&minus, &seq.vectors))
                    / (2.0 * eps);
                let analytic = fv.values[model.k * d + j * d + i];
                assert!(
                    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8) < 1e-6,
                    "sigma[{j}][{i}]: {analytic} vs {numeric}"
                );
            }
        }
    }

    #[test]
    fn fv_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<Vec<f64>> = (0..30).map(|_| randn(&mut rng, 3)).collect();
        let model = gmm_fit(&data, 2, 0).unwrap();
        let vectors: Vec<Vec<f64>> = (0..10).map(|_| randn(&mut rng, 3)).collect();
        let mut rev = vectors.clone();
        rev.reverse();
        let a = gmm_fv(&model, &FeatureSequence::new("a", vectors, None).unwrap()).unwrap();
        let b = gmm_fv(&model, &FeatureSequence::new("b", rev, None).unwrap()).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-10);
        }
    }
}
