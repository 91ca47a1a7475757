use serde::{Deserialize, Serialize};

use super::{stack_rows, Matrix};
use crate::{Error, Result};

/// Which view of a [`CcaModel`] a vector belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CcaSide {
    X,
    Y,
}

/// Regularized canonical correlation analysis: paired linear projections of
/// two views into a shared space, maximizing cross-view correlation under
/// ridge-regularized covariances.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CcaModel {
    /// Dx x K, columns are canonical directions for the x view.
    pub projection_x: Vec<Vec<f64>>,
    /// Dy x K.
    pub projection_y: Vec<Vec<f64>>,
    pub mean_x: Vec<f64>,
    pub mean_y: Vec<f64>,
    /// Sorted non-increasing, each <= 1 + 1e-8.
    pub correlations: Vec<f64>,
    pub regularization: f64,
}

impl CcaModel {
    pub fn dim_x(&self) -> usize {
        self.mean_x.len()
    }

    pub fn dim_y(&self) -> usize {
        self.mean_y.len()
    }

    pub fn shared_dim(&self) -> usize {
        self.correlations.len()
    }
}

const EIG_FLOOR: f64 = 1e-12;

/// Inverse square root of a symmetric PSD matrix via eigendecomposition,
/// with small eigenvalues floored.
fn inv_sqrt_sym(m: &Matrix) -> Matrix {
    let eig = m.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let floor = (max_ev * EIG_FLOOR).max(EIG_FLOOR);
    let mut scaled = eig.eigenvectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        let ev = eig.eigenvalues[j].max(floor);
        col *= 1.0 / ev.sqrt();
    }
    &scaled * eig.eigenvectors.transpose()
}

/// Fits a regularized CCA on paired samples.
///
/// Each view is whitened with `(C + lambda I)^{-1/2}` and the cross-covariance
/// of the whitened views is decomposed by SVD. Canonical directions are
/// rescaled so that each projected training dimension has unit variance.
/// The requested `target_dim` is clamped to what the data supports.
pub fn cca_fit(
    pairs_x: &[Vec<f64>],
    pairs_y: &[Vec<f64>],
    target_dim: usize,
    lambda: f64,
) -> Result<CcaModel> {
    if pairs_x.len() != pairs_y.len() {
        return Err(Error::Data(format!(
            "cca_fit pair count mismatch: {} vs {}",
            pairs_x.len(),
            pairs_y.len()
        )));
    }
    if pairs_x.len() < 2 {
        return Err(Error::Data("cca_fit needs at least 2 pairs".into()));
    }
    if lambda < 0.0 {
        return Err(Error::Config(format!(
            "cca regularization must be non-negative, got {lambda}"
        )));
    }
    if target_dim == 0 {
        return Err(Error::Config("cca target_dim must be >= 1".into()));
    }

    let x = stack_rows(pairs_x)?;
    let y = stack_rows(pairs_y)?;
    let n = x.nrows() as f64;

    let mean_x = x.row_mean();
    let mean_y = y.row_mean();
    let mut xc = x;
    for mut row in xc.row_iter_mut() {
        row -= &mean_x;
    }
    let mut yc = y;
    for mut row in yc.row_iter_mut() {
        row -= &mean_y;
    }

    let dx = xc.ncols();
    let dy = yc.ncols();
    let denom = n - 1.0;
    let mut cxx = xc.transpose() * &xc / denom;
    let mut cyy = yc.transpose() * &yc / denom;
    let cxy = xc.transpose() * &yc / denom;
    for i in 0..dx {
        cxx[(i, i)] += lambda;
    }
    for i in 0..dy {
        cyy[(i, i)] += lambda;
    }

    let wx = inv_sqrt_sym(&cxx);
    let wy = inv_sqrt_sym(&cyy);
    let t = &wx * cxy * &wy;
    let svd = t.svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    let sv = &svd.singular_values;

    let max_rank = dx.min(dy).min(xc.nrows() - 1).max(1);
    let k = if target_dim > max_rank {
        log::warn!(
            "cca target_dim {} exceeds achievable rank {}; clamping",
            target_dim,
            max_rank
        );
        max_rank
    } else {
        target_dim
    };
    let k = k.min(sv.len());

    let mut proj_x = &wx * u.columns(0, k);
    let mut proj_y = &wy * v_t.transpose().columns(0, k).clone_owned();

    // Rescale each canonical direction so the projected training variance is 1.
    let px = &xc * &proj_x;
    let py = &yc * &proj_y;
    for j in 0..k {
        let var_x = px.column(j).iter().map(|v| v * v).sum::<f64>() / denom;
        let var_y = py.column(j).iter().map(|v| v * v).sum::<f64>() / denom;
        if var_x > EIG_FLOOR {
            let s = 1.0 / var_x.sqrt();
            proj_x.column_mut(j).scale_mut(s);
        }
        if var_y > EIG_FLOOR {
            let s = 1.0 / var_y.sqrt();
            proj_y.column_mut(j).scale_mut(s);
        }
    }

    let correlations: Vec<f64> = (0..k).map(|i| sv[i].min(1.0 + 1e-9)).collect();

    Ok(CcaModel {
        projection_x: (0..dx)
            .map(|i| (0..k).map(|j| proj_x[(i, j)]).collect())
            .collect(),
        projection_y: (0..dy)
            .map(|i| (0..k).map(|j| proj_y[(i, j)]).collect())
            .collect(),
        mean_x: mean_x.iter().cloned().collect(),
        mean_y: mean_y.iter().cloned().collect(),
        correlations,
        regularization: lambda,
    })
}

/// Projects a vector from one view into the shared space.
pub fn cca_transform(model: &CcaModel, v: &[f64], side: CcaSide) -> Result<Vec<f64>> {
    let (proj, mean) = match side {
        CcaSide::X => (&model.projection_x, &model.mean_x),
        CcaSide::Y => (&model.projection_y, &model.mean_y),
    };
    if v.len() != mean.len() {
        return Err(Error::Data(format!(
            "cca_transform dimension mismatch: vector has {}, side expects {}",
            v.len(),
            mean.len()
        )));
    }
    let k = model.shared_dim();
    let mut out = vec![0.0; k];
    for (row, (&vi, &mi)) in proj.iter().zip(v.iter().zip(mean)) {
        let c = vi - mi;
        for (o, &p) in out.iter_mut().zip(row) {
            *o += c * p;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::cosine_similarity;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| StandardNormal.sample(rng)).collect()
    }

    #[test]
    fn self_correlation_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<Vec<f64>> = (0..50).map(|_| randn(&mut rng, 4)).collect();
        let model = cca_fit(&xs, &xs, 4, 0.0).unwrap();
        for &c in &model.correlations {
            assert_abs_diff_eq!(c, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn independent_views_low_correlation() {
        // Monte-Carlo over seeds: top correlation of independent views stays small.
        for seed in 0..3u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let xs: Vec<Vec<f64>> = (0..1000).map(|_| randn(&mut rng, 5)).collect();
            let ys: Vec<Vec<f64>> = (0..1000).map(|_| randn(&mut rng, 5)).collect();
            let model = cca_fit(&xs, &ys, 5, 0.0).unwrap();
            assert!(
                model.correlations[0] < 0.15,
                "seed {seed}: top correlation {} too high",
                model.correlations[0]
            );
        }
    }

    #[test]
    fn planted_latent_recovers_analytic_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let var_z = 1.0_f64;
        let var_noise = 0.25_f64;
        let n = 4000;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let mut x = randn(&mut rng, 5);
            let mut y = randn(&mut rng, 5);
            for v in x.iter_mut().chain(y.iter_mut()) {
                *v *= var_noise.sqrt();
            }
            x[0] += z;
            y[0] += z;
            xs.push(x);
            ys.push(y);
        }
        // corr(x0, y0) = var(z) / (var(z) + var(noise)) when both noises share a variance
        let analytic = var_z / (var_z + var_noise);
        let model = cca_fit(&xs, &ys, 2, 1e-4).unwrap();
        assert!(
            (model.correlations[0] - analytic).abs() < 0.05,
            "top correlation {} vs analytic {analytic}",
            model.correlations[0]
        );
    }

    #[test]
    fn transform_of_mean_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<Vec<f64>> = (0..20).map(|_| randn(&mut rng, 3)).collect();
        let ys: Vec<Vec<f64>> = (0..20).map(|_| randn(&mut rng, 4)).collect();
        let model = cca_fit(&xs, &ys, 2, 0.1).unwrap();
        for v in cca_transform(&model, &model.mean_x.clone(), CcaSide::X).unwrap() {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
        for v in cca_transform(&model, &model.mean_y.clone(), CcaSide::Y).unwrap() {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn transform_is_affine_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let xs: Vec<Vec<f64>> = (0..20).map(|_| randn(&mut rng, 3)).collect();
        let ys: Vec<Vec<f64>> = (0..20).map(|_| randn(&mut rng, 3)).collect();
        let model = cca_fit(&xs, &ys, 2, 0.1).unwrap();
        let u = randn(&mut rng, 3);
        let w = randn(&mut rng, 3);
        let (a, b) = (0.7, -1.3);
        let combo: Vec<f64> = u.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
        let tu = cca_transform(&model, &u, CcaSide::X).unwrap();
        let tw = cca_transform(&model, &w, CcaSide::X).unwrap();
        let tm = cca_transform(&model, &model.mean_x.clone(), CcaSide::X).unwrap();
        let tc = cca_transform(&model, &combo, CcaSide::X).unwrap();
        // affine map: T(a u + b w) = a T(u) + b T(w) + (1 - a - b) T(mean-offset origin)
        let zero = vec![0.0; 3];
        let t0 = cca_transform(&model, &zero, CcaSide::X).unwrap();
        for i in 0..tc.len() {
            let expect = a * tu[i] + b * tw[i] + (1.0 - a - b) * t0[i];
            assert_abs_diff_eq!(tc[i], expect, epsilon = 1e-10);
            // and T(mean) is the origin of the affine map
            assert_abs_diff_eq!(tm[i], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn matched_pairs_more_similar_than_mismatched() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n {
            let z = randn(&mut rng, 4);
            let mut x = randn(&mut rng, 8);
            let mut y = randn(&mut rng, 8);
            for v in x.iter_mut().chain(y.iter_mut()) {
                *v *= 0.1;
            }
            for k in 0..4 {
                x[k] += z[k];
                y[k] += z[k];
            }
            xs.push(x);
            ys.push(y);
        }
        let model = cca_fit(&xs, &ys, 4, 1e-3).unwrap();
        let mut wins = 0;
        for i in 0..n {
            let px = cca_transform(&model, &xs[i], CcaSide::X).unwrap();
            let py = cca_transform(&model, &ys[i], CcaSide::Y).unwrap();
            let pm = cca_transform(&model, &ys[(i + 1) % n], CcaSide::Y).unwrap();
            let matched = cosine_similarity(&px, &py).unwrap();
            let mismatched = cosine_similarity(&px, &pm).unwrap();
            if matched > mismatched {
                wins += 1;
            }
        }
        assert!(wins as f64 >= 0.95 * n as f64, "only {wins}/{n} matched wins");
    }

    #[test]
    fn permutation_invariance_of_similarities() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let xs: Vec<Vec<f64>> = (0..30).map(|_| randn(&mut rng, 4)).collect();
        let ys: Vec<Vec<f64>> = (0..30).map(|_| randn(&mut rng, 4)).collect();
        let model_a = cca_fit(&xs, &ys, 3, 0.05).unwrap();
        let mut idx: Vec<usize> = (0..30).collect();
        idx.reverse();
        idx.swap(0, 7);
        let xs_p: Vec<Vec<f64>> = idx.iter().map(|&i| xs[i].clone()).collect();
        let ys_p: Vec<Vec<f64>> = idx.iter().map(|&i| ys[i].clone()).collect();
        let model_b = cca_fit(&xs_p, &ys_p, 3, 0.05).unwrap();
        // projected-similarity matrices agree up to direction sign
        for i in 0..10 {
            for j in 0..10 {
                let a = cosine_similarity(
                    &cca_transform(&model_a, &xs[i], CcaSide::X).unwrap(),
                    &cca_transform(&model_a, &ys[j], CcaSide::Y).unwrap(),
                )
                .unwrap();
                let b = cosine_similarity(
                    &cca_transform(&model_b, &xs[i], CcaSide::X).unwrap(),
                    &cca_transform(&model_b, &ys[j], CcaSide::Y).unwrap(),
                )
                .unwrap();
                assert_abs_diff_eq!(a, b, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn count_mismatch_and_negative_lambda_rejected() {
        let xs = vec![vec![1.0], vec![2.0]];
        let ys = vec![vec![1.0]];
        assert!(cca_fit(&xs, &ys, 1, 0.0).is_err());
        let ys2 = vec![vec![1.0], vec![2.0]];
        assert!(cca_fit(&xs, &ys2, 1, -0.1).is_err());
    }

    #[test]
    fn correlations_sorted_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let xs: Vec<Vec<f64>> = (0..100).map(|_| randn(&mut rng, 6)).collect();
        let ys: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| {
                let mut y = randn(&mut rng, 6);
                for (yi, xi) in y.iter_mut().zip(x) {
                    *yi = 0.5 * *yi + 0.5 * xi;
                }
                y
            })
            .collect();
        let model = cca_fit(&xs, &ys, 6, 0.01).unwrap();
        for w in model.correlations.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
        for &c in &model.correlations {
            assert!((0.0..=1.0 + 1e-8).contains(&c));
        }
    }
}
