use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dataset::{DatasetRecord, SequenceDataset};
use crate::{Error, Result};

/// Synthetic order-discrimination task: every class-A sequence presents its
/// vectors sorted ascending by the first coordinate, and its class-B twin
/// presents the same vectors in the reverse order. The per-sequence multisets
/// are identical across the pair, so any order-invariant pooling carries zero
/// class information by construction. Labels: A = 0, B = 1.
pub fn generate_order_task(
    n_train: usize,
    n_test: usize,
    dim: usize,
    len: usize,
    seed: u64,
) -> Result<(SequenceDataset, SequenceDataset)> {
    if len < 2 {
        return Err(Error::Config(format!("sequence length must be >= 2, got {len}")));
    }
    if dim == 0 || n_train < 2 || n_test < 2 {
        return Err(Error::Config("degenerate order-task parameters".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = generate_split(n_train, dim, len, "train", &mut rng)?;
    let test = generate_split(n_test, dim, len, "test", &mut rng)?;
    Ok((train, test))
}

fn generate_split(
    count: usize,
    dim: usize,
    len: usize,
    prefix: &str,
    rng: &mut ChaCha8Rng,
) -> Result<SequenceDataset> {
    let pairs = count / 2;
    let mut records = Vec::with_capacity(pairs * 2);
    for p in 0..pairs {
        let mut vectors: Vec<Vec<f32>> = (0..len)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(rng)).collect())
            .collect();
        vectors.sort_by(|a, b| a[0].total_cmp(&b[0]));
        let reversed: Vec<Vec<f32>> = vectors.iter().rev().cloned().collect();
        let group = format!("{prefix}-{p}");
        records.push(DatasetRecord {
            id: format!("{prefix}-{p}-a"),
            label: Some(0),
            group: Some(group.clone()),
            pair: None,
            vectors: Some(vectors),
            symbols: None,
        });
        records.push(DatasetRecord {
            id: format!("{prefix}-{p}-b"),
            label: Some(1),
            group: Some(group),
            pair: None,
            vectors: Some(reversed),
            symbols: None,
        });
    }
    SequenceDataset::new(dim, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fv::mean_pool;
    use approx::assert_abs_diff_eq;

    #[test]
    fn twins_share_multisets() {
        let (train, _) = generate_order_task(20, 10, 4, 6, 0).unwrap();
        for pair in train.records.chunks(2) {
            let mut a = pair[0].vectors.clone().unwrap();
            let mut b = pair[1].vectors.clone().unwrap();
            let key = |v: &Vec<f32>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            a.sort_by_key(key);
            b.sort_by_key(key);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn twin_means_identical() {
        let (train, _) = generate_order_task(20, 10, 3, 5, 1).unwrap();
        for pair in train.records.chunks(2) {
            let ma = mean_pool(&pair[0].to_sequence().unwrap()).unwrap();
            let mb = mean_pool(&pair[1].to_sequence().unwrap()).unwrap();
            for (x, y) in ma.iter().zip(&mb) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_order_task(10, 4, 2, 3, 7).unwrap();
        let b = generate_order_task(10, 4, 2, 3, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ordering_direction_correct() {
        let (train, _) = generate_order_task(10, 4, 2, 5, 3).unwrap();
        for pair in train.records.chunks(2) {
            let a = pair[0].vectors.as_ref().unwrap();
            for w in a.windows(2) {
                assert!(w[0][0] <= w[1][0]);
            }
            let b = pair[1].vectors.as_ref().unwrap();
            for w in b.windows(2) {
                assert!(w[0][0] >= w[1][0]);
            }
        }
    }

    #[test]
    fn short_sequences_rejected() {
        assert!(generate_order_task(10, 4, 2, 1, 0).is_err());
    }
}
