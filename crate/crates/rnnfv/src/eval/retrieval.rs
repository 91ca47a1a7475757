use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::numeric::cosine_similarity;
use crate::{Error, Result};

/// Queries x gallery similarity scores.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn get(&self, q: usize, g: usize) -> f64 {
        self.data[q * self.cols + g]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalMetrics {
    /// K -> fraction of queries whose first correct result ranks within top K.
    pub recall: BTreeMap<usize, f64>,
    pub median_rank: f64,
    pub mean_rank: f64,
}

/// Pairwise cosine similarities of queries against a gallery.
pub fn similarity_matrix(queries: &[Vec<f64>], gallery: &[Vec<f64>]) -> Result<SimilarityMatrix> {
    if queries.is_empty() || gallery.is_empty() {
        return Err(Error::Data("similarity_matrix with empty set".into()));
    }
    let mut data = Vec::with_capacity(queries.len() * gallery.len());
    for q in queries {
        for g in gallery {
            data.push(cosine_similarity(q, g)?);
        }
    }
    Ok(SimilarityMatrix { rows: queries.len(), cols: gallery.len(), data })
}

/// For each query, gallery indices sorted by descending similarity, ties
/// broken by ascending gallery index.
pub fn rank_matrix(queries: &[Vec<f64>], gallery: &[Vec<f64>]) -> Result<Vec<Vec<usize>>> {
    let sim = similarity_matrix(queries, gallery)?;
    Ok(rankings_from_similarity(&sim))
}

/// Ranking derived from a precomputed (possibly fused) similarity matrix.
pub fn rankings_from_similarity(sim: &SimilarityMatrix) -> Vec<Vec<usize>> {
    (0..sim.rows)
        .map(|q| {
            let mut idx: Vec<usize> = (0..sim.cols).collect();
            idx.sort_by(|&a, &b| {
                sim.get(q, b).total_cmp(&sim.get(q, a)).then(a.cmp(&b))
            });
            idx
        })
        .collect()
}

/// Recall@K over the given Ks plus median and mean of the per-query rank of
/// the first ground-truth item (1-based). Even-count median averages the two
/// central values.
pub fn retrieval_metrics(
    rankings: &[Vec<usize>],
    ground_truth: &[Vec<usize>],
    ks: &[usize],
) -> Result<RetrievalMetrics> {
    if rankings.len() != ground_truth.len() {
        return Err(Error::Data(format!(
            "retrieval_metrics: {} rankings but {} ground-truth sets",
            rankings.len(),
            ground_truth.len()
        )));
    }
    if rankings.is_empty() {
        return Err(Error::Data("retrieval_metrics on empty query set".into()));
    }
    let mut first_ranks = Vec::with_capacity(rankings.len());
    for (q, (ranking, truth)) in rankings.iter().zip(ground_truth).enumerate() {
        if truth.is_empty() {
            return Err(Error::Data(format!("query {q} has no ground-truth items")));
        }
        let rank = ranking
            .iter()
            .position(|g| truth.contains(g))
            .ok_or_else(|| Error::Data(format!("query {q}: no ground-truth item in ranking")))?;
        first_ranks.push(rank + 1);
    }

    let n = first_ranks.len() as f64;
    let recall: BTreeMap<usize, f64> = ks
        .iter()
        .map(|&k| (k, first_ranks.iter().filter(|&&r| r <= k).count() as f64 / n))
        .collect();
    let mean_rank = first_ranks.iter().sum::<usize>() as f64 / n;
    let mut sorted = first_ranks;
    sorted.sort_unstable();
    let m = sorted.len();
    let median_rank = if m % 2 == 1 {
        sorted[m / 2] as f64
    } else {
        (sorted[m / 2 - 1] + sorted[m / 2]) as f64 / 2.0
    };

    Ok(RetrievalMetrics { recall, median_rank, mean_rank })
}

/// Elementwise (weighted) mean of similarity matrices; default equal weights.
pub fn similarity_fuse(
    matrices: &[SimilarityMatrix],
    weights: Option<&[f64]>,
) -> Result<SimilarityMatrix> {
    if matrices.is_empty() {
        return Err(Error::Data("similarity_fuse of empty list".into()));
    }
    let (rows, cols) = (matrices[0].rows, matrices[0].cols);
    for m in matrices {
        if m.rows != rows || m.cols != cols {
            return Err(Error::Data(format!(
                "similarity_fuse shape mismatch: {}x{} vs {rows}x{cols}",
                m.rows, m.cols
            )));
        }
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != matrices.len() {
                return Err(Error::Config(format!(
                    "similarity_fuse: {} weights for {} matrices",
                    w.len(),
                    matrices.len()
                )));
            }
            let total: f64 = w.iter().sum();
            w.iter().map(|x| x / total).collect()
        }
        None => vec![1.0 / matrices.len() as f64; matrices.len()],
    };
    let mut data = vec![0.0; rows * cols];
    for (m, &wi) in matrices.iter().zip(&w) {
        for (d, &v) in data.iter_mut().zip(&m.data) {
            *d += wi * v;
        }
    }
    Ok(SimilarityMatrix { rows, cols, data })
}
