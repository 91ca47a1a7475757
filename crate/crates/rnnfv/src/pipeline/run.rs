use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::dataset::{load_dataset, SequenceDataset};
use crate::eval::{
    classify_accuracy, rank_matrix, retrieval_metrics, svm_train, RetrievalMetrics,
};
use crate::fv::{
    gmm_fit, gmm_fv, mean_pool, normalize_chain, rnn_fv, subsample_indices, FisherVector,
    FvSource, GradientScope, NormalizationConfig, TimestepAggregation,
};
use crate::numeric::{cca_fit, cca_transform, pca_fit, pca_transform, CcaSide, PcaModel};
use crate::rnn::{
    rnn_init, rnn_train, FeatureSequence, RnnArchitecture, RnnMode, RnnModel, SequenceRef,
    TrainConfig,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classify,
    Retrieve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolingMethod {
    Mean,
    GmmFv,
    RnnFv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunPaths {
    /// Classify: labeled sequences. Retrieve: the sequence (y) side.
    pub train: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid: Option<PathBuf>,
    pub test: PathBuf,
    /// Retrieve only: the vector (x) side, one vector per record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_test: Option<PathBuf>,
    /// Optional training loss curve CSV (epoch, train_nll, valid_nll).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Reduce element vectors to this dimension before any pooling.
    pub pca_dim: Option<usize>,
    /// L2-normalize each element vector.
    pub l2_normalize: bool,
    /// Fraction of training groups carved out when no validation set is given.
    pub validation_fraction: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { pca_dim: None, l2_normalize: false, validation_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmConfig {
    pub k: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self { k: 4 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RnnConfig {
    pub fc1_units: Option<usize>,
    pub leaky_relu_slope: f64,
    pub lstm_units: usize,
    pub dropout_rate: f64,
    pub train: TrainConfig,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            fc1_units: Some(16),
            leaky_relu_slope: 0.1,
            lstm_units: 16,
            dropout_rate: 0.0,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FvConfig {
    pub scope: GradientScope,
    pub aggregation: TimestepAggregation,
    /// PCA on the gradient itself, applied before power/L2.
    pub post_pca_dim: Option<usize>,
    pub normalization: NormalizationConfig,
    /// Seeded random coordinate subset, applied to the raw gradient.
    pub subsample: Option<SubsampleConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubsampleConfig {
    pub count: usize,
    pub seed: u64,
}

impl Default for FvConfig {
    fn default() -> Self {
        Self {
            scope: GradientScope::OutputLayer,
            aggregation: TimestepAggregation::Mean,
            post_pca_dim: None,
            normalization: NormalizationConfig::default(),
            subsample: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub c: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CcaConfig {
    pub dim: usize,
    pub lambda: f64,
}

impl Default for CcaConfig {
    fn default() -> Self {
        Self { dim: 10, lambda: 1e-3 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: TaskKind,
    pub pooling: PoolingMethod,
    pub paths: RunPaths,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub gmm: GmmConfig,
    #[serde(default)]
    pub rnn: RnnConfig,
    #[serde(default)]
    pub fv: FvConfig,
    #[serde(default)]
    pub svm: SvmConfig,
    #[serde(default)]
    pub cca: CcaConfig,
    /// Master seed; every stochastic stage derives from it deterministically.
    pub seed: u64,
    #[serde(default = "default_ks")]
    pub retrieval_ks: Vec<usize>,
}

fn default_ks() -> Vec<usize> {
    vec![1, 5, 10]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetric {
    pub epoch: usize,
    pub valid_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    /// x queries y (image annotation direction).
    pub annotation: RetrievalMetrics,
    /// y queries x (image search direction).
    pub search: RetrievalMetrics,
    /// Mean rank of the first other sequence sharing a ground-truth id,
    /// present when at least one pair id is shared by two or more sequences.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentence_mean_rank: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: TaskKind,
    pub pooling: PoolingMethod,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub per_epoch: Vec<EpochMetric>,
    pub chosen_epoch: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalReport>,
}

impl RunReport {
    /// Human-readable table alongside the JSON.
    pub fn table(&self) -> String {
        let mut out = String::new();
        match (&self.test_accuracy, &self.retrieval) {
            (Some(acc), _) => {
                out.push_str(&format!(
                    "pooling={:?} chosen_epoch={} test_accuracy={:.4}\n",
                    self.pooling, self.chosen_epoch, acc
                ));
            }
            (_, Some(r)) => {
                let fmt = |m: &RetrievalMetrics| {
                    let recalls: Vec<String> =
                        m.recall.iter().map(|(k, v)| format!("r@{k}={:.3}", v)).collect();
                    format!(
                        "{} median={:.1} mean={:.2}",
                        recalls.join(" "),
                        m.median_rank,
                        m.mean_rank
                    )
                };
                out.push_str(&format!("annotation: {}\n", fmt(&r.annotation)));
                out.push_str(&format!("search:     {}\n", fmt(&r.search)));
                if let Some(sm) = r.sentence_mean_rank {
                    out.push_str(&format!("sentence mean rank: {:.2}\n", sm));
                }
            }
            _ => {}
        }
        out
    }
}

fn config_hash(cfg: &RunConfig) -> Result<String> {
    let json = serde_json::to_vec(cfg)?;
    let mut hasher = Sha256::new();
    hasher.update(&json);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Element-level preprocessing: optional PCA (fit on training elements) and
/// optional per-element L2 normalization.
struct Preprocessor {
    pca: Option<PcaModel>,
    l2: bool,
}

impl Preprocessor {
    fn fit(cfg: &PreprocessConfig, train: &[FeatureSequence]) -> Result<Self> {
        let pca = match cfg.pca_dim {
            Some(dim) => {
                let elements: Vec<Vec<f64>> =
                    train.iter().flat_map(|s| s.vectors.iter().cloned()).collect();
                Some(pca_fit(&elements, dim)?)
            }
            None => None,
        };
        Ok(Self { pca, l2: cfg.l2_normalize })
    }

    fn apply(&self, seqs: &[FeatureSequence]) -> Result<Vec<FeatureSequence>> {
        seqs.iter()
            .map(|s| {
                let vectors: Vec<Vec<f64>> = s
                    .vectors
                    .iter()
                    .map(|v| {
                        let mut v = match &self.pca {
                            Some(m) => pca_transform(m, v)?,
                            None => v.clone(),
                        };
                        if self.l2 {
                            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                            if n > 0.0 {
                                for x in v.iter_mut() {
                                    *x /= n;
                                }
                            }
                        }
                        Ok(v)
                    })
                    .collect::<Result<_>>()?;
                FeatureSequence::new(s.id.clone(), vectors, s.label)
            })
            .collect()
    }
}

/// Turns raw per-sequence FVs into final features: optional coordinate
/// subsample, optional FIM (estimated on the training FVs), optional
/// gradient PCA, then power and L2. Transforms are fit on `train` only.
struct FvPostprocessor {
    indices: Option<Vec<usize>>,
    fim: Option<crate::fv::FimDiagonal>,
    pca: Option<PcaModel>,
    norm: NormalizationConfig,
}

impl FvPostprocessor {
    fn fit(cfg: &FvConfig, train: &[FisherVector]) -> Result<Self> {
        let mut working: Vec<FisherVector> = train.to_vec();
        let indices = match &cfg.subsample {
            Some(s) => {
                let dim = working.first().map(|f| f.dim()).unwrap_or(0);
                let idx = subsample_indices(dim, s.count, s.seed)?;
                for fv in working.iter_mut() {
                    fv.values = idx.iter().map(|&i| fv.values[i]).collect();
                }
                Some(idx)
            }
            None => None,
        };
        let fim = if cfg.normalization.apply_fim {
            Some(crate::fv::fim_estimate(&working)?)
        } else {
            None
        };
        let pca = match cfg.post_pca_dim {
            Some(dim) => {
                let mats: Vec<Vec<f64>> = working.iter().map(|f| f.values.clone()).collect();
                Some(pca_fit(&mats, dim)?)
            }
            None => None,
        };
        Ok(Self { indices, fim, pca, norm: cfg.normalization })
    }

    fn apply(&self, fv: &FisherVector) -> Result<Vec<f64>> {
        let mut working = fv.clone();
        if let Some(idx) = &self.indices {
            working.values = idx.iter().map(|&i| working.values[i]).collect();
        }
        if let Some(fim) = &self.fim {
            working = crate::fv::fim_normalize(&working, fim)?;
        }
        if let Some(pca) = &self.pca {
            working.values = pca_transform(pca, &working.values)?;
        }
        let mut cfg = self.norm;
        cfg.apply_fim = false; // already applied above, before the PCA
        let out = normalize_chain(&working, &cfg, None)?;
        Ok(out.values)
    }

    fn apply_all(&self, fvs: &[FisherVector]) -> Result<Vec<Vec<f64>>> {
        fvs.iter().map(|f| self.apply(f)).collect()
    }
}

/// Splits the training set into train/validation, keeping records that share
/// a group id on the same side.
fn split_validation(
    ds: &SequenceDataset,
    fraction: f64,
) -> Result<(Vec<FeatureSequence>, Vec<FeatureSequence>)> {
    let seqs = ds.sequences()?;
    let groups: Vec<String> = ds
        .records
        .iter()
        .map(|r| r.group.clone().unwrap_or_else(|| r.id.clone()))
        .collect();
    let mut unique: Vec<&String> = Vec::new();
    for g in &groups {
        if unique.last() != Some(&g) && !unique.contains(&g) {
            unique.push(g);
        }
    }
    let n_valid_groups = ((unique.len() as f64 * fraction).round() as usize)
        .clamp(1, unique.len().saturating_sub(1));
    // deterministic: every k-th group goes to validation
    let stride = unique.len() / n_valid_groups;
    let valid_groups: std::collections::BTreeSet<&String> =
        unique.iter().step_by(stride.max(1)).take(n_valid_groups).cloned().collect();
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for (seq, g) in seqs.into_iter().zip(&groups) {
        if valid_groups.contains(g) {
            valid.push(seq);
        } else {
            train.push(seq);
        }
    }
    if train.is_empty() || valid.is_empty() {
        return Err(Error::Data("validation split produced an empty side".into()));
    }
    Ok((train, valid))
}

fn labels_of(seqs: &[FeatureSequence]) -> Result<Vec<i64>> {
    seqs.iter()
        .map(|s| s.label.ok_or_else(|| Error::Data(format!("sequence '{}' has no label", s.id))))
        .collect()
}

enum Encoder {
    Mean,
    Gmm(crate::fv::GmmModel),
    Rnn(RnnModel),
}

impl Encoder {
    fn raw_fv(&self, seq: &FeatureSequence, fv_cfg: &FvConfig) -> Result<FisherVector> {
        match self {
            Encoder::Mean => Ok(FisherVector::raw(mean_pool(seq)?, FvSource::Mean)),
            Encoder::Gmm(model) => gmm_fv(model, seq),
            Encoder::Rnn(model) => rnn_fv(model, seq, fv_cfg.aggregation, fv_cfg.scope),
        }
    }

    fn encode_all(&self, seqs: &[FeatureSequence], fv_cfg: &FvConfig) -> Result<Vec<FisherVector>> {
        seqs.iter().map(|s| self.raw_fv(s, fv_cfg)).collect()
    }
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("[{name}] {m}")),
        Error::Data(m) => Error::Data(format!("[{name}] {m}")),
        Error::Divergence(m) => Error::Divergence(format!("[{name}] {m}")),
        other => other,
    })
}

/// The end-to-end classification recipe: preprocess, train the sequence
/// model (RNN pooling only), per-epoch FV extraction and SVM validation,
/// early stopping on validation accuracy, SVM retrained on train+valid,
/// accuracy reported on the test set.
pub fn run_classify(cfg: &RunConfig) -> Result<RunReport> {
    if cfg.task != TaskKind::Classify {
        return Err(Error::Config("run_classify called with a retrieve config".into()));
    }
    let train_ds = stage("load", load_dataset(&cfg.paths.train))?;
    let test_ds = stage("load", load_dataset(&cfg.paths.test))?;
    let (train_seqs, valid_seqs) = match &cfg.paths.valid {
        Some(p) => {
            let v = stage("load", load_dataset(p))?;
            (train_ds.sequences()?, v.sequences()?)
        }
        None => stage("split", split_validation(&train_ds, cfg.preprocess.validation_fraction))?,
    };
    let test_seqs = test_ds.sequences()?;

    let pre = stage("preprocess", Preprocessor::fit(&cfg.preprocess, &train_seqs))?;
    let train_seqs = stage("preprocess", pre.apply(&train_seqs))?;
    let valid_seqs = stage("preprocess", pre.apply(&valid_seqs))?;
    let test_seqs = stage("preprocess", pre.apply(&test_seqs))?;

    let train_labels = labels_of(&train_seqs)?;
    let valid_labels = labels_of(&valid_seqs)?;
    let test_labels = labels_of(&test_seqs)?;

    // candidate encoders: one per epoch for the RNN, a single one otherwise
    let encoders: Vec<Encoder> = match cfg.pooling {
        PoolingMethod::Mean => vec![Encoder::Mean],
        PoolingMethod::GmmFv => {
            let elements: Vec<Vec<f64>> =
                train_seqs.iter().flat_map(|s| s.vectors.iter().cloned()).collect();
            vec![Encoder::Gmm(stage("fit-gmm", gmm_fit(&elements, cfg.gmm.k, cfg.seed))?)]
        }
        PoolingMethod::RnnFv => {
            let dim = train_seqs[0].dim();
            let arch = RnnArchitecture {
                input_dim: dim,
                fc1_units: cfg.rnn.fc1_units,
                leaky_relu_slope: cfg.rnn.leaky_relu_slope,
                lstm_units: cfg.rnn.lstm_units,
                output_dim: dim,
                mode: RnnMode::Regression,
                dropout_rate: cfg.rnn.dropout_rate,
            };
            let model = stage("init-rnn", rnn_init(&arch, cfg.seed))?;
            let train_refs: Vec<SequenceRef> = train_seqs.iter().map(SequenceRef::from).collect();
            let valid_refs: Vec<SequenceRef> = valid_seqs.iter().map(SequenceRef::from).collect();
            let mut checkpoints = Vec::new();
            let mut train_cfg = cfg.rnn.train.clone();
            train_cfg.seed = cfg.seed;
            let curve = stage(
                "train-rnn",
                rnn_train(&model, &train_refs, &valid_refs, &train_cfg, |ck| {
                    checkpoints.push(ck.model)
                }),
            )?;
            if let Some(path) = &cfg.paths.curve_out {
                let mut csv = String::from("epoch,train_nll,valid_nll\n");
                for (e, t, v) in &curve {
                    csv.push_str(&format!("{e},{t},{v}\n"));
                }
                super::atomic_write(path, csv.as_bytes())?;
            }
            checkpoints.into_iter().map(Encoder::Rnn).collect()
        }
    };

    // per-epoch validation accuracy
    let mut per_epoch = Vec::with_capacity(encoders.len());
    for (epoch, enc) in encoders.iter().enumerate() {
        let train_fvs = stage("extract-fv", enc.encode_all(&train_seqs, &cfg.fv))?;
        let post = stage("normalize", FvPostprocessor::fit(&cfg.fv, &train_fvs))?;
        let train_feats = post.apply_all(&train_fvs)?;
        let valid_feats =
            post.apply_all(&stage("extract-fv", enc.encode_all(&valid_seqs, &cfg.fv))?)?;
        let svm = stage("train-svm", svm_train(&train_feats, &train_labels, cfg.svm.c, cfg.seed))?;
        let acc = classify_accuracy(&svm, &valid_feats, &valid_labels)?;
        per_epoch.push(EpochMetric { epoch, valid_metric: acc });
    }

    // early stopping: highest validation accuracy, earliest epoch on ties
    let chosen_epoch = per_epoch
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.valid_metric.total_cmp(&b.valid_metric).then(ib.cmp(ia))
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    let chosen = &encoders[chosen_epoch];

    // retrain on train + valid and evaluate on test
    let mut all_seqs = train_seqs.clone();
    all_seqs.extend(valid_seqs.iter().cloned());
    let mut all_labels = train_labels.clone();
    all_labels.extend(valid_labels.iter().cloned());
    let all_fvs = stage("extract-fv", chosen.encode_all(&all_seqs, &cfg.fv))?;
    let post = stage("normalize", FvPostprocessor::fit(&cfg.fv, &all_fvs))?;
    let all_feats = post.apply_all(&all_fvs)?;
    let test_feats = post.apply_all(&stage("extract-fv", chosen.encode_all(&test_seqs, &cfg.fv))?)?;
    let svm = stage("train-svm", svm_train(&all_feats, &all_labels, cfg.svm.c, cfg.seed))?;
    let test_accuracy = classify_accuracy(&svm, &test_feats, &test_labels)?;

    Ok(RunReport {
        task: cfg.task,
        pooling: cfg.pooling,
        config_hash: config_hash(cfg)?,
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        per_epoch,
        chosen_epoch,
        test_accuracy: Some(test_accuracy),
        retrieval: None,
    })
}

fn single_vectors(ds: &SequenceDataset) -> Result<Vec<(String, Vec<f64>)>> {
    ds.records
        .iter()
        .map(|r| {
            let seq = r.to_sequence()?;
            Ok((r.id.clone(), seq.vectors[0].clone()))
        })
        .collect()
}

/// The end-to-end retrieval recipe: encode the sequence side with the chosen
/// pooling, fit regularized CCA on the training pairs, then rank by cosine
/// similarity in the shared space, in both directions.
pub fn run_retrieve(cfg: &RunConfig) -> Result<RunReport> {
    if cfg.task != TaskKind::Retrieve {
        return Err(Error::Config("run_retrieve called with a classify config".into()));
    }
    let x_train_path = cfg
        .paths
        .x_train
        .as_ref()
        .ok_or_else(|| Error::Config("retrieve task needs paths.x_train".into()))?;
    let x_test_path = cfg
        .paths
        .x_test
        .as_ref()
        .ok_or_else(|| Error::Config("retrieve task needs paths.x_test".into()))?;

    let y_train_ds = stage("load", load_dataset(&cfg.paths.train))?;
    let y_test_ds = stage("load", load_dataset(&cfg.paths.test))?;
    let x_train = stage("load", single_vectors(&load_dataset(x_train_path)?))?;
    let x_test = stage("load", single_vectors(&load_dataset(x_test_path)?))?;

    let y_train_seqs = y_train_ds.sequences()?;
    let y_test_seqs = y_test_ds.sequences()?;
    let pre = stage("preprocess", Preprocessor::fit(&cfg.preprocess, &y_train_seqs))?;
    let y_train_seqs = pre.apply(&y_train_seqs)?;
    let y_test_seqs = pre.apply(&y_test_seqs)?;

    let encoder = match cfg.pooling {
        PoolingMethod::Mean => Encoder::Mean,
        PoolingMethod::GmmFv => {
            let elements: Vec<Vec<f64>> =
                y_train_seqs.iter().flat_map(|s| s.vectors.iter().cloned()).collect();
            Encoder::Gmm(stage("fit-gmm", gmm_fit(&elements, cfg.gmm.k, cfg.seed))?)
        }
        PoolingMethod::RnnFv => {
            let dim = y_train_seqs[0].dim();
            let arch = RnnArchitecture {
                input_dim: dim,
                fc1_units: cfg.rnn.fc1_units,
                leaky_relu_slope: cfg.rnn.leaky_relu_slope,
                lstm_units: cfg.rnn.lstm_units,
                output_dim: dim,
                mode: RnnMode::Regression,
                dropout_rate: cfg.rnn.dropout_rate,
            };
            let model = stage("init-rnn", rnn_init(&arch, cfg.seed))?;
            let refs: Vec<SequenceRef> = y_train_seqs.iter().map(SequenceRef::from).collect();
            let mut train_cfg = cfg.rnn.train.clone();
            train_cfg.seed = cfg.seed;
            let mut last = None;
            stage("train-rnn", rnn_train(&model, &refs, &[], &train_cfg, |ck| {
                last = Some(ck.model)
            }))?;
            Encoder::Rnn(last.expect("at least one epoch"))
        }
    };

    let y_train_fvs = stage("extract-fv", encoder.encode_all(&y_train_seqs, &cfg.fv))?;
    let post = stage("normalize", FvPostprocessor::fit(&cfg.fv, &y_train_fvs))?;
    let y_train_feats = post.apply_all(&y_train_fvs)?;
    let y_test_feats =
        post.apply_all(&stage("extract-fv", encoder.encode_all(&y_test_seqs, &cfg.fv))?)?;

    // match training pairs by the y record's pair id
    let x_index: BTreeMap<&str, usize> =
        x_train.iter().enumerate().map(|(i, (id, _))| (id.as_str(), i)).collect();
    let mut pairs_x = Vec::new();
    let mut pairs_y = Vec::new();
    for (record, feat) in y_train_ds.records.iter().zip(&y_train_feats) {
        let pair = record.pair.as_ref().ok_or_else(|| {
            Error::Data(format!("[pair] training record '{}' has no pair id", record.id))
        })?;
        let xi = x_index.get(pair.as_str()).ok_or_else(|| {
            Error::Data(format!("[pair] record '{}': no x record with id '{pair}'", record.id))
        })?;
        pairs_x.push(x_train[*xi].1.clone());
        pairs_y.push(feat.clone());
    }
    let cca = stage("fit-cca", cca_fit(&pairs_x, &pairs_y, cfg.cca.dim, cfg.cca.lambda))?;

    let px: Vec<Vec<f64>> = x_test
        .iter()
        .map(|(_, v)| cca_transform(&cca, v, CcaSide::X))
        .collect::<Result<_>>()?;
    let py: Vec<Vec<f64>> = y_test_feats
        .iter()
        .map(|v| cca_transform(&cca, v, CcaSide::Y))
        .collect::<Result<_>>()?;

    let x_test_index: BTreeMap<&str, usize> =
        x_test.iter().enumerate().map(|(i, (id, _))| (id.as_str(), i)).collect();
    let y_pairs: Vec<&str> = y_test_ds
        .records
        .iter()
        .map(|r| {
            r.pair.as_deref().ok_or_else(|| {
                Error::Data(format!("[pair] test record '{}' has no pair id", r.id))
            })
        })
        .collect::<Result<_>>()?;

    // annotation: each x queries the y gallery
    let annotation_truth: Vec<Vec<usize>> = x_test
        .iter()
        .map(|(id, _)| {
            y_pairs
                .iter()
                .enumerate()
                .filter(|(_, p)| *p == id)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let annotation_rankings = stage("rank", rank_matrix(&px, &py))?;
    let annotation = stage(
        "metrics",
        retrieval_metrics(&annotation_rankings, &annotation_truth, &cfg.retrieval_ks),
    )?;

    // search: each y queries the x gallery
    let search_truth: Vec<Vec<usize>> = y_pairs
        .iter()
        .map(|p| {
            x_test_index
                .get(p)
                .map(|&i| vec![i])
                .ok_or_else(|| Error::Data(format!("[pair] no x test record with id '{p}'")))
        })
        .collect::<Result<_>>()?;
    let search_rankings = stage("rank", rank_matrix(&py, &px))?;
    let search =
        stage("metrics", retrieval_metrics(&search_rankings, &search_truth, &cfg.retrieval_ks))?;

    // sentence-to-sentence: rank other sequences sharing the same pair id.
    // The query itself stays in the gallery but is never ground truth.
    let shared = y_pairs.iter().enumerate().any(|(i, p)| {
        y_pairs.iter().enumerate().any(|(j, q)| i != j && p == q)
    });
    let sentence_mean_rank = if shared {
        let truth: Vec<Vec<usize>> = y_pairs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                y_pairs
                    .iter()
                    .enumerate()
                    .filter(|(j, q)| *j != i && q == &p)
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect();
        let keep: Vec<usize> =
            truth.iter().enumerate().filter(|(_, t)| !t.is_empty()).map(|(i, _)| i).collect();
        if keep.is_empty() {
            None
        } else {
            let queries: Vec<Vec<f64>> = keep.iter().map(|&i| py[i].clone()).collect();
            let kept_truth: Vec<Vec<usize>> = keep.iter().map(|&i| truth[i].clone()).collect();
            let rankings = stage("rank", rank_matrix(&queries, &py))?;
            let m = stage("metrics", retrieval_metrics(&rankings, &kept_truth, &[1]))?;
            Some(m.mean_rank)
        }
    } else {
        None
    };

    Ok(RunReport {
        task: cfg.task,
        pooling: cfg.pooling,
        config_hash: config_hash(cfg)?,
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION").into(),
        per_epoch: Vec::new(),
        chosen_epoch: 0,
        test_accuracy: None,
        retrieval: Some(RetrievalReport { annotation, search, sentence_mean_rank }),
    })
}
