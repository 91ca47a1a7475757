//! Thin command-line front end over the library. Every verb reads and
//! writes the documented file formats; stochastic verbs require an explicit
//! `--seed` so runs are reproducible by construction.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rnnfv::eval::{
    classify_accuracy, rank_matrix, retrieval_metrics, svm_predict, svm_train,
};
use rnnfv::fv::{
    gmm_fit, gmm_fv, mean_pool, normalize_chain, rnn_fv, subsample_coordinates, FisherVector,
    FvSource, GradientScope, NormalizationConfig, TimestepAggregation,
};
use rnnfv::numeric::{cca_fit, cca_transform, pca_fit, pca_transform, CcaSide};
use rnnfv::pipeline::{
    convert_dataset, export_model, generate_order_task, import_model_expecting,
    load_dataset, load_embedding_table, load_vector_set, run_classify, run_retrieve,
    save_dataset, save_dataset_binary, save_vector_set, DatasetFormat, ModelKind, ModelPayload,
    RunConfig, SequenceDataset, TaskKind, VectorRecord, VectorSet,
};
use rnnfv::rnn::{
    rnn_init, rnn_train, FeatureSequence, RnnArchitecture, RnnMode, SequenceRef, SymbolSequence,
    TrainConfig,
};
use rnnfv::{Error, Result};

#[derive(Parser)]
#[command(name = "rnnfv", version, about = "Sequence encoding with RNN Fisher Vectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Text,
    Binary,
}

impl From<FormatArg> for DatasetFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => DatasetFormat::Text,
            FormatArg::Binary => DatasetFormat::Binary,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScopeArg {
    OutputLayer,
    AllWeights,
}

impl From<ScopeArg> for GradientScope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::OutputLayer => GradientScope::OutputLayer,
            ScopeArg::AllWeights => GradientScope::AllWeights,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AggArg {
    Mean,
    Sum,
}

impl From<AggArg> for TimestepAggregation {
    fn from(a: AggArg) -> Self {
        match a {
            AggArg::Mean => TimestepAggregation::Mean,
            AggArg::Sum => TimestepAggregation::Sum,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PoolArg {
    Mean,
    GmmFv,
    RnnFv,
}

/// Normalization flags shared by the verbs that emit usable features.
#[derive(Args)]
struct NormArgs {
    /// Power-normalization exponent (sign(z)|z|^alpha).
    #[arg(long, default_value_t = 0.5)]
    power_alpha: f64,
    /// Skip the final L2 normalization.
    #[arg(long)]
    skip_l2: bool,
    /// Emit raw values with no normalization at all.
    #[arg(long)]
    raw: bool,
}

impl NormArgs {
    fn config(&self) -> NormalizationConfig {
        NormalizationConfig {
            power_alpha: self.power_alpha,
            apply_l2: !self.skip_l2,
            apply_fim: false,
        }
    }

    fn apply(&self, fv: &FisherVector) -> Result<Vec<f64>> {
        if self.raw {
            return Ok(fv.values.clone());
        }
        Ok(normalize_chain(fv, &self.config(), None)?.values)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic order-discrimination dataset.
    GenOrderTask {
        #[arg(long, default_value_t = 1000)]
        n_train: usize,
        #[arg(long, default_value_t = 200)]
        n_test: usize,
        #[arg(long, default_value_t = 10)]
        dim: usize,
        #[arg(long, default_value_t = 8)]
        len: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
    },
    /// Fit a PCA model on dataset elements, or apply one.
    Pca {
        /// Sequence dataset whose element vectors are the samples.
        #[arg(long)]
        input: PathBuf,
        /// Fit mode: target dimension.
        #[arg(long)]
        dim: Option<usize>,
        /// Fit mode: where to store the fitted model.
        #[arg(long)]
        model_out: Option<PathBuf>,
        /// Apply mode: a previously fitted model.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Apply mode: transformed dataset destination.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train the next-element prediction network.
    TrainRnn {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: Option<PathBuf>,
        /// Symbol-mode: embedding table turning symbols into input vectors.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        fc1_units: Option<usize>,
        #[arg(long, default_value_t = 0.1)]
        leaky_relu_slope: f64,
        #[arg(long, default_value_t = 16)]
        lstm_units: usize,
        #[arg(long, default_value_t = 0.0)]
        dropout: f64,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long, default_value_t = 1e-3)]
        learning_rate: f64,
        #[arg(long, default_value_t = 0.0)]
        weight_decay: f64,
        #[arg(long, default_value_t = 5.0)]
        gradient_clip_norm: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        model_out: PathBuf,
        /// Loss curve CSV (epoch, train_nll, valid_nll).
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Extract per-sequence gradients from a trained network.
    ExtractFv {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "output-layer")]
        scope: ScopeArg,
        #[arg(long, value_enum, default_value = "mean")]
        aggregation: AggArg,
        /// Keep only this many seeded-random coordinates.
        #[arg(long)]
        subsample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        subsample_seed: u64,
        #[command(flatten)]
        norm: NormArgs,
        #[arg(long)]
        output: PathBuf,
    },
    /// Fit a diagonal-covariance Gaussian mixture on dataset elements.
    FitGmm {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        model_out: PathBuf,
    },
    /// Pool each sequence into one vector (mean, GMM-FV, or RNN-FV).
    Pool {
        #[arg(long, value_enum)]
        method: PoolArg,
        #[arg(long)]
        input: PathBuf,
        /// GMM or RNN model container (required for gmm-fv / rnn-fv).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "output-layer")]
        scope: ScopeArg,
        #[arg(long, value_enum, default_value = "mean")]
        aggregation: AggArg,
        #[command(flatten)]
        norm: NormArgs,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train a one-vs-all linear SVM on a labeled vector set.
    TrainSvm {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        model_out: PathBuf,
    },
    /// Classify a labeled vector set and report accuracy.
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Fit regularized CCA on paired vector sets (y records name their
    /// x partner in the `pair` field). A lambda grid picks the value with
    /// the best matched-pair cosine on a held-out fifth of the pairs.
    FitCca {
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long, default_value_t = 10)]
        dim: usize,
        #[arg(long, default_value_t = 1e-3)]
        lambda: f64,
        /// Comma-separated candidate lambdas; overrides --lambda.
        #[arg(long, value_delimiter = ',')]
        lambda_grid: Option<Vec<f64>>,
        #[arg(long)]
        model_out: PathBuf,
    },
    /// Rank a gallery with a fitted CCA model and report retrieval metrics.
    Retrieve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        x: PathBuf,
        #[arg(long)]
        y: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
        ks: Vec<usize>,
    },
    /// Execute a full recipe from a JSON config file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Convert a sequence dataset between text and binary formats.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum)]
        to: FormatArg,
    },
}

fn elements_of(ds: &SequenceDataset) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for seq in ds.sequences()? {
        out.extend(seq.vectors);
    }
    Ok(out)
}

fn load_rnn(path: &std::path::Path) -> Result<rnnfv::rnn::RnnModel> {
    match import_model_expecting(path, ModelKind::Rnn)? {
        ModelPayload::Rnn(m) => Ok(m),
        _ => unreachable!(),
    }
}

/// Per-record raw FV under the chosen pooling, carrying label and pair.
fn pool_records(
    ds: &SequenceDataset,
    mut encode: impl FnMut(&FeatureSequence) -> Result<FisherVector>,
) -> Result<Vec<(FisherVector, Option<i64>, Option<String>)>> {
    ds.records
        .iter()
        .map(|r| Ok((encode(&r.to_sequence()?)?, r.label, r.pair.clone())))
        .collect()
}

fn write_vector_set(
    pooled: Vec<(Vec<f64>, Option<i64>, Option<String>)>,
    ids: &[String],
    provenance: serde_json::Value,
    path: &std::path::Path,
) -> Result<()> {
    let dim = pooled.first().map(|(v, _, _)| v.len()).unwrap_or(0);
    let records = pooled
        .into_iter()
        .zip(ids)
        .map(|((values, label, pair), id)| VectorRecord { id: id.clone(), label, pair, values })
        .collect();
    save_vector_set(&VectorSet::new(dim, provenance, records)?, path)
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenOrderTask {
            n_train,
            n_test,
            dim,
            len,
            seed,
            train_out,
            test_out,
            format,
        } => {
            let (train, test) = generate_order_task(n_train, n_test, dim, len, seed)?;
            match format {
                FormatArg::Text => {
                    save_dataset(&train, &train_out)?;
                    save_dataset(&test, &test_out)?;
                }
                FormatArg::Binary => {
                    save_dataset_binary(&train, &train_out)?;
                    save_dataset_binary(&test, &test_out)?;
                }
            }
            println!(
                "{}",
                serde_json::json!({
                    "train_records": train.len(),
                    "test_records": test.len(),
                    "dim": dim,
                    "len": len,
                    "seed": seed,
                })
            );
            Ok(())
        }

        Command::Pca { input, dim, model_out, model, output } => {
            let ds = load_dataset(&input)?;
            match (dim, model_out, model, output) {
                (Some(dim), Some(model_out), None, None) => {
                    let pca = pca_fit(&elements_of(&ds)?, dim)?;
                    let kept = pca.output_dim();
                    export_model(&ModelPayload::Pca(pca), &model_out)?;
                    println!("{}", serde_json::json!({ "components": kept }));
                    Ok(())
                }
                (None, None, Some(model), Some(output)) => {
                    let pca = match import_model_expecting(&model, ModelKind::Pca)? {
                        ModelPayload::Pca(m) => m,
                        _ => unreachable!(),
                    };
                    let mut out = ds.clone();
                    for r in out.records.iter_mut() {
                        if let Some(vectors) = r.vectors.as_mut() {
                            for v in vectors.iter_mut() {
                                let f: Vec<f64> = v.iter().map(|&x| x as f64).collect();
                                *v = pca_transform(&pca, &f)?.iter().map(|&x| x as f32).collect();
                            }
                        }
                    }
                    out.dim = pca.output_dim();
                    save_dataset(&out, &output)?;
                    Ok(())
                }
                _ => Err(Error::Config(
                    "pca needs either --dim with --model-out (fit) or --model with --output (apply)"
                        .into(),
                )),
            }
        }

        Command::TrainRnn {
            train,
            valid,
            embeddings,
            fc1_units,
            leaky_relu_slope,
            lstm_units,
            dropout,
            epochs,
            batch_size,
            learning_rate,
            weight_decay,
            gradient_clip_norm,
            seed,
            model_out,
            curve_out,
        } => {
            let train_ds = load_dataset(&train)?;
            let valid_ds = valid.map(|p| load_dataset(&p)).transpose()?;
            let table = embeddings.map(|p| load_embedding_table(&p)).transpose()?.map(Arc::new);

            // own the sequences, then borrow them as refs for training
            enum Owned {
                Feat(Vec<FeatureSequence>),
                Sym(Vec<SymbolSequence>),
            }
            let build = |ds: &SequenceDataset| -> Result<Owned> {
                match &table {
                    Some(t) => Ok(Owned::Sym(
                        ds.records
                            .iter()
                            .map(|r| {
                                let symbols = r.symbols.clone().ok_or_else(|| {
                                    Error::Data(format!("record '{}' has no symbols", r.id))
                                })?;
                                SymbolSequence::new(r.id.clone(), symbols, Arc::clone(t))
                            })
                            .collect::<Result<_>>()?,
                    )),
                    None => Ok(Owned::Feat(ds.sequences()?)),
                }
            };
            fn refs(o: &Owned) -> Vec<SequenceRef<'_>> {
                match o {
                    Owned::Feat(v) => v.iter().map(SequenceRef::from).collect(),
                    Owned::Sym(v) => v.iter().map(SequenceRef::from).collect(),
                }
            }

            let (mode, input_dim, output_dim) = match &table {
                Some(t) => (RnnMode::Classification, t.dim(), t.alphabet_size()),
                None => (RnnMode::Regression, train_ds.dim, train_ds.dim),
            };
            let arch = RnnArchitecture {
                input_dim,
                fc1_units,
                leaky_relu_slope,
                lstm_units,
                output_dim,
                mode,
                dropout_rate: dropout,
            };
            let model = rnn_init(&arch, seed)?;
            let cfg = TrainConfig {
                epochs,
                batch_size,
                learning_rate,
                weight_decay,
                gradient_clip_norm,
                seed,
            };
            let train_owned = build(&train_ds)?;
            let valid_owned = valid_ds.as_ref().map(|d| build(d)).transpose()?;
            let train_refs = refs(&train_owned);
            let valid_refs = valid_owned.as_ref().map(|o| refs(o)).unwrap_or_default();

            let mut last = None;
            let curve = rnn_train(&model, &train_refs, &valid_refs, &cfg, |ck| {
                last = Some(ck.model);
            })?;
            export_model(&ModelPayload::Rnn(last.expect("at least one epoch")), &model_out)?;
            if let Some(path) = curve_out {
                let mut csv = String::from("epoch,train_nll,valid_nll\n");
                for (e, t, v) in &curve {
                    csv.push_str(&format!("{e},{t},{v}\n"));
                }
                std::fs::write(path, csv)?;
            }
            let (final_epoch, train_nll, valid_nll) = *curve.last().expect("non-empty curve");
            println!(
                "{}",
                serde_json::json!({
                    "epochs": final_epoch + 1,
                    "train_nll": train_nll,
                    "valid_nll": valid_nll,
                    "seed": seed,
                })
            );
            Ok(())
        }

        Command::ExtractFv {
            model,
            input,
            embeddings,
            scope,
            aggregation,
            subsample,
            subsample_seed,
            norm,
            output,
        } => {
            let rnn = load_rnn(&model)?;
            let ds = load_dataset(&input)?;
            let table = embeddings.map(|p| load_embedding_table(&p)).transpose()?.map(Arc::new);
            let agg: TimestepAggregation = aggregation.into();
            let sc: GradientScope = scope.into();
            let pooled: Vec<(FisherVector, Option<i64>, Option<String>)> = ds
                .records
                .iter()
                .map(|r| {
                    let fv = match &table {
                        Some(t) => {
                            let symbols = r.symbols.clone().ok_or_else(|| {
                                Error::Data(format!("record '{}' has no symbols", r.id))
                            })?;
                            let seq = SymbolSequence::new(r.id.clone(), symbols, Arc::clone(t))?;
                            rnn_fv(&rnn, &seq, agg, sc)?
                        }
                        None => rnn_fv(&rnn, &r.to_sequence()?, agg, sc)?,
                    };
                    Ok((fv, r.label, r.pair.clone()))
                })
                .collect::<Result<_>>()?;
            let pooled = pooled
                .into_iter()
                .map(|(fv, label, pair)| {
                    let fv = match subsample {
                        Some(count) => subsample_coordinates(&fv, count, subsample_seed)?,
                        None => fv,
                    };
                    Ok((norm.apply(&fv)?, label, pair))
                })
                .collect::<Result<Vec<_>>>()?;
            let ids: Vec<String> = ds.records.iter().map(|r| r.id.clone()).collect();
            let provenance = serde_json::json!({
                "source": "rnn-fv",
                "model": model.display().to_string(),
                "scope": match sc { GradientScope::OutputLayer => "output-layer", GradientScope::AllWeights => "all-weights" },
                "aggregation": match agg { TimestepAggregation::Mean => "mean", TimestepAggregation::Sum => "sum" },
            });
            write_vector_set(pooled, &ids, provenance, &output)
        }

        Command::FitGmm { input, k, seed, model_out } => {
            let ds = load_dataset(&input)?;
            let gmm = gmm_fit(&elements_of(&ds)?, k, seed)?;
            export_model(&ModelPayload::Gmm(gmm), &model_out)?;
            println!("{}", serde_json::json!({ "k": k, "seed": seed }));
            Ok(())
        }

        Command::Pool { method, input, model, scope, aggregation, norm, output } => {
            let ds = load_dataset(&input)?;
            let ids: Vec<String> = ds.records.iter().map(|r| r.id.clone()).collect();
            let raw = match method {
                PoolArg::Mean => pool_records(&ds, |s| {
                    Ok(FisherVector::raw(mean_pool(s)?, FvSource::Mean))
                })?,
                PoolArg::GmmFv => {
                    let path = model.ok_or_else(|| {
                        Error::Config("pool --method gmm-fv needs --model".into())
                    })?;
                    let gmm = match import_model_expecting(&path, ModelKind::Gmm)? {
                        ModelPayload::Gmm(m) => m,
                        _ => unreachable!(),
                    };
                    pool_records(&ds, |s| gmm_fv(&gmm, s))?
                }
                PoolArg::RnnFv => {
                    let path = model.ok_or_else(|| {
                        Error::Config("pool --method rnn-fv needs --model".into())
                    })?;
                    let rnn = load_rnn(&path)?;
                    pool_records(&ds, |s| rnn_fv(&rnn, s, aggregation.into(), scope.into()))?
                }
            };
            let pooled = raw
                .into_iter()
                .map(|(fv, label, pair)| Ok((norm.apply(&fv)?, label, pair)))
                .collect::<Result<Vec<_>>>()?;
            let provenance = serde_json::json!({
                "source": match method { PoolArg::Mean => "mean", PoolArg::GmmFv => "gmm-fv", PoolArg::RnnFv => "rnn-fv" },
                "power_alpha": if norm.raw { serde_json::Value::Null } else { norm.power_alpha.into() },
                "l2": !norm.raw && !norm.skip_l2,
            });
            write_vector_set(pooled, &ids, provenance, &output)
        }

        Command::TrainSvm { input, c, seed, model_out } => {
            let vs = load_vector_set(&input)?;
            let svm = svm_train(&vs.features(), &vs.labels()?, c, seed)?;
            export_model(&ModelPayload::Svm(svm), &model_out)?;
            println!("{}", serde_json::json!({ "records": vs.records.len(), "c": c, "seed": seed }));
            Ok(())
        }

        Command::Classify { model, input } => {
            let svm = match import_model_expecting(&model, ModelKind::Svm)? {
                ModelPayload::Svm(m) => m,
                _ => unreachable!(),
            };
            let vs = load_vector_set(&input)?;
            let accuracy = classify_accuracy(&svm, &vs.features(), &vs.labels()?)?;
            let predictions: Vec<serde_json::Value> = vs
                .records
                .iter()
                .map(|r| {
                    Ok(serde_json::json!({
                        "id": r.id,
                        "label": r.label,
                        "predicted": svm_predict(&svm, &r.values)?,
                    }))
                })
                .collect::<Result<_>>()?;
            println!(
                "{}",
                serde_json::json!({ "accuracy": accuracy, "count": vs.records.len(), "predictions": predictions })
            );
            Ok(())
        }

        Command::FitCca { x, y, dim, lambda, lambda_grid, model_out } => {
            let xs = load_vector_set(&x)?;
            let ys = load_vector_set(&y)?;
            let x_index: std::collections::BTreeMap<&str, usize> =
                xs.records.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
            let mut pairs_x = Vec::new();
            let mut pairs_y = Vec::new();
            for r in &ys.records {
                let pair = r.pair.as_ref().ok_or_else(|| {
                    Error::Data(format!("y record '{}' has no pair id", r.id))
                })?;
                let xi = x_index.get(pair.as_str()).ok_or_else(|| {
                    Error::Data(format!("y record '{}': no x record with id '{pair}'", r.id))
                })?;
                pairs_x.push(xs.records[*xi].values.clone());
                pairs_y.push(r.values.clone());
            }

            let chosen = match lambda_grid {
                Some(grid) if !grid.is_empty() => {
                    // hold out every fifth pair, score matched-pair cosine
                    let hold: Vec<usize> = (0..pairs_x.len()).filter(|i| i % 5 == 0).collect();
                    let keep: Vec<usize> = (0..pairs_x.len()).filter(|i| i % 5 != 0).collect();
                    if hold.is_empty() || keep.is_empty() {
                        return Err(Error::Data("too few pairs for a lambda grid search".into()));
                    }
                    let tx: Vec<Vec<f64>> = keep.iter().map(|&i| pairs_x[i].clone()).collect();
                    let ty: Vec<Vec<f64>> = keep.iter().map(|&i| pairs_y[i].clone()).collect();
                    let mut best = (f64::NEG_INFINITY, grid[0]);
                    for &l in &grid {
                        let m = cca_fit(&tx, &ty, dim, l)?;
                        let mut score = 0.0;
                        for &i in &hold {
                            let px = cca_transform(&m, &pairs_x[i], CcaSide::X)?;
                            let py = cca_transform(&m, &pairs_y[i], CcaSide::Y)?;
                            score += rnnfv::numeric::cosine_similarity(&px, &py).unwrap_or(0.0);
                        }
                        // strictly-better wins, so ties go to the earlier lambda
                        if score > best.0 {
                            best = (score, l);
                        }
                        log::info!("lambda {l}: held-out matched cosine sum {score:.4}");
                    }
                    best.1
                }
                _ => lambda,
            };
            let model = cca_fit(&pairs_x, &pairs_y, dim, chosen)?;
            let correlations = model.correlations.clone();
            export_model(&ModelPayload::Cca(model), &model_out)?;
            println!(
                "{}",
                serde_json::json!({ "lambda": chosen, "dim": dim, "correlations": correlations })
            );
            Ok(())
        }

        Command::Retrieve { model, x, y, ks } => {
            let cca = match import_model_expecting(&model, ModelKind::Cca)? {
                ModelPayload::Cca(m) => m,
                _ => unreachable!(),
            };
            let xs = load_vector_set(&x)?;
            let ys = load_vector_set(&y)?;
            let px: Vec<Vec<f64>> = xs
                .records
                .iter()
                .map(|r| cca_transform(&cca, &r.values, CcaSide::X))
                .collect::<Result<_>>()?;
            let py: Vec<Vec<f64>> = ys
                .records
                .iter()
                .map(|r| cca_transform(&cca, &r.values, CcaSide::Y))
                .collect::<Result<_>>()?;
            let y_pairs: Vec<&str> = ys
                .records
                .iter()
                .map(|r| {
                    r.pair.as_deref().ok_or_else(|| {
                        Error::Data(format!("y record '{}' has no pair id", r.id))
                    })
                })
                .collect::<Result<_>>()?;
            let annotation_truth: Vec<Vec<usize>> = xs
                .records
                .iter()
                .map(|r| {
                    y_pairs
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| **p == r.id)
                        .map(|(j, _)| j)
                        .collect()
                })
                .collect();
            let x_index: std::collections::BTreeMap<&str, usize> =
                xs.records.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
            let search_truth: Vec<Vec<usize>> = y_pairs
                .iter()
                .map(|p| {
                    x_index
                        .get(p)
                        .map(|&i| vec![i])
                        .ok_or_else(|| Error::Data(format!("no x record with id '{p}'")))
                })
                .collect::<Result<_>>()?;
            let annotation =
                retrieval_metrics(&rank_matrix(&px, &py)?, &annotation_truth, &ks)?;
            let search = retrieval_metrics(&rank_matrix(&py, &px)?, &search_truth, &ks)?;
            println!(
                "{}",
                serde_json::to_string(&serde_json::json!({
                    "annotation": annotation,
                    "search": search,
                }))?
            );
            Ok(())
        }

        Command::Run { config } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", config.display())))?;
            let cfg: RunConfig = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
            let report = match cfg.task {
                TaskKind::Classify => run_classify(&cfg)?,
                TaskKind::Retrieve => run_retrieve(&cfg)?,
            };
            println!("{}", serde_json::to_string(&report)?);
            eprint!("{}", report.table());
            Ok(())
        }

        Command::Convert { input, output, to } => convert_dataset(&input, &output, to.into()),
    }
}
