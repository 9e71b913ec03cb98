//! Training, evaluation, prediction and embedding runs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use super::classical_run::{self, ClassicalCheckpoint};
use super::config::{ExperimentConfig, ModelId, Precision};
use super::data::{labels_of, load_entry, load_waveforms};
use super::manifest::{DatasetManifest, ManifestEntry, Split};
use super::metrics::{format_accuracy, ConfusionMatrix};
use super::PipelineError;
use crate::analysis::{self, EmbeddingSet, EmbeddingSource, TsneConfig};
use crate::audio;
use crate::augment::{default_specs, expand_with_augmentations};
use crate::classical::argmax_first;
use crate::models::{build_inc_tssdnet, build_res_tssdnet, waveform_batch, Arch, TssdNet};
use crate::nn::{learning_rate, ops, NnError, Optimizer, Real};
use crate::seed;

pub const LOG_HEADER: &str = "epoch,lr,train_loss,train_acc,val_acc";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LAST_CHECKPOINT_FILE: &str = "checkpoint_last.bin";
pub const SNAPSHOT_FILE: &str = "config.snapshot";
pub const LOG_FILE: &str = "log.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch, self.lr, self.train_loss, self.train_acc, self.val_acc
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    /// Best-validation checkpoint.
    pub checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
}

/// Reads a `log.csv` written by a training run.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<EpochRecord>, PipelineError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64, PipelineError> {
            rec[i]
                .parse()
                .map_err(|_| PipelineError::Data(format!("bad log value {:?}", &rec[i])))
        };
        out.push(EpochRecord {
            epoch: f(0)? as usize,
            lr: f(1)?,
            train_loss: f(2)?,
            train_acc: f(3)?,
            val_acc: f(4)?,
        });
    }
    Ok(out)
}

/// The manifest a run actually trains on: expanded with one copy per
/// default augmentation spec when `config.augment` is set and the manifest
/// has no augmented entries yet.
pub fn prepare_manifest(config: &ExperimentConfig, manifest: &DatasetManifest) -> DatasetManifest {
    if config.augment && !manifest.entries.iter().any(ManifestEntry::is_augmented) {
        expand_with_augmentations(manifest, &default_specs(seed::sub_seed(config.train.seed, "augment")))
    } else {
        manifest.clone()
    }
}

fn split_entries(manifest: &DatasetManifest, split: Split) -> Result<Vec<&ManifestEntry>, PipelineError> {
    let entries: Vec<&ManifestEntry> = manifest.in_split(split).collect();
    if entries.is_empty() {
        return Err(PipelineError::EmptySplit(split.to_string()));
    }
    Ok(entries)
}

fn start_run(config: &ExperimentConfig) -> Result<PathBuf, PipelineError> {
    let dir = config.run_dir();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join(SNAPSHOT_FILE), config.snapshot())?;
    Ok(dir)
}

/// Trains the configured model on the train split, selecting the
/// checkpoint with the best validation accuracy. Writes
/// `config.snapshot`, `log.csv`, `checkpoint.bin` and
/// `checkpoint_last.bin` under the run directory.
pub fn train_model(config: &ExperimentConfig, manifest: &DatasetManifest) -> Result<TrainOutcome, PipelineError> {
    config.validate()?;
    let manifest = prepare_manifest(config, manifest);
    let run_dir = start_run(config)?;
    match (config.model, config.precision) {
        (ModelId::Svm | ModelId::Gmm, _) => classical_run::train_classical(config, &manifest, &run_dir),
        (_, Precision::F32) => train_network::<f32>(config, &manifest, &run_dir),
        (_, Precision::F64) => train_network::<f64>(config, &manifest, &run_dir),
    }
}

fn build_network<T: Real>(config: &ExperimentConfig) -> Result<TssdNet<T>, PipelineError> {
    let s = seed::sub_seed(config.train.seed, "init");
    Ok(match config.model {
        ModelId::IncTssd => build_inc_tssdnet(config.inc_config(), s)?,
        ModelId::ResTssd => build_res_tssdnet(config.res_config(), s)?,
        other => return Err(PipelineError::Config(format!("{} is not a network", other.as_str()))),
    })
}

fn nn_numeric(e: NnError) -> PipelineError {
    match e {
        NnError::NonFiniteGradient(_) => PipelineError::Numeric(e.to_string()),
        other => other.into(),
    }
}

fn train_network<T: Real>(
    config: &ExperimentConfig,
    manifest: &DatasetManifest,
    run_dir: &Path,
) -> Result<TrainOutcome, PipelineError> {
    let train_entries = split_entries(manifest, Split::Train)?;
    let val_entries = split_entries(manifest, Split::Val)?;
    let train_y = labels_of(&train_entries)?;
    let val_y = labels_of(&val_entries)?;
    if let Some(&bad) = train_y.iter().chain(&val_y).find(|&&y| y >= config.num_classes) {
        return Err(PipelineError::Data(format!("label {bad} but num_classes = {}", config.num_classes)));
    }
    let train_x = load_waveforms(manifest, &train_entries, config.clip_seconds)?;
    let val_x = load_waveforms(manifest, &val_entries, config.clip_seconds)?;
    log::info!(
        "training {} on {} clips, validating on {}",
        config.model.as_str(),
        train_x.len(),
        val_x.len()
    );

    let mut net = build_network::<T>(config)?;
    let mut opt = Optimizer::<T>::new(config.train.optimizer);
    let mut meta = BTreeMap::from([
        ("clip_seconds".to_string(), config.clip_seconds.to_string()),
        ("precision".to_string(), config.precision.to_string()),
        ("seed".to_string(), config.train.seed.to_string()),
    ]);
    let checkpoint = run_dir.join(CHECKPOINT_FILE);
    let last_checkpoint = run_dir.join(LAST_CHECKPOINT_FILE);
    let mut log_file = BufWriter::new(File::create(run_dir.join(LOG_FILE))?);
    writeln!(log_file, "{LOG_HEADER}")?;

    let mut log = Vec::new();
    let (mut best_epoch, mut best_val) = (0, f64::NEG_INFINITY);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    for epoch in 0..config.train.epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::rng(seed::derive_seed(config.train.seed, "shuffle", epoch as u64)));
        let lr = learning_rate(&config.train, epoch);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, chunk) in order.chunks(config.train.batch_size).enumerate() {
            let waves: Vec<&[f32]> = chunk.iter().map(|&i| train_x[i].as_slice()).collect();
            let targets: Vec<usize> = chunk.iter().map(|&i| train_y[i]).collect();
            net.zero_grad();
            let logits = net.forward_train(&waveform_batch::<T>(&waves)?)?;
            let (loss, grad) = ops::softmax_crossentropy(&logits, &targets)?;
            if !loss.is_finite() {
                log::error!("loss became {loss} at epoch {epoch}, batch {b} (lr {lr})");
                return Err(PipelineError::NonFiniteLoss { epoch, batch: b });
            }
            correct += argmax_rows(&logits)
                .iter()
                .zip(&targets)
                .filter(|(p, t)| p == t)
                .count();
            loss_sum += loss * chunk.len() as f64;
            net.backward(&grad)?;
            opt.step(&mut net.params_mut(), &config.train, epoch).map_err(nn_numeric)?;
        }
        net.clear_cache();
        let val_pred = predict_network(&net, &val_x, config.eval_batch_size)?;
        let val_acc = accuracy(&val_pred, &val_y);
        let rec = EpochRecord {
            epoch,
            lr,
            train_loss: loss_sum / train_x.len() as f64,
            train_acc: correct as f64 / train_x.len() as f64,
            val_acc,
        };
        log::info!(
            "epoch {epoch}: lr {lr:.3e} loss {:.4} train {} val {}",
            rec.train_loss,
            format_accuracy(rec.train_acc),
            format_accuracy(val_acc)
        );
        writeln!(log_file, "{}", rec.csv_row())?;
        log_file.flush()?;
        log.push(rec);
        meta.insert("epoch".to_string(), epoch.to_string());
        meta.insert("val_acc".to_string(), val_acc.to_string());
        if val_acc > best_val {
            best_val = val_acc;
            best_epoch = epoch;
            net.save(&checkpoint, &meta)?;
        }
        let stalled = config.early_stop_patience > 0 && epoch - best_epoch >= config.early_stop_patience;
        if stalled || val_acc >= config.stop_at_val_accuracy {
            log::info!("stopping after epoch {epoch}");
            break;
        }
    }
    net.save(&last_checkpoint, &meta)?;
    if log.is_empty() {
        // zero epochs: the untrained network is both best and last
        net.save(&checkpoint, &meta)?;
        best_val = 0.0;
    }
    Ok(TrainOutcome {
        run_dir: run_dir.to_path_buf(),
        log,
        best_epoch,
        best_val_acc: best_val,
        checkpoint,
        last_checkpoint,
    })
}

fn argmax_rows<T: Real>(logits: &crate::nn::Tensor<T>) -> Vec<usize> {
    let classes = logits.shape().get(1).copied().unwrap_or(1);
    logits
        .data()
        .chunks(classes)
        .map(|row| argmax_first(&row.iter().map(|v| v.f64()).collect::<Vec<_>>()))
        .collect()
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64
}

/// Eval-mode class predictions, batched, in input order.
pub fn predict_network<T: Real>(net: &TssdNet<T>, waves: &[Vec<f32>], batch: usize) -> Result<Vec<usize>, PipelineError> {
    let mut out = Vec::with_capacity(waves.len());
    for chunk in waves.chunks(batch.max(1)) {
        let refs: Vec<&[f32]> = chunk.iter().map(Vec::as_slice).collect();
        out.extend(argmax_rows(&net.forward_eval(&waveform_batch::<T>(&refs)?)?.logits));
    }
    Ok(out)
}

/// Penultimate-layer embeddings, batched, in input order.
pub fn embed_network<T: Real>(net: &TssdNet<T>, waves: &[Vec<f32>], batch: usize) -> Result<Vec<Vec<f64>>, PipelineError> {
    let mut out = Vec::with_capacity(waves.len());
    for chunk in waves.chunks(batch.max(1)) {
        let refs: Vec<&[f32]> = chunk.iter().map(Vec::as_slice).collect();
        let e = net.embed(&waveform_batch::<T>(&refs)?)?;
        let d = e.shape()[1];
        out.extend(e.data().chunks(d).map(|r| r.iter().map(|v| v.f64()).collect::<Vec<f64>>()));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub enum LoadedModel {
    F32(TssdNet<f32>),
    F64(TssdNet<f64>),
    Classical(ClassicalCheckpoint),
}

/// Any trained model plus the clip length it was trained on.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: LoadedModel,
    pub clip_seconds: f64,
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let mut magic = [0u8; 8];
        File::open(path)
            .and_then(|mut f| f.read_exact(&mut magic))
            .map_err(|e| PipelineError::Data(format!("cannot read checkpoint {}: {e}", path.display())))?;
        if &magic == classical_run::CLASSICAL_MAGIC {
            let c = ClassicalCheckpoint::load(path)?;
            return Ok(Self {
                clip_seconds: c.clip_seconds,
                model: LoadedModel::Classical(c),
                meta: BTreeMap::new(),
            });
        }
        let (net, meta) = TssdNet::<f32>::load(path)?;
        let clip_seconds = meta
            .get("clip_seconds")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| PipelineError::Data("checkpoint has no clip_seconds".into()))?;
        let model = if meta.get("precision").map(String::as_str) == Some("f64") {
            LoadedModel::F64(TssdNet::<f64>::load(path)?.0)
        } else {
            LoadedModel::F32(net)
        };
        Ok(Self {
            model,
            clip_seconds,
            meta,
        })
    }

    pub fn num_classes(&self) -> usize {
        match &self.model {
            LoadedModel::F32(n) => n.num_classes(),
            LoadedModel::F64(n) => n.num_classes(),
            LoadedModel::Classical(c) => c.num_classes(),
        }
    }

    /// Width of the embedding layer; `None` for classical models.
    pub fn embedding_dim(&self) -> Option<usize> {
        match &self.model {
            LoadedModel::F32(n) => Some(n.embedding_dim()),
            LoadedModel::F64(n) => Some(n.embedding_dim()),
            LoadedModel::Classical(_) => None,
        }
    }

    /// Resamples `clip` to the canonical rate and fits it to the trained
    /// clip length.
    pub fn prepare(&self, clip: &audio::AudioClip) -> Result<Vec<f32>, PipelineError> {
        let clip = audio::resample(clip, crate::CANONICAL_SAMPLE_RATE)?;
        Ok(audio::normalize_length(&clip, self.clip_seconds)?.samples)
    }

    pub fn embedding_source(&self) -> EmbeddingSource {
        let arch = match &self.model {
            LoadedModel::F32(n) => n.arch(),
            LoadedModel::F64(n) => n.arch(),
            LoadedModel::Classical(_) => return EmbeddingSource::Other,
        };
        match arch {
            Arch::Inc => EmbeddingSource::IncTssd,
            Arch::Res => EmbeddingSource::ResTssd,
        }
    }

    /// Predictions for fixed-length waveforms.
    pub fn predict(&self, waves: &[Vec<f32>], batch: usize) -> Result<Vec<usize>, PipelineError> {
        match &self.model {
            LoadedModel::F32(n) => predict_network(n, waves, batch),
            LoadedModel::F64(n) => predict_network(n, waves, batch),
            LoadedModel::Classical(c) => c.predict_waves(waves),
        }
    }

    pub fn embed(&self, waves: &[Vec<f32>], batch: usize) -> Result<Vec<Vec<f64>>, PipelineError> {
        match &self.model {
            LoadedModel::F32(n) => embed_network(n, waves, batch),
            LoadedModel::F64(n) => embed_network(n, waves, batch),
            LoadedModel::Classical(_) => Err(PipelineError::Config("classical models have no embedding layer".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub predictions: Vec<usize>,
}

/// Deterministic eval-mode predictions over `split`.
pub fn evaluate(checkpoint: &Checkpoint, manifest: &DatasetManifest, split: Split, batch: usize) -> Result<EvalReport, PipelineError> {
    let entries = split_entries(manifest, split)?;
    let truth = labels_of(&entries)?;
    let waves = load_waveforms(manifest, &entries, checkpoint.clip_seconds)?;
    let predictions = checkpoint.predict(&waves, batch)?;
    let classes = checkpoint.num_classes().max(truth.iter().max().map_or(0, |m| m + 1));
    let confusion = ConfusionMatrix::from_predictions(classes, &truth, &predictions)?;
    Ok(EvalReport {
        accuracy: confusion.accuracy(),
        confusion,
        predictions,
    })
}

/// [`evaluate`] plus `confusion.csv` and `confusion.svg` in `out_dir`.
pub fn evaluate_to_dir(
    checkpoint: &Checkpoint,
    manifest: &DatasetManifest,
    split: Split,
    batch: usize,
    out_dir: impl AsRef<Path>,
) -> Result<EvalReport, PipelineError> {
    let report = evaluate(checkpoint, manifest, split, batch)?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    report.confusion.write_csv(out_dir.join("confusion.csv"))?;
    let title = format!("{split} accuracy {}", format_accuracy(report.accuracy));
    std::fs::write(out_dir.join("confusion.svg"), report.confusion.to_svg(&title))?;
    Ok(report)
}

pub const PREDICTION_HEADER: &str = "relative_path,predicted_label,status";

/// Writes one `relative_path,predicted_label,status` row per eval-split
/// entry, in manifest order. Entries that fail to load are reported with
/// label `?` and a `failed:` status; the run continues. Returns the number
/// of failed rows.
pub fn predict_unlabeled(
    checkpoint: &Checkpoint,
    manifest: &DatasetManifest,
    out_csv: impl AsRef<Path>,
    batch: usize,
) -> Result<usize, PipelineError> {
    let entries: Vec<&ManifestEntry> = manifest.in_split(Split::Eval).collect();
    let loaded: Vec<Result<Vec<f32>, PipelineError>> = entries
        .iter()
        .map(|e| {
            let clip = load_entry(manifest, e, None)?;
            Ok(audio::normalize_length(&clip, checkpoint.clip_seconds)?.samples)
        })
        .collect();
    let ok: Vec<Vec<f32>> = loaded.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
    let mut preds = checkpoint.predict(&ok, batch)?.into_iter();
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(out_csv)?));
    w.write_record(PREDICTION_HEADER.split(','))?;
    let mut failed = 0;
    for (e, r) in entries.iter().zip(&loaded) {
        match r {
            Ok(_) => {
                let p = preds.next().expect("one prediction per loaded clip");
                w.write_record([e.relative_path.as_str(), &p.to_string(), "ok"])?;
            }
            Err(err) => {
                log::warn!("{}: {err}", e.relative_path);
                failed += 1;
                w.write_record([e.relative_path.as_str(), "?", &format!("failed: {err}")])?;
            }
        }
    }
    w.flush()?;
    Ok(failed)
}

/// Embeddings of `split` with labels, plus a 2-D t-SNE map written to
/// `embeddings.csv` and `tsne.svg` in `out_dir`.
pub fn embed_split(
    checkpoint: &Checkpoint,
    manifest: &DatasetManifest,
    split: Split,
    tsne: &TsneConfig,
    batch: usize,
    out_dir: impl AsRef<Path>,
) -> Result<(EmbeddingSet, analysis::TsneResult), PipelineError> {
    let entries = split_entries(manifest, split)?;
    let labels = labels_of(&entries)?;
    let waves = load_waveforms(manifest, &entries, checkpoint.clip_seconds)?;
    let source = checkpoint.embedding_source();
    let set = EmbeddingSet::new(checkpoint.embed(&waves, batch)?, labels, source)?;
    let map = analysis::tsne_embed(&set.vectors, tsne)?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    analysis::write_embedding_csv(out_dir.join("embeddings.csv"), &map.embedding, &set.labels, source)?;
    let title = format!("t-SNE of {source} embeddings ({split})");
    std::fs::write(out_dir.join("tsne.svg"), analysis::scatter_svg(&map.embedding, &set.labels, &title))?;
    Ok((set, map))
}
