//! Training runs for the SVM and GMM baselines on pooled features.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use super::config::{ExperimentConfig, InputFeature, ModelId};
use super::data::{labels_of, load_pooled, pooled_features};
use super::manifest::{DatasetManifest, ManifestEntry, Split};
use super::train::{EpochRecord, TrainOutcome, CHECKPOINT_FILE, LAST_CHECKPOINT_FILE, LOG_FILE, LOG_HEADER};
use super::PipelineError;
use crate::audio::AudioClip;
use crate::classical::{gmm_fit, svm_train, ClassicalError, GmmModel, Standardizer, SvmModel};
use crate::features::FeatureConfig;
use crate::seed;

pub const CLASSICAL_MAGIC: &[u8; 8] = b"SATTRCLS";
const VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum ClassicalModel {
    Svm(SvmModel),
    Gmm(GmmModel),
}

/// Feature kind, clip length, train-split standardizer and the fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalCheckpoint {
    pub feature: InputFeature,
    pub clip_seconds: f64,
    pub standardizer: Standardizer,
    pub model: ClassicalModel,
}

impl ClassicalCheckpoint {
    pub fn num_classes(&self) -> usize {
        match &self.model {
            ClassicalModel::Svm(m) => m.num_classes(),
            ClassicalModel::Gmm(m) => m.classes.len(),
        }
    }

    /// Class for one raw (unstandardized) pooled feature vector.
    pub fn predict_features(&self, x: &[f64]) -> Result<usize, ClassicalError> {
        let z = self.standardizer.transform(x)?;
        Ok(match &self.model {
            ClassicalModel::Svm(m) => m.predict(&z)?.0,
            ClassicalModel::Gmm(m) => m.predict(&z)?.0,
        })
    }

    /// Predictions for fixed-length canonical waveforms.
    pub fn predict_waves(&self, waves: &[Vec<f32>]) -> Result<Vec<usize>, PipelineError> {
        let cfg = FeatureConfig::default();
        waves
            .par_iter()
            .map(|w| {
                let clip = AudioClip::new(w.clone(), crate::CANONICAL_SAMPLE_RATE);
                Ok(self.predict_features(&pooled_features(&clip, self.feature, &cfg)?)?)
            })
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PipelineError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CLASSICAL_MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let feature: u8 = match self.feature {
            InputFeature::Rw => 0,
            InputFeature::Ms => 1,
            InputFeature::Mfcc => 2,
        };
        let kind: u8 = match self.model {
            ClassicalModel::Svm(_) => 0,
            ClassicalModel::Gmm(_) => 1,
        };
        w.write_all(&[feature, kind])?;
        w.write_all(&self.clip_seconds.to_bits().to_le_bytes())?;
        self.standardizer.write_to(&mut w)?;
        match &self.model {
            ClassicalModel::Svm(m) => m.write_to(&mut w)?,
            ClassicalModel::Gmm(m) => m.write_to(&mut w)?,
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let mut r = BufReader::new(File::open(path)?);
        let bad = |what: &str| PipelineError::Data(format!("malformed classical checkpoint: {what}"));
        let mut head = [0u8; 8 + 8 + 2 + 8];
        r.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
        if &head[..8] != CLASSICAL_MAGIC {
            return Err(bad("bad magic"));
        }
        if u64::from_le_bytes(head[8..16].try_into().unwrap()) != VERSION {
            return Err(bad("unsupported version"));
        }
        let feature = match head[16] {
            0 => InputFeature::Rw,
            1 => InputFeature::Ms,
            2 => InputFeature::Mfcc,
            _ => return Err(bad("feature kind")),
        };
        let clip_seconds = f64::from_bits(u64::from_le_bytes(head[18..26].try_into().unwrap()));
        let standardizer = Standardizer::read_from(&mut r)?;
        let model = match head[17] {
            0 => ClassicalModel::Svm(SvmModel::read_from(&mut r)?),
            1 => ClassicalModel::Gmm(GmmModel::read_from(&mut r)?),
            _ => return Err(bad("model kind")),
        };
        Ok(Self {
            feature,
            clip_seconds,
            standardizer,
            model,
        })
    }
}

fn pooled_split(
    config: &ExperimentConfig,
    manifest: &DatasetManifest,
    split: Split,
) -> Result<(Vec<Vec<f64>>, Vec<usize>), PipelineError> {
    let entries: Vec<&ManifestEntry> = manifest.in_split(split).collect();
    if entries.is_empty() {
        return Err(PipelineError::EmptySplit(split.to_string()));
    }
    let y = labels_of(&entries)?;
    Ok((load_pooled(manifest, &entries, config.clip_seconds, config.feature)?, y))
}

/// Fits the standardizer on the train split only, then the SVM or GMM on
/// the standardized train features. The log holds a single row.
pub fn train_classical(
    config: &ExperimentConfig,
    manifest: &DatasetManifest,
    run_dir: &Path,
) -> Result<TrainOutcome, PipelineError> {
    let (train_x, train_y) = pooled_split(config, manifest, Split::Train)?;
    let (val_x, val_y) = pooled_split(config, manifest, Split::Val)?;
    let standardizer = Standardizer::fit(&train_x)?;
    let z = standardizer.transform_all(&train_x)?;
    let model = match config.model {
        ModelId::Svm => {
            let mut cfg = config.svm.clone();
            cfg.seed = seed::sub_seed(config.train.seed, "svm");
            let (m, report) = svm_train(&z, &train_y, &cfg)?;
            for w in &report.warnings {
                log::warn!("svm: {w}");
            }
            ClassicalModel::Svm(m)
        }
        ModelId::Gmm => {
            let mut cfg = config.gmm.clone();
            cfg.seed = seed::sub_seed(config.train.seed, "gmm");
            ClassicalModel::Gmm(gmm_fit(&z, &train_y, &cfg)?)
        }
        other => return Err(PipelineError::Config(format!("{} is not a classical model", other.as_str()))),
    };
    let ck = ClassicalCheckpoint {
        feature: config.feature,
        clip_seconds: config.clip_seconds,
        standardizer,
        model,
    };
    let acc = |x: &[Vec<f64>], y: &[usize]| -> Result<f64, PipelineError> {
        let mut hits = 0;
        for (xi, &yi) in x.iter().zip(y) {
            hits += usize::from(ck.predict_features(xi)? == yi);
        }
        Ok(hits as f64 / y.len() as f64)
    };
    let rec = EpochRecord {
        epoch: 0,
        lr: 0.0,
        train_loss: f64::NAN,
        train_acc: acc(&train_x, &train_y)?,
        val_acc: acc(&val_x, &val_y)?,
    };
    log::info!(
        "{} on {}: train {:.2} val {:.2}",
        config.model.as_str(),
        config.feature.as_str(),
        rec.train_acc,
        rec.val_acc
    );
    std::fs::write(run_dir.join(LOG_FILE), format!("{LOG_HEADER}\n{}\n", rec.csv_row()))?;
    let checkpoint = run_dir.join(CHECKPOINT_FILE);
    let last_checkpoint = run_dir.join(LAST_CHECKPOINT_FILE);
    ck.save(&checkpoint)?;
    ck.save(&last_checkpoint)?;
    Ok(TrainOutcome {
        run_dir: run_dir.to_path_buf(),
        best_val_acc: rec.val_acc,
        log: vec![rec],
        best_epoch: 0,
        checkpoint,
        last_checkpoint,
    })
}
