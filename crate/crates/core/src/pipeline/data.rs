//! Turning manifest entries into model inputs.

use rayon::prelude::*;

use super::config::InputFeature;
use super::manifest::{DatasetManifest, ManifestEntry};
use super::PipelineError;
use crate::audio::{self, AudioClip};
use crate::augment::{AugTag, CodecHook};
use crate::features::{self, FeatureConfig};

/// Canonical clip for `entry`. Augmented entries without a file on disk
/// are rebuilt from their tag: the source clip is loaded and the recorded
/// augmentation is replayed with the recorded seed.
pub fn load_entry(
    manifest: &DatasetManifest,
    entry: &ManifestEntry,
    hook: Option<&CodecHook>,
) -> Result<AudioClip, PipelineError> {
    let path = manifest.path_of(entry);
    if path.is_file() {
        let clip = audio::load_canonical(&path)?;
        return Ok(clip.with_label(entry.label).with_source(entry.relative_path.clone()));
    }
    if !entry.is_augmented() {
        return Err(PipelineError::Data(format!("missing file {}", path.display())));
    }
    let tag: AugTag = entry.aug_tag.parse()?;
    let source_path = manifest.root.join(&tag.source);
    if !source_path.is_file() {
        return Err(PipelineError::Data(format!(
            "{}: missing source file {}",
            entry.relative_path,
            source_path.display()
        )));
    }
    let source = audio::load_canonical(&source_path)?;
    let clip = tag.augmentation.apply(&source, tag.seed, hook)?;
    Ok(clip.with_label(entry.label).with_source(entry.relative_path.clone()))
}

/// Fixed-length waveforms for `entries`, loaded in parallel, in order.
pub fn load_waveforms(
    manifest: &DatasetManifest,
    entries: &[&ManifestEntry],
    clip_seconds: f64,
) -> Result<Vec<Vec<f32>>, PipelineError> {
    entries
        .par_iter()
        .map(|e| {
            let clip = load_entry(manifest, e, None)?;
            Ok(audio::normalize_length(&clip, clip_seconds)?.samples)
        })
        .collect()
}

/// Pooled per-clip feature vector for the classical models: per-coefficient
/// means then standard deviations of MFCC or log-mel frames.
pub fn pooled_features(clip: &AudioClip, kind: InputFeature, cfg: &FeatureConfig) -> Result<Vec<f64>, PipelineError> {
    match kind {
        InputFeature::Mfcc => Ok(features::pooled_mfcc(clip, cfg)?),
        InputFeature::Ms => {
            let power = features::stft_power(clip, cfg.frame_length, cfg.hop_length)?;
            let mel = features::mel_spectrogram(&power, cfg.n_mels, cfg.f_min, cfg.f_max)?;
            Ok(features::mfcc_stats(&features::log_mel(&mel))?)
        }
        InputFeature::Rw => Err(PipelineError::Config("raw waveforms have no pooled feature vector".into())),
    }
}

/// Pooled features for `entries` after length normalization, in order.
pub fn load_pooled(
    manifest: &DatasetManifest,
    entries: &[&ManifestEntry],
    clip_seconds: f64,
    kind: InputFeature,
) -> Result<Vec<Vec<f64>>, PipelineError> {
    let cfg = FeatureConfig::default();
    entries
        .par_iter()
        .map(|e| {
            let clip = audio::normalize_length(&load_entry(manifest, e, None)?, clip_seconds)?;
            pooled_features(&clip, kind, &cfg)
        })
        .collect()
}

/// Labels of `entries` as class indices; unlabeled entries are an error.
pub fn labels_of(entries: &[&ManifestEntry]) -> Result<Vec<usize>, PipelineError> {
    entries
        .iter()
        .map(|e| {
            e.label
                .map(usize::from)
                .ok_or_else(|| PipelineError::Data(format!("{} has no label", e.relative_path)))
        })
        .collect()
}
