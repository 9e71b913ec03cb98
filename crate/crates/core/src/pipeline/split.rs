//! Stratified train/val/test assignment.

use std::collections::HashMap;

use rand::seq::SliceRandom;

use super::manifest::{DatasetManifest, Split};
use super::PipelineError;
use crate::augment::AugTag;
use crate::{seed, MAX_CLASSES};

/// Assigns every labeled original clip to train, val or test. Each class is
/// shuffled with its own seeded stream and sliced proportionally; val and
/// test sizes are floored so the rounding residue lands in train.
/// Unlabeled clips go to eval and augmented copies follow their source.
pub fn stratified_split(
    manifest: &DatasetManifest,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetManifest, PipelineError> {
    let (f_train, f_val, f_test) = fractions;
    let all = [f_train, f_val, f_test];
    if all.iter().any(|f| !(0.0..=1.0).contains(f)) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(PipelineError::Config(format!(
            "split fractions must be non-negative and sum to 1, got {all:?}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); MAX_CLASSES];
    for (i, e) in manifest.entries.iter().enumerate() {
        if let (Some(l), false) = (e.label, e.is_augmented()) {
            by_class[usize::from(l)].push(i);
        }
    }
    let mut out = manifest.clone();
    out.seed = seed;
    for (class, idx) in by_class.iter_mut().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let n = idx.len();
        let n_val = (n as f64 * f_val).floor() as usize;
        let n_test = (n as f64 * f_test).floor() as usize;
        let n_train = n - n_val - n_test;
        let need = all.iter().filter(|&&f| f > 0.0).count();
        let empty = [(f_train, n_train), (f_val, n_val), (f_test, n_test)]
            .iter()
            .any(|&(f, k)| f > 0.0 && k == 0);
        if empty {
            return Err(PipelineError::ClassTooSmall { class, have: n, need });
        }
        idx.shuffle(&mut seed::rng(seed::derive_seed(seed, "split", class as u64)));
        for (rank, &i) in idx.iter().enumerate() {
            out.entries[i].split = Some(if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            });
        }
    }
    for e in out.entries.iter_mut().filter(|e| e.label.is_none() && !e.is_augmented()) {
        e.split = Some(Split::Eval);
    }
    let by_path: HashMap<String, Option<Split>> = out
        .entries
        .iter()
        .filter(|e| !e.is_augmented())
        .map(|e| (e.relative_path.clone(), e.split))
        .collect();
    for e in out.entries.iter_mut().filter(|e| e.is_augmented()) {
        let tag: AugTag = e.aug_tag.parse()?;
        e.split = *by_path
            .get(&tag.source)
            .ok_or_else(|| PipelineError::Data(format!("{}: source {} not in manifest", e.relative_path, tag.source)))?;
    }
    Ok(out)
}
