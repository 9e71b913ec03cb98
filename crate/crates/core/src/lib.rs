//! Synthetic speech attribution toolkit.
//!
//! Given audio clips, decide which of several speech synthesizers (or an
//! "unknown" pool) produced them. The crate covers the whole experimental
//! loop: WAV ingest and fixed-length canonicalization, seeded augmentations,
//! STFT/mel/MFCC features, a small reverse-mode layer library with the
//! Inception- and ResNet-style raw-waveform networks built on it, linear SVM
//! and GMM baselines, PCA/t-SNE embedding analysis, and the training and
//! evaluation harness behind the `synthattr` CLI.

pub mod analysis;
pub mod audio;
pub mod augment;
pub mod classical;
pub mod features;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod seed;

pub use audio::AudioClip;
pub use models::{IncTssdConfig, ResTssdConfig, TssdNet};
pub use nn::{Real, Tensor};

/// Canonical sample rate every clip is resampled to on ingest.
pub const CANONICAL_SAMPLE_RATE: u32 = 16_000;

/// Number of class labels with the "unknown synthesizer" pool included.
pub const MAX_CLASSES: usize = 6;
