//! Experiment scaffolding: manifests, splits, the fixture corpus, training
//! and evaluation runs.

pub mod classical_run;
pub mod config;
pub mod data;
pub mod fixture;
pub mod manifest;
pub mod metrics;
pub mod split;
pub mod train;

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::audio::AudioError;
use crate::augment::AugmentError;
use crate::classical::ClassicalError;
use crate::features::FeatureError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("class {class} has {have} samples, needs at least {need} for the requested fractions")]
    ClassTooSmall { class: usize, have: usize, need: usize },
    #[error("split {0} is empty")]
    EmptySplit(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl PipelineError {
    /// Process exit code: 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_)
            | PipelineError::ClassTooSmall { .. }
            | PipelineError::EmptySplit(_)
            | PipelineError::Io(_)
            | PipelineError::Csv(_) => 3,
            PipelineError::Numeric(_) | PipelineError::NonFiniteLoss { .. } => 4,
        }
    }
}

impl From<AudioError> for PipelineError {
    fn from(e: AudioError) -> Self {
        match e {
            AudioError::Io(io) => PipelineError::Io(io),
            AudioError::InvalidParameter(m) => PipelineError::Config(m),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<AugmentError> for PipelineError {
    fn from(e: AugmentError) -> Self {
        match e {
            AugmentError::InvalidParameter(_) | AugmentError::BandwidthAboveNyquist { .. } => {
                PipelineError::Config(e.to_string())
            }
            AugmentError::Audio(a) => a.into(),
            AugmentError::Io(io) => PipelineError::Io(io),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<FeatureError> for PipelineError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::InvalidParameter(_) | FeatureError::BadBandEdges(_) => PipelineError::Config(e.to_string()),
            FeatureError::Io(io) => PipelineError::Io(io),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<NnError> for PipelineError {
    fn from(e: NnError) -> Self {
        match e {
            NnError::ConfigInvalid(m) => PipelineError::Config(m),
            NnError::NonFiniteGradient(_) => PipelineError::Numeric(e.to_string()),
            NnError::Io(io) => PipelineError::Io(io),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<ClassicalError> for PipelineError {
    fn from(e: ClassicalError) -> Self {
        match e {
            ClassicalError::InvalidParameter(m) => PipelineError::Config(m),
            ClassicalError::Io(io) => PipelineError::Io(io),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<AnalysisError> for PipelineError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::PerplexityTooLarge { .. } => PipelineError::Config(e.to_string()),
            AnalysisError::Io(io) => PipelineError::Io(io),
            other => PipelineError::Data(other.to_string()),
        }
    }
}
