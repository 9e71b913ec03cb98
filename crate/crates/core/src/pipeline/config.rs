//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::PipelineError;
use crate::classical::{GmmConfig, SvmConfig, SvmSolver};
use crate::models::{IncTssdConfig, ResTssdConfig};
use crate::nn::{OptimizerKind, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelId {
    IncTssd,
    ResTssd,
    Svm,
    Gmm,
}

impl ModelId {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::IncTssd => "inc-tssd",
            ModelId::ResTssd => "res-tssd",
            ModelId::Svm => "svm",
            ModelId::Gmm => "gmm",
        }
    }

    pub fn is_network(self) -> bool {
        matches!(self, ModelId::IncTssd | ModelId::ResTssd)
    }
}

impl FromStr for ModelId {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inc-tssd" => Ok(ModelId::IncTssd),
            "res-tssd" => Ok(ModelId::ResTssd),
            "svm" => Ok(ModelId::Svm),
            "gmm" => Ok(ModelId::Gmm),
            other => Err(PipelineError::Config(format!("unknown model {other:?}"))),
        }
    }
}

/// Model input: raw waveform, pooled mel-spectrogram or pooled MFCC.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFeature {
    Rw,
    Ms,
    Mfcc,
}

impl InputFeature {
    pub fn as_str(self) -> &'static str {
        match self {
            InputFeature::Rw => "rw",
            InputFeature::Ms => "ms",
            InputFeature::Mfcc => "mfcc",
        }
    }
}

impl FromStr for InputFeature {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rw" => Ok(InputFeature::Rw),
            "ms" => Ok(InputFeature::Ms),
            "mfcc" => Ok(InputFeature::Mfcc),
            other => Err(PipelineError::Config(format!("unknown feature kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32,
    /// Network weights and activations in f64.
    F64,
}

impl FromStr for Precision {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(PipelineError::Config(format!("precision must be f32 or f64, got {other:?}"))),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelId,
    pub feature: InputFeature,
    pub train: TrainConfig,
    /// Expand the manifest with one augmented copy per default spec.
    pub augment: bool,
    pub clip_seconds: f64,
    pub num_classes: usize,
    pub manifest: PathBuf,
    pub runs_dir: PathBuf,
    pub run_id: String,
    pub precision: Precision,
    pub inc: IncTssdConfig,
    pub res: ResTssdConfig,
    /// Stop after this many epochs without a validation improvement; 0 never stops early.
    pub early_stop_patience: usize,
    /// Stop as soon as validation accuracy reaches this value; above 1 never stops.
    pub stop_at_val_accuracy: f64,
    pub eval_batch_size: usize,
    pub svm: SvmConfig,
    pub gmm: GmmConfig,
    pub tsne_perplexity: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelId::IncTssd,
            feature: InputFeature::Rw,
            train: TrainConfig::default(),
            augment: false,
            clip_seconds: 6.0,
            num_classes: 6,
            manifest: PathBuf::from("manifest.csv"),
            runs_dir: PathBuf::from("runs"),
            run_id: "run".to_string(),
            precision: Precision::F32,
            inc: IncTssdConfig::default(),
            res: ResTssdConfig::default(),
            early_stop_patience: 0,
            stop_at_val_accuracy: 2.0,
            eval_batch_size: 16,
            svm: SvmConfig::default(),
            gmm: GmmConfig::default(),
            tsne_perplexity: 30.0,
        }
    }
}

/// Every recognised key, in snapshot order.
pub const KEYS: &[&str] = &[
    "model",
    "feature",
    "epochs",
    "batch_size",
    "lr0",
    "gamma",
    "optimizer",
    "seed",
    "augment",
    "clip_seconds",
    "num_classes",
    "manifest",
    "runs_dir",
    "run_id",
    "precision",
    "branch_channels",
    "num_blocks",
    "dilations",
    "penultimate_width",
    "stage_channels",
    "blocks_per_stage",
    "early_stop_patience",
    "stop_at_val_accuracy",
    "eval_batch_size",
    "svm_lambda",
    "svm_epochs",
    "svm_lr0",
    "svm_solver",
    "gmm_components",
    "gmm_max_iter",
    "gmm_tolerance",
    "gmm_variance_floor",
    "tsne_perplexity",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value
        .parse()
        .map_err(|_| PipelineError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>, PipelineError> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn parse_bool(key: &str, value: &str) -> Result<bool, PipelineError> {
    match value {
        "true" | "1" | "on" | "yes" => Ok(true),
        "false" | "0" | "off" | "no" => Ok(false),
        _ => Err(PipelineError::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let value = value.trim();
        match key {
            "model" => self.model = value.parse()?,
            "feature" => self.feature = value.parse()?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "lr0" => self.train.lr0 = parse(key, value)?,
            "gamma" => self.train.gamma = parse(key, value)?,
            "optimizer" => {
                self.train.optimizer = value.parse::<OptimizerKind>().map_err(|e| PipelineError::Config(e.to_string()))?
            }
            "seed" => self.train.seed = parse(key, value)?,
            "augment" => self.augment = parse_bool(key, value)?,
            "clip_seconds" => self.clip_seconds = parse(key, value)?,
            "num_classes" => self.num_classes = parse(key, value)?,
            "manifest" => self.manifest = PathBuf::from(value),
            "runs_dir" => self.runs_dir = PathBuf::from(value),
            "run_id" => self.run_id = value.to_string(),
            "precision" => self.precision = value.parse()?,
            "branch_channels" => self.inc.branch_channels = parse(key, value)?,
            "num_blocks" => self.inc.num_blocks = parse(key, value)?,
            "dilations" => self.inc.dilations = parse_list(key, value)?,
            "penultimate_width" => {
                let w = parse(key, value)?;
                self.inc.penultimate_width = w;
                self.res.penultimate_width = w;
            }
            "stage_channels" => self.res.stage_channels = parse_list(key, value)?,
            "blocks_per_stage" => self.res.blocks_per_stage = parse(key, value)?,
            "early_stop_patience" => self.early_stop_patience = parse(key, value)?,
            "stop_at_val_accuracy" => self.stop_at_val_accuracy = parse(key, value)?,
            "eval_batch_size" => self.eval_batch_size = parse(key, value)?,
            "svm_lambda" => self.svm.lambda = parse(key, value)?,
            "svm_epochs" => self.svm.epochs = parse(key, value)?,
            "svm_lr0" => self.svm.lr0 = parse(key, value)?,
            "svm_solver" => {
                self.svm.solver = match value {
                    "sgd" => SvmSolver::Sgd,
                    "sgd+dual" => SvmSolver::SgdThenDual,
                    _ => return Err(PipelineError::Config(format!("svm_solver must be sgd or sgd+dual, got {value:?}"))),
                }
            }
            "gmm_components" => self.gmm.components = parse(key, value)?,
            "gmm_max_iter" => self.gmm.max_iter = parse(key, value)?,
            "gmm_tolerance" => self.gmm.tolerance = parse(key, value)?,
            "gmm_variance_floor" => self.gmm.variance_floor = parse(key, value)?,
            "tsne_perplexity" => self.tsne_perplexity = parse(key, value)?,
            other => return Err(PipelineError::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "model" => self.model.as_str().to_string(),
            "feature" => self.feature.as_str().to_string(),
            "epochs" => self.train.epochs.to_string(),
            "batch_size" => self.train.batch_size.to_string(),
            "lr0" => self.train.lr0.to_string(),
            "gamma" => self.train.gamma.to_string(),
            "optimizer" => self.train.optimizer.to_string(),
            "seed" => self.train.seed.to_string(),
            "augment" => self.augment.to_string(),
            "clip_seconds" => self.clip_seconds.to_string(),
            "num_classes" => self.num_classes.to_string(),
            "manifest" => self.manifest.display().to_string(),
            "runs_dir" => self.runs_dir.display().to_string(),
            "run_id" => self.run_id.clone(),
            "precision" => self.precision.to_string(),
            "branch_channels" => self.inc.branch_channels.to_string(),
            "num_blocks" => self.inc.num_blocks.to_string(),
            "dilations" => join(&self.inc.dilations),
            "penultimate_width" => self.inc.penultimate_width.to_string(),
            "stage_channels" => join(&self.res.stage_channels),
            "blocks_per_stage" => self.res.blocks_per_stage.to_string(),
            "early_stop_patience" => self.early_stop_patience.to_string(),
            "stop_at_val_accuracy" => self.stop_at_val_accuracy.to_string(),
            "eval_batch_size" => self.eval_batch_size.to_string(),
            "svm_lambda" => self.svm.lambda.to_string(),
            "svm_epochs" => self.svm.epochs.to_string(),
            "svm_lr0" => self.svm.lr0.to_string(),
            "svm_solver" => match self.svm.solver {
                SvmSolver::Sgd => "sgd",
                SvmSolver::SgdThenDual => "sgd+dual",
            }
            .to_string(),
            "gmm_components" => self.gmm.components.to_string(),
            "gmm_max_iter" => self.gmm.max_iter.to_string(),
            "gmm_tolerance" => self.gmm.tolerance.to_string(),
            "gmm_variance_floor" => self.gmm.variance_floor.to_string(),
            "tsne_perplexity" => self.tsne_perplexity.to_string(),
            _ => return None,
        })
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse_text(text: &str) -> Result<Self, PipelineError> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    /// Reads a config file; relative `manifest` and `runs_dir` paths are
    /// resolved against the file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse_text(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.manifest, &mut cfg.runs_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Applies `(key, value)` overrides in order.
    pub fn apply_overrides<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<(), PipelineError> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Applies `--key value` / `--key=value` command-line flags. Dashes in
    /// the key may stand for underscores.
    pub fn apply_flags(&mut self, args: &[String]) -> Result<(), PipelineError> {
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let flag = arg
                .strip_prefix("--")
                .ok_or_else(|| PipelineError::Config(format!("expected --key value, got {arg:?}")))?;
            let (key, value) = match flag.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it
                        .next()
                        .ok_or_else(|| PipelineError::Config(format!("--{flag} needs a value")))?;
                    (flag.to_string(), v.clone())
                }
            };
            self.set(&key.replace('-', "_"), &value)?;
        }
        Ok(())
    }

    /// Every key, one `key = value` line each; parses back to `self`.
    pub fn snapshot(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).unwrap_or_default()))
            .collect()
    }

    pub fn inc_config(&self) -> IncTssdConfig {
        IncTssdConfig {
            num_classes: self.num_classes,
            ..self.inc.clone()
        }
    }

    pub fn res_config(&self) -> ResTssdConfig {
        ResTssdConfig {
            num_classes: self.num_classes,
            ..self.res.clone()
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.runs_dir.join(&self.run_id)
    }

    pub fn clip_samples(&self) -> usize {
        (self.clip_seconds * f64::from(crate::CANONICAL_SAMPLE_RATE)).round() as usize
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        match (self.model.is_network(), self.feature) {
            (true, InputFeature::Rw) | (false, InputFeature::Ms | InputFeature::Mfcc) => {}
            (true, f) => return bad(format!("{} consumes raw waveforms, not {}", self.model.as_str(), f.as_str())),
            (false, _) => return bad(format!("{} needs ms or mfcc features", self.model.as_str())),
        }
        if !(self.clip_seconds > 0.0 && self.clip_seconds.is_finite()) {
            return bad(format!("clip_seconds must be positive, got {}", self.clip_seconds));
        }
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return bad(format!("run_id must be a plain directory name, got {:?}", self.run_id));
        }
        if self.eval_batch_size == 0 {
            return bad("eval_batch_size must be at least 1".into());
        }
        self.train.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        match self.model {
            ModelId::IncTssd => {
                let c = self.inc_config();
                c.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
                if self.clip_samples() < c.min_input_len() {
                    return bad(format!("clips of {} samples are shorter than the network minimum {}", self.clip_samples(), c.min_input_len()));
                }
            }
            ModelId::ResTssd => {
                let c = self.res_config();
                c.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
                if self.clip_samples() < c.min_input_len() {
                    return bad(format!("clips of {} samples are shorter than the network minimum {}", self.clip_samples(), c.min_input_len()));
                }
            }
            ModelId::Svm | ModelId::Gmm => {
                if !(2..=crate::MAX_CLASSES).contains(&self.num_classes) {
                    return bad(format!("num_classes must be in 2..={}, got {}", crate::MAX_CLASSES, self.num_classes));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_training_schedule() {
        let c = ExperimentConfig::default();
        assert_eq!((c.train.epochs, c.train.batch_size), (200, 128));
        assert_eq!((c.train.lr0, c.train.gamma), (1e-3, 0.95));
        assert_eq!(c.clip_seconds, 6.0);
        c.validate().unwrap();
    }

    #[test]
    fn snapshot_round_trips_and_every_key_is_settable() {
        let mut c = ExperimentConfig::default();
        c.apply_overrides([("model", "res-tssd"), ("stage_channels", "8,16"), ("svm_solver", "sgd"), ("augment", "on")])
            .unwrap();
        assert_eq!(ExperimentConfig::parse_text(&c.snapshot()).unwrap(), c);
        for k in KEYS {
            let v = c.get(k).unwrap();
            c.clone().set(k, &v).unwrap();
        }
    }

    #[test]
    fn command_line_flags_override_keys() {
        let mut c = ExperimentConfig::default();
        let args: Vec<String> = ["--epochs", "7", "--batch-size=4", "--model", "res-tssd"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        c.apply_flags(&args).unwrap();
        assert_eq!((c.train.epochs, c.train.batch_size, c.model), (7, 4, ModelId::ResTssd));
        for bad in [&["epochs", "7"][..], &["--epochs"], &["--bogus", "1"]] {
            let args: Vec<String> = bad.iter().map(|s| s.to_string()).collect();
            assert_eq!(c.apply_flags(&args).unwrap_err().exit_code(), 2);
        }
    }

    #[test]
    fn comments_unknown_keys_and_incompatible_features() {
        let c = ExperimentConfig::parse_text("# desk\nepochs = 3 # short\n\nmodel=svm\nfeature=MFCC\n").unwrap();
        assert_eq!(c.train.epochs, 3);
        c.validate().unwrap();
        assert!(matches!(ExperimentConfig::parse_text("nope = 1"), Err(PipelineError::Config(_))));
        let mut bad = ExperimentConfig::default();
        bad.set("feature", "mfcc").unwrap();
        assert!(matches!(bad.validate(), Err(PipelineError::Config(_))));
        bad.set("model", "gmm").unwrap();
        bad.validate().unwrap();
        bad.set("feature", "rw").unwrap();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn relative_paths_resolve_against_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("exp.conf");
        std::fs::write(&p, "manifest = data/manifest.csv\n").unwrap();
        let c = ExperimentConfig::from_file(&p).unwrap();
        assert_eq!(c.manifest, dir.path().join("data/manifest.csv"));
        assert_eq!(c.runs_dir, dir.path().join("runs"));
    }
}
