use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use synthattr::analysis::TsneConfig;
use synthattr::audio;
use synthattr::augment::{default_specs, expand_with_augmentations};
use synthattr::features::{self, FeatureConfig};
use synthattr::pipeline::config::ExperimentConfig;
use synthattr::pipeline::data::load_entry;
use synthattr::pipeline::fixture::{generate_fixture_corpus, FixtureSpec};
use synthattr::pipeline::manifest::{DatasetManifest, Split};
use synthattr::pipeline::metrics::format_accuracy;
use synthattr::pipeline::split::stratified_split;
use synthattr::pipeline::train::{embed_split, evaluate_to_dir, predict_unlabeled, train_model, Checkpoint};
use synthattr::pipeline::PipelineError;

#[derive(Parser)]
#[command(name = "synthattr", version, about = "Synthetic speech attribution toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus with a manifest.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 6)]
        classes: usize,
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        #[arg(long, default_value_t = 0)]
        unlabeled: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fixed clip duration in seconds instead of the per-class spread.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Assign train/val/test splits, stratified per class.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        /// Output manifest; defaults to rewriting the input in place.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.72, 0.08, 0.20])]
        fractions: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Append noise, reverb and codec copies of every original clip.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the augmented WAV files next to the originals.
        #[arg(long)]
        materialize: bool,
    },
    /// Dump per-clip feature matrices.
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = FeatureArg::Mfcc)]
        kind: FeatureArg,
        #[arg(long, value_enum, default_value_t = DumpFormat::Bin)]
        format: DumpFormat,
        #[arg(long, default_value_t = 6.0)]
        clip_seconds: f64,
    },
    /// Train a model. Any config key can be overridden with `--key value`.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Accuracy and confusion matrix on a split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Output directory; defaults to the checkpoint's run directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
    },
    /// Embeddings of a split plus a t-SNE map.
    Embed {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
    },
    /// Predict labels for the eval split.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureArg {
    Stft,
    Mel,
    LogMel,
    Mfcc,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum DumpFormat {
    Csv,
    Bin,
    Both,
}

fn run_dir_of(checkpoint: &Path) -> PathBuf {
    checkpoint.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Fixture {
            out,
            classes,
            per_class,
            unlabeled,
            seed,
            duration,
        } => {
            let mut spec = FixtureSpec::new(classes, per_class, seed);
            spec.unlabeled = unlabeled;
            if let Some(d) = duration {
                spec.durations = vec![(d, 0.0); classes];
            }
            let m = generate_fixture_corpus(&spec, &out)?;
            println!("wrote {} clips to {}", m.len(), out.display());
        }
        Command::Split {
            manifest,
            out,
            fractions,
            seed,
        } => {
            let [f_train, f_val, f_test] = fractions[..] else {
                return Err(PipelineError::Config("--fractions takes train,val,test".into()));
            };
            let m = DatasetManifest::read_csv(&manifest)?;
            let split = stratified_split(&m, (f_train, f_val, f_test), seed)?;
            split.write_csv(out.as_ref().unwrap_or(&manifest))?;
            for s in Split::LABELED {
                println!("{s}: {}", split.count(s));
            }
        }
        Command::Augment {
            manifest,
            out,
            seed,
            materialize,
        } => {
            let m = DatasetManifest::read_csv(&manifest)?;
            let expanded = expand_with_augmentations(&m, &default_specs(seed));
            if materialize {
                expanded
                    .entries
                    .par_iter()
                    .filter(|e| e.is_augmented())
                    .try_for_each(|e| -> Result<(), PipelineError> {
                        let clip = load_entry(&expanded, e, None)?;
                        let path = expanded.path_of(e);
                        if let Some(dir) = path.parent() {
                            std::fs::create_dir_all(dir)?;
                        }
                        Ok(audio::write_wav(&clip, path)?)
                    })?;
            }
            expanded.write_csv(out.as_ref().unwrap_or(&manifest))?;
            println!("{} entries ({} augmented)", expanded.len(), expanded.len() - m.len());
        }
        Command::Features {
            manifest,
            out,
            kind,
            format,
            clip_seconds,
        } => {
            let m = DatasetManifest::read_csv(&manifest)?;
            let cfg = FeatureConfig::default();
            m.entries.par_iter().try_for_each(|e| -> Result<(), PipelineError> {
                let clip = audio::normalize_length(&load_entry(&m, e, None)?, clip_seconds)?;
                let power = features::stft_power(&clip, cfg.frame_length, cfg.hop_length)?;
                let feat = match kind {
                    FeatureArg::Stft => power,
                    FeatureArg::Mel => features::mel_spectrogram(&power, cfg.n_mels, cfg.f_min, cfg.f_max)?,
                    FeatureArg::LogMel => {
                        features::log_mel(&features::mel_spectrogram(&power, cfg.n_mels, cfg.f_min, cfg.f_max)?)
                    }
                    FeatureArg::Mfcc => features::mfcc_with(&clip, &cfg)?,
                };
                let stem = out.join(&e.relative_path).with_extension("");
                if let Some(dir) = stem.parent() {
                    std::fs::create_dir_all(dir)?;
                }
                if format != DumpFormat::Bin {
                    feat.write_csv(stem.with_extension("csv"))?;
                }
                if format != DumpFormat::Csv {
                    feat.write_binary(stem.with_extension("bin"))?;
                }
                Ok(())
            })?;
            println!("wrote features for {} clips to {}", m.len(), out.display());
        }
        Command::Train { config, overrides } => {
            let mut cfg = match &config {
                Some(p) => ExperimentConfig::from_file(p)?,
                None => ExperimentConfig::default(),
            };
            cfg.apply_flags(&overrides)?;
            let manifest = DatasetManifest::read_csv(&cfg.manifest)?;
            let outcome = train_model(&cfg, &manifest)?;
            println!(
                "best val accuracy {} at epoch {}; checkpoint {}",
                format_accuracy(outcome.best_val_acc),
                outcome.best_epoch,
                outcome.checkpoint.display()
            );
        }
        Command::Evaluate {
            checkpoint,
            manifest,
            split,
            out,
            batch_size,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let m = DatasetManifest::read_csv(&manifest)?;
            let out = out.unwrap_or_else(|| run_dir_of(&checkpoint));
            let r = evaluate_to_dir(&ck, &m, split, batch_size, &out)?;
            println!("{split} accuracy {}", format_accuracy(r.accuracy));
        }
        Command::Embed {
            checkpoint,
            manifest,
            split,
            out,
            perplexity,
            iterations,
            seed,
            batch_size,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let m = DatasetManifest::read_csv(&manifest)?;
            let out = out.unwrap_or_else(|| run_dir_of(&checkpoint));
            let tsne = TsneConfig {
                perplexity,
                iterations,
                seed,
                ..TsneConfig::default()
            };
            let (set, map) = embed_split(&ck, &m, split, &tsne, batch_size, &out)?;
            println!(
                "embedded {} clips; final KL {:.4}",
                set.vectors.len(),
                map.kl_history.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Predict {
            checkpoint,
            manifest,
            out,
            batch_size,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let m = DatasetManifest::read_csv(&manifest)?;
            let failed = predict_unlabeled(&ck, &m, &out, batch_size)?;
            if failed > 0 {
                eprintln!("{failed} clips could not be read");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
