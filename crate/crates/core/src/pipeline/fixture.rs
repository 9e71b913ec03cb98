//! Synthetic stand-in corpus with class-dependent signal signatures.
//!
//! Every class is a periodic source (harmonic stack with a class-specific
//! emphasis pattern and spectral tilt) mixed with coloured noise, under a
//! syllable-rate amplitude envelope. Pitch, vibrato, envelope rate and level
//! vary per clip, so the class is carried by spectral shape rather than by
//! any single scalar.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use super::manifest::{DatasetManifest, ManifestEntry, Split};
use super::PipelineError;
use crate::audio::{self, AudioClip};
use crate::{seed, CANONICAL_SAMPLE_RATE, MAX_CLASSES};

/// Mean and standard deviation of clip duration in seconds per class; rows
/// 0-4 are the known synthesizers, row 5 the unknown pool.
pub const CLASS_DURATIONS: [(f64, f64); MAX_CLASSES] =
    [(8.26, 2.75), (6.43, 2.08), (6.36, 2.12), (8.14, 2.56), (5.62, 1.91), (6.79, 2.22)];

pub const MIN_DURATION_SECONDS: f64 = 1.0;

const WAVETABLE_LEN: usize = 4096;
const F0_RANGE: (f64, f64) = (90.0, 250.0);
const MAX_PARTIAL_HZ: f64 = 7000.0;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Emphasis {
    Flat,
    OddOnly,
    Formant(f64),
    NoThirds,
    DualFormant(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ClassProfile {
    emphasis: Emphasis,
    /// Partial `h` is scaled by `h^-tilt`.
    tilt: f64,
    /// Noise RMS relative to the periodic part.
    noise_level: f64,
    /// One-pole low-pass coefficient for the noise; larger is darker.
    noise_pole: f64,
}

const PROFILES: [ClassProfile; MAX_CLASSES] = [
    ClassProfile { emphasis: Emphasis::Flat, tilt: 1.0, noise_level: 0.04, noise_pole: 0.0 },
    ClassProfile { emphasis: Emphasis::OddOnly, tilt: 1.2, noise_level: 0.08, noise_pole: 0.5 },
    ClassProfile { emphasis: Emphasis::Formant(700.0), tilt: 0.8, noise_level: 0.25, noise_pole: 0.9 },
    ClassProfile { emphasis: Emphasis::Formant(1800.0), tilt: 1.4, noise_level: 0.04, noise_pole: 0.3 },
    ClassProfile { emphasis: Emphasis::NoThirds, tilt: 0.9, noise_level: 0.45, noise_pole: 0.0 },
    ClassProfile { emphasis: Emphasis::DualFormant(500.0, 2500.0), tilt: 1.1, noise_level: 0.12, noise_pole: 0.7 },
];

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSpec {
    pub classes: usize,
    pub per_class: usize,
    /// Extra unlabeled clips of random class placed in the eval split.
    pub unlabeled: usize,
    pub seed: u64,
    pub sample_rate: u32,
    pub durations: Vec<(f64, f64)>,
}

impl FixtureSpec {
    pub fn new(classes: usize, per_class: usize, seed: u64) -> Self {
        Self {
            classes,
            per_class,
            unlabeled: 0,
            seed,
            sample_rate: CANONICAL_SAMPLE_RATE,
            durations: CLASS_DURATIONS.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(1..=MAX_CLASSES).contains(&self.classes) {
            return Err(PipelineError::Config(format!("classes must be in 1..={MAX_CLASSES}, got {}", self.classes)));
        }
        if self.durations.len() < self.classes {
            return Err(PipelineError::Config("one duration pair per class is required".into()));
        }
        if self.durations.iter().any(|&(m, s)| !(m > 0.0 && s >= 0.0)) {
            return Err(PipelineError::Config("duration means must be positive and spreads non-negative".into()));
        }
        if self.sample_rate < 16_000 {
            return Err(PipelineError::Config("fixture sample rate must be at least 16 kHz".into()));
        }
        Ok(())
    }

    /// Clip duration in seconds, drawn from the class's normal law and
    /// floored at [`MIN_DURATION_SECONDS`].
    pub fn draw_duration(&self, class: usize, clip_seed: u64) -> f64 {
        let (mean, sd) = self.durations[class];
        let mut rng = seed::rng(seed::derive_seed(clip_seed, "duration", 0));
        let d = Normal::new(mean, sd).map_or(mean, |n| n.sample(&mut rng));
        d.max(MIN_DURATION_SECONDS)
    }

    fn clip_seed(&self, class: usize, index: usize) -> u64 {
        seed::derive_seed(self.seed, &format!("fixture/class{class}"), index as u64)
    }
}

fn partial_gain(emphasis: Emphasis, h: usize, freq: f64) -> f64 {
    match emphasis {
        Emphasis::Flat => 1.0,
        Emphasis::OddOnly => {
            if h % 2 == 1 {
                1.0
            } else {
                0.08
            }
        }
        Emphasis::Formant(centre) => 0.25 + 3.0 * (-((freq - centre) / 250.0).powi(2)).exp(),
        Emphasis::DualFormant(a, b) => {
            0.25 + 2.0 * (-((freq - a) / 200.0).powi(2)).exp() + 2.0 * (-((freq - b) / 300.0).powi(2)).exp()
        }
        Emphasis::NoThirds => {
            if h % 3 == 0 {
                0.05
            } else {
                1.0
            }
        }
    }
}

/// One period of the periodic source at fundamental `f0`.
fn wavetable(profile: &ClassProfile, f0: f64, phases: &mut impl FnMut() -> f64) -> Vec<f64> {
    let mut table = vec![0.0; WAVETABLE_LEN];
    let mut h = 1;
    while f0 * h as f64 <= MAX_PARTIAL_HZ {
        let amp = (h as f64).powf(-profile.tilt) * partial_gain(profile.emphasis, h, f0 * h as f64);
        let phase = phases();
        for (i, v) in table.iter_mut().enumerate() {
            *v += amp * (2.0 * PI * h as f64 * i as f64 / WAVETABLE_LEN as f64 + phase).sin();
        }
        h += 1;
    }
    table
}

/// Deterministic clip of `class` lasting `duration_seconds`.
pub fn synthesize_clip(class: usize, duration_seconds: f64, sample_rate: u32, clip_seed: u64) -> AudioClip {
    let profile = PROFILES[class % MAX_CLASSES];
    let mut rng = seed::rng(clip_seed);
    let sr = f64::from(sample_rate);
    let n = (duration_seconds * sr).round().max(1.0) as usize;
    let f0 = rng.random_range(F0_RANGE.0..F0_RANGE.1);
    let vibrato_rate = rng.random_range(4.0..6.5);
    let vibrato_depth = rng.random_range(0.005..0.03);
    let env_rate = rng.random_range(2.0..5.0);
    let env_phase = rng.random_range(0.0..2.0 * PI);
    let peak = rng.random_range(0.3..0.9);
    let table = wavetable(&profile, f0, &mut || rng.random_range(0.0..2.0 * PI));
    let table_rms = (table.iter().map(|v| v * v).sum::<f64>() / table.len() as f64).sqrt().max(1e-12);

    let mut out = Vec::with_capacity(n);
    let mut phase = 0.0f64;
    let mut coloured = 0.0f64;
    let fade = (0.02 * sr) as usize;
    for t in 0..n {
        let time = t as f64 / sr;
        let inst_f0 = f0 * (1.0 + vibrato_depth * (2.0 * PI * vibrato_rate * time).sin());
        phase = (phase + inst_f0 / sr).fract();
        let pos = phase * WAVETABLE_LEN as f64;
        let i0 = pos as usize % WAVETABLE_LEN;
        let frac = pos - pos.floor();
        let periodic = (table[i0] * (1.0 - frac) + table[(i0 + 1) % WAVETABLE_LEN] * frac) / table_rms;
        let white: f64 = rng.sample(StandardNormal);
        coloured = (1.0 - profile.noise_pole) * white + profile.noise_pole * coloured;
        // renormalize the low-passed noise back to unit variance
        let gain = ((1.0 + profile.noise_pole) / (1.0 - profile.noise_pole)).sqrt();
        let mut v = periodic + profile.noise_level * gain * coloured;
        v *= 0.6 + 0.4 * (2.0 * PI * env_rate * time + env_phase).sin();
        let edge = t.min(n - 1 - t);
        if edge < fade {
            v *= edge as f64 / fade as f64;
        }
        out.push(v);
    }
    let max = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let samples = out.iter().map(|v| (v / max * peak) as f32).collect();
    AudioClip::new(samples, sample_rate)
        .with_label(Some(class as u8))
        .with_source(format!("fixture/class{class}/{clip_seed}"))
}

fn clip_path(class: usize, index: usize) -> String {
    format!("class{class}/clip_{index:05}.wav")
}

/// Manifest entries and the clip recipe `(class, duration, seed)` for each,
/// without touching disk.
pub fn fixture_plan(spec: &FixtureSpec) -> Result<Vec<(ManifestEntry, usize, f64, u64)>, PipelineError> {
    spec.validate()?;
    let mut plan = Vec::with_capacity(spec.classes * spec.per_class + spec.unlabeled);
    for class in 0..spec.classes {
        for i in 0..spec.per_class {
            let s = spec.clip_seed(class, i);
            plan.push((ManifestEntry::new(clip_path(class, i), Some(class as u8)), class, spec.draw_duration(class, s), s));
        }
    }
    let mut rng = seed::rng(seed::sub_seed(spec.seed, "fixture/unlabeled"));
    for i in 0..spec.unlabeled {
        let class = rng.random_range(0..spec.classes);
        let s = seed::derive_seed(spec.seed, "fixture/unlabeled", i as u64);
        let mut e = ManifestEntry::new(format!("eval/clip_{i:05}.wav"), None);
        e.split = Some(Split::Eval);
        plan.push((e, class, spec.draw_duration(class, s), s));
    }
    Ok(plan)
}

/// Writes the corpus as PCM16 WAV files plus `manifest.csv` under
/// `out_dir` and returns the manifest (no split assigned yet).
pub fn generate_fixture_corpus(spec: &FixtureSpec, out_dir: impl AsRef<Path>) -> Result<DatasetManifest, PipelineError> {
    let out_dir = out_dir.as_ref();
    let plan = fixture_plan(spec)?;
    std::fs::create_dir_all(out_dir)?;
    plan.par_iter().try_for_each(|(entry, class, duration, s)| -> Result<(), PipelineError> {
        let path = out_dir.join(&entry.relative_path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        audio::write_wav(&synthesize_clip(*class, *duration, spec.sample_rate, *s), &path)?;
        Ok(())
    })?;
    let mut manifest = DatasetManifest::new(out_dir, spec.seed);
    manifest.entries = plan.into_iter().map(|p| p.0).collect();
    manifest.write_csv(out_dir.join("manifest.csv"))?;
    Ok(manifest)
}
