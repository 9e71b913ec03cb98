//! Seeded parametric degradations: additive noise, synthetic reverberation
//! and a low-pass plus requantization codec stand-in.
//!
//! Every transform is a pure function of `(clip, parameters, seed)` and
//! preserves length and sample rate.

use std::fmt;
use std::path::Path;
use std::process::Command;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audio::{self, AudioClip, AudioError};
use crate::pipeline::manifest::{DatasetManifest, ManifestEntry};
use crate::seed;

/// `ln(1000)`: amplitude decays by 60 dB over one RT60.
pub const RT60_DECAY: f64 = 6.91;

pub const SNR_RANGE_DB: (f64, f64) = (5.0, 30.0);
pub const RT60_RANGE_SECONDS: (f64, f64) = (0.1, 0.7);
pub const BANDWIDTH_RANGE_HZ: (f64, f64) = (4000.0, 8000.0);
pub const BIT_DEPTHS: [u32; 3] = [8, 12, 16];

/// Taps of the codec's windowed-sinc low-pass filter.
pub const LOWPASS_TAPS: usize = 101;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("clip has zero power; SNR is undefined")]
    SilentClip,
    #[error("bandwidth {bandwidth_hz} Hz exceeds the Nyquist frequency {nyquist_hz} Hz")]
    BandwidthAboveNyquist { bandwidth_hz: f64, nyquist_hz: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed augmentation tag {0:?}")]
    BadTag(String),
    #[error("codec hook failed: {0}")]
    HookFailed(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Additive white Gaussian noise at `snr_db`, clamped to `[-1, 1]`.
///
/// The noise is rescaled by its realized power, so before clamping
/// `10 log10(P_signal / P_noise)` equals `snr_db` up to rounding. An
/// infinite `snr_db` returns the clip unchanged.
pub fn add_noise(clip: &AudioClip, snr_db: f64, seed: u64) -> Result<AudioClip, AugmentError> {
    if snr_db == f64::INFINITY {
        return Ok(clip.clone());
    }
    if !snr_db.is_finite() {
        return Err(AugmentError::InvalidParameter(format!("snr_db must be finite or +inf, got {snr_db}")));
    }
    let signal_power = clip.power();
    if signal_power == 0.0 || clip.is_empty() {
        return Err(AugmentError::SilentClip);
    }
    let mut rng = seed::rng(seed);
    let noise: Vec<f64> = (0..clip.len()).map(|_| rng.sample(StandardNormal)).collect();
    let noise_power = noise.iter().map(|n| n * n).sum::<f64>() / noise.len() as f64;
    let target = signal_power / 10f64.powf(snr_db / 10.0);
    let scale = (target / noise_power).sqrt();
    let samples = clip
        .samples
        .iter()
        .zip(&noise)
        .map(|(&s, n)| (f64::from(s) + scale * n).clamp(-1.0, 1.0) as f32)
        .collect();
    Ok(clip.with_samples(samples))
}

/// Gaussian noise under `exp(-6.91 t / rt60)`, `round(rt60 * rate)` taps,
/// scaled to unit peak. `rt60 = 0` gives a unit impulse.
pub fn room_impulse_response(rt60_seconds: f64, sample_rate: u32, seed: u64) -> Result<Vec<f64>, AugmentError> {
    if !(rt60_seconds >= 0.0 && rt60_seconds.is_finite()) {
        return Err(AugmentError::InvalidParameter(format!("rt60 must be >= 0, got {rt60_seconds}")));
    }
    let taps = ((rt60_seconds * f64::from(sample_rate)).round() as usize).max(1);
    if taps == 1 {
        return Ok(vec![1.0]);
    }
    let mut rng = seed::rng(seed);
    let rate = f64::from(sample_rate);
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let g: f64 = rng.sample(StandardNormal);
            g * (-RT60_DECAY * (i as f64 / rate) / rt60_seconds).exp()
        })
        .collect();
    let peak = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    h.iter_mut().for_each(|v| *v /= peak);
    Ok(h)
}

/// Linear convolution truncated to `x.len()` samples, computed by FFT.
fn convolve_truncated(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = (x.len() + h.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |v: &[f64]| {
        let mut buf: Vec<Complex<f64>> = v.iter().map(|&r| Complex::new(r, 0.0)).collect();
        buf.resize(n, Complex::new(0.0, 0.0));
        buf
    };
    let mut a = pad(x);
    let mut b = pad(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    a[..x.len()].iter().map(|c| c.re / n as f64).collect()
}

/// Convolves with [`room_impulse_response`] and rescales to the input peak.
pub fn add_reverb(clip: &AudioClip, rt60_seconds: f64, seed: u64) -> Result<AudioClip, AugmentError> {
    let h = room_impulse_response(rt60_seconds, clip.sample_rate, seed)?;
    if h.len() == 1 || clip.is_empty() {
        return Ok(clip.clone());
    }
    let x: Vec<f64> = clip.samples.iter().map(|&s| f64::from(s)).collect();
    let y = convolve_truncated(&x, &h);
    let in_peak = f64::from(clip.peak());
    let out_peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if out_peak > 0.0 { in_peak / out_peak } else { 0.0 };
    Ok(clip.with_samples(y.iter().map(|v| (v * gain) as f32).collect()))
}

/// Blackman-windowed sinc low-pass with unit DC gain; `cutoff` is a fraction
/// of the sample rate.
pub fn lowpass_kernel(cutoff: f64, taps: usize) -> Vec<f64> {
    use std::f64::consts::PI;
    let mid = (taps / 2) as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let t = i as f64 - mid;
            let sinc = if t == 0.0 { 2.0 * cutoff } else { (2.0 * PI * cutoff * t).sin() / (PI * t) };
            let a = 2.0 * PI * i as f64 / (taps - 1) as f64;
            sinc * (0.42 - 0.5 * a.cos() + 0.08 * (2.0 * a).cos())
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Rounds to a `bit_depth`-bit signed grid over `[-1, 1)`.
pub fn requantize(x: f64, bit_depth: u32) -> f64 {
    let half = f64::from(1u32 << (bit_depth - 1));
    ((x * half).round().clamp(-half, half - 1.0)) / half
}

/// Low-pass at `bandwidth_hz` (skipped at exactly Nyquist) followed by
/// requantization to `bit_depth` bits.
pub fn simulate_codec(clip: &AudioClip, bandwidth_hz: f64, bit_depth: u32) -> Result<AudioClip, AugmentError> {
    let nyquist = f64::from(clip.sample_rate) / 2.0;
    if bandwidth_hz > nyquist {
        return Err(AugmentError::BandwidthAboveNyquist {
            bandwidth_hz,
            nyquist_hz: nyquist,
        });
    }
    if !(bandwidth_hz > 0.0) {
        return Err(AugmentError::InvalidParameter(format!("bandwidth must be positive, got {bandwidth_hz}")));
    }
    if !(2..=16).contains(&bit_depth) {
        return Err(AugmentError::InvalidParameter(format!("bit depth must be in 2..=16, got {bit_depth}")));
    }
    let x: Vec<f64> = clip.samples.iter().map(|&s| f64::from(s)).collect();
    let filtered = if bandwidth_hz < nyquist {
        let h = lowpass_kernel(bandwidth_hz / f64::from(clip.sample_rate), LOWPASS_TAPS);
        let half = LOWPASS_TAPS / 2;
        // zero-phase: drop the filter's group delay
        (0..x.len())
            .map(|i| {
                h.iter()
                    .enumerate()
                    .filter_map(|(k, &hk)| (i + half).checked_sub(k).and_then(|j| x.get(j)).map(|v| hk * v))
                    .sum()
            })
            .collect()
    } else {
        x
    };
    Ok(clip.with_samples(filtered.iter().map(|&v| requantize(v, bit_depth) as f32).collect()))
}

/// External encoder/decoder pair with `{in}` and `{out}` placeholders, run
/// through `sh -c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodecHook {
    pub encode: String,
    pub decode: String,
}

impl CodecHook {
    fn run(template: &str, input: &Path, output: &Path) -> Result<(), AugmentError> {
        let cmd = template
            .replace("{in}", &input.display().to_string())
            .replace("{out}", &output.display().to_string());
        let status = Command::new("sh").arg("-c").arg(&cmd).status()?;
        if !status.success() {
            return Err(AugmentError::HookFailed(format!("`{cmd}` exited with {status}")));
        }
        Ok(())
    }

    /// Round-trips the clip through the external codec; the result is
    /// resampled and trimmed or tiled back to the input's shape.
    pub fn apply(&self, clip: &AudioClip) -> Result<AudioClip, AugmentError> {
        let dir = tempfile::tempdir()?;
        let wav_in = dir.path().join("in.wav");
        let encoded = dir.path().join("encoded");
        let wav_out = dir.path().join("out.wav");
        audio::write_wav(clip, &wav_in)?;
        Self::run(&self.encode, &wav_in, &encoded)?;
        Self::run(&self.decode, &encoded, &wav_out)?;
        let decoded = audio::resample(&audio::load_wav(&wav_out)?, clip.sample_rate)?;
        Ok(clip.with_samples(audio::tile_to(&decoded.samples, clip.len())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugmentationKind {
    Noise,
    Reverb,
    Codec,
}

impl AugmentationKind {
    pub const ALL: [AugmentationKind; 3] = [AugmentationKind::Noise, AugmentationKind::Reverb, AugmentationKind::Codec];

    pub fn as_str(self) -> &'static str {
        match self {
            AugmentationKind::Noise => "noise",
            AugmentationKind::Reverb => "reverb",
            AugmentationKind::Codec => "codec",
        }
    }
}

impl FromStr for AugmentationKind {
    type Err = AugmentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "noise" => Ok(AugmentationKind::Noise),
            "reverb" => Ok(AugmentationKind::Reverb),
            "codec" => Ok(AugmentationKind::Codec),
            other => Err(AugmentError::InvalidParameter(format!("unknown augmentation {other:?}"))),
        }
    }
}

/// A fully parameterized transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Augmentation {
    Noise { snr_db: f64 },
    Reverb { rt60_seconds: f64 },
    Codec { bandwidth_hz: f64, bit_depth: u32 },
}

impl Augmentation {
    pub fn kind(&self) -> AugmentationKind {
        match self {
            Augmentation::Noise { .. } => AugmentationKind::Noise,
            Augmentation::Reverb { .. } => AugmentationKind::Reverb,
            Augmentation::Codec { .. } => AugmentationKind::Codec,
        }
    }

    /// Applies the transform. A codec hook, when given, replaces the
    /// built-in codec simulation.
    pub fn apply(&self, clip: &AudioClip, seed: u64, hook: Option<&CodecHook>) -> Result<AudioClip, AugmentError> {
        match *self {
            Augmentation::Noise { snr_db } => add_noise(clip, snr_db, seed),
            Augmentation::Reverb { rt60_seconds } => add_reverb(clip, rt60_seconds, seed),
            Augmentation::Codec { bandwidth_hz, bit_depth } => match hook {
                Some(h) => h.apply(clip),
                None => simulate_codec(clip, bandwidth_hz, bit_depth),
            },
        }
    }
}

impl fmt::Display for Augmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Augmentation::Noise { snr_db } => write!(f, "noise;snr_db={snr_db}"),
            Augmentation::Reverb { rt60_seconds } => write!(f, "reverb;rt60_seconds={rt60_seconds}"),
            Augmentation::Codec { bandwidth_hz, bit_depth } => {
                write!(f, "codec;bandwidth_hz={bandwidth_hz};bit_depth={bit_depth}")
            }
        }
    }
}

/// Manifest-level recipe for one augmented copy per clip. Parameters left
/// as `None` are drawn per clip from the default ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationSpec {
    pub kind: AugmentationKind,
    pub snr_db: Option<f64>,
    pub rt60_seconds: Option<f64>,
    pub bandwidth_hz: Option<f64>,
    pub bit_depth: Option<u32>,
    pub seed: u64,
}

impl AugmentationSpec {
    pub fn sampled(kind: AugmentationKind, seed: u64) -> Self {
        Self {
            kind,
            snr_db: None,
            rt60_seconds: None,
            bandwidth_hz: None,
            bit_depth: None,
            seed,
        }
    }

    pub fn fixed(aug: Augmentation, seed: u64) -> Self {
        let mut spec = Self::sampled(aug.kind(), seed);
        match aug {
            Augmentation::Noise { snr_db } => spec.snr_db = Some(snr_db),
            Augmentation::Reverb { rt60_seconds } => spec.rt60_seconds = Some(rt60_seconds),
            Augmentation::Codec { bandwidth_hz, bit_depth } => {
                spec.bandwidth_hz = Some(bandwidth_hz);
                spec.bit_depth = Some(bit_depth);
            }
        }
        spec
    }

    /// Concrete parameters for one clip; only the active kind's fields are
    /// consulted.
    pub fn resolve(&self, clip_seed: u64) -> Augmentation {
        let mut rng = seed::rng(seed::derive_seed(clip_seed, "params", 0));
        let mut draw = |(lo, hi): (f64, f64)| rng.random_range(lo..hi);
        match self.kind {
            AugmentationKind::Noise => Augmentation::Noise {
                snr_db: self.snr_db.unwrap_or_else(|| draw(SNR_RANGE_DB)),
            },
            AugmentationKind::Reverb => Augmentation::Reverb {
                rt60_seconds: self.rt60_seconds.unwrap_or_else(|| draw(RT60_RANGE_SECONDS)),
            },
            AugmentationKind::Codec => {
                let bandwidth_hz = self.bandwidth_hz.unwrap_or_else(|| draw(BANDWIDTH_RANGE_HZ));
                let bit_depth = self
                    .bit_depth
                    .unwrap_or_else(|| BIT_DEPTHS[(draw((0.0, 3.0)) as usize).min(2)]);
                Augmentation::Codec { bandwidth_hz, bit_depth }
            }
        }
    }
}

/// One randomly parameterized spec of each kind, seeded from `master`.
pub fn default_specs(master: u64) -> Vec<AugmentationSpec> {
    AugmentationKind::ALL
        .iter()
        .map(|&k| AugmentationSpec::sampled(k, seed::sub_seed(master, k.as_str())))
        .collect()
}

/// Provenance of an augmented manifest entry:
/// `kind;param=value;...;seed=N;src=relative/path`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugTag {
    pub augmentation: Augmentation,
    pub seed: u64,
    pub source: String,
}

impl fmt::Display for AugTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{};seed={};src={}", self.augmentation, self.seed, self.source)
    }
}

impl FromStr for AugTag {
    type Err = AugmentError;

    fn from_str(tag: &str) -> Result<Self, Self::Err> {
        let bad = || AugmentError::BadTag(tag.to_string());
        let (head, source) = tag.split_once(";src=").ok_or_else(bad)?;
        let mut parts = head.split(';');
        let kind: AugmentationKind = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let mut fields = std::collections::HashMap::new();
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(bad)?;
            fields.insert(k, v);
        }
        let num = |k: &str| -> Result<f64, AugmentError> { fields.get(k).ok_or_else(bad)?.parse().map_err(|_| bad()) };
        let augmentation = match kind {
            AugmentationKind::Noise => Augmentation::Noise { snr_db: num("snr_db")? },
            AugmentationKind::Reverb => Augmentation::Reverb {
                rt60_seconds: num("rt60_seconds")?,
            },
            AugmentationKind::Codec => Augmentation::Codec {
                bandwidth_hz: num("bandwidth_hz")?,
                bit_depth: fields.get("bit_depth").ok_or_else(bad)?.parse().map_err(|_| bad())?,
            },
        };
        Ok(Self {
            augmentation,
            seed: fields.get("seed").ok_or_else(bad)?.parse().map_err(|_| bad())?,
            source: source.to_string(),
        })
    }
}

/// Path given to the `index`-th augmented copy of `source`.
pub fn augmented_path(source: &str, index: usize) -> String {
    format!("aug{index}/{source}")
}

/// Keeps every entry and appends one augmented copy of each original entry
/// for each entry of `specs`. Copies inherit label and split; their seeds come from
/// `(spec.seed, source path, spec index)`.
pub fn expand_with_augmentations(manifest: &DatasetManifest, specs: &[AugmentationSpec]) -> DatasetManifest {
    let mut out = manifest.clone();
    for e in manifest.entries.iter().filter(|e| !e.is_augmented()) {
        for (i, spec) in specs.iter().enumerate() {
            let clip_seed = seed::derive_seed(spec.seed, &e.relative_path, i as u64);
            let tag = AugTag {
                augmentation: spec.resolve(clip_seed),
                seed: clip_seed,
                source: e.relative_path.clone(),
            };
            out.entries.push(ManifestEntry {
                relative_path: augmented_path(&e.relative_path, i),
                label: e.label,
                split: e.split,
                aug_tag: tag.to_string(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::manifest::Split;
    use synthattr_testkit::dsp::direct_dft_power;
    use synthattr_testkit::samplers::uniform;

    fn sine(freq: f64, n: usize, amp: f64) -> AudioClip {
        AudioClip::new(
            (0..n)
                .map(|i| (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin()) as f32)
                .collect(),
            16_000,
        )
    }

    fn measured_snr(clean: &AudioClip, noisy: &AudioClip) -> f64 {
        let noise: f64 = clean
            .samples
            .iter()
            .zip(&noisy.samples)
            .map(|(&a, &b)| (f64::from(b) - f64::from(a)).powi(2))
            .sum::<f64>()
            / clean.len() as f64;
        10.0 * (clean.power() / noise).log10()
    }

    #[test]
    fn infinite_snr_passes_through() {
        let c = sine(440.0, 1000, 0.5);
        assert_eq!(add_noise(&c, f64::INFINITY, 1).unwrap(), c);
    }

    #[test]
    fn noise_power_matches_snr_definition() {
        // unit-power square wave keeps the check independent of clamping
        let c = AudioClip::new((0..96_000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect(), 16_000);
        let quiet = c.with_samples(c.samples.iter().map(|s| s * 0.5).collect());
        let out = add_noise(&quiet, 10.0, 3).unwrap();
        let injected: f64 = quiet
            .samples
            .iter()
            .zip(&out.samples)
            .map(|(&a, &b)| (f64::from(b) - f64::from(a)).powi(2))
            .sum::<f64>()
            / 96_000.0;
        let expected = quiet.power() / 10.0;
        assert!((injected / expected - 1.0).abs() < 0.05, "{injected} vs {expected}");
        assert!((measured_snr(&quiet, &out) - 10.0).abs() < 0.5);
    }

    #[test]
    fn noise_is_seed_deterministic_and_rejects_silence() {
        let c = sine(300.0, 4000, 0.3);
        assert_eq!(add_noise(&c, 5.0, 9).unwrap(), add_noise(&c, 5.0, 9).unwrap());
        assert_ne!(add_noise(&c, 5.0, 9).unwrap(), add_noise(&c, 5.0, 10).unwrap());
        let silent = AudioClip::new(vec![0.0; 100], 16_000);
        assert!(matches!(add_noise(&silent, 5.0, 1), Err(AugmentError::SilentClip)));
    }

    #[test]
    fn zero_rt60_is_identity() {
        let c = sine(200.0, 3000, 0.4);
        assert_eq!(add_reverb(&c, 0.0, 4).unwrap(), c);
        assert!(add_reverb(&c, -0.1, 4).is_err());
    }

    #[test]
    fn impulse_input_returns_the_impulse_response() {
        let mut x = vec![0.0f32; 8000];
        x[0] = 1.0;
        let c = AudioClip::new(x, 16_000);
        let out = add_reverb(&c, 0.3, 12).unwrap();
        let h = room_impulse_response(0.3, 16_000, 12).unwrap();
        assert_eq!(h.len(), 4800);
        for (i, &v) in out.samples.iter().enumerate() {
            let expected = h.get(i).copied().unwrap_or(0.0);
            assert!((f64::from(v) - expected).abs() < 1e-6, "sample {i}");
        }
    }

    #[test]
    fn rir_decays_sixty_db_per_rt60() {
        let rt60 = 0.5;
        let h = room_impulse_response(rt60, 16_000, 8).unwrap();
        // least-squares slope of log energy in 20 ms windows
        let win = 320;
        let pts: Vec<(f64, f64)> = h
            .chunks_exact(win)
            .enumerate()
            .map(|(i, c)| {
                let t = (i as f64 + 0.5) * win as f64 / 16_000.0;
                let e = c.iter().map(|v| v * v).sum::<f64>() / win as f64;
                (t, 10.0 * e.log10())
            })
            .collect();
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let me = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let slope = pts.iter().map(|p| (p.0 - mt) * (p.1 - me)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
        assert!((slope * rt60 + 60.0).abs() < 1.0, "decay over rt60: {} dB", slope * rt60);
    }

    #[test]
    fn reverb_preserves_peak_length_and_rate() {
        let c = AudioClip::new(uniform(5000, -0.6, 0.6, 2).iter().map(|&v| v as f32).collect(), 16_000);
        let out = add_reverb(&c, 0.2, 5).unwrap();
        assert_eq!(out.len(), c.len());
        assert_eq!(out.sample_rate, c.sample_rate);
        assert!((out.peak() - c.peak()).abs() < 1e-6);
    }

    #[test]
    fn codec_at_nyquist_and_16_bits_is_near_identity() {
        let c = AudioClip::new(uniform(2000, -0.99, 0.99, 6).iter().map(|&v| v as f32).collect(), 16_000);
        let out = simulate_codec(&c, 8000.0, 16).unwrap();
        let step = 1.0 / 32768.0;
        for (a, b) in c.samples.iter().zip(&out.samples) {
            assert!((a - b).abs() <= step);
        }
    }

    #[test]
    fn codec_suppresses_stopband_sine() {
        let c = sine(7000.0, 8000, 0.8);
        let out = simulate_codec(&c, 4000.0, 16).unwrap();
        // DFT over an interior window away from the zero-padded edges
        let frame = |clip: &AudioClip| -> f64 {
            let x: Vec<f64> = clip.samples[2000..2512].iter().map(|&s| f64::from(s)).collect();
            direct_dft_power(&x).iter().sum()
        };
        assert!(frame(&out) < 0.01 * frame(&c));
    }

    #[test]
    fn two_bit_codec_has_four_levels() {
        let ramp = AudioClip::new((0..1000).map(|i| -1.0 + 2.0 * i as f32 / 999.0).collect(), 16_000);
        let out = simulate_codec(&ramp, 8000.0, 2).unwrap();
        let mut levels: Vec<i32> = out.samples.iter().map(|v| (v * 1000.0).round() as i32).collect();
        levels.sort_unstable();
        levels.dedup();
        assert!(levels.len() <= 4, "{levels:?}");
    }

    #[test]
    fn codec_parameter_errors() {
        let c = sine(100.0, 500, 0.5);
        assert!(matches!(
            simulate_codec(&c, 9000.0, 8),
            Err(AugmentError::BandwidthAboveNyquist { .. })
        ));
        assert!(simulate_codec(&c, 4000.0, 1).is_err());
        assert!(simulate_codec(&c, 4000.0, 17).is_err());
        assert!(simulate_codec(&c, 0.0, 8).is_err());
    }

    #[test]
    fn codec_hook_round_trips_through_commands() {
        let hook = CodecHook {
            encode: "cp {in} {out}".into(),
            decode: "cp {in} {out}".into(),
        };
        let c = sine(300.0, 1600, 0.5);
        let out = hook.apply(&c).unwrap();
        for (a, b) in c.samples.iter().zip(&out.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
        let broken = CodecHook {
            encode: "false".into(),
            decode: "true".into(),
        };
        assert!(matches!(broken.apply(&c), Err(AugmentError::HookFailed(_))));
    }

    #[test]
    fn tags_round_trip() {
        for aug in [
            Augmentation::Noise { snr_db: 12.345678901 },
            Augmentation::Reverb { rt60_seconds: 0.1 },
            Augmentation::Codec {
                bandwidth_hz: 4321.5,
                bit_depth: 12,
            },
        ] {
            let tag = AugTag {
                augmentation: aug,
                seed: u64::MAX,
                source: "class1/a;b.wav".into(),
            };
            assert_eq!(tag.to_string().parse::<AugTag>().unwrap(), tag);
        }
        assert!("noise;seed=1".parse::<AugTag>().is_err());
    }

    #[test]
    fn sampled_parameters_stay_in_default_ranges() {
        for s in 0..200 {
            for spec in default_specs(s) {
                match spec.resolve(s) {
                    Augmentation::Noise { snr_db } => assert!((5.0..30.0).contains(&snr_db)),
                    Augmentation::Reverb { rt60_seconds } => assert!((0.1..0.7).contains(&rt60_seconds)),
                    Augmentation::Codec { bandwidth_hz, bit_depth } => {
                        assert!((4000.0..8000.0).contains(&bandwidth_hz));
                        assert!(BIT_DEPTHS.contains(&bit_depth));
                    }
                }
            }
        }
    }

    #[test]
    fn expansion_counts_labels_splits_and_tags() {
        let mut m = DatasetManifest::new("/tmp", 0);
        assert!(expand_with_augmentations(&m, &default_specs(1)).is_empty());
        let mut e = ManifestEntry::new("c2/x.wav", Some(2));
        e.split = Some(Split::Val);
        m.entries.push(e);
        let one = expand_with_augmentations(&m, &default_specs(1)[..1]);
        assert_eq!(one.len(), 2);
        let aug = &one.entries[1];
        assert_eq!((aug.label, aug.split), (Some(2), Some(Split::Val)));
        let tag: AugTag = aug.aug_tag.parse().unwrap();
        assert_eq!(tag.source, "c2/x.wav");
        assert_eq!(expand_with_augmentations(&m, &default_specs(1)).len(), 4);
        assert_eq!(one, expand_with_augmentations(&m, &default_specs(1)[..1]));
    }
}
