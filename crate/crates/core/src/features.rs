//! STFT power, mel spectrogram and MFCC extraction.
//!
//! All matrices are row-major `frames x coefficients` in `f64`. Framing uses
//! no padding: a clip of `n` samples yields `1 + (n - frame) / hop` frames.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, OnceLock, RwLock};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::audio::AudioClip;

/// Floor added before the logarithm so silence maps to a finite value.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("clip has {len} samples, shorter than the {frame}-sample frame")]
    ClipTooShort { len: usize, frame: usize },
    #[error("bad mel band edges: {0}")]
    BadBandEdges(String),
    #[error("need at least 2 frames for pooling, got {0}")]
    TooFewFrames(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("expected a {expected} matrix, got {got}")]
    KindMismatch { expected: FeatureKind, got: FeatureKind },
    #[error("malformed feature file: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    StftPower,
    MelSpectrogram,
    LogMel,
    Mfcc,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::StftPower => "stft_power",
            FeatureKind::MelSpectrogram => "mel_spectrogram",
            FeatureKind::LogMel => "log_mel",
            FeatureKind::Mfcc => "mfcc",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stft_power" => Ok(FeatureKind::StftPower),
            "mel_spectrogram" => Ok(FeatureKind::MelSpectrogram),
            "log_mel" => Ok(FeatureKind::LogMel),
            "mfcc" => Ok(FeatureKind::Mfcc),
            other => Err(FeatureError::InvalidParameter(format!("unknown feature kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Hann,
    /// Only meant for bin-exact comparisons.
    Rectangular,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Vec<f64>,
    frames: usize,
    coeffs: usize,
    pub kind: FeatureKind,
    pub frame_length: usize,
    pub hop_length: usize,
    pub sample_rate: u32,
}

impl FeatureMatrix {
    pub fn new(
        kind: FeatureKind,
        values: Vec<f64>,
        frames: usize,
        coeffs: usize,
        frame_length: usize,
        hop_length: usize,
        sample_rate: u32,
    ) -> Result<Self, FeatureError> {
        if values.len() != frames * coeffs {
            return Err(FeatureError::InvalidParameter(format!(
                "{} values for a {frames}x{coeffs} matrix",
                values.len()
            )));
        }
        Ok(Self {
            values,
            frames,
            coeffs,
            kind,
            frame_length,
            hop_length,
            sample_rate,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn coeffs(&self) -> usize {
        self.coeffs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * self.coeffs..(i + 1) * self.coeffs]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.coeffs.max(1))
    }

    fn header(&self) -> String {
        format!(
            "kind={} frames={} coeffs={} frame_length={} hop_length={} sample_rate={}",
            self.kind, self.frames, self.coeffs, self.frame_length, self.hop_length, self.sample_rate
        )
    }

    fn from_header(line: &str, values: Vec<f64>) -> Result<Self, FeatureError> {
        let fields: HashMap<&str, &str> = line.split_whitespace().filter_map(|kv| kv.split_once('=')).collect();
        let get = |k: &str| -> Result<&str, FeatureError> {
            fields.get(k).copied().ok_or_else(|| FeatureError::Format(format!("missing {k}")))
        };
        let num = |k: &str| -> Result<usize, FeatureError> {
            get(k)?.parse().map_err(|_| FeatureError::Format(format!("bad {k}")))
        };
        Self::new(
            get("kind")?.parse()?,
            values,
            num("frames")?,
            num("coeffs")?,
            num("frame_length")?,
            num("hop_length")?,
            num("sample_rate")? as u32,
        )
    }

    /// Header line followed by one comma-separated row per frame.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), FeatureError> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "# {}", self.header())?;
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self, FeatureError> {
        let mut lines = BufReader::new(File::open(path)?).lines();
        let header = lines.next().ok_or_else(|| FeatureError::Format("empty file".into()))??;
        let header = header
            .strip_prefix("# ")
            .ok_or_else(|| FeatureError::Format("missing header".into()))?
            .to_string();
        let mut values = Vec::new();
        for line in lines {
            for v in line?.split(',') {
                values.push(v.trim().parse().map_err(|_| FeatureError::Format(format!("bad value {v:?}")))?);
            }
        }
        Self::from_header(&header, values)
    }

    /// Magic, header length, header text, then `f64` little-endian values.
    pub fn write_binary(&self, path: impl AsRef<Path>) -> Result<(), FeatureError> {
        let mut w = BufWriter::new(File::create(path)?);
        let header = self.header();
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(header.as_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: impl AsRef<Path>) -> Result<Self, FeatureError> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        let rest = bytes
            .strip_prefix(BINARY_MAGIC)
            .ok_or_else(|| FeatureError::Format("bad magic".into()))?;
        if rest.len() < 4 {
            return Err(FeatureError::Format("truncated header".into()));
        }
        let hlen = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
        let rest = &rest[4..];
        if rest.len() < hlen || (rest.len() - hlen) % 8 != 0 {
            return Err(FeatureError::Format("truncated payload".into()));
        }
        let header = std::str::from_utf8(&rest[..hlen]).map_err(|_| FeatureError::Format("header not utf-8".into()))?;
        let values = rest[hlen..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_header(header, values)
    }
}

const BINARY_MAGIC: &[u8; 8] = b"SAFEAT01";

/// Framing and filterbank settings.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub frame_length: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub n_mfcc: usize,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for FeatureConfig {
    /// 25 ms frames, 10 ms hop at 16 kHz; 64 mels over 20 Hz to 8 kHz.
    fn default() -> Self {
        Self {
            frame_length: 400,
            hop_length: 160,
            n_mels: 64,
            n_mfcc: 20,
            f_min: 20.0,
            f_max: 8000.0,
        }
    }
}

pub fn frame_count(num_samples: usize, frame_length: usize, hop_length: usize) -> usize {
    if num_samples < frame_length {
        0
    } else {
        1 + (num_samples - frame_length) / hop_length
    }
}

/// Hann-windowed short-time power spectrum, `frame_length / 2 + 1` bins.
pub fn stft_power(clip: &AudioClip, frame_length: usize, hop_length: usize) -> Result<FeatureMatrix, FeatureError> {
    stft_power_windowed(clip, frame_length, hop_length, Window::Hann)
}

pub fn stft_power_windowed(
    clip: &AudioClip,
    frame_length: usize,
    hop_length: usize,
    window: Window,
) -> Result<FeatureMatrix, FeatureError> {
    if frame_length == 0 || hop_length == 0 {
        return Err(FeatureError::InvalidParameter("frame and hop lengths must be positive".into()));
    }
    if clip.len() < frame_length {
        return Err(FeatureError::ClipTooShort {
            len: clip.len(),
            frame: frame_length,
        });
    }
    let frames = frame_count(clip.len(), frame_length, hop_length);
    let bins = frame_length / 2 + 1;
    let win = window.coefficients(frame_length);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame_length);
    let mut buf = vec![Complex::new(0.0, 0.0); frame_length];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut values = Vec::with_capacity(frames * bins);
    for f in 0..frames {
        let start = f * hop_length;
        for ((b, &s), &w) in buf.iter_mut().zip(&clip.samples[start..start + frame_length]).zip(&win) {
            *b = Complex::new(f64::from(s) * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        values.extend(buf[..bins].iter().map(|c| c.norm_sqr()));
    }
    FeatureMatrix::new(
        FeatureKind::StftPower,
        values,
        frames,
        bins,
        frame_length,
        hop_length,
        clip.sample_rate,
    )
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale, each scaled to unit area in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Vec<f64>,
    n_mels: usize,
    n_bins: usize,
    pub f_min: f64,
    pub f_max: f64,
}

type FilterbankKey = (u32, usize, usize, u64, u64);

fn filterbank_cache() -> &'static RwLock<HashMap<FilterbankKey, Arc<MelFilterbank>>> {
    static CACHE: OnceLock<RwLock<HashMap<FilterbankKey, Arc<MelFilterbank>>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

impl MelFilterbank {
    pub fn new(sample_rate: u32, frame_length: usize, n_mels: usize, f_min: f64, f_max: f64) -> Result<Self, FeatureError> {
        let nyquist = f64::from(sample_rate) / 2.0;
        if n_mels < 2 {
            return Err(FeatureError::BadBandEdges(format!("n_mels must be >= 2, got {n_mels}")));
        }
        if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
            return Err(FeatureError::BadBandEdges(format!(
                "need 0 <= f_min < f_max <= {nyquist}, got {f_min}..{f_max}"
            )));
        }
        let n_bins = frame_length / 2 + 1;
        let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = f64::from(sample_rate) / frame_length as f64;
        let mut weights = vec![0.0; n_mels * n_bins];
        for m in 0..n_mels {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            let height = 2.0 / (right - left);
            let row = &mut weights[m * n_bins..(m + 1) * n_bins];
            for (k, w) in row.iter_mut().enumerate() {
                let f = k as f64 * bin_hz;
                let tri = if f > left && f <= center {
                    (f - left) / (center - left)
                } else if f > center && f < right {
                    (right - f) / (right - center)
                } else {
                    0.0
                };
                *w = tri * height;
            }
            if row.iter().all(|&w| w == 0.0) {
                return Err(FeatureError::BadBandEdges(format!(
                    "mel filter {m} ({left:.1}..{right:.1} Hz) covers no FFT bin; use fewer mels or longer frames"
                )));
            }
        }
        Ok(Self {
            weights,
            n_mels,
            n_bins,
            f_min,
            f_max,
        })
    }

    /// Shared instance for repeated extraction with the same settings.
    pub fn cached(
        sample_rate: u32,
        frame_length: usize,
        n_mels: usize,
        f_min: f64,
        f_max: f64,
    ) -> Result<Arc<Self>, FeatureError> {
        let key = (sample_rate, frame_length, n_mels, f_min.to_bits(), f_max.to_bits());
        if let Some(fb) = filterbank_cache().read().expect("filterbank cache poisoned").get(&key) {
            return Ok(Arc::clone(fb));
        }
        let fb = Arc::new(Self::new(sample_rate, frame_length, n_mels, f_min, f_max)?);
        let mut cache = filterbank_cache().write().expect("filterbank cache poisoned");
        Ok(Arc::clone(cache.entry(key).or_insert(fb)))
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        (0..self.n_mels)
            .map(|m| self.row(m).iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}

pub fn mel_spectrogram(power: &FeatureMatrix, n_mels: usize, f_min: f64, f_max: f64) -> Result<FeatureMatrix, FeatureError> {
    if power.kind != FeatureKind::StftPower {
        return Err(FeatureError::KindMismatch {
            expected: FeatureKind::StftPower,
            got: power.kind,
        });
    }
    let fb = MelFilterbank::cached(power.sample_rate, power.frame_length, n_mels, f_min, f_max)?;
    if fb.n_bins() != power.coeffs() {
        return Err(FeatureError::InvalidParameter(format!(
            "power matrix has {} bins, filterbank expects {}",
            power.coeffs(),
            fb.n_bins()
        )));
    }
    let values = power.rows().flat_map(|row| fb.apply(row)).collect();
    FeatureMatrix::new(
        FeatureKind::MelSpectrogram,
        values,
        power.frames(),
        n_mels,
        power.frame_length,
        power.hop_length,
        power.sample_rate,
    )
}

/// `ln(mel + LOG_FLOOR)` elementwise.
pub fn log_mel(mel: &FeatureMatrix) -> FeatureMatrix {
    FeatureMatrix {
        values: mel.values.iter().map(|v| (v + LOG_FLOOR).ln()).collect(),
        kind: FeatureKind::LogMel,
        ..mel.clone()
    }
}

/// Orthonormal DCT-II basis, `n_out x n_in`, row-major.
pub fn dct2_matrix(n_in: usize, n_out: usize) -> Vec<f64> {
    let n = n_in as f64;
    let mut m = Vec::with_capacity(n_out * n_in);
    for k in 0..n_out {
        let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        for i in 0..n_in {
            m.push(scale * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos());
        }
    }
    m
}

/// Keeps the first `n_mfcc` orthonormal DCT-II coefficients of each log-mel
/// frame.
pub fn cepstrum(log_mel: &FeatureMatrix, n_mfcc: usize) -> Result<FeatureMatrix, FeatureError> {
    let n_mels = log_mel.coeffs();
    if n_mfcc == 0 || n_mfcc > n_mels {
        return Err(FeatureError::InvalidParameter(format!(
            "n_mfcc must be in 1..={n_mels}, got {n_mfcc}"
        )));
    }
    let basis = dct2_matrix(n_mels, n_mfcc);
    let values = log_mel
        .rows()
        .flat_map(|row| basis.chunks(n_mels).map(move |b| b.iter().zip(row).map(|(x, y)| x * y).sum::<f64>()))
        .collect();
    FeatureMatrix::new(
        FeatureKind::Mfcc,
        values,
        log_mel.frames(),
        n_mfcc,
        log_mel.frame_length,
        log_mel.hop_length,
        log_mel.sample_rate,
    )
}

/// MFCCs over 20 Hz to `min(8 kHz, Nyquist)`.
pub fn mfcc(
    clip: &AudioClip,
    n_mfcc: usize,
    n_mels: usize,
    frame_length: usize,
    hop_length: usize,
) -> Result<FeatureMatrix, FeatureError> {
    let defaults = FeatureConfig::default();
    mfcc_with(
        clip,
        &FeatureConfig {
            frame_length,
            hop_length,
            n_mels,
            n_mfcc,
            f_min: defaults.f_min,
            f_max: defaults.f_max.min(f64::from(clip.sample_rate) / 2.0),
        },
    )
}

pub fn mfcc_with(clip: &AudioClip, cfg: &FeatureConfig) -> Result<FeatureMatrix, FeatureError> {
    let power = stft_power(clip, cfg.frame_length, cfg.hop_length)?;
    let mel = mel_spectrogram(&power, cfg.n_mels, cfg.f_min, cfg.f_max)?;
    cepstrum(&log_mel(&mel), cfg.n_mfcc)
}

/// Per-coefficient means followed by population standard deviations.
pub fn mfcc_stats(feat: &FeatureMatrix) -> Result<Vec<f64>, FeatureError> {
    let (n, d) = (feat.frames(), feat.coeffs());
    if n < 2 {
        return Err(FeatureError::TooFewFrames(n));
    }
    let mut mean = vec![0.0; d];
    for row in feat.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for row in feat.rows() {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    mean.extend(var.iter().map(|s| (s / n as f64).sqrt()));
    Ok(mean)
}

/// Pooled MFCC vector (`2 * n_mfcc` long) used by the classical models.
pub fn pooled_mfcc(clip: &AudioClip, cfg: &FeatureConfig) -> Result<Vec<f64>, FeatureError> {
    mfcc_stats(&mfcc_with(clip, cfg)?)
}
