//! Audio clips: WAV I/O, resampling, and fixed-length canonicalization.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use thiserror::Error;

use crate::CANONICAL_SAMPLE_RATE;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("{0}: not a RIFF/WAVE file")]
    NotWav(String),
    #[error("{path}: unsupported encoding ({detail}); only 16-bit PCM is accepted")]
    UnsupportedEncoding { path: String, detail: String },
    #[error("{0}: WAV payload has zero frames")]
    EmptyPayload(String),
    #[error("clip is empty")]
    EmptyClip,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
}

/// A mono waveform with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    /// Class id in `0..6` when known.
    pub label: Option<u8>,
    /// Provenance, usually the manifest-relative path.
    pub source_id: String,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            label: None,
            source_id: String::new(),
        }
    }

    pub fn with_label(mut self, label: Option<u8>) -> Self {
        self.label = label;
        self
    }

    pub fn with_source(mut self, source_id: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Mean squared amplitude.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|&s| f64::from(s).powi(2)).sum::<f64>() / self.samples.len() as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    /// Copy of this clip's metadata around new samples.
    pub fn with_samples(&self, samples: Vec<f32>) -> Self {
        Self {
            samples,
            sample_rate: self.sample_rate,
            label: self.label,
            source_id: self.source_id.clone(),
        }
    }
}

fn check_riff(path: &Path) -> Result<(), AudioError> {
    let mut head = [0u8; 12];
    let mut f = File::open(path)?;
    let n = f.read(&mut head)?;
    if n < 12 || &head[0..4] != b"RIFF" || &head[8..12] != b"WAVE" {
        return Err(AudioError::NotWav(path.display().to_string()));
    }
    Ok(())
}

/// Reads a 16-bit PCM WAV file, downmixing to mono by channel mean and
/// scaling integer samples by `1/32768`.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    check_riff(path)?;
    let reader = hound::WavReader::new(BufReader::new(File::open(path)?)).map_err(|e| match e {
        hound::Error::FormatError(msg) => AudioError::NotWav(format!("{shown} ({msg})")),
        hound::Error::Unsupported => AudioError::UnsupportedEncoding {
            path: shown.clone(),
            detail: "unsupported WAV format".into(),
        },
        other => AudioError::Wav(other),
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::UnsupportedEncoding {
            path: shown,
            detail: format!("{:?} {}-bit", spec.sample_format, spec.bits_per_sample),
        });
    }
    let channels = usize::from(spec.channels.max(1));
    let raw = reader
        .into_samples::<i16>()
        .collect::<Result<Vec<i16>, _>>()?;
    let frames = raw.len() / channels;
    if frames == 0 {
        return Err(AudioError::EmptyPayload(shown));
    }
    let samples = if channels == 1 {
        raw.iter().map(|&s| f32::from(s) / 32768.0).collect()
    } else {
        raw.chunks_exact(channels)
            .map(|frame| {
                let sum: f64 = frame.iter().map(|&s| f64::from(s) / 32768.0).sum();
                (sum / channels as f64) as f32
            })
            .collect()
    };
    Ok(AudioClip::new(samples, spec.sample_rate).with_source(shown))
}

/// Loads a clip and resamples it to [`CANONICAL_SAMPLE_RATE`].
pub fn load_canonical(path: impl AsRef<Path>) -> Result<AudioClip, AudioError> {
    let clip = load_wav(path)?;
    resample(&clip, CANONICAL_SAMPLE_RATE)
}

fn to_pcm16(x: f32) -> i16 {
    let clipped = f64::from(x).clamp(-1.0, 1.0);
    (clipped * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes a mono 16-bit PCM WAV file, clipping amplitudes to `[-1, 1]`.
pub fn write_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    if let Some(parent) = path.as_ref().parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = hound::WavWriter::create(path, spec)?;
    {
        let mut w16 = w.get_i16_writer(clip.samples.len() as u32);
        for &s in &clip.samples {
            w16.write_sample(to_pcm16(s));
        }
        w16.flush()?;
    }
    w.finalize()?;
    Ok(())
}

/// Tiles or trims `clip` to exactly `round(target_seconds * sample_rate)`
/// samples. Shorter clips repeat whole, with the last repeat cut short.
pub fn normalize_length(clip: &AudioClip, target_seconds: f64) -> Result<AudioClip, AudioError> {
    if clip.is_empty() {
        return Err(AudioError::EmptyClip);
    }
    if !(target_seconds > 0.0 && target_seconds.is_finite()) {
        return Err(AudioError::InvalidParameter(format!(
            "target_seconds must be positive, got {target_seconds}"
        )));
    }
    let target = (target_seconds * f64::from(clip.sample_rate)).round() as usize;
    Ok(clip.with_samples(tile_to(&clip.samples, target)))
}

pub(crate) fn tile_to(samples: &[f32], target: usize) -> Vec<f32> {
    if samples.len() >= target {
        return samples[..target].to_vec();
    }
    samples.iter().copied().cycle().take(target).collect()
}

/// Linear-interpolation resampling. Output length is
/// `round(len * target_rate / sample_rate)`.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip, AudioError> {
    if target_rate == 0 || clip.sample_rate == 0 {
        return Err(AudioError::InvalidParameter("sample rates must be positive".into()));
    }
    if target_rate == clip.sample_rate {
        return Ok(clip.clone());
    }
    let src = &clip.samples;
    let ratio = f64::from(clip.sample_rate) / f64::from(target_rate);
    let out_len = (src.len() as f64 / ratio).round() as usize;
    let last = src.len().saturating_sub(1);
    let out = (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let i0 = (pos.floor() as usize).min(last);
            let i1 = (i0 + 1).min(last);
            let frac = pos - i0 as f64;
            let a = f64::from(src[i0]);
            let b = f64::from(src[i1]);
            (a + (b - a) * frac) as f32
        })
        .collect();
    let mut res = clip.with_samples(out);
    res.sample_rate = target_rate;
    Ok(res)
}
