//! Direct-summation transforms.

use std::f64::consts::PI;

/// Power spectrum `|X_k|^2` for `k = 0..=n/2` by the defining DFT sum.
pub fn direct_dft_power(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (t, &x) in frame.iter().enumerate() {
                let angle = -2.0 * PI * (k * t) as f64 / n as f64;
                re += x * angle.cos();
                im += x * angle.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Periodic Hann window, `0.5 - 0.5 cos(2 pi t / n)`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|t| 0.5 - 0.5 * (2.0 * PI * t as f64 / n as f64).cos())
        .collect()
}

/// Power spectrogram by windowing each frame and evaluating the DFT directly.
pub fn direct_stft_power(signal: &[f64], frame: usize, hop: usize, window: &[f64]) -> Vec<Vec<f64>> {
    let frames = 1 + (signal.len() - frame) / hop;
    (0..frames)
        .map(|f| {
            let chunk: Vec<f64> = signal[f * hop..f * hop + frame]
                .iter()
                .zip(window)
                .map(|(x, w)| x * w)
                .collect();
            direct_dft_power(&chunk)
        })
        .collect()
}

/// Orthonormal DCT-II by direct summation.
pub fn direct_dct2(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    (0..v.len())
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            let s: f64 = v
                .iter()
                .enumerate()
                .map(|(i, &x)| x * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
                .sum();
            scale * s
        })
        .collect()
}

/// Index of the largest value.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
