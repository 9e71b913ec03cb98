//! Seeded synthetic data generators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` i.i.d. standard normal vectors of dimension `d`, row-major.
pub fn gaussian_cloud(n: usize, d: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n * d).map(|_| StandardNormal.sample(&mut r)).collect()
}

/// Uniform values in `[lo, hi)`.
pub fn uniform(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    use rand::Rng;
    let mut r = rng(seed);
    (0..n).map(|_| r.random_range(lo..hi)).collect()
}

/// 1-D draws: `per_component` from each `N(mean, sd^2)`, concatenated.
pub fn mixture_1d(components: &[(f64, f64)], per_component: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(components.len() * per_component);
    for &(mean, sd) in components {
        let dist = Normal::new(mean, sd).expect("valid normal");
        out.extend((0..per_component).map(|_| dist.sample(&mut r)));
    }
    out
}

/// Isotropic Gaussian blobs around the given centers, returned with labels.
pub fn blobs(centers: &[Vec<f64>], per_class: usize, sd: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut r = rng(seed);
    let dist = Normal::new(0.0, sd).expect("valid normal");
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (label, c) in centers.iter().enumerate() {
        for _ in 0..per_class {
            points.push(c.iter().map(|&m| m + dist.sample(&mut r)).collect());
            labels.push(label);
        }
    }
    (points, labels)
}
