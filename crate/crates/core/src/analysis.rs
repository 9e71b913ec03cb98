//! Embedding analysis: PCA, exact t-SNE, silhouette-based separation
//! metrics, and SVG/CSV output for scatter plots.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least two classes to measure separation")]
    SingleClass,
    #[error("perplexity {perplexity} needs more than {needed} points, got {n}")]
    PerplexityTooLarge { perplexity: f64, needed: usize, n: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn check_matrix(data: &[Vec<f64>]) -> Result<usize, AnalysisError> {
    let d = data.first().map_or(0, Vec::len);
    if d == 0 || data.iter().any(|r| r.len() != d) {
        return Err(AnalysisError::InvalidInput("rows must be non-empty and share a length".into()));
    }
    Ok(d)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingSource {
    IncTssd,
    ResTssd,
    Mfcc,
    Other,
}

impl EmbeddingSource {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingSource::IncTssd => "inc-tssd",
            EmbeddingSource::ResTssd => "res-tssd",
            EmbeddingSource::Mfcc => "mfcc",
            EmbeddingSource::Other => "other",
        }
    }
}

impl fmt::Display for EmbeddingSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmbeddingSource {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inc-tssd" => Ok(EmbeddingSource::IncTssd),
            "res-tssd" => Ok(EmbeddingSource::ResTssd),
            "mfcc" => Ok(EmbeddingSource::Mfcc),
            "other" => Ok(EmbeddingSource::Other),
            other => Err(AnalysisError::InvalidInput(format!("unknown embedding source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub vectors: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub source: EmbeddingSource,
}

impl EmbeddingSet {
    pub fn new(vectors: Vec<Vec<f64>>, labels: Vec<usize>, source: EmbeddingSource) -> Result<Self, AnalysisError> {
        check_matrix(&vectors)?;
        if vectors.len() < 2 || vectors.len() != labels.len() {
            return Err(AnalysisError::InvalidInput(format!(
                "need >= 2 vectors with one label each, got {} vectors and {} labels",
                vectors.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= crate::MAX_CLASSES) {
            return Err(AnalysisError::InvalidInput(format!("label {l} out of range")));
        }
        Ok(Self { vectors, labels, source })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit-norm principal axes, by descending eigenvalue.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Share of total variance carried by each kept component.
    pub explained_ratio: Vec<f64>,
    /// Set when fewer than the requested components have positive variance.
    pub warnings: Vec<String>,
}

impl Pca {
    /// Fits up to `k` components. Each axis is signed so its largest-magnitude
    /// loading is positive.
    pub fn fit(data: &[Vec<f64>], k: usize) -> Result<Self, AnalysisError> {
        let d = check_matrix(data)?;
        let n = data.len();
        if k == 0 || k > n.min(d) {
            return Err(AnalysisError::InvalidInput(format!("k must be in 1..={}, got {k}", n.min(d))));
        }
        let mut mean = vec![0.0; d];
        for r in data {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let centered = DMatrix::from_fn(n, d, |i, j| data[i][j] - mean[j]);
        let cov = centered.tr_mul(&centered) / (n.max(2) - 1) as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        let top = eig.eigenvalues[order[0]].max(0.0);
        let positive = order
            .iter()
            .take_while(|&&i| eig.eigenvalues[i] > top * 1e-12 && eig.eigenvalues[i] > 0.0)
            .count();
        let mut warnings = Vec::new();
        let kept = if positive < k {
            let msg = format!("rank deficient: only {positive} of {k} requested components have positive variance");
            log::warn!("{msg}");
            warnings.push(msg);
            positive.max(1)
        } else {
            k
        };
        let mut components = Vec::with_capacity(kept);
        let mut eigenvalues = Vec::with_capacity(kept);
        for &i in &order[..kept] {
            let mut axis: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let big = (0..d).fold(0, |b, j| if axis[j].abs() > axis[b].abs() { j } else { b });
            if axis[big] < 0.0 {
                axis.iter_mut().for_each(|v| *v = -*v);
            }
            components.push(axis);
            eigenvalues.push(eig.eigenvalues[i].max(0.0));
        }
        let explained_ratio = eigenvalues
            .iter()
            .map(|v| if total > 0.0 { v / total } else { 0.0 })
            .collect();
        Ok(Self {
            mean,
            components,
            eigenvalues,
            explained_ratio,
            warnings,
        })
    }

    pub fn transform(&self, data: &[Vec<f64>]) -> Vec<Vec<f64>> {
        data.iter()
            .map(|r| {
                let c: Vec<f64> = r.iter().zip(&self.mean).map(|(v, m)| v - m).collect();
                self.components
                    .iter()
                    .map(|axis| axis.iter().zip(&c).map(|(a, b)| a * b).sum())
                    .collect()
            })
            .collect()
    }

    /// Maps projections back to the original space.
    pub fn inverse_transform(&self, projected: &[Vec<f64>]) -> Vec<Vec<f64>> {
        projected
            .iter()
            .map(|p| {
                let mut out = self.mean.clone();
                for (coef, axis) in p.iter().zip(&self.components) {
                    for (o, a) in out.iter_mut().zip(axis) {
                        *o += coef * a;
                    }
                }
                out
            })
            .collect()
    }
}

/// Projection onto the top `k` components plus their explained-variance
/// ratios.
pub fn pca_fit_transform(data: &[Vec<f64>], k: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>), AnalysisError> {
    let pca = Pca::fit(data, k)?;
    Ok((pca.transform(data), pca.explained_ratio.clone()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Standard deviation of the Gaussian initialization.
    pub init_scale: f64,
    /// PCA pre-reduction target.
    pub pca_dims: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            init_scale: 1e-4,
            pca_dims: 50,
            seed: 0,
        }
    }
}

pub const ENTROPY_TOLERANCE: f64 = 1e-5;
pub const MAX_BISECTIONS: usize = 50;

/// Conditional affinities `p_{j|i}` (row-major, `n x n`) calibrated so each
/// row's entropy is `log2(perplexity)` bits; returns them with the entropies.
pub fn conditional_affinities(d2: &[f64], n: usize, perplexity: f64) -> (Vec<f64>, Vec<f64>) {
    let target = perplexity.log2();
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let dist = &d2[i * n..(i + 1) * n];
            // shift by the nearest-neighbour distance so exp() never underflows wholesale
            let shift = (0..n).filter(|&j| j != i).map(|j| dist[j]).fold(f64::INFINITY, f64::min);
            let eval = |beta: f64| -> (Vec<f64>, f64) {
                let mut p: Vec<f64> = (0..n)
                    .map(|j| if j == i { 0.0 } else { (-(dist[j] - shift) * beta).exp() })
                    .collect();
                let z: f64 = p.iter().sum();
                let mut h = 0.0;
                for v in p.iter_mut() {
                    *v /= z;
                    if *v > 0.0 {
                        h -= *v * v.log2();
                    }
                }
                (p, h)
            };
            let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
            let mut beta = 1.0;
            let (mut p, mut h) = eval(beta);
            for _ in 0..MAX_BISECTIONS {
                if (h - target).abs() < ENTROPY_TOLERANCE {
                    break;
                }
                if h > target {
                    lo = beta;
                    beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = (beta + lo) / 2.0;
                }
                (p, h) = eval(beta);
            }
            (p, h)
        })
        .collect();
    let mut p = Vec::with_capacity(n * n);
    let mut entropies = Vec::with_capacity(n);
    for (row, h) in rows {
        p.extend(row);
        entropies.push(h);
    }
    (p, entropies)
}

fn pairwise_sq_distances(data: &[Vec<f64>]) -> Vec<f64> {
    let n = data.len();
    (0..n)
        .into_par_iter()
        .flat_map_iter(|i| (0..n).map(move |j| sq_dist(&data[i], &data[j])))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    pub embedding: Vec<[f64; 2]>,
    /// KL(P || Q) against the unexaggerated affinities, one per iteration.
    pub kl_history: Vec<f64>,
    /// Entropy in bits of each calibrated conditional distribution.
    pub entropies: Vec<f64>,
}

/// Exact O(N^2) t-SNE into two dimensions.
pub fn tsne_embed(data: &[Vec<f64>], cfg: &TsneConfig) -> Result<TsneResult, AnalysisError> {
    let d = check_matrix(data)?;
    let n = data.len();
    if !(cfg.perplexity >= 1.0) || 3.0 * cfg.perplexity >= n as f64 {
        return Err(AnalysisError::PerplexityTooLarge {
            perplexity: cfg.perplexity,
            needed: (3.0 * cfg.perplexity).floor() as usize + 1,
            n,
        });
    }
    let reduced;
    let input = if d > cfg.pca_dims {
        reduced = Pca::fit(data, cfg.pca_dims.min(n))?.transform(data);
        &reduced
    } else {
        data
    };
    let d2 = pairwise_sq_distances(input);
    let (cond, entropies) = conditional_affinities(&d2, n, cfg.perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
        }
        p[i * n + i] = 0.0;
    }

    let mut rng = seed::rng(cfg.seed);
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            [
                cfg.init_scale * rng.sample::<f64, _>(StandardNormal),
                cfg.init_scale * rng.sample::<f64, _>(StandardNormal),
            ]
        })
        .collect();
    let mut velocity = vec![[0.0; 2]; n];
    let mut kl_history = Vec::with_capacity(cfg.iterations);
    let mut num = vec![0.0; n * n];
    for it in 0..cfg.iterations {
        let exaggeration = if it < cfg.exaggeration_iterations {
            cfg.early_exaggeration
        } else {
            1.0
        };
        let momentum = if it < cfg.exaggeration_iterations {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        };
        num.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j {
                    0.0
                } else {
                    let dx = y[i][0] - y[j][0];
                    let dy = y[i][1] - y[j][1];
                    1.0 / (1.0 + dx * dx + dy * dy)
                };
            }
        });
        let z: f64 = num.iter().sum();
        let per_row: Vec<([f64; 2], f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut g = [0.0; 2];
                let mut kl = 0.0;
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let pij = p[i * n + j];
                    let nij = num[i * n + j];
                    let q = (nij / z).max(1e-12);
                    kl += pij * (pij / q).ln();
                    let m = 4.0 * (exaggeration * pij - q) * nij;
                    g[0] += m * (y[i][0] - y[j][0]);
                    g[1] += m * (y[i][1] - y[j][1]);
                }
                (g, kl)
            })
            .collect();
        kl_history.push(per_row.iter().map(|r| r.1).sum());
        for ((yi, vi), (g, _)) in y.iter_mut().zip(velocity.iter_mut()).zip(&per_row) {
            for a in 0..2 {
                vi[a] = momentum * vi[a] - cfg.learning_rate * g[a];
                yi[a] += vi[a];
            }
        }
        let mut centre = [0.0; 2];
        for yi in &y {
            centre[0] += yi[0] / n as f64;
            centre[1] += yi[1] / n as f64;
        }
        for yi in y.iter_mut() {
            yi[0] -= centre[0];
            yi[1] -= centre[1];
        }
    }
    Ok(TsneResult {
        embedding: y,
        kl_history,
        entropies,
    })
}

/// Mean silhouette coefficient under Euclidean distance. Points alone in
/// their class score 0.
pub fn silhouette_score(points: &[Vec<f64>], labels: &[usize]) -> Result<f64, AnalysisError> {
    check_matrix(points)?;
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; classes];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(AnalysisError::SingleClass);
    }
    let total: f64 = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut sums = vec![0.0; classes];
            for (j, p) in points.iter().enumerate() {
                if j != i {
                    sums[labels[j]] += sq_dist(&points[i], p).sqrt();
                }
            }
            let own = labels[i];
            if sizes[own] < 2 {
                return 0.0;
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..classes)
                .filter(|&c| c != own && sizes[c] > 0)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .sum();
    Ok(total / points.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparationReport {
    pub silhouette: f64,
    /// Euclidean distances between class centroids; `NaN` for absent classes.
    pub centroid_distances: Vec<Vec<f64>>,
    /// Mean distance of each class's points to their centroid.
    pub intra_dispersion: Vec<f64>,
    pub mean_intra_dispersion: f64,
}

pub fn separation_report(emb: &EmbeddingSet) -> Result<SeparationReport, AnalysisError> {
    let silhouette = silhouette_score(&emb.vectors, &emb.labels)?;
    let classes = emb.labels.iter().max().map_or(0, |m| m + 1);
    let d = emb.vectors[0].len();
    let mut centroids = vec![vec![0.0; d]; classes];
    let mut counts = vec![0usize; classes];
    for (v, &l) in emb.vectors.iter().zip(&emb.labels) {
        counts[l] += 1;
        for (c, x) in centroids[l].iter_mut().zip(v) {
            *c += x;
        }
    }
    for (c, &k) in centroids.iter_mut().zip(&counts) {
        c.iter_mut().for_each(|v| *v /= k.max(1) as f64);
    }
    let centroid_distances = (0..classes)
        .map(|a| {
            (0..classes)
                .map(|b| {
                    if counts[a] == 0 || counts[b] == 0 {
                        f64::NAN
                    } else {
                        sq_dist(&centroids[a], &centroids[b]).sqrt()
                    }
                })
                .collect()
        })
        .collect();
    let mut intra = vec![0.0; classes];
    for (v, &l) in emb.vectors.iter().zip(&emb.labels) {
        intra[l] += sq_dist(v, &centroids[l]).sqrt();
    }
    for (s, &k) in intra.iter_mut().zip(&counts) {
        *s = if k > 0 { *s / k as f64 } else { f64::NAN };
    }
    let present: Vec<f64> = intra.iter().copied().filter(|v| !v.is_nan()).collect();
    Ok(SeparationReport {
        silhouette,
        centroid_distances,
        mean_intra_dispersion: present.iter().sum::<f64>() / present.len() as f64,
        intra_dispersion: intra,
    })
}

/// `x,y,label,source` rows.
pub fn write_embedding_csv(
    path: impl AsRef<Path>,
    points: &[[f64; 2]],
    labels: &[usize],
    source: EmbeddingSource,
) -> Result<(), AnalysisError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x,y,label,source")?;
    for (p, l) in points.iter().zip(labels) {
        writeln!(w, "{},{},{l},{source}", p[0], p[1])?;
    }
    w.flush()?;
    Ok(())
}

pub const CLASS_COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Self-contained SVG scatter plot, one color per class with a legend.
pub fn scatter_svg(points: &[[f64; 2]], labels: &[usize], title: &str) -> String {
    let (w, h, margin) = (640.0, 520.0, 50.0);
    let (plot_w, plot_h) = (w - 2.0 * margin - 110.0, h - 2.0 * margin);
    let bounds = points.iter().fold([f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY], |b, p| {
        [b[0].min(p[0]), b[1].max(p[0]), b[2].min(p[1]), b[3].max(p[1])]
    });
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let sx = |x: f64| margin + (x - bounds[0]) / span(bounds[0], bounds[1]) * plot_w;
    let sy = |y: f64| margin + plot_h - (y - bounds[2]) / span(bounds[2], bounds[3]) * plot_h;
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>\n",
        w / 2.0,
        escape_xml(title)
    ));
    svg.push_str(&format!(
        "<rect x=\"{margin}\" y=\"{margin}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#999\"/>\n"
    ));
    for (p, &l) in points.iter().zip(labels) {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.8\"/>\n",
            sx(p[0]),
            sy(p[1]),
            CLASS_COLORS[l % CLASS_COLORS.len()]
        ));
    }
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    for (row, &l) in present.iter().enumerate() {
        let y = margin + 20.0 * row as f64 + 10.0;
        let x = w - margin - 90.0;
        svg.push_str(&format!(
            "<circle cx=\"{x}\" cy=\"{y}\" r=\"5\" fill=\"{}\"/><text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">class {l}</text>\n",
            CLASS_COLORS[l % CLASS_COLORS.len()],
            x + 10.0,
            y + 4.0
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use synthattr_testkit::samplers::{blobs, gaussian_cloud};

    fn rows(flat: &[f64], d: usize) -> Vec<Vec<f64>> {
        flat.chunks(d).map(<[f64]>::to_vec).collect()
    }

    #[test]
    fn collinear_points_have_one_component() {
        let data: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let pca = Pca::fit(&data, 2).unwrap();
        assert_eq!(pca.components.len(), 1);
        assert_eq!(pca.warnings.len(), 1);
        assert!((pca.explained_ratio[0] - 1.0).abs() < 1e-12);
        let (_, ratios) = pca_fit_transform(&data, 1).unwrap();
        assert!((ratios[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isotropic_cloud_splits_variance_evenly() {
        let data = rows(&gaussian_cloud(1000, 2, 5), 2);
        let (_, ratios) = pca_fit_transform(&data, 2).unwrap();
        assert!((ratios[0] - ratios[1]).abs() < 0.1, "{ratios:?}");
    }

    #[test]
    fn full_rank_reconstruction_and_decorrelation() {
        let mut data = rows(&gaussian_cloud(200, 4, 6), 4);
        for r in &mut data {
            r[1] += 0.8 * r[0];
            r[3] = 3.0 * r[3] - r[2];
        }
        let pca = Pca::fit(&data, 4).unwrap();
        let proj = pca.transform(&data);
        for (a, b) in pca.inverse_transform(&proj).iter().zip(&data) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-8);
            }
        }
        let n = proj.len() as f64;
        let var: Vec<f64> = (0..4).map(|i| proj.iter().map(|p| p[i] * p[i]).sum::<f64>() / n).collect();
        for i in 0..4 {
            for j in 0..i {
                let c = proj.iter().map(|p| p[i] * p[j]).sum::<f64>() / n;
                assert!(c.abs() < 1e-8 * (var[i] * var[j]).sqrt());
            }
            let axis = &pca.components[i];
            let big = axis.iter().fold(0.0f64, |m, v| if v.abs() > m.abs() { *v } else { m });
            assert!(big > 0.0);
        }
        assert!(pca.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn calibrated_entropies_match_perplexity() {
        let data = rows(&gaussian_cloud(120, 5, 2), 5);
        let d2 = pairwise_sq_distances(&data);
        let (p, h) = conditional_affinities(&d2, 120, 20.0);
        for (i, hi) in h.iter().enumerate() {
            assert!((hi - 20f64.log2()).abs() < 1e-4, "row {i}: {hi}");
            assert!((p[i * 120..(i + 1) * 120].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    fn two_clusters() -> (Vec<Vec<f64>>, Vec<usize>) {
        blobs(&[vec![0.0; 4], vec![20.0, 0.0, 0.0, 0.0]], 50, 1.0, 4)
    }

    #[test]
    fn tsne_separates_distant_clusters_deterministically() {
        let (x, y) = two_clusters();
        let cfg = TsneConfig {
            perplexity: 15.0,
            iterations: 500,
            seed: 3,
            ..Default::default()
        };
        let a = tsne_embed(&x, &cfg).unwrap();
        let pts: Vec<Vec<f64>> = a.embedding.iter().map(|p| p.to_vec()).collect();
        assert!(silhouette_score(&pts, &y).unwrap() > 0.5);
        assert!(a.kl_history.last().unwrap() < &a.kl_history[0]);
        assert_eq!(a, tsne_embed(&x, &cfg).unwrap());
    }

    #[test]
    fn perplexity_must_fit_the_sample() {
        let x = rows(&gaussian_cloud(30, 2, 1), 2);
        let cfg = TsneConfig { perplexity: 10.0, ..Default::default() };
        assert!(matches!(tsne_embed(&x, &cfg), Err(AnalysisError::PerplexityTooLarge { .. })));
    }

    #[test]
    fn silhouette_extremes() {
        let pts = vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![5.0, 5.0], vec![5.0, 5.0]];
        assert!((silhouette_score(&pts, &[0, 0, 1, 1]).unwrap() - 1.0).abs() < 1e-12);
        let cloud = rows(&gaussian_cloud(500, 3, 7), 3);
        let mut rng = seed::rng(1);
        let labels: Vec<usize> = (0..500).map(|_| rng.random_range(0..2)).collect();
        assert!(silhouette_score(&cloud, &labels).unwrap().abs() < 0.1);
    }

    #[test]
    fn silhouette_matches_testkit_oracle() {
        let (x, y) = blobs(&[vec![0.0, 0.0], vec![2.0, 1.0], vec![0.0, 3.0]], 15, 1.0, 9);
        let ours = silhouette_score(&x, &y).unwrap();
        let oracle = synthattr_testkit::stats::silhouette(&x, &y);
        assert!((ours - oracle).abs() < 1e-12);
    }

    #[test]
    fn report_metrics_and_single_class() {
        let emb = EmbeddingSet::new(
            vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![10.0, 0.0], vec![10.0, 2.0]],
            vec![0, 0, 1, 1],
            EmbeddingSource::Other,
        )
        .unwrap();
        let r = separation_report(&emb).unwrap();
        assert!((r.centroid_distances[0][1] - (81.0f64 + 1.0).sqrt()).abs() < 1e-12);
        assert_eq!(r.intra_dispersion, vec![1.0, 1.0]);
        let single = EmbeddingSet::new(vec![vec![0.0], vec![1.0]], vec![2, 2], EmbeddingSource::Mfcc).unwrap();
        assert!(matches!(separation_report(&single), Err(AnalysisError::SingleClass)));
    }

    #[test]
    fn svg_and_csv_outputs() {
        let pts = [[0.0, 1.0], [2.0, -1.0], [1.0, 0.0]];
        let svg = scatter_svg(&pts, &[0, 1, 1], "t-SNE <inc>");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3 + 2);
        assert!(svg.contains("t-SNE &lt;inc&gt;"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        write_embedding_csv(&p, &pts, &[0, 1, 1], EmbeddingSource::IncTssd).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text.lines().next(), Some("x,y,label,source"));
        assert_eq!(text.lines().nth(2), Some("2,-1,1,inc-tssd"));
    }
}
