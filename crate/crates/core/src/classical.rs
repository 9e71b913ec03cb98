//! Linear one-vs-rest SVM and per-class diagonal Gaussian mixtures over
//! fixed-length feature vectors.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use thiserror::Error;

use crate::seed;

#[derive(Debug, Error)]
pub enum ClassicalError {
    #[error("training data must contain at least two classes")]
    SingleClassData,
    #[error("class {class} has {have} samples, needs at least {need}")]
    TooFewSamples { class: usize, have: usize, need: usize },
    #[error("expected {expected}-dimensional input, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed model file: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn check_rows(features: &[Vec<f64>], labels: &[usize]) -> Result<usize, ClassicalError> {
    if features.len() != labels.len() {
        return Err(ClassicalError::InvalidParameter(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let dim = features.first().map_or(0, Vec::len);
    if let Some(bad) = features.iter().find(|r| r.len() != dim) {
        return Err(ClassicalError::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    Ok(dim)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index of the largest score; ties go to the smallest index.
pub fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Per-dimension standardization fitted on training rows only.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Constant dimensions get a unit scale.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self, ClassicalError> {
        let dim = check_rows(rows, &vec![0; rows.len()])?;
        if rows.is_empty() {
            return Err(ClassicalError::InvalidParameter("cannot standardize zero rows".into()));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>, ClassicalError> {
        if x.len() != self.mean.len() {
            return Err(ClassicalError::DimensionMismatch {
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        Ok(x.iter().zip(&self.mean).zip(&self.std).map(|((v, m), s)| (v - m) / s).collect())
    }

    pub fn transform_all(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ClassicalError> {
        rows.iter().map(|r| self.transform(r)).collect()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), ClassicalError> {
        write_u64(w, self.mean.len() as u64)?;
        write_f64s(w, &self.mean)?;
        write_f64s(w, &self.std)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, ClassicalError> {
        let dim = read_len(r)?;
        Ok(Self {
            mean: read_f64s(r, dim)?,
            std: read_f64s(r, dim)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvmSolver {
    /// Seeded stochastic subgradient descent only.
    Sgd,
    /// SGD followed by dual coordinate descent to the exact optimum.
    SgdThenDual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
    /// Initial SGD step; decays as `lr0 / (1 + t * lambda)`.
    pub lr0: f64,
    pub seed: u64,
    pub solver: SvmSolver,
    /// Stop dual descent once the largest projected gradient falls below this.
    pub dual_tolerance: f64,
    pub max_dual_sweeps: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 50,
            lr0: 0.1,
            seed: 0,
            solver: SvmSolver::SgdThenDual,
            dual_tolerance: 1e-10,
            max_dual_sweeps: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    /// One weight vector per class.
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub lambda: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SvmReport {
    /// Full-set objective after each SGD epoch, per class.
    pub objective_history: Vec<Vec<f64>>,
    /// Final objective per class.
    pub objective: Vec<f64>,
    pub warnings: Vec<String>,
}

/// `lambda * (|w|^2 + b^2) + mean hinge` for labels in `{-1, +1}`.
fn svm_objective(rows: &[Vec<f64>], y: &[f64], w: &[f64], b: f64, lambda: f64) -> f64 {
    let hinge: f64 = rows
        .iter()
        .zip(y)
        .map(|(x, &yi)| (1.0 - yi * (dot(w, x) + b)).max(0.0))
        .sum();
    lambda * (dot(w, w) + b * b) + hinge / rows.len() as f64
}

fn train_binary(rows: &[Vec<f64>], y: &[f64], cfg: &SvmConfig, seed: u64) -> (Vec<f64>, f64, Vec<f64>, f64) {
    let dim = rows[0].len();
    let n = rows.len();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut rng = seed::rng(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut t = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let lr = cfg.lr0 / (1.0 + t * cfg.lambda);
            t += 1.0;
            let active = y[i] * (dot(&w, &rows[i]) + b) < 1.0;
            let shrink = 1.0 - 2.0 * lr * cfg.lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            b *= shrink;
            if active {
                for (wv, xv) in w.iter_mut().zip(&rows[i]) {
                    *wv += lr * y[i] * xv;
                }
                b += lr * y[i];
            }
        }
        history.push(svm_objective(rows, y, &w, b, cfg.lambda));
    }
    if cfg.solver == SvmSolver::SgdThenDual {
        (w, b) = dual_coordinate_descent(rows, y, cfg, &mut rng);
    }
    let obj = svm_objective(rows, y, &w, b, cfg.lambda);
    (w, b, history, obj)
}

/// Exact minimizer of the objective via its box-constrained dual
/// (the intercept is an extra constant feature).
fn dual_coordinate_descent(rows: &[Vec<f64>], y: &[f64], cfg: &SvmConfig, rng: &mut seed::Rng) -> (Vec<f64>, f64) {
    let n = rows.len();
    let dim = rows[0].len();
    let upper = 1.0 / (2.0 * cfg.lambda * n as f64);
    let q: Vec<f64> = rows.iter().map(|x| dot(x, x) + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.max_dual_sweeps {
        order.shuffle(rng);
        let mut worst: f64 = 0.0;
        for &i in &order {
            let g = y[i] * (dot(&w, &rows[i]) + b) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= upper {
                g.max(0.0)
            } else {
                g
            };
            worst = worst.max(pg.abs());
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, upper);
                let step = (alpha[i] - old) * y[i];
                for (wv, xv) in w.iter_mut().zip(&rows[i]) {
                    *wv += step * xv;
                }
                b += step;
            }
        }
        if worst < cfg.dual_tolerance {
            break;
        }
    }
    (w, b)
}

/// One-vs-rest linear SVM. Inputs are expected to be standardized.
pub fn svm_train(features: &[Vec<f64>], labels: &[usize], cfg: &SvmConfig) -> Result<(SvmModel, SvmReport), ClassicalError> {
    let dim = check_rows(features, labels)?;
    if !(cfg.lambda > 0.0) || cfg.epochs == 0 {
        return Err(ClassicalError::InvalidParameter("lambda and epochs must be positive".into()));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let present = (0..classes).filter(|c| labels.contains(c)).count();
    if features.len() < 2 || present < 2 {
        return Err(ClassicalError::SingleClassData);
    }
    let mut report = SvmReport::default();
    if features.windows(2).all(|p| p[0] == p[1]) {
        let msg = "all feature vectors are identical; every margin is the same".to_string();
        log::warn!("{msg}");
        report.warnings.push(msg);
    }
    let per_class: Vec<_> = (0..classes)
        .into_par_iter()
        .map(|c| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            train_binary(features, &y, cfg, seed::derive_seed(cfg.seed, "svm", c as u64))
        })
        .collect();
    let mut model = SvmModel {
        weights: Vec::with_capacity(classes),
        intercepts: Vec::with_capacity(classes),
        lambda: cfg.lambda,
    };
    for (w, b, hist, obj) in per_class {
        debug_assert_eq!(w.len(), dim);
        model.weights.push(w);
        model.intercepts.push(b);
        report.objective_history.push(hist);
        report.objective.push(obj);
    }
    Ok((model, report))
}

impl SvmModel {
    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>, ClassicalError> {
        if x.len() != self.dim() {
            return Err(ClassicalError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.weights.iter().zip(&self.intercepts).map(|(w, b)| dot(w, x) + b).collect())
    }

    /// Highest-scoring class (ties to the smaller id) and all scores.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>), ClassicalError> {
        let s = self.scores(x)?;
        Ok((argmax_first(&s), s))
    }

    /// `class,bias,w0,w1,...` rows.
    pub fn write_weights_csv(&self, path: impl AsRef<Path>) -> Result<(), ClassicalError> {
        let mut w = BufWriter::new(File::create(path)?);
        let cols: Vec<String> = (0..self.dim()).map(|i| format!("w{i}")).collect();
        writeln!(w, "class,bias,{}", cols.join(","))?;
        for (c, (ws, b)) in self.weights.iter().zip(&self.intercepts).enumerate() {
            let vals: Vec<String> = ws.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{c},{b},{}", vals.join(","))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), ClassicalError> {
        w.write_all(SVM_MAGIC)?;
        write_u64(w, FORMAT_VERSION)?;
        write_u64(w, self.num_classes() as u64)?;
        write_u64(w, self.dim() as u64)?;
        write_f64s(w, &[self.lambda])?;
        for ws in &self.weights {
            write_f64s(w, ws)?;
        }
        write_f64s(w, &self.intercepts)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, ClassicalError> {
        expect_header(r, SVM_MAGIC)?;
        let classes = read_len(r)?;
        let dim = read_len(r)?;
        let lambda = read_f64s(r, 1)?[0];
        let weights = (0..classes).map(|_| read_f64s(r, dim)).collect::<Result<_, _>>()?;
        Ok(Self {
            weights,
            intercepts: read_f64s(r, classes)?,
            lambda,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassicalError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassicalError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmConfig {
    pub components: usize,
    pub max_iter: usize,
    /// Stop once the per-sample log-likelihood gain drops below this.
    pub tolerance: f64,
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            components: 3,
            max_iter: 200,
            tolerance: 1e-6,
            variance_floor: 1e-6,
            seed: 0,
        }
    }
}

/// Diagonal-covariance mixture for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    /// Mean per-sample log-likelihood at each E-step.
    pub log_likelihood: Vec<f64>,
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl Mixture {
    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// `ln(pi_k) + ln N(x; mu_k, diag(var_k))` for each component.
    pub fn component_log_densities(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.variances)
            .map(|((&pi, mu), var)| {
                let mut acc = -0.5 * LN_2PI * x.len() as f64;
                for ((xi, m), v) in x.iter().zip(mu).zip(var) {
                    acc -= 0.5 * (v.ln() + (xi - m) * (xi - m) / v);
                }
                pi.ln() + acc
            })
            .collect()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        log_sum_exp(&self.component_log_densities(x))
    }

    /// Posterior component probabilities for `x`.
    pub fn responsibilities(&self, x: &[f64]) -> Vec<f64> {
        let l = self.component_log_densities(x);
        let z = log_sum_exp(&l);
        l.iter().map(|v| (v - z).exp()).collect()
    }

    fn m_step(&mut self, rows: &[&[f64]], resp: &[Vec<f64>], floor: f64) {
        let n = rows.len() as f64;
        let dim = rows[0].len();
        for k in 0..self.weights.len() {
            let nk: f64 = resp.iter().map(|r| r[k]).sum();
            self.weights[k] = nk / n;
            if nk <= 1e-300 {
                continue;
            }
            let mut mean = vec![0.0; dim];
            for (x, r) in rows.iter().zip(resp) {
                for (m, v) in mean.iter_mut().zip(x.iter()) {
                    *m += r[k] * v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= nk);
            let mut var = vec![0.0; dim];
            for (x, r) in rows.iter().zip(resp) {
                for ((s, v), m) in var.iter_mut().zip(x.iter()).zip(&mean) {
                    *s += r[k] * (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s = (*s / nk).max(floor));
            self.means[k] = mean;
            self.variances[k] = var;
        }
    }
}

fn kmeans_pp_centers(rows: &[&[f64]], k: usize, rng: &mut seed::Rng) -> Vec<usize> {
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut centers = vec![rng.random_range(0..rows.len())];
    let mut d2: Vec<f64> = rows.iter().map(|x| sq(x, rows[centers[0]])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut pick = rows.len() - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.random_range(0..rows.len())
        };
        centers.push(next);
        for (d, x) in d2.iter_mut().zip(rows) {
            *d = d.min(sq(x, rows[next]));
        }
    }
    centers
}

/// EM for one diagonal mixture, initialized from a k-means++ hard
/// assignment.
pub fn fit_mixture(rows: &[&[f64]], cfg: &GmmConfig, seed: u64) -> Result<Mixture, ClassicalError> {
    let k = cfg.components;
    if k == 0 {
        return Err(ClassicalError::InvalidParameter("components must be positive".into()));
    }
    let dim = rows.first().map_or(0, |r| r.len());
    let mut rng = seed::rng(seed);
    let centers = kmeans_pp_centers(rows, k, &mut rng);
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let hard: Vec<Vec<f64>> = rows
        .iter()
        .map(|x| {
            let d: Vec<f64> = centers.iter().map(|&c| -sq(x, rows[c])).collect();
            let mut r = vec![0.0; k];
            r[argmax_first(&d)] = 1.0;
            r
        })
        .collect();
    let mut mix = Mixture {
        weights: vec![1.0 / k as f64; k],
        means: centers.iter().map(|&c| rows[c].to_vec()).collect(),
        variances: vec![vec![1.0; dim]; k],
        log_likelihood: Vec::new(),
    };
    mix.m_step(rows, &hard, cfg.variance_floor);
    let n = rows.len() as f64;
    for _ in 0..cfg.max_iter {
        let mut ll = 0.0;
        let resp: Vec<Vec<f64>> = rows
            .iter()
            .map(|x| {
                let l = mix.component_log_densities(x);
                let z = log_sum_exp(&l);
                ll += z;
                l.iter().map(|v| (v - z).exp()).collect()
            })
            .collect();
        let ll = ll / n;
        let converged = mix.log_likelihood.last().is_some_and(|&prev| ll - prev < cfg.tolerance);
        mix.log_likelihood.push(ll);
        if converged {
            break;
        }
        mix.m_step(rows, &resp, cfg.variance_floor);
    }
    Ok(mix)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub classes: Vec<Mixture>,
    pub log_priors: Vec<f64>,
}

/// One mixture per class; priors are class frequencies.
pub fn gmm_fit(features: &[Vec<f64>], labels: &[usize], cfg: &GmmConfig) -> Result<GmmModel, ClassicalError> {
    check_rows(features, labels)?;
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let grouped: Vec<Vec<&[f64]>> = (0..classes)
        .map(|c| {
            features
                .iter()
                .zip(labels)
                .filter(|(_, &l)| l == c)
                .map(|(x, _)| x.as_slice())
                .collect()
        })
        .collect();
    for (c, g) in grouped.iter().enumerate() {
        if g.len() < cfg.components {
            return Err(ClassicalError::TooFewSamples {
                class: c,
                have: g.len(),
                need: cfg.components,
            });
        }
    }
    let mixtures = grouped
        .par_iter()
        .enumerate()
        .map(|(c, rows)| fit_mixture(rows, cfg, seed::derive_seed(cfg.seed, "gmm", c as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    let n = features.len() as f64;
    Ok(GmmModel {
        classes: mixtures,
        log_priors: grouped.iter().map(|g| (g.len() as f64 / n).ln()).collect(),
    })
}

impl GmmModel {
    pub fn dim(&self) -> usize {
        self.classes.first().map_or(0, Mixture::dim)
    }

    /// Most probable class (ties to the smaller id) and normalized log
    /// posteriors.
    pub fn predict(&self, x: &[f64]) -> Result<(usize, Vec<f64>), ClassicalError> {
        if x.len() != self.dim() {
            return Err(ClassicalError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let joint: Vec<f64> = self
            .classes
            .iter()
            .zip(&self.log_priors)
            .map(|(m, p)| p + m.log_density(x))
            .collect();
        let z = log_sum_exp(&joint);
        let post: Vec<f64> = joint.iter().map(|j| j - z).collect();
        Ok((argmax_first(&joint), post))
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), ClassicalError> {
        w.write_all(GMM_MAGIC)?;
        write_u64(w, FORMAT_VERSION)?;
        write_u64(w, self.classes.len() as u64)?;
        write_u64(w, self.dim() as u64)?;
        write_f64s(w, &self.log_priors)?;
        for m in &self.classes {
            write_u64(w, m.weights.len() as u64)?;
            write_f64s(w, &m.weights)?;
            for (mu, var) in m.means.iter().zip(&m.variances) {
                write_f64s(w, mu)?;
                write_f64s(w, var)?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, ClassicalError> {
        expect_header(r, GMM_MAGIC)?;
        let classes = read_len(r)?;
        let dim = read_len(r)?;
        let log_priors = read_f64s(r, classes)?;
        let mut mixtures = Vec::with_capacity(classes);
        for _ in 0..classes {
            let k = read_len(r)?;
            let weights = read_f64s(r, k)?;
            let mut means = Vec::with_capacity(k);
            let mut variances = Vec::with_capacity(k);
            for _ in 0..k {
                means.push(read_f64s(r, dim)?);
                variances.push(read_f64s(r, dim)?);
            }
            mixtures.push(Mixture {
                weights,
                means,
                variances,
                log_likelihood: Vec::new(),
            });
        }
        Ok(Self {
            classes: mixtures,
            log_priors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassicalError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassicalError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

const SVM_MAGIC: &[u8; 8] = b"SATTRSVM";
const GMM_MAGIC: &[u8; 8] = b"SATTRGMM";
const FORMAT_VERSION: u64 = 1;
const MAX_LEN: u64 = 1 << 28;

fn write_u64(w: &mut impl Write, v: u64) -> Result<(), ClassicalError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64s(w: &mut impl Write, v: &[f64]) -> Result<(), ClassicalError> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64, ClassicalError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|_| ClassicalError::Format("unexpected end of file".into()))?;
    Ok(u64::from_le_bytes(b))
}

fn read_len(r: &mut impl Read) -> Result<usize, ClassicalError> {
    let v = read_u64(r)?;
    if v > MAX_LEN {
        return Err(ClassicalError::Format(format!("implausible length {v}")));
    }
    Ok(v as usize)
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>, ClassicalError> {
    (0..n).map(|_| read_u64(r).map(f64::from_bits)).collect()
}

fn expect_header(r: &mut impl Read, magic: &[u8; 8]) -> Result<(), ClassicalError> {
    let mut m = [0u8; 8];
    r.read_exact(&mut m).map_err(|_| ClassicalError::Format("truncated header".into()))?;
    if &m != magic {
        return Err(ClassicalError::Format("bad magic".into()));
    }
    let version = read_u64(r)?;
    if version != FORMAT_VERSION {
        return Err(ClassicalError::Format(format!("unsupported version {version}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use synthattr_testkit::samplers::{blobs, gaussian_cloud, mixture_1d};

    fn two_clusters() -> (Vec<Vec<f64>>, Vec<usize>) {
        blobs(&[vec![-5.0, 0.0], vec![5.0, 0.0]], 40, 1.0, 3)
    }

    #[test]
    fn separable_clusters_are_fit_exactly() {
        let (x, y) = two_clusters();
        let (m, report) = svm_train(&x, &y, &SvmConfig::default()).unwrap();
        for (xi, &yi) in x.iter().zip(&y) {
            assert_eq!(m.predict(xi).unwrap().0, yi);
        }
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn sgd_objective_is_non_increasing_within_noise() {
        let (x, y) = blobs(&[vec![6.0, 0.0, 0.0], vec![0.0, 6.0, 0.0], vec![0.0, 0.0, 6.0]], 60, 1.0, 8);
        let cfg = SvmConfig {
            solver: SvmSolver::Sgd,
            ..SvmConfig::default()
        };
        let (_, report) = svm_train(&x, &y, &cfg).unwrap();
        for hist in &report.objective_history {
            assert_eq!(hist.len(), 50);
            for w in hist.windows(2) {
                assert!(w[1] <= w[0] + 1e-3, "{} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn sgd_objective_trends_down_on_overlapping_classes() {
        let (x, y) = blobs(&[vec![0.0, 0.0, 1.0], vec![1.5, 0.0, 0.0], vec![0.0, 1.5, 0.0]], 60, 1.0, 8);
        let cfg = SvmConfig {
            solver: SvmSolver::Sgd,
            ..SvmConfig::default()
        };
        let (_, report) = svm_train(&x, &y, &cfg).unwrap();
        for hist in &report.objective_history {
            let head = hist[..5].iter().sum::<f64>() / 5.0;
            let tail = hist[45..].iter().sum::<f64>() / 5.0;
            assert!(tail <= head, "{head} -> {tail}");
        }
    }

    #[test]
    fn dual_refinement_does_not_raise_the_objective() {
        let (x, y) = blobs(&[vec![0.0, 0.0], vec![1.0, 1.0]], 50, 1.0, 2);
        let sgd = svm_train(&x, &y, &SvmConfig { solver: SvmSolver::Sgd, ..Default::default() }).unwrap().1;
        let exact = svm_train(&x, &y, &SvmConfig::default()).unwrap().1;
        for (a, b) in exact.objective.iter().zip(&sgd.objective) {
            assert!(a <= &(b + 1e-12));
        }
    }

    #[test]
    fn identical_vectors_warn() {
        let x = vec![vec![1.0, 2.0]; 6];
        let y = vec![0, 1, 0, 1, 0, 1];
        let (m, report) = svm_train(&x, &y, &SvmConfig::default()).unwrap();
        assert_eq!(report.warnings.len(), 1);
        let s = m.scores(&x[0]).unwrap();
        assert!((s[0] - s[1]).abs() < 1e-9);
    }

    #[test]
    fn duplicating_the_data_keeps_the_decision_function() {
        let (x, y) = blobs(&[vec![0.0, 0.0], vec![1.0, 0.5], vec![0.0, 1.5]], 30, 0.8, 4);
        let (a, _) = svm_train(&x, &y, &SvmConfig::default()).unwrap();
        let x2: Vec<_> = x.iter().chain(&x).cloned().collect();
        let y2: Vec<_> = y.iter().chain(&y).copied().collect();
        let (b, _) = svm_train(&x2, &y2, &SvmConfig::default()).unwrap();
        for probe in gaussian_cloud(20, 2, 9).chunks(2) {
            for (sa, sb) in a.scores(probe).unwrap().iter().zip(b.scores(probe).unwrap()) {
                assert!((sa - sb).abs() < 1e-6, "{sa} vs {sb}");
            }
        }
    }

    #[test]
    fn svm_predict_contract() {
        let m = SvmModel {
            weights: vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            intercepts: vec![0.0; 3],
            lambda: 1e-4,
        };
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap().0, 0);
        assert_eq!(m.predict(&[1.0, 3.0]).unwrap().0, 2);
        assert_eq!(m.predict(&[100.0, 300.0]).unwrap().0, 2);
        assert!(matches!(m.predict(&[1.0]), Err(ClassicalError::DimensionMismatch { .. })));
        assert!(matches!(
            svm_train(&[vec![1.0], vec![2.0]], &[1, 1], &SvmConfig::default()),
            Err(ClassicalError::SingleClassData)
        ));
    }

    #[test]
    fn standardizer_uses_given_rows_only() {
        let train = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(&train).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
        assert_eq!(s.transform(&[4.0, 6.0]).unwrap(), vec![2.0, 1.0]);
    }

    #[test]
    fn single_component_is_the_closed_form() {
        let data = gaussian_cloud(50, 3, 1);
        let rows: Vec<&[f64]> = data.chunks(3).collect();
        let cfg = GmmConfig { components: 1, ..Default::default() };
        let m = fit_mixture(&rows, &cfg, 0).unwrap();
        let as_vecs: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        let (mean, std) = synthattr_testkit::stats::two_pass_mean_std(&as_vecs);
        for d in 0..3 {
            assert!((m.means[0][d] - mean[d]).abs() < 1e-12);
            assert!((m.variances[0][d] - (std[d] * std[d]).max(1e-6)).abs() < 1e-12);
        }
        assert_eq!(m.weights, vec![1.0]);
    }

    #[test]
    fn two_component_recovery_and_monotone_likelihood() {
        let data = mixture_1d(&[(-5.0, 1.0), (5.0, 1.0)], 500, 17);
        let rows: Vec<&[f64]> = data.iter().map(std::slice::from_ref).collect();
        let m = fit_mixture(&rows, &GmmConfig { components: 2, ..Default::default() }, 3).unwrap();
        let mut means: Vec<(f64, f64)> = m.means.iter().map(|v| v[0]).zip(m.weights.iter().copied()).collect();
        means.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!((means[0].0 + 5.0).abs() < 0.2 && (means[1].0 - 5.0).abs() < 0.2);
        assert!((means[0].1 - 0.5).abs() < 0.05);
        assert!(m.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        let r = m.responsibilities(&[0.3]);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples_per_class() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(matches!(
            gmm_fit(&x, &[0, 0, 1], &GmmConfig::default()),
            Err(ClassicalError::TooFewSamples { class: 0, .. })
        ));
    }

    fn lone(mean: f64, var: f64) -> Mixture {
        Mixture {
            weights: vec![1.0],
            means: vec![vec![mean, mean]],
            variances: vec![vec![var, var]],
            log_likelihood: vec![],
        }
    }

    #[test]
    fn gmm_predict_contract() {
        let model = GmmModel {
            classes: vec![lone(0.0, 1.0), lone(0.0, 0.2), lone(3.0, 1.0)],
            log_priors: vec![(1.0f64 / 3.0).ln(); 3],
        };
        assert_eq!(model.predict(&[0.0, 0.0]).unwrap().0, 1);
        let twins = GmmModel {
            classes: vec![lone(1.0, 1.0), lone(1.0, 1.0)],
            log_priors: vec![0.5f64.ln(); 2],
        };
        assert_eq!(twins.predict(&[0.4, 2.0]).unwrap().0, 0);
        assert!(model.predict(&[1.0]).is_err());
    }

    #[test]
    fn posteriors_match_direct_density() {
        let (x, y) = blobs(&[vec![0.0, 0.0], vec![2.0, 1.0]], 40, 1.0, 5);
        let model = gmm_fit(&x, &y, &GmmConfig { components: 2, ..Default::default() }).unwrap();
        let density = |m: &Mixture, p: &[f64]| -> f64 {
            (0..m.weights.len())
                .map(|k| {
                    let mut d = m.weights[k];
                    for i in 0..p.len() {
                        let v = m.variances[k][i];
                        d *= (-(p[i] - m.means[k][i]).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
                    }
                    d
                })
                .sum()
        };
        for p in x.iter().take(10) {
            let joint: Vec<f64> = model
                .classes
                .iter()
                .zip(&model.log_priors)
                .map(|(m, lp)| lp.exp() * density(m, p))
                .collect();
            let total: f64 = joint.iter().sum();
            let (_, post) = model.predict(p).unwrap();
            for (a, b) in post.iter().zip(&joint) {
                assert!((a.exp() - b / total).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn model_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (x, y) = two_clusters();
        let (svm, _) = svm_train(&x, &y, &SvmConfig::default()).unwrap();
        svm.save(dir.path().join("svm.bin")).unwrap();
        assert_eq!(SvmModel::load(dir.path().join("svm.bin")).unwrap(), svm);
        svm.write_weights_csv(dir.path().join("w.csv")).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("w.csv")).unwrap();
        assert!(csv.starts_with("class,bias,w0,w1\n"));
        let gmm = gmm_fit(&x, &y, &GmmConfig::default()).unwrap();
        gmm.save(dir.path().join("gmm.bin")).unwrap();
        let back = GmmModel::load(dir.path().join("gmm.bin")).unwrap();
        assert_eq!(back.log_priors, gmm.log_priors);
        assert_eq!(back.classes[1].means, gmm.classes[1].means);
        assert!(SvmModel::load(dir.path().join("gmm.bin")).is_err());
    }
}
