//! Gaussian-process regression over fingerprints with a squared-exponential
//! kernel, marginal-likelihood hyperparameter search, and greedy
//! max-variance active learning.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::{fingerprint_distance, unproject_vector, Fingerprint, FingerprintError};
use crate::frame::Vec3;

/// Relative jitter levels tried in turn when the covariance is not positive definite.
pub const JITTER_LADDER: [f64; 3] = [1e-8, 1e-6, 1e-4];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegressError {
    #[error("need at least {needed} training points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("{inputs} inputs but {targets} targets")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("target {index} is not finite")]
    NonFiniteTarget { index: usize },
    #[error("covariance is singular even with relative jitter {jitter:e}")]
    SingularCovariance { jitter: f64 },
    #[error("invalid hyperparameter search settings: {0}")]
    InvalidSearch(&'static str),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(&'static str),
    #[error("oracle failed on candidate {candidate}: {message}")]
    OracleFailure { candidate: usize, message: String },
    #[error("seed candidate {0} is out of range")]
    InvalidSeed(usize),
    #[error("acquisition mode needs labels for the whole pool")]
    MissingPoolLabels,
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
}

/// Output scale `σ`, length scale `l`, and jitter relative to `σ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GPHyperparameters {
    pub output_scale: f64,
    pub length_scale: f64,
    pub jitter: f64,
}

impl GPHyperparameters {
    pub fn new(output_scale: f64, length_scale: f64) -> Self {
        Self { output_scale, length_scale, jitter: JITTER_LADDER[0] }
    }

    pub fn validate(&self) -> Result<(), RegressError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.output_scale) {
            return Err(RegressError::InvalidHyperparameters("output scale must be positive"));
        }
        if !positive(self.length_scale) {
            return Err(RegressError::InvalidHyperparameters("length scale must be positive"));
        }
        if !positive(self.jitter) {
            return Err(RegressError::InvalidHyperparameters("jitter must be positive"));
        }
        Ok(())
    }

    /// Absolute diagonal noise `jitter · σ²`.
    pub fn noise(&self) -> f64 {
        self.jitter * self.output_scale * self.output_scale
    }

    fn covariance(&self, d2: f64) -> f64 {
        let l = self.length_scale;
        self.output_scale * self.output_scale * (-0.5 * d2 / (l * l)).exp()
    }
}

/// Bounds and start count of the likelihood search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperSearch {
    pub starts: usize,
    /// Output-scale bounds as multiples of the target standard deviation.
    pub output_scale_bounds: [f64; 2],
    /// Length-scale bounds as multiples of the median pairwise distance.
    pub length_scale_bounds: [f64; 2],
    /// Starting relative jitter.
    pub jitter: f64,
}

impl Default for HyperSearch {
    fn default() -> Self {
        Self { starts: 8, output_scale_bounds: [1e-3, 1e3], length_scale_bounds: [1e-2, 1e2], jitter: JITTER_LADDER[0] }
    }
}

impl HyperSearch {
    pub fn validate(&self) -> Result<(), RegressError> {
        let ordered = |b: [f64; 2]| b[0] > 0.0 && b[0] <= b[1] && b[1].is_finite();
        if self.starts == 0 {
            return Err(RegressError::InvalidSearch("starts must be at least 1"));
        }
        if !ordered(self.output_scale_bounds) || !ordered(self.length_scale_bounds) {
            return Err(RegressError::InvalidSearch("bounds must be positive and ordered"));
        }
        if !(self.jitter > 0.0 && self.jitter.is_finite()) {
            return Err(RegressError::InvalidSearch("jitter must be positive"));
        }
        Ok(())
    }
}

/// What a scalar model's target represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "component", rename_all = "kebab-case")]
pub enum TargetKind {
    #[default]
    Scalar,
    PerAtomComponent(usize),
    MolecularComponent(usize),
}

/// `σ² exp(-½ d(a, b)² / l²)`.
pub fn se_kernel(a: &Fingerprint, b: &Fingerprint, hp: &GPHyperparameters) -> Result<f64, RegressError> {
    let d = fingerprint_distance(a, b)?;
    Ok(hp.covariance(d * d))
}

/// Pairwise squared distances of a training set.
fn squared_distances(inputs: &[Fingerprint]) -> Result<DMatrix<f64>, RegressError> {
    let n = inputs.len();
    let mut d2 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let d = fingerprint_distance(&inputs[i], &inputs[j])?;
            d2[(i, j)] = d * d;
            d2[(j, i)] = d * d;
        }
    }
    Ok(d2)
}

/// Unit-scale covariance `exp(-½ D² / l²)` plus relative jitter on the diagonal.
fn unit_covariance(d2: &DMatrix<f64>, length_scale: f64, jitter: f64) -> DMatrix<f64> {
    let inv = 0.5 / (length_scale * length_scale);
    let mut k = d2.map(|v| (-v * inv).exp());
    for i in 0..k.nrows() {
        k[(i, i)] += jitter;
    }
    k
}

/// Factorizes with the first jitter of the ladder (starting at `jitter`) that works.
fn factorize(d2: &DMatrix<f64>, length_scale: f64, jitter: f64) -> Result<(Cholesky<f64, Dyn>, f64), RegressError> {
    let mut ladder = vec![jitter];
    ladder.extend(JITTER_LADDER.iter().copied().filter(|&j| j > jitter));
    for &j in &ladder {
        if let Some(chol) = unit_covariance(d2, length_scale, j).cholesky() {
            return Ok((chol, j));
        }
    }
    Err(RegressError::SingularCovariance { jitter: *ladder.last().expect("nonempty ladder") })
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Profile likelihood at a fixed length scale: the output scale has a closed
/// form optimum, clipped to its bounds.
struct Profile {
    output_scale: f64,
    jitter: f64,
    log_likelihood: f64,
}

fn profile(
    d2: &DMatrix<f64>,
    y: &DVector<f64>,
    length_scale: f64,
    jitter: f64,
    scale_bounds: [f64; 2],
) -> Option<Profile> {
    let (chol, jitter) = factorize(d2, length_scale, jitter).ok()?;
    let n = y.len() as f64;
    let quad = y.dot(&chol.solve(y));
    let var = (quad / n).clamp(scale_bounds[0].powi(2), scale_bounds[1].powi(2));
    let lml = -0.5 * quad / var - 0.5 * n * var.ln() - 0.5 * log_det(&chol) - 0.5 * n * (2.0 * PI).ln();
    lml.is_finite().then_some(Profile { output_scale: var.sqrt(), jitter, log_likelihood: lml })
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len().is_multiple_of(2) { 0.5 * (v[m - 1] + v[m]) } else { v[m] })
}

fn std_dev(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Log marginal likelihood at one search start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchPoint {
    pub hyperparameters: GPHyperparameters,
    pub log_likelihood: f64,
}

/// Trained Gaussian process over fingerprints of one grid.
#[derive(Debug, Clone)]
pub struct GPModel {
    inputs: Vec<Fingerprint>,
    targets: Vec<f64>,
    mean: f64,
    hp: GPHyperparameters,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_likelihood: f64,
    starts: Vec<SearchPoint>,
    pub kind: TargetKind,
}

fn check_training(inputs: &[Fingerprint], targets: &[f64], needed: usize) -> Result<(), RegressError> {
    if inputs.len() != targets.len() {
        return Err(RegressError::LengthMismatch { inputs: inputs.len(), targets: targets.len() });
    }
    if inputs.len() < needed {
        return Err(RegressError::TooFewPoints { needed, got: inputs.len() });
    }
    if let Some(index) = targets.iter().position(|t| !t.is_finite()) {
        return Err(RegressError::NonFiniteTarget { index });
    }
    Ok(())
}

impl GPModel {
    /// Fits with fixed hyperparameters; the jitter is escalated if needed.
    pub fn with_hyperparameters(
        inputs: Vec<Fingerprint>,
        targets: Vec<f64>,
        hp: GPHyperparameters,
    ) -> Result<Self, RegressError> {
        check_training(&inputs, &targets, 1)?;
        hp.validate()?;
        let d2 = squared_distances(&inputs)?;
        Self::assemble(inputs, targets, &d2, hp, Vec::new())
    }

    fn assemble(
        inputs: Vec<Fingerprint>,
        targets: Vec<f64>,
        d2: &DMatrix<f64>,
        hp: GPHyperparameters,
        starts: Vec<SearchPoint>,
    ) -> Result<Self, RegressError> {
        let mean = targets.iter().sum::<f64>() / targets.len() as f64;
        let y = DVector::from_iterator(targets.len(), targets.iter().map(|t| t - mean));
        let (chol, jitter) = factorize(d2, hp.length_scale, hp.jitter)?;
        let hp = GPHyperparameters { jitter, ..hp };
        let var = hp.output_scale * hp.output_scale;
        let n = y.len() as f64;
        let unit_alpha = chol.solve(&y);
        let log_likelihood =
            -0.5 * y.dot(&unit_alpha) / var - 0.5 * n * var.ln() - 0.5 * log_det(&chol) - 0.5 * n * (2.0 * PI).ln();
        Ok(Self {
            inputs,
            targets,
            mean,
            hp,
            chol,
            alpha: unit_alpha / var,
            log_likelihood,
            starts,
            kind: TargetKind::Scalar,
        })
    }

    pub fn hyperparameters(&self) -> &GPHyperparameters {
        &self.hp
    }

    pub fn inputs(&self) -> &[Fingerprint] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Training target mean used as the prior mean.
    pub fn target_mean(&self) -> f64 {
        self.mean
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Likelihood at each start of the hyperparameter search (empty for fixed hyperparameters).
    pub fn search_starts(&self) -> &[SearchPoint] {
        &self.starts
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn grid_hash(&self) -> u64 {
        self.inputs[0].grid_hash()
    }

    fn cross_covariance(&self, query: &Fingerprint) -> Result<DVector<f64>, RegressError> {
        let mut k = DVector::zeros(self.inputs.len());
        for (i, x) in self.inputs.iter().enumerate() {
            k[i] = se_kernel(x, query, &self.hp)?;
        }
        Ok(k)
    }

    /// Posterior mean and variance at `query`.
    pub fn predict(&self, query: &Fingerprint) -> Result<(f64, f64), RegressError> {
        let k = self.cross_covariance(query)?;
        let mean = self.mean + k.dot(&self.alpha);
        let var_prior = self.hp.output_scale * self.hp.output_scale;
        let v = self.chol.solve(&k);
        let var = var_prior - k.dot(&v) / var_prior;
        Ok((mean, var.max(0.0)))
    }

    /// Mean over the fingerprints of one structure; variance is the largest.
    pub fn predict_set(&self, queries: &[Fingerprint]) -> Result<(f64, f64), RegressError> {
        let mut mean = 0.0;
        let mut var: f64 = 0.0;
        for q in queries {
            let (m, v) = self.predict(q)?;
            mean += m;
            var = var.max(v);
        }
        Ok((mean / queries.len().max(1) as f64, var))
    }
}

/// Fits a GP, choosing `(σ, l)` by maximizing the log marginal likelihood.
///
/// `σ` has a closed-form optimum for each `l`; `l` is searched in log space
/// from `starts` evenly spaced points, each refined by golden-section search
/// within its neighbouring interval.
pub fn fit(inputs: Vec<Fingerprint>, targets: Vec<f64>, search: &HyperSearch) -> Result<GPModel, RegressError> {
    check_training(&inputs, &targets, 2)?;
    search.validate()?;
    let d2 = squared_distances(&inputs)?;
    let distances: Vec<f64> = (0..inputs.len())
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| d2[(i, j)].sqrt())
        .filter(|d| *d > 0.0)
        .collect();
    let scale = median(distances).unwrap_or(1.0);
    let spread = match std_dev(&targets) {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    let scale_bounds = search.output_scale_bounds.map(|b| b * spread);
    let lo = (search.length_scale_bounds[0] * scale).ln();
    let hi = (search.length_scale_bounds[1] * scale).ln();

    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let y = DVector::from_iterator(targets.len(), targets.iter().map(|t| t - mean));
    let eval = |log_l: f64| profile(&d2, &y, log_l.exp(), search.jitter, scale_bounds);
    let score = |log_l: f64| eval(log_l).map_or(f64::NEG_INFINITY, |p| p.log_likelihood);

    let n = search.starts;
    let spacing = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    let start_points: Vec<f64> =
        (0..n).map(|i| if n > 1 { lo + spacing * i as f64 } else { 0.5 * (lo + hi) }).collect();

    let mut starts = Vec::with_capacity(n);
    let mut best: Option<(f64, f64)> = None;
    for &s in &start_points {
        let value = score(s);
        if let Some(p) = eval(s) {
            starts.push(SearchPoint {
                hyperparameters: GPHyperparameters {
                    output_scale: p.output_scale,
                    length_scale: s.exp(),
                    jitter: p.jitter,
                },
                log_likelihood: p.log_likelihood,
            });
        }
        let (a, b) = ((s - spacing).max(lo), (s + spacing).min(hi));
        let refined = golden_section_max(&score, a, b, 1e-6);
        for (x, v) in [(s, value), (refined, score(refined))] {
            if v.is_finite() && best.is_none_or(|(_, bv)| v > bv) {
                best = Some((x, v));
            }
        }
    }
    let (log_l, _) = best.ok_or(RegressError::SingularCovariance { jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] })?;
    let p = eval(log_l).expect("best point was evaluated");
    let hp = GPHyperparameters { output_scale: p.output_scale, length_scale: log_l.exp(), jitter: p.jitter };
    GPModel::assemble(inputs, targets, &d2, hp, starts)
}

/// Maximizer of `f` on `[a, b]` by golden-section search (unimodal assumption).
fn golden_section_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Acquisition rule of the active-learning loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Acquisition {
    /// Largest posterior variance.
    #[default]
    MaxVariance,
    /// Posterior variance plus squared prediction error; needs pool labels.
    VariancePlusError,
}

/// Stop criteria and acquisition rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActiveLearning {
    /// Stop once `2 · max posterior std` over the pool falls below this.
    pub max_uncertainty: f64,
    /// Acquisitions allowed beyond the seeds.
    pub max_samples: usize,
    pub acquisition: Acquisition,
}

impl Default for ActiveLearning {
    fn default() -> Self {
        Self { max_uncertainty: 0.1, max_samples: 100, acquisition: Acquisition::MaxVariance }
    }
}

/// One candidate structure with its fingerprints.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub fingerprints: Vec<Fingerprint>,
}

/// One round of the active-learning loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Candidate acquired after this round, `None` on the final round.
    pub acquired: Option<usize>,
    /// `2 · max posterior std` over the pool before acquisition.
    pub max_uncertainty: f64,
}

#[derive(Debug, Clone)]
pub struct ActiveLearningResult {
    pub model: GPModel,
    pub training: Vec<usize>,
    pub labels: Vec<f64>,
    pub trace: Vec<TraceEntry>,
    /// Whether the uncertainty target was met (otherwise the budget ran out).
    pub converged: bool,
}

/// Grows the training set from `seeds` by repeatedly labelling the pool
/// candidate with the highest acquisition score (ties: lowest index).
pub fn active_learn<F>(
    pool: &[Candidate],
    seeds: &[usize],
    mut oracle: F,
    pool_labels: Option<&[f64]>,
    search: &HyperSearch,
    settings: &ActiveLearning,
) -> Result<ActiveLearningResult, RegressError>
where
    F: FnMut(usize) -> Result<f64, String>,
{
    if let Some(&bad) = seeds.iter().find(|&&s| s >= pool.len()) {
        return Err(RegressError::InvalidSeed(bad));
    }
    if settings.acquisition == Acquisition::VariancePlusError && pool_labels.is_none_or(|l| l.len() != pool.len()) {
        return Err(RegressError::MissingPoolLabels);
    }
    let mut label = |i: usize| oracle(i).map_err(|message| RegressError::OracleFailure { candidate: i, message });
    let mut training: Vec<usize> = Vec::new();
    let mut labels = Vec::new();
    for &s in seeds {
        if !training.contains(&s) {
            labels.push(label(s)?);
            training.push(s);
        }
    }
    let mut trace = Vec::new();
    let mut iteration = 0;
    loop {
        let (inputs, targets): (Vec<_>, Vec<_>) = training
            .iter()
            .zip(&labels)
            .flat_map(|(&i, &y)| pool[i].fingerprints.iter().map(move |f| (f.clone(), y)))
            .unzip();
        let model = fit(inputs, targets, search)?;

        let mut max_var: f64 = 0.0;
        let mut pick: Option<(usize, f64)> = None;
        for (i, c) in pool.iter().enumerate() {
            let (mean, var) = model.predict_set(&c.fingerprints)?;
            max_var = max_var.max(var);
            if training.contains(&i) {
                continue;
            }
            let score = match (settings.acquisition, pool_labels) {
                (Acquisition::VariancePlusError, Some(l)) => var + (mean - l[i]).powi(2),
                _ => var,
            };
            if pick.is_none_or(|(_, s)| score > s) {
                pick = Some((i, score));
            }
        }
        let max_uncertainty = 2.0 * max_var.sqrt();
        let done = max_uncertainty < settings.max_uncertainty;
        let exhausted = iteration >= settings.max_samples || pick.is_none();
        if done || exhausted {
            trace.push(TraceEntry { iteration, acquired: None, max_uncertainty });
            return Ok(ActiveLearningResult { model, training, labels, trace, converged: done });
        }
        let (next, _) = pick.expect("checked above");
        trace.push(TraceEntry { iteration, acquired: Some(next), max_uncertainty });
        labels.push(label(next)?);
        training.push(next);
        iteration += 1;
    }
}

/// A fingerprint set with a world-frame vector target.
#[derive(Debug, Clone)]
pub struct VectorSample {
    pub fingerprints: Vec<Fingerprint>,
    pub vector: Vec3,
}

/// Three independent scalar GPs over frame-projected vector components.
#[derive(Debug, Clone)]
pub struct VectorModel {
    pub components: [GPModel; 3],
}

/// Whether vectors belong to atoms or to whole molecules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VectorMode {
    PerAtom,
    Molecular,
}

/// Projects each vector into the frame of each of its fingerprints and fits
/// one GP per component.
pub fn fit_vector(
    samples: &[VectorSample],
    mode: VectorMode,
    search: &HyperSearch,
) -> Result<VectorModel, RegressError> {
    let mut inputs = Vec::new();
    let mut targets: [Vec<f64>; 3] = Default::default();
    for s in samples {
        for f in &s.fingerprints {
            let local = f.frame.project(&s.vector);
            inputs.push(f.clone());
            for c in 0..3 {
                targets[c].push(local[c]);
            }
        }
    }
    let fit_component = |c: usize| -> Result<GPModel, RegressError> {
        let mut m = fit(inputs.clone(), targets[c].clone(), search)?;
        m.kind = match mode {
            VectorMode::PerAtom => TargetKind::PerAtomComponent(c),
            VectorMode::Molecular => TargetKind::MolecularComponent(c),
        };
        Ok(m)
    };
    Ok(VectorModel { components: [fit_component(0)?, fit_component(1)?, fit_component(2)?] })
}

impl VectorModel {
    /// World-frame mean vector (averaged over frames) and per-component variance (largest over frames).
    pub fn predict(&self, fingerprints: &[Fingerprint]) -> Result<(Vec3, Vec3), RegressError> {
        let mut mean = Vec3::zeros();
        let mut var = Vec3::zeros();
        for f in fingerprints {
            let mut local = Vec3::zeros();
            for c in 0..3 {
                let (m, v) = self.components[c].predict(f)?;
                local[c] = m;
                var[c] = var[c].max(v);
            }
            mean += unproject_vector(&f.frame, &local);
        }
        Ok((mean / fingerprints.len().max(1) as f64, var))
    }
}
