//! Experiment orchestration: the discretised uncertainty set, exhaustive
//! ground truth, error metrics, validation estimators and replication.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::active::{self, Learner, Oracle, SamplerConfig};
use crate::error::{Error, Result};
use crate::mtl::{self, Formula, Label};
use crate::ode::IntegratorConfig;
use crate::svm::{self, SvmConfig, SvmModel, TrainingSet};
use crate::systems::System;

/// Default cap on `|Θ_d|`.
pub const DEFAULT_GRID_LIMIT: usize = 2_000_000;

// ─── Grid ────────────────────────────────────────────────────────────

/// One grid dimension: `count` evenly spaced values on `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub const fn new(min: f64, max: f64, count: usize) -> Self {
        Self { min, max, count }
    }

    /// `i`-th value; endpoints are exact.
    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.max
        } else {
            self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64
        }
    }
}

/// Per-dimension resolution of `Θ_d`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub axes: Vec<Axis>,
}

impl GridSpec {
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// `Π counts`, without overflow.
    pub fn total(&self) -> u128 {
        self.axes.iter().map(|a| a.count as u128).product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::InvalidConfig("grid needs at least one axis".into()));
        }
        for (k, a) in self.axes.iter().enumerate() {
            if a.count < 2 {
                return Err(Error::InvalidConfig(format!("grid axis {k}: count must be >= 2, got {}", a.count)));
            }
            if !(a.min < a.max) || !a.min.is_finite() || !a.max.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "grid axis {k}: need finite min < max, got [{}, {}]",
                    a.min, a.max
                )));
            }
        }
        Ok(())
    }
}

/// Grid points in row-major order (last axis fastest).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    spec: GridSpec,
    points: Vec<f64>,
}

impl Grid {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points[i * d..(i + 1) * d]
    }

    /// All coordinates, row-major.
    pub fn flat(&self) -> &[f64] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim())
    }
}

/// Cartesian product of the axis linspaces, endpoints inclusive.
pub fn build_grid(spec: &GridSpec, limit: usize) -> Result<Grid> {
    spec.validate()?;
    let total = spec.total();
    if total > limit as u128 {
        return Err(Error::Overflow { points: total, limit });
    }
    let n = total as usize;
    let d = spec.dim();
    let values: Vec<Vec<f64>> = spec.axes.iter().map(|a| (0..a.count).map(|i| a.value(i)).collect()).collect();
    let mut points = Vec::with_capacity(n * d);
    let mut idx = vec![0usize; d];
    for _ in 0..n {
        for k in 0..d {
            points.push(values[k][idx[k]]);
        }
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < spec.axes[k].count {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(Grid { spec: spec.clone(), points })
}

// ─── Oracles ─────────────────────────────────────────────────────────

/// Labels θ by simulating the closed loop and checking the requirement.
pub struct SimulationOracle<'a> {
    pub system: &'a System,
    pub formula: &'a Formula,
    pub integrator: IntegratorConfig,
}

impl Oracle for SimulationOracle<'_> {
    fn label(&self, _index: usize, theta: &[f64]) -> Result<Label> {
        let traj = self.system.simulate(theta, &self.integrator)?;
        mtl::label(self.formula, &traj)
    }
}

// ─── Ground truth ────────────────────────────────────────────────────

/// Label of every grid point, keyed by the configuration that produced it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    hash: String,
    labels: Vec<Label>,
}

const TRUTH_HEADER: &str = "# clverify ground truth v1";

/// sha256 over everything that determines the labels.
pub fn config_hash(system: &System, formula: &Formula, grid: &GridSpec, integrator: &IntegratorConfig) -> String {
    let mut text = String::new();
    let _ = writeln!(text, "system {}", system.fingerprint());
    let _ = writeln!(text, "formula {formula}");
    for a in &grid.axes {
        let _ = writeln!(text, "axis {:?} {:?} {}", a.min, a.max, a.count);
    }
    let _ = writeln!(
        text,
        "integrator {:?} {:?} {:?}",
        integrator.step_h, integrator.t_final, integrator.divergence_radius
    );
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl GroundTruth {
    pub fn new(hash: String, labels: Vec<Label>) -> Self {
        Self { hash, labels }
    }

    /// Simulates and labels every grid point.
    pub fn compute(system: &System, formula: &Formula, grid: &Grid, integrator: &IntegratorConfig) -> Result<Self> {
        let oracle = SimulationOracle { system, formula, integrator: *integrator };
        Self::from_oracle(&oracle, grid, config_hash(system, formula, grid.spec(), integrator))
    }

    pub fn from_oracle(oracle: &dyn Oracle, grid: &Grid, hash: String) -> Result<Self> {
        let labels = (0..grid.len())
            .into_par_iter()
            .map(|i| oracle.label(i, grid.point(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { hash, labels })
    }

    /// Loads `<dir>/<hash>.truth` when present, otherwise computes and saves
    /// it. Returns the truth and the number of simulations executed.
    pub fn cached(
        dir: &Path,
        system: &System,
        formula: &Formula,
        grid: &Grid,
        integrator: &IntegratorConfig,
    ) -> Result<(Self, usize)> {
        let hash = config_hash(system, formula, grid.spec(), integrator);
        let path = dir.join(format!("{hash}.truth"));
        if path.exists() {
            let truth = Self::load(&path)?;
            if truth.hash == hash && truth.labels.len() == grid.len() {
                return Ok((truth, 0));
            }
        }
        let truth = Self::compute(system, formula, grid, integrator)?;
        std::fs::create_dir_all(dir)?;
        truth.save(&path)?;
        Ok((truth, grid.len()))
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, index: usize) -> Label {
        self.labels[index]
    }

    pub fn unsafe_fraction(&self) -> f64 {
        self.labels.iter().filter(|l| !l.is_safe()).count() as f64 / self.labels.len().max(1) as f64
    }

    /// Header, hash, count, then one `+`/`-` per point, 100 per line.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.labels.len() + self.labels.len() / 100 + 128);
        let _ = writeln!(s, "{TRUTH_HEADER}");
        let _ = writeln!(s, "hash {}", self.hash);
        let _ = writeln!(s, "labels {}", self.labels.len());
        for chunk in self.labels.chunks(100) {
            s.extend(chunk.iter().map(|l| if l.is_safe() { '+' } else { '-' }));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |message: String| Error::Format { what: "ground truth", message };
        let mut lines = text.lines();
        if lines.next() != Some(TRUTH_HEADER) {
            return Err(bad("missing header".into()));
        }
        let hash = lines
            .next()
            .and_then(|l| l.strip_prefix("hash "))
            .ok_or_else(|| bad("missing hash".into()))?
            .to_string();
        let n: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("labels "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("missing label count".into()))?;
        let mut labels = Vec::with_capacity(n);
        for line in lines {
            for c in line.chars() {
                labels.push(match c {
                    '+' => Label::Safe,
                    '-' => Label::Unsafe,
                    other => return Err(bad(format!("unexpected character {other:?}"))),
                });
            }
        }
        if labels.len() != n {
            return Err(bad(format!("expected {n} labels, found {}", labels.len())));
        }
        Ok(Self { hash, labels })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

impl Oracle for GroundTruth {
    fn label(&self, index: usize, _theta: &[f64]) -> Result<Label> {
        self.labels
            .get(index)
            .copied()
            .ok_or(Error::DimensionMismatch { expected: self.labels.len(), got: index + 1 })
    }
}

// ─── Metrics ─────────────────────────────────────────────────────────

/// Misclassification counts over the whole grid.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ErrorReport {
    pub points: usize,
    /// Truly unsafe, predicted safe.
    pub unsafe_misses: usize,
    /// Truly safe, predicted unsafe.
    pub safe_misses: usize,
}

impl ErrorReport {
    pub fn total(&self) -> f64 {
        (self.unsafe_misses + self.safe_misses) as f64 / self.points as f64
    }

    pub fn unsafe_rate(&self) -> f64 {
        self.unsafe_misses as f64 / self.points as f64
    }

    pub fn safe_rate(&self) -> f64 {
        self.safe_misses as f64 / self.points as f64
    }
}

/// Compares predictions against ground truth at every grid point.
pub fn true_error(model: &SvmModel, grid: &Grid, truth: &GroundTruth) -> Result<ErrorReport> {
    if truth.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: truth.len() });
    }
    let predicted = model.predict_many(grid.flat());
    Ok(error_counts(&predicted, truth.labels()))
}

pub fn error_counts(predicted: &[Label], truth: &[Label]) -> ErrorReport {
    let mut report = ErrorReport { points: truth.len(), unsafe_misses: 0, safe_misses: 0 };
    for (p, t) in predicted.iter().zip(truth) {
        match (t, p) {
            (Label::Unsafe, Label::Safe) => report.unsafe_misses += 1,
            (Label::Safe, Label::Unsafe) => report.safe_misses += 1,
            _ => {}
        }
    }
    report
}

/// Contiguous folds of a seeded shuffle of `0..n`.
pub fn kfold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: k });
    }
    if n < k {
        return Err(Error::TooFewPoints { needed: k, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = active::shuffled((0..n).collect(), &mut rng);
    Ok((0..k).map(|f| order[f * n / k..(f + 1) * n / k].to_vec()).collect())
}

/// Held-out misclassification rate pooled over `k` folds.
pub fn kfold_error(data: &TrainingSet, k: usize, svm: &SvmConfig, seed: u64) -> Result<f64> {
    let folds = kfold_partition(data.len(), k, seed)?;
    let mut wrong = 0usize;
    for fold in &folds {
        let mut held = vec![false; data.len()];
        for &i in fold {
            held[i] = true;
        }
        let train_idx: Vec<usize> = (0..data.len()).filter(|i| !held[*i]).collect();
        let model = svm::train_with(&data.select(&train_idx), svm, None)?.model;
        for &i in fold {
            if model.label_of(model.decision_unchecked(&data.points()[i])) != data.labels()[i] {
                wrong += 1;
            }
        }
    }
    Ok(wrong as f64 / data.len() as f64)
}

/// Misclassification rate on a held-out set.
pub fn independent_validation_error(model: &SvmModel, holdout: &TrainingSet) -> Result<f64> {
    if holdout.is_empty() {
        return Err(Error::ValueUndefined("validation error of an empty holdout set"));
    }
    let wrong = holdout
        .points()
        .iter()
        .zip(holdout.labels())
        .filter(|(p, l)| model.label_of(model.decision_unchecked(p)) != **l)
        .count();
    Ok(wrong as f64 / holdout.len() as f64)
}

/// `P(y = +1 | H) = 1 / (1 + exp(A·H + B))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlattScaling {
    pub a: f64,
    pub b: f64,
}

impl PlattScaling {
    pub fn probability(&self, h: f64) -> f64 {
        let f = self.a * h + self.b;
        if f >= 0.0 {
            let e = (-f).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + f.exp())
        }
    }
}

/// Fits the sigmoid to the model's decision values on `calib`.
pub fn platt_scale(model: &SvmModel, calib: &TrainingSet) -> Result<PlattScaling> {
    let dec: Vec<f64> = calib.points().iter().map(|p| model.decision_unchecked(p)).collect();
    platt_fit(&dec, calib.labels())
}

/// Regularised maximum-likelihood sigmoid fit by Newton's method with
/// backtracking.
pub fn platt_fit(dec: &[f64], labels: &[Label]) -> Result<PlattScaling> {
    const MAX_ITER: usize = 100;
    const MIN_STEP: f64 = 1e-10;
    const SIGMA: f64 = 1e-12;
    const EPS: f64 = 1e-10;

    let pos = labels.iter().filter(|l| l.is_safe()).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::SingleClassData);
    }
    let hi = (pos + 1.0) / (pos + 2.0);
    let lo = 1.0 / (neg + 2.0);
    let t: Vec<f64> = labels.iter().map(|l| if l.is_safe() { hi } else { lo }).collect();

    let objective = |a: f64, b: f64| -> f64 {
        dec.iter()
            .zip(&t)
            .map(|(d, ti)| {
                let f = d * a + b;
                if f >= 0.0 {
                    ti * f + (-f).exp().ln_1p()
                } else {
                    (ti - 1.0) * f + f.exp().ln_1p()
                }
            })
            .sum()
    };

    let mut a = 0.0;
    let mut b = ((neg + 1.0) / (pos + 1.0)).ln();
    let mut fval = objective(a, b);
    for _ in 0..MAX_ITER {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (SIGMA, SIGMA, 0.0, 0.0, 0.0);
        for (d, ti) in dec.iter().zip(&t) {
            let f = d * a + b;
            let (p, q) = if f >= 0.0 {
                let e = (-f).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = f.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += d * d * d2;
            h22 += d2;
            h21 += d * d2;
            let d1 = ti - p;
            g1 += d * d1;
            g2 += d1;
        }
        if g1.abs() < EPS && g2.abs() < EPS {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < MIN_STEP {
            break;
        }
    }
    Ok(PlattScaling { a, b })
}

// ─── Experiments ─────────────────────────────────────────────────────

/// Optional per-iteration estimates that do not use ground truth.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Folds for cross-validation; `None` disables it.
    pub kfold: Option<usize>,
    /// Draw an independent validation set of size `|L|` each iteration.
    pub validation: bool,
}

/// Metrics for one loop iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationReport {
    pub iteration: usize,
    pub labeled: usize,
    pub retrains: usize,
    pub error: Option<ErrorReport>,
    pub kfold: Option<f64>,
    pub validation: Option<f64>,
    /// Cumulative retrain wall time; excluded from deterministic outputs.
    pub retrain_time: Duration,
}

/// Complete record of one seeded verification run.
#[derive(Clone, Debug)]
pub struct ExperimentRun {
    pub seed: u64,
    pub reports: Vec<IterationReport>,
    pub model: SvmModel,
    pub training: TrainingSet,
    pub labeled: Vec<usize>,
    pub oracle_calls: usize,
}

impl ExperimentRun {
    pub fn final_report(&self) -> &IterationReport {
        self.reports.last().expect("a run has at least the initial report")
    }

    /// Total true error per iteration.
    pub fn error_curve(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.error.map_or(f64::NAN, |e| e.total())).collect()
    }
}

/// Everything a seeded run needs besides the seed.
pub struct Experiment<'a> {
    pub grid: &'a Grid,
    pub oracle: &'a dyn Oracle,
    pub truth: Option<&'a GroundTruth>,
    pub sampler: SamplerConfig,
    pub svm: SvmConfig,
    pub estimators: EstimatorConfig,
}

const STREAM_INITIAL: u64 = 1;
const STREAM_LEARNER: u64 = 2;
const STREAM_ESTIMATE: u64 = 3;

impl Experiment<'_> {
    pub fn run(&self, seed: u64) -> Result<ExperimentRun> {
        self.sampler.validate()?;
        self.svm.validate()?;
        let initial = active::random_initial(self.grid.len(), self.sampler.initial_size, derive_seed(seed, STREAM_INITIAL))?;
        let mut reports = Vec::with_capacity(self.sampler.iterations + 1);
        let mut observe = |it: usize, learner: &Learner<'_, '_>| -> Result<()> {
            reports.push(self.report(it, learner, seed)?);
            Ok(())
        };
        let out = active::run_loop(
            self.grid,
            &initial,
            self.oracle,
            &self.sampler,
            &self.svm,
            derive_seed(seed, STREAM_LEARNER),
            &mut observe,
        )?;
        Ok(ExperimentRun {
            seed,
            reports,
            model: out.model,
            training: out.training,
            labeled: out.labeled,
            oracle_calls: out.oracle_calls,
        })
    }

    fn report(&self, iteration: usize, learner: &Learner<'_, '_>, seed: u64) -> Result<IterationReport> {
        let model = learner.model();
        let error = self.truth.map(|t| true_error(model, self.grid, t)).transpose()?;
        let est_seed = derive_seed(derive_seed(seed, STREAM_ESTIMATE), iteration as u64);
        let kfold = match self.estimators.kfold {
            Some(k) if learner.training().len() >= k => Some(kfold_error(learner.training(), k, &self.svm, est_seed)?),
            _ => None,
        };
        let validation = if self.estimators.validation {
            let holdout = self.validation_set(learner, est_seed)?;
            independent_validation_error(model, &holdout).ok()
        } else {
            None
        };
        Ok(IterationReport {
            iteration,
            labeled: learner.training().len(),
            retrains: learner.retrains(),
            error,
            kfold,
            validation,
            retrain_time: learner.retrain_time(),
        })
    }

    /// `|L|` unlabelled grid points, labelled outside the sampling budget.
    fn validation_set(&self, learner: &Learner<'_, '_>, seed: u64) -> Result<TrainingSet> {
        let pool = learner.pool().indices();
        let n = learner.training().len().min(pool.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picks: Vec<usize> = rand::seq::index::sample(&mut rng, pool.len(), n).into_iter().map(|k| pool[k]).collect();
        picks.sort_unstable();
        let labels = picks
            .par_iter()
            .map(|&i| match self.truth {
                Some(t) => Ok(t.get(i)),
                None => self.oracle.label(i, self.grid.point(i)),
            })
            .collect::<Result<Vec<_>>>()?;
        TrainingSet::from_parts(picks.iter().map(|&i| self.grid.point(i).to_vec()).collect(), labels)
    }
}

/// Seed of the `k`-th independent stream derived from `master`; a bijection
/// in `k` for fixed `master`.
pub fn derive_seed(master: u64, k: u64) -> u64 {
    let mut z = master.wrapping_add(k.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seeds(master: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|k| derive_seed(master, k)).collect()
}

/// Per-iteration mean and sample standard deviation of true error.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Runs `run` once per seed and aggregates the error curves.
pub fn replicate<F>(seeds: &[u64], run: F) -> Result<(Vec<ExperimentRun>, Aggregate)>
where
    F: Fn(u64) -> Result<ExperimentRun> + Sync,
{
    if seeds.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: seeds.len() });
    }
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidConfig("replicate seeds must be distinct".into()));
    }
    let runs = seeds.par_iter().map(|&s| run(s)).collect::<Result<Vec<_>>>()?;
    let curves: Vec<Vec<f64>> = runs.iter().map(|r| r.error_curve()).collect();
    Ok((runs, aggregate(&curves)?))
}

/// Mean and sample σ per position; all curves must have equal length.
pub fn aggregate(curves: &[Vec<f64>]) -> Result<Aggregate> {
    let len = curves.first().map_or(0, Vec::len);
    if let Some(c) = curves.iter().find(|c| c.len() != len) {
        return Err(Error::IncompatibleRuns(format!("curve lengths {len} and {}", c.len())));
    }
    let n = curves.len() as f64;
    let mut mean = vec![0.0; len];
    let mut sigma = vec![0.0; len];
    for i in 0..len {
        let m = curves.iter().map(|c| c[i]).sum::<f64>() / n;
        let var = if curves.len() > 1 {
            curves.iter().map(|c| (c[i] - m).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        mean[i] = m;
        sigma[i] = var.sqrt();
    }
    Ok(Aggregate { mean, sigma })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec2(n1: usize, n2: usize) -> GridSpec {
        GridSpec { axes: vec![Axis::new(0.0, 1.0, n1), Axis::new(0.0, 1.0, n2)] }
    }

    #[test]
    fn two_by_two_grid_is_row_major() {
        let g = build_grid(&spec2(2, 2), 100).unwrap();
        let pts: Vec<Vec<f64>> = g.iter().map(<[f64]>::to_vec).collect();
        assert_eq!(pts, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn paper_grid_totals() {
        assert_eq!(System::by_name("vdp").unwrap().default_grid().total(), 16_000);
        assert_eq!(System::by_name("clmrac").unwrap().default_grid().total(), 36_400);
        let pch = System::by_name("clmrac_pch").unwrap().default_grid().total();
        assert!((1_280_000..1_290_000).contains(&pch));
    }

    #[test]
    fn grid_endpoints_and_validation() {
        let g = build_grid(&GridSpec { axes: vec![Axis::new(-3.0, 3.0, 7)] }, 100).unwrap();
        assert_eq!(g.point(0), &[-3.0]);
        assert_eq!(g.point(3), &[0.0]);
        assert_eq!(g.point(6), &[3.0]);
        assert!(build_grid(&GridSpec { axes: vec![Axis::new(0.0, 1.0, 1)] }, 100).is_err());
        assert!(build_grid(&GridSpec { axes: vec![Axis::new(1.0, 1.0, 3)] }, 100).is_err());
        assert!(matches!(build_grid(&spec2(20, 20), 399), Err(Error::Overflow { points: 400, limit: 399 })));
    }

    #[test]
    fn error_counting() {
        let truth: Vec<Label> = (0..10).map(|i| Label::from_bool(i >= 3)).collect();
        let all_safe = vec![Label::Safe; 10];
        let r = error_counts(&all_safe, &truth);
        assert!((r.total() - 0.3).abs() < 1e-15);
        assert!((r.unsafe_rate() - 0.3).abs() < 1e-15);
        assert_eq!(r.safe_rate(), 0.0);
        let flipped: Vec<Label> = truth.iter().map(|l| l.flip()).collect();
        assert_eq!(error_counts(&flipped, &truth).total(), 1.0);
        assert_eq!(error_counts(&truth, &truth).total(), 0.0);
    }

    #[test]
    fn truth_text_round_trip() {
        let labels: Vec<Label> = (0..257).map(|i| Label::from_bool(i % 3 == 0)).collect();
        let gt = GroundTruth::new("abc".into(), labels);
        assert_eq!(GroundTruth::from_text(&gt.to_text()).unwrap(), gt);
        assert!(GroundTruth::from_text("nope").is_err());
    }

    #[test]
    fn vdp_truth_on_three_by_three() {
        let sys = System::by_name("vdp").unwrap();
        let formula = mtl::builtin("vdp_roa", mtl::Reading::Prose).unwrap();
        let grid = build_grid(&GridSpec { axes: vec![Axis::new(-3.0, 3.0, 3); 2] }, 100).unwrap();
        let gt = GroundTruth::compute(&sys, &formula, &grid, &sys.default_integrator()).unwrap();
        assert_eq!(gt.get(4), Label::Safe);
        assert_eq!(gt.get(8), Label::Unsafe);
    }

    #[test]
    fn truth_cache_hit_runs_no_simulations() {
        let dir = tempfile::tempdir().unwrap();
        let sys = System::by_name("vdp").unwrap();
        let formula = mtl::builtin("vdp_roa", mtl::Reading::Prose).unwrap();
        let grid = build_grid(&GridSpec { axes: vec![Axis::new(-1.0, 1.0, 3); 2] }, 100).unwrap();
        let cfg = sys.default_integrator();
        let (a, first) = GroundTruth::cached(dir.path(), &sys, &formula, &grid, &cfg).unwrap();
        let (b, second) = GroundTruth::cached(dir.path(), &sys, &formula, &grid, &cfg).unwrap();
        assert_eq!(first, 9);
        assert_eq!(second, 0);
        assert_eq!(a, b);
    }

    #[test]
    fn kfold_partition_covers_each_point_once() {
        let folds = kfold_partition(23, 5, 7).unwrap();
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(folds.iter().all(|f| (4..=5).contains(&f.len())));
        assert!(kfold_partition(3, 5, 0).is_err());
        assert!(kfold_partition(10, 1, 0).is_err());
        assert!(kfold_partition(6, 6, 0).unwrap().iter().all(|f| f.len() == 1));
    }

    #[test]
    fn kfold_on_duplicated_pattern_does_not_fail() {
        let data = TrainingSet::from_parts(
            (0..6).map(|i| vec![i as f64 * 1e-3]).collect(),
            vec![Label::Safe; 6],
        )
        .unwrap();
        assert_eq!(kfold_error(&data, 3, &SvmConfig::default(), 1).unwrap(), 0.0);
    }

    #[test]
    fn empty_holdout_is_undefined() {
        let m = SvmModel::constant(1, Label::Safe, 1.0, Default::default());
        assert!(matches!(
            independent_validation_error(&m, &TrainingSet::new()),
            Err(Error::ValueUndefined(_))
        ));
    }

    #[test]
    fn platt_symmetric_and_single_class() {
        let dec = [-2.0, -1.0, 1.0, 2.0];
        let labels = [Label::Unsafe, Label::Unsafe, Label::Safe, Label::Safe];
        let p = platt_fit(&dec, &labels).unwrap();
        assert!(p.b.abs() < 1e-9);
        assert!(p.a < 0.0);
        assert!((p.probability(0.0) - 0.5).abs() < 1e-9);
        assert!(matches!(platt_fit(&dec, &[Label::Safe; 4]), Err(Error::SingleClassData)));
    }

    #[test]
    fn seeds_are_distinct_and_checked() {
        let seeds = derive_seeds(42, 1000);
        let mut s = seeds.clone();
        s.sort_unstable();
        s.dedup();
        assert_eq!(s.len(), 1000);
        let dummy = |_: u64| -> Result<ExperimentRun> { unreachable!() };
        assert!(replicate(&[5, 5], dummy).is_err());
        assert!(replicate(&[5], dummy).is_err());
    }

    #[test]
    fn aggregate_mean_and_sample_sigma() {
        let agg = aggregate(&[vec![1.0, 0.5], vec![3.0, 0.5]]).unwrap();
        assert_eq!(agg.mean, vec![2.0, 0.5]);
        assert!((agg.sigma[0] - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(agg.sigma[1], 0.0);
        assert!(aggregate(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }
}
