//! Sample selection and the closed-loop verification loops.
//!
//! Candidates come from a fixed discretisation of the uncertainty set. The
//! sequential loop picks the unobserved point with the smallest `|H(θ)|`
//! (the expected-model-change maximiser for a bias-free SVM) and retrains
//! after every label. The batch loop picks `M` points per retrain by
//! minimising `λ|H(θ)| + (1 − λ) max_{s∈S} κ(θ, s)`, trading model change
//! against redundancy with the points already in the batch. The passive
//! loop draws batches uniformly without replacement.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mtl::Label;
use crate::svm::{self, rbf, SvmConfig, SvmModel, TrainingSet};
use crate::verify::Grid;

// ─── Pool ────────────────────────────────────────────────────────────

/// Unobserved grid points `U = Θ_d \ Θ_L`, with O(1) removal.
#[derive(Clone, Debug)]
pub struct CandidatePool<'g> {
    grid: &'g Grid,
    remaining: Vec<usize>,
    /// Position of each grid index in `remaining`, or `usize::MAX` once removed.
    position: Vec<usize>,
}

impl<'g> CandidatePool<'g> {
    /// Every grid point.
    pub fn full(grid: &'g Grid) -> Self {
        Self::from_indices(grid, (0..grid.len()).collect())
    }

    pub fn from_indices(grid: &'g Grid, indices: Vec<usize>) -> Self {
        let mut position = vec![usize::MAX; grid.len()];
        for (pos, &i) in indices.iter().enumerate() {
            position[i] = pos;
        }
        Self { grid, remaining: indices, position }
    }

    pub fn grid(&self) -> &'g Grid {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.remaining.len()
    }

    pub fn is_empty(&self) -> bool {
        self.remaining.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.position.get(index).is_some_and(|p| *p != usize::MAX)
    }

    /// Grid indices still available, in internal (not sorted) order.
    pub fn indices(&self) -> &[usize] {
        &self.remaining
    }

    pub fn remove(&mut self, index: usize) -> bool {
        let pos = match self.position.get(index) {
            Some(&p) if p != usize::MAX => p,
            _ => return false,
        };
        let last = *self.remaining.last().expect("nonempty pool");
        self.remaining.swap_remove(pos);
        if last != index {
            self.position[last] = pos;
        }
        self.position[index] = usize::MAX;
        true
    }

    fn nonempty(&self, requested: usize) -> Result<()> {
        if self.remaining.len() < requested.max(1) {
            Err(Error::EmptyPool { requested: requested.max(1), available: self.remaining.len() })
        } else {
            Ok(())
        }
    }

    /// `H` for every remaining candidate, aligned with `indices()`.
    fn decisions(&self, model: &SvmModel) -> Vec<f64> {
        self.remaining
            .par_iter()
            .map(|&i| model.decision_unchecked(self.grid.point(i)))
            .collect()
    }

    fn random(&self, rng: &mut impl Rng) -> usize {
        self.remaining[rng.gen_range(0..self.remaining.len())]
    }
}

/// Points chosen so far within the current batch.
pub type BatchSelection = Vec<usize>;

/// Index of the minimum score; ties go to the smallest grid index.
fn argmin_by_score(indices: &[usize], scores: impl Iterator<Item = f64>) -> usize {
    let mut best = (f64::INFINITY, usize::MAX);
    for (&i, s) in indices.iter().zip(scores) {
        if s < best.0 || (s == best.0 && i < best.1) {
            best = (s, i);
        }
    }
    best.1
}

// ─── Criteria ────────────────────────────────────────────────────────

/// Unobserved point with the smallest `|H(θ)|`. A degenerate (single-class)
/// model carries no boundary information, so a uniform random pick is made.
pub fn expected_model_change_pick(
    model: &SvmModel,
    pool: &CandidatePool<'_>,
    rng: &mut impl Rng,
) -> Result<usize> {
    pool.nonempty(1)?;
    if model.degenerate().is_some() {
        return Ok(pool.random(rng));
    }
    let h = pool.decisions(model);
    Ok(argmin_by_score(pool.indices(), h.iter().map(|v| v.abs())))
}

/// `argmax (1 − ŷ(θ) H(θ))` with `ŷ = sign(H)`; the same point as
/// [`expected_model_change_pick`] under the shared tie-break.
pub fn expected_gradient_pick(model: &SvmModel, pool: &CandidatePool<'_>) -> Result<usize> {
    pool.nonempty(1)?;
    let h = pool.decisions(model);
    Ok(argmin_by_score(
        pool.indices(),
        h.iter().map(|v| {
            let yhat = if *v > 0.0 { 1.0 } else { -1.0 };
            -(1.0 - yhat * v)
        }),
    ))
}

/// Cosine of the angle between the feature-space images of `a` and `b`.
pub fn diversity(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let ab = rbf(a, b, gamma).abs();
    let aa = rbf(a, a, gamma);
    let bb = rbf(b, b, gamma);
    ab / (aa * bb).sqrt()
}

/// Combined batch criterion for one candidate.
pub fn batch_score(h: f64, max_diversity: f64, lambda: f64) -> f64 {
    lambda * h.abs() + (1.0 - lambda) * max_diversity
}

/// Next point of a batch given the points already in it. Members of
/// `partial` must already have been removed from `pool`.
pub fn batch_pick(
    model: &SvmModel,
    pool: &CandidatePool<'_>,
    partial: &[usize],
    lambda: f64,
) -> Result<usize> {
    pool.nonempty(1)?;
    let grid = pool.grid();
    let h = pool.decisions(model);
    let scores = pool.indices().iter().zip(&h).map(|(&i, hv)| {
        let p = grid.point(i);
        let div = partial
            .iter()
            .map(|&s| diversity(p, grid.point(s), model.gamma()))
            .fold(0.0, f64::max);
        batch_score(*hv, div, lambda)
    });
    Ok(argmin_by_score(pool.indices(), scores))
}

/// Selects and removes `m` points. `H` is fixed for the whole batch; the
/// diversity term is maintained incrementally as the batch grows.
pub fn select_batch(
    model: &SvmModel,
    pool: &mut CandidatePool<'_>,
    m: usize,
    lambda: f64,
    rng: &mut impl Rng,
) -> Result<BatchSelection> {
    pool.nonempty(m)?;
    if model.degenerate().is_some() {
        return Ok(select_random(pool, m, rng));
    }
    let grid = pool.grid();
    let order: Vec<usize> = pool.indices().to_vec();
    let h = pool.decisions(model);
    let mut max_div = vec![0.0_f64; order.len()];
    let mut taken = vec![false; order.len()];
    let mut batch = Vec::with_capacity(m);
    for _ in 0..m {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for (k, &i) in order.iter().enumerate() {
            if taken[k] {
                continue;
            }
            let s = batch_score(h[k], max_div[k], lambda);
            if s < best.0 || (s == best.0 && i < best.1) {
                best = (s, i, k);
            }
        }
        let (_, chosen, k) = best;
        taken[k] = true;
        pool.remove(chosen);
        batch.push(chosen);
        let p = grid.point(chosen);
        let gamma = model.gamma();
        max_div
            .par_iter_mut()
            .zip(order.par_iter())
            .for_each(|(d, &i)| *d = d.max(diversity(grid.point(i), p, gamma)));
    }
    Ok(batch)
}

/// Uniform draw of `m` points without replacement; removes them from the pool.
pub fn select_random(pool: &mut CandidatePool<'_>, m: usize, rng: &mut impl Rng) -> BatchSelection {
    let mut out = Vec::with_capacity(m);
    for _ in 0..m.min(pool.len()) {
        let i = pool.random(rng);
        pool.remove(i);
        out.push(i);
    }
    out
}

// ─── Oracle ──────────────────────────────────────────────────────────

/// Source of ground-truth labels, usually a simulation plus requirement check.
pub trait Oracle: Sync {
    fn label(&self, index: usize, theta: &[f64]) -> Result<Label>;
}

impl<F> Oracle for F
where
    F: Fn(usize, &[f64]) -> Result<Label> + Sync,
{
    fn label(&self, index: usize, theta: &[f64]) -> Result<Label> {
        self(index, theta)
    }
}

/// Counts label requests against the simulation budget.
pub struct CountingOracle<'a> {
    inner: &'a dyn Oracle,
    calls: AtomicUsize,
}

impl<'a> CountingOracle<'a> {
    pub fn new(inner: &'a dyn Oracle) -> Self {
        Self { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl Oracle for CountingOracle<'_> {
    fn label(&self, index: usize, theta: &[f64]) -> Result<Label> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.label(index, theta)
    }
}

// ─── Loops ───────────────────────────────────────────────────────────

/// Sampling mode of a verification run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sequential,
    Batch,
    Passive,
}

/// How many points to draw and how to draw them.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub mode: Mode,
    /// `M`; ignored in sequential mode.
    pub batch_size: usize,
    pub lambda: f64,
    pub iterations: usize,
    pub initial_size: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { mode: Mode::Batch, batch_size: 10, lambda: 0.7, iterations: 20, initial_size: 50 }
    }
}

impl SamplerConfig {
    pub fn per_iteration(&self) -> usize {
        match self.mode {
            Mode::Sequential => 1,
            Mode::Batch | Mode::Passive => self.batch_size,
        }
    }

    /// Total simulation budget `N_total`.
    pub fn budget(&self) -> usize {
        self.initial_size + self.iterations * self.per_iteration()
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(format!("lambda must lie in [0, 1), got {}", self.lambda)));
        }
        if self.initial_size == 0 {
            return Err(Error::InvalidConfig("initial_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Bookkeeping for one loop iteration (iteration 0 is the initial model).
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub labeled: usize,
    pub selected: Vec<usize>,
    pub retrains: usize,
    pub retrain_time: Duration,
}

/// Live state of a verification loop: training set, pool and current model.
pub struct Learner<'g, 'o> {
    grid: &'g Grid,
    pool: CandidatePool<'g>,
    training: TrainingSet,
    labeled: Vec<usize>,
    svm: SvmConfig,
    alphas: Vec<f64>,
    model: SvmModel,
    oracle: CountingOracle<'o>,
    rng: ChaCha8Rng,
    retrains: usize,
    retrain_time: Duration,
}

impl<'g, 'o> Learner<'g, 'o> {
    /// Labels `initial` (grid indices) and fits the initial model.
    pub fn new(
        grid: &'g Grid,
        initial: &[usize],
        oracle: &'o dyn Oracle,
        svm: SvmConfig,
        seed: u64,
    ) -> Result<Self> {
        let mut pool = CandidatePool::full(grid);
        for &i in initial {
            if !pool.remove(i) {
                return Err(Error::InvalidConfig(format!("initial index {i} repeated or off-grid")));
            }
        }
        let dim = grid.dim();
        let mut learner = Self {
            grid,
            pool,
            training: TrainingSet::new(),
            labeled: Vec::new(),
            svm,
            alphas: Vec::new(),
            model: SvmModel::constant(dim, Label::Unsafe, svm.gamma, svm.cost),
            oracle: CountingOracle::new(oracle),
            rng: ChaCha8Rng::seed_from_u64(seed),
            retrains: 0,
            retrain_time: Duration::ZERO,
        };
        learner.add_labeled(initial)?;
        let out = svm::train_with(&learner.training, &learner.svm, None)?;
        learner.alphas = out.alphas;
        learner.model = out.model;
        Ok(learner)
    }

    pub fn model(&self) -> &SvmModel {
        &self.model
    }

    pub fn training(&self) -> &TrainingSet {
        &self.training
    }

    /// Grid indices of every labelled point, in labelling order.
    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn pool(&self) -> &CandidatePool<'g> {
        &self.pool
    }

    pub fn grid(&self) -> &'g Grid {
        self.grid
    }

    pub fn retrains(&self) -> usize {
        self.retrains
    }

    pub fn retrain_time(&self) -> Duration {
        self.retrain_time
    }

    pub fn oracle_calls(&self) -> usize {
        self.oracle.calls()
    }

    pub fn svm_config(&self) -> &SvmConfig {
        &self.svm
    }

    fn add_labeled(&mut self, indices: &[usize]) -> Result<()> {
        let grid = self.grid;
        let oracle = &self.oracle;
        let labels: Vec<Label> = indices
            .par_iter()
            .map(|&i| oracle.label(i, grid.point(i)))
            .collect::<Result<_>>()?;
        for (&i, l) in indices.iter().zip(labels) {
            self.training.push(grid.point(i).to_vec(), l)?;
            self.labeled.push(i);
        }
        Ok(())
    }

    fn retrain(&mut self) -> Result<()> {
        let start = Instant::now();
        let out = svm::train_with(&self.training, &self.svm, Some(&self.alphas))?;
        self.retrain_time += start.elapsed();
        self.retrains += 1;
        self.alphas = out.alphas;
        self.model = out.model;
        Ok(())
    }

    fn absorb(&mut self, selected: Vec<usize>) -> Result<Vec<usize>> {
        self.add_labeled(&selected)?;
        self.retrain()?;
        Ok(selected)
    }

    /// One iteration of the sequential loop.
    pub fn sequential_step(&mut self) -> Result<Vec<usize>> {
        let pick = expected_model_change_pick(&self.model, &self.pool, &mut self.rng)?;
        self.pool.remove(pick);
        self.absorb(vec![pick])
    }

    /// One iteration of the batch loop.
    pub fn batch_step(&mut self, m: usize, lambda: f64) -> Result<Vec<usize>> {
        let batch = select_batch(&self.model, &mut self.pool, m, lambda, &mut self.rng)?;
        self.absorb(batch)
    }

    /// One iteration of the passive baseline.
    pub fn passive_step(&mut self, m: usize) -> Result<Vec<usize>> {
        self.pool.nonempty(m)?;
        let batch = select_random(&mut self.pool, m, &mut self.rng);
        self.absorb(batch)
    }

    pub fn step(&mut self, sampler: &SamplerConfig) -> Result<Vec<usize>> {
        match sampler.mode {
            Mode::Sequential => self.sequential_step(),
            Mode::Batch => self.batch_step(sampler.batch_size, sampler.lambda),
            Mode::Passive => self.passive_step(sampler.batch_size),
        }
    }

    fn record(&self, iteration: usize, selected: Vec<usize>) -> IterationRecord {
        IterationRecord {
            iteration,
            labeled: self.training.len(),
            selected,
            retrains: self.retrains,
            retrain_time: self.retrain_time,
        }
    }
}

/// Final state of a loop plus per-iteration records.
#[derive(Clone, Debug)]
pub struct LoopOutcome {
    pub model: SvmModel,
    pub training: TrainingSet,
    pub labeled: Vec<usize>,
    pub records: Vec<IterationRecord>,
    pub retrains: usize,
    pub retrain_time: Duration,
    pub oracle_calls: usize,
}

/// Called with the learner after the initial fit and after every retrain.
pub type Observer<'a> = dyn FnMut(usize, &Learner<'_, '_>) -> Result<()> + 'a;

/// Draws `n` distinct grid indices uniformly at random.
pub fn random_initial(grid_len: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > grid_len {
        return Err(Error::EmptyPool { requested: n, available: grid_len });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rand::seq::index::sample(&mut rng, grid_len, n).into_vec())
}

/// Runs `iterations` steps of the configured sampler.
pub fn run_loop(
    grid: &Grid,
    initial: &[usize],
    oracle: &dyn Oracle,
    sampler: &SamplerConfig,
    svm: &SvmConfig,
    seed: u64,
    observer: &mut Observer<'_>,
) -> Result<LoopOutcome> {
    sampler.validate()?;
    let mut learner = Learner::new(grid, initial, oracle, *svm, seed)?;
    let mut records = vec![learner.record(0, initial.to_vec())];
    observer(0, &learner)?;
    for it in 1..=sampler.iterations {
        let selected = learner.step(sampler)?;
        records.push(learner.record(it, selected));
        observer(it, &learner)?;
    }
    Ok(LoopOutcome {
        model: learner.model.clone(),
        training: learner.training.clone(),
        labeled: learner.labeled.clone(),
        records,
        retrains: learner.retrains,
        retrain_time: learner.retrain_time,
        oracle_calls: learner.oracle_calls(),
    })
}

/// Sequential closed-loop verification with `budget` single-point iterations.
pub fn run_sequential(
    grid: &Grid,
    initial: &[usize],
    oracle: &dyn Oracle,
    budget: usize,
    svm: &SvmConfig,
    seed: u64,
) -> Result<LoopOutcome> {
    let sampler = SamplerConfig {
        mode: Mode::Sequential,
        batch_size: 1,
        lambda: 0.0,
        iterations: budget,
        initial_size: initial.len().max(1),
    };
    run_loop(grid, initial, oracle, &sampler, svm, seed, &mut |_, _| Ok(()))
}

/// Batch closed-loop verification: `iterations` retrains of `m` points each.
#[allow(clippy::too_many_arguments)]
pub fn run_batch(
    grid: &Grid,
    initial: &[usize],
    oracle: &dyn Oracle,
    iterations: usize,
    m: usize,
    lambda: f64,
    svm: &SvmConfig,
    seed: u64,
) -> Result<LoopOutcome> {
    let sampler = SamplerConfig {
        mode: Mode::Batch,
        batch_size: m,
        lambda,
        iterations,
        initial_size: initial.len().max(1),
    };
    run_loop(grid, initial, oracle, &sampler, svm, seed, &mut |_, _| Ok(()))
}

/// Passive baseline with the same bookkeeping as [`run_batch`].
pub fn run_passive(
    grid: &Grid,
    initial: &[usize],
    oracle: &dyn Oracle,
    iterations: usize,
    m: usize,
    svm: &SvmConfig,
    seed: u64,
) -> Result<LoopOutcome> {
    let sampler = SamplerConfig {
        mode: Mode::Passive,
        batch_size: m,
        lambda: 0.0,
        iterations,
        initial_size: initial.len().max(1),
    };
    run_loop(grid, initial, oracle, &sampler, svm, seed, &mut |_, _| Ok(()))
}

/// Random pool shuffle helper used by validation sampling.
pub(crate) fn shuffled(mut v: Vec<usize>, rng: &mut impl Rng) -> Vec<usize> {
    v.shuffle(rng);
    v
}
