//! Soft-margin RBF support vector machine used as the statistical
//! certificate `H(θ) = Σ α_j y_j κ(θ_j, θ) + b` with `b = 0`.
//!
//! Training solves the Lagrangian dual
//!
//! ```text
//! maximize   Σ α_j − ½ Σ Σ α_i α_j y_i y_j κ(θ_i, θ_j)
//! subject to Σ α_j y_j = 0,   0 ≤ α_j ≤ C(y_j)
//! ```
//!
//! with pairwise (SMO) coordinate ascent, selecting the maximal KKT
//! violating pair each iteration. Class-dependent box bounds implement the
//! asymmetric cost matrix: `C(+1) = c_fn`, `C(−1) = c_fp`. The equality
//! constraint can be switched off, in which case single-coordinate ascent
//! on the box-constrained dual is used.

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::mtl::Label;

pub type ThetaPoint = Vec<f64>;

// ─── Data ────────────────────────────────────────────────────────────

/// Labelled training locations `(Θ_L, y)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingSet {
    points: Vec<ThetaPoint>,
    labels: Vec<Label>,
    seen: HashSet<Vec<u64>>,
}

fn key(point: &[f64]) -> Vec<u64> {
    // +0.0 and −0.0 are the same location.
    point.iter().map(|v| if *v == 0.0 { 0 } else { v.to_bits() }).collect()
}

impl TrainingSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_parts(points: Vec<ThetaPoint>, labels: Vec<Label>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::InvalidConfig(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        let mut set = Self::new();
        for (p, l) in points.into_iter().zip(labels) {
            set.push(p, l)?;
        }
        Ok(set)
    }

    /// Appends a labelled point; duplicates and dimension changes are rejected.
    pub fn push(&mut self, point: ThetaPoint, label: Label) -> Result<()> {
        if let Some(first) = self.points.first() {
            check_dim(first.len(), point.len())?;
        }
        if !self.seen.insert(key(&point)) {
            return Err(Error::InvalidConfig(format!("duplicate training point {point:?}")));
        }
        self.points.push(point);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(Vec::len)
    }

    pub fn points(&self) -> &[ThetaPoint] {
        &self.points
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        self.seen.contains(&key(point))
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }

    /// The single observed class, if only one is present.
    pub fn single_class(&self) -> Option<Label> {
        let first = *self.labels.first()?;
        self.labels.iter().all(|l| *l == first).then_some(first)
    }

    /// Subset by index, preserving the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut out = Self::new();
        for &i in indices {
            out.points.push(self.points[i].clone());
            out.labels.push(self.labels[i]);
            out.seen.insert(key(&self.points[i]));
        }
        out
    }

    /// Same points with every label negated.
    pub fn flipped(&self) -> Self {
        let mut out = self.clone();
        out.labels.iter_mut().for_each(|l| *l = l.flip());
        out
    }
}

/// Per-class penalty on training errors.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CostMatrix {
    /// Penalty on safe points predicted unsafe (box bound for `y = +1`).
    pub c_fn: f64,
    /// Penalty on unsafe points predicted safe (box bound for `y = −1`).
    pub c_fp: f64,
}

impl Default for CostMatrix {
    fn default() -> Self {
        Self::scalar(1.0)
    }
}

impl CostMatrix {
    pub fn scalar(c: f64) -> Self {
        Self { c_fn: c, c_fp: c }
    }

    pub fn bound(&self, label: Label) -> f64 {
        match label {
            Label::Safe => self.c_fn,
            Label::Unsafe => self.c_fp,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.c_fn > 0.0 && self.c_fp > 0.0 && self.c_fn.is_finite() && self.c_fp.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("costs must be positive, got {self:?}")))
        }
    }
}

/// Training hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub gamma: f64,
    #[serde(flatten)]
    pub cost: CostMatrix,
    /// Stopping tolerance on the maximal KKT violation.
    pub tolerance: f64,
    /// Multipliers at or below this value are dropped from the model.
    pub alpha_floor: f64,
    /// Keep `Σ α_j y_j = 0` in the dual.
    pub equality_constraint: bool,
    /// Iteration cap in passes over the data (one pass = `n` pair updates).
    pub max_passes_per_point: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            cost: CostMatrix::default(),
            tolerance: 1e-3,
            alpha_floor: 1e-8,
            equality_constraint: true,
            max_passes_per_point: 10,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig("tolerance must be > 0".into()));
        }
        self.cost.validate()
    }
}

// ─── Kernel ──────────────────────────────────────────────────────────

#[inline]
pub(crate) fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let mut d2 = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        d2 += d * d;
    }
    (-d2 / (gamma * gamma)).exp()
}

/// Isotropic RBF kernel `exp(−‖a − b‖² / γ²)`.
pub fn rbf_kernel(a: &[f64], b: &[f64], gamma: f64) -> Result<f64> {
    check_dim(a.len(), b.len())?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidConfig(format!("gamma must be > 0, got {gamma}")));
    }
    Ok(rbf(a, b, gamma))
}

// ─── Model ───────────────────────────────────────────────────────────

/// Trained classifier. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    dim: usize,
    /// Flattened support points, `dim` values each.
    support: Vec<f64>,
    alphas: Vec<f64>,
    labels: Vec<Label>,
    /// `α_j y_j`, cached for evaluation.
    coef: Vec<f64>,
    gamma: f64,
    bias: f64,
    cost: CostMatrix,
    degenerate: Option<Label>,
}

impl SvmModel {
    /// Builds a model from explicit support vectors.
    pub fn from_supports(
        dim: usize,
        supports: Vec<(ThetaPoint, f64, Label)>,
        gamma: f64,
        cost: CostMatrix,
    ) -> Result<Self> {
        let mut support = Vec::with_capacity(dim * supports.len());
        let mut alphas = Vec::with_capacity(supports.len());
        let mut labels = Vec::with_capacity(supports.len());
        for (p, a, l) in supports {
            check_dim(dim, p.len())?;
            if !(a >= 0.0) {
                return Err(Error::InvalidConfig(format!("negative multiplier {a}")));
            }
            support.extend_from_slice(&p);
            alphas.push(a);
            labels.push(l);
        }
        let coef = alphas.iter().zip(&labels).map(|(a, l)| a * l.sign()).collect();
        Ok(Self { dim, support, alphas, labels, coef, gamma, bias: 0.0, cost, degenerate: None })
    }

    /// Constant classifier for single-class data.
    pub fn constant(dim: usize, label: Label, gamma: f64, cost: CostMatrix) -> Self {
        Self {
            dim,
            support: Vec::new(),
            alphas: Vec::new(),
            labels: Vec::new(),
            coef: Vec::new(),
            gamma,
            bias: 0.0,
            cost,
            degenerate: Some(label),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn cost(&self) -> CostMatrix {
        self.cost
    }

    pub fn n_support(&self) -> usize {
        self.alphas.len()
    }

    pub fn support_point(&self, j: usize) -> &[f64] {
        &self.support[j * self.dim..(j + 1) * self.dim]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn support_labels(&self) -> &[Label] {
        &self.labels
    }

    /// `Some(label)` when trained on single-class data.
    pub fn degenerate(&self) -> Option<Label> {
        self.degenerate
    }

    #[inline]
    pub(crate) fn decision_unchecked(&self, theta: &[f64]) -> f64 {
        let mut h = self.bias;
        for (j, c) in self.coef.iter().enumerate() {
            h += c * rbf(&self.support[j * self.dim..(j + 1) * self.dim], theta, self.gamma);
        }
        h
    }

    /// `H(θ)`. A degenerate model returns 0.
    pub fn decision(&self, theta: &[f64]) -> Result<f64> {
        check_dim(self.dim, theta.len())?;
        Ok(self.decision_unchecked(theta))
    }

    /// `H` at every point of a flattened `dim`-wide point list.
    pub fn decision_many(&self, flat: &[f64]) -> Vec<f64> {
        flat.par_chunks(self.dim).map(|p| self.decision_unchecked(p)).collect()
    }

    /// `sign(H(θ))` with ties resolved to unsafe; degenerate models return
    /// their observed class.
    pub fn predict(&self, theta: &[f64]) -> Result<Label> {
        let h = self.decision(theta)?;
        Ok(self.label_of(h))
    }

    pub(crate) fn label_of(&self, h: f64) -> Label {
        match self.degenerate {
            Some(l) => l,
            None => sign_label(h),
        }
    }

    pub fn predict_many(&self, flat: &[f64]) -> Vec<Label> {
        self.decision_many(flat).into_iter().map(|h| self.label_of(h)).collect()
    }

    // ─── Text format ─────────────────────────────────────────────────

    /// Portable text serialization; floats are written in shortest
    /// round-trip form so `from_text(to_text(m)) == m` bit-exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# clverify svm model v1");
        let _ = writeln!(out, "dim {}", self.dim);
        let _ = writeln!(out, "gamma {}", self.gamma);
        let _ = writeln!(out, "cost_fn {}", self.cost.c_fn);
        let _ = writeln!(out, "cost_fp {}", self.cost.c_fp);
        let _ = writeln!(out, "bias {}", self.bias);
        let _ = writeln!(out, "degenerate {}", self.degenerate.map_or("none".to_string(), |l| l.to_string()));
        let _ = writeln!(out, "supports {}", self.n_support());
        for j in 0..self.n_support() {
            let _ = write!(out, "{} {}", self.alphas[j], self.labels[j]);
            for v in self.support_point(j) {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |message: String| Error::Format { what: "svm model", message };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let mut header = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| bad(format!("missing `{name}`")))?;
            let mut parts = line.splitn(2, ' ');
            if parts.next() != Some(name) {
                return Err(bad(format!("expected `{name}`, found `{line}`")));
            }
            Ok(parts.next().unwrap_or("").trim().to_string())
        };
        let num = |s: String| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
        let dim: usize = header("dim")?.parse().map_err(|e| bad(format!("dim: {e}")))?;
        let gamma = num(header("gamma")?)?;
        let c_fn = num(header("cost_fn")?)?;
        let c_fp = num(header("cost_fp")?)?;
        let bias = num(header("bias")?)?;
        let degenerate = match header("degenerate")?.as_str() {
            "none" => None,
            "+1" => Some(Label::Safe),
            "-1" => Some(Label::Unsafe),
            other => return Err(bad(format!("degenerate: `{other}`"))),
        };
        let n: usize = header("supports")?.parse().map_err(|e| bad(format!("supports: {e}")))?;
        let mut supports = Vec::with_capacity(n);
        for _ in 0..n {
            let line = lines.next().ok_or_else(|| bad("missing support line".into()))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != dim + 2 {
                return Err(bad(format!("support line has {} fields, expected {}", fields.len(), dim + 2)));
            }
            let alpha = num(fields[0].to_string())?;
            let label = Label::try_from(fields[1].parse::<i64>().map_err(|e| bad(format!("label: {e}")))?)?;
            let point = fields[2..].iter().map(|s| num(s.to_string())).collect::<Result<Vec<_>>>()?;
            supports.push((point, alpha, label));
        }
        if lines.next().is_some() {
            return Err(bad("trailing content".into()));
        }
        let cost = CostMatrix { c_fn, c_fp };
        let mut model = match degenerate {
            Some(l) if n == 0 => Self::constant(dim, l, gamma, cost),
            _ => Self::from_supports(dim, supports, gamma, cost)?,
        };
        model.bias = bias;
        model.degenerate = degenerate;
        Ok(model)
    }
}

/// Conservative sign: zero maps to unsafe.
pub fn sign_label(h: f64) -> Label {
    if h > 0.0 {
        Label::Safe
    } else {
        Label::Unsafe
    }
}

// ─── Training ────────────────────────────────────────────────────────

/// Result of a training run, including the full multiplier vector for
/// warm-starting the next retrain.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: SvmModel,
    /// One multiplier per training point, in training-set order.
    pub alphas: Vec<f64>,
    pub iterations: usize,
    /// Lagrange multiplier of the equality constraint (the bias the dual
    /// optimum implies); 0 when the constraint is off.
    pub implied_bias: f64,
    pub converged: bool,
}

/// Trains with default settings apart from `gamma` and `cost`.
pub fn train(data: &TrainingSet, gamma: f64, cost: CostMatrix) -> Result<SvmModel> {
    let cfg = SvmConfig { gamma, cost, ..SvmConfig::default() };
    train_with(data, &cfg, None).map(|o| o.model)
}

/// Gram matrix, row-major.
pub fn kernel_matrix(points: &[ThetaPoint], gamma: f64) -> Vec<f64> {
    let n = points.len();
    let mut k = vec![0.0; n * n];
    k.par_chunks_mut(n.max(1)).enumerate().for_each(|(i, row)| {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = if i == j { 1.0 } else { rbf(&points[i], &points[j], gamma) };
        }
    });
    k
}

/// Dual objective `Σα − ½ αᵀQα` for multipliers aligned with `data`.
pub fn dual_objective(data: &TrainingSet, alphas: &[f64], gamma: f64) -> f64 {
    let k = kernel_matrix(data.points(), gamma);
    dual_objective_with(&k, data.labels(), alphas)
}

pub(crate) fn dual_objective_with(k: &[f64], labels: &[Label], alphas: &[f64]) -> f64 {
    let n = alphas.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alphas[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alphas[i] * alphas[j] * labels[i].sign() * labels[j].sign() * k[i * n + j];
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

struct Solver<'a> {
    k: &'a [f64],
    y: Vec<f64>,
    upper: Vec<f64>,
    alpha: Vec<f64>,
    /// Gradient of the minimisation form `½αᵀQα − Σα`.
    grad: Vec<f64>,
    n: usize,
}

impl<'a> Solver<'a> {
    fn new(k: &'a [f64], labels: &[Label], cost: &CostMatrix, alpha: Vec<f64>) -> Self {
        let n = labels.len();
        let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();
        let upper = labels.iter().map(|l| cost.bound(*l)).collect();
        let mut grad = vec![-1.0; n];
        for (j, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                for i in 0..n {
                    grad[i] += y[i] * y[j] * k[i * n + j] * a;
                }
            }
        }
        Self { k, y, upper, alpha, grad, n }
    }

    #[inline]
    fn q(&self, i: usize, j: usize) -> f64 {
        self.y[i] * self.y[j] * self.k[i * self.n + j]
    }

    fn update_gradient(&mut self, i: usize, delta_i: f64, j: usize, delta_j: f64) {
        let n = self.n;
        let (ki, kj) = (&self.k[i * n..(i + 1) * n], &self.k[j * n..(j + 1) * n]);
        let (yi, yj) = (self.y[i] * delta_i, self.y[j] * delta_j);
        for t in 0..n {
            self.grad[t] += self.y[t] * (ki[t] * yi + kj[t] * yj);
        }
    }

    fn in_up(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] < self.upper[t]) || (self.y[t] < 0.0 && self.alpha[t] > 0.0)
    }

    fn in_low(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] > 0.0) || (self.y[t] < 0.0 && self.alpha[t] < self.upper[t])
    }

    /// Maximal violating pair `(i, j, gap)`.
    fn select_pair(&self) -> Option<(usize, usize, f64)> {
        let mut best_up: Option<(usize, f64)> = None;
        let mut best_low: Option<(usize, f64)> = None;
        for t in 0..self.n {
            let v = -self.y[t] * self.grad[t];
            if self.in_up(t) && best_up.is_none_or(|(_, b)| v > b) {
                best_up = Some((t, v));
            }
            if self.in_low(t) && best_low.is_none_or(|(_, b)| v < b) {
                best_low = Some((t, v));
            }
        }
        let ((i, m), (j, big_m)) = (best_up?, best_low?);
        Some((i, j, m - big_m))
    }

    fn step_pair(&mut self, i: usize, j: usize) {
        let (ci, cj) = (self.upper[i], self.upper[j]);
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if self.y[i] != self.y[j] {
            let quad = (self.q(i, i) + self.q(j, j) + 2.0 * self.q(i, j)).max(1e-12);
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > ci - cj {
                if ai > ci {
                    ai = ci;
                    aj = ci - diff;
                }
            } else if aj > cj {
                aj = cj;
                ai = cj + diff;
            }
        } else {
            let quad = (self.q(i, i) + self.q(j, j) - 2.0 * self.q(i, j)).max(1e-12);
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > ci {
                if ai > ci {
                    ai = ci;
                    aj = sum - ci;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > cj {
                if aj > cj {
                    aj = cj;
                    ai = sum - cj;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        self.update_gradient(i, ai - old_i, j, aj - old_j);
    }

    fn solve_with_equality(&mut self, tol: f64, max_iter: usize) -> (usize, bool) {
        let mut iter = 0;
        while iter < max_iter {
            match self.select_pair() {
                Some((i, j, gap)) if gap >= tol => self.step_pair(i, j),
                _ => return (iter, true),
            }
            iter += 1;
        }
        (iter, self.select_pair().is_none_or(|(_, _, gap)| gap < tol))
    }

    /// Projected-gradient violation of coordinate `t` in the box-only dual.
    fn box_violation(&self, t: usize) -> f64 {
        let g = self.grad[t];
        if g < 0.0 && self.alpha[t] < self.upper[t] {
            -g
        } else if g > 0.0 && self.alpha[t] > 0.0 {
            g
        } else {
            0.0
        }
    }

    fn solve_box(&mut self, tol: f64, max_iter: usize) -> (usize, bool) {
        let mut iter = 0;
        while iter < max_iter {
            let (t, v) = (0..self.n)
                .map(|t| (t, self.box_violation(t)))
                .fold((0, 0.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if v < tol {
                return (iter, true);
            }
            let old = self.alpha[t];
            let new = (old - self.grad[t] / self.q(t, t)).clamp(0.0, self.upper[t]);
            self.alpha[t] = new;
            let n = self.n;
            let d = (new - old) * self.y[t];
            for s in 0..n {
                self.grad[s] += self.y[s] * self.k[t * n + s] * d;
            }
            iter += 1;
        }
        let worst = (0..self.n).map(|t| self.box_violation(t)).fold(0.0, f64::max);
        (iter, worst < tol)
    }

    /// Equality multiplier estimate from free variables, as in LIBSVM.
    fn implied_bias(&self) -> f64 {
        let (mut sum, mut count) = (0.0, 0usize);
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        for t in 0..self.n {
            let yg = self.y[t] * self.grad[t];
            let at_upper = self.alpha[t] >= self.upper[t];
            let at_lower = self.alpha[t] <= 0.0;
            if at_upper {
                if self.y[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if at_lower {
                if self.y[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                sum += yg;
                count += 1;
            }
        }
        let rho = if count > 0 {
            sum / count as f64
        } else if ub.is_finite() && lb.is_finite() {
            0.5 * (ub + lb)
        } else if ub.is_finite() {
            ub
        } else if lb.is_finite() {
            lb
        } else {
            0.0
        };
        -rho
    }
}

/// Trains on `data`, optionally warm-starting from multipliers of a previous
/// run on a prefix of the same training set.
pub fn train_with(data: &TrainingSet, cfg: &SvmConfig, warm: Option<&[f64]>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = data.len();
    let dim = data.dim().ok_or(Error::TooFewPoints { needed: 1, got: 0 })?;

    if let Some(label) = data.single_class() {
        return Ok(TrainOutcome {
            model: SvmModel::constant(dim, label, cfg.gamma, cfg.cost),
            alphas: vec![0.0; n],
            iterations: 0,
            implied_bias: 0.0,
            converged: true,
        });
    }

    let k = kernel_matrix(data.points(), cfg.gamma);
    let mut alpha = vec![0.0; n];
    if let Some(prev) = warm.filter(|w| w.len() <= n) {
        let mut feasible = true;
        let mut balance = 0.0;
        for (i, &a) in prev.iter().enumerate() {
            let clipped = a.clamp(0.0, cfg.cost.bound(data.labels()[i]));
            feasible &= clipped == a;
            alpha[i] = clipped;
            balance += clipped * data.labels()[i].sign();
        }
        let scale: f64 = alpha.iter().sum::<f64>().max(1.0);
        if cfg.equality_constraint && (!feasible || balance.abs() > 1e-12 * scale) {
            alpha.iter_mut().for_each(|a| *a = 0.0);
        }
    }

    let mut solver = Solver::new(&k, data.labels(), &cfg.cost, alpha);
    let max_iter = cfg.max_passes_per_point.max(1) * n * n.max(100);
    let (iterations, converged) = if cfg.equality_constraint {
        solver.solve_with_equality(cfg.tolerance, max_iter)
    } else {
        solver.solve_box(cfg.tolerance, max_iter)
    };
    let implied_bias = if cfg.equality_constraint { solver.implied_bias() } else { 0.0 };

    let supports = (0..n)
        .filter(|&i| solver.alpha[i] > cfg.alpha_floor)
        .map(|i| (data.points()[i].clone(), solver.alpha[i], data.labels()[i]))
        .collect();
    let model = SvmModel::from_supports(dim, supports, cfg.gamma, cfg.cost)?;
    Ok(TrainOutcome { model, alphas: solver.alpha, iterations, implied_bias, converged })
}

/// Largest KKT violation of a trained model on its training set, measured
/// on `y_i (H(θ_i) + offset)`: zero multipliers need a margin of at least 1,
/// multipliers at the bound at most 1, free multipliers exactly 1.
pub fn kkt_violation(data: &TrainingSet, alphas: &[f64], model: &SvmModel, offset: f64) -> f64 {
    let cost = model.cost();
    let mut worst = 0.0_f64;
    for (i, (p, l)) in data.points().iter().zip(data.labels()).enumerate() {
        let margin = l.sign() * (model.decision_unchecked(p) + offset);
        let c = cost.bound(*l);
        let a = alphas[i];
        let v = if a <= 0.0 {
            (1.0 - margin).max(0.0)
        } else if a >= c {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}
