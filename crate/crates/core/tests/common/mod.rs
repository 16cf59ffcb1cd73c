//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use clverify::mtl::{Expr, Formula};
use clverify::svm::{CostMatrix, SvmModel, TrainingSet};
use clverify::systems::{self, Matrix2};
use clverify::{Label, Trajectory};
use rand::Rng;

/// Random points in `[-scale, scale]^dim` with random labels.
pub fn random_set(rng: &mut impl Rng, n: usize, dim: usize, scale: f64) -> TrainingSet {
    let mut set = TrainingSet::new();
    while set.len() < n {
        let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(-scale..scale)).collect();
        let l = Label::from_bool(rng.gen_bool(0.5));
        let _ = set.push(p, l);
    }
    set
}

/// Random support-vector expansion in `[-3, 3]^dim`.
pub fn random_model(rng: &mut impl Rng, dim: usize, n: usize) -> SvmModel {
    let supports = (0..n)
        .map(|_| {
            let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
            (p, rng.gen_range(0.01..2.0), Label::from_bool(rng.gen_bool(0.5)))
        })
        .collect();
    SvmModel::from_supports(dim, supports, rng.gen_range(0.3..2.0), CostMatrix::default()).unwrap()
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-d2 / (gamma * gamma)).exp()
}

/// Dense Gaussian elimination with partial pivoting; `None` when singular.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Maximum of the bias-constrained dual by enumerating every face of the
/// box: each multiplier is pinned at 0, pinned at its bound or free, and the
/// free block is solved from the stationarity and equality conditions.
pub fn exhaustive_dual(data: &TrainingSet, gamma: f64, cost: CostMatrix) -> (f64, Vec<f64>) {
    let n = data.len();
    let y: Vec<f64> = data.labels().iter().map(|l| l.sign()).collect();
    let c: Vec<f64> = data.labels().iter().map(|l| cost.bound(*l)).collect();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * rbf(&data.points()[i], &data.points()[j], gamma)).collect())
        .collect();
    let objective = |a: &[f64]| -> f64 {
        let lin: f64 = a.iter().sum();
        let quad: f64 = (0..n).map(|i| (0..n).map(|j| a[i] * a[j] * q[i][j]).sum::<f64>()).sum();
        lin - 0.5 * quad
    };
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0u8; n];
        let mut r = code;
        for s in state.iter_mut() {
            *s = (r % 3) as u8;
            r /= 3;
        }
        let mut alpha: Vec<f64> = (0..n).map(|i| if state[i] == 1 { c[i] } else { 0.0 }).collect();
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        if !free.is_empty() {
            let m = free.len();
            let mut a = vec![vec![0.0; m + 1]; m + 1];
            let mut b = vec![0.0; m + 1];
            for (r, &i) in free.iter().enumerate() {
                for (k, &j) in free.iter().enumerate() {
                    a[r][k] = q[i][j];
                }
                a[r][m] = y[i];
                b[r] = 1.0 - (0..n).filter(|j| state[*j] != 2).map(|j| q[i][j] * alpha[j]).sum::<f64>();
                a[m][r] = y[i];
            }
            b[m] = -(0..n).filter(|j| state[*j] != 2).map(|j| y[j] * alpha[j]).sum::<f64>();
            let Some(sol) = solve_linear(a, b) else { continue };
            for (r, &i) in free.iter().enumerate() {
                alpha[i] = sol[r];
            }
        }
        let feasible = (0..n).all(|i| alpha[i] >= -1e-12 && alpha[i] <= c[i] + 1e-12)
            && (0..n).map(|i| y[i] * alpha[i]).sum::<f64>().abs() < 1e-9;
        if feasible {
            let v = objective(&alpha);
            if v > best.0 {
                best = (v, alpha);
            }
        }
    }
    best
}

/// Random two-channel signal (`x1`, `x2`) with `len` samples.
pub fn random_signal(rng: &mut impl Rng, len: usize, h: f64) -> Trajectory {
    let series = |rng: &mut dyn rand::RngCore| -> Vec<f64> { (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect() };
    let x1 = series(rng);
    let x2 = series(rng);
    Trajectory::from_channels(h, vec![("x1".into(), x1), ("x2".into(), x2)]).unwrap()
}

/// Window `[a, b]` on the sample grid with `b ≤ max`.
pub fn random_window(rng: &mut impl Rng, max: f64, h: f64) -> (f64, f64) {
    let steps = (max / h).round() as usize;
    let i = rng.gen_range(0..=steps);
    let j = rng.gen_range(i..=steps);
    (i as f64 * h, j as f64 * h)
}

/// Random sub-window of `[a, b]` on the same sample grid.
pub fn sub_window(rng: &mut impl Rng, a: f64, b: f64, h: f64) -> (f64, f64) {
    let lo = (a / h).round() as usize;
    let hi = (b / h).round() as usize;
    let i = rng.gen_range(lo..=hi);
    let j = rng.gen_range(i..=hi);
    (i as f64 * h, j as f64 * h)
}

/// `x ≥ c` or `x > c` on a random channel.
pub fn random_predicate(rng: &mut impl Rng) -> Formula {
    let channel = if rng.gen_bool(0.5) { "x1" } else { "x2" };
    let c = rng.gen_range(-0.8..0.8);
    let zeta = Expr::channel(channel).sub(Expr::Const(c));
    if rng.gen_bool(0.5) {
        zeta.geq_zero()
    } else {
        zeta.gt_zero()
    }
}

/// `max |AᵀP + PA + I|` for the computed Lyapunov solution.
pub fn lyapunov_residual(a: &Matrix2) -> f64 {
    let p = systems::solve_lyapunov_2x2(a).unwrap();
    let mut worst = 0.0_f64;
    for i in 0..2 {
        for j in 0..2 {
            let mut v = if i == j { 1.0 } else { 0.0 };
            for k in 0..2 {
                v += a[k][i] * p[k][j] + p[i][k] * a[k][j];
            }
            worst = worst.max(v.abs());
        }
    }
    worst
}
