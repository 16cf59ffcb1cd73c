//! Concrete closed-loop plants: the reversed-time Van der Pol oscillator and
//! a concurrent-learning model reference adaptive controller (CL-MRAC), with
//! and without actuator saturation plus pseudo-control hedging.

use crate::error::{Error, Result};
use crate::ode::{self, Dynamics, IntegratorConfig, StateVector, Trajectory};
use crate::verify::{Axis, GridSpec};

pub type Matrix2 = [[f64; 2]; 2];

// ─── Van der Pol ─────────────────────────────────────────────────────

/// Reversed-time Van der Pol field: stable origin, unstable limit cycle.
pub fn vdp_field(x: &[f64]) -> [f64; 2] {
    [-x[1], x[0] + (x[1] * x[1] - 1.0) * x[1]]
}

/// θ is the initial condition `(x₁(0), x₂(0))`.
#[derive(Clone, Copy, Debug, Default)]
pub struct VanDerPol;

impl Dynamics for VanDerPol {
    type Discrete = ();

    fn theta_dim(&self) -> usize {
        2
    }

    fn state_names(&self) -> Vec<String> {
        vec!["x1".into(), "x2".into()]
    }

    fn initial(&self, theta: &[f64]) -> (StateVector, ()) {
        (theta.to_vec(), ())
    }

    fn field(&self, _t: f64, x: &[f64], _theta: &[f64], _d: &(), dx: &mut [f64]) {
        let f = vdp_field(x);
        dx[0] = f[0];
        dx[1] = f[1];
    }
}

// ─── Reference model and command ─────────────────────────────────────

pub const ZETA_N: f64 = 0.5;
pub const OMEGA_N: f64 = 1.0;
/// Nominal open-loop plant (θ = 0).
pub const A_NOMINAL: Matrix2 = [[0.0, 1.0], [-0.2, -0.2]];

/// Second-order reference model, optionally hedged by `nu_h`.
pub fn reference_model(x_m: [f64; 2], z_cmd: f64, nu_h: f64) -> [f64; 2] {
    [x_m[1], reference_accel(x_m, z_cmd) - nu_h]
}

/// Unhedged reference acceleration, also used as the feed-forward input `u_rm`.
#[inline]
fn reference_accel(x_m: [f64; 2], z_cmd: f64) -> f64 {
    let w2 = OMEGA_N * OMEGA_N;
    -w2 * x_m[0] - 2.0 * ZETA_N * OMEGA_N * x_m[1] + w2 * z_cmd
}

/// Piecewise-constant reference command over the 40 s horizon.
pub fn z_cmd(t: f64) -> f64 {
    if (0.0..=2.0).contains(&t) {
        1.0
    } else if (10.0..=12.0).contains(&t) {
        1.5
    } else if (20.0..=22.0).contains(&t) {
        -1.5
    } else {
        0.0
    }
}

// ─── Lyapunov equation ───────────────────────────────────────────────

pub fn is_hurwitz(a: &Matrix2) -> bool {
    let trace = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    trace < 0.0 && det > 0.0
}

/// Solves `AᵀP + PA = −I` for symmetric `P`.
pub fn solve_lyapunov_2x2(a: &Matrix2) -> Result<Matrix2> {
    if !is_hurwitz(a) {
        return Err(Error::NotHurwitz);
    }
    let [[a11, a12], [a21, a22]] = *a;
    // Unknowns (p11, p12, p22).
    let m = [
        [2.0 * a11, 2.0 * a21, 0.0],
        [a12, a11 + a22, a21],
        [0.0, 2.0 * a12, 2.0 * a22],
    ];
    let rhs = [-1.0, 0.0, -1.0];
    let p = solve3(m, rhs).ok_or(Error::NotHurwitz)?;
    Ok([[p[0], p[1]], [p[1], p[2]]])
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn solve3(m: [[f64; 3]; 3], rhs: [f64; 3]) -> Option<[f64; 3]> {
    let det = det3(&m);
    if det.abs() < 1e-300 {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, slot) in out.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = rhs[row];
        }
        *slot = det3(&mc) / det;
    }
    Some(out)
}

// ─── History stack ───────────────────────────────────────────────────

/// Smallest eigenvalue (= singular value) of a symmetric PSD 2×2 matrix.
pub fn min_singular_value(g: &Matrix2) -> f64 {
    let tr = g[0][0] + g[1][1];
    let diff = g[0][0] - g[1][1];
    let disc = (diff * diff + 4.0 * g[0][1] * g[0][1]).sqrt();
    (0.5 * (tr - disc)).max(0.0)
}

/// Recorded plant states for the concurrent-learning term.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryStack {
    entries: Vec<[f64; 2]>,
    capacity: usize,
    epsilon: f64,
    gram: Matrix2,
}

impl HistoryStack {
    pub fn new(capacity: usize, epsilon: f64) -> Self {
        Self {
            entries: Vec::with_capacity(capacity),
            capacity,
            epsilon,
            gram: [[0.0; 2]; 2],
        }
    }

    pub fn entries(&self) -> &[[f64; 2]] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    /// `Σ x_k x_kᵀ` over the stored entries.
    pub fn gram(&self) -> &Matrix2 {
        &self.gram
    }

    pub fn min_singular_value(&self) -> f64 {
        min_singular_value(&self.gram)
    }

    fn recompute_gram(&mut self) {
        let mut g = [[0.0; 2]; 2];
        for x in &self.entries {
            g[0][0] += x[0] * x[0];
            g[0][1] += x[0] * x[1];
            g[1][1] += x[1] * x[1];
        }
        g[1][0] = g[0][1];
        self.gram = g;
    }

    /// Offers `candidate` to the stack; returns whether the stack changed.
    ///
    /// While filling, a candidate is appended when its relative ∞-norm
    /// distance from the last entry exceeds `epsilon`. Once full, the
    /// candidate replaces the entry whose removal maximises the smallest
    /// singular value of the Gram matrix, provided that strictly improves it.
    pub fn update(&mut self, candidate: [f64; 2]) -> bool {
        let scale = candidate[0].abs().max(candidate[1].abs());
        if !(scale > 0.0 && scale.is_finite()) {
            return false;
        }
        if !self.is_full() {
            let distance = match self.entries.last() {
                Some(last) => {
                    (candidate[0] - last[0]).abs().max((candidate[1] - last[1]).abs()) / scale
                }
                None => f64::INFINITY,
            };
            if distance > self.epsilon {
                self.entries.push(candidate);
                self.recompute_gram();
                return true;
            }
            return false;
        }

        let current = self.min_singular_value();
        let c = candidate;
        let mut best: Option<(usize, f64)> = None;
        for (j, x) in self.entries.iter().enumerate() {
            let g = &self.gram;
            let g00 = g[0][0] - x[0] * x[0] + c[0] * c[0];
            let g01 = g[0][1] - x[0] * x[1] + c[0] * c[1];
            let g11 = g[1][1] - x[1] * x[1] + c[1] * c[1];
            let sigma = min_singular_value(&[[g00, g01], [g01, g11]]);
            if best.is_none_or(|(_, s)| sigma > s) {
                best = Some((j, sigma));
            }
        }
        match best {
            Some((j, sigma)) if sigma > current => {
                self.entries[j] = c;
                self.recompute_gram();
                true
            }
            _ => false,
        }
    }
}

// ─── CL-MRAC ─────────────────────────────────────────────────────────

/// Controller and adaptation constants.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ClMracGains {
    pub kp: f64,
    pub kd: f64,
    pub gamma: f64,
    pub gamma_c: f64,
    pub p_max: usize,
    /// Seconds of simulated time between history-stack candidates.
    pub stack_interval: f64,
    /// Relative distance gate for appending to a non-full stack.
    pub stack_epsilon: f64,
    /// Adds `−A_nominalᵀ x` to the control so the nominal plant tracks the
    /// reference model exactly; θ then measures deviation from nominal.
    pub nominal_inversion: bool,
    pub x2_0: f64,
    pub theta_hat_0: [f64; 2],
}

impl Default for ClMracGains {
    fn default() -> Self {
        Self {
            kp: 1.5,
            kd: 1.3,
            gamma: 2.0,
            gamma_c: 0.2,
            p_max: 20,
            stack_interval: 0.1,
            stack_epsilon: 0.01,
            nominal_inversion: true,
            x2_0: 0.0,
            theta_hat_0: [0.0, 0.0],
        }
    }
}

/// Continuous controller state at one instant.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ClMracState {
    pub x: [f64; 2],
    pub x_m: [f64; 2],
    pub theta_hat: [f64; 2],
}

impl ClMracState {
    /// Tracking error `x_m − x`.
    pub fn error(&self) -> [f64; 2] {
        [self.x_m[0] - self.x[0], self.x_m[1] - self.x[1]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlOutput {
    pub u_des: f64,
    pub u: f64,
    pub nu_h: f64,
}

/// Saturates `u_des` to `±u_max` and returns the hedge signal.
pub fn saturate(u_des: f64, u_max: f64) -> ControlOutput {
    if u_des > u_max {
        ControlOutput { u_des, u: u_max, nu_h: u_max - u_des }
    } else if u_des < -u_max {
        ControlOutput { u_des, u: -u_max, nu_h: -u_max - u_des }
    } else {
        ControlOutput { u_des, u: u_des, nu_h: 0.0 }
    }
}

/// `u_des = u_rm + u_pd − u_ad` followed by saturation at `u_max`
/// (`f64::INFINITY` for an unconstrained actuator).
pub fn clmrac_control(state: &ClMracState, t: f64, gains: &ClMracGains, u_max: f64) -> ControlOutput {
    let e = state.error();
    let u_rm = reference_accel(state.x_m, z_cmd(t));
    let u_pd = gains.kp * e[0] + gains.kd * e[1];
    let u_ad = state.theta_hat[0] * state.x[0] + state.theta_hat[1] * state.x[1];
    let mut u_des = u_rm + u_pd - u_ad;
    if gains.nominal_inversion {
        u_des -= A_NOMINAL[1][0] * state.x[0] + A_NOMINAL[1][1] * state.x[1];
    }
    saturate(u_des, u_max)
}

/// Concurrent-learning adaptive law
/// `θ̂̇ = −Γ x eᵀPB − Γ_c Σ x_k x_kᵀ (θ̂ − θ)` with `B = (0, 1)ᵀ`.
pub fn clmrac_adapt(
    state: &ClMracState,
    stack: &HistoryStack,
    theta_true: [f64; 2],
    p: &Matrix2,
    gains: &ClMracGains,
) -> [f64; 2] {
    let e = state.error();
    let e_pb = e[0] * p[0][1] + e[1] * p[1][1];
    let tilde = [state.theta_hat[0] - theta_true[0], state.theta_hat[1] - theta_true[1]];
    let g = stack.gram();
    let g_tilde = [g[0][0] * tilde[0] + g[0][1] * tilde[1], g[1][0] * tilde[0] + g[1][1] * tilde[1]];
    [
        -gains.gamma * state.x[0] * e_pb - gains.gamma_c * g_tilde[0],
        -gains.gamma * state.x[1] * e_pb - gains.gamma_c * g_tilde[1],
    ]
}

/// Discrete part of the CL-MRAC closed loop.
#[derive(Clone, Debug)]
pub struct ClMracDiscrete {
    pub stack: HistoryStack,
    next_candidate: f64,
}

/// CL-MRAC closed loop on `ẋ₂ = (−0.2+θ₁)x₁ + (−0.2+θ₂)x₂ + u`.
///
/// Without saturation θ = (θ₁, θ₂). With saturation and pseudo-control
/// hedging θ = (θ₁, θ₂, x₁(0), u_max).
#[derive(Clone, Debug)]
pub struct ClMrac {
    pub gains: ClMracGains,
    pub saturated: bool,
    p: Matrix2,
}

const CLMRAC_STATES: [&str; 6] = ["x1", "x2", "xm1", "xm2", "theta_hat1", "theta_hat2"];
const CLMRAC_AUX: [&str; 6] = ["e1", "e2", "u", "u_des", "nu_h", "z_cmd"];

impl ClMrac {
    pub fn new(gains: ClMracGains, saturated: bool) -> Result<Self> {
        let p = solve_lyapunov_2x2(&A_NOMINAL)?;
        Ok(Self { gains, saturated, p })
    }

    pub fn lyapunov_p(&self) -> &Matrix2 {
        &self.p
    }

    fn u_max(&self, theta: &[f64]) -> f64 {
        if self.saturated {
            theta[3]
        } else {
            f64::INFINITY
        }
    }

    fn unpack(x: &[f64]) -> ClMracState {
        ClMracState {
            x: [x[0], x[1]],
            x_m: [x[2], x[3]],
            theta_hat: [x[4], x[5]],
        }
    }
}

impl Dynamics for ClMrac {
    type Discrete = ClMracDiscrete;

    fn theta_dim(&self) -> usize {
        if self.saturated {
            4
        } else {
            2
        }
    }

    fn state_names(&self) -> Vec<String> {
        CLMRAC_STATES.iter().map(|s| s.to_string()).collect()
    }

    fn aux_names(&self) -> Vec<String> {
        CLMRAC_AUX.iter().map(|s| s.to_string()).collect()
    }

    fn initial(&self, theta: &[f64]) -> (StateVector, ClMracDiscrete) {
        let x1_0 = if self.saturated { theta[2] } else { 0.0 };
        let th = self.gains.theta_hat_0;
        (
            vec![x1_0, self.gains.x2_0, 0.0, 0.0, th[0], th[1]],
            ClMracDiscrete {
                stack: HistoryStack::new(self.gains.p_max, self.gains.stack_epsilon),
                next_candidate: self.gains.stack_interval,
            },
        )
    }

    fn field(&self, t: f64, x: &[f64], theta: &[f64], discrete: &ClMracDiscrete, dx: &mut [f64]) {
        let state = Self::unpack(x);
        let ctrl = clmrac_control(&state, t, &self.gains, self.u_max(theta));
        dx[0] = x[1];
        dx[1] = (A_NOMINAL[1][0] + theta[0]) * x[0] + (A_NOMINAL[1][1] + theta[1]) * x[1] + ctrl.u;
        let xm_dot = reference_model(state.x_m, z_cmd(t), ctrl.nu_h);
        dx[2] = xm_dot[0];
        dx[3] = xm_dot[1];
        let th_dot = clmrac_adapt(&state, &discrete.stack, [theta[0], theta[1]], &self.p, &self.gains);
        dx[4] = th_dot[0];
        dx[5] = th_dot[1];
    }

    fn aux(&self, t: f64, x: &[f64], theta: &[f64], _discrete: &ClMracDiscrete, out: &mut [f64]) {
        let state = Self::unpack(x);
        let ctrl = clmrac_control(&state, t, &self.gains, self.u_max(theta));
        let e = state.error();
        out[0] = e[0];
        out[1] = e[1];
        out[2] = ctrl.u;
        out[3] = ctrl.u_des;
        out[4] = ctrl.nu_h;
        out[5] = z_cmd(t);
    }

    fn post_step(&self, _step: usize, t: f64, x: &[f64], discrete: &mut ClMracDiscrete) {
        // Tolerance absorbs the rounding of `step * h`.
        if t + 1e-9 >= discrete.next_candidate {
            discrete.stack.update([x[0], x[1]]);
            discrete.next_candidate += self.gains.stack_interval;
        }
    }
}

// ─── Named systems ───────────────────────────────────────────────────

/// A case study selectable by name: `vdp`, `clmrac` or `clmrac_pch`.
#[derive(Clone, Debug)]
pub enum System {
    VanDerPol(VanDerPol),
    ClMrac(ClMrac),
}

impl System {
    pub const NAMES: [&'static str; 3] = ["vdp", "clmrac", "clmrac_pch"];

    pub fn by_name(name: &str) -> Result<Self> {
        Self::with_gains(name, ClMracGains::default())
    }

    pub fn with_gains(name: &str, gains: ClMracGains) -> Result<Self> {
        match name {
            "vdp" => Ok(System::VanDerPol(VanDerPol)),
            "clmrac" => Ok(System::ClMrac(ClMrac::new(gains, false)?)),
            "clmrac_pch" => Ok(System::ClMrac(ClMrac::new(gains, true)?)),
            other => Err(Error::UnknownName { kind: "system", name: other.to_string() }),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            System::VanDerPol(_) => "vdp",
            System::ClMrac(c) if c.saturated => "clmrac_pch",
            System::ClMrac(_) => "clmrac",
        }
    }

    pub fn theta_dim(&self) -> usize {
        match self {
            System::VanDerPol(s) => s.theta_dim(),
            System::ClMrac(s) => s.theta_dim(),
        }
    }

    /// Parameter names in θ order.
    pub fn theta_names(&self) -> &'static [&'static str] {
        match self {
            System::VanDerPol(_) => &["x1_0", "x2_0"],
            System::ClMrac(c) if c.saturated => &["theta1", "theta2", "x1_0", "u_max"],
            System::ClMrac(_) => &["theta1", "theta2"],
        }
    }

    pub fn simulate(&self, theta: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory> {
        match self {
            System::VanDerPol(s) => ode::simulate(s, theta, cfg),
            System::ClMrac(s) => ode::simulate(s, theta, cfg),
        }
    }

    /// Canonical description used for cache keys.
    pub fn fingerprint(&self) -> String {
        match self {
            System::VanDerPol(_) => "vdp".to_string(),
            System::ClMrac(c) => format!("{}:{:?}", self.name(), c.gains),
        }
    }

    pub fn default_integrator(&self) -> IntegratorConfig {
        match self {
            System::VanDerPol(_) => IntegratorConfig { step_h: 0.01, t_final: 30.0, divergence_radius: 1e3 },
            System::ClMrac(_) => IntegratorConfig { step_h: 0.01, t_final: 40.0, divergence_radius: 1e3 },
        }
    }

    pub fn default_formula(&self) -> &'static str {
        match self {
            System::VanDerPol(_) => "vdp_roa",
            System::ClMrac(c) if c.saturated => "phi",
            System::ClMrac(_) => "phi_bound",
        }
    }

    /// Full-resolution grid of each case study.
    pub fn default_grid(&self) -> GridSpec {
        let axes = match self {
            System::VanDerPol(_) => vec![Axis::new(-3.0, 3.0, 125), Axis::new(-3.0, 3.0, 128)],
            System::ClMrac(c) if c.saturated => vec![
                Axis::new(-5.0, 5.0, 71),
                Axis::new(-5.0, 5.0, 71),
                Axis::new(-1.0, 1.0, 17),
                Axis::new(3.0, 8.0, 15),
            ],
            System::ClMrac(_) => vec![Axis::new(-8.0, 8.0, 182), Axis::new(-10.0, 10.0, 200)],
        };
        GridSpec { axes }
    }
}
