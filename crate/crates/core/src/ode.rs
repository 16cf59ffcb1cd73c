//! Fixed-step integration of closed-loop dynamics.
//!
//! Every system is integrated with the classical four-stage Runge–Kutta
//! scheme on a uniform grid `t = 0, h, 2h, …, t_final`. Systems may carry a
//! piecewise-constant discrete state (for instance an adaptive controller's
//! history stack) that is updated between steps and held constant within a
//! step.

use crate::error::{Error, Result};
use crate::error::check_dim;

/// Plant state at one instant.
pub type StateVector = Vec<f64>;

/// Step size, horizon and divergence cap for [`simulate`].
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IntegratorConfig {
    pub step_h: f64,
    pub t_final: f64,
    pub divergence_radius: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step_h: 0.01,
            t_final: 30.0,
            divergence_radius: 1e3,
        }
    }
}

impl IntegratorConfig {
    pub fn new(step_h: f64, t_final: f64, divergence_radius: f64) -> Result<Self> {
        let cfg = Self {
            step_h,
            t_final,
            divergence_radius,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_h > 0.0 && self.step_h.is_finite()) {
            return Err(Error::InvalidConfig(format!("step_h must be > 0, got {}", self.step_h)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidConfig(format!("t_final must be > 0, got {}", self.t_final)));
        }
        if !(self.divergence_radius > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "divergence_radius must be > 0, got {}",
                self.divergence_radius
            )));
        }
        let ratio = self.t_final / self.step_h;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "t_final / step_h must be a positive integer, got {ratio}"
            )));
        }
        Ok(())
    }

    /// Number of integration steps; the trajectory has `steps() + 1` samples.
    pub fn steps(&self) -> usize {
        (self.t_final / self.step_h).round() as usize
    }
}

/// A closed-loop vector field `ẋ = f(t, x, θ)` with optional discrete state.
pub trait Dynamics {
    /// State held constant over each integration step.
    type Discrete: Clone;

    /// Dimension `p` of the uncertainty vector.
    fn theta_dim(&self) -> usize;

    /// Names of the continuous state components, in order.
    fn state_names(&self) -> Vec<String>;

    /// Names of the auxiliary channels recorded alongside the state.
    fn aux_names(&self) -> Vec<String> {
        Vec::new()
    }

    fn initial(&self, theta: &[f64]) -> (StateVector, Self::Discrete);

    fn field(&self, t: f64, x: &[f64], theta: &[f64], discrete: &Self::Discrete, dx: &mut [f64]);

    /// Fills `out` (length `aux_names().len()`) with the auxiliary signals.
    fn aux(&self, _t: f64, _x: &[f64], _theta: &[f64], _discrete: &Self::Discrete, _out: &mut [f64]) {}

    /// Called after step `step` has produced state `x` at time `t`.
    fn post_step(&self, _step: usize, _t: f64, _x: &[f64], _discrete: &mut Self::Discrete) {}
}

/// Scratch space for repeated RK4 steps of a fixed dimension.
struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step<F>(&mut self, f: &mut F, x: &mut [f64], t: f64, h: f64)
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let half = 0.5 * h;
        f(t, x, &mut self.k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k1[i];
        }
        f(t + half, &self.tmp, &mut self.k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + half * self.k2[i];
        }
        f(t + half, &self.tmp, &mut self.k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        f(t + h, &self.tmp, &mut self.k4);
        let sixth = h / 6.0;
        for i in 0..x.len() {
            x[i] += sixth * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// One classical Runge–Kutta step of size `h` from `(t, x)`.
pub fn rk4_step<F>(mut f: F, x: &[f64], t: f64, h: f64) -> StateVector
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut out = x.to_vec();
    Rk4Workspace::new(x.len()).step(&mut f, &mut out, t, h);
    out
}

/// ∞-norm; any NaN component makes the norm infinite.
pub fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |acc, v| {
        if v.is_nan() {
            f64::INFINITY
        } else {
            acc.max(v.abs())
        }
    })
}

/// Resolved reference to a trajectory signal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelRef {
    Time,
    State(usize),
    Aux(usize),
}

/// Uniformly sampled simulation output.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    step_h: f64,
    times: Vec<f64>,
    state_names: Vec<String>,
    /// Row-major, `times.len() * state_names.len()`.
    states: Vec<f64>,
    aux_names: Vec<String>,
    /// Column-major: one series per auxiliary channel.
    aux: Vec<Vec<f64>>,
    diverged: bool,
}

impl Trajectory {
    /// Builds a trajectory from explicit samples. Used by tests and tools that
    /// construct signals directly rather than by simulation.
    pub fn from_channels(step_h: f64, channels: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let len = channels.first().map(|(_, v)| v.len()).unwrap_or(0);
        if len == 0 {
            return Err(Error::InvalidConfig("trajectory needs at least one sample".into()));
        }
        if !(step_h > 0.0) {
            return Err(Error::InvalidConfig("step_h must be > 0".into()));
        }
        for (name, series) in &channels {
            if series.len() != len {
                return Err(Error::InvalidConfig(format!(
                    "channel `{name}` has {} samples, expected {len}",
                    series.len()
                )));
            }
        }
        let n = channels.len();
        let mut states = vec![0.0; len * n];
        for (k, (_, series)) in channels.iter().enumerate() {
            for (i, v) in series.iter().enumerate() {
                states[i * n + k] = *v;
            }
        }
        Ok(Self {
            step_h,
            times: (0..len).map(|i| i as f64 * step_h).collect(),
            state_names: channels.into_iter().map(|(name, _)| name).collect(),
            states,
            aux_names: Vec::new(),
            aux: Vec::new(),
            diverged: false,
        })
    }

    pub fn step_h(&self) -> f64 {
        self.step_h
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_final(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn state_dim(&self) -> usize {
        self.state_names.len()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        let n = self.state_dim();
        &self.states[i * n..(i + 1) * n]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn diverged(&self) -> bool {
        self.diverged
    }

    pub fn channel_names(&self) -> impl Iterator<Item = &str> {
        std::iter::once("t")
            .chain(self.state_names.iter().map(String::as_str))
            .chain(self.aux_names.iter().map(String::as_str))
    }

    pub fn resolve(&self, name: &str) -> Result<ChannelRef> {
        if name == "t" {
            return Ok(ChannelRef::Time);
        }
        if let Some(k) = self.state_names.iter().position(|s| s == name) {
            return Ok(ChannelRef::State(k));
        }
        if let Some(k) = self.aux_names.iter().position(|s| s == name) {
            return Ok(ChannelRef::Aux(k));
        }
        Err(Error::UnknownChannel(name.to_string()))
    }

    #[inline]
    pub fn value(&self, channel: ChannelRef, i: usize) -> f64 {
        match channel {
            ChannelRef::Time => self.times[i],
            ChannelRef::State(k) => self.states[i * self.state_dim() + k],
            ChannelRef::Aux(k) => self.aux[k][i],
        }
    }

    /// Full series for a named channel.
    pub fn series(&self, name: &str) -> Result<Vec<f64>> {
        let channel = self.resolve(name)?;
        Ok((0..self.len()).map(|i| self.value(channel, i)).collect())
    }

    /// Sample index nearest to time `t`, clamped to the trajectory.
    pub fn index_at(&self, t: f64) -> usize {
        let idx = (t / self.step_h).round();
        if idx <= 0.0 {
            0
        } else {
            (idx as usize).min(self.len() - 1)
        }
    }
}

/// Integrates `system` from its θ-dependent initial condition.
///
/// When the state's ∞-norm reaches `divergence_radius` (or turns non-finite),
/// integration halts, the remaining samples repeat the last state and the
/// trajectory is flagged as diverged.
pub fn simulate<S: Dynamics + ?Sized>(system: &S, theta: &[f64], cfg: &IntegratorConfig) -> Result<Trajectory> {
    check_dim(system.theta_dim(), theta.len())?;
    cfg.validate()?;

    let steps = cfg.steps();
    let h = cfg.step_h;
    let state_names = system.state_names();
    let aux_names = system.aux_names();
    let n = state_names.len();
    let n_aux = aux_names.len();

    let (mut x, mut discrete) = system.initial(theta);
    check_dim(n, x.len())?;

    let mut states = Vec::with_capacity((steps + 1) * n);
    let mut aux: Vec<Vec<f64>> = (0..n_aux).map(|_| Vec::with_capacity(steps + 1)).collect();
    let mut aux_buf = vec![0.0; n_aux];
    let mut ws = Rk4Workspace::new(n);

    let mut record = |x: &[f64], t: f64, discrete: &S::Discrete, states: &mut Vec<f64>, aux: &mut Vec<Vec<f64>>| {
        states.extend_from_slice(x);
        if n_aux > 0 {
            system.aux(t, x, theta, discrete, &mut aux_buf);
            for (series, v) in aux.iter_mut().zip(&aux_buf) {
                series.push(*v);
            }
        }
    };

    let mut diverged = inf_norm(&x) >= cfg.divergence_radius;
    record(&x, 0.0, &discrete, &mut states, &mut aux);

    let mut step = 0;
    while step < steps && !diverged {
        let t = step as f64 * h;
        {
            let disc = &discrete;
            let mut f = |t: f64, x: &[f64], dx: &mut [f64]| system.field(t, x, theta, disc, dx);
            ws.step(&mut f, &mut x, t, h);
        }
        step += 1;
        let t_next = step as f64 * h;
        if inf_norm(&x) >= cfg.divergence_radius {
            diverged = true;
        } else {
            system.post_step(step, t_next, &x, &mut discrete);
        }
        record(&x, t_next, &discrete, &mut states, &mut aux);
    }

    // Hold the last sample for the remainder of the horizon.
    let held = states.len() / n.max(1);
    for _ in held..=steps {
        states.extend_from_within(states.len() - n..);
        for series in aux.iter_mut() {
            let last = *series.last().expect("aux channel has an initial sample");
            series.push(last);
        }
    }

    Ok(Trajectory {
        step_h: h,
        times: (0..=steps).map(|i| i as f64 * h).collect(),
        state_names,
        states,
        aux_names,
        aux,
        diverged,
    })
}

/// `ẋ = −rate · x` from a fixed initial value; independent of θ.
#[derive(Clone, Copy, Debug)]
pub struct ExponentialDecay {
    pub rate: f64,
    pub x0: f64,
}

impl Dynamics for ExponentialDecay {
    type Discrete = ();

    fn theta_dim(&self) -> usize {
        0
    }

    fn state_names(&self) -> Vec<String> {
        vec!["x1".into()]
    }

    fn initial(&self, _theta: &[f64]) -> (StateVector, ()) {
        (vec![self.x0], ())
    }

    fn field(&self, _t: f64, x: &[f64], _theta: &[f64], _d: &(), dx: &mut [f64]) {
        dx[0] = -self.rate * x[0];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_linear_decay_matches_taylor_polynomial() {
        let h: f64 = 0.1;
        let x = rk4_step(|_, x, dx| dx[0] = -x[0], &[1.0], 0.0, h);
        let expected = 1.0 - h + h * h / 2.0 - h.powi(3) / 6.0 + h.powi(4) / 24.0;
        assert!((x[0] - expected).abs() < 1e-15);
        assert!((x[0] - 0.904_837_5).abs() < 1e-15);
        // Local truncation error is h^5/120.
        assert!((x[0] - (-h).exp()).abs() < h.powi(5) / 100.0);
    }

    #[test]
    fn rk4_zero_and_constant_fields() {
        let x = rk4_step(|_, _, dx| dx.iter_mut().for_each(|d| *d = 0.0), &[3.5, -2.0], 1.0, 0.3);
        assert_eq!(x, vec![3.5, -2.0]);
        let x = rk4_step(|_, _, dx| dx[0] = 2.5, &[0.0], 0.0, 0.2);
        assert_eq!(x[0], 2.5 * 0.2);
    }

    #[test]
    fn decay_reaches_exp_minus_one() {
        let cfg = IntegratorConfig::new(0.001, 1.0, 1e3).unwrap();
        let traj = simulate(&ExponentialDecay { rate: 1.0, x0: 1.0 }, &[], &cfg).unwrap();
        assert_eq!(traj.len(), 1001);
        assert!((traj.final_state()[0] - (-1.0f64).exp()).abs() < 1e-9);
        assert!(!traj.diverged());
    }

    #[test]
    fn config_rejects_non_integer_step_count() {
        assert!(IntegratorConfig::new(0.3, 1.0, 1.0).is_err());
        assert!(IntegratorConfig::new(0.0, 1.0, 1.0).is_err());
        assert!(IntegratorConfig::new(0.1, 1.0, 0.0).is_err());
        assert_eq!(IntegratorConfig::new(0.01, 40.0, 1.0).unwrap().steps(), 4000);
    }

    #[test]
    fn growth_is_flagged_and_held() {
        let cfg = IntegratorConfig::new(0.01, 10.0, 100.0).unwrap();
        let traj = simulate(&ExponentialDecay { rate: -1.0, x0: 1.0 }, &[], &cfg).unwrap();
        assert!(traj.diverged());
        assert_eq!(traj.len(), 1001);
        let last = traj.final_state()[0];
        assert!(last >= 100.0);
        // e^t crosses 100 near t = 4.6, so the tail is held constant.
        assert_eq!(traj.state(700)[0], last);
    }

    #[test]
    fn theta_dimension_is_checked() {
        let cfg = IntegratorConfig::default();
        let err = simulate(&ExponentialDecay { rate: 1.0, x0: 1.0 }, &[1.0], &cfg).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 0, got: 1 }));
    }

    #[test]
    fn nan_counts_as_divergence() {
        assert_eq!(inf_norm(&[1.0, f64::NAN]), f64::INFINITY);
        assert_eq!(inf_norm(&[-3.0, 2.0]), 3.0);
    }
}
