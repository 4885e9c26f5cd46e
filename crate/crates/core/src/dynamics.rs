//! Equilibrium search, hybrid simulation on a time scale, and the empirical
//! checks (Lyapunov decrease, exponential envelope) run on the trajectories.
//!
//! Simulation alternates two kinds of pieces. At a right-scattered point the
//! state advances exactly by the stepping identity
//! `u(σ(t)) = u(t) + μ(t) f(u(t))`; across a continuous stretch it is
//! integrated with an adaptive Dormand–Prince 5(4) pair.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::certificates::{equilibrium_bound_r0, xi_star};
use crate::error::{Error, Result};
use crate::linalg;
use crate::network::HopfieldSystem;
use crate::timescale::{Piece, TimeScale};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub omega_floor: f64,
}

impl Default for EquilibriumConfig {
    fn default() -> Self {
        EquilibriumConfig { tol: 1e-10, max_iter: 10_000, omega_floor: 1.0 / 16.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub u_star: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub r0: f64,
    pub within_r0: bool,
    /// Residual after every accepted iteration, starting with `u = 0`.
    pub residual_history: Vec<f64>,
}

impl EquilibriumResult {
    pub fn state(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.u_star)
    }
}

fn residual(sys: &HopfieldSystem, u: &DVector<f64>) -> f64 {
    sys.rhs(u).norm()
}

fn newton_step(sys: &HopfieldSystem, u: &DVector<f64>, r: f64) -> Option<(DVector<f64>, f64)> {
    let f = sys.rhs(u);
    let dx = sys.jacobian(u).lu().solve(&(-f))?;
    if dx.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let mut s = 1.0;
    for _ in 0..30 {
        let cand = u + &dx * s;
        let rc = residual(sys, &cand);
        if rc < r {
            return Some((cand, rc));
        }
        s *= 0.5;
    }
    None
}

/// Solves `-B u + A g(u) + J = 0` by damped fixed-point iteration
/// `u <- (1 - ω) u + ω B⁻¹(A g(u) + J)` from `u = 0`. The damping starts at
/// 1 and is halved whenever a step would raise the residual, down to
/// `omega_floor`; a line-searched Newton step takes over when the fixed-point
/// step stalls. Only residual-decreasing steps are accepted.
pub fn find_equilibrium(sys: &HopfieldSystem, cfg: &EquilibriumConfig) -> EquilibriumResult {
    let n = sys.dim();
    let mut u = DVector::zeros(n);
    let mut r = residual(sys, &u);
    let mut history = vec![r];
    let mut omega: f64 = 1.0;
    let mut iterations = 0;

    while r > cfg.tol && iterations < cfg.max_iter {
        let mut target = &sys.a * sys.activation.apply(&u) + &sys.j;
        target.component_div_assign(&sys.b);

        let mut fixed_point = None;
        let mut w = omega;
        loop {
            let cand = &u * (1.0 - w) + &target * w;
            let rc = residual(sys, &cand);
            if rc < r {
                fixed_point = Some((cand, rc));
                break;
            }
            if w <= cfg.omega_floor {
                break;
            }
            w = (w * 0.5).max(cfg.omega_floor);
        }
        omega = w;

        let step = match fixed_point {
            Some((cand, rc)) if rc <= 0.9 * r => Some((cand, rc)),
            fp => match (fp, newton_step(sys, &u, r)) {
                (Some(a), Some(b)) => Some(if b.1 < a.1 { b } else { a }),
                (a, b) => a.or(b),
            },
        };
        let Some((next, rn)) = step else { break };
        u = next;
        r = rn;
        history.push(r);
        iterations += 1;
    }

    let r0 = equilibrium_bound_r0(sys);
    EquilibriumResult {
        within_r0: u.norm() <= r0 + cfg.tol,
        u_star: u.iter().copied().collect(),
        residual: r,
        iterations,
        converged: r <= cfg.tol,
        r0,
        residual_history: history,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Per-step relative tolerance of the continuous integrator.
    pub rtol: f64,
    pub atol: f64,
    /// Samples recorded per continuous stretch.
    pub dense_samples: usize,
    pub max_steps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { rtol: 1e-9, atol: 1e-12, dense_samples: 32, max_steps: 5_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Start,
    /// Reached by continuous integration.
    Flow,
    /// Reached by a jump from a right-scattered point.
    Jump,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub u: DVector<f64>,
    pub kind: StepKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SolverStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub jumps: usize,
    pub rhs_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub stats: SolverStats,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn initial(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has a start sample")
    }
}

// Dormand–Prince 5(4) tableau; the system is autonomous so the nodes are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Integrator<'a> {
    sys: &'a HopfieldSystem,
    cfg: &'a SimConfig,
    h: f64,
    stats: SolverStats,
}

impl Integrator<'_> {
    /// Integrates the autonomous system from `t` to `t_end`.
    fn advance(&mut self, mut u: DVector<f64>, mut t: f64, t_end: f64) -> Result<DVector<f64>> {
        let n = u.len();
        let mut k: Vec<DVector<f64>> = vec![DVector::zeros(n); 7];
        while t < t_end {
            if self.stats.accepted_steps + self.stats.rejected_steps >= self.cfg.max_steps {
                return Err(Error::IntegratorFailure { t, reason: "step budget exhausted".into() });
            }
            let remaining = t_end - t;
            let last = self.h >= remaining;
            let h = if last { remaining } else { self.h };

            for s in 0..7 {
                let mut y = u.clone();
                for (j, kj) in k.iter().enumerate().take(s) {
                    if A[s][j] != 0.0 {
                        y.axpy(h * A[s][j], kj, 1.0);
                    }
                }
                k[s] = self.sys.rhs(&y);
            }
            self.stats.rhs_evals += 7;

            let mut next = u.clone();
            let mut err_sq = 0.0;
            for i in 0..n {
                let mut y5 = 0.0;
                let mut e = 0.0;
                for s in 0..7 {
                    y5 += B5[s] * k[s][i];
                    e += (B5[s] - B4[s]) * k[s][i];
                }
                next[i] += h * y5;
                let scale = self.cfg.atol + self.cfg.rtol * u[i].abs().max(next[i].abs());
                err_sq += (h * e / scale).powi(2);
            }
            let err = if n == 0 { 0.0 } else { (err_sq / n as f64).sqrt() };
            if !err.is_finite() || next.iter().any(|x| !x.is_finite()) {
                return Err(Error::IntegratorFailure { t, reason: "non-finite state".into() });
            }

            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                u = next;
                t = if last { t_end } else { t + h };
                self.stats.accepted_steps += 1;
                // Keep the controller's step when this one was clipped to the end.
                if !last || factor < 1.0 {
                    self.h = h * factor;
                }
            } else {
                self.stats.rejected_steps += 1;
                self.h = h * factor.min(1.0);
            }
            if self.h <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::IntegratorFailure { t, reason: "step size underflow".into() });
            }
        }
        Ok(u)
    }
}

/// Simulates the system from `u0` at `t0` up to `tf` along the time scale.
pub fn simulate(
    sys: &HopfieldSystem,
    ts: &TimeScale,
    u0: &DVector<f64>,
    t0: f64,
    tf: f64,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    if u0.len() != sys.dim() {
        return Err(Error::DimensionMismatch { expected: sys.dim(), got: u0.len() });
    }
    if !tf.is_finite() {
        return Err(Error::InvalidParameter("simulation end time must be finite".into()));
    }
    if cfg.dense_samples == 0 || !(cfg.rtol > 0.0) || !(cfg.atol >= 0.0) {
        return Err(Error::InvalidParameter("invalid simulation tolerances".into()));
    }
    let pieces = ts.walk(t0, tf)?;
    let t0 = ts.snap(t0)?;

    let mut integ = Integrator { sys, cfg, h: 1e-3, stats: SolverStats::default() };
    let mut samples = vec![Sample { t: t0, u: u0.clone(), kind: StepKind::Start }];
    let mut u = u0.clone();

    for piece in pieces {
        match piece {
            Piece::Jump { at, to } => {
                let mu = to - at;
                u = &u + sys.rhs(&u) * mu;
                if u.iter().any(|x| !x.is_finite()) {
                    return Err(Error::IntegratorFailure { t: at, reason: "non-finite state after jump".into() });
                }
                integ.stats.jumps += 1;
                integ.stats.rhs_evals += 1;
                samples.push(Sample { t: to, u: u.clone(), kind: StepKind::Jump });
            }
            Piece::Flow { from, to } => {
                integ.h = integ.h.min(to - from);
                let m = cfg.dense_samples;
                let mut t = from;
                for i in 1..=m {
                    let t_next = if i == m { to } else { from + (to - from) * i as f64 / m as f64 };
                    u = integ.advance(u, t, t_next)?;
                    t = t_next;
                    samples.push(Sample { t, u: u.clone(), kind: StepKind::Flow });
                }
            }
        }
    }
    Ok(Trajectory { samples, stats: integ.stats })
}

/// Simulates every initial state in parallel; results keep input order.
pub fn simulate_many(
    sys: &HopfieldSystem,
    ts: &TimeScale,
    starts: &[DVector<f64>],
    t0: f64,
    tf: f64,
    cfg: &SimConfig,
) -> Vec<Result<Trajectory>> {
    starts.par_iter().map(|u0| simulate(sys, ts, u0, t0, tf, cfg)).collect()
}

/// Uniform sample from the Euclidean ball of `radius` around `center`.
pub fn sample_ball<R: Rng + ?Sized>(center: &DVector<f64>, radius: f64, rng: &mut R) -> DVector<f64> {
    let n = center.len();
    if n == 0 {
        return center.clone();
    }
    let dir = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let norm = dir.norm();
    let r = radius * rng.gen::<f64>().powf(1.0 / n as f64);
    if norm == 0.0 {
        return center.clone();
    }
    center + dir * (r / norm)
}

/// `V(t) = ‖u(t) - u*‖²` at every sample.
pub fn lyapunov_trace(traj: &Trajectory, u_star: &DVector<f64>) -> Vec<f64> {
    traj.samples.iter().map(|s| (&s.u - u_star).norm_squared()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovViolation {
    pub t_prev: f64,
    pub t: f64,
    pub v_prev: f64,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovCheck {
    pub pass: bool,
    pub max_increase: f64,
    pub violations: Vec<LyapunovViolation>,
}

/// Checks `V(t_{k+1}) <= V(t_k) + slack·max(1, V(t_k))` on consecutive samples.
pub fn check_lyapunov_decrease(times: &[f64], trace: &[f64], slack: f64) -> LyapunovCheck {
    let mut violations = Vec::new();
    let mut max_increase = f64::NEG_INFINITY;
    for k in 1..trace.len().min(times.len()) {
        let inc = trace[k] - trace[k - 1];
        max_increase = max_increase.max(inc);
        if inc > slack * trace[k - 1].max(1.0) {
            violations.push(LyapunovViolation { t_prev: times[k - 1], t: times[k], v_prev: trace[k - 1], v: trace[k] });
        }
    }
    LyapunovCheck { pass: violations.is_empty(), max_increase, violations }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiWitness {
    pub xi_star: f64,
    pub horizon: f64,
    /// `ξ*·(horizon length)`, the lower bound on `∫ξ(s)Δs`.
    pub integral_lower_bound: f64,
    pub pass: bool,
}

impl XiWitness {
    pub fn new(xi_star: f64, horizon: f64) -> Self {
        XiWitness { xi_star, horizon, integral_lower_bound: xi_star * horizon, pass: xi_star > 0.0 }
    }
}

/// Divergence witness for `∫ξ(s)Δs` built from the constant lower bound
/// `ξ* = 2b̲ - 2L‖A‖₂ - μ*(b̄ + L‖A‖₂)²`.
pub fn xi_divergence_witness(sys: &HopfieldSystem, mu_star: f64, horizon: f64) -> Result<XiWitness> {
    let norm = linalg::spectral_norm(&sys.a)?;
    Ok(XiWitness::new(xi_star(sys, norm, mu_star), horizon))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeViolation {
    pub t: f64,
    pub norm: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeCheck {
    pub beta: f64,
    pub slack: f64,
    pub pass: bool,
    /// `max ‖z(t)‖ / (‖z₀‖ e_{-β}(t, t₀))`.
    pub max_ratio: f64,
    pub violations: Vec<EnvelopeViolation>,
    /// `‖z₀‖ e_{-β}(t, t₀)` at each sample.
    #[serde(skip)]
    pub bounds: Vec<f64>,
}

/// Default relative slack of the envelope check.
pub const ENVELOPE_SLACK: f64 = 1e-8;

/// Checks `‖u(t) - u*‖ <= ‖u₀ - u*‖ e_{-β}(t, t₀)(1 + slack)` at every sample.
pub fn verify_envelope(
    traj: &Trajectory,
    u_star: &DVector<f64>,
    beta: f64,
    ts: &TimeScale,
    slack: f64,
) -> Result<EnvelopeCheck> {
    let first = traj.initial();
    let z0 = (&first.u - u_star).norm();
    let mut sign: i8 = 1;
    let mut log_abs = 0.0;
    let mut prev_t = first.t;
    let mut bounds = Vec::with_capacity(traj.samples.len());
    let mut violations = Vec::new();
    let mut max_ratio: f64 = 0.0;

    for s in &traj.samples {
        if s.t > prev_t {
            let parts = ts.exp_parts(-beta, s.t, prev_t)?;
            sign *= parts.sign;
            log_abs += parts.log_abs;
            prev_t = s.t;
        }
        let bound = if sign == 0 { 0.0 } else { z0 * f64::from(sign) * log_abs.exp() };
        let norm = (&s.u - u_star).norm();
        let ratio = if bound > 0.0 {
            norm / bound
        } else if norm == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        max_ratio = max_ratio.max(ratio);
        if norm > bound * (1.0 + slack) {
            violations.push(EnvelopeViolation { t: s.t, norm, bound });
        }
        bounds.push(bound);
    }
    Ok(EnvelopeCheck { beta, slack, pass: violations.is_empty(), max_ratio, violations, bounds })
}

/// The system in the shifted variable `z = u - u*`.
pub fn shifted_system(sys: &HopfieldSystem, u_star: &DVector<f64>) -> Result<HopfieldSystem> {
    sys.shifted(u_star)
}

/// Convenience: `B⁻¹J`, the equilibrium of a system without coupling.
pub fn uncoupled_equilibrium(sys: &HopfieldSystem) -> DVector<f64> {
    sys.j.component_div(&sys.b)
}
