//! Closed-loop execution: reference governor, PD nominal law, CBF-QP and
//! distributionally robust CBF-QP safety filters.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::barrier::{self, BarrierEval, CdfModel, PointCloud, UncertaintySample};
use crate::math;
use crate::solver::{self, ConvexProblem, SolveSettings, SolveStatus};
use crate::trajopt::PiecewiseBezier;
use crate::{Error, Result, UNREACHABLE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlParams {
    pub kp: f64,
    pub kd: f64,
    /// Slope of the linear class-K function `alpha(h) = alpha_slope * h`.
    pub alpha_slope: f64,
    /// Governor gain `k`.
    pub governor_k: f64,
    /// Governor saturation exponent `zeta`.
    pub zeta: f64,
    /// Risk tolerance `epsilon`.
    pub epsilon: f64,
    /// Number of uncertainty samples `N`.
    pub n_samples: usize,
    /// Wasserstein ball radius `r`.
    pub wasserstein_r: f64,
    /// Dropout realizations per step when sampling the uncertainty.
    pub mc_passes: usize,
    /// Offset subtracted from the barrier before filtering, so the filters
    /// keep `h >= safety_margin`. Matching the planner's `eta` makes the
    /// control safe set the one the plan was certified against.
    pub safety_margin: f64,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub control_hz: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            kp: 0.8,
            kd: 0.1,
            alpha_slope: 1.0,
            governor_k: 0.2,
            zeta: 12.0,
            epsilon: 0.1,
            n_samples: 10,
            wasserstein_r: 0.02,
            mc_passes: 10,
            safety_margin: 0.05,
            u_min: vec![-2.0; 2],
            u_max: vec![2.0; 2],
            control_hz: 50.0,
        }
    }
}

impl ControlParams {
    /// Defaults with a symmetric `±bound` box for an `m`-joint arm.
    pub fn for_dof(m: usize, bound: f64) -> Self {
        Self { u_min: vec![-bound; m], u_max: vec![bound; m], ..Default::default() }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.control_hz
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(Error::InvalidParameter(s.into()));
        if !(self.kp > 0.0 && self.kd > 0.0 && self.alpha_slope > 0.0 && self.governor_k > 0.0) {
            return bad("gains must be positive");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0, 1)");
        }
        if self.zeta < 1.0 {
            return bad("zeta must be at least 1");
        }
        if self.n_samples == 0 || self.mc_passes == 0 {
            return bad("sample counts must be positive");
        }
        if !(self.safety_margin >= 0.0) {
            return bad("safety margin must be non-negative");
        }
        if self.wasserstein_r < 0.0 {
            return bad("Wasserstein radius must be non-negative");
        }
        if self.u_min.len() != self.u_max.len() || self.u_min.iter().zip(&self.u_max).any(|(a, b)| a >= b) {
            return bad("control box must satisfy u_min < u_max");
        }
        if !(self.control_hz > 0.0) {
            return bad("control rate must be positive");
        }
        Ok(())
    }

    pub fn clamp(&self, u: &mut [f64]) {
        for (i, v) in u.iter_mut().enumerate() {
            *v = v.clamp(self.u_min[i], self.u_max[i]);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernorState {
    pub s: f64,
    pub reference: Vec<f64>,
}

impl GovernorState {
    pub fn start(traj: &PiecewiseBezier) -> Self {
        Self { s: 0.0, reference: traj.eval(0.0) }
    }
}

/// `s_dot = k / (1 + ||q - gamma(s)||) * (1 - s^zeta)`.
pub fn governor_rate(s: f64, q: &[f64], reference: &[f64], k: f64, zeta: f64) -> f64 {
    k / (1.0 + math::dist(q, reference)) * (1.0 - libm::pow(s, zeta))
}

/// One explicit Euler step of the governor, clamped to `[0, 1]`.
pub fn governor_step(state: &GovernorState, q: &[f64], traj: &PiecewiseBezier, dt: f64, params: &ControlParams) -> GovernorState {
    let rate = governor_rate(state.s, q, &state.reference, params.governor_k, params.zeta).max(0.0);
    let s = (state.s + dt * rate).clamp(state.s, 1.0);
    GovernorState { s, reference: traj.eval(s) }
}

/// `u_bar = -K_P (q - gamma) - K_D q_dot`.
pub fn pd_nominal(q: &[f64], q_dot: &[f64], reference: &[f64], params: &ControlParams) -> Vec<f64> {
    q.iter()
        .zip(reference)
        .zip(q_dot)
        .map(|((qi, ri), vi)| -params.kp * (qi - ri) - params.kd * vi)
        .collect()
}

/// Control barrier condition `grad_q h . u + dh/dt + alpha_slope * h`.
pub fn cbc(eval: &BarrierEval, u: &[f64], alpha_slope: f64) -> f64 {
    math::dot(&eval.grad_q, u) + eval.dhdt + alpha_slope * eval.value
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutput {
    pub u: Vec<f64>,
    /// The filter changed the (box-clamped) nominal input.
    pub active: bool,
    /// No input in the box satisfies the constraint; `u` is the fallback.
    pub infeasible: bool,
    pub iterations: usize,
}

/// `u(lambda) = clamp(u_bar + lambda * a)` for the single-halfspace
/// projection.
fn clamp_along(u_bar: &[f64], a: &[f64], lambda: f64, params: &ControlParams) -> Vec<f64> {
    let mut u: Vec<f64> = u_bar.iter().zip(a).map(|(u, a)| u + lambda * a).collect();
    params.clamp(&mut u);
    u
}

/// Box point maximizing `a . u`; coordinates with `a_i = 0` keep the clamped
/// nominal value.
fn box_argmax(u_bar: &[f64], a: &[f64], params: &ControlParams) -> Vec<f64> {
    (0..a.len())
        .map(|i| {
            if a[i] > 0.0 {
                params.u_max[i]
            } else if a[i] < 0.0 {
                params.u_min[i]
            } else {
                u_bar[i].clamp(params.u_min[i], params.u_max[i])
            }
        })
        .collect()
}

/// Exact projection of `u_bar` onto `{u in box : a.u + b >= 0}`.
///
/// The KKT conditions give `u = clamp(u_bar + lambda a)` with the smallest
/// `lambda >= 0` meeting the constraint; `a.u(lambda)` is piecewise linear
/// and non-decreasing, so the breakpoints are walked in order.
pub fn project_halfspace_box(u_bar: &[f64], a: &[f64], b: f64, params: &ControlParams) -> FilterOutput {
    let u0 = clamp_along(u_bar, a, 0.0, params);
    let clamped = {
        let mut u = u_bar.to_vec();
        params.clamp(&mut u);
        u
    };
    if math::dot(a, &u0) + b >= 0.0 {
        return FilterOutput { u: u0, active: false, infeasible: false, iterations: 0 };
    }
    let best = box_argmax(u_bar, a, params);
    if math::dot(a, &best) + b < 0.0 {
        let active = math::dist(&best, &clamped) > 0.0;
        return FilterOutput { u: best, active, infeasible: true, iterations: 0 };
    }
    let mut breaks: Vec<f64> = Vec::new();
    for i in 0..a.len() {
        if a[i] != 0.0 {
            for bound in [params.u_min[i], params.u_max[i]] {
                let l = (bound - u_bar[i]) / a[i];
                if l > 0.0 {
                    breaks.push(l);
                }
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    let mut lo = 0.0;
    let mut g_lo = math::dot(a, &u0) + b;
    for &hi in &breaks {
        let g_hi = math::dot(a, &clamp_along(u_bar, a, hi, params)) + b;
        if g_hi >= 0.0 {
            let lambda = if g_hi > g_lo { lo + (hi - lo) * (-g_lo) / (g_hi - g_lo) } else { hi };
            let u = clamp_along(u_bar, a, lambda, params);
            return FilterOutput { u, active: true, infeasible: false, iterations: 0 };
        }
        lo = hi;
        g_lo = g_hi;
    }
    // Past the last breakpoint every coordinate with a_i != 0 is saturated.
    FilterOutput { u: best, active: true, infeasible: false, iterations: 0 }
}

/// `min ||u - u_bar||^2` s.t. CBC(u) >= 0 and `u` in the box; falls back to
/// the CBC-maximizing box point when no input satisfies the condition.
pub fn cbf_qp(u_bar: &[f64], eval: &BarrierEval, params: &ControlParams) -> FilterOutput {
    let b = params.alpha_slope * eval.value + eval.dhdt;
    project_halfspace_box(u_bar, &eval.grad_q, b, params)
}

/// `max_s [s eps - mean_i (s - c_i)^+]` for CBC values `c_i`. Concave and
/// piecewise linear in `s`, so the maximum sits at one of the `c_i`.
pub fn cvar_margin(cbcs: &[f64], epsilon: f64) -> f64 {
    let n = cbcs.len() as f64;
    cbcs.iter()
        .map(|&s| s * epsilon - cbcs.iter().map(|&c| (s - c).max(0.0)).sum::<f64>() / n)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Slack of the distributionally robust condition at `u`:
/// `cvar_margin(CBC_i(u)) - r ||u||_inf` (feasible when `>= 0`).
pub fn dr_slack(samples: &[UncertaintySample], u: &[f64], params: &ControlParams) -> f64 {
    let cbcs: Vec<f64> = samples.iter().map(|s| s.cbc(u)).collect();
    cvar_margin(&cbcs, params.epsilon) - params.wasserstein_r * math::norm_inf(u)
}

/// Distributionally robust CBF-QP over `N` uncertainty samples, solved as a
/// QP in `(u, s, beta, t)`:
///
/// `min ||u - u_bar||^2` s.t. `±r u_j <= t`, `t <= s eps - mean(beta)`,
/// `beta_i >= 0`, `beta_i >= s - xi_i . [u; 1; 1]`, `u` in the box.
pub fn dr_cbf_qp(u_bar: &[f64], samples: &[UncertaintySample], params: &ControlParams) -> Result<FilterOutput> {
    if samples.is_empty() {
        return Err(Error::Empty("uncertainty samples"));
    }
    let m = u_bar.len();
    if samples.iter().any(|s| s.grad_q.len() != m) {
        return Err(Error::Dimension { expected: m, got: samples[0].grad_q.len() });
    }
    let mut clamped = u_bar.to_vec();
    params.clamp(&mut clamped);
    if dr_slack(samples, &clamped, params) >= 0.0 {
        return Ok(FilterOutput { u: clamped, active: false, infeasible: false, iterations: 0 });
    }

    let n = samples.len();
    let nv = m + 1 + n + 1;
    let (is, it) = (m, m + 1 + n);
    let mut h = vec![0.0; nv * nv];
    let mut g = vec![0.0; nv];
    for j in 0..m {
        h[j * nv + j] = 2.0;
        g[j] = -2.0 * u_bar[j];
    }
    let mut prob = ConvexProblem::new(h, g);
    let r = params.wasserstein_r;
    for j in 0..m {
        let mut row = vec![0.0; nv];
        row[j] = r;
        row[it] = -1.0;
        prob.add_le(&row, 0.0);
        row[j] = -r;
        prob.add_le(&row, 0.0);
    }
    let mut row = vec![0.0; nv];
    row[it] = 1.0;
    row[is] = -params.epsilon;
    for i in 0..n {
        row[m + 1 + i] = 1.0 / n as f64;
    }
    prob.add_le(&row, 0.0);
    for (i, smp) in samples.iter().enumerate() {
        prob.add_row(&{
            let mut a = vec![0.0; nv];
            a[m + 1 + i] = 1.0;
            a
        }, 0.0, f64::INFINITY);
        // beta_i - s + grad_i . u >= -(alpha_i + dhdt_i)
        let mut a = vec![0.0; nv];
        a[m + 1 + i] = 1.0;
        a[is] = -1.0;
        a[..m].copy_from_slice(&smp.grad_q);
        prob.add_row(&a, -(smp.alpha_term + smp.dhdt), f64::INFINITY);
    }
    for j in 0..m {
        prob.add_box(j, params.u_min[j], params.u_max[j]);
    }

    // Start from the clamped nominal input with the best s for it.
    let mut x0 = vec![0.0; nv];
    x0[..m].copy_from_slice(&clamped);
    let report = solver::solve(&prob, &SolveSettings::default(), Some(&x0))?;
    let mut u = report.x[..m].to_vec();
    params.clamp(&mut u);
    let scale = samples.iter().map(|s| math::norm(&s.xi())).fold(1.0, f64::max);
    if report.status != SolveStatus::Infeasible && dr_slack(samples, &u, params) >= -1e-5 * scale {
        return Ok(FilterOutput { u, active: true, infeasible: false, iterations: report.iterations });
    }
    let mut out = max_min_cbc(u_bar, samples, params)?;
    out.iterations += report.iterations;
    Ok(out)
}

/// Fallback for an infeasible DR condition: the box input maximizing the
/// worst-sample CBC, `max_u min_i CBC_i(u)`, with a small pull toward the
/// nominal input to pick among ties.
fn max_min_cbc(u_bar: &[f64], samples: &[UncertaintySample], params: &ControlParams) -> Result<FilterOutput> {
    let m = u_bar.len();
    let nv = m + 1;
    let reg = 1e-3;
    let mut h = vec![0.0; nv * nv];
    let mut g = vec![0.0; nv];
    for j in 0..m {
        h[j * nv + j] = 2.0 * reg;
        g[j] = -2.0 * reg * u_bar[j];
    }
    g[m] = -1.0;
    let mut prob = ConvexProblem::new(h, g);
    for smp in samples {
        // grad_i . u - t >= -(alpha_i + dhdt_i)
        let mut a = vec![0.0; nv];
        a[..m].copy_from_slice(&smp.grad_q);
        a[m] = -1.0;
        prob.add_row(&a, -(smp.alpha_term + smp.dhdt), f64::INFINITY);
    }
    for j in 0..m {
        prob.add_box(j, params.u_min[j], params.u_max[j]);
    }
    let mut clamped = u_bar.to_vec();
    params.clamp(&mut clamped);
    let worst = |u: &[f64]| samples.iter().map(|s| s.cbc(u)).fold(f64::INFINITY, f64::min);
    let mut x0 = clamped.clone();
    x0.push(worst(&clamped));
    let report = solver::solve(&prob, &SolveSettings::default(), Some(&x0))?;
    let mut u = report.x[..m].to_vec();
    params.clamp(&mut u);
    // Never return something worse than the clamped nominal input.
    if worst(&u) < worst(&clamped) {
        u = clamped;
    }
    Ok(FilterOutput { u, active: true, infeasible: true, iterations: report.iterations })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    Pd,
    Cbf,
    DrCbf,
}

impl ControlMode {
    pub fn name(self) -> &'static str {
        match self {
            ControlMode::Pd => "pd",
            ControlMode::Cbf => "cbf",
            ControlMode::DrCbf => "dr_cbf",
        }
    }
}

impl core::str::FromStr for ControlMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pd" => Ok(ControlMode::Pd),
            "cbf" => Ok(ControlMode::Cbf),
            "dr_cbf" | "dr-cbf" => Ok(ControlMode::DrCbf),
            _ => Err(Error::InvalidParameter(alloc::format!("unknown control mode {s:?}"))),
        }
    }
}

/// Wall clock used to time the filter; the core crate has none of its own.
pub trait Clock {
    fn now_s(&self) -> f64;
}

/// Clock that always reads zero.
pub struct NoClock;

impl Clock for NoClock {
    fn now_s(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Deterministic barrier at `q`.
    pub h: f64,
    /// CBC of the applied input under the deterministic barrier.
    pub cbc: f64,
    pub filter_active: bool,
    pub infeasible: bool,
    pub solver_iterations: usize,
    pub solve_ms: f64,
    pub s: f64,
}

/// Governor, nominal law and safety filter for one control period. The
/// returned input is inside the box.
#[allow(clippy::too_many_arguments)]
pub fn control_step(
    q: &[f64],
    q_dot: &[f64],
    traj: &PiecewiseBezier,
    cloud: &PointCloud,
    model: &dyn CdfModel,
    gov: &GovernorState,
    params: &ControlParams,
    mode: ControlMode,
    seed: u64,
    clock: &dyn Clock,
) -> Result<(Vec<f64>, GovernorState, StepDiagnostics)> {
    let m = q.len();
    if q_dot.len() != m || params.u_min.len() != m {
        return Err(Error::Dimension { expected: m, got: q_dot.len().min(params.u_min.len()) });
    }
    let gov = governor_step(gov, q, traj, params.dt(), params);
    let u_bar = pd_nominal(q, q_dot, &gov.reference, params);
    let eval = if cloud.points.is_empty() {
        None
    } else {
        Some(barrier::eval_barrier(model, cloud, q, None)?)
    };
    let t0 = clock.now_s();
    let out = match (mode, &eval) {
        (ControlMode::Pd, _) | (_, None) => {
            let mut u = u_bar.clone();
            params.clamp(&mut u);
            FilterOutput { u, active: false, infeasible: false, iterations: 0 }
        }
        (ControlMode::Cbf, Some(e)) => {
            let shifted = BarrierEval { value: e.value - params.safety_margin, ..e.clone() };
            cbf_qp(&u_bar, &shifted, params)
        }
        (ControlMode::DrCbf, Some(_)) => {
            let avail = (cloud.points.len() + 1) * params.mc_passes;
            let samples = barrier::sample_uncertainty(
                model,
                cloud,
                q,
                params.mc_passes,
                params.n_samples.min(avail),
                params.alpha_slope,
                seed,
            )?;
            let shift = params.alpha_slope * params.safety_margin;
            let samples: Vec<_> = samples
                .into_iter()
                .map(|x| UncertaintySample { alpha_term: x.alpha_term - shift, ..x })
                .collect();
            dr_cbf_qp(&u_bar, &samples, params)?
        }
    };
    let solve_ms = (clock.now_s() - t0) * 1e3;
    let (h, c) = match &eval {
        Some(e) => (e.value, cbc(e, &out.u, params.alpha_slope)),
        None => (UNREACHABLE, UNREACHABLE),
    };
    let diag = StepDiagnostics {
        h,
        cbc: c,
        filter_active: out.active,
        infeasible: out.infeasible,
        solver_iterations: out.iterations,
        solve_ms,
        s: gov.s,
    };
    Ok((out.u, gov, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::barrier::ArgminSource;
    use crate::rng;
    use proptest::prelude::*;

    fn eval(grad: &[f64], h: f64, dhdt: f64) -> BarrierEval {
        BarrierEval { value: h, grad_q: grad.to_vec(), dhdt, argmin: ArgminSource::SelfCollision }
    }

    fn sample(grad: &[f64], alpha: f64, dhdt: f64) -> UncertaintySample {
        UncertaintySample { grad_q: grad.to_vec(), alpha_term: alpha, dhdt }
    }

    #[test]
    fn governor_rates() {
        let p = ControlParams::default();
        assert!((governor_rate(0.0, &[0.0, 0.0], &[0.0, 0.0], p.governor_k, p.zeta) - 0.2).abs() < 1e-15);
        assert_eq!(governor_rate(1.0, &[0.0, 0.0], &[0.0, 0.0], p.governor_k, p.zeta), 0.0);
        assert!((governor_rate(0.0, &[1.0, 0.0], &[0.0, 0.0], p.governor_k, p.zeta) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn pd_examples() {
        let p = ControlParams::default();
        assert_eq!(pd_nominal(&[1.0, 1.0], &[0.0, 0.0], &[1.0, 1.0], &p), vec![0.0, 0.0]);
        let u = pd_nominal(&[1.5, 0.0], &[0.0, 0.0], &[1.0, 1.0], &p);
        assert!((u[0] + 0.4).abs() < 1e-15 && (u[1] - 0.8).abs() < 1e-15);
        let u = pd_nominal(&[0.0, 0.0], &[1.0, -2.0], &[0.0, 0.0], &p);
        assert!((u[0] + 0.1).abs() < 1e-15 && (u[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn cbc_examples() {
        assert_eq!(cbc(&eval(&[1.0, 0.0], 0.5, 0.0), &[-1.0, 0.0], 1.0), -0.5);
        assert_eq!(cbc(&eval(&[0.3, 0.2], 1.0, 0.0), &[0.0, 0.0], 1.0), 1.0);
        assert_eq!(cbc(&eval(&[0.0, 0.0], 0.4, -0.1), &[1.7, -3.0], 1.0), 0.4 - 0.1);
        let s = sample(&[1.0, 2.0], 0.5, -0.25);
        let u = [0.3, -0.1];
        assert!((s.cbc(&u) - math::dot(&s.xi(), &[u[0], u[1], 1.0, 1.0])).abs() < 1e-15);
    }

    #[test]
    fn cbf_qp_examples() {
        let p = ControlParams::default();
        let out = cbf_qp(&[0.5, 0.5], &eval(&[1.0, 0.0], 1.0, 0.0), &p);
        assert_eq!(out.u, vec![0.5, 0.5]);
        assert!(!out.active);
        let out = cbf_qp(&[-1.0, 0.0], &eval(&[1.0, 0.0], 0.0, 0.0), &p);
        assert!(math::dist(&out.u, &[0.0, 0.0]) < 1e-12);
        assert!(!out.infeasible);
        let out = cbf_qp(&[-1.0, 0.0], &eval(&[0.0, 0.0], 0.1, -0.5), &p);
        assert!(out.infeasible);
    }

    #[test]
    fn dr_cbf_examples() {
        let p = ControlParams::default();
        let s = [sample(&[0.0, 0.0], 1.0, 0.0)];
        let out = dr_cbf_qp(&[1.5, -2.0], &s, &p).unwrap();
        assert_eq!(out.u, vec![1.5, -2.0]);
        let p0 = ControlParams { wasserstein_r: 0.0, ..Default::default() };
        let many = [sample(&[1.0, 0.0], 0.5, 0.0), sample(&[0.0, 1.0], 0.3, 0.1)];
        let out = dr_cbf_qp(&[0.1, 0.1], &many, &p0).unwrap();
        assert_eq!(out.u, vec![0.1, 0.1]);
        // Active constraint: duplicates give the same solution as one sample.
        let one = [sample(&[1.0, 0.5], 0.1, -0.05)];
        let ten: Vec<_> = (0..10).map(|_| one[0].clone()).collect();
        let a = dr_cbf_qp(&[-1.0, -1.0], &one, &p).unwrap();
        let b = dr_cbf_qp(&[-1.0, -1.0], &ten, &p).unwrap();
        assert!(a.active && !a.infeasible);
        assert!(math::dist(&a.u, &b.u) < 1e-4, "{:?} {:?}", a.u, b.u);
        assert!(dr_slack(&one, &a.u, &p) >= -1e-5);
    }

    #[test]
    fn dr_cbf_single_sample_matches_tightened_projection() {
        // With N = 1 the condition reads eps * CBC(u) >= r ||u||_inf; with
        // u on the halfspace boundary of a 1-D problem the optimum is
        // computable by hand.
        let p = ControlParams { u_min: vec![-2.0], u_max: vec![2.0], ..Default::default() };
        let s = [sample(&[1.0], 0.5, 0.0)];
        // eps (u + 0.5) >= r |u|, u_bar = -1: u < 0 gives u >= -0.5 eps / (eps + r).
        let expect = -0.5 * p.epsilon / (p.epsilon + p.wasserstein_r);
        let out = dr_cbf_qp(&[-1.0], &s, &p).unwrap();
        assert!((out.u[0] - expect).abs() < 1e-4, "{} vs {}", out.u[0], expect);
    }

    #[test]
    fn dr_cbf_fallback_is_flagged() {
        let p = ControlParams::default();
        let s = [sample(&[0.1, 0.0], -5.0, 0.0), sample(&[0.0, 0.0], -1.0, 0.0)];
        let out = dr_cbf_qp(&[0.0, 0.0], &s, &p).unwrap();
        assert!(out.infeasible);
        assert!((out.u[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn cvar_margin_brute_force() {
        let mut r = rng::seeded(9);
        for _ in 0..50 {
            let c: Vec<f64> = (0..7).map(|_| rng::uniform(&mut r, -1.0, 2.0)).collect();
            let exact = cvar_margin(&c, 0.1);
            let mut best = f64::NEG_INFINITY;
            for i in 0..=30_000 {
                let s = -1.5 + 4.0 * i as f64 / 30_000.0;
                let v = 0.1 * s - c.iter().map(|&ci| (s - ci).max(0.0)).sum::<f64>() / 7.0;
                best = best.max(v);
            }
            assert!(exact >= best - 1e-12 && exact - best < 1e-4);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn halfspace_projection_is_optimal(
            ub in proptest::collection::vec(-3.0f64..3.0, 2),
            a in proptest::collection::vec(-2.0f64..2.0, 2),
            b in -2.0f64..2.0,
        ) {
            let p = ControlParams::default();
            let out = project_halfspace_box(&ub, &a, b, &p);
            prop_assert!(out.u.iter().all(|v| (-2.0..=2.0).contains(v)));
            if !out.infeasible {
                prop_assert!(math::dot(&a, &out.u) + b >= -1e-9);
                // Grid oracle: no feasible box point is closer to u_bar.
                let d = math::dist(&out.u, &ub);
                for i in 0..=80 {
                    for j in 0..=80 {
                        let u = [-2.0 + 0.05 * i as f64, -2.0 + 0.05 * j as f64];
                        if math::dot(&a, &u) + b >= 0.0 {
                            prop_assert!(math::dist(&u, &ub) >= d - 1e-9);
                        }
                    }
                }
            }
        }

        #[test]
        fn dr_is_more_conservative_than_mean_cbf(seed in 0u64..1000) {
            let mut r = rng::seeded(seed);
            let p = ControlParams::default();
            let base = [rng::normal(&mut r, 0.0, 1.0), rng::normal(&mut r, 0.0, 1.0)];
            let samples: Vec<UncertaintySample> = (0..p.n_samples)
                .map(|_| sample(
                    &[base[0] + rng::normal(&mut r, 0.0, 0.2), base[1] + rng::normal(&mut r, 0.0, 0.2)],
                    rng::uniform(&mut r, 0.0, 0.5),
                    rng::normal(&mut r, -0.3, 0.2),
                ))
                .collect();
            let ub = [rng::uniform(&mut r, -2.0, 2.0), rng::uniform(&mut r, -2.0, 2.0)];
            let n = samples.len() as f64;
            let mean = eval(
                &[samples.iter().map(|s| s.grad_q[0]).sum::<f64>() / n, samples.iter().map(|s| s.grad_q[1]).sum::<f64>() / n],
                samples.iter().map(|s| s.alpha_term).sum::<f64>() / n,
                samples.iter().map(|s| s.dhdt).sum::<f64>() / n,
            );
            let dr = dr_cbf_qp(&ub, &samples, &p).unwrap();
            let cbf = cbf_qp(&ub, &mean, &p);
            if !dr.infeasible && !cbf.infeasible {
                prop_assert!(math::dist(&dr.u, &ub) >= math::dist(&cbf.u, &ub) - 1e-4);
            }
        }
    }
}
