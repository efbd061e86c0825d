//! Piecewise-Bézier smoothing through a bubble sequence.
//!
//! Segment `j` is owned by bubble `j`; keeping its control points inside the
//! bubble keeps the whole segment inside it (convex hull property).
//!
//! C⁰/C¹/C² continuity and the zero velocity/acceleration boundary conditions
//! are eliminated up front: the first three control points of every segment
//! are affine in the last three of its predecessor, the first segment starts
//! with `q0` three times and the last one ends with `qG` three times. What is
//! left over the remaining free control points is a convex QCQP with one ball
//! per control point plus joint-limit boxes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::arm::{ArmModel, JointConfig};
use crate::math;
use crate::planner::Bubble;
use crate::solver::{self, ConvexProblem, SolveSettings, SolveStatus};
use crate::{Error, Result};

fn binom(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut v = 1.0;
    for i in 0..k {
        v = v * (n - i) as f64 / (i + 1) as f64;
    }
    v
}

/// Gram matrix `∫ B_i B_j` of the degree-`n` Bernstein basis on `[0, 1]`.
fn bernstein_gram(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; (n + 1) * (n + 1)];
    for i in 0..=n {
        for j in 0..=n {
            m[i * (n + 1) + j] = binom(n, i) * binom(n, j) / ((2 * n + 1) as f64 * binom(2 * n, i + j));
        }
    }
    m
}

/// `k`-th forward difference operator, `(d - k + 1) x (d + 1)`.
fn difference_matrix(d: usize, k: usize) -> Vec<f64> {
    let rows = d - k + 1;
    let mut out = vec![0.0; rows * (d + 1)];
    for r in 0..rows {
        for i in 0..=k {
            let sign = if (k - i) % 2 == 0 { 1.0 } else { -1.0 };
            out[r * (d + 1) + r + i] = sign * binom(k, i);
        }
    }
    out
}

fn falling(d: usize, k: usize) -> f64 {
    (0..k).map(|i| (d - i) as f64).product()
}

/// `Q_k` with `∫₀¹ ‖γ⁽ᵏ⁾‖² dt = Σ_coords cᵀ Q_k c` for a degree-`d` curve.
/// Row-major `(d + 1) x (d + 1)`; zero when `k > d`.
pub fn derivative_energy_matrix(d: usize, k: usize) -> Vec<f64> {
    let n = d + 1;
    if k > d {
        return vec![0.0; n * n];
    }
    let dk = difference_matrix(d, k);
    let m = bernstein_gram(d - k);
    let rows = d - k + 1;
    let scale = falling(d, k) * falling(d, k);
    let mut q = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            let mut s = 0.0;
            for r in 0..rows {
                for c in 0..rows {
                    s += dk[r * n + a] * m[r * rows + c] * dk[c * n + b];
                }
            }
            q[a * n + b] = scale * s;
        }
    }
    q
}

fn de_casteljau(points: &[Vec<f64>], t: f64) -> Vec<f64> {
    let mut work: Vec<Vec<f64>> = points.to_vec();
    let n = work.len();
    for level in 1..n {
        for i in 0..n - level {
            for c in 0..work[i].len() {
                work[i][c] = (1.0 - t) * work[i][c] + t * work[i + 1][c];
            }
        }
    }
    work.swap_remove(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BezierSegment {
    pub control_points: Vec<JointConfig>,
}

impl BezierSegment {
    pub fn degree(&self) -> usize {
        self.control_points.len() - 1
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        self.derivative(t, 0)
    }

    /// `k`-th derivative with respect to the local parameter `t ∈ [0, 1]`.
    pub fn derivative(&self, t: f64, k: usize) -> Vec<f64> {
        let d = self.degree();
        let m = self.control_points[0].len();
        if k > d {
            return vec![0.0; m];
        }
        let mut pts: Vec<Vec<f64>> = self.control_points.iter().map(|c| c.to_vec()).collect();
        for _ in 0..k {
            pts = pts.windows(2).map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect()).collect();
        }
        let scale = falling(d, k);
        de_casteljau(&pts, t).into_iter().map(|v| v * scale).collect()
    }

    /// `∫₀¹ ‖γ⁽ᵏ⁾‖² dt`.
    pub fn energy(&self, k: usize) -> f64 {
        let d = self.degree();
        let q = derivative_energy_matrix(d, k);
        let m = self.control_points[0].len();
        let mut e = 0.0;
        for c in 0..m {
            for a in 0..=d {
                for b in 0..=d {
                    e += q[a * (d + 1) + b] * self.control_points[a][c] * self.control_points[b][c];
                }
            }
        }
        e
    }
}

/// Smoothed path; segment `j` lives in `bubbles[j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseBezier {
    pub degree: usize,
    pub segments: Vec<BezierSegment>,
    pub bubbles: Vec<Bubble>,
}

impl PiecewiseBezier {
    pub fn n_segments(&self) -> usize {
        self.segments.len()
    }

    /// Segment index and local parameter for a global `s ∈ [0, 1]`.
    pub fn locate(&self, s: f64) -> (usize, f64) {
        let n = self.segments.len();
        let s = s.clamp(0.0, 1.0);
        if s >= 1.0 {
            return (n - 1, 1.0);
        }
        let x = s * n as f64;
        let i = (libm::floor(x) as usize).min(n - 1);
        (i, x - i as f64)
    }

    pub fn eval(&self, s: f64) -> Vec<f64> {
        let (i, t) = self.locate(s);
        self.segments[i].eval(t)
    }

    pub fn start(&self) -> Vec<f64> {
        self.segments[0].eval(0.0)
    }

    pub fn end(&self) -> Vec<f64> {
        self.segments[self.segments.len() - 1].eval(1.0)
    }

    /// `per_segment` evenly spaced samples of every segment (both ends
    /// included), concatenated.
    pub fn sample(&self, per_segment: usize) -> Vec<Vec<f64>> {
        let k = per_segment.max(2);
        let mut out = Vec::with_capacity(k * self.segments.len());
        for seg in &self.segments {
            for i in 0..k {
                out.push(seg.eval(i as f64 / (k - 1) as f64));
            }
        }
        out
    }

    /// Largest jump in position, first and second derivative over interior
    /// joints.
    pub fn interface_residuals(&self) -> [f64; 3] {
        let mut r = [0.0f64; 3];
        for w in self.segments.windows(2) {
            for (k, slot) in r.iter_mut().enumerate() {
                *slot = slot.max(math::dist(&w[0].derivative(1.0, k), &w[1].derivative(0.0, k)));
            }
        }
        r
    }

    /// Largest first/second derivative norm at the two path ends.
    pub fn boundary_residual(&self) -> f64 {
        let first = &self.segments[0];
        let last = &self.segments[self.segments.len() - 1];
        let mut r: f64 = 0.0;
        for k in 1..=2 {
            r = r.max(math::norm(&first.derivative(0.0, k))).max(math::norm(&last.derivative(1.0, k)));
        }
        r
    }

    /// Largest distance by which a control point leaves its bubble (0 when
    /// all are inside).
    pub fn containment_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (seg, b) in self.segments.iter().zip(&self.bubbles) {
            for c in &seg.control_points {
                worst = worst.max(math::dist(c, &b.center) - b.radius);
            }
        }
        worst
    }

    pub fn energy(&self, k: usize) -> f64 {
        self.segments.iter().map(|s| s.energy(k)).sum()
    }

    /// Length of the polyline through `per_segment` samples per segment.
    pub fn length(&self, per_segment: usize) -> f64 {
        self.sample(per_segment).windows(2).map(|w| math::dist(&w[0], &w[1])).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajoptParams {
    pub degree: usize,
    /// Weights of the derivative energies for `k = 1, 2, ...`.
    pub weights: Vec<f64>,
    /// Ball radii are shrunk by this much inside the solver.
    pub shrink: f64,
    pub max_iter: usize,
}

impl Default for TrajoptParams {
    fn default() -> Self {
        Self { degree: 5, weights: vec![0.0, 1.0, 0.1], shrink: 1e-5, max_iter: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajoptReport {
    pub solver_optimal: bool,
    pub iterations: usize,
    /// Weighted energy of the returned curve.
    pub cost: f64,
    /// Fraction of the step from the feasible start to the solver iterate
    /// that was kept (1 unless the iterate left a bubble or the box).
    pub blend: f64,
}

/// Control point as an affine function of the free points, `q0` and `qG`.
#[derive(Clone)]
struct Aff {
    free: Vec<f64>,
    q0: f64,
    qg: f64,
}

impl Aff {
    fn zero(nf: usize) -> Self {
        Self { free: vec![0.0; nf], q0: 0.0, qg: 0.0 }
    }

    fn combo(terms: &[(f64, &Aff)]) -> Self {
        let mut out = Aff::zero(terms[0].1.free.len());
        for &(w, a) in terms {
            for (o, v) in out.free.iter_mut().zip(&a.free) {
                *o += w * v;
            }
            out.q0 += w * a.q0;
            out.qg += w * a.qg;
        }
        out
    }

    fn is_fixed(&self) -> bool {
        self.free.iter().all(|&v| v == 0.0)
    }

    fn constant(&self, q0: &[f64], qg: &[f64], c: usize) -> f64 {
        self.q0 * q0[c] + self.qg * qg[c]
    }

    fn eval(&self, z: &[f64], m: usize, q0: &[f64], qg: &[f64]) -> Vec<f64> {
        (0..m)
            .map(|c| self.constant(q0, qg, c) + self.free.iter().enumerate().map(|(i, w)| w * z[i * m + c]).sum::<f64>())
            .collect()
    }
}

/// Affine maps of all control points, `[segment][point]`, and the number of
/// free points.
fn parameterize(n: usize, d: usize) -> (Vec<Vec<Aff>>, usize) {
    let per_mid = d - 2;
    let nf = (n - 1) * per_mid + (d - 5);
    let mut next_free = 0;
    let mut segs: Vec<Vec<Aff>> = Vec::with_capacity(n);
    for j in 0..n {
        let mut pts: Vec<Aff> = Vec::with_capacity(d + 1);
        if j == 0 {
            for _ in 0..3 {
                pts.push(Aff { q0: 1.0, ..Aff::zero(nf) });
            }
        } else {
            let p = &segs[j - 1];
            let (a, b, c) = (&p[d], &p[d - 1], &p[d - 2]);
            pts.push(a.clone());
            pts.push(Aff::combo(&[(2.0, a), (-1.0, b)]));
            pts.push(Aff::combo(&[(4.0, a), (-4.0, b), (1.0, c)]));
        }
        let last = j == n - 1;
        let free_end = if last { d - 3 } else { d + 1 };
        for _ in 3..free_end {
            let mut a = Aff::zero(nf);
            a.free[next_free] = 1.0;
            next_free += 1;
            pts.push(a);
        }
        if last {
            for _ in 0..3 {
                pts.push(Aff { qg: 1.0, ..Aff::zero(nf) });
            }
        }
        segs.push(pts);
    }
    debug_assert_eq!(next_free, nf);
    (segs, nf)
}

fn assemble(
    maps: &[Vec<Aff>],
    z: &[f64],
    m: usize,
    q0: &[f64],
    qg: &[f64],
    d: usize,
    bubbles: &[Bubble],
) -> PiecewiseBezier {
    let segments = maps
        .iter()
        .map(|pts| BezierSegment {
            control_points: pts.iter().map(|a| JointConfig::new(a.eval(z, m, q0, qg))).collect(),
        })
        .collect();
    PiecewiseBezier { degree: d, segments, bubbles: bubbles.to_vec() }
}

fn limit_violation(arm: &ArmModel, traj: &PiecewiseBezier) -> f64 {
    let mut worst: f64 = 0.0;
    for seg in &traj.segments {
        for c in &seg.control_points {
            for (i, v) in c.iter().enumerate() {
                worst = worst.max(arm.joint_limits_lo[i] - v).max(v - arm.joint_limits_hi[i]);
            }
        }
    }
    worst
}

/// Point of `a ∩ b` on the segment between their centers.
fn overlap_point(a: &Bubble, b: &Bubble) -> Vec<f64> {
    let w = a.radius / (a.radius + b.radius);
    a.center.iter().zip(b.center.iter()).map(|(x, y)| x + w * (y - x)).collect()
}

/// Minimum weighted derivative energy curve from `q0` to `qg` through
/// `bubbles`.
pub fn optimize_trajectory(
    arm: &ArmModel,
    bubbles: &[Bubble],
    q0: &[f64],
    qg: &[f64],
    params: &TrajoptParams,
) -> Result<(PiecewiseBezier, TrajoptReport)> {
    let d = params.degree;
    if d < 5 {
        return Err(Error::InvalidParameter("trajectory degree must be at least 5".into()));
    }
    let n = bubbles.len();
    if n == 0 {
        return Err(Error::Empty("bubble sequence"));
    }
    let m = arm.dof();
    arm.check_config(q0)?;
    arm.check_config(qg)?;
    if !bubbles[0].contains(q0) {
        return Err(Error::Trajectory(format!(
            "start lies {:.3e} outside the first bubble",
            math::dist(q0, &bubbles[0].center) - bubbles[0].radius
        )));
    }
    if !bubbles[n - 1].contains(qg) {
        return Err(Error::Trajectory(format!(
            "goal lies {:.3e} outside the last bubble",
            math::dist(qg, &bubbles[n - 1].center) - bubbles[n - 1].radius
        )));
    }
    for (j, w) in bubbles.windows(2).enumerate() {
        if !w[0].overlaps(&w[1]) {
            return Err(Error::Trajectory(format!("bubbles {} and {} do not overlap", j, j + 1)));
        }
    }

    let (maps, nf) = parameterize(n, d);
    let nv = nf * m;

    // Strictly feasible start: every free point of segment j sits in the
    // overlap of bubbles j and j + 1; the last segment's free points sit at qG.
    let mut z0 = vec![0.0; nv];
    {
        let mut k = 0;
        for j in 0..n {
            let count = if j == n - 1 { d - 5 } else { d - 2 };
            let p = if j == n - 1 { qg.to_vec() } else { overlap_point(&bubbles[j], &bubbles[j + 1]) };
            for _ in 0..count {
                z0[k * m..(k + 1) * m].copy_from_slice(&p);
                k += 1;
            }
        }
    }

    let mut qsum = vec![0.0; (d + 1) * (d + 1)];
    for (k, &w) in params.weights.iter().enumerate() {
        if w != 0.0 {
            for (a, b) in qsum.iter_mut().zip(derivative_energy_matrix(d, k + 1)) {
                *a += w * b;
            }
        }
    }

    let mut h_pt = vec![0.0; nf * nf];
    let mut g = vec![0.0; nv];
    for pts in &maps {
        for a in 0..=d {
            for b in 0..=d {
                let w = qsum[a * (d + 1) + b];
                if w == 0.0 {
                    continue;
                }
                let (pa, pb) = (&pts[a], &pts[b]);
                for i in 0..nf {
                    if pa.free[i] == 0.0 {
                        continue;
                    }
                    for k in 0..nf {
                        h_pt[i * nf + k] += 2.0 * w * pa.free[i] * pb.free[k];
                    }
                    for c in 0..m {
                        g[i * m + c] += 2.0 * w * pa.free[i] * pb.constant(q0, qg, c);
                    }
                }
            }
        }
    }
    let mut h = vec![0.0; nv * nv];
    for i in 0..nf {
        for k in 0..nf {
            for c in 0..m {
                h[(i * m + c) * nv + k * m + c] = h_pt[i * nf + k];
            }
        }
    }

    let mut prob = ConvexProblem::new(h, g);
    for (pts, bubble) in maps.iter().zip(bubbles) {
        for a in pts {
            if a.is_fixed() {
                continue;
            }
            let mut gm = vec![0.0; m * nv];
            let mut center = vec![0.0; m];
            for c in 0..m {
                for (i, w) in a.free.iter().enumerate() {
                    gm[c * nv + i * m + c] = *w;
                }
                center[c] = bubble.center[c] - a.constant(q0, qg, c);
            }
            prob.add_ball_affine(gm, center, (bubble.radius - params.shrink).max(0.0));
            for c in 0..m {
                let mut row = vec![0.0; nv];
                for (i, w) in a.free.iter().enumerate() {
                    row[i * m + c] = *w;
                }
                let k = a.constant(q0, qg, c);
                prob.add_row(&row, arm.joint_limits_lo[c] - k, arm.joint_limits_hi[c] - k);
            }
        }
    }

    let feasible = |z: &[f64]| {
        let t = assemble(&maps, z, m, q0, qg, d, bubbles);
        t.containment_violation() <= 0.0 && limit_violation(arm, &t) <= 0.0
    };

    let (z, report) = if nv == 0 {
        (Vec::new(), TrajoptReport { solver_optimal: true, iterations: 0, cost: 0.0, blend: 1.0 })
    } else {
        let settings = SolveSettings { max_iter: params.max_iter, ..Default::default() };
        let sol = solver::solve(&prob, &settings, Some(&z0))?;
        if sol.status == SolveStatus::Infeasible && !feasible(&z0) {
            return Err(Error::Trajectory("bubble constraints are infeasible".into()));
        }
        let mix = |theta: f64| -> Vec<f64> { z0.iter().zip(&sol.x).map(|(a, b)| a + theta * (b - a)).collect() };
        let mut theta = 1.0;
        if !feasible(&sol.x) {
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if feasible(&mix(mid)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            theta = lo;
        }
        let z = mix(theta);
        (
            z,
            TrajoptReport {
                solver_optimal: sol.status == SolveStatus::Optimal,
                iterations: sol.iterations,
                cost: 0.0,
                blend: theta,
            },
        )
    };
    let traj = assemble(&maps, &z, m, q0, qg, d, bubbles);
    let cost = params.weights.iter().enumerate().map(|(k, w)| w * traj.energy(k + 1)).sum();
    Ok((traj, TrajoptReport { cost, ..report }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;

    /// Gauss-Legendre nodes and weights on `[0, 1]` by Newton iteration on
    /// the Legendre polynomial.
    fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for i in 1..=n {
            let mut x = libm::cos(math::PI * (i as f64 - 0.25) / (n as f64 + 0.5));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            out.push((0.5 * (x + 1.0), 0.5 * w));
        }
        out
    }

    fn seg(points: &[[f64; 2]]) -> BezierSegment {
        BezierSegment { control_points: points.iter().map(|p| JointConfig::new(p.to_vec())).collect() }
    }

    fn bub(c: &[f64], r: f64) -> Bubble {
        Bubble { center: JointConfig::new(c.to_vec()), radius: r }
    }

    fn arm() -> ArmModel {
        ArmModel::planar(&[2.0, 2.0]).unwrap()
    }

    #[test]
    fn linear_energy_is_squared_difference() {
        let s = seg(&[[0.0, 1.0], [3.0, -3.0]]);
        assert!((s.energy(1) - 25.0).abs() < 1e-12);
        assert_eq!(derivative_energy_matrix(1, 2), vec![0.0; 4]);
        let c = seg(&[[0.7, 0.2]; 6]);
        for k in 1..=5 {
            assert!(c.energy(k).abs() < 1e-10);
        }
    }

    #[test]
    fn energy_matches_quadrature() {
        let mut r = rng::seeded(4);
        let gl = gauss_legendre(12);
        for _ in 0..10 {
            let pts: Vec<[f64; 2]> =
                (0..6).map(|_| [rng::uniform(&mut r, -2.0, 2.0), rng::uniform(&mut r, -2.0, 2.0)]).collect();
            let s = seg(&pts);
            for k in 1..=3 {
                let quad: f64 = gl.iter().map(|&(t, w)| w * math::dot(&s.derivative(t, k), &s.derivative(t, k))).sum();
                assert!((s.energy(k) - quad).abs() < 1e-8 * quad.max(1.0), "k={k}");
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let s = seg(&[[0.0, 0.0], [1.0, 2.0], [2.0, -1.0], [0.5, 0.5], [3.0, 1.0], [2.0, 2.0]]);
        let h = 1e-5;
        for k in 1..=2 {
            let t = 0.37;
            let a = s.derivative(t + h, k - 1);
            let b = s.derivative(t - h, k - 1);
            let fd: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect();
            assert!(math::dist(&fd, &s.derivative(t, k)) < 1e-5);
        }
    }

    #[test]
    fn single_bubble_same_endpoints_is_constant() {
        let q = [0.3, -0.2];
        let (t, rep) = optimize_trajectory(&arm(), &[bub(&q, 0.5)], &q, &q, &TrajoptParams::default()).unwrap();
        assert!(rep.cost.abs() < 1e-12);
        for p in t.sample(20) {
            assert!(math::dist(&p, &q) < 1e-12);
        }
    }

    #[test]
    fn two_bubbles_stay_in_union() {
        let bubbles = [bub(&[0.0, 0.0], 0.6), bub(&[1.0, 0.0], 0.6)];
        let (t, rep) = optimize_trajectory(&arm(), &bubbles, &[0.0, 0.0], &[1.0, 0.0], &TrajoptParams::default()).unwrap();
        assert!(rep.solver_optimal);
        for p in t.sample(250) {
            let inside = bubbles.iter().any(|b| math::dist(&p, &b.center) <= b.radius + 1e-9);
            assert!(inside);
        }
        assert!(math::dist(&t.start(), &[0.0, 0.0]) < 1e-12);
        assert!(math::dist(&t.end(), &[1.0, 0.0]) < 1e-12);
    }

    #[test]
    fn heavier_acceleration_weight_does_not_increase_it() {
        let bubbles = [bub(&[0.0, 0.0], 0.5), bub(&[0.6, 0.4], 0.4), bub(&[1.2, 0.0], 0.5)];
        let p1 = TrajoptParams::default();
        let p10 = TrajoptParams { weights: vec![0.0, 10.0, 0.1], ..Default::default() };
        let (a, _) = optimize_trajectory(&arm(), &bubbles, &[0.0, 0.0], &[1.2, 0.0], &p1).unwrap();
        let (b, _) = optimize_trajectory(&arm(), &bubbles, &[0.0, 0.0], &[1.2, 0.0], &p10).unwrap();
        assert!(b.containment_violation() <= 0.0);
        assert!(b.energy(2) <= a.energy(2) * (1.0 + 1e-4) + 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        let q = [0.0, 0.0];
        let p = TrajoptParams { degree: 3, ..Default::default() };
        assert!(optimize_trajectory(&arm(), &[bub(&q, 1.0)], &q, &q, &p).is_err());
        let gap = [bub(&[0.0, 0.0], 0.2), bub(&[1.0, 0.0], 0.2)];
        assert!(matches!(
            optimize_trajectory(&arm(), &gap, &[0.0, 0.0], &[1.0, 0.0], &TrajoptParams::default()),
            Err(Error::Trajectory(_))
        ));
        assert!(optimize_trajectory(&arm(), &[bub(&q, 0.1)], &q, &[0.5, 0.0], &TrajoptParams::default()).is_err());
    }

    fn chain(seed: u64, n: usize) -> Vec<Bubble> {
        let mut r = rng::seeded(seed);
        let mut c = vec![rng::uniform(&mut r, -1.0, 1.0), rng::uniform(&mut r, -1.0, 1.0)];
        let mut rad = rng::uniform(&mut r, 0.05, 0.6);
        let mut out = vec![bub(&c, rad)];
        for _ in 1..n {
            let next = rng::uniform(&mut r, 0.05, 0.6);
            let ang = rng::uniform(&mut r, -math::PI, math::PI);
            let step = rng::uniform(&mut r, 0.3, 0.95) * (rad + next);
            c = vec![c[0] + step * libm::cos(ang), c[1] + step * libm::sin(ang)];
            rad = next;
            out.push(bub(&c, rad));
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn random_chains_are_smooth_and_contained(seed in 0u64..10_000, n in 1usize..7) {
            let bubbles = chain(seed, n);
            let q0 = bubbles[0].center.to_vec();
            let qg = bubbles[n - 1].center.to_vec();
            let (t, _) = optimize_trajectory(&arm(), &bubbles, &q0, &qg, &TrajoptParams::default()).unwrap();
            prop_assert!(t.containment_violation() <= 0.0);
            for (seg, b) in t.segments.iter().zip(&t.bubbles) {
                for i in 0..200 {
                    let p = seg.eval(i as f64 / 199.0);
                    prop_assert!(math::dist(&p, &b.center) <= b.radius + 1e-6);
                }
            }
            let r = t.interface_residuals();
            prop_assert!(r.iter().all(|&v| v <= 1e-6), "{:?}", r);
            prop_assert!(t.boundary_residual() <= 1e-6);
        }
    }
}
