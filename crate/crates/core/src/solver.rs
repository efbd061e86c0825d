//! ADMM solver for convex quadratic programs with interval rows and
//! Euclidean-ball constraints on affine images of the variables:
//!
//! ```text
//! minimize    1/2 x'Hx + g'x
//! subject to  lo <= A x <= hi
//!             ||G_k x - c_k|| <= r_k
//! ```
//!
//! Operator splitting in the style of OSQP: a dense prefactorized linear
//! step followed by projections onto intervals and balls. The cost is
//! normalized by its largest coefficient and linear rows by their largest
//! entry, so uniformly scaling the objective does not change the iterates.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::math;
use crate::{Error, Result};

/// Ball constraint `||G x - center|| <= radius` with `G` stored row-major
/// (`center.len() x n`).
#[derive(Debug, Clone, PartialEq)]
pub struct BallConstraint {
    pub g: Vec<f64>,
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexProblem {
    pub n: usize,
    /// Row-major `n x n`, symmetric positive semidefinite.
    pub h: Vec<f64>,
    pub g: Vec<f64>,
    /// Row-major constraint rows, `lo.len() x n`.
    pub a: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub balls: Vec<BallConstraint>,
}

impl ConvexProblem {
    pub fn new(h: Vec<f64>, g: Vec<f64>) -> Self {
        Self { n: g.len(), h, g, a: Vec::new(), lo: Vec::new(), hi: Vec::new(), balls: Vec::new() }
    }

    pub fn n_rows(&self) -> usize {
        self.lo.len()
    }

    /// `lo <= a.x <= hi`.
    pub fn add_row(&mut self, a: &[f64], lo: f64, hi: f64) {
        self.a.extend_from_slice(a);
        self.lo.push(lo);
        self.hi.push(hi);
    }

    pub fn add_eq(&mut self, a: &[f64], b: f64) {
        self.add_row(a, b, b);
    }

    /// `a.x <= d`.
    pub fn add_le(&mut self, a: &[f64], d: f64) {
        self.add_row(a, f64::NEG_INFINITY, d);
    }

    pub fn add_box(&mut self, index: usize, lo: f64, hi: f64) {
        let mut a = vec![0.0; self.n];
        a[index] = 1.0;
        self.add_row(&a, lo, hi);
    }

    /// `||x[indices] - center|| <= radius`.
    pub fn add_ball(&mut self, indices: &[usize], center: &[f64], radius: f64) {
        let mut g = vec![0.0; indices.len() * self.n];
        for (r, &i) in indices.iter().enumerate() {
            g[r * self.n + i] = 1.0;
        }
        self.add_ball_affine(g, center.to_vec(), radius);
    }

    pub fn add_ball_affine(&mut self, g: Vec<f64>, center: Vec<f64>, radius: f64) {
        self.balls.push(BallConstraint { g, center, radius });
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut v = 0.0;
        for i in 0..n {
            let hx: f64 = (0..n).map(|j| self.h[i * n + j] * x[j]).sum();
            v += 0.5 * x[i] * hx + self.g[i] * x[i];
        }
        v
    }

    /// Largest violation of any constraint at `x` (0 when feasible).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..self.n_rows() {
            let v = math::dot(&self.a[i * n..(i + 1) * n], x);
            worst = worst.max(self.lo[i] - v).max(v - self.hi[i]);
        }
        for b in &self.balls {
            let d: Vec<f64> = (0..b.center.len())
                .map(|r| math::dot(&b.g[r * n..(r + 1) * n], x) - b.center[r])
                .collect();
            worst = worst.max(math::norm(&d) - b.radius);
        }
        worst
    }

    fn validate(&self) -> Result<()> {
        let n = self.n;
        if n == 0 {
            return Err(Error::Empty("optimization variables"));
        }
        if self.h.len() != n * n {
            return Err(Error::Dimension { expected: n * n, got: self.h.len() });
        }
        if self.a.len() != self.lo.len() * n || self.hi.len() != self.lo.len() {
            return Err(Error::Dimension { expected: self.lo.len() * n, got: self.a.len() });
        }
        let scale = self.h.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (self.h[i * n + j] - self.h[j * n + i]).abs() > 1e-9 * scale {
                    return Err(Error::InvalidParameter("cost matrix is not symmetric".into()));
                }
            }
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| l > h || l.is_nan() || h.is_nan()) {
            return Err(Error::InvalidParameter("constraint row with lo > hi".into()));
        }
        for b in &self.balls {
            if !(b.radius > 0.0) || b.center.is_empty() || b.g.len() != b.center.len() * n {
                return Err(Error::InvalidParameter("malformed ball constraint".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSettings {
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub alpha: f64,
    /// Iterations between residual checks and step-size adaptation.
    pub check_every: usize,
    /// Iterations ignored before merit tracking starts.
    pub warmup: usize,
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self {
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            max_iter: 20_000,
            rho: 1.0,
            sigma: 1e-6,
            alpha: 1.6,
            check_every: 10,
            warmup: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub status: SolveStatus,
    /// Max-norm primal residual on the row-normalized constraints.
    pub primal_residual: f64,
    /// Max-norm dual residual on the cost-normalized problem.
    pub dual_residual: f64,
    pub iterations: usize,
    pub objective: f64,
    /// Merit `max(r_p / tol_p, r_d / tol_d)` of each accepted iterate; an
    /// iterate is accepted when it does not worsen the best merit so far.
    pub merit_history: Vec<f64>,
}

/// Constraint set of one block of rows of the stacked operator.
enum Set {
    Interval { lo: f64, hi: f64 },
    Ball { len: usize, center: Vec<f64>, radius: f64 },
}

struct Scaled {
    n: usize,
    k: usize,
    p: DMatrix<f64>,
    q: DVector<f64>,
    a: DMatrix<f64>,
    sets: Vec<(usize, Set)>,
    eq_rows: Vec<bool>,
}

fn scale_problem(prob: &ConvexProblem) -> (Scaled, f64) {
    let n = prob.n;
    let cmax = prob.h.iter().chain(&prob.g).fold(0.0f64, |m, v| m.max(v.abs()));
    let c = if cmax > 0.0 { 1.0 / cmax } else { 1.0 };
    let p = DMatrix::from_row_slice(n, n, &prob.h) * c;
    let q = DVector::from_column_slice(&prob.g) * c;
    let k = prob.n_rows() + prob.balls.iter().map(|b| b.center.len()).sum::<usize>();
    let mut a = DMatrix::zeros(k, n);
    let mut sets = Vec::new();
    let mut eq_rows = vec![false; k];
    for i in 0..prob.n_rows() {
        let row = &prob.a[i * n..(i + 1) * n];
        let s = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let s = if s > 0.0 { 1.0 / s } else { 1.0 };
        for j in 0..n {
            a[(i, j)] = row[j] * s;
        }
        eq_rows[i] = prob.lo[i] == prob.hi[i];
        sets.push((i, Set::Interval { lo: prob.lo[i] * s, hi: prob.hi[i] * s }));
    }
    let mut r0 = prob.n_rows();
    for b in &prob.balls {
        let len = b.center.len();
        for r in 0..len {
            for j in 0..n {
                a[(r0 + r, j)] = b.g[r * n + j];
            }
        }
        sets.push((r0, Set::Ball { len, center: b.center.clone(), radius: b.radius }));
        r0 += len;
    }
    (Scaled { n, k, p, q, a, sets, eq_rows }, c)
}

impl Scaled {
    fn project(&self, v: &mut DVector<f64>) {
        for (start, set) in &self.sets {
            match set {
                Set::Interval { lo, hi } => v[*start] = v[*start].clamp(*lo, *hi),
                Set::Ball { len, center, radius } => {
                    let d: f64 = (0..*len).map(|r| (v[start + r] - center[r]).powi(2)).sum::<f64>();
                    let d = math::sqrt(d);
                    if d > *radius {
                        let f = radius / d;
                        for r in 0..*len {
                            v[start + r] = center[r] + (v[start + r] - center[r]) * f;
                        }
                    }
                }
            }
        }
    }

    /// Support function `sup_{z in C} dy'z`, with negligible components
    /// dropped so infinite bounds do not poison the test.
    fn support(&self, dy: &DVector<f64>, eps: f64) -> f64 {
        let mut s = 0.0;
        for (start, set) in &self.sets {
            match set {
                Set::Interval { lo, hi } => {
                    let v = dy[*start];
                    if v > eps {
                        s += hi * v;
                    } else if v < -eps {
                        s += lo * v;
                    }
                }
                Set::Ball { len, center, radius } => {
                    let seg: Vec<f64> = (0..*len).map(|r| dy[start + r]).collect();
                    s += math::dot(center, &seg) + radius * math::norm(&seg);
                }
            }
        }
        s
    }

    fn factor(&self, sigma: f64, rho: &DVector<f64>) -> Result<Cholesky<f64, Dyn>> {
        let mut kmat = self.p.clone();
        for i in 0..self.n {
            kmat[(i, i)] += sigma;
        }
        let ra = DMatrix::from_fn(self.k, self.n, |i, j| self.a[(i, j)] * rho[i]);
        kmat += self.a.transpose() * ra;
        Cholesky::new(kmat).ok_or_else(|| Error::InvalidParameter("cost matrix is not positive semidefinite".into()))
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solves `prob`, optionally warm-started from `x0`.
pub fn solve(prob: &ConvexProblem, settings: &SolveSettings, x0: Option<&[f64]>) -> Result<SolveReport> {
    prob.validate()?;
    let (sp, _c) = scale_problem(prob);
    let (n, k) = (sp.n, sp.k);
    const EQ_FACTOR: f64 = 1e3;
    let mut rho_base = settings.rho;
    let rho_vec = |base: f64| {
        DVector::from_fn(k, |i, _| if sp.eq_rows[i] { (base * EQ_FACTOR).min(1e6) } else { base })
    };
    let mut rho = rho_vec(rho_base);
    let mut chol = sp.factor(settings.sigma, &rho)?;

    let mut x = match x0 {
        Some(v) if v.len() == n => DVector::from_column_slice(v),
        _ => DVector::zeros(n),
    };
    let mut z = &sp.a * &x;
    sp.project(&mut z);
    let mut y: DVector<f64> = DVector::zeros(k);
    let at = sp.a.transpose();

    let mut best_x = x.clone();
    let mut best_merit = f64::INFINITY;
    let mut best_res = (f64::INFINITY, f64::INFINITY);
    let mut merit_history = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut iterations = settings.max_iter;
    let mut stall_ref = f64::INFINITY;
    let mut stall_iter = 0usize;
    let alpha = settings.alpha;

    for it in 1..=settings.max_iter {
        let y_prev = y.clone();
        let rhs = &x * settings.sigma - &sp.q + &at * (rho.component_mul(&z) - &y);
        let xt = chol.solve(&rhs);
        let zt = &sp.a * &xt;
        let x_new = &xt * alpha + &x * (1.0 - alpha);
        let zr = &zt * alpha + &z * (1.0 - alpha);
        let mut z_new = &zr + y.component_div(&rho);
        sp.project(&mut z_new);
        y += rho.component_mul(&(&zr - &z_new));
        x = x_new;
        z = z_new;

        if it % settings.check_every != 0 && it != settings.max_iter {
            continue;
        }
        let ax = &sp.a * &x;
        let px = &sp.p * &x;
        let aty = &at * &y;
        let r_p = inf_norm(&(&ax - &z));
        let r_d = inf_norm(&(&px + &sp.q + &aty));
        let merit = (r_p / settings.tol_primal).max(r_d / settings.tol_dual);
        if it >= settings.warmup && merit <= best_merit {
            best_merit = merit;
            best_x = x.clone();
            best_res = (r_p, r_d);
            merit_history.push(merit);
        }
        if r_p <= settings.tol_primal && r_d <= settings.tol_dual {
            best_x = x.clone();
            best_res = (r_p, r_d);
            if merit_history.last().is_none_or(|&m| merit < m) {
                merit_history.push(merit);
            }
            status = SolveStatus::Optimal;
            iterations = it;
            break;
        }

        // Primal infeasibility certificate from the dual iterate difference.
        let dy = &y - &y_prev;
        let ndy = inf_norm(&dy);
        if ndy > 1e-12 {
            let eps = 1e-5 * ndy;
            if inf_norm(&(&at * &dy)) <= eps && sp.support(&dy, eps) < -eps {
                status = SolveStatus::Infeasible;
                iterations = it;
                break;
            }
        }
        // Backup rule: residuals stuck far above tolerance.
        if r_p > 1e2 * settings.tol_primal {
            if r_p < 0.5 * stall_ref {
                stall_ref = r_p;
                stall_iter = it;
            } else if it - stall_iter >= 1000 {
                status = SolveStatus::Infeasible;
                iterations = it;
                break;
            }
        } else {
            stall_ref = f64::INFINITY;
            stall_iter = it;
        }

        // Residual balancing of the step size.
        let sp_norm = inf_norm(&ax).max(inf_norm(&z)).max(1e-12);
        let sd_norm = inf_norm(&px).max(inf_norm(&aty)).max(inf_norm(&sp.q)).max(1e-12);
        let ratio = (r_p / sp_norm) / (r_d / sd_norm).max(1e-30);
        let new_base = if ratio > 10.0 {
            (rho_base * 2.0).min(1e3)
        } else if ratio < 0.1 {
            (rho_base / 2.0).max(1e-3)
        } else {
            rho_base
        };
        if new_base != rho_base {
            rho_base = new_base;
            rho = rho_vec(rho_base);
            chol = sp.factor(settings.sigma, &rho)?;
        }
    }
    if status == SolveStatus::MaxIter && best_merit.is_infinite() {
        best_x = x.clone();
    }
    let xs: Vec<f64> = best_x.iter().copied().collect();
    Ok(SolveReport {
        objective: prob.objective(&xs),
        x: xs,
        status,
        primal_residual: best_res.0,
        dual_residual: best_res.1,
        iterations,
        merit_history,
    })
}
