//! CDF barrier over a point cloud: `h(q) = min(min_j f(p_j, q), f_sc(q))`,
//! its gradient and time derivative, and the uncertainty samples fed to the
//! distributionally robust filter.
//!
//! The barrier is generic over a [`CdfModel`]: the trained networks
//! ([`NeuralCdf`], stochastic through MC dropout) or the exact databases
//! ([`OracleCdf`], deterministic).

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::arm::{ArmModel, WorkPoint};
use crate::math::{self, Vec2};
use crate::neural::{DropoutMask, MlpModel};
use crate::oracle::{ContactDb, SelfCollisionDb};
use crate::rng::{self, SimRng};
use crate::{Error, Result, UNREACHABLE};

/// Sensed obstacle boundary points with velocities.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<WorkPoint>,
    pub timestamp: f64,
}

/// Environment CDF at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvTerm {
    pub value: f64,
    pub grad_q: Vec<f64>,
    pub grad_p: Vec2,
}

/// Self-collision CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct ScTerm {
    pub value: f64,
    pub grad_q: Vec<f64>,
}

/// One draw of the model's randomness (dropout masks for both networks).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Realization {
    pub env: Option<DropoutMask>,
    pub sc: Option<DropoutMask>,
}

/// Source of environment and self-collision CDF values.
pub trait CdfModel: Sync {
    fn dof(&self) -> usize;

    /// Points farther than this from the base cannot touch the arm and are
    /// skipped (treated as unreachable).
    fn influence_radius(&self) -> f64;

    /// Environment terms for every point in one batched evaluation.
    fn env_batch(&self, points: &[WorkPoint], q: &[f64], real: Option<&Realization>) -> Result<Vec<EnvTerm>>;

    /// Environment values only (no gradients).
    fn env_values(&self, points: &[WorkPoint], q: &[f64]) -> Result<Vec<f64>> {
        Ok(self.env_batch(points, q, None)?.into_iter().map(|t| t.value).collect())
    }

    fn sc_eval(&self, q: &[f64], real: Option<&Realization>) -> Result<ScTerm>;

    /// Draws a fresh realization; deterministic models return the default.
    fn draw_realization(&self, _rng: &mut SimRng) -> Realization {
        Realization::default()
    }
}

fn in_range(p: Vec2, radius: f64) -> bool {
    math::norm(&p) <= radius
}

fn unreachable_term(m: usize) -> EnvTerm {
    EnvTerm { value: UNREACHABLE, grad_q: vec![0.0; m], grad_p: [0.0, 0.0] }
}

/// Trained networks `f(p, q)` and `f_sc(q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralCdf {
    pub env: MlpModel,
    pub sc: MlpModel,
    pub influence: f64,
}

impl NeuralCdf {
    pub fn new(env: MlpModel, sc: MlpModel, arm: &ArmModel) -> Result<Self> {
        let m = arm.dof();
        if env.input_dim() != 2 + m {
            return Err(Error::Dimension { expected: 2 + m, got: env.input_dim() });
        }
        if sc.input_dim() != m {
            return Err(Error::Dimension { expected: m, got: sc.input_dim() });
        }
        Ok(Self { env, sc, influence: arm.reach() })
    }
}

impl CdfModel for NeuralCdf {
    fn dof(&self) -> usize {
        self.sc.input_dim()
    }

    fn influence_radius(&self) -> f64 {
        self.influence
    }

    fn env_batch(&self, points: &[WorkPoint], q: &[f64], real: Option<&Realization>) -> Result<Vec<EnvTerm>> {
        let m = self.dof();
        if q.len() != m {
            return Err(Error::Dimension { expected: m, got: q.len() });
        }
        let idx: Vec<usize> =
            (0..points.len()).filter(|&j| in_range(points[j].position, self.influence)).collect();
        let mut out: Vec<EnvTerm> = (0..points.len()).map(|_| unreachable_term(m)).collect();
        if idx.is_empty() {
            return Ok(out);
        }
        let d = 2 + m;
        let mut x = Vec::with_capacity(idx.len() * d);
        for &j in &idx {
            x.extend_from_slice(&points[j].position);
            x.extend_from_slice(q);
        }
        let e = self.env.forward_batch(&x, real.and_then(|r| r.env.as_ref()))?;
        for (i, &j) in idx.iter().enumerate() {
            let g = e.grad(i, d);
            out[j] = EnvTerm { value: e.values[i], grad_q: g[2..].to_vec(), grad_p: [g[0], g[1]] };
        }
        Ok(out)
    }

    fn env_values(&self, points: &[WorkPoint], q: &[f64]) -> Result<Vec<f64>> {
        let m = self.dof();
        let idx: Vec<usize> =
            (0..points.len()).filter(|&j| in_range(points[j].position, self.influence)).collect();
        let mut out = vec![UNREACHABLE; points.len()];
        if idx.is_empty() {
            return Ok(out);
        }
        let mut x = Vec::with_capacity(idx.len() * (2 + m));
        for &j in &idx {
            x.extend_from_slice(&points[j].position);
            x.extend_from_slice(q);
        }
        for (v, &j) in self.env.predict_batch(&x, None)?.into_iter().zip(&idx) {
            out[j] = v;
        }
        Ok(out)
    }

    fn sc_eval(&self, q: &[f64], real: Option<&Realization>) -> Result<ScTerm> {
        let (value, grad_q) = self.sc.forward(q, real.and_then(|r| r.sc.as_ref()))?;
        Ok(ScTerm { value, grad_q })
    }

    fn draw_realization(&self, rng: &mut SimRng) -> Realization {
        Realization {
            env: Some(DropoutMask::sample(&self.env.arch, rng)),
            sc: Some(DropoutMask::sample(&self.sc.arch, rng)),
        }
    }
}

/// Exact CDFs from the contact and self-collision databases.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCdf {
    pub env: ContactDb,
    pub sc: SelfCollisionDb,
    pub influence: f64,
}

impl OracleCdf {
    pub fn new(env: ContactDb, sc: SelfCollisionDb, arm: &ArmModel) -> Result<Self> {
        if env.dof != arm.dof() || sc.dof != arm.dof() {
            return Err(Error::Dimension { expected: arm.dof(), got: env.dof });
        }
        Ok(Self { env, sc, influence: arm.reach() })
    }
}

impl CdfModel for OracleCdf {
    fn dof(&self) -> usize {
        self.env.dof
    }

    fn influence_radius(&self) -> f64 {
        self.influence
    }

    fn env_batch(&self, points: &[WorkPoint], q: &[f64], _real: Option<&Realization>) -> Result<Vec<EnvTerm>> {
        points
            .iter()
            .map(|p| {
                if !in_range(p.position, self.influence) {
                    return Ok(unreachable_term(q.len()));
                }
                let v = self.env.exact_cdf_grad(p.position, q)?;
                let grad_p = if v.value < UNREACHABLE { self.env.exact_cdf_grad_p(p.position, q)? } else { [0.0, 0.0] };
                Ok(EnvTerm { value: v.value, grad_q: v.grad_q, grad_p })
            })
            .collect()
    }

    fn env_values(&self, points: &[WorkPoint], q: &[f64]) -> Result<Vec<f64>> {
        points
            .iter()
            .map(|p| {
                if !in_range(p.position, self.influence) {
                    return Ok(UNREACHABLE);
                }
                self.env.exact_cdf(p.position, q)
            })
            .collect()
    }

    fn sc_eval(&self, q: &[f64], _real: Option<&Realization>) -> Result<ScTerm> {
        let v = self.sc.exact_scdf_grad(q)?;
        Ok(ScTerm { value: v.value, grad_q: v.grad_q })
    }
}

/// Which term attains the barrier minimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArgminSource {
    EnvPoint(usize),
    SelfCollision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEval {
    pub value: f64,
    pub grad_q: Vec<f64>,
    pub dhdt: f64,
    pub argmin: ArgminSource,
}

/// Barrier value, gradient and time derivative at `q` (deterministic
/// network when `real` is `None`).
pub fn eval_barrier(model: &dyn CdfModel, cloud: &PointCloud, q: &[f64], real: Option<&Realization>) -> Result<BarrierEval> {
    if cloud.points.is_empty() {
        return Err(Error::Empty("point cloud"));
    }
    let env = model.env_batch(&cloud.points, q, real)?;
    let sc = model.sc_eval(q, real)?;
    let mut best = 0;
    for (j, t) in env.iter().enumerate() {
        if t.value < env[best].value {
            best = j;
        }
    }
    let e = &env[best];
    Ok(if sc.value < e.value {
        BarrierEval { value: sc.value, grad_q: sc.grad_q, dhdt: 0.0, argmin: ArgminSource::SelfCollision }
    } else {
        let v = cloud.points[best].velocity;
        BarrierEval {
            value: e.value,
            grad_q: e.grad_q.clone(),
            dhdt: e.grad_p[0] * v[0] + e.grad_p[1] * v[1],
            argmin: ArgminSource::EnvPoint(best),
        }
    })
}

/// Barrier value only, deterministic.
pub fn barrier_value(model: &dyn CdfModel, cloud: &PointCloud, q: &[f64]) -> Result<f64> {
    if cloud.points.is_empty() {
        return Err(Error::Empty("point cloud"));
    }
    let env = model.env_values(&cloud.points, q)?.into_iter().fold(f64::INFINITY, f64::min);
    Ok(env.min(model.sc_eval(q, None)?.value))
}

/// Configuration-space barrier queried by the planners.
pub trait Barrier {
    fn value(&self, q: &[f64]) -> Result<f64>;
}

impl<F: Fn(&[f64]) -> Result<f64>> Barrier for F {
    fn value(&self, q: &[f64]) -> Result<f64> {
        self(q)
    }
}

/// Deterministic barrier of a fixed point cloud.
pub struct SceneBarrier<'a> {
    pub model: &'a dyn CdfModel,
    pub cloud: &'a PointCloud,
}

impl Barrier for SceneBarrier<'_> {
    fn value(&self, q: &[f64]) -> Result<f64> {
        barrier_value(self.model, self.cloud, q)
    }
}

/// One realization of `xi = (grad_q h, alpha(h), dh/dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySample {
    pub grad_q: Vec<f64>,
    pub alpha_term: f64,
    pub dhdt: f64,
}

impl UncertaintySample {
    /// Selection score `alpha(f) + grad_p f . p_dot`.
    pub fn score(&self) -> f64 {
        self.alpha_term + self.dhdt
    }

    /// `xi` laid out to pair with `[u; 1; 1]`.
    pub fn xi(&self) -> Vec<f64> {
        let mut v = self.grad_q.clone();
        v.push(self.alpha_term);
        v.push(self.dhdt);
        v
    }

    /// Control barrier condition `xi . [u; 1; 1]`.
    pub fn cbc(&self, u: &[f64]) -> f64 {
        math::dot(&self.grad_q, u) + self.alpha_term + self.dhdt
    }
}

/// Draws `m2` realizations of every cloud point (plus one self-collision term
/// per realization) and keeps the `n` with the lowest score, sorted
/// ascending. Ties keep generation order.
pub fn sample_uncertainty(
    model: &dyn CdfModel,
    cloud: &PointCloud,
    q: &[f64],
    m2: usize,
    n: usize,
    alpha_slope: f64,
    seed: u64,
) -> Result<Vec<UncertaintySample>> {
    if cloud.points.is_empty() {
        return Err(Error::Empty("point cloud"));
    }
    if m2 == 0 {
        return Err(Error::InvalidParameter("M2 must be at least 1".into()));
    }
    let available = (cloud.points.len() + 1) * m2;
    if n > available {
        return Err(Error::TooManySamples { requested: n, available });
    }
    let mut r = rng::seeded(seed);
    let mut cands = Vec::with_capacity(available);
    for _ in 0..m2 {
        let real = model.draw_realization(&mut r);
        let env = model.env_batch(&cloud.points, q, Some(&real))?;
        for (t, p) in env.into_iter().zip(&cloud.points) {
            let dhdt = t.grad_p[0] * p.velocity[0] + t.grad_p[1] * p.velocity[1];
            cands.push(UncertaintySample { grad_q: t.grad_q, alpha_term: alpha_slope * t.value, dhdt });
        }
        let sc = model.sc_eval(q, Some(&real))?;
        cands.push(UncertaintySample { grad_q: sc.grad_q, alpha_term: alpha_slope * sc.value, dhdt: 0.0 });
    }
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&a, &b| cands[a].score().total_cmp(&cands[b].score()).then(a.cmp(&b)));
    Ok(order.into_iter().take(n).map(|i| cands[i].clone()).collect())
}
