//! Eikonal-regularized training with Adam.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{Dense, DropoutMask, Masks, MlpArch, MlpModel};
use crate::arm::ArmModel;
use crate::math::{self, PI};
use crate::oracle::{ContactDb, SelfCollisionDb};
use crate::rng::{self, SimRng};
use crate::{Error, Result};

/// Optimizer and batching settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Final learning rate of a cosine schedule; equal to `lr` for a constant
    /// rate.
    pub lr_min: f64,
    pub iterations: usize,
    /// Environment batches: configurations x workspace points.
    pub n_configs: usize,
    pub n_points: usize,
    /// Self-collision batch size.
    pub sc_batch: usize,
    pub lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Iterations between loss-curve records.
    pub log_every: usize,
    /// Held-out triplets evaluated at each record.
    pub val_size: usize,
    pub arch: MlpArch,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            lr_min: 2e-4,
            iterations: 50_000,
            n_configs: 10,
            n_points: 50,
            sc_batch: 500,
            lambda: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            log_every: 500,
            val_size: 1000,
            arch: MlpArch::default(),
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.lr_min > 0.0) {
            return Err(Error::InvalidParameter("learning rate must be positive".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidParameter("lambda must be non-negative".into()));
        }
        if self.n_configs == 0 || self.n_points == 0 || self.sc_batch == 0 || self.log_every == 0 {
            return Err(Error::InvalidParameter("batch sizes must be positive".into()));
        }
        Ok(())
    }

    fn lr_at(&self, it: usize) -> f64 {
        if self.lr_min >= self.lr || self.iterations <= 1 {
            return self.lr;
        }
        let frac = it as f64 / (self.iterations - 1) as f64;
        self.lr_min + 0.5 * (self.lr - self.lr_min) * (1.0 + math::cos(PI * frac))
    }
}

/// One point of the loss curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub loss: f64,
    pub mse: f64,
    pub eikonal: f64,
    pub val_mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: MlpModel,
    pub curve: Vec<LossRecord>,
}

/// Fixed evaluation inputs with oracle targets.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldOutSet {
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl HeldOutSet {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// `n` random (grid point, configuration) pairs over reachable points.
    pub fn env(db: &ContactDb, arm: &ArmModel, n: usize, seed: u64) -> Result<Self> {
        let pts = reachable_points(db)?;
        let mut r = rng::seeded(seed);
        let dim = 2 + arm.dof();
        let mut x = Vec::with_capacity(n * dim);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let q = arm.sample_config(&mut r);
            let pt = pts[rng::index(&mut r, pts.len())];
            x.extend_from_slice(&db.grid.point(pt));
            x.extend_from_slice(&q);
            y.push(db.cdf_at_point(pt, &q).0);
        }
        Ok(Self { dim, x, y })
    }

    pub fn sc(db: &SelfCollisionDb, arm: &ArmModel, n: usize, seed: u64) -> Result<Self> {
        let mut r = rng::seeded(seed);
        let mut x = Vec::with_capacity(n * arm.dof());
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let q = arm.sample_config(&mut r);
            y.push(db.exact_scdf(&q)?);
            x.extend_from_slice(&q);
        }
        Ok(Self { dim: arm.dof(), x, y })
    }
}

fn reachable_points(db: &ContactDb) -> Result<Vec<usize>> {
    let pts: Vec<usize> = (0..db.grid.n_points()).filter(|&i| db.is_reachable(i)).collect();
    if pts.is_empty() {
        return Err(Error::Empty("contact database has no reachable grid point"));
    }
    Ok(pts)
}

/// Mean absolute error of the deterministic network on a held-out set.
pub fn eval_env_mae(model: &MlpModel, set: &HeldOutSet) -> Result<f64> {
    mae(model, set)
}

pub fn eval_sc_mae(model: &MlpModel, set: &HeldOutSet) -> Result<f64> {
    mae(model, set)
}

fn mae(model: &MlpModel, set: &HeldOutSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Empty("held-out set"));
    }
    let mut total = 0.0;
    for (xs, ys) in set.x.chunks(512 * set.dim).zip(set.y.chunks(512)) {
        let pred = model.predict_batch(xs, None)?;
        total += pred.iter().zip(ys).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    Ok(total / set.len() as f64)
}

/// Mean `| ||grad_q f|| - 1 |` over a held-out set; `q_offset` is the index
/// of the first configuration input.
pub fn eikonal_stat_env(model: &MlpModel, set: &HeldOutSet, q_offset: usize) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Empty("held-out set"));
    }
    let e = model.forward_batch(&set.x, None)?;
    let d = set.dim;
    let total: f64 = (0..set.len()).map(|i| (math::norm(&e.grad(i, d)[q_offset..]) - 1.0).abs()).sum();
    Ok(total / set.len() as f64)
}

/// Loss terms of a deterministic (no dropout) batch:
/// `mean[(f - y)^2 + lambda (||grad_dirs f|| - 1)^2]`, returned as
/// `(loss, mse, eikonal)`.
pub fn env_loss_on_batch(model: &MlpModel, x: &[f64], y: &[f64], dirs: &[usize], lambda: f64) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() * model.input_dim() {
        return Err(Error::Dimension { expected: y.len() * model.input_dim(), got: x.len() });
    }
    let tape = model.forward_tape(x, dirs, &Masks::None);
    let (l, mse, eik, _) = loss_and_adjoints(&tape.out, y, dirs.len(), lambda);
    Ok((l, mse, eik))
}

/// Loss and output adjoints for a tape laid out as value + tangent rows.
fn loss_and_adjoints(out: &[f64], y: &[f64], nt: usize, lambda: f64) -> (f64, f64, f64, Vec<f64>) {
    let g = 1 + nt;
    let n = y.len() as f64;
    let mut bar = vec![0.0; out.len()];
    let (mut mse, mut eik) = (0.0, 0.0);
    for (b, &target) in y.iter().enumerate() {
        let f = out[b * g];
        let res = f - target;
        mse += res * res;
        bar[b * g] = 2.0 * res / n;
        if nt > 0 {
            let t = &out[b * g + 1..(b + 1) * g];
            let norm = math::norm(t);
            eik += (norm - 1.0) * (norm - 1.0);
            if norm > 0.0 {
                let s = 2.0 * lambda * (norm - 1.0) / (norm * n);
                for j in 0..nt {
                    bar[b * g + 1 + j] = s * t[j];
                }
            }
        }
    }
    mse /= n;
    eik /= n;
    (mse + lambda * eik, mse, eik, bar)
}

struct Adam {
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
}

impl Adam {
    fn new(model: &MlpModel) -> Self {
        Self { m: model.zero_grads(), v: model.zero_grads(), t: 0 }
    }

    fn step(&mut self, model: &mut MlpModel, grads: &[Dense], cfg: &TrainConfig, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - math::powi(cfg.beta1, self.t);
        let c2 = 1.0 - math::powi(cfg.beta2, self.t);
        for (((layer, g), m), v) in model.layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
                for i in 0..p.len() {
                    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                    p[i] -= lr * (m[i] / c1) / (math::sqrt(v[i] / c2) + cfg.eps);
                }
            };
            update(&mut layer.w, &g.w, &mut m.w, &mut v.w);
            update(&mut layer.b, &g.b, &mut m.b, &mut v.b);
        }
    }
}

fn zero(grads: &mut [Dense]) {
    for g in grads {
        g.w.fill(0.0);
        g.b.fill(0.0);
    }
}

/// Shared loop: `sample` fills a batch (inputs, targets) for each iteration.
fn train_loop(
    mut model: MlpModel,
    cfg: &TrainConfig,
    dirs: &[usize],
    held_out: &HeldOutSet,
    mut sample: impl FnMut(&mut SimRng, &mut Vec<f64>, &mut Vec<f64>),
) -> Result<TrainedModel> {
    let mut adam = Adam::new(&model);
    let mut grads = model.zero_grads();
    let mut r = rng::seeded(rng::derive_seed(cfg.seed, 1));
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut curve = Vec::new();
    let (mut acc_l, mut acc_m, mut acc_e, mut acc_n) = (0.0, 0.0, 0.0, 0usize);
    for it in 0..cfg.iterations {
        x.clear();
        y.clear();
        sample(&mut r, &mut x, &mut y);
        let masks: Vec<DropoutMask> = (0..y.len()).map(|_| DropoutMask::sample(&model.arch, &mut r)).collect();
        let masks = Masks::PerSample(&masks);
        let tape = model.forward_tape(&x, dirs, &masks);
        let (loss, mse, eik, bar) = loss_and_adjoints(&tape.out, &y, dirs.len(), cfg.lambda);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it });
        }
        zero(&mut grads);
        model.backward(&tape, &bar, &masks, Some(&mut grads), false);
        adam.step(&mut model, &grads, cfg, cfg.lr_at(it));
        acc_l += loss;
        acc_m += mse;
        acc_e += eik;
        acc_n += 1;
        if (it + 1) % cfg.log_every == 0 || it + 1 == cfg.iterations {
            let n = acc_n as f64;
            curve.push(LossRecord {
                iteration: it + 1,
                loss: acc_l / n,
                mse: acc_m / n,
                eikonal: acc_e / n,
                val_mae: if held_out.is_empty() { f64::NAN } else { mae(&model, held_out)? },
            });
            (acc_l, acc_m, acc_e, acc_n) = (0.0, 0.0, 0.0, 0);
        }
    }
    Ok(TrainedModel { model, curve })
}

fn joint_scale(arm: &ArmModel) -> Vec<f64> {
    (0..arm.dof())
        .map(|j| 1.0 / arm.joint_limits_lo[j].abs().max(arm.joint_limits_hi[j].abs()))
        .collect()
}

/// Trains `f(p, q)` on batches of `n_configs` random configurations times
/// `n_points` random reachable grid points.
pub fn train_env_cdf(db: &ContactDb, arm: &ArmModel, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if db.dof != arm.dof() {
        return Err(Error::Dimension { expected: arm.dof(), got: db.dof });
    }
    let pts = reachable_points(db)?;
    let m = arm.dof();
    let span = db.grid.lo.iter().chain(&db.grid.hi).fold(0.0f64, |a, v| a.max(v.abs()));
    let mut arch = cfg.arch.clone();
    arch.input_dim = 2 + m;
    arch.input_scale = [1.0 / span, 1.0 / span].into_iter().chain(joint_scale(arm)).collect();
    let model = MlpModel::new(arch, rng::derive_seed(cfg.seed, 0))?;
    let held_out = HeldOutSet::env(db, arm, cfg.val_size, rng::derive_seed(cfg.seed, 2))?;
    let dirs: Vec<usize> = (2..2 + m).collect();
    let mut qs = Vec::with_capacity(cfg.n_configs);
    train_loop(model, cfg, &dirs, &held_out, |r, x, y| {
        qs.clear();
        qs.extend((0..cfg.n_configs).map(|_| arm.sample_config(r)));
        let chosen: Vec<usize> = (0..cfg.n_points).map(|_| pts[rng::index(r, pts.len())]).collect();
        for q in &qs {
            for &pt in &chosen {
                x.extend_from_slice(&db.grid.point(pt));
                x.extend_from_slice(q);
                y.push(db.cdf_at_point(pt, q).0);
            }
        }
    })
}

/// Trains `f(q)` on uniformly sampled configurations.
pub fn train_scdf(db: &SelfCollisionDb, arm: &ArmModel, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if db.dof != arm.dof() {
        return Err(Error::Dimension { expected: arm.dof(), got: db.dof });
    }
    if db.is_empty() {
        return Err(Error::Empty("self-collision database"));
    }
    let m = arm.dof();
    let mut arch = cfg.arch.clone();
    arch.input_dim = m;
    arch.input_scale = joint_scale(arm);
    let model = MlpModel::new(arch, rng::derive_seed(cfg.seed, 0))?;
    let held_out = HeldOutSet::sc(db, arm, cfg.val_size, rng::derive_seed(cfg.seed, 2))?;
    let dirs: Vec<usize> = (0..m).collect();
    train_loop(model, cfg, &dirs, &held_out, |r, x, y| {
        for _ in 0..cfg.sc_batch {
            let q = arm.sample_config(r);
            y.push(db.exact_scdf(&q).unwrap_or(crate::UNREACHABLE));
            x.extend_from_slice(&q);
        }
    })
}
