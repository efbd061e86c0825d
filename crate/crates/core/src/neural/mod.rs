//! MLP approximators for the environment CDF `f(p, q)` and the
//! self-collision CDF `f(q)`.
//!
//! Hidden layers use exact GELU, inverted dropout on their activations and
//! input re-concatenation before the configured skip layers. Weights are
//! stored `[in][out]` so every kernel below runs contiguous axpy/dot loops.
//!
//! Rows of a pass are grouped per sample: one value row followed by optional
//! tangent rows (forward-mode directional derivatives along chosen input
//! axes). Training uses tangent rows to get `grad_q f` inside the graph so the
//! Eikonal penalty can be differentiated by an ordinary reverse sweep.

mod train;

pub use train::{
    eikonal_stat_env, env_loss_on_batch, eval_env_mae, eval_sc_mae, train_env_cdf, train_scdf,
    HeldOutSet, LossRecord, TrainConfig, TrainedModel,
};

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::rng::{self, SimRng};
use crate::{Error, Result};

/// Fully connected layer with weights stored `[in][out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Architecture descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpArch {
    pub input_dim: usize,
    pub width: usize,
    pub n_hidden: usize,
    /// 1-based hidden layers whose input is `[previous activation, x]`.
    pub skip_layers: Vec<usize>,
    pub dropout_rate: f64,
    /// Fixed per-input scaling applied before the first layer and at skips.
    pub input_scale: Vec<f64>,
}

impl Default for MlpArch {
    fn default() -> Self {
        Self {
            input_dim: 4,
            width: 256,
            n_hidden: 5,
            skip_layers: vec![2, 4],
            dropout_rate: 0.1,
            input_scale: Vec::new(),
        }
    }
}

impl MlpArch {
    fn has_skip(&self, layer: usize) -> bool {
        layer > 1 && self.skip_layers.contains(&layer)
    }

    /// Input width of 1-based hidden layer `layer`.
    pub fn layer_in(&self, layer: usize) -> usize {
        let base = if layer == 1 { self.input_dim } else { self.width };
        base + if self.has_skip(layer) { self.input_dim } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.width == 0 || self.n_hidden == 0 {
            return Err(Error::InvalidParameter("MLP dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidParameter("dropout_rate must lie in [0, 1)".into()));
        }
        if !self.input_scale.is_empty() && self.input_scale.len() != self.input_dim {
            return Err(Error::Dimension { expected: self.input_dim, got: self.input_scale.len() });
        }
        Ok(())
    }
}

/// Feedforward network with scalar output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub arch: MlpArch,
    /// `n_hidden` hidden layers followed by the linear output layer.
    pub layers: Vec<Dense>,
}

/// One dropout mask per hidden layer; entries are 0 or `1 / (1 - rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub layers: Vec<Vec<f64>>,
}

impl DropoutMask {
    pub fn sample(arch: &MlpArch, rng: &mut SimRng) -> Self {
        let keep = 1.0 - arch.dropout_rate;
        let layers = (0..arch.n_hidden)
            .map(|_| {
                (0..arch.width)
                    .map(|_| if arch.dropout_rate > 0.0 && !rng::bernoulli(rng, keep) { 0.0 } else { 1.0 / keep })
                    .collect()
            })
            .collect();
        Self { layers }
    }
}

/// Values and flat input gradients (`batch x input_dim`) for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEval {
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
}

impl BatchEval {
    pub fn grad(&self, i: usize, dim: usize) -> &[f64] {
        &self.grads[i * dim..(i + 1) * dim]
    }
}

const SQRT_2: f64 = core::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GELU `z * Phi(z)`.
#[inline]
pub fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + math::erf(z / SQRT_2))
}

/// GELU with its first and second derivatives.
#[inline]
pub fn gelu_d2(z: f64) -> (f64, f64, f64) {
    let cdf = 0.5 * (1.0 + math::erf(z / SQRT_2));
    let pdf = INV_SQRT_2PI * math::exp(-0.5 * z * z);
    (z * cdf, cdf + z * pdf, pdf * (2.0 - z * z))
}

/// Per-layer masks for a pass: shared across the batch or one per sample.
pub(crate) enum Masks<'a> {
    None,
    Shared(&'a DropoutMask),
    PerSample(&'a [DropoutMask]),
}

impl Masks<'_> {
    #[inline]
    fn get(&self, layer: usize, sample: usize) -> Option<&[f64]> {
        match self {
            Masks::None => None,
            Masks::Shared(m) => Some(&m.layers[layer]),
            Masks::PerSample(ms) => Some(&ms[sample].layers[layer]),
        }
    }
}

/// Stored activations of a pass over `batch * (1 + tangents)` rows.
pub(crate) struct Tape {
    pub batch: usize,
    /// Input axes differentiated by the tangent rows.
    pub dirs: Vec<usize>,
    /// Per layer (hidden + output): the input matrix.
    pub inputs: Vec<Vec<f64>>,
    /// Per hidden layer: pre-activations.
    pub pre: Vec<Vec<f64>>,
    /// Per hidden layer: GELU first and second derivatives at the value rows
    /// (`batch x width`).
    pub d1: Vec<Vec<f64>>,
    pub d2: Vec<Vec<f64>>,
    pub out: Vec<f64>,
}

impl Tape {
    fn group(&self) -> usize {
        1 + self.dirs.len()
    }
}

/// `z += a W` with `a: rows x n_in`, `w: n_in x n_out`, all row-major.
#[inline]
fn matmul_acc(a: &[f64], n_in: usize, w: &[f64], n_out: usize, z: &mut [f64]) {
    let rows = a.len() / n_in;
    assert!(w.len() == n_in * n_out && z.len() == rows * n_out);
    // SAFETY: the assertion above bounds every access made by the strides.
    unsafe {
        matrixmultiply::dgemm(
            rows, n_in, n_out, 1.0, a.as_ptr(), n_in as isize, 1, w.as_ptr(), n_out as isize, 1, 1.0,
            z.as_mut_ptr(), n_out as isize, 1,
        );
    }
}

/// `gw += a^T zbar`.
#[inline]
fn outer_acc(a: &[f64], n_in: usize, zbar: &[f64], n_out: usize, gw: &mut [f64]) {
    let rows = a.len() / n_in;
    assert!(zbar.len() == rows * n_out && gw.len() == n_in * n_out);
    // SAFETY: as above; `a` is read transposed through swapped strides.
    unsafe {
        matrixmultiply::dgemm(
            n_in, rows, n_out, 1.0, a.as_ptr(), 1, n_in as isize, zbar.as_ptr(), n_out as isize, 1, 1.0,
            gw.as_mut_ptr(), n_out as isize, 1,
        );
    }
}

/// `abar = zbar W^T`.
#[inline]
fn matmul_t(zbar: &[f64], n_out: usize, w: &[f64], n_in: usize, abar: &mut [f64]) {
    let rows = zbar.len() / n_out;
    assert!(w.len() == n_in * n_out && abar.len() == rows * n_in);
    // SAFETY: as above; `w` is read transposed through swapped strides.
    unsafe {
        matrixmultiply::dgemm(
            rows, n_out, n_in, 1.0, zbar.as_ptr(), n_out as isize, 1, w.as_ptr(), 1, n_out as isize, 0.0,
            abar.as_mut_ptr(), n_in as isize, 1,
        );
    }
}

impl MlpModel {
    /// PyTorch-style initialization: weights and biases `U(+-1/sqrt(fan_in))`.
    pub fn new(arch: MlpArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut arch = arch;
        if arch.input_scale.is_empty() {
            arch.input_scale = vec![1.0; arch.input_dim];
        }
        let mut rng = rng::seeded(seed);
        let mut layers = Vec::with_capacity(arch.n_hidden + 1);
        for l in 1..=arch.n_hidden + 1 {
            let (n_in, n_out) = if l <= arch.n_hidden { (arch.layer_in(l), arch.width) } else { (arch.width, 1) };
            let bound = 1.0 / math::sqrt(n_in as f64);
            let w = (0..n_in * n_out).map(|_| rng::uniform(&mut rng, -bound, bound)).collect();
            let b = (0..n_out).map(|_| rng::uniform(&mut rng, -bound, bound)).collect();
            layers.push(Dense { n_in, n_out, w, b });
        }
        Ok(Self { arch, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if self.arch.input_scale.len() != self.arch.input_dim {
            return Err(Error::Dimension { expected: self.arch.input_dim, got: self.arch.input_scale.len() });
        }
        if self.layers.len() != self.arch.n_hidden + 1 {
            return Err(Error::InvalidParameter("layer count does not match architecture".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let (n_in, n_out) =
                if i < self.arch.n_hidden { (self.arch.layer_in(i + 1), self.arch.width) } else { (self.arch.width, 1) };
            if l.n_in != n_in || l.n_out != n_out || l.w.len() != n_in * n_out || l.b.len() != n_out {
                return Err(Error::InvalidParameter("layer shape does not match architecture".into()));
            }
            if l.w.iter().chain(&l.b).any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("non-finite parameter".into()));
            }
        }
        Ok(())
    }

    /// Writes the (scaled) input block of sample `b`, row `c` into `dst`.
    #[inline]
    fn write_input(&self, x: &[f64], dirs: &[usize], b: usize, c: usize, dst: &mut [f64]) {
        let d = self.arch.input_dim;
        let s = &self.arch.input_scale;
        if c == 0 {
            for (k, v) in dst.iter_mut().enumerate() {
                *v = x[b * d + k] * s[k];
            }
        } else {
            dst.fill(0.0);
            let axis = dirs[c - 1];
            dst[axis] = s[axis];
        }
    }

    /// Forward pass over `x` (`batch x input_dim`) with tangent rows along
    /// `dirs`.
    pub(crate) fn forward_tape(&self, x: &[f64], dirs: &[usize], masks: &Masks) -> Tape {
        let d = self.arch.input_dim;
        let batch = x.len() / d;
        let g = 1 + dirs.len();
        let rows = batch * g;
        let width = self.arch.width;
        let nh = self.arch.n_hidden;
        let mut inputs = Vec::with_capacity(nh + 1);
        let mut pre = Vec::with_capacity(nh);
        let mut d1s = Vec::with_capacity(nh);
        let mut d2s = Vec::with_capacity(nh);
        let mut prev: Vec<f64> = Vec::new();
        for l in 1..=nh {
            let layer = &self.layers[l - 1];
            let n_in = layer.n_in;
            let mut a = vec![0.0; rows * n_in];
            let base = if l == 1 { 0 } else { width };
            for r in 0..rows {
                let row = &mut a[r * n_in..(r + 1) * n_in];
                if l > 1 {
                    row[..width].copy_from_slice(&prev[r * width..(r + 1) * width]);
                }
                if l == 1 || self.arch.has_skip(l) {
                    self.write_input(x, dirs, r / g, r % g, &mut row[base..base + d]);
                }
            }
            let mut z = vec![0.0; rows * width];
            for b in 0..batch {
                z[b * g * width..(b * g + 1) * width].copy_from_slice(&layer.b);
            }
            matmul_acc(&a, n_in, &layer.w, width, &mut z);
            let mut h = vec![0.0; rows * width];
            let mut d1 = vec![0.0; batch * width];
            let mut d2 = vec![0.0; batch * width];
            for b in 0..batch {
                let mask = masks.get(l - 1, b);
                for u in 0..width {
                    let m = mask.map_or(1.0, |m| m[u]);
                    if m == 0.0 {
                        continue;
                    }
                    let (f, f1, f2) = gelu_d2(z[b * g * width + u]);
                    d1[b * width + u] = f1;
                    d2[b * width + u] = f2;
                    h[b * g * width + u] = f * m;
                    for c in 1..g {
                        let idx = (b * g + c) * width + u;
                        h[idx] = f1 * z[idx] * m;
                    }
                }
            }
            inputs.push(a);
            pre.push(z);
            d1s.push(d1);
            d2s.push(d2);
            prev = h;
        }
        let out_layer = &self.layers[nh];
        let mut out = vec![0.0; rows];
        for r in 0..rows {
            let hr = &prev[r * width..(r + 1) * width];
            let mut v: f64 = hr.iter().zip(&out_layer.w).map(|(a, w)| a * w).sum();
            if r % g == 0 {
                v += out_layer.b[0];
            }
            out[r] = v;
        }
        inputs.push(prev);
        Tape { batch, dirs: dirs.to_vec(), inputs, pre, d1: d1s, d2: d2s, out }
    }

    /// Reverse sweep. `out_bar` holds one adjoint per row. Accumulates
    /// parameter gradients into `grads` (same layout as `layers`) when given,
    /// and returns the flat input gradient of the value rows when
    /// `want_input` is set.
    pub(crate) fn backward(
        &self,
        tape: &Tape,
        out_bar: &[f64],
        masks: &Masks,
        mut grads: Option<&mut [Dense]>,
        want_input: bool,
    ) -> Vec<f64> {
        let d = self.arch.input_dim;
        let g = tape.group();
        let rows = tape.batch * g;
        let width = self.arch.width;
        let nh = self.arch.n_hidden;
        let out_layer = &self.layers[nh];
        let mut gx = if want_input { vec![0.0; tape.batch * d] } else { Vec::new() };

        if let Some(gs) = grads.as_deref_mut() {
            let go = &mut gs[nh];
            outer_acc(&tape.inputs[nh], width, out_bar, 1, &mut go.w);
            for b in 0..tape.batch {
                go.b[0] += out_bar[b * g];
            }
        }
        let mut hbar = vec![0.0; rows * width];
        for r in 0..rows {
            for u in 0..width {
                hbar[r * width + u] = out_bar[r] * out_layer.w[u];
            }
        }
        for l in (1..=nh).rev() {
            let layer = &self.layers[l - 1];
            let z = &tape.pre[l - 1];
            let mut zbar = vec![0.0; rows * width];
            for b in 0..tape.batch {
                let mask = masks.get(l - 1, b);
                let v0 = b * g * width;
                for u in 0..width {
                    let m = mask.map_or(1.0, |m| m[u]);
                    if m == 0.0 {
                        continue;
                    }
                    let (f1, f2) = (tape.d1[l - 1][b * width + u], tape.d2[l - 1][b * width + u]);
                    let mut acc = hbar[v0 + u] * m * f1;
                    for c in 1..g {
                        let idx = (b * g + c) * width + u;
                        acc += hbar[idx] * m * f2 * z[idx];
                        zbar[idx] = hbar[idx] * m * f1;
                    }
                    zbar[v0 + u] = acc;
                }
            }
            if let Some(gs) = grads.as_deref_mut() {
                let gl = &mut gs[l - 1];
                outer_acc(&tape.inputs[l - 1], layer.n_in, &zbar, width, &mut gl.w);
                for b in 0..tape.batch {
                    let zr = &zbar[b * g * width..(b * g + 1) * width];
                    for (gb, v) in gl.b.iter_mut().zip(zr) {
                        *gb += v;
                    }
                }
            }
            let need_abar = l > 1 || want_input;
            if !need_abar {
                break;
            }
            let mut abar = vec![0.0; rows * layer.n_in];
            matmul_t(&zbar, width, &layer.w, layer.n_in, &mut abar);
            let base = if l == 1 { 0 } else { width };
            if want_input && (l == 1 || self.arch.has_skip(l)) {
                for b in 0..tape.batch {
                    let r = b * g;
                    for k in 0..d {
                        gx[b * d + k] += abar[r * layer.n_in + base + k] * self.arch.input_scale[k];
                    }
                }
            }
            if l > 1 {
                for r in 0..rows {
                    hbar[r * width..(r + 1) * width]
                        .copy_from_slice(&abar[r * layer.n_in..r * layer.n_in + width]);
                }
            }
        }
        gx
    }

    fn check_batch(&self, x: &[f64]) -> Result<()> {
        let d = self.arch.input_dim;
        if x.is_empty() || x.len() % d != 0 {
            return Err(Error::Dimension { expected: d, got: x.len() % d.max(1) });
        }
        Ok(())
    }

    fn check_mask(&self, mask: Option<&DropoutMask>) -> Result<()> {
        if let Some(m) = mask {
            if m.layers.len() != self.arch.n_hidden {
                return Err(Error::Dimension { expected: self.arch.n_hidden, got: m.layers.len() });
            }
            if let Some(bad) = m.layers.iter().find(|l| l.len() != self.arch.width) {
                return Err(Error::Dimension { expected: self.arch.width, got: bad.len() });
            }
        }
        Ok(())
    }

    /// Value and input gradient at a single input.
    pub fn forward(&self, x: &[f64], mask: Option<&DropoutMask>) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.arch.input_dim {
            return Err(Error::Dimension { expected: self.arch.input_dim, got: x.len() });
        }
        let e = self.forward_batch(x, mask)?;
        Ok((e.values[0], e.grads))
    }

    /// Values only, no gradient.
    pub fn predict_batch(&self, x: &[f64], mask: Option<&DropoutMask>) -> Result<Vec<f64>> {
        self.check_batch(x)?;
        self.check_mask(mask)?;
        let masks = mask.map_or(Masks::None, Masks::Shared);
        Ok(self.forward_tape(x, &[], &masks).out)
    }

    /// Values and input gradients for a batch, all items sharing `mask`.
    pub fn forward_batch(&self, x: &[f64], mask: Option<&DropoutMask>) -> Result<BatchEval> {
        self.check_batch(x)?;
        self.check_mask(mask)?;
        let masks = mask.map_or(Masks::None, Masks::Shared);
        let tape = self.forward_tape(x, &[], &masks);
        let ones = vec![1.0; tape.batch];
        let grads = self.backward(&tape, &ones, &masks, None, true);
        Ok(BatchEval { values: tape.out, grads })
    }

    pub fn zero_grads(&self) -> Vec<Dense> {
        self.layers
            .iter()
            .map(|l| Dense { n_in: l.n_in, n_out: l.n_out, w: vec![0.0; l.w.len()], b: vec![0.0; l.b.len()] })
            .collect()
    }
}

/// `m2` Monte-Carlo dropout realizations over the same batch; realization `i`
/// draws one mask and applies it to every input.
pub fn mc_realizations(model: &MlpModel, x: &[f64], m2: usize, seed: u64) -> Result<Vec<BatchEval>> {
    if m2 == 0 {
        return Err(Error::InvalidParameter("M2 must be at least 1".into()));
    }
    let mut rng = rng::seeded(seed);
    (0..m2)
        .map(|_| {
            let mask = DropoutMask::sample(&model.arch, &mut rng);
            model.forward_batch(x, Some(&mask))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64, dropout: f64) -> MlpModel {
        let arch = MlpArch { input_dim: 4, width: 12, dropout_rate: dropout, ..Default::default() };
        MlpModel::new(arch, seed).unwrap()
    }

    fn fd_grad(m: &MlpModel, x: &[f64], mask: Option<&DropoutMask>) -> Vec<f64> {
        let h = 1e-6;
        (0..x.len())
            .map(|k| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[k] += h;
                xm[k] -= h;
                let fp = m.predict_batch(&xp, mask).unwrap()[0];
                let fm = m.predict_batch(&xm, mask).unwrap()[0];
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gelu_identities() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(10.0) - 10.0).abs() < 1e-12);
        assert!(gelu(-10.0).abs() < 1e-12);
        let (_, d1, d2) = gelu_d2(0.3);
        let h = 1e-5;
        assert!((d1 - (gelu(0.3 + h) - gelu(0.3 - h)) / (2.0 * h)).abs() < 1e-8);
        let fd2 = (gelu_d2(0.3 + h).1 - gelu_d2(0.3 - h).1) / (2.0 * h);
        assert!((d2 - fd2).abs() < 1e-8);
    }

    #[test]
    fn zero_network_is_zero() {
        let mut m = small(1, 0.0);
        for l in &mut m.layers {
            l.w.fill(0.0);
            l.b.fill(0.0);
        }
        let (v, g) = m.forward(&[0.3, -1.0, 0.5, 2.0], None).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng::seeded(11);
        let mut worst: f64 = 0.0;
        for s in 0..100 {
            let mut m = small(s, 0.2);
            m.arch.input_scale = vec![0.5, 0.5, 0.3, 0.3];
            let mask = DropoutMask::sample(&m.arch, &mut r);
            let x: Vec<f64> = (0..4).map(|_| rng::uniform(&mut r, -2.0, 2.0)).collect();
            let (_, g) = m.forward(&x, Some(&mask)).unwrap();
            let fd = fd_grad(&m, &x, Some(&mask));
            for (a, b) in g.iter().zip(&fd) {
                worst = worst.max((a - b).abs() / b.abs().max(1e-2));
            }
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn batch_equals_items() {
        let m = small(3, 0.0);
        let x = [0.1, 0.2, 0.3, 0.4, -1.0, 2.0, 0.5, -0.5, 3.0, 0.0, 0.0, 1.0];
        let e = m.forward_batch(&x, None).unwrap();
        for i in 0..3 {
            let (v, g) = m.forward(&x[i * 4..(i + 1) * 4], None).unwrap();
            assert!((v - e.values[i]).abs() < 1e-13);
            for k in 0..4 {
                assert!((g[k] - e.grad(i, 4)[k]).abs() < 1e-13);
            }
        }
        assert!(matches!(m.forward(&[1.0, 2.0], None), Err(Error::Dimension { .. })));
    }

    #[test]
    fn mc_without_dropout_is_deterministic() {
        let m = small(5, 0.0);
        let x = [0.1, 0.2, 0.3, 0.4];
        let rs = mc_realizations(&m, &x, 3, 9).unwrap();
        let det = m.forward_batch(&x, None).unwrap();
        for r in &rs {
            assert_eq!(r, &det);
        }
        let d = small(5, 0.3);
        assert_eq!(mc_realizations(&d, &x, 4, 2).unwrap(), mc_realizations(&d, &x, 4, 2).unwrap());
        let vals: Vec<f64> = mc_realizations(&d, &x, 64, 2).unwrap().iter().map(|e| e.values[0]).collect();
        assert!(math::mean_std(&vals).1 > 0.0);
    }

    #[test]
    fn dropout_masks_scale_survivors() {
        let arch = MlpArch { width: 1000, dropout_rate: 0.25, ..Default::default() };
        let mask = DropoutMask::sample(&arch, &mut rng::seeded(4));
        for layer in &mask.layers {
            assert!(layer.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-15));
            let mean = layer.iter().sum::<f64>() / layer.len() as f64;
            assert!((mean - 1.0).abs() < 0.1);
        }
    }
}
