//! Ground-truth configuration distance functions built from exhaustive search.
//!
//! The environment CDF is backed by a [`ContactDb`]: for every point of a
//! workspace grid it stores a diverse set of joint configurations that put the
//! arm in contact with that point, each tagged with the link that touches it.
//! The self-collision CDF is backed by a [`SelfCollisionDb`] of sampled
//! self-colliding configurations. Both answer queries by brute-force minimum
//! over their entries, which makes them slow but trustworthy.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::arm::{self, ArmModel, JointConfig};
use crate::math::{self, Vec2};
use crate::rng;
use crate::{Error, Result, UNREACHABLE};

/// One contact configuration for a grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactEntry {
    pub config: JointConfig,
    /// 1-based index of the link touching the point.
    pub contact_link: usize,
}

/// Square workspace grid with `res` points per axis, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec2,
    pub hi: Vec2,
    pub res: usize,
}

impl GridSpec {
    pub fn n_points(&self) -> usize {
        self.res * self.res
    }

    pub fn spacing(&self) -> Vec2 {
        let n = (self.res - 1) as f64;
        [(self.hi[0] - self.lo[0]) / n, (self.hi[1] - self.lo[1]) / n]
    }

    pub fn point(&self, idx: usize) -> Vec2 {
        let (ix, iy) = (idx % self.res, idx / self.res);
        let h = self.spacing();
        [self.lo[0] + ix as f64 * h[0], self.lo[1] + iy as f64 * h[1]]
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.res + ix
    }

    pub fn contains(&self, p: Vec2) -> bool {
        let eps = 1e-9;
        p[0] >= self.lo[0] - eps
            && p[0] <= self.hi[0] + eps
            && p[1] >= self.lo[1] - eps
            && p[1] <= self.hi[1] + eps
    }

    /// Integer coordinates of the grid point nearest to `p`, if `p` is inside.
    pub fn nearest(&self, p: Vec2) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let h = self.spacing();
        let last = (self.res - 1) as f64;
        let ix = math::round((p[0] - self.lo[0]) / h[0]).clamp(0.0, last) as usize;
        let iy = math::round((p[1] - self.lo[1]) / h[1]).clamp(0.0, last) as usize;
        Some((ix, iy))
    }
}

/// Construction parameters for a contact database.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactDbParams {
    pub bounds_lo: Vec2,
    pub bounds_hi: Vec2,
    pub grid_res: usize,
    pub cfg_res: usize,
    pub max_entries: usize,
    pub contact_tol: f64,
}

impl Default for ContactDbParams {
    fn default() -> Self {
        Self {
            bounds_lo: [-4.2, -4.2],
            bounds_hi: [4.2, 4.2],
            grid_res: 40,
            cfg_res: 200,
            max_entries: 200,
            contact_tol: 1e-4,
        }
    }
}

impl ContactDbParams {
    pub fn grid(&self) -> GridSpec {
        GridSpec { lo: self.bounds_lo, hi: self.bounds_hi, res: self.grid_res }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_res < 2 {
            return Err(Error::InvalidParameter("grid_res must be at least 2".into()));
        }
        if self.cfg_res < 16 {
            return Err(Error::InvalidParameter("cfg_res must be at least 16".into()));
        }
        if self.max_entries == 0 {
            return Err(Error::InvalidParameter("max_entries must be positive".into()));
        }
        if !(self.contact_tol > 0.0) {
            return Err(Error::InvalidParameter("contact_tol must be positive".into()));
        }
        if !(self.bounds_lo[0] < self.bounds_hi[0] && self.bounds_lo[1] < self.bounds_hi[1]) {
            return Err(Error::InvalidParameter("empty workspace bounds".into()));
        }
        Ok(())
    }
}

/// Joint positions of every node of a `cfg_res^m` configuration lattice,
/// computed once and reused for every workspace point.
pub struct ConfigLattice {
    dof: usize,
    res: usize,
    axes: Vec<Vec<f64>>,
    /// `(m + 1)` joint positions per node.
    joints: Vec<Vec2>,
}

impl ConfigLattice {
    pub fn new(arm: &ArmModel, res: usize) -> Self {
        let dof = arm.dof();
        let axes: Vec<Vec<f64>> = (0..dof)
            .map(|j| {
                let (lo, hi) = (arm.joint_limits_lo[j], arm.joint_limits_hi[j]);
                (0..res).map(|i| lo + (hi - lo) * i as f64 / (res - 1) as f64).collect()
            })
            .collect();
        let n = res.pow(dof as u32);
        let mut joints = Vec::with_capacity(n * (dof + 1));
        let mut q = vec![0.0; dof];
        let mut buf = Vec::with_capacity(dof + 1);
        for node in 0..n {
            Self::fill_config(&axes, res, node, &mut q);
            arm::fk_into(&arm.link_lengths, &q, &mut buf);
            joints.extend_from_slice(&buf);
        }
        Self { dof, res, axes, joints }
    }

    pub fn n_nodes(&self) -> usize {
        self.joints.len() / (self.dof + 1)
    }

    fn fill_config(axes: &[Vec<f64>], res: usize, mut node: usize, q: &mut [f64]) {
        for (j, axis) in axes.iter().enumerate() {
            q[j] = axis[node % res];
            node /= res;
        }
    }

    pub fn config(&self, node: usize, q: &mut [f64]) {
        Self::fill_config(&self.axes, self.res, node, q);
    }

    fn node_joints(&self, node: usize) -> &[Vec2] {
        let w = self.dof + 1;
        &self.joints[node * w..(node + 1) * w]
    }
}

/// Signed per-link contact function. Capsules use `d - r`; thin links use the
/// perpendicular distance signed by the side of the link line, which changes
/// sign when the link sweeps across the point. The flag tells whether the
/// function is continuous here (always for capsules; for thin links only when
/// the closest point is interior to the segment).
fn link_sigma(p: Vec2, a: Vec2, b: Vec2, radius: f64) -> (f64, bool) {
    let (d, t) = math::point_segment(p, a, b);
    if radius > 0.0 {
        return (d - radius, true);
    }
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    (if cross < 0.0 { -d } else { d }, t > 0.0 && t < 1.0)
}

fn sigma_at(arm: &ArmModel, p: Vec2, q: &[f64], link: usize, buf: &mut Vec<Vec2>) -> f64 {
    arm::fk_into(&arm.link_lengths, q, buf);
    link_sigma(p, buf[link], buf[link + 1], arm.capsule_radii[link]).0
}

/// Accepts `q` as a contact configuration for `p` if the arm surface passes
/// within `tol` of `p`; returns the touching (closest) link, 0-based.
fn accept_contact(arm: &ArmModel, p: Vec2, q: &[f64], tol: f64) -> Option<usize> {
    if !arm.within_limits(q) {
        return None;
    }
    let d = arm::link_distances(arm, p, q);
    let mut best = 0;
    for (k, v) in d.iter().enumerate() {
        if *v < d[best] {
            best = k;
        }
    }
    (d[best].abs() <= tol).then_some(best)
}

/// Bisects the sign change of link `link`'s contact function between `qa` and
/// `qb`, which differ only in joint `axis`.
fn bisect_edge(
    arm: &ArmModel,
    p: Vec2,
    link: usize,
    qa: &[f64],
    axis: usize,
    x_b: f64,
    sigma_a: f64,
    tol: f64,
    buf: &mut Vec<Vec2>,
) -> Vec<f64> {
    let mut q = qa.to_vec();
    let (mut lo, mut hi) = (qa[axis], x_b);
    let mut s_lo = sigma_a;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        q[axis] = mid;
        let s = sigma_at(arm, p, &q, link, buf);
        if s.abs() <= 0.1 * tol || (hi - lo).abs() < 1e-13 {
            return q;
        }
        if (s < 0.0) == (s_lo < 0.0) {
            lo = mid;
            s_lo = s;
        } else {
            hi = mid;
        }
    }
    q[axis] = 0.5 * (lo + hi);
    q
}

/// Gauss-Newton polish that pulls the closest point of a thin link onto `p`.
/// Used for isolated contacts (e.g. the fully stretched tip) that no lattice
/// edge brackets.
fn polish_thin_contact(arm: &ArmModel, p: Vec2, link: usize, q0: &[f64], tol: f64) -> Vec<f64> {
    let mut q = q0.to_vec();
    let mut joints = Vec::with_capacity(q.len() + 1);
    for _ in 0..40 {
        arm::fk_into(&arm.link_lengths, &q, &mut joints);
        let (a, b) = (joints[link], joints[link + 1]);
        let (d, t) = math::point_segment(p, a, b);
        if d <= 0.1 * tol {
            break;
        }
        let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
        let r = [p[0] - x[0], p[1] - x[1]];
        // Column j of the point Jacobian is perp(x - joint_j) for j <= link.
        let cols: Vec<Vec2> = (0..=link).map(|j| [-(x[1] - joints[j][1]), x[0] - joints[j][0]]).collect();
        let mut jjt = [[1e-9, 0.0], [0.0, 1e-9]];
        for c in &cols {
            jjt[0][0] += c[0] * c[0];
            jjt[0][1] += c[0] * c[1];
            jjt[1][1] += c[1] * c[1];
        }
        jjt[1][0] = jjt[0][1];
        let det = jjt[0][0] * jjt[1][1] - jjt[0][1] * jjt[1][0];
        let w = [
            (jjt[1][1] * r[0] - jjt[0][1] * r[1]) / det,
            (-jjt[1][0] * r[0] + jjt[0][0] * r[1]) / det,
        ];
        for (j, c) in cols.iter().enumerate() {
            q[j] += c[0] * w[0] + c[1] * w[1];
        }
        arm.clamp_to_limits(&mut q);
    }
    q
}

/// Greedy farthest-point subset of `cands` (joint-space Euclidean), starting
/// from the first candidate. Returns indices in selection order.
pub fn farthest_point_indices(cands: &[Vec<f64>], k: usize) -> Vec<usize> {
    if cands.len() <= k {
        return (0..cands.len()).collect();
    }
    let mut chosen = Vec::with_capacity(k);
    let mut min_d = vec![f64::INFINITY; cands.len()];
    let mut cur = 0;
    for _ in 0..k {
        chosen.push(cur);
        min_d[cur] = -1.0;
        let mut next = 0;
        let mut best = -1.0;
        for (i, c) in cands.iter().enumerate() {
            if min_d[i] < 0.0 {
                continue;
            }
            let d = math::dist_sq(c, &cands[cur]);
            if d < min_d[i] {
                min_d[i] = d;
            }
            if min_d[i] > best {
                best = min_d[i];
                next = i;
            }
        }
        cur = next;
    }
    chosen
}

/// All contact configurations for one workspace point, reduced to at most
/// `params.max_entries` by farthest-point sampling.
pub fn contacts_at_point(
    arm: &ArmModel,
    lattice: &ConfigLattice,
    p: Vec2,
    params: &ContactDbParams,
) -> Vec<ContactEntry> {
    let m = arm.dof();
    if math::norm(&p) > arm.reach() + params.contact_tol {
        return Vec::new();
    }
    let n = lattice.n_nodes();
    let tol = params.contact_tol;
    let res = lattice.res;
    let mut sigma = vec![0.0; n * m];
    let mut smooth = vec![false; n * m];
    for node in 0..n {
        let js = lattice.node_joints(node);
        for k in 0..m {
            let (s, c) = link_sigma(p, js[k], js[k + 1], arm.capsule_radii[k]);
            sigma[node * m + k] = s;
            smooth[node * m + k] = c;
        }
    }
    let step = (0..m)
        .map(|j| (arm.joint_limits_hi[j] - arm.joint_limits_lo[j]) / (res - 1) as f64)
        .fold(0.0, f64::max);
    let near_tol = step * arm.link_lengths.iter().sum::<f64>();

    let mut cands: Vec<Vec<f64>> = Vec::new();
    let mut links: Vec<usize> = Vec::new();
    let mut q = vec![0.0; m];
    let mut buf = Vec::with_capacity(m + 1);
    let push = |q: Vec<f64>, cands: &mut Vec<Vec<f64>>, links: &mut Vec<usize>| {
        if let Some(k) = accept_contact(arm, p, &q, tol) {
            cands.push(q);
            links.push(k);
        }
    };
    let strides: Vec<usize> = (0..m).map(|j| res.pow(j as u32)).collect();
    for node in 0..n {
        lattice.config(node, &mut q);
        for k in 0..m {
            let s = sigma[node * m + k];
            if s.abs() <= tol {
                push(q.clone(), &mut cands, &mut links);
                continue;
            }
            let mut bracketed = false;
            let mut local_min = arm.capsule_radii[k] == 0.0 && s.abs() < near_tol;
            for j in 0..m {
                let coord = (node / strides[j]) % res;
                for (nb, forward) in [(node + strides[j], coord + 1 < res), (node.wrapping_sub(strides[j]), coord > 0)] {
                    if !forward {
                        continue;
                    }
                    let sn = sigma[nb * m + k];
                    if sn.abs() < s.abs() {
                        local_min = false;
                    }
                    let continuous = smooth[node * m + k] && smooth[nb * m + k];
                    if continuous && (s < 0.0) != (sn < 0.0) && sn.abs() > tol {
                        bracketed = true;
                        // Each bracketing edge is handled once, from its lower node.
                        if nb > node {
                            let mut qb = q.clone();
                            lattice.config(nb, &mut qb);
                            let qc = bisect_edge(arm, p, k, &q, j, qb[j], s, tol, &mut buf);
                            push(qc, &mut cands, &mut links);
                        }
                    }
                }
            }
            if local_min && !bracketed {
                let qc = polish_thin_contact(arm, p, k, &q, tol);
                push(qc, &mut cands, &mut links);
            }
        }
    }
    farthest_point_indices(&cands, params.max_entries)
        .into_iter()
        .map(|i| ContactEntry { config: JointConfig::new(cands[i].clone()), contact_link: links[i] + 1 })
        .collect()
}

/// Contact database over a workspace grid, stored as flat arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactDb {
    pub grid: GridSpec,
    pub dof: usize,
    pub cfg_res: usize,
    pub max_entries: usize,
    pub contact_tol: f64,
    /// Radius beyond which no point can touch the arm.
    pub reach: f64,
    /// Entry range of grid point `i` is `offsets[i]..offsets[i + 1]`.
    pub offsets: Vec<usize>,
    /// `dof` angles per entry.
    pub configs: Vec<f64>,
    /// 1-based contact link per entry.
    pub links: Vec<u8>,
}

/// Result of a CDF query with its joint-space gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfValue {
    pub value: f64,
    pub grad_q: Vec<f64>,
}

impl ContactDb {
    /// Assembles a database from per-point entry lists in grid order.
    pub fn from_entries(arm: &ArmModel, params: &ContactDbParams, per_point: Vec<Vec<ContactEntry>>) -> Result<Self> {
        let grid = params.grid();
        if per_point.len() != grid.n_points() {
            return Err(Error::Dimension { expected: grid.n_points(), got: per_point.len() });
        }
        let m = arm.dof();
        let mut offsets = Vec::with_capacity(per_point.len() + 1);
        let mut configs = Vec::new();
        let mut links = Vec::new();
        offsets.push(0);
        for entries in per_point {
            for e in entries {
                if e.config.len() != m {
                    return Err(Error::Dimension { expected: m, got: e.config.len() });
                }
                configs.extend_from_slice(&e.config);
                links.push(e.contact_link as u8);
            }
            offsets.push(links.len());
        }
        Ok(Self {
            grid,
            dof: m,
            cfg_res: params.cfg_res,
            max_entries: params.max_entries,
            contact_tol: params.contact_tol,
            reach: arm.reach(),
            offsets,
            configs,
            links,
        })
    }

    pub fn n_entries(&self) -> usize {
        self.links.len()
    }

    pub fn entries(&self, point: usize) -> Vec<ContactEntry> {
        (self.offsets[point]..self.offsets[point + 1])
            .map(|e| ContactEntry {
                config: JointConfig::new(self.entry_config(e).to_vec()),
                contact_link: self.links[e] as usize,
            })
            .collect()
    }

    #[inline]
    fn entry_config(&self, e: usize) -> &[f64] {
        &self.configs[e * self.dof..(e + 1) * self.dof]
    }

    pub fn is_reachable(&self, point: usize) -> bool {
        self.offsets[point + 1] > self.offsets[point]
    }

    /// Grid point used for a query at `p`: `Ok(None)` when `p` is outside the
    /// grid but beyond reach (so no contact is possible).
    pub fn lookup(&self, p: Vec2) -> Result<Option<usize>> {
        match self.grid.nearest(p) {
            Some((ix, iy)) => Ok(Some(self.grid.index(ix, iy))),
            None if math::norm(&p) > self.reach => Ok(None),
            None => Err(Error::OutOfGrid { x: p[0], y: p[1] }),
        }
    }

    /// Prefix-distance CDF at grid point `point`, with the argmin entry.
    pub fn cdf_at_point(&self, point: usize, q: &[f64]) -> (f64, Option<usize>) {
        let mut best = f64::INFINITY;
        let mut arg = None;
        for e in self.offsets[point]..self.offsets[point + 1] {
            let k = self.links[e] as usize;
            let d = math::dist_sq(&q[..k], &self.entry_config(e)[..k]);
            if d < best {
                best = d;
                arg = Some(e);
            }
        }
        match arg {
            Some(_) => (math::sqrt(best), arg),
            None => (UNREACHABLE, None),
        }
    }

    /// Same as [`Self::cdf_at_point`] but over all joints.
    pub fn full_cdf_at_point(&self, point: usize, q: &[f64]) -> f64 {
        let best = (self.offsets[point]..self.offsets[point + 1])
            .map(|e| math::dist_sq(q, self.entry_config(e)))
            .fold(f64::INFINITY, f64::min);
        if best.is_finite() {
            math::sqrt(best)
        } else {
            UNREACHABLE
        }
    }

    fn check_q(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dof {
            return Err(Error::Dimension { expected: self.dof, got: q.len() });
        }
        Ok(())
    }

    /// Environment CDF of `p` at `q` (nearest-grid-point lookup).
    pub fn exact_cdf(&self, p: Vec2, q: &[f64]) -> Result<f64> {
        self.check_q(q)?;
        Ok(match self.lookup(p)? {
            Some(point) => self.cdf_at_point(point, q).0,
            None => UNREACHABLE,
        })
    }

    /// Full joint-space CDF from the same entries (no link refinement).
    pub fn exact_full_cdf(&self, p: Vec2, q: &[f64]) -> Result<f64> {
        self.check_q(q)?;
        Ok(match self.lookup(p)? {
            Some(point) => self.full_cdf_at_point(point, q),
            None => UNREACHABLE,
        })
    }

    /// CDF with its analytic joint-space gradient (unit vector away from the
    /// nearest contact prefix; zero at contact or when unreachable).
    pub fn exact_cdf_grad(&self, p: Vec2, q: &[f64]) -> Result<CdfValue> {
        self.check_q(q)?;
        let mut grad_q = vec![0.0; self.dof];
        let Some(point) = self.lookup(p)? else {
            return Ok(CdfValue { value: UNREACHABLE, grad_q });
        };
        let (value, arg) = self.cdf_at_point(point, q);
        if let Some(e) = arg {
            if value > 0.0 {
                let k = self.links[e] as usize;
                let c = self.entry_config(e);
                for j in 0..k {
                    grad_q[j] = (q[j] - c[j]) / value;
                }
            }
        }
        Ok(CdfValue { value, grad_q })
    }

    /// Workspace gradient by central differences over neighboring grid points
    /// (one-sided at the grid edge or next to unreachable points).
    pub fn exact_cdf_grad_p(&self, p: Vec2, q: &[f64]) -> Result<Vec2> {
        self.check_q(q)?;
        let Some((ix, iy)) = self.grid.nearest(p) else {
            return Ok([0.0, 0.0]);
        };
        let h = self.grid.spacing();
        let res = self.grid.res;
        let val = |x: usize, y: usize| {
            let pt = self.grid.index(x, y);
            self.is_reachable(pt).then(|| self.cdf_at_point(pt, q).0)
        };
        let Some(f0) = val(ix, iy) else {
            return Ok([0.0, 0.0]);
        };
        let diff = |minus: Option<f64>, plus: Option<f64>, h: f64| match (minus, plus) {
            (Some(a), Some(b)) => (b - a) / (2.0 * h),
            (None, Some(b)) => (b - f0) / h,
            (Some(a), None) => (f0 - a) / h,
            (None, None) => 0.0,
        };
        let gx = diff(
            (ix > 0).then(|| val(ix - 1, iy)).flatten(),
            (ix + 1 < res).then(|| val(ix + 1, iy)).flatten(),
            h[0],
        );
        let gy = diff(
            (iy > 0).then(|| val(ix, iy - 1)).flatten(),
            (iy + 1 < res).then(|| val(ix, iy + 1)).flatten(),
            h[1],
        );
        Ok([gx, gy])
    }
}

/// Builds a contact database sequentially. The `bubblecdf` crate offers a
/// parallel builder over the same per-point routine.
pub fn build_contact_db(arm: &ArmModel, params: &ContactDbParams) -> Result<ContactDb> {
    arm.validate()?;
    params.validate()?;
    let lattice = ConfigLattice::new(arm, params.cfg_res);
    let grid = params.grid();
    let per_point = (0..grid.n_points())
        .map(|i| contacts_at_point(arm, &lattice, grid.point(i), params))
        .collect();
    ContactDb::from_entries(arm, params, per_point)
}

/// Sampled self-colliding configurations with the responsible joint ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfCollisionDb {
    pub dof: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub overlap_tol: f64,
    /// `dof` angles per entry.
    pub configs: Vec<f64>,
    /// 1-based first joint of the responsible range.
    pub range_lo: Vec<u8>,
    /// 1-based last joint of the responsible range (inclusive).
    pub range_hi: Vec<u8>,
}

impl SelfCollisionDb {
    pub fn len(&self) -> usize {
        self.range_lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.range_lo.is_empty()
    }

    pub fn config(&self, i: usize) -> &[f64] {
        &self.configs[i * self.dof..(i + 1) * self.dof]
    }

    fn nearest(&self, q: &[f64]) -> (f64, Option<usize>) {
        let mut best = f64::INFINITY;
        let mut arg = None;
        for i in 0..self.len() {
            let (a, b) = (self.range_lo[i] as usize - 1, self.range_hi[i] as usize);
            let d = math::dist_sq(&q[a..b], &self.config(i)[a..b]);
            if d < best {
                best = d;
                arg = Some(i);
            }
        }
        match arg {
            Some(_) => (math::sqrt(best), arg),
            None => (UNREACHABLE, None),
        }
    }

    /// Self-collision CDF: minimum over entries of the distance restricted to
    /// each entry's responsible joints. Empty databases give the sentinel.
    pub fn exact_scdf(&self, q: &[f64]) -> Result<f64> {
        self.exact_scdf_grad(q).map(|v| v.value)
    }

    pub fn exact_scdf_grad(&self, q: &[f64]) -> Result<CdfValue> {
        if q.len() != self.dof {
            return Err(Error::Dimension { expected: self.dof, got: q.len() });
        }
        let (value, arg) = self.nearest(q);
        let mut grad_q = vec![0.0; self.dof];
        if let Some(i) = arg {
            if value > 0.0 {
                let c = self.config(i);
                for j in (self.range_lo[i] as usize - 1)..(self.range_hi[i] as usize) {
                    grad_q[j] = (q[j] - c[j]) / value;
                }
            }
        }
        Ok(CdfValue { value, grad_q })
    }
}

/// Uniformly samples `n_samples` configurations and keeps the self-colliding
/// ones.
pub fn build_selfcollision_db(arm: &ArmModel, n_samples: usize, overlap_tol: f64, seed: u64) -> Result<SelfCollisionDb> {
    arm.validate()?;
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be at least 1".into()));
    }
    let mut rng = rng::seeded(seed);
    let mut db = SelfCollisionDb {
        dof: arm.dof(),
        n_samples,
        seed,
        overlap_tol,
        configs: Vec::new(),
        range_lo: Vec::new(),
        range_hi: Vec::new(),
    };
    for _ in 0..n_samples {
        let q = arm.sample_config(&mut rng);
        if let Some(c) = arm::self_collision(arm, &q, overlap_tol) {
            db.configs.extend_from_slice(&q);
            db.range_lo.push(c.link_a as u8);
            db.range_hi.push(c.link_b as u8);
        }
    }
    Ok(db)
}

/// Central-difference joint-space gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, q: &[f64], h: f64) -> Vec<f64> {
    let mut x = q.to_vec();
    (0..q.len())
        .map(|j| {
            x[j] = q[j] + h;
            let fp = f(&x);
            x[j] = q[j] - h;
            let fm = f(&x);
            x[j] = q[j];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}
