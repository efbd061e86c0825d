//! Planar serial arm: forward kinematics, capsule geometry, workspace SDF,
//! analytic two-link inverse kinematics and the self-collision predicate.
//!
//! Link `i` spans joint position `i` to joint position `i + 1`. Joint angles
//! accumulate, so the world angle of link `i` is `q[0] + ... + q[i]`. The base
//! sits at the workspace origin.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::math::{self, Vec2, PI};
use crate::rng::{self, SimRng};
use crate::{Error, Result};

/// Geometry and joint limits of a planar m-link arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub link_lengths: Vec<f64>,
    /// Capsule radius per link; 0 means a thin line segment.
    pub capsule_radii: Vec<f64>,
    pub joint_limits_lo: Vec<f64>,
    pub joint_limits_hi: Vec<f64>,
}

/// A point in joint space (radians).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig {
    pub angles: Vec<f64>,
}

/// A workspace point with its velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkPoint {
    pub position: Vec2,
    #[serde(default)]
    pub velocity: Vec2,
}

impl JointConfig {
    pub fn new(angles: Vec<f64>) -> Self {
        Self { angles }
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(angles: Vec<f64>) -> Self {
        Self { angles }
    }
}

impl Deref for JointConfig {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.angles
    }
}

impl DerefMut for JointConfig {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.angles
    }
}

impl WorkPoint {
    pub fn fixed(position: Vec2) -> Self {
        Self { position, velocity: [0.0, 0.0] }
    }
}

impl ArmModel {
    pub fn new(
        link_lengths: Vec<f64>,
        capsule_radii: Vec<f64>,
        joint_limits_lo: Vec<f64>,
        joint_limits_hi: Vec<f64>,
    ) -> Result<Self> {
        let arm = Self { link_lengths, capsule_radii, joint_limits_lo, joint_limits_hi };
        arm.validate()?;
        Ok(arm)
    }

    /// Thin-link arm with joint limits `[-pi, pi)` on every joint.
    pub fn planar(link_lengths: &[f64]) -> Result<Self> {
        let m = link_lengths.len();
        Self::new(link_lengths.to_vec(), vec![0.0; m], vec![-PI; m], vec![PI; m])
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.link_lengths.len();
        if m == 0 {
            return Err(Error::InvalidArm("arm needs at least one link".into()));
        }
        for (name, len) in [
            ("capsule_radii", self.capsule_radii.len()),
            ("joint_limits_lo", self.joint_limits_lo.len()),
            ("joint_limits_hi", self.joint_limits_hi.len()),
        ] {
            if len != m {
                return Err(Error::InvalidArm(format!("{name} has {len} entries, expected {m}")));
            }
        }
        if self.link_lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidArm("link lengths must be positive".into()));
        }
        if self.capsule_radii.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
            return Err(Error::InvalidArm("capsule radii must be non-negative".into()));
        }
        for (lo, hi) in self.joint_limits_lo.iter().zip(&self.joint_limits_hi) {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidArm(format!("joint limits [{lo}, {hi}] are empty")));
            }
        }
        Ok(())
    }

    pub fn dof(&self) -> usize {
        self.link_lengths.len()
    }

    /// Largest distance from the base any point of the arm body can reach.
    pub fn reach(&self) -> f64 {
        self.link_lengths.iter().sum::<f64>() + self.max_radius()
    }

    pub fn max_radius(&self) -> f64 {
        self.capsule_radii.iter().fold(0.0, |m, &r| m.max(r))
    }

    pub fn check_config(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::Dimension { expected: self.dof(), got: q.len() });
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &[f64]) -> bool {
        q.iter()
            .zip(self.joint_limits_lo.iter().zip(&self.joint_limits_hi))
            .all(|(x, (lo, hi))| *x >= *lo && *x <= *hi)
    }

    pub fn clamp_to_limits(&self, q: &mut [f64]) {
        for (i, x) in q.iter_mut().enumerate() {
            *x = x.clamp(self.joint_limits_lo[i], self.joint_limits_hi[i]);
        }
    }

    /// Uniform sample over the joint-limit box.
    pub fn sample_config(&self, rng: &mut SimRng) -> JointConfig {
        JointConfig::new(
            self.joint_limits_lo
                .iter()
                .zip(&self.joint_limits_hi)
                .map(|(&lo, &hi)| rng::uniform(rng, lo, hi))
                .collect(),
        )
    }

    /// Euclidean diagonal of the joint-limit box.
    pub fn config_space_diagonal(&self) -> f64 {
        let d: Vec<f64> = self
            .joint_limits_hi
            .iter()
            .zip(&self.joint_limits_lo)
            .map(|(h, l)| h - l)
            .collect();
        math::norm(&d)
    }
}

/// Joint positions `[base, joint 1, ..., end effector]` (m + 1 points).
pub fn forward_kinematics(arm: &ArmModel, q: &[f64]) -> Result<Vec<Vec2>> {
    arm.check_config(q)?;
    let mut out = Vec::with_capacity(q.len() + 1);
    fk_into(&arm.link_lengths, q, &mut out);
    Ok(out)
}

/// Forward kinematics without dimension checks, writing into `out`.
pub(crate) fn fk_into(lengths: &[f64], q: &[f64], out: &mut Vec<Vec2>) {
    out.clear();
    let mut pos = [0.0, 0.0];
    let mut angle = 0.0;
    out.push(pos);
    for (l, qi) in lengths.iter().zip(q) {
        angle += qi;
        pos = [pos[0] + l * math::cos(angle), pos[1] + l * math::sin(angle)];
        out.push(pos);
    }
}

/// Signed distance from `p` to each link capsule.
pub fn link_distances(arm: &ArmModel, p: Vec2, q: &[f64]) -> Vec<f64> {
    let mut joints = Vec::with_capacity(q.len() + 1);
    fk_into(&arm.link_lengths, q, &mut joints);
    joints
        .windows(2)
        .zip(&arm.capsule_radii)
        .map(|(w, r)| math::point_segment(p, w[0], w[1]).0 - r)
        .collect()
}

/// Workspace signed distance from `p` to the arm body at `q`: the minimum over
/// links of point-to-segment distance minus capsule radius.
pub fn arm_sdf(arm: &ArmModel, p: Vec2, q: &[f64]) -> f64 {
    debug_assert_eq!(q.len(), arm.dof());
    link_distances(arm, p, q).into_iter().fold(f64::INFINITY, f64::min)
}

/// Clearance between the arm at `q` and a disk obstacle (negative when
/// overlapping).
pub fn disk_clearance(arm: &ArmModel, q: &[f64], center: Vec2, radius: f64) -> f64 {
    arm_sdf(arm, center, q) - radius
}

/// Analytic inverse kinematics for a two-link arm. Returns the elbow-up and
/// elbow-down solutions that lie within the joint limits (one solution when
/// they coincide, none when the target is out of reach).
pub fn inverse_kinematics_2link(arm: &ArmModel, target: Vec2) -> Result<Vec<JointConfig>> {
    if arm.dof() != 2 {
        return Err(Error::WrongDof { expected: 2, got: arm.dof() });
    }
    let (l1, l2) = (arm.link_lengths[0], arm.link_lengths[1]);
    let (x, y) = (target[0], target[1]);
    let r2 = x * x + y * y;
    let c2 = (r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2);
    const SLACK: f64 = 1e-12;
    if !(c2.abs() <= 1.0 + SLACK) {
        return Ok(Vec::new());
    }
    let t2 = math::acos(c2.clamp(-1.0, 1.0));
    let mut out: Vec<JointConfig> = Vec::with_capacity(2);
    for s in [1.0, -1.0] {
        let th2 = s * t2;
        let th1 = math::atan2(y, x) - math::atan2(l2 * math::sin(th2), l1 + l2 * math::cos(th2));
        let q = [math::wrap_angle(th1), math::wrap_angle(th2)];
        if out.iter().any(|o| math::dist(o, &q) < 1e-12) {
            continue;
        }
        if !arm.within_limits(&q) {
            continue;
        }
        let fk = forward_kinematics(arm, &q)?;
        if math::dist2(fk[2], target) <= 1e-9 {
            out.push(JointConfig::new(q.to_vec()));
        }
    }
    Ok(out)
}

/// A self-collision between links `a < b` (1-based link indices).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfContact {
    pub link_a: usize,
    pub link_b: usize,
    /// Separation minus the summed capsule radii (negative = overlap).
    pub separation: f64,
}

/// Returns the closest colliding link pair, if any.
///
/// Non-adjacent links collide when their segment distance is below the summed
/// radii plus `overlap_tol`. Adjacent links always touch at their shared
/// joint, so for them the test uses the point of the outer link at distance
/// `min(L_i, L_{i+1})` from the shared joint: the pair collides when that point
/// comes within the same threshold of the inner link, i.e. when the arm folds
/// back onto itself.
pub fn self_collision(arm: &ArmModel, q: &[f64], overlap_tol: f64) -> Option<SelfContact> {
    let m = arm.dof();
    if m < 2 {
        return None;
    }
    let mut joints = Vec::with_capacity(m + 1);
    fk_into(&arm.link_lengths, q, &mut joints);
    let mut best: Option<SelfContact> = None;
    for i in 0..m {
        for j in (i + 1)..m {
            let sum_r = arm.capsule_radii[i] + arm.capsule_radii[j];
            let d = if j == i + 1 {
                let shared = joints[j];
                let tip = joints[j + 1];
                let lj = arm.link_lengths[j];
                let ell = arm.link_lengths[i].min(lj);
                let probe = [
                    shared[0] + (tip[0] - shared[0]) * ell / lj,
                    shared[1] + (tip[1] - shared[1]) * ell / lj,
                ];
                math::point_segment(probe, joints[i], joints[i + 1]).0
            } else {
                math::segment_segment(joints[i], joints[i + 1], joints[j], joints[j + 1])
            };
            let sep = d - sum_r;
            if sep < overlap_tol && best.map_or(true, |b| sep < b.separation) {
                best = Some(SelfContact { link_a: i + 1, link_b: j + 1, separation: sep });
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn arm22() -> ArmModel {
        ArmModel::planar(&[2.0, 2.0]).unwrap()
    }

    #[test]
    fn fk_examples() {
        let arm = arm22();
        let j = forward_kinematics(&arm, &[0.0, 0.0]).unwrap();
        assert_eq!(j[2], [4.0, 0.0]);
        let j = forward_kinematics(&arm, &[PI / 2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(j[2][0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(j[2][1], 4.0, epsilon = 1e-12);
        let j = forward_kinematics(&arm, &[PI / 2.0, -PI / 2.0]).unwrap();
        for (got, want) in j.iter().zip([[0.0, 0.0], [0.0, 2.0], [2.0, 2.0]]) {
            assert_abs_diff_eq!(got[0], want[0], epsilon = 1e-12);
            assert_abs_diff_eq!(got[1], want[1], epsilon = 1e-12);
        }
        assert!(matches!(
            forward_kinematics(&arm, &[0.0]),
            Err(Error::Dimension { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn sdf_examples() {
        let arm = arm22();
        assert_abs_diff_eq!(arm_sdf(&arm, [2.0, 1.0], &[0.0, 0.0]), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(arm_sdf(&arm, [4.0, 0.0], &[0.0, 0.0]), 0.0, epsilon = 1e-12);
        let thick = ArmModel::new(vec![2.0, 2.0], vec![0.1, 0.1], vec![-PI; 2], vec![PI; 2]).unwrap();
        assert_abs_diff_eq!(arm_sdf(&thick, [2.0, 1.0], &[0.0, 0.0]), 0.9, epsilon = 1e-12);
        assert!(arm_sdf(&thick, [2.0, 0.05], &[0.0, 0.0]) < 0.0);
    }

    #[test]
    fn ik_examples() {
        let arm = arm22();
        let sols = inverse_kinematics_2link(&arm, [4.0, 0.0]).unwrap();
        assert_eq!(sols.len(), 1);
        assert_abs_diff_eq!(sols[0][0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sols[0][1], 0.0, epsilon = 1e-9);

        let sols = inverse_kinematics_2link(&arm, [2.0, 2.0]).unwrap();
        assert_eq!(sols.len(), 2);
        for q in &sols {
            let ee = forward_kinematics(&arm, q).unwrap()[2];
            assert!(math::dist2(ee, [2.0, 2.0]) <= 1e-9);
        }
        assert!(inverse_kinematics_2link(&arm, [5.0, 0.0]).unwrap().is_empty());

        let three = ArmModel::planar(&[1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(
            inverse_kinematics_2link(&three, [1.0, 0.0]),
            Err(Error::WrongDof { .. })
        ));
    }

    #[test]
    fn ik_respects_limits() {
        let arm = ArmModel::new(vec![2.0, 2.0], vec![0.0; 2], vec![-PI, 0.0], vec![PI, PI]).unwrap();
        let sols = inverse_kinematics_2link(&arm, [2.0, 2.0]).unwrap();
        assert_eq!(sols.len(), 1);
        assert!(sols[0][1] >= 0.0);
    }

    #[test]
    fn invalid_arms_rejected() {
        assert!(ArmModel::planar(&[]).is_err());
        assert!(ArmModel::planar(&[1.0, -1.0]).is_err());
        assert!(ArmModel::new(vec![1.0], vec![-0.1], vec![-1.0], vec![1.0]).is_err());
        assert!(ArmModel::new(vec![1.0], vec![0.0], vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn fold_back_is_self_collision() {
        let arm = arm22();
        assert!(self_collision(&arm, &[0.3, PI - 0.005], 0.02).is_some());
        assert!(self_collision(&arm, &[0.3, -PI + 0.005], 0.02).is_some());
        assert!(self_collision(&arm, &[0.3, PI - 0.05], 0.02).is_none());
        assert!(self_collision(&arm, &[0.0, 0.0], 0.02).is_none());
        let one = ArmModel::planar(&[1.0]).unwrap();
        assert!(self_collision(&one, &[0.0], 0.02).is_none());
        let c = self_collision(&arm, &[0.0, PI - 0.001], 0.02).unwrap();
        assert_eq!((c.link_a, c.link_b), (1, 2));
    }

    #[test]
    fn non_adjacent_crossing_detected() {
        let arm = ArmModel::planar(&[2.0, 1.0, 2.0]).unwrap();
        // Link 3 folds back across link 1.
        assert!(self_collision(&arm, &[0.0, 2.5, 2.0], 0.02).is_some());
        assert!(self_collision(&arm, &[0.0, 0.2, 0.2], 0.02).is_none());
    }
}
