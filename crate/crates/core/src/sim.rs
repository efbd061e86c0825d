//! Planar world with disk obstacles, a noisy boundary sensor, closed-loop
//! episodes, the Fréchet tracking metric and a random scenario generator.
//!
//! Collision verdicts only use the true geometry (arm against the true disks
//! and the exact self-collision test); the learned models are never
//! consulted for them.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::arm::{self, ArmModel, JointConfig, WorkPoint};
use crate::barrier::{CdfModel, PointCloud, SceneBarrier};
use crate::control::{self, Clock, ControlMode, ControlParams, GovernorState};
use crate::math::{self, Vec2, PI};
use crate::planner::{self, Bubble, BubbleGraph, BubbleParams, PlanStats, RrtParams};
use crate::rng::{self, SimRng};
use crate::trajopt::{self, BezierSegment, PiecewiseBezier, TrajoptParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Vec2,
    pub radius: f64,
    pub velocity: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorParams {
    /// Total number of boundary points per scan, split evenly over obstacles.
    pub n_points: usize,
    pub noise_sigma: f64,
    pub velocity_noise_sigma: f64,
    /// Speed reported for moving obstacles (along the true direction);
    /// `None` reports the true velocity.
    pub nominal_speed: Option<f64>,
}

impl Default for SensorParams {
    fn default() -> Self {
        Self { n_points: 100, noise_sigma: 0.01, velocity_noise_sigma: 0.0, nominal_speed: Some(0.5) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub arm: ArmModel,
    pub obstacles: Vec<Obstacle>,
    pub q0: JointConfig,
    /// Workspace goal for the end effector.
    pub goal: Vec2,
    /// Goal configurations reaching `goal`.
    pub goal_configs: Vec<JointConfig>,
    pub sensor: SensorParams,
    pub duration: f64,
    pub seed: u64,
}

impl Scenario {
    /// Same scene with every obstacle at rest.
    pub fn frozen(&self) -> Self {
        let mut s = self.clone();
        for o in &mut s.obstacles {
            o.velocity = [0.0, 0.0];
        }
        s
    }

    pub fn is_dynamic(&self) -> bool {
        self.obstacles.iter().any(|o| o.velocity != [0.0, 0.0])
    }

    /// Smallest clearance between the arm at `q` and any obstacle.
    pub fn clearance(&self, q: &[f64]) -> f64 {
        min_clearance(&self.arm, &self.obstacles, q)
    }
}

pub fn min_clearance(arm: &ArmModel, obstacles: &[Obstacle], q: &[f64]) -> f64 {
    obstacles
        .iter()
        .map(|o| arm::disk_clearance(arm, q, o.center, o.radius))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldParams {
    /// Obstacles bounce inside `[-half_width, half_width]^2`.
    pub half_width: f64,
    /// Obstacle disks bounce off a circle of this radius around the base.
    pub base_keepout: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        Self { half_width: 5.0, base_keepout: 0.5 }
    }
}

/// Constant-velocity motion with reflection at the world box and at the base
/// keep-out circle.
pub fn advance_obstacles(obstacles: &mut [Obstacle], dt: f64, world: &WorldParams) {
    for o in obstacles {
        for k in 0..2 {
            o.center[k] += dt * o.velocity[k];
            let lim = world.half_width - o.radius;
            if o.center[k] > lim {
                o.center[k] = 2.0 * lim - o.center[k];
                o.velocity[k] = -o.velocity[k].abs();
            } else if o.center[k] < -lim {
                o.center[k] = -2.0 * lim - o.center[k];
                o.velocity[k] = o.velocity[k].abs();
            }
        }
        let d = math::norm(&o.center);
        let min_d = world.base_keepout + o.radius;
        if d < min_d && d > 0.0 {
            let n = [o.center[0] / d, o.center[1] / d];
            let vn = o.velocity[0] * n[0] + o.velocity[1] * n[1];
            if vn < 0.0 {
                o.velocity = [o.velocity[0] - 2.0 * vn * n[0], o.velocity[1] - 2.0 * vn * n[1]];
            }
            o.center = [n[0] * min_d, n[1] * min_d];
        }
    }
}

/// Noisy boundary scan: stratified angles on every circle, Gaussian position
/// noise, and velocities reported at the nominal speed along the true
/// direction. Deterministic in `(seed, step)`.
pub fn sense(obstacles: &[Obstacle], sensor: &SensorParams, seed: u64, step: u64, t: f64) -> PointCloud {
    let mut r = rng::seeded(rng::derive_seed(seed, step));
    let k = obstacles.len();
    let mut points = Vec::with_capacity(sensor.n_points);
    if k == 0 {
        return PointCloud { points, timestamp: t };
    }
    for (i, o) in obstacles.iter().enumerate() {
        let n = sensor.n_points / k + usize::from(i < sensor.n_points % k);
        let speed = math::norm(&o.velocity);
        let v = match sensor.nominal_speed {
            Some(s) if speed > 0.0 => [o.velocity[0] / speed * s, o.velocity[1] / speed * s],
            _ => o.velocity,
        };
        for j in 0..n {
            let a = 2.0 * PI * (j as f64 + rng::uniform(&mut r, 0.0, 1.0)) / n as f64;
            let position = [
                o.center[0] + o.radius * math::cos(a) + rng::normal(&mut r, 0.0, sensor.noise_sigma),
                o.center[1] + o.radius * math::sin(a) + rng::normal(&mut r, 0.0, sensor.noise_sigma),
            ];
            let velocity = [
                v[0] + rng::normal(&mut r, 0.0, sensor.velocity_noise_sigma),
                v[1] + rng::normal(&mut r, 0.0, sensor.velocity_noise_sigma),
            ];
            points.push(WorkPoint { position, velocity });
        }
    }
    PointCloud { points, timestamp: t }
}

/// Resamples a polyline to `n` points evenly spaced in arc length.
pub fn resample_polyline(path: &[Vec<f64>], n: usize) -> Vec<Vec<f64>> {
    if path.len() <= 1 || n <= 1 {
        return vec![path[0].clone(); n.max(1)];
    }
    let mut cum = vec![0.0];
    for w in path.windows(2) {
        cum.push(cum[cum.len() - 1] + math::dist(&w[0], &w[1]));
    }
    let total = cum[cum.len() - 1];
    if total == 0.0 {
        return vec![path[0].clone(); n];
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 0..n {
        let target = total * i as f64 / (n - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < target {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { ((target - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        out.push(path[seg].iter().zip(&path[seg + 1]).map(|(a, b)| a + t * (b - a)).collect());
    }
    out
}

/// Discrete Fréchet distance between two point sequences.
pub fn discrete_frechet(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let mut prev = vec![0.0f64; m];
    let mut cur = vec![0.0f64; m];
    for i in 0..n {
        for j in 0..m {
            let d = math::dist(&a[i], &b[j]);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]).max(d),
            };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}

/// Fréchet distance of the two polylines, each resampled to 200 points.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("polyline"));
    }
    Ok(discrete_frechet(&resample_polyline(a, 200), &resample_polyline(b, 200)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    Bubble,
    Rrt,
}

impl PlanMode {
    pub fn name(self) -> &'static str {
        match self {
            PlanMode::Bubble => "bubble",
            PlanMode::Rrt => "rrt",
        }
    }
}

impl core::str::FromStr for PlanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bubble" => Ok(PlanMode::Bubble),
            "rrt" => Ok(PlanMode::Rrt),
            _ => Err(Error::InvalidParameter(alloc::format!("unknown planner {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub control: ControlParams,
    pub bubble: BubbleParams,
    pub rrt: RrtParams,
    pub trajopt: TrajoptParams,
    pub world: WorldParams,
    pub success_radius: f64,
    /// Seconds without progress (governor saturated or frozen, input ~0)
    /// before an episode counts as stalled.
    pub stall_time: f64,
    pub self_collision_tol: f64,
    /// Keep the per-step log in the result.
    pub keep_log: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            control: ControlParams::default(),
            bubble: BubbleParams::default(),
            rrt: RrtParams::default(),
            trajopt: TrajoptParams::default(),
            world: WorldParams::default(),
            success_radius: 0.05,
            stall_time: 3.0,
            self_collision_tol: 1e-3,
            keep_log: true,
        }
    }
}

/// Planner output ready for execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub mode: PlanMode,
    pub stats: PlanStats,
    pub goal_index: usize,
    pub trajectory: PiecewiseBezier,
    /// Bubble graph (bubble planner only).
    pub graph: Option<BubbleGraph>,
    /// Selected bubble ids or RRT waypoints.
    pub selected: Vec<usize>,
    pub waypoints: Vec<JointConfig>,
}

/// Rest-to-rest quintic segments along a polyline, each owned by the
/// smallest ball around its edge.
pub fn polyline_trajectory(waypoints: &[JointConfig], degree: usize) -> Result<PiecewiseBezier> {
    if waypoints.is_empty() {
        return Err(Error::Empty("waypoints"));
    }
    let pairs: Vec<(&JointConfig, &JointConfig)> = if waypoints.len() == 1 {
        vec![(&waypoints[0], &waypoints[0])]
    } else {
        waypoints.windows(2).map(|w| (&w[0], &w[1])).collect()
    };
    let mut segments = Vec::new();
    let mut bubbles = Vec::new();
    for (a, b) in pairs {
        let control_points = (0..=degree)
            .map(|l| {
                let src = if l <= 2 { a } else if l + 2 >= degree { b } else { a };
                src.clone()
            })
            .collect();
        segments.push(BezierSegment { control_points });
        let mid: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| 0.5 * (x + y)).collect();
        bubbles.push(Bubble { center: JointConfig::new(mid), radius: 0.5 * math::dist(a, b) });
    }
    Ok(PiecewiseBezier { degree, segments, bubbles })
}

/// Resolves the goal configurations of a scenario (two-link IK when none are
/// given).
pub fn goal_configs(scenario: &Scenario) -> Result<Vec<JointConfig>> {
    if !scenario.goal_configs.is_empty() {
        return Ok(scenario.goal_configs.clone());
    }
    arm::inverse_kinematics_2link(&scenario.arm, scenario.goal)
}

/// Plans on the sensed snapshot at `t = 0`.
pub fn plan_scenario(scenario: &Scenario, model: &dyn CdfModel, mode: PlanMode, params: &SimParams) -> Result<Plan> {
    let cloud = sense(&scenario.obstacles, &scenario.sensor, scenario.seed, 0, 0.0);
    let goals = goal_configs(scenario)?;
    if goals.is_empty() {
        return Err(Error::Empty("goal configurations"));
    }
    let barrier = SceneBarrier { model, cloud: &cloud };
    let plan_seed = rng::derive_seed(scenario.seed, 0x504c_414e);
    match mode {
        PlanMode::Bubble => {
            let bp = BubbleParams { seed: plan_seed, ..params.bubble };
            let (graph, mut stats) = planner::build_bubble_graph(&barrier, &scenario.arm, &scenario.q0, &goals, &bp)?;
            let sel = planner::select_path(&graph)
                .ok_or(Error::Trajectory("no goal bubble connected to the start".into()))?;
            let bubbles: Vec<Bubble> = sel.bubbles.iter().map(|&i| graph.vertices[i].clone()).collect();
            let qg = &goals[sel.goal_index];
            let (trajectory, _) = trajopt::optimize_trajectory(&scenario.arm, &bubbles, &scenario.q0, qg, &params.trajopt)?;
            stats.path_length = planner::center_path_length(&graph, &sel.bubbles);
            Ok(Plan {
                mode,
                stats,
                goal_index: sel.goal_index,
                trajectory,
                graph: Some(graph),
                selected: sel.bubbles,
                waypoints: Vec::new(),
            })
        }
        PlanMode::Rrt => {
            let rp = RrtParams { seed: plan_seed, ..params.rrt };
            let (path, stats) = planner::cdf_rrt(&barrier, &scenario.arm, &scenario.q0, &goals, &rp)?;
            let path = path.ok_or(Error::Trajectory("RRT did not reach a goal".into()))?;
            let trajectory = polyline_trajectory(&path.waypoints, params.trajopt.degree)?;
            Ok(Plan {
                mode,
                stats,
                goal_index: path.goal_index,
                trajectory,
                graph: None,
                selected: Vec::new(),
                waypoints: path.waypoints,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCause {
    Planner,
    Collision,
    Timeout,
    Stall,
}

impl FailureCause {
    pub fn name(self) -> &'static str {
        match self {
            FailureCause::Planner => "planner",
            FailureCause::Collision => "collision",
            FailureCause::Timeout => "timeout",
            FailureCause::Stall => "stall",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub t: f64,
    pub q: Vec<f64>,
    pub u: Vec<f64>,
    pub h: f64,
    pub cbc: f64,
    pub s: f64,
    pub clearance: f64,
    pub filter_active: bool,
    pub infeasible: bool,
    pub solve_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub success: bool,
    pub failure_cause: Option<FailureCause>,
    /// Fréchet distance between planned and executed paths (radians).
    pub frechet_error: f64,
    /// Smallest true clearance over the run (metres, negative on contact).
    pub min_clearance: f64,
    pub self_collision: bool,
    pub final_goal_error: f64,
    pub duration: f64,
    pub steps: usize,
    pub infeasible_steps: usize,
    pub executed: Vec<Vec<f64>>,
    /// Obstacle centers per step (for plotting).
    pub obstacle_traces: Vec<Vec<Vec2>>,
    pub log: Vec<StepLog>,
}

impl SimResult {
    fn planner_failure() -> Self {
        Self {
            success: false,
            failure_cause: Some(FailureCause::Planner),
            frechet_error: f64::NAN,
            min_clearance: f64::NAN,
            self_collision: false,
            final_goal_error: f64::NAN,
            duration: 0.0,
            steps: 0,
            infeasible_steps: 0,
            executed: Vec::new(),
            obstacle_traces: Vec::new(),
            log: Vec::new(),
        }
    }
}

/// Executes a plan closed loop with moving obstacles.
pub fn execute(
    scenario: &Scenario,
    plan: &Plan,
    model: &dyn CdfModel,
    mode: ControlMode,
    params: &SimParams,
    clock: &dyn Clock,
) -> Result<SimResult> {
    let arm = &scenario.arm;
    let m = arm.dof();
    let cp = &params.control;
    cp.validate()?;
    let dt = cp.dt();
    let goals = goal_configs(scenario)?;
    let qg = goals[plan.goal_index].to_vec();
    let traj = &plan.trajectory;
    let mut q = scenario.q0.to_vec();
    let mut u_prev = vec![0.0; m];
    let mut gov = GovernorState::start(traj);
    let mut obstacles = scenario.obstacles.clone();
    let n_steps = libm::ceil(scenario.duration / dt) as usize;
    let stall_steps = libm::ceil(params.stall_time / dt) as usize;
    let mut executed = vec![q.clone()];
    let mut traces = vec![obstacles.iter().map(|o| o.center).collect::<Vec<_>>()];
    let mut log = Vec::new();
    let mut min_clear = min_clearance(arm, &obstacles, &q);
    let mut cause = None;
    let mut self_hit = false;
    let mut still = 0;
    let mut infeasible_steps = 0;
    let mut steps = 0;
    let ctrl_seed = rng::derive_seed(scenario.seed, 0x4354_524c);
    for k in 0..n_steps {
        let t = k as f64 * dt;
        if math::dist(&q, &qg) <= params.success_radius {
            break;
        }
        let cloud = sense(&obstacles, &scenario.sensor, scenario.seed, k as u64 + 1, t);
        let (u, gnext, diag) = control::control_step(
            &q,
            &u_prev,
            traj,
            &cloud,
            model,
            &gov,
            cp,
            mode,
            rng::derive_seed(ctrl_seed, k as u64),
            clock,
        )?;
        let ds = gnext.s - gov.s;
        gov = gnext;
        for (qi, ui) in q.iter_mut().zip(&u) {
            *qi += dt * ui;
        }
        arm.clamp_to_limits(&mut q);
        advance_obstacles(&mut obstacles, dt, &params.world);
        steps = k + 1;
        let clear = min_clearance(arm, &obstacles, &q);
        min_clear = min_clear.min(clear);
        infeasible_steps += usize::from(diag.infeasible);
        if params.keep_log {
            log.push(StepLog {
                t: t + dt,
                q: q.clone(),
                u: u.clone(),
                h: diag.h,
                cbc: diag.cbc,
                s: diag.s,
                clearance: clear,
                filter_active: diag.filter_active,
                infeasible: diag.infeasible,
                solve_ms: diag.solve_ms,
            });
        }
        executed.push(q.clone());
        traces.push(obstacles.iter().map(|o| o.center).collect());
        u_prev = u;
        if clear <= 0.0 {
            cause = Some(FailureCause::Collision);
            break;
        }
        if arm::self_collision(arm, &q, params.self_collision_tol).is_some() {
            self_hit = true;
            cause = Some(FailureCause::Collision);
            break;
        }
        if ds < 1e-9 && math::norm(&u_prev) < 1e-4 {
            still += 1;
            if still >= stall_steps {
                cause = Some(FailureCause::Stall);
                break;
            }
        } else {
            still = 0;
        }
    }
    let goal_err = math::dist(&q, &qg);
    if cause.is_none() && goal_err > params.success_radius {
        cause = Some(FailureCause::Timeout);
    }
    let planned = traj.sample(50);
    let frechet = frechet_distance(&planned, &executed)?;
    Ok(SimResult {
        success: cause.is_none(),
        failure_cause: cause,
        frechet_error: frechet,
        min_clearance: min_clear,
        self_collision: self_hit,
        final_goal_error: goal_err,
        duration: steps as f64 * dt,
        steps,
        infeasible_steps,
        executed,
        obstacle_traces: traces,
        log,
    })
}

/// Plans on the initial snapshot and executes; planner failures become a
/// failed result rather than an error.
pub fn run_episode(
    scenario: &Scenario,
    plan_mode: PlanMode,
    control_mode: ControlMode,
    model: &dyn CdfModel,
    params: &SimParams,
    clock: &dyn Clock,
) -> Result<(Option<Plan>, SimResult)> {
    match plan_scenario(scenario, model, plan_mode, params) {
        Ok(plan) => {
            let res = execute(scenario, &plan, model, control_mode, params, clock)?;
            Ok((Some(plan), res))
        }
        Err(Error::StartInfeasible { .. } | Error::Trajectory(_) | Error::Empty(_)) => {
            Ok((None, SimResult::planner_failure()))
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    /// Sample the start configuration instead of starting at `q = 0`.
    pub random_start: bool,
    pub n_obstacles: usize,
    pub radius_lo: f64,
    pub radius_hi: f64,
    /// Obstacle centers lie within this distance of the base.
    pub max_center_dist: f64,
    /// Minimum workspace distance between start and goal end-effector.
    pub min_goal_distance: f64,
    /// Goal targets stay this far inside the reach.
    pub goal_reach_margin: f64,
    /// True clearance required at the start and at a goal configuration.
    pub endpoint_clearance: f64,
    /// Clearance defining free cells for the solvability flood fill.
    pub corridor_clearance: f64,
    pub flood_fill_res: usize,
    pub speed_mean: f64,
    pub speed_std: f64,
    pub duration: f64,
    pub max_tries: usize,
    pub world: WorldParams,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            random_start: false,
            n_obstacles: 4,
            radius_lo: 0.2,
            radius_hi: 0.45,
            max_center_dist: 4.3,
            min_goal_distance: 4.0,
            goal_reach_margin: 0.3,
            endpoint_clearance: 0.5,
            corridor_clearance: 0.25,
            flood_fill_res: 100,
            speed_mean: 0.5,
            speed_std: 0.1,
            duration: 25.0,
            max_tries: 10_000,
            world: WorldParams { half_width: 5.0, base_keepout: 0.5 },
        }
    }
}

/// Cell index of `q` on a `res x res` grid over the joint box.
fn cell_of(arm: &ArmModel, q: &[f64], res: usize) -> (usize, usize) {
    let f = |i: usize| {
        let t = (q[i] - arm.joint_limits_lo[i]) / (arm.joint_limits_hi[i] - arm.joint_limits_lo[i]);
        ((t * res as f64) as usize).min(res - 1)
    };
    (f(0), f(1))
}

/// Whether some goal configuration is reachable from `q0` through grid
/// cells whose center clearance is at least `clearance` (4-connected flood
/// fill over the joint box of a two-link arm).
pub fn solvable(arm: &ArmModel, obstacles: &[Obstacle], q0: &[f64], goals: &[JointConfig], res: usize, clearance: f64) -> bool {
    let center = |i: usize, j: usize| {
        let lo = &arm.joint_limits_lo;
        let hi = &arm.joint_limits_hi;
        [
            lo[0] + (i as f64 + 0.5) / res as f64 * (hi[0] - lo[0]),
            lo[1] + (j as f64 + 0.5) / res as f64 * (hi[1] - lo[1]),
        ]
    };
    let free = |i: usize, j: usize| min_clearance(arm, obstacles, &center(i, j)) >= clearance;
    let start = cell_of(arm, q0, res);
    let targets: Vec<(usize, usize)> = goals.iter().map(|g| cell_of(arm, g, res)).collect();
    let mut seen = vec![false; res * res];
    let mut queue = VecDeque::new();
    seen[start.0 * res + start.1] = true;
    queue.push_back(start);
    while let Some((i, j)) = queue.pop_front() {
        if targets.contains(&(i, j)) {
            return true;
        }
        let mut nbrs = Vec::with_capacity(4);
        if i > 0 {
            nbrs.push((i - 1, j));
        }
        if i + 1 < res {
            nbrs.push((i + 1, j));
        }
        if j > 0 {
            nbrs.push((i, j - 1));
        }
        if j + 1 < res {
            nbrs.push((i, j + 1));
        }
        for (a, b) in nbrs {
            if !seen[a * res + b] && (targets.contains(&(a, b)) || free(a, b)) {
                seen[a * res + b] = true;
                queue.push_back((a, b));
            }
        }
    }
    false
}

fn random_point_in_disk(r: &mut SimRng, lo: f64, hi: f64) -> Vec2 {
    let rad = math::sqrt(rng::uniform(r, lo * lo, hi * hi));
    let a = rng::uniform(r, -PI, PI);
    [rad * math::cos(a), rad * math::sin(a)]
}

/// Random two-link scenario: start configuration (stretched along +x unless
/// `random_start`), a goal target at least `min_goal_distance` from the start
/// end effector, and disjoint disk obstacles that leave the start and one
/// goal configuration clear and a free corridor between them. Obstacle velocities are sampled (use
/// [`Scenario::frozen`] for the static variant).
pub fn generate_scenario(arm: &ArmModel, sensor: &SensorParams, gen: &GeneratorParams, seed: u64) -> Result<Scenario> {
    if arm.dof() != 2 {
        return Err(Error::WrongDof { expected: 2, got: arm.dof() });
    }
    let mut r = rng::seeded(seed);
    let reach: f64 = arm.link_lengths.iter().sum();
    for _ in 0..gen.max_tries {
        let q0 = if gen.random_start { arm.sample_config(&mut r) } else { JointConfig::new(vec![0.0; 2]) };
        let ee0 = arm::forward_kinematics(arm, &q0)?[2];
        let goal = random_point_in_disk(&mut r, 0.5, reach - gen.goal_reach_margin);
        if math::dist2(goal, ee0) < gen.min_goal_distance {
            continue;
        }
        let goals = arm::inverse_kinematics_2link(arm, goal)?;
        if goals.is_empty() {
            continue;
        }
        let mut obstacles: Vec<Obstacle> = Vec::with_capacity(gen.n_obstacles);
        let mut ok = true;
        for _ in 0..gen.n_obstacles {
            let mut placed = false;
            for _ in 0..200 {
                let radius = rng::uniform(&mut r, gen.radius_lo, gen.radius_hi);
                let center = random_point_in_disk(&mut r, gen.world.base_keepout + radius + 0.3, gen.max_center_dist);
                let cand = Obstacle { center, radius, velocity: [0.0, 0.0] };
                let disjoint = obstacles.iter().all(|o| math::dist2(o.center, center) > o.radius + radius + 0.1);
                if disjoint && arm::disk_clearance(arm, &q0, center, radius) >= gen.endpoint_clearance {
                    obstacles.push(cand);
                    placed = true;
                    break;
                }
            }
            if !placed {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let clear_goals: Vec<JointConfig> =
            goals.into_iter().filter(|g| min_clearance(arm, &obstacles, g) >= gen.endpoint_clearance).collect();
        if clear_goals.is_empty() {
            continue;
        }
        if !solvable(arm, &obstacles, &q0, &clear_goals, gen.flood_fill_res, gen.corridor_clearance) {
            continue;
        }
        for o in &mut obstacles {
            let speed = rng::normal(&mut r, gen.speed_mean, gen.speed_std).max(0.0);
            let a = rng::uniform(&mut r, -PI, PI);
            o.velocity = [speed * math::cos(a), speed * math::sin(a)];
        }
        return Ok(Scenario {
            arm: arm.clone(),
            obstacles,
            q0,
            goal,
            goal_configs: clear_goals,
            sensor: *sensor,
            duration: gen.duration,
            seed,
        });
    }
    Err(Error::InvalidParameter("scenario generator exhausted its tries".into()))
}
