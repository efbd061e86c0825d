//! Rapidly-exploring bubble graph, path selection over goal bubbles, and the
//! CDF-RRT baseline.
//!
//! Every barrier query made by a planner counts as one collision check.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::arm::{ArmModel, JointConfig};
use crate::barrier::Barrier;
use crate::math;
use crate::rng::{self, SimRng};
use crate::{Error, Result};

/// Configuration-space ball certified safe by the barrier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bubble {
    pub center: JointConfig,
    pub radius: f64,
}

impl Bubble {
    pub fn contains(&self, q: &[f64]) -> bool {
        math::dist(&self.center, q) <= self.radius
    }

    pub fn overlaps(&self, other: &Bubble) -> bool {
        math::dist(&self.center, &other.center) <= self.radius + other.radius
    }
}

/// Single-sided Hausdorff cost of moving from bubble `a` into bubble `b`: the
/// farthest any point of `a` lies from `b`.
pub fn edge_cost(a: &Bubble, b: &Bubble) -> f64 {
    (math::dist(&a.center, &b.center) + a.radius - b.radius).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BubbleGraph {
    pub vertices: Vec<Bubble>,
    /// Undirected overlap edges `(i, j)` with `i < j`.
    pub edges: Vec<(usize, usize)>,
    pub adjacency: Vec<Vec<usize>>,
    pub start: usize,
    /// Vertex of each goal configuration (`None` when the goal was skipped).
    pub goals: Vec<Option<usize>>,
}

impl BubbleGraph {
    fn push(&mut self, b: Bubble) -> usize {
        let id = self.vertices.len();
        for (j, other) in self.vertices.iter().enumerate() {
            if b.overlaps(other) {
                self.edges.push((j, id));
                self.adjacency[j].push(id);
            }
        }
        let adj = self.edges.iter().filter(|e| e.1 == id).map(|e| e.0).collect();
        self.adjacency.push(adj);
        self.vertices.push(b);
        id
    }

    /// Vertices connected to the start vertex.
    pub fn start_component(&self) -> Vec<bool> {
        let mut seen = vec![false; self.vertices.len()];
        let mut stack = vec![self.start];
        seen[self.start] = true;
        while let Some(v) = stack.pop() {
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen
    }
}

/// Planner metrics. `planning_time_s` is filled in by callers that own a clock.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlanStats {
    pub collision_checks: usize,
    pub bubbles_created: usize,
    pub bubbles_attempted: usize,
    pub goal_seeding_checks: usize,
    pub planning_time_s: f64,
    pub path_length: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BubbleParams {
    pub eta: f64,
    pub goal_bias: f64,
    /// Maximum number of samples drawn.
    pub n_max: usize,
    pub r_min: f64,
    /// Keep growing after the first goal connects.
    pub all_goals: bool,
    pub seed: u64,
}

impl Default for BubbleParams {
    fn default() -> Self {
        Self { eta: 0.05, goal_bias: 0.1, n_max: 2000, r_min: 0.03, all_goals: false, seed: 0 }
    }
}

/// Union-find over vertex ids.
struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn sample_target(arm: &ArmModel, goals: &[&JointConfig], goal_bias: f64, r: &mut SimRng) -> Vec<f64> {
    if !goals.is_empty() && rng::bernoulli(r, goal_bias) {
        goals[rng::index(r, goals.len())].to_vec()
    } else {
        arm.sample_config(r).angles
    }
}

/// Grows a bubble graph from `q0` until a goal bubble joins the start
/// component (or `n_max` samples when `all_goals` is set).
pub fn build_bubble_graph(
    barrier: &dyn Barrier,
    arm: &ArmModel,
    q0: &[f64],
    goals: &[JointConfig],
    params: &BubbleParams,
) -> Result<(BubbleGraph, PlanStats)> {
    arm.check_config(q0)?;
    let mut stats = PlanStats::default();
    let h0 = barrier.value(q0)?;
    stats.collision_checks += 1;
    stats.bubbles_attempted += 1;
    let threshold = params.eta + params.r_min;
    if h0 <= threshold {
        return Err(Error::StartInfeasible { barrier: h0, threshold });
    }
    let mut g = BubbleGraph {
        vertices: Vec::new(),
        edges: Vec::new(),
        adjacency: Vec::new(),
        start: 0,
        goals: Vec::with_capacity(goals.len()),
    };
    g.push(Bubble { center: JointConfig::new(q0.to_vec()), radius: h0 - params.eta });
    let mut active_goals = Vec::new();
    for goal in goals {
        arm.check_config(goal)?;
        let h = barrier.value(goal)?;
        stats.collision_checks += 1;
        stats.goal_seeding_checks += 1;
        if h > threshold {
            let id = g.push(Bubble { center: goal.clone(), radius: h - params.eta });
            g.goals.push(Some(id));
            active_goals.push(goal);
        } else {
            g.goals.push(None);
        }
    }
    let mut dsu = Dsu((0..g.vertices.len()).collect());
    for &(a, b) in &g.edges {
        dsu.union(a, b);
    }
    let goal_ids: Vec<usize> = g.goals.iter().flatten().copied().collect();
    let done = |dsu: &mut Dsu| {
        let root = dsu.find(0);
        let connected = goal_ids.iter().filter(|&&id| dsu.find(id) == root).count();
        if params.all_goals {
            connected == goal_ids.len() && !goal_ids.is_empty()
        } else {
            connected > 0
        }
    };
    let mut r = rng::seeded(params.seed);
    let mut finished = done(&mut dsu);
    let mut iter = 0;
    while !finished && iter < params.n_max && !goal_ids.is_empty() {
        iter += 1;
        let target = sample_target(arm, &active_goals, params.goal_bias, &mut r);
        let mut near = 0;
        let mut best = f64::INFINITY;
        let mut best_d = 0.0;
        for (i, b) in g.vertices.iter().enumerate() {
            let d = math::dist(&b.center, &target);
            let gap = (d - b.radius).max(0.0);
            if gap < best {
                best = gap;
                best_d = d;
                near = i;
            }
        }
        if best <= 0.0 {
            continue;
        }
        let nb = &g.vertices[near];
        let scale = nb.radius / best_d;
        let q_new: Vec<f64> = nb.center.iter().zip(&target).map(|(c, t)| c + scale * (t - c)).collect();
        let h = barrier.value(&q_new)?;
        stats.collision_checks += 1;
        stats.bubbles_attempted += 1;
        let r_new = h - params.eta;
        if r_new > params.r_min {
            let id = g.push(Bubble { center: JointConfig::new(q_new), radius: r_new });
            dsu.0.push(id);
            for &j in &g.adjacency[id] {
                dsu.union(id, j);
            }
            finished = done(&mut dsu);
        }
    }
    let root = dsu.find(0);
    stats.success = goal_ids.iter().any(|&id| dsu.find(id) == root);
    stats.bubbles_created = g.vertices.len();
    Ok((g, stats))
}

/// Selected bubble sequence from the start to the cheapest goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSelection {
    pub bubbles: Vec<usize>,
    pub goal_index: usize,
    pub cost: f64,
}

#[derive(PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over directed bubble costs from the start; picks the goal with
/// the lowest total cost (ties: lowest goal index). `None` if no goal is
/// connected.
pub fn select_path(graph: &BubbleGraph) -> Option<PathSelection> {
    let n = graph.vertices.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[graph.start] = 0.0;
    heap.push(HeapItem(0.0, graph.start));
    while let Some(HeapItem(d, v)) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        for &w in &graph.adjacency[v] {
            let nd = d + edge_cost(&graph.vertices[v], &graph.vertices[w]);
            if nd < dist[w] {
                dist[w] = nd;
                prev[w] = v;
                heap.push(HeapItem(nd, w));
            }
        }
    }
    let (goal_index, goal_v) = graph
        .goals
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|v| (k, v)))
        .filter(|&(_, v)| dist[v].is_finite())
        .min_by(|a, b| dist[a.1].total_cmp(&dist[b.1]).then(a.0.cmp(&b.0)))?;
    let mut path = vec![goal_v];
    let mut v = goal_v;
    while v != graph.start {
        v = prev[v];
        path.push(v);
    }
    path.reverse();
    Some(PathSelection { bubbles: path, goal_index, cost: dist[goal_v] })
}

/// Length of the polyline through the centers of `bubbles`.
pub fn center_path_length(graph: &BubbleGraph, bubbles: &[usize]) -> f64 {
    bubbles
        .windows(2)
        .map(|w| math::dist(&graph.vertices[w[0]].center, &graph.vertices[w[1]].center))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RrtParams {
    pub step: f64,
    pub goal_bias: f64,
    pub eta: f64,
    /// Maximum spacing of barrier checks along an edge.
    pub check_resolution: f64,
    pub max_nodes: usize,
    /// Sample budget (guards against a tree that stops growing).
    pub max_samples: usize,
    pub seed: u64,
}

impl Default for RrtParams {
    fn default() -> Self {
        Self { step: 0.1, goal_bias: 0.1, eta: 0.05, check_resolution: 0.089, max_nodes: 5000, max_samples: 50_000, seed: 0 }
    }
}

/// RRT path as a waypoint list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrtPath {
    pub waypoints: Vec<JointConfig>,
    pub goal_index: usize,
}

/// Checks the edge `a -> b` at points spaced at most `res` apart, excluding
/// `a`. Stops at the first unsafe sample.
fn edge_is_safe(barrier: &dyn Barrier, a: &[f64], b: &[f64], res: f64, eta: f64, checks: &mut usize) -> Result<bool> {
    let len = math::dist(a, b);
    let n = libm::ceil(len / res).max(1.0) as usize;
    let mut q = a.to_vec();
    for i in 1..=n {
        let t = i as f64 / n as f64;
        for (j, v) in q.iter_mut().enumerate() {
            *v = a[j] + t * (b[j] - a[j]);
        }
        *checks += 1;
        if barrier.value(&q)? <= eta {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Standard RRT with edges validated by dense barrier checks.
pub fn cdf_rrt(
    barrier: &dyn Barrier,
    arm: &ArmModel,
    q0: &[f64],
    goals: &[JointConfig],
    params: &RrtParams,
) -> Result<(Option<RrtPath>, PlanStats)> {
    arm.check_config(q0)?;
    let mut stats = PlanStats::default();
    let h0 = barrier.value(q0)?;
    stats.collision_checks += 1;
    if h0 <= params.eta {
        return Err(Error::StartInfeasible { barrier: h0, threshold: params.eta });
    }
    let goal_refs: Vec<&JointConfig> = goals.iter().collect();
    let mut nodes: Vec<Vec<f64>> = vec![q0.to_vec()];
    let mut parent: Vec<usize> = vec![usize::MAX];
    let mut r = rng::seeded(params.seed);
    let mut reached: Option<(usize, usize)> = None;
    let mut samples = 0;
    while nodes.len() < params.max_nodes && samples < params.max_samples && !goals.is_empty() {
        samples += 1;
        let target = sample_target(arm, &goal_refs, params.goal_bias, &mut r);
        let mut near = 0;
        let mut best = f64::INFINITY;
        for (i, n) in nodes.iter().enumerate() {
            let d = math::dist_sq(n, &target);
            if d < best {
                best = d;
                near = i;
            }
        }
        let d = math::sqrt(best);
        if d < 1e-12 {
            continue;
        }
        let q_new: Vec<f64> = if d <= params.step {
            target
        } else {
            nodes[near].iter().zip(&target).map(|(a, b)| a + params.step * (b - a) / d).collect()
        };
        let from = nodes[near].clone();
        if !edge_is_safe(barrier, &from, &q_new, params.check_resolution, params.eta, &mut stats.collision_checks)? {
            continue;
        }
        nodes.push(q_new);
        parent.push(near);
        let id = nodes.len() - 1;
        for (k, goal) in goals.iter().enumerate() {
            let dg = math::dist(&nodes[id], goal);
            if dg > params.step {
                continue;
            }
            let from = nodes[id].clone();
            if dg < 1e-12
                || edge_is_safe(barrier, &from, goal, params.check_resolution, params.eta, &mut stats.collision_checks)?
            {
                if dg >= 1e-12 {
                    nodes.push(goal.to_vec());
                    parent.push(id);
                }
                reached = Some((nodes.len() - 1, k));
                break;
            }
        }
        if reached.is_some() {
            break;
        }
    }
    stats.bubbles_created = 0;
    let Some((end, goal_index)) = reached else {
        return Ok((None, stats));
    };
    let mut idx = vec![end];
    while parent[*idx.last().unwrap()] != usize::MAX {
        idx.push(parent[*idx.last().unwrap()]);
    }
    idx.reverse();
    let waypoints: Vec<JointConfig> = idx.iter().map(|&i| JointConfig::new(nodes[i].clone())).collect();
    stats.path_length = waypoints.windows(2).map(|w| math::dist(&w[0], &w[1])).sum();
    stats.success = true;
    Ok((Some(RrtPath { waypoints, goal_index }), stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::PI;

    fn arm() -> ArmModel {
        ArmModel::planar(&[2.0, 2.0]).unwrap()
    }

    fn b(c: &[f64], r: f64) -> Bubble {
        Bubble { center: JointConfig::new(c.to_vec()), radius: r }
    }

    #[test]
    fn edge_cost_examples() {
        assert_eq!(edge_cost(&b(&[0.0, 0.0], 1.0), &b(&[0.0, 0.0], 1.0)), 0.0);
        assert_eq!(edge_cost(&b(&[0.0, 0.0], 1.0), &b(&[1.0, 0.0], 1.0)), 1.0);
        let small = b(&[0.1, 0.0], 0.2);
        let large = b(&[0.0, 0.0], 1.0);
        assert_eq!(edge_cost(&small, &large), 0.0);
        assert!(edge_cost(&large, &small) > 0.0);
    }

    #[test]
    fn empty_environment_connects_immediately() {
        let h = |_: &[f64]| Ok(10.0);
        let goals = [JointConfig::new(vec![1.0, 1.0])];
        let (g, s) = build_bubble_graph(&h, &arm(), &[0.0, 0.0], &goals, &BubbleParams::default()).unwrap();
        assert!(s.success);
        assert_eq!(g.vertices.len(), 2);
        assert_eq!(s.collision_checks, 2);
        let sel = select_path(&g).unwrap();
        assert_eq!(sel.bubbles, vec![0, 1]);
    }

    #[test]
    fn start_infeasible() {
        let h = |_: &[f64]| Ok(0.05);
        let r = build_bubble_graph(&h, &arm(), &[0.0, 0.0], &[JointConfig::new(vec![1.0, 1.0])], &BubbleParams::default());
        assert!(matches!(r, Err(Error::StartInfeasible { .. })));
    }

    /// Distance to the wall segment `q0 = 1, q1 <= 1`; the way around is
    /// through `q1 > 1`.
    fn wall(q: &[f64]) -> Result<f64> {
        let (d, _) = math::point_segment([q[0], q[1]], [1.0, -4.0], [1.0, 1.0]);
        Ok(d)
    }

    #[test]
    fn bubble_graph_routes_around_wall() {
        let goals = [JointConfig::new(vec![2.0, 0.0])];
        let p = BubbleParams { seed: 3, ..Default::default() };
        let (g, s) = build_bubble_graph(&wall, &arm(), &[0.0, 0.0], &goals, &p).unwrap();
        assert!(s.success);
        assert_eq!(s.collision_checks, s.goal_seeding_checks + s.bubbles_attempted);
        let sel = select_path(&g).unwrap();
        for w in sel.bubbles.windows(2) {
            assert!(g.vertices[w[0]].overlaps(&g.vertices[w[1]]));
        }
        // Fixed seed, identical graph.
        let (g2, s2) = build_bubble_graph(&wall, &arm(), &[0.0, 0.0], &goals, &p).unwrap();
        assert_eq!(g, g2);
        assert_eq!(s, s2);
        for v in &g.vertices {
            assert!(v.radius <= wall(&v.center).unwrap());
        }
    }

    #[test]
    fn nearer_goal_chosen() {
        // Start at origin, two goal bubbles: one adjacent, one two hops away.
        let mut g = BubbleGraph { vertices: vec![], edges: vec![], adjacency: vec![], start: 0, goals: vec![] };
        g.push(b(&[0.0, 0.0], 1.0));
        let far = g.push(b(&[3.5, 0.0], 1.0));
        g.push(b(&[1.8, 0.0], 1.0));
        let near = g.push(b(&[0.0, 1.5], 1.0));
        g.goals = vec![Some(far), Some(near)];
        let sel = select_path(&g).unwrap();
        assert_eq!(sel.goal_index, 1);
        assert_eq!(sel.bubbles, vec![0, near]);
        let mut lone = BubbleGraph { vertices: vec![], edges: vec![], adjacency: vec![], start: 0, goals: vec![] };
        lone.push(b(&[0.0, 0.0], 0.5));
        let id = lone.push(b(&[PI, 0.0], 0.5));
        lone.goals = vec![Some(id)];
        assert!(select_path(&lone).is_none());
    }

    #[test]
    fn rrt_straight_line_check_count() {
        let h = |_: &[f64]| Ok(10.0);
        let goals = [JointConfig::new(vec![0.3, 0.0])];
        let p = RrtParams { goal_bias: 1.0, ..Default::default() };
        let (path, s) = cdf_rrt(&h, &arm(), &[0.0, 0.0], &goals, &p).unwrap();
        let path = path.unwrap();
        assert!((s.path_length - 0.3).abs() < 1e-12);
        // Three steps of 0.1, each checked at 2 points, plus the start query.
        // The last node lands on the goal itself, so no extra edge is checked.
        assert_eq!(s.collision_checks, 1 + 3 * 2);
        assert_eq!(path.waypoints.len(), 4);
        let (p2, s2) = cdf_rrt(&wall, &arm(), &[0.0, 0.0], &[JointConfig::new(vec![2.0, 0.0])], &RrtParams::default()).unwrap();
        let (p3, s3) = cdf_rrt(&wall, &arm(), &[0.0, 0.0], &[JointConfig::new(vec![2.0, 0.0])], &RrtParams::default()).unwrap();
        assert_eq!(p2, p3);
        assert_eq!(s2, s3);
        assert!(s2.success);
    }
}
