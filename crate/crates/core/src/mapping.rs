//! Radius-bounded voxel occupancy, hybrid ground/air A* and waypoint helpers.

use alloc::collections::{BTreeMap, BTreeSet, BinaryHeap};
use core::cmp::Ordering;

use thiserror::Error;

use crate::cloud::{Point3, PointCloud};
use crate::prelude::*;

pub type VoxelKey = (i64, i64, i64);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("no path between start and goal")]
    NoPath,
    #[error("start node is occupied or out of bounds")]
    BadStart,
    #[error("goal node is occupied or out of bounds")]
    BadGoal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalMap {
    pub resolution: f64,
    pub origin: Point3,
    pub occupied: BTreeSet<VoxelKey>,
    pub retain_radius: f64,
}

impl LocalMap {
    pub fn new(resolution: f64, retain_radius: f64) -> Self {
        assert!(resolution > 0.0, "resolution must be positive");
        Self { resolution, origin: Point3::ORIGIN, occupied: BTreeSet::new(), retain_radius }
    }

    pub fn voxel_of(&self, p: &Point3) -> VoxelKey {
        let q = *p - self.origin;
        (
            (q.x / self.resolution).floor() as i64,
            (q.y / self.resolution).floor() as i64,
            (q.z / self.resolution).floor() as i64,
        )
    }

    pub fn center_of(&self, k: VoxelKey) -> Point3 {
        self.origin + Point3::new(k.0 as f64 + 0.5, k.1 as f64 + 0.5, k.2 as f64 + 0.5) * self.resolution
    }

    pub fn insert_point(&mut self, p: &Point3) {
        if p.is_finite() {
            let k = self.voxel_of(p);
            self.occupied.insert(k);
        }
    }

    /// Marks the voxel of every point. The cloud should already be in the
    /// odometry frame.
    pub fn insert_cloud(&mut self, cloud: &PointCloud) {
        for p in &cloud.points {
            self.insert_point(p);
        }
    }

    /// Drops voxels whose centre is farther than `radius` from `center`.
    pub fn prune_radius(&mut self, center: &Point3, radius: f64) {
        let r2 = radius * radius;
        let (res, origin) = (self.resolution, self.origin);
        self.occupied.retain(|&k| {
            let c = origin + Point3::new(k.0 as f64 + 0.5, k.1 as f64 + 0.5, k.2 as f64 + 0.5) * res;
            c.dist_sq(center) <= r2
        });
    }

    /// Prunes with the map's own retain radius.
    pub fn prune(&mut self, center: &Point3) {
        let r = self.retain_radius;
        self.prune_radius(center, r);
    }

    pub fn reset(&mut self) {
        self.occupied.clear();
    }

    pub fn is_occupied(&self, k: VoxelKey) -> bool {
        self.occupied.contains(&k)
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    pub fn centers(&self) -> Vec<Point3> {
        self.occupied.iter().map(|&k| self.center_of(k)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeMode {
    Ground,
    Air,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HybridNode {
    pub i: i64,
    pub j: i64,
    pub k: i64,
    pub mode: NodeMode,
}

impl HybridNode {
    pub fn ground(i: i64, j: i64, ground_k: i64) -> Self {
        Self { i, j, k: ground_k, mode: NodeMode::Ground }
    }

    pub fn air(i: i64, j: i64, k: i64) -> Self {
        Self { i, j, k, mode: NodeMode::Air }
    }

    pub fn key(&self) -> VoxelKey {
        (self.i, self.j, self.k)
    }
}

/// Per-step costs of the two node modes. Costs are per voxel step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeCosts {
    pub ground: f64,
    pub air: f64,
    /// A ground/air switch costs this times the destination mode cost.
    pub mode_change_factor: f64,
}

impl Default for ModeCosts {
    fn default() -> Self {
        Self { ground: 1.0, air: 5.0, mode_change_factor: 0.5 }
    }
}

impl ModeCosts {
    pub fn of(&self, mode: NodeMode) -> f64 {
        match mode {
            NodeMode::Ground => self.ground,
            NodeMode::Air => self.air,
        }
    }
}

/// Inclusive voxel box the search may visit, plus the ground layer index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSpace {
    pub min: VoxelKey,
    pub max: VoxelKey,
    pub ground_k: i64,
}

impl SearchSpace {
    /// Box spanning the map, start and goal, grown by `margin` voxels.
    pub fn around(map: &LocalMap, start: &HybridNode, goal: &HybridNode, ground_k: i64, margin: i64) -> Self {
        let mut min = (start.i.min(goal.i), start.j.min(goal.j), ground_k);
        let mut max = (start.i.max(goal.i), start.j.max(goal.j), start.k.max(goal.k).max(ground_k + 1));
        for &(i, j, k) in &map.occupied {
            min = (min.0.min(i), min.1.min(j), min.2);
            max = (max.0.max(i), max.1.max(j), max.2.max(k));
        }
        Self {
            min: (min.0 - margin, min.1 - margin, ground_k),
            max: (max.0 + margin, max.1 + margin, max.2 + margin),
            ground_k,
        }
    }

    fn contains(&self, n: &HybridNode) -> bool {
        let in_box = n.i >= self.min.0
            && n.i <= self.max.0
            && n.j >= self.min.1
            && n.j <= self.max.1
            && n.k >= self.min.2
            && n.k <= self.max.2;
        in_box
            && match n.mode {
                NodeMode::Ground => n.k == self.ground_k,
                NodeMode::Air => n.k > self.ground_k,
            }
    }
}

/// Outgoing edges of `n` as `(neighbor, cost)`. Ground nodes move in the
/// ground layer; air nodes move in 3D above it; switches connect a ground
/// node with the air node right above it.
pub fn neighbors(map: &LocalMap, space: &SearchSpace, costs: &ModeCosts, n: &HybridNode) -> Vec<(HybridNode, f64)> {
    let mut out = Vec::with_capacity(7);
    let steps: &[(i64, i64, i64)] = match n.mode {
        NodeMode::Ground => &[(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0)],
        NodeMode::Air => &[(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)],
    };
    for &(di, dj, dk) in steps {
        let m = HybridNode { i: n.i + di, j: n.j + dj, k: n.k + dk, mode: n.mode };
        if space.contains(&m) && !map.is_occupied(m.key()) {
            out.push((m, costs.of(m.mode)));
        }
    }
    let switch = match n.mode {
        NodeMode::Ground => Some(HybridNode::air(n.i, n.j, n.k + 1)),
        NodeMode::Air if n.k == space.ground_k + 1 => Some(HybridNode::ground(n.i, n.j, space.ground_k)),
        NodeMode::Air => None,
    };
    if let Some(m) = switch {
        if space.contains(&m) && !map.is_occupied(m.key()) {
            out.push((m, costs.mode_change_factor * costs.of(m.mode)));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    pub nodes: Vec<HybridNode>,
    pub cost: f64,
    pub expanded: usize,
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    g: f64,
    node: HybridNode,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        // Min-heap on f, then prefer deeper g, then node order for determinism.
        o.f.total_cmp(&self.f).then(self.g.total_cmp(&o.g)).then(o.node.cmp(&self.node))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn heuristic(costs: &ModeCosts, a: &HybridNode, b: &HybridNode) -> f64 {
    let c_min = costs.ground.min(costs.air);
    if c_min <= 0.0 {
        return 0.0;
    }
    // A vertical unit can be bought by an air step or by a mode switch.
    let switch_min = costs.mode_change_factor * c_min;
    let w = (costs.air.min(switch_min) / c_min).min(1.0);
    let di = (a.i - b.i) as f64;
    let dj = (a.j - b.j) as f64;
    let dk = (a.k - b.k) as f64 * w;
    c_min * (di * di + dj * dj + dk * dk).sqrt()
}

/// Minimum-cost hybrid path with an admissible, consistent heuristic.
pub fn astar_plan(
    map: &LocalMap,
    space: &SearchSpace,
    start: HybridNode,
    goal: HybridNode,
    costs: &ModeCosts,
) -> Result<PlannedPath, MapError> {
    if !space.contains(&start) || map.is_occupied(start.key()) {
        return Err(MapError::BadStart);
    }
    if !space.contains(&goal) || map.is_occupied(goal.key()) {
        return Err(MapError::BadGoal);
    }
    let mut g_cost: BTreeMap<HybridNode, f64> = BTreeMap::new();
    let mut pred: BTreeMap<HybridNode, HybridNode> = BTreeMap::new();
    let mut closed: BTreeSet<HybridNode> = BTreeSet::new();
    let mut open = BinaryHeap::new();
    g_cost.insert(start, 0.0);
    open.push(Open { f: heuristic(costs, &start, &goal), g: 0.0, node: start });
    let mut expanded = 0;

    while let Some(Open { g, node, .. }) = open.pop() {
        if !closed.insert(node) {
            continue;
        }
        expanded += 1;
        if node == goal {
            let mut nodes = vec![goal];
            let mut cur = goal;
            while let Some(&p) = pred.get(&cur) {
                nodes.push(p);
                cur = p;
            }
            nodes.reverse();
            return Ok(PlannedPath { nodes, cost: g, expanded });
        }
        for (m, c) in neighbors(map, space, costs, &node) {
            if closed.contains(&m) {
                continue;
            }
            let tentative = g + c;
            if g_cost.get(&m).is_none_or(|&old| tentative < old) {
                g_cost.insert(m, tentative);
                pred.insert(m, node);
                open.push(Open { f: tentative + heuristic(costs, &m, &goal), g: tentative, node: m });
            }
        }
    }
    Err(MapError::NoPath)
}

/// Point at arc length `distance` along a polyline; the end if it is shorter.
pub fn extract_waypoint(path: &[Point3], distance: f64) -> Option<Point3> {
    let first = *path.first()?;
    let mut left = distance.max(0.0);
    for w in path.windows(2) {
        let seg = w[0].dist(&w[1]);
        if left <= seg {
            if seg == 0.0 {
                return Some(w[0]);
            }
            return Some(w[0] + (w[1] - w[0]) * (left / seg));
        }
        left -= seg;
    }
    Some(*path.last().unwrap_or(&first))
}

/// Run of consecutive path nodes sharing a mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeRun {
    pub mode: NodeMode,
    pub points: Vec<Point3>,
}

/// Voxel centres of a planned path tagged with their mode, grouped into
/// runs. Every run after the first starts at a transition.
pub fn annotate_modes(map: &LocalMap, path: &[HybridNode]) -> Vec<ModeRun> {
    let mut runs: Vec<ModeRun> = Vec::new();
    for n in path {
        let p = map.center_of(n.key());
        match runs.last_mut() {
            Some(run) if run.mode == n.mode => run.points.push(p),
            _ => runs.push(ModeRun { mode: n.mode, points: vec![p] }),
        }
    }
    runs
}

/// Polyline of voxel centres for a node path.
pub fn path_points(map: &LocalMap, path: &[HybridNode]) -> Vec<Point3> {
    path.iter().map(|n| map.center_of(n.key())).collect()
}
