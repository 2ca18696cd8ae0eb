//! State-lattice planning: control-set generation, lower-bound heuristics and A* search
//! minimizing path length plus weighted collision cost.

use crate::costmap::Costmap;
use crate::dubins::{dubins_to_line, DubinsPath};
use crate::error::{IceNavError, Result};
use crate::geometry::{densify, for_each_overlapping_cell, wrap_2pi, PlannedPath, Point2, Pose, ShipFootprint};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub spacing: f64,
    pub headings: usize,
    pub r_min: f64,
    /// Neighborhood radius in lattice spacings.
    pub neighborhood: f64,
    /// Maximum ratio of primitive length to straight-line distance.
    pub max_length_ratio: f64,
    /// A primitive is pruned when two kept primitives chain to the same offset with total
    /// length within this relative margin.
    pub prune_tolerance: f64,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self {
            spacing: 30.0,
            headings: 8,
            r_min: 150.0,
            neighborhood: 9.0,
            max_length_ratio: 1.5,
            prune_tolerance: 0.03,
        }
    }
}

impl LatticeSpec {
    pub fn heading_angle(&self, h: usize) -> f64 {
        h as f64 * TAU / self.headings as f64
    }

    /// Nearest heading class.
    pub fn heading_class(&self, psi: f64) -> usize {
        let step = TAU / self.headings as f64;
        ((wrap_2pi(psi) / step).round() as usize) % self.headings
    }

    fn mirror_heading(&self, h: usize) -> usize {
        (self.headings - h) % self.headings
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionPrimitive {
    pub start_heading: usize,
    pub di: i32,
    pub dj: i32,
    pub end_heading: usize,
    /// Poses relative to the start node position (absolute headings).
    pub poses: Vec<Pose<f64>>,
    pub length: f64,
    /// Swath cells relative to the start node's cell.
    pub swath: Vec<(i32, i32)>,
}

#[derive(Debug, Clone)]
pub struct ControlSet {
    pub spec: LatticeSpec,
    pub grid_res: f64,
    pub by_heading: Vec<Vec<MotionPrimitive>>,
}

impl ControlSet {
    pub fn len(&self) -> usize {
        self.by_heading.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

type PrimKey = (usize, i32, i32, usize);

/// Builds Dubins primitives to lattice neighbors, prunes those that decompose into
/// kept primitives, closes the set under mirroring about the x axis, and precomputes swaths.
pub fn generate_control_set(spec: &LatticeSpec, footprint: &ShipFootprint, grid_res: f64) -> Result<ControlSet> {
    if !(spec.spacing > 0.0) || spec.headings == 0 || !(spec.r_min >= spec.spacing / 2.0) || !(grid_res > 0.0) {
        return Err(IceNavError::ConfigError("invalid lattice spec".into()));
    }
    let reach = spec.neighborhood.floor() as i32;
    let mut cands: Vec<(f64, PrimKey, DubinsPath)> = Vec::new();
    for h in 0..spec.headings {
        let q0 = Pose::new(0.0, 0.0, spec.heading_angle(h));
        for di in -reach..=reach {
            for dj in -reach..=reach {
                let dist_cells = ((di * di + dj * dj) as f64).sqrt();
                if (di == 0 && dj == 0) || dist_cells > spec.neighborhood + 1e-9 {
                    continue;
                }
                let euclid = dist_cells * spec.spacing;
                for e in 0..spec.headings {
                    let q1 = Pose::new(di as f64 * spec.spacing, dj as f64 * spec.spacing, spec.heading_angle(e));
                    if let Some(p) = DubinsPath::shortest(q0, q1, spec.r_min) {
                        if p.length() <= spec.max_length_ratio * euclid + 1e-9 {
                            cands.push((p.length(), (h, di, dj, e), p));
                        }
                    }
                }
            }
        }
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut kept: HashMap<PrimKey, f64> = HashMap::new();
    let mut kept_by_h: Vec<Vec<(i32, i32, usize, f64)>> = vec![Vec::new(); spec.headings];
    let mut paths: HashMap<PrimKey, DubinsPath> = HashMap::new();
    for (len, key, path) in cands {
        let (h, di, dj, e) = key;
        // Dominated when two kept primitives chain to the same offset at nearly the same length.
        let dominated = kept_by_h[h].iter().any(|&(ai, aj, ae, alen)| {
            kept.get(&(ae, di - ai, dj - aj, e))
                .is_some_and(|&blen| alen + blen <= len * (1.0 + spec.prune_tolerance))
        });
        if !dominated {
            kept.insert(key, len);
            kept_by_h[h].push((di, dj, e, len));
            paths.insert(key, path);
        }
    }
    // Mirror closure.
    let keys: Vec<PrimKey> = paths.keys().copied().collect();
    for (h, di, dj, e) in keys {
        let m = (spec.mirror_heading(h), di, -dj, spec.mirror_heading(e));
        if !paths.contains_key(&m) {
            let q0 = Pose::new(0.0, 0.0, spec.heading_angle(m.0));
            let q1 = Pose::new(di as f64 * spec.spacing, -dj as f64 * spec.spacing, spec.heading_angle(m.3));
            if let Some(p) = DubinsPath::shortest(q0, q1, spec.r_min) {
                paths.insert(m, p);
            }
        }
    }
    let mut by_heading: Vec<Vec<MotionPrimitive>> = vec![Vec::new(); spec.headings];
    let mut sorted: Vec<(PrimKey, DubinsPath)> = paths.into_iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let half = 0.5 * grid_res;
    for ((h, di, dj, e), path) in sorted {
        let poses = path.sample_many(half);
        let mut swath = Vec::new();
        densify(&poses, half, |pose| {
            for_each_overlapping_cell(&footprint.at(pose), grid_res, Point2::new(-half, -half), |ix, iy| {
                swath.push((ix as i32, iy as i32));
            });
        });
        swath.sort_unstable();
        swath.dedup();
        by_heading[h].push(MotionPrimitive { start_heading: h, di, dj, end_heading: e, poses, length: path.length(), swath });
    }
    let forward = by_heading.iter().enumerate().all(|(h, prims)| {
        let dir = Point2::new(spec.heading_angle(h).cos(), spec.heading_angle(h).sin());
        prims.iter().any(|p| Point2::new(p.di as f64, p.dj as f64).dot(dir) > 0.0)
    });
    if !forward {
        return Err(IceNavError::ConfigError("some heading has no forward primitive".into()));
    }
    Ok(ControlSet { spec: *spec, grid_res, by_heading })
}

/// Length lower bound to the goal line `x = x_goal`.
pub fn h1_dubins_to_line(pose: &Pose<f64>, x_goal: f64, r_min: f64) -> f64 {
    dubins_to_line(pose, x_goal, r_min)
}

/// Per-column minimum of `w` consecutive cell costs, summed from a column up to the goal column.
#[derive(Debug, Clone)]
pub struct ObstacleBound {
    /// `suffix[ix]` = Σ column minima from `ix` through the goal column.
    suffix: Vec<f64>,
    pub column_min: Vec<f64>,
}

/// Minimum sum over any `w` consecutive entries (all of them when shorter than `w`).
pub fn window_min(values: &[f64], w: usize) -> f64 {
    if values.len() <= w {
        return values.iter().sum();
    }
    (0..=values.len() - w).map(|s| values[s..s + w].iter().sum::<f64>()).fold(f64::INFINITY, f64::min)
}

impl ObstacleBound {
    pub fn new(map: &Costmap, w_cells: usize, x_goal: f64) -> Self {
        let g = &map.grid;
        let column_min: Vec<f64> = (0..g.n_cols)
            .map(|ix| {
                let col: Vec<f64> = (0..g.n_rows).map(|iy| map.at(ix, iy)).collect();
                window_min(&col, w_cells.max(1))
            })
            .collect();
        let goal_col = ((x_goal - g.origin.x) / g.resolution).floor();
        let goal_col = goal_col.min(g.n_cols as f64 - 1.0);
        let mut suffix = vec![0.0; g.n_cols + 1];
        if goal_col >= 0.0 {
            let gc = goal_col as usize;
            for ix in (0..=gc).rev() {
                suffix[ix] = column_min[ix] + suffix[ix + 1];
            }
        }
        Self { suffix, column_min }
    }

    /// Bound for a path whose reference point starts in column `ix`.
    pub fn query(&self, ix: i64) -> f64 {
        let i = ix.max(0) as usize;
        self.suffix.get(i).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticeNode {
    pub i: i32,
    pub j: i32,
    pub h: usize,
}

/// Lattice anchored at a start pose over a costmap.
pub struct LatticeGraph<'a> {
    pub origin: Point2<f64>,
    pub cs: &'a ControlSet,
    pub map: &'a Costmap,
    pub x_goal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub to: LatticeNode,
    pub prim: usize,
    pub length: f64,
    pub cost: f64,
}

impl<'a> LatticeGraph<'a> {
    pub fn position(&self, n: &LatticeNode) -> Point2<f64> {
        let s = self.cs.spec.spacing;
        Point2::new(self.origin.x + n.i as f64 * s, self.origin.y + n.j as f64 * s)
    }

    pub fn pose(&self, n: &LatticeNode) -> Pose<f64> {
        let p = self.position(n);
        Pose::new(p.x, p.y, self.cs.spec.heading_angle(n.h))
    }

    pub fn cell(&self, n: &LatticeNode) -> (i64, i64) {
        self.map.grid.cell_of(self.position(n))
    }

    pub fn is_goal(&self, n: &LatticeNode) -> bool {
        self.position(n).x >= self.x_goal
    }

    /// Valid outgoing edges. An edge is invalid when its swath leaves the grid laterally
    /// or behind its start; cells beyond the far end of the grid cost nothing.
    pub fn successors(&self, n: &LatticeNode, out: &mut Vec<Edge>) {
        out.clear();
        let (cx, cy) = self.cell(n);
        let g = &self.map.grid;
        'prims: for (k, p) in self.cs.by_heading[n.h].iter().enumerate() {
            let mut cost = 0.0;
            for &(dx, dy) in &p.swath {
                let ix = cx + dx as i64;
                let iy = cy + dy as i64;
                if iy < 0 || iy >= g.n_rows as i64 || ix < 0 {
                    continue 'prims;
                }
                if (ix as usize) < g.n_cols {
                    cost += self.map.cost[g.index(ix as usize, iy as usize)];
                }
            }
            out.push(Edge {
                to: LatticeNode { i: n.i + p.di, j: n.j + p.dj, h: p.end_heading },
                prim: k,
                length: p.length,
                cost,
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannerResult {
    pub path: PlannedPath,
    pub nodes: Vec<LatticeNode>,
    /// Primitive index (within its start heading's list) per segment.
    pub primitives: Vec<usize>,
    pub length: f64,
    pub collision_cost: f64,
    pub objective: f64,
    pub nodes_expanded: usize,
}

impl PlannerResult {
    pub fn debug_json(&self) -> serde_json::Value {
        serde_json::json!({
            "nodes_expanded": self.nodes_expanded,
            "J": self.objective,
            "L_f": self.length,
            "C_f": self.collision_cost,
            "poses": self.path.poses.iter().map(|p| [p.x, p.y, p.psi]).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Rec {
    len: f64,
    cost: f64,
    j: f64,
    parent: Option<(LatticeNode, usize)>,
}

#[derive(Debug, Clone, Copy)]
struct OpenKey {
    f: f64,
    cost: f64,
    j: f64,
    node: LatticeNode,
}

impl PartialEq for OpenKey {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for OpenKey {}
impl PartialOrd for OpenKey {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for OpenKey {
    // Reversed so BinaryHeap pops the smallest f, then smallest cost, then node id.
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f)
            .then(o.cost.total_cmp(&self.cost))
            .then(o.node.cmp(&self.node))
    }
}

pub const MAX_EXPANSIONS: usize = 2_000_000;

/// Minimum-objective lattice path from `start` (heading snapped to the nearest class)
/// to any node with `x >= x_subgoal`.
pub fn plan_path(start: &Pose<f64>, x_subgoal: f64, map: &Costmap, cs: &ControlSet, alpha: f64, ship_width: f64) -> Result<PlannerResult> {
    let graph = LatticeGraph { origin: start.position(), cs, map, x_goal: x_subgoal };
    let w = (ship_width / map.grid.resolution - 1e-9).ceil().max(1.0) as usize;
    let bound = ObstacleBound::new(map, w, x_subgoal);
    let r_min = cs.spec.r_min;
    let heuristic = |n: &LatticeNode| {
        let (ix, _) = graph.cell(n);
        h1_dubins_to_line(&graph.pose(n), x_subgoal, r_min) + alpha * bound.query(ix)
    };
    search(&graph, start, alpha, heuristic)
}

/// Best-first search with re-expansion; `heuristic` returning 0 gives Dijkstra.
pub fn search(graph: &LatticeGraph, start: &Pose<f64>, alpha: f64, heuristic: impl Fn(&LatticeNode) -> f64) -> Result<PlannerResult> {
    let s0 = LatticeNode { i: 0, j: 0, h: graph.cs.spec.heading_class(start.psi) };
    let mut recs: HashMap<LatticeNode, Rec> = HashMap::new();
    recs.insert(s0, Rec { len: 0.0, cost: 0.0, j: 0.0, parent: None });
    let mut open = BinaryHeap::new();
    open.push(OpenKey { f: heuristic(&s0), cost: 0.0, j: 0.0, node: s0 });
    let mut edges = Vec::new();
    let mut expanded = 0usize;
    while let Some(top) = open.pop() {
        let rec = recs[&top.node];
        if top.j != rec.j || top.cost != rec.cost {
            continue;
        }
        if graph.is_goal(&top.node) {
            return Ok(reconstruct(graph, recs, top.node, expanded));
        }
        expanded += 1;
        if expanded > MAX_EXPANSIONS {
            break;
        }
        graph.successors(&top.node, &mut edges);
        for e in &edges {
            let len = rec.len + e.length;
            let cost = rec.cost + e.cost;
            let j = len + alpha * cost;
            let better = match recs.get(&e.to) {
                None => true,
                Some(old) => j < old.j || (j == old.j && cost < old.cost),
            };
            if better {
                recs.insert(e.to, Rec { len, cost, j, parent: Some((top.node, e.prim)) });
                open.push(OpenKey { f: j + heuristic(&e.to), cost, j, node: e.to });
            }
        }
    }
    Err(IceNavError::NoPathFound(format!("goal line x = {:.1} unreachable after {expanded} expansions", graph.x_goal)))
}

fn reconstruct(graph: &LatticeGraph, recs: HashMap<LatticeNode, Rec>, goal: LatticeNode, expanded: usize) -> PlannerResult {
    let mut nodes = vec![goal];
    let mut prims = Vec::new();
    let mut cur = goal;
    while let Some((parent, prim)) = recs[&cur].parent {
        prims.push(prim);
        nodes.push(parent);
        cur = parent;
    }
    nodes.reverse();
    prims.reverse();
    let mut poses = vec![graph.pose(&nodes[0])];
    for (n, &k) in nodes.iter().zip(&prims) {
        let base = graph.position(n);
        let prim = &graph.cs.by_heading[n.h][k];
        poses.extend(prim.poses.iter().skip(1).map(|p| Pose::new(p.x + base.x, p.y + base.y, p.psi)));
    }
    let rec = recs[&goal];
    PlannerResult {
        path: PlannedPath::from_poses(poses),
        nodes,
        primitives: prims,
        length: rec.len,
        collision_cost: rec.cost,
        objective: rec.j,
        nodes_expanded: expanded,
    }
}
