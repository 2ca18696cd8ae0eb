//! Receding-horizon planning: the two-stage lattice + optimizer planner and the Straight and
//! Skeleton baselines.

use crate::costmap::{build_costmap, CostField, Costmap, CostmapParams};
use crate::dynamics::{make_velocity_profile, ShipState, VelocityProfile, DEFAULT_ACCEL, SHIP_MASS};
use crate::error::{IceNavError, Result};
use crate::geometry::{densify, for_each_overlapping_cell, wrap_pi, GridSpec, PlannedPath, Point2, ShipFootprint};
use crate::Pose;
use crate::icefield::{occupancy_image, IceField};
use crate::lattice::{plan_path, ControlSet, LatticeSpec};
use crate::optimizer::{default_body_points, optimize_path, pursuit_curvature, rk4_unicycle_step, truncate_at_goal, IterationTrace, OptimizerParams};
use serde::{Deserialize, Serialize};
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerKind {
    AutoIceNav,
    Straight,
    Skeleton,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 3] = [PlannerKind::AutoIceNav, PlannerKind::Straight, PlannerKind::Skeleton];

    pub fn name(&self) -> &'static str {
        match self {
            PlannerKind::AutoIceNav => "auto-icenav",
            PlannerKind::Straight => "straight",
            PlannerKind::Skeleton => "skeleton",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = IceNavError;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| IceNavError::ConfigError(format!("unknown planner '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavConfig {
    /// Planning horizon ahead of the ship (m).
    pub horizon: f64,
    /// Simulated time between replans (s).
    pub replan_period: f64,
    pub u_nom: f64,
    pub accel: f64,
    pub alpha: f64,
    /// Relative improvement a new plan needs before it replaces the previous one.
    pub switch_threshold: f64,
    pub x_goal: f64,
    pub channel_width: f64,
    /// Costmap extent behind the ship (m).
    pub look_behind: f64,
    /// Straight run appended past the subgoal so the tracker never stalls at the path end.
    pub tail: f64,
    pub body_spacing: f64,
    pub lambda: f64,
    /// Run the optimization stage after the lattice search.
    pub refine: bool,
    /// Keep per-iteration optimizer records in each plan.
    pub record_trace: bool,
    pub ship_mass: f64,
    pub costmap: CostmapParams,
    pub lattice: LatticeSpec,
}

impl Default for NavConfig {
    fn default() -> Self {
        Self {
            horizon: 500.0,
            replan_period: 30.0,
            u_nom: 2.0,
            accel: DEFAULT_ACCEL,
            alpha: 4.8e-7,
            switch_threshold: 0.05,
            x_goal: 400.0,
            channel_width: 80.0,
            look_behind: 100.0,
            tail: 100.0,
            body_spacing: 6.0,
            lambda: 5e4,
            refine: true,
            record_trace: false,
            ship_mass: SHIP_MASS,
            costmap: CostmapParams::default(),
            // Desk channels are 80 m wide, so lanes sit one hull width apart.
            lattice: LatticeSpec { spacing: 10.0, neighborhood: 15.0, ..LatticeSpec::default() },
        }
    }
}

impl NavConfig {
    pub fn validate(&self, footprint: &ShipFootprint) -> Result<()> {
        if !(self.horizon > footprint.length) {
            return Err(IceNavError::ConfigError("planning horizon must exceed the ship length".into()));
        }
        if !(self.replan_period > 0.0) || !(self.u_nom > 0.0) || !(self.channel_width > 0.0) {
            return Err(IceNavError::ConfigError("replan period, nominal speed and channel width must be positive".into()));
        }
        if !(self.switch_threshold >= 0.0) || !(self.alpha >= 0.0) {
            return Err(IceNavError::ConfigError("switch threshold and alpha must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NavPlan {
    /// Path handed to the tracker (subgoal plus straight tail).
    pub path: PlannedPath,
    pub profile: VelocityProfile,
    pub subgoal: f64,
    pub stage1_objective: f64,
    pub stage2_objective: Option<f64>,
    pub planning_ms: f64,
    /// The previous plan was retained by the switch rule.
    pub kept_previous: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lattice_debug: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<IterationTrace>,
}

/// Stateful planner for one trial.
pub struct Navigator {
    pub kind: PlannerKind,
    pub cfg: NavConfig,
    pub footprint: ShipFootprint,
    control_set: Option<Arc<ControlSet>>,
    previous: Option<PlannedPath>,
    straight_y: Option<f64>,
}

impl Navigator {
    /// `control_set` is required for the two-stage planner; build it once and share it.
    pub fn new(kind: PlannerKind, cfg: NavConfig, footprint: ShipFootprint, control_set: Option<Arc<ControlSet>>) -> Result<Self> {
        cfg.validate(&footprint)?;
        if kind == PlannerKind::AutoIceNav && control_set.is_none() {
            return Err(IceNavError::ConfigError("the lattice planner needs a control set".into()));
        }
        Ok(Self { kind, cfg, footprint, control_set, previous: None, straight_y: None })
    }

    pub fn plan(&mut self, state: &ShipState, field: &IceField) -> Result<NavPlan> {
        let clock = Instant::now();
        let pose = state.eta;
        if pose.x >= self.cfg.x_goal {
            return Err(IceNavError::PlanningFailure("ship is already past the goal".into()));
        }
        let subgoal = (pose.x + self.cfg.horizon).min(self.cfg.x_goal);
        let profile = make_velocity_profile(state.nu[0].max(0.0), self.cfg.u_nom, self.cfg.accel)?;
        let mut plan = match self.kind {
            PlannerKind::Straight => self.plan_straight(&pose, subgoal, profile),
            PlannerKind::Skeleton => self.plan_skeleton(&pose, subgoal, field, profile)?,
            PlannerKind::AutoIceNav => self.plan_two_stage(&pose, subgoal, field, profile)?,
        };
        plan.planning_ms = clock.elapsed().as_secs_f64() * 1e3;
        Ok(plan)
    }

    fn plan_straight(&mut self, pose: &Pose, subgoal: f64, profile: VelocityProfile) -> NavPlan {
        let y = *self.straight_y.get_or_insert(pose.y);
        let path = straight_path(pose.x, y, subgoal + self.cfg.tail);
        NavPlan {
            path,
            profile,
            subgoal,
            stage1_objective: subgoal - pose.x,
            stage2_objective: None,
            planning_ms: 0.0,
            kept_previous: false,
            lattice_debug: None,
            trace: Vec::new(),
        }
    }

    /// The costmap the two-stage planner would search from `pose`.
    pub fn planning_costmap(&self, pose: &Pose, field: &IceField) -> Result<Costmap> {
        let subgoal = (pose.x + self.cfg.horizon).min(self.cfg.x_goal);
        let grid = self.costmap_grid(pose, subgoal)?;
        build_costmap(field, &grid, self.cfg.u_nom, self.cfg.ship_mass, &self.cfg.costmap)
    }

    fn costmap_grid(&self, pose: &Pose, subgoal: f64) -> Result<GridSpec> {
        let res = self.cfg.costmap.resolution;
        // Offset by half a cell so lattice nodes sit on cell centers along x.
        let x0 = pose.x - self.cfg.look_behind - 0.5 * res;
        GridSpec::covering(res, x0, subgoal + self.footprint.length, 0.0, self.cfg.channel_width)
    }

    fn plan_two_stage(&mut self, pose: &Pose, subgoal: f64, field: &IceField, profile: VelocityProfile) -> Result<NavPlan> {
        let cfg = self.cfg;
        let cs = self.control_set.as_ref().expect("checked in new");
        let grid = self.costmap_grid(pose, subgoal)?;
        let map = build_costmap(field, &grid, cfg.u_nom, cfg.ship_mass, &cfg.costmap)?;
        // Start the lattice with the hull inside the channel even if the ship has drifted.
        let half = 0.5 * self.footprint.width + cfg.costmap.resolution;
        let y = pose.y.clamp(half, (cfg.channel_width - half).max(half));
        // The two heading classes bracketing the true heading; the cheaper plan wins.
        let step = std::f64::consts::TAU / cfg.lattice.headings as f64;
        let below = (pose.psi / step).floor() * step;
        let mut lattice = None;
        let mut last_err = None;
        for psi in [below, below + step] {
            match plan_path(&Pose::new(pose.x, y, psi), subgoal, &map, cs, cfg.alpha, self.footprint.width) {
                Ok(r) if lattice.as_ref().is_none_or(|b: &crate::lattice::PlannerResult| r.objective < b.objective) => lattice = Some(r),
                Ok(_) => {}
                Err(e) => last_err = Some(e),
            }
        }
        let lattice = lattice.ok_or_else(|| IceNavError::PlanningFailure(last_err.map_or_else(String::new, |e| e.to_string())))?;
        let mut stage1 = lattice.objective;
        let mut stage2 = None;
        let mut trace = Vec::new();
        let mut candidate = truncate_at_goal(&lattice.path, subgoal);
        if cfg.refine {
            let cost_field = CostField::with_defaults(&map, self.footprint.width)?;
            let body = default_body_points(&self.footprint, cfg.body_spacing, cfg.alpha, cfg.costmap.resolution)?;
            let params = OptimizerParams {
                x_goal: subgoal,
                y_bounds: (0.5 * self.footprint.width, cfg.channel_width - 0.5 * self.footprint.width),
                lambda: cfg.lambda,
                r_min: cfg.lattice.r_min,
                record_trace: cfg.record_trace,
                ..OptimizerParams::default()
            };
            let opt = optimize_path(pose, &lattice.path, &cost_field, &body, &params)?;
            stage1 = opt.warm_start_objective;
            stage2 = Some(opt.objective);
            trace = opt.trace.clone();
            candidate = opt.path();
        }
        // Compare against what is left of the previous plan on today's costmap.
        let mut kept = false;
        if let Some(prev) = &self.previous {
            let remainder = remaining_path(prev, pose);
            let j_old = path_objective(&remainder, &map, &self.footprint, cfg.alpha, subgoal);
            let j_new = path_objective(&candidate, &map, &self.footprint, cfg.alpha, subgoal);
            if keep_previous(j_old, j_new, cfg.switch_threshold) {
                candidate = remainder;
                kept = true;
            }
        }
        let reach = truncate_at_goal(&candidate, subgoal);
        self.previous = Some(reach.clone());
        Ok(NavPlan {
            path: with_tail(&reach, subgoal + cfg.tail),
            profile,
            subgoal,
            stage1_objective: stage1,
            stage2_objective: stage2,
            planning_ms: 0.0,
            kept_previous: kept,
            lattice_debug: Some(lattice.debug_json()),
            trace,
        })
    }

    fn plan_skeleton(&mut self, pose: &Pose, subgoal: f64, field: &IceField, profile: VelocityProfile) -> Result<NavPlan> {
        let res = self.cfg.costmap.resolution;
        let grid = GridSpec::covering(res, pose.x - self.cfg.look_behind, subgoal + self.cfg.channel_width, 0.0, self.cfg.channel_width)?;
        let occupancy = occupancy_image(field, &grid);
        let route = skeleton_route(&occupancy, &grid, pose.position(), subgoal)?;
        let path = smooth_route(pose, &route, self.cfg.lattice.r_min, subgoal, 0.5 * res);
        Ok(NavPlan {
            stage1_objective: path.length(),
            path: with_tail(&path, subgoal + self.cfg.tail),
            profile,
            subgoal,
            stage2_objective: None,
            planning_ms: 0.0,
            kept_previous: false,
            lattice_debug: None,
            trace: Vec::new(),
        })
    }
}

/// Switch rule: the old plan stays unless the new one beats it by more than `eps` relative.
pub fn keep_previous(j_old: f64, j_new: f64, eps: f64) -> bool {
    j_old <= j_new * (1.0 + eps)
}

pub fn straight_path(x0: f64, y: f64, x1: f64) -> PlannedPath {
    PlannedPath::from_poses(vec![Pose::new(x0, y, 0.0), Pose::new(x1.max(x0 + 1e-6), y, 0.0)])
}

/// Appends a straight run along the final heading until `x = x_end`.
pub fn with_tail(path: &PlannedPath, x_end: f64) -> PlannedPath {
    let mut poses = path.poses.clone();
    let Some(&last) = poses.last() else { return path.clone() };
    let c = last.psi.cos();
    if last.x < x_end && c > 1e-3 {
        let d = (x_end - last.x) / c;
        poses.push(Pose::new(x_end, last.y + d * last.psi.sin(), last.psi));
    }
    PlannedPath::from_poses(poses)
}

/// Part of `path` ahead of the closest point to `pose`.
pub fn remaining_path(path: &PlannedPath, pose: &Pose) -> PlannedPath {
    let (s0, _) = path.project(pose.position());
    let mut poses = vec![path.sample(s0)];
    poses.extend(path.poses.iter().zip(&path.s).filter(|(_, &s)| s > s0 + 1e-9).map(|(p, _)| *p));
    PlannedPath::from_poses(poses)
}

/// Length to the subgoal plus `alpha` times the summed cost of the cells swept by the
/// footprint, with a straight extension when the path stops short of the subgoal.
pub fn path_objective(path: &PlannedPath, map: &Costmap, footprint: &ShipFootprint, alpha: f64, subgoal: f64) -> f64 {
    let reach = with_tail(&truncate_at_goal(path, subgoal), subgoal);
    reach.length() + alpha * swept_cost(&reach, map, footprint)
}

/// Summed cost of the distinct cells the footprint overlaps along `path`.
pub fn swept_cost(path: &PlannedPath, map: &Costmap, footprint: &ShipFootprint) -> f64 {
    let g = &map.grid;
    let mut cells = HashSet::new();
    densify(&path.poses, 0.5 * g.resolution, |p| {
        for_each_overlapping_cell(&footprint.at(p), g.resolution, g.origin, |ix, iy| {
            if g.contains_cell(ix, iy) {
                cells.insert(g.index(ix as usize, iy as usize));
            }
        });
    });
    let mut cells: Vec<usize> = cells.into_iter().collect();
    cells.sort_unstable();
    cells.iter().map(|&k| map.cost[k]).sum()
}

/// Signed curvature of the path near arc length `s`, from the heading change over a short window.
pub fn path_curvature(path: &PlannedPath, s: f64, window: f64) -> f64 {
    let a = path.sample(s - 0.5 * window);
    let b = path.sample(s + 0.5 * window);
    let ds = (path.s.last().copied().unwrap_or(0.0).min(s + 0.5 * window) - (s - 0.5 * window).max(0.0)).max(1e-9);
    wrap_pi(b.psi - a.psi) / ds
}

// ---------------------------------------------------------------- skeleton baseline

/// One pass of Zhang–Suen thinning until stable. `img` holds 1 for foreground.
pub fn zhang_suen(img: &mut [u8], n_cols: usize, n_rows: usize) {
    let at = |img: &[u8], x: i64, y: i64| -> u8 {
        if x < 0 || y < 0 || x >= n_cols as i64 || y >= n_rows as i64 {
            0
        } else {
            img[y as usize * n_cols + x as usize]
        }
    };
    let mut marked = Vec::new();
    loop {
        let mut changed = false;
        for step in 0..2 {
            marked.clear();
            for y in 0..n_rows as i64 {
                for x in 0..n_cols as i64 {
                    if at(img, x, y) == 0 {
                        continue;
                    }
                    // Neighbors P2..P9 clockwise from north (y grows upward in the grid, but
                    // the rule is symmetric under the flip once both sub-steps run).
                    let p = [
                        at(img, x, y + 1),
                        at(img, x + 1, y + 1),
                        at(img, x + 1, y),
                        at(img, x + 1, y - 1),
                        at(img, x, y - 1),
                        at(img, x - 1, y - 1),
                        at(img, x - 1, y),
                        at(img, x - 1, y + 1),
                    ];
                    let b: u8 = p.iter().sum();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&i| p[i] == 0 && p[(i + 1) % 8] == 1).count();
                    if a != 1 {
                        continue;
                    }
                    let (c1, c2) = if step == 0 {
                        (p[0] * p[2] * p[4], p[2] * p[4] * p[6])
                    } else {
                        (p[0] * p[2] * p[6], p[0] * p[4] * p[6])
                    };
                    if c1 == 0 && c2 == 0 {
                        marked.push(y as usize * n_cols + x as usize);
                    }
                }
            }
            for &k in &marked {
                img[k] = 0;
            }
            changed |= !marked.is_empty();
        }
        if !changed {
            break;
        }
    }
}

/// Shrinks every obstacle by one cell (4-neighborhood). Returns false if nothing changed.
pub fn erode_obstacles(occ: &mut [u8], n_cols: usize, n_rows: usize) -> bool {
    let before = occ.to_vec();
    let free = |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < n_cols && (y as usize) < n_rows && before[y as usize * n_cols + x as usize] == 0;
    let mut changed = false;
    for y in 0..n_rows as i64 {
        for x in 0..n_cols as i64 {
            let k = y as usize * n_cols + x as usize;
            if before[k] != 0 && (free(x - 1, y) || free(x + 1, y) || free(x, y - 1) || free(x, y + 1)) {
                occ[k] = 0;
                changed = true;
            }
        }
    }
    changed
}

#[derive(Clone, Copy, PartialEq)]
struct Dist(f64, usize);
impl Eq for Dist {}
impl PartialOrd for Dist {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Dist {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

/// Shortest 8-connected route over `mask` from `src` to any cell in `goal`, Euclidean weights.
fn pixel_dijkstra(mask: &[u8], n_cols: usize, n_rows: usize, src: usize, goal: impl Fn(usize) -> bool) -> Option<Vec<usize>> {
    let mut dist = vec![f64::INFINITY; mask.len()];
    let mut prev = vec![usize::MAX; mask.len()];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Dist(0.0, src));
    while let Some(Dist(d, k)) = heap.pop() {
        if d > dist[k] {
            continue;
        }
        if goal(k) {
            let mut route = vec![k];
            let mut c = k;
            while prev[c] != usize::MAX {
                c = prev[c];
                route.push(c);
            }
            route.reverse();
            return Some(route);
        }
        let (x, y) = ((k % n_cols) as i64, (k / n_cols) as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if (dx == 0 && dy == 0) || nx < 0 || ny < 0 || nx >= n_cols as i64 || ny >= n_rows as i64 {
                    continue;
                }
                let nk = ny as usize * n_cols + nx as usize;
                if mask[nk] == 0 {
                    continue;
                }
                let nd = d + if dx != 0 && dy != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
                if nd < dist[nk] {
                    dist[nk] = nd;
                    prev[nk] = k;
                    heap.push(Dist(nd, nk));
                }
            }
        }
    }
    None
}

/// Waypoints from `from` to the subgoal line along the open-water skeleton, eroding the ice
/// until such a route exists. The returned points are already shortcut.
pub fn skeleton_route(occupancy: &[u8], grid: &GridSpec, from: Point2<f64>, subgoal: f64) -> Result<Vec<Point2<f64>>> {
    let (nc, nr) = (grid.n_cols, grid.n_rows);
    // Pad with a wall row above and below.
    let rows = nr + 2;
    let mut occ = vec![1u8; nc * rows];
    for iy in 0..nr {
        occ[(iy + 1) * nc..(iy + 2) * nc].copy_from_slice(&occupancy[iy * nc..(iy + 1) * nc]);
    }
    let center = |k: usize| grid.cell_center(k % nc, k / nc - 1);
    loop {
        let mut skel: Vec<u8> = occ.iter().map(|&o| (o == 0) as u8).collect();
        zhang_suen(&mut skel, nc, rows);
        let start = (0..skel.len())
            .filter(|&k| skel[k] == 1 && center(k).x >= from.x)
            .min_by(|&a, &b| center(a).dist(from).total_cmp(&center(b).dist(from)).then(a.cmp(&b)));
        if let Some(src) = start {
            if let Some(route) = pixel_dijkstra(&skel, nc, rows, src, |k| center(k).x >= subgoal) {
                let free: Vec<u8> = occ.iter().map(|&o| (o == 0) as u8).collect();
                let mut pts = vec![from];
                pts.extend(route.iter().map(|&k| center(k)));
                return Ok(shortcut(&pts, |a, b| line_clear(&free, nc, rows, grid, a, b)));
            }
        }
        // Keep the wall rows intact while eroding the interior.
        let mut inner = occ[nc..(nr + 1) * nc].to_vec();
        if !erode_obstacles(&mut inner, nc, nr) {
            return Err(IceNavError::PlanningFailure("open-water skeleton never reaches the subgoal".into()));
        }
        occ[nc..(nr + 1) * nc].copy_from_slice(&inner);
    }
}

fn line_clear(free: &[u8], nc: usize, rows: usize, grid: &GridSpec, a: Point2<f64>, b: Point2<f64>) -> bool {
    let n = (a.dist(b) / (0.5 * grid.resolution)).ceil().max(1.0) as usize;
    (0..=n).all(|i| {
        let p = a + (b - a) * (i as f64 / n as f64);
        let (ix, iy) = grid.cell_of(p);
        let iy = iy + 1;
        ix < 0 || iy < 0 || ix >= nc as i64 || iy >= rows as i64 || free[iy as usize * nc + ix as usize] == 1
    })
}

/// Greedy shortcutting: from each kept point jump to the farthest later point in sight.
pub fn shortcut(pts: &[Point2<f64>], visible: impl Fn(Point2<f64>, Point2<f64>) -> bool) -> Vec<Point2<f64>> {
    if pts.len() <= 2 {
        return pts.to_vec();
    }
    let mut out = vec![pts[0]];
    let mut i = 0;
    while i < pts.len() - 1 {
        let mut j = pts.len() - 1;
        while j > i + 1 && !visible(pts[i], pts[j]) {
            j -= 1;
        }
        out.push(pts[j]);
        i = j;
    }
    out
}

/// Curvature-limited pure-pursuit rollout along `route` until `x >= x_end`.
pub fn smooth_route(start: &Pose, route: &[Point2<f64>], r_min: f64, x_end: f64, step: f64) -> PlannedPath {
    let reference = PlannedPath::from_poses(route.iter().map(|p| Pose::new(p.x, p.y, 0.0)).collect());
    let lim = 1.0 / r_min;
    let lookahead = 20.0;
    let mut pose = *start;
    let mut poses = vec![pose];
    let max_steps = ((reference.length() + (x_end - start.x).abs()) * 3.0 / step) as usize + 10;
    for _ in 0..max_steps {
        if pose.x >= x_end {
            break;
        }
        let (s, _) = reference.project(pose.position());
        let target = if s + lookahead <= reference.length() {
            reference.sample(s + lookahead).position()
        } else {
            // Past the last waypoint: aim straight down the channel.
            let end = reference.poses.last().map(|p| p.position()).unwrap_or(pose.position());
            Point2::new(end.x.max(pose.x) + lookahead, end.y)
        };
        let k = pursuit_curvature(&pose, target).clamp(-lim, lim);
        pose = rk4_unicycle_step(&pose, k, step);
        poses.push(pose);
    }
    PlannedPath::from_poses(poses)
}
