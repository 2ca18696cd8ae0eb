//! Path refinement by direct multiple shooting over the unicycle model.
//!
//! Decision vector layout: poses 2..=N+1 (x, y, psi with psi unwrapped), then N curvatures
//! scaled by `r_min` so their box is `[-1, 1]`, then the shared arc-length step.

use crate::costmap::CostField;
use crate::error::{IceNavError, Result};
use crate::geometry::{wrap_pi, PlannedPath, Point2, Pose, ShipFootprint};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub struct BodyPointSet {
    pub points: Vec<Point2<f64>>,
    pub weights: Vec<f64>,
}

/// Square grid of spacing `db` centered in the footprint's bounding rectangle, each point
/// weighted so a straight sweep samples every costmap cell about once.
pub fn default_body_points(footprint: &ShipFootprint, db: f64, alpha: f64, grid_res: f64) -> Result<BodyPointSet> {
    if !(db > 0.0) || !(grid_res > 0.0) || !(alpha >= 0.0) {
        return Err(IceNavError::ConfigError("body point spacing, grid resolution and alpha must be positive".into()));
    }
    let (lo, hi) = footprint.outline.bounds();
    let axis = |a: f64, b: f64| {
        let n = ((b - a) / db + 1e-9).floor() as usize + 1;
        let span = (n - 1) as f64 * db;
        let first = 0.5 * (a + b) - 0.5 * span;
        (0..n).map(move |k| first + k as f64 * db)
    };
    let mut points = Vec::new();
    for y in axis(lo.y, hi.y) {
        for x in axis(lo.x, hi.x) {
            points.push(Point2::new(x, y));
        }
    }
    let w = alpha * db * db / (footprint.length * grid_res * grid_res);
    let weights = vec![w; points.len()];
    Ok(BodyPointSet { points, weights })
}

fn rk4_raw(s: [f64; 3], kappa: f64, h: f64) -> [f64; 3] {
    let (a, b, c) = (s[2], s[2] + 0.5 * h * kappa, s[2] + h * kappa);
    [
        s[0] + h / 6.0 * (a.cos() + 4.0 * b.cos() + c.cos()),
        s[1] + h / 6.0 * (a.sin() + 4.0 * b.sin() + c.sin()),
        c,
    ]
}

/// One RK4 step of the unicycle over arc length `ds` at constant curvature.
pub fn rk4_unicycle_step(pose: &Pose<f64>, kappa: f64, ds: f64) -> Pose<f64> {
    let s = rk4_raw([pose.x, pose.y, pose.psi], kappa, ds);
    Pose::new(s[0], s[1], s[2])
}

/// Partial derivatives of one RK4 step: (d/dpsi, d/dkappa, d/dh), each as (x, y, psi).
fn rk4_partials(s: [f64; 3], kappa: f64, h: f64) -> [[f64; 3]; 3] {
    let (a, b, c) = (s[2], s[2] + 0.5 * h * kappa, s[2] + h * kappa);
    let (sa, sb, sc) = (a.sin(), b.sin(), c.sin());
    let (ca, cb, cc) = (a.cos(), b.cos(), c.cos());
    let d_psi = [-h / 6.0 * (sa + 4.0 * sb + sc), h / 6.0 * (ca + 4.0 * cb + cc), 1.0];
    let d_kappa = [-h * h / 6.0 * (2.0 * sb + sc), h * h / 6.0 * (2.0 * cb + cc), h];
    let d_h = [
        (ca + 4.0 * cb + cc) / 6.0 - h * kappa / 6.0 * (2.0 * sb + sc),
        (sa + 4.0 * sb + sc) / 6.0 + h * kappa / 6.0 * (2.0 * cb + cc),
        kappa,
    ];
    [d_psi, d_kappa, d_h]
}

/// Discretized refinement problem anchored at a fixed start pose.
pub struct NlpProblem<'a> {
    pub start: [f64; 3],
    pub n: usize,
    pub x_goal: f64,
    pub r_min: f64,
    pub lambda: f64,
    pub ds_bounds: (f64, f64),
    pub body: &'a BodyPointSet,
    pub field: &'a CostField,
}

impl<'a> NlpProblem<'a> {
    pub fn n_vars(&self) -> usize {
        4 * self.n + 1
    }

    pub fn n_constraints(&self) -> usize {
        3 * self.n + 1
    }

    fn ds_index(&self) -> usize {
        4 * self.n
    }

    /// Pose `i` (0-based, 0 is the fixed start).
    pub fn state(&self, z: &[f64], i: usize) -> [f64; 3] {
        if i == 0 {
            self.start
        } else {
            [z[3 * (i - 1)], z[3 * (i - 1) + 1], z[3 * (i - 1) + 2]]
        }
    }

    pub fn kappa(&self, z: &[f64], i: usize) -> f64 {
        z[3 * self.n + i] / self.r_min
    }

    pub fn ds(&self, z: &[f64]) -> f64 {
        z[self.ds_index()]
    }

    pub fn lower_bounds(&self) -> Vec<f64> {
        let mut lo = vec![f64::NEG_INFINITY; self.n_vars()];
        lo[3 * self.n..4 * self.n].fill(-1.0);
        lo[self.ds_index()] = self.ds_bounds.0;
        lo
    }

    pub fn upper_bounds(&self) -> Vec<f64> {
        let mut hi = vec![f64::INFINITY; self.n_vars()];
        hi[3 * self.n..4 * self.n].fill(1.0);
        hi[self.ds_index()] = self.ds_bounds.1;
        hi
    }

    /// Packs states (N+1, including the start), curvatures (N) and a step into a decision vector.
    pub fn pack(&self, states: &[[f64; 3]], kappas: &[f64], ds: f64) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.n_vars());
        for s in &states[1..] {
            z.extend_from_slice(s);
        }
        z.extend(kappas.iter().map(|k| k * self.r_min));
        z.push(ds);
        z
    }

    /// Collision, length and smoothness terms, with the analytic gradient.
    pub fn objective(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let n = self.n;
        let h = self.ds(z);
        let mut grad = vec![0.0; self.n_vars()];
        let mut total = n as f64 * h;
        grad[self.ds_index()] += n as f64;
        let mut collision = 0.0;
        for i in 0..=n {
            let s = self.state(z, i);
            let ki = i.min(n - 1);
            let kappa = self.kappa(z, ki);
            let (sp, cp) = s[2].sin_cos();
            let mut g_state = [0.0; 3];
            let mut g_kappa = 0.0;
            for (b, &w) in self.body.points.iter().zip(&self.body.weights) {
                if w == 0.0 {
                    continue;
                }
                let px = s[0] + cp * b.x - sp * b.y;
                let py = s[1] + sp * b.x + cp * b.y;
                let (c, gc) = self.field.eval(px, py);
                let ax = 1.0 - kappa * b.y;
                let ay = kappa * b.x;
                let speed = (ax * ax + ay * ay).sqrt();
                let term = w * c * speed;
                collision += term;
                let dpx = -sp * b.x - cp * b.y;
                let dpy = cp * b.x - sp * b.y;
                g_state[0] += w * speed * gc[0];
                g_state[1] += w * speed * gc[1];
                g_state[2] += w * speed * (gc[0] * dpx + gc[1] * dpy);
                g_kappa += w * c * (-b.y * ax + b.x * ay) / speed;
            }
            if i > 0 {
                for k in 0..3 {
                    grad[3 * (i - 1) + k] += g_state[k] * h;
                }
            }
            grad[3 * n + ki] += g_kappa * h / self.r_min;
        }
        total += collision * h;
        grad[self.ds_index()] += collision;
        for i in 0..n.saturating_sub(1) {
            let d = (self.kappa(z, i + 1) - self.kappa(z, i)) / h;
            total += self.lambda * d * d;
            let g = 2.0 * self.lambda * d / h / self.r_min;
            grad[3 * n + i + 1] += g;
            grad[3 * n + i] -= g;
            grad[self.ds_index()] -= 2.0 * self.lambda * d * d / h;
        }
        (total, grad)
    }

    /// Shooting residuals `eta_{i+1} - f(eta_i)` followed by the goal-line residual.
    pub fn constraints(&self, z: &[f64]) -> Vec<f64> {
        let h = self.ds(z);
        let mut c = Vec::with_capacity(self.n_constraints());
        for i in 0..self.n {
            let next = rk4_raw(self.state(z, i), self.kappa(z, i), h);
            let actual = self.state(z, i + 1);
            c.extend((0..3).map(|k| actual[k] - next[k]));
        }
        c.push(self.state(z, self.n)[0] - self.x_goal);
        c
    }

    /// States obtained by integrating the curvatures from the start.
    pub fn rollout(&self, kappas: &[f64], h: f64) -> Vec<[f64; 3]> {
        let mut states = Vec::with_capacity(kappas.len() + 1);
        states.push(self.start);
        for &k in kappas {
            let last = *states.last().expect("non-empty");
            states.push(rk4_raw(last, k, h));
        }
        states
    }

    /// Step within the bounds whose rollout ends exactly on the goal line, if one exists.
    pub fn fit_step(&self, kappas: &[f64]) -> Option<f64> {
        let end_x = |h: f64| self.rollout(kappas, h).last().expect("non-empty")[0] - self.x_goal;
        let (mut lo, mut hi) = self.ds_bounds;
        let (flo, fhi) = (end_x(lo), end_x(hi));
        if flo > 0.0 || fhi < 0.0 {
            return None;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let f = end_x(mid);
            if f.abs() <= 1e-10 {
                return Some(mid);
            }
            if f < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
        }
        let mid = 0.5 * (lo + hi);
        (end_x(mid).abs() <= 1e-8).then_some(mid)
    }

    /// Feasible decision vector from curvatures alone (clipped to the box), or None.
    pub fn project(&self, kappas: &[f64]) -> Option<Vec<f64>> {
        let lim = 1.0 / self.r_min;
        let k: Vec<f64> = kappas.iter().map(|k| k.clamp(-lim, lim)).collect();
        let h = self.fit_step(&k)?;
        let states = self.rollout(&k, h);
        Some(self.pack(&states, &k, h))
    }

    pub fn max_residual(&self, z: &[f64]) -> f64 {
        self.constraints(z).iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Converged,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationTrace {
    pub iter: usize,
    pub objective: f64,
    pub max_residual: f64,
    pub step_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizedPath {
    pub poses: Vec<Pose<f64>>,
    pub curvatures: Vec<f64>,
    pub ds: f64,
    pub objective: f64,
    pub warm_start_objective: f64,
    pub status: SolverStatus,
    pub trace: Vec<IterationTrace>,
}

impl OptimizedPath {
    pub fn path(&self) -> PlannedPath {
        PlannedPath::from_poses(self.poses.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimizerParams {
    pub ds_init: f64,
    pub r_min: f64,
    pub lambda: f64,
    pub x_goal: f64,
    /// Lateral extent the reference point must stay within.
    pub y_bounds: (f64, f64),
    pub max_iter: usize,
    pub kkt_tol: f64,
    pub feas_tol: f64,
    /// Pure-pursuit lookahead used to build the warm start.
    pub lookahead: f64,
    pub record_trace: bool,
}

impl Default for OptimizerParams {
    fn default() -> Self {
        Self {
            ds_init: 4.0,
            r_min: 150.0,
            lambda: 5e4,
            x_goal: 0.0,
            y_bounds: (f64::NEG_INFINITY, f64::INFINITY),
            max_iter: 300,
            kkt_tol: 1e-5,
            feas_tol: 1e-6,
            lookahead: 20.0,
            record_trace: false,
        }
    }
}

/// Curvature that steers a unicycle at `pose` toward `target` along a circular arc.
pub fn pursuit_curvature(pose: &Pose<f64>, target: Point2<f64>) -> f64 {
    let local = pose.to_body(target);
    let d2 = local.norm_sq();
    if d2 <= 0.0 {
        return 0.0;
    }
    2.0 * local.y / d2
}

/// Curvatures of a curvature-limited pure-pursuit rollout that tracks `reference` at step `h`.
pub fn pursuit_controls(start: &Pose<f64>, reference: &PlannedPath, n: usize, h: f64, r_min: f64, lookahead: f64) -> Vec<f64> {
    let lim = 1.0 / r_min;
    let mut s = [start.x, start.y, start.psi];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let pose = Pose::new(s[0], s[1], s[2]);
        let (sp, _) = reference.project(pose.position());
        let mut target = reference.sample(sp + lookahead);
        if sp + lookahead > reference.length() {
            // Extend the reference straight past its end.
            let end = reference.sample(reference.length());
            let extra = sp + lookahead - reference.length();
            target = Pose::new(end.x + extra * end.psi.cos(), end.y + extra * end.psi.sin(), end.psi);
        }
        let k = pursuit_curvature(&pose, target.position()).clamp(-lim, lim);
        out.push(k);
        s = rk4_raw(s, k, h);
    }
    out
}

/// Part of `path` up to where it first reaches `x = x_goal`.
pub fn truncate_at_goal(path: &PlannedPath, x_goal: f64) -> PlannedPath {
    let mut poses = Vec::new();
    for (k, p) in path.poses.iter().enumerate() {
        if p.x >= x_goal && k > 0 {
            let a = path.poses[k - 1];
            let t = if p.x > a.x { ((x_goal - a.x) / (p.x - a.x)).clamp(0.0, 1.0) } else { 1.0 };
            poses.push(crate::geometry::interpolate_pose(&a, p, t));
            return PlannedPath::from_poses(poses);
        }
        poses.push(*p);
    }
    PlannedPath::from_poses(poses)
}

/// Feasible warm start: pure-pursuit rollout tracking the reference, fitted to the goal line.
pub fn warm_start_vector(problem: &NlpProblem, reference: &PlannedPath, h0: f64, lookahead: f64) -> Option<Vec<f64>> {
    let start = Pose::new(problem.start[0], problem.start[1], problem.start[2]);
    let kappas = pursuit_controls(&start, reference, problem.n, h0, problem.r_min, lookahead);
    let mut z = problem.project(&kappas)?;
    // Keep the heading continuous with the (possibly unwrapped) start.
    for i in 0..problem.n {
        let base = 3 * i;
        let prev = if i == 0 { problem.start[2] } else { z[base - 1] };
        z[base + 2] = prev + wrap_pi(z[base + 2] - prev);
    }
    Some(z)
}

struct LbfgsResult {
    x: Vec<f64>,
    fx: f64,
    iters: usize,
    pg_norm: f64,
}

fn project_box(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

fn projected_grad_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((&xi, &gi), (&l, &h))| (xi - (xi - gi).clamp(l, h)).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Box-constrained limited-memory BFGS with projected Armijo backtracking. `f` may return
/// `None` for points outside its domain; `on_iter` sees each accepted iterate.
fn minimize_box(
    mut f: impl FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_iter: usize,
    gtol: f64,
    mut on_iter: impl FnMut(usize, &[f64], f64, f64),
) -> Option<LbfgsResult> {
    const MEMORY: usize = 10;
    let n = x0.len();
    let mut x = x0.to_vec();
    project_box(&mut x, lo, hi);
    let (mut fx, mut g) = f(&x)?;
    let mut mem: std::collections::VecDeque<(Vec<f64>, Vec<f64>, f64)> = Default::default();
    let mut iters = 0;
    let mut pg = projected_grad_norm(&x, &g, lo, hi);
    while iters < max_iter && pg > gtol {
        iters += 1;
        let active: Vec<bool> = (0..n)
            .map(|i| (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0))
            .collect();
        let mut q: Vec<f64> = g.iter().zip(&active).map(|(&gi, &a)| if a { 0.0 } else { gi }).collect();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut d: Vec<f64> = q.iter().zip(&active).map(|(&v, &a)| if a { 0.0 } else { -v }).collect();
        if dot(&d, &g) >= 0.0 {
            mem.clear();
            d = g.iter().zip(&active).map(|(&gi, &a)| if a { 0.0 } else { -gi }).collect();
        }
        let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut t = if mem.is_empty() { (0.1 / dmax).min(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            project_box(&mut xn, lo, hi);
            let step: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &step);
            if decrease < 0.0 {
                if let Some((fn_, gn)) = f(&xn) {
                    if fn_ <= fx + 1e-4 * decrease {
                        accepted = Some((xn, fn_, gn, step));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        let Some((xn, fn_, gn, s)) = accepted else { break };
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if mem.len() == MEMORY {
                mem.pop_front();
            }
            mem.push_back((s.clone(), y, 1.0 / sy));
        }
        x = xn;
        fx = fn_;
        g = gn;
        pg = projected_grad_norm(&x, &g, lo, hi);
        on_iter(iters, &x, fx, dot(&s, &s).sqrt());
    }
    Some(LbfgsResult { x, fx, iters, pg_norm: pg })
}

/// Reverse sweep through the rollout. `state_seed[i]` is the direct sensitivity to state `i`
/// (index 0 ignored). Returns sensitivities to the scaled curvatures and to the step.
fn adjoint(problem: &NlpProblem, states: &[[f64; 3]], kappas: &[f64], h: f64, state_seed: &[[f64; 3]]) -> (Vec<f64>, f64) {
    let n = kappas.len();
    let mut gu = vec![0.0; n];
    let mut gh = 0.0;
    let mut lam = state_seed[n];
    for i in (0..n).rev() {
        let [d_psi, d_kappa, d_h] = rk4_partials(states[i], kappas[i], h);
        gu[i] = (lam[0] * d_kappa[0] + lam[1] * d_kappa[1] + lam[2] * d_kappa[2]) / problem.r_min;
        gh += lam[0] * d_h[0] + lam[1] * d_h[1] + lam[2] * d_h[2];
        if i > 0 {
            let s = state_seed[i];
            lam = [s[0] + lam[0], s[1] + lam[1], s[2] + lam[0] * d_psi[0] + lam[1] * d_psi[1] + lam[2]];
        }
    }
    (gu, gh)
}

/// Objective as a function of the scaled curvatures alone: states follow by rollout and the
/// step is fitted so the last pose lies on the goal line. Returns the objective, its gradient
/// and the full decision vector.
pub fn condensed_objective(problem: &NlpProblem, u: &[f64]) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    let n = problem.n;
    let kappas: Vec<f64> = u.iter().map(|v| v / problem.r_min).collect();
    let h = problem.fit_step(&kappas)?;
    let states = problem.rollout(&kappas, h);
    let z = problem.pack(&states, &kappas, h);
    let (f, g) = problem.objective(&z);
    let mut seed = vec![[0.0; 3]; n + 1];
    for i in 1..=n {
        seed[i] = [g[3 * (i - 1)], g[3 * (i - 1) + 1], g[3 * (i - 1) + 2]];
    }
    let (mut gu, gh_states) = adjoint(problem, &states, &kappas, h, &seed);
    for (gi, direct) in gu.iter_mut().zip(&g[3 * n..4 * n]) {
        *gi += direct;
    }
    let gh = gh_states + g[4 * n];
    let mut xseed = vec![[0.0; 3]; n + 1];
    xseed[n][0] = 1.0;
    let (xu, xh) = adjoint(problem, &states, &kappas, h, &xseed);
    if xh.abs() < 1e-12 {
        return None;
    }
    // Implicit step dependence keeps the goal constraint satisfied.
    for (gi, dx) in gu.iter_mut().zip(&xu) {
        *gi -= gh * dx / xh;
    }
    Some((f, gu, z))
}

fn within_lateral(z: &[f64], n: usize, y_bounds: (f64, f64)) -> bool {
    (0..n).all(|i| {
        let y = z[3 * i + 1];
        y >= y_bounds.0 && y <= y_bounds.1
    })
}

/// Refines `warm_start` (which should connect `start` to the goal line). The shooting
/// constraints and the goal line are eliminated exactly (rollout plus step fit), and the
/// curvatures are optimized with projected L-BFGS, so every iterate is feasible.
pub fn optimize_path(start: &Pose<f64>, warm_start: &PlannedPath, field: &CostField, body: &BodyPointSet, params: &OptimizerParams) -> Result<OptimizedPath> {
    if warm_start.poses.len() < 2 {
        return Err(IceNavError::InfeasibleWarmStart("warm start needs at least two poses".into()));
    }
    let reference = truncate_at_goal(warm_start, params.x_goal);
    let length = reference.length();
    if !(length > 0.0) || reference.poses.last().is_none_or(|p| p.x < params.x_goal - 1e-6) {
        return Err(IceNavError::InfeasibleWarmStart("warm start does not reach the goal line".into()));
    }
    let n = ((length / params.ds_init).round() as usize).max(2);
    let h0 = length / n as f64;
    let problem = NlpProblem {
        start: [start.x, start.y, start.psi],
        n,
        x_goal: params.x_goal,
        r_min: params.r_min,
        lambda: params.lambda,
        ds_bounds: (0.5 * h0, 2.0 * h0),
        body,
        field,
    };
    let z0 = warm_start_vector(&problem, &reference, h0, params.lookahead)
        .ok_or_else(|| IceNavError::InfeasibleWarmStart("warm start cannot be fitted to the goal line".into()))?;
    let warm_obj = problem.objective(&z0).0;
    let u0 = z0[3 * n..4 * n].to_vec();
    let lo = vec![-1.0; n];
    let hi = vec![1.0; n];
    let mut trace = Vec::new();
    let record = params.record_trace;
    let result = minimize_box(
        |u| condensed_objective(&problem, u).map(|(f, g, _)| (f, g)),
        &u0,
        &lo,
        &hi,
        params.max_iter,
        params.kkt_tol,
        |iter, u, f, step| {
            if record {
                let res = condensed_objective(&problem, u).map_or(f64::INFINITY, |(_, _, z)| problem.max_residual(&z));
                trace.push(IterationTrace { iter, objective: f, max_residual: res, step_norm: step });
            }
        },
    );
    let mut best = (warm_obj, z0, SolverStatus::MaxIter);
    if let Some(r) = result {
        if let Some((f, _, z)) = condensed_objective(&problem, &r.x) {
            let status = if r.pg_norm <= params.kkt_tol { SolverStatus::Converged } else { SolverStatus::MaxIter };
            if f <= best.0 && within_lateral(&z, n, params.y_bounds) && problem.max_residual(&z) <= params.feas_tol {
                best = (f, z, status);
            }
        }
        let _ = (r.iters, r.fx);
    }
    let (objective, zb, mut status) = best;
    if problem.max_residual(&zb) > params.feas_tol {
        status = SolverStatus::Infeasible;
    }
    let mut poses = vec![*start];
    poses.extend((1..=n).map(|i| {
        let s = problem.state(&zb, i);
        Pose::new(s[0], s[1], s[2])
    }));
    Ok(OptimizedPath {
        poses,
        curvatures: (0..n).map(|i| problem.kappa(&zb, i)).collect(),
        ds: problem.ds(&zb),
        objective,
        warm_start_objective: warm_obj,
        status,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmap::Costmap;
    use crate::geometry::GridSpec;

    fn zero_field() -> CostField {
        let g = GridSpec::covering(2.0, -100.0, 600.0, 0.0, 200.0).unwrap();
        CostField::with_defaults(&Costmap::zeros(g), 18.0).unwrap()
    }

    #[test]
    fn full_scale_body_points() {
        let b = default_body_points(&ShipFootprint::default(), 6.0, 4.8e-7, 2.0).unwrap();
        assert_eq!(b.points.len(), 52);
        let rows: std::collections::BTreeSet<i64> = b.points.iter().map(|p| (p.y * 1e6).round() as i64).collect();
        assert_eq!(rows.len(), 4);
        let expected = 4.8e-7 * 36.0 / (76.2 * 4.0);
        assert!(b.weights.iter().all(|&w| (w - expected).abs() < 1e-20));
        let sparse = default_body_points(&ShipFootprint::default(), 76.2, 1.0, 2.0).unwrap();
        assert_eq!(sparse.points.len(), 2);
    }

    #[test]
    fn rk4_straight_is_exact() {
        let p = rk4_unicycle_step(&Pose::new(1.0, 2.0, 0.5), 0.0, 4.0);
        assert!((p.x - (1.0 + 4.0 * 0.5f64.cos())).abs() < 1e-15);
        assert!((p.y - (2.0 + 4.0 * 0.5f64.sin())).abs() < 1e-15);
        assert_eq!(p.psi, 0.5);
    }

    fn bumpy_field() -> CostField {
        let g = GridSpec::covering(2.0, -100.0, 300.0, 0.0, 100.0).unwrap();
        let mut map = Costmap::zeros(g);
        for iy in 0..g.n_rows {
            for ix in 0..g.n_cols {
                let c = g.cell_center(ix, iy);
                let d = c.dist(Point2::new(80.0, 55.0));
                map.cost[g.index(ix, iy)] = if d < 20.0 { 1e7 * (1.0 - d / 20.0) } else { 0.0 };
            }
        }
        CostField::with_defaults(&map, 18.0).unwrap()
    }

    #[test]
    fn quarter_circle() {
        let r = 150.0;
        let steps = 50;
        let h = r * std::f64::consts::FRAC_PI_2 / steps as f64;
        let mut p = Pose::new(0.0, 0.0, 0.0);
        for _ in 0..steps {
            p = rk4_unicycle_step(&p, 1.0 / r, h);
        }
        assert!(p.position().dist(Point2::new(r, r)) < 1e-3);
    }

    #[test]
    fn condensed_gradient_matches_differences() {
        let field = bumpy_field();
        let body = default_body_points(&ShipFootprint::default(), 6.0, 1e-6, 2.0).unwrap();
        let problem = NlpProblem {
            start: [0.0, 50.0, 0.1],
            n: 40,
            x_goal: 160.0,
            r_min: 150.0,
            lambda: 5e4,
            ds_bounds: (2.0, 8.0),
            body: &body,
            field: &field,
        };
        let u: Vec<f64> = (0..40).map(|i| 0.3 * ((i as f64) * 0.37).sin() - 0.15).collect();
        let (_, g, _) = condensed_objective(&problem, &u).unwrap();
        for i in [0, 7, 20, 39] {
            let e = 1e-6;
            let mut up = u.clone();
            up[i] += e;
            let mut dn = u.clone();
            dn[i] -= e;
            let fd = (condensed_objective(&problem, &up).unwrap().0 - condensed_objective(&problem, &dn).unwrap().0) / (2.0 * e);
            assert!((fd - g[i]).abs() <= 1e-4 * g[i].abs().max(1.0), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn open_water_straight() {
        let field = zero_field();
        let body = default_body_points(&ShipFootprint::default(), 6.0, 1e-6, 2.0).unwrap();
        let start = Pose::new(0.0, 100.0, 0.0);
        let warm = PlannedPath::from_poses(vec![start, Pose::new(500.0, 100.0, 0.0)]);
        let params = OptimizerParams { x_goal: 500.0, ..Default::default() };
        let r = optimize_path(&start, &warm, &field, &body, &params).unwrap();
        assert!((r.objective - 500.0).abs() < 1e-6, "{}", r.objective);
        assert!(r.poses.iter().all(|p| (p.y - 100.0).abs() < 1e-9));
    }
}
