//! Closed-loop trials, metrics, alpha calibration and batch experiments.

use crate::costmap::build_costmap;
use crate::dynamics::{allocate_thrust, dp_control, step_vessel, DpGains, Setpoint, ShipState, VesselModel};
use crate::error::{IceNavError, Result};
use crate::geometry::{wrap_pi, GridSpec, PlannedPath, Point2, Pose};
use crate::icefield::{generate_field, FieldSpec, IceField};
use crate::lattice::{generate_control_set, ControlSet};
use crate::navigation::{path_curvature, swept_cost, NavConfig, NavPlan, Navigator, PlannerKind};
use crate::physics::{CollisionEvent, PhysicsParams, SimWorld};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialConfig {
    pub nav: NavConfig,
    pub physics: PhysicsParams,
    pub dt_ctrl: f64,
    /// Distance between the start pose and the ice field edge.
    pub start_offset: f64,
    /// Simulated-time cap as a multiple of the nominal straight transit time.
    pub timeout_factor: f64,
    pub dp_bandwidth: f64,
    pub dp_damping: f64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            nav: NavConfig::default(),
            physics: PhysicsParams::default(),
            dt_ctrl: 0.02,
            start_offset: 100.0,
            timeout_factor: 3.0,
            dp_bandwidth: 0.05,
            dp_damping: 1.0,
        }
    }
}

impl TrialConfig {
    /// Configuration sized to a field's channel.
    pub fn for_field(&self, field: &IceField) -> Self {
        let mut c = *self;
        c.nav.x_goal = field.channel_length;
        c.nav.channel_width = field.channel_width;
        c
    }
}

/// One control step of the closed loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub eta: [f64; 3],
    pub nu: [f64; 3],
    /// Realized (saturated) actuator force.
    pub tau: [f64; 3],
    /// Ice load applied over this step.
    pub tau_env: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub mean_collided_mass: f64,
    pub max_impact_force: f64,
    pub mean_impact_force: f64,
    pub collisions: usize,
    pub pushed_floes: usize,
    /// Sum of per-event ship kinetic-energy change (negative for a loss).
    pub delta_k_ship: f64,
    pub energy: f64,
    pub total_time: f64,
    pub path_length: f64,
    pub mean_cross_track: f64,
    pub mean_heading_error: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub t: f64,
    pub subgoal: f64,
    pub stage1_objective: f64,
    pub stage2_objective: Option<f64>,
    pub kept_previous: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub planner: String,
    pub concentration: f64,
    pub metrics: TrialMetrics,
    pub plans: Vec<PlanSummary>,
    pub trajectory: Vec<TrajectorySample>,
    pub events: Vec<CollisionEvent>,
    /// Wall-clock planning time per replan (ms); excluded from reproducibility checks.
    pub planning_ms: Vec<f64>,
}

/// Everything needed to run trials that is expensive to build.
#[derive(Clone)]
pub struct TrialContext {
    pub model: VesselModel,
    /// Needed only by the two-stage planner.
    pub control_set: Option<Arc<ControlSet>>,
}

impl TrialContext {
    pub fn new(model: VesselModel, cfg: &NavConfig) -> Result<Self> {
        let cs = generate_control_set(&cfg.lattice, &model.footprint, cfg.costmap.resolution)?;
        Ok(Self { model, control_set: Some(Arc::new(cs)) })
    }

    /// Context for the baselines only.
    pub fn baselines_only(model: VesselModel) -> Self {
        Self { model, control_set: None }
    }
}

/// Per-floe accumulators for the work metrics.
#[derive(Debug, Clone, Copy, Default)]
struct FloeWork {
    positive_work: f64,
    initial_speed_sq: f64,
    max_speed_sq: f64,
    arc_length: f64,
    last_velocity: Point2<f64>,
    last_position: Point2<f64>,
}

/// Runs one closed-loop trial. The ship starts `start_offset` before the field, centered and
/// aligned with the channel, and the trial ends when its origin crosses `x_goal`.
pub fn run_trial(field: &IceField, seed: u64, planner: PlannerKind, cfg: &TrialConfig, ctx: &TrialContext) -> Result<TrialRecord> {
    run_trial_with(field, seed, planner, cfg, ctx, |_, _| {})
}

/// As [`run_trial`], calling `on_plan` with each new plan.
pub fn run_trial_with(
    field: &IceField,
    seed: u64,
    planner: PlannerKind,
    cfg: &TrialConfig,
    ctx: &TrialContext,
    mut on_plan: impl FnMut(f64, &NavPlan),
) -> Result<TrialRecord> {
    let cfg = cfg.for_field(field);
    let dt = cfg.dt_ctrl;
    let model = &ctx.model;
    let gains = DpGains::pole_placement(model, cfg.dp_bandwidth, cfg.dp_damping);
    let cs = if planner == PlannerKind::AutoIceNav { ctx.control_set.clone() } else { None };
    let mut nav = Navigator::new(planner, cfg.nav, model.footprint.clone(), cs)?;
    let start = Pose::new(-cfg.start_offset, 0.5 * field.channel_width, 0.0);
    let mut state = ShipState::at_rest(start);
    let mut world = SimWorld::new(field, model.footprint.clone(), start, cfg.physics)?;
    let timeout = cfg.timeout_factor * (cfg.nav.x_goal - start.x) / cfg.nav.u_nom;

    let mut work: Vec<FloeWork> = world
        .floes
        .iter()
        .map(|f| FloeWork { last_position: f.position, last_velocity: f.velocity, initial_speed_sq: f.velocity.norm_sq(), max_speed_sq: f.velocity.norm_sq(), ..Default::default() })
        .collect();
    let mut pushed = BTreeSet::new();
    let mut trajectory = Vec::new();
    let mut events = Vec::new();
    let mut plans = Vec::new();
    let mut planning_ms = Vec::new();
    let mut tau_env = [0.0; 3];
    let mut cross_track = 0.0;
    let mut heading_err = 0.0;
    let mut t = 0.0;
    let mut step = 0usize;
    let mut next_replan = 0.0;
    let mut plan: Option<(NavPlan, f64, f64)> = None;
    while state.eta.x < cfg.nav.x_goal {
        if t >= timeout {
            return Err(IceNavError::TrialTimeout(t));
        }
        if t >= next_replan - 1e-9 {
            let snapshot = world.snapshot(field.channel_length);
            let p = nav.plan(&state, &snapshot).map_err(|e| match e {
                IceNavError::PlanningFailure(m) => IceNavError::PlanningFailure(format!(
                    "{m} (t = {t:.1} s, pose = ({:.2}, {:.2}, {:.3}))",
                    state.eta.x, state.eta.y, state.eta.psi
                )),
                other => other,
            })?;
            on_plan(t, &p);
            plans.push(PlanSummary { t, subgoal: p.subgoal, stage1_objective: p.stage1_objective, stage2_objective: p.stage2_objective, kept_previous: p.kept_previous });
            planning_ms.push(p.planning_ms);
            let (s0, _) = p.path.project(state.eta.position());
            plan = Some((p, s0, t));
            next_replan += cfg.nav.replan_period;
        }
        let (p, s0, t_plan) = plan.as_ref().expect("planned above");
        let elapsed = t - t_plan;
        let s = s0 + p.profile.distance_at(elapsed);
        let sp_pose = p.path.sample(s);
        let kappa = path_curvature(&p.path, s, 4.0);
        let sp = Setpoint::moving(sp_pose, p.profile.speed_at(elapsed), kappa, p.profile.accel_at(elapsed));
        let (s_ship, dist) = p.path.project(state.eta.position());
        cross_track += dist;
        heading_err += wrap_pi(state.eta.psi - p.path.sample(s_ship).psi).abs();

        let tau = allocate_thrust(dp_control(&state, &sp, &gains, model), model).tau;
        // The ice load measured over the previous interval drives this step.
        let next = step_vessel(&state, tau, tau_env, model, dt);
        trajectory.push(TrajectorySample { t, eta: [state.eta.x, state.eta.y, state.eta.psi], nu: state.nu, tau, tau_env });
        let out = world.step_world(next.eta, dt)?;
        tau_env = out.tau_env;
        pushed.extend(out.pushed.iter().copied());
        events.extend(out.events);
        for (w, f) in work.iter_mut().zip(&world.floes) {
            let dv = f.velocity - w.last_velocity;
            // Backward difference pairs the velocity change with the newer velocity.
            w.positive_work += dv.dot(f.velocity).max(0.0);
            w.max_speed_sq = w.max_speed_sq.max(f.velocity.norm_sq());
            w.arc_length += f.position.dist(w.last_position);
            w.last_velocity = f.velocity;
            w.last_position = f.position;
        }
        state = next;
        step += 1;
        t = step as f64 * dt;
    }
    trajectory.push(TrajectorySample { t, eta: [state.eta.x, state.eta.y, state.eta.psi], nu: state.nu, tau: [0.0; 3], tau_env });

    let n_steps = step.max(1) as f64;
    let mut metrics = compute_metrics(&trajectory, &events, dt, cfg.physics.dt_sim);
    metrics.mean_cross_track = cross_track / n_steps;
    metrics.mean_heading_error = heading_err / n_steps;
    let (w1, w2, w3) = work_metrics(pushed.iter().map(|&i| (world.floes[i].mass, &work[i])));
    metrics.w1 = w1;
    metrics.w2 = w2;
    metrics.w3 = w3;
    metrics.pushed_floes = pushed.len();
    Ok(TrialRecord {
        seed,
        planner: planner.name().to_string(),
        concentration: field.concentration,
        metrics,
        plans,
        trajectory,
        events,
        planning_ms,
    })
}

fn work_metrics<'a>(floes: impl Iterator<Item = (f64, &'a FloeWork)>) -> (f64, f64, f64) {
    let (mut w1, mut w2, mut w3) = (0.0, 0.0, 0.0);
    for (m, w) in floes {
        w1 += m * w.positive_work;
        w2 += 0.5 * m * (w.max_speed_sq - w.initial_speed_sq);
        w3 += m * w.arc_length;
    }
    (w1, w2, w3)
}

/// Work done on the ice from sampled floe velocities and positions (one row per sample).
/// Returns (W1, W2, W3) summed over the given floes.
pub fn work_from_samples(floes: &[(f64, Vec<Point2<f64>>, Vec<Point2<f64>>)]) -> (f64, f64, f64) {
    let acc: Vec<(f64, FloeWork)> = floes
        .iter()
        .filter(|(_, v, p)| !v.is_empty() && v.len() == p.len())
        .map(|(m, v, p)| {
            let mut w = FloeWork { initial_speed_sq: v[0].norm_sq(), max_speed_sq: v[0].norm_sq(), ..Default::default() };
            for k in 1..v.len() {
                w.positive_work += (v[k] - v[k - 1]).dot(v[k]).max(0.0);
                w.max_speed_sq = w.max_speed_sq.max(v[k].norm_sq());
                w.arc_length += p[k].dist(p[k - 1]);
            }
            (*m, w)
        })
        .collect();
    work_metrics(acc.iter().map(|(m, w)| (*m, w)))
}

/// Mechanical energy spent by the actuators over a log: `dt · Σ |ν|·|τ|`.
pub fn propulsion_energy(log: &[TrajectorySample], dt_ctrl: f64) -> f64 {
    dt_ctrl * log.iter().map(|s| (0..3).map(|i| s.nu[i].abs() * s.tau[i].abs()).sum::<f64>()).sum::<f64>()
}

/// Collision, energy and timing metrics from the trajectory and event logs.
pub fn compute_metrics(log: &[TrajectorySample], events: &[CollisionEvent], dt_ctrl: f64, dt_sim: f64) -> TrialMetrics {
    let forces: Vec<f64> = events.iter().map(|e| e.force(dt_sim)).collect();
    let mut masses = BTreeMap::new();
    for e in events {
        masses.insert(e.floe_id, e.floe_mass);
    }
    let path_length = log.windows(2).map(|w| (w[1].eta[0] - w[0].eta[0]).hypot(w[1].eta[1] - w[0].eta[1])).sum();
    TrialMetrics {
        mean_collided_mass: if masses.is_empty() { 0.0 } else { masses.values().sum::<f64>() / masses.len() as f64 },
        max_impact_force: forces.iter().copied().fold(0.0, f64::max),
        mean_impact_force: if forces.is_empty() { 0.0 } else { forces.iter().sum::<f64>() / forces.len() as f64 },
        collisions: events.len(),
        delta_k_ship: events.iter().map(CollisionEvent::delta_k_ship).sum(),
        energy: propulsion_energy(log, dt_ctrl),
        total_time: log.last().map_or(0.0, |s| s.t),
        path_length,
        ..TrialMetrics::default()
    }
}

/// Inputs for one calibration sample: ship energy loss over propulsion energy, the
/// executed path length and its collision cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub loss_ratio: f64,
    pub length: f64,
    pub collision_cost: f64,
}

impl CalibrationSample {
    /// The weight that makes the collision share of the objective equal the loss ratio.
    pub fn alpha(&self) -> Result<f64> {
        let r = self.loss_ratio;
        if !(0.0..1.0).contains(&r) {
            return Err(IceNavError::CalibrationError(format!("energy-loss ratio {r} outside [0, 1)")));
        }
        if !(self.collision_cost > 0.0) {
            return Err(IceNavError::CalibrationError("collision cost must be positive".into()));
        }
        Ok(r * self.length / (self.collision_cost * (1.0 - r)))
    }
}

/// Mean of the per-trial weights.
pub fn calibrate_alpha(samples: &[CalibrationSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(IceNavError::CalibrationError("no trials".into()));
    }
    let alphas: Result<Vec<f64>> = samples.iter().map(CalibrationSample::alpha).collect();
    Ok(alphas?.iter().sum::<f64>() / samples.len() as f64)
}

/// Calibration sample for a finished trial: collision cost of the executed path on the
/// costmap of the initial field.
pub fn calibration_sample(record: &TrialRecord, field: &IceField, cfg: &TrialConfig, ctx: &TrialContext) -> Result<CalibrationSample> {
    let cfg = cfg.for_field(field);
    let poses: Vec<Pose<f64>> = record.trajectory.iter().map(|s| Pose::new(s.eta[0], s.eta[1], s.eta[2])).collect();
    let path = PlannedPath::from_poses(poses);
    let grid = GridSpec::covering(cfg.nav.costmap.resolution, -cfg.start_offset - ctx.model.footprint.length, field.channel_length + ctx.model.footprint.length, 0.0, field.channel_width)?;
    let map = build_costmap(field, &grid, cfg.nav.u_nom, cfg.nav.ship_mass, &cfg.nav.costmap)?;
    let collision_cost = swept_cost(&path, &map, &ctx.model.footprint);
    let m = &record.metrics;
    if !(m.energy > 0.0) {
        return Err(IceNavError::CalibrationError("trial spent no propulsion energy".into()));
    }
    Ok(CalibrationSample { loss_ratio: -m.delta_k_ship / m.energy, length: path.length(), collision_cost })
}

// ---------------------------------------------------------------- batches

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub concentrations: Vec<f64>,
    pub fields_per_concentration: usize,
    pub planners: Vec<PlannerKind>,
    /// Channel length and width (m).
    pub channel: [f64; 2],
    pub seed: u64,
    pub trial: TrialConfig,
    /// Also run the two-stage planner without its optimization stage.
    pub ablation: bool,
    pub threads: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            concentrations: vec![0.3, 0.5],
            fields_per_concentration: 10,
            planners: PlannerKind::ALL.to_vec(),
            channel: [400.0, 80.0],
            seed: 0,
            trial: TrialConfig::default(),
            ablation: false,
            threads: None,
            output_dir: None,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.planners.is_empty() || self.fields_per_concentration == 0 || self.concentrations.is_empty() {
            return Err(IceNavError::ConfigError("experiment needs at least one planner and one field".into()));
        }
        Ok(())
    }

    /// Seed of field `k` at concentration index `c`.
    pub fn field_seed(&self, c: usize, k: usize) -> u64 {
        self.seed + (c * self.fields_per_concentration + k) as u64
    }

    pub fn field(&self, c: usize, k: usize) -> Result<IceField> {
        let mut fs = FieldSpec::desk(self.concentrations[c]);
        fs.channel_length = self.channel[0];
        fs.channel_width = self.channel[1];
        generate_field(&fs, self.field_seed(c, k))
    }
}

/// Planner label used in outputs; the stage-1-only variant gets its own label.
pub const ABLATION_LABEL: &str = "auto-icenav-stage1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialFailure {
    pub seed: u64,
    pub concentration: f64,
    pub planner: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub concentration: f64,
    pub planner: String,
    pub trials: usize,
    pub failures: usize,
    pub success_rate: f64,
    pub mean: TrialMetrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchResult {
    /// (concentration index, field index, record)
    pub records: Vec<(usize, usize, TrialRecord)>,
    pub failures: Vec<TrialFailure>,
    pub summary: Vec<SummaryRow>,
    /// Only one planner took part, so success rates are trivially 100%.
    pub degenerate: bool,
}

impl BatchResult {
    pub fn record(&self, c: usize, k: usize, planner: &str) -> Option<&TrialRecord> {
        self.records.iter().find(|(ci, ki, r)| *ci == c && *ki == k && r.planner == planner).map(|(_, _, r)| r)
    }
}

/// Thread count from `ICENAV_THREADS`, else the spec, else rayon's default.
pub fn thread_count(spec_threads: Option<usize>) -> usize {
    std::env::var("ICENAV_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .or(spec_threads)
        .unwrap_or_else(rayon::current_num_threads)
}

/// Runs every (field, planner) pair, in parallel across trials, and aggregates.
pub fn run_batch(spec: &ExperimentSpec, ctx: &TrialContext) -> Result<BatchResult> {
    spec.validate()?;
    let mut jobs: Vec<(usize, usize, PlannerKind, bool)> = Vec::new();
    for c in 0..spec.concentrations.len() {
        for k in 0..spec.fields_per_concentration {
            for &p in &spec.planners {
                jobs.push((c, k, p, true));
            }
            if spec.ablation {
                jobs.push((c, k, PlannerKind::AutoIceNav, false));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(spec.threads))
        .build()
        .map_err(|e| IceNavError::ConfigError(e.to_string()))?;
    let outcomes: Vec<(usize, usize, String, f64, u64, Result<TrialRecord>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, k, planner, refine)| {
                let label = if refine { planner.name().to_string() } else { ABLATION_LABEL.to_string() };
                let seed = spec.field_seed(c, k);
                let mut cfg = spec.trial;
                cfg.nav.refine = refine;
                let result = spec.field(c, k).and_then(|field| {
                    let mut r = run_trial(&field, seed, planner, &cfg, ctx)?;
                    r.planner = label.clone();
                    Ok(r)
                });
                (c, k, label, spec.concentrations[c], seed, result)
            })
            .collect()
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (c, k, label, conc, seed, r) in outcomes {
        match r {
            Ok(r) => records.push((c, k, r)),
            Err(e) => failures.push(TrialFailure { seed, concentration: conc, planner: label, error: e.to_string() }),
        }
    }
    let mut labels: Vec<String> = spec.planners.iter().map(|p| p.name().to_string()).collect();
    if spec.ablation {
        labels.push(ABLATION_LABEL.to_string());
    }
    let mut summary = Vec::new();
    for (c, &conc) in spec.concentrations.iter().enumerate() {
        let wins = success_counts(&records, c, spec.fields_per_concentration, &spec.planners.iter().map(|p| p.name().to_string()).collect::<Vec<_>>());
        for label in &labels {
            let rs: Vec<&TrialMetrics> = records.iter().filter(|(ci, _, r)| *ci == c && &r.planner == label).map(|(_, _, r)| &r.metrics).collect();
            summary.push(SummaryRow {
                concentration: conc,
                planner: label.clone(),
                trials: rs.len(),
                failures: failures.iter().filter(|f| f.concentration == conc && &f.planner == label).count(),
                success_rate: 100.0 * wins.get(label).copied().unwrap_or(0) as f64 / spec.fields_per_concentration as f64,
                mean: mean_metrics(&rs),
            });
        }
    }
    Ok(BatchResult { records, failures, summary, degenerate: spec.planners.len() == 1 })
}

/// Fields where each planner's mean and max impact forces are both strictly lowest.
pub fn success_counts(records: &[(usize, usize, TrialRecord)], c: usize, n_fields: usize, planners: &[String]) -> BTreeMap<String, usize> {
    let mut wins = BTreeMap::new();
    for k in 0..n_fields {
        let here: Vec<&TrialRecord> = records.iter().filter(|(ci, ki, r)| *ci == c && *ki == k && planners.contains(&r.planner)).map(|(_, _, r)| r).collect();
        if let Some(w) = strict_winner(&here) {
            *wins.entry(w.to_string()).or_insert(0) += 1;
        }
    }
    wins
}

/// Planner whose mean and max impact forces are both strictly below every other's.
pub fn strict_winner<'a>(records: &[&'a TrialRecord]) -> Option<&'a str> {
    records
        .iter()
        .find(|a| {
            records.iter().all(|b| {
                std::ptr::eq(**a, *b)
                    || (a.metrics.mean_impact_force < b.metrics.mean_impact_force && a.metrics.max_impact_force < b.metrics.max_impact_force)
            })
        })
        .map(|r| r.planner.as_str())
}

pub fn mean_metrics(rs: &[&TrialMetrics]) -> TrialMetrics {
    if rs.is_empty() {
        return TrialMetrics::default();
    }
    let n = rs.len() as f64;
    let avg = |f: fn(&TrialMetrics) -> f64| rs.iter().map(|m| f(m)).sum::<f64>() / n;
    TrialMetrics {
        mean_collided_mass: avg(|m| m.mean_collided_mass),
        max_impact_force: avg(|m| m.max_impact_force),
        mean_impact_force: avg(|m| m.mean_impact_force),
        collisions: (rs.iter().map(|m| m.collisions).sum::<usize>() as f64 / n).round() as usize,
        pushed_floes: (rs.iter().map(|m| m.pushed_floes).sum::<usize>() as f64 / n).round() as usize,
        delta_k_ship: avg(|m| m.delta_k_ship),
        energy: avg(|m| m.energy),
        total_time: avg(|m| m.total_time),
        path_length: avg(|m| m.path_length),
        mean_cross_track: avg(|m| m.mean_cross_track),
        mean_heading_error: avg(|m| m.mean_heading_error),
        w1: avg(|m| m.w1),
        w2: avg(|m| m.w2),
        w3: avg(|m| m.w3),
    }
}

// ---------------------------------------------------------------- output

pub const SUMMARY_HEADER: &str = "concentration,planner,trials,failures,success_rate,mean_collided_mass_kg,max_impact_force_n,mean_impact_force_n,collisions,pushed_floes,delta_k_ship_j,energy_j,total_time_s,path_length_m,mean_cross_track_m,mean_heading_error_rad,w1_j,w2_j,w3_kgm";

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for r in rows {
        let m = &r.mean;
        let _ = writeln!(
            s,
            "{},{},{},{},{:.1},{:.6e},{:.6e},{:.6e},{},{},{:.6e},{:.6e},{:.3},{:.3},{:.4},{:.5},{:.6e},{:.6e},{:.6e}",
            r.concentration, r.planner, r.trials, r.failures, r.success_rate, m.mean_collided_mass, m.max_impact_force, m.mean_impact_force,
            m.collisions, m.pushed_floes, m.delta_k_ship, m.energy, m.total_time, m.path_length, m.mean_cross_track, m.mean_heading_error,
            m.w1, m.w2, m.w3
        );
    }
    s
}

pub fn trajectory_csv(log: &[TrajectorySample]) -> String {
    let mut s = String::from("t,x,y,psi,u,v,r,tau_x,tau_y,tau_n,tau_env_x,tau_env_y,tau_env_n\n");
    for k in log {
        let _ = writeln!(
            s,
            "{:.3},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3}",
            k.t, k.eta[0], k.eta[1], k.eta[2], k.nu[0], k.nu[1], k.nu[2], k.tau[0], k.tau[1], k.tau[2], k.tau_env[0], k.tau_env[1], k.tau_env[2]
        );
    }
    s
}

pub fn events_ndjson(events: &[CollisionEvent]) -> Result<String> {
    let mut s = String::new();
    for e in events {
        s.push_str(&serde_json::to_string(e)?);
        s.push('\n');
    }
    Ok(s)
}

/// Ice field outlines with one or more ship tracks on top.
pub fn trajectory_svg(field: &IceField, tracks: &[(&str, &[TrajectorySample])], x_min: f64) -> String {
    let (l, w) = (field.channel_length, field.channel_width);
    let scale = 4.0;
    let width = (l - x_min) * scale;
    let height = w * scale;
    let tx = |x: f64| (x - x_min) * scale;
    let ty = |y: f64| (w - y) * scale;
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">\n");
    let _ = writeln!(s, "<rect width=\"100%\" height=\"100%\" fill=\"#0b3d61\"/>");
    for f in &field.floes {
        let pts: Vec<String> = f.polygon.vertices().iter().map(|p| format!("{:.1},{:.1}", tx(p.x), ty(p.y))).collect();
        let _ = writeln!(s, "<polygon points=\"{}\" fill=\"#e8f1f5\" stroke=\"#9bb\" stroke-width=\"0.5\"/>", pts.join(" "));
    }
    let colors = ["#e4572e", "#f3a712", "#a8c686", "#669bbc"];
    for (i, (name, log)) in tracks.iter().enumerate() {
        let pts: Vec<String> = log.iter().step_by(25).map(|k| format!("{:.1},{:.1}", tx(k.eta[0]), ty(k.eta[1]))).collect();
        let c = colors[i % colors.len()];
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{c}\" stroke-width=\"2\"><title>{name}</title></polyline>", pts.join(" "));
        let _ = writeln!(s, "<text x=\"8\" y=\"{}\" fill=\"{c}\" font-size=\"14\" font-family=\"sans-serif\">{name}</text>", 18 + 16 * i);
    }
    s.push_str("</svg>\n");
    s
}

/// Histograms of impact force per planner, on a shared log-spaced axis.
pub fn impact_histogram_svg(series: &[(String, Vec<f64>)]) -> String {
    let all: Vec<f64> = series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|f| *f > 0.0).collect();
    let (w, h, bins) = (640.0, 320.0, 30usize);
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    if all.is_empty() {
        s.push_str("<text x=\"20\" y=\"40\" font-family=\"sans-serif\">no collisions</text>\n</svg>\n");
        return s;
    }
    let lo = all.iter().copied().fold(f64::INFINITY, f64::min).log10();
    let hi = all.iter().copied().fold(0.0, f64::max).log10() + 1e-9;
    let span = (hi - lo).max(1e-6);
    let colors = ["#e4572e", "#f3a712", "#4a7c59", "#669bbc"];
    let counts: Vec<Vec<usize>> = series
        .iter()
        .map(|(_, v)| {
            let mut c = vec![0usize; bins];
            for f in v.iter().filter(|f| **f > 0.0) {
                let b = (((f.log10() - lo) / span) * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize;
                c[b] += 1;
            }
            c
        })
        .collect();
    let peak = counts.iter().flatten().copied().max().unwrap_or(1).max(1) as f64;
    let (x0, y0, pw, ph) = (50.0, h - 40.0, w - 70.0, h - 70.0);
    for (i, c) in counts.iter().enumerate() {
        let pts: Vec<String> = c
            .iter()
            .enumerate()
            .map(|(b, &n)| format!("{:.1},{:.1}", x0 + pw * (b as f64 + 0.5) / bins as f64, y0 - ph * n as f64 / peak))
            .collect();
        let col = colors[i % colors.len()];
        let _ = writeln!(s, "<polyline points=\"{}\" fill=\"none\" stroke=\"{col}\" stroke-width=\"2\"/>", pts.join(" "));
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" fill=\"{col}\" font-size=\"12\" font-family=\"sans-serif\">{}</text>", w - 200.0, 20 + 14 * i, series[i].0);
    }
    let _ = writeln!(s, "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\" stroke=\"black\"/>", x0 + pw);
    let _ = writeln!(s, "<text x=\"{x0}\" y=\"{}\" font-size=\"12\" font-family=\"sans-serif\">impact force (N), log scale: 1e{lo:.1} to 1e{hi:.1}</text>", h - 12.0);
    s.push_str("</svg>\n");
    s
}

/// Writes the summary CSV, one JSON per trial and the plots under `dir`.
pub fn write_batch_outputs(dir: &Path, spec: &ExperimentSpec, batch: &BatchResult) -> Result<()> {
    let trials = dir.join("trials");
    let plots = dir.join("plots");
    std::fs::create_dir_all(&trials)?;
    std::fs::create_dir_all(&plots)?;
    std::fs::write(dir.join("summary.csv"), summary_csv(&batch.summary))?;
    if !batch.failures.is_empty() {
        std::fs::write(dir.join("failures.json"), serde_json::to_string_pretty(&batch.failures)?)?;
    }
    for (_, _, r) in &batch.records {
        let name = format!("c{:02}_s{}_{}.json", (r.concentration * 100.0).round() as i64, r.seed, r.planner);
        let slim = serde_json::json!({
            "seed": r.seed,
            "planner": r.planner,
            "concentration": r.concentration,
            "metrics": r.metrics,
            "plans": r.plans,
            "planning_ms": r.planning_ms,
            "trajectory": r.trajectory.iter().step_by(50).collect::<Vec<_>>(),
            "events": r.events,
        });
        std::fs::write(trials.join(name), serde_json::to_string(&slim)?)?;
    }
    for (c, &conc) in spec.concentrations.iter().enumerate() {
        let mut series: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for (ci, _, r) in &batch.records {
            if *ci == c {
                series.entry(r.planner.as_str()).or_default().extend(r.events.iter().map(|e| e.force(spec.trial.physics.dt_sim)));
            }
        }
        let series: Vec<(String, Vec<f64>)> = series.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let tag = (conc * 100.0).round() as i64;
        std::fs::write(plots.join(format!("impact_forces_c{tag:02}.svg")), impact_histogram_svg(&series))?;
        for k in 0..spec.fields_per_concentration {
            let field = spec.field(c, k)?;
            let tracks: Vec<(&str, &[TrajectorySample])> = batch
                .records
                .iter()
                .filter(|(ci, ki, _)| *ci == c && *ki == k)
                .map(|(_, _, r)| (r.planner.as_str(), r.trajectory.as_slice()))
                .collect();
            let svg = trajectory_svg(&field, &tracks, -spec.trial.start_offset);
            std::fs::write(plots.join(format!("trajectories_c{tag:02}_s{}.svg", spec.field_seed(c, k))), svg)?;
        }
    }
    Ok(())
}
