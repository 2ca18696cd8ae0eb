use clap::{Args, Parser, Subcommand};
use icenav_core::dynamics::{VesselConfig, VesselModel};
use icenav_core::error::{IceNavError, Result};
use icenav_core::harness::{
    calibrate_alpha, calibration_sample, events_ndjson, run_batch, run_trial_with, thread_count, trajectory_csv, trajectory_svg,
    write_batch_outputs, ExperimentSpec, TrialConfig, TrialContext,
};
use icenav_core::icefield::{generate_field, FieldSpec, IceField};
use icenav_core::navigation::{Navigator, PlannerKind};
use icenav_core::Pose;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "icenav", version, about = "Ship navigation in broken ice: planners, simulator and experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate ice-field JSON files.
    GenFields(GenFieldsArgs),
    /// Run one closed-loop trial and write its logs.
    Run(RunArgs),
    /// Run a batch experiment described by a JSON spec.
    Batch(BatchArgs),
    /// Estimate the collision-cost weight from Straight trials.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct GenFieldsArgs {
    /// Target concentrations in (0, 1).
    #[arg(long, value_delimiter = ',', default_values_t = [0.3, 0.5])]
    concentrations: Vec<f64>,
    /// Fields per concentration.
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Channel length and width (m).
    #[arg(long, num_args = 2, value_names = ["L", "W"], default_values_t = [400.0, 80.0])]
    channel: Vec<f64>,
    #[arg(long, default_value = "fields")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    planner: PlannerKind,
    #[arg(long)]
    field: PathBuf,
    /// Trial configuration JSON; missing keys take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Vessel JSON `{A, B, T, K, limits, footprint}`.
    #[arg(long)]
    vessel: Option<PathBuf>,
    /// Seed recorded with the trial.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "results/run")]
    out: PathBuf,
    /// Repeat for more output; `-v` writes the optimizer trace.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Output directory; overrides the spec's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value_t = 0.3)]
    concentration: f64,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 100)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn trial_config(path: Option<&Path>) -> Result<TrialConfig> {
    path.map_or_else(|| Ok(TrialConfig::default()), read_json)
}

fn gen_fields(args: &GenFieldsArgs) -> Result<()> {
    let [length, width] = args.channel[..] else {
        return Err(IceNavError::ConfigError("--channel takes a length and a width".into()));
    };
    std::fs::create_dir_all(&args.out)?;
    for (c, &conc) in args.concentrations.iter().enumerate() {
        let mut spec = FieldSpec::desk(conc);
        spec.channel_length = length;
        spec.channel_width = width;
        for k in 0..args.count {
            // Same seeding as batch experiments, so generated files match batch fields.
            let seed = args.seed + (c * args.count + k) as u64;
            let field = generate_field(&spec, seed)?;
            let name = format!("c{:02}_s{seed}.json", (conc * 100.0).round() as i64);
            std::fs::write(args.out.join(&name), field.to_json()?)?;
            println!("{name}: {} floes, concentration {:.3}", field.floes.len(), field.concentration);
        }
    }
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let field = IceField::from_json(&std::fs::read_to_string(&args.field)?)?;
    let mut cfg = trial_config(args.config.as_deref())?;
    cfg.nav.record_trace = args.verbose > 0;
    let model = match &args.vessel {
        Some(p) => VesselModel::from_config(&read_json::<VesselConfig>(p)?)?,
        None => VesselModel::default_psv(),
    };
    let ctx = if args.planner == PlannerKind::AutoIceNav { TrialContext::new(model, &cfg.nav)? } else { TrialContext::baselines_only(model) };

    std::fs::create_dir_all(&args.out)?;
    let trial_cfg = cfg.for_field(&field);
    let start = Pose::new(-cfg.start_offset, 0.5 * field.channel_width, 0.0);
    let nav = Navigator::new(args.planner, trial_cfg.nav, ctx.model.footprint.clone(), ctx.control_set.clone())?;
    let costmap = nav.planning_costmap(&start, &field)?;
    std::fs::write(args.out.join("costmap.csv"), costmap.to_csv())?;
    std::fs::write(args.out.join("costmap.json"), costmap.header_json())?;

    let mut debug = Vec::new();
    let mut trace = String::new();
    let record = run_trial_with(&field, args.seed, args.planner, &cfg, &ctx, |t, plan| {
        if let Some(d) = &plan.lattice_debug {
            debug.push(serde_json::json!({ "t": t, "kept_previous": plan.kept_previous, "lattice": d }));
        }
        for it in &plan.trace {
            let line = serde_json::json!({
                "t": t,
                "iter": it.iter,
                "objective": it.objective,
                "max_residual": it.max_residual,
                "step_norm": it.step_norm,
            });
            let _ = writeln!(trace, "{line}");
        }
    })?;

    std::fs::write(args.out.join("trajectory.csv"), trajectory_csv(&record.trajectory))?;
    std::fs::write(args.out.join("events.ndjson"), events_ndjson(&record.events)?)?;
    if !debug.is_empty() {
        std::fs::write(args.out.join("planner_debug.json"), serde_json::to_string_pretty(&debug)?)?;
    }
    if cfg.nav.record_trace && !trace.is_empty() {
        std::fs::write(args.out.join("optimizer_trace.jsonl"), trace)?;
    }
    let summary = serde_json::json!({
        "seed": record.seed,
        "planner": record.planner,
        "concentration": record.concentration,
        "metrics": record.metrics,
        "plans": record.plans,
        "planning_ms": record.planning_ms,
    });
    std::fs::write(args.out.join("trial.json"), serde_json::to_string_pretty(&summary)?)?;
    let svg = trajectory_svg(&field, &[(record.planner.as_str(), &record.trajectory)], -cfg.start_offset);
    std::fs::write(args.out.join("trajectory.svg"), svg)?;
    println!("{}", serde_json::to_string_pretty(&record.metrics)?);
    Ok(())
}

fn batch(args: &BatchArgs) -> Result<()> {
    let spec: ExperimentSpec = read_json(&args.spec)?;
    let out = args.out.clone().or_else(|| spec.output_dir.clone()).unwrap_or_else(|| PathBuf::from("results"));
    let ctx = TrialContext::new(VesselModel::default_psv(), &spec.trial.nav)?;
    eprintln!("running on {} thread(s)", thread_count(spec.threads));
    let result = run_batch(&spec, &ctx)?;
    write_batch_outputs(&out, &spec, &result)?;
    for f in &result.failures {
        eprintln!("failed: seed {} {} ({})", f.seed, f.planner, f.error);
    }
    for row in &result.summary {
        println!(
            "c={:.2} {:<20} trials={} success={:.0}% mean_force={:.3e} max_force={:.3e} energy={:.3e}",
            row.concentration,
            row.planner,
            row.trials,
            row.success_rate,
            row.mean.mean_impact_force,
            row.mean.max_impact_force,
            row.mean.energy
        );
    }
    Ok(())
}

fn calibrate(args: &CalibrateArgs) -> Result<()> {
    let cfg = trial_config(args.config.as_deref())?;
    let ctx = TrialContext::baselines_only(VesselModel::default_psv());
    let mut samples = Vec::with_capacity(args.count);
    for k in 0..args.count as u64 {
        let seed = args.seed + k;
        let field = generate_field(&FieldSpec::desk(args.concentration), seed)?;
        let record = run_trial_with(&field, seed, PlannerKind::Straight, &cfg, &ctx, |_, _| {})?;
        let sample = calibration_sample(&record, &field, &cfg, &ctx)?;
        println!("seed {seed}: alpha {:.4e}", sample.alpha()?);
        samples.push(sample);
    }
    let alpha = calibrate_alpha(&samples)?;
    let per_trial: Vec<f64> = samples.iter().map(|s| s.alpha()).collect::<Result<_>>()?;
    let var = per_trial.iter().map(|a| (a - alpha).powi(2)).sum::<f64>() / per_trial.len() as f64;
    let cv = var.sqrt() / alpha;
    println!("alpha = {alpha:.4e} (cv {cv:.2})");
    std::fs::create_dir_all(&args.out)?;
    let report = serde_json::json!({ "alpha": alpha, "cv": cv, "samples": samples });
    std::fs::write(args.out.join("calibration.json"), serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::GenFields(a) => gen_fields(a),
        Command::Run(a) => run(a),
        Command::Batch(a) => batch(a),
        Command::Calibrate(a) => calibrate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
