//! Command-line front end.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::agent::EpsilonSchedule;
use crate::analysis::{self, Policy};
use crate::envs::trace::write_trace;
use crate::envs::EnvId;
use crate::error::{Error, Result};
use crate::experiment::io::{load_run, save_run, save_stats, write_config};
use crate::experiment::stats::{default_eval_points, median};
use crate::experiment::{aggregate_stats, presets, run_groups, Architecture, RunLog, TrainConfig, Trainer};
use crate::gradcheck;
use crate::nn::MlpParams;
use crate::oracle;
use crate::rng::{Rng, Stream};

/// Relative output paths are resolved against this directory when set.
pub const OUTPUT_ROOT_VAR: &str = "DQNLAB_OUT";

#[derive(Debug, Parser)]
#[command(name = "dqnlab", version, about = "Double DQN with greedy and epsilon-greedy exploration on classic control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one agent and write its run directory.
    Train(TrainArgs),
    /// Run every seed of a figure preset and write per-group statistics.
    Grid(GridArgs),
    /// Aggregate return statistics over run directories.
    Stats(StatsArgs),
    /// Phase-space visit histogram of the transitions before a checkpoint.
    Phase(PhaseArgs),
    /// One-step vector field and rollouts under a MountainCar controller.
    Field(FieldArgs),
    /// Compare the environments against the reference transcription.
    VerifyEnv(VerifyEnvArgs),
    /// Finite-difference check of network gradients.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// JSON config; flags given on the command line override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub env: Option<EnvId>,
    /// linear, relu1, relu2 or tanh2.
    #[arg(long)]
    pub arch: Option<Architecture>,
    /// Constant exploration rate, or the final rate when --decay-steps is set.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Decay epsilon linearly from 1 over this many steps.
    #[arg(long)]
    pub decay_steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Total environment steps.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long, default_value = "train")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// 1: epsilon ablation on MountainCar; 2: CartPole and Acrobot; 3: architectures.
    #[arg(long)]
    pub figure: u32,
    /// Worker threads.
    #[arg(long, default_value_t = default_jobs())]
    pub jobs: usize,
    /// Override the environment steps of every run.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Base seed the per-run seeds are derived from.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to figure<N>.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Run directories, or directories whose subdirectories are runs.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Spacing of evaluation points in environment steps.
    #[arg(long, default_value_t = crate::experiment::stats::EVAL_INTERVAL)]
    pub every: u64,
    #[arg(long, default_value = "stats.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PhaseArgs {
    /// MountainCar run directory.
    pub run: PathBuf,
    #[arg(long)]
    pub checkpoint: u64,
    #[arg(long, default_value_t = 1000)]
    pub window: u64,
    #[arg(long, default_value_t = analysis::DEFAULT_BINS.0)]
    pub bins: usize,
    /// Defaults to the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FieldArgs {
    /// Use the network snapshot of this run directory (with --snapshot).
    #[arg(long, requires = "snapshot")]
    pub run: Option<PathBuf>,
    /// Snapshot step inside --run.
    #[arg(long)]
    pub snapshot: Option<u64>,
    /// Use the zero-force controller instead of a network.
    #[arg(long, conflicts_with = "run")]
    pub uncontrolled: bool,
    /// Without --run or --uncontrolled, a fresh network of this shape is used.
    #[arg(long, default_value = "relu2")]
    pub arch: Architecture,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Grid points per axis.
    #[arg(long, default_value_t = analysis::DEFAULT_FIELD_GRID.0)]
    pub grid: usize,
    #[arg(long, default_value_t = 10)]
    pub rollouts: usize,
    #[arg(long, default_value_t = 200)]
    pub max_steps: usize,
    #[arg(long, default_value = "field")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyEnvArgs {
    #[arg(long, default_value_t = 10_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    /// Directory with recorded traces named <env>_gym.csv.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = gradcheck::PROBES)]
    pub probes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn resolve_out(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if path.is_relative() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
            TrainConfig::from_json(&text)?
        }
        None => TrainConfig::defaults(args.env.unwrap_or(EnvId::MountainCar)),
    };
    if let Some(env) = args.env {
        if env != config.env {
            return Err(Error::Usage(format!("--env {env} contradicts the config file's {}", config.env)));
        }
    }
    if let Some(arch) = args.arch {
        config = config.with_architecture(arch);
    }
    match (args.epsilon, args.decay_steps) {
        (Some(e), None) => config.schedule = EpsilonSchedule::Constant { value: e },
        (e, Some(d)) => {
            config.schedule = EpsilonSchedule::LinearDecay {
                start: 1.0,
                end: e.unwrap_or(0.0),
                decay_steps: d,
            }
        }
        (None, None) => {}
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(steps) = args.steps {
        config.total_env_steps = steps;
    }
    config.validate()?;
    Ok(config)
}

/// One-line summary of a finished run.
pub fn describe_run(log: &RunLog) -> String {
    let total = log.config.total_env_steps;
    let tail = log.returns_ending_in(total.saturating_sub(10_000), total);
    let tail = if tail.is_empty() {
        "no episodes in the last 10000 steps".to_string()
    } else {
        format!("median return over the last 10000 steps {}", median(&tail))
    };
    let goal = match analysis::first_goal_step(log) {
        Some(s) => format!("first goal at step {s}"),
        None => "goal never reached".to_string(),
    };
    format!("{} episodes, {goal}, {tail}", log.episodes.len())
}

fn train(args: &TrainArgs) -> Result<()> {
    let config = resolve_train_config(args)?;
    println!("{}", config.to_json());
    let out = resolve_out(&args.out);
    write_config(&out, &config)?;
    let mut trainer = Trainer::new(config)?;
    while !trainer.is_finished() {
        let o = trainer.step()?;
        if o.step % 10_000 == 0 {
            eprintln!("step {} episodes {}", o.step, trainer.log().episodes.len());
        }
    }
    let log = trainer.into_log();
    save_run(&out, &log)?;
    println!("{}", describe_run(&log));
    Ok(())
}

fn grid(args: &GridArgs) -> Result<()> {
    let mut groups = presets::figure(args.figure, args.seed)?;
    if let Some(steps) = args.steps {
        for c in groups.iter_mut().flat_map(|g| g.runs.iter_mut()) {
            c.total_env_steps = steps;
        }
    }
    let out = resolve_out(&args.out.clone().unwrap_or_else(|| format!("figure{}", args.figure).into()));
    let listing: Vec<_> = groups
        .iter()
        .map(|g| serde_json::json!({ "group": g.name, "runs": g.runs }))
        .collect();
    let listing = serde_json::to_string_pretty(&listing)?;
    println!("{listing}");
    fs::create_dir_all(&out)?;
    fs::write(out.join("grid.json"), listing + "\n")?;

    let results = run_groups(&groups, args.jobs.max(1));
    let mut failures = Vec::new();
    for (group, logs) in groups.iter().zip(results) {
        let dir = out.join(&group.name);
        let mut finished = Vec::new();
        for (i, log) in logs.into_iter().enumerate() {
            match log {
                Ok(log) => {
                    save_run(&dir.join(presets::Group::run_dir_name(i)), &log)?;
                    println!("{}/{}: {}", group.name, presets::Group::run_dir_name(i), describe_run(&log));
                    finished.push(log);
                }
                Err(e) => failures.push(format!("{}/{}: {e}", group.name, presets::Group::run_dir_name(i))),
            }
        }
        if finished.len() >= 2 {
            let total = finished.iter().map(|l| l.config.total_env_steps).max().unwrap_or(0);
            let refs: Vec<&RunLog> = finished.iter().collect();
            save_stats(&dir.join("stats.csv"), &aggregate_stats(&refs, &default_eval_points(total))?)?;
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::Training(format!("{} run(s) failed; first: {}", failures.len(), failures[0])))
    }
}

fn is_run_dir(path: &Path) -> bool {
    path.join("config.json").is_file() && path.join("episodes.csv").is_file()
}

fn collect_runs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut runs = Vec::new();
    for p in paths {
        if is_run_dir(p) {
            runs.push(p.clone());
            continue;
        }
        let mut children: Vec<PathBuf> = fs::read_dir(p)
            .map_err(|e| Error::Usage(format!("cannot read {}: {e}", p.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|c| is_run_dir(c))
            .collect();
        if children.is_empty() {
            return Err(Error::Usage(format!("{} holds no run directories", p.display())));
        }
        children.sort();
        runs.extend(children);
    }
    Ok(runs)
}

fn stats(args: &StatsArgs) -> Result<()> {
    if args.every == 0 {
        return Err(Error::Usage("--every must be positive".into()));
    }
    let dirs = collect_runs(&args.runs)?;
    let logs = dirs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>>>()?;
    let total = logs.iter().map(|l| l.config.total_env_steps).max().unwrap_or(0);
    let points: Vec<u64> = (1..=total / args.every).map(|k| k * args.every).collect();
    let refs: Vec<&RunLog> = logs.iter().collect();
    let out = resolve_out(&args.out);
    save_stats(&out, &aggregate_stats(&refs, &points)?)?;
    println!("aggregated {} runs into {}", logs.len(), out.display());
    Ok(())
}

fn phase(args: &PhaseArgs) -> Result<()> {
    let log = load_run(&args.run)?;
    println!("{}", log.config.to_json());
    if log.config.env != EnvId::MountainCar {
        return Err(Error::Usage(format!("phase plots need a MountainCar run, got {}", log.config.env)));
    }
    let window = analysis::transition_window(&log, args.checkpoint, args.window)?;
    let hist = analysis::phase_histogram(&window, (args.bins, args.bins))?;
    let out = args.out.as_deref().map_or_else(|| args.run.clone(), resolve_out);
    let stem = format!("phase_{}", args.checkpoint);
    let mut w = create(&out.join(format!("{stem}.pgm")))?;
    hist.write_pgm(&mut w)?;
    w.flush()?;
    let mut w = create(&out.join(format!("{stem}.csv")))?;
    hist.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&out.join(format!("window_{}.csv", args.checkpoint)))?;
    write_trace(&mut w, 2, &window)?;
    w.flush()?;
    println!(
        "binned {} states from steps {}..={} into {}",
        hist.total(),
        window[0].step,
        args.checkpoint,
        out.join(format!("{stem}.pgm")).display()
    );
    Ok(())
}

fn field(args: &FieldArgs) -> Result<()> {
    let network: Option<MlpParams> = if args.uncontrolled {
        None
    } else if let (Some(run), Some(step)) = (&args.run, args.snapshot) {
        let log = load_run(run)?;
        Some(log.snapshots.get(&step).cloned().ok_or_else(|| {
            Error::Usage(format!("{} has no snapshot at step {step}", run.display()))
        })?)
    } else {
        let specs = args.arch.layers(EnvId::MountainCar);
        Some(MlpParams::glorot(&specs, &mut Rng::for_stream(args.seed, Stream::Init))?)
    };
    let policy = network.as_ref().map_or(Policy::Uncontrolled, Policy::Greedy);
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "policy": policy.tag(),
            "run": args.run,
            "snapshot": args.snapshot,
            "arch": if args.run.is_none() && !args.uncontrolled { Some(args.arch.name()) } else { None },
            "seed": args.seed,
            "grid": args.grid,
            "rollouts": args.rollouts,
            "max_steps": args.max_steps,
        }))?
    );
    let out = resolve_out(&args.out);
    let points = analysis::vector_field(policy, (args.grid, args.grid))?;
    let mut w = create(&out.join("field.csv"))?;
    analysis::write_field_csv(&mut w, &points)?;
    w.flush()?;
    let mut rng = Rng::for_stream(args.seed, Stream::Env);
    let trajs = analysis::rollout_random_inits(policy, args.rollouts, args.max_steps, &mut rng)?;
    let mut w = create(&out.join("trajectories.csv"))?;
    analysis::write_trajectories_csv(&mut w, &trajs)?;
    w.flush()?;
    let reached = trajs.iter().filter(|t| t.reached_goal).count();
    println!("{reached} of {} rollouts reached the goal", trajs.len());
    Ok(())
}

fn verify_env(args: &VerifyEnvArgs) -> Result<()> {
    let mut failed = Vec::new();
    for env in EnvId::ALL {
        let mut checks = vec![("random", oracle::compare_random_rollout(env, args.steps, args.seed)?)];
        if let Some(dir) = &args.fixtures {
            let path = dir.join(format!("{}_gym.csv", env.name()));
            let file = File::open(&path)
                .map_err(|e| Error::Usage(format!("cannot open {}: {e}", path.display())))?;
            checks.push(("recorded", oracle::compare_recorded_trace(env, file)?));
        }
        for (kind, c) in checks {
            let ok = c.passes(args.tolerance);
            println!(
                "{} {env} {kind}: {} steps, {} episodes, max abs error {:.3e}, {} termination mismatches",
                if ok { "PASS" } else { "FAIL" },
                c.steps,
                c.episodes,
                c.max_abs_error,
                c.termination_mismatches
            );
            if !ok {
                failed.push(format!("{env} {kind}"));
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Training(format!("environment mismatch: {}", failed.join(", "))))
    }
}

fn grad_check(args: &GradCheckArgs) -> Result<()> {
    let mut failed = Vec::new();
    for env in EnvId::ALL {
        for r in gradcheck::check_architectures(env, args.probes, args.seed)? {
            let ok = r.passes();
            println!(
                "{} {}: {} probes, {} coordinates, max relative error {:.3e}",
                if ok { "PASS" } else { "FAIL" },
                r.label,
                r.probes,
                r.coordinates,
                r.max_rel_error
            );
            if !ok {
                failed.push(r.label);
            }
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Training(format!("gradient mismatch: {}", failed.join(", "))))
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train(a) => train(a),
        Command::Grid(a) => grid(a),
        Command::Stats(a) => stats(a),
        Command::Phase(a) => phase(a),
        Command::Field(a) => field(a),
        Command::VerifyEnv(a) => verify_env(a),
        Command::GradCheck(a) => grad_check(a),
    }
}
