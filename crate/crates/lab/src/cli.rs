//! The `tsc` command line.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{LabError, LabResult};
use crate::fabric::{self, FabricConfig, FabricStats, LOG_HEADER};
use crate::harness::{self, GridSpec, Scenario, DEFAULT_BIN_S};
use crate::hp::{parse_hp, ControllerKind, ControllerSpec, HyperParams};
use crate::io;

#[derive(Debug, Parser)]
#[command(name = "tsc", version, about = "Traffic signal control experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode and write its measures of effectiveness.
    Simulate(SimulateArgs),
    /// Grid-search a controller's hyperparameters.
    Tune(TuneArgs),
    /// Train a learning controller with actors and learners.
    Train(TrainArgs),
    /// Evaluate one configuration over many seeds.
    Evaluate(EvaluateArgs),
    /// Rank evaluated controllers.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Network JSON file.
    #[arg(long, value_name = "F")]
    pub net: PathBuf,
    /// Demand JSON file.
    #[arg(long, value_name = "F")]
    pub demand: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, value_name = "NAME")]
    pub tsc: ControllerKind,
    /// Hyperparameters as k=v[,k=v...].
    #[arg(long, default_value = "")]
    pub hp: String,
    /// Checkpoint directory, for learning controllers.
    #[arg(long, value_name = "DIR")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, value_name = "NAME")]
    pub tsc: ControllerKind,
    /// Grid JSON file: hyperparameter -> candidate values.
    #[arg(long, value_name = "F")]
    pub grid: PathBuf,
    #[arg(long, default_value_t = harness::DEFAULT_TRIALS)]
    pub trials: usize,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub procs: usize,
    /// First trial seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, value_name = "NAME")]
    pub tsc: ControllerKind,
    #[arg(long, default_value = "")]
    pub hp: String,
    #[arg(long, default_value_t = 1)]
    pub actors: usize,
    #[arg(long, default_value_t = 1)]
    pub learners: usize,
    /// Training episodes over all actors.
    #[arg(long)]
    pub episodes: u64,
    /// Also checkpoint every this many updates per intersection.
    #[arg(long, value_name = "N")]
    pub checkpoint_every: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long, value_name = "NAME")]
    pub tsc: ControllerKind,
    #[arg(long, default_value = "")]
    pub hp: String,
    /// Checkpoint directory, required for learning controllers.
    #[arg(long, value_name = "DIR")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = harness::DEFAULT_RUNS)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Width of the queue/delay time bins, seconds.
    #[arg(long, default_value_t = DEFAULT_BIN_S)]
    pub bin: f64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Evaluation output directories.
    #[arg(long = "in", value_name = "DIR", value_delimiter = ',', required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

/// Runs a parsed command.
pub fn run(cli: Cli) -> LabResult<()> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Tune(a) => tune(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("tsc: {e}");
            e.exit_code()
        }
    }
}

fn load(s: &ScenarioArgs) -> LabResult<Scenario> {
    Scenario::load(&s.net, &s.demand)
}

fn spec(kind: ControllerKind, hp: &str) -> LabResult<(HyperParams, ControllerSpec)> {
    let hp = parse_hp(hp)?;
    let spec = ControllerSpec::new(kind, &hp)?;
    Ok((hp, spec))
}

fn checkpoints(
    dir: Option<&Path>,
    spec: &ControllerSpec,
    scenario: &Scenario,
) -> LabResult<Option<Vec<tsc_core::rl::AgentCheckpoint>>> {
    match (dir, spec.agent_config()) {
        (Some(dir), Some(cfg)) => Ok(Some(io::load_checkpoints(dir, &scenario.net, cfg)?)),
        (None, Some(_)) => Err(LabError::Config(format!("{} needs --checkpoint", spec.kind()))),
        (Some(_), None) => Err(LabError::Config(format!("{} takes no checkpoint", spec.kind()))),
        (None, None) => Ok(None),
    }
}

#[derive(Serialize)]
struct SimulateSummary<'a> {
    controller: &'a str,
    config_id: String,
    scenario: &'a str,
    seed: u64,
    mean_travel_time: Option<f64>,
    mean_delay: Vec<(String, f64)>,
    generated: u64,
    blocked: u64,
    exited: u64,
    unfinished: u64,
    steps: u32,
}

fn simulate(a: SimulateArgs) -> LabResult<()> {
    let scenario = load(&a.scenario)?;
    let (hp, spec) = spec(a.tsc, &a.hp)?;
    let ckpts = checkpoints(a.checkpoint.as_deref(), &spec, &scenario)?;
    let out = scenario.run(&spec, ckpts.as_deref(), a.seed)?;
    io::ensure_dir(&a.out)?;
    let summary = SimulateSummary {
        controller: a.tsc.name(),
        config_id: crate::hp::config_id(&hp),
        scenario: &scenario.fingerprint,
        seed: a.seed,
        mean_travel_time: out.moe.mean_travel_time(),
        mean_delay: scenario
            .net
            .intersections
            .iter()
            .enumerate()
            .map(|(i, inter)| (inter.id.clone(), out.moe.mean_delay(i)))
            .collect(),
        generated: out.counters.generated,
        blocked: out.counters.blocked,
        exited: out.counters.exited,
        unfinished: out.unfinished,
        steps: out.steps,
    };
    io::write_json(&a.out.join(harness::SUMMARY_FILE), &summary)?;
    io::write_csv(
        &a.out.join("travel_times.csv"),
        &["travel_time_s"],
        out.moe.travel_times.iter().map(|t| [t.to_string()]),
    )?;
    io::write_csv(&a.out.join("moe.csv"), &io::MOE_HEADER, io::moe_rows(&scenario.net, &out.moe))?;
    match summary.mean_travel_time {
        Some(t) => println!("{}: mean travel time {t:.2} s over {} trips", a.tsc, out.counters.exited),
        None => println!("{}: no samples (no vehicle finished)", a.tsc),
    }
    Ok(())
}

fn tune(a: TuneArgs) -> LabResult<()> {
    let scenario = load(&a.scenario)?;
    let text = std::fs::read_to_string(&a.grid).map_err(|e| LabError::read(&a.grid, e))?;
    let grid = GridSpec::from_json(a.tsc, &text, a.trials, a.seed)?;
    let outcome = harness::tune(&grid, &scenario, a.procs)?;
    harness::write_tune(&a.out, &outcome)?;
    let best = outcome.report.best();
    println!(
        "{}: {} configs, best {} (mean {:.2} s, std {:.2} s, score {:.2})",
        a.tsc,
        outcome.report.results.len(),
        best.config_id,
        best.mean,
        best.std,
        best.score
    );
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    controller: &'a str,
    config_id: String,
    scenario: &'a str,
    actors: usize,
    learners: usize,
    seed: u64,
    stats: &'a FabricStats,
}

fn train(a: TrainArgs) -> LabResult<()> {
    if !a.tsc.is_learning() {
        return Err(LabError::Config(format!("{} is not a learning controller", a.tsc)));
    }
    let scenario = load(&a.scenario)?;
    let (hp, spec) = spec(a.tsc, &a.hp)?;
    let agent = spec.agent_config().expect("learning spec");
    let ckpt_dir = a.out.join(harness::CHECKPOINT_DIR);
    let cfg = FabricConfig {
        sim: scenario.sim,
        checkpoint_every: a.checkpoint_every.map(|n| (n, ckpt_dir.clone())),
        ..FabricConfig::new(&scenario.net, a.actors, a.learners, a.episodes, a.seed, scenario.horizon)
    };
    let out = fabric::train(&scenario.net, &scenario.demand, agent, &cfg)?;
    io::ensure_dir(&a.out)?;
    io::save_checkpoints(&ckpt_dir, &out.checkpoints)?;
    io::write_csv(&a.out.join("train_log.csv"), &LOG_HEADER, out.log.iter().map(fabric::LogRow::record))?;
    let summary = TrainSummary {
        controller: a.tsc.name(),
        config_id: crate::hp::config_id(&hp),
        scenario: &scenario.fingerprint,
        actors: a.actors,
        learners: a.learners,
        seed: a.seed,
        stats: &out.stats,
    };
    io::write_json(&a.out.join("train.json"), &summary)?;
    println!(
        "{}: {} episodes, {} experiences, updates {:?}; checkpoints in {}",
        a.tsc,
        out.stats.episodes,
        out.stats.emitted(),
        out.stats.updates,
        ckpt_dir.display()
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> LabResult<()> {
    let scenario = load(&a.scenario)?;
    let (hp, spec) = spec(a.tsc, &a.hp)?;
    let ckpts = checkpoints(a.checkpoint.as_deref(), &spec, &scenario)?;
    let out = harness::evaluate(a.tsc, &hp, &scenario, ckpts.as_deref(), a.runs, a.seed, a.bin)?;
    harness::write_evaluation(&a.out, &out)?;
    match &out.summary.travel_time {
        Some(b) => println!(
            "{}: {} trips over {} runs, mean {:.2} s, median {:.2} s, IQR {:.2} s, {} outliers",
            a.tsc,
            b.count,
            a.runs,
            b.mean,
            b.median,
            b.iqr,
            b.outliers.len()
        ),
        None => println!("{}: no samples (no vehicle finished in {} runs)", a.tsc, a.runs),
    }
    Ok(())
}

fn compare(a: CompareArgs) -> LabResult<()> {
    let evals = a.inputs.iter().map(|d| harness::read_evaluation(d)).collect::<LabResult<Vec<_>>>()?;
    let rows = harness::compare(&evals)?;
    harness::write_comparison(&a.out, &rows)?;
    for (k, r) in rows.iter().enumerate() {
        println!("{}. {} ({}) mean {:.2} s, std {:.2} s", k + 1, r.controller, r.config_id, r.mean, r.std);
    }
    Ok(())
}
