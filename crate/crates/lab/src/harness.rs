//! Grid search, multi-seed evaluation and comparison.
//!
//! Every episode's seed is a pure function of the config and trial, and
//! results are gathered in job order, so the worker count never changes
//! the output.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use tsc_core::demand::DemandProfile;
use tsc_core::episode::{run_episode, EpisodeOutcome};
use tsc_core::net::NetworkModel;
use tsc_core::rl::AgentCheckpoint;
use tsc_core::sim::SimConfig;

use crate::error::{LabError, LabResult};
use crate::fabric::{self, FabricConfig};
use crate::hp::{build_controllers, config_id, ControllerKind, ControllerSpec, HyperParams};
use crate::io;
use crate::seed::derive_seed;
use crate::stats::{mean_std, rank_score, Band, BoxStats, QUARTILE_METHOD};

pub const DEFAULT_TRIALS: usize = 8;
pub const DEFAULT_RUNS: usize = 32;
pub const DEFAULT_BIN_S: f64 = 60.0;

/// A network with its demand, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub net: NetworkModel,
    pub demand: DemandProfile,
    /// Arrivals stop here.
    pub horizon: u32,
    pub sim: SimConfig,
    /// Hash of the network, demand and simulator settings.
    pub fingerprint: String,
}

impl Scenario {
    pub fn new(net: NetworkModel, demand: DemandProfile) -> LabResult<Self> {
        Self::with_config(net, demand, SimConfig::default())
    }

    pub fn with_config(net: NetworkModel, demand: DemandProfile, sim: SimConfig) -> LabResult<Self> {
        let horizon = demand.horizon().ceil();
        if !(horizon >= 1.0 && horizon <= u32::MAX as f64) {
            return Err(LabError::Config(format!("demand horizon {} s is not positive", demand.horizon())));
        }
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&net.to_def()).expect("network serializes"));
        h.update(b"\n");
        h.update(serde_json::to_vec(&demand.to_def(&net)).expect("demand serializes"));
        h.update(format!("\n{}/{}/{}", sim.saturation_flow_vph, sim.observation_bound_m, sim.drain_cap_s));
        let fingerprint = format!("{:x}", h.finalize());
        Ok(Scenario { net, demand, horizon: horizon as u32, sim, fingerprint })
    }

    pub fn load(net: &Path, demand: &Path) -> LabResult<Self> {
        let model = io::load_network(net)?;
        let profile = io::load_demand(demand, &model)?;
        Self::new(model, profile)
    }

    pub fn run(&self, spec: &ControllerSpec, checkpoints: Option<&[AgentCheckpoint]>, seed: u64) -> LabResult<EpisodeOutcome> {
        let mut controllers = build_controllers(spec, &self.net, checkpoints, seed)?;
        Ok(run_episode(&self.net, &self.demand, &mut controllers, self.sim, seed, self.horizon)?)
    }

    /// Trains a learning spec with one actor and one learner.
    pub fn train_single(&self, spec: &ControllerSpec, seed: u64) -> LabResult<fabric::TrainOutcome> {
        let ControllerSpec::Learning { agent, train_episodes } = spec else {
            return Err(LabError::Config(format!("{} has nothing to train", spec.kind())));
        };
        let cfg = FabricConfig { sim: self.sim, ..FabricConfig::new(&self.net, 1, 1, *train_episodes, seed, self.horizon) };
        fabric::train(&self.net, &self.demand, agent, &cfg)
    }
}

fn mean_travel_time(outcome: &EpisodeOutcome, what: &str) -> LabResult<f64> {
    outcome
        .moe
        .mean_travel_time()
        .ok_or_else(|| LabError::Runtime(format!("{what}: no vehicle completed its trip")))
}

/// One grid dimension. Several keys form a zipped axis whose values vary together.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub keys: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub controller: ControllerKind,
    /// Expansion order: the first axis varies slowest.
    pub axes: Vec<GridAxis>,
    pub trials: usize,
    pub base_seed: u64,
}

impl GridSpec {
    /// Parses a grid file: a JSON object from hyperparameter to candidate
    /// values. A key `"a,b"` zips `a` and `b`, its values being equal-length arrays.
    pub fn from_json(controller: ControllerKind, text: &str, trials: usize, base_seed: u64) -> LabResult<Self> {
        let obj: serde_json::Map<String, Value> =
            serde_json::from_str(text).map_err(|e| LabError::Config(format!("grid: {e}")))?;
        let bad = |m: String| LabError::Config(format!("grid for {controller}: {m}"));
        let mut seen = Vec::new();
        let mut axes = Vec::new();
        for (key, list) in obj {
            let keys: Vec<String> = key.split(',').map(|k| k.trim().to_string()).collect();
            for k in &keys {
                if !controller.keys().contains(&k.as_str()) {
                    return Err(bad(format!("unknown hyperparameter {k:?}")));
                }
                if seen.contains(k) {
                    return Err(bad(format!("{k} appears twice")));
                }
                seen.push(k.clone());
            }
            let Value::Array(items) = list else { return Err(bad(format!("{key}: expected a list of values"))) };
            if items.is_empty() {
                return Err(bad(format!("{key}: empty value list")));
            }
            let number = |v: &Value| v.as_f64().filter(|x| x.is_finite());
            let values = items
                .iter()
                .map(|item| {
                    let row = match (keys.len(), item) {
                        (1, v) => number(v).map(|x| vec![x]),
                        (n, Value::Array(vs)) if vs.len() == n => vs.iter().map(number).collect(),
                        _ => None,
                    };
                    row.ok_or_else(|| bad(format!("{key}: bad value {item}")))
                })
                .collect::<LabResult<Vec<_>>>()?;
            axes.push(GridAxis { keys, values });
        }
        let grid = GridSpec { controller, axes, trials, base_seed };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> LabResult<()> {
        if self.trials == 0 {
            return Err(LabError::Config("trials must be at least 1".into()));
        }
        if self.axes.iter().any(|a| a.values.is_empty() || a.values.iter().any(|v| v.len() != a.keys.len())) {
            return Err(LabError::Config("grid axes need non-empty, well-shaped value lists".into()));
        }
        Ok(())
    }

    /// Number of configs: the product of the axis lengths.
    pub fn size(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// Cartesian product in axis order.
    pub fn expand(&self) -> Vec<HyperParams> {
        let mut out = vec![HyperParams::new()];
        for axis in &self.axes {
            out = out
                .into_iter()
                .flat_map(|hp| {
                    axis.values.iter().map(move |row| {
                        let mut hp = hp.clone();
                        hp.extend(axis.keys.iter().cloned().zip(row.iter().copied()));
                        hp
                    })
                })
                .collect();
        }
        out
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }
}

/// Tuning result of one config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub config_id: String,
    pub hp: HyperParams,
    /// Mean travel time of each trial, seconds.
    pub per_seed: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over trials.
    pub std: f64,
    pub score: f64,
}

impl TrialResult {
    pub fn new(hp: HyperParams, per_seed: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&per_seed).expect("at least one trial");
        TrialResult { config_id: config_id(&hp), hp, per_seed, mean, std, score: rank_score(mean, std) }
    }
}

/// Ascending rank score; ties keep their order.
pub fn rank(results: &mut [TrialResult]) {
    results.sort_by(|a, b| a.score.total_cmp(&b.score));
}

/// Spread of config means: `max μ - min μ`.
pub fn spread(results: &[TrialResult]) -> f64 {
    let means = results.iter().map(|r| r.mean);
    means.clone().fold(f64::NEG_INFINITY, f64::max) - means.fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub controller: String,
    pub trials: usize,
    pub base_seed: u64,
    pub scenario: String,
    /// Best first.
    pub results: Vec<TrialResult>,
}

impl TuneReport {
    pub fn best(&self) -> &TrialResult {
        &self.results[0]
    }
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub report: TuneReport,
    /// Trained agents per config id, for learning controllers.
    pub checkpoints: BTreeMap<String, Vec<AgentCheckpoint>>,
}

fn pool(parallelism: usize) -> LabResult<rayon::ThreadPool> {
    if parallelism == 0 {
        return Err(LabError::Config("parallelism must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| LabError::Runtime(format!("worker pool: {e}")))
}

/// Runs every config of `grid` for `grid.trials` episodes and ranks them.
///
/// Learning configs are first trained (one actor, one learner, seeded from
/// the config id) and then act greedily in the trial episodes.
pub fn tune(grid: &GridSpec, scenario: &Scenario, parallelism: usize) -> LabResult<TuneOutcome> {
    grid.validate()?;
    let configs = grid
        .expand()
        .into_iter()
        .map(|hp| ControllerSpec::new(grid.controller, &hp).map(|spec| (hp, spec)))
        .collect::<LabResult<Vec<_>>>()?;
    let pool = pool(parallelism)?;
    let mut checkpoints = BTreeMap::new();
    let mut results = Vec::with_capacity(configs.len());

    if grid.controller.is_learning() {
        let outcomes: Vec<LabResult<(Vec<f64>, Vec<AgentCheckpoint>)>> = pool.install(|| {
            configs
                .par_iter()
                .map(|(hp, spec)| {
                    let id = config_id(hp);
                    let trained = scenario.train_single(spec, derive_seed(&format!("{id}/train/{}", grid.base_seed)))?;
                    let per_seed = (0..grid.trials)
                        .map(|t| {
                            let seed = grid.trial_seed(t);
                            let out = scenario.run(spec, Some(&trained.checkpoints), seed)?;
                            mean_travel_time(&out, &format!("{id} seed {seed}"))
                        })
                        .collect::<LabResult<Vec<_>>>()?;
                    Ok((per_seed, trained.checkpoints))
                })
                .collect()
        });
        for ((hp, _), outcome) in configs.into_iter().zip(outcomes) {
            let (per_seed, ckpts) = outcome?;
            checkpoints.insert(config_id(&hp), ckpts);
            results.push(TrialResult::new(hp, per_seed));
        }
    } else {
        let jobs: Vec<(usize, usize)> = (0..configs.len()).flat_map(|c| (0..grid.trials).map(move |t| (c, t))).collect();
        let values: Vec<LabResult<f64>> = pool.install(|| {
            jobs.par_iter()
                .map(|&(c, t)| {
                    let (hp, spec) = &configs[c];
                    let seed = grid.trial_seed(t);
                    let out = scenario.run(spec, None, seed)?;
                    mean_travel_time(&out, &format!("{} seed {seed}", config_id(hp)))
                })
                .collect()
        });
        let mut values = values.into_iter();
        for (hp, _) in configs {
            let per_seed = values.by_ref().take(grid.trials).collect::<LabResult<Vec<_>>>()?;
            results.push(TrialResult::new(hp, per_seed));
        }
    }
    rank(&mut results);
    Ok(TuneOutcome {
        report: TuneReport {
            controller: grid.controller.name().into(),
            trials: grid.trials,
            base_seed: grid.base_seed,
            scenario: scenario.fingerprint.clone(),
            results,
        },
        checkpoints,
    })
}

/// What two evaluations must share to be compared.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conditions {
    pub scenario: String,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub mean_travel_time: Option<f64>,
    pub generated: u64,
    /// Arrivals refused because their entry lane was full.
    pub blocked: u64,
    pub exited: u64,
    /// Still inside at the drain cap; their trips are not in the travel-time pool.
    pub unfinished: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub controller: String,
    pub config_id: String,
    pub hp: HyperParams,
    pub conditions: Conditions,
    pub quartile_method: String,
    pub runs: Vec<RunSummary>,
    /// Pooled over all runs; `None` when no vehicle finished.
    pub travel_time: Option<BoxStats>,
}

/// Queue and delay at one intersection in one time bin, across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoePoint {
    pub intersection_id: String,
    pub bin_start_s: f64,
    pub bin_end_s: f64,
    /// Runs that reached this bin.
    pub runs: usize,
    pub queue: Band,
    pub delay: Band,
}

pub const MOE_SERIES_HEADER: [&str; 10] = [
    "intersection_id",
    "bin_start_s",
    "bin_end_s",
    "runs",
    "queue_mean",
    "queue_ci_low",
    "queue_ci_high",
    "delay_mean",
    "delay_ci_low",
    "delay_ci_high",
];

impl MoePoint {
    pub fn record(&self) -> [String; 10] {
        [
            self.intersection_id.clone(),
            self.bin_start_s.to_string(),
            self.bin_end_s.to_string(),
            self.runs.to_string(),
            self.queue.mean.to_string(),
            self.queue.low.to_string(),
            self.queue.high.to_string(),
            self.delay.mean.to_string(),
            self.delay.low.to_string(),
            self.delay.high.to_string(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct EvaluateOutcome {
    pub summary: Evaluation,
    /// `(seed, travel time)` of every finished trip.
    pub travel_times: Vec<(u64, f64)>,
    pub moe: Vec<MoePoint>,
}

/// Per-bin means of one run: `[intersection][bin] -> (queue, delay)`.
fn binned(outcome: &EpisodeOutcome, bin_s: f64) -> Vec<Vec<(f64, f64)>> {
    let times = &outcome.moe.times;
    let bins = times.last().map_or(0, |&t| bin_of(t, bin_s) + 1);
    (0..outcome.moe.queue.len())
        .map(|i| {
            let mut acc = vec![(0.0, 0.0, 0u32); bins];
            for (k, &t) in times.iter().enumerate() {
                let a = &mut acc[bin_of(t, bin_s)];
                a.0 += outcome.moe.queue[i][k] as f64;
                a.1 += outcome.moe.delay[i][k];
                a.2 += 1;
            }
            acc.into_iter().filter(|a| a.2 > 0).map(|(q, d, n)| (q / n as f64, d / n as f64)).collect()
        })
        .collect()
}

/// Bin of a step ending at `t`: `(0, w]` is bin 0.
fn bin_of(t: f64, bin_s: f64) -> usize {
    ((t / bin_s).ceil() as usize).saturating_sub(1)
}

/// Runs `runs` greedy episodes with seeds `base_seed + r` and pools the results.
pub fn evaluate(
    kind: ControllerKind,
    hp: &HyperParams,
    scenario: &Scenario,
    checkpoints: Option<&[AgentCheckpoint]>,
    runs: usize,
    base_seed: u64,
    bin_s: f64,
) -> LabResult<EvaluateOutcome> {
    if runs == 0 {
        return Err(LabError::Config("runs must be at least 1".into()));
    }
    if !(bin_s > 0.0 && bin_s.is_finite()) {
        return Err(LabError::Config(format!("time bin must be positive, got {bin_s}")));
    }
    let spec = ControllerSpec::new(kind, hp)?;
    if kind.is_learning() && checkpoints.is_none() {
        return Err(LabError::Config(format!("{kind} evaluation needs a checkpoint set")));
    }
    let seeds: Vec<u64> = (0..runs).map(|r| base_seed.wrapping_add(r as u64)).collect();
    let outcomes = seeds
        .par_iter()
        .map(|&seed| scenario.run(&spec, checkpoints, seed))
        .collect::<Vec<LabResult<EpisodeOutcome>>>()
        .into_iter()
        .collect::<LabResult<Vec<_>>>()?;

    let mut travel_times = Vec::new();
    let mut summaries = Vec::with_capacity(runs);
    for (&seed, out) in seeds.iter().zip(&outcomes) {
        travel_times.extend(out.moe.travel_times.iter().map(|&t| (seed, t)));
        summaries.push(RunSummary {
            seed,
            mean_travel_time: out.moe.mean_travel_time(),
            generated: out.counters.generated,
            blocked: out.counters.blocked,
            exited: out.counters.exited,
            unfinished: out.unfinished,
        });
    }
    let pool: Vec<f64> = travel_times.iter().map(|&(_, t)| t).collect();

    let per_run: Vec<Vec<Vec<(f64, f64)>>> = outcomes.iter().map(|o| binned(o, bin_s)).collect();
    let mut moe = Vec::new();
    for (i, inter) in scenario.net.intersections.iter().enumerate() {
        let bins = per_run.iter().map(|r| r[i].len()).max().unwrap_or(0);
        for b in 0..bins {
            let (q, d): (Vec<f64>, Vec<f64>) = per_run.iter().filter_map(|r| r[i].get(b).copied()).unzip();
            moe.push(MoePoint {
                intersection_id: inter.id.clone(),
                bin_start_s: b as f64 * bin_s,
                bin_end_s: (b + 1) as f64 * bin_s,
                runs: q.len(),
                queue: Band::from_samples(&q).expect("some run reached the bin"),
                delay: Band::from_samples(&d).expect("some run reached the bin"),
            });
        }
    }

    Ok(EvaluateOutcome {
        summary: Evaluation {
            controller: kind.name().into(),
            config_id: config_id(hp),
            hp: hp.clone(),
            conditions: Conditions { scenario: scenario.fingerprint.clone(), seeds },
            quartile_method: QUARTILE_METHOD.into(),
            runs: summaries,
            travel_time: BoxStats::from_samples(&pool),
        },
        travel_times,
        moe,
    })
}

/// One line of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub controller: String,
    pub config_id: String,
    pub samples: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub iqr: f64,
    pub outliers: usize,
}

pub const COMPARE_HEADER: [&str; 8] = ["controller", "config_id", "samples", "mean", "std", "median", "iqr", "outliers"];

impl CompareRow {
    pub fn record(&self) -> [String; 8] {
        [
            self.controller.clone(),
            self.config_id.clone(),
            self.samples.to_string(),
            self.mean.to_string(),
            self.std.to_string(),
            self.median.to_string(),
            self.iqr.to_string(),
            self.outliers.to_string(),
        ]
    }
}

/// Ranks evaluations by mean travel time; all must share their conditions.
pub fn compare(evals: &[Evaluation]) -> LabResult<Vec<CompareRow>> {
    if evals.len() < 2 {
        return Err(LabError::Config(format!("compare needs at least two evaluations, got {}", evals.len())));
    }
    if let Some(e) = evals.iter().find(|e| e.conditions != evals[0].conditions) {
        return Err(LabError::Config(format!(
            "{} ({}) was evaluated under different conditions than {} ({})",
            e.controller, e.config_id, evals[0].controller, evals[0].config_id
        )));
    }
    let mut rows = evals
        .iter()
        .map(|e| {
            let b = e.travel_time.as_ref().ok_or_else(|| {
                LabError::Config(format!("{} ({}) has no travel-time samples", e.controller, e.config_id))
            })?;
            Ok(CompareRow {
                controller: e.controller.clone(),
                config_id: e.config_id.clone(),
                samples: b.count,
                mean: b.mean,
                std: b.std,
                median: b.median,
                iqr: b.iqr,
                outliers: b.outliers.len(),
            })
        })
        .collect::<LabResult<Vec<_>>>()?;
    rows.sort_by(|a, b| a.mean.total_cmp(&b.mean));
    Ok(rows)
}

pub const TUNE_FILE: &str = "tune.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// `tune.json`, `tune.csv` and, for learning controllers, one checkpoint
/// directory per config under `checkpoints/rank-NN`.
pub fn write_tune(dir: &Path, outcome: &TuneOutcome) -> LabResult<()> {
    io::ensure_dir(dir)?;
    let report = &outcome.report;
    io::write_json(&dir.join(TUNE_FILE), report)?;
    let mut header = vec!["rank".to_string(), "config_id".into(), "mean".into(), "std".into(), "score".into()];
    header.extend((0..report.trials).map(|t| format!("trial_{t}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = report.results.iter().enumerate().map(|(k, r)| {
        let mut row = vec![(k + 1).to_string(), r.config_id.clone(), r.mean.to_string(), r.std.to_string(), r.score.to_string()];
        row.extend(r.per_seed.iter().map(f64::to_string));
        row
    });
    io::write_csv(&dir.join("tune.csv"), &header, rows)?;
    for (k, r) in report.results.iter().enumerate() {
        if let Some(ckpts) = outcome.checkpoints.get(&r.config_id) {
            io::save_checkpoints(&rank_checkpoint_dir(dir, k), ckpts)?;
        }
    }
    Ok(())
}

/// Where `write_tune` puts the agents of the config ranked `rank` (0 = best).
pub fn rank_checkpoint_dir(dir: &Path, rank: usize) -> std::path::PathBuf {
    dir.join(CHECKPOINT_DIR).join(format!("rank-{:02}", rank + 1))
}

pub fn read_tune(path: &Path) -> LabResult<TuneReport> {
    io::read_json(path)
}

pub const TRAVEL_TIME_HEADER: [&str; 2] = ["seed", "travel_time_s"];

/// `summary.json`, `travel_times.csv` and `moe.csv`.
pub fn write_evaluation(dir: &Path, outcome: &EvaluateOutcome) -> LabResult<()> {
    io::ensure_dir(dir)?;
    io::write_json(&dir.join(SUMMARY_FILE), &outcome.summary)?;
    io::write_csv(
        &dir.join("travel_times.csv"),
        &TRAVEL_TIME_HEADER,
        outcome.travel_times.iter().map(|(s, t)| [s.to_string(), t.to_string()]),
    )?;
    io::write_csv(&dir.join("moe.csv"), &MOE_SERIES_HEADER, outcome.moe.iter().map(MoePoint::record))
}

pub fn read_evaluation(dir: &Path) -> LabResult<Evaluation> {
    io::read_json(&dir.join(SUMMARY_FILE))
}

/// `compare.csv` and `compare.json`.
pub fn write_comparison(dir: &Path, rows: &[CompareRow]) -> LabResult<()> {
    io::ensure_dir(dir)?;
    io::write_json(&dir.join("compare.json"), rows)?;
    io::write_csv(&dir.join("compare.csv"), &COMPARE_HEADER, rows.iter().map(CompareRow::record))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(kind: ControllerKind, text: &str) -> LabResult<GridSpec> {
        GridSpec::from_json(kind, text, 8, 0)
    }

    #[test]
    fn expansion_is_the_cartesian_product() {
        let g = grid(ControllerKind::Sotl, r#"{"theta": [50, 100, 150], "g_min": [5, 10], "mu": [1]}"#).unwrap();
        let configs = g.expand();
        assert_eq!((g.size(), configs.len()), (6, 6));
        // keys expand in sorted order, the first slowest
        assert_eq!(config_id(&configs[0]), "g_min=5,mu=1,theta=50");
        assert_eq!(config_id(&configs[1]), "g_min=5,mu=1,theta=100");
        assert_eq!(config_id(&configs[5]), "g_min=10,mu=1,theta=150");
        let ids: std::collections::BTreeSet<_> = configs.iter().map(config_id).collect();
        assert_eq!(ids.len(), 6);
    }

    #[test]
    fn zipped_axes_vary_together() {
        let g = grid(ControllerKind::Ddpg, r#"{"g_min,g_max": [[5, 30], [10, 45]], "tau": [0.01]}"#).unwrap();
        let configs = g.expand();
        assert_eq!(configs.len(), 2);
        assert_eq!(config_id(&configs[1]), "g_max=45,g_min=10,tau=0.01");
    }

    #[test]
    fn bad_grids_are_config_errors() {
        for text in [
            r#"{"u": []}"#,
            r#"{"u": 10}"#,
            r#"{"speed": [1]}"#,
            r#"{"u": ["ten"]}"#,
            r#"{"g_min,g_max": [[5]]}"#,
            r#"{"g_min,g_min": [[5, 6]]}"#,
            "[1, 2]",
        ] {
            let kind = if text.contains("g_min") { ControllerKind::Ddpg } else { ControllerKind::Uniform };
            assert!(matches!(grid(kind, text), Err(LabError::Config(_))), "{text}");
        }
        assert!(GridSpec::from_json(ControllerKind::Uniform, r#"{"u": [10]}"#, 0, 0).is_err());
    }

    #[test]
    fn ranking_is_by_score_and_idempotent() {
        let a = TrialResult::new([("u".to_string(), 1.0)].into(), vec![90.0, 110.0]);
        let b = TrialResult::new([("u".to_string(), 2.0)].into(), vec![104.0, 106.0]);
        assert_eq!(a.mean, 100.0);
        let mut rs = vec![a, b];
        rank(&mut rs);
        assert_eq!(rs[0].config_id, "u=2");
        let once = rs.clone();
        rank(&mut rs);
        assert_eq!(rs, once);
        assert_eq!(spread(&rs), 5.0);
    }

    #[test]
    fn bins_are_closed_on_the_right() {
        assert_eq!(bin_of(1.0, 60.0), 0);
        assert_eq!(bin_of(60.0, 60.0), 0);
        assert_eq!(bin_of(61.0, 60.0), 1);
    }

    fn eval(controller: &str, seeds: Vec<u64>, mean: f64) -> Evaluation {
        Evaluation {
            controller: controller.into(),
            config_id: String::new(),
            hp: HyperParams::new(),
            conditions: Conditions { scenario: "x".into(), seeds },
            quartile_method: QUARTILE_METHOD.into(),
            runs: Vec::new(),
            travel_time: BoxStats::from_samples(&[mean - 1.0, mean, mean + 1.0]),
        }
    }

    #[test]
    fn compare_orders_by_mean_and_guards_conditions() {
        let rows = compare(&[eval("uniform", vec![0, 1], 120.0), eval("maxpressure", vec![0, 1], 80.0)]).unwrap();
        assert_eq!(rows[0].controller, "maxpressure");
        let twice = compare(&[eval("sotl", vec![0], 90.0), eval("sotl", vec![0], 90.0)]).unwrap();
        assert_eq!(twice[0], twice[1]);
        let err = compare(&[eval("a", vec![0], 1.0), eval("b", vec![1], 1.0)]);
        assert!(matches!(err, Err(LabError::Config(_))));
        assert!(compare(&[eval("a", vec![0], 1.0)]).is_err());
    }
}
