//! Controller names, `k=v` hyperparameters and the controller factory.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use tsc_core::classic::{MaxPressure, Sotl, SotlConfig, Uniform, Webster, WebsterConfig};
use tsc_core::net::NetworkModel;
use tsc_core::rl::{Agent, AgentCheckpoint, AgentConfig, AgentController, DdpgConfig, DqnConfig, LinearSchedule};
use tsc_core::signal::{state_width, Controller, RewardNormalizer};

use crate::error::{LabError, LabResult};

/// Hyperparameter values by key; `BTreeMap` keeps one canonical order.
pub type HyperParams = BTreeMap<String, f64>;

/// Episodes each learning-controller config trains for during tuning.
pub const DEFAULT_TRAIN_EPISODES: u64 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ControllerKind {
    Uniform,
    Webster,
    MaxPressure,
    Sotl,
    Dqn,
    Ddpg,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 6] = [
        ControllerKind::Uniform,
        ControllerKind::Webster,
        ControllerKind::MaxPressure,
        ControllerKind::Sotl,
        ControllerKind::Dqn,
        ControllerKind::Ddpg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Uniform => "uniform",
            ControllerKind::Webster => "webster",
            ControllerKind::MaxPressure => "maxpressure",
            ControllerKind::Sotl => "sotl",
            ControllerKind::Dqn => "dqn",
            ControllerKind::Ddpg => "ddpg",
        }
    }

    pub fn is_learning(self) -> bool {
        matches!(self, ControllerKind::Dqn | ControllerKind::Ddpg)
    }

    /// Accepted hyperparameter keys.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            ControllerKind::Uniform => &["u"],
            ControllerKind::Webster => &["W", "c_min", "c_max", "s_sat", "R"],
            ControllerKind::MaxPressure => &["g_min"],
            ControllerKind::Sotl => &["g_min", "theta", "omega", "mu"],
            ControllerKind::Dqn => &[
                "a_repeat",
                "gamma",
                "eps_start",
                "eps_end",
                "eps_episodes",
                "target_sync",
                "batch",
                "lr",
                "replay",
                "train_episodes",
            ],
            ControllerKind::Ddpg => &[
                "g_min",
                "g_max",
                "gamma",
                "tau",
                "sigma_start",
                "sigma_end",
                "sigma_episodes",
                "batch",
                "actor_lr",
                "critic_lr",
                "replay",
                "l2",
                "train_episodes",
            ],
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = LabError;

    fn from_str(s: &str) -> LabResult<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| LabError::Config(format!("unknown controller \"{s}\"")))
    }
}

/// Parses `k=v[,k=v...]`; the empty string is the empty map.
pub fn parse_hp(s: &str) -> LabResult<HyperParams> {
    let mut hp = HyperParams::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| LabError::Config(format!("hyperparameter \"{part}\" is not k=v")))?;
        let value: f64 = v
            .trim()
            .parse()
            .map_err(|_| LabError::Config(format!("hyperparameter {k}: \"{v}\" is not a number")))?;
        if !value.is_finite() {
            return Err(LabError::Config(format!("hyperparameter {k} must be finite")));
        }
        if hp.insert(k.trim().to_string(), value).is_some() {
            return Err(LabError::Config(format!("hyperparameter {k} given twice")));
        }
    }
    Ok(hp)
}

/// Canonical `k=v,...` form in key order; parses back to the same map.
pub fn config_id(hp: &HyperParams) -> String {
    hp.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
}

/// A fully resolved controller configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum ControllerSpec {
    Uniform { u: u32 },
    /// `lost_time_s: None` derives one interphase per phase at each intersection.
    Webster { window_s: u32, c_min: f64, c_max: f64, s_sat: f64, lost_time_s: Option<f64> },
    MaxPressure { g_min: u32 },
    Sotl(SotlConfig),
    Learning { agent: AgentConfig, train_episodes: u64 },
}

struct Reader<'a> {
    kind: ControllerKind,
    hp: &'a HyperParams,
}

impl Reader<'_> {
    fn f64(&self, key: &str, default: f64) -> f64 {
        self.hp.get(key).copied().unwrap_or(default)
    }

    fn uint(&self, key: &str, default: u64) -> LabResult<u64> {
        match self.hp.get(key) {
            None => Ok(default),
            Some(&v) if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 => Ok(v as u64),
            Some(v) => Err(LabError::Config(format!("{}: {key} must be a non-negative integer, got {v}", self.kind))),
        }
    }

    fn u32(&self, key: &str, default: u32) -> LabResult<u32> {
        self.uint(key, default as u64).map(|v| v as u32)
    }
}

impl ControllerSpec {
    /// Defaults overridden by `hp`; unknown keys are an error.
    pub fn new(kind: ControllerKind, hp: &HyperParams) -> LabResult<Self> {
        if let Some(k) = hp.keys().find(|k| !kind.keys().contains(&k.as_str())) {
            return Err(LabError::Config(format!(
                "{kind} has no hyperparameter \"{k}\" (accepted: {})",
                kind.keys().join(", ")
            )));
        }
        let r = Reader { kind, hp };
        let spec = match kind {
            ControllerKind::Uniform => ControllerSpec::Uniform { u: r.u32("u", 10)? },
            ControllerKind::Webster => ControllerSpec::Webster {
                window_s: r.u32("W", 900)?,
                c_min: r.f64("c_min", 60.0),
                c_max: r.f64("c_max", 180.0),
                s_sat: r.f64("s_sat", 1800.0),
                lost_time_s: hp.get("R").copied(),
            },
            ControllerKind::MaxPressure => ControllerSpec::MaxPressure { g_min: r.u32("g_min", 10)? },
            ControllerKind::Sotl => ControllerSpec::Sotl(SotlConfig {
                g_min: r.u32("g_min", 10)?,
                theta: r.f64("theta", 100.0),
                omega: r.f64("omega", 50.0),
                mu: r.u32("mu", 3)?,
            }),
            ControllerKind::Dqn => {
                let d = DqnConfig::default();
                ControllerSpec::Learning {
                    agent: AgentConfig::Dqn(DqnConfig {
                        a_repeat: r.u32("a_repeat", d.a_repeat)?,
                        gamma: r.f64("gamma", d.gamma),
                        epsilon: LinearSchedule::new(
                            r.f64("eps_start", d.epsilon.start),
                            r.f64("eps_end", d.epsilon.end),
                            r.uint("eps_episodes", d.epsilon.steps)?,
                        ),
                        target_sync: r.uint("target_sync", d.target_sync)?,
                        batch_size: r.uint("batch", d.batch_size as u64)? as usize,
                        learning_rate: r.f64("lr", d.learning_rate),
                        replay_capacity: r.uint("replay", d.replay_capacity as u64)? as usize,
                    }),
                    train_episodes: r.uint("train_episodes", DEFAULT_TRAIN_EPISODES)?,
                }
            }
            ControllerKind::Ddpg => {
                let d = DdpgConfig::default();
                ControllerSpec::Learning {
                    agent: AgentConfig::Ddpg(DdpgConfig {
                        g_min: r.u32("g_min", d.g_min)?,
                        g_max: r.u32("g_max", d.g_max)?,
                        gamma: r.f64("gamma", d.gamma),
                        tau: r.f64("tau", d.tau),
                        sigma: LinearSchedule::new(
                            r.f64("sigma_start", d.sigma.start),
                            r.f64("sigma_end", d.sigma.end),
                            r.uint("sigma_episodes", d.sigma.steps)?,
                        ),
                        batch_size: r.uint("batch", d.batch_size as u64)? as usize,
                        actor_lr: r.f64("actor_lr", d.actor_lr),
                        critic_lr: r.f64("critic_lr", d.critic_lr),
                        replay_capacity: r.uint("replay", d.replay_capacity as u64)? as usize,
                        critic_l2: r.f64("l2", d.critic_l2),
                    }),
                    train_episodes: r.uint("train_episodes", DEFAULT_TRAIN_EPISODES)?,
                }
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn parse(name: &str, hp: &str) -> LabResult<Self> {
        Self::new(name.parse()?, &parse_hp(hp)?)
    }

    pub fn kind(&self) -> ControllerKind {
        match self {
            ControllerSpec::Uniform { .. } => ControllerKind::Uniform,
            ControllerSpec::Webster { .. } => ControllerKind::Webster,
            ControllerSpec::MaxPressure { .. } => ControllerKind::MaxPressure,
            ControllerSpec::Sotl(_) => ControllerKind::Sotl,
            ControllerSpec::Learning { agent: AgentConfig::Dqn(_), .. } => ControllerKind::Dqn,
            ControllerSpec::Learning { agent: AgentConfig::Ddpg(_), .. } => ControllerKind::Ddpg,
        }
    }

    pub fn agent_config(&self) -> Option<&AgentConfig> {
        match self {
            ControllerSpec::Learning { agent, .. } => Some(agent),
            _ => None,
        }
    }

    fn validate(&self) -> LabResult<()> {
        match self {
            ControllerSpec::Uniform { u } if *u == 0 => Err(LabError::Config("uniform: u must be at least 1".into())),
            ControllerSpec::MaxPressure { g_min } if *g_min == 0 => {
                Err(LabError::Config("maxpressure: g_min must be at least 1".into()))
            }
            ControllerSpec::Webster { window_s, c_min, c_max, s_sat, lost_time_s } => {
                // lost time checked against c_min once the phase count is known
                let probe = WebsterConfig {
                    window_s: *window_s,
                    c_min: *c_min,
                    c_max: *c_max,
                    saturation_flow_vph: *s_sat,
                    lost_time_s: lost_time_s.unwrap_or(0.0),
                };
                probe.validate().map_err(LabError::from)
            }
            ControllerSpec::Sotl(cfg) => cfg.validate().map_err(LabError::from),
            ControllerSpec::Learning { agent, .. } => agent.validate().map_err(LabError::from),
            _ => Ok(()),
        }
    }

    /// Webster settings for an intersection with `num_phases` phases.
    pub fn webster_config(&self, num_phases: usize) -> Option<WebsterConfig> {
        match *self {
            ControllerSpec::Webster { window_s, c_min, c_max, s_sat, lost_time_s } => {
                let mut cfg = WebsterConfig::new(window_s, c_min, c_max, s_sat, num_phases);
                if let Some(r) = lost_time_s {
                    cfg.lost_time_s = r;
                }
                Some(cfg)
            }
            _ => None,
        }
    }
}

/// Controllers for every intersection of `net`.
///
/// Learning controllers need `checkpoints` (network order) and act greedily
/// with the reward scale frozen from training.
pub fn build_controllers(
    spec: &ControllerSpec,
    net: &NetworkModel,
    checkpoints: Option<&[AgentCheckpoint]>,
    seed: u64,
) -> LabResult<Vec<Box<dyn Controller>>> {
    let mut out: Vec<Box<dyn Controller>> = Vec::with_capacity(net.intersections.len());
    if let ControllerSpec::Learning { agent, .. } = spec {
        let ckpts = checkpoints
            .ok_or_else(|| LabError::Config(format!("{} needs a checkpoint directory", spec.kind())))?;
        for c in greedy_agents(agent, net, ckpts, seed)? {
            out.push(Box::new(c));
        }
        return Ok(out);
    }
    for inter in &net.intersections {
        let c: Box<dyn Controller> = match spec {
            ControllerSpec::Uniform { u } => Box::new(Uniform::new(*u)),
            ControllerSpec::MaxPressure { g_min } => Box::new(MaxPressure::new(*g_min)),
            ControllerSpec::Sotl(cfg) => Box::new(Sotl::new(*cfg)?),
            ControllerSpec::Webster { .. } => {
                let cfg = spec.webster_config(inter.num_phases()).expect("webster spec");
                Box::new(Webster::new(cfg).map_err(|e| LabError::Config(format!("webster at {}: {e}", inter.id)))?)
            }
            ControllerSpec::Learning { .. } => unreachable!("handled above"),
        };
        out.push(c);
    }
    Ok(out)
}

/// Greedy acting controllers around trained policies.
pub fn greedy_agents(
    cfg: &AgentConfig,
    net: &NetworkModel,
    checkpoints: &[AgentCheckpoint],
    seed: u64,
) -> LabResult<Vec<AgentController>> {
    if checkpoints.len() != net.intersections.len() {
        return Err(LabError::Config(format!(
            "{} checkpoints for {} intersections",
            checkpoints.len(),
            net.intersections.len()
        )));
    }
    net.intersections
        .iter()
        .zip(checkpoints)
        .enumerate()
        .map(|(i, (inter, ckpt))| {
            check_agent_fits(&ckpt.agent, net, i)?;
            if ckpt.intersection != inter.id {
                return Err(LabError::Config(format!("checkpoint for {} given for {}", ckpt.intersection, inter.id)));
            }
            let policy = Arc::new(ckpt.agent.policy().clone());
            Ok(AgentController::new(i, cfg.policy_kind(), policy, seed.wrapping_add(i as u64))
                .with_normalizer(RewardNormalizer::with_magnitude(ckpt.reward_scale)))
        })
        .collect()
}

/// Whether an agent's networks match intersection `i`'s observation and phases.
pub fn check_agent_fits(agent: &Agent, net: &NetworkModel, i: usize) -> LabResult<()> {
    let inter = &net.intersections[i];
    let policy = agent.policy();
    let outputs = match agent {
        Agent::Dqn(_) => inter.num_phases(),
        Agent::Ddpg(_) => 1,
    };
    if policy.input_width() != state_width(inter) || policy.output_width() != outputs {
        return Err(LabError::Config(format!(
            "policy {}->{} does not fit intersection {} ({} inputs, {} outputs)",
            policy.input_width(),
            policy.output_width(),
            inter.id,
            state_width(inter),
            outputs
        )));
    }
    Ok(())
}
