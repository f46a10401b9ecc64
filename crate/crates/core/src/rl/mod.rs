//! DQN and DDPG signal agents: networks, replay, training updates and the
//! acting controllers that turn a policy into sequencer decisions.

mod control;
mod ddpg;
mod dqn;
mod replay;
mod schedule;

pub use control::{AgentController, PolicyKind};
pub use ddpg::{actor_specs, critic_specs, ddpg_act, ddpg_duration, DdpgAgent, DdpgConfig, DdpgLosses};
pub use dqn::{dqn_act, greedy_phase, q_network_specs, DqnAgent, DqnConfig};
pub use replay::ReplayBuffer;
pub use schedule::LinearSchedule;

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::neural::{decode_parameters, encode_parameters, ParameterSet};
use crate::signal::TrafficState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    /// DQN: index of the chosen green phase.
    Phase(usize),
    /// DDPG: clamped actor output in `[-1, 1]`.
    Duration(f64),
}

/// One decision-to-decision transition of one intersection.
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: TrafficState,
    pub action: Action,
    /// Normalized reward in `[-1, 0]`.
    pub reward: f64,
    pub next_state: TrafficState,
    /// Set when the intersection emptied; `next_state` is then the all-red state.
    pub terminal: bool,
    pub intersection: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Dqn,
    Ddpg,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dqn => "dqn",
            Algorithm::Ddpg => "ddpg",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentConfig {
    Dqn(DqnConfig),
    Ddpg(DdpgConfig),
}

impl AgentConfig {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            AgentConfig::Dqn(_) => Algorithm::Dqn,
            AgentConfig::Ddpg(_) => Algorithm::Ddpg,
        }
    }

    pub fn batch_size(&self) -> usize {
        match self {
            AgentConfig::Dqn(c) => c.batch_size,
            AgentConfig::Ddpg(c) => c.batch_size,
        }
    }

    pub fn replay_capacity(&self) -> usize {
        match self {
            AgentConfig::Dqn(c) => c.replay_capacity,
            AgentConfig::Ddpg(c) => c.replay_capacity,
        }
    }

    pub fn exploration(&self) -> LinearSchedule {
        match self {
            AgentConfig::Dqn(c) => c.epsilon,
            AgentConfig::Ddpg(c) => c.sigma,
        }
    }

    pub fn policy_kind(&self) -> PolicyKind {
        match self {
            AgentConfig::Dqn(c) => PolicyKind::Dqn { a_repeat: c.a_repeat },
            AgentConfig::Ddpg(c) => PolicyKind::Ddpg { g_min: c.g_min, g_max: c.g_max },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AgentConfig::Dqn(c) => c.validate(),
            AgentConfig::Ddpg(c) => c.validate(),
        }
    }
}

/// A trainable agent for one intersection.
// one per intersection and moved rarely, so boxing the larger variant buys nothing
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone)]
pub enum Agent {
    Dqn(DqnAgent),
    Ddpg(DdpgAgent),
}

impl Agent {
    pub fn build(cfg: &AgentConfig, state_width: usize, num_phases: usize, seed: u64) -> Result<Self> {
        Ok(match cfg {
            AgentConfig::Dqn(c) => Agent::Dqn(DqnAgent::build(state_width, num_phases, c.clone(), seed)?),
            AgentConfig::Ddpg(c) => Agent::Ddpg(DdpgAgent::build(state_width, c.clone(), seed)?),
        })
    }

    /// Network the acting controllers evaluate.
    pub fn policy(&self) -> &ParameterSet {
        match self {
            Agent::Dqn(a) => &a.online,
            Agent::Ddpg(a) => &a.actor,
        }
    }

    pub fn updates(&self) -> u64 {
        match self {
            Agent::Dqn(a) => a.updates(),
            Agent::Ddpg(a) => a.updates(),
        }
    }

    /// One training update; returns the (critic) loss.
    pub fn train_batch(&mut self, batch: &[&Experience]) -> Result<f64> {
        match self {
            Agent::Dqn(a) => a.train_batch(batch),
            Agent::Ddpg(a) => a.train_batch(batch).map(|l| l.critic),
        }
    }

    fn algorithm(&self) -> Algorithm {
        match self {
            Agent::Dqn(_) => Algorithm::Dqn,
            Agent::Ddpg(_) => Algorithm::Ddpg,
        }
    }

    fn networks(&self) -> Vec<&ParameterSet> {
        match self {
            Agent::Dqn(a) => alloc::vec![&a.online, &a.target],
            Agent::Ddpg(a) => alloc::vec![&a.actor, &a.critic, &a.actor_target, &a.critic_target],
        }
    }
}

/// Everything needed to act with (and resume) a trained agent.
#[derive(Debug, Clone)]
pub struct AgentCheckpoint {
    pub intersection: alloc::string::String,
    pub agent: Agent,
    /// Reward normalizer magnitude `|r_min|` at save time.
    pub reward_scale: f64,
}

const AGENT_MAGIC: [u8; 8] = *b"TSCAGNT\0";

impl AgentCheckpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&AGENT_MAGIC);
        out.push(match self.agent.algorithm() {
            Algorithm::Dqn => 0,
            Algorithm::Ddpg => 1,
        });
        let id = self.intersection.as_bytes();
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(&self.reward_scale.to_le_bytes());
        out.extend_from_slice(&self.agent.updates().to_le_bytes());
        for net in self.agent.networks() {
            encode_parameters(net, &mut out);
        }
        out
    }

    /// Decodes a checkpoint; the agent is rebuilt with `cfg` around the stored networks.
    pub fn decode(buf: &[u8], cfg: &AgentConfig) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.into());
        if buf.len() < 13 || buf[..8] != AGENT_MAGIC {
            return Err(bad("not an agent checkpoint"));
        }
        let algo = match buf[8] {
            0 => Algorithm::Dqn,
            1 => Algorithm::Ddpg,
            c => return Err(Error::Checkpoint(format!("unknown algorithm code {c}"))),
        };
        if algo != cfg.algorithm() {
            return Err(Error::Checkpoint(format!("checkpoint holds a {} agent", algo.name())));
        }
        let id_len = u32::from_le_bytes(buf[9..13].try_into().expect("4 bytes")) as usize;
        let mut pos = 13 + id_len;
        if buf.len() < pos + 16 {
            return Err(bad("checkpoint truncated"));
        }
        let intersection = core::str::from_utf8(&buf[13..pos])
            .map_err(|_| bad("intersection id is not UTF-8"))?
            .into();
        let reward_scale = f64::from_le_bytes(buf[pos..pos + 8].try_into().expect("8 bytes"));
        let updates = u64::from_le_bytes(buf[pos + 8..pos + 16].try_into().expect("8 bytes"));
        pos += 16;
        let mut nets = Vec::new();
        let count = if algo == Algorithm::Dqn { 2 } else { 4 };
        for _ in 0..count {
            nets.push(decode_parameters(buf, &mut pos)?);
        }
        if pos != buf.len() {
            return Err(bad("trailing bytes after checkpoint"));
        }
        let agent = match cfg {
            AgentConfig::Dqn(c) => {
                let mut it = nets.into_iter();
                let online = it.next().expect("two nets");
                let target = it.next().expect("two nets");
                Agent::Dqn(DqnAgent::from_parts(online, target, c.clone(), updates)?)
            }
            AgentConfig::Ddpg(c) => {
                let mut it = nets.into_iter();
                let actor = it.next().expect("four nets");
                let critic = it.next().expect("four nets");
                let actor_target = it.next().expect("four nets");
                let critic_target = it.next().expect("four nets");
                Agent::Ddpg(DdpgAgent::from_parts(actor, critic, actor_target, critic_target, c.clone(), updates)?)
            }
        };
        Ok(AgentCheckpoint { intersection, agent, reward_scale })
    }
}

/// Flattened state rows of a batch.
pub(crate) fn state_rows(batch: &[&Experience], next: bool) -> crate::neural::Batch {
    let w = batch[0].state.width();
    let mut data = Vec::with_capacity(batch.len() * w);
    for e in batch {
        let s = if next { &e.next_state } else { &e.state };
        data.extend(s.to_vec());
    }
    crate::neural::Batch::from_vec(batch.len(), w, data).expect("uniform state width")
}

pub(crate) fn check_batch(batch: &[&Experience], min: usize) -> Result<()> {
    if batch.len() < min.max(2) {
        return Err(Error::InsufficientSamples { needed: min.max(2), have: batch.len() });
    }
    let w = batch[0].state.width();
    if batch.iter().any(|e| e.state.width() != w || e.next_state.width() != w) {
        return Err(Error::Shape("mixed state widths in one batch".into()));
    }
    Ok(())
}
