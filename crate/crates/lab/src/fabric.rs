//! Distributed acting, centralized learning.
//!
//! Actors each own a simulator and one acting controller per intersection.
//! Every transition goes to the learner that owns its intersection over a
//! bounded queue; a full queue blocks the actor, so nothing is dropped or
//! duplicated. Learners own the agents and replay buffers of their
//! intersections, train once per received experience once warm, and publish
//! snapshots into per-actor latest-wins mailboxes.
//!
//! With one actor and one learner the two run in lockstep: after a step that
//! produced experiences the actor waits until the learner has consumed them
//! and published, which makes training bit-reproducible.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use crossbeam_channel::{bounded, unbounded, Receiver, Sender, TrySendError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tsc_core::demand::DemandProfile;
use tsc_core::episode::Episode;
use tsc_core::net::NetworkModel;
use tsc_core::neural::ParameterSet;
use tsc_core::rl::{Agent, AgentCheckpoint, AgentConfig, AgentController, Experience, ReplayBuffer};
use tsc_core::signal::{state_width, Controller};
use tsc_core::sim::SimConfig;

use crate::error::{LabError, LabResult};
use crate::io;
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct FabricConfig {
    pub actors: usize,
    pub learners: usize,
    /// Learner index of each intersection, network order.
    pub assignment: Vec<usize>,
    /// Training episodes over all actors.
    pub episodes: u64,
    /// Capacity of each learner's experience queue.
    pub experience_queue: usize,
    pub base_seed: u64,
    /// Arrivals stop here; the simulator's drain cap follows.
    pub horizon: u32,
    pub sim: SimConfig,
    /// Updates per intersection between training-log rows.
    pub log_every: u64,
    /// Learners also write checkpoints here every this many updates per intersection.
    pub checkpoint_every: Option<(u64, PathBuf)>,
}

impl FabricConfig {
    /// Round-robin assignment of intersections to learners.
    pub fn new(net: &NetworkModel, actors: usize, learners: usize, episodes: u64, base_seed: u64, horizon: u32) -> Self {
        FabricConfig {
            actors,
            learners,
            assignment: (0..net.intersections.len()).map(|i| i % learners.max(1)).collect(),
            episodes,
            experience_queue: 1024,
            base_seed,
            horizon,
            sim: SimConfig::default(),
            log_every: 100,
            checkpoint_every: None,
        }
    }

    pub fn lockstep(&self) -> bool {
        self.actors == 1 && self.learners == 1
    }

    pub fn validate(&self, net: &NetworkModel) -> LabResult<()> {
        if self.actors == 0 || self.learners == 0 {
            return Err(LabError::Config("need at least one actor and one learner".into()));
        }
        if self.assignment.len() != net.intersections.len() {
            return Err(LabError::Config(format!(
                "assignment covers {} of {} intersections",
                self.assignment.len(),
                net.intersections.len()
            )));
        }
        if let Some(l) = self.assignment.iter().find(|&&l| l >= self.learners) {
            return Err(LabError::Config(format!("assignment names learner {l} of {}", self.learners)));
        }
        if (0..self.learners).any(|l| !self.assignment.contains(&l)) {
            return Err(LabError::Config("every learner needs at least one intersection".into()));
        }
        if self.experience_queue == 0 || self.log_every == 0 {
            return Err(LabError::Config("queue capacity and log interval must be positive".into()));
        }
        if matches!(self.checkpoint_every, Some((0, _))) {
            return Err(LabError::Config("checkpoint interval must be positive".into()));
        }
        Ok(())
    }
}

/// A new policy snapshot for one intersection.
#[derive(Debug, Clone)]
pub struct ParameterUpdate {
    pub intersection: usize,
    pub version: u64,
    pub policy: Arc<ParameterSet>,
}

enum ToLearner {
    Experience {
        actor: usize,
        experience: Experience,
        /// Sender's reward normalizer magnitude for that intersection.
        reward_scale: f64,
    },
    /// Lockstep barrier: acknowledge once everything before it is consumed.
    Sync,
}

/// Single-slot mailbox where a newer message replaces an unread older one.
#[derive(Clone)]
struct Mailbox {
    tx: Sender<ParameterUpdate>,
    rx: Receiver<ParameterUpdate>,
}

impl Mailbox {
    fn new() -> Self {
        let (tx, rx) = bounded(1);
        Mailbox { tx, rx }
    }

    fn publish(&self, mut msg: ParameterUpdate) {
        loop {
            match self.tx.try_send(msg) {
                Ok(()) | Err(TrySendError::Disconnected(_)) => return,
                Err(TrySendError::Full(back)) => {
                    let _ = self.rx.try_recv();
                    msg = back;
                }
            }
        }
    }
}

/// One row of the training curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRow {
    pub wall_s: f64,
    pub learner: usize,
    pub intersection_id: String,
    pub updates: u64,
    /// Mean training loss since the previous row.
    pub loss: f64,
    /// Mean reward of the experiences received since the previous row.
    pub mean_reward: f64,
}

pub const LOG_HEADER: [&str; 6] = ["wall_s", "learner", "intersection_id", "updates", "loss", "mean_reward"];

impl LogRow {
    pub fn record(&self) -> [String; 6] {
        [
            self.wall_s.to_string(),
            self.learner.to_string(),
            self.intersection_id.clone(),
            self.updates.to_string(),
            self.loss.to_string(),
            self.mean_reward.to_string(),
        ]
    }
}

/// Delivery, routing and version audit of one training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FabricStats {
    pub episodes: u64,
    pub emitted_by_actor: Vec<u64>,
    /// `received[learner][actor]`.
    pub received: Vec<Vec<u64>>,
    /// Experiences a learner got for an intersection it does not own.
    pub misrouted: u64,
    /// Intersections each learner held agents and replay for.
    pub held: Vec<Vec<usize>>,
    pub updates: Vec<u64>,
    /// Largest spread of update counts within one learner at any time.
    pub max_round_robin_gap: u64,
    pub applied_updates: u64,
    pub stale_discarded: u64,
    /// Times an actor's applied version for an intersection went down.
    pub version_regressions: u64,
}

impl FabricStats {
    pub fn emitted(&self) -> u64 {
        self.emitted_by_actor.iter().sum()
    }

    pub fn received_total(&self) -> u64 {
        self.received.iter().flatten().sum()
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Network order.
    pub checkpoints: Vec<AgentCheckpoint>,
    pub log: Vec<LogRow>,
    pub stats: FabricStats,
}

struct ActorReport {
    episodes: u64,
    emitted: u64,
    applied: u64,
    stale: u64,
    regressions: u64,
}

struct LearnerReport {
    checkpoints: Vec<(usize, AgentCheckpoint)>,
    received: Vec<u64>,
    misrouted: u64,
    held: Vec<usize>,
    max_gap: u64,
    log: Vec<LogRow>,
}

/// Trains one agent per intersection of `net`.
pub fn train(
    net: &NetworkModel,
    demand: &DemandProfile,
    agent_cfg: &AgentConfig,
    cfg: &FabricConfig,
) -> LabResult<TrainOutcome> {
    cfg.validate(net)?;
    agent_cfg.validate()?;
    let mut agents = Vec::with_capacity(net.intersections.len());
    for (i, inter) in net.intersections.iter().enumerate() {
        let seed = derive_seed(&format!("{}/agent/{i}", cfg.base_seed));
        agents.push(Agent::build(agent_cfg, state_width(inter), inter.num_phases(), seed)?);
    }
    let initial: Vec<Arc<ParameterSet>> = agents.iter().map(|a| Arc::new(a.policy().clone())).collect();

    // mailboxes[actor][intersection]
    let mailboxes: Vec<Vec<Mailbox>> =
        (0..cfg.actors).map(|_| (0..net.intersections.len()).map(|_| Mailbox::new()).collect()).collect();
    let (queues_tx, queues_rx): (Vec<_>, Vec<_>) = (0..cfg.learners).map(|_| bounded(cfg.experience_queue)).unzip();
    let (ack_tx, ack_rx) = unbounded::<()>();

    let mut owned: Vec<BTreeMap<usize, Agent>> = (0..cfg.learners).map(|_| BTreeMap::new()).collect();
    for (i, agent) in agents.into_iter().enumerate() {
        owned[cfg.assignment[i]].insert(i, agent);
    }
    let start = Instant::now();

    let (actor_results, learner_results) = thread::scope(|s| {
        let learners: Vec<_> = owned
            .into_iter()
            .zip(queues_rx)
            .enumerate()
            .map(|(l, (agents, rx))| {
                let boxes: Vec<Vec<Mailbox>> = mailboxes.clone();
                let ack = cfg.lockstep().then(|| ack_tx.clone());
                thread::Builder::new()
                    .name(format!("learner-{l}"))
                    .spawn_scoped(s, move || {
                        learner_loop(Learner::new(l, net, agent_cfg, cfg, agents, start), rx, &boxes, ack)
                    })
                    .expect("spawn learner")
            })
            .collect();
        drop(ack_tx);
        let actors: Vec<_> = (0..cfg.actors)
            .map(|a| {
                let txs = queues_tx.clone();
                let boxes: Vec<Receiver<ParameterUpdate>> = mailboxes[a].iter().map(|m| m.rx.clone()).collect();
                let ack = cfg.lockstep().then(|| ack_rx.clone());
                let policies = initial.clone();
                thread::Builder::new()
                    .name(format!("actor-{a}"))
                    .spawn_scoped(s, move || actor_loop(a, net, demand, agent_cfg, cfg, policies, &txs, &boxes, ack))
                    .expect("spawn actor")
            })
            .collect();
        drop(queues_tx);
        let actor_results: Vec<LabResult<ActorReport>> =
            actors.into_iter().enumerate().map(|(a, h)| join(h, &format!("actor {a}"))).collect();
        let learner_results: Vec<LabResult<LearnerReport>> =
            learners.into_iter().enumerate().map(|(l, h)| join(h, &format!("learner {l}"))).collect();
        (actor_results, learner_results)
    });

    // a learner failure is the root cause of the actors' hang-ups
    let mut learners = Vec::with_capacity(cfg.learners);
    for r in learner_results {
        learners.push(r?);
    }
    let mut actors = Vec::with_capacity(cfg.actors);
    for r in actor_results {
        actors.push(r?);
    }

    let mut stats = FabricStats {
        episodes: actors.iter().map(|a| a.episodes).sum(),
        emitted_by_actor: actors.iter().map(|a| a.emitted).collect(),
        applied_updates: actors.iter().map(|a| a.applied).sum(),
        stale_discarded: actors.iter().map(|a| a.stale).sum(),
        version_regressions: actors.iter().map(|a| a.regressions).sum(),
        updates: vec![0; net.intersections.len()],
        ..FabricStats::default()
    };
    let mut checkpoints: Vec<Option<AgentCheckpoint>> = vec![None; net.intersections.len()];
    let mut log = Vec::new();
    for r in learners {
        stats.received.push(r.received);
        stats.misrouted += r.misrouted;
        stats.held.push(r.held);
        stats.max_round_robin_gap = stats.max_round_robin_gap.max(r.max_gap);
        log.extend(r.log);
        for (i, c) in r.checkpoints {
            stats.updates[i] = c.agent.updates();
            checkpoints[i] = Some(c);
        }
    }
    let checkpoints = checkpoints
        .into_iter()
        .enumerate()
        .map(|(i, c)| c.ok_or_else(|| LabError::Runtime(format!("no learner returned intersection {i}"))))
        .collect::<LabResult<Vec<_>>>()?;
    log.sort_by(|a, b| a.wall_s.total_cmp(&b.wall_s));
    Ok(TrainOutcome { checkpoints, log, stats })
}

fn join<T>(h: thread::ScopedJoinHandle<'_, LabResult<T>>, who: &str) -> LabResult<T> {
    match h.join() {
        Ok(r) => r.map_err(|e| match e {
            LabError::Runtime(m) => LabError::Runtime(format!("{who}: {m}")),
            other => other,
        }),
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            Err(LabError::Runtime(format!("{who} panicked: {msg}")))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn actor_loop(
    index: usize,
    net: &NetworkModel,
    demand: &DemandProfile,
    agent_cfg: &AgentConfig,
    cfg: &FabricConfig,
    policies: Vec<Arc<ParameterSet>>,
    queues: &[Sender<ToLearner>],
    mailboxes: &[Receiver<ParameterUpdate>],
    ack: Option<Receiver<()>>,
) -> LabResult<ActorReport> {
    let kind = agent_cfg.policy_kind();
    let schedule = agent_cfg.exploration();
    let mut controllers: Vec<AgentController> = policies
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            let seed = derive_seed(&format!("{}/actor/{index}/{i}", cfg.base_seed));
            AgentController::new(i, kind, p, seed).with_learning(true)
        })
        .collect();
    let mut report = ActorReport { episodes: 0, emitted: 0, applied: 0, stale: 0, regressions: 0 };
    let mut applied: Vec<u64> = controllers.iter().map(|c| c.policy_version()).collect();
    let mut batch = Vec::new();
    let hung_up = || LabError::Runtime("learner hung up".into());

    let mut episode = index as u64;
    while episode < cfg.episodes {
        for c in controllers.iter_mut() {
            c.set_exploration(schedule.for_actor(episode, index));
        }
        let seed = cfg.base_seed.wrapping_add(episode);
        let mut ep = Episode::new(net, demand, &mut controllers, cfg.sim, seed, cfg.horizon)?;
        while !ep.finished() {
            for (i, mb) in mailboxes.iter().enumerate() {
                while let Ok(msg) = mb.try_recv() {
                    debug_assert_eq!(msg.intersection, i);
                    let c = &mut ep.controllers_mut()[i];
                    if c.install(msg.policy) {
                        report.applied += 1;
                        if c.policy_version() < applied[i] {
                            report.regressions += 1;
                        }
                        applied[i] = c.policy_version();
                    } else {
                        report.stale += 1;
                    }
                }
            }
            ep.step()?;
            for c in ep.controllers_mut().iter_mut() {
                c.drain_experiences(&mut batch);
            }
            let sent = batch.len();
            for experience in batch.drain(..) {
                let i = experience.intersection;
                let reward_scale = ep.controllers_mut()[i].normalizer().magnitude();
                queues[cfg.assignment[i]]
                    .send(ToLearner::Experience { actor: index, experience, reward_scale })
                    .map_err(|_| hung_up())?;
            }
            report.emitted += sent as u64;
            if let (Some(ack), true) = (&ack, sent > 0) {
                queues[0].send(ToLearner::Sync).map_err(|_| hung_up())?;
                ack.recv().map_err(|_| hung_up())?;
            }
        }
        ep.finish();
        report.episodes += 1;
        episode += cfg.actors as u64;
    }
    Ok(report)
}

struct Slot {
    agent: Agent,
    replay: ReplayBuffer<Experience>,
    reward_scale: f64,
    log_loss: (f64, u64),
    log_reward: (f64, u64),
}

struct Learner<'a> {
    index: usize,
    net: &'a NetworkModel,
    cfg: &'a FabricConfig,
    batch_size: usize,
    slots: BTreeMap<usize, Slot>,
    order: Vec<usize>,
    next: usize,
    rng: ChaCha8Rng,
    start: Instant,
    log: Vec<LogRow>,
    max_gap: u64,
}

impl<'a> Learner<'a> {
    fn new(
        index: usize,
        net: &'a NetworkModel,
        agent_cfg: &AgentConfig,
        cfg: &'a FabricConfig,
        agents: BTreeMap<usize, Agent>,
        start: Instant,
    ) -> Self {
        let order: Vec<usize> = agents.keys().copied().collect();
        let slots = agents
            .into_iter()
            .map(|(i, agent)| {
                let replay = ReplayBuffer::new(agent_cfg.replay_capacity()).expect("validated capacity");
                (i, Slot { agent, replay, reward_scale: 0.0, log_loss: (0.0, 0), log_reward: (0.0, 0) })
            })
            .collect();
        Learner {
            index,
            net,
            cfg,
            batch_size: agent_cfg.batch_size(),
            slots,
            order,
            next: 0,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(&format!("{}/learner/{index}", cfg.base_seed))),
            start,
            log: Vec::new(),
            max_gap: 0,
        }
    }

    fn warm(&self) -> bool {
        self.slots.values().all(|s| s.replay.len() >= self.batch_size)
    }

    /// One update on the next intersection in round-robin order.
    fn train_next(&mut self, mailboxes: &[Vec<Mailbox>]) -> LabResult<()> {
        let i = self.order[self.next];
        self.next = (self.next + 1) % self.order.len();
        let slot = self.slots.get_mut(&i).expect("assigned");
        let loss = {
            let sample = slot.replay.sample(self.batch_size, &mut self.rng)?;
            slot.agent.train_batch(&sample)?
        };
        slot.log_loss.0 += loss;
        slot.log_loss.1 += 1;
        let policy = Arc::new(slot.agent.policy().clone());
        let version = policy.version();
        for boxes in mailboxes {
            boxes[i].publish(ParameterUpdate { intersection: i, version, policy: policy.clone() });
        }
        let updates = slot.agent.updates();
        if updates.is_multiple_of(self.cfg.log_every) {
            let mean = |(s, n): (f64, u64)| if n == 0 { 0.0 } else { s / n as f64 };
            self.log.push(LogRow {
                wall_s: self.start.elapsed().as_secs_f64(),
                learner: self.index,
                intersection_id: self.net.intersections[i].id.clone(),
                updates,
                loss: mean(slot.log_loss),
                mean_reward: mean(slot.log_reward),
            });
            slot.log_loss = (0.0, 0);
            slot.log_reward = (0.0, 0);
        }
        if let Some((every, dir)) = &self.cfg.checkpoint_every {
            if updates.is_multiple_of(*every) {
                let c = self.checkpoint(i);
                io::save_checkpoints(dir, &[c])?;
            }
        }
        let counts = self.slots.values().map(|s| s.agent.updates());
        let (lo, hi) = counts.fold((u64::MAX, 0), |(lo, hi), c| (lo.min(c), hi.max(c)));
        self.max_gap = self.max_gap.max(hi - lo);
        Ok(())
    }

    fn checkpoint(&self, i: usize) -> AgentCheckpoint {
        let slot = &self.slots[&i];
        AgentCheckpoint {
            intersection: self.net.intersections[i].id.clone(),
            agent: slot.agent.clone(),
            reward_scale: slot.reward_scale,
        }
    }
}

fn learner_loop(
    mut learner: Learner<'_>,
    rx: Receiver<ToLearner>,
    mailboxes: &[Vec<Mailbox>],
    ack: Option<Sender<()>>,
) -> LabResult<LearnerReport> {
    let mut received = vec![0u64; mailboxes.len()];
    let mut misrouted = 0;
    while let Ok(msg) = rx.recv() {
        match msg {
            ToLearner::Experience { actor, experience, reward_scale } => {
                received[actor] += 1;
                let Some(slot) = learner.slots.get_mut(&experience.intersection) else {
                    misrouted += 1;
                    continue;
                };
                slot.reward_scale = slot.reward_scale.max(reward_scale);
                slot.log_reward.0 += experience.reward;
                slot.log_reward.1 += 1;
                slot.replay.push(experience);
                if learner.warm() {
                    learner.train_next(mailboxes)?;
                }
            }
            ToLearner::Sync => {
                if let Some(ack) = &ack {
                    ack.send(()).map_err(|_| LabError::Runtime("actor hung up".into()))?;
                }
            }
        }
    }
    let held = learner.order.clone();
    let checkpoints = held.iter().map(|&i| (i, learner.checkpoint(i))).collect::<Vec<_>>();
    if let Some((_, dir)) = &learner.cfg.checkpoint_every {
        let cs: Vec<AgentCheckpoint> = checkpoints.iter().map(|(_, c)| c.clone()).collect();
        io::save_checkpoints(dir, &cs)?;
    }
    Ok(LearnerReport { checkpoints, received, misrouted, held, max_gap: learner.max_gap, log: learner.log })
}
