//! The closed simulation loop: observe, decide, sequence, step, collect.

use alloc::vec::Vec;

use crate::demand::DemandProfile;
use crate::error::{Error, Result};
use crate::net::NetworkModel;
use crate::signal::{Controller, Decision, DecisionContext, Sequencer};
use crate::sim::{Counters, MoeLog, SignalCommand, SimConfig, Simulator};

/// Result of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub moe: MoeLog,
    pub counters: Counters,
    /// Vehicles still in the network when the drain cap was reached.
    pub unfinished: u64,
    /// Simulated seconds including the drain.
    pub steps: u32,
}

/// A running episode with one controller per intersection.
pub struct Episode<'n, 'c, C: Controller> {
    sim: Simulator<'n>,
    controllers: &'c mut [C],
    signals: Vec<Sequencer>,
    horizon: u32,
    last_command: SignalCommand,
    moe: MoeLog,
}

impl<'n, 'c, C: Controller> Episode<'n, 'c, C> {
    /// `horizon` is when arrivals stop; the drain cap from `cfg` follows it.
    pub fn new(
        net: &'n NetworkModel,
        demand: &'n DemandProfile,
        controllers: &'c mut [C],
        cfg: SimConfig,
        seed: u64,
        horizon: u32,
    ) -> Result<Self> {
        if controllers.len() != net.intersections.len() {
            return Err(Error::Config(alloc::format!(
                "{} controllers for {} intersections",
                controllers.len(),
                net.intersections.len()
            )));
        }
        if horizon == 0 || horizon as f64 > demand.horizon() + cfg.drain_cap_s as f64 {
            return Err(Error::Config(alloc::format!(
                "horizon {horizon} s outside (0, demand horizon + drain cap]"
            )));
        }
        let signals = net
            .intersections
            .iter()
            .zip(controllers.iter())
            .map(|(inter, c)| {
                let s = Sequencer::new(inter.num_phases());
                match c.duration_bounds() {
                    Some((lo, hi)) => s.with_duration_bounds(lo, hi),
                    None => s,
                }
            })
            .collect();
        let mut sim = Simulator::new(net, demand, cfg, seed);
        sim.stop_arrivals_at(horizon as f64);
        Ok(Episode {
            sim,
            controllers,
            signals,
            horizon,
            last_command: SignalCommand(Vec::new()),
            moe: MoeLog::new(net.intersections.len()),
        })
    }

    pub fn sim(&self) -> &Simulator<'n> {
        &self.sim
    }

    pub fn signals(&self) -> &[Sequencer] {
        &self.signals
    }

    pub fn controllers_mut(&mut self) -> &mut [C] {
        self.controllers
    }

    /// Indications shown during the last step.
    pub fn last_command(&self) -> &SignalCommand {
        &self.last_command
    }

    pub fn moe(&self) -> &MoeLog {
        &self.moe
    }

    /// Past the horizon with an empty network, or at the drain cap.
    pub fn finished(&self) -> bool {
        let clock = self.sim.clock();
        if clock < self.horizon {
            return false;
        }
        self.sim.in_network() == 0 || clock >= self.horizon + self.sim.config().drain_cap_s
    }

    /// One simulated second.
    pub fn step(&mut self) -> Result<()> {
        let mut cmd = Vec::with_capacity(self.signals.len());
        for (i, signal) in self.signals.iter_mut().enumerate() {
            let decision = if signal.accepts_decision() {
                let ctx = DecisionContext { sim: &self.sim, intersection: i, signal };
                self.controllers[i].decide(&ctx)?
            } else {
                Decision::Hold
            };
            cmd.push(signal.advance(decision)?);
        }
        self.last_command = SignalCommand(cmd);
        self.sim.step(&self.last_command)?;
        self.moe.push(self.sim.moe_increment());
        Ok(())
    }

    /// Notifies controllers and returns the outcome.
    pub fn finish(self) -> EpisodeOutcome {
        for c in self.controllers.iter_mut() {
            c.end_episode();
        }
        EpisodeOutcome {
            counters: self.sim.counters(),
            unfinished: self.sim.in_network(),
            steps: self.sim.clock(),
            moe: self.moe,
        }
    }
}

/// Runs an episode to completion.
pub fn run_episode<C: Controller>(
    net: &NetworkModel,
    demand: &DemandProfile,
    controllers: &mut [C],
    cfg: SimConfig,
    seed: u64,
    horizon: u32,
) -> Result<EpisodeOutcome> {
    let mut ep = Episode::new(net, demand, controllers, cfg, seed, horizon)?;
    while !ep.finished() {
        ep.step()?;
    }
    Ok(ep.finish())
}
