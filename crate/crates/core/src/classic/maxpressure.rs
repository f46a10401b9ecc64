use alloc::vec::Vec;

use crate::error::Result;
use crate::net::NetworkModel;
use crate::signal::{Controller, Decision, DecisionContext};
use crate::sim::Simulator;

/// Pressure of each phase from per-phase incoming and outgoing lane counts.
pub fn phase_pressures(counts: &[(Vec<u32>, Vec<u32>)]) -> Vec<i64> {
    counts
        .iter()
        .map(|(inc, out)| {
            inc.iter().map(|&c| c as i64).sum::<i64>() - out.iter().map(|&c| c as i64).sum::<i64>()
        })
        .collect()
}

/// Holds until `g_min` green seconds, then picks the highest-pressure phase
/// (lowest index on ties).
pub fn maxpressure_decide(t_p: u32, g_min: u32, counts: &[(Vec<u32>, Vec<u32>)]) -> Decision {
    if t_p < g_min {
        return Decision::Hold;
    }
    let pressures = phase_pressures(counts);
    let mut best = 0;
    for (p, &v) in pressures.iter().enumerate() {
        if v > pressures[best] {
            best = p;
        }
    }
    Decision::NextPhase(best)
}

/// Vehicles within the observation bound on each phase's incoming and outgoing lanes.
pub fn phase_counts(sim: &Simulator<'_>, net: &NetworkModel, intersection: usize) -> Vec<(Vec<u32>, Vec<u32>)> {
    let bound = sim.config().observation_bound_m;
    net.intersections[intersection]
        .phases
        .iter()
        .map(|p| {
            let inc = p.incoming.iter().map(|&l| sim.count_near_stop_line(l, bound) as u32).collect();
            let out = p.outgoing.iter().map(|&l| sim.count_near_start(l, bound) as u32).collect();
            (inc, out)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MaxPressure {
    pub g_min: u32,
}

impl MaxPressure {
    pub fn new(g_min: u32) -> Self {
        MaxPressure { g_min }
    }
}

impl Controller for MaxPressure {
    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<Decision> {
        let counts = phase_counts(ctx.sim, ctx.sim.net(), ctx.intersection);
        let t_p = match ctx.signal.current_green() {
            Some(_) => ctx.signal.t_p(),
            None => u32::MAX,
        };
        Ok(maxpressure_decide(t_p, self.g_min, &counts))
    }
}
