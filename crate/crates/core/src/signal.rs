//! The controller contract: observations, rewards, the interphase
//! sequencer and the [`Controller`] trait every signal controller implements.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::net::{Intersection, LaneIdx, NetworkModel};
use crate::rl::Experience;
use crate::sim::{vehicle_delay, Indication, Simulator};

pub const YELLOW_S: u32 = 2;
pub const ALL_RED_S: u32 = 3;
/// Yellow plus all-red between two distinct greens.
pub const INTERPHASE_S: u32 = YELLOW_S + ALL_RED_S;

/// A controller's observation of one intersection.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficState {
    pub densities: Vec<f64>,
    pub queues: Vec<f64>,
    /// Slot `|P|` is the all-red clearance.
    pub phase_one_hot: Vec<bool>,
}

impl TrafficState {
    pub fn width(&self) -> usize {
        self.densities.len() + self.queues.len() + self.phase_one_hot.len()
    }

    /// Flattened network input: densities, queues, one-hot.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.width());
        v.extend_from_slice(&self.densities);
        v.extend_from_slice(&self.queues);
        v.extend(self.phase_one_hot.iter().map(|&b| if b { 1.0 } else { 0.0 }));
        v
    }

    pub fn is_all_red(&self) -> bool {
        self.phase_one_hot.last().copied().unwrap_or(false)
    }
}

/// Observation width for an intersection: `2|L_inc| + |P| + 1`.
pub fn state_width(inter: &Intersection) -> usize {
    2 * inter.incoming.len() + inter.num_phases() + 1
}

/// Jam capacity of the part of a lane inside the observation bound.
pub fn capacity_within(net: &NetworkModel, lane: LaneIdx, bound: f64) -> f64 {
    let l = net.lane(lane);
    if l.length <= bound {
        l.jam_capacity as f64
    } else {
        libm::floor(l.jam_capacity as f64 * bound / l.length).max(1.0)
    }
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Normalized densities and queues of an intersection's incoming lanes.
pub fn observe(sim: &Simulator<'_>, intersection: usize, indication: Indication) -> Result<TrafficState> {
    let net = sim.net();
    let inter = net.intersection(intersection)?;
    let bound = sim.config().observation_bound_m;
    let mut densities = Vec::with_capacity(inter.incoming.len());
    let mut queues = Vec::with_capacity(inter.incoming.len());
    for &lane in &inter.incoming {
        let cap = capacity_within(net, lane, bound);
        densities.push(clamp01(sim.count_near_stop_line(lane, bound) as f64 / cap));
        queues.push(clamp01(sim.queue_len(lane) as f64 / cap));
    }
    let mut phase_one_hot = vec![false; inter.num_phases() + 1];
    match indication {
        Indication::Green(p) => phase_one_hot[p] = true,
        Indication::Yellow(_) | Indication::AllRed => phase_one_hot[inter.num_phases()] = true,
    }
    Ok(TrafficState { densities, queues, phase_one_hot })
}

/// `-Σ delay` over vehicles on incoming lanes within the observation bound.
pub fn raw_reward(sim: &Simulator<'_>, intersection: usize) -> Result<f64> {
    let net = sim.net();
    let inter = net.intersection(intersection)?;
    let bound = sim.config().observation_bound_m;
    let now = sim.now();
    let mut total = 0.0;
    for &lane in &inter.incoming {
        let len = net.lane(lane).length;
        total += sim
            .lane_vehicles(lane)
            .filter(|v| v.queued || len - v.position <= bound)
            .map(|v| vehicle_delay(v, now))
            .sum::<f64>();
    }
    Ok(-total)
}

/// Minimum-reward normalization: divides by the largest magnitude seen so far.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RewardNormalizer {
    max_magnitude: f64,
}

impl RewardNormalizer {
    pub fn with_magnitude(max_magnitude: f64) -> Self {
        RewardNormalizer { max_magnitude: max_magnitude.abs() }
    }

    pub fn magnitude(&self) -> f64 {
        self.max_magnitude
    }

    /// Updates the running maximum with `raw` and returns `raw / |r_min|`.
    pub fn normalize(&mut self, raw: f64) -> f64 {
        let m = raw.abs();
        if m > self.max_magnitude {
            self.max_magnitude = m;
        }
        self.apply(raw)
    }

    /// Normalizes without updating the maximum.
    pub fn apply(&self, raw: f64) -> f64 {
        if self.max_magnitude == 0.0 {
            0.0
        } else {
            (raw / self.max_magnitude).clamp(-1.0, 0.0)
        }
    }
}

/// Normalized reward for an intersection; updates `norm`.
pub fn reward(sim: &Simulator<'_>, intersection: usize, norm: &mut RewardNormalizer) -> Result<f64> {
    Ok(norm.normalize(raw_reward(sim, intersection)?))
}

/// What a controller wants the signal to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// Keep the current indication.
    Hold,
    /// Switch to (or continue) a green phase.
    NextPhase(usize),
    /// Show `phase` green for `seconds` green seconds, then ask again.
    PhaseDuration { phase: usize, seconds: u32 },
    /// Clear the intersection and rest in all-red.
    AllRed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pending {
    Green { phase: usize, duration: Option<u32> },
    Idle,
}

/// Per-intersection signal state; inserts the yellow and all-red interphase.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sequencer {
    num_phases: usize,
    duration_bounds: Option<(u32, u32)>,
    indication: Indication,
    time_in_indication: u32,
    pending: Option<Pending>,
    t_p: u32,
    last_green: Option<usize>,
    green_limit: Option<u32>,
}

impl Sequencer {
    /// Starts in an all-red rest with the clearance already satisfied.
    pub fn new(num_phases: usize) -> Self {
        Sequencer {
            num_phases,
            duration_bounds: None,
            indication: Indication::AllRed,
            time_in_indication: ALL_RED_S,
            pending: None,
            t_p: 0,
            last_green: None,
            green_limit: None,
        }
    }

    /// Rejects `PhaseDuration` decisions outside `[min, max]`.
    pub fn with_duration_bounds(mut self, min: u32, max: u32) -> Self {
        self.duration_bounds = Some((min, max));
        self
    }

    pub fn indication(&self) -> Indication {
        self.indication
    }

    /// Green seconds shown so far in the current green.
    pub fn t_p(&self) -> u32 {
        self.t_p
    }

    pub fn current_green(&self) -> Option<usize> {
        match self.indication {
            Indication::Green(p) => Some(p),
            _ => None,
        }
    }

    pub fn last_green(&self) -> Option<usize> {
        self.last_green
    }

    /// Resting in all-red with no green pending.
    pub fn is_idle(&self) -> bool {
        self.indication == Indication::AllRed && !matches!(self.pending, Some(Pending::Green { .. }))
    }

    /// A decision is only taken in green or at rest; interphases run to completion.
    pub fn accepts_decision(&self) -> bool {
        matches!(self.indication, Indication::Green(_)) || self.is_idle()
    }

    /// For timed greens, whether the requested duration has elapsed.
    pub fn green_expired(&self) -> bool {
        match (self.indication, self.green_limit) {
            (Indication::Green(_), Some(limit)) => self.t_p >= limit,
            (Indication::Green(_), None) => true,
            _ => false,
        }
    }

    fn check_phase(&self, phase: usize) -> Result<()> {
        if phase >= self.num_phases {
            return Err(Error::Config(alloc::format!("phase {phase} out of range")));
        }
        Ok(())
    }

    fn check_duration(&self, seconds: u32) -> Result<()> {
        if let Some((min, max)) = self.duration_bounds {
            if seconds < min || seconds > max {
                return Err(Error::DurationOutOfBounds { seconds, min, max });
            }
        }
        Ok(())
    }

    fn enter(&mut self, ind: Indication) {
        self.indication = ind;
        self.time_in_indication = 0;
    }

    fn start_green(&mut self, phase: usize, duration: Option<u32>) {
        self.enter(Indication::Green(phase));
        self.t_p = 0;
        self.last_green = Some(phase);
        self.green_limit = duration;
        self.pending = None;
    }

    /// Applies `decision` and returns the indication shown for the coming second.
    pub fn advance(&mut self, decision: Decision) -> Result<Indication> {
        if self.accepts_decision() {
            self.apply(decision)?;
        }
        let shown = self.indication;
        self.time_in_indication += 1;
        match shown {
            Indication::Green(_) => self.t_p += 1,
            Indication::Yellow(_) if self.time_in_indication >= YELLOW_S => self.enter(Indication::AllRed),
            Indication::AllRed if self.time_in_indication >= ALL_RED_S => match self.pending {
                Some(Pending::Green { phase, duration }) => self.start_green(phase, duration),
                Some(Pending::Idle) => self.pending = None,
                None => {}
            },
            _ => {}
        }
        Ok(shown)
    }

    fn apply(&mut self, decision: Decision) -> Result<()> {
        let (target, duration) = match decision {
            Decision::Hold => return Ok(()),
            Decision::AllRed => {
                if let Indication::Green(p) = self.indication {
                    self.pending = Some(Pending::Idle);
                    self.green_limit = None;
                    self.enter(Indication::Yellow(p));
                }
                return Ok(());
            }
            Decision::NextPhase(q) => (q, None),
            Decision::PhaseDuration { phase, seconds } => {
                self.check_duration(seconds)?;
                (phase, Some(seconds))
            }
        };
        self.check_phase(target)?;
        match self.indication {
            Indication::Green(p) if p == target => {
                self.green_limit = duration.map(|d| self.t_p + d);
            }
            Indication::Green(p) => {
                self.pending = Some(Pending::Green { phase: target, duration });
                self.green_limit = None;
                self.enter(Indication::Yellow(p));
            }
            Indication::AllRed if self.time_in_indication >= ALL_RED_S => self.start_green(target, duration),
            Indication::AllRed => self.pending = Some(Pending::Green { phase: target, duration }),
            Indication::Yellow(_) => {}
        }
        Ok(())
    }
}

/// Whether any incoming lane of the intersection holds a vehicle.
pub fn intersection_occupied(sim: &Simulator<'_>, intersection: usize) -> bool {
    let inter = &sim.net().intersections[intersection];
    inter.incoming.iter().any(|&l| sim.occupancy(l) > 0)
}

/// Next phase in cycle order after `current` whose incoming lanes hold a
/// vehicle, wrapping around to `current` itself; `None` means rest in all-red.
pub fn cycle_next_phase(sim: &Simulator<'_>, intersection: usize, current: Option<usize>) -> Option<usize> {
    let inter = &sim.net().intersections[intersection];
    let n = inter.num_phases();
    let start = current.map(|c| c + 1).unwrap_or(0);
    (0..n)
        .map(|k| (start + k) % n)
        .find(|&p| inter.phases[p].incoming.iter().any(|&l| sim.occupancy(l) > 0))
}

/// Everything a controller may look at when deciding.
pub struct DecisionContext<'a, 'n> {
    pub sim: &'a Simulator<'n>,
    pub intersection: usize,
    pub signal: &'a Sequencer,
}

impl<'a, 'n> DecisionContext<'a, 'n> {
    pub fn inter(&self) -> &'n Intersection {
        &self.sim.net().intersections[self.intersection]
    }

    pub fn observe(&self) -> Result<TrafficState> {
        observe(self.sim, self.intersection, self.signal.indication())
    }
}

pub trait Controller: Send {
    /// Called once per second while the sequencer accepts decisions.
    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<Decision>;

    /// Called after the last step of an episode.
    fn end_episode(&mut self) {}

    /// Moves transitions produced since the last call into `out`.
    fn drain_experiences(&mut self, _out: &mut Vec<Experience>) {}

    /// Bounds enforced on `PhaseDuration` decisions, if any.
    fn duration_bounds(&self) -> Option<(u32, u32)> {
        None
    }
}

impl<C: Controller + ?Sized> Controller for Box<C> {
    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<Decision> {
        (**self).decide(ctx)
    }
    fn end_episode(&mut self) {
        (**self).end_episode()
    }
    fn drain_experiences(&mut self, out: &mut Vec<Experience>) {
        (**self).drain_experiences(out)
    }
    fn duration_bounds(&self) -> Option<(u32, u32)> {
        (**self).duration_bounds()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::DemandProfile;
    use crate::fixtures;
    use crate::net::{NetworkModel, RouteIdx};
    use crate::sim::{SignalCommand, SimConfig};

    fn quiet(net: &NetworkModel) -> DemandProfile {
        let l = net.entry_lanes().next().unwrap();
        DemandProfile::constant(net, &[(l, 0.0)], 10_000.0).unwrap()
    }

    fn run(seq: &mut Sequencer, decisions: &[Decision]) -> Vec<Indication> {
        decisions.iter().map(|&d| seq.advance(d).unwrap()).collect()
    }

    #[test]
    fn switch_inserts_yellow_then_all_red() {
        let mut seq = Sequencer::new(2);
        assert_eq!(seq.advance(Decision::NextPhase(0)).unwrap(), Indication::Green(0));
        let shown = run(&mut seq, &[Decision::NextPhase(1), Decision::Hold, Decision::Hold, Decision::Hold, Decision::Hold, Decision::Hold]);
        assert_eq!(
            shown,
            [
                Indication::Yellow(0),
                Indication::Yellow(0),
                Indication::AllRed,
                Indication::AllRed,
                Indication::AllRed,
                Indication::Green(1),
            ]
        );
        assert_eq!(seq.t_p(), 1);
    }

    #[test]
    fn same_phase_continues_without_interphase() {
        let mut seq = Sequencer::new(2);
        run(&mut seq, &[Decision::NextPhase(0); 4]);
        assert_eq!(seq.advance(Decision::NextPhase(0)).unwrap(), Indication::Green(0));
        assert_eq!(seq.t_p(), 5);
    }

    #[test]
    fn idle_hold_stays_all_red() {
        let mut seq = Sequencer::new(2);
        for _ in 0..10 {
            assert_eq!(seq.advance(Decision::Hold).unwrap(), Indication::AllRed);
        }
        assert!(seq.is_idle());
    }

    #[test]
    fn rest_after_green_then_resume_waits_for_clearance() {
        let mut seq = Sequencer::new(2);
        seq.advance(Decision::NextPhase(0)).unwrap();
        let shown = run(&mut seq, &[Decision::AllRed, Decision::Hold, Decision::Hold, Decision::NextPhase(1), Decision::Hold, Decision::Hold]);
        assert_eq!(
            shown,
            [
                Indication::Yellow(0),
                Indication::Yellow(0),
                Indication::AllRed,
                Indication::AllRed,
                Indication::AllRed,
                Indication::Green(1),
            ]
        );
    }

    #[test]
    fn duration_bounds_enforced() {
        let mut seq = Sequencer::new(2).with_duration_bounds(5, 60);
        assert!(matches!(
            seq.advance(Decision::PhaseDuration { phase: 0, seconds: 4 }),
            Err(Error::DurationOutOfBounds { seconds: 4, .. })
        ));
        seq.advance(Decision::PhaseDuration { phase: 0, seconds: 5 }).unwrap();
        for _ in 0..4 {
            assert!(!seq.green_expired());
            seq.advance(Decision::Hold).unwrap();
        }
        assert!(seq.green_expired());
    }

    #[test]
    fn observe_empty_all_red() {
        let net = fixtures::single();
        let demand = quiet(&net);
        let sim = Simulator::new(&net, &demand, SimConfig::default(), 0);
        let s = observe(&sim, 0, Indication::AllRed).unwrap();
        assert!(s.densities.iter().chain(&s.queues).all(|&x| x == 0.0));
        assert_eq!(s.phase_one_hot, [false, false, true]);
        assert_eq!(s.width(), 11);
        assert_eq!(s.width(), state_width(&net.intersections[0]));
    }

    #[test]
    fn observe_density_and_queue_fractions() {
        let net = fixtures::minimal();
        let demand = quiet(&net);
        let mut sim = Simulator::new(&net, &demand, SimConfig::default(), 0);
        // jam capacity of a 150 m lane is 20
        for _ in 0..3 {
            sim.insert_vehicle(RouteIdx(0), 0, 0.0, true).unwrap();
        }
        sim.insert_vehicle(RouteIdx(0), 0, 40.0, false).unwrap();
        sim.insert_vehicle(RouteIdx(0), 0, 90.0, false).unwrap();
        let s = observe(&sim, 0, Indication::Green(0)).unwrap();
        assert_eq!(s.densities[0], 0.25);
        assert_eq!(s.queues[0], 0.15);
        assert_eq!(s.phase_one_hot, [true, false, false]);

        for _ in 5..20 {
            sim.insert_vehicle(RouteIdx(0), 0, 0.0, true).unwrap();
        }
        let s = observe(&sim, 0, Indication::Green(0)).unwrap();
        assert_eq!(s.densities[0], 1.0);
    }

    #[test]
    fn observation_bound_limits_capacity() {
        let mut def = fixtures::minimal_def();
        def.lanes.get_mut("in").unwrap().length_m = 300.0;
        let net = NetworkModel::from_def(&def).unwrap();
        let lane = net.lane_by_id("in").unwrap();
        assert_eq!(capacity_within(&net, lane, 150.0), 20.0);
        let demand = quiet(&net);
        let mut sim = Simulator::new(&net, &demand, SimConfig::default(), 0);
        sim.insert_vehicle(RouteIdx(0), 0, 10.0, false).unwrap();
        sim.insert_vehicle(RouteIdx(0), 0, 200.0, false).unwrap();
        let s = observe(&sim, 0, Indication::AllRed).unwrap();
        assert_eq!(s.densities[0], 1.0 / 20.0);
    }

    #[test]
    fn reward_normalization() {
        let mut n = RewardNormalizer::default();
        assert_eq!(n.normalize(0.0), 0.0);
        assert_eq!(n.normalize(-3.0), -1.0);
        let mut n = RewardNormalizer::with_magnitude(11.0);
        assert_eq!(n.normalize(-(2.0 + 3.5)), -0.5);
        assert_eq!(n.magnitude(), 11.0);
    }

    #[test]
    fn cycle_scan_skips_empty_phases() {
        let net = fixtures::single();
        let demand = quiet(&net);
        let mut sim = Simulator::new(&net, &demand, SimConfig::default(), 0);
        assert_eq!(cycle_next_phase(&sim, 0, Some(0)), None);
        // route 6 starts on e_in, served by phase 1
        sim.insert_vehicle(RouteIdx(6), 0, 0.0, false).unwrap();
        assert_eq!(cycle_next_phase(&sim, 0, Some(0)), Some(1));
        assert_eq!(cycle_next_phase(&sim, 0, Some(1)), Some(1));
        assert_eq!(cycle_next_phase(&sim, 0, None), Some(1));
        sim.step(&SignalCommand(vec![Indication::AllRed])).unwrap();
    }

    #[test]
    fn reward_counts_incoming_delay() {
        let net = fixtures::minimal();
        let demand = quiet(&net);
        let mut sim = Simulator::new(&net, &demand, SimConfig::default(), 0);
        let ff = net.lane(net.lane_by_id("in").unwrap()).free_flow_time();
        let a = sim.insert_vehicle(RouteIdx(0), 0, 0.0, true).unwrap();
        let b = sim.insert_vehicle(RouteIdx(0), 0, 0.0, true).unwrap();
        sim.set_entry_time(a, -(ff + 2.0));
        sim.set_entry_time(b, -(ff + 3.5));
        let raw = raw_reward(&sim, 0).unwrap();
        assert!((raw + 5.5).abs() < 1e-9);
        let mut n = RewardNormalizer::with_magnitude(11.0);
        assert!((reward(&sim, 0, &mut n).unwrap() + 0.5).abs() < 1e-9);
    }
}
