//! Point-queue microsimulator.
//!
//! Vehicles travel at the lane speed limit until they reach the stop line,
//! where they join a vertical FIFO queue. On green, the head of each lane's
//! queue crosses once the lane has shown green for a full saturation
//! headway since the previous departure, provided the target lane has room.
//! The clock advances in whole seconds.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::demand::DemandProfile;
use crate::error::{Error, Result};
use crate::net::{LaneIdx, NetworkModel, RouteIdx};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Saturation flow per lane, veh/h.
    pub saturation_flow_vph: f64,
    /// Observation distance from the stop line, metres.
    pub observation_bound_m: f64,
    /// Extra seconds allowed after the demand horizon for vehicles to exit.
    pub drain_cap_s: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { saturation_flow_vph: 1800.0, observation_bound_m: 150.0, drain_cap_s: 600 }
    }
}

impl SimConfig {
    /// Whole seconds between consecutive departures from one lane.
    pub fn headway_s(&self) -> u32 {
        libm::ceil(3600.0 / self.saturation_flow_vph) as u32
    }
}

/// Signal indication shown at one intersection for one second.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Indication {
    Green(usize),
    /// Yellow change after the given green phase.
    Yellow(usize),
    AllRed,
}

/// One indication per intersection, in network order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignalCommand(pub Vec<Indication>);

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleRecord {
    pub id: u64,
    pub route: RouteIdx,
    /// Index of the current lane within the route.
    pub leg: usize,
    pub lane: LaneIdx,
    pub entry_time: f64,
    /// Metres from the start of the current lane.
    pub position: f64,
    pub queued: bool,
    pub exit_time: Option<f64>,
    /// Free-flow time of the whole route.
    pub free_flow_time: f64,
    /// Free-flow time of the lanes already completed.
    pub ff_completed: f64,
    pub lane_speed: f64,
}

impl VehicleRecord {
    /// Free-flow time for the distance covered so far.
    pub fn free_flow_elapsed(&self) -> f64 {
        self.ff_completed + self.position / self.lane_speed
    }
}

/// Elapsed time minus free-flow time for the distance covered, floored at 0.
pub fn vehicle_delay(v: &VehicleRecord, now: f64) -> f64 {
    let end = match v.exit_time {
        Some(t) if t < now => t,
        _ => now,
    };
    let d = (end - v.entry_time) - v.free_flow_elapsed();
    if d > 0.0 { d } else { 0.0 }
}

#[derive(Debug, Clone, Default)]
struct LaneState {
    /// Ordered from closest-to-stop-line to last entered.
    moving: VecDeque<VehicleRecord>,
    queue: VecDeque<VehicleRecord>,
    /// Green seconds since the last departure.
    green_run: u32,
    departures: u64,
}

impl LaneState {
    fn occupancy(&self) -> usize {
        self.moving.len() + self.queue.len()
    }
}

/// A stop-line crossing during the last step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Discharge {
    pub intersection: usize,
    pub from: LaneIdx,
    pub to: LaneIdx,
}

/// Running vehicle totals; `generated == exited + in_network + blocked` always.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub generated: u64,
    pub blocked: u64,
    pub exited: u64,
}

pub struct Simulator<'n> {
    net: &'n NetworkModel,
    demand: &'n DemandProfile,
    cfg: SimConfig,
    headway: u32,
    rng: ChaCha8Rng,
    clock: u32,
    lanes: Vec<LaneState>,
    entry_lanes: Vec<LaneIdx>,
    next_id: u64,
    counters: Counters,
    exited_last: Vec<VehicleRecord>,
    discharges_last: Vec<Discharge>,
    arrivals_until: f64,
}

impl<'n> Simulator<'n> {
    pub fn new(net: &'n NetworkModel, demand: &'n DemandProfile, cfg: SimConfig, seed: u64) -> Self {
        Simulator {
            net,
            demand,
            cfg,
            headway: cfg.headway_s().max(1),
            rng: ChaCha8Rng::seed_from_u64(seed),
            clock: 0,
            lanes: vec![LaneState::default(); net.lanes.len()],
            entry_lanes: net.entry_lanes().collect(),
            next_id: 0,
            counters: Counters::default(),
            exited_last: Vec::new(),
            discharges_last: Vec::new(),
            arrivals_until: f64::INFINITY,
        }
    }

    /// No arrivals are generated at or after `t`.
    pub fn stop_arrivals_at(&mut self, t: f64) {
        self.arrivals_until = t;
    }

    pub fn net(&self) -> &'n NetworkModel {
        self.net
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Simulation time in seconds.
    pub fn now(&self) -> f64 {
        self.clock as f64
    }

    pub fn clock(&self) -> u32 {
        self.clock
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn in_network(&self) -> u64 {
        self.lanes.iter().map(|l| l.occupancy() as u64).sum()
    }

    pub fn occupancy(&self, lane: LaneIdx) -> usize {
        self.lanes[lane.0].occupancy()
    }

    pub fn queue_len(&self, lane: LaneIdx) -> usize {
        self.lanes[lane.0].queue.len()
    }

    /// Cumulative stop-line departures from a lane.
    pub fn departures(&self, lane: LaneIdx) -> u64 {
        self.lanes[lane.0].departures
    }

    /// Vehicles on a lane, head of queue first.
    pub fn lane_vehicles(&self, lane: LaneIdx) -> impl Iterator<Item = &VehicleRecord> {
        let s = &self.lanes[lane.0];
        s.queue.iter().chain(s.moving.iter())
    }

    /// Vehicles whose distance to the stop line is at most `dist`.
    pub fn count_near_stop_line(&self, lane: LaneIdx, dist: f64) -> usize {
        let len = self.net.lane(lane).length;
        let s = &self.lanes[lane.0];
        s.queue.len() + s.moving.iter().take_while(|v| len - v.position <= dist).count()
    }

    /// Queued vehicles within `dist` of the stop line.
    pub fn queued_near_stop_line(&self, lane: LaneIdx, _dist: f64) -> usize {
        // queued vehicles stand at the stop line, distance 0
        self.lanes[lane.0].queue.len()
    }

    /// Vehicles within `dist` of the lane start.
    pub fn count_near_start(&self, lane: LaneIdx, dist: f64) -> usize {
        let s = &self.lanes[lane.0];
        let moving = s.moving.iter().rev().take_while(|v| v.position <= dist).count();
        let len = self.net.lane(lane).length;
        let queued = if len <= dist { s.queue.len() } else { 0 };
        moving + queued
    }

    pub fn exited_last_step(&self) -> &[VehicleRecord] {
        &self.exited_last
    }

    pub fn discharges_last_step(&self) -> &[Discharge] {
        &self.discharges_last
    }

    /// Places a vehicle directly on a lane; used to set up scenarios.
    pub fn insert_vehicle(&mut self, route: RouteIdx, leg: usize, position: f64, queued: bool) -> Result<u64> {
        let lane = *self
            .net
            .route(route)
            .get(leg)
            .ok_or_else(|| Error::Config(alloc::format!("route {} has no leg {leg}", route.0)))?;
        let l = self.net.lane(lane);
        if self.lanes[lane.0].occupancy() >= l.jam_capacity as usize {
            return Err(Error::Config(alloc::format!("lane \"{}\" is full", l.id)));
        }
        let ff_completed: f64 = self.net.route(route)[..leg].iter().map(|&x| self.net.lane(x).free_flow_time()).sum();
        let mut v = self.new_vehicle(route);
        v.leg = leg;
        v.lane = lane;
        v.ff_completed = ff_completed;
        v.lane_speed = l.speed_limit;
        v.position = if queued { l.length } else { position.min(l.length) };
        v.entry_time = self.now() - ff_completed - v.position / l.speed_limit;
        v.queued = queued;
        let id = v.id;
        self.counters.generated += 1;
        let s = &mut self.lanes[lane.0];
        if queued {
            s.queue.push_back(v);
        } else {
            // keep moving vehicles ordered by position, furthest first
            let at = s.moving.iter().position(|o| o.position < v.position).unwrap_or(s.moving.len());
            s.moving.insert(at, v);
        }
        Ok(id)
    }

    /// Overrides the entry time of a vehicle; used to set up scenarios.
    pub fn set_entry_time(&mut self, id: u64, entry_time: f64) -> bool {
        for s in &mut self.lanes {
            for v in s.queue.iter_mut().chain(s.moving.iter_mut()) {
                if v.id == id {
                    v.entry_time = entry_time;
                    return true;
                }
            }
        }
        false
    }

    fn new_vehicle(&mut self, route: RouteIdx) -> VehicleRecord {
        let lanes = self.net.route(route);
        let first = self.net.lane(lanes[0]);
        let free_flow_time = lanes.iter().map(|&l| self.net.lane(l).free_flow_time()).sum();
        let id = self.next_id;
        self.next_id += 1;
        VehicleRecord {
            id,
            route,
            leg: 0,
            lane: lanes[0],
            entry_time: self.now(),
            position: 0.0,
            queued: false,
            exit_time: None,
            free_flow_time,
            ff_completed: 0.0,
            lane_speed: first.speed_limit,
        }
    }

    /// Advances the simulation by one second under `cmd`.
    pub fn step(&mut self, cmd: &SignalCommand) -> Result<()> {
        let net = self.net;
        if cmd.0.len() != net.intersections.len() {
            return Err(Error::CommandCount { expected: net.intersections.len(), got: cmd.0.len() });
        }
        for (i, ind) in cmd.0.iter().enumerate() {
            if let Indication::Green(p) | Indication::Yellow(p) = *ind {
                if p >= net.intersections[i].num_phases() {
                    return Err(Error::UnknownPhase { intersection: i, phase: p });
                }
            }
        }
        self.exited_last.clear();
        self.discharges_last.clear();
        let t = self.now();

        // arrivals
        let arriving = if t < self.arrivals_until { self.entry_lanes.len() } else { 0 };
        for k in 0..arriving {
            let lane = self.entry_lanes[k];
            let rate = self.demand.rate(lane, t);
            if rate <= 0.0 {
                continue;
            }
            let p = (rate / 3600.0).min(1.0);
            if !self.rng.random_bool(p) {
                continue;
            }
            let routes = net.routes_from(lane);
            let r = routes[self.rng.random_range(0..routes.len())];
            self.counters.generated += 1;
            if self.lanes[lane.0].occupancy() >= net.lane(lane).jam_capacity as usize {
                self.counters.blocked += 1;
                continue;
            }
            let v = self.new_vehicle(r);
            self.lanes[lane.0].moving.push_back(v);
        }

        // free-flow advance
        let t_end = t + 1.0;
        for (li, s) in self.lanes.iter_mut().enumerate() {
            if s.moving.is_empty() {
                continue;
            }
            let lane = &net.lanes[li];
            for v in s.moving.iter_mut() {
                v.position = (v.position + lane.speed_limit).min(lane.length);
            }
            while s.moving.front().is_some_and(|v| v.position >= lane.length) {
                let mut v = s.moving.pop_front().expect("front exists");
                if v.leg + 1 == net.route(v.route).len() {
                    v.exit_time = Some(t_end);
                    self.counters.exited += 1;
                    self.exited_last.push(v);
                } else {
                    v.queued = true;
                    s.queue.push_back(v);
                }
            }
        }

        // stop-line discharge
        for (ii, inter) in net.intersections.iter().enumerate() {
            let green = match cmd.0[ii] {
                Indication::Green(p) => Some(&inter.phases[p]),
                _ => None,
            };
            for &lane in &inter.incoming {
                let phase = match green {
                    Some(ph) if ph.incoming.contains(&lane) => ph,
                    _ => {
                        self.lanes[lane.0].green_run = 0;
                        continue;
                    }
                };
                let s = &mut self.lanes[lane.0];
                s.green_run = s.green_run.saturating_add(1);
                let Some(head) = s.queue.front() else { continue };
                if s.green_run < self.headway {
                    continue;
                }
                let target = net.route(head.route)[head.leg + 1];
                if !phase.permits(lane, target) {
                    continue;
                }
                if self.lanes[target.0].occupancy() >= net.lane(target).jam_capacity as usize {
                    continue;
                }
                let s = &mut self.lanes[lane.0];
                let mut v = s.queue.pop_front().expect("head exists");
                s.green_run = 0;
                s.departures += 1;
                let from = net.lane(lane);
                let to = net.lane(target);
                v.ff_completed += from.free_flow_time();
                v.leg += 1;
                v.lane = target;
                v.position = 0.0;
                v.queued = false;
                v.lane_speed = to.speed_limit;
                self.lanes[target.0].moving.push_back(v);
                self.discharges_last.push(Discharge { intersection: ii, from: lane, to: target });
            }
        }

        self.clock += 1;
        Ok(())
    }

    /// Measures of effectiveness for the step just taken.
    pub fn moe_increment(&self) -> MoeIncrement {
        let now = self.now();
        let mut queues = Vec::with_capacity(self.net.intersections.len());
        let mut delays = Vec::with_capacity(self.net.intersections.len());
        for inter in &self.net.intersections {
            let mut q = 0u32;
            let mut d = 0.0;
            for &lane in &inter.incoming {
                let s = &self.lanes[lane.0];
                q += s.queue.len() as u32;
                d += s.queue.iter().chain(s.moving.iter()).map(|v| vehicle_delay(v, now)).sum::<f64>();
            }
            queues.push(q);
            delays.push(d);
        }
        let travel_times = self
            .exited_last
            .iter()
            .map(|v| v.exit_time.expect("exited") - v.entry_time)
            .collect();
        MoeIncrement { time: now, queues, delays, travel_times }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoeIncrement {
    pub time: f64,
    pub queues: Vec<u32>,
    pub delays: Vec<f64>,
    pub travel_times: Vec<f64>,
}

/// Per-episode measures of effectiveness.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MoeLog {
    pub travel_times: Vec<f64>,
    /// Step end times, seconds.
    pub times: Vec<f64>,
    /// `queue[i][k]`: vehicles queued at intersection `i` after step `k`.
    pub queue: Vec<Vec<u32>>,
    /// `delay[i][k]`: summed vehicle delay at intersection `i` after step `k`.
    pub delay: Vec<Vec<f64>>,
}

impl MoeLog {
    pub fn new(intersections: usize) -> Self {
        MoeLog {
            travel_times: Vec::new(),
            times: Vec::new(),
            queue: vec![Vec::new(); intersections],
            delay: vec![Vec::new(); intersections],
        }
    }

    pub fn push(&mut self, inc: MoeIncrement) {
        self.times.push(inc.time);
        for (i, q) in inc.queues.into_iter().enumerate() {
            self.queue[i].push(q);
        }
        for (i, d) in inc.delays.into_iter().enumerate() {
            self.delay[i].push(d);
        }
        self.travel_times.extend(inc.travel_times);
    }

    /// Mean per-step delay at one intersection.
    pub fn mean_delay(&self, intersection: usize) -> f64 {
        let d = &self.delay[intersection];
        if d.is_empty() { 0.0 } else { d.iter().sum::<f64>() / d.len() as f64 }
    }

    pub fn mean_travel_time(&self) -> Option<f64> {
        if self.travel_times.is_empty() {
            None
        } else {
            Some(self.travel_times.iter().sum::<f64>() / self.travel_times.len() as f64)
        }
    }
}
