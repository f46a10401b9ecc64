use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::net::Intersection;
use crate::signal::{Controller, Decision, DecisionContext, INTERPHASE_S};
use crate::sim::Simulator;

/// Above this critical flow ratio sum the cycle is pinned at `c_max`.
pub const SATURATED_FLOW_RATIO: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WebsterConfig {
    /// Update interval W, seconds.
    pub window_s: u32,
    pub c_min: f64,
    pub c_max: f64,
    pub saturation_flow_vph: f64,
    /// Total lost time per cycle R, seconds.
    pub lost_time_s: f64,
}

impl WebsterConfig {
    /// Lost time defaults to one interphase per phase.
    pub fn new(window_s: u32, c_min: f64, c_max: f64, saturation_flow_vph: f64, num_phases: usize) -> Self {
        WebsterConfig {
            window_s,
            c_min,
            c_max,
            saturation_flow_vph,
            lost_time_s: (num_phases as u32 * INTERPHASE_S) as f64,
        }
    }

    /// The minimum cycle must leave green time after the lost time.
    pub fn validate(&self) -> Result<()> {
        if !(self.c_min > 0.0 && self.c_min <= self.c_max)
            || self.window_s == 0
            || !(self.saturation_flow_vph > 0.0)
            || !(self.lost_time_s >= 0.0)
            || !(self.c_min > self.lost_time_s)
        {
            return Err(Error::Config("invalid Webster configuration".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WebsterTimings {
    pub cycle: f64,
    pub greens: Vec<f64>,
    /// Critical flow ratio per phase.
    pub ratios: Vec<f64>,
}

/// Cycle length and green splits from per-phase lane flows (veh/h for each
/// lane of `L_{p,inc}`).
pub fn webster_timings(phase_flows: &[Vec<f64>], cfg: &WebsterConfig) -> WebsterTimings {
    let ratios: Vec<f64> = phase_flows
        .iter()
        .map(|lanes| lanes.iter().map(|f| f / cfg.saturation_flow_vph).fold(0.0, f64::max))
        .collect();
    let total: f64 = ratios.iter().sum();
    let n = ratios.len().max(1) as f64;
    let r = cfg.lost_time_s;
    if total <= 0.0 {
        let cycle = cfg.c_min;
        let g = (cycle - r).max(0.0);
        return WebsterTimings { cycle, greens: vec![g / n; ratios.len()], ratios };
    }
    let cycle = if total >= SATURATED_FLOW_RATIO {
        cfg.c_max
    } else {
        ((1.5 * r + 5.0) / (1.0 - total)).clamp(cfg.c_min, cfg.c_max)
    };
    let g = (cycle - r).max(0.0);
    let greens = ratios.iter().map(|y| g * y / total).collect();
    WebsterTimings { cycle, greens, ratios }
}

/// Whole-second greens: floors, with the remainder of `round(C - R)` given to
/// the phase with the largest ratio. Every green is at least one second.
pub fn round_greens(t: &WebsterTimings) -> Vec<u32> {
    let mut out: Vec<u32> = t.greens.iter().map(|g| libm::floor(*g) as u32).collect();
    let target = libm::round(t.greens.iter().sum::<f64>()) as i64;
    let rem = target - out.iter().map(|&g| g as i64).sum::<i64>();
    if rem > 0 && !out.is_empty() {
        let mut best = 0;
        for (i, &y) in t.ratios.iter().enumerate() {
            if y > t.ratios[best] {
                best = i;
            }
        }
        out[best] += rem as u32;
    }
    for g in &mut out {
        *g = (*g).max(1);
    }
    out
}

/// Stop-line crossings per phase and lane over the current window.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowAccumulator {
    /// `counts[p][k]`: crossings from the k-th lane of `L_{p,inc}` while `p` was green.
    pub counts: Vec<Vec<u64>>,
    last_departures: Vec<u64>,
}

impl FlowAccumulator {
    pub fn new(inter: &Intersection) -> Self {
        FlowAccumulator {
            counts: inter.phases.iter().map(|p| vec![0; p.incoming.len()]).collect(),
            last_departures: vec![0; inter.incoming.len()],
        }
    }

    /// Attributes departures since the last call to `green`.
    pub fn record(&mut self, sim: &Simulator<'_>, inter: &Intersection, green: Option<usize>) {
        for (k, &lane) in inter.incoming.iter().enumerate() {
            let now = sim.departures(lane);
            let delta = now - self.last_departures[k];
            self.last_departures[k] = now;
            if delta == 0 {
                continue;
            }
            if let Some(p) = green {
                if let Some(j) = inter.phases[p].incoming.iter().position(|&l| l == lane) {
                    self.counts[p][j] += delta;
                }
            }
        }
    }

    pub fn reset(&mut self) {
        for c in &mut self.counts {
            c.iter_mut().for_each(|x| *x = 0);
        }
    }

    /// Flows in veh/h over a window of `seconds`.
    pub fn flows(&self, seconds: f64) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|c| c.iter().map(|&n| n as f64 * 3600.0 / seconds).collect())
            .collect()
    }
}

/// Adaptive Webster: re-times the cycle from the flows of the last window.
#[derive(Debug, Clone)]
pub struct Webster {
    pub cfg: WebsterConfig,
    greens: Vec<u32>,
    window_start: f64,
    acc: Option<FlowAccumulator>,
    green_at_last_call: Option<usize>,
}

impl Webster {
    pub fn new(cfg: WebsterConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Webster { cfg, greens: Vec::new(), window_start: 0.0, acc: None, green_at_last_call: None })
    }

    pub fn greens(&self) -> &[u32] {
        &self.greens
    }
}

impl Controller for Webster {
    fn decide(&mut self, ctx: &DecisionContext<'_, '_>) -> Result<Decision> {
        let inter = ctx.inter();
        let now = ctx.sim.now();
        if self.acc.is_none() {
            self.acc = Some(FlowAccumulator::new(inter));
            let t = webster_timings(&vec![Vec::new(); inter.num_phases()], &self.cfg);
            self.greens = round_greens(&t);
            self.window_start = now;
        }
        let acc = self.acc.as_mut().expect("initialized");
        acc.record(ctx.sim, inter, self.green_at_last_call);
        let elapsed = now - self.window_start;
        if elapsed >= self.cfg.window_s as f64 {
            let t = webster_timings(&acc.flows(elapsed), &self.cfg);
            self.greens = round_greens(&t);
            acc.reset();
            self.window_start = now;
        }
        self.green_at_last_call = ctx.signal.current_green();
        // A green shorter than one saturation headway discharges nobody, so the
        // phase would measure zero flow and never get more time.
        let floor = ctx.sim.config().headway_s();
        Ok(match ctx.signal.current_green() {
            Some(p) if ctx.signal.t_p() < self.greens[p].max(floor) => Decision::Hold,
            Some(p) => Decision::NextPhase(inter.cycle_successor(p)),
            None => Decision::NextPhase(ctx.signal.last_green().map(|p| inter.cycle_successor(p)).unwrap_or(0)),
        })
    }

    fn end_episode(&mut self) {
        self.acc = None;
        self.green_at_last_call = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> WebsterConfig {
        WebsterConfig { window_s: 300, c_min: 40.0, c_max: 180.0, saturation_flow_vph: 1800.0, lost_time_s: 10.0 }
    }

    fn flows(ratios: &[f64]) -> Vec<Vec<f64>> {
        ratios.iter().map(|y| vec![y * 1800.0, 0.5 * y * 1800.0]).collect()
    }

    #[test]
    fn hand_example() {
        let t = webster_timings(&flows(&[0.2, 0.3]), &cfg());
        assert!((t.cycle - 40.0).abs() < 1e-12);
        assert!((t.greens[0] - 12.0).abs() < 1e-12);
        assert!((t.greens[1] - 18.0).abs() < 1e-12);
        assert_eq!(round_greens(&t), [12, 18]);
    }

    #[test]
    fn saturated_pins_max_cycle() {
        let t = webster_timings(&flows(&[0.45, 0.5]), &cfg());
        assert_eq!(t.cycle, 180.0);
        let g = 170.0;
        assert!((t.greens[0] - g * 0.45 / 0.95).abs() < 1e-9);
        assert!((t.greens[1] - g * 0.5 / 0.95).abs() < 1e-9);
    }

    #[test]
    fn no_flow_uses_min_cycle_equal_split() {
        let t = webster_timings(&flows(&[0.0, 0.0]), &cfg());
        assert_eq!(t.cycle, 40.0);
        assert_eq!(t.greens, [15.0, 15.0]);
    }

    #[test]
    fn short_cycle_clamped_up() {
        let t = webster_timings(&flows(&[0.05, 0.05]), &cfg());
        assert_eq!(t.cycle, 40.0);
    }

    #[test]
    fn rounding_assigns_remainder_to_critical_phase() {
        let t = WebsterTimings { cycle: 45.0, greens: vec![10.4, 12.3, 12.3], ratios: vec![0.1, 0.3, 0.2] };
        assert_eq!(round_greens(&t), [10, 13, 12]);
    }
}
