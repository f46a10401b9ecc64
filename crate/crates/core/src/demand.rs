//! Time-varying arrival rates per entry lane.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::net::{LaneIdx, NetworkModel};

/// Serialized demand: entry lane id to `[time_s, rate_vph]` breakpoints.
pub type DemandDef = BTreeMap<String, Vec<[f64; 2]>>;

#[derive(Debug, Clone, PartialEq)]
pub struct DemandProfile {
    /// Indexed by lane; empty for lanes without demand.
    rates: Vec<Vec<(f64, f64)>>,
    horizon: f64,
}

impl DemandProfile {
    /// Builds a profile; the horizon is the latest breakpoint time.
    pub fn new(net: &NetworkModel, per_lane: Vec<(LaneIdx, Vec<(f64, f64)>)>) -> Result<Self> {
        let mut rates = alloc::vec![Vec::new(); net.lanes.len()];
        let mut horizon: f64 = 0.0;
        for (lane, points) in per_lane {
            let id = &net.lane(lane).id;
            if net.routes_from(lane).is_empty() {
                return Err(Error::Demand(format!("lane \"{id}\" starts no route")));
            }
            if points.is_empty() {
                return Err(Error::Demand(format!("lane \"{id}\" has no breakpoints")));
            }
            for w in points.windows(2) {
                if !(w[0].0 <= w[1].0) {
                    return Err(Error::Demand(format!("lane \"{id}\" breakpoints not time-sorted")));
                }
            }
            if points.iter().any(|&(t, r)| !(r >= 0.0) || !r.is_finite() || !t.is_finite() || t < 0.0) {
                return Err(Error::Demand(format!("lane \"{id}\" has a negative or non-finite rate")));
            }
            horizon = horizon.max(points[points.len() - 1].0);
            rates[lane.0] = points;
        }
        if !(horizon > 0.0) {
            return Err(Error::Demand("horizon must be positive".into()));
        }
        Ok(DemandProfile { rates, horizon })
    }

    pub fn from_def(net: &NetworkModel, def: &DemandDef) -> Result<Self> {
        let mut per_lane = Vec::with_capacity(def.len());
        for (id, pts) in def {
            let lane = net.lane_by_id(id).ok_or_else(|| Error::UnknownLane {
                lane: id.clone(),
                context: "demand".into(),
            })?;
            per_lane.push((lane, pts.iter().map(|p| (p[0], p[1])).collect()));
        }
        Self::new(net, per_lane)
    }

    pub fn to_def(&self, net: &NetworkModel) -> DemandDef {
        self.rates
            .iter()
            .enumerate()
            .filter(|(_, pts)| !pts.is_empty())
            .map(|(i, pts)| (net.lanes[i].id.clone(), pts.iter().map(|&(t, r)| [t, r]).collect()))
            .collect()
    }

    /// Same rate on every given lane for `[0, horizon]`.
    pub fn constant(net: &NetworkModel, lanes: &[(LaneIdx, f64)], horizon: f64) -> Result<Self> {
        Self::new(net, lanes.iter().map(|&(l, r)| (l, alloc::vec![(0.0, r), (horizon, r)])).collect())
    }

    /// Rate rises linearly from `low` to `high` at mid-horizon and back.
    pub fn triangular(net: &NetworkModel, lanes: &[(LaneIdx, f64, f64)], horizon: f64) -> Result<Self> {
        Self::new(
            net,
            lanes
                .iter()
                .map(|&(l, low, high)| (l, alloc::vec![(0.0, low), (horizon / 2.0, high), (horizon, low)]))
                .collect(),
        )
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Arrival rate in veh/h at time `t`; zero at and after the horizon.
    pub fn rate(&self, lane: LaneIdx, t: f64) -> f64 {
        if t >= self.horizon {
            return 0.0;
        }
        let pts = match self.rates.get(lane.0) {
            Some(p) if !p.is_empty() => p,
            _ => return 0.0,
        };
        if t <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            let (t0, r0) = w[0];
            let (t1, r1) = w[1];
            if t <= t1 {
                if t1 == t0 {
                    return r1;
                }
                return r0 + (r1 - r0) * (t - t0) / (t1 - t0);
            }
        }
        pts[pts.len() - 1].1
    }

    /// Scales all rates by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        DemandProfile {
            rates: self
                .rates
                .iter()
                .map(|pts| pts.iter().map(|&(t, r)| (t, r * factor)).collect())
                .collect(),
            horizon: self.horizon,
        }
    }
}
