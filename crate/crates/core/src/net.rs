//! Road-network topology: lanes, intersections, phases and routes.
//!
//! A [`NetworkModel`] is built once from a [`NetworkDef`] (the serialized
//! form) and never mutated afterwards. Internally every lane, intersection
//! and route is addressed by a dense index so the simulator can use plain
//! vectors; the string identifiers are kept for IO and error messages.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Space one stopped vehicle occupies: 5 m vehicle plus 2.5 m gap.
pub const JAM_SPACING_M: f64 = 7.5;

/// Dense lane index into [`NetworkModel::lanes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LaneIdx(pub usize);

/// Dense route index into [`NetworkModel::routes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RouteIdx(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub id: String,
    pub length: f64,
    pub speed_limit: f64,
    pub jam_capacity: u32,
    /// Whether `jam_capacity` was given explicitly rather than derived.
    pub capacity_override: bool,
    /// Movements leaving this lane as `(phase index, target lane)`.
    pub downstream: Vec<(usize, LaneIdx)>,
    /// Intersection this lane feeds into, if any.
    pub feeds: Option<usize>,
}

impl Lane {
    pub fn free_flow_time(&self) -> f64 {
        self.length / self.speed_limit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase {
    pub id: usize,
    pub green_movements: Vec<(LaneIdx, LaneIdx)>,
    /// L_{p,inc}: distinct incoming lanes with a green movement, in first-seen order.
    pub incoming: Vec<LaneIdx>,
    /// L_{p,out}: distinct targets of those movements, in first-seen order.
    pub outgoing: Vec<LaneIdx>,
}

impl Phase {
    fn new(id: usize, green_movements: Vec<(LaneIdx, LaneIdx)>) -> Self {
        let mut incoming = Vec::new();
        let mut outgoing = Vec::new();
        for &(from, to) in &green_movements {
            if !incoming.contains(&from) {
                incoming.push(from);
            }
            if !outgoing.contains(&to) {
                outgoing.push(to);
            }
        }
        Phase { id, green_movements, incoming, outgoing }
    }

    pub fn permits(&self, from: LaneIdx, to: LaneIdx) -> bool {
        self.green_movements.contains(&(from, to))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Intersection {
    pub id: String,
    pub incoming: Vec<LaneIdx>,
    pub outgoing: Vec<LaneIdx>,
    /// Cycle order is the declaration order.
    pub phases: Vec<Phase>,
}

impl Intersection {
    pub fn num_phases(&self) -> usize {
        self.phases.len()
    }

    pub fn phase(&self, phase: usize) -> Option<&Phase> {
        self.phases.get(phase)
    }

    /// Successor of `phase` in the cycle.
    pub fn cycle_successor(&self, phase: usize) -> usize {
        (phase + 1) % self.phases.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub lanes: Vec<Lane>,
    pub intersections: Vec<Intersection>,
    pub routes: Vec<Vec<LaneIdx>>,
    lane_index: BTreeMap<String, LaneIdx>,
    routes_from: BTreeMap<LaneIdx, Vec<RouteIdx>>,
}

impl NetworkModel {
    pub fn lane(&self, idx: LaneIdx) -> &Lane {
        &self.lanes[idx.0]
    }

    pub fn lane_by_id(&self, id: &str) -> Option<LaneIdx> {
        self.lane_index.get(id).copied()
    }

    pub fn intersection_by_id(&self, id: &str) -> Option<usize> {
        self.intersections.iter().position(|i| i.id == id)
    }

    pub fn intersection(&self, idx: usize) -> Result<&Intersection> {
        self.intersections.get(idx).ok_or(Error::UnknownIntersection(idx))
    }

    /// Lanes on which at least one route starts, in lane order.
    pub fn entry_lanes(&self) -> impl Iterator<Item = LaneIdx> + '_ {
        self.routes_from.keys().copied()
    }

    pub fn routes_from(&self, lane: LaneIdx) -> &[RouteIdx] {
        self.routes_from.get(&lane).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn route(&self, idx: RouteIdx) -> &[LaneIdx] {
        &self.routes[idx.0]
    }

    /// Returns `(L_{p,inc}, L_{p,out})` for a phase of an intersection.
    pub fn phase_lanes(&self, intersection: usize, phase: usize) -> Result<(&[LaneIdx], &[LaneIdx])> {
        let inter = self.intersection(intersection)?;
        let p = inter
            .phase(phase)
            .ok_or(Error::UnknownPhase { intersection, phase })?;
        Ok((&p.incoming, &p.outgoing))
    }

    /// Validates a definition and builds the indexed model.
    pub fn from_def(def: &NetworkDef) -> Result<Self> {
        let mut lanes = Vec::with_capacity(def.lanes.len());
        let mut lane_index = BTreeMap::new();
        for (i, (id, ld)) in def.lanes.iter().enumerate() {
            if !(ld.length_m > 0.0) || !ld.length_m.is_finite() {
                return Err(Error::Network(format!("lane \"{id}\" has non-positive length")));
            }
            if !(ld.speed_mps > 0.0) || !ld.speed_mps.is_finite() {
                return Err(Error::Network(format!("lane \"{id}\" has non-positive speed limit")));
            }
            let jam_capacity = match ld.jam_capacity {
                Some(c) => c,
                None => default_jam_capacity(ld.length_m),
            };
            if jam_capacity < 1 {
                return Err(Error::Network(format!("lane \"{id}\" holds no vehicles (jam capacity 0)")));
            }
            lanes.push(Lane {
                id: id.clone(),
                length: ld.length_m,
                speed_limit: ld.speed_mps,
                jam_capacity,
                capacity_override: ld.jam_capacity.is_some(),
                downstream: Vec::new(),
                feeds: None,
            });
            lane_index.insert(id.clone(), LaneIdx(i));
        }

        let resolve = |id: &str, context: &dyn Fn() -> String| -> Result<LaneIdx> {
            lane_index
                .get(id)
                .copied()
                .ok_or_else(|| Error::UnknownLane { lane: id.to_string(), context: context() })
        };

        let mut intersections = Vec::with_capacity(def.intersections.len());
        let mut outgoing_owner: BTreeMap<LaneIdx, usize> = BTreeMap::new();
        for (ii, (iid, idef)) in def.intersections.iter().enumerate() {
            let ctx = || format!("intersection \"{iid}\"");
            let incoming: Vec<LaneIdx> =
                idef.incoming.iter().map(|l| resolve(l, &ctx)).collect::<Result<_>>()?;
            let outgoing: Vec<LaneIdx> =
                idef.outgoing.iter().map(|l| resolve(l, &ctx)).collect::<Result<_>>()?;
            let inc_set: BTreeSet<_> = incoming.iter().copied().collect();
            let out_set: BTreeSet<_> = outgoing.iter().copied().collect();
            if inc_set.len() != incoming.len() || out_set.len() != outgoing.len() {
                return Err(Error::Network(format!("intersection \"{iid}\" lists a lane twice")));
            }
            if let Some(l) = inc_set.intersection(&out_set).next() {
                return Err(Error::Network(format!(
                    "intersection \"{iid}\": lane \"{}\" is both incoming and outgoing",
                    lanes[l.0].id
                )));
            }
            if idef.phases.len() < 2 {
                return Err(Error::Network(format!("intersection \"{iid}\" needs at least 2 phases")));
            }
            for &l in &incoming {
                if let Some(other) = lanes[l.0].feeds {
                    return Err(Error::Network(format!(
                        "lane \"{}\" feeds two intersections (\"{}\" and \"{iid}\")",
                        lanes[l.0].id, intersections_id(def, other)
                    )));
                }
                lanes[l.0].feeds = Some(ii);
            }
            for &l in &outgoing {
                if outgoing_owner.insert(l, ii).is_some() {
                    return Err(Error::Network(format!(
                        "lane \"{}\" leaves two intersections",
                        lanes[l.0].id
                    )));
                }
            }
            let mut phases = Vec::with_capacity(idef.phases.len());
            for (pi, pdef) in idef.phases.iter().enumerate() {
                if pdef.movements.is_empty() {
                    return Err(Error::Network(format!("intersection \"{iid}\" phase {pi} is empty")));
                }
                let pctx = || format!("intersection \"{iid}\" phase {pi}");
                let mut movements = Vec::with_capacity(pdef.movements.len());
                for (from, to) in &pdef.movements {
                    let f = resolve(from, &pctx)?;
                    let t = resolve(to, &pctx)?;
                    if !inc_set.contains(&f) {
                        return Err(Error::Network(format!(
                            "{}: lane \"{from}\" is not incoming",
                            pctx()
                        )));
                    }
                    if !out_set.contains(&t) {
                        return Err(Error::Network(format!(
                            "{}: lane \"{to}\" is not outgoing",
                            pctx()
                        )));
                    }
                    if !movements.contains(&(f, t)) {
                        movements.push((f, t));
                    }
                }
                for &(f, t) in &movements {
                    if !lanes[f.0].downstream.contains(&(pi, t)) {
                        lanes[f.0].downstream.push((pi, t));
                    }
                }
                phases.push(Phase::new(pi, movements));
            }
            intersections.push(Intersection { id: iid.clone(), incoming, outgoing, phases });
        }

        let mut routes = Vec::with_capacity(def.routes.len());
        let mut routes_from: BTreeMap<LaneIdx, Vec<RouteIdx>> = BTreeMap::new();
        for (ri, rdef) in def.routes.iter().enumerate() {
            let ctx = || format!("route {ri}");
            if rdef.is_empty() {
                return Err(Error::Network(format!("route {ri} is empty")));
            }
            let route: Vec<LaneIdx> = rdef.iter().map(|l| resolve(l, &ctx)).collect::<Result<_>>()?;
            for w in route.windows(2) {
                let connected = lanes[w[0].0].downstream.iter().any(|&(_, t)| t == w[1]);
                if !connected {
                    return Err(Error::Network(format!(
                        "route {ri} is disconnected between \"{}\" and \"{}\"",
                        lanes[w[0].0].id, lanes[w[1].0].id
                    )));
                }
            }
            routes_from.entry(route[0]).or_default().push(RouteIdx(ri));
            routes.push(route);
        }

        Ok(NetworkModel { lanes, intersections, routes, lane_index, routes_from })
    }

    /// Serializable form; `from_def(to_def(net)) == net`.
    pub fn to_def(&self) -> NetworkDef {
        let lanes = self
            .lanes
            .iter()
            .map(|l| {
                let def = LaneDef {
                    length_m: l.length,
                    speed_mps: l.speed_limit,
                    jam_capacity: l.capacity_override.then_some(l.jam_capacity),
                };
                (l.id.clone(), def)
            })
            .collect();
        let name = |l: &LaneIdx| self.lanes[l.0].id.clone();
        let intersections = self
            .intersections
            .iter()
            .map(|i| {
                let def = IntersectionDef {
                    incoming: i.incoming.iter().map(name).collect(),
                    outgoing: i.outgoing.iter().map(name).collect(),
                    phases: i
                        .phases
                        .iter()
                        .map(|p| PhaseDef {
                            movements: p.green_movements.iter().map(|(f, t)| (name(f), name(t))).collect(),
                        })
                        .collect(),
                };
                (i.id.clone(), def)
            })
            .collect();
        let routes = self.routes.iter().map(|r| r.iter().map(name).collect()).collect();
        NetworkDef { lanes, intersections, routes }
    }
}

fn intersections_id(def: &NetworkDef, idx: usize) -> &str {
    def.intersections.keys().nth(idx).map(String::as_str).unwrap_or("?")
}

/// `floor(length / 7.5)`; may be 0 for very short lanes, which validation rejects.
pub fn default_jam_capacity(length_m: f64) -> u32 {
    libm::floor(length_m / JAM_SPACING_M) as u32
}

/// Serialized network: the on-disk JSON schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDef {
    pub lanes: BTreeMap<String, LaneDef>,
    pub intersections: BTreeMap<String, IntersectionDef>,
    pub routes: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneDef {
    pub length_m: f64,
    pub speed_mps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jam_capacity: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntersectionDef {
    pub incoming: Vec<String>,
    pub outgoing: Vec<String>,
    pub phases: Vec<PhaseDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseDef {
    pub movements: Vec<(String, String)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn lane(len: f64) -> LaneDef {
        LaneDef { length_m: len, speed_mps: 13.9, jam_capacity: None }
    }

    pub(crate) fn toy_def() -> NetworkDef {
        let mut lanes = BTreeMap::new();
        for id in ["A", "B", "C", "D"] {
            lanes.insert(id.to_string(), lane(150.0));
        }
        let mut intersections = BTreeMap::new();
        intersections.insert(
            "I".to_string(),
            IntersectionDef {
                incoming: vec!["A".into(), "B".into()],
                outgoing: vec!["C".into(), "D".into()],
                phases: vec![
                    PhaseDef { movements: vec![("A".into(), "C".into()), ("B".into(), "C".into())] },
                    PhaseDef { movements: vec![("A".into(), "C".into()), ("A".into(), "D".into())] },
                ],
            },
        );
        NetworkDef {
            lanes,
            intersections,
            routes: vec![vec!["A".into(), "C".into()], vec!["B".into(), "C".into()]],
        }
    }

    #[test]
    fn phase_lane_projection() {
        let net = NetworkModel::from_def(&toy_def()).unwrap();
        let id = |s: &str| net.lane_by_id(s).unwrap();
        let (inc, out) = net.phase_lanes(0, 0).unwrap();
        assert_eq!(inc, &[id("A"), id("B")]);
        assert_eq!(out, &[id("C")]);
        let (inc, out) = net.phase_lanes(0, 1).unwrap();
        assert_eq!(inc, &[id("A")]);
        assert_eq!(out, &[id("C"), id("D")]);
        assert!(matches!(net.phase_lanes(0, 2), Err(Error::UnknownPhase { phase: 2, .. })));
        assert!(matches!(net.phase_lanes(1, 0), Err(Error::UnknownIntersection(1))));
    }

    #[test]
    fn dangling_lane_is_named() {
        let mut def = toy_def();
        def.intersections.get_mut("I").unwrap().phases[0].movements.push(("X9".into(), "C".into()));
        let err = NetworkModel::from_def(&def).unwrap_err();
        assert!(matches!(&err, Error::UnknownLane { lane, .. } if lane == "X9"), "{err}");
    }

    #[test]
    fn empty_phase_and_disconnected_route_rejected() {
        let mut def = toy_def();
        def.intersections.get_mut("I").unwrap().phases[1].movements.clear();
        assert!(NetworkModel::from_def(&def).is_err());

        let mut def = toy_def();
        def.routes.push(vec!["B".into(), "D".into()]);
        let err = NetworkModel::from_def(&def).unwrap_err();
        assert!(err.to_string().contains("disconnected"), "{err}");
    }

    #[test]
    fn jam_capacity_defaults_and_overrides() {
        let mut def = toy_def();
        def.lanes.get_mut("D").unwrap().jam_capacity = Some(3);
        let net = NetworkModel::from_def(&def).unwrap();
        assert_eq!(net.lane(net.lane_by_id("A").unwrap()).jam_capacity, 20);
        assert_eq!(net.lane(net.lane_by_id("D").unwrap()).jam_capacity, 3);
        assert_eq!(NetworkModel::from_def(&net.to_def()).unwrap(), net);

        let mut def = toy_def();
        def.lanes.get_mut("D").unwrap().length_m = 5.0;
        assert!(NetworkModel::from_def(&def).is_err());
    }

    #[test]
    fn phase_lanes_cover_intersection_sets() {
        let net = NetworkModel::from_def(&toy_def()).unwrap();
        for (ii, inter) in net.intersections.iter().enumerate() {
            for p in 0..inter.num_phases() {
                let (inc, out) = net.phase_lanes(ii, p).unwrap();
                assert!(inc.iter().all(|l| inter.incoming.contains(l)));
                assert!(out.iter().all(|l| inter.outgoing.contains(l)));
            }
        }
    }
}
