//! Bundled networks and demand scenarios.
//!
//! `single` is an isolated four-approach intersection, `double` two such
//! intersections joined by a two-way corridor. All lanes are 150 m long
//! with a 13.9 m/s limit, so the 150 m observation bound covers each lane.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::demand::DemandProfile;
use crate::net::{IntersectionDef, LaneDef, NetworkDef, NetworkModel, PhaseDef};

pub const LANE_LENGTH_M: f64 = 150.0;
pub const SPEED_LIMIT_MPS: f64 = 13.9;
/// Three hours.
pub const DEFAULT_HORIZON_S: f64 = 10_800.0;

fn lanes(ids: &[&str]) -> BTreeMap<String, LaneDef> {
    ids.iter()
        .map(|id| {
            (id.to_string(), LaneDef { length_m: LANE_LENGTH_M, speed_mps: SPEED_LIMIT_MPS, jam_capacity: None })
        })
        .collect()
}

fn phase(moves: &[(&str, &[&str])]) -> PhaseDef {
    PhaseDef {
        movements: moves
            .iter()
            .flat_map(|(from, tos)| tos.iter().map(move |to| (from.to_string(), to.to_string())))
            .collect(),
    }
}

fn strs(ids: &[&str]) -> Vec<String> {
    ids.iter().map(|s| s.to_string()).collect()
}

/// One intersection, two approaches, one phase each.
pub fn minimal_def() -> NetworkDef {
    let mut intersections = BTreeMap::new();
    intersections.insert(
        "I".to_string(),
        IntersectionDef {
            incoming: strs(&["in", "side"]),
            outgoing: strs(&["out", "side_out"]),
            phases: vec![phase(&[("in", &["out"])]), phase(&[("side", &["side_out"])])],
        },
    );
    NetworkDef {
        lanes: lanes(&["in", "out", "side", "side_out"]),
        intersections,
        routes: vec![strs(&["in", "out"]), strs(&["side", "side_out"])],
    }
}

pub fn minimal() -> NetworkModel {
    NetworkModel::from_def(&minimal_def()).expect("minimal fixture is valid")
}

/// Isolated intersection: four approach lanes, NS and EW phases.
pub fn single_def() -> NetworkDef {
    let mut intersections = BTreeMap::new();
    intersections.insert(
        "I0".to_string(),
        IntersectionDef {
            incoming: strs(&["n_in", "s_in", "e_in", "w_in"]),
            outgoing: strs(&["n_out", "s_out", "e_out", "w_out"]),
            phases: vec![
                phase(&[("n_in", &["s_out", "w_out", "e_out"]), ("s_in", &["n_out", "e_out", "w_out"])]),
                phase(&[("e_in", &["w_out", "n_out", "s_out"]), ("w_in", &["e_out", "s_out", "n_out"])]),
            ],
        },
    );
    let mut routes = Vec::new();
    for (from, tos) in [
        ("n_in", ["s_out", "w_out", "e_out"]),
        ("s_in", ["n_out", "e_out", "w_out"]),
        ("e_in", ["w_out", "n_out", "s_out"]),
        ("w_in", ["e_out", "s_out", "n_out"]),
    ] {
        for to in tos {
            routes.push(strs(&[from, to]));
        }
    }
    NetworkDef {
        lanes: lanes(&["n_in", "s_in", "e_in", "w_in", "n_out", "s_out", "e_out", "w_out"]),
        intersections,
        routes,
    }
}

pub fn single() -> NetworkModel {
    NetworkModel::from_def(&single_def()).expect("single fixture is valid")
}

/// Two intersections, A (west) and B (east), on a two-way corridor.
///
/// Every approach has a through/right lane (`_t`) and a left-turn bay (`_l`).
/// The corridor carries one lane per downstream movement group, so a vehicle
/// entering it from A already sits in the lane it will use at B. Each
/// intersection runs four phases: arterial through, arterial left, side
/// through, side left.
pub fn double_def() -> NetworkDef {
    let mut intersections = BTreeMap::new();
    intersections.insert(
        "A".to_string(),
        IntersectionDef {
            incoming: strs(&["w_t", "w_l", "ba_t", "ba_l", "an_t", "an_l", "as_t", "as_l"]),
            outgoing: strs(&["w_out", "an_out", "as_out", "ab_t", "ab_l"]),
            phases: vec![
                phase(&[("w_t", &["ab_t", "ab_l", "as_out"]), ("ba_t", &["w_out", "an_out"])]),
                phase(&[("w_l", &["an_out"]), ("ba_l", &["as_out"])]),
                phase(&[("an_t", &["as_out", "w_out"]), ("as_t", &["an_out", "ab_t", "ab_l"])]),
                phase(&[("an_l", &["ab_t", "ab_l"]), ("as_l", &["w_out"])]),
            ],
        },
    );
    intersections.insert(
        "B".to_string(),
        IntersectionDef {
            incoming: strs(&["e_t", "e_l", "ab_t", "ab_l", "bn_t", "bn_l", "bs_t", "bs_l"]),
            outgoing: strs(&["e_out", "bn_out", "bs_out", "ba_t", "ba_l"]),
            phases: vec![
                phase(&[("e_t", &["ba_t", "ba_l", "bn_out"]), ("ab_t", &["e_out", "bs_out"])]),
                phase(&[("e_l", &["bs_out"]), ("ab_l", &["bn_out"])]),
                phase(&[("bn_t", &["bs_out", "ba_t", "ba_l"]), ("bs_t", &["bn_out", "e_out"])]),
                phase(&[("bn_l", &["e_out"]), ("bs_l", &["ba_t", "ba_l"])]),
            ],
        },
    );
    // continuing eastbound through B, then westbound through A
    let east: [&[&str]; 3] = [&["ab_t", "e_out"], &["ab_t", "bs_out"], &["ab_l", "bn_out"]];
    let west: [&[&str]; 3] = [&["ba_t", "w_out"], &["ba_t", "an_out"], &["ba_l", "as_out"]];
    let mut routes = Vec::new();
    let mut add = |head: &[&str], tails: &[&[&str]]| {
        for tail in tails {
            routes.push(head.iter().chain(tail.iter()).map(|s| s.to_string()).collect());
        }
    };
    add(&["w_t", "as_out"], &[&[]]);
    add(&["w_t"], &east);
    add(&["w_l", "an_out"], &[&[]]);
    add(&["an_t", "as_out"], &[&[]]);
    add(&["an_t", "w_out"], &[&[]]);
    add(&["an_l"], &east);
    add(&["as_t", "an_out"], &[&[]]);
    add(&["as_t"], &east);
    add(&["as_l", "w_out"], &[&[]]);
    add(&["e_t", "bn_out"], &[&[]]);
    add(&["e_t"], &west);
    add(&["e_l", "bs_out"], &[&[]]);
    add(&["bn_t", "bs_out"], &[&[]]);
    add(&["bn_t"], &west);
    add(&["bn_l", "e_out"], &[&[]]);
    add(&["bs_t", "bn_out"], &[&[]]);
    add(&["bs_t", "e_out"], &[&[]]);
    add(&["bs_l"], &west);
    NetworkDef {
        lanes: lanes(&[
            "w_t", "w_l", "an_t", "an_l", "as_t", "as_l", "w_out", "an_out", "as_out", "ab_t", "ab_l", "ba_t", "ba_l",
            "e_t", "e_l", "bn_t", "bn_l", "bs_t", "bs_l", "e_out", "bn_out", "bs_out",
        ]),
        intersections,
        routes,
    }
}

pub fn double() -> NetworkModel {
    NetworkModel::from_def(&double_def()).expect("double fixture is valid")
}

/// `(low, high)` peak rates, veh/h, for [`double_peak_demand`]: arterial
/// through, arterial left, side through, side left.
pub const DOUBLE_ARTERIAL_VPH: (f64, f64) = (150.0, 600.0);
pub const DOUBLE_ARTERIAL_LEFT_VPH: (f64, f64) = (20.0, 100.0);
pub const DOUBLE_SIDE_VPH: (f64, f64) = (60.0, 250.0);
pub const DOUBLE_SIDE_LEFT_VPH: (f64, f64) = (10.0, 60.0);

/// Triangular three-hour peak on `double`.
pub fn double_peak_demand(net: &NetworkModel) -> DemandProfile {
    let l = |id: &str| net.lane_by_id(id).expect("double lane");
    let mut lanes = Vec::new();
    for (ids, (lo, hi)) in [
        (["w_t", "e_t"].as_slice(), DOUBLE_ARTERIAL_VPH),
        (&["w_l", "e_l"], DOUBLE_ARTERIAL_LEFT_VPH),
        (&["an_t", "as_t", "bn_t", "bs_t"], DOUBLE_SIDE_VPH),
        (&["an_l", "as_l", "bn_l", "bs_l"], DOUBLE_SIDE_LEFT_VPH),
    ] {
        lanes.extend(ids.iter().map(|id| (l(id), lo, hi)));
    }
    DemandProfile::triangular(net, &lanes, DEFAULT_HORIZON_S).expect("double demand is valid")
}

/// Triangular three-hour peak on `single`.
pub fn single_peak_demand(net: &NetworkModel) -> DemandProfile {
    let l = |id: &str| net.lane_by_id(id).expect("single lane");
    DemandProfile::triangular(
        net,
        &[
            (l("n_in"), 100.0, 500.0),
            (l("s_in"), 100.0, 500.0),
            (l("e_in"), 60.0, 300.0),
            (l("w_in"), 60.0, 300.0),
        ],
        DEFAULT_HORIZON_S,
    )
    .expect("single demand is valid")
}

/// Stationary demand on `single`, heavy north-south, light east-west.
pub fn single_asymmetric_demand(net: &NetworkModel, horizon: f64) -> DemandProfile {
    let l = |id: &str| net.lane_by_id(id).expect("single lane");
    DemandProfile::constant(
        net,
        &[(l("n_in"), 450.0), (l("s_in"), 450.0), (l("e_in"), 150.0), (l("w_in"), 150.0)],
        horizon,
    )
    .expect("asymmetric demand is valid")
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixtures_build() {
        assert_eq!(super::single().intersections.len(), 1);
        assert_eq!(super::single().intersections[0].incoming.len(), 4);
        assert_eq!(super::double().intersections.len(), 2);
        assert_eq!(super::minimal().intersections.len(), 1);
        let net = super::double();
        super::double_peak_demand(&net);
    }
}
