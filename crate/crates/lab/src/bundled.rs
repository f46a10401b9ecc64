//! Scenarios and default tuning grids shipped with the crate, also on disk under `data/`.

use tsc_core::demand::DemandDef;
use tsc_core::net::NetworkDef;

use crate::error::{LabError, LabResult};
use crate::harness::{GridSpec, Scenario};
use crate::hp::ControllerKind;

pub const SINGLE_NET: &str = include_str!("../data/single.net.json");
pub const DOUBLE_NET: &str = include_str!("../data/double.net.json");
/// Triangular three-hour demand on the single intersection.
pub const SINGLE_PEAK_DEMAND: &str = include_str!("../data/single_peak.demand.json");
/// One hour of constant demand, three times heavier north-south than east-west.
pub const SINGLE_ASYMMETRIC_DEMAND: &str = include_str!("../data/single_asymmetric.demand.json");
/// Triangular three-hour demand on the two-intersection corridor.
pub const DOUBLE_PEAK_DEMAND: &str = include_str!("../data/double_peak.demand.json");

/// Default grid of each controller, as a grid-file JSON object.
pub fn grid_json(kind: ControllerKind) -> &'static str {
    match kind {
        ControllerKind::Uniform => include_str!("../data/grids/uniform.json"),
        ControllerKind::Webster => include_str!("../data/grids/webster.json"),
        ControllerKind::MaxPressure => include_str!("../data/grids/maxpressure.json"),
        ControllerKind::Sotl => include_str!("../data/grids/sotl.json"),
        ControllerKind::Dqn => include_str!("../data/grids/dqn.json"),
        ControllerKind::Ddpg => include_str!("../data/grids/ddpg.json"),
    }
}

pub fn grid(kind: ControllerKind, trials: usize, base_seed: u64) -> LabResult<GridSpec> {
    GridSpec::from_json(kind, grid_json(kind), trials, base_seed)
}

pub fn network_def(text: &str) -> LabResult<NetworkDef> {
    serde_json::from_str(text).map_err(|e| LabError::Config(format!("bundled network: {e}")))
}

pub fn scenario(net: &str, demand: &str) -> LabResult<Scenario> {
    let model = tsc_core::net::NetworkModel::from_def(&network_def(net)?)?;
    let def: DemandDef = serde_json::from_str(demand).map_err(|e| LabError::Config(format!("bundled demand: {e}")))?;
    let profile = tsc_core::demand::DemandProfile::from_def(&model, &def)?;
    Scenario::new(model, profile)
}

pub fn double_peak() -> LabResult<Scenario> {
    scenario(DOUBLE_NET, DOUBLE_PEAK_DEMAND)
}

pub fn single_peak() -> LabResult<Scenario> {
    scenario(SINGLE_NET, SINGLE_PEAK_DEMAND)
}

pub fn single_asymmetric() -> LabResult<Scenario> {
    scenario(SINGLE_NET, SINGLE_ASYMMETRIC_DEMAND)
}
