//! Shared fixtures for the benchmarks.

use sagin_core::graph::{build_snapshot, LayerMask, QueuingModel, Snapshot};
use sagin_core::linkmodel::LinkConfig;
use sagin_core::mobility::{generate_scenario, Scenario, ScenarioGenParams};

pub const NOON_S: f64 = 43_200.0;

pub fn scenario() -> Scenario {
    generate_scenario(&ScenarioGenParams::default(), 0).expect("default scenario")
}

pub fn snapshot(sc: &Scenario, t: f64) -> Snapshot {
    build_snapshot(sc, t, LayerMask::ALL, &QueuingModel::TRAINING, &LinkConfig::default()).expect("snapshot")
}

/// First ship, in id order, with a path to the destination.
pub fn connected_ship(snap: &Snapshot, dst: &str) -> String {
    snap.nodes()
        .iter()
        .filter(|n| n.id.starts_with("ship"))
        .find(|n| matches!(sagin_core::routing::min_delay_path(snap, &n.id, dst), Ok(Some(_))))
        .map(|n| n.id.clone())
        .expect("no connected ship")
}
