#![allow(dead_code)]

use rand::Rng;
use sagin_core::geo::GeoPos;
use sagin_core::graph::{LayerMask, NodeState, Snapshot, TransitPolicy};
use sagin_core::linkmodel::LinkMetrics;
use sagin_core::mobility::{Kinematics, NodeKind};
use sagin_core::routing::RoutePath;

pub const KINDS: [NodeKind; 4] = [NodeKind::Airplane, NodeKind::Satellite, NodeKind::Ship, NodeKind::GroundStation];

/// Random undirected-topology snapshot on `n` nodes `n0..`: a random spanning
/// tree plus extra edges. Weights are small dyadic multiples so that distinct
/// paths often tie exactly. Node kinds and positions are random.
pub fn random_snapshot<R: Rng>(rng: &mut R, n: usize) -> Snapshot {
    let nodes: Vec<NodeState> = (0..n)
        .map(|i| NodeState {
            id: format!("n{i}"),
            kind: KINDS[rng.gen_range(0..4)],
            kin: Kinematics {
                pos: GeoPos::new(rng.gen_range(-60.0..60.0), rng.gen_range(-180.0..180.0), rng.gen_range(0.0..800.0)).unwrap(),
                speed_kmh: rng.gen_range(0.0..1000.0),
                heading_deg: rng.gen_range(0.0..360.0),
            },
            queue_delay_s: rng.gen_range(0..4) as f64 / 128.0,
        })
        .collect();
    let mut pairs = std::collections::BTreeSet::new();
    for i in 1..n {
        pairs.insert((rng.gen_range(0..i), i));
    }
    for _ in 0..rng.gen_range(0..=n) {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    let mut edges = Vec::new();
    for (a, b) in pairs {
        let m = LinkMetrics {
            delay_s: rng.gen_range(1..5) as f64 / 64.0,
            throughput_bps: rng.gen_range(1..8) as f64 * 5e6,
            lifetime_s: rng.gen_range(1..8) as f64 * 300.0,
        };
        edges.push((format!("n{a}"), format!("n{b}"), m));
        edges.push((format!("n{b}"), format!("n{a}"), m));
    }
    Snapshot::from_parts(0.0, LayerMask::ALL, nodes, edges)
        .unwrap()
        .with_transit(TransitPolicy { ground_stations_relay: rng.gen() })
}

/// Minimum delay, ties broken by the node sequence.
pub fn best_of<'a>(paths: impl Iterator<Item = &'a RoutePath>) -> Option<&'a RoutePath> {
    paths.min_by(|a, b| a.delay_s.total_cmp(&b.delay_s).then_with(|| a.nodes.cmp(&b.nodes)))
}
