//! Time snapshots of the network: alive nodes with queuing delay and directed
//! edges carrying (delay, throughput, lifetime).

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geo;
use crate::linkmodel::{classify, LinkConfig, LinkMetrics, LinkModel};
use crate::mobility::{Kinematics, NodeKind, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Aanet,
    Leo,
    Ground,
}

impl Layer {
    pub fn of(kind: NodeKind) -> Layer {
        match kind {
            NodeKind::Airplane => Layer::Aanet,
            NodeKind::Satellite => Layer::Leo,
            NodeKind::Ship | NodeKind::GroundStation | NodeKind::BaseStation => Layer::Ground,
        }
    }
}

/// Subset of {aanet, leo, ground}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerMask {
    pub aanet: bool,
    pub leo: bool,
    pub ground: bool,
}

impl LayerMask {
    pub const ALL: LayerMask = LayerMask {
        aanet: true,
        leo: true,
        ground: true,
    };
    /// Airplanes plus ground/sea nodes.
    pub const AANET: LayerMask = LayerMask {
        aanet: true,
        leo: false,
        ground: true,
    };
    /// Satellites plus ground/sea nodes.
    pub const LEO: LayerMask = LayerMask {
        aanet: false,
        leo: true,
        ground: true,
    };

    pub fn contains(&self, layer: Layer) -> bool {
        match layer {
            Layer::Aanet => self.aanet,
            Layer::Leo => self.leo,
            Layer::Ground => self.ground,
        }
    }

    pub fn includes_kind(&self, kind: NodeKind) -> bool {
        self.contains(Layer::of(kind))
    }

    pub fn is_subset_of(&self, other: &LayerMask) -> bool {
        (!self.aanet || other.aanet) && (!self.leo || other.leo) && (!self.ground || other.ground)
    }

    pub fn name(&self) -> String {
        let mut parts = Vec::new();
        if self.aanet {
            parts.push("aanet");
        }
        if self.leo {
            parts.push("leo");
        }
        if self.ground {
            parts.push("ground");
        }
        parts.join("+")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum QueuingModel {
    Constant { delay_s: f64 },
    TruncGauss { mean_s: f64, std_s: f64, seed: u64 },
}

impl QueuingModel {
    /// 10 ms per node, used for training labels.
    pub const TRAINING: QueuingModel = QueuingModel::Constant { delay_s: 0.010 };

    /// Mean 10 ms, std 5 ms, truncated to [0, inf).
    pub fn testing(seed: u64) -> QueuingModel {
        QueuingModel::TruncGauss {
            mean_s: 0.010,
            std_s: 0.005,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            QueuingModel::Constant { delay_s } if delay_s.is_finite() && delay_s >= 0.0 => Ok(()),
            QueuingModel::TruncGauss { mean_s, std_s, .. }
                if mean_s.is_finite() && std_s.is_finite() && std_s >= 0.0 && (mean_s > 0.0 || std_s > 0.0) =>
            {
                Ok(())
            }
            _ => Err(Error::Config(format!("invalid queuing model {self:?}"))),
        }
    }

    /// Queuing delay of `node_id` at `t`; a pure function of (model, node, t).
    pub fn draw(&self, node_id: &str, t: f64) -> f64 {
        match *self {
            QueuingModel::Constant { delay_s } => delay_s,
            QueuingModel::TruncGauss { mean_s, std_s, seed } => {
                if std_s == 0.0 {
                    return mean_s.max(0.0);
                }
                let mut h = Sha256::new();
                h.update(seed.to_le_bytes());
                h.update(node_id.as_bytes());
                h.update(t.to_bits().to_le_bytes());
                let digest = h.finalize();
                let mut key = [0u8; 32];
                key.copy_from_slice(&digest);
                let mut rng = ChaCha8Rng::from_seed(key);
                let normal = Normal::new(mean_s, std_s).expect("std checked finite and positive");
                loop {
                    let x = normal.sample(&mut rng);
                    if x >= 0.0 {
                        return x;
                    }
                }
            }
        }
    }
}

/// Which node kinds may forward traffic they did not originate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitPolicy {
    pub ground_stations_relay: bool,
}

impl Default for TransitPolicy {
    fn default() -> Self {
        Self {
            ground_stations_relay: true,
        }
    }
}

impl TransitPolicy {
    /// Ships never relay.
    pub fn can_relay(&self, kind: NodeKind) -> bool {
        match kind {
            NodeKind::Ship => false,
            NodeKind::GroundStation => self.ground_stations_relay,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub id: String,
    pub kind: NodeKind,
    pub kin: Kinematics,
    pub queue_delay_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adjacent {
    pub to: usize,
    pub metrics: LinkMetrics,
}

/// Network graph at one instant. Nodes are kept sorted by id, so index order
/// equals lexicographic id order.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub t: f64,
    pub layers: LayerMask,
    pub transit: TransitPolicy,
    nodes: Vec<NodeState>,
    index: HashMap<String, usize>,
    out: Vec<Vec<Adjacent>>,
    inc: Vec<Vec<Adjacent>>,
}

/// Neighbor as seen from a forwarding node.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor<'a> {
    pub id: &'a str,
    pub index: usize,
    pub metrics: LinkMetrics,
    pub queue_delay_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: String,
    pub to: String,
    #[serde(flatten)]
    pub metrics: LinkMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotExport {
    pub t: f64,
    pub layers: LayerMask,
    pub nodes: Vec<NodeState>,
    pub edges: Vec<EdgeRecord>,
}

fn valid_metrics(m: &LinkMetrics) -> bool {
    m.delay_s.is_finite()
        && m.delay_s > 0.0
        && m.throughput_bps.is_finite()
        && m.throughput_bps > 0.0
        && m.lifetime_s.is_finite()
        && m.lifetime_s >= 0.0
}

impl Snapshot {
    /// Assembles a snapshot from explicit nodes and directed edges.
    pub fn from_parts(
        t: f64,
        layers: LayerMask,
        mut nodes: Vec<NodeState>,
        edges: Vec<(String, String, LinkMetrics)>,
    ) -> Result<Self> {
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if !(n.queue_delay_s >= 0.0 && n.queue_delay_s.is_finite()) {
                return Err(Error::Range(format!("queue delay of `{}` must be >= 0", n.id)));
            }
            if index.insert(n.id.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate node id `{}`", n.id)));
            }
        }
        let mut out = vec![Vec::new(); nodes.len()];
        let mut inc = vec![Vec::new(); nodes.len()];
        for (a, b, m) in edges {
            let ia = *index.get(&a).ok_or_else(|| Error::UnknownNode(a.clone()))?;
            let ib = *index.get(&b).ok_or_else(|| Error::UnknownNode(b.clone()))?;
            if ia == ib {
                return Err(Error::Schema(format!("self loop on `{a}`")));
            }
            if !valid_metrics(&m) {
                return Err(Error::Range(format!("invalid metrics on edge {a} -> {b}: {m:?}")));
            }
            if out[ia].iter().any(|e: &Adjacent| e.to == ib) {
                return Err(Error::Schema(format!("duplicate edge {a} -> {b}")));
            }
            out[ia].push(Adjacent { to: ib, metrics: m });
            inc[ib].push(Adjacent { to: ia, metrics: m });
        }
        for v in out.iter_mut().chain(inc.iter_mut()) {
            v.sort_by_key(|e| e.to);
        }
        Ok(Self {
            t,
            layers,
            transit: TransitPolicy::default(),
            nodes,
            index,
            out,
            inc,
        })
    }

    pub fn with_transit(mut self, transit: TransitPolicy) -> Self {
        self.transit = transit;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &NodeState {
        &self.nodes[i]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index.get(id).copied().ok_or_else(|| Error::UnknownNode(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Outgoing edges of node `i`, sorted by target index.
    pub fn out_edges(&self, i: usize) -> &[Adjacent] {
        &self.out[i]
    }

    /// Incoming edges of node `i`; `Adjacent::to` is the source.
    pub fn in_edges(&self, i: usize) -> &[Adjacent] {
        &self.inc[i]
    }

    pub fn edge(&self, from: usize, to: usize) -> Option<&LinkMetrics> {
        self.out[from]
            .binary_search_by_key(&to, |e| e.to)
            .ok()
            .map(|k| &self.out[from][k].metrics)
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, &LinkMetrics)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(i, v)| v.iter().map(move |e| (i, e.to, &e.metrics)))
    }

    pub fn can_relay(&self, i: usize) -> bool {
        self.transit.can_relay(self.nodes[i].kind)
    }

    /// Adjacent nodes of `id` with edge metrics and the neighbor's queuing delay.
    pub fn neighbors(&self, id: &str) -> Result<Vec<Neighbor<'_>>> {
        let i = self.index_of(id)?;
        Ok(self.out[i]
            .iter()
            .map(|e| Neighbor {
                id: &self.nodes[e.to].id,
                index: e.to,
                metrics: e.metrics,
                queue_delay_s: self.nodes[e.to].queue_delay_s,
            })
            .collect())
    }

    /// The sub-snapshot of nodes in `layers`, with the edges among them.
    pub fn restrict(&self, layers: LayerMask) -> Snapshot {
        let nodes: Vec<NodeState> = self
            .nodes
            .iter()
            .filter(|n| layers.includes_kind(n.kind))
            .cloned()
            .collect();
        let edges = self
            .edges()
            .filter(|(a, b, _)| layers.includes_kind(self.nodes[*a].kind) && layers.includes_kind(self.nodes[*b].kind))
            .map(|(a, b, m)| (self.nodes[a].id.clone(), self.nodes[b].id.clone(), *m))
            .collect();
        Snapshot::from_parts(self.t, layers, nodes, edges)
            .expect("restriction of a valid snapshot is valid")
            .with_transit(self.transit)
    }

    pub fn export(&self) -> SnapshotExport {
        SnapshotExport {
            t: self.t,
            layers: self.layers,
            nodes: self.nodes.clone(),
            edges: self
                .edges()
                .map(|(a, b, m)| EdgeRecord {
                    from: self.nodes[a].id.clone(),
                    to: self.nodes[b].id.clone(),
                    metrics: *m,
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.export())?)
    }

    pub fn from_export(e: SnapshotExport) -> Result<Self> {
        let edges = e.edges.into_iter().map(|r| (r.from, r.to, r.metrics)).collect();
        Self::from_parts(e.t, e.layers, e.nodes, edges)
    }
}

/// Builds the snapshot of `scenario` at `t`, with nodes alive at `t` in `layers`.
pub fn build_snapshot(
    scenario: &Scenario,
    t: f64,
    layers: LayerMask,
    queuing: &QueuingModel,
    link: &LinkConfig,
) -> Result<Snapshot> {
    if !scenario.contains(t) {
        return Err(Error::Range(format!(
            "t={t} outside scenario span [0, {}]",
            scenario.duration_s
        )));
    }
    queuing.validate()?;
    let model = LinkModel::new(scenario, *link)?;
    let nodes: Vec<NodeState> = scenario
        .traces
        .iter()
        .filter(|tr| layers.includes_kind(tr.kind))
        .filter_map(|tr| {
            tr.position_at(t).map(|kin| NodeState {
                id: tr.id.clone(),
                kind: tr.kind,
                kin,
                queue_delay_s: queuing.draw(&tr.id, t),
            })
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..nodes.len())
        .flat_map(|i| (i + 1..nodes.len()).map(move |j| (i, j)))
        .filter(|&(i, j)| classify(nodes[i].kind, nodes[j].kind).is_some())
        .collect();
    let found: Vec<Result<Option<[(String, String, LinkMetrics); 2]>>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (a, b) = (&nodes[i], &nodes[j]);
            if !model.connected((&a.id, a.kind, &a.kin.pos), (&b.id, b.kind, &b.kin.pos)) {
                return Ok(None);
            }
            let d = geo::slant_distance(&a.kin.pos, &b.kin.pos);
            let (Some((dab, cab)), Some((dba, cba))) =
                (model.radio(a.kind, b.kind, d)?, model.radio(b.kind, a.kind, d)?)
            else {
                return Ok(None);
            };
            let life = model.link_lifetime(&a.id, &b.id, t, link.lifetime_step_s, link.lifetime_horizon_s)?;
            Ok(Some([
                (
                    a.id.clone(),
                    b.id.clone(),
                    LinkMetrics {
                        delay_s: dab,
                        throughput_bps: cab,
                        lifetime_s: life,
                    },
                ),
                (
                    b.id.clone(),
                    a.id.clone(),
                    LinkMetrics {
                        delay_s: dba,
                        throughput_bps: cba,
                        lifetime_s: life,
                    },
                ),
            ]))
        })
        .collect();
    let mut edges = Vec::new();
    for f in found {
        if let Some(pair) = f? {
            edges.extend(pair);
        }
    }
    Snapshot::from_parts(t, layers, nodes, edges)
}
