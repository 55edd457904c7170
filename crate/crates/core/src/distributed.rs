//! Hop-by-hop routing from local measurements plus an estimate of each
//! neighbor's remaining constrained metrics.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Snapshot;
use crate::mobility::Kinematics;
use crate::neural::{features, TrainedModel, FEATURE_DIM};
use crate::routing::{label_table, EpsConstraint, LabelTable, RoutePath, CAP_C_BPS, CAP_L_S};

pub const DEFAULT_LAMBDA: f64 = 10.0;
pub const DEFAULT_HOP_LIMIT: usize = 64;

/// What a neighbor reports back to the forwarder about itself and the link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborFeedback {
    pub id: String,
    pub link_delay_s: f64,
    pub queue_delay_s: f64,
    pub throughput_bps: f64,
    pub lifetime_s: f64,
    pub kin: Kinematics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalView {
    pub fn_id: String,
    pub fn_kin: Kinematics,
    pub dn_id: String,
    pub dn_kin: Kinematics,
    pub eps: EpsConstraint,
    /// Eligible neighbors, sorted by id.
    pub neighbors: Vec<NeighborFeedback>,
}

impl LocalView {
    /// Neighbors of `fwd` in `snap` that are not visited and can carry the
    /// packet further under the snapshot's transit policy (non-relays only as
    /// the destination itself).
    pub fn from_snapshot(snap: &Snapshot, fwd: &str, dst: &str, eps: EpsConstraint, visited: &HashSet<String>) -> Result<Self> {
        let f = snap.index_of(fwd)?;
        let d = snap.index_of(dst)?;
        let neighbors = snap
            .out_edges(f)
            .iter()
            .filter(|e| {
                !visited.contains(&snap.node(e.to).id) && (e.to == d || snap.can_relay(e.to))
            })
            .map(|e| {
                let n = snap.node(e.to);
                NeighborFeedback {
                    id: n.id.clone(),
                    link_delay_s: e.metrics.delay_s,
                    queue_delay_s: n.queue_delay_s,
                    throughput_bps: e.metrics.throughput_bps,
                    lifetime_s: e.metrics.lifetime_s,
                    kin: n.kin,
                }
            })
            .collect();
        Ok(Self {
            fn_id: fwd.to_string(),
            fn_kin: snap.node(f).kin,
            dn_id: dst.to_string(),
            dn_kin: snap.node(d).kin,
            eps,
            neighbors,
        })
    }
}

/// Remaining (D*, C*, L*) from a neighbor to the destination, physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub delay_s: f64,
    pub throughput_bps: f64,
    pub lifetime_s: f64,
}

impl Estimate {
    pub const AT_DESTINATION: Estimate = Estimate {
        delay_s: 0.0,
        throughput_bps: CAP_C_BPS,
        lifetime_s: CAP_L_S,
    };
    pub const UNREACHABLE: Estimate = Estimate {
        delay_s: f64::INFINITY,
        throughput_bps: 0.0,
        lifetime_s: 0.0,
    };
}

#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub fn_kin: &'a Kinematics,
    pub nb_id: &'a str,
    pub nb_kin: &'a Kinematics,
    pub dn_kin: &'a Kinematics,
    pub eps: EpsConstraint,
}

pub trait RouteEstimator {
    fn estimate(&self, queries: &[Query<'_>]) -> Result<Vec<Estimate>>;
}

/// Learned estimator. Predictions are clamped at zero since all three
/// metrics are non-negative.
pub struct ModelEstimator<'m> {
    pub model: &'m TrainedModel,
}

impl RouteEstimator for ModelEstimator<'_> {
    fn estimate(&self, queries: &[Query<'_>]) -> Result<Vec<Estimate>> {
        if queries.is_empty() {
            return Ok(Vec::new());
        }
        let mut x = Array2::zeros((queries.len(), FEATURE_DIM));
        for (r, q) in queries.iter().enumerate() {
            let f = features(q.fn_kin, q.nb_kin, q.dn_kin, &q.eps);
            x.row_mut(r).assign(&ndarray::aview1(&f));
        }
        let y = self.model.predict(&x)?;
        Ok(y
            .rows()
            .into_iter()
            .map(|r| Estimate {
                delay_s: r[0].max(0.0),
                throughput_bps: r[1].max(0.0),
                lifetime_s: r[2].max(0.0),
            })
            .collect())
    }
}

/// Exact labels from the centralized solver, for oracle substitution.
pub struct ExactEstimator {
    tables: BTreeMap<(u64, u64), LabelTable>,
}

impl ExactEstimator {
    pub fn new(snap: &Snapshot, dst: &str, eps: &[EpsConstraint]) -> Result<Self> {
        let mut tables = BTreeMap::new();
        for e in eps.iter().chain([&EpsConstraint::NONE]) {
            let key = (e.eps_c_bps.to_bits(), e.eps_l_s.to_bits());
            if let std::collections::btree_map::Entry::Vacant(v) = tables.entry(key) {
                v.insert(label_table(snap, dst, e)?);
            }
        }
        Ok(Self { tables })
    }
}

impl RouteEstimator for ExactEstimator {
    fn estimate(&self, queries: &[Query<'_>]) -> Result<Vec<Estimate>> {
        queries
            .iter()
            .map(|q| {
                let t = self
                    .tables
                    .get(&(q.eps.eps_c_bps.to_bits(), q.eps.eps_l_s.to_bits()))
                    .ok_or_else(|| Error::Config(format!("no exact labels for {:?}", q.eps)))?;
                Ok(t.get(q.nb_id).map_or(Estimate::UNREACHABLE, |e| Estimate {
                    delay_s: e.d_star_s,
                    throughput_bps: e.c_star_bps,
                    lifetime_s: e.l_star_s,
                }))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    So,
    Mo,
    MoRecursive,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "so" => Ok(Mode::So),
            "mo" => Ok(Mode::Mo),
            "mo_recursive" | "mo-recursive" => Ok(Mode::MoRecursive),
            _ => Err(Error::Config(format!("unknown routing mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub id: String,
    pub link_delay_s: f64,
    pub queue_delay_s: f64,
    pub est: Estimate,
    /// Penalty part of the score (delay-equivalent milliseconds).
    pub penalty: f64,
    /// Total score in milliseconds plus penalty.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub at: String,
    pub chosen: String,
    pub candidates: Vec<CandidateScore>,
}

fn pos(x: f64) -> f64 {
    x.max(0.0)
}

/// Threshold shortfall in milliseconds-equivalent: throughput in Mbps and
/// lifetime in minutes, scaled by `lambda`.
pub fn penalty(eps: &EpsConstraint, lambda: f64, link_c: f64, link_l: f64, est: &Estimate) -> f64 {
    let c = (pos(eps.eps_c_bps - link_c) + pos(eps.eps_c_bps - est.throughput_bps)) / 1e6;
    let l = (pos(eps.eps_l_s - link_l) + pos(eps.eps_l_s - est.lifetime_s)) / 60.0;
    lambda * (c + l)
}

fn pick(view: &LocalView, ests: Vec<Estimate>, eps: &EpsConstraint, lambda: f64) -> Option<Decision> {
    let candidates: Vec<CandidateScore> = view
        .neighbors
        .iter()
        .zip(ests)
        .map(|(n, est)| {
            let pen = penalty(eps, lambda, n.throughput_bps, n.lifetime_s, &est);
            let delay_ms = (n.link_delay_s + n.queue_delay_s + est.delay_s) * 1e3;
            CandidateScore {
                id: n.id.clone(),
                link_delay_s: n.link_delay_s,
                queue_delay_s: n.queue_delay_s,
                est,
                penalty: pen,
                score: delay_ms + pen,
            }
        })
        .collect();
    // neighbors are id-sorted, so the first minimum is the id tie-break
    let mut best: Option<&CandidateScore> = None;
    for c in &candidates {
        if best.map_or(true, |b| c.score.total_cmp(&b.score).is_lt()) {
            best = Some(c);
        }
    }
    let chosen = best?.id.clone();
    Some(Decision {
        at: view.fn_id.clone(),
        chosen,
        candidates,
    })
}

fn estimates(view: &LocalView, est: &dyn RouteEstimator, eps: EpsConstraint) -> Result<Vec<Estimate>> {
    let mut out = vec![Estimate::AT_DESTINATION; view.neighbors.len()];
    let (mut qs, mut slots) = (Vec::new(), Vec::new());
    for (i, n) in view.neighbors.iter().enumerate() {
        if n.id != view.dn_id {
            qs.push(Query {
                fn_kin: &view.fn_kin,
                nb_id: &n.id,
                nb_kin: &n.kin,
                dn_kin: &view.dn_kin,
                eps,
            });
            slots.push(i);
        }
    }
    for (i, e) in slots.into_iter().zip(est.estimate(&qs)?) {
        out[i] = e;
    }
    Ok(out)
}

/// Minimum-delay greedy choice; `None` for an empty neighborhood.
pub fn next_hop_so(view: &LocalView, est: &dyn RouteEstimator) -> Result<Option<Decision>> {
    let ests = estimates(view, est, EpsConstraint::NONE)?;
    Ok(pick(view, ests, &EpsConstraint::NONE, 0.0))
}

/// Delay plus threshold penalties.
pub fn next_hop_mo(view: &LocalView, est: &dyn RouteEstimator, lambda: f64) -> Result<Option<Decision>> {
    let ests = estimates(view, est, view.eps)?;
    Ok(pick(view, ests, &view.eps, lambda))
}

/// One level of lookahead: each neighbor's remaining metrics come from its
/// own best next hop (measured link plus the estimate one hop further).
/// `second[i]` is the view from `view.neighbors[i]`.
pub fn next_hop_recursive(view: &LocalView, second: &[LocalView], est: &dyn RouteEstimator, lambda: f64) -> Result<Option<Decision>> {
    if second.len() != view.neighbors.len() {
        return Err(Error::Shape(format!("{} neighbors but {} second-hop views", view.neighbors.len(), second.len())));
    }
    let mut ests = Vec::with_capacity(view.neighbors.len());
    for (n, sv) in view.neighbors.iter().zip(second) {
        if n.id != sv.fn_id {
            return Err(Error::Shape(format!("second-hop view for `{}` given for `{}`", sv.fn_id, n.id)));
        }
        if n.id == view.dn_id {
            ests.push(Estimate::AT_DESTINATION);
            continue;
        }
        let inner = estimates(sv, est, view.eps)?;
        let best = pick(sv, inner, &view.eps, lambda);
        ests.push(match best {
            None => Estimate::UNREACHABLE,
            Some(d) => {
                let c = d.candidates.iter().find(|c| c.id == d.chosen).expect("chosen is a candidate");
                let fb = sv.neighbors.iter().find(|x| x.id == d.chosen).expect("chosen is a neighbor");
                Estimate {
                    delay_s: fb.link_delay_s + fb.queue_delay_s + c.est.delay_s,
                    throughput_bps: fb.throughput_bps.min(c.est.throughput_bps),
                    lifetime_s: fb.lifetime_s.min(c.est.lifetime_s),
                }
            }
        });
    }
    Ok(pick(view, ests, &view.eps, lambda))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    DeadEnd,
    HopLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Delivered { path: RoutePath },
    Failed { reason: FailureReason, partial: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub outcome: Outcome,
    pub hops: usize,
    pub decisions: Vec<Decision>,
}

impl RolloutResult {
    pub fn path(&self) -> Option<&RoutePath> {
        match &self.outcome {
            Outcome::Delivered { path } => Some(path),
            Outcome::Failed { .. } => None,
        }
    }

    /// One JSON object per hop.
    pub fn write_decisions_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for (hop, d) in self.decisions.iter().enumerate() {
            let rec = serde_json::json!({ "hop": hop, "at": d.at, "chosen": d.chosen, "candidates": d.candidates });
            writeln!(out, "{rec}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutParams {
    pub mode: Mode,
    pub eps: EpsConstraint,
    pub lambda: f64,
    pub hop_limit: usize,
}

impl Default for RolloutParams {
    fn default() -> Self {
        Self {
            mode: Mode::Mo,
            eps: EpsConstraint::NONE,
            lambda: DEFAULT_LAMBDA,
            hop_limit: DEFAULT_HOP_LIMIT,
        }
    }
}

/// Forwards a packet greedily on a frozen snapshot until it reaches `dst`,
/// runs out of unvisited neighbors, or exceeds the hop limit.
pub fn rollout(snap: &Snapshot, src: &str, dst: &str, est: &dyn RouteEstimator, p: &RolloutParams) -> Result<RolloutResult> {
    snap.index_of(src)?;
    snap.index_of(dst)?;
    let mut path = vec![src.to_string()];
    let mut visited: HashSet<String> = path.iter().cloned().collect();
    let mut decisions = Vec::new();
    let fail = |reason, path: Vec<String>, decisions| {
        Ok(RolloutResult {
            hops: path.len() - 1,
            outcome: Outcome::Failed { reason, partial: path },
            decisions,
        })
    };
    while path.last().map(String::as_str) != Some(dst) {
        if path.len() > p.hop_limit {
            return fail(FailureReason::HopLimit, path, decisions);
        }
        let at = path.last().expect("non-empty").clone();
        let view = LocalView::from_snapshot(snap, &at, dst, p.eps, &visited)?;
        let decision = match p.mode {
            Mode::So => next_hop_so(&view, est)?,
            Mode::Mo => next_hop_mo(&view, est, p.lambda)?,
            Mode::MoRecursive => {
                let mut seen = visited.clone();
                seen.insert(at.clone());
                let second = view
                    .neighbors
                    .iter()
                    .map(|n| LocalView::from_snapshot(snap, &n.id, dst, p.eps, &seen))
                    .collect::<Result<Vec<_>>>()?;
                next_hop_recursive(&view, &second, est, p.lambda)?
            }
        };
        let Some(d) = decision else {
            return fail(FailureReason::DeadEnd, path, decisions);
        };
        visited.insert(d.chosen.clone());
        path.push(d.chosen.clone());
        decisions.push(d);
    }
    let route = RoutePath::from_ids(snap, &path)?;
    debug_assert_eq!(path.iter().collect::<HashSet<_>>().len(), path.len());
    Ok(RolloutResult {
        hops: route.hops(),
        outcome: Outcome::Delivered { path: route },
        decisions,
    })
}
