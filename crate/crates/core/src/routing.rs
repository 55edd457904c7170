//! Centralized ground truth: minimum-delay routing, the epsilon-constraint
//! transformation (link pruning), Pareto fronts, per-destination label tables
//! and an exhaustive path oracle.
//!
//! Path delay is accumulated hop by hop from the source as
//! `acc + (link_delay + queue_delay(next))`, in that exact floating-point
//! order, everywhere a forward delay is computed. Forward Dijkstra therefore
//! produces bit-identical values to the enumeration oracle.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Snapshot;
use crate::linkmodel::LinkMetrics;

/// Throughput reported for the empty path (destination to itself), bit/s.
pub const CAP_C_BPS: f64 = 10e9;
/// Lifetime reported for the empty path, seconds.
pub const CAP_L_S: f64 = 24.0 * 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsConstraint {
    pub eps_c_bps: f64,
    pub eps_l_s: f64,
}

impl EpsConstraint {
    pub const NONE: EpsConstraint = EpsConstraint {
        eps_c_bps: 0.0,
        eps_l_s: 0.0,
    };

    pub fn new(eps_c_bps: f64, eps_l_s: f64) -> Result<Self> {
        if !(eps_c_bps >= 0.0 && eps_l_s >= 0.0) || !eps_c_bps.is_finite() || !eps_l_s.is_finite() {
            return Err(Error::Range(format!("thresholds must be finite and >= 0: ({eps_c_bps}, {eps_l_s})")));
        }
        Ok(Self { eps_c_bps, eps_l_s })
    }

    /// Thresholds in Mbps and minutes.
    pub fn from_mbps_min(mbps: f64, minutes: f64) -> Result<Self> {
        Self::new(mbps * 1e6, minutes * 60.0)
    }

    /// Links kept after pruning: strictly above both thresholds.
    pub fn admits(&self, m: &LinkMetrics) -> bool {
        m.throughput_bps > self.eps_c_bps && m.lifetime_s > self.eps_l_s
    }

    pub fn satisfied_by(&self, t: &MetricTriple) -> bool {
        t.throughput_bps > self.eps_c_bps && t.lifetime_s > self.eps_l_s
    }
}

/// Grid of thresholds swept to trace a Pareto front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsGrid {
    pub points: Vec<EpsConstraint>,
}

impl EpsGrid {
    /// Cartesian product of `c_mbps` x `l_min`.
    pub fn product(c_mbps: &[f64], l_min: &[f64]) -> Result<Self> {
        let mut points = Vec::with_capacity(c_mbps.len() * l_min.len());
        for &c in c_mbps {
            for &l in l_min {
                points.push(EpsConstraint::from_mbps_min(c, l)?);
            }
        }
        if points.is_empty() {
            return Err(Error::Empty("epsilon grid".into()));
        }
        Ok(Self { points })
    }

    /// Throughput 0..=70 Mbps in 5 Mbps steps, lifetime 0..=30 min in 5 min steps.
    pub fn default_sweep() -> Self {
        let c: Vec<f64> = (0..=14).map(|k| 5.0 * k as f64).collect();
        let l: Vec<f64> = (0..=6).map(|k| 5.0 * k as f64).collect();
        Self::product(&c, &l).expect("non-empty")
    }
}

/// (delay, throughput, lifetime) of a path. Delay is minimized, the others maximized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricTriple {
    pub delay_s: f64,
    pub throughput_bps: f64,
    pub lifetime_s: f64,
}

/// Pareto dominance: no worse in all three objectives and strictly better in one.
pub fn dominates(a: &MetricTriple, b: &MetricTriple) -> bool {
    let no_worse = a.delay_s <= b.delay_s && a.throughput_bps >= b.throughput_bps && a.lifetime_s >= b.lifetime_s;
    let better = a.delay_s < b.delay_s || a.throughput_bps > b.throughput_bps || a.lifetime_s > b.lifetime_s;
    no_worse && better
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutePath {
    pub nodes: Vec<String>,
    pub delay_s: f64,
    pub throughput_bps: f64,
    pub lifetime_s: f64,
}

impl RoutePath {
    pub fn triple(&self) -> MetricTriple {
        MetricTriple {
            delay_s: self.delay_s,
            throughput_bps: self.throughput_bps,
            lifetime_s: self.lifetime_s,
        }
    }

    pub fn hops(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    /// Path over snapshot indices; metrics recomputed from the snapshot edges.
    pub fn from_indices(snap: &Snapshot, idx: &[usize]) -> Result<Self> {
        let mut delay = 0.0;
        let mut thr = CAP_C_BPS;
        let mut life = CAP_L_S;
        for w in idx.windows(2) {
            let m = snap.edge(w[0], w[1]).ok_or_else(|| {
                Error::Schema(format!(
                    "no edge {} -> {}",
                    snap.node(w[0]).id,
                    snap.node(w[1]).id
                ))
            })?;
            delay += m.delay_s + snap.node(w[1]).queue_delay_s;
            thr = thr.min(m.throughput_bps);
            life = life.min(m.lifetime_s);
        }
        Ok(Self {
            nodes: idx.iter().map(|&i| snap.node(i).id.clone()).collect(),
            delay_s: delay,
            throughput_bps: thr,
            lifetime_s: life,
        })
    }

    pub fn from_ids(snap: &Snapshot, ids: &[String]) -> Result<Self> {
        let idx = ids.iter().map(|id| snap.index_of(id)).collect::<Result<Vec<_>>>()?;
        Self::from_indices(snap, &idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    key: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    // min-heap on key, then on node index
    fn cmp(&self, other: &Self) -> Ordering {
        other.key.total_cmp(&self.key).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn hop_weight(snap: &Snapshot, to: usize, m: &LinkMetrics) -> f64 {
    m.delay_s + snap.node(to).queue_delay_s
}

/// Forward minimum-delay search from `src` over edges accepted by `keep`.
/// Returns the lexicographically smallest minimum-delay index path to `dst`.
fn forward_lex_shortest<F>(snap: &Snapshot, src: usize, dst: usize, keep: F) -> Option<Vec<usize>>
where
    F: Fn(&LinkMetrics) -> bool,
{
    if src == dst {
        return Some(vec![src]);
    }
    let n = snap.len();
    let expandable = |u: usize| u != dst && (u == src || snap.can_relay(u));
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(HeapItem { key: 0.0, node: src });
    while let Some(HeapItem { key, node: u }) = heap.pop() {
        if done[u] || key > dist[u] {
            continue;
        }
        done[u] = true;
        if !expandable(u) {
            continue;
        }
        for e in snap.out_edges(u) {
            if !keep(&e.metrics) {
                continue;
            }
            let nd = dist[u] + hop_weight(snap, e.to, &e.metrics);
            if nd < dist[e.to] {
                dist[e.to] = nd;
                heap.push(HeapItem { key: nd, node: e.to });
            }
        }
    }
    if !dist[dst].is_finite() {
        return None;
    }
    // tight edges form the shortest-path DAG; keep nodes that reach dst through it
    let tight = |u: usize, v: usize, m: &LinkMetrics| {
        expandable(u) && dist[u].is_finite() && keep(m) && dist[u] + hop_weight(snap, v, m) == dist[v]
    };
    let mut reach = vec![false; n];
    reach[dst] = true;
    let mut stack = vec![dst];
    while let Some(v) = stack.pop() {
        for e in snap.in_edges(v) {
            let u = e.to;
            if !reach[u] && tight(u, v, &e.metrics) {
                reach[u] = true;
                stack.push(u);
            }
        }
    }
    let mut path = vec![src];
    let mut u = src;
    while u != dst {
        let next = snap
            .out_edges(u)
            .iter()
            .find(|e| reach[e.to] && tight(u, e.to, &e.metrics))
            .map(|e| e.to)?;
        path.push(next);
        u = next;
        if path.len() > n {
            return None;
        }
    }
    Some(path)
}

/// Globally minimum-delay path; `None` when `dst` is unreachable.
pub fn min_delay_path(snap: &Snapshot, src: &str, dst: &str) -> Result<Option<RoutePath>> {
    let (s, d) = (snap.index_of(src)?, snap.index_of(dst)?);
    forward_lex_shortest(snap, s, d, |_| true)
        .map(|p| RoutePath::from_indices(snap, &p))
        .transpose()
}

/// Minimum-delay path after deleting every link with throughput <= eps_c or
/// lifetime <= eps_l; `None` when infeasible.
pub fn constrained_min_delay(
    snap: &Snapshot,
    src: &str,
    dst: &str,
    eps: &EpsConstraint,
) -> Result<Option<RoutePath>> {
    let (s, d) = (snap.index_of(src)?, snap.index_of(dst)?);
    forward_lex_shortest(snap, s, d, |m| eps.admits(m))
        .map(|p| RoutePath::from_indices(snap, &p))
        .transpose()
}

/// Reverse single-destination search. `dist[v]` is the minimum delay v -> dst,
/// `succ[v]` the smallest-index successor on a minimum-delay path.
struct ReverseTree {
    dist: Vec<f64>,
    succ: Vec<Option<usize>>,
}

fn reverse_shortest<F>(snap: &Snapshot, dst: usize, keep: F) -> ReverseTree
where
    F: Fn(&LinkMetrics) -> bool,
{
    let n = snap.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[dst] = 0.0;
    heap.push(HeapItem { key: 0.0, node: dst });
    while let Some(HeapItem { key, node: u }) = heap.pop() {
        if done[u] || key > dist[u] {
            continue;
        }
        done[u] = true;
        // u becomes an intermediate hop for its predecessors
        if u != dst && !snap.can_relay(u) {
            continue;
        }
        for e in snap.in_edges(u) {
            let v = e.to;
            if v == dst || !keep(&e.metrics) {
                continue;
            }
            let nd = hop_weight(snap, u, &e.metrics) + dist[u];
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapItem { key: nd, node: v });
            }
        }
    }
    let succ = (0..n)
        .map(|v| {
            if v == dst || !dist[v].is_finite() {
                return None;
            }
            snap.out_edges(v)
                .iter()
                .filter(|e| keep(&e.metrics) && (e.to == dst || snap.can_relay(e.to)))
                .find(|e| dist[e.to].is_finite() && hop_weight(snap, e.to, &e.metrics) + dist[e.to] == dist[v])
                .map(|e| e.to)
        })
        .collect();
    ReverseTree { dist, succ }
}

impl ReverseTree {
    fn path(&self, from: usize, dst: usize) -> Option<Vec<usize>> {
        if !self.dist[from].is_finite() {
            return None;
        }
        let mut p = vec![from];
        let mut u = from;
        while u != dst {
            u = self.succ[u]?;
            p.push(u);
            if p.len() > self.dist.len() {
                return None;
            }
        }
        Some(p)
    }
}

/// Reverse max-bottleneck search: for each node, the largest achievable
/// bottleneck of `metric` on a path to `dst` using edges accepted by `keep`.
fn reverse_widest<F, M>(snap: &Snapshot, dst: usize, keep: F, metric: M) -> Vec<f64>
where
    F: Fn(&LinkMetrics) -> bool,
    M: Fn(&LinkMetrics) -> f64,
{
    let n = snap.len();
    let mut width = vec![f64::NEG_INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    width[dst] = f64::INFINITY;
    // HeapItem is a min-heap, so negate widths
    heap.push(HeapItem {
        key: f64::NEG_INFINITY,
        node: dst,
    });
    while let Some(HeapItem { key, node: u }) = heap.pop() {
        if done[u] || -key < width[u] {
            continue;
        }
        done[u] = true;
        if u != dst && !snap.can_relay(u) {
            continue;
        }
        for e in snap.in_edges(u) {
            let v = e.to;
            if v == dst || !keep(&e.metrics) {
                continue;
            }
            let w = width[u].min(metric(&e.metrics));
            if w > width[v] {
                width[v] = w;
                heap.push(HeapItem { key: -w, node: v });
            }
        }
    }
    width
}

/// Best achievable path throughput and path lifetime from every node to
/// `dst`, each maximized independently. Unreachable nodes get `None`; the
/// destination gets the empty-path caps.
pub fn best_bottlenecks(snap: &Snapshot, dst: &str) -> Result<Vec<Option<(f64, f64)>>> {
    let d = snap.index_of(dst)?;
    let c = reverse_widest(snap, d, |_| true, |m| m.throughput_bps);
    let l = reverse_widest(snap, d, |_| true, |m| m.lifetime_s);
    Ok((0..snap.len())
        .map(|i| {
            if i == d {
                Some((CAP_C_BPS, CAP_L_S))
            } else if c[i] > f64::NEG_INFINITY {
                Some((c[i], l[i]))
            } else {
                None
            }
        })
        .collect())
}

/// Constrained metrics of one node towards the destination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelEntry {
    pub d_star_s: f64,
    pub c_star_bps: f64,
    pub l_star_s: f64,
    pub feasible: bool,
}

impl LabelEntry {
    pub fn triple(&self) -> MetricTriple {
        MetricTriple {
            delay_s: self.d_star_s,
            throughput_bps: self.c_star_bps,
            lifetime_s: self.l_star_s,
        }
    }
}

/// Constrained labels from every non-ship node to one destination under one
/// epsilon. Nodes without any path to the destination have no entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTable {
    pub t: f64,
    pub dst: String,
    pub eps: EpsConstraint,
    pub entries: BTreeMap<String, LabelEntry>,
}

impl LabelTable {
    pub fn get(&self, id: &str) -> Option<&LabelEntry> {
        self.entries.get(id)
    }

    pub fn feasible_fraction(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.entries.values().filter(|e| e.feasible).count() as f64 / self.entries.len() as f64
    }
}

/// Normalized shortfall of a (throughput, lifetime) pair from the thresholds.
pub fn violation(eps: &EpsConstraint, c_bps: f64, l_s: f64) -> f64 {
    (eps.eps_c_bps - c_bps).max(0.0) / eps.eps_c_bps.max(1.0)
        + (eps.eps_l_s - l_s).max(0.0) / eps.eps_l_s.max(1.0)
}

fn entry_from_path(p: &RoutePath, feasible: bool) -> LabelEntry {
    LabelEntry {
        d_star_s: p.delay_s,
        c_star_bps: p.throughput_bps,
        l_star_s: p.lifetime_s,
        feasible,
    }
}

/// Label table for `dst` under `eps`, from one reverse search on the pruned
/// graph. Nodes with no feasible path get the metrics of the path that
/// minimizes the normalized threshold violation (ties: lower delay).
pub fn label_table(snap: &Snapshot, dst: &str, eps: &EpsConstraint) -> Result<LabelTable> {
    use crate::mobility::NodeKind;
    let d = snap.index_of(dst)?;
    let tree = reverse_shortest(snap, d, |m| eps.admits(m));
    let mut entries = BTreeMap::new();
    let mut infeasible = Vec::new();
    for b in 0..snap.len() {
        if snap.node(b).kind == NodeKind::Ship {
            continue;
        }
        if b == d {
            entries.insert(
                snap.node(b).id.clone(),
                LabelEntry {
                    d_star_s: 0.0,
                    c_star_bps: CAP_C_BPS,
                    l_star_s: CAP_L_S,
                    feasible: true,
                },
            );
            continue;
        }
        match tree.path(b, d) {
            Some(p) => {
                let rp = RoutePath::from_indices(snap, &p)?;
                entries.insert(rp.nodes[0].clone(), entry_from_path(&rp, true));
            }
            None => infeasible.push(b),
        }
    }
    if !infeasible.is_empty() {
        for (b, entry) in fallback_labels(snap, d, eps, &infeasible)? {
            entries.insert(snap.node(b).id.clone(), entry);
        }
    }
    Ok(LabelTable {
        t: snap.t,
        dst: dst.to_string(),
        eps: *eps,
        entries,
    })
}

/// Violations closer than this are treated as equal.
const VIOLATION_TOL: f64 = 1e-12;

fn fallback_labels(
    snap: &Snapshot,
    dst: usize,
    eps: &EpsConstraint,
    nodes: &[usize],
) -> Result<Vec<(usize, LabelEntry)>> {
    // candidate lifetime floors: every edge lifetime below eps_l, plus eps_l itself
    let mut floors: Vec<f64> = snap
        .edges()
        .map(|(_, _, m)| m.lifetime_s)
        .filter(|&l| l < eps.eps_l_s)
        .collect();
    floors.push(eps.eps_l_s);
    floors.sort_by(f64::total_cmp);
    floors.dedup();

    // best (violation, box) per node over the clamped bottleneck frontier
    let mut best: HashMap<usize, (f64, Vec<(f64, f64)>)> = HashMap::new();
    for &floor in &floors {
        let width = reverse_widest(snap, dst, |m| m.lifetime_s >= floor, |m| m.throughput_bps);
        for &b in nodes {
            if !(width[b] > 0.0) {
                continue;
            }
            let c = width[b].min(eps.eps_c_bps);
            let v = violation(eps, c, floor);
            let slot = best.entry(b).or_insert((f64::INFINITY, Vec::new()));
            if v < slot.0 - VIOLATION_TOL {
                *slot = (v, vec![(c, floor)]);
            } else if v <= slot.0 + VIOLATION_TOL {
                slot.0 = slot.0.min(v);
                slot.1.push((c, floor));
            }
        }
    }

    let mut trees: HashMap<(u64, u64), ReverseTree> = HashMap::new();
    let mut out = Vec::new();
    for &b in nodes {
        let Some((_, boxes)) = best.get(&b) else {
            continue;
        };
        let mut chosen: Option<RoutePath> = None;
        for &(c, l) in boxes {
            let tree = trees
                .entry((c.to_bits(), l.to_bits()))
                .or_insert_with(|| reverse_shortest(snap, dst, |m| m.throughput_bps >= c && m.lifetime_s >= l));
            let Some(p) = tree.path(b, dst) else {
                continue;
            };
            let rp = RoutePath::from_indices(snap, &p)?;
            let better = match &chosen {
                None => true,
                Some(cur) => {
                    let (vr, vc) = (
                        violation(eps, rp.throughput_bps, rp.lifetime_s),
                        violation(eps, cur.throughput_bps, cur.lifetime_s),
                    );
                    let tied = (vr - vc).abs() <= VIOLATION_TOL;
                    (!tied && vr < vc) || (tied && (rp.delay_s < cur.delay_s || (rp.delay_s == cur.delay_s && rp.nodes < cur.nodes)))
                }
            };
            if better {
                chosen = Some(rp);
            }
        }
        if let Some(rp) = chosen {
            out.push((b, entry_from_path(&rp, false)));
        }
    }
    Ok(out)
}

fn sort_front(front: &mut Vec<RoutePath>) {
    front.sort_by(|a, b| {
        a.delay_s
            .total_cmp(&b.delay_s)
            .then(b.throughput_bps.total_cmp(&a.throughput_bps))
            .then(b.lifetime_s.total_cmp(&a.lifetime_s))
            .then_with(|| a.nodes.cmp(&b.nodes))
    });
}

/// Removes dominated paths and duplicate triples (the lexicographically
/// smallest node sequence is kept), sorted by delay.
pub fn non_dominated(paths: Vec<RoutePath>) -> Vec<RoutePath> {
    let mut paths = paths;
    sort_front(&mut paths);
    let mut out: Vec<RoutePath> = Vec::new();
    for p in paths {
        let t = p.triple();
        if paths_cover(&out, &t) {
            continue;
        }
        out.push(p);
    }
    // later points never dominate earlier ones except on exact delay ties
    let triples: Vec<MetricTriple> = out.iter().map(|p| p.triple()).collect();
    let mut keep = vec![true; out.len()];
    for i in 0..out.len() {
        for j in 0..out.len() {
            if i != j && keep[j] && dominates(&triples[j], &triples[i]) {
                keep[i] = false;
                break;
            }
        }
    }
    out.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect()
}

fn paths_cover(front: &[RoutePath], t: &MetricTriple) -> bool {
    front.iter().any(|q| {
        let qt = q.triple();
        dominates(&qt, t) || qt == *t
    })
}

/// Front traced by solving the constrained problem at every grid point.
pub fn pareto_front(snap: &Snapshot, src: &str, dst: &str, grid: &EpsGrid) -> Result<Vec<RoutePath>> {
    if grid.points.is_empty() {
        return Err(Error::Empty("epsilon grid".into()));
    }
    let mut found: Vec<RoutePath> = Vec::new();
    for eps in &grid.points {
        if let Some(p) = constrained_min_delay(snap, src, dst, eps)? {
            if !found.iter().any(|q| q.nodes == p.nodes) {
                found.push(p);
            }
        }
    }
    Ok(non_dominated(found))
}

/// Complete Pareto front, by sweeping the thresholds through the values the
/// front itself attains: lifetime floors in the outer loop, throughput floors
/// in the inner loop. Each step is one constrained minimum-delay search.
pub fn exact_pareto_front(snap: &Snapshot, src: &str, dst: &str) -> Result<Vec<RoutePath>> {
    let (s, d) = (snap.index_of(src)?, snap.index_of(dst)?);
    let mut found: Vec<RoutePath> = Vec::new();
    let mut l_floor = f64::NEG_INFINITY;
    loop {
        let mut c_floor = f64::NEG_INFINITY;
        let mut min_l = f64::INFINITY;
        let mut any = false;
        while let Some(p) = forward_lex_shortest(snap, s, d, |m| m.throughput_bps > c_floor && m.lifetime_s > l_floor) {
            let rp = RoutePath::from_indices(snap, &p)?;
            any = true;
            min_l = min_l.min(rp.lifetime_s);
            c_floor = rp.throughput_bps;
            let single = rp.nodes.len() == 1;
            if !found.iter().any(|q| q.nodes == rp.nodes) {
                found.push(rp);
            }
            if single {
                break;
            }
        }
        if !any || !min_l.is_finite() || min_l >= CAP_L_S {
            break;
        }
        l_floor = min_l;
    }
    Ok(non_dominated(found))
}

/// Every simple path `src -> dst` (ships never relay) with exact metrics.
/// Refuses snapshots with more than `max_nodes` nodes.
pub fn brute_force_paths(snap: &Snapshot, src: &str, dst: &str, max_nodes: usize) -> Result<Vec<RoutePath>> {
    if snap.len() > max_nodes {
        return Err(Error::Refused(format!(
            "exhaustive enumeration limited to {max_nodes} nodes, snapshot has {}",
            snap.len()
        )));
    }
    let (s, d) = (snap.index_of(src)?, snap.index_of(dst)?);
    let mut out = Vec::new();
    let mut on_path = vec![false; snap.len()];
    let mut path = vec![s];
    on_path[s] = true;
    fn dfs(
        snap: &Snapshot,
        d: usize,
        path: &mut Vec<usize>,
        on_path: &mut [bool],
        out: &mut Vec<Vec<usize>>,
    ) {
        let u = *path.last().unwrap();
        if u == d {
            out.push(path.clone());
            return;
        }
        if path.len() > 1 && !snap.can_relay(u) {
            return;
        }
        for e in snap.out_edges(u) {
            if on_path[e.to] {
                continue;
            }
            on_path[e.to] = true;
            path.push(e.to);
            dfs(snap, d, path, on_path, out);
            path.pop();
            on_path[e.to] = false;
        }
    }
    let mut raw = Vec::new();
    dfs(snap, d, &mut path, &mut on_path, &mut raw);
    for p in raw {
        out.push(RoutePath::from_indices(snap, &p)?);
    }
    Ok(out)
}

/// One row of the label dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub t: f64,
    pub b_id: String,
    pub dst_id: String,
    pub eps_c: f64,
    pub eps_l: f64,
    pub d_star: f64,
    pub c_star: f64,
    pub l_star: f64,
    pub feasible: bool,
}

/// First line of a label dataset file.
pub const LABEL_FILE_MAGIC: &str = "# sagin-labels v1 (units: s, bit/s, s)";

impl LabelTable {
    pub fn rows(&self) -> impl Iterator<Item = LabelRow> + '_ {
        self.entries.iter().map(move |(b, e)| LabelRow {
            t: self.t,
            b_id: b.clone(),
            dst_id: self.dst.clone(),
            eps_c: self.eps.eps_c_bps,
            eps_l: self.eps.eps_l_s,
            d_star: e.d_star_s,
            c_star: e.c_star_bps,
            l_star: e.l_star_s,
            feasible: e.feasible,
        })
    }
}

/// Writes the versioned label CSV: a magic comment line, then a header row.
pub fn write_label_rows<W: Write>(rows: impl IntoIterator<Item = LabelRow>, mut out: W) -> Result<()> {
    writeln!(out, "{LABEL_FILE_MAGIC}")?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_label_rows<R: BufRead>(mut input: R) -> Result<Vec<LabelRow>> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    if first.trim_end() != LABEL_FILE_MAGIC {
        return Err(Error::Format(format!("not a v1 label file (first line `{}`)", first.trim_end())));
    }
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for r in rdr.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPos;
    use crate::graph::{LayerMask, NodeState};
    use crate::mobility::{Kinematics, NodeKind};

    pub(crate) fn node(id: &str, kind: NodeKind, q: f64) -> NodeState {
        NodeState {
            id: id.into(),
            kind,
            kin: Kinematics {
                pos: GeoPos::new(0.0, 0.0, 0.0).unwrap(),
                speed_kmh: 0.0,
                heading_deg: 0.0,
            },
            queue_delay_s: q,
        }
    }

    fn m(d: f64, c: f64, l: f64) -> LinkMetrics {
        LinkMetrics {
            delay_s: d,
            throughput_bps: c,
            lifetime_s: l,
        }
    }

    fn both(a: &str, b: &str, lm: LinkMetrics) -> [(String, String, LinkMetrics); 2] {
        [(a.into(), b.into(), lm), (b.into(), a.into(), lm)]
    }

    fn complete4() -> Snapshot {
        let nodes = ["a", "b", "c", "d"].iter().map(|i| node(i, NodeKind::Airplane, 0.01)).collect();
        let mut edges = Vec::new();
        for (i, x) in ["a", "b", "c", "d"].iter().enumerate() {
            for y in ["a", "b", "c", "d"].iter().skip(i + 1) {
                edges.extend(both(x, y, m(0.001, 50e6, 600.0)));
            }
        }
        Snapshot::from_parts(0.0, LayerMask::ALL, nodes, edges).unwrap()
    }

    #[test]
    fn dominance_cases() {
        let a = MetricTriple {
            delay_s: 1.0,
            throughput_bps: 2.0,
            lifetime_s: 3.0,
        };
        assert!(!dominates(&a, &a));
        let worse = MetricTriple {
            delay_s: 2.0,
            throughput_bps: 1.0,
            lifetime_s: 2.0,
        };
        assert!(dominates(&a, &worse));
        let mixed = MetricTriple {
            delay_s: 2.0,
            throughput_bps: 3.0,
            lifetime_s: 3.0,
        };
        assert!(!dominates(&a, &mixed) && !dominates(&mixed, &a));
    }

    #[test]
    fn trivial_paths() {
        let s = complete4();
        let p = min_delay_path(&s, "a", "a").unwrap().unwrap();
        assert_eq!(p.nodes, vec!["a"]);
        assert_eq!(p.delay_s, 0.0);
        let p = min_delay_path(&s, "a", "d").unwrap().unwrap();
        assert_eq!(p.nodes, vec!["a", "d"]);
        assert_eq!(p.delay_s, 0.001 + 0.01);
    }

    #[test]
    fn complete_graph_has_five_simple_paths() {
        let s = complete4();
        let paths = brute_force_paths(&s, "a", "d", 12).unwrap();
        assert_eq!(paths.len(), 5);
        for p in &paths {
            let again = RoutePath::from_ids(&s, &p.nodes).unwrap();
            assert_eq!(&again, p);
        }
        assert!(matches!(brute_force_paths(&s, "a", "d", 3), Err(Error::Refused(_))));
    }

    #[test]
    fn disconnected_pair() {
        let nodes = vec![node("a", NodeKind::Airplane, 0.0), node("b", NodeKind::Airplane, 0.0)];
        let s = Snapshot::from_parts(0.0, LayerMask::ALL, nodes, vec![]).unwrap();
        assert!(brute_force_paths(&s, "a", "b", 12).unwrap().is_empty());
        assert!(min_delay_path(&s, "a", "b").unwrap().is_none());
        assert!(pareto_front(&s, "a", "b", &EpsGrid::default_sweep()).unwrap().is_empty());
    }

    #[test]
    fn ships_do_not_relay() {
        let nodes = vec![
            node("a", NodeKind::Ship, 0.0),
            node("s", NodeKind::Ship, 0.0),
            node("x", NodeKind::Airplane, 0.0),
            node("z", NodeKind::GroundStation, 0.0),
        ];
        let mut edges = Vec::new();
        edges.extend(both("a", "s", m(0.001, 1e7, 100.0)));
        edges.extend(both("s", "z", m(0.001, 1e7, 100.0)));
        edges.extend(both("a", "x", m(0.005, 1e7, 100.0)));
        edges.extend(both("x", "z", m(0.005, 1e7, 100.0)));
        let s = Snapshot::from_parts(0.0, LayerMask::ALL, nodes, edges).unwrap();
        let p = min_delay_path(&s, "a", "z").unwrap().unwrap();
        assert_eq!(p.nodes, vec!["a", "x", "z"]);
        assert_eq!(brute_force_paths(&s, "a", "z", 12).unwrap().len(), 1);
        let t = label_table(&s, "z", &EpsConstraint::NONE).unwrap();
        assert!(t.get("s").is_none() && t.get("a").is_none());
    }

    #[test]
    fn eps_pruning_is_strict() {
        let nodes = vec![node("a", NodeKind::Airplane, 0.0), node("b", NodeKind::Airplane, 0.0)];
        let edges = both("a", "b", m(0.001, 10e6, 300.0)).to_vec();
        let s = Snapshot::from_parts(0.0, LayerMask::ALL, nodes, edges).unwrap();
        let eq = EpsConstraint::new(10e6, 0.0).unwrap();
        assert!(constrained_min_delay(&s, "a", "b", &eq).unwrap().is_none());
        let below = EpsConstraint::new(9.99e6, 299.0).unwrap();
        assert!(constrained_min_delay(&s, "a", "b", &below).unwrap().is_some());
        assert!(constrained_min_delay(&s, "a", "b", &EpsConstraint::new(20e6, 0.0).unwrap()).unwrap().is_none());
    }

    #[test]
    fn label_for_adjacent_and_destination() {
        let nodes = vec![
            node("b", NodeKind::Airplane, 0.01),
            node("c", NodeKind::Airplane, 0.01),
            node("z", NodeKind::GroundStation, 0.02),
        ];
        let mut edges = Vec::new();
        edges.extend(both("b", "z", m(0.002, 40e6, 900.0)));
        edges.extend(both("b", "c", m(0.001, 90e6, 2000.0)));
        edges.extend(both("c", "z", m(0.001, 90e6, 2000.0)));
        let s = Snapshot::from_parts(0.0, LayerMask::ALL, nodes, edges).unwrap();
        let t = label_table(&s, "z", &EpsConstraint::NONE).unwrap();
        let b = t.get("b").unwrap();
        assert!(b.feasible);
        assert_eq!(b.d_star_s, 0.002 + 0.02);
        let z = t.get("z").unwrap();
        assert_eq!((z.d_star_s, z.c_star_bps, z.l_star_s), (0.0, CAP_C_BPS, CAP_L_S));
        // with a throughput floor of 50 Mbps the direct link is pruned
        let t = label_table(&s, "z", &EpsConstraint::new(50e6, 0.0).unwrap()).unwrap();
        let b = t.get("b").unwrap();
        assert!(b.feasible);
        assert_eq!(b.c_star_bps, 90e6);
        // unreachable thresholds fall back to the least-violating path
        let t = label_table(&s, "z", &EpsConstraint::new(100e6, 0.0).unwrap()).unwrap();
        let b = t.get("b").unwrap();
        assert!(!b.feasible);
        assert_eq!(b.c_star_bps, 90e6);
    }

    #[test]
    fn label_file_round_trip() {
        let s = complete4();
        let t = label_table(&s, "d", &EpsConstraint::from_mbps_min(5.0, 5.0).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_label_rows(t.rows(), &mut buf).unwrap();
        let back = read_label_rows(&buf[..]).unwrap();
        assert_eq!(back, t.rows().collect::<Vec<_>>());
        let bad = b"t,b_id\n1,2\n";
        assert!(matches!(read_label_rows(&bad[..]), Err(Error::Format(_))));
    }

    #[test]
    fn single_path_front_is_one_point() {
        let nodes = vec![node("a", NodeKind::Ship, 0.0), node("b", NodeKind::Airplane, 0.01), node("z", NodeKind::GroundStation, 0.01)];
        let mut edges = Vec::new();
        edges.extend(both("a", "b", m(0.001, 60e6, 3000.0)));
        edges.extend(both("b", "z", m(0.001, 30e6, 1000.0)));
        let s = Snapshot::from_parts(0.0, LayerMask::ALL, nodes, edges).unwrap();
        let front = pareto_front(&s, "a", "z", &EpsGrid::default_sweep()).unwrap();
        assert_eq!(front.len(), 1);
        assert_eq!(exact_pareto_front(&s, "a", "z").unwrap(), front);
        let none = EpsGrid {
            points: vec![EpsConstraint::new(40e6, 0.0).unwrap()],
        };
        assert!(pareto_front(&s, "a", "z", &none).unwrap().is_empty());
        assert!(pareto_front(&s, "a", "z", &EpsGrid { points: vec![] }).is_err());
    }

    #[test]
    fn default_sweep_size() {
        let g = EpsGrid::default_sweep();
        assert_eq!(g.points.len(), 15 * 7);
        assert_eq!(g.points.last().unwrap().eps_c_bps, 70e6);
        assert_eq!(g.points.last().unwrap().eps_l_s, 1800.0);
    }
}
