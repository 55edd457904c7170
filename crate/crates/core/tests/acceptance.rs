//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a subset,
//! e.g. `cargo test -p sagin-core --test acceptance -- 4 5`.

mod common;

use std::collections::HashSet;
use std::time::Instant;

use chrono::{TimeZone, Utc};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use sagin_core::distributed::{rollout, ExactEstimator, Mode, RolloutParams, DEFAULT_LAMBDA};
use sagin_core::geo::{self, GeoPos};
use sagin_core::graph::{build_snapshot, LayerMask, NodeState, QueuingModel, Snapshot, TransitPolicy};
use sagin_core::harness::{self, pairwise_non_dominated, ExperimentConfig, Window};
use sagin_core::linkmodel::{LinkConfig, LinkMetrics, LinkModel};
use sagin_core::mobility::{
    self, generate_scenario, propagate_constellation, static_trace, ConstellationParams, Kinematics, NodeKind, NodeTrace,
    Scenario, ScenarioGenParams, TraceRecord,
};
use sagin_core::neural::{self, loss_mse_masked, DatasetParams, Mlp, TrainConfig, Widths};
use sagin_core::routing::{
    brute_force_paths, constrained_min_delay, exact_pareto_front, EpsConstraint, MetricTriple, RoutePath,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- 1 and 2

fn horizon_fixtures() -> Verdict {
    let a2g = geo::horizon_range(12.0, 0.0);
    let a2a = geo::horizon_range(12.0, 12.0);
    verdict(
        (389.0..=393.0).contains(&a2g) && (778.0..=786.0).contains(&a2a),
        format!("A2G {a2g:.2} km in [389, 393], A2A {a2a:.2} km in [778, 786]"),
    )
}

fn orbital_speed() -> Verdict {
    let v = mobility::orbital_speed_kms(781.0);
    verdict((7.40..=7.55).contains(&v), format!("{v:.4} km/s in [7.40, 7.55]"))
}

// ---------------------------------------------------------------- 3

/// Earliest instant in `[t0, t1]` (1 s resolution) at which the link exists.
fn first_contact(lm: &LinkModel, a: &str, b: &str, t0: f64, t1: f64) -> Option<f64> {
    let mut t = t0;
    while t <= t1 {
        if lm.link_metrics(a, b, t).unwrap().is_some() {
            return Some(t);
        }
        t += 1.0;
    }
    None
}

fn a2g_overflight() -> f64 {
    // airplane at 12 km and 900 km/h flying due north straight over a ship
    let start = GeoPos::new(40.0, -30.0, 12.0).unwrap();
    let speed_kms = 0.25;
    let duration = 4800.0;
    let records = (0..=(duration / 10.0) as usize)
        .map(|k| {
            let t = k as f64 * 10.0;
            TraceRecord { t, pos: geo::destination(&start, 0.0, speed_kms * t), speed_kmh: 900.0, heading_deg: 0.0 }
        })
        .collect();
    let ac = NodeTrace { id: "ac".into(), kind: NodeKind::Airplane, records };
    let mid = geo::destination(&start, 0.0, speed_kms * duration / 2.0);
    let ship = static_trace("ship", NodeKind::Ship, GeoPos::new(mid.lat_deg, mid.lon_deg, 0.0).unwrap(), duration);
    let sc = Scenario::new(Utc.with_ymd_and_hms(2018, 6, 29, 0, 0, 0).unwrap(), duration, vec![ac, ship], "ship").unwrap();
    let lm = LinkModel::new(&sc, LinkConfig::default()).unwrap();
    let t0 = first_contact(&lm, "ac", "ship", 0.0, duration).expect("airplane never reaches the ship");
    lm.link_lifetime("ac", "ship", t0, 10.0, 7200.0).unwrap()
}

fn s2g_pass() -> f64 {
    // a ship placed on the ground track of one satellite, at its sub-point at tc
    let duration = 7200.0;
    let params = ConstellationParams::default();
    let mut sats = propagate_constellation(&params, duration, 10.0).unwrap();
    sats.retain(|s| s.id == mobility::satellite_id(0, 0));
    let tc = 3600.0;
    let sub = sats[0].position_at(tc).unwrap().pos.sub_point();
    let ship = static_trace("ship", NodeKind::Ship, sub, duration);
    let sat_id = sats[0].id.clone();
    sats.push(ship);
    let sc = Scenario::new(Utc.with_ymd_and_hms(2018, 6, 29, 0, 0, 0).unwrap(), duration, sats, "ship").unwrap();
    let lm = LinkModel::new(&sc, LinkConfig::default()).unwrap();
    let t0 = first_contact(&lm, &sat_id, "ship", tc - 1800.0, tc).expect("satellite never reaches the ship");
    lm.link_lifetime(&sat_id, "ship", t0, 10.0, 3600.0).unwrap()
}

fn lifetime_fixtures() -> Verdict {
    let a2g = a2g_overflight();
    let s2g = s2g_pass();
    let ok_a = (a2g - 3128.0).abs() <= 0.1 * 3128.0;
    let ok_s = (s2g - 617.0).abs() <= 0.1 * 617.0;
    verdict(
        ok_a && ok_s,
        format!(
            "A2G {a2g:.0} s vs 3128 s ±10% [{}], S2G {s2g:.0} s vs 617 s ±10% [{}]",
            if ok_a { "ok" } else { "out" },
            if ok_s { "ok" } else { "out" }
        ),
    )
}

// ---------------------------------------------------------------- 4 and 5

/// Random snapshot with link scales like the generated scenarios: a few ms
/// of propagation plus transmission of an 8192-bit packet, 5-15 ms queues,
/// 20-100 Mbps links and lifetimes up to an hour.
fn realistic_snapshot<R: Rng>(rng: &mut R, n: usize) -> Snapshot {
    let nodes: Vec<NodeState> = (0..n)
        .map(|i| NodeState {
            id: format!("n{i}"),
            kind: common::KINDS[rng.gen_range(0..4)],
            kin: Kinematics { pos: GeoPos::new(0.0, 0.0, 0.0).unwrap(), speed_kmh: 0.0, heading_deg: 0.0 },
            queue_delay_s: rng.gen_range(0.005..0.015),
        })
        .collect();
    let mut pairs = std::collections::BTreeSet::new();
    for i in 1..n {
        pairs.insert((rng.gen_range(0..i), i));
    }
    for _ in 0..rng.gen_range(0..=2 * n) {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            pairs.insert((a.min(b), a.max(b)));
        }
    }
    let mut edges = Vec::new();
    for (a, b) in pairs {
        let c = rng.gen_range(20e6..100e6);
        let m = LinkMetrics { delay_s: rng.gen_range(0.0003..0.010) + 8192.0 / c, throughput_bps: c, lifetime_s: rng.gen_range(0.0..3600.0) };
        edges.push((format!("n{a}"), format!("n{b}"), m));
        edges.push((format!("n{b}"), format!("n{a}"), m));
    }
    Snapshot::from_parts(0.0, LayerMask::ALL, nodes, edges)
        .unwrap()
        .with_transit(TransitPolicy { ground_stations_relay: rng.gen() })
}

fn grid_eps<R: Rng>(rng: &mut R) -> EpsConstraint {
    EpsConstraint::from_mbps_min(5.0 * rng.gen_range(0..=14) as f64, 5.0 * rng.gen_range(0..=6) as f64).unwrap()
}

fn oracle_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut checked, mut feasible, mut mismatches) = (0usize, 0usize, 0usize);
    let mut fronts_ok = true;
    while checked < 2000 {
        let n = rng.gen_range(2..=10);
        // half with coarse dyadic weights (many exact ties), half continuous
        let (snap, eps) = if checked % 2 == 0 {
            let s = common::random_snapshot(&mut rng, n);
            (s, EpsConstraint::new(rng.gen_range(0..8) as f64 * 5e6, rng.gen_range(0..8) as f64 * 300.0).unwrap())
        } else {
            (realistic_snapshot(&mut rng, n), grid_eps(&mut rng))
        };
        let src = format!("n{}", rng.gen_range(0..n));
        let dst = format!("n{}", rng.gen_range(0..n));
        if src == dst {
            continue;
        }
        let all = brute_force_paths(&snap, &src, &dst, 10).unwrap();
        if all.is_empty() {
            continue;
        }
        checked += 1;
        let want = common::best_of(all.iter().filter(|p| eps.satisfied_by(&p.triple())));
        let got = constrained_min_delay(&snap, &src, &dst, &eps).unwrap();
        feasible += usize::from(want.is_some());
        if got.as_ref() != want {
            mismatches += 1;
        }
        let front: Vec<MetricTriple> = exact_pareto_front(&snap, &src, &dst).unwrap().iter().map(RoutePath::triple).collect();
        fronts_ok &= pairwise_non_dominated(&front);
    }
    verdict(
        mismatches == 0 && fronts_ok,
        format!("{checked} connected instances ({feasible} feasible), {mismatches} mismatches vs enumeration"),
    )
}

/// Unique minimum over `paths` by delay, or `None` if empty or tied.
fn unique_best<'a>(paths: impl Iterator<Item = &'a RoutePath>) -> Option<&'a RoutePath> {
    let v: Vec<&RoutePath> = paths.collect();
    let best = common::best_of(v.iter().copied())?;
    (v.iter().filter(|p| p.delay_s == best.delay_s).count() == 1).then_some(best)
}

/// Connected induced subgraph of `snap` on at most `n` nodes, grown from a
/// random node in random order.
fn random_subgraph<R: Rng>(rng: &mut R, snap: &Snapshot, n: usize) -> Snapshot {
    let mut chosen = vec![rng.gen_range(0..snap.len())];
    let mut frontier: Vec<usize> = Vec::new();
    while chosen.len() < n {
        let last = *chosen.last().unwrap();
        frontier.extend(snap.out_edges(last).iter().map(|e| e.to).filter(|v| !chosen.contains(v)));
        frontier.retain(|v| !chosen.contains(v));
        if frontier.is_empty() {
            break;
        }
        chosen.push(frontier.swap_remove(rng.gen_range(0..frontier.len())));
    }
    let nodes = chosen.iter().map(|&i| snap.node(i).clone()).collect();
    let edges = snap
        .edges()
        .filter(|(a, b, _)| chosen.contains(a) && chosen.contains(b))
        .map(|(a, b, m)| (snap.node(a).id.clone(), snap.node(b).id.clone(), *m))
        .collect();
    Snapshot::from_parts(snap.t, snap.layers, nodes, edges).unwrap()
}

fn substructure() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sc = generate_scenario(&ScenarioGenParams::default(), 5).unwrap();
    let snaps: Vec<Snapshot> = (0..20)
        .map(|k| {
            let t = rng.gen_range(12.0 * 3600.0..18.0 * 3600.0);
            build_snapshot(&sc, t, LayerMask::ALL, &QueuingModel::testing(k), &LinkConfig::default()).unwrap()
        })
        .collect();
    let (mut so_unique, mut so_exact) = (0usize, 0usize);
    let (mut mo_unique, mut mo_exact, mut mo_exact_10) = (0usize, 0usize, 0usize);
    let (mut feasible, mut delivered_feasible) = (0usize, 0usize);
    let mut instances = 0;
    while instances < 3000 {
        let n = rng.gen_range(2..=10);
        let snap = random_subgraph(&mut rng, &snaps[instances % snaps.len()], n);
        let n = snap.len();
        let eps = grid_eps(&mut rng);
        let src = snap.node(rng.gen_range(0..n)).id.clone();
        let dst = snap.node(rng.gen_range(0..n)).id.clone();
        if src == dst {
            continue;
        }
        let all = brute_force_paths(&snap, &src, &dst, 10).unwrap();
        if all.is_empty() {
            continue;
        }
        instances += 1;
        let est = ExactEstimator::new(&snap, &dst, &[eps]).unwrap();
        if let Some(best) = unique_best(all.iter()) {
            so_unique += 1;
            let p = RolloutParams { mode: Mode::So, eps: EpsConstraint::NONE, ..Default::default() };
            so_exact += usize::from(rollout(&snap, &src, &dst, &est, &p).unwrap().path() == Some(best));
        }
        let p = RolloutParams { mode: Mode::Mo, eps, lambda: DEFAULT_LAMBDA, ..Default::default() };
        let res = rollout(&snap, &src, &dst, &est, &p).unwrap();
        // a penalty weight large enough to act as an infinite one
        let p_inf = RolloutParams { lambda: 1e12, ..p };
        let res_inf = rollout(&snap, &src, &dst, &est, &p_inf).unwrap();
        let feas: Vec<&RoutePath> = all.iter().filter(|p| eps.satisfied_by(&p.triple())).collect();
        if !feas.is_empty() {
            feasible += 1;
            delivered_feasible += usize::from(res.path().is_some_and(|p| eps.satisfied_by(&p.triple())));
            if let Some(best) = unique_best(feas.into_iter()) {
                mo_unique += 1;
                mo_exact += usize::from(res_inf.path() == Some(best));
                mo_exact_10 += usize::from(res.path() == Some(best));
            }
        }
    }
    let ratio = delivered_feasible as f64 / feasible as f64;
    verdict(
        so_exact == so_unique && mo_exact == mo_unique && ratio >= 0.99,
        format!(
            "{instances} instances: unique optimum reproduced {so_exact}/{so_unique} (delay only), {mo_exact}/{mo_unique} (constrained, unbounded penalty; {mo_exact_10} at lambda 10); feasible delivery at lambda 10 {delivered_feasible}/{feasible} = {:.2}% (need 99%)",
            100.0 * ratio
        ),
    )
}

// ---------------------------------------------------------------- 6

fn relu_pattern(c: &neural::ForwardCache) -> Vec<bool> {
    c.trunk.iter().chain(&c.branches).flat_map(|l| l.pre.iter().map(|&v| v > 0.0).collect::<Vec<_>>()).collect()
}

fn gradient_check() -> Verdict {
    let widths = Widths { input: 4, trunk: vec![8, 8], branch: 4, outputs: 3 };
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-4;
    let (mut worst, mut skipped, mut total) = (0.0f64, 0usize, 0usize);
    for batch in 0..100u64 {
        let mut mlp = Mlp::new(widths.clone(), batch).unwrap();
        for g in mlp.params.trunk_gamma.iter_mut().chain(mlp.params.branch_gamma.iter_mut()) {
            g.mapv_inplace(|_| rng.gen_range(0.5..1.5));
        }
        for b in mlp.params.trunk_beta.iter_mut().chain(mlp.params.branch_beta.iter_mut()) {
            b.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        }
        mlp.params.out_b.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
        let rows = rng.gen_range(4..=32);
        let x = Array2::from_shape_fn((rows, 4), |_| rng.gen_range(-2.0..2.0));
        let y = Array2::from_shape_fn((rows, 3), |_| rng.gen_range(-2.0..2.0));
        let mask = [true; 3];
        let (pred, cache) = mlp.forward_train(&x).unwrap();
        let (_, d_out) = loss_mse_masked(&pred, &y, &mask).unwrap();
        let analytic: Vec<f64> = mlp.backward(&d_out, &cache).slices().concat();
        let loss_at = |m: &Mlp| {
            let (p, c) = m.forward_train(&x).unwrap();
            (loss_mse_masked(&p, &y, &mask).unwrap().0, relu_pattern(&c))
        };
        let mut probe = mlp.clone();
        let lens: Vec<usize> = probe.params.slices().iter().map(|s| s.len()).collect();
        let mut k = 0;
        for (si, len) in lens.into_iter().enumerate() {
            for j in 0..len {
                let orig = probe.params.slices()[si][j];
                probe.params.slices_mut()[si][j] = orig + h;
                let (lp, pp) = loss_at(&probe);
                probe.params.slices_mut()[si][j] = orig - h;
                let (lm, pm) = loss_at(&probe);
                probe.params.slices_mut()[si][j] = orig;
                total += 1;
                if pp != pm {
                    // a ReLU switches inside [-h, h]: the difference quotient is not a derivative
                    skipped += 1;
                } else {
                    let num = (lp - lm) / (2.0 * h);
                    let rel = (analytic[k] - num).abs() / (analytic[k].abs() + num.abs()).max(1e-6);
                    worst = worst.max(rel);
                }
                k += 1;
            }
        }
    }
    verdict(
        worst < 1e-4 && skipped * 100 <= total,
        format!("100 batches, {total} parameter checks, max relative error {worst:.2e} (need < 1e-4), {skipped} skipped at ReLU kinks"),
    )
}

// ---------------------------------------------------------------- 7

const FIXTURE_SAMPLES: usize = 10_000;
const FIXTURE_SHA256: &str = "01925ab6f479884928bba4f5d2f21da4787701131a0a387b7d41c728e4660620";

fn training_fixture() -> neural::Dataset {
    let base = generate_scenario(&ScenarioGenParams::default(), 7).unwrap();
    let traces = mobility::time_shift_augment(&base.traces, 1800.0, 8).unwrap();
    let sc = Scenario::new(base.epoch, base.duration_s, traces, base.destination_id.clone()).unwrap();
    let params = DatasetParams { window_start_s: 12.0 * 3600.0, window_end_s: 13.0 * 3600.0, seed: 9, ..Default::default() };
    let mut data = neural::build_dataset(&[sc], &params).unwrap();
    let mut idx: Vec<usize> = (0..data.len()).collect();
    rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut ChaCha8Rng::seed_from_u64(10));
    idx.truncate(FIXTURE_SAMPLES);
    idx.sort_unstable();
    data.samples = idx.into_iter().map(|i| data.samples[i].clone()).collect();
    data
}

fn training_sanity() -> Verdict {
    let data = training_fixture();
    let mut csv = Vec::new();
    neural::write_samples_csv(&data, &mut csv).unwrap();
    let digest: String = Sha256::digest(&csv).iter().map(|b| format!("{b:02x}")).collect();
    if data.len() != FIXTURE_SAMPLES || digest != FIXTURE_SHA256 {
        return verdict(false, format!("fixture drifted: {} samples, sha256 {digest}", data.len()));
    }
    let cfg = TrainConfig { epochs: 200, val_fraction: 0.0, seed: 11, ..Default::default() };
    let (_, report) =
        neural::train(&data, Widths::default(), &[true; 3], &sagin_core::routing::EpsGrid::default_sweep(), &cfg).unwrap();
    let blocks: Vec<f64> = report.train_loss.chunks(20).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let smooth = blocks.windows(2).all(|w| w[1] <= w[0]);
    let mse = report.final_train_mse;
    verdict(
        mse < 0.05 && smooth,
        format!(
            "10k fixture, 200 epochs: standardized MSE {mse:.4} (need < 0.05); 20-epoch mean loss {} ({:.3} -> {:.3})",
            if smooth { "non-increasing" } else { "NOT non-increasing" },
            blocks[0],
            blocks[blocks.len() - 1]
        ),
    )
}

// ---------------------------------------------------------------- 8, 9, 10

fn pipeline_config(dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { output_dir: dir.to_path_buf(), ..Default::default() }.with_seed(20);
    cfg.train_window = Window { start_s: 12.0 * 3600.0, end_s: 18.0 * 3600.0, step_s: 300.0 };
    cfg.eval.window = Window { start_s: 12.0 * 3600.0, end_s: 18.0 * 3600.0, step_s: 1800.0 };
    cfg.eval.pairs_per_timestamp = 2;
    cfg.eval.modes = vec![Mode::Mo];
    cfg
}

struct Pipeline {
    report: harness::EvalReport,
    minutes: f64,
}

fn run_pipeline() -> Pipeline {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = pipeline_config(dir.path());
    harness::cmd_gen_scenario(&cfg, false).unwrap();
    harness::cmd_build_labels(&cfg).unwrap();
    harness::cmd_train(&cfg).unwrap();
    let report = harness::cmd_evaluate(&cfg).unwrap();
    Pipeline { report, minutes: t0.elapsed().as_secs_f64() / 60.0 }
}

fn near_pareto(p: &Pipeline) -> Verdict {
    let s = &p.report.summary;
    let m = s.modes.iter().find(|m| m.mode == Mode::Mo).unwrap();
    verdict(
        s.pairs >= 20 && m.mean_hv_ratio >= 0.70 && m.frac_within_0_1 >= 0.80,
        format!(
            "{} SD pairs: hypervolume ratio {:.1}% (need 70%), {:.1}% of {} delivered routes within 0.1 (need 80%), delivery {:.1}%, {} constraint misses; pipeline {:.1} min",
            s.pairs,
            100.0 * m.mean_hv_ratio,
            100.0 * m.frac_within_0_1,
            m.delivered,
            100.0 * m.delivery_ratio,
            m.constraint_misses,
            p.minutes
        ),
    )
}

fn layer_monotonicity(p: &Pipeline) -> Verdict {
    let rows = &p.report.coverage;
    let mut bad = 0;
    let times: Vec<f64> = rows.iter().map(|r| r.t).collect::<Vec<_>>();
    let mut seen = HashSet::new();
    for t in times.into_iter().filter(|t| seen.insert(t.to_bits())) {
        let get = |m: LayerMask| rows.iter().find(|r| r.t == t && r.layers == m.name()).unwrap().covered;
        if get(LayerMask::ALL) < get(LayerMask::AANET).max(get(LayerMask::LEO)) {
            bad += 1;
        }
    }
    let s = &p.report.summary;
    verdict(
        bad == 0 && s.coverage_monotonicity_violations == 0 && s.delay_monotonicity_violations == 0,
        format!(
            "{} timestamps: {bad} coverage violations, {} min-delay violations",
            s.timestamps, s.delay_monotonicity_violations
        ),
    )
}

fn fronts_non_dominated(p: &Pipeline) -> Verdict {
    let pairs = &p.report.pairs;
    let ok = pairs.iter().filter(|q| pairwise_non_dominated(&q.front)).count();
    let points: usize = pairs.iter().map(|q| q.front.len()).sum();
    verdict(
        ok == pairs.len() && p.report.summary.dominated_dl_routes == 0,
        format!(
            "{ok}/{} fronts pairwise non-dominated ({points} points); {} learned routes not weakly dominated by their front",
            pairs.len(),
            p.report.summary.dominated_dl_routes
        ),
    )
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |k: u32| wanted.is_empty() || wanted.contains(&k);
    let mut results: Vec<(u32, &str, Verdict, f64)> = Vec::new();
    let go = |k: u32, name: &'static str, f: &mut dyn FnMut() -> Verdict, results: &mut Vec<_>| {
        if run(k) {
            let t0 = Instant::now();
            let v = f();
            let secs = t0.elapsed().as_secs_f64();
            println!("criterion {k:>2} {} {name}: {} ({secs:.1} s)", if v.pass { "PASS" } else { "FAIL" }, v.detail);
            results.push((k, name, v, secs));
        }
    };
    go(1, "horizon ranges", &mut horizon_fixtures, &mut results);
    go(2, "orbital speed", &mut orbital_speed, &mut results);
    go(3, "link lifetimes", &mut lifetime_fixtures, &mut results);
    go(4, "oracle equivalence", &mut oracle_equivalence, &mut results);
    go(5, "substructure with exact labels", &mut substructure, &mut results);
    go(6, "gradient check", &mut gradient_check, &mut results);
    go(7, "training sanity", &mut training_sanity, &mut results);
    if run(8) || run(9) || run(10) {
        let p = run_pipeline();
        go(8, "near-Pareto learned routes", &mut || near_pareto(&p), &mut results);
        go(9, "layer monotonicity", &mut || layer_monotonicity(&p), &mut results);
        go(10, "non-dominated fronts", &mut || fronts_non_dominated(&p), &mut results);
    }
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!("acceptance: {} passed, {} failed {:?}", results.len() - failed.len(), failed.len(), failed);
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
