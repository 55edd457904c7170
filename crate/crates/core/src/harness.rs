//! Experiment pipeline: scenario generation, label building, training,
//! evaluation against exact fronts, and metric export.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributed::{rollout, ModelEstimator, Mode, RolloutParams, RolloutResult, DEFAULT_HOP_LIMIT, DEFAULT_LAMBDA};
use crate::error::{Error, Result};
use crate::graph::{build_snapshot, LayerMask, QueuingModel, Snapshot, TransitPolicy};
use crate::linkmodel::LinkConfig;
use crate::mobility::{generate_scenario, load_traces, save_traces, time_shift_augment, NodeKind, Scenario, ScenarioGenParams};
use crate::neural::{build_dataset, read_samples_csv, train, write_samples_csv, DatasetParams, TrainConfig, TrainReport, TrainedModel, Widths};
use crate::routing::{best_bottlenecks, constrained_min_delay, dominates, exact_pareto_front, min_delay_path, pareto_front, EpsConstraint, EpsGrid, MetricTriple, RoutePath};

pub const SCHEMA_VERSION: u32 = 1;

/// Where the base traces come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioSource {
    Generate { params: ScenarioGenParams },
    File { path: PathBuf },
}

impl Default for ScenarioSource {
    fn default() -> Self {
        ScenarioSource::Generate {
            params: ScenarioGenParams::default(),
        }
    }
}

/// Named seeds; every random choice in the pipeline draws from one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub scenario: u64,
    pub train_shift: u64,
    pub test_shift: u64,
    pub dataset: u64,
    pub train: u64,
    pub eval: u64,
}

impl Seeds {
    pub fn from_base(base: u64) -> Self {
        Self {
            scenario: base,
            train_shift: base.wrapping_add(1),
            test_shift: base.wrapping_add(2),
            dataset: base.wrapping_add(3),
            train: base.wrapping_add(4),
            eval: base.wrapping_add(5),
        }
    }
}

impl Default for Seeds {
    fn default() -> Self {
        Self::from_base(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start_s: f64,
    pub end_s: f64,
    pub step_s: f64,
}

impl Window {
    pub fn timestamps(&self) -> Result<Vec<f64>> {
        if !(self.step_s > 0.0) || !(self.end_s >= self.start_s) {
            return Err(Error::Config(format!("invalid window {self:?}")));
        }
        let n = ((self.end_s - self.start_s) / self.step_s + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| self.start_s + k as f64 * self.step_s).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub c_mbps: Vec<f64>,
    pub l_min: Vec<f64>,
}

impl GridSpec {
    pub fn grid(&self) -> Result<EpsGrid> {
        EpsGrid::product(&self.c_mbps, &self.l_min).map_err(|e| Error::Config(format!("eps grid: {e}")))
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            c_mbps: (0..=14).map(|k| 5.0 * k as f64).collect(),
            l_min: (0..=6).map(|k| 5.0 * k as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalParams {
    pub window: Window,
    pub pairs_per_timestamp: usize,
    pub eps_grid: GridSpec,
    pub modes: Vec<Mode>,
    pub queue_mean_s: f64,
    pub queue_std_s: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            window: Window {
                start_s: 12.0 * 3600.0,
                end_s: 18.0 * 3600.0,
                step_s: 1800.0,
            },
            pairs_per_timestamp: 2,
            eps_grid: GridSpec::default(),
            modes: vec![Mode::Mo],
            queue_mean_s: 0.010,
            queue_std_s: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub output_dir: PathBuf,
    pub scenario: ScenarioSource,
    pub seeds: Seeds,
    pub augmentation_sigma_s: f64,
    pub train_window: Window,
    pub eps_grid: GridSpec,
    pub eps_samples_per_snapshot: usize,
    /// Keep at most this many samples (seeded subset) for training.
    pub max_train_samples: Option<usize>,
    pub link: LinkConfig,
    pub transit: TransitPolicy,
    pub widths: Widths,
    pub train: TrainConfig,
    pub lambda: f64,
    pub hop_limit: usize,
    pub eval: EvalParams,
    pub model_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            output_dir: PathBuf::from("out"),
            scenario: ScenarioSource::default(),
            seeds: Seeds::default(),
            augmentation_sigma_s: 1800.0,
            train_window: Window {
                start_s: 12.0 * 3600.0,
                end_s: 18.0 * 3600.0,
                step_s: 60.0,
            },
            eps_grid: GridSpec::default(),
            eps_samples_per_snapshot: 4,
            max_train_samples: None,
            link: LinkConfig::default(),
            transit: TransitPolicy::default(),
            widths: Widths::default(),
            train: TrainConfig::default(),
            lambda: DEFAULT_LAMBDA,
            hop_limit: DEFAULT_HOP_LIMIT,
            eval: EvalParams::default(),
            model_path: None,
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates; every problem is a configuration error.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        // relative paths inside the file are relative to the file
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        if let ScenarioSource::File { path: p } = &mut cfg.scenario {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(m) = &mut cfg.model_path {
            if m.is_relative() {
                *m = base.join(&*m);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} unsupported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        self.eps_grid.grid()?;
        self.eval.eps_grid.grid()?;
        self.train_window.timestamps()?;
        self.eval.window.timestamps()?;
        self.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.link.profiles.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.eval_queuing().validate()?;
        if self.seeds.train_shift == self.seeds.test_shift {
            return bad("train and test augmentation seeds must differ".into());
        }
        if !(self.augmentation_sigma_s >= 0.0) {
            return bad("augmentation_sigma_s must be >= 0".into());
        }
        if self.eps_samples_per_snapshot == 0 || self.hop_limit == 0 || self.eval.modes.is_empty() {
            return bad("eps_samples_per_snapshot, hop_limit and eval.modes must be non-empty".into());
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be >= 0".into());
        }
        if let ScenarioSource::File { path } = &self.scenario {
            if !path.exists() {
                return bad(format!("scenario file {} does not exist", path.display()));
            }
        }
        Ok(())
    }

    /// Applies a `--seed` override to every named seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = Seeds::from_base(seed);
        self.train.seed = self.seeds.train;
        self
    }

    pub fn eval_queuing(&self) -> QueuingModel {
        QueuingModel::TruncGauss {
            mean_s: self.eval.queue_mean_s,
            std_s: self.eval.queue_std_s,
            seed: self.seeds.eval,
        }
    }

    pub fn train_scenario_path(&self) -> PathBuf {
        self.output_dir.join("scenario").join("train.csv")
    }

    pub fn test_scenario_path(&self) -> PathBuf {
        self.output_dir.join("scenario").join("test.csv")
    }

    pub fn samples_path(&self) -> PathBuf {
        self.output_dir.join("labels").join("samples.csv")
    }

    pub fn model_file(&self) -> PathBuf {
        self.model_path.clone().unwrap_or_else(|| self.output_dir.join("model").join("model.json"))
    }

    fn dataset_params(&self) -> Result<DatasetParams> {
        Ok(DatasetParams {
            window_start_s: self.train_window.start_s,
            window_end_s: self.train_window.end_s,
            snapshot_step_s: self.train_window.step_s,
            eps_samples: self.eps_samples_per_snapshot,
            eps_grid: self.eps_grid.grid()?,
            layers: LayerMask::ALL,
            link: self.link,
            seed: self.seeds.dataset,
        })
    }
}

fn ensure_parent(p: &Path) -> Result<()> {
    if let Some(d) = p.parent() {
        fs::create_dir_all(d)?;
    }
    Ok(())
}

fn refuse_existing(paths: &[&Path], force: bool) -> Result<()> {
    if force {
        return Ok(());
    }
    for p in paths {
        if p.exists() {
            return Err(Error::Refused(format!("{} exists (use --force to overwrite)", p.display())));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    pub nodes: usize,
    pub airplanes: usize,
    /// Consecutive 6-hour windows covering the scenario.
    pub windows: Vec<(f64, f64)>,
}

pub fn six_hour_windows(duration_s: f64) -> Vec<(f64, f64)> {
    let n = (duration_s / 21_600.0).ceil().max(1.0) as usize;
    (0..n)
        .map(|k| (k as f64 * 21_600.0, ((k + 1) as f64 * 21_600.0).min(duration_s)))
        .collect()
}

fn base_scenario(cfg: &ExperimentConfig) -> Result<Scenario> {
    match &cfg.scenario {
        ScenarioSource::Generate { params } => generate_scenario(params, cfg.seeds.scenario),
        ScenarioSource::File { path } => load_traces(path),
    }
}

/// Writes independently time-shifted train and test copies of the base traces.
pub fn cmd_gen_scenario(cfg: &ExperimentConfig, force: bool) -> Result<ScenarioSummary> {
    let (train_p, test_p) = (cfg.train_scenario_path(), cfg.test_scenario_path());
    refuse_existing(&[&train_p, &test_p], force)?;
    let base = base_scenario(cfg)?;
    let make = |seed| -> Result<Scenario> {
        let traces = time_shift_augment(&base.traces, cfg.augmentation_sigma_s, seed)?;
        Scenario::new(base.epoch, base.duration_s, traces, base.destination_id.clone())
    };
    let train_sc = make(cfg.seeds.train_shift)?;
    let test_sc = make(cfg.seeds.test_shift)?;
    ensure_parent(&train_p)?;
    save_traces(&train_sc, &train_p)?;
    save_traces(&test_sc, &test_p)?;
    let summary = ScenarioSummary {
        train_path: train_p,
        test_path: test_p,
        nodes: base.traces.len(),
        airplanes: base.traces.iter().filter(|t| t.kind == NodeKind::Airplane).count(),
        windows: six_hour_windows(base.duration_s),
    };
    fs::write(cfg.output_dir.join("scenario").join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub samples: usize,
    pub snapshots: usize,
    pub feasible_fraction: f64,
    pub path: PathBuf,
}

pub fn cmd_build_labels(cfg: &ExperimentConfig) -> Result<LabelSummary> {
    require(&cfg.train_scenario_path(), "train scenario", "gen-scenario")?;
    let sc = load_traces(&cfg.train_scenario_path())?;
    let params = cfg.dataset_params()?;
    let data = build_dataset(std::slice::from_ref(&sc), &params)?;
    let path = cfg.samples_path();
    ensure_parent(&path)?;
    write_samples_csv(&data, BufWriter::new(fs::File::create(&path)?))?;
    let feasible = data.samples.iter().filter(|s| s.feasible).count();
    let summary = LabelSummary {
        samples: data.len(),
        snapshots: params.timestamps()?.len(),
        feasible_fraction: feasible as f64 / data.len() as f64,
        path,
    };
    fs::write(
        cfg.output_dir.join("labels").join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainReport> {
    require(&cfg.samples_path(), "label file", "build-labels")?;
    let mut data = read_samples_csv(BufReader::new(fs::File::open(cfg.samples_path())?))?;
    if let Some(max) = cfg.max_train_samples {
        if data.len() > max {
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seeds.dataset));
            idx.truncate(max);
            idx.sort_unstable();
            data.samples = idx.into_iter().map(|i| data.samples[i].clone()).collect();
        }
    }
    let (model, report) = train(&data, cfg.widths.clone(), &[true; 3], &cfg.eps_grid.grid()?, &cfg.train)?;
    let path = cfg.model_file();
    ensure_parent(&path)?;
    model.save(&path)?;
    let mut w = BufWriter::new(fs::File::create(path.with_file_name("loss_curve.csv"))?);
    writeln!(w, "epoch,train_loss,val_loss")?;
    for (e, l) in report.train_loss.iter().enumerate() {
        let v = report.val_loss.get(e).map(|v| v.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{}", e + 1, l, v)?;
    }
    w.flush()?;
    Ok(report)
}

fn load_model(cfg: &ExperimentConfig) -> Result<TrainedModel> {
    let p = cfg.model_file();
    require(&p, "model file", "train")?;
    TrainedModel::load(&p)
}

fn require(p: &Path, what: &str, producer: &str) -> Result<()> {
    if p.exists() {
        Ok(())
    } else {
        Err(Error::Missing(format!("{what} {} (run `{producer}` first)", p.display())))
    }
}

fn test_traces(cfg: &ExperimentConfig) -> Result<Scenario> {
    let p = cfg.test_scenario_path();
    require(&p, "test scenario", "gen-scenario")?;
    load_traces(&p)
}

fn eval_snapshot(cfg: &ExperimentConfig, sc: &Scenario, t: f64) -> Result<Snapshot> {
    Ok(build_snapshot(sc, t, LayerMask::ALL, &cfg.eval_queuing(), &cfg.link)?.with_transit(cfg.transit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRequest {
    pub src: String,
    pub dst: Option<String>,
    pub t: f64,
    pub eps_c_mbps: f64,
    pub eps_l_min: f64,
    pub mode: Mode,
}

/// Learned rollout on the test scenario; also writes the decision log.
pub fn cmd_route(cfg: &ExperimentConfig, req: &RouteRequest) -> Result<RolloutResult> {
    let sc = test_traces(cfg)?;
    let model = load_model(cfg)?;
    let snap = eval_snapshot(cfg, &sc, req.t)?;
    let dst = req.dst.clone().unwrap_or_else(|| sc.destination_id.clone());
    let params = RolloutParams {
        mode: req.mode,
        eps: EpsConstraint::from_mbps_min(req.eps_c_mbps, req.eps_l_min)?,
        lambda: cfg.lambda,
        hop_limit: cfg.hop_limit,
    };
    let res = rollout(&snap, &req.src, &dst, &ModelEstimator { model: &model }, &params)?;
    let dir = cfg.output_dir.join("route");
    fs::create_dir_all(&dir)?;
    res.write_decisions_jsonl(BufWriter::new(fs::File::create(dir.join(format!("decisions_{}_{}.jsonl", req.src, req.t)))?))?;
    Ok(res)
}

/// Pareto front for one pair on the test scenario, as CSV plus a route dump.
/// The front is swept over the evaluation threshold grid, or complete when
/// `full` is set.
pub fn cmd_pareto(cfg: &ExperimentConfig, src: &str, dst: Option<&str>, t: f64, full: bool) -> Result<Vec<RoutePath>> {
    let sc = test_traces(cfg)?;
    let snap = eval_snapshot(cfg, &sc, t)?;
    let dst = dst.unwrap_or(&sc.destination_id);
    let front = if full {
        exact_pareto_front(&snap, src, dst)?
    } else {
        pareto_front(&snap, src, dst, &cfg.eval.eps_grid.grid()?)?
    };
    let dir = cfg.output_dir.join("pareto");
    fs::create_dir_all(&dir)?;
    let stem = format!("front_{src}_{dst}_{t}{}", if full { "_full" } else { "" });
    let mut w = BufWriter::new(fs::File::create(dir.join(format!("{stem}.csv")))?);
    writeln!(w, "delay_s,throughput_bps,lifetime_s,hops")?;
    for p in &front {
        writeln!(w, "{},{},{},{}", p.delay_s, p.throughput_bps, p.lifetime_s, p.hops())?;
    }
    w.flush()?;
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&front)?)?;
    Ok(front)
}

/// Volume dominated by `points` and bounded by `reference`, with delay
/// minimized and throughput and lifetime maximized. Points that are not
/// strictly better than the reference in every objective contribute nothing.
pub fn hypervolume(points: &[MetricTriple], reference: &MetricTriple) -> f64 {
    // minimization form
    let r = [reference.delay_s, -reference.throughput_bps, -reference.lifetime_s];
    let mut pts: Vec<[f64; 3]> = points
        .iter()
        .map(|p| [p.delay_s, -p.throughput_bps, -p.lifetime_s])
        .filter(|p| p.iter().zip(&r).all(|(a, b)| a < b))
        .collect();
    if pts.is_empty() {
        return 0.0;
    }
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let mut vol = 0.0;
    let mut active: Vec<[f64; 2]> = Vec::new();
    for i in 0..pts.len() {
        active.push([pts[i][1], pts[i][2]]);
        let next_x = if i + 1 < pts.len() { pts[i + 1][0] } else { r[0] };
        let width = next_x - pts[i][0];
        if width > 0.0 {
            vol += width * area_2d(&mut active, r[1], r[2]);
        }
    }
    vol
}

fn area_2d(pts: &mut [[f64; 2]], ry: f64, rz: f64) -> f64 {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let mut area = 0.0;
    let mut min_z = rz;
    for i in 0..pts.len() {
        min_z = min_z.min(pts[i][1]);
        let next_y = if i + 1 < pts.len() { pts[i + 1][0] } else { ry };
        area += (next_y - pts[i][0]) * (rz - min_z);
    }
    area
}

/// Per-objective scale for comparing a route set to a front: the ideal point,
/// and a reference point placed 10% of the observed range beyond the worst
/// observed value (10% of the value itself, or 1 unit, when the range is 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub ideal: MetricTriple,
    pub reference: MetricTriple,
}

impl Normalization {
    pub fn from_points(points: &[MetricTriple]) -> Option<Self> {
        if points.is_empty() {
            return None;
        }
        let fold = |f: fn(&MetricTriple) -> f64, best_is_min: bool| {
            let vals = points.iter().map(f);
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            let (best, worst) = if best_is_min { (lo, hi) } else { (hi, lo) };
            let mut margin = 0.1 * (hi - lo);
            if margin == 0.0 {
                margin = 0.1 * worst.abs();
            }
            if margin == 0.0 {
                margin = 1.0;
            }
            let reference = if best_is_min { worst + margin } else { worst - margin };
            (best, reference)
        };
        let (d0, d1) = fold(|p| p.delay_s, true);
        let (c0, c1) = fold(|p| p.throughput_bps, false);
        let (l0, l1) = fold(|p| p.lifetime_s, false);
        Some(Self {
            ideal: MetricTriple {
                delay_s: d0,
                throughput_bps: c0,
                lifetime_s: l0,
            },
            reference: MetricTriple {
                delay_s: d1,
                throughput_bps: c1,
                lifetime_s: l1,
            },
        })
    }

    /// 0 at the ideal, 1 at the reference, per objective.
    pub fn normalize(&self, p: &MetricTriple) -> [f64; 3] {
        let n = |v: f64, a: f64, b: f64| (v - a) / (b - a);
        [
            n(p.delay_s, self.ideal.delay_s, self.reference.delay_s),
            n(p.throughput_bps, self.ideal.throughput_bps, self.reference.throughput_bps),
            n(p.lifetime_s, self.ideal.lifetime_s, self.reference.lifetime_s),
        ]
    }

    pub fn distance_to_set(&self, p: &MetricTriple, set: &[MetricTriple]) -> f64 {
        let a = self.normalize(p);
        set.iter()
            .map(|q| {
                let b = self.normalize(q);
                ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn pairwise_non_dominated(points: &[MetricTriple]) -> bool {
    points
        .iter()
        .enumerate()
        .all(|(i, a)| points.iter().enumerate().all(|(j, b)| i == j || !dominates(b, a)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub t: f64,
    pub layers: String,
    pub ships: usize,
    pub covered: usize,
    pub ratio: f64,
    pub mean_max_throughput_covered_bps: f64,
    pub mean_max_throughput_all_bps: f64,
    pub mean_max_lifetime_covered_s: f64,
    pub mean_max_lifetime_all_s: f64,
    pub mean_min_delay_covered_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlRoute {
    pub mode: Mode,
    pub eps: EpsConstraint,
    pub delivered: bool,
    pub triple: Option<MetricTriple>,
    pub hops: usize,
    pub exact_feasible: bool,
    pub meets_eps: bool,
    pub weakly_dominated_by_front: bool,
    pub normalized_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub t: f64,
    pub src: String,
    pub dst: String,
    pub front: Vec<MetricTriple>,
    pub front_non_dominated: bool,
    pub normalization: Option<Normalization>,
    pub hv_front: f64,
    pub hv_dl: BTreeMapModes,
    pub hv_ratio: BTreeMapModes,
    pub routes: Vec<DlRoute>,
}

/// Per-mode values keyed by mode name.
pub type BTreeMapModes = std::collections::BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: Mode,
    pub rollouts: usize,
    pub delivered: usize,
    pub delivery_ratio: f64,
    pub mean_hv_ratio: f64,
    pub pairs_with_volume: usize,
    pub frac_within_0_1: f64,
    pub constraint_misses: usize,
    pub mean_delay_delivered_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub pairs: usize,
    pub timestamps: usize,
    pub modes: Vec<ModeSummary>,
    pub coverage_monotonicity_violations: usize,
    pub delay_monotonicity_violations: usize,
    pub non_dominated_fronts: usize,
    pub dominated_dl_routes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub reference_rule: String,
    pub distance_rule: String,
    pub coverage: Vec<CoverageRow>,
    pub pairs: Vec<PairReport>,
    pub summary: EvalSummary,
}

const REFERENCE_RULE: &str = "per SD pair: worst value of each objective over the exact front and all delivered learned routes, moved 10% of the observed range further (10% of the value, or 1 unit, for a zero range); delay minimized, throughput and lifetime maximized";
const DISTANCE_RULE: &str = "Euclidean distance to the nearest exact-front point after mapping each objective to [0, 1] between the ideal point and the reference point";

struct TimestampEval {
    coverage: Vec<CoverageRow>,
    pairs: Vec<PairReport>,
    coverage_violations: usize,
    delay_violations: usize,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn coverage_for(snap: &Snapshot, dst: &str, t: f64) -> Result<(CoverageRow, Vec<Option<f64>>)> {
    let best = best_bottlenecks(snap, dst)?;
    let ships: Vec<usize> = (0..snap.len()).filter(|&i| snap.node(i).kind == NodeKind::Ship).collect();
    let (mut c_cov, mut c_all, mut l_cov, mut l_all, mut d_cov) = (vec![], vec![], vec![], vec![], vec![]);
    let mut delays = Vec::with_capacity(ships.len());
    for &i in &ships {
        let id = &snap.node(i).id;
        let d = min_delay_path(snap, id, dst)?.map(|p| p.delay_s);
        delays.push(d);
        match (best[i], d) {
            (Some((c, l)), Some(d)) => {
                c_cov.push(c);
                l_cov.push(l);
                c_all.push(c);
                l_all.push(l);
                d_cov.push(d);
            }
            _ => {
                c_all.push(0.0);
                l_all.push(0.0);
            }
        }
    }
    let covered = d_cov.len();
    Ok((
        CoverageRow {
            t,
            layers: String::new(),
            ships: ships.len(),
            covered,
            ratio: if ships.is_empty() { 0.0 } else { covered as f64 / ships.len() as f64 },
            mean_max_throughput_covered_bps: mean(&c_cov),
            mean_max_throughput_all_bps: mean(&c_all),
            mean_max_lifetime_covered_s: mean(&l_cov),
            mean_max_lifetime_all_s: mean(&l_all),
            mean_min_delay_covered_s: mean(&d_cov),
        },
        delays,
    ))
}

fn evaluate_pair(cfg: &ExperimentConfig, snap: &Snapshot, src: &str, dst: &str, model: &TrainedModel, grid: &EpsGrid) -> Result<PairReport> {
    let front: Vec<MetricTriple> = exact_pareto_front(snap, src, dst)?.iter().map(|p| p.triple()).collect();
    let est = ModelEstimator { model };
    let mut routes = Vec::new();
    for &mode in &cfg.eval.modes {
        for eps in &grid.points {
            let eps = if mode == Mode::So { EpsConstraint::NONE } else { *eps };
            let params = RolloutParams {
                mode,
                eps,
                lambda: cfg.lambda,
                hop_limit: cfg.hop_limit,
            };
            let res = rollout(snap, src, dst, &est, &params)?;
            let exact_feasible = constrained_min_delay(snap, src, dst, &eps)?.is_some();
            let triple = res.path().map(|p| p.triple());
            routes.push(DlRoute {
                mode,
                eps,
                delivered: triple.is_some(),
                triple,
                hops: res.hops,
                exact_feasible,
                meets_eps: triple.is_some_and(|t| eps.satisfied_by(&t)),
                weakly_dominated_by_front: triple.map_or(true, |t| front.iter().any(|f| *f == t || dominates(f, &t))),
                normalized_distance: None,
            });
            if mode == Mode::So {
                break;
            }
        }
    }
    let mut observed = front.clone();
    observed.extend(routes.iter().filter_map(|r| r.triple));
    let norm = Normalization::from_points(&observed);
    let (mut hv_front, mut hv_dl, mut hv_ratio) = (0.0, BTreeMapModes::new(), BTreeMapModes::new());
    if let Some(n) = &norm {
        hv_front = hypervolume(&front, &n.reference);
        for r in routes.iter_mut() {
            r.normalized_distance = r.triple.map(|t| n.distance_to_set(&t, &front));
        }
        for &mode in &cfg.eval.modes {
            let set: Vec<MetricTriple> = routes.iter().filter(|r| r.mode == mode).filter_map(|r| r.triple).collect();
            let hv = hypervolume(&set, &n.reference);
            let name = serde_json::to_value(mode)?.as_str().unwrap_or_default().to_string();
            hv_dl.insert(name.clone(), hv);
            if hv_front > 0.0 {
                hv_ratio.insert(name, hv / hv_front);
            }
        }
    }
    Ok(PairReport {
        t: snap.t,
        src: src.into(),
        dst: dst.into(),
        front_non_dominated: pairwise_non_dominated(&front),
        front,
        normalization: norm,
        hv_front,
        hv_dl,
        hv_ratio,
        routes,
    })
}

fn evaluate_timestamp(cfg: &ExperimentConfig, sc: &Scenario, t: f64, model: &TrainedModel, grid: &EpsGrid) -> Result<TimestampEval> {
    let full = eval_snapshot(cfg, sc, t)?;
    let dst = &sc.destination_id;
    let masks = [LayerMask::AANET, LayerMask::LEO, LayerMask::ALL];
    let mut coverage = Vec::new();
    let mut delays = Vec::new();
    for m in masks {
        let snap = if m == LayerMask::ALL { full.clone() } else { full.restrict(m) };
        if !snap.contains(dst) {
            return Err(Error::UnknownNode(dst.clone()));
        }
        let (mut row, d) = coverage_for(&snap, dst, t)?;
        row.layers = m.name();
        coverage.push(row);
        delays.push(d);
    }
    let cov_viol = usize::from(coverage[2].covered < coverage[0].covered.max(coverage[1].covered));
    let mut delay_viol = 0;
    for single in &delays[..2] {
        for (s, i) in single.iter().zip(&delays[2]) {
            if let Some(s) = s {
                if i.map_or(true, |i| i > *s) {
                    delay_viol += 1;
                }
            }
        }
    }
    // sources: ships connected in the integrated network
    let mut covered: Vec<String> = full
        .nodes()
        .iter()
        .filter(|n| n.kind == NodeKind::Ship)
        .map(|n| n.id.clone())
        .zip(&delays[2])
        .filter_map(|(id, d)| d.map(|_| id))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seeds.eval ^ t.to_bits());
    covered.shuffle(&mut rng);
    covered.truncate(cfg.eval.pairs_per_timestamp);
    covered.sort();
    let pairs = covered
        .iter()
        .map(|src| evaluate_pair(cfg, &full, src, dst, model, grid))
        .collect::<Result<Vec<_>>>()?;
    Ok(TimestampEval {
        coverage,
        pairs,
        coverage_violations: cov_viol,
        delay_violations: delay_viol,
    })
}

fn summarize(cfg: &ExperimentConfig, evals: &[TimestampEval]) -> EvalSummary {
    let pairs: Vec<&PairReport> = evals.iter().flat_map(|e| &e.pairs).collect();
    let modes = cfg
        .eval
        .modes
        .iter()
        .map(|&mode| {
            let name = serde_json::to_value(mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            let routes: Vec<&DlRoute> = pairs.iter().flat_map(|p| &p.routes).filter(|r| r.mode == mode).collect();
            let delivered: Vec<&&DlRoute> = routes.iter().filter(|r| r.delivered).collect();
            let within = delivered.iter().filter(|r| r.normalized_distance.is_some_and(|d| d <= 0.1)).count();
            let ratios: Vec<f64> = pairs.iter().filter_map(|p| p.hv_ratio.get(&name).copied()).collect();
            ModeSummary {
                mode,
                rollouts: routes.len(),
                delivered: delivered.len(),
                delivery_ratio: if routes.is_empty() { 0.0 } else { delivered.len() as f64 / routes.len() as f64 },
                mean_hv_ratio: mean(&ratios),
                pairs_with_volume: ratios.len(),
                frac_within_0_1: if delivered.is_empty() { 0.0 } else { within as f64 / delivered.len() as f64 },
                constraint_misses: routes.iter().filter(|r| r.exact_feasible && !r.meets_eps).count(),
                mean_delay_delivered_s: mean(&delivered.iter().filter_map(|r| r.triple.map(|t| t.delay_s)).collect::<Vec<_>>()),
            }
        })
        .collect();
    EvalSummary {
        pairs: pairs.len(),
        timestamps: evals.len(),
        modes,
        coverage_monotonicity_violations: evals.iter().map(|e| e.coverage_violations).sum(),
        delay_monotonicity_violations: evals.iter().map(|e| e.delay_violations).sum(),
        non_dominated_fronts: pairs.iter().filter(|p| p.front_non_dominated).count(),
        dominated_dl_routes: pairs.iter().flat_map(|p| &p.routes).filter(|r| !r.weakly_dominated_by_front).count(),
    }
}

/// Evaluation on an already loaded scenario and model; writes nothing.
pub fn evaluate(cfg: &ExperimentConfig, sc: &Scenario, model: &TrainedModel) -> Result<EvalReport> {
    let grid = cfg.eval.eps_grid.grid()?;
    let times = cfg.eval.window.timestamps()?;
    let evals = times
        .par_iter()
        .map(|&t| evaluate_timestamp(cfg, sc, t, model, &grid))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(cfg, &evals);
    let mut coverage = Vec::new();
    let mut pairs = Vec::new();
    for e in evals {
        coverage.extend(e.coverage);
        pairs.extend(e.pairs);
    }
    Ok(EvalReport {
        reference_rule: REFERENCE_RULE.into(),
        distance_rule: DISTANCE_RULE.into(),
        coverage,
        pairs,
        summary,
    })
}

/// Full evaluation on the test scenario; writes `report.json`,
/// `coverage.csv` and `pairs.csv` under `<output_dir>/eval`.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<EvalReport> {
    let model = load_model(cfg)?;
    let sc = test_traces(cfg)?;
    let report = evaluate(cfg, &sc, &model)?;
    let dir = cfg.output_dir.join("eval");
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)?)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(dir.join("coverage.csv"))?;
    for r in &report.coverage {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = BufWriter::new(fs::File::create(dir.join("pairs.csv"))?);
    writeln!(w, "t,src,dst,front_points,hv_front,mode,hv_ratio,delivered,rollouts")?;
    for p in &report.pairs {
        for (mode, ratio) in &p.hv_ratio {
            let rs: Vec<&DlRoute> = p
                .routes
                .iter()
                .filter(|r| serde_json::to_value(r.mode).ok().and_then(|v| v.as_str().map(String::from)).as_deref() == Some(mode))
                .collect();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                p.t,
                p.src,
                p.dst,
                p.front.len(),
                p.hv_front,
                mode,
                ratio,
                rs.iter().filter(|r| r.delivered).count(),
                rs.len()
            )?;
        }
    }
    w.flush()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tri(d: f64, c: f64, l: f64) -> MetricTriple {
        MetricTriple {
            delay_s: d,
            throughput_bps: c,
            lifetime_s: l,
        }
    }

    #[test]
    fn single_point_box() {
        let v = hypervolume(&[tri(1.0, 5.0, 7.0)], &tri(3.0, 1.0, 2.0));
        assert_eq!(v, 2.0 * 4.0 * 5.0);
        assert_eq!(hypervolume(&[], &tri(3.0, 1.0, 2.0)), 0.0);
    }

    #[test]
    fn dominated_points_add_nothing() {
        let r = tri(10.0, 0.0, 0.0);
        let base = vec![tri(1.0, 5.0, 2.0), tri(3.0, 8.0, 4.0), tri(2.0, 2.0, 9.0)];
        let v = hypervolume(&base, &r);
        let mut more = base.clone();
        more.push(tri(4.0, 4.0, 1.0));
        more.push(tri(3.0, 8.0, 4.0));
        assert!((hypervolume(&more, &r) - v).abs() < 1e-12);
    }

    #[test]
    fn matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let n = rng.gen_range(1..=8);
            let pts: Vec<MetricTriple> = (0..n)
                .map(|_| tri(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)))
                .collect();
            let r = tri(1.0, 0.0, 0.0);
            let exact = hypervolume(&pts, &r);
            let samples = 10_000_000;
            let mut hit = 0u64;
            for _ in 0..samples {
                let (d, c, l): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
                if pts.iter().any(|p| p.delay_s <= d && p.throughput_bps >= c && p.lifetime_s >= l) {
                    hit += 1;
                }
            }
            let mc = hit as f64 / samples as f64;
            assert!((mc - exact).abs() <= 0.01 * exact.max(1e-3), "exact {exact} mc {mc}");
        }
    }

    #[test]
    fn normalization_and_distance() {
        let pts = [tri(1.0, 10.0, 100.0), tri(3.0, 30.0, 100.0)];
        let n = Normalization::from_points(&pts).unwrap();
        assert_eq!(n.ideal, tri(1.0, 30.0, 100.0));
        assert!((n.reference.delay_s - 3.2).abs() < 1e-12);
        assert!((n.reference.throughput_bps - 8.0).abs() < 1e-12);
        assert!((n.reference.lifetime_s - 90.0).abs() < 1e-12);
        assert_eq!(n.normalize(&n.ideal), [0.0, 0.0, 0.0]);
        assert_eq!(n.distance_to_set(&pts[0], &pts), 0.0);
        assert!(pairwise_non_dominated(&pts));
        assert!(!pairwise_non_dominated(&[tri(1.0, 2.0, 3.0), tri(2.0, 2.0, 3.0)]));
    }

    #[test]
    fn config_validation() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        let minimal = ExperimentConfig::from_json(r#"{"schema_version": 1}"#).unwrap();
        assert_eq!(minimal, cfg);
        assert!(matches!(ExperimentConfig::from_json(r#"{"schema_version": 2}"#), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_json(r#"{"schema_version": 1, "bogus": 3}"#), Err(Error::Config(_))));
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"schema_version": 1, "eps_grid": {"c_mbps": [], "l_min": [0]}}"#),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"schema_version": 1, "scenario": {"kind": "file", "path": "/nonexistent/x.csv"}}"#),
            Err(Error::Config(_))
        ));
        let s = cfg.with_seed(9);
        assert_ne!(s.seeds.train_shift, s.seeds.test_shift);
        assert_eq!(s.train.seed, s.seeds.train);
    }

    #[test]
    fn windows_split_day() {
        assert_eq!(
            six_hour_windows(86_400.0),
            vec![(0.0, 21_600.0), (21_600.0, 43_200.0), (43_200.0, 64_800.0), (64_800.0, 86_400.0)]
        );
    }
}
