//! Feedforward estimator of constrained route metrics.
//!
//! A shared trunk of `Linear -> BatchNorm -> ReLU` layers feeds one branch per
//! output (delay, throughput, lifetime). Each branch has its own hidden
//! `Linear -> BatchNorm -> ReLU` layer followed by a biased linear output.
//! Everything is float-64 and written directly on `ndarray`.

use std::collections::BTreeSet;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_snapshot, LayerMask, QueuingModel};
use crate::linkmodel::LinkConfig;
use crate::mobility::{Kinematics, NodeKind, Scenario};
use crate::routing::{label_table, EpsConstraint, EpsGrid};

/// Per-node encoding width: lat, sin lon, cos lon, alt, speed, sin heading, cos heading.
pub const NODE_FEATURES: usize = 7;
/// FN, neighbor and DN blocks plus the two thresholds.
pub const FEATURE_DIM: usize = 3 * NODE_FEATURES + 2;
pub const OUTPUTS: usize = 3;

pub const MODEL_FORMAT: &str = "sagin-mlp";
pub const MODEL_VERSION: u32 = 1;

fn encode_node(k: &Kinematics, out: &mut Vec<f64>) {
    let (lon, hdg) = (k.pos.lon_deg.to_radians(), k.heading_deg.to_radians());
    out.extend_from_slice(&[
        k.pos.lat_deg,
        lon.sin(),
        lon.cos(),
        k.pos.alt_km,
        k.speed_kmh,
        hdg.sin(),
        hdg.cos(),
    ]);
}

/// Raw (unstandardized) input vector for one (FN, neighbor, DN, eps) query.
/// Thresholds enter in Mbps and minutes.
pub fn features(fwd: &Kinematics, nb: &Kinematics, dn: &Kinematics, eps: &EpsConstraint) -> Vec<f64> {
    let mut v = Vec::with_capacity(FEATURE_DIM);
    encode_node(fwd, &mut v);
    encode_node(nb, &mut v);
    encode_node(dn, &mut v);
    v.push(eps.eps_c_bps / 1e6);
    v.push(eps.eps_l_s / 60.0);
    v
}

/// Column-wise affine standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Standardizer {
    /// Constant columns get unit scale.
    pub fn fit(x: ArrayView2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::Empty("standardizer input".into()));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let std = x
            .var_axis(Axis(0), 0.0)
            .mapv(|v| if v > 1e-24 { v.sqrt() } else { 1.0 });
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(x.ncols())?;
        Ok((&x - &self.mean) / &self.std)
    }

    pub fn invert(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(z.ncols())?;
        Ok(&z * &self.std + &self.mean)
    }

    fn check(&self, cols: usize) -> Result<()> {
        if cols != self.dim() {
            return Err(Error::Shape(format!("expected {} columns, got {cols}", self.dim())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widths {
    pub input: usize,
    pub trunk: Vec<usize>,
    pub branch: usize,
    pub outputs: usize,
}

impl Default for Widths {
    fn default() -> Self {
        Self {
            input: FEATURE_DIM,
            trunk: vec![300, 300],
            branch: 100,
            outputs: OUTPUTS,
        }
    }
}

/// All trainable tensors. The flat view order is fixed and shared by
/// gradients and optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub trunk_w: Vec<Array2<f64>>,
    pub trunk_gamma: Vec<Array1<f64>>,
    pub trunk_beta: Vec<Array1<f64>>,
    pub branch_w: Vec<Array2<f64>>,
    pub branch_gamma: Vec<Array1<f64>>,
    pub branch_beta: Vec<Array1<f64>>,
    pub out_w: Vec<Array1<f64>>,
    pub out_b: Array1<f64>,
}

impl Params {
    pub fn zeros_like(&self) -> Self {
        let z2 = |v: &Vec<Array2<f64>>| v.iter().map(|a| Array2::zeros(a.raw_dim())).collect();
        let z1 = |v: &Vec<Array1<f64>>| v.iter().map(|a| Array1::zeros(a.len())).collect();
        Self {
            trunk_w: z2(&self.trunk_w),
            trunk_gamma: z1(&self.trunk_gamma),
            trunk_beta: z1(&self.trunk_beta),
            branch_w: z2(&self.branch_w),
            branch_gamma: z1(&self.branch_gamma),
            branch_beta: z1(&self.branch_beta),
            out_w: z1(&self.out_w),
            out_b: Array1::zeros(self.out_b.len()),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        v.extend(self.trunk_w.iter().map(|a| a.as_slice().expect("standard layout")));
        v.extend(self.trunk_gamma.iter().map(|a| a.as_slice().expect("standard layout")));
        v.extend(self.trunk_beta.iter().map(|a| a.as_slice().expect("standard layout")));
        v.extend(self.branch_w.iter().map(|a| a.as_slice().expect("standard layout")));
        v.extend(self.branch_gamma.iter().map(|a| a.as_slice().expect("standard layout")));
        v.extend(self.branch_beta.iter().map(|a| a.as_slice().expect("standard layout")));
        v.extend(self.out_w.iter().map(|a| a.as_slice().expect("standard layout")));
        v.push(self.out_b.as_slice().expect("standard layout"));
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        v.extend(self.trunk_w.iter_mut().map(|a| a.as_slice_mut().expect("standard layout")));
        v.extend(self.trunk_gamma.iter_mut().map(|a| a.as_slice_mut().expect("standard layout")));
        v.extend(self.trunk_beta.iter_mut().map(|a| a.as_slice_mut().expect("standard layout")));
        v.extend(self.branch_w.iter_mut().map(|a| a.as_slice_mut().expect("standard layout")));
        v.extend(self.branch_gamma.iter_mut().map(|a| a.as_slice_mut().expect("standard layout")));
        v.extend(self.branch_beta.iter_mut().map(|a| a.as_slice_mut().expect("standard layout")));
        v.extend(self.out_w.iter_mut().map(|a| a.as_slice_mut().expect("standard layout")));
        v.push(self.out_b.as_slice_mut().expect("standard layout"));
        v
    }

    pub fn count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningMoments {
    pub trunk_mean: Vec<Array1<f64>>,
    pub trunk_var: Vec<Array1<f64>>,
    pub branch_mean: Vec<Array1<f64>>,
    pub branch_var: Vec<Array1<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub widths: Widths,
    pub params: Params,
    pub running: RunningMoments,
    pub bn_eps: f64,
    pub momentum: f64,
}

/// Saved state of one BatchNorm hidden layer for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache {
    input: Array2<f64>,
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    pub batch_mean: Array1<f64>,
    pub batch_var: Array1<f64>,
    /// Post-normalization, pre-ReLU activations.
    pub pre: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub trunk: Vec<LayerCache>,
    pub branches: Vec<LayerCache>,
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, limit: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
}

fn relu(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|v| v.max(0.0))
}

fn hidden_train(x: &Array2<f64>, w: &Array2<f64>, gamma: &Array1<f64>, beta: &Array1<f64>, eps: f64) -> LayerCache {
    let z = x.dot(w);
    let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
    let centered = &z - &mean;
    let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
    let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
    let xhat = &centered * &inv_std;
    let pre = &xhat * gamma + beta;
    LayerCache {
        input: x.clone(),
        xhat,
        inv_std,
        batch_mean: mean,
        batch_var: var,
        pre,
    }
}

fn hidden_eval(
    x: &Array2<f64>,
    w: &Array2<f64>,
    gamma: &Array1<f64>,
    beta: &Array1<f64>,
    mean: &Array1<f64>,
    var: &Array1<f64>,
    eps: f64,
) -> Array2<f64> {
    let scale = gamma / &var.mapv(|v| (v + eps).sqrt());
    let shift = beta - &(mean * &scale);
    relu(&(x.dot(w) * &scale + &shift))
}

/// Gradients of one hidden layer given dL/d(ReLU output).
fn hidden_backward(
    d_act: &Array2<f64>,
    c: &LayerCache,
    w: &Array2<f64>,
    gamma: &Array1<f64>,
) -> (Array2<f64>, Array2<f64>, Array1<f64>, Array1<f64>) {
    let n = d_act.nrows() as f64;
    let mut dy = d_act.clone();
    dy.zip_mut_with(&c.pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
    let d_gamma = (&dy * &c.xhat).sum_axis(Axis(0));
    let d_beta = dy.sum_axis(Axis(0));
    let dxhat = &dy * gamma;
    let sum_dxhat = dxhat.sum_axis(Axis(0));
    let sum_dxhat_xhat = (&dxhat * &c.xhat).sum_axis(Axis(0));
    let dz = (&dxhat * n - &sum_dxhat - &(&c.xhat * &sum_dxhat_xhat)) * &(&c.inv_std / n);
    let dw = c.input.t().dot(&dz).as_standard_layout().into_owned();
    let dx = dz.dot(&w.t());
    (dx, dw, d_gamma, d_beta)
}

impl Mlp {
    /// He-uniform hidden weights, LeCun-uniform outputs, unit BatchNorm scale.
    pub fn new(widths: Widths, seed: u64) -> Result<Self> {
        if widths.input == 0 || widths.trunk.is_empty() || widths.trunk.contains(&0) || widths.branch == 0 || widths.outputs == 0 {
            return Err(Error::Shape(format!("invalid widths {widths:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trunk_w = Vec::new();
        let mut fan_in = widths.input;
        for &w in &widths.trunk {
            trunk_w.push(uniform_matrix(&mut rng, fan_in, w, (6.0 / fan_in as f64).sqrt()));
            fan_in = w;
        }
        let branch_w = (0..widths.outputs)
            .map(|_| uniform_matrix(&mut rng, fan_in, widths.branch, (6.0 / fan_in as f64).sqrt()))
            .collect();
        let out_lim = (3.0 / widths.branch as f64).sqrt();
        let out_w = (0..widths.outputs)
            .map(|_| Array1::from_shape_fn(widths.branch, |_| rng.gen_range(-out_lim..out_lim)))
            .collect();
        let ones = |k: usize| Array1::<f64>::ones(k);
        let zeros = |k: usize| Array1::<f64>::zeros(k);
        let h = widths.outputs;
        let params = Params {
            trunk_w,
            trunk_gamma: widths.trunk.iter().map(|&k| ones(k)).collect(),
            trunk_beta: widths.trunk.iter().map(|&k| zeros(k)).collect(),
            branch_w,
            branch_gamma: (0..h).map(|_| ones(widths.branch)).collect(),
            branch_beta: (0..h).map(|_| zeros(widths.branch)).collect(),
            out_w,
            out_b: zeros(h),
        };
        let running = RunningMoments {
            trunk_mean: widths.trunk.iter().map(|&k| zeros(k)).collect(),
            trunk_var: widths.trunk.iter().map(|&k| ones(k)).collect(),
            branch_mean: (0..h).map(|_| zeros(widths.branch)).collect(),
            branch_var: (0..h).map(|_| ones(widths.branch)).collect(),
        };
        Ok(Self {
            widths,
            params,
            running,
            bn_eps: 1e-5,
            momentum: 0.1,
        })
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.widths.input {
            return Err(Error::Shape(format!("expected {} input columns, got {}", self.widths.input, x.ncols())));
        }
        Ok(())
    }

    /// Inference with running moments; pure and deterministic.
    pub fn forward_eval(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let p = &self.params;
        let mut a = x.clone();
        for i in 0..self.widths.trunk.len() {
            a = hidden_eval(&a, &p.trunk_w[i], &p.trunk_gamma[i], &p.trunk_beta[i], &self.running.trunk_mean[i], &self.running.trunk_var[i], self.bn_eps);
        }
        let mut out = Array2::zeros((x.nrows(), self.widths.outputs));
        for h in 0..self.widths.outputs {
            let b = hidden_eval(&a, &p.branch_w[h], &p.branch_gamma[h], &p.branch_beta[h], &self.running.branch_mean[h], &self.running.branch_var[h], self.bn_eps);
            out.column_mut(h).assign(&(b.dot(&p.out_w[h]) + p.out_b[h]));
        }
        Ok(out)
    }

    /// Training-mode forward with batch statistics. Does not touch the
    /// running moments; see [`Mlp::update_running`].
    pub fn forward_train(&self, x: &Array2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(x)?;
        if x.nrows() < 2 {
            return Err(Error::Shape("training batches need at least 2 rows".into()));
        }
        let p = &self.params;
        let mut trunk = Vec::with_capacity(self.widths.trunk.len());
        let mut a = x.clone();
        for i in 0..self.widths.trunk.len() {
            let c = hidden_train(&a, &p.trunk_w[i], &p.trunk_gamma[i], &p.trunk_beta[i], self.bn_eps);
            a = relu(&c.pre);
            trunk.push(c);
        }
        let mut out = Array2::zeros((x.nrows(), self.widths.outputs));
        let mut branches = Vec::with_capacity(self.widths.outputs);
        for h in 0..self.widths.outputs {
            let c = hidden_train(&a, &p.branch_w[h], &p.branch_gamma[h], &p.branch_beta[h], self.bn_eps);
            out.column_mut(h).assign(&(relu(&c.pre).dot(&p.out_w[h]) + p.out_b[h]));
            branches.push(c);
        }
        Ok((out, ForwardCache { trunk, branches }))
    }

    /// Exponential update of running moments (unbiased batch variance).
    pub fn update_running(&mut self, cache: &ForwardCache) {
        let m = self.momentum;
        let upd = |mean: &mut Array1<f64>, var: &mut Array1<f64>, c: &LayerCache| {
            let n = c.pre.nrows() as f64;
            let unbiased = &c.batch_var * (n / (n - 1.0));
            mean.zip_mut_with(&c.batch_mean, |r, &b| *r = (1.0 - m) * *r + m * b);
            var.zip_mut_with(&unbiased, |r, &b| *r = (1.0 - m) * *r + m * b);
        };
        for (i, c) in cache.trunk.iter().enumerate() {
            upd(&mut self.running.trunk_mean[i], &mut self.running.trunk_var[i], c);
        }
        for (h, c) in cache.branches.iter().enumerate() {
            upd(&mut self.running.branch_mean[h], &mut self.running.branch_var[h], c);
        }
    }

    /// Gradients of the loss given dL/d(output).
    pub fn backward(&self, d_out: &Array2<f64>, cache: &ForwardCache) -> Params {
        let p = &self.params;
        let mut g = p.zeros_like();
        let last = cache.trunk.last().expect("non-empty trunk");
        let mut d_trunk_out = Array2::<f64>::zeros(last.pre.raw_dim());
        for h in 0..self.widths.outputs {
            let c = &cache.branches[h];
            let col = d_out.column(h);
            let act = relu(&c.pre);
            g.out_w[h] = act.t().dot(&col);
            g.out_b[h] = col.sum();
            let d_act = col.to_owned().insert_axis(Axis(1)).dot(&p.out_w[h].view().insert_axis(Axis(0)));
            let (dx, dw, dg, db) = hidden_backward(&d_act, c, &p.branch_w[h], &p.branch_gamma[h]);
            d_trunk_out += &dx;
            g.branch_w[h] = dw;
            g.branch_gamma[h] = dg;
            g.branch_beta[h] = db;
        }
        let mut d = d_trunk_out;
        for i in (0..self.widths.trunk.len()).rev() {
            let (dx, dw, dg, db) = hidden_backward(&d, &cache.trunk[i], &p.trunk_w[i], &p.trunk_gamma[i]);
            g.trunk_w[i] = dw;
            g.trunk_gamma[i] = dg;
            g.trunk_beta[i] = db;
            d = dx;
        }
        g
    }
}

/// Mean squared error over the batch and all outputs.
pub fn loss_mse(pred: &Array2<f64>, label: &Array2<f64>) -> Result<f64> {
    loss_mse_masked(pred, label, &vec![true; pred.ncols()]).map(|(l, _)| l)
}

/// MSE over the batch and the outputs enabled in `mask`, with dL/d(pred).
pub fn loss_mse_masked(pred: &Array2<f64>, label: &Array2<f64>, mask: &[bool]) -> Result<(f64, Array2<f64>)> {
    if pred.shape() != label.shape() || mask.len() != pred.ncols() {
        return Err(Error::Shape(format!("pred {:?}, label {:?}, mask {}", pred.shape(), label.shape(), mask.len())));
    }
    let active = mask.iter().filter(|&&m| m).count();
    if active == 0 || pred.nrows() == 0 {
        return Err(Error::Empty("loss over no outputs".into()));
    }
    let denom = (pred.nrows() * active) as f64;
    let mut diff = pred - label;
    for (h, &m) in mask.iter().enumerate() {
        if !m {
            diff.column_mut(h).fill(0.0);
        }
    }
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / denom;
    Ok((loss, diff * (2.0 / denom)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 1000,
            epochs: 200,
            seed: 0,
            val_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.adam_eps > 0.0
            && self.batch_size >= 2
            && self.epochs > 0
            && (0.0..1.0).contains(&self.val_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training configuration {self:?}")))
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Params,
    v: Params,
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(params: &Params, cfg: &TrainConfig) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((p, g), m), v) in params
            .slices_mut()
            .into_iter()
            .zip(grads.slices())
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// One supervised example: the neighbor `b` seen from forwarder `fn_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub scenario: usize,
    pub t: f64,
    pub fn_id: String,
    pub b_id: String,
    pub eps: EpsConstraint,
    pub features: Vec<f64>,
    /// (D*, C*, L*) in seconds, bit/s, seconds.
    pub label: [f64; OUTPUTS],
    pub feasible: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn matrices(&self, idx: &[usize]) -> (Array2<f64>, Array2<f64>) {
        let mut x = Array2::zeros((idx.len(), FEATURE_DIM));
        let mut y = Array2::zeros((idx.len(), OUTPUTS));
        for (r, &i) in idx.iter().enumerate() {
            let s = &self.samples[i];
            x.row_mut(r).assign(&ndarray::aview1(&s.features));
            y.row_mut(r).assign(&ndarray::aview1(&s.label));
        }
        (x, y)
    }

    /// Splits sample indices by (scenario, timestamp) so that no snapshot
    /// contributes to both sides. Returns (train, validation).
    pub fn split_by_snapshot(&self, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
        let keys: BTreeSet<(usize, u64)> = self.samples.iter().map(|s| (s.scenario, s.t.to_bits())).collect();
        let mut keys: Vec<_> = keys.into_iter().collect();
        let n_val = if keys.len() < 2 || val_fraction <= 0.0 {
            0
        } else {
            ((keys.len() as f64 * val_fraction).round() as usize).clamp(1, keys.len() - 1)
        };
        keys.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let val: BTreeSet<_> = keys[..n_val].iter().copied().collect();
        let (mut tr, mut va) = (Vec::new(), Vec::new());
        for (i, s) in self.samples.iter().enumerate() {
            if val.contains(&(s.scenario, s.t.to_bits())) {
                va.push(i);
            } else {
                tr.push(i);
            }
        }
        (tr, va)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetParams {
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub snapshot_step_s: f64,
    pub eps_samples: usize,
    pub eps_grid: EpsGrid,
    pub layers: LayerMask,
    pub link: LinkConfig,
    pub seed: u64,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            window_start_s: 12.0 * 3600.0,
            window_end_s: 18.0 * 3600.0,
            snapshot_step_s: 60.0,
            eps_samples: 4,
            eps_grid: EpsGrid::default_sweep(),
            layers: LayerMask::ALL,
            link: LinkConfig::default(),
            seed: 0,
        }
    }
}

impl DatasetParams {
    pub fn timestamps(&self) -> Result<Vec<f64>> {
        if !(self.snapshot_step_s > 0.0) {
            return Err(Error::Config("snapshot step must be positive".into()));
        }
        if !(self.window_end_s >= self.window_start_s) {
            return Err(Error::Empty(format!("window [{}, {}]", self.window_start_s, self.window_end_s)));
        }
        let n = ((self.window_end_s - self.window_start_s) / self.snapshot_step_s + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| self.window_start_s + k as f64 * self.snapshot_step_s).collect())
    }
}

/// Supervised samples from exact labels. For every snapshot, `eps_samples`
/// grid points are drawn; every reachable non-ship node `b` other than the
/// destination yields one sample whose forwarder is a uniformly chosen node
/// with a link into `b`. Labels use constant 10 ms queuing.
pub fn build_dataset(scenarios: &[Scenario], params: &DatasetParams) -> Result<Dataset> {
    if scenarios.is_empty() {
        return Err(Error::Empty("no scenarios".into()));
    }
    if params.eps_grid.points.is_empty() || params.eps_samples == 0 {
        return Err(Error::Empty("epsilon samples".into()));
    }
    let times = params.timestamps()?;
    let mut cells = Vec::new();
    for (si, sc) in scenarios.iter().enumerate() {
        for &t in &times {
            if !sc.contains(t) {
                return Err(Error::Range(format!("t = {t} outside scenario {si} span [0, {}]", sc.duration_s)));
            }
            cells.push((si, t));
        }
    }
    let per_cell: Vec<Vec<Sample>> = cells
        .par_iter()
        .map(|&(si, t)| snapshot_samples(&scenarios[si], si, t, params))
        .collect::<Result<_>>()?;
    let samples: Vec<Sample> = per_cell.into_iter().flatten().collect();
    if samples.is_empty() {
        return Err(Error::Empty("window produced no samples".into()));
    }
    Ok(Dataset { samples })
}

fn cell_seed(seed: u64, scenario: usize, t: f64) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((scenario as u64).to_le_bytes());
    h.update(t.to_bits().to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

fn snapshot_samples(sc: &Scenario, si: usize, t: f64, params: &DatasetParams) -> Result<Vec<Sample>> {
    let snap = build_snapshot(sc, t, params.layers, &QueuingModel::TRAINING, &params.link)?;
    let dst = &sc.destination_id;
    let Ok(d) = snap.index_of(dst) else {
        return Ok(Vec::new());
    };
    let dn_kin = snap.node(d).kin;
    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(params.seed, si, t));
    let mut out = Vec::new();
    for _ in 0..params.eps_samples {
        let eps = *params.eps_grid.points.choose(&mut rng).expect("non-empty grid");
        let table = label_table(&snap, dst, &eps)?;
        for (b_id, entry) in &table.entries {
            let b = snap.index_of(b_id)?;
            if b == d || snap.node(b).kind == NodeKind::Ship {
                continue;
            }
            let preds = snap.in_edges(b);
            let Some(fwd) = preds.choose(&mut rng) else {
                continue;
            };
            let fwd = snap.node(fwd.to);
            out.push(Sample {
                scenario: si,
                t,
                fn_id: fwd.id.clone(),
                b_id: b_id.clone(),
                eps,
                features: features(&fwd.kin, &snap.node(b).kin, &dn_kin, &eps),
                label: [entry.d_star_s, entry.c_star_bps, entry.l_star_s],
                feasible: entry.feasible,
            });
        }
    }
    Ok(out)
}

/// First line of a sample file.
pub const SAMPLE_FILE_MAGIC: &str = "# sagin-samples v1";

const SAMPLE_FIXED_COLS: [&str; 10] = ["scenario", "t", "fn_id", "b_id", "eps_c", "eps_l", "feasible", "d_star", "c_star", "l_star"];

/// Writes samples as CSV: fixed columns, then `x0..x22` raw features.
pub fn write_samples_csv<W: std::io::Write>(data: &Dataset, mut out: W) -> Result<()> {
    writeln!(out, "{SAMPLE_FILE_MAGIC}")?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header: Vec<String> = SAMPLE_FIXED_COLS.iter().map(|s| s.to_string()).collect();
    header.extend((0..FEATURE_DIM).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for s in &data.samples {
        let mut rec = vec![
            s.scenario.to_string(),
            s.t.to_string(),
            s.fn_id.clone(),
            s.b_id.clone(),
            s.eps.eps_c_bps.to_string(),
            s.eps.eps_l_s.to_string(),
            s.feasible.to_string(),
        ];
        rec.extend(s.label.iter().map(|v| v.to_string()));
        rec.extend(s.features.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_samples_csv<R: std::io::BufRead>(mut input: R) -> Result<Dataset> {
    let mut first = String::new();
    input.read_line(&mut first)?;
    if first.trim_end() != SAMPLE_FILE_MAGIC {
        return Err(Error::Format(format!("not a v1 sample file (first line `{}`)", first.trim_end())));
    }
    let mut rdr = csv::Reader::from_reader(input);
    let width = SAMPLE_FIXED_COLS.len() + FEATURE_DIM;
    if rdr.headers()?.len() != width {
        return Err(Error::Schema(format!("expected {width} columns")));
    }
    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 3;
        let bad = |msg: String| Error::Parse { line, msg };
        let num = |k: usize| -> Result<f64> {
            rec[k].parse::<f64>().map_err(|e| bad(format!("column {k}: {e}")))
        };
        let features = (0..FEATURE_DIM).map(|j| num(SAMPLE_FIXED_COLS.len() + j)).collect::<Result<Vec<_>>>()?;
        samples.push(Sample {
            scenario: rec[0].parse().map_err(|e| bad(format!("scenario: {e}")))?,
            t: num(1)?,
            fn_id: rec[2].to_string(),
            b_id: rec[3].to_string(),
            eps: EpsConstraint::new(num(4)?, num(5)?)?,
            feasible: rec[6].parse().map_err(|e| bad(format!("feasible: {e}")))?,
            label: [num(7)?, num(8)?, num(9)?],
            features,
        });
    }
    Ok(Dataset { samples })
}

/// Network plus the standardization statistics needed to serve physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub version: u32,
    pub mlp: Mlp,
    pub input_norm: Standardizer,
    pub label_norm: Standardizer,
    /// Outputs that were trained; untrained heads should not be consulted.
    pub head_mask: Vec<bool>,
    pub eps_grid: EpsGrid,
}

impl TrainedModel {
    /// Physical-unit predictions (seconds, bit/s, seconds) for raw feature rows.
    pub fn predict(&self, raw: &Array2<f64>) -> Result<Array2<f64>> {
        let z = self.input_norm.apply(raw.view())?;
        let out = self.mlp.forward_eval(&z)?;
        self.label_norm.invert(out.view())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Format(format!("not JSON: {e}")))?;
        let fmt = v.get("format").and_then(|f| f.as_str());
        let ver = v.get("version").and_then(|f| f.as_u64());
        if fmt != Some(MODEL_FORMAT) || ver != Some(MODEL_VERSION as u64) {
            return Err(Error::Format(format!(
                "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {:?} v{:?}",
                fmt, ver
            )));
        }
        let m: TrainedModel = serde_json::from_value(v).map_err(|e| Error::Format(e.to_string()))?;
        m.check_shapes()?;
        Ok(m)
    }

    fn check_shapes(&self) -> Result<()> {
        let w = &self.mlp.widths;
        let p = &self.mlp.params;
        let r = &self.mlp.running;
        let mut ok = self.input_norm.dim() == w.input
            && self.label_norm.dim() == w.outputs
            && self.head_mask.len() == w.outputs
            && p.trunk_w.len() == w.trunk.len()
            && p.branch_w.len() == w.outputs
            && p.out_w.len() == w.outputs
            && p.out_b.len() == w.outputs;
        if ok {
            let mut fan_in = w.input;
            for (i, &k) in w.trunk.iter().enumerate() {
                ok &= p.trunk_w[i].dim() == (fan_in, k)
                    && p.trunk_gamma.get(i).map(|a| a.len()) == Some(k)
                    && p.trunk_beta.get(i).map(|a| a.len()) == Some(k)
                    && r.trunk_mean.get(i).map(|a| a.len()) == Some(k)
                    && r.trunk_var.get(i).map(|a| a.len()) == Some(k);
                fan_in = k;
            }
            for h in 0..w.outputs {
                ok &= p.branch_w[h].dim() == (fan_in, w.branch)
                    && p.branch_gamma.get(h).map(|a| a.len()) == Some(w.branch)
                    && p.branch_beta.get(h).map(|a| a.len()) == Some(w.branch)
                    && r.branch_mean.get(h).map(|a| a.len()) == Some(w.branch)
                    && r.branch_var.get(h).map(|a| a.len()) == Some(w.branch)
                    && p.out_w[h].len() == w.branch;
            }
        }
        if ok {
            Ok(())
        } else {
            Err(Error::Format("parameter shapes do not match widths".into()))
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training-mode minibatch loss per epoch.
    pub train_loss: Vec<f64>,
    /// Eval-mode loss on the held-out snapshots per epoch (empty without a split).
    pub val_loss: Vec<f64>,
    /// Eval-mode standardized MSE on the training split after the last epoch.
    pub final_train_mse: f64,
    pub train_samples: usize,
    pub val_samples: usize,
}

/// Trains on standardized inputs and labels. `head_mask` selects the trained
/// outputs; `[true, false, false]` gives the delay-only configuration.
pub fn train(data: &Dataset, widths: Widths, head_mask: &[bool], eps_grid: &EpsGrid, cfg: &TrainConfig) -> Result<(TrainedModel, TrainReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if widths.input != FEATURE_DIM || widths.outputs != OUTPUTS {
        return Err(Error::Shape(format!("dataset needs {FEATURE_DIM} inputs and {OUTPUTS} outputs")));
    }
    let (tr, va) = data.split_by_snapshot(cfg.val_fraction, cfg.seed);
    let (x_tr, y_tr) = data.matrices(&tr);
    let input_norm = Standardizer::fit(x_tr.view())?;
    let label_norm = Standardizer::fit(y_tr.view())?;
    let xs = input_norm.apply(x_tr.view())?;
    let ys = label_norm.apply(y_tr.view())?;
    let (xv, yv) = if va.is_empty() {
        (None, None)
    } else {
        let (x, y) = data.matrices(&va);
        (Some(input_norm.apply(x.view())?), Some(label_norm.apply(y.view())?))
    };
    let mut mlp = Mlp::new(widths, cfg.seed)?;
    let report = fit_standardized(&mut mlp, &xs, &ys, xv.as_ref().zip(yv.as_ref()), head_mask, cfg)?;
    let model = TrainedModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        mlp,
        input_norm,
        label_norm,
        head_mask: head_mask.to_vec(),
        eps_grid: eps_grid.clone(),
    };
    Ok((
        model,
        TrainReport {
            train_samples: tr.len(),
            val_samples: va.len(),
            ..report
        },
    ))
}

/// Minibatch Adam on already standardized matrices.
pub fn fit_standardized(
    mlp: &mut Mlp,
    x: &Array2<f64>,
    y: &Array2<f64>,
    val: Option<(&Array2<f64>, &Array2<f64>)>,
    head_mask: &[bool],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if x.nrows() != y.nrows() || y.ncols() != mlp.widths.outputs || head_mask.len() != mlp.widths.outputs {
        return Err(Error::Shape(format!("x {:?}, y {:?}, mask {}", x.shape(), y.shape(), head_mask.len())));
    }
    if x.nrows() < 2 {
        return Err(Error::Empty("need at least 2 training rows".into()));
    }
    let mut adam = Adam::new(&mlp.params, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_ba7c);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut report = TrainReport::default();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let xb = x.select(Axis(0), chunk);
            let yb = y.select(Axis(0), chunk);
            let (pred, cache) = mlp.forward_train(&xb)?;
            let (loss, d_out) = loss_mse_masked(&pred, &yb, head_mask)?;
            let grads = mlp.backward(&d_out, &cache);
            adam.step(&mut mlp.params, &grads);
            mlp.update_running(&cache);
            sum += loss;
            count += 1;
        }
        report.train_loss.push(sum / count.max(1) as f64);
        if let Some((xv, yv)) = val {
            let pred = mlp.forward_eval(xv)?;
            report.val_loss.push(loss_mse_masked(&pred, yv, head_mask)?.0);
        }
    }
    let pred = mlp.forward_eval(x)?;
    report.final_train_mse = loss_mse_masked(&pred, y, head_mask)?.0;
    Ok(report)
}

/// Column slice helper for tests and callers reading one output.
pub fn column(a: &Array2<f64>, h: usize) -> Array1<f64> {
    a.slice(s![.., h]).to_owned()
}
