//! One-hidden-layer ReLU surrogates of the bundling map
//! `(lambda_all, idle_count) -> (theta1, theta2)`.
//!
//! Inputs and outputs are standardized with training-split statistics; the
//! network itself always works in standardized units.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundling::{bundling_outputs, ODGroundContext};
use crate::scenario::OdPair;
use crate::DomainError;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SurrogateError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("model file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("io error: {0}")]
    Io(String),
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("invalid training request: {0}")]
    Config(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Rectangle of `(lambda_all, idle_count)` inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputBox {
    pub lambda: [f64; 2],
    pub idle: [f64; 2],
}

impl InputBox {
    pub fn contains(&self, x: [f64; 2]) -> bool {
        let tol = |r: [f64; 2]| 1e-9 * r[1].abs().max(1.0);
        x[0] >= self.lambda[0] - tol(self.lambda)
            && x[0] <= self.lambda[1] + tol(self.lambda)
            && x[1] >= self.idle[0] - tol(self.idle)
            && x[1] <= self.idle[1] + tol(self.idle)
    }

    /// Whether this box contains `other`.
    pub fn covers(&self, other: &InputBox) -> bool {
        self.contains([other.lambda[0], other.idle[0]]) && self.contains([other.lambda[1], other.idle[1]])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub od: OdPair,
    pub inputs: Vec<[f64; 2]>,
    pub labels: Vec<[f64; 2]>,
}

/// Factor `n` as `rows * cols` with `rows <= cols` and `rows` maximal.
pub fn grid_shape(n: usize) -> (usize, usize) {
    let mut rows = (n as f64).sqrt().floor() as usize;
    while rows > 1 && n % rows != 0 {
        rows -= 1;
    }
    let rows = rows.max(1);
    (rows, n / rows)
}

fn linspace(range: [f64; 2], count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![range[0]];
    }
    let step = (range[1] - range[0]) / (count - 1) as f64;
    (0..count)
        .map(|k| if k + 1 == count { range[1] } else { range[0] + step * k as f64 })
        .collect()
}

/// Uniform grid over `input_box` labeled with the exact bundling outputs. The
/// flow axis gets the larger grid dimension.
pub fn sample_and_label(
    template: &ODGroundContext,
    input_box: &InputBox,
    n_points: usize,
    od: OdPair,
) -> Result<LabeledDataset, SurrogateError> {
    if n_points == 0 {
        return Err(SurrogateError::Config("n_points must be positive".into()));
    }
    if !(input_box.idle[0] > 0.0) {
        return Err(DomainError::new(format!(
            "idle courier range must stay positive, got lower edge {}",
            input_box.idle[0]
        ))
        .into());
    }
    if !(input_box.lambda[0] >= 0.0 && input_box.lambda[1] >= input_box.lambda[0]) {
        return Err(DomainError::new("flow range must be nonnegative and ordered").into());
    }
    let (rows, cols) = grid_shape(n_points);
    let lambdas = linspace(input_box.lambda, cols);
    let idles = linspace(input_box.idle, rows);
    let mut inputs = Vec::with_capacity(n_points);
    let mut labels = Vec::with_capacity(n_points);
    for &n in &idles {
        for &l in &lambdas {
            let (t1, t2) = bundling_outputs(&template.with_flow(l, n))?;
            inputs.push([l, n]);
            labels.push([t1, t2]);
        }
    }
    Ok(LabeledDataset { od, inputs, labels })
}

/// Weights of a 2-input, 2-output network with one ReLU hidden layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    /// `hidden x 2`.
    pub w0: Vec<[f64; 2]>,
    pub b0: Vec<f64>,
    /// `2 x hidden`.
    pub w1: [Vec<f64>; 2],
    pub b1: [f64; 2],
}

impl Network {
    pub fn zeros(hidden: usize) -> Self {
        Network {
            w0: vec![[0.0; 2]; hidden],
            b0: vec![0.0; hidden],
            w1: [vec![0.0; hidden], vec![0.0; hidden]],
            b1: [0.0; 2],
        }
    }

    /// Weights and biases uniform in `±1/sqrt(fan_in)` per layer. Nonzero
    /// biases spread the initial ReLU kinks across the standardized box
    /// instead of stacking them all at the origin.
    pub fn init(hidden: usize, rng: &mut impl Rng) -> Self {
        let mut net = Network::zeros(hidden);
        let a0 = 1.0 / 2f64.sqrt();
        let a1 = 1.0 / (hidden as f64).sqrt();
        for (row, b) in net.w0.iter_mut().zip(&mut net.b0) {
            for w in row.iter_mut() {
                *w = rng.random_range(-a0..a0);
            }
            *b = rng.random_range(-a0..a0);
        }
        for (row, b) in net.w1.iter_mut().zip(&mut net.b1) {
            for w in row.iter_mut() {
                *w = rng.random_range(-a1..a1);
            }
            *b = rng.random_range(-a1..a1);
        }
        net
    }

    pub fn hidden(&self) -> usize {
        self.b0.len()
    }

    pub fn n_params(&self) -> usize {
        5 * self.hidden() + 2
    }

    /// Parameters in the order w0, b0, w1, b1.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        v.extend(self.w0.iter().flatten());
        v.extend(&self.b0);
        v.extend(self.w1.iter().flatten());
        v.extend(self.b1);
        v
    }

    pub fn from_flat(hidden: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), 5 * hidden + 2, "parameter vector length");
        let (w0, rest) = v.split_at(2 * hidden);
        let (b0, rest) = rest.split_at(hidden);
        let (w1a, rest) = rest.split_at(hidden);
        let (w1b, b1) = rest.split_at(hidden);
        Network {
            w0: w0.chunks(2).map(|c| [c[0], c[1]]).collect(),
            b0: b0.to_vec(),
            w1: [w1a.to_vec(), w1b.to_vec()],
            b1: [b1[0], b1[1]],
        }
    }

    pub fn pre_activation(&self, x: [f64; 2]) -> impl Iterator<Item = f64> + '_ {
        self.w0.iter().zip(&self.b0).map(move |(w, b)| w[0] * x[0] + w[1] * x[1] + b)
    }

    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        let mut out = self.b1;
        for (v, z) in self.pre_activation(x).enumerate() {
            let h = z.max(0.0);
            out[0] += self.w1[0][v] * h;
            out[1] += self.w1[1][v] * h;
        }
        out
    }

    /// Mean of `0.5 * |y - f(x)|^2` over the batch and its gradient in
    /// [`Network::to_flat`] order.
    pub fn loss_and_gradient(&self, xs: &[[f64; 2]], ys: &[[f64; 2]]) -> (f64, Vec<f64>) {
        let h = self.hidden();
        let mut g = Network::zeros(h);
        let mut loss = 0.0;
        let scale = 1.0 / xs.len() as f64;
        let mut z = vec![0.0; h];
        for (x, y) in xs.iter().zip(ys) {
            for (zv, pre) in z.iter_mut().zip(self.pre_activation(*x)) {
                *zv = pre;
            }
            let mut out = self.b1;
            for v in 0..h {
                let a = z[v].max(0.0);
                out[0] += self.w1[0][v] * a;
                out[1] += self.w1[1][v] * a;
            }
            let e = [out[0] - y[0], out[1] - y[1]];
            loss += 0.5 * (e[0] * e[0] + e[1] * e[1]) * scale;
            let d = [e[0] * scale, e[1] * scale];
            g.b1[0] += d[0];
            g.b1[1] += d[1];
            for v in 0..h {
                if z[v] > 0.0 {
                    g.w1[0][v] += d[0] * z[v];
                    g.w1[1][v] += d[1] * z[v];
                    let back = d[0] * self.w1[0][v] + d[1] * self.w1[1][v];
                    g.w0[v][0] += back * x[0];
                    g.w0[v][1] += back * x[1];
                    g.b0[v] += back;
                }
            }
        }
        (loss, g.to_flat())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub input_mean: [f64; 2],
    pub input_std: [f64; 2],
    pub output_mean: [f64; 2],
    pub output_std: [f64; 2],
}

impl Standardization {
    fn fit(inputs: &[[f64; 2]], labels: &[[f64; 2]]) -> Self {
        let (im, is) = moments(inputs);
        let (om, os) = moments(labels);
        Standardization {
            input_mean: im,
            input_std: is,
            output_mean: om,
            output_std: os,
        }
    }

    pub fn standardize_input(&self, x: [f64; 2]) -> [f64; 2] {
        [
            (x[0] - self.input_mean[0]) / self.input_std[0],
            (x[1] - self.input_mean[1]) / self.input_std[1],
        ]
    }

    pub fn standardize_output(&self, y: [f64; 2]) -> [f64; 2] {
        [
            (y[0] - self.output_mean[0]) / self.output_std[0],
            (y[1] - self.output_mean[1]) / self.output_std[1],
        ]
    }

    pub fn destandardize_output(&self, y: [f64; 2]) -> [f64; 2] {
        [
            y[0] * self.output_std[0] + self.output_mean[0],
            y[1] * self.output_std[1] + self.output_mean[1],
        ]
    }

    pub fn destandardize_input(&self, x: [f64; 2]) -> [f64; 2] {
        [
            x[0] * self.input_std[0] + self.input_mean[0],
            x[1] * self.input_std[1] + self.input_mean[1],
        ]
    }
}

/// Column means and population standard deviations; a zero spread is
/// replaced by 1 so standardization stays invertible.
fn moments(rows: &[[f64; 2]]) -> ([f64; 2], [f64; 2]) {
    let n = rows.len() as f64;
    let mut mean = [0.0; 2];
    for r in rows {
        mean[0] += r[0] / n;
        mean[1] += r[1] / n;
    }
    let mut var = [0.0; 2];
    for r in rows {
        var[0] += (r[0] - mean[0]).powi(2) / n;
        var[1] += (r[1] - mean[1]).powi(2) / n;
    }
    let std = var.map(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
    (mean, std)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Fraction of the data used for training.
    pub split_ratio: f64,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 12,
            learning_rate: 0.001,
            epochs: 300,
            split_ratio: 0.9,
            batch_size: 32,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub od: OdPair,
    pub input_box: InputBox,
    pub net: Network,
    pub scaling: Standardization,
    /// Held-out metrics for `theta1` and `theta2`.
    pub metrics: [OutputMetrics; 2],
}

/// Network with standardization folded into the affine layers, operating on
/// raw inputs and producing raw outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldedNetwork(pub Network);

impl SurrogateModel {
    pub fn hidden_size(&self) -> usize {
        self.net.hidden()
    }

    pub fn folded(&self) -> FoldedNetwork {
        let s = &self.scaling;
        let mut net = self.net.clone();
        for (w, b) in net.w0.iter_mut().zip(net.b0.iter_mut()) {
            for u in 0..2 {
                *b -= w[u] * s.input_mean[u] / s.input_std[u];
                w[u] /= s.input_std[u];
            }
        }
        for o in 0..2 {
            for w in net.w1[o].iter_mut() {
                *w *= s.output_std[o];
            }
            net.b1[o] = net.b1[o] * s.output_std[o] + s.output_mean[o];
        }
        FoldedNetwork(net)
    }
}

/// Surrogate prediction in original units. Inputs outside the training box
/// are evaluated as-is.
pub fn forward(model: &SurrogateModel, x: [f64; 2]) -> [f64; 2] {
    let xs = model.scaling.standardize_input(x);
    model.scaling.destandardize_output(model.net.eval(xs))
}

/// Prediction plus whether `x` lies outside the training box.
pub fn forward_flagged(model: &SurrogateModel, x: [f64; 2]) -> ([f64; 2], bool) {
    (forward(model, x), !model.input_box.contains(x))
}

/// Accuracy of `predict` on labeled rows, per output.
pub fn metrics_of(labels: &[[f64; 2]], preds: &[[f64; 2]]) -> [OutputMetrics; 2] {
    let n = labels.len() as f64;
    [0, 1].map(|o| {
        let mean = labels.iter().map(|y| y[o]).sum::<f64>() / n;
        let mut abs = 0.0;
        let mut sq = 0.0;
        let mut tot = 0.0;
        for (y, p) in labels.iter().zip(preds) {
            let e = y[o] - p[o];
            abs += e.abs();
            sq += e * e;
            tot += (y[o] - mean).powi(2);
        }
        OutputMetrics {
            mae: abs / n,
            rmse: (sq / n).sqrt(),
            r2: if tot > 0.0 {
                1.0 - sq / tot
            } else if sq == 0.0 {
                1.0
            } else {
                f64::NEG_INFINITY
            },
        }
    })
}

pub fn evaluate(model: &SurrogateModel, dataset: &LabeledDataset) -> [OutputMetrics; 2] {
    let preds: Vec<[f64; 2]> = dataset.inputs.iter().map(|&x| forward(model, x)).collect();
    metrics_of(&dataset.labels, &preds)
}

/// Train/test split of row indices, shuffled with the config seed.
pub fn split_indices(n: usize, config: &TrainConfig) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let n_train = ((n as f64) * config.split_ratio).round() as usize;
    let n_train = n_train.clamp(1, n);
    let test = idx.split_off(n_train);
    (idx, test)
}

/// Adam moment buffers.
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

pub fn train(dataset: &LabeledDataset, config: &TrainConfig) -> Result<SurrogateModel, SurrogateError> {
    if dataset.inputs.is_empty() || dataset.inputs.len() != dataset.labels.len() {
        return Err(SurrogateError::Config("dataset is empty or ragged".into()));
    }
    if config.hidden == 0 || config.batch_size == 0 {
        return Err(SurrogateError::Config("hidden size and batch size must be positive".into()));
    }
    if !(config.split_ratio > 0.0 && config.split_ratio <= 1.0) {
        return Err(SurrogateError::Config("split ratio must lie in (0, 1]".into()));
    }
    let (train_idx, test_idx) = split_indices(dataset.inputs.len(), config);
    let train_x: Vec<[f64; 2]> = train_idx.iter().map(|&k| dataset.inputs[k]).collect();
    let train_y: Vec<[f64; 2]> = train_idx.iter().map(|&k| dataset.labels[k]).collect();
    let scaling = Standardization::fit(&train_x, &train_y);
    let xs: Vec<[f64; 2]> = train_x.iter().map(|&x| scaling.standardize_input(x)).collect();
    let ys: Vec<[f64; 2]> = train_y.iter().map(|&y| scaling.standardize_output(y)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut net = Network::init(config.hidden, &mut rng);
    let mut params = net.to_flat();
    let mut adam = AdamState {
        m: vec![0.0; params.len()],
        v: vec![0.0; params.len()],
        t: 0,
    };
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut bx = Vec::with_capacity(config.batch_size);
    let mut by = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            bx.clear();
            by.clear();
            bx.extend(chunk.iter().map(|&k| xs[k]));
            by.extend(chunk.iter().map(|&k| ys[k]));
            let (loss, grad) = net.loss_and_gradient(&bx, &by);
            epoch_loss += loss;
            step(&mut params, &grad, config, &mut adam);
            net = Network::from_flat(config.hidden, &params);
        }
        if !epoch_loss.is_finite() || params.iter().any(|p| !p.is_finite()) {
            return Err(SurrogateError::TrainingDiverged { epoch });
        }
    }

    let mut model = SurrogateModel {
        od: dataset.od,
        input_box: bounding_box(&dataset.inputs),
        net,
        scaling,
        metrics: [OutputMetrics { mae: 0.0, rmse: 0.0, r2: 0.0 }; 2],
    };
    let held_out = if test_idx.is_empty() { &train_idx } else { &test_idx };
    let labels: Vec<[f64; 2]> = held_out.iter().map(|&k| dataset.labels[k]).collect();
    let preds: Vec<[f64; 2]> = held_out.iter().map(|&k| forward(&model, dataset.inputs[k])).collect();
    model.metrics = metrics_of(&labels, &preds);
    Ok(model)
}

/// One sampling-and-training task.
#[derive(Debug, Clone)]
pub struct TrainTask {
    pub od: OdPair,
    pub template: ODGroundContext,
    pub input_box: InputBox,
}

/// Samples, labels and trains every task in parallel. Each task uses the
/// config's seed, so results do not depend on scheduling.
pub fn train_many(
    tasks: &[TrainTask],
    n_points: usize,
    config: &TrainConfig,
) -> Result<BTreeMap<OdPair, SurrogateModel>, SurrogateError> {
    tasks
        .par_iter()
        .map(|t| {
            let data = sample_and_label(&t.template, &t.input_box, n_points, t.od)?;
            train(&data, config).map(|m| (t.od, m))
        })
        .collect()
}

fn step(params: &mut [f64], grad: &[f64], config: &TrainConfig, adam: &mut AdamState) {
    let lr = config.learning_rate;
    match config.optimizer {
        Optimizer::Sgd => {
            for (p, g) in params.iter_mut().zip(grad) {
                *p -= lr * g;
            }
        }
        Optimizer::Adam => {
            const B1: f64 = 0.9;
            const B2: f64 = 0.999;
            const EPS: f64 = 1e-8;
            adam.t += 1;
            let c1 = 1.0 - B1.powi(adam.t);
            let c2 = 1.0 - B2.powi(adam.t);
            for k in 0..params.len() {
                adam.m[k] = B1 * adam.m[k] + (1.0 - B1) * grad[k];
                adam.v[k] = B2 * adam.v[k] + (1.0 - B2) * grad[k] * grad[k];
                let mh = adam.m[k] / c1;
                let vh = adam.v[k] / c2;
                params[k] -= lr * mh / (vh.sqrt() + EPS);
            }
        }
    }
}

fn bounding_box(inputs: &[[f64; 2]]) -> InputBox {
    let mut b = InputBox {
        lambda: [f64::INFINITY, f64::NEG_INFINITY],
        idle: [f64::INFINITY, f64::NEG_INFINITY],
    };
    for x in inputs {
        b.lambda[0] = b.lambda[0].min(x[0]);
        b.lambda[1] = b.lambda[1].max(x[0]);
        b.idle[0] = b.idle[0].min(x[1]);
        b.idle[1] = b.idle[1].max(x[1]);
    }
    b
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u32,
    od_id: OdPair,
    #[serde(rename = "box")]
    input_box: InputBox,
    standardization: Standardization,
    layers: Vec<LayerFile>,
    metrics: [OutputMetrics; 2],
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u32,
}

pub fn to_json(model: &SurrogateModel) -> String {
    let file = ModelFile {
        version: MODEL_VERSION,
        od_id: model.od,
        input_box: model.input_box,
        standardization: model.scaling,
        layers: vec![
            LayerFile {
                weights: model.net.w0.iter().map(|r| r.to_vec()).collect(),
                bias: model.net.b0.clone(),
            },
            LayerFile {
                weights: model.net.w1.to_vec(),
                bias: model.net.b1.to_vec(),
            },
        ],
        metrics: model.metrics,
    };
    serde_json::to_string_pretty(&file).expect("model files always serialize")
}

pub fn from_json(text: &str) -> Result<SurrogateModel, SurrogateError> {
    let probe: VersionProbe =
        serde_json::from_str(text).map_err(|e| SurrogateError::Parse(e.to_string()))?;
    if probe.version != MODEL_VERSION {
        return Err(SurrogateError::Version {
            found: probe.version,
            expected: MODEL_VERSION,
        });
    }
    let f: ModelFile = serde_json::from_str(text).map_err(|e| SurrogateError::Parse(e.to_string()))?;
    let bad = |m: &str| SurrogateError::Parse(m.to_string());
    let [l0, l1] = <[LayerFile; 2]>::try_from(f.layers).map_err(|_| bad("expected two layers"))?;
    let hidden = l0.bias.len();
    if hidden == 0 || l0.weights.len() != hidden || l0.weights.iter().any(|r| r.len() != 2) {
        return Err(bad("hidden layer must be hidden x 2"));
    }
    if l1.weights.len() != 2 || l1.weights.iter().any(|r| r.len() != hidden) || l1.bias.len() != 2 {
        return Err(bad("output layer must be 2 x hidden"));
    }
    let s = f.standardization;
    if s.input_std.iter().chain(&s.output_std).any(|v| !(*v > 0.0)) {
        return Err(bad("standard deviations must be positive"));
    }
    let net = Network {
        w0: l0.weights.iter().map(|r| [r[0], r[1]]).collect(),
        b0: l0.bias,
        w1: [l1.weights[0].clone(), l1.weights[1].clone()],
        b1: [l1.bias[0], l1.bias[1]],
    };
    Ok(SurrogateModel {
        od: f.od_id,
        input_box: f.input_box,
        net,
        scaling: s,
        metrics: f.metrics,
    })
}

pub fn save(model: &SurrogateModel, path: &Path) -> Result<(), SurrogateError> {
    std::fs::write(path, to_json(model)).map_err(|e| SurrogateError::Io(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<SurrogateModel, SurrogateError> {
    let text = std::fs::read_to_string(path).map_err(|e| SurrogateError::Io(format!("{}: {e}", path.display())))?;
    from_json(&text)
}
