//! Small feed-forward production networks.
//!
//! Networks map the eight mean-adjusted firm inputs to a scalar outcome
//! through fully connected layers, ReLU on hidden layers and identity on the
//! output. Training minimises mean squared error with Adam; reported losses
//! are RMSE, which has the same minimiser.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{derive_seed, rng_from_seed, SeededRng};

/// Width of the input layer.
pub const N_INPUTS: usize = 8;

/// One row of production inputs.
pub type Features = [f64; N_INPUTS];

#[derive(Debug, Error, PartialEq)]
pub enum NeuralError {
    #[error("invalid architecture {sizes:?}: {reason}")]
    InvalidArchitecture { sizes: Vec<usize>, reason: &'static str },
    #[error("input has {got} values, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{rows} input rows but {targets} targets")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(&'static str),
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("weight file is inconsistent with its architecture: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    /// Linear hidden units; used to check the trainer against closed-form
    /// least squares.
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub hidden_activation: Activation,
}

impl Default for Architecture {
    /// `[8, 16, 16, 1]` with ReLU hidden units.
    fn default() -> Self {
        Architecture {
            layer_sizes: vec![N_INPUTS, 16, 16, 1],
            hidden_activation: Activation::Relu,
        }
    }
}

impl Architecture {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self, NeuralError> {
        let arch = Architecture {
            layer_sizes,
            hidden_activation: Activation::Relu,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.hidden_activation = activation;
        self
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |reason| {
            Err(NeuralError::InvalidArchitecture {
                sizes: self.layer_sizes.clone(),
                reason,
            })
        };
        let s = &self.layer_sizes;
        if s.len() < 3 {
            return bad("need input, at least one hidden layer and output");
        }
        if s[0] != N_INPUTS {
            return bad("input layer must have 8 units");
        }
        if *s.last().unwrap() != 1 {
            return bad("output layer must have 1 unit");
        }
        if s.contains(&0) {
            return bad("layer sizes must be at least 1");
        }
        Ok(())
    }

    /// Number of weight layers (hidden layers plus output).
    pub fn n_weight_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// Weights and biases of one fully connected layer. `weights` is row-major
/// with one row per output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayerJson", into = "LayerJson")]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LayerJson {
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

impl From<Layer> for LayerJson {
    fn from(l: Layer) -> Self {
        LayerJson {
            weights: l.weights.chunks(l.n_in).map(<[f64]>::to_vec).collect(),
            biases: l.biases,
        }
    }
}

impl TryFrom<LayerJson> for Layer {
    type Error = String;

    fn try_from(j: LayerJson) -> Result<Self, Self::Error> {
        let n_out = j.weights.len();
        let n_in = j.weights.first().map_or(0, Vec::len);
        if n_out == 0 || n_in == 0 {
            return Err("empty weight matrix".into());
        }
        if j.weights.iter().any(|r| r.len() != n_in) {
            return Err("ragged weight matrix".into());
        }
        if j.biases.len() != n_out {
            return Err("bias length differs from weight rows".into());
        }
        Ok(Layer {
            n_in,
            n_out,
            weights: j.weights.concat(),
            biases: j.biases,
        })
    }
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Layer {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
        }
    }

    #[inline]
    fn affine(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.n_in).zip(&self.biases))
        {
            *o = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b;
        }
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.biases)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }
}

/// All layer parameters of one production network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub architecture: Architecture,
    pub seed: u64,
    pub layers: Vec<Layer>,
}

impl WeightSet {
    pub fn zeros(architecture: &Architecture) -> Self {
        let layers = architecture
            .layer_sizes
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        WeightSet {
            architecture: architecture.clone(),
            seed: 0,
            layers,
        }
    }

    pub fn last_layer(&self) -> &Layer {
        self.layers.last().expect("validated network has layers")
    }

    /// Parameters flattened layer by layer, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(Layer::params).copied().collect()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Layer::params_mut)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().flat_map(Layer::params).all(|v| v.is_finite())
    }

    /// Checks that layer shapes agree with the architecture header.
    pub fn validate(&self) -> Result<(), NeuralError> {
        self.architecture.validate()?;
        let sizes = &self.architecture.layer_sizes;
        if self.layers.len() != sizes.len() - 1 {
            return Err(NeuralError::Malformed(format!(
                "{} layers for {} sizes",
                self.layers.len(),
                sizes.len()
            )));
        }
        for (i, (l, w)) in self.layers.iter().zip(sizes.windows(2)).enumerate() {
            if l.n_in != w[0] || l.n_out != w[1] {
                return Err(NeuralError::Malformed(format!(
                    "layer {i} is {}x{}, expected {}x{}",
                    l.n_out, l.n_in, w[1], w[0]
                )));
            }
        }
        if !self.is_finite() {
            return Err(NeuralError::Malformed("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("weight sets always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, NeuralError> {
        let ws: WeightSet =
            serde_json::from_str(text).map_err(|e| NeuralError::Malformed(e.to_string()))?;
        ws.validate()?;
        Ok(ws)
    }
}

/// Gradient with the same layout as a [`WeightSet`]'s layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<Layer>,
}

impl Gradient {
    fn zeros_like(w: &WeightSet) -> Self {
        Gradient {
            layers: w.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers.iter().flat_map(Layer::params).copied().collect()
    }

    fn reset(&mut self) {
        for l in &mut self.layers {
            l.params_mut().for_each(|p| *p = 0.0);
        }
    }
}

/// Uniform(−1/√fan_in, 1/√fan_in) weights and zero biases.
pub fn init_network(arch: &Architecture, seed: u64) -> Result<WeightSet, NeuralError> {
    arch.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut ws = WeightSet::zeros(arch);
    ws.seed = seed;
    for layer in &mut ws.layers {
        let scale = 1.0 / (layer.n_in as f64).sqrt();
        for w in &mut layer.weights {
            *w = rng.random_range(-scale..scale);
        }
    }
    Ok(ws)
}

/// Scratch buffers for forward and backward passes.
struct Workspace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(arch: &Architecture) -> Self {
        let sizes = &arch.layer_sizes;
        Workspace {
            pre: sizes[1..].iter().map(|&s| vec![0.0; s]).collect(),
            post: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            delta: sizes[1..].iter().map(|&s| vec![0.0; s]).collect(),
        }
    }
}

fn forward_into(w: &WeightSet, x: &[f64], ws: &mut Workspace) -> f64 {
    let act = w.architecture.hidden_activation;
    let last = w.layers.len() - 1;
    ws.post[0].copy_from_slice(x);
    for (i, layer) in w.layers.iter().enumerate() {
        let (head, tail) = ws.post.split_at_mut(i + 1);
        layer.affine(&head[i], &mut ws.pre[i]);
        let out = &mut tail[0];
        if i == last {
            out.copy_from_slice(&ws.pre[i]);
        } else {
            for (o, z) in out.iter_mut().zip(&ws.pre[i]) {
                *o = act.apply(*z);
            }
        }
    }
    ws.post[last + 1][0]
}

/// Adds `scale · ∂(ŷ − y)²/∂θ` for one row to `grad`.
fn backward_into(w: &WeightSet, residual_scale: f64, ws: &mut Workspace, grad: &mut Gradient) {
    let act = w.architecture.hidden_activation;
    let last = w.layers.len() - 1;
    ws.delta[last][0] = residual_scale;
    for i in (0..=last).rev() {
        let layer = &w.layers[i];
        let g = &mut grad.layers[i];
        let input = &ws.post[i];
        for (o, d) in ws.delta[i].iter().enumerate() {
            g.biases[o] += d;
            for (gw, a) in g.weights[o * layer.n_in..(o + 1) * layer.n_in]
                .iter_mut()
                .zip(input)
            {
                *gw += d * a;
            }
        }
        if i > 0 {
            let (lower, upper) = ws.delta.split_at_mut(i);
            let below = &mut lower[i - 1];
            for (k, b) in below.iter_mut().enumerate() {
                let back: f64 = upper[0]
                    .iter()
                    .enumerate()
                    .map(|(o, d)| d * layer.weights[o * layer.n_in + k])
                    .sum();
                *b = back * act.derivative(ws.pre[i - 1][k]);
            }
        }
    }
}

fn check_data(w: &WeightSet, x: &[Features], y: &[f64]) -> Result<(), NeuralError> {
    if x.len() != y.len() {
        return Err(NeuralError::LengthMismatch {
            rows: x.len(),
            targets: y.len(),
        });
    }
    if y.is_empty() {
        return Err(NeuralError::EmptyDataset);
    }
    if w.architecture.layer_sizes[0] != N_INPUTS {
        return Err(NeuralError::DimensionMismatch {
            expected: w.architecture.layer_sizes[0],
            got: N_INPUTS,
        });
    }
    Ok(())
}

/// Network output for one input vector.
pub fn forward(w: &WeightSet, x: &[f64]) -> Result<f64, NeuralError> {
    let expected = w.architecture.layer_sizes[0];
    if x.len() != expected {
        return Err(NeuralError::DimensionMismatch {
            expected,
            got: x.len(),
        });
    }
    let mut ws = Workspace::new(&w.architecture);
    Ok(forward_into(w, x, &mut ws))
}

pub fn predict(w: &WeightSet, x: &[Features]) -> Vec<f64> {
    let mut ws = Workspace::new(&w.architecture);
    x.iter().map(|row| forward_into(w, row, &mut ws)).collect()
}

pub fn mse_loss(w: &WeightSet, x: &[Features], y: &[f64]) -> Result<f64, NeuralError> {
    check_data(w, x, y)?;
    let mut ws = Workspace::new(&w.architecture);
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(row, t)| (forward_into(w, row, &mut ws) - t).powi(2))
        .sum();
    Ok(sse / y.len() as f64)
}

/// √(mean squared residual).
pub fn rmse_loss(w: &WeightSet, x: &[Features], y: &[f64]) -> Result<f64, NeuralError> {
    mse_loss(w, x, y).map(f64::sqrt)
}

/// Exact gradient of the mean squared error over `(x, y)`.
pub fn gradient(w: &WeightSet, x: &[Features], y: &[f64]) -> Result<Gradient, NeuralError> {
    check_data(w, x, y)?;
    let mut ws = Workspace::new(&w.architecture);
    let mut grad = Gradient::zeros_like(w);
    let scale = 2.0 / y.len() as f64;
    for (row, t) in x.iter().zip(y) {
        let r = forward_into(w, row, &mut ws) - t;
        backward_into(w, scale * r, &mut ws, &mut grad);
    }
    Ok(grad)
}

/// Largest relative disagreement between [`gradient`] and central
/// differences of [`mse_loss`] with step `h`. Components are compared
/// relative to `max(|analytic|, |numeric|, floor)`.
pub fn gradient_check(
    w: &WeightSet,
    x: &[Features],
    y: &[f64],
    h: f64,
    floor: f64,
) -> Result<f64, NeuralError> {
    let analytic = gradient(w, x, y)?.flatten();
    let base = w.flatten();
    let mut probe = w.clone();
    let mut worst: f64 = 0.0;
    for (k, (g, &orig)) in analytic.iter().zip(&base).enumerate() {
        let set = |v: f64, p: &mut WeightSet| {
            *p.params_mut().nth(k).expect("index in range") = v;
        };
        set(orig + h, &mut probe);
        let up = mse_loss(&probe, x, y)?;
        set(orig - h, &mut probe);
        let down = mse_loss(&probe, x, y)?;
        set(orig, &mut probe);
        let numeric = (up - down) / (2.0 * h);
        let scale = g.abs().max(numeric.abs()).max(floor);
        worst = worst.max((g - numeric).abs() / scale);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    /// `None` selects full batch below 256 rows and 128 otherwise.
    pub batch_size: Option<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Stop after this many epochs without improvement; 0 disables.
    pub early_stop_patience: usize,
    pub freeze_prefix: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            epochs: 2000,
            batch_size: None,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            early_stop_patience: 200,
            freeze_prefix: false,
        }
    }
}

pub const FULL_BATCH_BELOW: usize = 256;
pub const DEFAULT_BATCH: usize = 128;

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NeuralError::InvalidConfig("learning_rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(NeuralError::InvalidConfig("epochs must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(NeuralError::InvalidConfig("batch_size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(NeuralError::InvalidConfig("Adam betas must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(NeuralError::InvalidConfig("epsilon must be positive"));
        }
        Ok(())
    }

    pub fn effective_batch(&self, n: usize) -> usize {
        match self.batch_size {
            Some(b) => b.min(n),
            None if n < FULL_BATCH_BELOW => n,
            None => DEFAULT_BATCH,
        }
    }
}

/// Supplies the row visiting order for each epoch. Batches are consecutive
/// chunks of that order.
pub trait BatchOrder {
    fn epoch_order(&mut self, epoch: usize, n: usize) -> Vec<usize>;
}

/// Seeded Fisher-Yates shuffle per epoch.
pub struct SeededShuffle {
    rng: SeededRng,
}

impl SeededShuffle {
    pub fn new(seed: u64) -> Self {
        SeededShuffle {
            rng: rng_from_seed(seed),
        }
    }
}

impl BatchOrder for SeededShuffle {
    fn epoch_order(&mut self, _epoch: usize, n: usize) -> Vec<usize> {
        use rand::seq::SliceRandom;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        order
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Lowest full-sample RMSE weights seen, including the starting point.
    pub weights: WeightSet,
    pub initial_rmse: f64,
    pub best_rmse: f64,
    /// 0 means the starting point was never improved upon.
    pub best_epoch: usize,
    pub epochs_run: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step<'a>(
        &mut self,
        cfg: &TrainConfig,
        params: impl Iterator<Item = &'a mut f64>,
        grads: impl Iterator<Item = &'a f64>,
    ) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
        }
    }
}

/// Trains a freshly initialised network on `(x, y)`.
pub fn train(
    x: &[Features],
    y: &[f64],
    arch: &Architecture,
    config: &TrainConfig,
) -> Result<TrainReport, NeuralError> {
    let init = init_network(arch, derive_seed(config.seed, "init"))?;
    let mut order = SeededShuffle::new(derive_seed(config.seed, "shuffle"));
    fit(init, x, y, config, &mut order)
}

/// Retrains only the output layer of `frozen`, starting from its own output
/// weights. Every earlier layer is carried over unchanged.
pub fn train_last_layer(
    frozen: &WeightSet,
    x: &[Features],
    y: &[f64],
    config: &TrainConfig,
) -> Result<TrainReport, NeuralError> {
    let config = TrainConfig {
        freeze_prefix: true,
        ..config.clone()
    };
    let mut order = SeededShuffle::new(derive_seed(config.seed, "shuffle"));
    fit(frozen.clone(), x, y, &config, &mut order)
}

/// Optimises `start` with Adam using the supplied batch order. Losses that
/// drive best-so-far selection are summed in the epoch's visiting order, so
/// the run depends on the data only through the sequence of batches.
pub fn fit(
    start: WeightSet,
    x: &[Features],
    y: &[f64],
    config: &TrainConfig,
    order: &mut dyn BatchOrder,
) -> Result<TrainReport, NeuralError> {
    config.validate()?;
    start.validate()?;
    check_data(&start, x, y)?;
    if config.freeze_prefix {
        fit_last_layer(start, x, y, config, order)
    } else {
        fit_all(start, x, y, config, order)
    }
}

struct Progress {
    initial: f64,
    best: f64,
    best_epoch: usize,
}

impl Progress {
    /// Records an epoch's MSE; returns true on improvement.
    fn observe(&mut self, epoch: usize, mse: f64) -> Result<bool, NeuralError> {
        if !mse.is_finite() {
            return Err(NeuralError::Divergence { epoch });
        }
        if mse < self.best {
            self.best = mse;
            self.best_epoch = epoch;
            return Ok(true);
        }
        Ok(false)
    }

    fn exhausted(&self, epoch: usize, patience: usize) -> bool {
        patience > 0 && epoch - self.best_epoch >= patience
    }
}

fn fit_all(
    mut w: WeightSet,
    x: &[Features],
    y: &[f64],
    config: &TrainConfig,
    order: &mut dyn BatchOrder,
) -> Result<TrainReport, NeuralError> {
    let n = y.len();
    let batch = config.effective_batch(n);
    let mut ws = Workspace::new(&w.architecture);
    let mut grad = Gradient::zeros_like(&w);
    let mut adam = Adam::new(w.architecture.n_params());

    let mse_in = |w: &WeightSet, idx: &[usize], ws: &mut Workspace| {
        idx.iter()
            .map(|&i| (forward_into(w, &x[i], ws) - y[i]).powi(2))
            .sum::<f64>()
            / n as f64
    };

    let mut current = order.epoch_order(1, n);
    let initial = mse_in(&w, &current, &mut ws);
    let mut progress = Progress {
        initial,
        best: f64::INFINITY,
        best_epoch: 0,
    };
    progress.observe(0, initial)?;
    let mut best = w.clone();
    let mut epochs_run = 0;

    for epoch in 1..=config.epochs {
        if epoch > 1 {
            current = order.epoch_order(epoch, n);
        }
        for chunk in current.chunks(batch) {
            grad.reset();
            let scale = 2.0 / chunk.len() as f64;
            for &i in chunk {
                let r = forward_into(&w, &x[i], &mut ws) - y[i];
                backward_into(&w, scale * r, &mut ws, &mut grad);
            }
            adam.step(
                config,
                w.params_mut(),
                grad.layers.iter().flat_map(Layer::params),
            );
        }
        epochs_run = epoch;
        let mse = mse_in(&w, &current, &mut ws);
        if progress.observe(epoch, mse)? {
            best = w.clone();
        }
        if progress.exhausted(epoch, config.early_stop_patience) {
            break;
        }
    }

    Ok(TrainReport {
        weights: best,
        initial_rmse: progress.initial.sqrt(),
        best_rmse: progress.best.sqrt(),
        best_epoch: progress.best_epoch,
        epochs_run,
    })
}

/// Output-layer-only training. The frozen prefix is evaluated once; the
/// problem is then linear in the output weights.
fn fit_last_layer(
    start: WeightSet,
    x: &[Features],
    y: &[f64],
    config: &TrainConfig,
    order: &mut dyn BatchOrder,
) -> Result<TrainReport, NeuralError> {
    let n = y.len();
    let batch = config.effective_batch(n);
    let mut ws = Workspace::new(&start.architecture);
    let n_last = start.layers.len() - 1;
    let hidden: Vec<Vec<f64>> = x
        .iter()
        .map(|row| {
            forward_into(&start, row, &mut ws);
            ws.post[n_last].clone()
        })
        .collect();

    let mut out = start.last_layer().clone();
    let mut grad = Layer::zeros(out.n_in, out.n_out);
    let mut adam = Adam::new(out.weights.len() + out.biases.len());
    let predict = |l: &Layer, h: &[f64]| {
        l.weights.iter().zip(h).map(|(w, a)| w * a).sum::<f64>() + l.biases[0]
    };
    let mse_in = |l: &Layer, idx: &[usize]| {
        idx.iter()
            .map(|&i| (predict(l, &hidden[i]) - y[i]).powi(2))
            .sum::<f64>()
            / n as f64
    };

    let mut current = order.epoch_order(1, n);
    let initial = mse_in(&out, &current);
    let mut progress = Progress {
        initial,
        best: f64::INFINITY,
        best_epoch: 0,
    };
    progress.observe(0, initial)?;
    let mut best = out.clone();
    let mut epochs_run = 0;

    for epoch in 1..=config.epochs {
        if epoch > 1 {
            current = order.epoch_order(epoch, n);
        }
        for chunk in current.chunks(batch) {
            grad.params_mut().for_each(|g| *g = 0.0);
            let scale = 2.0 / chunk.len() as f64;
            for &i in chunk {
                let d = scale * (predict(&out, &hidden[i]) - y[i]);
                for (g, a) in grad.weights.iter_mut().zip(&hidden[i]) {
                    *g += d * a;
                }
                grad.biases[0] += d;
            }
            adam.step(config, out.params_mut(), grad.params());
        }
        epochs_run = epoch;
        let mse = mse_in(&out, &current);
        if progress.observe(epoch, mse)? {
            best = out.clone();
        }
        if progress.exhausted(epoch, config.early_stop_patience) {
            break;
        }
    }

    let mut weights = start;
    *weights.layers.last_mut().expect("validated") = best;
    Ok(TrainReport {
        weights,
        initial_rmse: progress.initial.sqrt(),
        best_rmse: progress.best.sqrt(),
        best_epoch: progress.best_epoch,
        epochs_run,
    })
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sizes: Vec<String> = self.layer_sizes.iter().map(usize::to_string).collect();
        write!(f, "[{}]", sizes.join(", "))
    }
}
