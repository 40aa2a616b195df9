//! Small feed-forward networks trained by plain minibatch SGD.
//!
//! Each layer computes `z ↦ f(W z + b)` with `W` stored as `out × in`.
//! Dropout masks every layer input with Bernoulli(keep) draws during
//! training; inference multiplies layer inputs by `keep` instead.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, Matrix, StandardizationParams, Vector};
use crate::random::{permutation, substream, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
    Logistic,
}

impl Activation {
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Activation::Relu => a.max(0.0),
            Activation::Tanh => a.tanh(),
            Activation::Identity => a,
            Activation::Logistic => 1.0 / (1.0 + (-a).exp()),
        }
    }

    /// Derivative given the pre-activation `a` and output `z = f(a)`.
    fn derivative(self, a: f64, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - z * z,
            Activation::Identity => 1.0,
            Activation::Logistic => z * (1.0 - z),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub w: Matrix,
    pub b: Vector,
    pub activation: Activation,
}

impl Layer {
    fn forward_batch(&self, z: &Matrix) -> (Matrix, Matrix) {
        let mut a = z * self.w.transpose();
        for (j, mut col) in a.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.b[j]);
        }
        let out = a.map(|v| self.activation.apply(v));
        (a, out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    /// Dropout keep probability used in training; layer inputs are scaled by it at inference.
    pub keep: f64,
}

impl MlpModel {
    pub fn new(layers: Vec<Layer>, keep: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Validation("a network needs at least one layer".into()));
        }
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(Error::Validation(format!("keep probability must lie in (0, 1], got {keep}")));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.b.len() != layer.w.nrows() {
                return Err(Error::shape("layer bias", format!("{} entries", layer.w.nrows()), format!("{} entries", layer.b.len())));
            }
            if l > 0 && layers[l - 1].w.nrows() != layer.w.ncols() {
                return Err(Error::shape(
                    "layer chain",
                    format!("{} inputs to layer {l}", layers[l - 1].w.nrows()),
                    format!("{} inputs", layer.w.ncols()),
                ));
            }
            numerics::ensure_finite(&layer.w, "layer weights")?;
            if layer.b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("layer {l} bias is not finite")));
            }
        }
        Ok(Self { layers, keep })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").w.nrows()
    }

    /// The first `count` layers as a network of their own.
    pub fn truncated(&self, count: usize) -> Result<Self> {
        Self::new(self.layers[..count.min(self.layers.len())].to_vec(), self.keep)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vector> {
        let m = Matrix::from_row_slice(1, x.len(), x);
        Ok(self.forward_batch(&m)?.row(0).transpose())
    }

    /// Outputs for every row of `x`.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        self.forward_layers(x, self.layers.len())
    }

    /// Activations after the first `count` layers.
    pub fn forward_layers(&self, x: &Matrix, count: usize) -> Result<Matrix> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape("network input", format!("{} columns", self.input_dim()), format!("{} columns", x.ncols())));
        }
        numerics::ensure_finite(x, "network input")?;
        let mut z = x.clone();
        for layer in &self.layers[..count] {
            if self.keep < 1.0 {
                z *= self.keep;
            }
            z = layer.forward_batch(&z).1;
        }
        Ok(z)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    fn set_parameter(&mut self, mut idx: usize, value: f64) {
        for l in &mut self.layers {
            if idx < l.w.len() {
                l.w.as_mut_slice()[idx] = value;
                return;
            }
            idx -= l.w.len();
            if idx < l.b.len() {
                l.b[idx] = value;
                return;
            }
            idx -= l.b.len();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub input_dim: usize,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// `input → hidden… (hidden_activation) → output (output_activation)`.
    pub fn mlp(input_dim: usize, hidden: &[usize], hidden_activation: Activation, output_dim: usize, output_activation: Activation) -> Self {
        let mut layers: Vec<LayerSpec> = hidden
            .iter()
            .map(|&width| LayerSpec {
                width,
                activation: hidden_activation,
            })
            .collect();
        layers.push(LayerSpec {
            width: output_dim,
            activation: output_activation,
        });
        Self { input_dim, layers }
    }

    /// Glorot-uniform weights and zero biases.
    pub fn initialize(&self, rng: &mut SeededRng) -> Result<MlpModel> {
        if self.input_dim == 0 || self.layers.iter().any(|l| l.width == 0) {
            return Err(Error::Validation("layer widths must be positive".into()));
        }
        let mut fan_in = self.input_dim;
        let mut layers = Vec::with_capacity(self.layers.len());
        for spec in &self.layers {
            let limit = (6.0 / (fan_in + spec.width) as f64).sqrt();
            let w = Matrix::from_fn(spec.width, fan_in, |_, _| rng.random_range(-limit..limit));
            layers.push(Layer {
                w,
                b: Vector::zeros(spec.width),
                activation: spec.activation,
            });
            fan_in = spec.width;
        }
        MlpModel::new(layers, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    Mse,
    BinaryCrossEntropy,
}

impl Loss {
    /// Mean loss over rows (MSE also averages over output columns).
    pub fn value(self, pred: &Matrix, y: &Matrix) -> f64 {
        match self {
            Loss::Mse => (pred - y).norm_squared() / pred.len() as f64,
            Loss::BinaryCrossEntropy => {
                let eps = 1e-15;
                pred.iter()
                    .zip(y.iter())
                    .map(|(p, t)| {
                        let p = p.clamp(eps, 1.0 - eps);
                        -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
                    })
                    .sum::<f64>()
                    / pred.nrows() as f64
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant,
    /// `lr / √epoch`, epochs counted from 1.
    InvSqrtEpoch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub dropout_keep: f64,
    pub loss: Loss,
    pub schedule: LrSchedule,
    /// Layers whose biases stay at their initial value.
    #[serde(default)]
    pub frozen_bias_layers: Vec<usize>,
    /// With a holdout set, return the parameters of the epoch with the lowest holdout loss.
    #[serde(default)]
    pub restore_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            dropout_keep: 1.0,
            loss: Loss::Mse,
            schedule: LrSchedule::InvSqrtEpoch,
            frozen_bias_layers: Vec::new(),
            restore_best: false,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Validation(format!("learning rate must be >= 0, got {}", self.learning_rate)));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Validation("epochs and batch size must be positive".into()));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(Error::Validation(format!("dropout keep must lie in (0, 1], got {}", self.dropout_keep)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean minibatch loss during the epoch.
    pub train_loss: f64,
    pub holdout_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: MlpModel,
    pub trace: Vec<EpochLoss>,
}

/// Per-layer gradients, same shapes as the model parameters.
struct Grads {
    w: Vec<Matrix>,
    b: Vec<Vector>,
}

/// Loss and parameter gradients on one batch, with optional input masks.
fn backprop(model: &MlpModel, x: &Matrix, y: &Matrix, loss: Loss, masks: Option<&[Matrix]>) -> (f64, Grads) {
    let nl = model.layers.len();
    let mut inputs = Vec::with_capacity(nl);
    let mut pre = Vec::with_capacity(nl);
    let mut post = Vec::with_capacity(nl);
    let mut z = x.clone();
    for (l, layer) in model.layers.iter().enumerate() {
        if let Some(m) = masks {
            z.component_mul_assign(&m[l]);
        }
        let (a, out) = layer.forward_batch(&z);
        inputs.push(z);
        pre.push(a);
        z = out.clone();
        post.push(out);
    }
    let pred = &post[nl - 1];
    let value = loss.value(pred, y);
    let rows = x.nrows() as f64;
    let last = &model.layers[nl - 1];
    let mut delta = match loss {
        Loss::BinaryCrossEntropy if last.activation == Activation::Logistic => (pred - y) / rows,
        Loss::BinaryCrossEntropy => {
            let eps = 1e-15;
            let d = Matrix::from_fn(pred.nrows(), pred.ncols(), |i, j| {
                let p = pred[(i, j)].clamp(eps, 1.0 - eps);
                let t = y[(i, j)];
                (-(t / p) + (1.0 - t) / (1.0 - p)) / rows
            });
            d.zip_zip_map(&pre[nl - 1], pred, |g, a, z| g * last.activation.derivative(a, z))
        }
        Loss::Mse => {
            let scale = 2.0 / pred.len() as f64;
            (pred - y).zip_zip_map(&pre[nl - 1], pred, |r, a, z| scale * r * last.activation.derivative(a, z))
        }
    };
    let mut gw = vec![Matrix::zeros(0, 0); nl];
    let mut gb = vec![Vector::zeros(0); nl];
    for l in (0..nl).rev() {
        gw[l] = delta.transpose() * &inputs[l];
        gb[l] = Vector::from_iterator(delta.ncols(), delta.column_iter().map(|c| c.sum()));
        if l > 0 {
            let mut dz = &delta * &model.layers[l].w;
            if let Some(m) = masks {
                dz.component_mul_assign(&m[l]);
            }
            let act = model.layers[l - 1].activation;
            delta = dz.zip_zip_map(&pre[l - 1], &post[l - 1], |g, a, z| g * act.derivative(a, z));
        }
    }
    (value, Grads { w: gw, b: gb })
}

fn check_training_data(x: &Matrix, y: &Matrix, input_dim: usize, output_dim: usize) -> Result<()> {
    numerics::ensure_rows(x, y, "training data")?;
    if x.ncols() != input_dim || y.ncols() != output_dim {
        return Err(Error::shape(
            "training data",
            format!("{input_dim} inputs and {output_dim} outputs"),
            format!("{} inputs and {} outputs", x.ncols(), y.ncols()),
        ));
    }
    if x.nrows() == 0 {
        return Err(Error::Validation("no training rows".into()));
    }
    numerics::ensure_finite(x, "training inputs")?;
    numerics::ensure_finite(y, "training targets")
}

/// Continues SGD from `model`. Deterministic given `config.seed`.
pub fn train_from(model: MlpModel, config: &TrainConfig, x: &Matrix, y: &Matrix, holdout: Option<(&Matrix, &Matrix)>) -> Result<Trained> {
    config.validate()?;
    check_training_data(x, y, model.input_dim(), model.output_dim())?;
    let mut model = MlpModel::new(model.layers, config.dropout_keep)?;
    let keep = config.dropout_keep;
    let mut order_rng = substream(config.seed, 1);
    let mut mask_rng = substream(config.seed, 2);
    let n = x.nrows();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, MlpModel)> = None;
    for epoch in 1..=config.epochs {
        let lr = match config.schedule {
            LrSchedule::Constant => config.learning_rate,
            LrSchedule::InvSqrtEpoch => config.learning_rate / (epoch as f64).sqrt(),
        };
        let order = permutation(&mut order_rng, n);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xb = Matrix::from_fn(batch.len(), x.ncols(), |r, c| x[(batch[r], c)]);
            let yb = Matrix::from_fn(batch.len(), y.ncols(), |r, c| y[(batch[r], c)]);
            let masks: Option<Vec<Matrix>> = (keep < 1.0).then(|| {
                model
                    .layers
                    .iter()
                    .map(|l| Matrix::from_fn(batch.len(), l.w.ncols(), |_, _| if mask_rng.random_bool(keep) { 1.0 } else { 0.0 }))
                    .collect()
            });
            let (value, grads) = backprop(&model, &xb, &yb, config.loss, masks.as_deref());
            if !value.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            total += value * batch.len() as f64;
            if lr > 0.0 {
                for (l, layer) in model.layers.iter_mut().enumerate() {
                    layer.w -= &grads.w[l] * lr;
                    if !config.frozen_bias_layers.contains(&l) {
                        layer.b -= &grads.b[l] * lr;
                    }
                }
            }
        }
        let train_loss = total / n as f64;
        if !train_loss.is_finite() || model.layers.iter().any(|l| l.w.iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged { epoch });
        }
        let holdout_loss = match holdout {
            Some((hx, hy)) => Some(config.loss.value(&model.forward_batch(hx)?, hy)),
            None => None,
        };
        if let (true, Some(h)) = (config.restore_best, holdout_loss) {
            if best.as_ref().is_none_or(|(b, _)| h < *b) {
                best = Some((h, model.clone()));
            }
        }
        trace.push(EpochLoss {
            epoch,
            train_loss,
            holdout_loss,
        });
    }
    if let Some((_, m)) = best {
        model = m;
    }
    Ok(Trained { model, trace })
}

/// Minibatch SGD with backpropagation from a seeded Glorot initialization.
pub fn train_sgd(config: &TrainConfig, x: &Matrix, y: &Matrix, architecture: &Architecture) -> Result<Trained> {
    let model = architecture.initialize(&mut substream(config.seed, 0))?;
    train_from(model, config, x, y, None)
}

/// [`train_sgd`] with dropout; `config.dropout_keep = 1` reproduces it exactly.
pub fn train_dropout(config: &TrainConfig, x: &Matrix, y: &Matrix, architecture: &Architecture) -> Result<Trained> {
    train_sgd(config, x, y, architecture)
}

/// Largest relative difference between backpropagated gradients and
/// central finite differences (`h = 1e-5`) for one example.
pub fn gradient_check(model: &MlpModel, x: &[f64], y: &[f64], loss: Loss) -> Result<f64> {
    let xm = Matrix::from_row_slice(1, x.len(), x);
    let ym = Matrix::from_row_slice(1, y.len(), y);
    check_training_data(&xm, &ym, model.input_dim(), model.output_dim())?;
    let model = MlpModel::new(model.layers.clone(), 1.0)?;
    let (_, grads) = backprop(&model, &xm, &ym, loss, None);
    let analytic: Vec<f64> = grads
        .w
        .iter()
        .zip(&grads.b)
        .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
        .collect();
    let params = model.parameters();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for (i, &p0) in params.iter().enumerate() {
        probe.set_parameter(i, p0 + h);
        let up = loss.value(&probe.forward_batch(&xm)?, &ym);
        probe.set_parameter(i, p0 - h);
        let dn = loss.value(&probe.forward_batch(&xm)?, &ym);
        probe.set_parameter(i, p0);
        let numeric = (up - dn) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// A network with a narrow hidden layer whose activations serve as learned features.
#[derive(Debug, Clone)]
pub struct BottleneckFit {
    pub model: MlpModel,
    /// Number of layers up to and including the bottleneck.
    pub feature_layers: usize,
    pub x_std: StandardizationParams,
    pub y_std: StandardizationParams,
    pub trace: Vec<EpochLoss>,
}

impl BottleneckFit {
    /// Bottleneck activations `φ(x)` (n × width).
    pub fn features(&self, x: &Matrix) -> Result<Matrix> {
        let xs = self.x_std.apply(x)?;
        self.model.forward_layers(&xs, self.feature_layers)
    }

    pub fn feature_extractor(&self) -> Result<MlpModel> {
        self.model.truncated(self.feature_layers)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let xs = self.x_std.apply(x)?;
        self.y_std.invert(&self.model.forward_batch(&xs)?)
    }
}

/// Shape and fitting options of `input → encoder hidden → bottleneck → decoder hidden → output`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BottleneckConfig {
    pub encoder: Vec<usize>,
    pub bottleneck: usize,
    pub decoder: Vec<usize>,
    pub encoder_activation: Activation,
    /// Keep encoder and bottleneck biases at zero.
    pub bias_free_encoder: bool,
    /// Independent initializations; the one with the lowest validation loss is kept.
    pub restarts: usize,
    /// Fraction of rows held out for restart selection and early stopping (0 disables both).
    pub validation_frac: f64,
}

impl Default for BottleneckConfig {
    fn default() -> Self {
        Self {
            encoder: vec![64],
            bottleneck: 1,
            decoder: vec![64],
            encoder_activation: Activation::Relu,
            bias_free_encoder: false,
            restarts: 1,
            validation_frac: 0.0,
        }
    }
}

/// Trains `F(x) = f(φ(x))` on standardized data, with relu hidden layers and
/// a linear bottleneck of any width.
pub fn fit_bottleneck_network(x: &Matrix, y: &Matrix, spec: &BottleneckConfig, config: &TrainConfig) -> Result<BottleneckFit> {
    if spec.bottleneck == 0 {
        return Err(Error::Validation("bottleneck width must be positive".into()));
    }
    if spec.restarts == 0 || !(0.0..1.0).contains(&spec.validation_frac) {
        return Err(Error::Validation(format!(
            "need restarts >= 1 and a validation fraction in [0, 1), got {} and {}",
            spec.restarts, spec.validation_frac
        )));
    }
    numerics::ensure_rows(x, y, "bottleneck data")?;
    let (xs, x_std) = numerics::standardize(x)?;
    let (ys, y_std) = numerics::standardize(y)?;
    let mut layers: Vec<LayerSpec> = spec
        .encoder
        .iter()
        .map(|&width| LayerSpec {
            width,
            activation: spec.encoder_activation,
        })
        .collect();
    layers.push(LayerSpec {
        width: spec.bottleneck,
        activation: Activation::Identity,
    });
    let feature_layers = layers.len();
    layers.extend(spec.decoder.iter().map(|&width| LayerSpec {
        width,
        activation: Activation::Relu,
    }));
    layers.push(LayerSpec {
        width: y.ncols(),
        activation: Activation::Identity,
    });
    let arch = Architecture {
        input_dim: x.ncols(),
        layers,
    };
    let mut config = config.clone();
    if spec.bias_free_encoder {
        config.frozen_bias_layers.extend(0..=spec.encoder.len());
    }
    let n = x.nrows();
    let n_val = (spec.validation_frac * n as f64).round() as usize;
    if n_val >= n {
        return Err(Error::Validation("validation split leaves no training rows".into()));
    }
    let (fit_x, fit_y, val) = if n_val > 0 {
        let order = permutation(&mut substream(config.seed, 3), n);
        let (v, t) = order.split_at(n_val);
        let sel = |m: &Matrix, rows: &[usize]| crate::random::select_rows(m, rows);
        (sel(&xs, t), sel(&ys, t), Some((sel(&xs, v), sel(&ys, v))))
    } else {
        (xs.clone(), ys.clone(), None)
    };
    config.restore_best = val.is_some();
    let mut best: Option<(f64, Trained)> = None;
    for r in 0..spec.restarts {
        let mut c = config.clone();
        c.seed = config.seed.wrapping_add(r as u64);
        let init = arch.initialize(&mut substream(c.seed, 0))?;
        let trained = train_from(init, &c, &fit_x, &fit_y, val.as_ref().map(|(a, b)| (a, b)))?;
        let score = match &val {
            Some((vx, vy)) => Loss::Mse.value(&trained.model.forward_batch(vx)?, vy),
            None => 0.0,
        };
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, trained));
        }
    }
    let (_, trained) = best.expect("at least one restart");
    Ok(BottleneckFit {
        model: trained.model,
        feature_layers,
        x_std,
        y_std,
        trace: trained.trace,
    })
}

/// Scalar-bottleneck ridge-function network `ŷ = f(φ(x))`, `φ: Rᵖ → R`.
pub fn fit_bottleneck(x: &Matrix, y: &Vector, spec: &BottleneckConfig, config: &TrainConfig) -> Result<BottleneckFit> {
    if spec.bottleneck != 1 {
        return Err(Error::Validation(format!("the ridge-function bottleneck must have width 1, got {}", spec.bottleneck)));
    }
    let ym = Matrix::from_column_slice(y.len(), 1, y.as_slice());
    fit_bottleneck_network(x, &ym, spec, config)
}

#[derive(Debug, Clone)]
pub struct AutoencoderFit {
    pub model: MlpModel,
    pub reconstruction_mse: f64,
    pub trace: Vec<EpochLoss>,
}

/// `L → hidden → L` network trained to reproduce its input.
pub fn fit_autoencoder(t: &Matrix, hidden: usize, activation: Activation, config: &TrainConfig) -> Result<AutoencoderFit> {
    let l = t.ncols();
    if hidden == 0 || hidden >= l {
        return Err(Error::Validation(format!("autoencoder hidden width {hidden} must lie in 1..{l}")));
    }
    let arch = Architecture::mlp(l, &[hidden], activation, l, Activation::Identity);
    let trained = train_sgd(config, t, t, &arch)?;
    let reconstruction_mse = Loss::Mse.value(&trained.model.forward_batch(t)?, t);
    Ok(AutoencoderFit {
        model: trained.model,
        reconstruction_mse,
        trace: trained.trace,
    })
}

/// Rows of the fixed first-layer weights of the donut classifier.
pub const DONUT_WEIGHTS: [[f64; 2]; 4] = [[1.0, 1.0], [-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0]];

/// The fixed-weight donut classifier: relu hidden layer over four
/// hyperplanes, then a logistic output with `μ = −3 + Σ z_k`.
pub fn donut_network() -> MlpModel {
    let w1 = Matrix::from_fn(4, 2, |r, c| DONUT_WEIGHTS[r][c]);
    let hidden = Layer {
        w: w1,
        b: Vector::zeros(4),
        activation: Activation::Relu,
    };
    let out = Layer {
        w: Matrix::from_element(1, 4, 1.0),
        b: Vector::from_element(1, -3.0),
        activation: Activation::Logistic,
    };
    MlpModel::new(vec![hidden, out], 1.0).expect("fixed shapes chain")
}

/// `μ(x) = −3 + Σ_k relu(a_k · x)`.
pub fn donut_logit(x: [f64; 2]) -> f64 {
    -3.0 + DONUT_WEIGHTS.iter().map(|w| (w[0] * x[0] + w[1] * x[1]).max(0.0)).sum::<f64>()
}

/// Class-1 probability `e^μ / (1 + e^μ)`.
pub fn donut_classifier_fixed(x: &[f64]) -> Result<f64> {
    let &[x1, x2] = x else {
        return Err(Error::Validation(format!("the donut classifier takes 2 inputs, got {}", x.len())));
    };
    let mu = donut_logit([x1, x2]);
    Ok(1.0 / (1.0 + (-mu).exp()))
}

/// Serializable layer `{W, b, activation}` with `W` as nested rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerRecord {
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpRecord {
    pub layers: Vec<LayerRecord>,
    pub keep: f64,
}

impl From<&MlpModel> for MlpRecord {
    fn from(m: &MlpModel) -> Self {
        Self {
            layers: m
                .layers
                .iter()
                .map(|l| LayerRecord {
                    w: numerics::to_rows(&l.w),
                    b: l.b.iter().copied().collect(),
                    activation: l.activation,
                })
                .collect(),
            keep: m.keep,
        }
    }
}

impl TryFrom<MlpRecord> for MlpModel {
    type Error = Error;

    fn try_from(r: MlpRecord) -> Result<Self> {
        let layers = r
            .layers
            .into_iter()
            .map(|l| {
                Ok(Layer {
                    w: numerics::matrix_from_rows(&l.w)?,
                    b: Vector::from_vec(l.b),
                    activation: l.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MlpModel::new(layers, r.keep)
    }
}
