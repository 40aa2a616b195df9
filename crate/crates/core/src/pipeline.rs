//! Composite models: a deterministic transform of the inputs followed by
//! per-component predictive heads and a linear map back to the outputs.
//!
//! Prediction runs `x → features → head outputs Û → Û·Q → de-standardize`.
//! Head variances propagate through `Q` assuming independent heads:
//! `var_j = Σ_k Q_kj² var_k`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{fit_gp, GpConfig, GpModel, GpRecord};
use crate::nnet::{self, Activation, Architecture, BottleneckConfig, Layer, MlpModel, MlpRecord, TrainConfig};
use crate::numerics::{self, Matrix, StandardizationParams, Vector};
use crate::pls::{fit_pls, PlsModel, PlsRecord};
use crate::random::{fold_assignment, select_rows, substream};

/// Rows of `|y|` at or below this are left out of MAPE.
pub const MAPE_ZERO_TOL: f64 = 1e-12;
/// `|cos|` above `1 − SIGN_DUPLICATE_TOL` marks two output loadings as the same direction.
const SIGN_DUPLICATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Transform {
    /// Standardized inputs, no reduction.
    Identity { x_std: StandardizationParams },
    /// PLS x-scores.
    Pls(PlsModel),
    /// Projection of standardized inputs on `basis` (p × k).
    Pca { x_std: StandardizationParams, basis: Matrix },
    /// Bottleneck activations of a trained network, applied to standardized inputs.
    Bottleneck { extractor: MlpModel, x_std: StandardizationParams },
}

impl Transform {
    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Transform::Identity { x_std } => x_std.apply(x),
            Transform::Pls(m) => m.transform(x),
            Transform::Pca { x_std, basis } => Ok(x_std.apply(x)? * basis),
            Transform::Bottleneck { extractor, x_std } => extractor.forward_batch(&x_std.apply(x)?),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Transform::Identity { x_std } | Transform::Pca { x_std, .. } | Transform::Bottleneck { x_std, .. } => x_std.dim(),
            Transform::Pls(m) => m.n_inputs(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Transform::Identity { x_std } => x_std.dim(),
            Transform::Pls(m) => m.components(),
            Transform::Pca { basis, .. } => basis.ncols(),
            Transform::Bottleneck { extractor, .. } => extractor.output_dim(),
        }
    }

    /// Leading principal directions of standardized `x`.
    pub fn pca(x: &Matrix, k: usize) -> Result<Self> {
        let (xs, x_std) = numerics::standardize(x)?;
        let svd = numerics::svd(&xs)?;
        if k == 0 || k > svd.rank() {
            return Err(Error::Validation(format!("PCA dimension must lie in 1..={}, got {k}", svd.rank())));
        }
        Ok(Transform::Pca {
            x_std,
            basis: svd.v.columns(0, k).into_owned(),
        })
    }
}

/// Predictor of one block of head-space columns from transform features.
#[derive(Debug, Clone)]
pub enum Head {
    /// One column; the GP is fit to the standardized target.
    Gp { model: GpModel, target: StandardizationParams },
    /// Network on standardized features and targets.
    Mlp {
        model: MlpModel,
        input: StandardizationParams,
        output: StandardizationParams,
    },
    /// Affine map `f·coef + intercept`.
    Linear { coef: Matrix, intercept: Vector },
}

impl Head {
    pub fn width(&self) -> usize {
        match self {
            Head::Gp { .. } => 1,
            Head::Mlp { model, .. } => model.output_dim(),
            Head::Linear { coef, .. } => coef.ncols(),
        }
    }

    /// Means and variances (m × width).
    pub fn predict(&self, f: &Matrix) -> Result<(Matrix, Matrix)> {
        match self {
            Head::Gp { model, target } => {
                let pred = model.predict(f)?;
                let (m, s) = (target.means[0], target.sds[0]);
                let mean = Matrix::from_iterator(f.nrows(), 1, pred.mean.iter().map(|v| v * s + m));
                let var = Matrix::from_iterator(f.nrows(), 1, pred.variance.iter().map(|v| v * s * s));
                Ok((mean, var))
            }
            Head::Mlp { model, input, output } => {
                let out = output.invert(&model.forward_batch(&input.apply(f)?)?)?;
                let zeros = Matrix::zeros(out.nrows(), out.ncols());
                Ok((out, zeros))
            }
            Head::Linear { coef, intercept } => {
                if f.ncols() != coef.nrows() {
                    return Err(Error::shape("linear head", format!("{} features", coef.nrows()), format!("{}", f.ncols())));
                }
                let mut mean = f * coef;
                for (j, mut col) in mean.column_iter_mut().enumerate() {
                    col.add_scalar_mut(intercept[j]);
                }
                let zeros = Matrix::zeros(mean.nrows(), mean.ncols());
                Ok((mean, zeros))
            }
        }
    }
}

/// Standardization that falls back to centering for constant columns.
fn target_scaling(m: &Matrix) -> Result<StandardizationParams> {
    match StandardizationParams::fit(m) {
        Err(Error::DegenerateColumn { .. }) => StandardizationParams::center(m),
        other => other,
    }
}

fn fit_gp_head(f: &Matrix, target: &Matrix, config: &GpConfig) -> Result<Head> {
    let scaling = target_scaling(target)?;
    let z = scaling.apply(target)?;
    let model = fit_gp(f, &z.column(0).into_owned(), config)?;
    Ok(Head::Gp { model, target: scaling })
}

/// Closed-form least squares with intercept.
fn fit_linear_head(f: &Matrix, target: &Matrix) -> Result<Head> {
    let n = f.nrows();
    let design = Matrix::from_fn(n, f.ncols() + 1, |i, j| if j == 0 { 1.0 } else { f[(i, j - 1)] });
    let sol = numerics::solve_ols(&design, target)?;
    Ok(Head::Linear {
        coef: sol.rows(1, f.ncols()).into_owned(),
        intercept: sol.row(0).transpose(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    pub mean: Matrix,
    /// Zero for deterministic heads.
    pub sd: Matrix,
}

impl PredictiveDistribution {
    pub fn deterministic(mean: Matrix) -> Self {
        let sd = Matrix::zeros(mean.nrows(), mean.ncols());
        Self { mean, sd }
    }

    /// `mean ± 1.96·sd`.
    pub fn band95(&self) -> (Matrix, Matrix) {
        (&self.mean - &self.sd * 1.96, &self.mean + &self.sd * 1.96)
    }
}

#[derive(Debug, Clone)]
pub struct CompositeModel {
    pub transform: Transform,
    pub heads: Vec<Head>,
    /// Head space to standardized outputs (heads' total width × q).
    pub back_projection: Matrix,
    pub y_std: StandardizationParams,
}

impl CompositeModel {
    pub fn new(transform: Transform, heads: Vec<Head>, back_projection: Matrix, y_std: StandardizationParams) -> Result<Self> {
        let width: usize = heads.iter().map(Head::width).sum();
        if heads.is_empty() || back_projection.shape() != (width, y_std.dim()) {
            return Err(Error::shape(
                "composite model",
                format!("back-projection {width}x{}", y_std.dim()),
                format!("{:?} with {} heads", back_projection.shape(), heads.len()),
            ));
        }
        Ok(Self {
            transform,
            heads,
            back_projection,
            y_std,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.transform.input_dim()
    }

    pub fn n_outputs(&self) -> usize {
        self.y_std.dim()
    }

    pub fn predict(&self, x: &Matrix) -> Result<PredictiveDistribution> {
        if x.ncols() != self.n_inputs() {
            return Err(Error::shape("composite input", format!("{} columns", self.n_inputs()), format!("{} columns", x.ncols())));
        }
        let f = self.transform.apply(x)?;
        let m = x.nrows();
        let width = self.back_projection.nrows();
        let mut mean_h = Matrix::zeros(m, width);
        let mut var_h = Matrix::zeros(m, width);
        let mut col = 0;
        for head in &self.heads {
            let (mu, var) = head.predict(&f)?;
            let w = mu.ncols();
            mean_h.columns_mut(col, w).copy_from(&mu);
            var_h.columns_mut(col, w).copy_from(&var);
            col += w;
        }
        let ys = &mean_h * &self.back_projection;
        let var_s = &var_h * self.back_projection.map(|v| v * v);
        let mean = self.y_std.invert(&ys)?;
        let sd = Matrix::from_fn(m, self.n_outputs(), |i, j| var_s[(i, j)].max(0.0).sqrt() * self.y_std.sds[j]);
        Ok(PredictiveDistribution { mean, sd })
    }
}

/// Anything that yields a predictive distribution for new inputs.
pub trait Predictor {
    fn predict_distribution(&self, x: &Matrix) -> Result<PredictiveDistribution>;
}

impl Predictor for CompositeModel {
    fn predict_distribution(&self, x: &Matrix) -> Result<PredictiveDistribution> {
        self.predict(x)
    }
}

impl Predictor for MlpModel {
    fn predict_distribution(&self, x: &Matrix) -> Result<PredictiveDistribution> {
        Ok(PredictiveDistribution::deterministic(self.forward_batch(x)?))
    }
}

impl Predictor for GpModel {
    fn predict_distribution(&self, x: &Matrix) -> Result<PredictiveDistribution> {
        let p = self.predict(x)?;
        let m = x.nrows();
        Ok(PredictiveDistribution {
            mean: Matrix::from_column_slice(m, 1, p.mean.as_slice()),
            sd: Matrix::from_iterator(m, 1, p.sd().iter().copied()),
        })
    }
}

impl Predictor for PlsModel {
    fn predict_distribution(&self, x: &Matrix) -> Result<PredictiveDistribution> {
        Ok(PredictiveDistribution::deterministic(self.predict(x)?))
    }
}

impl<F> Predictor for F
where
    F: Fn(&Matrix) -> Result<PredictiveDistribution>,
{
    fn predict_distribution(&self, x: &Matrix) -> Result<PredictiveDistribution> {
        self(x)
    }
}

/// Output loadings with sign-duplicate rows removed, and the back-projection
/// `pinv(Cᵀ)` from head space to standardized outputs.
fn score_targets(pls: &PlsModel) -> Result<(Matrix, Matrix)> {
    let c = &pls.y_loadings;
    let mut keep: Vec<usize> = Vec::new();
    for k in 0..c.nrows() {
        let row = c.row(k);
        let norm = row.norm();
        if norm == 0.0 {
            continue;
        }
        let dup = keep.iter().any(|&j| {
            let other = c.row(j);
            (row.dot(&other) / (norm * other.norm())).abs() >= 1.0 - SIGN_DUPLICATE_TOL
        });
        if !dup {
            keep.push(k);
        }
    }
    if keep.is_empty() {
        return Err(Error::Validation("the PLS model has no output loadings".into()));
    }
    let reduced = Matrix::from_fn(keep.len(), c.ncols(), |r, j| c[(keep[r], j)]);
    let bp = numerics::pseudo_inverse(&reduced.transpose())?;
    Ok((reduced, bp))
}

/// PLS followed by one GP per output score `u_k = Ys·c_k` regressed on all x-scores.
pub fn fit_pls_gp(x: &Matrix, y: &Matrix, components: usize, gp_config: &GpConfig) -> Result<CompositeModel> {
    let pls = fit_pls(x, y, components)?;
    let t = pls.transform(x)?;
    let ys = pls.y_std.apply(y)?;
    let (c, bp) = score_targets(&pls)?;
    let u = &ys * c.transpose();
    let mut heads = Vec::with_capacity(u.ncols());
    for k in 0..u.ncols() {
        let cfg = GpConfig {
            seed: gp_config.seed.wrapping_add(k as u64),
            ..gp_config.clone()
        };
        heads.push(fit_gp_head(&t, &u.columns(k, 1).into_owned(), &cfg)?);
    }
    let y_std = pls.y_std.clone();
    CompositeModel::new(Transform::Pls(pls), heads, bp, y_std)
}

/// A GP per output on standardized inputs.
pub fn fit_plain_gp(x: &Matrix, y: &Matrix, gp_config: &GpConfig) -> Result<CompositeModel> {
    numerics::ensure_rows(x, y, "fit_plain_gp")?;
    let x_std = StandardizationParams::fit(x)?;
    let xs = x_std.apply(x)?;
    let y_std = target_scaling(y)?;
    let ys = y_std.apply(y)?;
    let heads = (0..y.ncols())
        .map(|j| {
            let cfg = GpConfig {
                seed: gp_config.seed.wrapping_add(j as u64),
                ..gp_config.clone()
            };
            fit_gp_head(&xs, &ys.columns(j, 1).into_owned(), &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    CompositeModel::new(Transform::Identity { x_std }, heads, Matrix::identity(y.ncols(), y.ncols()), y_std)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DlGpConfig {
    pub reduced_dim: usize,
    /// Network shape; its bottleneck width is replaced by `reduced_dim`.
    pub network: BottleneckConfig,
    pub train: TrainConfig,
    pub gp: GpConfig,
}

impl Default for DlGpConfig {
    fn default() -> Self {
        Self {
            reduced_dim: 10,
            network: BottleneckConfig {
                encoder_activation: Activation::Identity,
                bias_free_encoder: true,
                restarts: 2,
                validation_frac: 0.2,
                ..BottleneckConfig::default()
            },
            train: TrainConfig {
                learning_rate: 0.05,
                epochs: 300,
                batch_size: 16,
                ..TrainConfig::default()
            },
            gp: GpConfig::default(),
        }
    }
}

/// Trains a bottleneck network on `Y`, freezes its reduced layer, and fits
/// GP heads on the reduced features.
pub fn fit_dl_gp(x: &Matrix, y: &Matrix, config: &DlGpConfig) -> Result<CompositeModel> {
    let p = x.ncols();
    if config.reduced_dim == 0 || config.reduced_dim > p {
        return Err(Error::Validation(format!("reduced dimension must lie in 1..={p}, got {}", config.reduced_dim)));
    }
    let spec = BottleneckConfig {
        bottleneck: config.reduced_dim,
        ..config.network.clone()
    };
    let fit = nnet::fit_bottleneck_network(x, y, &spec, &config.train)?;
    let extractor = fit.feature_extractor()?;
    let features = fit.features(x)?;
    let ys = fit.y_std.apply(y)?;
    let heads = (0..y.ncols())
        .map(|j| {
            let cfg = GpConfig {
                seed: config.gp.seed.wrapping_add(j as u64),
                ..config.gp.clone()
            };
            fit_gp_head(&features, &ys.columns(j, 1).into_owned(), &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let transform = Transform::Bottleneck {
        extractor,
        x_std: fit.x_std.clone(),
    };
    CompositeModel::new(transform, heads, Matrix::identity(y.ncols(), y.ncols()), fit.y_std)
}

/// The map `G` from x-scores to output scores in DL-PLS.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ScoreMap {
    /// Least squares; reproduces PLS.
    Linear,
    /// Relu network with the given hidden widths.
    Mlp { hidden: Vec<usize>, train: TrainConfig },
    /// `L → hidden → L` autoencoder pretrained on the scores, then fine-tuned to predict `U`.
    Autoencoder {
        hidden: usize,
        activation: Activation,
        pretrain: TrainConfig,
        train: TrainConfig,
    },
}

#[derive(Debug, Clone)]
pub struct DlPlsFit {
    pub model: CompositeModel,
    /// Autoencoder reconstruction MSE of the standardized scores.
    pub reconstruction_mse: Option<f64>,
}

/// Two-step DL-PLS: PLS first, then `G: T → U` with `Ŷ = G(T*)·Q`.
pub fn fit_dl_pls(x: &Matrix, y: &Matrix, components: usize, map: &ScoreMap) -> Result<DlPlsFit> {
    let pls = fit_pls(x, y, components)?;
    let t = pls.transform(x)?;
    let ys = pls.y_std.apply(y)?;
    let (c, bp) = score_targets(&pls)?;
    let u = &ys * c.transpose();
    let mut reconstruction_mse = None;
    let head = match map {
        ScoreMap::Linear => fit_linear_head(&t, &u)?,
        ScoreMap::Mlp { hidden, train } => {
            let input = target_scaling(&t)?;
            let output = target_scaling(&u)?;
            let arch = Architecture::mlp(t.ncols(), hidden, Activation::Relu, u.ncols(), Activation::Identity);
            let trained = nnet::train_sgd(train, &input.apply(&t)?, &output.apply(&u)?, &arch)?;
            Head::Mlp {
                model: trained.model,
                input,
                output,
            }
        }
        ScoreMap::Autoencoder {
            hidden,
            activation,
            pretrain,
            train,
        } => {
            let input = target_scaling(&t)?;
            let output = target_scaling(&u)?;
            let ts = input.apply(&t)?;
            let us = output.apply(&u)?;
            let ae = nnet::fit_autoencoder(&ts, *hidden, *activation, pretrain)?;
            reconstruction_mse = Some(ae.reconstruction_mse);
            let mut layers = ae.model.layers.clone();
            if us.ncols() != ts.ncols() {
                let fresh = Architecture::mlp(*hidden, &[], Activation::Identity, us.ncols(), Activation::Identity)
                    .initialize(&mut substream(train.seed, 7))?;
                layers.pop();
                layers.push(fresh.layers.into_iter().next().expect("one layer"));
            }
            let start = MlpModel::new(layers, 1.0)?;
            let trained = nnet::train_from(start, train, &ts, &us, None)?;
            Head::Mlp {
                model: trained.model,
                input,
                output,
            }
        }
    };
    let y_std = pls.y_std.clone();
    let model = CompositeModel::new(Transform::Pls(pls), vec![head], bp, y_std)?;
    Ok(DlPlsFit { model, reconstruction_mse })
}

/// Leading right singular vectors of centered multivariate outputs.
#[derive(Debug, Clone)]
pub struct OutputBasis {
    pub mean: Vec<f64>,
    /// q × k, orthonormal columns.
    pub basis: Matrix,
    /// n × k weight series `(Y − mean)·basis`.
    pub weights: Matrix,
}

impl OutputBasis {
    pub fn fit(y: &Matrix, k: usize) -> Result<Self> {
        let center = StandardizationParams::center(y)?;
        let yc = center.apply(y)?;
        let svd = numerics::svd(&yc)?;
        let rank = svd.rank();
        if k == 0 || k > rank {
            return Err(Error::Validation(format!("output basis size must lie in 1..={rank} (the output rank), got {k}")));
        }
        let basis = svd.v.columns(0, k).into_owned();
        let weights = &yc * &basis;
        Ok(Self {
            mean: center.means,
            basis,
            weights,
        })
    }

    /// `weights·basisᵀ + mean`.
    pub fn reconstruct(&self) -> Matrix {
        let mut out = &self.weights * self.basis.transpose();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.mean[j]);
        }
        out
    }
}

/// GP per output-basis weight series, regressed on standardized `X`.
pub fn fit_pca_gp(x: &Matrix, y: &Matrix, k: usize, gp_config: &GpConfig) -> Result<CompositeModel> {
    numerics::ensure_rows(x, y, "fit_pca_gp")?;
    if y.ncols() < 2 {
        return Err(Error::Validation("output PCA needs at least 2 output columns".into()));
    }
    if k > y.ncols() {
        return Err(Error::Validation(format!("basis size {k} exceeds the {} outputs", y.ncols())));
    }
    let basis = OutputBasis::fit(y, k)?;
    let x_std = StandardizationParams::fit(x)?;
    let xs = x_std.apply(x)?;
    let heads = (0..k)
        .map(|j| {
            let cfg = GpConfig {
                seed: gp_config.seed.wrapping_add(j as u64),
                ..gp_config.clone()
            };
            fit_gp_head(&xs, &basis.weights.columns(j, 1).into_owned(), &cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let y_std = StandardizationParams {
        means: basis.mean.clone(),
        sds: vec![1.0; y.ncols()],
    };
    CompositeModel::new(Transform::Identity { x_std }, heads, basis.basis.transpose(), y_std)
}

/// Equal-weight average: mean of means, and mixture sd
/// `sqrt(mean of variances + variance of means)`.
pub fn ensemble_average(predictors: &[&dyn Predictor], x: &Matrix) -> Result<PredictiveDistribution> {
    let Some((first, rest)) = predictors.split_first() else {
        return Err(Error::Validation("an ensemble needs at least one member".into()));
    };
    let d0 = first.predict_distribution(x)?;
    let shape = d0.mean.shape();
    let mut sum = d0.mean.clone();
    let mut sum_sq = d0.mean.map(|v| v * v);
    let mut sum_var = d0.sd.map(|v| v * v);
    for (i, p) in rest.iter().enumerate() {
        let d = p.predict_distribution(x)?;
        if d.mean.shape() != shape {
            return Err(Error::shape("ensemble member", format!("{shape:?}"), format!("{:?} (member {})", d.mean.shape(), i + 1)));
        }
        sum += &d.mean;
        sum_sq += d.mean.map(|v| v * v);
        sum_var += d.sd.map(|v| v * v);
    }
    let n = predictors.len() as f64;
    if n == 1.0 {
        return Ok(d0);
    }
    let mean = sum / n;
    let sd = Matrix::from_fn(shape.0, shape.1, |i, j| {
        let spread = (sum_sq[(i, j)] / n - mean[(i, j)] * mean[(i, j)]).max(0.0);
        (sum_var[(i, j)] / n + spread).sqrt()
    });
    Ok(PredictiveDistribution { mean, sd })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mape: f64,
    /// Entries left out of MAPE because `|y| ≤ 1e-12`.
    pub mape_excluded: usize,
}

pub fn metrics(y_true: &Matrix, y_pred: &Matrix) -> Result<Metrics> {
    if y_true.shape() != y_pred.shape() {
        return Err(Error::shape("metrics", format!("{:?}", y_true.shape()), format!("{:?}", y_pred.shape())));
    }
    if y_true.is_empty() {
        return Err(Error::Validation("metrics need at least one value".into()));
    }
    let rmse = ((y_true - y_pred).norm_squared() / y_true.len() as f64).sqrt();
    let (mut total, mut used, mut excluded) = (0.0, 0usize, 0usize);
    for (t, p) in y_true.iter().zip(y_pred.iter()) {
        if t.abs() <= MAPE_ZERO_TOL {
            excluded += 1;
        } else {
            total += ((t - p) / t).abs();
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::UndefinedMetric("MAPE is undefined when every true value is zero".into()));
    }
    Ok(Metrics {
        rmse,
        mape: total / used as f64,
        mape_excluded: excluded,
    })
}

#[derive(Debug, Clone)]
pub struct CvRow<C> {
    pub config: C,
    /// Mean held-out RMSE over folds.
    pub rmse: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineCv<C> {
    pub best: C,
    pub best_index: usize,
    pub table: Vec<CvRow<C>>,
}

/// K-fold selection over `grid`, which must be ordered from the smallest
/// model up; ties go to the earlier entry.
pub fn cross_validate_pipeline<C, B>(builder: B, x: &Matrix, y: &Matrix, grid: &[C], folds: usize, seed: u64) -> Result<PipelineCv<C>>
where
    C: Clone,
    B: Fn(&Matrix, &Matrix, &C) -> Result<Box<dyn Predictor>>,
{
    numerics::ensure_rows(x, y, "cross_validate_pipeline")?;
    let n = x.nrows();
    if grid.is_empty() {
        return Err(Error::Validation("the configuration grid is empty".into()));
    }
    if folds < 2 || folds > n {
        return Err(Error::Validation(format!("folds must lie in 2..={n}, got {folds}")));
    }
    let labels = fold_assignment(n, folds, seed);
    let mut table = Vec::with_capacity(grid.len());
    for config in grid {
        let mut total = 0.0;
        for fold in 0..folds {
            let train: Vec<usize> = (0..n).filter(|&i| labels[i] != fold).collect();
            let test: Vec<usize> = (0..n).filter(|&i| labels[i] == fold).collect();
            let model = builder(&select_rows(x, &train), &select_rows(y, &train), config)?;
            let pred = model.predict_distribution(&select_rows(x, &test))?;
            total += metrics(&select_rows(y, &test), &pred.mean).map_or_else(
                |_| ((select_rows(y, &test) - &pred.mean).norm_squared() / (test.len() * y.ncols()) as f64).sqrt(),
                |m| m.rmse,
            );
        }
        table.push(CvRow {
            config: config.clone(),
            rmse: total / folds as f64,
        });
    }
    let mut best_index = 0;
    for (i, row) in table.iter().enumerate().skip(1) {
        let best = table[best_index].rmse;
        if row.rmse < best - 1e-12 * best.abs() {
            best_index = i;
        }
    }
    Ok(PipelineCv {
        best: table[best_index].config.clone(),
        best_index,
        table,
    })
}

/// Serializable transform stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TransformRecord {
    Identity { x_std: StandardizationParams },
    Pls(PlsRecord),
    Pca { x_std: StandardizationParams, basis: Vec<Vec<f64>> },
    Bottleneck { extractor: MlpRecord, x_std: StandardizationParams },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HeadRecord {
    Gp { model: GpRecord, target: StandardizationParams },
    Mlp {
        model: MlpRecord,
        input: StandardizationParams,
        output: StandardizationParams,
    },
    Linear { coef: Vec<Vec<f64>>, intercept: Vec<f64> },
}

/// `{transform, heads, Q, y_std}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompositeRecord {
    pub transform: TransformRecord,
    pub heads: Vec<HeadRecord>,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub y_std: StandardizationParams,
}

impl From<&CompositeModel> for CompositeRecord {
    fn from(m: &CompositeModel) -> Self {
        let transform = match &m.transform {
            Transform::Identity { x_std } => TransformRecord::Identity { x_std: x_std.clone() },
            Transform::Pls(p) => TransformRecord::Pls(p.into()),
            Transform::Pca { x_std, basis } => TransformRecord::Pca {
                x_std: x_std.clone(),
                basis: numerics::to_rows(basis),
            },
            Transform::Bottleneck { extractor, x_std } => TransformRecord::Bottleneck {
                extractor: extractor.into(),
                x_std: x_std.clone(),
            },
        };
        let heads = m
            .heads
            .iter()
            .map(|h| match h {
                Head::Gp { model, target } => HeadRecord::Gp {
                    model: model.into(),
                    target: target.clone(),
                },
                Head::Mlp { model, input, output } => HeadRecord::Mlp {
                    model: model.into(),
                    input: input.clone(),
                    output: output.clone(),
                },
                Head::Linear { coef, intercept } => HeadRecord::Linear {
                    coef: numerics::to_rows(coef),
                    intercept: intercept.iter().copied().collect(),
                },
            })
            .collect();
        Self {
            transform,
            heads,
            q: numerics::to_rows(&m.back_projection),
            y_std: m.y_std.clone(),
        }
    }
}

impl TryFrom<CompositeRecord> for CompositeModel {
    type Error = Error;

    fn try_from(r: CompositeRecord) -> Result<Self> {
        let transform = match r.transform {
            TransformRecord::Identity { x_std } => Transform::Identity { x_std },
            TransformRecord::Pls(p) => Transform::Pls(p.try_into()?),
            TransformRecord::Pca { x_std, basis } => Transform::Pca {
                x_std,
                basis: numerics::matrix_from_rows(&basis)?,
            },
            TransformRecord::Bottleneck { extractor, x_std } => Transform::Bottleneck {
                extractor: extractor.try_into()?,
                x_std,
            },
        };
        let heads = r
            .heads
            .into_iter()
            .map(|h| {
                Ok(match h {
                    HeadRecord::Gp { model, target } => Head::Gp {
                        model: model.try_into()?,
                        target,
                    },
                    HeadRecord::Mlp { model, input, output } => Head::Mlp {
                        model: model.try_into()?,
                        input,
                        output,
                    },
                    HeadRecord::Linear { coef, intercept } => Head::Linear {
                        coef: numerics::matrix_from_rows(&coef)?,
                        intercept: Vector::from_vec(intercept),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        CompositeModel::new(transform, heads, numerics::matrix_from_rows(&r.q)?, r.y_std)
    }
}

/// Single-layer networks `x ↦ xW + b` are exposed for tests and ensembles.
pub fn linear_network(coef: &Matrix, intercept: &Vector) -> Result<MlpModel> {
    MlpModel::new(
        vec![Layer {
            w: coef.transpose(),
            b: intercept.clone(),
            activation: Activation::Identity,
        }],
        1.0,
    )
}
