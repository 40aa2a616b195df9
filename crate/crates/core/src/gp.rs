//! Gaussian-process regression with an anisotropic squared-exponential kernel
//!
//! `C(x, x′) = exp(−Σ_i (x_i − x′_i)² / d_i) + g·δ(x, x′)`
//!
//! with unit signal variance. Hyperparameters maximize the marginal
//! log-likelihood in log space with multi-start L-BFGS.

use std::cell::RefCell;

use argmin::core::{CostFunction, Executor, Gradient};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, CholeskyFactor, Matrix, Vector};
use crate::random::seeded;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// First jitter tried when the kernel matrix is numerically singular.
pub const JITTER0: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Lengthscale denominators, one per input dimension.
    pub d: Vec<f64>,
    /// Nugget.
    pub g: f64,
}

impl KernelParams {
    pub fn new(d: Vec<f64>, g: f64) -> Result<Self> {
        if let Some((i, v)) = d.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Validation(format!("lengthscale d[{i}] must be positive and finite, got {v}")));
        }
        if !(g >= 0.0) || !g.is_finite() {
            return Err(Error::Validation(format!("nugget must be >= 0 and finite, got {g}")));
        }
        Ok(Self { d, g })
    }

    fn check_dim(&self, p: usize) -> Result<()> {
        if self.d.len() != p {
            return Err(Error::shape("kernel inputs", format!("{} columns", self.d.len()), format!("{p} columns")));
        }
        Ok(())
    }

    /// `(log d_1, …, log d_p, log g)`.
    pub fn to_log(&self) -> Vec<f64> {
        self.d.iter().map(|d| d.ln()).chain(std::iter::once(self.g.ln())).collect()
    }

    pub fn from_log(theta: &[f64]) -> Self {
        let (d, g) = theta.split_at(theta.len() - 1);
        Self {
            d: d.iter().map(|v| v.exp()).collect(),
            g: g[0].exp(),
        }
    }
}

fn kernel_value(a: &[f64], b: &[f64], d: &[f64]) -> f64 {
    let s: f64 = a.iter().zip(b).zip(d).map(|((x, y), d)| (x - y).powi(2) / d).sum();
    (-s).exp()
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    numerics::to_rows(m)
}

/// Cross-covariance `C(a_i, b_j)` without the nugget.
pub fn kernel_matrix(a: &Matrix, b: &Matrix, params: &KernelParams) -> Result<Matrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::shape("kernel_matrix", format!("{} columns", a.ncols()), format!("{} columns", b.ncols())));
    }
    params.check_dim(a.ncols())?;
    KernelParams::new(params.d.clone(), params.g)?;
    let (ra, rb) = (rows_of(a), rows_of(b));
    Ok(Matrix::from_fn(ra.len(), rb.len(), |i, j| kernel_value(&ra[i], &rb[j], &params.d)))
}

/// Self-covariance of one point set: `kernel_matrix(a, a)` plus `g` on the diagonal.
pub fn self_kernel(a: &Matrix, params: &KernelParams) -> Result<Matrix> {
    let mut k = kernel_matrix(a, a, params)?;
    for i in 0..k.nrows() {
        k[(i, i)] += params.g;
    }
    Ok(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanKind {
    #[default]
    Zero,
    /// The training-target sample mean.
    Constant,
}

impl MeanKind {
    fn value(&self, y: &Vector) -> f64 {
        match self {
            MeanKind::Zero => 0.0,
            MeanKind::Constant => y.mean(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpConfig {
    /// Box for every `log d_i`.
    pub log_d_bounds: (f64, f64),
    pub log_g_bounds: (f64, f64),
    pub restarts: usize,
    pub seed: u64,
    pub mean: MeanKind,
    pub max_iters: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            log_d_bounds: (-6.0, 8.0),
            log_g_bounds: (-12.0, 1.0),
            restarts: 3,
            seed: 0,
            mean: MeanKind::Zero,
            max_iters: 100,
        }
    }
}

impl GpConfig {
    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("log d", self.log_d_bounds), ("log g", self.log_g_bounds)] {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::Validation(format!("{name} bounds must satisfy lo < hi, got ({lo}, {hi})")));
            }
        }
        if self.restarts == 0 {
            return Err(Error::Validation("at least one optimizer start is required".into()));
        }
        Ok(())
    }
}

/// Pairwise squared coordinate differences, packed over pairs `a < b`.
struct PairDistances {
    n: usize,
    p: usize,
    sq: Vec<f64>,
}

impl PairDistances {
    fn new(x: &Matrix) -> Self {
        let (n, p) = x.shape();
        let mut sq = Vec::with_capacity(n * n.saturating_sub(1) / 2 * p);
        for a in 0..n {
            for b in a + 1..n {
                for i in 0..p {
                    sq.push((x[(a, i)] - x[(b, i)]).powi(2));
                }
            }
        }
        Self { n, p, sq }
    }

    /// Mean squared difference per input dimension over all pairs.
    fn mean_sq_differences(&self) -> Vec<f64> {
        let pairs = (self.sq.len() / self.p.max(1)).max(1);
        let mut m = vec![0.0; self.p];
        for chunk in self.sq.chunks(self.p.max(1)) {
            for (acc, v) in m.iter_mut().zip(chunk) {
                *acc += v;
            }
        }
        m.iter().map(|v| v / pairs as f64).collect()
    }

    /// Kernel matrix with nugget `g` on the diagonal.
    fn kernel(&self, d: &[f64], g: f64) -> Matrix {
        let inv: Vec<f64> = d.iter().map(|v| 1.0 / v).collect();
        let mut k = Matrix::identity(self.n, self.n) * (1.0 + g);
        let mut off = 0;
        for a in 0..self.n {
            for b in a + 1..self.n {
                let s: f64 = self.sq[off..off + self.p].iter().zip(&inv).map(|(q, w)| q * w).sum();
                let v = (-s).exp();
                k[(a, b)] = v;
                k[(b, a)] = v;
                off += self.p;
            }
        }
        k
    }
}

/// Marginal log-likelihood and its gradient in `(log d, log g)`.
#[derive(Debug, Clone)]
pub struct MllEvaluation {
    pub mll: f64,
    pub gradient: Vec<f64>,
}

fn mll_with(dist: &PairDistances, y: &Vector, params: &KernelParams, want_grad: bool) -> Result<(MllEvaluation, CholeskyFactor)> {
    let n = dist.n;
    let k = dist.kernel(&params.d, params.g);
    let chol = numerics::cholesky_jitter(&k, JITTER0)?;
    let alpha = chol.solve_vec(y);
    let mll = -0.5 * y.dot(&alpha) - 0.5 * chol.log_det() - 0.5 * n as f64 * LN_2PI;
    let mut gradient = Vec::new();
    if want_grad {
        let kinv = chol.inverse();
        let p = dist.p;
        gradient = vec![0.0; p + 1];
        let inv: Vec<f64> = params.d.iter().map(|v| 1.0 / v).collect();
        let mut off = 0;
        for a in 0..n {
            for b in a + 1..n {
                let w = alpha[a] * alpha[b] - kinv[(a, b)];
                let q = &dist.sq[off..off + p];
                let s: f64 = q.iter().zip(&inv).map(|(q, w)| q * w).sum();
                let kab = (-s).exp();
                // Both (a,b) and (b,a) contribute; the factor ½ cancels.
                let scale = w * kab;
                for i in 0..p {
                    gradient[i] += scale * q[i] * inv[i];
                }
                off += p;
            }
        }
        let trace_w: f64 = (0..n).map(|a| alpha[a] * alpha[a] - kinv[(a, a)]).sum();
        gradient[p] = 0.5 * params.g * trace_w;
    }
    Ok((MllEvaluation { mll, gradient }, chol))
}

/// Marginal log-likelihood of `y − mean` at fixed parameters, with gradient.
pub fn marginal_log_likelihood(x: &Matrix, y: &Vector, params: &KernelParams, mean: MeanKind) -> Result<MllEvaluation> {
    numerics::ensure_finite(x, "gp inputs")?;
    params.check_dim(x.ncols())?;
    if x.nrows() != y.len() {
        return Err(Error::shape("gp targets", format!("{} values", x.nrows()), format!("{} values", y.len())));
    }
    let centered = y.add_scalar(-mean.value(y));
    Ok(mll_with(&PairDistances::new(x), &centered, params, true)?.0)
}

/// A fitted (or fixed-parameter) Gaussian process.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub x_train: Matrix,
    pub y_train: Vector,
    pub params: KernelParams,
    pub mean: MeanKind,
    pub mean_value: f64,
    pub mll: f64,
    chol: CholeskyFactor,
    alpha: Vector,
}

impl GpModel {
    /// Conditions on training data at fixed hyperparameters.
    pub fn new(x: Matrix, y: Vector, params: KernelParams, mean: MeanKind) -> Result<Self> {
        numerics::ensure_finite(&x, "gp inputs")?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("gp targets must be finite".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::shape("gp targets", format!("{} values", x.nrows()), format!("{} values", y.len())));
        }
        let params = KernelParams::new(params.d, params.g)?;
        params.check_dim(x.ncols())?;
        let mean_value = mean.value(&y);
        let centered = y.add_scalar(-mean_value);
        let (eval, chol) = mll_with(&PairDistances::new(&x), &centered, &params, false)?;
        let alpha = chol.solve_vec(&centered);
        Ok(Self {
            x_train: x,
            y_train: y,
            params,
            mean,
            mean_value,
            mll: eval.mll,
            chol,
            alpha,
        })
    }

    /// Jitter added to the diagonal during factorization.
    pub fn jitter(&self) -> f64 {
        self.chol.jitter
    }

    pub fn n_inputs(&self) -> usize {
        self.x_train.ncols()
    }

    /// Predictive mean and variance (including the nugget) at new inputs.
    pub fn predict(&self, x_new: &Matrix) -> Result<GpPrediction> {
        self.predict_impl(x_new, false)
    }

    /// As [`GpModel::predict`] with the full predictive covariance.
    pub fn predict_full(&self, x_new: &Matrix) -> Result<GpPrediction> {
        self.predict_impl(x_new, true)
    }

    fn predict_impl(&self, x_new: &Matrix, full: bool) -> Result<GpPrediction> {
        if x_new.ncols() != self.n_inputs() {
            return Err(Error::shape("gp_predict", format!("{} columns", self.n_inputs()), format!("{} columns", x_new.ncols())));
        }
        numerics::ensure_finite(x_new, "gp_predict inputs")?;
        let k_star = kernel_matrix(x_new, &self.x_train, &self.params)?;
        let mean = (&k_star * &self.alpha).add_scalar(self.mean_value);
        let v = self.chol.solve_lower(&k_star.transpose());
        let prior = 1.0 + self.params.g;
        let variance = Vector::from_iterator(
            x_new.nrows(),
            (0..x_new.nrows()).map(|j| clamp_variance(prior - v.column(j).norm_squared())),
        );
        let covariance = full.then(|| {
            let mut c = self_kernel(x_new, &self.params).expect("validated shapes") - v.transpose() * &v;
            for j in 0..c.nrows() {
                c[(j, j)] = variance[j];
            }
            c
        });
        Ok(GpPrediction {
            mean,
            variance,
            covariance,
        })
    }
}

fn clamp_variance(v: f64) -> f64 {
    if v < -1e-10 {
        log::warn!("gp: predictive variance {v:e} below zero beyond rounding; clamped");
    }
    v.max(0.0)
}

#[derive(Debug, Clone)]
pub struct GpPrediction {
    pub mean: Vector,
    pub variance: Vector,
    pub covariance: Option<Matrix>,
}

impl GpPrediction {
    pub fn sd(&self) -> Vector {
        self.variance.map(f64::sqrt)
    }

    /// `mean ± 1.96·sd`.
    pub fn band95(&self) -> (Vector, Vector) {
        let sd = self.sd();
        (&self.mean - &sd * 1.96, &self.mean + &sd * 1.96)
    }
}

/// Negative MLL over an unconstrained vector `z`, mapped into the box by
/// `θ = lo + (hi − lo)·σ(z)`.
/// Last evaluated point with its cost and gradient.
type Evaluation = (Vec<f64>, f64, Vec<f64>);

struct Objective<'a> {
    dist: &'a PairDistances,
    y: &'a Vector,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cache: RefCell<Option<Evaluation>>,
    best: RefCell<Option<(f64, Vec<f64>)>>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl Objective<'_> {
    fn theta(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(z, (lo, hi))| lo + (hi - lo) * sigmoid(*z))
            .collect()
    }

    fn to_z(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(t, (lo, hi))| {
                let u = ((t - lo) / (hi - lo)).clamp(1e-6, 1.0 - 1e-6);
                (u / (1.0 - u)).ln()
            })
            .collect()
    }

    fn evaluate(&self, z: &[f64]) -> (f64, Vec<f64>) {
        if let Some((cz, c, g)) = self.cache.borrow().as_ref() {
            if cz.as_slice() == z {
                return (*c, g.clone());
            }
        }
        let theta = self.theta(z);
        let params = KernelParams::from_log(&theta);
        let (cost, grad) = match mll_with(self.dist, self.y, &params, true) {
            Ok((e, _)) => {
                let grad = e
                    .gradient
                    .iter()
                    .zip(z)
                    .zip(self.lo.iter().zip(&self.hi))
                    .map(|((g, z), (lo, hi))| {
                        let s = sigmoid(*z);
                        -g * (hi - lo) * s * (1.0 - s)
                    })
                    .collect();
                (-e.mll, grad)
            }
            Err(_) => (f64::INFINITY, vec![0.0; z.len()]),
        };
        if cost.is_finite() {
            let mut best = self.best.borrow_mut();
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                *best = Some((cost, theta));
            }
        }
        *self.cache.borrow_mut() = Some((z.to_vec(), cost, grad.clone()));
        (cost, grad)
    }
}

impl CostFunction for Objective<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, z: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.evaluate(z).0)
    }
}

impl Gradient for Objective<'_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, z: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        Ok(self.evaluate(z).1)
    }
}

/// Fits hyperparameters by maximizing the marginal likelihood over the
/// bound box, best of `config.restarts` L-BFGS runs from seeded starts.
pub fn fit_gp(x: &Matrix, y: &Vector, config: &GpConfig) -> Result<GpModel> {
    config.validate()?;
    let (n, p) = x.shape();
    if n < 3 {
        return Err(Error::Validation(format!("a Gaussian process needs at least 3 training rows, got {n}")));
    }
    if y.len() != n {
        return Err(Error::shape("gp targets", format!("{n} values"), format!("{} values", y.len())));
    }
    numerics::ensure_finite(x, "gp inputs")?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("gp targets must be finite".into()));
    }
    let centered = y.add_scalar(-config.mean.value(y));
    let dist = PairDistances::new(x);
    let mut lo = vec![config.log_d_bounds.0; p];
    let mut hi = vec![config.log_d_bounds.1; p];
    lo.push(config.log_g_bounds.0);
    hi.push(config.log_g_bounds.1);
    let objective = Objective {
        dist: &dist,
        y: &centered,
        lo: lo.clone(),
        hi: hi.clone(),
        cache: RefCell::new(None),
        best: RefCell::new(None),
    };

    let mut rng = seeded(config.seed);
    for r in 0..config.restarts {
        let start: Vec<f64> = if r == 0 {
            // Smooth start: typical pairwise kernel value e⁻¹, nugget 0.1.
            let spread = dist.mean_sq_differences();
            let mut s: Vec<f64> = spread.iter().map(|m| (p as f64 * m).max(f64::MIN_POSITIVE).ln().clamp(lo[0], hi[0])).collect();
            s.push((0.1f64).ln().clamp(lo[p], hi[p]));
            s
        } else if r == 1 {
            let d0 = (p as f64).ln().clamp(lo[0], hi[0]);
            let mut s = vec![d0; p];
            s.push((-4.0f64).clamp(lo[p], hi[p]));
            s
        } else {
            lo.iter()
                .zip(&hi)
                .map(|(l, h)| {
                    let w = h - l;
                    rng.random_range(l + 0.1 * w..h - 0.1 * w)
                })
                .collect()
        };
        run_lbfgs(&objective, objective.to_z(&start), config.max_iters);
    }
    let (cost, theta) = objective.best.into_inner().ok_or_else(|| {
        Error::NumericalFailure(format!(
            "every optimizer start failed to factorize the {n}x{n} kernel matrix (bounds log d {:?}, log g {:?})",
            config.log_d_bounds, config.log_g_bounds
        ))
    })?;
    let model = GpModel::new(x.clone(), y.clone(), KernelParams::from_log(&theta), config.mean)?;
    log::debug!("gp: fitted mll {:.6} (search best {:.6})", model.mll, -cost);
    Ok(model)
}

fn run_lbfgs(objective: &Objective<'_>, z0: Vec<f64>, max_iters: u64) {
    let solver = match LBFGS::new(MoreThuenteLineSearch::new(), 7)
        .with_tolerance_grad(1e-7)
        .and_then(|s| s.with_tolerance_cost(1e-12))
    {
        Ok(s) => s,
        Err(e) => {
            log::warn!("gp: optimizer setup failed: {e}");
            return;
        }
    };
    // A failed run still leaves every evaluated point in the objective's record.
    if let Err(e) = Executor::new(ObjectiveRef(objective), solver)
        .configure(|state| state.param(z0).max_iters(max_iters))
        .run()
        .map(|res| res.state().get_best_cost())
    {
        log::debug!("gp: optimizer run ended early: {e}");
    }
}

/// Borrowing wrapper so the executor does not consume the objective.
struct ObjectiveRef<'a, 'b>(&'a Objective<'b>);

impl CostFunction for ObjectiveRef<'_, '_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, z: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        self.0.cost(z)
    }
}

impl Gradient for ObjectiveRef<'_, '_> {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, z: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        self.0.gradient(z)
    }
}

/// Serializable form of a [`GpModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpRecord {
    pub d: Vec<f64>,
    pub g: f64,
    pub mll: f64,
    pub mean_tag: MeanKind,
    pub x_train: Vec<Vec<f64>>,
    pub y_train: Vec<f64>,
}

impl From<&GpModel> for GpRecord {
    fn from(m: &GpModel) -> Self {
        Self {
            d: m.params.d.clone(),
            g: m.params.g,
            mll: m.mll,
            mean_tag: m.mean,
            x_train: numerics::to_rows(&m.x_train),
            y_train: m.y_train.iter().copied().collect(),
        }
    }
}

impl TryFrom<GpRecord> for GpModel {
    type Error = Error;

    fn try_from(r: GpRecord) -> Result<Self> {
        let x = if r.x_train.is_empty() {
            Matrix::zeros(0, r.d.len())
        } else {
            numerics::matrix_from_rows(&r.x_train)?
        };
        GpModel::new(x, Vector::from_vec(r.y_train), KernelParams::new(r.d, r.g)?, r.mean_tag)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{normal_matrix, uniform_matrix};

    fn params(d: &[f64], g: f64) -> KernelParams {
        KernelParams::new(d.to_vec(), g).unwrap()
    }

    #[test]
    fn kernel_examples() {
        let a = Matrix::from_row_slice(1, 1, &[0.0]);
        let b = Matrix::from_row_slice(1, 1, &[1.0]);
        let k = kernel_matrix(&a, &b, &params(&[1.0], 0.0)).unwrap();
        assert!((k[(0, 0)] - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(kernel_matrix(&a, &a, &params(&[1.0], 0.0)).unwrap()[(0, 0)], 1.0);
        assert!((self_kernel(&a, &params(&[1.0], 0.1)).unwrap()[(0, 0)] - 1.1).abs() < 1e-15);
        assert!(kernel_matrix(&a, &b, &params(&[1.0, 2.0], 0.0)).is_err());
        assert!(KernelParams::new(vec![0.0], 0.1).is_err());
        assert!(KernelParams::new(vec![1.0], -0.1).is_err());
    }

    #[test]
    fn self_kernel_symmetric_and_factorizable() {
        let mut rng = seeded(1);
        let x = normal_matrix(&mut rng, 30, 3);
        let k = self_kernel(&x, &params(&[0.5, 1.0, 2.0], 1e-6)).unwrap();
        assert!((&k - k.transpose()).amax() <= 1e-12);
        assert!(numerics::cholesky_jitter(&k, JITTER0).is_ok());
        assert!((PairDistances::new(&x).kernel(&[0.5, 1.0, 2.0], 1e-6) - k).amax() < 1e-14);
    }

    #[test]
    fn interpolates_training_points() {
        let x = Matrix::from_column_slice(5, 1, &[0.0, 0.7, 1.5, 2.2, 3.0]);
        let y = Vector::from_vec(vec![0.3, -0.2, 0.9, 0.1, -0.5]);
        let m = GpModel::new(x.clone(), y.clone(), params(&[1.0], 1e-10), MeanKind::Zero).unwrap();
        let pred = m.predict(&x).unwrap();
        assert!((&pred.mean - &y).amax() < 1e-4);
        assert!(pred.variance.amax() <= 1e-6);
    }

    #[test]
    fn reverts_to_prior_far_away() {
        let x = Matrix::from_column_slice(3, 1, &[0.0, 0.5, 1.0]);
        let y = Vector::from_vec(vec![1.0, 2.0, 1.5]);
        let m = GpModel::new(x, y, params(&[0.25], 0.01), MeanKind::Constant).unwrap();
        let far = Matrix::from_column_slice(1, 1, &[20.0]);
        let pred = m.predict(&far).unwrap();
        assert!((pred.mean[0] - 1.5).abs() < 1e-6);
        assert!((pred.variance[0] - 1.01).abs() < 1e-6);
    }

    #[test]
    fn matches_dense_solve_oracle() {
        let x = Matrix::from_column_slice(3, 1, &[-1.0, 0.2, 1.3]);
        let y = Vector::from_vec(vec![0.4, -1.1, 0.8]);
        let (d, g) = (0.8, 0.05);
        let m = GpModel::new(x.clone(), y.clone(), params(&[d], g), MeanKind::Zero).unwrap();
        let xs = [-1.0, 0.2, 1.3];
        let kf = |a: f64, b: f64| (-(a - b) * (a - b) / d).exp();
        let kmat = Matrix::from_fn(3, 3, |i, j| kf(xs[i], xs[j]) + if i == j { g } else { 0.0 });
        let kinv = kmat.try_inverse().unwrap();
        let t = 0.5;
        let kstar = Vector::from_iterator(3, xs.iter().map(|&a| kf(t, a)));
        let mean = kstar.dot(&(&kinv * &y));
        let var = 1.0 + g - kstar.dot(&(&kinv * &kstar));
        let pred = m.predict(&Matrix::from_column_slice(1, 1, &[t])).unwrap();
        assert!((pred.mean[0] - mean).abs() < 1e-10);
        assert!((pred.variance[0] - var).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seeded(2);
        let x = normal_matrix(&mut rng, 25, 3);
        let y = normal_matrix(&mut rng, 25, 1).column(0).into_owned();
        let p = params(&[0.7, 2.0, 5.0], 0.05);
        let e = marginal_log_likelihood(&x, &y, &p, MeanKind::Zero).unwrap();
        let theta = p.to_log();
        let h = 1e-5;
        for i in 0..theta.len() {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[i] += h;
            dn[i] -= h;
            let fu = marginal_log_likelihood(&x, &y, &KernelParams::from_log(&up), MeanKind::Zero).unwrap().mll;
            let fd = marginal_log_likelihood(&x, &y, &KernelParams::from_log(&dn), MeanKind::Zero).unwrap().mll;
            let fdiff = (fu - fd) / (2.0 * h);
            let rel = (fdiff - e.gradient[i]).abs() / fdiff.abs().max(1e-8);
            assert!(rel < 1e-4, "{i}: {fdiff} vs {}", e.gradient[i]);
        }
    }

    #[test]
    fn fit_beats_random_parameters() {
        let mut rng = seeded(3);
        let x = uniform_matrix(&mut rng, 40, 2, -2.0, 2.0);
        let y = Vector::from_iterator(40, (0..40).map(|i| (x[(i, 0)] * 1.5).sin() + 0.1 * x[(i, 1)]));
        let cfg = GpConfig::default();
        let m = fit_gp(&x, &y, &cfg).unwrap();
        for _ in 0..20 {
            let d: Vec<f64> = (0..2).map(|_| rng.random_range(-6.0f64..8.0).exp()).collect();
            let g = rng.random_range(-12.0f64..1.0).exp();
            let other = marginal_log_likelihood(&x, &y, &params(&d, g), MeanKind::Zero).unwrap();
            assert!(m.mll >= other.mll - 1e-9);
        }
    }

    #[test]
    fn zero_targets_flatten() {
        let x = Matrix::from_column_slice(6, 1, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = Vector::zeros(6);
        let m = fit_gp(&x, &y, &GpConfig::default()).unwrap();
        let pred = m.predict(&Matrix::from_column_slice(3, 1, &[-3.0, 2.5, 9.0])).unwrap();
        assert!(pred.mean.amax() < 1e-12);
        assert!(m.params.d[0] > 100.0, "{:?}", m.params);
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = seeded(4);
        let x = normal_matrix(&mut rng, 20, 2);
        let y = normal_matrix(&mut rng, 20, 1).column(0).into_owned();
        let cfg = GpConfig { seed: 9, ..GpConfig::default() };
        let a = fit_gp(&x, &y, &cfg).unwrap();
        let b = fit_gp(&x, &y, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.mll.to_bits(), b.mll.to_bits());
    }

    #[test]
    fn record_round_trip_is_exact() {
        let mut rng = seeded(5);
        let x = normal_matrix(&mut rng, 10, 2);
        let y = normal_matrix(&mut rng, 10, 1).column(0).into_owned();
        let m = GpModel::new(x, y, params(&[1.5, 0.4], 1e-3), MeanKind::Constant).unwrap();
        let back = GpModel::try_from(GpRecord::from(&m)).unwrap();
        let t = normal_matrix(&mut rng, 4, 2);
        let (a, b) = (m.predict(&t).unwrap(), back.predict(&t).unwrap());
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.variance, b.variance);
    }

    #[test]
    fn posterior_mean_is_linear_in_targets() {
        let mut rng = seeded(6);
        let x = normal_matrix(&mut rng, 12, 2);
        let y1 = normal_matrix(&mut rng, 12, 1).column(0).into_owned();
        let y2 = normal_matrix(&mut rng, 12, 1).column(0).into_owned();
        let p = params(&[1.0, 2.0], 1e-3);
        let t = normal_matrix(&mut rng, 5, 2);
        let pred = |y: Vector| GpModel::new(x.clone(), y, p.clone(), MeanKind::Zero).unwrap().predict(&t).unwrap().mean;
        let sum = pred(&y1 + &y2);
        assert!((sum - pred(y1) - pred(y2)).amax() < 1e-10);
    }

    #[test]
    fn shape_errors() {
        let x = Matrix::zeros(3, 2);
        assert!(fit_gp(&Matrix::zeros(2, 1), &Vector::zeros(2), &GpConfig::default()).is_err());
        let m = GpModel::new(
            Matrix::from_row_slice(3, 2, &[0., 0., 1., 0., 0., 1.]),
            Vector::zeros(3),
            params(&[1.0, 1.0], 0.1),
            MeanKind::Zero,
        )
        .unwrap();
        assert!(m.predict(&Matrix::zeros(1, 3)).is_err());
        let _ = x;
    }
}
