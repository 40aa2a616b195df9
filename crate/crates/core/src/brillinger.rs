//! Single-index models `y = g(βᵀx) + ε`.
//!
//! For Gaussian inputs the least-squares slope is proportional to `β`, so
//! OLS recovers the index direction whatever the link; the link itself is
//! then estimated by kernel smoothing of `y` against the fitted index.

use log::warn;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::numerics::{self, Matrix, StandardizationParams, Vector};
use crate::pls;
use crate::random::{normal_matrix, normal_vector, seeded, substream, unit_vector};
use crate::stats;

/// Slope norms at or below this are treated as zero.
pub const DEGENERATE_NORM: f64 = 1e-10;
/// Overall-regression F-test level above which the slope is indistinguishable from zero.
pub const DEGENERATE_P_VALUE: f64 = 0.01;

/// Flips `v` so its largest-magnitude coordinate is positive.
fn fix_sign(v: Vector) -> Vector {
    let imax = v.iamax();
    if v[imax] < 0.0 {
        -v
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    /// Silverman's rule on the index values.
    Auto,
    Fixed(f64),
}

/// Nadaraya–Watson regression of `y` on a scalar index with a Gaussian kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSmoother {
    pub bandwidth: f64,
    /// Training index values, ascending.
    pub index: Vec<f64>,
    /// Responses aligned with `index`.
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkValue {
    pub value: f64,
    /// The query lay outside the training index range and was clamped to its edge.
    pub extrapolated: bool,
}

/// Kernel weights beyond this many bandwidths are dropped.
const KERNEL_CUTOFF: f64 = 8.0;

/// `0.9 · min(sd, IQR/1.34) · n^{-1/5}`, falling back to `sd` or 1 when degenerate.
pub fn silverman_bandwidth(v: &[f64]) -> f64 {
    let sd = stats::variance(v).sqrt();
    let iqr = stats::quantile(v, 0.75) - stats::quantile(v, 0.25);
    let spread = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr / 1.34),
        (true, false) => sd,
        _ => 1.0,
    };
    0.9 * spread * (v.len() as f64).powf(-0.2)
}

impl LinkSmoother {
    pub fn fit(index: &[f64], y: &[f64], bandwidth: Bandwidth) -> Result<Self> {
        if index.len() != y.len() || index.is_empty() {
            return Err(Error::shape("link data", format!("{} responses", index.len()), format!("{}", y.len())));
        }
        if index.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::Validation("link data contains non-finite values".into()));
        }
        let h = match bandwidth {
            Bandwidth::Auto => silverman_bandwidth(index),
            Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
            Bandwidth::Fixed(h) => return Err(Error::Validation(format!("bandwidth must be positive, got {h}"))),
        };
        let mut order: Vec<usize> = (0..index.len()).collect();
        order.sort_by(|&a, &b| index[a].total_cmp(&index[b]));
        Ok(Self {
            bandwidth: h,
            index: order.iter().map(|&i| index[i]).collect(),
            y: order.iter().map(|&i| y[i]).collect(),
        })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.index[0], *self.index.last().expect("non-empty"))
    }

    fn smooth_at(&self, u: f64, h: f64) -> Option<f64> {
        let lo = self.index.partition_point(|&t| t < u - KERNEL_CUTOFF * h);
        let hi = self.index.partition_point(|&t| t <= u + KERNEL_CUTOFF * h);
        let (mut sw, mut swy) = (0.0, 0.0);
        for i in lo..hi {
            let z = (u - self.index[i]) / h;
            let w = (-0.5 * z * z).exp();
            sw += w;
            swy += w * self.y[i];
        }
        (sw > f64::MIN_POSITIVE).then(|| swy / sw)
    }

    /// Smoothed response at `u`. Queries outside the training range return
    /// the edge value; an empty neighbourhood widens the bandwidth locally.
    pub fn evaluate(&self, u: f64) -> LinkValue {
        let (lo, hi) = self.range();
        let extrapolated = u < lo || u > hi;
        let at = u.clamp(lo, hi);
        let mut h = self.bandwidth;
        loop {
            if let Some(value) = self.smooth_at(at, h) {
                if h > self.bandwidth {
                    warn!("link smoother: no index values near {at}; bandwidth widened to {h:e}");
                }
                return LinkValue { value, extrapolated };
            }
            h *= 2.0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexModel {
    /// Unit direction on the standardized input scale.
    pub beta_dir: Vector,
    /// `‖β̂_OLS‖`.
    pub k_scale: f64,
    pub x_std: StandardizationParams,
    pub y_mean: f64,
    /// p-value of the overall regression F-test.
    pub p_value: f64,
    pub link: Option<LinkSmoother>,
}

impl IndexModel {
    /// `β̂ᵀ standardize(x)` for each row.
    pub fn index(&self, x: &Matrix) -> Result<Vector> {
        Ok(self.x_std.apply(x)? * &self.beta_dir)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vector> {
        let link = self
            .link
            .as_ref()
            .ok_or_else(|| Error::Validation("the index model has no estimated link".into()))?;
        Ok(self.index(x)?.map(|u| link.evaluate(u).value))
    }
}

/// OLS of centered `y` on standardized `X`: the direction and length of the slope.
pub fn estimate_index(x: &Matrix, y: &Vector) -> Result<IndexModel> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::shape("estimate_index", format!("{n} responses"), format!("{}", y.len())));
    }
    if n <= p + 1 {
        return Err(Error::Validation(format!("index estimation needs n > p + 1, got n = {n}, p = {p}")));
    }
    let (xs, x_std) = numerics::standardize(x)?;
    let y_mean = y.mean();
    let yc = Matrix::from_iterator(n, 1, y.iter().map(|v| v - y_mean));
    numerics::ensure_finite(&yc, "responses")?;
    let beta = numerics::solve_ols(&xs, &yc)?.column(0).into_owned();
    let resid = &yc - &xs * &beta;
    let sse = resid.norm_squared();
    let sst = yc.norm_squared();
    let df2 = (n - p - 1) as f64;
    let p_value = if sse <= 0.0 {
        if sst > 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        let f = ((sst - sse).max(0.0) / p as f64) / (sse / df2);
        let dist = FisherSnedecor::new(p as f64, df2).map_err(|e| Error::NumericalFailure(e.to_string()))?;
        dist.sf(f)
    };
    let norm = beta.norm();
    if norm <= DEGENERATE_NORM || p_value > DEGENERATE_P_VALUE {
        return Err(Error::DegenerateIndex { norm, p_value });
    }
    Ok(IndexModel {
        beta_dir: fix_sign(beta / norm),
        k_scale: norm,
        x_std,
        y_mean,
        p_value,
        link: None,
    })
}

/// Smooths `y` against the fitted index and attaches the result to `model`.
pub fn estimate_link(model: &IndexModel, x: &Matrix, y: &Vector, bandwidth: Bandwidth) -> Result<IndexModel> {
    let u = model.index(x)?;
    let link = LinkSmoother::fit(u.as_slice(), y.as_slice(), bandwidth)?;
    Ok(IndexModel {
        link: Some(link),
        ..model.clone()
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SystemRound {
    pub round: usize,
    pub x_weights: Vec<f64>,
    pub x_loadings: Vec<f64>,
    pub y_loadings: Vec<f64>,
    pub scores: Vec<f64>,
    /// Mean per-output residual variance after this round.
    pub residual_variance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SystemIdentification {
    /// Mean per-output variance of the centered outputs.
    pub initial_variance: f64,
    pub rounds: Vec<SystemRound>,
}

impl SystemIdentification {
    /// Variance removed by each round.
    pub fn reductions(&self) -> Vec<f64> {
        let mut prev = self.initial_variance;
        self.rounds
            .iter()
            .map(|r| {
                let d = prev - r.residual_variance;
                prev = r.residual_variance;
                d
            })
            .collect()
    }

    /// Stacked x-weights (p × rounds).
    pub fn weights(&self) -> Matrix {
        let p = self.rounds.first().map_or(0, |r| r.x_weights.len());
        Matrix::from_fn(p, self.rounds.len(), |i, k| self.rounds[k].x_weights[i])
    }
}

/// Sequential PLS on centered raw-scale data: each round extracts the
/// leading cross-covariance direction and deflates both blocks.
pub fn identify_linear_system(x: &Matrix, y: &Matrix, rounds: usize) -> Result<SystemIdentification> {
    numerics::ensure_rows(x, y, "identify_linear_system")?;
    numerics::ensure_finite(x, "system inputs")?;
    numerics::ensure_finite(y, "system outputs")?;
    let (n, p) = x.shape();
    let q = y.ncols();
    if rounds == 0 || rounds > p {
        return Err(Error::Validation(format!("rounds must lie in 1..={p}, got {rounds}")));
    }
    let mut xk = StandardizationParams::center(x)?.apply(x)?;
    let mut yk = StandardizationParams::center(y)?.apply(y)?;
    let energy = |m: &Matrix| m.norm_squared() / (n * q) as f64;
    let initial_variance = energy(&yk);
    let initial_cross = (xk.transpose() * &yk).norm();
    let mut out = Vec::new();
    for round in 1..=rounds {
        let cross = xk.transpose() * &yk;
        if cross.norm() <= 1e-12 * initial_cross.max(f64::MIN_POSITIVE) {
            break;
        }
        let svd = numerics::svd(&cross)?;
        let w = svd.u.column(0).into_owned();
        let t = &xk * &w;
        let tt = t.norm_squared();
        let ploads = xk.transpose() * &t / tt;
        let c = yk.transpose() * &t / tt;
        xk -= &t * ploads.transpose();
        yk -= &t * c.transpose();
        out.push(SystemRound {
            round,
            x_weights: w.iter().copied().collect(),
            x_loadings: ploads.iter().copied().collect(),
            y_loadings: c.iter().copied().collect(),
            scores: t.iter().copied().collect(),
            residual_variance: energy(&yk),
        });
    }
    Ok(SystemIdentification {
        initial_variance,
        rounds: out,
    })
}

/// Loadings of the three-input, two-output linear system.
pub fn linear_system_loadings() -> Matrix {
    Matrix::from_row_slice(3, 2, &[1.0, 0.5, -0.7, 1.2, 0.3, -0.4])
}

/// `Y = XP + ε` with centered inputs whose columns are orthogonal with
/// unit mean square, so each rank of `P` is captured by one round.
pub fn simulate_linear_system(n: usize, noise_sd: f64, seed: u64) -> Result<(Matrix, Matrix)> {
    if n < 4 {
        return Err(Error::Validation(format!("the linear system needs at least 4 rows, got {n}")));
    }
    let raw = normal_matrix(&mut seeded(seed), n, 3);
    let centered = StandardizationParams::center(&raw)?.apply(&raw)?;
    let x = centered.qr().q() * (n as f64).sqrt();
    let noise = normal_matrix(&mut substream(seed, 1), n, 2) * noise_sd;
    let y = &x * linear_system_loadings() + noise;
    Ok((x, y))
}

/// Settings of the `y = |offset + XP| + ε` experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonlinearSystemConfig {
    pub n: usize,
    pub p: usize,
    pub offset: f64,
    /// `‖P‖`, which is also the standard deviation of `XP`.
    pub signal_norm: f64,
    pub noise_sd: f64,
    /// Upper bound on PLS components tried by cross-validation.
    pub max_pls_components: usize,
    pub folds: usize,
}

impl Default for NonlinearSystemConfig {
    fn default() -> Self {
        Self {
            n: 2000,
            p: 100,
            offset: 10.0,
            signal_norm: 2.0,
            noise_sd: 0.5,
            max_pls_components: 10,
            folds: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NonlinearRecovery {
    pub p_true: Vector,
    pub model: IndexModel,
    /// `|cos|` between the OLS direction and `P`.
    pub cosine: f64,
    pub pls_components: usize,
    /// `|cos|` between the PLS and OLS directions.
    pub pls_ols_cosine: f64,
    /// Rows of `(index, y, smoothed link)` sorted by index.
    pub link_curve: Vec<[f64; 3]>,
}

/// Simulates `y = |offset + XP| + ε` with Gaussian `X` and recovers `P` and the link.
pub fn recover_nonlinear_system(config: &NonlinearSystemConfig, seed: u64) -> Result<NonlinearRecovery> {
    if config.n < 1000 {
        return Err(Error::Validation(format!("the nonlinear system experiment needs n >= 1000, got {}", config.n)));
    }
    let mut rng = seeded(seed);
    let p_true = unit_vector(&mut rng, config.p) * config.signal_norm;
    let x = normal_matrix(&mut rng, config.n, config.p);
    let noise = normal_vector(&mut substream(seed, 1), config.n) * config.noise_sd;
    let y = (&x * &p_true).map(|v| (config.offset + v).abs()) + noise;

    let model = estimate_index(&x, &y)?;
    let model = estimate_link(&model, &x, &y, Bandwidth::Auto)?;
    let cosine = stats::abs_cosine(model.beta_dir.as_slice(), p_true.as_slice());

    let ym = Matrix::from_column_slice(config.n, 1, y.as_slice());
    let lmax = config.max_pls_components.min(config.p);
    let selection = pls::cv_select_components(&x, &ym, lmax, config.folds, seed)?;
    let pls_fit = pls::fit_pls(&x, &ym, selection.best)?;
    let pls_ols_cosine = stats::abs_cosine(pls_fit.beta.as_slice(), model.beta_dir.as_slice());

    let index = model.index(&x)?;
    let link = model.link.as_ref().expect("link just estimated");
    let mut link_curve: Vec<[f64; 3]> = index.iter().zip(y.iter()).map(|(&u, &v)| [u, v, link.evaluate(u).value]).collect();
    link_curve.sort_by(|a, b| a[0].total_cmp(&b[0]));
    Ok(NonlinearRecovery {
        p_true,
        model,
        cosine,
        pls_components: selection.best,
        pls_ols_cosine,
        link_curve,
    })
}
