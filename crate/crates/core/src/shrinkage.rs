//! Ridge and principal-components regression, per-direction shrinkage
//! factors and the dropout/ridge correspondence.
//!
//! Everything works on standardized data with covariance-scale quantities:
//! `S = XᵀX/n` has eigenpairs `(e_j², v_j)` and the least-squares fit is
//! `β̂ = Σ_j α̂_j v_j`. A method's factors are `f_j = v_jᵀβ̂^M / α̂_j`.

use rand::distr::Bernoulli;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, Matrix, StandardizationParams, Vector};
use crate::pls;
use crate::random::seeded;

/// `|α̂_j|` at or below this leaves the factor undefined.
pub const ALPHA_TOL: f64 = 1e-12;

/// Factors must exceed `1 + EXPANSION_TOL` to count as expanding.
pub const EXPANSION_TOL: f64 = 1e-8;

/// Eigenbasis of the input covariance with least-squares coordinates.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    /// Eigenvalues `e_j²`, descending.
    pub e2: Vector,
    /// Eigenvectors as columns.
    pub v: Matrix,
    /// Least-squares coefficients in the eigenbasis.
    pub alpha_hat: Vector,
}

impl SpectralBasis {
    pub fn from_standardized(xs: &Matrix, ys: &Vector) -> Result<Self> {
        let n = xs.nrows() as f64;
        let s = xs.transpose() * xs / n;
        let sym = (&s + s.transpose()) * 0.5;
        let eig = numerics::eigh_sym(&sym)?;
        let e2 = eig.values.map(|e| e.max(0.0));
        let xty = xs.transpose() * ys / n;
        let top = e2.iter().next().copied().unwrap_or(0.0);
        let alpha_hat = Vector::from_iterator(
            e2.len(),
            (0..e2.len()).map(|j| {
                if e2[j] > numerics::RANK_TOL * top {
                    eig.vectors.column(j).dot(&xty) / e2[j]
                } else {
                    0.0
                }
            }),
        );
        Ok(Self {
            e2,
            v: eig.vectors,
            alpha_hat,
        })
    }

    pub fn rank(&self) -> usize {
        let top = self.e2.iter().next().copied().unwrap_or(0.0);
        self.e2.iter().filter(|&&e| e > numerics::RANK_TOL * top).count()
    }

    /// `Σ_j α̂_j v_j`.
    pub fn ols(&self) -> Vector {
        &self.v * &self.alpha_hat
    }

    /// Coordinates `v_jᵀβ` of a coefficient vector.
    pub fn coordinates(&self, beta: &Vector) -> Vector {
        self.v.transpose() * beta
    }

    /// `Σ_j f_j α̂_j v_j`, undefined factors contributing nothing.
    pub fn reconstruct(&self, factors: &[Option<f64>]) -> Vector {
        let scaled = Vector::from_iterator(
            self.alpha_hat.len(),
            factors.iter().zip(self.alpha_hat.iter()).map(|(f, a)| f.unwrap_or(0.0) * a),
        );
        &self.v * scaled
    }

    /// Empirical factors of a fitted coefficient vector.
    pub fn factors(&self, beta: &Vector) -> Vec<Option<f64>> {
        let coords = self.coordinates(beta);
        coords
            .iter()
            .zip(self.alpha_hat.iter())
            .map(|(c, a)| (a.abs() > ALPHA_TOL).then(|| c / a))
            .collect()
    }
}

/// Standardized design shared by all fits in this module.
#[derive(Debug, Clone)]
pub struct StandardizedProblem {
    pub xs: Matrix,
    pub ys: Vector,
    pub x_std: StandardizationParams,
    pub y_std: StandardizationParams,
}

impl StandardizedProblem {
    pub fn new(x: &Matrix, y: &Vector) -> Result<Self> {
        let ym = Matrix::from_column_slice(y.len(), 1, y.as_slice());
        numerics::ensure_rows(x, &ym, "shrinkage problem")?;
        let (xs, x_std) = numerics::standardize(x)?;
        let (ys, y_std) = numerics::standardize(&ym)?;
        Ok(Self {
            xs,
            ys: ys.column(0).into_owned(),
            x_std,
            y_std,
        })
    }

    pub fn basis(&self) -> Result<SpectralBasis> {
        SpectralBasis::from_standardized(&self.xs, &self.ys)
    }
}

/// Ridge coefficients solving `(XᵀX + nλI)β = Xᵀy` on standardized data.
pub fn fit_ridge(x: &Matrix, y: &Vector, lambda: f64) -> Result<Vector> {
    let prob = StandardizedProblem::new(x, y)?;
    ridge_standardized(&prob, lambda)
}

fn ridge_standardized(prob: &StandardizedProblem, lambda: f64) -> Result<Vector> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Validation(format!("ridge penalty must be a finite value >= 0, got {lambda}")));
    }
    let n = prob.xs.nrows() as f64;
    let p = prob.xs.ncols();
    let rhs = prob.xs.transpose() * &prob.ys / n;
    if lambda == 0.0 {
        let ym = Matrix::from_column_slice(prob.ys.len(), 1, prob.ys.as_slice());
        return Ok(numerics::solve_ols(&prob.xs, &ym)?.column(0).into_owned());
    }
    let a = prob.xs.transpose() * &prob.xs / n + Matrix::identity(p, p) * lambda;
    a.cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::NumericalFailure("ridge normal equations are not positive definite".into()))
}

/// Principal-components regression fit.
#[derive(Debug, Clone)]
pub struct PcrFit {
    /// Coefficients on the standardized scale.
    pub beta: Vector,
    /// In-sample fitted values `ŷ_0, …, ŷ_L` on the original scale; `ŷ_0` is the mean.
    pub fitted: Vec<Vector>,
}

/// Regression on the top-`L` eigen-scores `z_j = Xv_j`.
pub fn fit_pcr(x: &Matrix, y: &Vector, components: usize) -> Result<PcrFit> {
    let prob = StandardizedProblem::new(x, y)?;
    pcr_standardized(&prob, &prob.basis()?, components)
}

fn pcr_standardized(prob: &StandardizedProblem, basis: &SpectralBasis, components: usize) -> Result<PcrFit> {
    let rank = basis.rank();
    if components > rank {
        return Err(Error::Validation(format!(
            "PCR component count {components} exceeds the numerical rank {rank}"
        )));
    }
    let n = prob.xs.nrows();
    let mean = prob.y_std.means[0];
    let sd = prob.y_std.sds[0];
    let mut fitted = vec![Vector::from_element(n, mean)];
    let mut beta = Vector::zeros(prob.xs.ncols());
    let mut current = Vector::zeros(n);
    for j in 0..components {
        let z = &prob.xs * basis.v.column(j);
        let coef = z.dot(&prob.ys) / z.dot(&z);
        current += &z * coef;
        beta += basis.v.column(j) * coef;
        fitted.push(current.map(|v| mean + sd * v));
    }
    Ok(PcrFit { beta, fitted })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "hyper", rename_all = "lowercase")]
pub enum Method {
    /// Ridge with penalty on the covariance scale.
    Ridge(f64),
    /// Principal-components regression with `L` components.
    Pcr(usize),
    /// Partial least squares with `K` components.
    Pls(usize),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Ridge(_) => "RR",
            Method::Pcr(_) => "PCR",
            Method::Pls(_) => "PLS",
        }
    }

    pub fn hyper(&self) -> f64 {
        match *self {
            Method::Ridge(l) => l,
            Method::Pcr(l) | Method::Pls(l) => l as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShrinkageProfile {
    pub method: Method,
    /// Per-direction factors; `None` where `|α̂_j|` is negligible.
    pub f: Vec<Option<f64>>,
    /// Directly fitted coefficients on the standardized scale.
    pub beta: Vector,
    pub basis: SpectralBasis,
}

fn fit_method(prob: &StandardizedProblem, basis: &SpectralBasis, method: Method) -> Result<Vector> {
    match method {
        Method::Ridge(lambda) => ridge_standardized(prob, lambda),
        Method::Pcr(l) => Ok(pcr_standardized(prob, basis, l)?.beta),
        Method::Pls(k) => {
            let ym = Matrix::from_column_slice(prob.ys.len(), 1, prob.ys.as_slice());
            let model = pls::fit_pls(&prob.xs, &ym, k)?;
            // Refitting standardizes again; already-standardized columns are unchanged.
            Ok(model.beta.column(0).into_owned())
        }
    }
}

/// Empirical factors `f_j = v_jᵀβ̂^M / α̂_j` from the directly fitted coefficients.
pub fn shrinkage_profile(method: Method, x: &Matrix, y: &Vector) -> Result<ShrinkageProfile> {
    let prob = StandardizedProblem::new(x, y)?;
    let basis = prob.basis()?;
    let beta = fit_method(&prob, &basis, method)?;
    Ok(ShrinkageProfile {
        method,
        f: basis.factors(&beta),
        beta,
        basis,
    })
}

/// Closed-form ridge factors `e_j²/(e_j² + λ)`.
pub fn ridge_factors(basis: &SpectralBasis, lambda: f64) -> Vec<f64> {
    basis.e2.iter().map(|e| e / (e + lambda)).collect()
}

/// PLS factors as the polynomial `Σ_k θ_k e_j^{2k}` with `θ` from the
/// `K×K` Krylov normal equations. A cross-check of the empirical factors,
/// ill-conditioned for large `K`.
pub fn pls_factors_krylov(basis: &SpectralBasis, components: usize) -> Result<Vec<f64>> {
    let p = basis.e2.len();
    if components == 0 || components > p {
        return Err(Error::Validation(format!("Krylov dimension {components} must lie in 1..={p}")));
    }
    // In the eigenbasis: S = diag(e²), S_xy = e² ∘ α̂, column k of R is e^{2k} ∘ α̂.
    let r = Matrix::from_fn(p, components, |j, k| basis.e2[j].powi(k as i32 + 1) * basis.alpha_hat[j]);
    let s = Matrix::from_diagonal(&basis.e2);
    let sxy = basis.e2.component_mul(&basis.alpha_hat);
    let gram = r.transpose() * &s * &r;
    let rhs = r.transpose() * sxy;
    let theta = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::NumericalFailure("Krylov normal equations are singular".into()))?;
    Ok(basis
        .e2
        .iter()
        .map(|e| (0..components).map(|k| theta[k] * e.powi(k as i32 + 1)).sum())
        .collect())
}

/// Directions where a profile expands rather than shrinks (`f_j > 1`, up to rounding).
#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    /// `(direction index, f_j)` for every `f_j > 1`.
    pub expanded: Vec<(usize, f64)>,
    /// `min(f_j, 1)` per direction.
    pub truncated: Vec<Option<f64>>,
}

pub fn expansion_diagnostic(profile: &ShrinkageProfile) -> Expansion {
    let expanded = profile
        .f
        .iter()
        .enumerate()
        .filter_map(|(j, f)| f.filter(|&v| v > 1.0 + EXPANSION_TOL).map(|v| (j, v)))
        .collect();
    let truncated = profile.f.iter().map(|f| f.map(|v| v.min(1.0))).collect();
    Expansion { expanded, truncated }
}

/// Ridge coefficient norm as a function of the penalty.
fn ridge_norm(basis: &SpectralBasis, lambda: f64) -> f64 {
    basis
        .e2
        .iter()
        .zip(basis.alpha_hat.iter())
        .map(|(e, a)| {
            let f = if *e == 0.0 && lambda == 0.0 { 0.0 } else { e / (e + lambda) };
            (f * a).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Ridge penalty whose coefficient norm equals `target`, by bisection in `log λ`.
pub fn ridge_for_norm(basis: &SpectralBasis, target: f64) -> Result<f64> {
    let ols = ridge_norm(basis, 0.0);
    if !(target >= 0.0) {
        return Err(Error::Validation(format!("target norm must be >= 0, got {target}")));
    }
    if target > ols * (1.0 + 1e-12) {
        return Err(Error::Infeasible(format!(
            "target norm {target:.6e} exceeds the least-squares norm {ols:.6e}; ridge only shrinks"
        )));
    }
    if target >= ols * (1.0 - 1e-12) {
        return Ok(0.0);
    }
    if target == 0.0 {
        return Err(Error::Infeasible("a zero coefficient norm needs an infinite penalty".into()));
    }
    let top = basis.e2.iter().next().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let (mut lo, mut hi) = ((top * 1e-16).ln(), top.ln());
    while ridge_norm(basis, hi.exp()) > target {
        hi += 5.0;
        if hi > 700.0 {
            return Err(Error::Infeasible(format!("no finite penalty reaches norm {target:.6e}")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ridge_norm(basis, mid.exp()) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Adjusts a ridge profile's penalty so its coefficient norm matches `reference`.
/// Returns the new penalty.
pub fn equalize_shrinkage(
    ridge: &ShrinkageProfile,
    reference: &ShrinkageProfile,
    x: &Matrix,
    y: &Vector,
) -> Result<f64> {
    if !matches!(ridge.method, Method::Ridge(_)) {
        return Err(Error::Validation(format!(
            "only the ridge penalty is continuous; cannot rescale a {} profile",
            ridge.method.name()
        )));
    }
    let basis = StandardizedProblem::new(x, y)?.basis()?;
    ridge_for_norm(&basis, reference.beta.norm())
}

/// Dropout viewed as a ridge penalty.
#[derive(Debug, Clone)]
pub struct DropoutRidge {
    pub keep: f64,
    /// Minimizer of `‖Y − p·XW‖² + p(1−p)‖ΓW‖²`, `Γ = diag(XᵀX)^{1/2}` (p×q).
    pub weights: Matrix,
    /// Per-coordinate penalty `p(1−p)·(XᵀX)_jj`.
    pub penalty: Vector,
    pub description: String,
}

/// Closed-form minimizer of the marginalized dropout objective.
pub fn dropout_ridge(x: &Matrix, y: &Matrix, keep: f64) -> Result<DropoutRidge> {
    if !(keep > 0.0 && keep < 1.0) {
        return Err(Error::Validation(format!("dropout keep probability must lie in (0, 1), got {keep}")));
    }
    numerics::ensure_rows(x, y, "dropout_ridge")?;
    numerics::ensure_finite(x, "dropout_ridge inputs")?;
    numerics::ensure_finite(y, "dropout_ridge outputs")?;
    let gram = x.transpose() * x;
    let diag = gram.diagonal();
    let mut a = &gram * keep;
    for j in 0..a.nrows() {
        a[(j, j)] += (1.0 - keep) * diag[j];
    }
    let weights = a
        .lu()
        .solve(&(x.transpose() * y))
        .ok_or_else(|| Error::NumericalFailure("dropout normal equations are singular".into()))?;
    let penalty = diag.map(|d| keep * (1.0 - keep) * d);
    let description = format!(
        "ridge with per-coordinate penalty p(1-p)(X^T X)_jj at p = {keep}; equivalently generalized ridge \
         (X^T X + ((1-p)/p) diag(X^T X)) w = X^T y / p"
    );
    Ok(DropoutRidge {
        keep,
        weights,
        penalty,
        description,
    })
}

/// `‖Y − p·XW‖² + p(1−p)‖ΓW‖²`.
pub fn dropout_marginal_objective(x: &Matrix, y: &Matrix, w: &Matrix, keep: f64) -> f64 {
    let resid = y - x * w * keep;
    let diag = x.transpose().map(|v| v * v) * Vector::from_element(x.nrows(), 1.0);
    let pen: f64 = (0..w.nrows()).map(|j| diag[j] * w.row(j).norm_squared()).sum();
    resid.norm_squared() + keep * (1.0 - keep) * pen
}

/// Monte-Carlo estimate of `E_D ‖Y − (D∘X)W‖²` with `D_ij ~ Bernoulli(keep)`.
/// The same seed yields the same masks, so comparisons across `W` use
/// common random numbers.
pub fn dropout_objective_mc(x: &Matrix, y: &Matrix, w: &Matrix, keep: f64, masks: usize, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let mask = Bernoulli::new(keep).expect("keep probability lies in [0, 1]");
    let (n, p) = x.shape();
    let q = w.ncols();
    let mut total = 0.0;
    let mut row_pred = vec![0.0; q];
    for _ in 0..masks {
        let mut sse = 0.0;
        for i in 0..n {
            row_pred.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..p {
                if rng.sample(mask) {
                    let xij = x[(i, j)];
                    for (k, acc) in row_pred.iter_mut().enumerate() {
                        *acc += xij * w[(j, k)];
                    }
                }
            }
            for (k, pred) in row_pred.iter().enumerate() {
                sse += (y[(i, k)] - pred).powi(2);
            }
        }
        total += sse;
    }
    total / masks as f64
}

/// One row of the per-direction diagnostic table.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticRow {
    pub j: usize,
    pub e2: f64,
    pub alpha: f64,
    pub f_rr: Option<f64>,
    pub f_pcr: Option<f64>,
    pub f_pls: Option<f64>,
    pub expanded: bool,
}

/// Factors of ridge, PCR and PLS side by side; `expanded` flags `f_PLS > 1`.
pub fn diagnostic_table(x: &Matrix, y: &Vector, lambda: f64, pcr: usize, pls_components: usize) -> Result<Vec<DiagnosticRow>> {
    let rr = shrinkage_profile(Method::Ridge(lambda), x, y)?;
    let pc = shrinkage_profile(Method::Pcr(pcr), x, y)?;
    let pl = shrinkage_profile(Method::Pls(pls_components), x, y)?;
    Ok((0..rr.f.len())
        .map(|j| DiagnosticRow {
            j: j + 1,
            e2: rr.basis.e2[j],
            alpha: rr.basis.alpha_hat[j],
            f_rr: rr.f[j],
            f_pcr: pc.f[j],
            f_pls: pl.f[j],
            expanded: pl.f[j].is_some_and(|f| f > 1.0 + EXPANSION_TOL),
        })
        .collect())
}
