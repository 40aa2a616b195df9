//! Partial least squares.
//!
//! Two estimators are provided. [`fit_pls`] is the sequential (Wold/NIPALS)
//! algorithm: each component takes the leading singular pair of the deflated
//! cross-covariance `XₖᵀYₖ`, forms scores `t = Xₖw`, `u = Yₖc`, and deflates
//! both blocks before the next component. [`fit_pls_helland`] computes the
//! univariate coefficients in closed form from the Krylov space
//! `span{S_xy, S_xx S_xy, …}`. Both work on standardized data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, ensure_rows, Matrix, StandardizationParams, Vector};
use crate::random::{fold_assignment, select_rows};

/// Cross-covariance norms (covariance scale) at or below this stop extraction.
pub const ZERO_COVARIANCE: f64 = 1e-12;

/// Relative residual below which a new Krylov direction is considered
/// already spanned.
pub const KRYLOV_SATURATION: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct PlsModel {
    requested: usize,
    /// x-weights `W` (p×L), unit columns.
    pub weights: Matrix,
    /// x-loadings `P` (p×L).
    pub x_loadings: Matrix,
    /// y-weights `Q` (L×q), unit rows.
    pub y_loadings: Matrix,
    /// Diagonal inner relation `u_k ≈ b_k t_k`.
    pub inner: Vec<f64>,
    /// x-scores `T` (n×L); empty for models restored without scores.
    pub x_scores: Matrix,
    /// y-scores `U` (n×L) of the deflated output blocks.
    pub y_scores: Matrix,
    /// Coefficients on the standardized scale (p×q).
    pub beta: Matrix,
    pub x_std: StandardizationParams,
    pub y_std: StandardizationParams,
    rotation: Matrix,
}

impl PlsModel {
    /// Assembles a model from its parts, deriving the score rotation
    /// `W(PᵀW)⁻¹` and coefficients.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        requested: usize,
        weights: Matrix,
        x_loadings: Matrix,
        y_loadings: Matrix,
        inner: Vec<f64>,
        x_scores: Matrix,
        y_scores: Matrix,
        x_std: StandardizationParams,
        y_std: StandardizationParams,
    ) -> Result<Self> {
        let p = x_std.dim();
        let q = y_std.dim();
        let l = weights.ncols();
        if weights.nrows() != p || x_loadings.shape() != (p, l) || y_loadings.shape() != (l, q) || inner.len() != l {
            return Err(Error::shape(
                "pls model parts",
                format!("W {p}x{l}, P {p}x{l}, Q {l}x{q}, {l} inner coefficients"),
                format!(
                    "W {:?}, P {:?}, Q {:?}, {} inner",
                    weights.shape(),
                    x_loadings.shape(),
                    y_loadings.shape(),
                    inner.len()
                ),
            ));
        }
        let rotation = if l == 0 {
            Matrix::zeros(p, 0)
        } else {
            let ptw = x_loadings.transpose() * &weights;
            let inv = ptw
                .try_inverse()
                .ok_or_else(|| Error::NumericalFailure("PᵀW is singular".into()))?;
            &weights * inv
        };
        let beta = &rotation * Matrix::from_diagonal(&Vector::from_vec(inner.clone())) * &y_loadings;
        Ok(Self {
            requested,
            weights,
            x_loadings,
            y_loadings,
            inner,
            x_scores,
            y_scores,
            beta,
            x_std,
            y_std,
            rotation,
        })
    }

    /// Number of extracted components (may be below the request after an early stop).
    pub fn components(&self) -> usize {
        self.weights.ncols()
    }

    pub fn requested_components(&self) -> usize {
        self.requested
    }

    pub fn n_inputs(&self) -> usize {
        self.x_std.dim()
    }

    pub fn n_outputs(&self) -> usize {
        self.y_std.dim()
    }

    /// The score map `W(PᵀW)⁻¹` applied to standardized inputs.
    pub fn rotation(&self) -> &Matrix {
        &self.rotation
    }

    fn check_inputs(&self, x: &Matrix) -> Result<()> {
        if x.ncols() != self.n_inputs() {
            return Err(Error::shape("pls input", format!("{} columns", self.n_inputs()), format!("{} columns", x.ncols())));
        }
        numerics::ensure_finite(x, "pls input")
    }

    /// Scores `T* = standardize(X*)·W(PᵀW)⁻¹`.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        self.check_inputs(x)?;
        Ok(self.x_std.apply(x)? * &self.rotation)
    }

    /// Predictions on the original output scale.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let t = self.transform(x)?;
        let ys = t * Matrix::from_diagonal(&Vector::from_vec(self.inner.clone())) * &self.y_loadings;
        self.y_std.invert(&ys)
    }

    /// The model restricted to its first `l` components.
    pub fn truncated(&self, l: usize) -> Result<Self> {
        let l = l.min(self.components());
        let cols = |m: &Matrix| if m.ncols() >= l { m.columns(0, l).into_owned() } else { m.clone() };
        Self::from_parts(
            l,
            self.weights.columns(0, l).into_owned(),
            self.x_loadings.columns(0, l).into_owned(),
            self.y_loadings.rows(0, l).into_owned(),
            self.inner[..l].to_vec(),
            cols(&self.x_scores),
            cols(&self.y_scores),
            self.x_std.clone(),
            self.y_std.clone(),
        )
    }
}

fn check_component_count(n: usize, p: usize, l: usize) -> Result<()> {
    let max = p.min(n.saturating_sub(1));
    if l == 0 || l > max {
        return Err(Error::Validation(format!(
            "component count {l} must lie in 1..={max} (min(n-1, p) with n = {n}, p = {p})"
        )));
    }
    Ok(())
}

/// Serializable form of a [`PlsModel`]; scores are not stored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlsRecord {
    pub requested: usize,
    pub weights: Vec<Vec<f64>>,
    pub x_loadings: Vec<Vec<f64>>,
    pub y_loadings: Vec<Vec<f64>>,
    pub inner: Vec<f64>,
    pub x_std: StandardizationParams,
    pub y_std: StandardizationParams,
}

impl From<&PlsModel> for PlsRecord {
    fn from(m: &PlsModel) -> Self {
        Self {
            requested: m.requested,
            weights: numerics::to_rows(&m.weights),
            x_loadings: numerics::to_rows(&m.x_loadings),
            y_loadings: numerics::to_rows(&m.y_loadings),
            inner: m.inner.clone(),
            x_std: m.x_std.clone(),
            y_std: m.y_std.clone(),
        }
    }
}

impl TryFrom<PlsRecord> for PlsModel {
    type Error = Error;

    fn try_from(r: PlsRecord) -> Result<Self> {
        let l = r.inner.len();
        let (p, q) = (r.x_std.dim(), r.y_std.dim());
        let rows = |v: &[Vec<f64>], nr: usize, nc: usize| -> Result<Matrix> {
            if v.is_empty() {
                Ok(Matrix::zeros(nr, nc))
            } else {
                numerics::matrix_from_rows(v)
            }
        };
        PlsModel::from_parts(
            r.requested,
            rows(&r.weights, p, l)?,
            rows(&r.x_loadings, p, l)?,
            rows(&r.y_loadings, l, q)?,
            r.inner,
            Matrix::zeros(0, l),
            Matrix::zeros(0, l),
            r.x_std,
            r.y_std,
        )
    }
}

/// Sequential PLS with deflation; stops early when the deflated
/// cross-covariance vanishes.
pub fn fit_pls(x: &Matrix, y: &Matrix, components: usize) -> Result<PlsModel> {
    ensure_rows(x, y, "fit_pls")?;
    let (n, p) = x.shape();
    let q = y.ncols();
    check_component_count(n, p, components)?;
    let (mut xk, x_std) = numerics::standardize(x)?;
    let (mut yk, y_std) = numerics::standardize(y)?;

    let mut w_cols = Vec::new();
    let mut p_cols = Vec::new();
    let mut c_rows = Vec::new();
    let mut t_cols = Vec::new();
    let mut u_cols = Vec::new();
    let mut inner = Vec::new();

    for k in 0..components {
        let cross = xk.transpose() * &yk;
        if cross.norm() / n as f64 <= ZERO_COVARIANCE {
            log::info!("pls: cross-covariance vanished after {k} of {components} components");
            break;
        }
        let dec = numerics::svd(&cross)?;
        let w = dec.u.column(0).into_owned();
        let c = dec.v.column(0).into_owned();
        let t = &xk * &w;
        let u = &yk * &c;
        let tt = t.dot(&t);
        let loading = xk.transpose() * &t / tt;
        let b = u.dot(&t) / tt;
        xk -= &t * loading.transpose();
        yk -= (&t * c.transpose()) * b;
        w_cols.push(w);
        p_cols.push(loading);
        c_rows.push(c.transpose());
        t_cols.push(t);
        u_cols.push(u);
        inner.push(b);
    }

    let l = w_cols.len();
    let stack = |cols: &[Vector], rows: usize| {
        if cols.is_empty() {
            Matrix::zeros(rows, 0)
        } else {
            Matrix::from_columns(cols)
        }
    };
    let q_mat = if c_rows.is_empty() { Matrix::zeros(0, q) } else { Matrix::from_rows(&c_rows) };
    debug_assert_eq!(q_mat.nrows(), l);
    PlsModel::from_parts(
        components,
        stack(&w_cols, p),
        stack(&p_cols, p),
        q_mat,
        inner,
        stack(&t_cols, n),
        stack(&u_cols, n),
        x_std,
        y_std,
    )
}

/// Krylov basis `R = (S_xy, S_xx S_xy, …, S_xx^{K−1} S_xy)` for a univariate response.
#[derive(Debug, Clone)]
pub struct KrylovBasis {
    pub r: Matrix,
    pub s_xx: Matrix,
    pub s_xy: Vector,
}

impl KrylovBasis {
    /// Builds the raw basis from standardized data. Covariances use the
    /// divide-by-n convention for both `S_xx` and `S_xy`.
    pub fn from_standardized(xs: &Matrix, ys: &Vector, k: usize) -> Self {
        let n = xs.nrows() as f64;
        let s_xx = xs.transpose() * xs / n;
        let s_xy = xs.transpose() * ys / n;
        let mut cols = Vec::with_capacity(k);
        let mut cur = s_xy.clone();
        for _ in 0..k {
            cols.push(cur.clone());
            cur = &s_xx * cur;
        }
        let r = if cols.is_empty() { Matrix::zeros(s_xy.len(), 0) } else { Matrix::from_columns(&cols) };
        Self { r, s_xx, s_xy }
    }

    /// Orthonormal basis of the same span (Arnoldi with re-orthogonalization),
    /// truncated where the space saturates.
    pub fn orthonormal(&self, k: usize) -> Matrix {
        orthonormal_krylov(&self.s_xx, &self.s_xy, k)
    }
}

fn orthonormal_krylov(s_xx: &Matrix, s_xy: &Vector, k: usize) -> Matrix {
    let p = s_xy.len();
    let mut basis: Vec<Vector> = Vec::with_capacity(k);
    let norm0 = s_xy.norm();
    if norm0 <= ZERO_COVARIANCE {
        return Matrix::zeros(p, 0);
    }
    basis.push(s_xy / norm0);
    while basis.len() < k {
        let last = basis.last().expect("non-empty");
        let raw = s_xx * last;
        let raw_norm = raw.norm();
        let mut v = raw;
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v -= b * proj;
            }
        }
        let vn = v.norm();
        if raw_norm == 0.0 || vn <= KRYLOV_SATURATION * raw_norm {
            break;
        }
        basis.push(v / vn);
    }
    Matrix::from_columns(&basis)
}

/// Closed-form univariate PLS fit.
#[derive(Debug, Clone)]
pub struct HellandFit {
    /// Coefficients on the standardized scale.
    pub beta: Vector,
    /// Components actually used (below the request if the Krylov space saturated).
    pub components: usize,
    pub x_std: StandardizationParams,
    pub y_std: StandardizationParams,
}

impl HellandFit {
    pub fn predict(&self, x: &Matrix) -> Result<Vector> {
        let xs = self.x_std.apply(x)?;
        let ys = Matrix::from_column_slice(x.nrows(), 1, (xs * &self.beta).as_slice());
        Ok(self.y_std.invert(&ys)?.column(0).into_owned())
    }
}

fn standardized_univariate(x: &Matrix, y: &Vector) -> Result<(Matrix, Vector, StandardizationParams, StandardizationParams)> {
    let ym = Matrix::from_column_slice(y.len(), 1, y.as_slice());
    ensure_rows(x, &ym, "pls (univariate)")?;
    let (xs, x_std) = numerics::standardize(x)?;
    let (ys, y_std) = numerics::standardize(&ym)?;
    Ok((xs, ys.column(0).into_owned(), x_std, y_std))
}

/// `β = R(RᵀS_xx R)⁻¹RᵀS_xy` with `R` spanning the first `k` Krylov directions.
pub fn fit_pls_helland(x: &Matrix, y: &Vector, k: usize) -> Result<HellandFit> {
    let (n, p) = x.shape();
    if k == 0 || k > p {
        return Err(Error::Validation(format!("Krylov dimension {k} must lie in 1..={p}")));
    }
    let (xs, ys, x_std, y_std) = standardized_univariate(x, y)?;
    let n = n as f64;
    let s_xx = xs.transpose() * &xs / n;
    let s_xy = xs.transpose() * &ys / n;
    let r = orthonormal_krylov(&s_xx, &s_xy, k);
    if r.ncols() < k {
        log::warn!("pls (Helland): Krylov space saturated at dimension {} < requested {k}", r.ncols());
    }
    let beta = if r.ncols() == 0 {
        Vector::zeros(p)
    } else {
        let gram = r.transpose() * &s_xx * &r;
        let rhs = r.transpose() * &s_xy;
        let coef = gram
            .cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or_else(|| Error::NumericalFailure("RᵀS_xxR is not positive definite".into()))?;
        &r * coef
    };
    Ok(HellandFit {
        beta,
        components: r.ncols(),
        x_std,
        y_std,
    })
}

/// Fitted values `ŷ_K`, `K = 1..=p`, from regressing `y` on the projections
/// `s_kᵀx` with `s_k = V^{k−1}s`. Returned on the original scale; the sequence
/// ends early if the Krylov space saturates.
pub fn pls_iterative_helland(x: &Matrix, y: &Vector) -> Result<Vec<Vector>> {
    let (xs, ys, _, y_std) = standardized_univariate(x, y)?;
    let (n, p) = xs.shape();
    let nf = n as f64;
    let v = xs.transpose() * &xs / nf;
    let s = xs.transpose() * &ys / nf;
    let basis = orthonormal_krylov(&v, &s, p);
    let ym = Matrix::from_column_slice(n, 1, ys.as_slice());
    let mut fits = Vec::with_capacity(basis.ncols());
    for k in 1..=basis.ncols() {
        let features = &xs * basis.columns(0, k);
        let coef = numerics::solve_ols(&features, &ym)?;
        let fitted = y_std.invert(&(features * coef))?;
        fits.push(fitted.column(0).into_owned());
    }
    Ok(fits)
}

/// Cross-validated component selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComponentSelection {
    pub best: usize,
    /// Mean held-out MSE for `L = 1..=lmax` (index `L − 1`).
    pub cv_mse: Vec<f64>,
}

/// Chooses `L ∈ 1..=lmax` minimizing mean held-out MSE over seeded random
/// folds; ties go to the smaller `L`.
pub fn cv_select_components(x: &Matrix, y: &Matrix, lmax: usize, folds: usize, seed: u64) -> Result<ComponentSelection> {
    ensure_rows(x, y, "cv_select_components")?;
    let (n, p) = x.shape();
    if folds < 2 {
        return Err(Error::Validation(format!("cross-validation needs at least 2 folds, got {folds}")));
    }
    if n / folds < 2 {
        return Err(Error::Validation(format!("{n} rows are too few for {folds} folds")));
    }
    let max = p.min(n - n.div_ceil(folds) - 1);
    if lmax == 0 || lmax > max {
        return Err(Error::Validation(format!("lmax {lmax} must lie in 1..={max}")));
    }
    let labels = fold_assignment(n, folds, seed);
    let mut totals = vec![0.0; lmax];
    for f in 0..folds {
        let train: Vec<usize> = (0..n).filter(|&i| labels[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| labels[i] == f).collect();
        let (xtr, ytr) = (select_rows(x, &train), select_rows(y, &train));
        let (xte, yte) = (select_rows(x, &test), select_rows(y, &test));
        let full = fit_pls(&xtr, &ytr, lmax)?;
        for (l, total) in totals.iter_mut().enumerate() {
            let pred = full.truncated(l + 1)?.predict(&xte)?;
            let err = (pred - &yte).map(|v| v * v).mean();
            *total += err;
        }
    }
    let cv_mse: Vec<f64> = totals.iter().map(|t| t / folds as f64).collect();
    let mut best = 0;
    for (l, &m) in cv_mse.iter().enumerate() {
        if m < cv_mse[best] {
            best = l;
        }
    }
    Ok(ComponentSelection { best: best + 1, cv_mse })
}
