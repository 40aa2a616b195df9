//! Dense linear algebra and preprocessing shared by every model.
//!
//! Matrices are `nalgebra` dense matrices of `f64`. Decompositions are thin
//! (`r = min(n, p)`) and carry a deterministic sign convention: the
//! largest-magnitude entry of every singular or eigen vector is positive.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Singular values at or below `RANK_TOL * d[0]` are treated as zero.
pub const RANK_TOL: f64 = 1e-12;

const SVD_MAX_SWEEPS: usize = 100;
const EIGEN_MAX_ITER: usize = 100_000;

/// Builds a matrix from row-major values, rejecting NaN/Inf.
pub fn matrix_from_row_major(rows: usize, cols: usize, values: &[f64]) -> Result<Matrix> {
    if values.len() != rows * cols {
        return Err(Error::shape("row-major values", rows * cols, values.len()));
    }
    let m = Matrix::from_row_slice(rows, cols, values);
    ensure_finite(&m, "matrix")?;
    Ok(m)
}

/// Builds a matrix from a slice of equally long rows.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(Error::shape("matrix rows", cols, format!("{} (row {i})", r.len())));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    matrix_from_row_major(rows.len(), cols, &flat)
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Err(Error::NonFinite { what, row: r, col: c });
            }
        }
    }
    Ok(())
}

pub(crate) fn ensure_rows(a: &Matrix, b: &Matrix, what: &'static str) -> Result<()> {
    if a.nrows() != b.nrows() {
        return Err(Error::shape(what, format!("{} rows", a.nrows()), format!("{} rows", b.nrows())));
    }
    Ok(())
}

/// Flips `cols` of `primary` (and the same columns of `paired`) so that the
/// largest-magnitude entry of each column of `primary` is positive.
fn fix_signs(primary: &mut Matrix, mut paired: Option<&mut Matrix>) {
    for j in 0..primary.ncols() {
        let col = primary.column(j);
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if !col.is_empty() && col[best] < 0.0 {
            primary.column_mut(j).neg_mut();
            if let Some(p) = paired.as_deref_mut() {
                p.column_mut(j).neg_mut();
            }
        }
    }
}

/// Thin singular value decomposition `M = U diag(D) Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub d: Vector,
    pub v: Matrix,
}

impl Svd {
    /// Number of singular values above `RANK_TOL * d[0]`.
    pub fn rank(&self) -> usize {
        let Some(&d0) = self.d.iter().next() else {
            return 0;
        };
        self.d.iter().filter(|&&s| s > RANK_TOL * d0).count()
    }

    pub fn reconstruct(&self) -> Matrix {
        &self.u * Matrix::from_diagonal(&self.d) * self.v.transpose()
    }
}

pub fn svd(m: &Matrix) -> Result<Svd> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Validation("svd of an empty matrix".into()));
    }
    ensure_finite(m, "svd input")?;
    let (mut u, d, mut v) = if m.nrows() >= m.ncols() {
        jacobi_svd(m.clone())?
    } else {
        let (u, d, v) = jacobi_svd(m.transpose())?;
        (v, d, u)
    };
    fix_signs(&mut v, Some(&mut u));
    Ok(Svd { u, d, v })
}

/// One-sided (Hestenes) Jacobi SVD of a tall matrix `a` (rows ≥ cols):
/// orthogonalizes the columns by plane rotations accumulated into `V`.
fn jacobi_svd(mut a: Matrix) -> Result<(Matrix, Vector, Matrix)> {
    let (m, n) = a.shape();
    let mut v = Matrix::identity(n, n);
    let scale = a.amax();
    if scale > 0.0 {
        a /= scale;
    }
    let mut converged = false;
    for _ in 0..SVD_MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n.saturating_sub(1) {
            for j in i + 1..n {
                let (alpha, beta, gamma) = {
                    let ci = a.column(i);
                    let cj = a.column(j);
                    (ci.norm_squared(), cj.norm_squared(), ci.dot(&cj))
                };
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut a, i, j, c, s);
                rotate_columns(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericalFailure(format!(
            "SVD of a {m}x{n} matrix did not converge in {SVD_MAX_SWEEPS} sweeps"
        )));
    }

    let norms: Vec<f64> = (0..n).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let d = Vector::from_iterator(n, order.iter().map(|&j| norms[j] * scale));
    let v = Matrix::from_fn(n, n, |r, c| v[(r, order[c])]);

    let d0 = norms[order[0]];
    let mut u = Matrix::zeros(m, n);
    let mut filled = 0;
    for (k, &j) in order.iter().enumerate() {
        if norms[j] > d0 * f64::EPSILON * (m as f64) && norms[j] > 0.0 {
            u.set_column(k, &(a.column(j) / norms[j]));
            filled = k + 1;
        } else {
            break;
        }
    }
    complete_orthonormal(&mut u, filled);
    Ok((u, d, v))
}

fn rotate_columns(m: &mut Matrix, i: usize, j: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let x = m[(r, i)];
        let y = m[(r, j)];
        m[(r, i)] = c * x - s * y;
        m[(r, j)] = s * x + c * y;
    }
}

/// Fills columns `filled..` of `u` with unit vectors orthogonal to all previous ones.
fn complete_orthonormal(u: &mut Matrix, filled: usize) {
    let (m, n) = u.shape();
    let mut k = filled;
    let mut e = 0;
    while k < n && e < m {
        let mut cand = Vector::zeros(m);
        cand[e] = 1.0;
        e += 1;
        for _ in 0..2 {
            for c in 0..k {
                let proj = u.column(c).dot(&cand);
                cand -= u.column(c) * proj;
            }
        }
        let nrm = cand.norm();
        if nrm > 1e-8 {
            u.set_column(k, &(cand / nrm));
            k += 1;
        }
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vector,
    pub vectors: Matrix,
}

pub fn eigh_sym(s: &Matrix) -> Result<SymEigen> {
    if !s.is_square() {
        return Err(Error::shape("eigh_sym", "square matrix", format!("{}x{}", s.nrows(), s.ncols())));
    }
    ensure_finite(s, "eigh_sym input")?;
    let scale = s.amax().max(1.0);
    let asym = (s - s.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::Validation(format!(
            "eigh_sym requires a symmetric matrix (max asymmetry {asym:e})"
        )));
    }
    let sym = (s + s.transpose()) * 0.5;
    let dec = SymmetricEigen::try_new(sym, f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or_else(|| Error::NumericalFailure("symmetric eigensolver did not converge".into()))?;
    let n = s.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dec.eigenvalues[b].total_cmp(&dec.eigenvalues[a]));
    let values = Vector::from_iterator(n, order.iter().map(|&i| dec.eigenvalues[i]));
    let mut vectors = Matrix::from_fn(n, n, |r, c| dec.eigenvectors[(r, order[c])]);
    fix_signs(&mut vectors, None);
    Ok(SymEigen { values, vectors })
}

/// Moore–Penrose pseudo-inverse using the `RANK_TOL` cut-off.
pub fn pseudo_inverse(m: &Matrix) -> Result<Matrix> {
    let dec = svd(m)?;
    let r = dec.rank();
    let mut out = Matrix::zeros(m.ncols(), m.nrows());
    for j in 0..r {
        let v = dec.v.column(j);
        let u = dec.u.column(j);
        out += (v * u.transpose()) / dec.d[j];
    }
    Ok(out)
}

/// Least-squares coefficients `B` minimizing `‖Y − X B‖_F`; the minimum-norm
/// solution when `X` is rank deficient.
pub fn solve_ols(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    ensure_rows(x, y, "solve_ols")?;
    ensure_finite(y, "solve_ols response")?;
    Ok(pseudo_inverse(x)? * y)
}

/// Per-column location and scale. Scale uses the population (divide-by-n)
/// standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl StandardizationParams {
    pub fn fit(m: &Matrix) -> Result<Self> {
        if m.nrows() == 0 {
            return Err(Error::Validation("cannot standardize zero rows".into()));
        }
        ensure_finite(m, "standardize input")?;
        let n = m.nrows() as f64;
        let mut means = Vec::with_capacity(m.ncols());
        let mut sds = Vec::with_capacity(m.ncols());
        for (j, col) in m.column_iter().enumerate() {
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd == 0.0 || sd <= 1e-12 * mean.abs() {
                return Err(Error::DegenerateColumn { column: j });
            }
            means.push(mean);
            sds.push(sd);
        }
        Ok(Self { means, sds })
    }

    /// Centering only (unit scales).
    pub fn center(m: &Matrix) -> Result<Self> {
        if m.nrows() == 0 {
            return Err(Error::Validation("cannot center zero rows".into()));
        }
        ensure_finite(m, "center input")?;
        let n = m.nrows() as f64;
        Ok(Self {
            means: m.column_iter().map(|c| c.sum() / n).collect(),
            sds: vec![1.0; m.ncols()],
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            means: vec![0.0; dim],
            sds: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    fn check(&self, m: &Matrix) -> Result<()> {
        if m.ncols() != self.dim() {
            return Err(Error::shape("standardization", format!("{} columns", self.dim()), format!("{} columns", m.ncols())));
        }
        Ok(())
    }

    pub fn apply(&self, m: &Matrix) -> Result<Matrix> {
        self.check(m)?;
        Ok(Matrix::from_fn(m.nrows(), m.ncols(), |r, c| (m[(r, c)] - self.means[c]) / self.sds[c]))
    }

    pub fn invert(&self, m: &Matrix) -> Result<Matrix> {
        self.check(m)?;
        Ok(Matrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)] * self.sds[c] + self.means[c]))
    }

    /// Rescales spreads (standard deviations) back to the original units.
    pub fn invert_scale(&self, m: &Matrix) -> Result<Matrix> {
        self.check(m)?;
        Ok(Matrix::from_fn(m.nrows(), m.ncols(), |r, c| m[(r, c)] * self.sds[c]))
    }
}

pub fn standardize(m: &Matrix) -> Result<(Matrix, StandardizationParams)> {
    let params = StandardizationParams::fit(m)?;
    Ok((params.apply(m)?, params))
}

/// Lower Cholesky factor of `K + jitter·I`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    pub l: Matrix,
    pub jitter: f64,
}

impl CholeskyFactor {
    pub fn solve(&self, b: &Matrix) -> Matrix {
        let z = self.l.solve_lower_triangular(b).expect("non-singular factor");
        self.l.transpose().solve_upper_triangular(&z).expect("non-singular factor")
    }

    pub fn solve_vec(&self, b: &Vector) -> Vector {
        let z = self.l.solve_lower_triangular(b).expect("non-singular factor");
        self.l.transpose().solve_upper_triangular(&z).expect("non-singular factor")
    }

    /// `L⁻¹ B`, the half solve used for predictive variances.
    pub fn solve_lower(&self, b: &Matrix) -> Matrix {
        self.l.solve_lower_triangular(b).expect("non-singular factor")
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    pub fn inverse(&self) -> Matrix {
        self.solve(&Matrix::identity(self.l.nrows(), self.l.nrows()))
    }
}

/// Cholesky factorization retrying with jitter `0, j0, 10·j0, …` up to
/// `1e-2·trace(K)/n`.
pub fn cholesky_jitter(k: &Matrix, jitter0: f64) -> Result<CholeskyFactor> {
    if !k.is_square() || k.nrows() == 0 {
        return Err(Error::shape("cholesky", "non-empty square matrix", format!("{}x{}", k.nrows(), k.ncols())));
    }
    if !(jitter0 > 0.0) {
        return Err(Error::Validation(format!("initial jitter must be positive, got {jitter0}")));
    }
    ensure_finite(k, "cholesky input")?;
    let asym = (k - k.transpose()).amax();
    if asym > 1e-10 * k.amax().max(1.0) {
        return Err(Error::Validation(format!("cholesky requires a symmetric matrix (max asymmetry {asym:e})")));
    }
    let n = k.nrows();
    let cap = 1e-2 * k.trace().abs() / n as f64;
    let mut jitter = 0.0;
    loop {
        let mut kj = k.clone();
        if jitter > 0.0 {
            for i in 0..n {
                kj[(i, i)] += jitter;
            }
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok(CholeskyFactor { l: c.unpack(), jitter });
        }
        let next = if jitter == 0.0 { jitter0 } else { jitter * 10.0 };
        if next > cap {
            return Err(Error::NotPositiveDefinite { max_jitter: jitter });
        }
        jitter = next;
    }
}

/// Explicit feature map of the degree-2 polynomial kernel `(1 + xᵀx′)²` on R².
pub fn poly2_feature_map(x: &[f64]) -> Result<[f64; 6]> {
    let &[x1, x2] = x else {
        return Err(Error::Validation(format!("poly2 feature map needs 2 components, got {}", x.len())));
    };
    let r2 = std::f64::consts::SQRT_2;
    Ok([1.0, r2 * x1, r2 * x2, x1 * x1, x2 * x2, r2 * x1 * x2])
}

/// Maximum number of regions that `hyperplanes` hyperplanes in general
/// position cut R^`dim` into: `Σ_{i=0..dim} C(h, i)`.
pub fn region_count(hyperplanes: u32, dim: u32) -> u128 {
    let h = hyperplanes as u128;
    let mut total = 0u128;
    let mut binom = 1u128;
    for i in 0..=(dim.min(hyperplanes) as u128) {
        total += binom;
        binom = binom * (h - i) / (i + 1);
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn svd_identity_and_diagonal() {
        let s = svd(&Matrix::identity(3, 3)).unwrap();
        assert_eq!(s.d.as_slice(), &[1.0, 1.0, 1.0]);
        assert!((s.u.transpose() * &s.v - Matrix::identity(3, 3)).amax() < 1e-12);

        let m = Matrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -2.0]);
        let s = svd(&m).unwrap();
        assert!((s.d[0] - 3.0).abs() < 1e-14 && (s.d[1] - 2.0).abs() < 1e-14);
        assert!((s.reconstruct() - m).amax() < 1e-14);
    }

    #[test]
    fn svd_reveals_rank_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut m = Matrix::zeros(6, 4);
        for _ in 0..2 {
            let a = Vector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
            let b = Vector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            m += a * b.transpose();
        }
        let s = svd(&m).unwrap();
        assert!(s.d[2] <= 1e-10 * s.d[0]);
        assert!(s.d[3] <= 1e-10 * s.d[0]);
        assert_eq!(s.rank(), 2);
    }

    #[test]
    fn svd_sign_convention_is_deterministic() {
        let m = random(7, 3, 9);
        let s = svd(&m).unwrap();
        for j in 0..3 {
            let col = s.v.column(j);
            let imax = col.iamax();
            assert!(col[imax] > 0.0);
        }
        let s2 = svd(&(-&m)).unwrap();
        // Flipping the input flips U, not V.
        assert!((s2.v.clone() - s.v.clone()).amax() < 1e-12);
    }

    #[test]
    fn svd_reconstruction_large() {
        for (r, c, seed) in [(200, 200, 1), (120, 30, 2), (15, 90, 3)] {
            let m = random(r, c, seed);
            let s = svd(&m).unwrap();
            let err = (s.reconstruct() - &m).norm() / m.norm();
            assert!(err <= 1e-8, "{r}x{c}: {err}");
            let k = s.d.len();
            assert!((s.u.transpose() * &s.u - Matrix::identity(k, k)).amax() < 1e-10);
            assert!((s.v.transpose() * &s.v - Matrix::identity(k, k)).amax() < 1e-10);
            assert!(s.d.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn eigh_examples() {
        let e = eigh_sym(&Matrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(e.values.as_slice(), &[4.0, 1.0]);
        assert!((e.vectors.clone() - Matrix::identity(2, 2)).amax() < 1e-14);

        let e = eigh_sym(&Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12 && (e.values[1] - 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((e.vectors.column(0)[0] - h).abs() < 1e-12 && (e.vectors.column(0)[1] - h).abs() < 1e-12);
        assert!((e.vectors.column(1)[0].abs() - h).abs() < 1e-12);
        assert!((e.vectors.column(1)[0] + e.vectors.column(1)[1]).abs() < 1e-12);
    }

    #[test]
    fn eigh_rejects_asymmetric() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(eigh_sym(&m), Err(Error::Validation(_))));
    }

    #[test]
    fn eigh_of_gram_matches_squared_singular_values() {
        let x = random(30, 6, 4);
        let g = x.transpose() * &x;
        let e = eigh_sym(&g).unwrap();
        let s = svd(&x).unwrap();
        for j in 0..6 {
            assert!((e.values[j] - s.d[j] * s.d[j]).abs() <= 1e-8 * e.values[0]);
            let v = e.vectors.column(j);
            assert!(((&g * v) - v * e.values[j]).amax() < 1e-8 * e.values[0]);
        }
    }

    #[test]
    fn ols_identity_and_exact() {
        let y = random(4, 2, 5);
        let b = solve_ols(&Matrix::identity(4, 4), &y).unwrap();
        assert!((b - &y).amax() < 1e-14);

        let x = random(40, 5, 6);
        let beta = random(5, 1, 7);
        let b = solve_ols(&x, &(&x * &beta)).unwrap();
        assert!((b - beta).amax() < 1e-10);
    }

    #[test]
    fn ols_rank_deficient_is_minimum_norm() {
        let base = random(25, 3, 8);
        let mut x = Matrix::zeros(25, 4);
        x.columns_mut(0, 3).copy_from(&base);
        x.column_mut(3).copy_from(&base.column(0));
        let y = random(25, 1, 9);
        let b = solve_ols(&x, &y).unwrap();
        let b_sub = solve_ols(&base, &y).unwrap();
        let r_full = (&y - &x * &b).norm();
        let r_sub = (&y - &base * &b_sub).norm();
        assert!((r_full - r_sub).abs() < 1e-10);
        // Weight of the duplicated column splits evenly.
        assert!((b[(0, 0)] - b[(3, 0)]).abs() < 1e-10);
        assert!((b[(0, 0)] + b[(3, 0)] - b_sub[(0, 0)]).abs() < 1e-10);
    }

    #[test]
    fn ols_residual_is_orthogonal() {
        let x = random(50, 7, 10);
        let y = random(50, 2, 11);
        let b = solve_ols(&x, &y).unwrap();
        let g = x.transpose() * (&y - &x * b);
        assert!(g.norm() <= 1e-8 * (x.transpose() * &y).norm());
    }

    #[test]
    fn standardize_examples() {
        let m = Matrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let (z, p) = standardize(&m).unwrap();
        let sd = (2.0f64 / 3.0).sqrt();
        assert!((z[(0, 0)] + 1.0 / sd).abs() < 1e-12 && z[(1, 0)].abs() < 1e-12);
        assert!((p.invert(&z).unwrap() - &m).amax() < 1e-12);

        let (z2, _) = standardize(&z).unwrap();
        assert!((z2 - &z).amax() < 1e-12);

        let c = Matrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        assert!(matches!(standardize(&c), Err(Error::DegenerateColumn { column: 1 })));
    }

    #[test]
    fn cholesky_examples() {
        let c = cholesky_jitter(&Matrix::identity(3, 3), 1e-10).unwrap();
        assert_eq!(c.jitter, 0.0);
        assert_eq!(c.l, Matrix::identity(3, 3));

        let k = Matrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 2.0]);
        let c = cholesky_jitter(&k, 1e-10).unwrap();
        assert!((c.l - Matrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0])).amax() < 1e-14);

        let c = cholesky_jitter(&Matrix::from_element(2, 2, 1.0), 1e-10).unwrap();
        assert!(c.jitter > 0.0);
        let mut kj = Matrix::from_element(2, 2, 1.0);
        kj[(0, 0)] += c.jitter;
        kj[(1, 1)] += c.jitter;
        assert!((&c.l * c.l.transpose() - kj).amax() < 1e-12);
    }

    #[test]
    fn cholesky_gives_up_past_the_cap() {
        let k = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(cholesky_jitter(&k, 1e-10), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn poly2_examples() {
        assert_eq!(poly2_feature_map(&[0.0, 0.0]).unwrap(), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let f = poly2_feature_map(&[1.0, 1.0]).unwrap();
        let dot: f64 = f.iter().map(|v| v * v).sum();
        assert!((dot - 9.0).abs() < 1e-12);
        assert!(poly2_feature_map(&[1.0]).is_err());
        assert!(poly2_feature_map(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn region_count_examples() {
        assert_eq!(region_count(3, 2), 7);
        assert_eq!(region_count(0, 5), 1);
        assert_eq!(region_count(4, 2), 11);
        assert_eq!(region_count(4, 10), 16);
        assert_eq!(region_count(1, 1), 2);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn poly2_kernel_identity(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0, d in -2.0f64..2.0) {
                let f = poly2_feature_map(&[a, b]).unwrap();
                let g = poly2_feature_map(&[c, d]).unwrap();
                let dot: f64 = f.iter().zip(&g).map(|(u, v)| u * v).sum();
                let k = (1.0 + a * c + b * d).powi(2);
                prop_assert!((dot - k).abs() <= 1e-12 * k.max(1.0));
            }

            #[test]
            fn standardize_round_trip(vals in proptest::collection::vec(-1e3f64..1e3, 12)) {
                let m = Matrix::from_row_slice(6, 2, &vals);
                if let Ok((z, p)) = standardize(&m) {
                    let back = p.invert(&z).unwrap();
                    prop_assert!((back - &m).amax() <= 1e-12 * m.amax().max(1.0));
                }
            }
        }
    }
}
