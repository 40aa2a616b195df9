//! Seeded synthetic datasets for the experiments.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::random::{normal_matrix, normal_vector, seeded, substream, uniform_matrix, unit_vector};

/// Inputs and a single response.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
}

/// Random `p × k` matrix with orthonormal columns.
pub fn orthonormal_basis(p: usize, k: usize, seed: u64) -> Matrix {
    let g = normal_matrix(&mut seeded(seed), p, k);
    g.qr().q().columns(0, k).into_owned()
}

/// Stand-in for the 300-run, 20-input contaminant-transport table: a smooth
/// response on a 3-dimensional active subspace of uniform inputs.
pub fn marthe_like(n: usize, seed: u64) -> Dataset {
    let p = 20;
    let x = uniform_matrix(&mut seeded(seed), n, p, -1.0, 1.0);
    let a = orthonormal_basis(p, 3, seed.wrapping_add(0x5eed));
    let z = &x * &a * 3f64.sqrt();
    let noise = normal_vector(&mut substream(seed, 1), n);
    let y = Matrix::from_fn(n, 1, |i, _| {
        let (z0, z1, z2) = (z[(i, 0)], z[(i, 1)], z[(i, 2)]);
        z0 + (3.0 * z0).sin() + 0.2 * z1 + 0.1 * z2 * z2 + 0.05 * noise[i]
    });
    Dataset { x, y }
}

/// `y = |uᵀx| + ε` with `x ~ U[-1, 1]^p`, `ε ~ N(0, noise_var)`. Returns the data and `u`.
pub fn ridge_abs(n: usize, p: usize, noise_var: f64, seed: u64) -> (Dataset, Vector) {
    let u = unit_vector(&mut seeded(seed), p);
    let x = uniform_matrix(&mut substream(seed, 1), n, p, -1.0, 1.0);
    let noise = normal_vector(&mut substream(seed, 2), n) * noise_var.sqrt();
    let y = Matrix::from_fn(n, 1, |i, _| x.row(i).dot(&u.transpose()).abs() + noise[i]);
    (Dataset { x, y }, u)
}

/// Two-class donut: class 0 uniform on the disk `r ≤ inner`, class 1 uniform
/// on the annulus `outer_lo ≤ r ≤ outer_hi`.
#[derive(Debug, Clone, Copy)]
pub struct DonutConfig {
    pub per_class: usize,
    pub inner: f64,
    pub outer_lo: f64,
    pub outer_hi: f64,
}

impl Default for DonutConfig {
    fn default() -> Self {
        Self {
            per_class: 500,
            inner: 1.4,
            outer_lo: 2.2,
            outer_hi: 3.0,
        }
    }
}

/// Points (2 columns) and labels in {0, 1}, disk first.
pub fn donut(config: &DonutConfig, seed: u64) -> Result<(Matrix, Vec<u8>)> {
    if !(0.0 < config.inner && config.inner < config.outer_lo && config.outer_lo < config.outer_hi) {
        return Err(Error::Validation("donut radii must satisfy 0 < inner < outer_lo < outer_hi".into()));
    }
    let mut rng = seeded(seed);
    let n = 2 * config.per_class;
    let mut x = Matrix::zeros(n, 2);
    let mut labels = vec![0u8; n];
    let angles = uniform_matrix(&mut rng, n, 1, 0.0, std::f64::consts::TAU);
    let radial = uniform_matrix(&mut rng, n, 1, 0.0, 1.0);
    for i in 0..n {
        let (lo, hi) = if i < config.per_class {
            (0.0, config.inner)
        } else {
            labels[i] = 1;
            (config.outer_lo, config.outer_hi)
        };
        // Area-uniform radius.
        let r = (lo * lo + radial[i] * (hi * hi - lo * lo)).sqrt();
        x[(i, 0)] = r * angles[i].cos();
        x[(i, 1)] = r * angles[i].sin();
    }
    Ok((x, labels))
}

/// Latent-score data where the second PLS block responds quadratically:
/// `x = t·a + small noise`, `y = t² + noise`.
pub fn quadratic_score(n: usize, p: usize, noise_sd: f64, seed: u64) -> Dataset {
    let mut rng = seeded(seed);
    let t = normal_vector(&mut rng, n);
    let a = unit_vector(&mut rng, p);
    let xn = normal_matrix(&mut substream(seed, 1), n, p) * 0.05;
    let x = &t * a.transpose() + xn;
    let e = normal_vector(&mut substream(seed, 2), n) * noise_sd;
    let y = Matrix::from_fn(n, 1, |i, _| t[i] * t[i] + e[i]);
    Dataset { x, y }
}
