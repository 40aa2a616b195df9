//! Seeded randomness. Every stochastic routine takes an explicit seed and
//! draws from ChaCha8, which is reproducible across platforms.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::numerics::{Matrix, Vector};

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent stream from `(seed, stream)`.
pub fn substream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn normal_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    // Fill row-major so draws map to rows in order.
    let vals: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_row_slice(rows, cols, &vals)
}

pub fn uniform_matrix(rng: &mut SeededRng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    let vals: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Matrix::from_row_slice(rows, cols, &vals)
}

pub fn normal_vector(rng: &mut SeededRng, len: usize) -> Vector {
    Vector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

pub fn unit_vector(rng: &mut SeededRng, len: usize) -> Vector {
    let v = normal_vector(rng, len);
    let n = v.norm();
    v / n
}

pub fn permutation(rng: &mut SeededRng, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

/// Seeded random fold labels in `0..folds`, balanced to within one row.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let perm = permutation(&mut seeded(seed), n);
    let mut labels = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        labels[row] = pos % folds;
    }
    labels
}

/// Seeded train/test split; returns `(train_rows, test_rows)`.
pub fn train_test_split(n: usize, train_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let perm = permutation(&mut seeded(seed), n);
    let n_train = ((n as f64) * train_frac).round() as usize;
    let n_train = n_train.clamp(1, n.saturating_sub(1).max(1));
    let (a, b) = perm.split_at(n_train);
    (a.to_vec(), b.to_vec())
}

pub fn select_rows(m: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}
