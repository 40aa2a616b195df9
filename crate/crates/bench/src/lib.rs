//! Shared fixtures for the benchmarks.

use twocultures_core::random::{normal_matrix, seeded};
use twocultures_core::Matrix;

/// `x` (n × p) and `y = x·b + noise` (n × q).
pub fn regression(n: usize, p: usize, q: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = seeded(seed);
    let x = normal_matrix(&mut rng, n, p);
    let b = normal_matrix(&mut rng, p, q);
    let y = &x * b + normal_matrix(&mut rng, n, q) * 0.1;
    (x, y)
}
