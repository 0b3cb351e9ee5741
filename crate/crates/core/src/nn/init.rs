use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Glorot/Xavier uniform bound for a `fan_out × fan_in` weight.
pub fn glorot_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

/// Glorot-uniform `rows × cols` weight drawn from `rng`.
pub fn glorot<T: Scalar, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor<T> {
    let bound = glorot_bound(rows, cols);
    let data = (0..rows * cols).map(|_| T::of(rng.gen_range(-bound..bound))).collect();
    Tensor::from_vec(rows, cols, data)
}

/// Glorot-uniform weight from its own seed.
pub fn init_glorot<T: Scalar>(rows: usize, cols: usize, seed: u64) -> Tensor<T> {
    glorot(&mut ChaCha8Rng::seed_from_u64(seed), rows, cols)
}
