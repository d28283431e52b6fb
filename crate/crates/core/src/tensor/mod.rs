//! Dense matrices, a sparse propagation kernel, a reverse-mode tape and Adam.

mod adam;
mod matrix;
mod sparse;
pub mod special;
mod tape;

pub use adam::AdamState;
pub use matrix::Matrix;
pub use sparse::CsrMatrix;
pub use tape::{log_sum_exp, sigmoid, Gradients, Propagator, Tape, Var};

use rand::Rng;

/// Glorot-uniform initialization for a `fan_in x fan_out` weight matrix.
pub fn glorot_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("length matches")
}
