//! Tensors, reverse-mode differentiation, Adam, and finite-difference checks.

mod adam;
mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckReport, ParamCheck};
pub use params::{Bound, ParamId, ParamStore};
pub use tape::{sigmoid, Gradients, Tape, Var};
pub use tensor::{cross_entropy, softmax, Real, Tensor, PROB_FLOOR};

use rand::Rng;

/// Uniform initialization in `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Real>(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor<T> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    uniform(rng, &[rows, cols], -a, a)
}

pub fn uniform<T: Real>(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<T> {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.gen_range(lo..=hi))).collect();
    Tensor::new(shape.to_vec(), data).expect("uniform shape")
}
