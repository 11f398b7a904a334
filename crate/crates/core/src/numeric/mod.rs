//! Dense arrays, reverse-mode differentiation, seeded randomness and Adam.

mod adam;
mod grad_check;
mod rng;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use grad_check::{grad_check, relative_error, CoordCheck, GradCheckConfig, GradCheckReport};
pub use rng::{Rng, RNG_VERSION};
pub use tape::{log_sum_exp, Gradients, Tape, Var, LAYER_NORM_EPS};
pub use tensor::{dot, Real, Tensor};
