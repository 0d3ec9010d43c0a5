//! Scalar reverse-mode differentiation and a finite-difference harness.
//!
//! ```
//! use elastic_res::autodiff::Tape;
//! use elastic_res::Real;
//!
//! let tape = Tape::<f64>::new();
//! let x = tape.var(2.0);
//! let y = tape.var(3.0);
//! let z = (x * y).exp();
//! z.backward();
//! assert!((x.grad() - 3.0 * 6f64.exp()).abs() < 1e-9);
//! ```

mod check;
mod tape;

pub use check::{
    central_differences, check_gradients, relative_error, tape_gradient, GradCheckConfig,
    GradCheckReport, Objective,
};
pub use tape::{Checkpoint, DomainError, Op, Tape, Var};
