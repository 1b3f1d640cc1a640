//! Dense vectors and matrices, elementwise nonlinearities, reverse-mode
//! differentiation, fixed-step RK4 and a finite-difference checker.

pub mod array;
pub mod gradcheck;
pub mod rk4;
pub mod scalar;
pub mod tape;

pub use array::{affine, hyperbolic_tangent, logistic, RealArray};
pub use gradcheck::{finite_difference_check, relative_error, FdReport};
pub use rk4::{integrate, integrate_with_step, rk4_trajectory, OdeSystem};
pub use scalar::Scalar;
pub use tape::{reverse_gradients, CustomOp, Gradients, Tape, Var};
