//! Controllability and terminal control of Caputo fractional systems
//!
//! ```text
//! ᶜD^α y(t) = -A f(y(t)) y(t) + B u(t),  y(0) = y0,  y(T) = y_T
//! ```
//!
//! Everything numerical is generic over [`Real`]; the aliases at the bottom fix
//! the scalar to `f64`.

// NaN must fail every domain check, so `!(x > 0)` is preferred to `x <= 0`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod error;
mod quadrature;
pub mod scalar;
pub mod special_functions;
mod weights;

pub mod frac_calc;
pub mod frac_ode;
pub mod grid;
pub mod linear_control;
pub mod nonlinear_control;
pub mod problem;
pub mod random;
pub mod transition;

pub use error::{Error, Result};
pub use scalar::Real;
pub use weights::WeightBank;

pub type TimeGrid = grid::TimeGrid<f64>;
pub type SampledFunction = grid::SampledFunction<f64>;
pub type Trajectory = frac_ode::Trajectory<f64>;
pub type PiecewiseControl = frac_ode::PiecewiseControl<f64>;
pub type AdjointSolution = frac_ode::AdjointSolution<f64>;
pub type TransitionKernel = transition::TransitionKernel<f64>;
pub type Gramian = linear_control::Gramian<f64>;
pub type ControlLaw = linear_control::ControlLaw<f64>;
pub type ObservabilityReport = linear_control::ObservabilityReport<f64>;
pub type SynthesisReport = nonlinear_control::SynthesisReport<f64>;
