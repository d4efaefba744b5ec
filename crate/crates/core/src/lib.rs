//! System identification of hidden-state LTI models of unknown order from a
//! single trajectory: Hankel nuclear-norm penalized regression, singular-value
//! order detection, reduced-order refit and Ho-Kalman realization, plus the
//! Monte-Carlo checks used to validate the estimator's rates.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod linalg;
pub mod lti;
pub mod pipeline;
pub mod realize;
pub mod simulate;
pub mod solver;

pub use error::{Result, SysIdError};
pub use lti::{HankelMatrix, MarkovSeq, NoiseSpec, StateSpace};
pub use simulate::{build_regression, simulate, NoiseKind, RegressionData, SimOptions, Trajectory};
