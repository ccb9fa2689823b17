//! Nonlinear acceleration of gradient-descent iterate sequences.
//!
//! The crate provides the direct nonlinear acceleration family (DNA and its
//! regularized variants DNA-1, DNA-2, DNA-3), regularized nonlinear
//! acceleration (RNA) and Anderson acceleration, the online and offline
//! schedules that feed gradient-descent windows to them, and executable
//! checks of the closed-form quadratic theory behind them.
//!
//! Module map:
//!
//! * [`problems`]: least squares, ridge and logistic objectives with exact
//!   gradients and reference optima.
//! * [`linalg`]: small dense solves, SVD helpers and the synthetic matrix
//!   factory with prescribed singular values.
//! * [`extrapolate`]: iterate windows, residual matrices and the extrapolators.
//! * [`schemes`]: gradient descent plus the online/offline schedules.
//! * [`oracle`]: closed-form values, ratio bounds and pseudo-inverse identities
//!   for quadratics.
//! * [`io`]: LIBSVM parsing, trace CSV and JSON summaries.
//! * [`cli`]: the `dna` command-line driver.

pub mod cli;
pub mod error;
pub mod extrapolate;
pub mod io;
pub mod linalg;
pub mod oracle;
pub mod parallel;
pub mod problems;
pub mod schemes;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
