//! Two-fold cross-validated primal Lasso.
//!
//! The crate fits `min ||y - X b||  s.t.  |b|_1 <= K`, chooses `K` with a
//! split-sample cross-validation scheme that recombines out-of-half
//! predictions, estimates the noise variance from the residuals of the
//! selected fit, and evaluates closed-form bounds on the resulting
//! prediction and variance errors. A Monte Carlo harness checks the bounds
//! on synthetic data.
//!
//! ```
//! use cvlasso::{cv_lasso, CvOptions, DesignMatrix};
//!
//! let x = DesignMatrix::identity(2).unwrap();
//! let est = cv_lasso(&x, &[3.0, 1.0], &CvOptions { seed: 7, ..Default::default() }).unwrap();
//! assert!(est.sigma2_hat.unwrap() >= 0.0);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod crossval;
pub mod error;
pub mod matrix;
pub mod simlab;
pub mod solver;

pub use bounds::{bound_report, BoundInputs, BoundReport};
pub use crossval::{cv_lasso, CvEstimate, CvOptions, GridSpec, SplitAssignment};
pub use error::{Error, Result};
pub use matrix::DesignMatrix;
pub use simlab::{run_monte_carlo, Scenario, SimulationReport};
pub use solver::{
    fit_path, project_l1_ball, solve_constrained_lasso, ConstrainedFit, LassoPath, SolverConfig,
};
