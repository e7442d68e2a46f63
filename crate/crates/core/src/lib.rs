//! Approximate message passing (AMP) for the LASSO together with its state
//! evolution: threshold calibration, asymptotic risk prediction, a certified
//! reference LASSO solver, seeded random instances, and a sweep harness that
//! compares the three on finite problems.
//!
//! ```
//! use amp_lasso::state_evolution::{predicted_risk, SeParams};
//!
//! let params = SeParams::reference();
//! let pred = predicted_risk(&params, 1.0).unwrap();
//! assert!(pred.mse_predicted > 0.0 && pred.tau2_star > params.sigma2);
//! ```

pub mod amp;
pub mod error;
pub mod experiments;
pub mod instances;
pub mod lasso;
pub mod linalg;
pub mod quadrature;
pub mod scalar;
pub mod state_evolution;

pub use amp::{amp_step, amp_step_with_onsager, run_amp, AmpDiagnostics, AmpOptions, AmpState, ThresholdPolicy};
pub use error::{Error, Result};
pub use instances::{generate, Ensemble, Instance};
pub use lasso::{solve_lasso, LassoOptions, LassoSolution};
pub use linalg::DenseMatrix;
pub use scalar::Prior;
pub use state_evolution::{predicted_risk, PredictionBundle, SeParams};
