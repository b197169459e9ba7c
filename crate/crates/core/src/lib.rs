//! Calibration, sampling, and verification of the ℓ2 mechanism, the
//! K-norm mechanism for the Euclidean norm, under approximate differential
//! privacy.
//!
//! The mechanism adds noise with density proportional to
//! `exp(−‖y − T(X)‖₂ / σ)`. It is `1/σ`-DP outright; [`lossbounds`]
//! certifies the tighter `(ε, δ)` guarantee, and [`calibrate`] searches for
//! the smallest `σ` that achieves it. Statistics are assumed to have unit
//! ℓ2 sensitivity; rescale with [`CalibrationResult::rescaled`] otherwise.
//!
//! ```
//! use l2mech::{calibrate_l2, CheckOptions, PrivacyParams};
//!
//! let params = PrivacyParams::new(1.0, 1e-5).unwrap();
//! let result = calibrate_l2(8, params, &CheckOptions::default(), 0.001).unwrap();
//! assert!(result.sigma < 1.0);
//! ```

pub mod calibrate;
pub mod capgeom;
pub mod error;
pub mod errormodel;
pub mod lossbounds;
pub mod mcverify;
pub mod sampler;
pub mod specfun;

pub use calibrate::{
    calibrate, calibrate_gaussian, calibrate_l2, laplace_sigma, CalibrationResult, Mechanism,
    PrivacyParams,
};
pub use error::{Error, Result};
pub use errormodel::{comparison_table, ErrorRow};
pub use lossbounds::{check_approx_dp, check_approx_dp_with, BoundReport, CheckOptions, GridSpec};
pub use mcverify::{empirical_lhs, empirical_min_sigma, EmpiricalPrivacyEstimate};
pub use sampler::{RngState, SampleBatch};
