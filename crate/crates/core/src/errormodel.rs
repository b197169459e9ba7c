//! Closed-form mean squared ℓ2 error of each mechanism, and the calibrated
//! comparison table across dimensions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{calibrate_gaussian, calibrate_l2, laplace_sigma, Mechanism, PrivacyParams};
use crate::error::{Error, Result};
use crate::lossbounds::CheckOptions;
use crate::specfun::ln_gamma;

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "{name} must be positive, got {value}"
        )))
    }
}

/// Mean squared ℓ2 error of the d-dimensional ℓp (K-norm) mechanism with
/// scale `sigma`:
/// `(dσ)² (d + 1) Γ(d/p) Γ(3/p) / (Γ(1/p) Γ((d + 2)/p))`.
pub fn mse_lp_mechanism(dim: usize, p: f64, sigma: f64) -> Result<f64> {
    if dim == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    check_positive("p", p)?;
    check_positive("sigma", sigma)?;
    let d = dim as f64;
    let ln_ratio =
        ln_gamma(d / p) + ln_gamma(3.0 / p) - ln_gamma(1.0 / p) - ln_gamma((d + 2.0) / p);
    Ok((2.0 * (d * sigma).ln() + (d + 1.0).ln() + ln_ratio).exp())
}

/// `d (d + 1) σ²`.
pub fn mse_l2(dim: usize, sigma: f64) -> f64 {
    let d = dim as f64;
    d * (d + 1.0) * sigma * sigma
}

/// `2 d b²` for per-coordinate Laplace scale `b`.
pub fn mse_laplace(dim: usize, scale: f64) -> f64 {
    2.0 * dim as f64 * scale * scale
}

/// `d σ²`.
pub fn mse_gaussian(dim: usize, sigma: f64) -> f64 {
    dim as f64 * sigma * sigma
}

pub fn mechanism_mse(mechanism: Mechanism, dim: usize, sigma: f64) -> f64 {
    match mechanism {
        Mechanism::L2 => mse_l2(dim, sigma),
        Mechanism::Laplace => mse_laplace(dim, sigma),
        Mechanism::Gaussian => mse_gaussian(dim, sigma),
    }
}

/// One mechanism at one dimension, normalized to the analytic Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    #[serde(rename = "d")]
    pub dim: usize,
    pub mechanism: Mechanism,
    pub sigma: f64,
    pub mse: f64,
    pub normalized_mse: f64,
}

/// Calibrates all three mechanisms for every `d` in `1..=d_max` and reports
/// their MSE. Rows come in ascending `d`, ordered ℓ2, Laplace, Gaussian.
pub fn comparison_table(
    params: PrivacyParams,
    d_max: usize,
    options: &CheckOptions,
    tol: f64,
) -> Result<Vec<ErrorRow>> {
    if d_max == 0 {
        return Err(Error::domain("d_max must be at least 1"));
    }
    let gaussian_sigma = calibrate_gaussian(params, tol)?.sigma;
    let per_dim: Vec<Result<[ErrorRow; 3]>> = (1..=d_max)
        .into_par_iter()
        .map(|dim| {
            let sigmas = [
                (
                    Mechanism::L2,
                    calibrate_l2(dim, params, options, tol)?.sigma,
                ),
                (Mechanism::Laplace, laplace_sigma(dim, params)?.sigma),
                (Mechanism::Gaussian, gaussian_sigma),
            ];
            let anchor = mse_gaussian(dim, gaussian_sigma);
            Ok(sigmas.map(|(mechanism, sigma)| {
                let mse = mechanism_mse(mechanism, dim, sigma);
                ErrorRow {
                    dim,
                    mechanism,
                    sigma,
                    mse,
                    normalized_mse: mse / anchor,
                }
            }))
        })
        .collect();
    let mut rows = Vec::with_capacity(3 * d_max);
    for block in per_dim {
        rows.extend(block?);
    }
    Ok(rows)
}
