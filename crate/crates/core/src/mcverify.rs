//! Monte-Carlo estimates of the exact privacy-loss left-hand side
//! `P_{M(0)}[V] − e^ε P_{M(1)}[V]`, and the empirical minimum σ.
//!
//! These are statistical checks on the analytic bounds, not certificates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{bisect_min_sigma, PrivacyParams};
use crate::capgeom::LossGeometry;
use crate::error::{Error, Result};
use crate::sampler::{fill_l2, RngState};

const CHUNK: usize = 8192;

/// Counts from `n` draws of `M(0)` and `n` draws of `M(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPrivacyEstimate {
    pub d: usize,
    pub sigma: f64,
    pub epsilon: f64,
    pub n: usize,
    /// Fraction of `M(0)` draws in the high-loss region.
    pub c1: f64,
    /// Fraction of `M(1)` draws in the high-loss region.
    pub c2: f64,
    /// `c1 − e^ε c2`.
    #[serde(rename = "lhs")]
    pub lhs_estimate: f64,
    /// `SE(c1) + e^ε SE(c2)`.
    pub std_error: f64,
    pub seed: u64,
}

/// Agresti–Coull binomial standard error of an observed fraction: two
/// pseudo-successes and two pseudo-failures, so counts of 0 or `n` still
/// carry a usable error.
fn binomial_se(fraction: f64, n: usize) -> f64 {
    let n = n as f64;
    let adjusted_n = n + 4.0;
    let p = (fraction * n + 2.0) / adjusted_n;
    (p * (1.0 - p) / adjusted_n).sqrt()
}

impl EmpiricalPrivacyEstimate {
    pub fn c1_std_error(&self) -> f64 {
        binomial_se(self.c1, self.n)
    }

    pub fn c2_std_error(&self) -> f64 {
        binomial_se(self.c2, self.n)
    }
}

/// Number of `n` ℓ2 draws about `center` that land in `V`, generated in
/// fixed chunks on substreams of `state` and summed in chunk order.
fn count_high_loss(geom: &LossGeometry, center_first: f64, n: usize, state: RngState) -> usize {
    let dim = geom.dim();
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = state.substream(k as u64).rng();
            let mut center = vec![0.0; dim];
            center[0] = center_first;
            let mut y = vec![0.0; dim];
            let len = CHUNK.min(n - k * CHUNK);
            (0..len)
                .filter(|_| {
                    fill_l2(&center, geom.sigma(), &mut rng, &mut y);
                    geom.in_high_loss_region(&y)
                })
                .count()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

/// Estimates the privacy-loss left-hand side from `n` draws of each of
/// `M(0)` and `M(1)`.
///
/// The same `state` gives the same underlying uniforms for every `σ`, so a
/// search over `σ` sees common random numbers.
pub fn empirical_lhs(
    dim: usize,
    sigma: f64,
    epsilon: f64,
    n: usize,
    state: RngState,
) -> Result<EmpiricalPrivacyEstimate> {
    if n == 0 {
        return Err(Error::domain("sample count must be at least 1"));
    }
    let geom = LossGeometry::new(dim, sigma, epsilon)?;
    let hits0 = count_high_loss(&geom, 0.0, n, state.substream(0));
    let hits1 = count_high_loss(&geom, 1.0, n, state.substream(1));
    let c1 = hits0 as f64 / n as f64;
    let c2 = hits1 as f64 / n as f64;
    let weight = epsilon.exp();
    Ok(EmpiricalPrivacyEstimate {
        d: dim,
        sigma,
        epsilon,
        n,
        c1,
        c2,
        lhs_estimate: c1 - weight * c2,
        std_error: binomial_se(c1, n) + weight * binomial_se(c2, n),
        seed: state.seed,
    })
}

/// Whether `n` draws per evaluation are too few to resolve `δ`
/// (fewer than 100 expected hits at rate `δ`).
pub fn is_undersampled(n: usize, delta: f64) -> bool {
    (n as f64) * delta < 100.0
}

/// Smallest σ (within `tol`) at which the empirical left-hand side is at
/// most `δ`. Stochastic: different seeds move it within Monte-Carlo noise.
pub fn empirical_min_sigma(
    dim: usize,
    params: PrivacyParams,
    n: usize,
    tol: f64,
    state: RngState,
) -> Result<f64> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let (epsilon, delta) = (params.epsilon(), params.delta());
    let passes =
        |sigma: f64| empirical_lhs(dim, sigma, epsilon, n, state).map(|e| e.lhs_estimate <= delta);
    let ceiling = 1.0 / epsilon;
    if !passes(ceiling)? {
        return Err(Error::Bracket(format!(
            "empirical check failed at the pure-DP ceiling sigma = {ceiling}"
        )));
    }
    let start = tol.min(0.5 * ceiling);
    if passes(start)? {
        return Err(Error::Bracket(format!(
            "empirical check already passes at the lower end sigma = {start}"
        )));
    }
    Ok(bisect_min_sigma(passes, start, ceiling, tol)?.sigma)
}
