//! Smallest noise scale for the ℓ2, Laplace, and analytic Gaussian
//! mechanisms at a target `(ε, δ)`, all for unit ℓ2 sensitivity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lossbounds::{check_approx_dp_with, CheckOptions};
use crate::specfun::std_normal_cdf;

/// Binary-search tolerance on σ unless overridden.
pub const DEFAULT_TOLERANCE: f64 = 0.001;

const MAX_SEARCH_ITERATIONS: usize = 200;
const MAX_BRACKET_HALVINGS: usize = 60;

/// Target privacy parameters, `ε > 0` and `0 < δ < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    epsilon: f64,
    delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::domain(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::domain(format!(
                "delta must be in (0,1), got {delta}"
            )));
        }
        Ok(PrivacyParams { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Additive noise families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    L2,
    Laplace,
    Gaussian,
}

impl Mechanism {
    pub const ALL: [Mechanism; 3] = [Mechanism::L2, Mechanism::Laplace, Mechanism::Gaussian];

    pub fn name(&self) -> &'static str {
        match self {
            Mechanism::L2 => "l2",
            Mechanism::Laplace => "laplace",
            Mechanism::Gaussian => "gaussian",
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l2" => Ok(Mechanism::L2),
            "laplace" => Ok(Mechanism::Laplace),
            "gaussian" => Ok(Mechanism::Gaussian),
            other => Err(Error::domain(format!("unknown mechanism '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub mechanism: Mechanism,
    pub sigma: f64,
    /// Pure-DP guarantee the calibrated mechanism also meets, if any.
    pub pure_epsilon: Option<f64>,
    pub search_iterations: usize,
    /// Search tolerance on σ; zero for closed forms.
    pub tolerance: f64,
    /// The predicate still passed at the smallest σ tried, so `sigma` is
    /// that floor rather than a bracketed minimum.
    pub bracket_floor_hit: bool,
}

impl CalibrationResult {
    /// Scales the noise for a statistic with ℓ2 sensitivity `sensitivity`
    /// instead of 1. The pure-DP guarantee is unchanged.
    pub fn rescaled(mut self, sensitivity: f64) -> Result<Self> {
        if !(sensitivity.is_finite() && sensitivity > 0.0) {
            return Err(Error::domain(format!(
                "sensitivity must be positive, got {sensitivity}"
            )));
        }
        self.sigma *= sensitivity;
        Ok(self)
    }
}

fn check_tolerance(tol: f64) -> Result<()> {
    if tol.is_finite() && tol > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "tolerance must be positive, got {tol}"
        )))
    }
}

pub(crate) struct Search {
    pub(crate) sigma: f64,
    pub(crate) iterations: usize,
    pub(crate) floor_hit: bool,
}

/// Bisects for the smallest passing σ given a passing upper end `hi`.
/// The lower end starts at `start` and is halved until the predicate fails.
pub(crate) fn bisect_min_sigma(
    mut passes: impl FnMut(f64) -> Result<bool>,
    start: f64,
    hi: f64,
    tol: f64,
) -> Result<Search> {
    let mut hi = hi;
    let mut lo = start.min(0.5 * hi);
    let mut iterations = 0;
    let mut halvings = 0;
    while passes(lo)? {
        iterations += 1;
        if halvings == MAX_BRACKET_HALVINGS {
            return Ok(Search {
                sigma: lo,
                iterations,
                floor_hit: true,
            });
        }
        hi = lo;
        lo *= 0.5;
        halvings += 1;
    }
    while hi - lo > tol {
        iterations += 1;
        if iterations > MAX_SEARCH_ITERATIONS {
            return Err(Error::NoConvergence {
                what: "sigma binary search",
                iterations: MAX_SEARCH_ITERATIONS,
            });
        }
        let mid = 0.5 * (lo + hi);
        if passes(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Search {
        sigma: hi,
        iterations,
        floor_hit: false,
    })
}

/// DP predicate of the ℓ2 mechanism. A grid that collapses below its first
/// radius means nearly all mass sits deep inside the loss region, which
/// cannot be certified.
pub fn l2_passes(
    dim: usize,
    sigma: f64,
    params: PrivacyParams,
    options: &CheckOptions,
) -> Result<bool> {
    match check_approx_dp_with(dim, sigma, params, options) {
        Ok(report) => Ok(report.satisfies_dp),
        Err(Error::GridBelowStart { .. }) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Smallest σ (within `tol`) the bounds certify as `(ε, δ)`-DP.
///
/// The search lies in `[σ_lo, 1/ε]`; at `1/ε` the loss region is empty and
/// the check always passes.
pub fn calibrate_l2(
    dim: usize,
    params: PrivacyParams,
    options: &CheckOptions,
    tol: f64,
) -> Result<CalibrationResult> {
    check_tolerance(tol)?;
    if dim == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    let ceiling = 1.0 / params.epsilon();
    if !l2_passes(dim, ceiling, params, options)? {
        return Err(Error::Bracket(format!(
            "check failed at the pure-DP ceiling sigma = {ceiling}"
        )));
    }
    let search = bisect_min_sigma(|s| l2_passes(dim, s, params, options), tol, ceiling, tol)?;
    Ok(CalibrationResult {
        mechanism: Mechanism::L2,
        sigma: search.sigma,
        pure_epsilon: Some(1.0 / search.sigma),
        search_iterations: search.iterations,
        tolerance: tol,
        bracket_floor_hit: search.floor_hit,
    })
}

/// Exact `δ(σ)` of the Gaussian mechanism with unit ℓ2 sensitivity:
/// `Φ(1/(2σ) − εσ) − e^ε Φ(−1/(2σ) − εσ)`.
pub fn gaussian_delta(sigma: f64, epsilon: f64) -> Result<f64> {
    let a = 0.5 / sigma;
    let b = epsilon * sigma;
    Ok(std_normal_cdf(a - b)? - epsilon.exp() * std_normal_cdf(-a - b)?)
}

/// Smallest σ (within `tol`) for which the analytic Gaussian mechanism is
/// `(ε, δ)`-DP. Independent of the dimension.
pub fn calibrate_gaussian(params: PrivacyParams, tol: f64) -> Result<CalibrationResult> {
    check_tolerance(tol)?;
    let (epsilon, delta) = (params.epsilon(), params.delta());
    let passes = |s: f64| gaussian_delta(s, epsilon).map(|d| d <= delta);
    let mut hi = 1.0;
    let mut doublings = 0;
    while !passes(hi)? {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::Bracket(
                "gaussian delta never fell below target".into(),
            ));
        }
    }
    let search = bisect_min_sigma(passes, 0.5 * hi, hi, tol)?;
    Ok(CalibrationResult {
        mechanism: Mechanism::Gaussian,
        sigma: search.sigma,
        pure_epsilon: None,
        search_iterations: search.iterations + doublings,
        tolerance: tol,
        bracket_floor_hit: search.floor_hit,
    })
}

/// Per-coordinate Laplace scale `√d / (ε + δ)` for unit ℓ2 sensitivity
/// (ℓ1 sensitivity `√d`).
pub fn laplace_sigma(dim: usize, params: PrivacyParams) -> Result<CalibrationResult> {
    if dim == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    let l1_sensitivity = (dim as f64).sqrt();
    let sigma = l1_sensitivity / (params.epsilon() + params.delta());
    Ok(CalibrationResult {
        mechanism: Mechanism::Laplace,
        sigma,
        pure_epsilon: Some(l1_sensitivity / sigma),
        search_iterations: 0,
        tolerance: 0.0,
        bracket_floor_hit: false,
    })
}

/// Exact minimum Laplace scale `√d / (ε − 2 ln(1 − δ))`: below it the
/// mechanism fails `(ε, δ)`-DP on a pair of neighbours differing along one
/// axis.
pub fn laplace_min_sigma(dim: usize, params: PrivacyParams) -> Result<f64> {
    if dim == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    Ok((dim as f64).sqrt() / (params.epsilon() - 2.0 * (-params.delta()).ln_1p()))
}

/// Calibrates any mechanism with default grid options.
pub fn calibrate(
    mechanism: Mechanism,
    dim: usize,
    params: PrivacyParams,
    options: &CheckOptions,
    tol: f64,
) -> Result<CalibrationResult> {
    match mechanism {
        Mechanism::L2 => calibrate_l2(dim, params, options, tol),
        Mechanism::Laplace => laplace_sigma(dim, params),
        Mechanism::Gaussian => calibrate_gaussian(params, tol),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pp(epsilon: f64, delta: f64) -> PrivacyParams {
        PrivacyParams::new(epsilon, delta).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(PrivacyParams::new(0.0, 0.1).is_err());
        assert!(PrivacyParams::new(-1.0, 0.1).is_err());
        assert!(PrivacyParams::new(f64::INFINITY, 0.1).is_err());
        assert!(PrivacyParams::new(1.0, 0.0).is_err());
        assert!(PrivacyParams::new(1.0, 1.0).is_err());
        assert!(PrivacyParams::new(1.0, f64::NAN).is_err());
    }

    #[test]
    fn one_dim_inverts_closed_form() {
        // lhs(σ) = 1 − exp((ε − 1/σ)/2) equals δ at σ = 0.5
        let delta = 1.0 - (-0.5f64).exp();
        let result =
            calibrate_l2(1, pp(1.0, delta + 1e-9), &CheckOptions::default(), 1e-4).unwrap();
        assert!((result.sigma - 0.5).abs() <= 1e-4, "{}", result.sigma);

        let params = pp(1.0, 1e-5);
        let result = calibrate_l2(1, params, &CheckOptions::default(), 1e-4).unwrap();
        let threshold = laplace_min_sigma(1, params).unwrap();
        assert!((result.sigma - threshold).abs() <= 1e-4);
        assert!((threshold - 0.99998).abs() < 1e-5);
        assert_eq!(result.pure_epsilon, Some(1.0 / result.sigma));
    }

    #[test]
    fn l2_result_is_minimal() {
        let params = pp(1.0, 1e-5);
        let options = CheckOptions::default();
        let tol = 0.001;
        let result = calibrate_l2(5, params, &options, tol).unwrap();
        assert!(!result.bracket_floor_hit);
        assert!(l2_passes(5, result.sigma, params, &options).unwrap());
        assert!(!l2_passes(5, result.sigma - tol, params, &options).unwrap());
        assert!(result.sigma <= 1.0);
    }

    #[test]
    fn gaussian_below_classical_bound() {
        let result = calibrate_gaussian(pp(1.0, 1e-5), 1e-4).unwrap();
        let classical = (2.0 * (1.25f64 / 1e-5).ln()).sqrt();
        assert!(result.sigma < classical);
        assert!(gaussian_delta(result.sigma, 1.0).unwrap() <= 1e-5);
        assert!(gaussian_delta(result.sigma - 1e-4, 1.0).unwrap() > 1e-5);
        assert!(result.pure_epsilon.is_none());
    }

    #[test]
    fn gaussian_large_delta_gives_small_sigma() {
        let result = calibrate_gaussian(pp(1.0, 0.999), 1e-4).unwrap();
        assert!(result.sigma < 0.2, "{}", result.sigma);
        assert!(gaussian_delta(1e6, 1.0).unwrap() <= 1e-12);
    }

    #[test]
    fn laplace_formula() {
        let result = laplace_sigma(1, pp(1.0, 1e-5)).unwrap();
        assert!((result.sigma - 1.0 / 1.00001).abs() < 1e-15);
        let result = laplace_sigma(4, pp(2.0, 1e-15)).unwrap();
        assert!((result.sigma - 1.0).abs() < 1e-12);
        assert!((result.pure_epsilon.unwrap() - (2.0 + 1e-15)).abs() < 1e-12);
        let params = pp(1.0, 1e-5);
        let gap = laplace_sigma(1, params).unwrap().sigma - laplace_min_sigma(1, params).unwrap();
        assert!(gap.abs() < 1e-5);
    }

    #[test]
    fn rescaling_multiplies_sigma() {
        let result = laplace_sigma(1, pp(1.0, 0.1))
            .unwrap()
            .rescaled(3.0)
            .unwrap();
        assert!((result.sigma - 3.0 / 1.1).abs() < 1e-12);
        assert!(laplace_sigma(1, pp(1.0, 0.1))
            .unwrap()
            .rescaled(0.0)
            .is_err());
    }

    #[test]
    fn bad_tolerance_is_rejected() {
        assert!(calibrate_l2(2, pp(1.0, 0.1), &CheckOptions::default(), 0.0).is_err());
        assert!(calibrate_gaussian(pp(1.0, 0.1), -1.0).is_err());
    }

    #[test]
    fn mechanism_names_round_trip() {
        for m in Mechanism::ALL {
            assert_eq!(m.name().parse::<Mechanism>().unwrap(), m);
        }
        assert!("cauchy".parse::<Mechanism>().is_err());
    }
}
