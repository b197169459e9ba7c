//! Certified bounds on the two privacy-loss probabilities of the ℓ2
//! mechanism, and the `(ε, δ)` check built from them.
//!
//! For neighbours centred at `0` and `e₁` the mechanism is `(ε, δ)`-DP iff
//! `P_{M(0)}[V] − e^ε · P_{M(1)}[V] ≤ δ`. Both probabilities integrate a cap
//! fraction against the radial CDF `P(d, r/σ)`. The fraction about `0` is
//! nonincreasing in the radius and the fraction about `e₁` is nondecreasing,
//! so left Riemann sums on a radius grid give an upper bound on the first
//! term and a lower bound on the second.

use serde::{Deserialize, Serialize};

use crate::calibrate::PrivacyParams;
use crate::capgeom::LossGeometry;
use crate::error::{Error, Result};
use crate::specfun::{inv_reg_upper_gamma, reg_gamma_pair};

/// Number of grid radii used for each term unless overridden.
pub const DEFAULT_RADII: usize = 1000;

/// Fraction of `δ` left as radial tail mass beyond the last grid radius.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.01;

/// Riemann grid for the two bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Radii for the first term (spheres about `0`).
    pub n_r: usize,
    /// Radii for the second term (spheres about `e₁`).
    #[serde(rename = "n_R")]
    pub n_big_r: usize,
    /// Largest radius, shared by both grids.
    pub r_star: f64,
}

impl GridSpec {
    pub fn new(n_r: usize, n_big_r: usize, r_star: f64) -> Result<Self> {
        let grid = GridSpec {
            n_r,
            n_big_r,
            r_star,
        };
        grid.validate()?;
        Ok(grid)
    }

    /// A grid whose largest radius leaves `tail` radial mass beyond it.
    pub fn for_tail(dim: usize, sigma: f64, tail: f64, n_r: usize, n_big_r: usize) -> Result<Self> {
        GridSpec::new(n_r, n_big_r, tail_radius(dim, sigma, tail)?)
    }

    fn validate(&self) -> Result<()> {
        if self.n_r < 2 || self.n_big_r < 2 {
            return Err(Error::domain(format!(
                "grids need at least 2 radii, got n_r={}, n_R={}",
                self.n_r, self.n_big_r
            )));
        }
        if !(self.r_star.is_finite() && self.r_star > 0.0) {
            return Err(Error::domain(format!(
                "largest radius must be positive, got {}",
                self.r_star
            )));
        }
        Ok(())
    }
}

/// Radius `r*` with `P(‖y‖ > r*) = tail` under the ℓ2 mechanism.
pub fn tail_radius(dim: usize, sigma: f64, tail: f64) -> Result<f64> {
    if dim == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::domain(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(sigma * inv_reg_upper_gamma(dim as f64, tail)?)
}

/// Which case of the analysis produced a bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `σ ≥ 1/ε`: the region `V` is empty.
    LargeSigma,
    /// `d = 1`: the Laplace closed form.
    OneDim,
    /// Riemann sums over spherical caps.
    General,
}

/// Outcome of [`check_approx_dp`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub term1_upper: f64,
    pub term2_lower: f64,
    /// `term1_upper − e^ε · term2_lower`, an upper bound on the exact
    /// left-hand side.
    pub lhs_upper: f64,
    pub satisfies_dp: bool,
    pub grid: GridSpec,
    pub branch: Branch,
}

/// Grid sizes and tail rule for [`check_approx_dp_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOptions {
    pub n_r: usize,
    #[serde(rename = "n_R")]
    pub n_big_r: usize,
    /// `r*` leaves `tail_fraction · δ` radial mass outside the grid.
    pub tail_fraction: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            n_r: DEFAULT_RADII,
            n_big_r: DEFAULT_RADII,
            tail_fraction: DEFAULT_TAIL_FRACTION,
        }
    }
}

impl CheckOptions {
    pub fn with_radii(n_r: usize, n_big_r: usize) -> Self {
        CheckOptions {
            n_r,
            n_big_r,
            ..CheckOptions::default()
        }
    }
}

fn branch_for(geom: &LossGeometry) -> Branch {
    let (sigma, epsilon) = (geom.sigma(), geom.epsilon());
    if geom.tau() >= 1.0 || sigma >= 1.0 / epsilon {
        Branch::LargeSigma
    } else if geom.dim() == 1 {
        Branch::OneDim
    } else {
        Branch::General
    }
}

/// `count` radii evenly spaced from `first` to `last` inclusive.
fn radius_grid(first: f64, last: f64, count: usize) -> impl Iterator<Item = f64> {
    let step = (last - first) / (count - 1) as f64;
    (0..count).map(move |j| {
        if j + 1 == count {
            last
        } else {
            first + step * j as f64
        }
    })
}

/// Left Riemann sum of `fraction` against the radial law over a grid, with
/// the tail beyond the last radius weighted by the last fraction.
///
/// Returns the sum together with `P(d, first/σ)`.
fn radial_riemann_sum(
    geom: &LossGeometry,
    first: f64,
    grid_last: f64,
    count: usize,
    fraction: impl Fn(f64) -> Result<f64>,
) -> Result<(f64, f64)> {
    let shape = geom.dim() as f64;
    let sigma = geom.sigma();
    let mut radii = radius_grid(first, grid_last, count);
    let mut left = radii.next().expect("grid has at least two radii");
    let (mut p_left, mut q_left) = reg_gamma_pair(shape, left / sigma)?;
    let p_first = p_left;
    let mut sum = 0.0;
    for right in radii {
        let (p_right, q_right) = reg_gamma_pair(shape, right / sigma)?;
        // subtract whichever side is small to keep the shell mass accurate
        let shell = if p_right < 0.5 {
            p_right - p_left
        } else {
            q_left - q_right
        };
        sum += shell.max(0.0) * fraction(left)?;
        left = right;
        p_left = p_right;
        q_left = q_right;
    }
    sum += q_left * fraction(left)?;
    Ok((sum, p_first))
}

fn term1_general(geom: &LossGeometry, grid: &GridSpec) -> Result<f64> {
    let first = geom.origin_threshold();
    if grid.r_star <= first {
        return Err(Error::GridBelowStart {
            r_star: grid.r_star,
            first,
        });
    }
    let (sum, inner_ball) = radial_riemann_sum(geom, first, grid.r_star, grid.n_r, |r| {
        geom.origin_loss_fraction(r)
    })?;
    Ok((inner_ball + sum).clamp(0.0, 1.0))
}

fn term2_general(geom: &LossGeometry, grid: &GridSpec) -> Result<f64> {
    let first = geom.shifted_threshold();
    if grid.r_star <= first {
        return Err(Error::GridBelowStart {
            r_star: grid.r_star,
            first,
        });
    }
    let (sum, _) = radial_riemann_sum(geom, first, grid.r_star, grid.n_big_r, |r| {
        geom.shifted_loss_fraction(r)
    })?;
    Ok(sum.clamp(0.0, 1.0))
}

fn one_dim_term1(sigma: f64, epsilon: f64) -> f64 {
    1.0 - 0.5 * (0.5 * (epsilon - 1.0 / sigma)).exp()
}

fn one_dim_term2(sigma: f64, epsilon: f64) -> f64 {
    0.5 * (0.5 * (-epsilon - 1.0 / sigma)).exp()
}

/// Upper bound on `P[ℓ ≥ ε]` for `y ~ M(0)`, the mass `M(0)` puts on `V`.
pub fn term1_upper_bound(dim: usize, sigma: f64, epsilon: f64, grid: &GridSpec) -> Result<f64> {
    grid.validate()?;
    let geom = LossGeometry::new(dim, sigma, epsilon)?;
    match branch_for(&geom) {
        Branch::LargeSigma => Ok(0.0),
        Branch::OneDim => Ok(one_dim_term1(sigma, epsilon)),
        Branch::General => term1_general(&geom, grid),
    }
}

/// Lower bound on `P[ℓ' ≤ −ε]` for `y ~ M(1)`, the mass `M(1)` puts on `V`.
pub fn term2_lower_bound(dim: usize, sigma: f64, epsilon: f64, grid: &GridSpec) -> Result<f64> {
    grid.validate()?;
    let geom = LossGeometry::new(dim, sigma, epsilon)?;
    match branch_for(&geom) {
        Branch::LargeSigma => Ok(0.0),
        Branch::OneDim => Ok(one_dim_term2(sigma, epsilon)),
        Branch::General => term2_general(&geom, grid),
    }
}

/// Checks `(ε, δ)`-DP of the ℓ2 mechanism with the default grid.
pub fn check_approx_dp(
    dim: usize,
    sigma: f64,
    params: PrivacyParams,
    n_r: usize,
    n_big_r: usize,
) -> Result<BoundReport> {
    check_approx_dp_with(dim, sigma, params, &CheckOptions::with_radii(n_r, n_big_r))
}

/// Checks `(ε, δ)`-DP of the ℓ2 mechanism.
///
/// `satisfies_dp = true` is a proof; `false` only means the bound could not
/// certify the guarantee.
pub fn check_approx_dp_with(
    dim: usize,
    sigma: f64,
    params: PrivacyParams,
    options: &CheckOptions,
) -> Result<BoundReport> {
    let epsilon = params.epsilon();
    let delta = params.delta();
    if !(options.tail_fraction > 0.0 && options.tail_fraction <= 1.0) {
        return Err(Error::domain(format!(
            "tail fraction must lie in (0, 1], got {}",
            options.tail_fraction
        )));
    }
    let geom = LossGeometry::new(dim, sigma, epsilon)?;
    let grid = GridSpec::new(
        options.n_r,
        options.n_big_r,
        tail_radius(dim, sigma, options.tail_fraction * delta)?,
    )?;
    let branch = branch_for(&geom);
    let (term1_upper, term2_lower) = match branch {
        Branch::LargeSigma => (0.0, 0.0),
        Branch::OneDim => (one_dim_term1(sigma, epsilon), one_dim_term2(sigma, epsilon)),
        Branch::General => (term1_general(&geom, &grid)?, term2_general(&geom, &grid)?),
    };
    let lhs_upper = term1_upper - epsilon.exp() * term2_lower;
    Ok(BoundReport {
        term1_upper,
        term2_lower,
        lhs_upper,
        satisfies_dp: lhs_upper <= delta,
        grid,
        branch,
    })
}
