//! Geometry of the high privacy loss region.
//!
//! With neighbouring outputs centred at `0` and `e₁`, the region
//! `V = {y : (‖y − e₁‖ − ‖y‖)/σ ≥ ε}` is the convex hull of one sheet of a
//! hyperboloid with foci `0` and `e₁`. It meets every sphere about `0` and
//! every sphere about `e₁` in a spherical cap, so the mass either mechanism
//! places on `V` reduces to one-dimensional integrals of cap fractions
//! against the radial law.

use crate::error::{Error, Result};
use crate::specfun::{reg_inc_beta, reg_lower_gamma};

/// Dimension, noise scale and privacy parameter of one loss-region query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossGeometry {
    dim: usize,
    sigma: f64,
    epsilon: f64,
}

impl LossGeometry {
    pub fn new(dim: usize, sigma: f64, epsilon: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("dimension must be at least 1"));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::domain(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::domain(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(LossGeometry {
            dim,
            sigma,
            epsilon,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `τ = ε·σ`, the hyperboloid's constant distance difference.
    pub fn tau(&self) -> f64 {
        self.epsilon * self.sigma
    }

    /// True when caps describe `V`: `d ≥ 2` and `τ < 1`.
    pub fn has_caps(&self) -> bool {
        self.dim >= 2 && self.tau() < 1.0
    }

    fn require_caps(&self) -> Result<()> {
        if self.has_caps() {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "cap geometry needs dim >= 2 and eps*sigma < 1, got dim={}, eps*sigma={}",
                self.dim,
                self.tau()
            )))
        }
    }

    /// Largest radius whose whole sphere about `0` lies in `V`: `(1 − τ)/2`.
    pub fn origin_threshold(&self) -> f64 {
        0.5 * (1.0 - self.tau())
    }

    /// Smallest radius whose sphere about `e₁` meets `V`: `(1 + τ)/2`.
    pub fn shifted_threshold(&self) -> f64 {
        0.5 * (1.0 + self.tau())
    }

    /// Height `h(r)` of the cap `V ∩ S(r, 0)`, measured from the `−e₁` pole.
    pub fn origin_cap_height(&self, r: f64) -> Result<f64> {
        self.require_caps()?;
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::domain(format!("radius must be positive, got {r}")));
        }
        if r <= self.origin_threshold() {
            return Ok(2.0 * r);
        }
        let tau = self.tau();
        let h = r * (1.0 - tau) + 0.5 * (1.0 - tau * tau);
        Ok(h.min(2.0 * r))
    }

    /// Height `H(R)` of the cap `V ∩ S(R, e₁)`, measured from the `−e₁` pole.
    ///
    /// Spheres with `R < (1 + τ)/2` miss `V` entirely and are rejected; the
    /// caller must treat their fraction as zero.
    pub fn shifted_cap_height(&self, big_r: f64) -> Result<f64> {
        self.require_caps()?;
        let threshold = self.shifted_threshold();
        if !(big_r.is_finite() && big_r >= threshold) {
            return Err(Error::domain(format!(
                "shifted radius {big_r} is below the cap threshold {threshold}"
            )));
        }
        let tau = self.tau();
        let h = big_r * (1.0 - tau) - 0.5 * (1.0 - tau * tau);
        Ok(h.clamp(0.0, big_r))
    }

    /// `F(r, h(r))`: fraction of `S(r, 0)` inside `V`. Nonincreasing in `r`.
    pub fn origin_loss_fraction(&self, r: f64) -> Result<f64> {
        if r <= self.origin_threshold() {
            self.require_caps()?;
            return Ok(1.0);
        }
        let h = self.origin_cap_height(r)?;
        cap_fraction(self.dim, r, h)
    }

    /// `U(R)`: fraction of `S(R, e₁)` inside `V`. Nondecreasing in `R`.
    pub fn shifted_loss_fraction(&self, big_r: f64) -> Result<f64> {
        self.require_caps()?;
        if big_r < self.shifted_threshold() {
            return Ok(0.0);
        }
        let h = self.shifted_cap_height(big_r)?;
        cap_fraction(self.dim, big_r, h)
    }

    /// Whether `y` has privacy loss at least `ε`, i.e. `y ∈ V`.
    pub fn in_high_loss_region(&self, y: &[f64]) -> bool {
        debug_assert_eq!(y.len(), self.dim);
        let (norm, shifted) = norm_and_shifted_norm(y);
        shifted - norm >= self.tau()
    }
}

/// `(‖y‖, ‖y − e₁‖)`.
pub fn norm_and_shifted_norm(y: &[f64]) -> (f64, f64) {
    let rest: f64 = y.iter().skip(1).map(|v| v * v).sum();
    let first = y.first().copied().unwrap_or(0.0);
    let norm = (first * first + rest).sqrt();
    let shifted = ((first - 1.0) * (first - 1.0) + rest).sqrt();
    (norm, shifted)
}

/// Surface fraction of a cap of height `h` on a sphere of radius `r` in `R^dim`.
pub fn cap_fraction(dim: usize, r: f64, h: f64) -> Result<f64> {
    if dim < 2 {
        return Err(Error::domain(format!(
            "cap fraction needs dim >= 2, got {dim}"
        )));
    }
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::domain(format!("radius must be positive, got {r}")));
    }
    if !(0.0..=2.0 * r).contains(&h) {
        return Err(Error::domain(format!(
            "cap height {h} outside [0, {}]",
            2.0 * r
        )));
    }
    if h > r {
        return Ok(1.0 - cap_fraction(dim, r, 2.0 * r - h)?);
    }
    let x = (h * (2.0 * r - h) / (r * r)).clamp(0.0, 1.0);
    let a = 0.5 * (dim as f64 - 1.0);
    Ok(0.5 * reg_inc_beta(x, a, 0.5)?)
}

/// `P(‖y − c‖ ≤ r)` for `y` drawn from the ℓ2 mechanism centred at `c`.
pub fn radial_cdf(dim: usize, sigma: f64, r: f64) -> Result<f64> {
    if dim == 0 {
        return Err(Error::domain("dimension must be at least 1"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::domain(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    reg_lower_gamma(dim as f64, r / sigma)
}
