//! Plant description for the separable family
//! `∂ₜz − Δz − b·∇z − c z = 0` on the box `Π (0, Lᵢ)`.
//!
//! With the multiplier `μ(x) = exp(b·x)` the operator is in divergence
//! form `μ𝒜f = −Σ ∂ᵢ(μ ∂ᵢf) − cμ f`, i.e. `ãᵢ = μ` and `c̃ = −cμ`.

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Which end of an axis a face sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// `x_axis = 0`
    Lower,
    /// `x_axis = L_axis`
    Upper,
}

/// An axis-aligned face of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Face {
    pub axis: usize,
    pub side: Side,
}

impl Face {
    pub fn new(axis: usize, side: Side) -> Self {
        Self { axis, side }
    }

    /// Component of the outward unit normal along `axis`.
    pub fn normal_sign(&self) -> f64 {
        match self.side {
            Side::Lower => -1.0,
            Side::Upper => 1.0,
        }
    }

    /// Value of the fixed coordinate on this face.
    pub fn coordinate(&self, lengths: &[f64]) -> f64 {
        match self.side {
            Side::Lower => 0.0,
            Side::Upper => lengths[self.axis],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantConfig {
    lengths: Vec<f64>,
    drift: Vec<f64>,
    reaction: f64,
    control_face: Face,
    nu: f64,
    delta: f64,
}

impl PlantConfig {
    /// Validated plant with the default H¹-equivalence shift `ν = max(0, c + 1)`.
    pub fn new(
        lengths: Vec<f64>,
        drift: Vec<f64>,
        reaction: f64,
        control_face: Face,
        delta: f64,
    ) -> Result<Self> {
        let nu = default_nu(reaction);
        let plant = Self {
            lengths,
            drift,
            reaction,
            control_face,
            nu,
            delta,
        };
        plant.validate()?;
        Ok(plant)
    }

    /// The two-dimensional plant on `(0, π)²` with `b = (3, 3)`, `c = 10`,
    /// controlled from `{x₂ = 0}`.
    pub fn example_2d(delta: f64) -> Self {
        Self::new(
            vec![PI, PI],
            vec![3.0, 3.0],
            10.0,
            Face::new(1, Side::Lower),
            delta,
        )
        .expect("example plant is valid")
    }

    pub fn with_nu(mut self, nu: f64) -> Result<Self> {
        self.nu = nu;
        self.validate()?;
        Ok(self)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        self.delta = delta;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let d = self.lengths.len();
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidPlant(format!(
                "dimension must be 1, 2 or 3 (got {d})"
            )));
        }
        if let Some(l) = self.lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidPlant(format!(
                "side lengths must be positive and finite (got {l})"
            )));
        }
        if self.drift.len() != d {
            return Err(Error::InvalidPlant(format!(
                "drift has {} components for a {d}-dimensional box",
                self.drift.len()
            )));
        }
        if self.drift.iter().any(|b| !b.is_finite()) || !self.reaction.is_finite() {
            return Err(Error::InvalidPlant("coefficients must be finite".into()));
        }
        if self.control_face.axis >= d {
            return Err(Error::InvalidPlant(format!(
                "control face axis {} does not exist in dimension {d}",
                self.control_face.axis
            )));
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidPlant(format!(
                "decay rate delta must be positive (got {})",
                self.delta
            )));
        }
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(Error::InvalidPlant(format!(
                "nu must be non-negative (got {})",
                self.nu
            )));
        }
        // c̃(x) + νμ(x) = (ν − c)μ(x) must stay positive on the closed box.
        if self.nu - self.reaction <= 0.0 {
            return Err(Error::InvalidPlant(format!(
                "nu = {} does not satisfy c~(x) + nu mu(x) > 0 (need nu > c = {})",
                self.nu, self.reaction
            )));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    pub fn reaction(&self) -> f64 {
        self.reaction
    }

    pub fn control_face(&self) -> Face {
        self.control_face
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn mu(&self, x: &[f64]) -> f64 {
        self.drift
            .iter()
            .zip(x)
            .map(|(b, xi)| b * xi)
            .sum::<f64>()
            .exp()
    }

    /// `(μ_m, μ_M)`, attained at box corners.
    pub fn mu_bounds(&self) -> (f64, f64) {
        let (lo, hi) = self
            .drift
            .iter()
            .zip(&self.lengths)
            .fold((0.0, 0.0), |(lo, hi), (b, l)| {
                let e = b * l;
                (lo + e.min(0.0), hi + e.max(0.0))
            });
        (lo.exp(), hi.exp())
    }

    /// Diffusion coefficient `ãᵢ(x) = μ(x)` of the divergence form.
    pub fn a_tilde(&self, x: &[f64]) -> f64 {
        self.mu(x)
    }

    /// Potential `c̃(x) = −c μ(x)` of the divergence form.
    pub fn c_tilde(&self, x: &[f64]) -> f64 {
        -self.reaction * self.mu(x)
    }

    /// `(c̃_m, c̃_M)` over the closed box.
    pub fn c_tilde_bounds(&self) -> (f64, f64) {
        let (mu_m, mu_max) = self.mu_bounds();
        let a = -self.reaction * mu_m;
        let b = -self.reaction * mu_max;
        (a.min(b), a.max(b))
    }

    /// `|b|²/4 − c`, the constant shift of every eigenvalue.
    pub fn spectral_shift(&self) -> f64 {
        self.drift.iter().map(|b| b * b).sum::<f64>() / 4.0 - self.reaction
    }

    /// Closed-box membership with a relative tolerance.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dimension()
            && x.iter().zip(&self.lengths).all(|(&xi, &l)| {
                let tol = 1e-12 * l;
                xi.is_finite() && xi >= -tol && xi <= l + tol
            })
    }

    /// Open-box membership.
    pub fn contains_interior(&self, x: &[f64]) -> bool {
        x.len() == self.dimension()
            && x
                .iter()
                .zip(&self.lengths)
                .all(|(&xi, &l)| xi.is_finite() && xi > 0.0 && xi < l)
    }

    /// Whether `s` lies on the control face Γ₁.
    pub fn on_control_face(&self, s: &[f64]) -> bool {
        let face = self.control_face;
        self.contains(s)
            && (s[face.axis] - face.coordinate(&self.lengths)).abs()
                <= 1e-12 * self.lengths[face.axis]
    }
}

/// Smallest unit-margin shift with `c̃(x) + νμ(x) ≥ μ(x)` pointwise.
pub fn default_nu(reaction: f64) -> f64 {
    (reaction + 1.0).max(0.0)
}

/// Riesz constants `(c₁, c₂) = (1/μ_M, 1/μ_m)`.
pub fn riesz_constants(plant: &PlantConfig) -> (f64, f64) {
    let (mu_m, mu_max) = plant.mu_bounds();
    (1.0 / mu_max, 1.0 / mu_m)
}
