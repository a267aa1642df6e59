//! The 0-1 loss and its proximal operator.
//!
//! For `g(u) = λ ℓ₀/₁(u)` the prox `argmin_u g(u) + (u − z)²/(2α)` has the
//! closed form
//!
//! ```text
//!             ⎧ 0        z ∈ (0, √(2αλ))
//! prox(z) =   ⎨ z        z < 0  or  z > √(2αλ)
//!             ⎩ {0, z}   z ∈ {0, √(2αλ)}
//! ```

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxParams {
    alpha: f64,
    lambda: f64,
    threshold: f64,
}

impl ProxParams {
    pub fn new(alpha: f64, lambda: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Parameter(format!("alpha must be positive and finite, got {alpha}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Parameter(format!("lambda must be positive and finite, got {lambda}")));
        }
        Ok(Self { alpha, lambda, threshold: (2.0 * alpha * lambda).sqrt() })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `√(2αλ)`.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Prox objective `λℓ₀/₁(u) + (u − z)²/(2α)`.
    pub fn objective(&self, u: f64, z: f64) -> f64 {
        self.lambda * zero_one_loss(u) + (u - z) * (u - z) / (2.0 * self.alpha)
    }
}

pub fn zero_one_loss(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `‖u₊‖₀`.
pub fn positive_count(u: &[f64]) -> usize {
    u.iter().filter(|&&v| v > 0.0).count()
}

/// One element of the prox set. At the two boundary points the set is
/// `{0, z}`; `tie_to_zero` picks `0`, otherwise `z`.
pub fn prox_scalar(z: f64, p: &ProxParams, tie_to_zero: bool) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::Parameter(format!("prox argument must be finite, got {z}")));
    }
    let t = p.threshold;
    Ok(if z > 0.0 && z < t {
        0.0
    } else if z == 0.0 || z == t {
        if tie_to_zero {
            0.0
        } else {
            z
        }
    } else {
        z
    })
}

/// Componentwise [`prox_scalar`] with the default tie rule.
pub fn prox_vector(z: &[f64], p: &ProxParams) -> Result<Vec<f64>> {
    z.iter().map(|&v| prox_scalar(v, p, true)).collect()
}

/// Whether `u` belongs to the prox set of `z` (both boundary values admitted).
pub fn prox_contains(u: f64, z: f64, p: &ProxParams) -> bool {
    let t = p.threshold;
    if z > 0.0 && z < t {
        u == 0.0
    } else if z == 0.0 || z == t {
        u == 0.0 || u == z
    } else {
        u == z
    }
}

/// [`prox_contains`] with an absolute tolerance on every comparison.
pub(crate) fn prox_contains_tol(u: f64, z: f64, p: &ProxParams, tol: f64) -> bool {
    let t = p.threshold;
    let near = |a: f64, b: f64| (a - b).abs() <= tol;
    if near(z, 0.0) || near(z, t) {
        near(u, 0.0) || near(u, z)
    } else if z > 0.0 && z < t {
        near(u, 0.0)
    } else {
        near(u, z)
    }
}
