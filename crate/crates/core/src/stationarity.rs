//! Index sets, the stationary-equation residual and the certificates that
//! check a candidate `(θ, z)`.
//!
//! A pair is P-stationary when `∇f(θ) + aᵀz = 0` and every margin satisfies
//! `F_i ∈ prox(F_i + α z_i)`. On the working set `T = T_o ∪ T_1` this is the
//! root condition `Ψ(θ, z; T) = 0` with blocks
//! `(∇f + a_Tᵀ z_T,  F_T,  z_{∖T})`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::{margins, smooth_gradient, DesignCache, SurfaceParams};
use crate::prox::{prox_contains_tol, ProxParams};

/// Index sets over `0..n` (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IndexSets {
    pub t_o: Vec<usize>,
    pub t_1: Vec<usize>,
    pub t_2: Vec<usize>,
    pub t_3: Vec<usize>,
    /// `t_o ∪ t_1`, sorted.
    pub working: Vec<usize>,
}

/// Half-width of the band used for the boundary tests `s ∈ {0, τ}`.
pub fn boundary_band(threshold: f64) -> f64 {
    1e-12 * threshold.max(1.0)
}

/// With `s = F + αz`, `τ = √(2αλ)`:
/// `T_1 = {s ∈ (0, τ)}`, `T_2 = {s ∈ {0, τ}}`, `T_3` the rest and
/// `T_o = {F = 0, αz ∈ {0, τ}} ⊆ T_2`.
pub fn index_sets(f: &[f64], z: &[f64], alpha: f64, lambda: f64) -> Result<IndexSets> {
    check_dim(f.len(), z.len())?;
    let p = ProxParams::new(alpha, lambda)?;
    let tau = p.threshold();
    let band = boundary_band(tau);
    let on_edge = |v: f64| (v.abs() <= band) || ((v - tau).abs() <= band);

    let mut sets = IndexSets::default();
    for i in 0..f.len() {
        let s = f[i] + alpha * z[i];
        if on_edge(s) {
            sets.t_2.push(i);
            if f[i].abs() <= band && on_edge(alpha * z[i]) {
                sets.t_o.push(i);
            }
        } else if s > 0.0 && s < tau {
            sets.t_1.push(i);
        } else {
            sets.t_3.push(i);
        }
    }
    let mut working: Vec<usize> = sets.t_o.iter().chain(&sets.t_1).copied().collect();
    working.sort_unstable();
    sets.working = working;
    Ok(sets)
}

/// Blocks of `Ψ(θ, z; T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualParts {
    /// `∇f + a_Tᵀ z_T`.
    pub grad_part: DVector<f64>,
    /// `F_T`.
    pub margin_part: DVector<f64>,
    /// `z` off `T`, in increasing index order.
    pub dual_part: DVector<f64>,
    pub norm: f64,
}

fn complement(n: usize, working: &[usize]) -> Vec<usize> {
    let mut in_t = vec![false; n];
    for &i in working {
        in_t[i] = true;
    }
    (0..n).filter(|&i| !in_t[i]).collect()
}

fn check_working(n: usize, working: &[usize]) -> Result<()> {
    match working.iter().find(|&&i| i >= n) {
        Some(&i) => Err(Error::Parameter(format!("working index {i} out of range 0..{n}"))),
        None => Ok(()),
    }
}

pub(crate) fn residual_vec(
    theta: &DVector<f64>,
    z: &DVector<f64>,
    working: &[usize],
    cache: &DesignCache,
) -> ResidualParts {
    let mut grad = &cache.g * theta;
    for &i in working {
        grad.axpy(z[i], &cache.a.row(i).transpose(), 1.0);
    }
    let margin_part = DVector::from_iterator(
        working.len(),
        working.iter().map(|&i| 1.0 + cache.a.row(i).dot(&theta.transpose())),
    );
    let off = complement(cache.n, working);
    let dual_part = DVector::from_iterator(off.len(), off.iter().map(|&i| z[i]));
    let norm = (grad.norm_squared() + margin_part.norm_squared() + dual_part.norm_squared()).sqrt();
    ResidualParts { grad_part: grad, margin_part, dual_part, norm }
}

/// `Ψ(θ, z; T)` and its norm `√(‖grad‖² + ‖F_T‖² + ‖z_{∖T}‖²)`.
pub fn residual(
    theta: &SurfaceParams,
    z: &DVector<f64>,
    working: &[usize],
    cache: &DesignCache,
) -> Result<ResidualParts> {
    check_dim(cache.d, theta.dim())?;
    check_dim(cache.n, z.len())?;
    check_working(cache.n, working)?;
    Ok(residual_vec(&theta.to_vector(), z, working, cache))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaBounds {
    #[serde(with = "inf_as_null")]
    pub alpha1: f64,
    #[serde(with = "inf_as_null")]
    pub alpha2: f64,
    #[serde(with = "inf_as_null")]
    pub alpha_star: f64,
}

/// `α₁ = min_{F_i>0} F_i²/(2λ)`, `α₂ = min_{z_i>0} 2λ/z_i²` (each `+∞` when
/// empty) and `α_* = min(α₁, α₂)`.
pub fn alpha_bounds(f: &[f64], z: &[f64], lambda: f64) -> Result<AlphaBounds> {
    if !(lambda > 0.0) {
        return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    check_dim(f.len(), z.len())?;
    let alpha1 = f
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|v| v * v / (2.0 * lambda))
        .fold(f64::INFINITY, f64::min);
    let alpha2 = z
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|v| 2.0 * lambda / (v * v))
        .fold(f64::INFINITY, f64::min);
    Ok(AlphaBounds { alpha1, alpha2, alpha_star: alpha1.min(alpha2) })
}

/// Result of [`pstationary_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PStatCertificate {
    /// `‖∇f(θ) + aᵀz‖`.
    pub grad_residual: f64,
    /// Every `F_i` lies in the prox set of `F_i + α z_i`.
    pub prox_ok: bool,
    /// Sign table: `F_i = 0 ⇒ z_i ∈ [0, √(2λ/α)]`, `F_i ≠ 0 ⇒ z_i = 0`,
    /// `F_i > 0 ⇒ F_i ≥ √(2αλ)`.
    pub sign_ok: bool,
    #[serde(with = "inf_as_null")]
    pub alpha1: f64,
    #[serde(with = "inf_as_null")]
    pub alpha2: f64,
    #[serde(with = "inf_as_null")]
    pub alpha_star: f64,
    pub alpha: f64,
    pub passed: bool,
    pub tolerance: f64,
}

/// Checks P-stationarity of `(θ, z)` at step `α`.
///
/// Margins and multipliers within `tol` of zero are treated as zero for the
/// α bounds and the sign table; the prox membership test applies `tol` to
/// each comparison.
pub fn pstationary_check(
    theta: &SurfaceParams,
    z: &DVector<f64>,
    alpha: f64,
    lambda: f64,
    cache: &DesignCache,
    tol: f64,
) -> Result<PStatCertificate> {
    let p = ProxParams::new(alpha, lambda)?;
    if !(tol >= 0.0) {
        return Err(Error::Parameter(format!("tolerance must be nonnegative, got {tol}")));
    }
    check_dim(cache.n, z.len())?;
    let f = margins(theta, cache)?;
    let grad = smooth_gradient(theta, cache)? + cache.a.transpose() * z;
    let grad_residual = grad.norm();

    let snap = |v: f64| if v.abs() <= tol { 0.0 } else { v };
    let fs: Vec<f64> = f.iter().map(|&v| snap(v)).collect();
    let zs: Vec<f64> = z.iter().map(|&v| snap(v)).collect();

    let prox_ok = (0..cache.n).all(|i| prox_contains_tol(f[i], f[i] + alpha * z[i], &p, tol));
    let zmax = (2.0 * lambda / alpha).sqrt();
    let sign_ok = fs.iter().zip(&zs).all(|(&fi, &zi)| {
        if fi == 0.0 {
            zi >= 0.0 && zi <= zmax + tol
        } else {
            zi == 0.0 && (fi < 0.0 || fi >= p.threshold() - tol)
        }
    });
    let ab = alpha_bounds(&fs, &zs, lambda)?;
    let passed = grad_residual.is_finite() && grad_residual <= tol && prox_ok;
    Ok(PStatCertificate {
        grad_residual,
        prox_ok,
        sign_ok,
        alpha1: ab.alpha1,
        alpha2: ab.alpha2,
        alpha_star: ab.alpha_star,
        alpha,
        passed,
        tolerance: tol,
    })
}

fn rank_tol(m: &DMatrix<f64>, sigma_max: f64) -> f64 {
    m.nrows().max(m.ncols()) as f64 * f64::EPSILON * sigma_max
}

/// Multiplier estimate from `θ` alone.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredMultiplier {
    pub z: DVector<f64>,
    pub rank_deficient: bool,
}

/// Minimum-norm least-squares `z_T = argmin ‖∇f(θ) + a_Tᵀ z_T‖`, zero off `T`.
pub fn recover_multiplier(
    theta: &SurfaceParams,
    working: &[usize],
    cache: &DesignCache,
) -> Result<RecoveredMultiplier> {
    check_working(cache.n, working)?;
    let grad = smooth_gradient(theta, cache)?;
    let mut z = DVector::zeros(cache.n);
    if working.is_empty() {
        return Ok(RecoveredMultiplier { z, rank_deficient: false });
    }
    let at = cache.a_rows(working).transpose();
    let svd = at.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = rank_tol(&at, smax);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let zt = svd
        .solve(&(-grad), tol)
        .map_err(|e| Error::Parameter(format!("least-squares solve failed: {e}")))?;
    for (k, &i) in working.iter().enumerate() {
        z[i] = zt[k];
    }
    Ok(RecoveredMultiplier { z, rank_deficient: rank < working.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankCheck {
    pub independent: bool,
    pub rank: usize,
}

/// Whether the rows `{a_i : i ∈ T}` are linearly independent.
pub fn assumption_rank_check(working: &[usize], cache: &DesignCache) -> Result<RankCheck> {
    check_working(cache.n, working)?;
    if working.is_empty() {
        return Ok(RankCheck { independent: true, rank: 0 });
    }
    let at = cache.a_rows(working);
    let sv = at.singular_values();
    let tol = rank_tol(&at, sv.max());
    let rank = sv.iter().filter(|&&s| s > tol).count();
    Ok(RankCheck { independent: rank == working.len(), rank })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondOrder {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub nonsingular: bool,
}

/// `[[G, a_Tᵀ], [a_T, −γI]]`.
pub fn augmented_matrix(working: &[usize], cache: &DesignCache, gamma: f64) -> DMatrix<f64> {
    let (d, t) = (cache.d, working.len());
    let mut h = DMatrix::zeros(d + t, d + t);
    h.view_mut((0, 0), (d, d)).copy_from(&cache.g);
    for (k, &i) in working.iter().enumerate() {
        for j in 0..d {
            h[(d + k, j)] = cache.a[(i, j)];
            h[(j, d + k)] = cache.a[(i, j)];
        }
        h[(d + k, d + k)] = -gamma;
    }
    h
}

/// Extreme singular values of the augmented matrix; nonsingular iff
/// `σ_min > d·ε·σ_max`.
pub fn second_order_check(working: &[usize], cache: &DesignCache, gamma: f64) -> Result<SecondOrder> {
    check_working(cache.n, working)?;
    if !(gamma >= 0.0) {
        return Err(Error::Parameter(format!("gamma must be nonnegative, got {gamma}")));
    }
    let sv = augmented_matrix(working, cache, gamma).singular_values();
    let (sigma_min, sigma_max) = (sv.min(), sv.max());
    let nonsingular = sigma_min > cache.d as f64 * f64::EPSILON * sigma_max;
    Ok(SecondOrder { sigma_min, sigma_max, nonsingular })
}

/// Largest working set accepted by [`second_order_sweep`].
pub const MAX_SWEEP: usize = 12;

/// Runs [`second_order_check`] on every subset of `working` (including the
/// empty set) and returns the one with the smallest `σ_min`.
pub fn second_order_sweep(working: &[usize], cache: &DesignCache, gamma: f64) -> Result<SecondOrder> {
    if working.len() > MAX_SWEEP {
        return Err(Error::Parameter(format!(
            "subset sweep limited to {MAX_SWEEP} indices, got {}",
            working.len()
        )));
    }
    let mut worst: Option<SecondOrder> = None;
    for mask in 0u32..(1 << working.len()) {
        let sub: Vec<usize> =
            working.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &i)| i).collect();
        let r = second_order_check(&sub, cache, gamma)?;
        if worst.map_or(true, |w| r.sigma_min < w.sigma_min) {
            worst = Some(SecondOrder { nonsingular: r.nonsingular, ..r });
        }
    }
    Ok(worst.expect("at least the empty subset"))
}

/// Serializes `±∞` and NaN as `null` and reads `null` back as `+∞`.
pub mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
