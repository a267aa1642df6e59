//! Quadratic-surface binary classification under the exact 0-1 loss.
//!
//! The training problem is
//! `min_θ  Σ_i ½‖W xⁱ + b‖² + λ Σ_i ℓ₀/₁(1 − y_i h(xⁱ))`
//! with `h(x) = ½xᵀWx + bᵀx + c`. It is solved by a perturbed Newton
//! iteration on the P-stationary equation, with certificates that check
//! stationarity of the returned point.

pub mod baselines;
pub mod bench;
pub mod datagen;
pub mod error;
pub mod model;
pub mod newton;
pub mod prox;
pub mod stationarity;

pub use error::{Error, Result};
pub use model::{build_design, Dataset, DesignCache, LossValue, SurfaceParams};
pub use newton::{solve, SolveReport, SolveStatus, SolverConfig, WarmStart};
pub use prox::ProxParams;
pub use stationarity::{IndexSets, PStatCertificate, ResidualParts};
