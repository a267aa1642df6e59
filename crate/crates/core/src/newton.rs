//! Perturbed Newton iteration on the stationary equation.
//!
//! Each iteration computes the working set `T` from `(F(θ), z)`, shrinks the
//! perturbation `γ`, and solves
//!
//! ```text
//! [ G    a_Tᵀ ] [dθ  ]     [ ∇f + a_Tᵀ z_T ]
//! [ a_T  −γI  ] [dz_T] = − [ F_T           ]
//! ```
//!
//! with `dz = −z` off `T`. The iteration stops once `‖Ψ‖ < eps`.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::baselines::{ls_qssvm_fit_cached, squared_hinge_fit, LsqConfig};
use crate::error::{check_dim, Error, Result};
use crate::model::{build_design, margins_vec, Dataset, DesignCache, SurfaceParams};
use crate::stationarity::{
    augmented_matrix, index_sets, pstationary_check, residual_vec, IndexSets, PStatCertificate, ResidualParts,
};

/// Lower bound on `γ`.
pub const GAMMA_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarmStart {
    /// `θ = 0`, `z = 0`.
    Zeros,
    /// Least-squares fit, `z = 0`.
    LeastSquares,
    /// Least-squares fit refined on `f + (C/2)Σ max(0, F)²`, `z = C·max(0, F)`.
    SquaredHinge,
}

impl fmt::Display for WarmStart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WarmStart::Zeros => "zeros",
            WarmStart::LeastSquares => "least_squares",
            WarmStart::SquaredHinge => "squared_hinge",
        })
    }
}

impl FromStr for WarmStart {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "zeros" => Ok(WarmStart::Zeros),
            "least_squares" | "ls" => Ok(WarmStart::LeastSquares),
            "squared_hinge" => Ok(WarmStart::SquaredHinge),
            _ => Err(format!("unknown warm start '{s}' (expected zeros, least_squares or squared_hinge)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    /// Prox step `α`.
    pub alpha: f64,
    /// `γ` contraction factor, in `(0, 1)`.
    pub tau: f64,
    pub rho: f64,
    /// `γ₋₁`.
    pub gamma_init: f64,
    pub eps: f64,
    pub max_iter: usize,
    pub warm_start: WarmStart,
    /// Consecutive residual increases tolerated before giving up.
    pub safeguard_window: usize,
    /// `C` of the squared-hinge warm start.
    pub relax_penalty: f64,
    pub lsq: LsqConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 1e5,
            alpha: 1e-4,
            tau: 0.5,
            rho: 1.0,
            gamma_init: 0.1,
            eps: 1e-8,
            max_iter: 100,
            warm_start: WarmStart::SquaredHinge,
            safeguard_window: 5,
            relax_penalty: 1e6,
            lsq: LsqConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")))
            }
        };
        pos("lambda", self.lambda)?;
        pos("alpha", self.alpha)?;
        pos("rho", self.rho)?;
        pos("gamma_init", self.gamma_init)?;
        pos("relax_penalty", self.relax_penalty)?;
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::Parameter(format!("tau must lie in (0, 1), got {}", self.tau)));
        }
        // eps = +inf is allowed: the loop stops before the first step.
        if !(self.eps > 0.0) {
            return Err(Error::Parameter(format!("eps must be positive, got {}", self.eps)));
        }
        if self.max_iter == 0 {
            return Err(Error::Parameter("max_iter must be positive".into()));
        }
        if self.safeguard_window == 0 {
            return Err(Error::Parameter("safeguard_window must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub theta: SurfaceParams,
    pub z: DVector<f64>,
    pub gamma: f64,
    pub working: IndexSets,
    pub residual: ResidualParts,
    pub iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    SingularSystem,
    Diverged,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::SingularSystem => "singular_system",
            SolveStatus::Diverged => "diverged",
        })
    }
}

/// One row of the iteration trace: `‖Ψᵏ‖`, `γₖ`, `|Tₖ|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub residual: f64,
    pub gamma: f64,
    pub working_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub final_state: SolverState,
    pub trace: Vec<TraceEntry>,
    pub status: SolveStatus,
    pub certificate: PStatCertificate,
    pub wall_time_s: f64,
    /// `σ_min` of the augmented matrix when the status is `SingularSystem`.
    pub singular_sigma_min: Option<f64>,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    status: SolveStatus,
    iters: usize,
    residual_trace: Vec<f64>,
    gamma_trace: Vec<f64>,
    working_sizes: Vec<usize>,
    certificate: &'a PStatCertificate,
    theta: &'a SurfaceParams,
    z: Vec<f64>,
    wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    singular_sigma_min: Option<f64>,
}

impl SolveReport {
    /// Number of Newton steps taken.
    pub fn iters(&self) -> usize {
        self.final_state.iter
    }

    pub fn residual_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|t| t.residual).collect()
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(ReportJson {
            status: self.status,
            iters: self.iters(),
            residual_trace: self.residual_trace(),
            gamma_trace: self.trace.iter().map(|t| t.gamma).collect(),
            working_sizes: self.trace.iter().map(|t| t.working_size).collect(),
            certificate: &self.certificate,
            theta: &self.final_state.theta,
            z: self.final_state.z.iter().copied().collect(),
            wall_time_s: self.wall_time_s,
            singular_sigma_min: self.singular_sigma_min,
        })?)
    }
}

/// `max(min(τγ, ρ‖Ψ‖), 1e-14)`.
pub fn gamma_update(gamma_prev: f64, tau: f64, rho: f64, resid_norm: f64) -> f64 {
    (tau * gamma_prev).min(rho * resid_norm).max(GAMMA_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub d_theta: DVector<f64>,
    pub d_z_working: DVector<f64>,
    /// `−z` off the working set, in increasing index order.
    pub d_z_rest: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularSystem {
    pub sigma_min: f64,
}

/// Solves the augmented system for the working set of `state`. With an
/// empty working set the `G` block is shifted by `γI`.
pub fn newton_direction(
    state: &SolverState,
    cache: &DesignCache,
    gamma: f64,
) -> std::result::Result<Direction, SingularSystem> {
    direction_raw(&state.theta.to_vector(), &state.z, &state.working.working, cache, gamma)
}

fn direction_raw(
    theta: &DVector<f64>,
    z: &DVector<f64>,
    working: &[usize],
    cache: &DesignCache,
    gamma: f64,
) -> std::result::Result<Direction, SingularSystem> {
    let (d, t) = (cache.d, working.len());
    let mut h = augmented_matrix(working, cache, gamma);
    if t == 0 {
        for j in 0..d {
            h[(j, j)] += gamma;
        }
    }
    let res = residual_vec(theta, z, working, cache);
    let mut rhs = DVector::zeros(d + t);
    rhs.rows_mut(0, d).copy_from(&(-&res.grad_part));
    rhs.rows_mut(d, t).copy_from(&(-&res.margin_part));

    let lu = h.clone().full_piv_lu();
    let sol = lu.solve(&rhs).filter(|s| s.iter().all(|v| v.is_finite()));
    let Some(sol) = sol else {
        return Err(SingularSystem { sigma_min: h.singular_values().min() });
    };
    Ok(Direction {
        d_theta: sol.rows(0, d).into_owned(),
        d_z_working: sol.rows(d, t).into_owned(),
        d_z_rest: -res.dual_part,
    })
}

impl SolverState {
    /// State at `(θ, z)` with its working set and residual computed from scratch.
    pub fn new(
        theta: &SurfaceParams,
        z: DVector<f64>,
        gamma: f64,
        iter: usize,
        cfg: &SolverConfig,
        cache: &DesignCache,
    ) -> Result<Self> {
        check_dim(cache.d, theta.dim())?;
        check_dim(cache.n, z.len())?;
        make_state(theta.to_vector(), z, gamma, iter, cfg, cache)
    }

    /// `(θ + dθ, z + dz)` with `z` set to zero off the working set.
    pub fn apply(&self, dir: &Direction) -> Result<(SurfaceParams, DVector<f64>)> {
        let theta = self.theta.to_vector() + &dir.d_theta;
        Ok((SurfaceParams::from_vector(self.theta.m(), &theta)?, stepped_duals(&self.z, &self.working.working, dir)))
    }
}

fn stepped_duals(z: &DVector<f64>, working: &[usize], dir: &Direction) -> DVector<f64> {
    let mut next = DVector::zeros(z.len());
    for (j, &i) in working.iter().enumerate() {
        next[i] = z[i] + dir.d_z_working[j];
    }
    next
}

fn make_state(
    theta: DVector<f64>,
    z: DVector<f64>,
    gamma: f64,
    iter: usize,
    cfg: &SolverConfig,
    cache: &DesignCache,
) -> Result<SolverState> {
    let f = margins_vec(&theta, cache);
    let working = index_sets(f.as_slice(), z.as_slice(), cfg.alpha, cfg.lambda)?;
    let residual = residual_vec(&theta, &z, &working.working, cache);
    Ok(SolverState { theta: SurfaceParams::from_vector(cache.m, &theta)?, z, gamma, working, residual, iter })
}

fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Starting point selected by `cfg.warm_start`.
pub fn warm_start(
    data: &Dataset,
    cache: &DesignCache,
    cfg: &SolverConfig,
) -> Result<(SurfaceParams, DVector<f64>)> {
    let zeros = DVector::zeros(cache.n);
    match cfg.warm_start {
        WarmStart::Zeros => Ok((SurfaceParams::zeros(cache.m), zeros)),
        WarmStart::LeastSquares => Ok((ls_qssvm_fit_cached(cache, data.labels(), &cfg.lsq)?.theta, zeros)),
        WarmStart::SquaredHinge => {
            let ls = ls_qssvm_fit_cached(cache, data.labels(), &cfg.lsq)?;
            let r = squared_hinge_fit(cache, &ls.theta, cfg.relax_penalty)?;
            Ok((r.theta, r.z))
        }
    }
}

/// Runs the Newton iteration from `θ0`/`z0`, or from the configured warm
/// start for whichever is missing.
pub fn solve(
    data: &Dataset,
    cfg: &SolverConfig,
    theta0: Option<&SurfaceParams>,
    z0: Option<&DVector<f64>>,
) -> Result<SolveReport> {
    let start = Instant::now();
    let cache = build_design(data)?;
    let mut report = solve_with_cache(data, &cache, cfg, theta0, z0)?;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// [`solve`] over a prebuilt design.
pub fn solve_with_cache(
    data: &Dataset,
    cache: &DesignCache,
    cfg: &SolverConfig,
    theta0: Option<&SurfaceParams>,
    z0: Option<&DVector<f64>>,
) -> Result<SolveReport> {
    let start = Instant::now();
    cfg.validate()?;
    check_dim(cache.n, data.n())?;
    let (theta, z) = match (theta0, z0) {
        (Some(t), Some(z)) => (t.clone(), z.clone()),
        _ => {
            let (wt, wz) = warm_start(data, cache, cfg)?;
            (theta0.cloned().unwrap_or(wt), z0.cloned().unwrap_or(wz))
        }
    };
    check_dim(cache.d, theta.dim())?;
    check_dim(cache.n, z.len())?;

    let mut theta = theta.to_vector();
    let mut z = z;
    if !all_finite(&theta) || !all_finite(&z) {
        return Err(Error::Parameter("initial point must be finite".into()));
    }

    let mut gamma_prev = cfg.gamma_init;
    let mut trace = Vec::new();
    let mut increases = 0usize;
    let mut singular_sigma_min = None;
    let mut k = 0usize;
    let (state, status) = loop {
        let mut state = make_state(theta.clone(), z.clone(), gamma_prev, k, cfg, cache)?;
        let r = state.residual.norm;
        let gamma = gamma_update(gamma_prev, cfg.tau, cfg.rho, r);
        state.gamma = gamma;
        trace.push(TraceEntry { residual: r, gamma, working_size: state.working.working.len() });

        if !r.is_finite() {
            break (state, SolveStatus::Diverged);
        }
        if r < cfg.eps {
            break (state, SolveStatus::Converged);
        }
        if let Some(prev) = trace.len().checked_sub(2).map(|i| trace[i].residual) {
            increases = if r > prev { increases + 1 } else { 0 };
        }
        if increases >= cfg.safeguard_window {
            break (state, SolveStatus::Diverged);
        }
        if k == cfg.max_iter {
            break (state, SolveStatus::MaxIter);
        }

        let dir = match direction_raw(&theta, &z, &state.working.working, cache, gamma) {
            Ok(d) => d,
            Err(e) => {
                singular_sigma_min = Some(e.sigma_min);
                break (state, SolveStatus::SingularSystem);
            }
        };
        let next_theta = &theta + &dir.d_theta;
        let next_z = stepped_duals(&z, &state.working.working, &dir);
        if !all_finite(&next_theta) || !all_finite(&next_z) {
            break (state, SolveStatus::Diverged);
        }
        theta = next_theta;
        z = next_z;
        gamma_prev = gamma;
        k += 1;
    };

    let tol = 10.0 * cfg.eps;
    let certificate = pstationary_check(&state.theta, &state.z, cfg.alpha, cfg.lambda, cache, tol)?;
    Ok(SolveReport {
        final_state: state,
        trace,
        status,
        certificate,
        wall_time_s: start.elapsed().as_secs_f64(),
        singular_sigma_min,
    })
}

/// Outcome of [`rate_probe`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateProbe {
    pub fitted_c: f64,
    pub quadratic: bool,
    /// Fewer than four decreasing residuals in `(0, 1e-2)`.
    pub inconclusive: bool,
    /// RMS misfit of `ln r_{k+1} = ln C + 2 ln r_k` over the tail.
    pub log_rms: f64,
}

/// Tail threshold for [`rate_probe`].
pub const RATE_TAIL_BELOW: f64 = 1e-2;
const RATE_TAIL_LEN: usize = 4;
const RATE_RMS_MAX: f64 = 0.5;
/// Residuals at or below this are dominated by rounding in the residual
/// evaluation itself.
pub const RATE_NOISE_FLOOR: f64 = 1e-12;

/// Fits `r_{k+1} ≈ C r_k²` over the last four residuals of the final run
/// below `1e-2`. Entries at the rounding floor are left out when at least four
/// entries above it remain.
pub fn rate_probe(trace: &[f64]) -> RateProbe {
    let inconclusive = RateProbe { fitted_c: f64::NAN, quadratic: false, inconclusive: true, log_rms: f64::NAN };
    let start = trace.iter().rposition(|&r| !(r > 0.0 && r < RATE_TAIL_BELOW)).map_or(0, |i| i + 1);
    let mut run = &trace[start..];
    let above = run.iter().take_while(|&&r| r > RATE_NOISE_FLOOR).count();
    if above >= RATE_TAIL_LEN {
        run = &run[..above];
    }
    if run.len() < RATE_TAIL_LEN {
        return inconclusive;
    }
    let tail = &run[run.len() - RATE_TAIL_LEN..];
    if tail.windows(2).any(|w| w[1] >= w[0]) {
        return inconclusive;
    }
    let logs: Vec<f64> = tail.windows(2).map(|w| w[1].ln() - 2.0 * w[0].ln()).collect();
    let ln_c = logs.iter().sum::<f64>() / logs.len() as f64;
    let log_rms = (logs.iter().map(|v| (v - ln_c).powi(2)).sum::<f64>() / logs.len() as f64).sqrt();
    let fitted_c = ln_c.exp();
    RateProbe { fitted_c, quadratic: log_rms < RATE_RMS_MAX && fitted_c.is_finite(), inconclusive: false, log_rms }
}
