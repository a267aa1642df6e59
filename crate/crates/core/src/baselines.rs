//! Least-squares quadratic-surface SVM, the squared-hinge relaxation used as
//! a warm start, and the per-split method comparison.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{accuracy, build_design, predict, Dataset, DesignCache, SurfaceParams};
use crate::newton::{solve_with_cache, SolveStatus, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsqConfig {
    pub c_penalty: f64,
    pub ridge: f64,
}

impl Default for LsqConfig {
    fn default() -> Self {
        Self { c_penalty: 1.0, ridge: 1e-10 }
    }
}

/// Ridge used when the normal matrix cannot be factored with the configured one.
pub const RETRY_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct LsqFit {
    pub theta: SurfaceParams,
    pub ridge_used: f64,
    /// The configured ridge failed and [`RETRY_RIDGE`] was used instead.
    pub retried: bool,
}

/// Rows `(s(xⁱ), xⁱ, 1)`, so that `h = Φθ`.
fn feature_matrix(cache: &DesignCache, labels: &[f64]) -> DMatrix<f64> {
    let mut phi = cache.a.clone();
    for (i, &y) in labels.iter().enumerate() {
        phi.row_mut(i).scale_mut(-y);
    }
    phi
}

/// Minimizes `Σ‖M_i wtri + b‖² + (C/2)Σ(h(xⁱ) − y_i)² + ridge·‖θ‖²`.
///
/// Setting the gradient to zero gives
/// `(2G + CΦᵀΦ + 2·ridge·I) θ = CΦᵀy`.
pub fn ls_qssvm_fit(data: &Dataset, cfg: &LsqConfig) -> Result<LsqFit> {
    let cache = build_design(data)?;
    ls_qssvm_fit_cached(&cache, data.labels(), cfg)
}

pub(crate) fn ls_qssvm_fit_cached(cache: &DesignCache, labels: &[f64], cfg: &LsqConfig) -> Result<LsqFit> {
    if !(cfg.c_penalty > 0.0 && cfg.c_penalty.is_finite()) {
        return Err(Error::Parameter(format!("C must be positive, got {}", cfg.c_penalty)));
    }
    if !(cfg.ridge >= 0.0 && cfg.ridge.is_finite()) {
        return Err(Error::Parameter(format!("ridge must be nonnegative, got {}", cfg.ridge)));
    }
    let phi = feature_matrix(cache, labels);
    let base = 2.0 * &cache.g + cfg.c_penalty * phi.transpose() * &phi;
    let rhs = cfg.c_penalty * phi.transpose() * DVector::from_column_slice(labels);

    let attempt = |ridge: f64| {
        let mut k = base.clone();
        for j in 0..cache.d {
            k[(j, j)] += 2.0 * ridge;
        }
        k.cholesky().map(|ch| ch.solve(&rhs)).filter(|t| t.iter().all(|v| v.is_finite()))
    };
    let (theta, ridge_used, retried) = match attempt(cfg.ridge) {
        Some(t) => (t, cfg.ridge, false),
        None if cfg.ridge < RETRY_RIDGE => match attempt(RETRY_RIDGE) {
            Some(t) => (t, RETRY_RIDGE, true),
            None => return Err(Error::Parameter("least-squares normal matrix is singular".into())),
        },
        None => return Err(Error::Parameter("least-squares normal matrix is singular".into())),
    };
    Ok(LsqFit { theta: SurfaceParams::from_vector(cache.m, &theta)?, ridge_used, retried })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedFit {
    pub theta: SurfaceParams,
    /// `C·max(0, F)`, the multiplier estimate implied by the penalty.
    pub z: DVector<f64>,
    pub iters: usize,
}

const RELAX_MAX_ITER: usize = 50;
const RELAX_RIDGE: f64 = 1e-10;

/// Minimizes the convex relaxation `f(θ) + (C/2)Σ max(0, F_i)²` by Newton's
/// method with Armijo backtracking, starting from `theta0`.
pub fn squared_hinge_fit(cache: &DesignCache, theta0: &SurfaceParams, penalty: f64) -> Result<RelaxedFit> {
    if !(penalty > 0.0 && penalty.is_finite()) {
        return Err(Error::Parameter(format!("relaxation penalty must be positive, got {penalty}")));
    }
    let phi = |t: &DVector<f64>| {
        let f = (&cache.a * t).add_scalar(1.0);
        0.5 * t.dot(&(&cache.g * t)) + 0.5 * penalty * f.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>()
    };
    let mut theta = theta0.to_vector();
    let mut iters = 0;
    for k in 0..RELAX_MAX_ITER {
        iters = k;
        let f = (&cache.a * &theta).add_scalar(1.0);
        let fplus = f.map(|v| v.max(0.0));
        let grad = &cache.g * &theta + penalty * cache.a.transpose() * &fplus;
        if grad.norm() < 1e-10 * (1.0 + theta.norm()) {
            break;
        }
        let active: Vec<usize> = (0..cache.n).filter(|&i| f[i] > 0.0).collect();
        let aa = cache.a_rows(&active);
        let mut h = &cache.g + penalty * aa.transpose() * &aa;
        for j in 0..cache.d {
            h[(j, j)] += RELAX_RIDGE;
        }
        let Some(step) = h.lu().solve(&(-&grad)) else { break };
        let (p0, slope) = (phi(&theta), grad.dot(&step));
        let mut t = 1.0;
        while phi(&(&theta + t * &step)) > p0 + 1e-4 * t * slope && t > 1e-10 {
            t *= 0.5;
        }
        theta += t * step;
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("relaxation produced non-finite parameters".into()));
    }
    let z = (&cache.a * &theta).add_scalar(1.0).map(|v| penalty * v.max(0.0));
    Ok(RelaxedFit { theta: SurfaceParams::from_vector(cache.m, &theta)?, z, iters })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NewtonL01,
    LsQssvm,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::NewtonL01 => "newton_l01",
            Method::LsQssvm => "ls_qssvm",
        })
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "newton_l01" => Ok(Method::NewtonL01),
            "ls_qssvm" => Ok(Method::LsQssvm),
            _ => Err(format!("unknown method '{s}' (expected newton_l01 or ls_qssvm)")),
        }
    }
}

/// One method fitted on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    /// Test accuracy as a fraction, `None` when the fit failed.
    pub accuracy: Option<f64>,
    pub predictions: Vec<f64>,
    pub wall_time_s: f64,
    pub status: Option<SolveStatus>,
    pub train_accuracy: Option<f64>,
}

/// Fits `method` on `train` and scores it on `test`. A Newton solve that
/// stops with a singular system is reported with `accuracy = None`.
pub fn fit_and_score(
    method: Method,
    train: &Dataset,
    test: &Dataset,
    solver: &SolverConfig,
    lsq: &LsqConfig,
) -> Result<MethodOutcome> {
    if train.m() != test.m() {
        return Err(Error::Dimension { expected: train.m(), got: test.m() });
    }
    let start = Instant::now();
    let (theta, status) = match method {
        Method::LsQssvm => (ls_qssvm_fit(train, lsq)?.theta, None),
        Method::NewtonL01 => {
            let cache = build_design(train)?;
            let report = solve_with_cache(train, &cache, solver, None, None)?;
            (report.final_state.theta, Some(report.status))
        }
    };
    let wall_time_s = start.elapsed().as_secs_f64();
    if status == Some(SolveStatus::SingularSystem) {
        return Ok(MethodOutcome {
            method,
            accuracy: None,
            predictions: Vec::new(),
            wall_time_s,
            status,
            train_accuracy: None,
        });
    }
    let predictions = (0..test.n()).map(|i| predict(&theta, &test.point(i))).collect::<Result<Vec<_>>>()?;
    let correct = predictions.iter().zip(test.labels()).filter(|(p, y)| p == y).count();
    Ok(MethodOutcome {
        method,
        accuracy: Some(correct as f64 / test.n() as f64),
        predictions,
        wall_time_s,
        status,
        train_accuracy: Some(accuracy(&theta, train)?),
    })
}

/// Accuracy statistics for one method, in percent except `var`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub method: Method,
    pub trials: usize,
    pub failures: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Sample variance of the accuracy fraction.
    pub var: f64,
    /// Sample standard deviation, in percent.
    pub std: f64,
    pub mean_time_s: f64,
}

/// Summarizes outcomes of a single method. Failed trials only count in
/// `failures`.
pub fn summarize(method: Method, outcomes: &[MethodOutcome]) -> StatsRow {
    let acc: Vec<f64> = outcomes.iter().filter_map(|o| o.accuracy).collect();
    let k = acc.len();
    let (mut min, mut max, mut mean, mut var) = (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    if k > 0 {
        min = acc.iter().copied().fold(f64::INFINITY, f64::min);
        max = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        mean = acc.iter().sum::<f64>() / k as f64;
        var = if k > 1 { acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1) as f64 } else { 0.0 };
    }
    let mean_time_s = if outcomes.is_empty() {
        0.0
    } else {
        outcomes.iter().map(|o| o.wall_time_s).sum::<f64>() / outcomes.len() as f64
    };
    StatsRow {
        method,
        trials: outcomes.len(),
        failures: outcomes.len() - k,
        min: 100.0 * min,
        max: 100.0 * max,
        mean: 100.0 * mean,
        var,
        std: 100.0 * var.sqrt(),
        mean_time_s,
    }
}

/// Runs every method on every `(train, test)` split and summarizes per method.
pub fn compare(
    splits: &[(Dataset, Dataset)],
    methods: &[Method],
    solver: &SolverConfig,
    lsq: &LsqConfig,
) -> Result<Vec<StatsRow>> {
    if splits.is_empty() {
        return Err(Error::Input("no splits to compare on".into()));
    }
    methods
        .iter()
        .map(|&method| {
            let outcomes = splits
                .iter()
                .map(|(train, test)| fit_and_score(method, train, test, solver, lsq))
                .collect::<Result<Vec<_>>>()?;
            Ok(summarize(method, &outcomes))
        })
        .collect()
}
