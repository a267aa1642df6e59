//! Seeded generators for the three synthetic two-dimensional datasets.
//!
//! Each generator also returns the surface it was built around, scaled so
//! that every point has `y·h(x) ≥ 1` when `noise = 0`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, SurfaceParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenKind {
    Linear,
    Circular,
    Convex2d,
}

impl fmt::Display for GenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GenKind::Linear => "linear",
            GenKind::Circular => "circular",
            GenKind::Convex2d => "convex2d",
        })
    }
}

impl FromStr for GenKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "linear" => Ok(GenKind::Linear),
            "circular" => Ok(GenKind::Circular),
            "convex2d" => Ok(GenKind::Convex2d),
            _ => Err(format!("unknown dataset kind '{s}' (expected linear, circular or convex2d)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub kind: GenKind,
    pub n_per_class: usize,
    pub seed: u64,
    /// Standard deviation of Gaussian jitter added after placement.
    pub noise: f64,
}

/// Half-width of the empty band around each generating boundary.
pub const GAP: f64 = 0.2;
const PARABOLA_GAP: f64 = 0.3;
const INNER_RADIUS: f64 = 1.0;
const ANNULUS: (f64, f64) = (1.4, 2.5);

pub fn generate(spec: &GenSpec) -> Result<Dataset> {
    Ok(generate_with_surface(spec)?.0)
}

/// Points (first the `+1` class, then the `−1` class) and the generating surface.
pub fn generate_with_surface(spec: &GenSpec) -> Result<(Dataset, SurfaceParams)> {
    if spec.n_per_class == 0 {
        return Err(Error::Parameter("n_per_class must be at least 1".into()));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::Parameter(format!("noise must be nonnegative, got {}", spec.noise)));
    }
    let n = spec.n_per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pos: Vec<[f64; 2]> = Vec::with_capacity(n);
    let mut neg: Vec<[f64; 2]> = Vec::with_capacity(n);

    let surface = match spec.kind {
        GenKind::Linear => {
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let normal = [angle.cos(), angle.sin()];
            let offset = rng.gen_range(-0.5..0.5);
            while pos.len() < n || neg.len() < n {
                let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                let s = normal[0] * p[0] + normal[1] * p[1] - offset;
                if s > GAP && pos.len() < n {
                    pos.push(p);
                } else if s < -GAP && neg.len() < n {
                    neg.push(p);
                }
            }
            SurfaceParams { wtri: vec![0.0; 3], b: vec![normal[0] / GAP, normal[1] / GAP], c: -offset / GAP }
        }
        GenKind::Circular => {
            let mut ring = |lo: f64, hi: f64| {
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                let r = rng.gen_range(lo * lo..hi * hi).sqrt();
                [r * a.cos(), r * a.sin()]
            };
            pos.extend((0..n).map(|_| ring(0.0, INNER_RADIUS)));
            neg.extend((0..n).map(|_| ring(ANNULUS.0, ANNULUS.1)));
            // h = κ(r_mid² − |x|²) with r_mid² halfway between 1 and 1.96.
            let half = (ANNULUS.0 * ANNULUS.0 - INNER_RADIUS * INNER_RADIUS) / 2.0;
            let kappa = 1.0 / half;
            let mid = INNER_RADIUS * INNER_RADIUS + half;
            SurfaceParams { wtri: vec![-2.0 * kappa, -2.0 * kappa, 0.0], b: vec![0.0, 0.0], c: kappa * mid }
        }
        GenKind::Convex2d => {
            while pos.len() < n || neg.len() < n {
                let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..5.0)];
                let curve = p[0] * p[0];
                if p[1] > curve + PARABOLA_GAP && pos.len() < n {
                    pos.push(p);
                } else if p[1] < curve - PARABOLA_GAP && neg.len() < n {
                    neg.push(p);
                }
            }
            // h = (y − x²)/0.3
            let s = 1.0 / PARABOLA_GAP;
            SurfaceParams { wtri: vec![-2.0 * s, 0.0, 0.0], b: vec![0.0, s], c: 0.0 }
        }
    };

    let mut points: Vec<[f64; 2]> = pos.into_iter().chain(neg).collect();
    if spec.noise > 0.0 {
        let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::Parameter(e.to_string()))?;
        for p in &mut points {
            p[0] += normal.sample(&mut rng);
            p[1] += normal.sample(&mut rng);
        }
    }
    let labels = (0..2 * n).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
    let matrix = DMatrix::from_fn(2 * n, 2, |i, j| points[i][j]);
    Ok((Dataset::new(matrix, labels)?, surface))
}
