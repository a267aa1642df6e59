#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use qssvm01::model::{build_design, margins, param_dim, Dataset, DesignCache, SurfaceParams};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
    let labels = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    Dataset::from_rows(&rows, labels).unwrap()
}

pub fn random_theta(rng: &mut ChaCha8Rng, m: usize) -> SurfaceParams {
    let v = DVector::from_fn(param_dim(m), |_, _| rng.gen_range(-1.5..1.5));
    SurfaceParams::from_vector(m, &v).unwrap()
}

pub fn shifted(theta: &SurfaceParams, k: usize, h: f64) -> SurfaceParams {
    let mut v = theta.to_vector();
    v[k] += h;
    SurfaceParams::from_vector(theta.m(), &v).unwrap()
}

/// Max relative error with a unit floor on the scale.
pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

pub fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

/// A pair `(θ, z)` that is P-stationary by construction, with working set `t`.
pub struct ExactPair {
    pub data: Dataset,
    pub cache: DesignCache,
    pub theta: SurfaceParams,
    pub z: DVector<f64>,
    pub t: Vec<usize>,
    pub alpha: f64,
    pub lambda: f64,
}

/// Chooses a working set `T`, solves `min f s.t. F_T = 0` for `(θ, z_T)`,
/// keeps the draw only if `z_T > 0`, relabels the remaining points so that
/// `F_i ≤ 0` or `F_i > 1`, and picks `α` well inside the stationarity
/// interval with `λ = 1`.
pub fn exact_pair(seed: u64) -> ExactPair {
    let mut r = rng(seed);
    let (n, m) = (20, 2);
    let lambda = 1.0;
    loop {
        let base = random_dataset(&mut r, n, m);
        let k = r.gen_range(1..=4);
        let mut t: Vec<usize> = rand::seq::index::sample(&mut r, n, k).into_vec();
        t.sort_unstable();
        let cache = build_design(&base).unwrap();
        let d = cache.d;
        let mut kkt = DMatrix::zeros(d + k, d + k);
        kkt.view_mut((0, 0), (d, d)).copy_from(&cache.g);
        let at = cache.a_rows(&t);
        kkt.view_mut((d, 0), (k, d)).copy_from(&at);
        kkt.view_mut((0, d), (d, k)).copy_from(&at.transpose());
        let mut rhs = DVector::zeros(d + k);
        rhs.rows_mut(d, k).fill(-1.0);
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let zt = sol.rows(d, k);
        if zt.iter().any(|&v| !(v > 1e-3)) || sol.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let theta = SurfaceParams::from_vector(m, &sol.rows(0, d).into_owned()).unwrap();

        let mut labels = base.labels().to_vec();
        for i in 0..n {
            if t.contains(&i) {
                continue;
            }
            let h = theta.decision(&base.point(i)).unwrap();
            let s = if h >= 0.0 { 1.0 } else { -1.0 };
            labels[i] = if h.abs() >= 1.0 { s } else { -s };
        }
        let data = Dataset::new(base.points().clone(), labels).unwrap();
        let cache = build_design(&data).unwrap();
        let mut z = DVector::zeros(n);
        for (j, &i) in t.iter().enumerate() {
            z[i] = zt[j];
        }
        let f = margins(&theta, &cache).unwrap();
        if (0..n).any(|i| !t.contains(&i) && f[i] > -1e-6 && f[i] <= 1.0 + 1e-6) {
            continue;
        }
        // F_T is zero up to rounding; the bounds use the exact value.
        let mut f_exact = f.clone();
        for &i in &t {
            f_exact[i] = 0.0;
        }
        let ab = qssvm01::stationarity::alpha_bounds(f_exact.as_slice(), z.as_slice(), lambda).unwrap();
        let alpha = 0.5 * ab.alpha2.min(ab.alpha1).min(1.0 / (2.0 * lambda));
        return ExactPair { data, cache, theta, z, t, alpha, lambda };
    }
}
