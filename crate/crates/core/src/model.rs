//! Quadratic-surface model and the smooth part of the training objective.
//!
//! A surface is `h(x) = ½xᵀWx + bᵀx + c` with `W` symmetric. It is stored in
//! the reduced vector `θ = (wtri, b, c)` of length `d = m(m+1)/2 + m + 1`,
//! where `wtri` holds the diagonal `w_jj` first and then the off-diagonal
//! `w_jk` (`j < k`) in row-major order. With that layout
//! `½xᵀWx = Σ_j ½w_jj x_j² + Σ_{j<k} w_jk x_j x_k`, so `h` is linear in `θ`
//! with feature vector `(s(x), x, 1)`.
//!
//! The margin terms are `F_i(θ) = 1 − y_i h(xⁱ) = 1 + a_i·θ` and the smooth
//! objective is `f(θ) = Σ_i ½‖W xⁱ + b‖² = ½θᵀGθ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Number of free entries of a symmetric `m × m` matrix.
pub fn tri_len(m: usize) -> usize {
    m * (m + 1) / 2
}

/// Length of the reduced parameter vector for `m` features.
pub fn param_dim(m: usize) -> usize {
    tri_len(m) + m + 1
}

/// Quadratic feature map `s(x)`: `½x_j²` for the diagonal slots, then
/// `x_j x_k` for `j < k`.
pub fn quad_features(x: &[f64]) -> Vec<f64> {
    let m = x.len();
    let mut s = Vec::with_capacity(tri_len(m));
    s.extend(x.iter().map(|v| 0.5 * v * v));
    for j in 0..m {
        for k in (j + 1)..m {
            s.push(x[j] * x[k]);
        }
    }
    s
}

/// Training points with labels in `{−1, +1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: DMatrix<f64>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn new(points: DMatrix<f64>, labels: Vec<f64>) -> Result<Self> {
        let (n, m) = points.shape();
        if n == 0 || m == 0 {
            return Err(Error::Input(format!("dataset must be non-empty, got {n}x{m}")));
        }
        check_dim(n, labels.len())?;
        if let Some(i) = (0..n).find(|&i| points.row(i).iter().any(|v| !v.is_finite())) {
            return Err(Error::InputRow { row: i + 1, msg: "non-finite feature value".into() });
        }
        if let Some(i) = labels.iter().position(|&l| l != 1.0 && l != -1.0) {
            return Err(Error::InputRow {
                row: i + 1,
                msg: format!("label {} is not in {{-1, +1}}", labels[i]),
            });
        }
        Ok(Self { points, labels })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<f64>) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != m) {
            return Err(Error::InputRow { row: i + 1, msg: "ragged row".into() });
        }
        let points = DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]);
        Self::new(points, labels)
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn m(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    /// Rows selected by `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let points = DMatrix::from_fn(idx.len(), self.m(), |r, j| self.points[(idx[r], j)]);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Self::new(points, labels)
    }

    /// Same labels, features replaced (used by normalization).
    pub fn with_points(&self, points: DMatrix<f64>) -> Result<Self> {
        Self::new(points, self.labels.clone())
    }
}

/// Surface parameters `(W, b, c)` in reduced form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceParams {
    pub wtri: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
}

impl SurfaceParams {
    pub fn zeros(m: usize) -> Self {
        Self { wtri: vec![0.0; tri_len(m)], b: vec![0.0; m], c: 0.0 }
    }

    /// Builds the reduced form from a full symmetric matrix (upper triangle is read).
    pub fn from_matrix(w: &DMatrix<f64>, b: Vec<f64>, c: f64) -> Result<Self> {
        let m = b.len();
        check_dim(m, w.nrows())?;
        check_dim(m, w.ncols())?;
        let mut wtri: Vec<f64> = (0..m).map(|j| w[(j, j)]).collect();
        for j in 0..m {
            for k in (j + 1)..m {
                wtri.push(w[(j, k)]);
            }
        }
        Ok(Self { wtri, b, c })
    }

    pub fn from_vector(m: usize, theta: &DVector<f64>) -> Result<Self> {
        check_dim(param_dim(m), theta.len())?;
        let p = tri_len(m);
        Ok(Self {
            wtri: theta.rows(0, p).iter().copied().collect(),
            b: theta.rows(p, m).iter().copied().collect(),
            c: theta[p + m],
        })
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.wtri);
        v.extend_from_slice(&self.b);
        v.push(self.c);
        DVector::from_vec(v)
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn dim(&self) -> usize {
        self.wtri.len() + self.b.len() + 1
    }

    pub fn is_finite(&self) -> bool {
        self.wtri.iter().chain(&self.b).all(|v| v.is_finite()) && self.c.is_finite()
    }

    /// The full symmetric `W`.
    pub fn w_matrix(&self) -> DMatrix<f64> {
        let m = self.m();
        let mut w = DMatrix::zeros(m, m);
        for j in 0..m {
            w[(j, j)] = self.wtri[j];
        }
        let mut idx = m;
        for j in 0..m {
            for k in (j + 1)..m {
                w[(j, k)] = self.wtri[idx];
                w[(k, j)] = self.wtri[idx];
                idx += 1;
            }
        }
        w
    }

    /// Decision function `h(x) = ½xᵀWx + bᵀx + c`.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.m(), x.len())?;
        let quad: f64 = quad_features(x).iter().zip(&self.wtri).map(|(s, w)| s * w).sum();
        let lin: f64 = x.iter().zip(&self.b).map(|(x, b)| x * b).sum();
        Ok(quad + lin + self.c)
    }
}

/// Precomputed affine/quadratic structure for one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignCache {
    /// Row `i` is `∇F_i = −y_i (s(xⁱ), xⁱ, 1)`.
    pub a: DMatrix<f64>,
    /// `M_i`: the `m × m(m+1)/2` map `wtri ↦ W xⁱ`.
    pub maps: Vec<DMatrix<f64>>,
    /// Constant Hessian of `f`.
    pub g: DMatrix<f64>,
    pub m: usize,
    pub n: usize,
    pub d: usize,
}

fn sample_map(x: &[f64]) -> DMatrix<f64> {
    let m = x.len();
    let mut map = DMatrix::zeros(m, tri_len(m));
    for j in 0..m {
        map[(j, j)] = x[j];
    }
    let mut idx = m;
    for j in 0..m {
        for k in (j + 1)..m {
            map[(j, idx)] = x[k];
            map[(k, idx)] = x[j];
            idx += 1;
        }
    }
    map
}

/// Builds `a`, the `M_i` and `G = Σ J_iᵀJ_i` with `J_i = [M_i, I, 0]`.
pub fn build_design(data: &Dataset) -> Result<DesignCache> {
    let (n, m) = (data.n(), data.m());
    let p = tri_len(m);
    let d = param_dim(m);
    let mut a = DMatrix::zeros(n, d);
    let mut g = DMatrix::zeros(d, d);
    let mut maps = Vec::with_capacity(n);
    for i in 0..n {
        let x = data.point(i);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InputRow { row: i + 1, msg: "non-finite feature value".into() });
        }
        let y = data.labels()[i];
        for (k, s) in quad_features(&x).into_iter().enumerate() {
            a[(i, k)] = -y * s;
        }
        for j in 0..m {
            a[(i, p + j)] = -y * x[j];
        }
        a[(i, d - 1)] = -y;

        let map = sample_map(&x);
        let mut jac = DMatrix::zeros(m, d);
        jac.view_mut((0, 0), (m, p)).copy_from(&map);
        jac.view_mut((0, p), (m, m)).fill_with_identity();
        g += jac.transpose() * &jac;
        maps.push(map);
    }
    Ok(DesignCache { a, maps, g, m, n, d })
}

impl DesignCache {
    fn check_theta(&self, theta: &SurfaceParams) -> Result<()> {
        check_dim(self.m, theta.m())?;
        check_dim(tri_len(self.m), theta.wtri.len())
    }

    /// Rows of `a` selected by `idx`.
    pub fn a_rows(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), self.d, |r, j| self.a[(idx[r], j)])
    }
}

/// `F(θ) = 1 + aθ`.
pub fn margins(theta: &SurfaceParams, cache: &DesignCache) -> Result<DVector<f64>> {
    cache.check_theta(theta)?;
    Ok(margins_vec(&theta.to_vector(), cache))
}

pub(crate) fn margins_vec(theta: &DVector<f64>, cache: &DesignCache) -> DVector<f64> {
    (&cache.a * theta).add_scalar(1.0)
}

/// `f(θ) = Σ ½‖M_i wtri + b‖²`, evaluated sample by sample.
pub fn smooth_value(theta: &SurfaceParams, cache: &DesignCache) -> Result<f64> {
    cache.check_theta(theta)?;
    let w = DVector::from_column_slice(&theta.wtri);
    let b = DVector::from_column_slice(&theta.b);
    Ok(cache.maps.iter().map(|map| 0.5 * (map * &w + &b).norm_squared()).sum())
}

/// `∇f(θ) = Gθ`.
pub fn smooth_gradient(theta: &SurfaceParams, cache: &DesignCache) -> Result<DVector<f64>> {
    cache.check_theta(theta)?;
    Ok(&cache.g * theta.to_vector())
}

/// Objective value split into its smooth part and the 0-1 count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub smooth: f64,
    pub count: usize,
    pub total: f64,
}

/// `f(θ) + λ‖F(θ)₊‖₀`.
pub fn total_loss(theta: &SurfaceParams, cache: &DesignCache, lambda: f64) -> Result<LossValue> {
    if !(lambda > 0.0) {
        return Err(Error::Parameter(format!("lambda must be positive, got {lambda}")));
    }
    let smooth = smooth_value(theta, cache)?;
    let count = crate::prox::positive_count(margins(theta, cache)?.as_slice());
    Ok(LossValue { smooth, count, total: smooth + lambda * count as f64 })
}

/// `+1` if `h(x) ≥ 0`, else `−1`.
pub fn predict(theta: &SurfaceParams, x: &[f64]) -> Result<f64> {
    Ok(if theta.decision(x)? >= 0.0 { 1.0 } else { -1.0 })
}

/// `h(xⁱ)` for every row of `data`.
pub fn decision_values(theta: &SurfaceParams, data: &Dataset) -> Result<Vec<f64>> {
    (0..data.n()).map(|i| theta.decision(&data.point(i))).collect()
}

/// Fraction of points whose predicted label matches.
pub fn accuracy(theta: &SurfaceParams, data: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    for i in 0..data.n() {
        if predict(theta, &data.point(i))? == data.labels()[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.n() as f64)
}
