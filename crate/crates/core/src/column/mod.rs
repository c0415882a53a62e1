//! Vertical discretization on ξ ∈ [0, 1], with ξ = 0 at the top and ξ = 1
//! at the surface.
//!
//! Levels are vertex-centred, `ξ_k = k h` with `h = 1/(K-1)`, so both
//! boundaries carry a node. Integrals use the trapezoid rule and derivatives
//! use central differences closed by ghost values (see [`VerticalBc`]).
//! With this pairing the weighted second difference is symmetric, and
//!
//! ```text
//! Σ_k W_k (-D₂ f)_k f_k = Σ_k (f_{k+1} - f_k)² / h + α f_{K-1}²
//! ```
//!
//! holds exactly.

use std::ops::{Add, AddAssign, Mul, Sub};

use ndarray::{s, Array2, Array3, ArrayView2, Axis, Zip};
use num_complex::Complex64;
use thiserror::Error;

use crate::dynamics::ModelParams;
use crate::sphere::{SphereGrid, VectorField2D};

#[cfg(test)]
pub(crate) mod tests;

/// Scalar field over `(level, lat, lon)`.
pub type Field3D = Array3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ColumnError {
    #[error("vertical grid needs at least 3 levels, got {0}")]
    TooFewLevels(usize),
    #[error("{0}")]
    Domain(String),
    #[error("Robin coefficient must be non-negative, got {0}")]
    NegativeRobin(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerticalGrid {
    xi: Vec<f64>,
    weights: Vec<f64>,
    h: f64,
}

impl VerticalGrid {
    pub fn new(levels: usize) -> Result<Self, ColumnError> {
        if levels < 3 {
            return Err(ColumnError::TooFewLevels(levels));
        }
        let h = 1.0 / (levels - 1) as f64;
        let xi = (0..levels).map(|k| k as f64 * h).collect();
        let mut weights = vec![h; levels];
        weights[0] = 0.5 * h;
        weights[levels - 1] = 0.5 * h;
        Ok(Self { xi, weights, h })
    }

    pub fn levels(&self) -> usize {
        self.xi.len()
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    /// Trapezoid weights on [0, 1].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    /// Weights `I[k][j]` with `∫_{ξ_k}^1 f dξ ≈ Σ_j I[k][j] f_j`.
    pub fn partial_weights(&self) -> Vec<Vec<f64>> {
        let n = self.levels();
        (0..n)
            .map(|k| {
                let mut row = vec![0.0; n];
                if k + 1 < n {
                    row[k] = 0.5 * self.h;
                    row[n - 1] = 0.5 * self.h;
                    for r in row.iter_mut().take(n - 1).skip(k + 1) {
                        *r = self.h;
                    }
                }
                row
            })
            .collect()
    }

    pub fn zeros(&self, grid: &SphereGrid) -> Field3D {
        Array3::zeros((self.levels(), grid.n_lat(), grid.n_lon()))
    }

    pub fn from_fn(&self, grid: &SphereGrid, f: impl Fn(f64, f64, f64) -> f64) -> Field3D {
        let mut out = self.zeros(grid);
        for (k, &xi) in self.xi.iter().enumerate() {
            for (j, &t) in grid.theta().iter().enumerate() {
                for (i, &p) in grid.phi().iter().enumerate() {
                    out[[k, j, i]] = f(t, p, xi);
                }
            }
        }
        out
    }

    /// Pressure at every level.
    pub fn pressures(&self, p_surface: f64, p_top: f64) -> Vec<f64> {
        self.xi
            .iter()
            .map(|&x| (p_surface - p_top) * x + p_top)
            .collect()
    }

    /// `∫₀¹ f dξ` at every horizontal node.
    pub fn mean(&self, f: &Field3D) -> Array2<f64> {
        let mut out = Array2::zeros((f.len_of(Axis(1)), f.len_of(Axis(2))));
        for (w, lvl) in self.weights.iter().zip(f.outer_iter()) {
            out.scaled_add(*w, &lvl);
        }
        out
    }

    /// `∫_{ξ_k}^1 f dξ'` at every node and level.
    pub fn partial_integral(&self, f: &Field3D) -> Field3D {
        let n = self.levels();
        let mut out = Array3::zeros(f.raw_dim());
        for k in (0..n - 1).rev() {
            let (mut lo, hi) = out.multi_slice_mut((s![k, .., ..], s![k + 1, .., ..]));
            let fk = f.index_axis(Axis(0), k);
            let fk1 = f.index_axis(Axis(0), k + 1);
            Zip::from(&mut lo)
                .and(&hi)
                .and(&fk)
                .and(&fk1)
                .for_each(|o, &h, &a, &b| *o = h + 0.5 * self.h * (a + b));
        }
        out
    }

    /// Central first difference closed by the ghost values of `bc`.
    pub fn d_xi(&self, f: &Field3D, bc: VerticalBc) -> Field3D {
        let n = self.levels();
        let (top, bottom) = bc.ghosts(f, self.h);
        let inv = 0.5 / self.h;
        let mut out = Array3::zeros(f.raw_dim());
        for k in 0..n {
            let below = if k + 1 < n {
                f.index_axis(Axis(0), k + 1)
            } else {
                bottom.view()
            };
            let above = if k > 0 {
                f.index_axis(Axis(0), k - 1)
            } else {
                top.view()
            };
            Zip::from(out.index_axis_mut(Axis(0), k))
                .and(&below)
                .and(&above)
                .for_each(|o, &b, &a| *o = (b - a) * inv);
        }
        out
    }

    /// Second difference closed by the ghost values of `bc`.
    pub fn d2_xi(&self, f: &Field3D, bc: VerticalBc) -> Field3D {
        let n = self.levels();
        let (top, bottom) = bc.ghosts(f, self.h);
        let inv = 1.0 / (self.h * self.h);
        let mut out = Array3::zeros(f.raw_dim());
        for k in 0..n {
            let below: ArrayView2<f64> = if k + 1 < n {
                f.index_axis(Axis(0), k + 1)
            } else {
                bottom.view()
            };
            let above: ArrayView2<f64> = if k > 0 {
                f.index_axis(Axis(0), k - 1)
            } else {
                top.view()
            };
            Zip::from(out.index_axis_mut(Axis(0), k))
                .and(&below)
                .and(&f.index_axis(Axis(0), k))
                .and(&above)
                .for_each(|o, &b, &c, &a| *o = (b - 2.0 * c + a) * inv);
        }
        out
    }

    /// Matrix of `-D₂` for one column.
    pub fn neg_second_difference(&self, bc: VerticalBc) -> Tridiagonal {
        let n = self.levels();
        let inv = 1.0 / (self.h * self.h);
        let mut t = Tridiagonal {
            lower: vec![-inv; n],
            diag: vec![2.0 * inv; n],
            upper: vec![-inv; n],
        };
        t.lower[0] = 0.0;
        t.upper[n - 1] = 0.0;
        t.upper[0] = -2.0 * inv;
        t.lower[n - 1] = -2.0 * inv;
        t.diag[n - 1] += 2.0 * self.h * bc.alpha() * inv;
        t
    }

    /// `Σ_k (f_{k+1} - f_k)²/h + α f_{K-1}²` integrated over the sphere.
    pub fn vertical_form(&self, grid: &SphereGrid, f: &Field3D, bc: VerticalBc) -> f64 {
        let n = self.levels();
        let mut acc = 0.0;
        for k in 0..n - 1 {
            let d = &f.index_axis(Axis(0), k + 1) - &f.index_axis(Axis(0), k);
            acc += grid.integral(&(&d * &d)) / self.h;
        }
        let s = f.index_axis(Axis(0), n - 1);
        acc + bc.alpha() * grid.integral(&(&s * &s))
    }

    /// `∫_℧ f g` with sphere quadrature times trapezoid weights.
    pub fn inner(&self, grid: &SphereGrid, f: &Field3D, g: &Field3D) -> f64 {
        self.weights
            .iter()
            .zip(f.outer_iter().zip(g.outer_iter()))
            .map(|(w, (a, b))| w * grid.integral(&(&a * &b)))
            .sum()
    }

    pub fn inner_vec(&self, grid: &SphereGrid, u: &VField3D, v: &VField3D) -> f64 {
        self.inner(grid, &u.theta, &v.theta) + self.inner(grid, &u.phi, &v.phi)
    }
}

/// `p = (P - p₀) ξ + p₀`.
pub fn pressure_of_xi(xi: f64, p_surface: f64, p_top: f64) -> Result<f64, ColumnError> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(ColumnError::Domain(format!("xi = {xi} outside [0, 1]")));
    }
    if !(p_top > 0.0 && p_top <= p_surface) {
        return Err(ColumnError::Domain(format!(
            "need 0 < p0 <= P, got p0 = {p_top}, P = {p_surface}"
        )));
    }
    Ok((p_surface - p_top) * xi + p_top)
}

/// Boundary closure: `∂ξ f = 0` at the top, and `∂ξ f = -α f` at the
/// surface (`α = 0` for Neumann).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VerticalBc {
    Neumann,
    Robin(f64),
}

impl VerticalBc {
    pub fn robin(alpha: f64) -> Result<Self, ColumnError> {
        if alpha < 0.0 || !alpha.is_finite() {
            return Err(ColumnError::NegativeRobin(alpha));
        }
        Ok(VerticalBc::Robin(alpha))
    }

    pub fn alpha(self) -> f64 {
        match self {
            VerticalBc::Neumann => 0.0,
            VerticalBc::Robin(a) => a,
        }
    }

    /// Ghost values at `ξ = -h` and `ξ = 1 + h`:
    /// `f₋₁ = f₁` and `f_K = f_{K-2} - 2hα f_{K-1}`.
    pub fn ghosts(self, f: &Field3D, h: f64) -> (Array2<f64>, Array2<f64>) {
        let n = f.len_of(Axis(0));
        let top = f.index_axis(Axis(0), 1).to_owned();
        let mut bottom = f.index_axis(Axis(0), n - 2).to_owned();
        let a = self.alpha();
        if a != 0.0 {
            bottom.scaled_add(-2.0 * h * a, &f.index_axis(Axis(0), n - 1));
        }
        (top, bottom)
    }
}

/// Square tridiagonal matrix; `lower[0]` and `upper[n-1]` are unused.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// `c I + s A`.
    pub fn shifted(&self, c: f64, s: f64) -> Tridiagonal {
        Tridiagonal {
            lower: self.lower.iter().map(|x| s * x).collect(),
            diag: self.diag.iter().map(|x| c + s * x).collect(),
            upper: self.upper.iter().map(|x| s * x).collect(),
        }
    }

    pub fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
        let n = self.len();
        for k in 0..n {
            let mut acc = x[k] * self.diag[k];
            if k > 0 {
                acc += x[k - 1] * self.lower[k];
            }
            if k + 1 < n {
                acc += x[k + 1] * self.upper[k];
            }
            out[k] = acc;
        }
    }

    /// Thomas algorithm; the matrix must be diagonally dominant.
    pub fn solve(&self, rhs: &[Complex64], out: &mut [Complex64], scratch: &mut Vec<f64>) {
        let n = self.len();
        scratch.clear();
        scratch.resize(n, 0.0);
        let mut beta = self.diag[0];
        out[0] = rhs[0] / beta;
        for k in 1..n {
            scratch[k] = self.upper[k - 1] / beta;
            beta = self.diag[k] - self.lower[k] * scratch[k];
            out[k] = (rhs[k] - out[k - 1] * self.lower[k]) / beta;
        }
        for k in (0..n - 1).rev() {
            let next = out[k + 1];
            out[k] -= next * scratch[k + 1];
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut m = vec![vec![0.0; n]; n];
        for k in 0..n {
            m[k][k] = self.diag[k];
            if k > 0 {
                m[k][k - 1] = self.lower[k];
            }
            if k + 1 < n {
                m[k][k + 1] = self.upper[k];
            }
        }
        m
    }
}

/// Horizontal vector field on every level.
#[derive(Clone, Debug, PartialEq)]
pub struct VField3D {
    pub theta: Field3D,
    pub phi: Field3D,
}

impl VField3D {
    pub fn zeros(grid: &SphereGrid, vgrid: &VerticalGrid) -> Self {
        Self {
            theta: vgrid.zeros(grid),
            phi: vgrid.zeros(grid),
        }
    }

    pub fn levels(&self) -> usize {
        self.theta.len_of(Axis(0))
    }

    pub fn level(&self, k: usize) -> VectorField2D {
        VectorField2D::new(
            self.theta.index_axis(Axis(0), k).to_owned(),
            self.phi.index_axis(Axis(0), k).to_owned(),
        )
    }

    pub fn set_level(&mut self, k: usize, v: &VectorField2D) {
        self.theta.index_axis_mut(Axis(0), k).assign(&v.theta);
        self.phi.index_axis_mut(Axis(0), k).assign(&v.phi);
    }

    /// Same horizontal field on every level.
    pub fn broadcast(v: &VectorField2D, levels: usize) -> Self {
        let (nl, nn) = v.theta.dim();
        let mut out = Self {
            theta: Array3::zeros((levels, nl, nn)),
            phi: Array3::zeros((levels, nl, nn)),
        };
        for k in 0..levels {
            out.set_level(k, v);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(self.phi.iter()).all(|x| x.is_finite())
    }

    pub fn scaled_add(&mut self, a: f64, other: &VField3D) {
        self.theta.scaled_add(a, &other.theta);
        self.phi.scaled_add(a, &other.phi);
    }

    pub fn map_components(&self, f: impl Fn(&Field3D) -> Field3D) -> VField3D {
        VField3D {
            theta: f(&self.theta),
            phi: f(&self.phi),
        }
    }
}

impl Add<&VField3D> for &VField3D {
    type Output = VField3D;
    fn add(self, rhs: &VField3D) -> VField3D {
        VField3D {
            theta: &self.theta + &rhs.theta,
            phi: &self.phi + &rhs.phi,
        }
    }
}

impl Sub<&VField3D> for &VField3D {
    type Output = VField3D;
    fn sub(self, rhs: &VField3D) -> VField3D {
        VField3D {
            theta: &self.theta - &rhs.theta,
            phi: &self.phi - &rhs.phi,
        }
    }
}

impl Mul<f64> for &VField3D {
    type Output = VField3D;
    fn mul(self, rhs: f64) -> VField3D {
        VField3D {
            theta: &self.theta * rhs,
            phi: &self.phi * rhs,
        }
    }
}

impl AddAssign<&VField3D> for VField3D {
    fn add_assign(&mut self, rhs: &VField3D) {
        self.theta += &rhs.theta;
        self.phi += &rhs.phi;
    }
}

/// Barotropic mean `v̄ = ∫₀¹ v dξ` and baroclinic part `ṽ = v - v̄`.
pub fn vertical_mean_and_fluct(vgrid: &VerticalGrid, v: &VField3D) -> (VectorField2D, VField3D) {
    let mean = VectorField2D::new(vgrid.mean(&v.theta), vgrid.mean(&v.phi));
    let mut fluct = v.clone();
    for mut lvl in fluct.theta.outer_iter_mut() {
        lvl -= &mean.theta;
    }
    for mut lvl in fluct.phi.outer_iter_mut() {
        lvl -= &mean.phi;
    }
    (mean, fluct)
}

/// `div v` on every level.
pub fn divergence(grid: &SphereGrid, v: &VField3D) -> Field3D {
    let mut out = Array3::zeros(v.theta.raw_dim());
    for k in 0..v.levels() {
        out.index_axis_mut(Axis(0), k).assign(&grid.div(&v.level(k)));
    }
    out
}

/// `w(ξ) = ∫_ξ¹ div v dξ'`.
pub fn diagnose_w(grid: &SphereGrid, vgrid: &VerticalGrid, v: &VField3D) -> Field3D {
    vgrid.partial_integral(&divergence(grid, v))
}

/// `(bP/p)(1 + a q) T` on every level.
pub fn moist_buoyancy(vgrid: &VerticalGrid, t: &Field3D, q: &Field3D, params: &ModelParams) -> Field3D {
    let p = vgrid.pressures(params.p_surface, params.p_top);
    let mut out = Array3::zeros(t.raw_dim());
    for k in 0..vgrid.levels() {
        let c = params.b * params.p_surface / p[k];
        Zip::from(out.index_axis_mut(Axis(0), k))
            .and(&t.index_axis(Axis(0), k))
            .and(&q.index_axis(Axis(0), k))
            .for_each(|o, &tt, &qq| *o = c * (1.0 + params.a * qq) * tt);
    }
    out
}

/// `Φ(ξ) = Φₛ + ∫_ξ¹ (bP/p)(1 + a q) T dξ'`.
pub fn reconstruct_phi(
    vgrid: &VerticalGrid,
    t: &Field3D,
    q: &Field3D,
    phi_s: &Array2<f64>,
    params: &ModelParams,
) -> Field3D {
    let mut out = vgrid.partial_integral(&moist_buoyancy(vgrid, t, q, params));
    for mut lvl in out.outer_iter_mut() {
        lvl += phi_s;
    }
    out
}

/// Eigenpairs of the discrete `-∂ξξ` with closure `bc`, sorted ascending.
/// Eigenvectors are orthonormal under the trapezoid weights.
pub fn vertical_modes(vgrid: &VerticalGrid, bc: VerticalBc) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = vgrid.levels();
    let a = vgrid.neg_second_difference(bc).to_dense();
    let sw: Vec<f64> = vgrid.weights().iter().map(|w| w.sqrt()).collect();
    let s = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        // symmetrize exactly; the two triangles agree up to round-off
        0.5 * (sw[i] * a[i][j] / sw[j] + sw[j] * a[j][i] / sw[i])
    });
    let eig = nalgebra::SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| {
            let col = eig.eigenvectors.column(i);
            // fix the sign so that the top value is non-negative
            let sign = if col[0] < 0.0 { -1.0 } else { 1.0 };
            (0..n).map(|k| sign * col[k] / sw[k]).collect()
        })
        .collect();
    (values, vectors)
}

/// `|v|₂` over ℧.
pub fn l2_norm_for(grid: &SphereGrid, vgrid: &VerticalGrid, v: &VField3D) -> f64 {
    vgrid.inner_vec(grid, v, v).sqrt()
}
