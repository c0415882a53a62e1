//! Covariant calculus on the unit sphere.
//!
//! Scalars are stored on the Gaussian grid and transformed to triangular
//! spherical-harmonic coefficients for differentiation. Tangent vector
//! fields `v = v_θ e_θ + v_φ e_φ` are differentiated through their
//! velocity potential χ and streamfunction ψ,
//!
//! ```text
//! v = grad χ + k × grad ψ,   div v = Δχ,   curl v = Δψ,
//! ```
//!
//! on which the vector Laplace–Beltrami operator acts diagonally with
//! eigenvalue `-l(l+1)`. Products are formed on the grid and projected back
//! onto degrees `≤ L`; on an alias-free grid that projection is exact.

mod grid;
mod spectrum;

use std::ops::{Add, Mul, Sub};

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

pub(crate) use grid::{Fourier, Kernel, I, ONE};
pub use grid::SphereGrid;
pub use spectrum::Spectrum;
pub(crate) use spectrum::spec_index;

/// Scalar field on the `(lat, lon)` nodes of a [`SphereGrid`].
pub type ScalarField2D = Array2<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SphereError {
    #[error("grid sizing error: {0}")]
    Sizing(String),
    #[error("field shape {found:?} does not match grid shape {expected:?}")]
    Shape {
        expected: (usize, usize),
        found: Vec<usize>,
    },
    #[error("Poisson right-hand side has mean {mean:e}, above tolerance {tol:e}")]
    NonzeroMean { mean: f64, tol: f64 },
}

/// Mean-zero tolerance for the Poisson solve, relative to the rms of the
/// right-hand side (absolute when that rms is below one).
pub const POISSON_MEAN_TOL: f64 = 1e-10;

/// Tangent vector field in the orthonormal frame `(e_θ, e_φ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField2D {
    pub theta: Array2<f64>,
    pub phi: Array2<f64>,
}

impl VectorField2D {
    pub fn zeros(grid: &SphereGrid) -> Self {
        Self {
            theta: grid.zeros(),
            phi: grid.zeros(),
        }
    }

    pub fn new(theta: Array2<f64>, phi: Array2<f64>) -> Self {
        assert_eq!(theta.shape(), phi.shape());
        Self { theta, phi }
    }

    /// Pointwise dot product.
    pub fn dot(&self, other: &VectorField2D) -> Array2<f64> {
        &self.theta * &other.theta + &self.phi * &other.phi
    }

    /// Rotation by +90°: `v⊥ = (-v_φ, v_θ)`.
    pub fn perp(&self) -> VectorField2D {
        VectorField2D {
            theta: -&self.phi,
            phi: self.theta.clone(),
        }
    }

    pub fn scale_pointwise(&self, s: &Array2<f64>) -> VectorField2D {
        VectorField2D {
            theta: &self.theta * s,
            phi: &self.phi * s,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(self.phi.iter()).all(|x| x.is_finite())
    }
}

impl Add for &VectorField2D {
    type Output = VectorField2D;
    fn add(self, rhs: Self) -> VectorField2D {
        VectorField2D {
            theta: &self.theta + &rhs.theta,
            phi: &self.phi + &rhs.phi,
        }
    }
}

impl Sub for &VectorField2D {
    type Output = VectorField2D;
    fn sub(self, rhs: Self) -> VectorField2D {
        VectorField2D {
            theta: &self.theta - &rhs.theta,
            phi: &self.phi - &rhs.phi,
        }
    }
}

impl Mul<f64> for &VectorField2D {
    type Output = VectorField2D;
    fn mul(self, rhs: f64) -> VectorField2D {
        VectorField2D {
            theta: &self.theta * rhs,
            phi: &self.phi * rhs,
        }
    }
}

/// Velocity potential χ and streamfunction ψ of a tangent field.
#[derive(Clone, Debug, PartialEq)]
pub struct Potentials {
    pub chi: Spectrum,
    pub psi: Spectrum,
}

impl Potentials {
    pub fn zeros(truncation: usize) -> Self {
        Self {
            chi: Spectrum::zeros(truncation),
            psi: Spectrum::zeros(truncation),
        }
    }

    /// `∫ u·v dS²` evaluated in coefficient space.
    pub fn dot(&self, other: &Potentials) -> f64 {
        let mut a = self.chi.clone();
        let mut b = self.psi.clone();
        a.scale_by_degree(|l| (l * (l + 1)) as f64);
        b.scale_by_degree(|l| (l * (l + 1)) as f64);
        a.dot(&other.chi) + b.dot(&other.psi)
    }
}

/// A vector field together with its covariant derivatives along the frame.
#[derive(Clone, Debug)]
pub struct CovariantDerivatives {
    pub field: VectorField2D,
    /// ∇_{e_θ} u
    pub along_theta: VectorField2D,
    /// ∇_{e_φ} u
    pub along_phi: VectorField2D,
}

fn degree_eigen(l: usize) -> f64 {
    (l * (l + 1)) as f64
}

impl SphereGrid {
    /// Gaussian-quadrature approximation of `∫_{S²} f dS²`.
    pub fn integral(&self, f: &Array2<f64>) -> f64 {
        let w = self.quad_weights();
        f.outer_iter()
            .zip(w)
            .map(|(row, &wj)| wj * row.sum())
            .sum()
    }

    pub fn inner(&self, f: &Array2<f64>, g: &Array2<f64>) -> f64 {
        let w = self.quad_weights();
        Zip::from(f.rows())
            .and(g.rows())
            .and(ndarray::ArrayView1::from(w))
            .fold(0.0, |acc, a, b, &wj| acc + wj * a.dot(&b))
    }

    pub fn inner_vec(&self, u: &VectorField2D, v: &VectorField2D) -> f64 {
        self.inner(&u.theta, &v.theta) + self.inner(&u.phi, &v.phi)
    }

    pub fn l2_norm(&self, f: &Array2<f64>) -> f64 {
        self.inner(f, f).max(0.0).sqrt()
    }

    pub fn l2_norm_vec(&self, v: &VectorField2D) -> f64 {
        self.inner_vec(v, v).max(0.0).sqrt()
    }

    /// Area mean `(1/4π) ∫ f`.
    pub fn mean(&self, f: &Array2<f64>) -> f64 {
        self.integral(f) / (4.0 * std::f64::consts::PI)
    }

    /// Projection onto degrees `≤ L`.
    pub fn truncate(&self, f: &Array2<f64>) -> Array2<f64> {
        self.synthesize(&self.analyze(f))
    }

    pub fn truncate_vec(&self, v: &VectorField2D) -> VectorField2D {
        self.from_potentials(&self.potentials(v))
    }

    // ---- gradient / divergence ----------------------------------------

    /// Grid values of `grad h = (∂θ h, (1/sin θ) ∂φ h)` from coefficients.
    pub fn grad_spec(&self, s: &Spectrum) -> VectorField2D {
        let t = self.legendre_synthesis(&[(s, Kernel::DTheta, ONE)]);
        let p = self.legendre_synthesis(&[(s, Kernel::MOverSin, I)]);
        VectorField2D {
            theta: self.fourier_synthesis(&t),
            phi: self.fourier_synthesis(&p),
        }
    }

    pub fn grad(&self, h: &Array2<f64>) -> VectorField2D {
        self.grad_spec(&self.analyze(h))
    }

    /// χ and ψ of the degree-`≤ L` projection of `v`.
    pub fn potentials(&self, v: &VectorField2D) -> Potentials {
        let ft = self.fourier_analysis(&v.theta);
        let fp = self.fourier_analysis(&v.phi);
        let mut chi = self.legendre_analysis(&[
            (&ft, Kernel::DTheta, ONE),
            (&fp, Kernel::MOverSin, -I),
        ]);
        let mut psi = self.legendre_analysis(&[
            (&ft, Kernel::MOverSin, I),
            (&fp, Kernel::DTheta, ONE),
        ]);
        for s in [&mut chi, &mut psi] {
            s.scale_by_degree(|l| if l == 0 { 0.0 } else { 1.0 / degree_eigen(l) });
            for l in 0..=self.truncation() {
                let i = s.index(l, 0);
                s.as_mut_slice()[i].im = 0.0;
            }
        }
        Potentials { chi, psi }
    }

    pub(crate) fn vector_fourier(&self, p: &Potentials) -> (Fourier, Fourier) {
        let t = self.legendre_synthesis(&[
            (&p.chi, Kernel::DTheta, ONE),
            (&p.psi, Kernel::MOverSin, -I),
        ]);
        let f = self.legendre_synthesis(&[
            (&p.chi, Kernel::MOverSin, I),
            (&p.psi, Kernel::DTheta, ONE),
        ]);
        (t, f)
    }

    /// `grad χ + k × grad ψ` on the grid.
    pub fn from_potentials(&self, p: &Potentials) -> VectorField2D {
        let (t, f) = self.vector_fourier(p);
        VectorField2D {
            theta: self.fourier_synthesis(&t),
            phi: self.fourier_synthesis(&f),
        }
    }

    /// `div v = (1/sin θ)(∂θ(v_θ sin θ) + ∂φ v_φ)`.
    pub fn div(&self, v: &VectorField2D) -> Array2<f64> {
        let mut chi = self.potentials(v).chi;
        chi.scale_by_degree(|l| -degree_eigen(l));
        self.synthesize(&chi)
    }

    /// Radial component of the curl, `Δψ`.
    pub fn vorticity(&self, v: &VectorField2D) -> Array2<f64> {
        let mut psi = self.potentials(v).psi;
        psi.scale_by_degree(|l| -degree_eigen(l));
        self.synthesize(&psi)
    }

    // ---- Laplacians and the Poisson solve ------------------------------

    pub fn lap_spec(&self, s: &Spectrum) -> Spectrum {
        let mut out = s.clone();
        out.scale_by_degree(|l| -degree_eigen(l));
        out
    }

    pub fn lap_scalar(&self, h: &Array2<f64>) -> Array2<f64> {
        self.synthesize(&self.lap_spec(&self.analyze(h)))
    }

    /// Vector Laplace–Beltrami operator; diagonal on (χ, ψ).
    pub fn lap_vector(&self, v: &VectorField2D) -> VectorField2D {
        let p = self.potentials(v);
        self.from_potentials(&Potentials {
            chi: self.lap_spec(&p.chi),
            psi: self.lap_spec(&p.psi),
        })
    }

    /// Inverse Laplacian in coefficient space with the mean-zero gauge.
    pub fn inverse_lap_spec(&self, s: &Spectrum) -> Spectrum {
        let mut out = s.clone();
        out.scale_by_degree(|l| if l == 0 { 0.0 } else { -1.0 / degree_eigen(l) });
        out
    }

    /// Solves `Δ Φ = rhs` for mean-zero `Φ`. The right-hand side must have
    /// zero area mean (see [`POISSON_MEAN_TOL`]).
    pub fn poisson_solve(&self, rhs: &Array2<f64>) -> Result<Array2<f64>, SphereError> {
        let (phi, mean) = self.poisson_solve_projected(rhs);
        let rms = self.l2_norm(rhs) / (4.0 * std::f64::consts::PI).sqrt();
        let tol = POISSON_MEAN_TOL * rms.max(1.0);
        if mean.abs() > tol {
            return Err(SphereError::NonzeroMean { mean, tol });
        }
        Ok(phi)
    }

    /// Removes the mean of `rhs`, then solves. Returns the solution and the
    /// removed mean.
    pub fn poisson_solve_projected(&self, rhs: &Array2<f64>) -> (Array2<f64>, f64) {
        let s = self.analyze(rhs);
        let mean = s.get(0, 0).re / (4.0 * std::f64::consts::PI).sqrt();
        (self.synthesize(&self.inverse_lap_spec(&s)), mean)
    }

    // ---- advection -------------------------------------------------------

    /// `∇_v h = v_θ ∂θ h + (v_φ / sin θ) ∂φ h`, projected onto degrees ≤ L.
    pub fn advect_scalar(&self, v: &VectorField2D, h: &Array2<f64>) -> Array2<f64> {
        let g = self.grad(h);
        self.truncate(&v.dot(&g))
    }

    /// Grid values of `u` and of its covariant derivatives along `e_θ` and
    /// `e_φ`, including the `cot θ` connection terms.
    pub fn covariant_derivatives_spec(&self, p: &Potentials) -> CovariantDerivatives {
        let (ut, uf) = self.vector_fourier(p);
        let dt_ut = self.legendre_synthesis(&[
            (&p.chi, Kernel::D2Theta, ONE),
            (&p.psi, Kernel::DThetaMOverSin, -I),
        ]);
        let dt_uf = self.legendre_synthesis(&[
            (&p.chi, Kernel::DThetaMOverSin, I),
            (&p.psi, Kernel::D2Theta, ONE),
        ]);
        let dp_ut = self.fourier_synthesis(&self.fourier_dphi(&ut));
        let dp_uf = self.fourier_synthesis(&self.fourier_dphi(&uf));
        let field = VectorField2D {
            theta: self.fourier_synthesis(&ut),
            phi: self.fourier_synthesis(&uf),
        };
        let along_theta = VectorField2D {
            theta: self.fourier_synthesis(&dt_ut),
            phi: self.fourier_synthesis(&dt_uf),
        };
        let mut along_phi = VectorField2D::zeros(self);
        for j in 0..self.n_lat() {
            let s = self.sin_theta()[j];
            let cot = self.cos_theta()[j] / s;
            for i in 0..self.n_lon() {
                along_phi.theta[[j, i]] = dp_ut[[j, i]] / s - field.phi[[j, i]] * cot;
                along_phi.phi[[j, i]] = dp_uf[[j, i]] / s + field.theta[[j, i]] * cot;
            }
        }
        CovariantDerivatives {
            field,
            along_theta,
            along_phi,
        }
    }

    pub fn covariant_derivatives(&self, u: &VectorField2D) -> CovariantDerivatives {
        self.covariant_derivatives_spec(&self.potentials(u))
    }

    /// `∇_v u` evaluated on the grid without the final projection.
    pub fn covariant_along(&self, v: &VectorField2D, du: &CovariantDerivatives) -> VectorField2D {
        VectorField2D {
            theta: &v.theta * &du.along_theta.theta + &v.phi * &du.along_phi.theta,
            phi: &v.theta * &du.along_theta.phi + &v.phi * &du.along_phi.phi,
        }
    }

    /// `∇_v u`, projected onto degrees ≤ L.
    pub fn advect_vector(&self, v: &VectorField2D, u: &VectorField2D) -> VectorField2D {
        let du = self.covariant_derivatives(u);
        self.truncate_vec(&self.covariant_along(v, &du))
    }

    /// Coriolis parameter `f = 2 cos θ` on the grid.
    pub fn coriolis_parameter(&self) -> Array2<f64> {
        self.from_fn(|t, _| 2.0 * t.cos())
    }

    // ---- random band-limited fields ---------------------------------------

    /// Random real coefficients with degrees `≤ max_degree`, amplitude
    /// decaying like `(1 + l)^{-decay}`.
    pub fn random_spectrum<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        max_degree: usize,
        decay: f64,
    ) -> Spectrum {
        let lt = self.truncation();
        let mut s = Spectrum::zeros(lt);
        for m in 0..=lt.min(max_degree) {
            for l in m..=lt.min(max_degree) {
                let amp = (1.0 + l as f64).powf(-decay);
                let re = rng.random_range(-1.0..1.0) * amp;
                let im = if m == 0 {
                    0.0
                } else {
                    rng.random_range(-1.0..1.0) * amp
                };
                s.set(l, m, Complex64::new(re, im));
            }
        }
        s
    }

    pub fn random_scalar<R: Rng + ?Sized>(&self, rng: &mut R, max_degree: usize) -> Array2<f64> {
        self.synthesize(&self.random_spectrum(rng, max_degree, 1.0))
    }

    pub fn random_vector<R: Rng + ?Sized>(&self, rng: &mut R, max_degree: usize) -> VectorField2D {
        let p = Potentials {
            chi: self.random_spectrum(rng, max_degree, 2.0),
            psi: self.random_spectrum(rng, max_degree, 2.0),
        };
        self.from_potentials(&p)
    }
}
