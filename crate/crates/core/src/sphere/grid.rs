use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::spectrum::{mode_iter, spec_len, Spectrum};
use super::SphereError;

/// Gaussian-latitude × equispaced-longitude grid together with the
/// associated Legendre tables needed by the spectral transforms.
///
/// Latitudes are ordered by increasing colatitude θ (north to south); no
/// node sits on a pole, so the `1/sin θ` and `cot θ` factors of the
/// coordinate formulas are finite everywhere on the grid.
#[derive(Clone)]
pub struct SphereGrid {
    truncation: usize,
    n_lat: usize,
    n_lon: usize,
    theta: Vec<f64>,
    cos_theta: Vec<f64>,
    sin_theta: Vec<f64>,
    gauss_weights: Vec<f64>,
    quad_weights: Vec<f64>,
    phi: Vec<f64>,
    tables: Arc<LegendreTables>,
    fft_forward: Arc<dyn Fft<f64>>,
    fft_inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SphereGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SphereGrid")
            .field("truncation", &self.truncation)
            .field("n_lat", &self.n_lat)
            .field("n_lon", &self.n_lon)
            .finish()
    }
}

impl PartialEq for SphereGrid {
    fn eq(&self, other: &Self) -> bool {
        self.truncation == other.truncation
            && self.n_lat == other.n_lat
            && self.n_lon == other.n_lon
    }
}

/// Legendre kernels evaluated at the Gaussian nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Kernel {
    /// P̄ₗᵐ(cos θ)
    P,
    /// ∂θ P̄ₗᵐ
    DTheta,
    /// m P̄ₗᵐ / sin θ
    MOverSin,
    /// ∂θθ P̄ₗᵐ
    D2Theta,
    /// ∂θ (m P̄ₗᵐ / sin θ)
    DThetaMOverSin,
}

/// Tables are stored mode-major: `values[mode * n_lat + j]`.
#[derive(Debug)]
pub(crate) struct LegendreTables {
    p: Vec<f64>,
    dp: Vec<f64>,
    m_over_sin: Vec<f64>,
    d2p: Vec<f64>,
    dm_over_sin: Vec<f64>,
}

impl LegendreTables {
    fn kernel(&self, k: Kernel) -> &[f64] {
        match k {
            Kernel::P => &self.p,
            Kernel::DTheta => &self.dp,
            Kernel::MOverSin => &self.m_over_sin,
            Kernel::D2Theta => &self.d2p,
            Kernel::DThetaMOverSin => &self.dm_over_sin,
        }
    }

    fn build(truncation: usize, cos_theta: &[f64], sin_theta: &[f64]) -> Self {
        let n_lat = cos_theta.len();
        let len = spec_len(truncation) * n_lat;
        let mut p = vec![0.0; len];
        let mut dp = vec![0.0; len];
        let mut m_over_sin = vec![0.0; len];
        let mut d2p = vec![0.0; len];
        let mut dm_over_sin = vec![0.0; len];

        let lt = truncation;
        for (j, (&x, &s)) in cos_theta.iter().zip(sin_theta).enumerate() {
            // fully normalized: ∫ |P̄ₗᵐ e^{imφ}|² dS² = 1
            let mut pmm = 1.0 / (4.0 * PI).sqrt();
            for m in 0..=lt {
                if m > 0 {
                    pmm *= ((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * s;
                }
                let mut prev2 = 0.0;
                let mut prev = pmm;
                for l in m..=lt {
                    let cur = if l == m {
                        pmm
                    } else {
                        let lf = l as f64;
                        let mf = m as f64;
                        let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                        let b = if l >= m + 2 {
                            let l1 = lf - 1.0;
                            ((l1 * l1 - mf * mf) / (4.0 * l1 * l1 - 1.0)).sqrt()
                        } else {
                            0.0
                        };
                        a * (x * prev - b * prev2)
                    };
                    // P̄ₗ₋₁ᵐ for the derivative relation
                    let below = if l == m { 0.0 } else { prev };
                    let lf = l as f64;
                    let mf = m as f64;
                    let c = if l == m {
                        0.0
                    } else {
                        ((2.0 * lf + 1.0) / (2.0 * lf - 1.0) * (lf * lf - mf * mf)).sqrt()
                    };
                    let d = (lf * x * cur - c * below) / s;
                    let mos = mf * cur / s;
                    let d2 = -lf * (lf + 1.0) * cur + mf * mf / (s * s) * cur - x / s * d;
                    let dmos = mf * (d / s - x * cur / (s * s));

                    let idx = super::spectrum::spec_index(lt, l, m) * n_lat + j;
                    p[idx] = cur;
                    dp[idx] = d;
                    m_over_sin[idx] = mos;
                    d2p[idx] = d2;
                    dm_over_sin[idx] = dmos;

                    if l > m {
                        prev2 = prev;
                        prev = cur;
                    }
                }
            }
        }
        Self {
            p,
            dp,
            m_over_sin,
            d2p,
            dm_over_sin,
        }
    }
}

/// Gauss–Legendre nodes on (-1, 1) in decreasing order with their weights.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dpn = 1.0;
        for _ in 0..100 {
            let (pn, d) = legendre_and_derivative(n, z);
            dpn = d;
            let dz = pn / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_and_derivative(n, z);
        if d.is_finite() {
            dpn = d;
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dpn * dpn);
    }
    (x, w)
}

fn legendre_and_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (z * p1 - p0) / (z * z - 1.0))
}

/// Per-latitude Fourier coefficients stored as `F[m, j]` for `0 <= m <= L`,
/// normalized so that `f(φ) = Re F₀ + Σ_{m≥1} 2 Re(Fₘ e^{imφ})`.
pub(crate) type Fourier = Array2<Complex64>;

impl SphereGrid {
    /// Builds a grid for spectral truncation `truncation` on `n_lat` Gaussian
    /// latitudes and `n_lon` equispaced longitudes.
    ///
    /// The transforms are exact for band-limited fields when
    /// `n_lat >= L + 1` and `n_lon >= 2L + 1`; quadratic and cubic products
    /// stay alias-free only on the finer grids reported by
    /// [`SphereGrid::is_alias_free`].
    pub fn new(truncation: usize, n_lat: usize, n_lon: usize) -> Result<Self, SphereError> {
        if truncation < 1 {
            return Err(SphereError::Sizing(format!(
                "truncation must be at least 1, got {truncation}"
            )));
        }
        if n_lat < truncation + 1 {
            return Err(SphereError::Sizing(format!(
                "n_lat = {n_lat} is below L + 1 = {} for L = {truncation}",
                truncation + 1
            )));
        }
        if n_lon < 2 * truncation + 1 {
            return Err(SphereError::Sizing(format!(
                "n_lon = {n_lon} is below 2L + 1 = {} for L = {truncation}",
                2 * truncation + 1
            )));
        }
        let (x, gw) = gauss_legendre(n_lat);
        let theta: Vec<f64> = x.iter().map(|&c| c.acos()).collect();
        let sin_theta: Vec<f64> = x.iter().map(|&c| (1.0 - c * c).sqrt()).collect();
        let dphi = 2.0 * PI / n_lon as f64;
        let quad_weights = gw.iter().map(|w| w * dphi).collect();
        let phi = (0..n_lon).map(|i| i as f64 * dphi).collect();
        let tables = LegendreTables::build(truncation, &x, &sin_theta);
        let mut planner = FftPlanner::new();
        Ok(Self {
            truncation,
            n_lat,
            n_lon,
            theta,
            cos_theta: x,
            sin_theta,
            gauss_weights: gw,
            quad_weights,
            phi,
            tables: Arc::new(tables),
            fft_forward: planner.plan_fft_forward(n_lon),
            fft_inverse: planner.plan_fft_inverse(n_lon),
        })
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn n_lat(&self) -> usize {
        self.n_lat
    }

    pub fn n_lon(&self) -> usize {
        self.n_lon
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_lat, self.n_lon)
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn cos_theta(&self) -> &[f64] {
        &self.cos_theta
    }

    pub fn sin_theta(&self) -> &[f64] {
        &self.sin_theta
    }

    /// Gauss weights in `cos θ`, summing to 2.
    pub fn gauss_weights(&self) -> &[f64] {
        &self.gauss_weights
    }

    /// Area weight of every node on latitude `j` (Gauss weight × 2π / n_lon).
    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    /// Products of two band-limited fields (and the cubic moist buoyancy
    /// product) are integrated exactly on this grid.
    pub fn is_alias_free(&self) -> bool {
        let l = self.truncation;
        self.n_lon >= 3 * l + 1 && 2 * self.n_lat >= 3 * l + 1
    }

    pub fn zeros(&self) -> Array2<f64> {
        Array2::zeros(self.shape())
    }

    /// Evaluates `f(θ, φ)` at every node.
    pub fn from_fn(&self, f: impl Fn(f64, f64) -> f64) -> Array2<f64> {
        Array2::from_shape_fn(self.shape(), |(j, i)| f(self.theta[j], self.phi[i]))
    }

    /// Errors unless `shape` is `[n_lat, n_lon]`.
    pub fn check_shape(&self, shape: &[usize]) -> Result<(), SphereError> {
        if shape != [self.n_lat, self.n_lon] {
            return Err(SphereError::Shape {
                expected: (self.n_lat, self.n_lon),
                found: shape.to_vec(),
            });
        }
        Ok(())
    }

    // ---- Fourier stage -------------------------------------------------

    pub(crate) fn fourier_analysis(&self, f: &Array2<f64>) -> Fourier {
        let n = self.n_lon;
        let lt = self.truncation;
        let mut out = Fourier::zeros((lt + 1, self.n_lat));
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch =
            vec![Complex64::new(0.0, 0.0); self.fft_forward.get_inplace_scratch_len()];
        let inv_n = 1.0 / n as f64;
        for j in 0..self.n_lat {
            for (b, &v) in buf.iter_mut().zip(f.row(j)) {
                *b = Complex64::new(v, 0.0);
            }
            self.fft_forward.process_with_scratch(&mut buf, &mut scratch);
            for m in 0..=lt {
                out[[m, j]] = buf[m] * inv_n;
            }
        }
        out
    }

    pub(crate) fn fourier_synthesis(&self, fc: &Fourier) -> Array2<f64> {
        let n = self.n_lon;
        let lt = self.truncation;
        let mut out = self.zeros();
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch =
            vec![Complex64::new(0.0, 0.0); self.fft_inverse.get_inplace_scratch_len()];
        for j in 0..self.n_lat {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            buf[0] = Complex64::new(fc[[0, j]].re, 0.0);
            for m in 1..=lt {
                buf[m] = fc[[m, j]];
                buf[n - m] = fc[[m, j]].conj();
            }
            self.fft_inverse.process_with_scratch(&mut buf, &mut scratch);
            for (o, b) in out.row_mut(j).iter_mut().zip(&buf) {
                *o = b.re;
            }
        }
        out
    }

    /// `∂φ` in Fourier space.
    pub(crate) fn fourier_dphi(&self, fc: &Fourier) -> Fourier {
        let mut out = fc.clone();
        for ((m, _), v) in out.indexed_iter_mut() {
            *v *= Complex64::new(0.0, m as f64);
        }
        out
    }

    // ---- Legendre stage ------------------------------------------------

    /// `F[j, m] = Σ_terms factor · Σ_l spec(l, m) K(l, m, θⱼ)`.
    pub(crate) fn legendre_synthesis(&self, terms: &[(&Spectrum, Kernel, Complex64)]) -> Fourier {
        let lt = self.truncation;
        let nl = self.n_lat;
        let mut out = vec![Complex64::new(0.0, 0.0); (lt + 1) * nl];
        for &(spec, kernel, factor) in terms {
            debug_assert_eq!(spec.truncation(), lt);
            let table = self.tables.kernel(kernel);
            let coeffs = spec.as_slice();
            for (_l, m, i) in mode_iter(lt) {
                let c = coeffs[i] * factor;
                if c.re == 0.0 && c.im == 0.0 {
                    continue;
                }
                let row = &table[i * nl..(i + 1) * nl];
                let dst = &mut out[m * nl..(m + 1) * nl];
                for (o, &k) in dst.iter_mut().zip(row) {
                    o.re += c.re * k;
                    o.im += c.im * k;
                }
            }
        }
        Fourier::from_shape_vec((lt + 1, nl), out).expect("fourier shape")
    }

    /// `spec(l, m) = Σ_terms factor · Σ_j 2π wⱼ F[j, m] K(l, m, θⱼ)`.
    pub(crate) fn legendre_analysis(&self, terms: &[(&Fourier, Kernel, Complex64)]) -> Spectrum {
        let lt = self.truncation;
        let nl = self.n_lat;
        let mut out = Spectrum::zeros(lt);
        let two_pi = 2.0 * PI;
        for &(fc, kernel, factor) in terms {
            let table = self.tables.kernel(kernel);
            let weighted: Vec<Complex64> = fc
                .indexed_iter()
                .map(|((_m, j), v)| v * (two_pi * self.gauss_weights[j]))
                .collect();
            let coeffs = out.as_mut_slice();
            for (_l, m, i) in mode_iter(lt) {
                let row = &table[i * nl..(i + 1) * nl];
                let src = &weighted[m * nl..(m + 1) * nl];
                let (mut re, mut im) = (0.0, 0.0);
                for (w, &k) in src.iter().zip(row) {
                    re += w.re * k;
                    im += w.im * k;
                }
                coeffs[i] += Complex64::new(re, im) * factor;
            }
        }
        out
    }

    // ---- Scalar transforms ---------------------------------------------

    /// Grid → coefficients (quadrature projection onto degrees ≤ L).
    pub fn analyze(&self, f: &Array2<f64>) -> Spectrum {
        let fc = self.fourier_analysis(f);
        let mut s = self.legendre_analysis(&[(&fc, Kernel::P, ONE)]);
        // the m = 0 coefficients of a real field are real
        for l in 0..=self.truncation {
            let i = s.index(l, 0);
            s.as_mut_slice()[i].im = 0.0;
        }
        s
    }

    /// Coefficients → grid.
    pub fn synthesize(&self, s: &Spectrum) -> Array2<f64> {
        self.fourier_synthesis(&self.legendre_synthesis(&[(s, Kernel::P, ONE)]))
    }
}

pub(crate) const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);
