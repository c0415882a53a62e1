//! Right-hand side of the moist primitive equations in ξ coordinates.
//!
//! ```text
//! ∂t v = -∇_v v - w ∂ξ v - (f/R₀) v⊥ - grad Φₛ - ∫_ξ¹ (bP/p) grad[(1+aq)T] dξ'
//!        + ν₁ Δv + μ₁ ∂ξξ v
//! ∂t T = -∇_v T - w ∂ξ T + (bP/p)(1+aq) w + ν₂ ΔT + μ₂ ∂ξξ T + Q₁
//! ∂t q = -∇_v q - w ∂ξ q + ν₃ Δq + μ₃ ∂ξξ q + Q₂
//! w(ξ) = ∫_ξ¹ div v dξ'
//! ```
//!
//! `Φₛ` is the Lagrange multiplier that keeps `∫₀¹ div v dξ = 0`.

mod spectral;
#[cfg(test)]
mod tests;

use ndarray::{Array2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::column::{self, Field3D, VField3D, VerticalBc, VerticalGrid};
use crate::sphere::{Potentials, SphereGrid, Spectrum, VectorField2D};
use crate::{Error, Result};

pub use spectral::SpecState;

/// Individually switchable right-hand-side terms. `buoyancy` covers both the
/// geopotential gradient in the momentum equation and the `(bP/p)(1+aq)w`
/// term in the temperature equation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TermToggles {
    pub advection: bool,
    pub coriolis: bool,
    pub buoyancy: bool,
    pub diffusion: bool,
    pub forcing: bool,
}

impl Default for TermToggles {
    fn default() -> Self {
        Self::all()
    }
}

impl TermToggles {
    pub fn all() -> Self {
        Self {
            advection: true,
            coriolis: true,
            buoyancy: true,
            diffusion: true,
            forcing: true,
        }
    }

    pub fn none() -> Self {
        Self {
            advection: false,
            coriolis: false,
            buoyancy: false,
            diffusion: false,
            forcing: false,
        }
    }

    pub fn diffusion_only() -> Self {
        Self {
            diffusion: true,
            ..Self::none()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Rossby number.
    pub r0: f64,
    pub a: f64,
    pub b: f64,
    /// Surface pressure `P`.
    #[serde(rename = "P")]
    pub p_surface: f64,
    /// Top pressure `p₀`.
    #[serde(rename = "p0")]
    pub p_top: f64,
    pub alpha_s: f64,
    pub beta_s: f64,
    pub nu1: f64,
    pub nu2: f64,
    pub nu3: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub toggles: TermToggles,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            r0: 1.0,
            a: 0.618,
            b: 1.0,
            p_surface: 1.0,
            p_top: 0.1,
            alpha_s: 1.0,
            beta_s: 1.0,
            nu1: 1.0,
            nu2: 1.0,
            nu3: 1.0,
            mu1: 1.0,
            mu2: 1.0,
            mu3: 1.0,
            toggles: TermToggles::all(),
        }
    }
}

impl ModelParams {
    /// Checks the parameter invariants, naming the offending keys.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Param(msg));
        let all = [
            ("r0", self.r0),
            ("a", self.a),
            ("b", self.b),
            ("P", self.p_surface),
            ("p0", self.p_top),
            ("alpha_s", self.alpha_s),
            ("beta_s", self.beta_s),
            ("nu1", self.nu1),
            ("nu2", self.nu2),
            ("nu3", self.nu3),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
            ("mu3", self.mu3),
        ];
        if let Some((k, v)) = all.iter().find(|(_, v)| !v.is_finite()) {
            return bad(format!("{k} = {v} is not finite"));
        }
        if self.r0 <= 0.0 {
            return bad(format!("r0 = {} must be positive", self.r0));
        }
        if self.b <= 0.0 {
            return bad(format!("b = {} must be positive", self.b));
        }
        if !(self.p_top > 0.0 && self.p_top <= self.p_surface) {
            return bad(format!(
                "p0 = {} and P = {} violate 0 < p0 <= P",
                self.p_top, self.p_surface
            ));
        }
        for (k, v) in [("alpha_s", self.alpha_s), ("beta_s", self.beta_s)] {
            if v < 0.0 {
                return bad(format!("{k} = {v} must be non-negative"));
            }
        }
        for (k, v) in &all[7..] {
            if *v <= 0.0 {
                return bad(format!("{k} = {v} must be positive"));
            }
        }
        Ok(())
    }

    pub fn temperature_bc(&self) -> VerticalBc {
        VerticalBc::Robin(self.alpha_s)
    }

    pub fn moisture_bc(&self) -> VerticalBc {
        VerticalBc::Robin(self.beta_s)
    }
}

/// Prognostic state `U = (v, T, q)` on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub v: VField3D,
    pub temp: Field3D,
    pub q: Field3D,
    pub time: f64,
}

impl State {
    pub fn zeros(grid: &SphereGrid, vgrid: &VerticalGrid) -> Self {
        Self {
            v: VField3D::zeros(grid, vgrid),
            temp: vgrid.zeros(grid),
            q: vgrid.zeros(grid),
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite()
            && self.temp.iter().all(|x| x.is_finite())
            && self.q.iter().all(|x| x.is_finite())
    }

    /// Componentwise `self - other`; the time is taken from `self`.
    pub fn difference(&self, other: &State) -> State {
        State {
            v: &self.v - &other.v,
            temp: &self.temp - &other.temp,
            q: &self.q - &other.q,
            time: self.time,
        }
    }
}

/// Time-independent heat and moisture sources.
#[derive(Clone, Debug, PartialEq)]
pub struct Forcing {
    pub q1: Field3D,
    pub q2: Field3D,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForcingPreset {
    /// No sources.
    None,
    /// Equator-to-pole heating contrast with a wavenumber-2 component.
    Thermal,
    /// `Thermal` plus a tropical moisture source near the surface.
    Moist,
}

impl Forcing {
    pub fn zeros(grid: &SphereGrid, vgrid: &VerticalGrid) -> Self {
        Self {
            q1: vgrid.zeros(grid),
            q2: vgrid.zeros(grid),
        }
    }

    /// Smooth band-limited presets (degrees ≤ 2 in the horizontal).
    pub fn preset(
        preset: ForcingPreset,
        amplitude: f64,
        grid: &SphereGrid,
        vgrid: &VerticalGrid,
    ) -> Self {
        let thermal = |t: f64, p: f64, xi: f64| {
            let s2 = t.sin().powi(2);
            amplitude
                * ((s2 - 2.0 / 3.0) * (0.25 + 0.75 * xi)
                    + 0.3 * s2 * (2.0 * p).cos() * (std::f64::consts::PI * xi).cos())
        };
        match preset {
            ForcingPreset::None => Self::zeros(grid, vgrid),
            ForcingPreset::Thermal => Self {
                q1: vgrid.from_fn(grid, thermal),
                q2: vgrid.zeros(grid),
            },
            ForcingPreset::Moist => Self {
                q1: vgrid.from_fn(grid, thermal),
                q2: vgrid.from_fn(grid, |t, _, xi| amplitude * 0.5 * t.sin().powi(2) * xi * xi),
            },
        }
    }
}

/// Full right-hand side with the diagnosed surface geopotential.
#[derive(Clone, Debug, PartialEq)]
pub struct Tendency {
    pub dv: VField3D,
    pub dtemp: Field3D,
    pub dq: Field3D,
    pub phi_s: Array2<f64>,
}

/// Forcing in coefficient space.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecForcing {
    pub q1: Vec<Spectrum>,
    pub q2: Vec<Spectrum>,
}

/// Grids, parameters and precomputed level data.
#[derive(Clone, Debug)]
pub struct Model {
    pub grid: SphereGrid,
    pub vgrid: VerticalGrid,
    pub params: ModelParams,
    /// `bP/p` per level.
    buoyancy_factor: Vec<f64>,
    coriolis: Array2<f64>,
}

impl Model {
    pub fn new(grid: SphereGrid, vgrid: VerticalGrid, params: ModelParams) -> Result<Self> {
        params.validate()?;
        let buoyancy_factor = vgrid
            .pressures(params.p_surface, params.p_top)
            .iter()
            .map(|p| params.b * params.p_surface / p)
            .collect();
        let coriolis = grid.coriolis_parameter() / params.r0;
        Ok(Self {
            grid,
            vgrid,
            params,
            buoyancy_factor,
            coriolis,
        })
    }

    pub fn with_params(&self, params: ModelParams) -> Result<Self> {
        Model::new(self.grid.clone(), self.vgrid.clone(), params)
    }

    /// Same horizontal grid and parameters on another vertical grid.
    pub fn with_vgrid(&self, vgrid: VerticalGrid) -> Result<Self> {
        Model::new(self.grid.clone(), vgrid, self.params.clone())
    }

    pub fn levels(&self) -> usize {
        self.vgrid.levels()
    }

    pub fn buoyancy_factor(&self) -> &[f64] {
        &self.buoyancy_factor
    }

    pub fn spec_forcing(&self, f: &Forcing) -> SpecForcing {
        let an = |x: &Field3D| {
            x.outer_iter()
                .map(|lvl| self.grid.analyze(&lvl.to_owned()))
                .collect()
        };
        SpecForcing {
            q1: an(&f.q1),
            q2: an(&f.q2),
        }
    }

    /// `(f/R₀) v⊥` with `v⊥ = (-v_φ, v_θ)`.
    pub fn coriolis(&self, v: &VField3D) -> VField3D {
        let mut out = v.clone();
        for k in 0..v.levels() {
            let lvl = v.level(k).perp().scale_pointwise(&self.coriolis);
            out.set_level(k, &lvl);
        }
        out
    }

    /// `∫_ξ¹ (bP/p) grad[(1+aq)T] dξ'` at every level.
    pub fn buoyancy_grad(&self, temp: &Field3D, q: &Field3D) -> VField3D {
        let chi = self.buoyancy_potential(&self.moisture_product_spec(temp, q));
        let mut out = VField3D::zeros(&self.grid, &self.vgrid);
        for (k, c) in chi.iter().enumerate() {
            out.set_level(k, &self.grid.grad_spec(c));
        }
        out
    }

    /// Coefficients of `(1+aq)T` per level.
    fn moisture_product_spec(&self, temp: &Field3D, q: &Field3D) -> Vec<Spectrum> {
        let a = self.params.a;
        temp.outer_iter()
            .zip(q.outer_iter())
            .map(|(t, q)| {
                let mut g = t.to_owned();
                Zip::from(&mut g).and(&q).for_each(|g, &q| *g *= 1.0 + a * q);
                self.grid.analyze(&g)
            })
            .collect()
    }

    /// Potential whose gradient is the buoyancy term:
    /// `Σ_j I_kj (bP/p_j) G_j` by the trapezoid rule.
    fn buoyancy_potential(&self, g: &[Spectrum]) -> Vec<Spectrum> {
        let n = g.len();
        let h = self.vgrid.spacing();
        let lt = self.grid.truncation();
        let mut out = vec![Spectrum::zeros(lt); n];
        for k in (0..n - 1).rev() {
            let mut acc = out[k + 1].clone();
            acc.axpy(0.5 * h * self.buoyancy_factor[k], &g[k]);
            acc.axpy(0.5 * h * self.buoyancy_factor[k + 1], &g[k + 1]);
            out[k] = acc;
        }
        out
    }

    /// Solves `Δ Φₛ = div(v̄_raw)` (mean-zero gauge) and returns `Φₛ` with
    /// `raw - grad Φₛ`.
    pub fn project_surface_pressure(&self, raw: &VField3D) -> Result<(Array2<f64>, VField3D)> {
        let (mean, _) = column::vertical_mean_and_fluct(&self.vgrid, raw);
        let phi_s = self.grid.poisson_solve(&self.grid.div(&mean))?;
        let g = self.grid.grad(&phi_s);
        let mut out = raw.clone();
        out.scaled_add(-1.0, &VField3D::broadcast(&g, raw.levels()));
        Ok((phi_s, out))
    }

    /// All explicit terms (everything except diffusion), unprojected.
    pub fn explicit_spec(&self, s: &SpecState, f: &SpecForcing, time: f64) -> Result<SpecState> {
        let g = &self.grid;
        let vg = &self.vgrid;
        let tg = self.params.toggles;
        let levels = s.levels();
        let lt = g.truncation();
        let mut out = SpecState::zeros(lt, levels);
        let blowup = |term| Error::Blowup {
            term,
            time,
            step: None,
        };

        if tg.advection || tg.coriolis || tg.buoyancy {
            let mut vt = vg.zeros(g);
            let mut vp = vg.zeros(g);
            let mut div = vg.zeros(g);
            let mut temp = vg.zeros(g);
            let mut q = vg.zeros(g);
            let mut covs = Vec::with_capacity(levels);
            let mut gt = Vec::with_capacity(levels);
            let mut gq = Vec::with_capacity(levels);
            for k in 0..levels {
                let cov = g.covariant_derivatives_spec(&s.velocity_level(k));
                vt.index_axis_mut(Axis(0), k).assign(&cov.field.theta);
                vp.index_axis_mut(Axis(0), k).assign(&cov.field.phi);
                div.index_axis_mut(Axis(0), k)
                    .assign(&g.synthesize(&g.lap_spec(&s.chi[k])));
                temp.index_axis_mut(Axis(0), k).assign(&g.synthesize(&s.temp[k]));
                q.index_axis_mut(Axis(0), k).assign(&g.synthesize(&s.q[k]));
                if tg.advection {
                    gt.push(g.grad_spec(&s.temp[k]));
                    gq.push(g.grad_spec(&s.q[k]));
                }
                covs.push(cov);
            }
            let w = vg.partial_integral(&div);
            let (dvt, dvp, dtt, dqq) = if tg.advection {
                (
                    vg.d_xi(&vt, VerticalBc::Neumann),
                    vg.d_xi(&vp, VerticalBc::Neumann),
                    vg.d_xi(&temp, self.params.temperature_bc()),
                    vg.d_xi(&q, self.params.moisture_bc()),
                )
            } else {
                Default::default()
            };

            for k in 0..levels {
                let v = &covs[k].field;
                let wk = w.index_axis(Axis(0), k);
                let mut mom = VectorField2D::zeros(g);
                let mut st = g.zeros();
                let mut sq = g.zeros();
                if tg.advection {
                    let adv = g.covariant_along(v, &covs[k]);
                    mom.theta -= &adv.theta;
                    mom.phi -= &adv.phi;
                    Zip::from(&mut mom.theta)
                        .and(&wk)
                        .and(&dvt.index_axis(Axis(0), k))
                        .for_each(|m, &w, &d| *m -= w * d);
                    Zip::from(&mut mom.phi)
                        .and(&wk)
                        .and(&dvp.index_axis(Axis(0), k))
                        .for_each(|m, &w, &d| *m -= w * d);
                    st -= &v.dot(&gt[k]);
                    sq -= &v.dot(&gq[k]);
                    Zip::from(&mut st)
                        .and(&wk)
                        .and(&dtt.index_axis(Axis(0), k))
                        .for_each(|m, &w, &d| *m -= w * d);
                    Zip::from(&mut sq)
                        .and(&wk)
                        .and(&dqq.index_axis(Axis(0), k))
                        .for_each(|m, &w, &d| *m -= w * d);
                }
                if tg.coriolis {
                    Zip::from(&mut mom.theta)
                        .and(&v.phi)
                        .and(&self.coriolis)
                        .for_each(|m, &vp, &f| *m += f * vp);
                    Zip::from(&mut mom.phi)
                        .and(&v.theta)
                        .and(&self.coriolis)
                        .for_each(|m, &vt, &f| *m -= f * vt);
                }
                if tg.buoyancy {
                    let c = self.buoyancy_factor[k];
                    let a = self.params.a;
                    Zip::from(&mut st)
                        .and(&wk)
                        .and(&q.index_axis(Axis(0), k))
                        .for_each(|m, &w, &q| *m += c * (1.0 + a * q) * w);
                }
                if !(mom.is_finite()) {
                    return Err(blowup("momentum advection/Coriolis"));
                }
                if !(st.iter().chain(sq.iter()).all(|x| x.is_finite())) {
                    return Err(blowup("scalar advection/heating"));
                }
                let p = g.potentials(&mom);
                out.chi[k] = p.chi;
                out.psi[k] = p.psi;
                out.temp[k] = g.analyze(&st);
                out.q[k] = g.analyze(&sq);
            }

            if tg.buoyancy {
                let gq = self.moisture_product_spec(&temp, &q);
                let b = self.buoyancy_potential(&gq);
                for (k, bk) in b.iter().enumerate() {
                    if !bk.as_slice().iter().all(|c| c.is_finite()) {
                        return Err(blowup("buoyancy gradient"));
                    }
                    out.chi[k].axpy(-1.0, bk);
                }
            }
        }

        if tg.forcing {
            for k in 0..levels {
                out.temp[k].axpy(1.0, &f.q1[k]);
                out.q[k].axpy(1.0, &f.q2[k]);
            }
        }
        Ok(out)
    }

    /// Full projected tendency in coefficient space; the second value holds
    /// the coefficients of `Φₛ`.
    pub fn tendency_spec(
        &self,
        s: &SpecState,
        f: &SpecForcing,
        time: f64,
    ) -> Result<(SpecState, Spectrum)> {
        let mut out = self.explicit_spec(s, f, time)?;
        let diff = self.diffusion_spec(s);
        if !diff.is_finite() {
            return Err(Error::Blowup {
                term: "diffusion",
                time,
                step: None,
            });
        }
        out.axpy(1.0, &diff);
        let phi_s = self.project_spec(&mut out.chi);
        Ok((out, phi_s))
    }

    /// Assembles every right-hand-side term and applies the surface
    /// pressure projection.
    pub fn tendency(&self, state: &State, forcing: &Forcing) -> Result<Tendency> {
        let s = self.to_spectral(state);
        let (t, phi) = self.tendency_spec(&s, &self.spec_forcing(forcing), state.time)?;
        Ok(Tendency {
            dv: self.velocity_from_spectral(&t),
            dtemp: self.scalar_from_spectral(&t.temp),
            dq: self.scalar_from_spectral(&t.q),
            phi_s: self.grid.synthesize(&phi),
        })
    }

    /// `|∫₀¹ div v dξ|₂` over the sphere.
    pub fn constraint_residual(&self, v: &VField3D) -> f64 {
        let (mean, _) = column::vertical_mean_and_fluct(&self.vgrid, v);
        self.grid.l2_norm(&self.grid.div(&mean))
    }

    /// Spectral counterpart of [`Model::constraint_residual`].
    pub fn constraint_residual_spec(&self, s: &SpecState) -> f64 {
        let mut mean = Spectrum::zeros(self.grid.truncation());
        for (w, c) in self.vgrid.weights().iter().zip(&s.chi) {
            mean.axpy(*w, c);
        }
        self.grid.lap_spec(&mean).norm_sqr().sqrt()
    }

    /// Removes the barotropic divergence from `v` (projection onto the
    /// constraint set).
    pub fn make_admissible(&self, state: &mut State) {
        let mut s = self.to_spectral(state);
        self.project_spec(&mut s.chi);
        state.v = self.velocity_from_spectral(&s);
    }

    /// Random smooth admissible state with horizontal degrees
    /// `≤ max_degree` and vertical profiles built from the first few
    /// cosines in ξ.
    pub fn random_state<R: rand::Rng + ?Sized>(
        &self,
        rng: &mut R,
        max_degree: usize,
        amplitude: f64,
    ) -> State {
        let lt = self.grid.truncation();
        let levels = self.levels();
        let mut s = SpecState::zeros(lt, levels);
        let xi = self.vgrid.xi();
        for (gi, group) in s.groups_mut().into_iter().enumerate() {
            let decay = if gi < 2 { 2.0 } else { 1.0 };
            for mode in 0..3 {
                let hs = self.grid.random_spectrum(rng, max_degree, decay);
                for k in 0..levels {
                    let prof = (std::f64::consts::PI * mode as f64 * xi[k]).cos() / (1.0 + mode as f64);
                    group[k].axpy(amplitude * prof, &hs);
                }
            }
        }
        self.project_spec(&mut s.chi);
        self.from_spectral(&s, 0.0)
    }

    pub fn potentials_of(&self, v: &VField3D) -> Vec<Potentials> {
        (0..v.levels())
            .map(|k| self.grid.potentials(&v.level(k)))
            .collect()
    }
}
