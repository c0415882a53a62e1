use num_complex::Complex64;

use crate::column::{Tridiagonal, VField3D, VerticalBc};
use crate::sphere::{Potentials, Spectrum};

use super::{Model, State};

/// Coefficient-space state: velocity potentials χ, ψ and the scalar
/// spectra of T and q, one entry per level.
#[derive(Clone, Debug, PartialEq)]
pub struct SpecState {
    pub chi: Vec<Spectrum>,
    pub psi: Vec<Spectrum>,
    pub temp: Vec<Spectrum>,
    pub q: Vec<Spectrum>,
}

impl SpecState {
    pub fn zeros(truncation: usize, levels: usize) -> Self {
        let z = vec![Spectrum::zeros(truncation); levels];
        Self {
            chi: z.clone(),
            psi: z.clone(),
            temp: z.clone(),
            q: z,
        }
    }

    pub fn levels(&self) -> usize {
        self.chi.len()
    }

    pub(crate) fn groups(&self) -> [&Vec<Spectrum>; 4] {
        [&self.chi, &self.psi, &self.temp, &self.q]
    }

    pub(crate) fn groups_mut(&mut self) -> [&mut Vec<Spectrum>; 4] {
        [&mut self.chi, &mut self.psi, &mut self.temp, &mut self.q]
    }

    pub fn axpy(&mut self, a: f64, other: &SpecState) {
        for (x, y) in self.groups_mut().into_iter().zip(other.groups()) {
            for (xs, ys) in x.iter_mut().zip(y) {
                xs.axpy(a, ys);
            }
        }
    }

    pub fn scaled(&self, a: f64) -> SpecState {
        let mut out = self.clone();
        for g in out.groups_mut() {
            for s in g.iter_mut() {
                *s = s.scaled(a);
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.groups()
            .iter()
            .all(|g| g.iter().all(|s| s.as_slice().iter().all(|c| c.is_finite())))
    }

    pub fn velocity_level(&self, k: usize) -> Potentials {
        Potentials {
            chi: self.chi[k].clone(),
            psi: self.psi[k].clone(),
        }
    }
}

impl Model {
    pub fn to_spectral(&self, state: &State) -> SpecState {
        let k = self.vgrid.levels();
        let mut out = SpecState::zeros(self.grid.truncation(), k);
        for lvl in 0..k {
            let p = self.grid.potentials(&state.v.level(lvl));
            out.chi[lvl] = p.chi;
            out.psi[lvl] = p.psi;
            out.temp[lvl] = self.grid.analyze(&state.temp.index_axis(ndarray::Axis(0), lvl).to_owned());
            out.q[lvl] = self.grid.analyze(&state.q.index_axis(ndarray::Axis(0), lvl).to_owned());
        }
        out
    }

    pub fn velocity_from_spectral(&self, s: &SpecState) -> VField3D {
        let mut v = VField3D::zeros(&self.grid, &self.vgrid);
        for lvl in 0..s.levels() {
            v.set_level(lvl, &self.grid.from_potentials(&s.velocity_level(lvl)));
        }
        v
    }

    pub fn scalar_from_spectral(&self, s: &[Spectrum]) -> crate::column::Field3D {
        let mut out = self.vgrid.zeros(&self.grid);
        for (lvl, sp) in s.iter().enumerate() {
            out.index_axis_mut(ndarray::Axis(0), lvl)
                .assign(&self.grid.synthesize(sp));
        }
        out
    }

    pub fn from_spectral(&self, s: &SpecState, time: f64) -> State {
        State {
            v: self.velocity_from_spectral(s),
            temp: self.scalar_from_spectral(&s.temp),
            q: self.scalar_from_spectral(&s.q),
            time,
        }
    }

    /// Vertical closures and diffusivities `(ν, μ, bc)` of the four groups.
    pub(crate) fn diffusion_groups(&self) -> [(f64, f64, VerticalBc); 4] {
        let p = &self.params;
        [
            (p.nu1, p.mu1, VerticalBc::Neumann),
            (p.nu1, p.mu1, VerticalBc::Neumann),
            (p.nu2, p.mu2, VerticalBc::Robin(p.alpha_s)),
            (p.nu3, p.mu3, VerticalBc::Robin(p.beta_s)),
        ]
    }

    /// `ν Δ s + μ D₂ s` for every group (zero when diffusion is toggled off).
    pub fn diffusion_spec(&self, s: &SpecState) -> SpecState {
        let lt = self.grid.truncation();
        let levels = s.levels();
        let mut out = SpecState::zeros(lt, levels);
        if !self.params.toggles.diffusion {
            return out;
        }
        let mut col = vec![Complex64::new(0.0, 0.0); levels];
        let mut res = col.clone();
        for ((src, dst), (nu, mu, bc)) in s
            .groups()
            .into_iter()
            .zip(out.groups_mut())
            .zip(self.diffusion_groups())
        {
            let a = self.vgrid.neg_second_difference(bc);
            for (l, _m, i) in src[0].modes() {
                for k in 0..levels {
                    col[k] = src[k].as_slice()[i];
                }
                a.apply(&col, &mut res);
                let ll = (l * (l + 1)) as f64;
                for k in 0..levels {
                    dst[k].as_mut_slice()[i] = -(res[k] * mu) - col[k] * (nu * ll);
                }
            }
        }
        out
    }

    /// Solves `(c I - dt D) x = rhs` column by column, where `D` is the
    /// diffusion operator, refining until the relative residual is below
    /// `tol`.
    pub fn implicit_solve(
        &self,
        c: f64,
        dt: f64,
        rhs: &SpecState,
        tol: f64,
        max_iters: usize,
    ) -> crate::Result<SpecState> {
        if !self.params.toggles.diffusion {
            return Ok(rhs.scaled(1.0 / c));
        }
        let levels = rhs.levels();
        let mut out = rhs.clone();
        let mut b = vec![Complex64::new(0.0, 0.0); levels];
        let mut x = b.clone();
        let mut r = b.clone();
        let mut dx = b.clone();
        let mut scratch = Vec::with_capacity(levels);
        for ((src, dst), (nu, mu, bc)) in rhs
            .groups()
            .into_iter()
            .zip(out.groups_mut())
            .zip(self.diffusion_groups())
        {
            let a = self.vgrid.neg_second_difference(bc);
            let mut cache: Vec<Option<Tridiagonal>> = vec![None; self.grid.truncation() + 1];
            for (l, _m, i) in src[0].modes() {
                let ll = (l * (l + 1)) as f64;
                let mat = cache[l].get_or_insert_with(|| a.shifted(c + dt * nu * ll, dt * mu));
                for k in 0..levels {
                    b[k] = src[k].as_slice()[i];
                }
                mat.solve(&b, &mut x, &mut scratch);
                let bn = norm(&b);
                let mut iters = 0;
                loop {
                    mat.apply(&x, &mut r);
                    for k in 0..levels {
                        r[k] = b[k] - r[k];
                    }
                    let rn = norm(&r);
                    if rn <= tol * bn || rn == 0.0 {
                        break;
                    }
                    if iters >= max_iters {
                        return Err(crate::Error::ImplicitSolve {
                            residual: rn / bn,
                            iters,
                        });
                    }
                    mat.solve(&r, &mut dx, &mut scratch);
                    for k in 0..levels {
                        x[k] += dx[k];
                    }
                    iters += 1;
                }
                for k in 0..levels {
                    dst[k].as_mut_slice()[i] = x[k];
                }
            }
        }
        Ok(out)
    }

    /// Removes the barotropic part of the velocity-potential tendency and
    /// returns the surface geopotential coefficients that did so.
    pub fn project_spec(&self, chi: &mut [Spectrum]) -> Spectrum {
        let lt = self.grid.truncation();
        let mut mean = Spectrum::zeros(lt);
        for (w, s) in self.vgrid.weights().iter().zip(chi.iter()) {
            mean.axpy(*w, s);
        }
        mean.set(0, 0, Complex64::new(0.0, 0.0));
        for s in chi.iter_mut() {
            s.axpy(-1.0, &mean);
        }
        mean
    }
}

fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}
