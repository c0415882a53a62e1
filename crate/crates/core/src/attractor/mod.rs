//! Eigenstructure of the diffusion operators, high-mode projectors and the
//! two-trajectory experiments built on them.
//!
//! Every component of the state is expanded in the tensor-product
//! eigenbasis of its diffusion operator `A_i`: a spherical harmonic of
//! degree `l` times a discrete vertical eigenvector. In these real
//! coordinates `|x|₂² = Σ c²` and `‖x‖₁² = Σ λ c²`, which makes the
//! projectors `Q_{i,n}` exactly orthogonal in the discrete inner product.

#[cfg(test)]
mod tests;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::column::{vertical_modes, VerticalBc};
use crate::dynamics::{Forcing, Model, SpecState, State};
use crate::integrator::{uniform_steps, Stepper, StepperConfig};
use crate::norms_energy::{self, CONSTRAINT_TOL};
use crate::{Error, Result};

/// Gauss constant of the dimension bound.
pub const GAUSS_CONSTANT: f64 = 0.8346268;

/// Pairs whose initial `ψ` falls below this are excluded from the ratios.
pub const PSI_FLOOR: f64 = 1e-24;

/// Horizontal degrees kept in ensemble perturbations.
pub const PERTURBATION_MAX_DEGREE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Component {
    Velocity,
    Temperature,
    Moisture,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Velocity, Component::Temperature, Component::Moisture];

    pub fn name(self) -> &'static str {
        match self {
            Component::Velocity => "velocity",
            Component::Temperature => "temperature",
            Component::Moisture => "moisture",
        }
    }
}

/// Horizontal factor of a mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HorizontalKind {
    /// `grad Y_lm`.
    Divergent,
    /// `k × grad Y_lm`.
    Rotational,
    Scalar,
}

/// Real or imaginary part of an `m > 0` coefficient (`m = 0` is always real).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Part {
    Re,
    Im,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Mode {
    pub l: usize,
    pub m: usize,
    pub part: Part,
    pub kind: HorizontalKind,
    /// Index into the vertical eigenvectors of the component.
    pub vertical: usize,
    pub eigenvalue: f64,
}

/// Eigenpairs of one operator `A_i`, sorted by eigenvalue.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorBasis {
    pub component: Component,
    pub vertical_values: Vec<f64>,
    /// `vertical_vectors[j][k]`, orthonormal under the trapezoid weights.
    pub vertical_vectors: Vec<Vec<f64>>,
    pub modes: Vec<Mode>,
}

impl OperatorBasis {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.eigenvalue).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis {
    pub truncation: usize,
    pub levels: usize,
    weights: Vec<f64>,
    pub operators: [OperatorBasis; 3],
}

/// Real coordinates of a state, one vector per component in basis order.
pub type Coords = [Vec<f64>; 3];

impl SpectralBasis {
    /// Builds the eigenbases of `A₁` (Neumann closure, `l ≥ 1`, vertically
    /// constant divergent modes removed), `A₂` (Robin `αₛ`) and `A₃`
    /// (Robin `βₛ`).
    pub fn build(model: &Model) -> Result<Self> {
        let lt = model.grid.truncation();
        let vg = &model.vgrid;
        let p = &model.params;
        let bcs = [VerticalBc::Neumann, p.temperature_bc(), p.moisture_bc()];
        let mut ops = Vec::with_capacity(3);
        for (comp, bc) in Component::ALL.into_iter().zip(bcs) {
            let (values, vectors) = vertical_modes(vg, bc);
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Attractor(format!(
                    "vertical eigensolve for {} returned non-finite values",
                    comp.name()
                )));
            }
            let kinds: &[HorizontalKind] = match comp {
                Component::Velocity => &[HorizontalKind::Divergent, HorizontalKind::Rotational],
                _ => &[HorizontalKind::Scalar],
            };
            let lmin = if comp == Component::Velocity { 1 } else { 0 };
            let mut modes = Vec::new();
            for l in lmin..=lt {
                for m in 0..=l {
                    let parts: &[Part] = if m == 0 { &[Part::Re] } else { &[Part::Re, Part::Im] };
                    for &kind in kinds {
                        for (j, &kappa) in values.iter().enumerate() {
                            // (j = 0 is the vertically constant Neumann mode)
                            if kind == HorizontalKind::Divergent && j == 0 {
                                continue;
                            }
                            for &part in parts {
                                modes.push(Mode {
                                    l,
                                    m,
                                    part,
                                    kind,
                                    vertical: j,
                                    eigenvalue: ((l * (l + 1)) as f64 + kappa).max(0.0),
                                });
                            }
                        }
                    }
                }
            }
            modes.sort_by(|a, b| a.eigenvalue.total_cmp(&b.eigenvalue));
            ops.push(OperatorBasis {
                component: comp,
                vertical_values: values,
                vertical_vectors: vectors,
                modes,
            });
        }
        let operators: [OperatorBasis; 3] = ops.try_into().expect("three operators");
        Ok(Self {
            truncation: lt,
            levels: vg.levels(),
            weights: vg.weights().to_vec(),
            operators,
        })
    }

    pub fn counts(&self) -> [usize; 3] {
        [0, 1, 2].map(|i| self.operators[i].len())
    }

    /// Largest per-component mode count; `n` at or beyond it removes everything.
    pub fn mode_count(&self) -> usize {
        self.counts().into_iter().max().unwrap_or(0)
    }

    /// `λ_n = min_i λ_{i,n}` (the `n`-th eigenvalue, counting from 1; each
    /// index is clamped to the component's mode count). `None` for `n = 0`.
    pub fn lambda_n(&self, n: usize) -> Option<f64> {
        if n == 0 {
            return None;
        }
        self.operators
            .iter()
            .filter(|op| !op.is_empty())
            .map(|op| op.modes[n.min(op.len()) - 1].eigenvalue)
            .reduce(f64::min)
    }

    fn check_n(&self, n: usize) -> Result<()> {
        if n > self.mode_count() {
            return Err(Error::Attractor(format!(
                "n = {n} exceeds the mode count {}",
                self.mode_count()
            )));
        }
        Ok(())
    }

    fn group<'a>(&self, s: &'a SpecState, comp: Component, kind: HorizontalKind) -> &'a [crate::sphere::Spectrum] {
        match (comp, kind) {
            (Component::Velocity, HorizontalKind::Divergent) => &s.chi,
            (Component::Velocity, _) => &s.psi,
            (Component::Temperature, _) => &s.temp,
            (Component::Moisture, _) => &s.q,
        }
    }

    /// Real coordinates of `s` in the sorted eigenbases.
    pub fn coords(&self, s: &SpecState) -> Coords {
        let lt = self.truncation;
        [0, 1, 2].map(|i| {
            let op = &self.operators[i];
            op.modes
                .iter()
                .map(|md| {
                    let g = self.group(s, op.component, md.kind);
                    let idx = crate::sphere::spec_index(lt, md.l, md.m);
                    let e = &op.vertical_vectors[md.vertical];
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k in 0..self.levels {
                        acc += g[k].as_slice()[idx] * (self.weights[k] * e[k]);
                    }
                    let part = match md.part {
                        Part::Re => acc.re,
                        Part::Im => acc.im,
                    };
                    mode_scale(op.component, md) * part
                })
                .collect()
        })
    }

    /// Inverse of [`SpectralBasis::coords`] on the span of the basis.
    pub fn from_coords(&self, c: &Coords) -> SpecState {
        let lt = self.truncation;
        let mut out = SpecState::zeros(lt, self.levels);
        for (i, op) in self.operators.iter().enumerate() {
            for (md, &x) in op.modes.iter().zip(&c[i]) {
                if x == 0.0 {
                    continue;
                }
                let a = x / mode_scale(op.component, md);
                let add = match md.part {
                    Part::Re => Complex64::new(a, 0.0),
                    Part::Im => Complex64::new(0.0, a),
                };
                let idx = crate::sphere::spec_index(lt, md.l, md.m);
                let e = &op.vertical_vectors[md.vertical];
                let g = match (op.component, md.kind) {
                    (Component::Velocity, HorizontalKind::Divergent) => &mut out.chi,
                    (Component::Velocity, _) => &mut out.psi,
                    (Component::Temperature, _) => &mut out.temp,
                    (Component::Moisture, _) => &mut out.q,
                };
                for k in 0..self.levels {
                    g[k].as_mut_slice()[idx] += add * e[k];
                }
            }
        }
        out
    }

    /// `P_n x`: the part of `x` in the first `n` modes of each component.
    pub fn project_low(&self, s: &SpecState, n: usize) -> Result<SpecState> {
        self.check_n(n)?;
        let mut c = self.coords(s);
        for (ci, op) in c.iter_mut().zip(&self.operators) {
            for x in ci.iter_mut().skip(n.min(op.len())) {
                *x = 0.0;
            }
        }
        Ok(self.from_coords(&c))
    }

    /// `Q_n x = x - P_n x`, applied to `(μ, ϑ, ρ)` componentwise.
    pub fn project_high(&self, s: &SpecState, n: usize) -> Result<SpecState> {
        self.check_n(n)?;
        if n == 0 {
            return Ok(s.clone());
        }
        let mut out = s.clone();
        out.axpy(-1.0, &self.project_low(s, n)?);
        Ok(out)
    }

    /// `Σ_{k ≥ n} λ_k c_k²` for every `n = 0..=len`, per component.
    /// Each column is exactly non-increasing in `n`.
    pub fn tail_energies(&self, c: &Coords) -> [Vec<f64>; 3] {
        [0, 1, 2].map(|i| {
            let modes = &self.operators[i].modes;
            let mut tail = vec![0.0; modes.len() + 1];
            for k in (0..modes.len()).rev() {
                tail[k] = tail[k + 1] + modes[k].eigenvalue * c[i][k] * c[i][k];
            }
            tail
        })
    }

    /// `(φ, ψ)` of a difference state for mode count `n`.
    pub fn phi_psi(&self, diff: &SpecState, n: usize) -> Result<(f64, f64)> {
        self.check_n(n)?;
        let tails = self.tail_energies(&self.coords(diff));
        Ok((phi_from_tails(&tails, n), phi_from_tails(&tails, 0)))
    }
}

fn mode_scale(comp: Component, md: &Mode) -> f64 {
    let metric = if comp == Component::Velocity {
        ((md.l * (md.l + 1)) as f64).sqrt()
    } else {
        1.0
    };
    if md.m == 0 {
        metric
    } else {
        metric * std::f64::consts::SQRT_2
    }
}

fn phi_from_tails(tails: &[Vec<f64>; 3], n: usize) -> f64 {
    tails.iter().map(|t| t[n.min(t.len() - 1)]).sum()
}

/// `ψ = ‖μ‖₁² + ‖ϑ‖₁² + ‖ρ‖₁²` of a coefficient-space difference.
pub fn psi_of(basis: &SpectralBasis, diff: &SpecState) -> f64 {
    phi_from_tails(&basis.tail_energies(&basis.coords(diff)), 0)
}

/// One recorded instant of a difference trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffSample {
    pub time: f64,
    /// `(μ, ϑ, ρ)` in coefficient space.
    pub diff: SpecState,
    pub psi: f64,
    /// `∫₀ᵗ ‖μ‖₂² + ‖ϑ‖₂² + ‖ρ‖₂²` (trapezoid rule over every step).
    pub h2_integral: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiffTrajectory {
    pub samples: Vec<DiffSample>,
}

impl DiffTrajectory {
    pub fn last(&self) -> &DiffSample {
        self.samples.last().expect("trajectories hold at least the initial sample")
    }
}

fn spec_difference(a: &SpecState, b: &SpecState) -> SpecState {
    let mut d = a.clone();
    d.axpy(-1.0, b);
    d
}

fn require_admissible(model: &Model, s: &SpecState, which: &str) -> Result<()> {
    let n = norms_energy::spec_l2_sq(model, s).sqrt();
    let r = model.constraint_residual_spec(s);
    if r > CONSTRAINT_TOL * n.max(1.0) {
        return Err(Error::Attractor(format!(
            "{which} initial state violates the barotropic constraint (residual {r:e})"
        )));
    }
    Ok(())
}

/// Co-evolves two solutions with identical stepper settings over
/// `horizon` and records their difference every `sample_every` steps
/// (always including the first and last step).
pub fn evolve_pair(
    model: &Model,
    forcing: &Forcing,
    cfg: &StepperConfig,
    basis: &SpectralBasis,
    initial: (&State, &State),
    horizon: f64,
    sample_every: u64,
) -> Result<DiffTrajectory> {
    if !(horizon >= 0.0) {
        return Err(Error::Param(format!("horizon = {horizon} must be non-negative")));
    }
    let mut s1 = Stepper::new(model, forcing, cfg, initial.0)?;
    let mut s2 = Stepper::new(model, forcing, cfg, initial.1)?;
    require_admissible(model, s1.spectral(), "first")?;
    require_admissible(model, s2.spectral(), "second")?;
    let (n, dt) = uniform_steps(horizon, cfg.dt);
    s1.set_dt(dt);
    s2.set_dt(dt);
    let cadence = sample_every.max(1);

    let t0 = s1.time();
    let mut d = spec_difference(s1.spectral(), s2.spectral());
    let mut h2_prev = norms_energy::h2_norm_sq(model, &d);
    let mut integral = 0.0;
    let mut samples = vec![DiffSample {
        time: t0,
        psi: psi_of(basis, &d),
        diff: d,
        h2_integral: 0.0,
    }];
    for i in 1..=n {
        s1.step()?;
        s2.step()?;
        d = spec_difference(s1.spectral(), s2.spectral());
        let h2 = norms_energy::h2_norm_sq(model, &d);
        integral += 0.5 * dt * (h2 + h2_prev);
        h2_prev = h2;
        if i % cadence == 0 || i == n {
            samples.push(DiffSample {
                time: s1.time(),
                psi: psi_of(basis, &d),
                diff: d.clone(),
                h2_integral: integral,
            });
        }
    }
    Ok(DiffTrajectory { samples })
}

/// Per-pair outcome of the squeezing experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairOutcome {
    pub index: usize,
    pub psi0: f64,
    pub psi_t: f64,
    /// `φ(T)` for every requested `n` (empty when excluded).
    pub phi_t: Vec<f64>,
    pub excluded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SqueezeReport {
    pub horizon: f64,
    pub n_values: Vec<usize>,
    /// `λ_n` per requested `n` (`None` at `n = 0`).
    pub lambda_n: Vec<Option<f64>>,
    /// `max_pairs φ(T)/ψ(0)` per requested `n`; `None` without usable pairs.
    pub delta_hat: Vec<Option<f64>>,
    pub mode_count: usize,
    pub pairs: Vec<PairOutcome>,
    pub diagnostic: Option<String>,
}

impl SqueezeReport {
    pub fn excluded(&self) -> usize {
        self.pairs.iter().filter(|p| p.excluded).count()
    }

    /// Smallest requested `n` below the mode count with `δ̂ < 1`.
    pub fn first_squeezing_n(&self) -> Option<(usize, f64)> {
        self.n_values
            .iter()
            .zip(&self.delta_hat)
            .filter(|(n, _)| **n < self.mode_count)
            .find_map(|(&n, d)| d.filter(|&d| d < 1.0).map(|d| (n, d)))
    }
}

/// Evolves every pair over `horizon` and reports `δ̂(n)` for each `n`.
pub fn squeeze_experiment(
    model: &Model,
    forcing: &Forcing,
    cfg: &StepperConfig,
    basis: &SpectralBasis,
    pairs: &[(State, State)],
    horizon: f64,
    n_values: &[usize],
) -> Result<SqueezeReport> {
    for &n in n_values {
        basis.check_n(n)?;
    }
    let mut outcomes = Vec::with_capacity(pairs.len());
    for (index, (a, b)) in pairs.iter().enumerate() {
        let d0 = spec_difference(&model.to_spectral(a), &model.to_spectral(b));
        let psi0 = psi_of(basis, &d0);
        if !(psi0 >= PSI_FLOOR) {
            outcomes.push(PairOutcome {
                index,
                psi0,
                psi_t: psi0,
                phi_t: Vec::new(),
                excluded: true,
            });
            continue;
        }
        let traj = evolve_pair(model, forcing, cfg, basis, (a, b), horizon, u64::MAX)?;
        let last = traj.last();
        let tails = basis.tail_energies(&basis.coords(&last.diff));
        outcomes.push(PairOutcome {
            index,
            psi0,
            psi_t: last.psi,
            phi_t: n_values.iter().map(|&n| phi_from_tails(&tails, n)).collect(),
            excluded: false,
        });
    }
    let used: Vec<&PairOutcome> = outcomes.iter().filter(|p| !p.excluded).collect();
    let delta_hat = (0..n_values.len())
        .map(|j| {
            used.iter()
                .map(|p| p.phi_t[j] / p.psi0)
                .reduce(f64::max)
        })
        .collect();
    let diagnostic = if used.is_empty() {
        Some(format!(
            "all {} pairs excluded: initial ψ below {PSI_FLOOR:e}",
            outcomes.len()
        ))
    } else {
        None
    };
    Ok(SqueezeReport {
        horizon,
        n_values: n_values.to_vec(),
        lambda_n: n_values.iter().map(|&n| basis.lambda_n(n)).collect(),
        delta_hat,
        mode_count: basis.mode_count(),
        pairs: outcomes,
        diagnostic,
    })
}

/// Empirical Lipschitz envelope `γ̂(t)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaTable {
    pub times: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Unmonotonized ratio per pair and time (`None` for excluded pairs).
    pub per_pair: Vec<Option<Vec<f64>>>,
}

impl GammaTable {
    /// `γ̂(T)^{1/2}`, the empirical stand-in for the Lipschitz constant of
    /// the time-`T` map.
    pub fn lipschitz_surrogate(&self) -> Option<f64> {
        self.gamma.last().map(|g| g.sqrt())
    }
}

/// `γ̂(t) = max_pairs max_{s ≤ t} [ψ(s) + ∫₀ˢ ‖·‖₂²] / ψ(0)` on `times`
/// (offsets from the pairs' initial time, ascending).
pub fn estimate_gamma(
    model: &Model,
    forcing: &Forcing,
    cfg: &StepperConfig,
    basis: &SpectralBasis,
    pairs: &[(State, State)],
    times: &[f64],
) -> Result<GammaTable> {
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::Param("gamma times must be non-negative and ascending".into()));
    }
    let horizon = times.last().copied().unwrap_or(0.0);
    let mut per_pair = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let d0 = spec_difference(&model.to_spectral(a), &model.to_spectral(b));
        let psi0 = psi_of(basis, &d0);
        if !(psi0 >= PSI_FLOOR) {
            per_pair.push(None);
            continue;
        }
        let traj = evolve_pair(model, forcing, cfg, basis, (a, b), horizon, 1)?;
        let t0 = traj.samples[0].time;
        let mut running: f64 = 0.0;
        let mut it = traj.samples.iter().peekable();
        let mut vals = Vec::with_capacity(times.len());
        for &t in times {
            while let Some(s) = it.next_if(|s| s.time - t0 <= t + 1e-9) {
                running = running.max((s.psi + s.h2_integral) / psi0);
            }
            vals.push(running);
        }
        per_pair.push(Some(vals));
    }
    let mut gamma = Vec::with_capacity(times.len());
    let mut best = f64::NAN;
    for j in 0..times.len() {
        let g = per_pair
            .iter()
            .flatten()
            .map(|v| v[j])
            .fold(f64::NAN, f64::max);
        best = if best.is_nan() { g } else { best.max(g) };
        gamma.push(best);
    }
    if per_pair.iter().all(Option::is_none) && !pairs.is_empty() {
        return Err(Error::Attractor(format!(
            "all {} pairs excluded: initial ψ below {PSI_FLOOR:e}",
            pairs.len()
        )));
    }
    Ok(GammaTable {
        times: times.to_vec(),
        gamma,
        per_pair,
    })
}

/// Random smooth admissible perturbation (degrees `≤ 4`) with `|δU|₂ = size`.
pub fn perturbation(model: &Model, rng: &mut ChaCha8Rng, size: f64) -> State {
    let mut p = model.random_state(rng, PERTURBATION_MAX_DEGREE.min(model.grid.truncation()), 1.0);
    let norm = norms_energy::state_l2_sq(model, &p).sqrt();
    let f = if norm > 0.0 { size / norm } else { 0.0 };
    p.v = &p.v * f;
    p.temp *= f;
    p.q *= f;
    p
}

/// Pairs `(U, U + δU)` around each base state, with `|δU|₂ = scale·|U|₂`
/// (or `scale` for a zero base). Member `i` draws from stream `i` of the
/// seeded generator.
pub fn perturbed_pairs(model: &Model, bases: &[State], scale: f64, seed: u64) -> Vec<(State, State)> {
    bases
        .iter()
        .enumerate()
        .map(|(i, base)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let norm = norms_energy::state_l2_sq(model, base).sqrt();
            let size = if norm > 0.0 { scale * norm } else { scale };
            let p = perturbation(model, &mut rng, size);
            let other = State {
                v: &base.v + &p.v,
                temp: &base.temp + &p.temp,
                q: &base.q + &p.q,
                time: base.time,
            };
            (base.clone(), other)
        })
        .collect()
}

/// `members` states taken every `spacing` time units along the trajectory
/// that starts at `start`.
pub fn trajectory_states(
    model: &Model,
    forcing: &Forcing,
    cfg: &StepperConfig,
    start: &State,
    members: usize,
    spacing: f64,
) -> Result<Vec<State>> {
    let mut out = Vec::with_capacity(members);
    let mut s = start.clone();
    for i in 0..members {
        if i > 0 {
            s = crate::integrator::run(&s, model, forcing, cfg, s.time + spacing, &mut [], u64::MAX)?;
        }
        out.push(s.clone());
    }
    Ok(out)
}

/// `N ln(8 G² c² / (1 - δ²)) / ln(2 / (1 + δ²))`.
pub fn dimension_bound(n: usize, c: f64, delta: f64) -> Result<f64> {
    if n < 1 {
        return Err(Error::Param("N must be at least 1".into()));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Param(format!("c = {c} must be positive")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Param(format!("delta = {delta} must lie in (0, 1)")));
    }
    let g = GAUSS_CONSTANT;
    let d2 = delta * delta;
    Ok(n as f64 * (8.0 * g * g * c * c / (1.0 - d2)).ln() / (2.0 / (1.0 + d2)).ln())
}
