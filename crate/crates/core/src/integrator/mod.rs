//! Implicit–explicit time stepping.
//!
//! Diffusion is implicit (a tridiagonal solve in ξ per spherical-harmonic
//! coefficient); advection, Coriolis, buoyancy and forcing are explicit.
//! After each step the barotropic divergence is removed from the velocity.


use serde::{Deserialize, Serialize};

use crate::dynamics::{Forcing, Model, SpecForcing, SpecState, State};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ImexEuler,
    ImexBdf2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepperConfig {
    pub dt: f64,
    pub scheme: Scheme,
    /// Relative residual accepted from the implicit solve.
    pub implicit_tol: f64,
    /// Refinement sweeps allowed after the direct solve.
    pub max_implicit_iters: usize,
    pub cfl_safety: f64,
    /// Returned by [`cfl_dt`] for a fluid at rest.
    pub dt_max: f64,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            scheme: Scheme::ImexBdf2,
            implicit_tol: 1e-12,
            max_implicit_iters: 3,
            cfl_safety: 0.5,
            dt_max: 0.05,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Param(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.implicit_tol > 0.0) {
            return Err(Error::Param(format!(
                "implicit_tol = {} must be positive",
                self.implicit_tol
            )));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Param(format!(
                "cfl_safety = {} must lie in (0, 1]",
                self.cfl_safety
            )));
        }
        if !(self.dt_max > 0.0) {
            return Err(Error::Param(format!("dt_max = {} must be positive", self.dt_max)));
        }
        Ok(())
    }
}

/// Time stepper owning a coefficient-space state and the multistep history.
#[derive(Clone, Debug)]
pub struct Stepper<'m> {
    model: &'m Model,
    forcing: SpecForcing,
    cfg: StepperConfig,
    dt: f64,
    t0: f64,
    state: SpecState,
    steps: u64,
    history: Option<(SpecState, SpecState)>,
}

impl<'m> Stepper<'m> {
    pub fn new(model: &'m Model, forcing: &Forcing, cfg: &StepperConfig, initial: &State) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            model,
            forcing: model.spec_forcing(forcing),
            cfg: cfg.clone(),
            dt: cfg.dt,
            t0: initial.time,
            state: model.to_spectral(initial),
            steps: 0,
            history: None,
        })
    }

    /// Stepper started from coefficient-space data.
    pub fn from_spectral(
        model: &'m Model,
        forcing: SpecForcing,
        cfg: &StepperConfig,
        initial: SpecState,
        time: f64,
    ) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            model,
            forcing,
            cfg: cfg.clone(),
            dt: cfg.dt,
            t0: time,
            state: initial,
            steps: 0,
            history: None,
        })
    }

    /// Overrides the step size (drops the multistep history).
    pub fn set_dt(&mut self, dt: f64) {
        self.t0 = self.time();
        self.steps = 0;
        self.dt = dt;
        self.history = None;
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn time(&self) -> f64 {
        self.t0 + self.steps as f64 * self.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn spectral(&self) -> &SpecState {
        &self.state
    }

    pub fn state(&self) -> State {
        self.model.from_spectral(&self.state, self.time())
    }

    pub fn model(&self) -> &Model {
        self.model
    }

    pub fn step(&mut self) -> Result<()> {
        let m = self.model;
        let dt = self.dt;
        let time = self.time();
        let tag = |e: Error| match e {
            Error::Blowup { term, time, .. } => Error::Blowup {
                term,
                time,
                step: Some(self.steps + 1),
            },
            other => other,
        };
        let n = m.explicit_spec(&self.state, &self.forcing, time).map_err(tag)?;
        let (c, rhs) = match (self.cfg.scheme, &self.history) {
            (Scheme::ImexBdf2, Some((prev, prev_n))) => {
                let mut rhs = self.state.scaled(2.0);
                rhs.axpy(-0.5, prev);
                rhs.axpy(2.0 * dt, &n);
                rhs.axpy(-dt, prev_n);
                (1.5, rhs)
            }
            _ => {
                let mut rhs = self.state.clone();
                rhs.axpy(dt, &n);
                (1.0, rhs)
            }
        };
        let mut next = m.implicit_solve(c, dt, &rhs, self.cfg.implicit_tol, self.cfg.max_implicit_iters)?;
        m.project_spec(&mut next.chi);
        if !next.is_finite() {
            return Err(Error::Blowup {
                term: "implicit update",
                time: time + dt,
                step: Some(self.steps + 1),
            });
        }
        let prev = std::mem::replace(&mut self.state, next);
        if self.cfg.scheme == Scheme::ImexBdf2 {
            self.history = Some((prev, n));
        }
        self.steps += 1;
        Ok(())
    }
}

/// One step from `state` (the multistep scheme starts with an Euler step).
pub fn step(state: &State, model: &Model, forcing: &Forcing, cfg: &StepperConfig) -> Result<State> {
    let mut s = Stepper::new(model, forcing, cfg, state)?;
    s.step()?;
    Ok(s.state())
}

/// Receives the state at the configured cadence.
pub trait Observer {
    fn observe(&mut self, step: u64, state: &State) -> Result<()>;

    /// Called once when the run ends, also when it aborts.
    fn finish(&mut self) -> Result<()> {
        Ok(())
    }
}

impl<F: FnMut(u64, &State) -> Result<()>> Observer for F {
    fn observe(&mut self, step: u64, state: &State) -> Result<()> {
        self(step, state)
    }
}

/// Number of uniform steps and the adjusted step size covering `span`.
pub fn uniform_steps(span: f64, dt: f64) -> (u64, f64) {
    if span <= 0.0 {
        return (0, dt);
    }
    let n = (span / dt - 1e-9).ceil().max(1.0) as u64;
    (n, span / n as f64)
}

/// Integrates to `t_end`, calling every observer at step 0, every `cadence`
/// steps and at the final step.
pub fn run(
    initial: &State,
    model: &Model,
    forcing: &Forcing,
    cfg: &StepperConfig,
    t_end: f64,
    observers: &mut [&mut dyn Observer],
    cadence: u64,
) -> Result<State> {
    if t_end < initial.time {
        return Err(Error::Param(format!(
            "t_end = {t_end} precedes the initial time {}",
            initial.time
        )));
    }
    let (n, dt) = uniform_steps(t_end - initial.time, cfg.dt);
    if n == 0 {
        return Ok(initial.clone());
    }
    let mut stepper = Stepper::new(model, forcing, cfg, initial)?;
    stepper.set_dt(dt);
    let result = drive(&mut stepper, n, observers, cadence.max(1));
    let mut finish = Ok(());
    for o in observers.iter_mut() {
        let r = o.finish();
        if finish.is_ok() {
            finish = r;
        }
    }
    let state = result?;
    finish?;
    Ok(state)
}

fn drive(
    stepper: &mut Stepper,
    n: u64,
    observers: &mut [&mut dyn Observer],
    cadence: u64,
) -> Result<State> {
    let initial = stepper.state();
    for o in observers.iter_mut() {
        o.observe(0, &initial)?;
    }
    for i in 1..=n {
        stepper.step()?;
        if i % cadence == 0 || i == n {
            let s = stepper.state();
            for o in observers.iter_mut() {
                o.observe(i, &s)?;
            }
        }
    }
    Ok(stepper.state())
}

/// Advective time-step limit:
/// `safety · min(Δθ/|v_θ|, sin θ Δφ/|v_φ|, h/|w|)` over all nodes, or
/// `dt_max` for a fluid at rest.
pub fn cfl_dt(state: &State, model: &Model, safety: f64, dt_max: f64) -> f64 {
    let g = &model.grid;
    let d_theta = std::f64::consts::PI / g.n_lat() as f64;
    let d_phi = 2.0 * std::f64::consts::PI / g.n_lon() as f64;
    let h = model.vgrid.spacing();
    let w = crate::column::diagnose_w(g, &model.vgrid, &state.v);
    let mut rate: f64 = 0.0;
    for k in 0..model.levels() {
        for j in 0..g.n_lat() {
            let s = g.sin_theta()[j];
            for i in 0..g.n_lon() {
                rate = rate
                    .max(state.v.theta[[k, j, i]].abs() / d_theta)
                    .max(state.v.phi[[k, j, i]].abs() / (s * d_phi))
                    .max(w[[k, j, i]].abs() / h);
            }
        }
    }
    if rate == 0.0 {
        dt_max
    } else {
        (safety / rate).min(dt_max)
    }
}
