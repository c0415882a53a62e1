//! Configuration, output formats and the subcommand drivers.

mod config;
mod snapshot;
mod timeseries;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::attractor::{self, SpectralBasis};
use crate::dynamics::{Forcing, Model, State};
use crate::integrator::{self, Observer};
use crate::norms_energy::{self, IdentityKind};
use crate::{Error, Result};

pub use config::{
    parse_config, Config, DimboundConfig, EnsembleConfig, ForcingConfig, Resolution, RunConfig,
    VerifyConfig,
};
pub use snapshot::{
    decode_header, decode_snapshot, encode_snapshot, read_snapshot, read_snapshot_with_header,
    write_snapshot, SnapshotHeader, ENCODING, FIELD_NAMES, MAGIC, VERSION,
};
pub use timeseries::{
    fmt_f64, read_timeseries, write_timeseries, TimeseriesRow, TimeseriesWriter, COLUMNS,
};

/// Configuration problem, located by key and (when known) line.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}{msg}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub msg: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Run,
    Verify,
    Spectrum,
    Squeeze,
    Gamma,
    Dimbound,
}

impl FromStr for Subcommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "run" => Self::Run,
            "verify" => Self::Verify,
            "spectrum" => Self::Spectrum,
            "squeeze" => Self::Squeeze,
            "gamma" => Self::Gamma,
            "dimbound" => Self::Dimbound,
            other => {
                return Err(Error::Param(format!(
                    "unknown subcommand {other:?} (expected run|verify|spectrum|squeeze|gamma|dimbound)"
                )))
            }
        })
    }
}

/// Result of a subcommand: `key=value` summary lines and the pass flag
/// (only `verify` can fail its checks).
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub summary: Vec<(String, String)>,
    pub artifacts: Vec<PathBuf>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            passed: true,
            summary: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    fn put(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        let mut s = format!("status={}\n", if self.passed { "ok" } else { "fail" });
        for (k, v) in &self.summary {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

/// One-line `key=value` description of an error for scripted callers.
pub fn failure_summary(e: &Error) -> String {
    let kind = match e {
        Error::Sphere(_) | Error::Column(_) | Error::Param(_) => "parameter",
        Error::Blowup { .. } => "blowup",
        Error::ImplicitSolve { .. } => "implicit-solve",
        Error::Config(_) => "config",
        Error::Snapshot(_) => "snapshot",
        Error::Attractor(_) => "attractor",
        Error::Io(_) | Error::Csv(_) => "io",
    };
    let mut s = format!("status=error kind={kind}");
    if let Error::Config(c) = e {
        if let Some(k) = &c.key {
            let _ = write!(s, " key={k}");
        }
        if let Some(l) = c.line {
            let _ = write!(s, " line={l}");
        }
    }
    let _ = write!(s, " message={:?}", e.to_string());
    s
}

/// Runs `cmd` and writes its artifacts into `cfg.run.output_dir`.
pub fn dispatch(cmd: Subcommand, cfg: &Config) -> Result<Outcome> {
    let out = Path::new(&cfg.run.output_dir);
    std::fs::create_dir_all(out)?;
    let echo = out.join("effective_config.toml");
    std::fs::write(&echo, cfg.echo())?;
    let mut o = match cmd {
        Subcommand::Run => cmd_run(cfg, out)?,
        Subcommand::Verify => cmd_verify(cfg, out)?,
        Subcommand::Spectrum => cmd_spectrum(cfg, out)?,
        Subcommand::Squeeze => cmd_squeeze(cfg, out)?,
        Subcommand::Gamma => cmd_gamma(cfg, out)?,
        Subcommand::Dimbound => cmd_dimbound(&cfg.dimbound)?,
    };
    o.artifacts.insert(0, echo);
    Ok(o)
}

/// Seeded random initial state of the configuration.
pub fn initial_state(cfg: &Config, model: &Model) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.run.seed);
    let deg = cfg.run.init_max_degree.min(model.grid.truncation());
    model.random_state(&mut rng, deg, cfg.run.init_amplitude)
}

/// State after the configured spin-up from [`initial_state`].
pub fn spun_up_state(cfg: &Config, model: &Model, forcing: &Forcing) -> Result<State> {
    let u0 = initial_state(cfg, model);
    integrator::run(&u0, model, forcing, &cfg.stepper, cfg.run.spin_up, &mut [], u64::MAX)
}

/// Perturbed pairs around states on the spun-up trajectory.
pub fn attractor_pairs(
    cfg: &Config,
    model: &Model,
    forcing: &Forcing,
    scale: f64,
) -> Result<Vec<(State, State)>> {
    let start = spun_up_state(cfg, model, forcing)?;
    let e = &cfg.ensemble;
    let bases = attractor::trajectory_states(model, forcing, &cfg.stepper, &start, e.members, e.spacing)?;
    Ok(attractor::perturbed_pairs(model, &bases, scale, cfg.run.seed))
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_run(cfg: &Config, out: &Path) -> Result<Outcome> {
    let model = cfg.model()?;
    let forcing = cfg.forcing(&model);
    let u0 = initial_state(cfg, &model);
    let ts_path = out.join("timeseries.csv");
    let mut ts = TimeseriesWriter::create(&model, &forcing, &ts_path)?;
    let spin = cfg.run.spin_up;
    let mut h2 = Vec::new();
    let mut h2_obs = |_: u64, s: &State| -> Result<()> {
        if s.time >= spin - 1e-9 {
            h2.push((s.time - spin, norms_energy::h2_norm_sq(&model, &model.to_spectral(s))));
        }
        Ok(())
    };
    let observers: &mut [&mut dyn Observer] = &mut [&mut ts, &mut h2_obs];
    let t_end = spin + cfg.run.duration;
    let last = integrator::run(&u0, &model, &forcing, &cfg.stepper, t_end, observers, cfg.run.cadence)?;
    let snap = out.join("final.snap");
    write_snapshot(&last, &snap)?;

    let mon = norms_energy::h2_integral_monitor(&h2);
    let h2_path = out.join("h2_monitor.csv");
    write_csv(
        &h2_path,
        &["tau", "integral", "c_fit"],
        (0..mon.times.len()).map(|i| vec![fmt_f64(mon.times[i]), fmt_f64(mon.integral[i]), fmt_f64(mon.c_fit[i])]),
    )?;

    let mut o = Outcome::new();
    o.put("final_time", fmt_f64(last.time));
    o.put("rows", ts.rows.len());
    o.put("final_energy", fmt_f64(norms_energy::energy(&model, &last)));
    let measured: Vec<&TimeseriesRow> = ts.rows.iter().filter(|r| r.t >= spin - 1e-9).collect();
    if let Some(first) = measured.first() {
        let t: Vec<f64> = measured.iter().map(|r| r.t).collect();
        let d: Vec<f64> = measured.iter().map(|r| r.dtu_l2).collect();
        o.put("dtU_at_spin_up_end", fmt_f64(first.dtu_l2));
        o.put("dtU_max_measured", fmt_f64(d.iter().cloned().fold(0.0, f64::max)));
        if t.len() > 2 {
            let (slope, se) = norms_energy::linear_fit_slope(&t, &d);
            o.put("dtU_slope", fmt_f64(slope));
            o.put("dtU_slope_stderr", fmt_f64(se));
        }
    }
    for tau in [1.0, 2.0, 4.0, 8.0] {
        if let Some(c) = mon.c_at(tau) {
            o.put(&format!("h2_c_fit_tau{tau}"), fmt_f64(c));
        }
    }
    let max_c = ts.rows.iter().map(|r| r.constraint_residual).fold(0.0, f64::max);
    o.put("max_constraint_residual", fmt_f64(max_c));
    o.artifacts.extend([ts_path, h2_path, snap]);
    Ok(o)
}

fn cmd_verify(cfg: &Config, out: &Path) -> Result<Outcome> {
    let model = cfg.model()?;
    let fine = model.with_vgrid(crate::column::VerticalGrid::new(2 * cfg.resolution.levels - 1)?)?;
    let zero = Forcing::zeros(&model.grid, &model.vgrid);
    let zero_fine = Forcing::zeros(&fine.grid, &fine.vgrid);
    let btol = norms_energy::budget_tolerance(&model);
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    // per check: (name, kind, tolerance, max relative at K, max relative at 2K-1)
    let mut worst: Vec<(&'static str, IdentityKind, f64, f64, f64)> = Vec::new();
    for set in 0..cfg.verify.sets {
        let (coarse, state) = identity_set(&model, cfg.run.seed, set as u64);
        let (refined, fine_state) = identity_set(&fine, cfg.run.seed, set as u64);
        let b = norms_energy::energy_budget(&model, &state, &zero)?;
        let bf = norms_energy::energy_budget(&fine, &fine_state, &zero_fine)?;
        let budget_ok = b.relative <= btol && b.de_dt <= 0.0;
        let entries = coarse
            .checks
            .iter()
            .zip(&refined.checks)
            .map(|(c, f)| (c.name, c.kind, c.residual, c.relative, c.tolerance, f.relative, c.precondition_ok, c.passed()))
            .chain(std::iter::once((
                "energy_budget",
                IdentityKind::Vertical,
                b.residual,
                b.relative,
                btol,
                bf.relative,
                true,
                budget_ok,
            )));
        for (name, kind, residual, relative, tol, fine_rel, pre, ok) in entries {
            if !ok {
                failed.push(format!("{name}#{set}"));
            }
            match worst.iter_mut().find(|w| w.0 == name) {
                Some(w) => {
                    w.3 = w.3.max(relative);
                    w.4 = w.4.max(fine_rel);
                }
                None => worst.push((name, kind, tol, relative, fine_rel)),
            }
            rows.push(vec![
                set.to_string(),
                name.to_string(),
                format!("{kind:?}").to_lowercase(),
                fmt_f64(residual),
                fmt_f64(relative),
                fmt_f64(tol),
                fmt_f64(fine_rel),
                pre.to_string(),
                ok.to_string(),
            ]);
        }
    }
    let path = out.join("verify.csv");
    write_csv(
        &path,
        &["set", "identity", "kind", "residual", "relative", "tolerance", "relative_refined", "precondition_ok", "passed"],
        rows,
    )?;
    let mut o = Outcome::new();
    o.put("sets", cfg.verify.sets);
    o.put("levels", cfg.resolution.levels);
    o.put("refined_levels", fine.levels());
    for (name, kind, tol, coarse, refined) in worst {
        o.put(&format!("{name}_max_relative"), fmt_f64(coarse));
        o.put(&format!("{name}_tolerance"), fmt_f64(tol));
        if kind == IdentityKind::Vertical {
            // order of the ensemble-maximum residual under h -> h/2
            let e = (coarse / refined).log2();
            o.put(&format!("{name}_eoc"), format!("{e:.3}"));
            if !(e >= 1.9) {
                failed.push(format!("{name}:eoc"));
            }
        }
    }
    o.passed = failed.is_empty();
    if !failed.is_empty() {
        o.put("failed", failed.join(","));
    }
    o.artifacts.push(path);
    Ok(o)
}

/// Identity report on the `set`-th random field set; the fields depend on
/// the seed only, not on the vertical resolution.
pub fn identity_set(model: &Model, seed: u64, set: u64) -> (norms_energy::IdentityReport, State) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(set);
    let lt = model.grid.truncation();
    let a = model.random_state(&mut rng, lt, 1.0);
    let b = model.random_state(&mut rng, lt, 1.0);
    let h = model.grid.random_scalar(&mut rng, lt);
    (norms_energy::check_identities(model, &a.v, &b.v, &a.temp, &a.q, &h), a)
}

fn cmd_spectrum(cfg: &Config, out: &Path) -> Result<Outcome> {
    let model = cfg.model()?;
    let basis = SpectralBasis::build(&model)?;
    let path = out.join("spectrum.csv");
    let rows = basis.operators.iter().flat_map(|op| {
        op.modes.iter().enumerate().map(move |(i, m)| {
            vec![
                op.component.name().to_string(),
                (i + 1).to_string(),
                fmt_f64(m.eigenvalue),
                m.l.to_string(),
                m.m.to_string(),
                format!("{:?}", m.part).to_lowercase(),
                format!("{:?}", m.kind).to_lowercase(),
                m.vertical.to_string(),
            ]
        })
    });
    write_csv(&path, &["component", "index", "eigenvalue", "l", "m", "part", "kind", "vertical"], rows)?;
    let mut o = Outcome::new();
    o.put("mode_count", basis.mode_count());
    for op in &basis.operators {
        let name = op.component.name();
        o.put(&format!("{name}_modes"), op.len());
        if let (Some(a), Some(b)) = (op.modes.first(), op.modes.last()) {
            o.put(&format!("{name}_lambda_min"), fmt_f64(a.eigenvalue));
            o.put(&format!("{name}_lambda_max"), fmt_f64(b.eigenvalue));
        }
    }
    o.artifacts.push(path);
    Ok(o)
}

fn cmd_squeeze(cfg: &Config, out: &Path) -> Result<Outcome> {
    let model = cfg.model()?;
    let forcing = cfg.forcing(&model);
    let basis = SpectralBasis::build(&model)?;
    let pairs = attractor_pairs(cfg, &model, &forcing, cfg.ensemble.scale)?;
    let ns: Vec<usize> = (0..=basis.mode_count()).collect();
    let rep = attractor::squeeze_experiment(&model, &forcing, &cfg.stepper, &basis, &pairs, cfg.ensemble.horizon, &ns)?;
    let path = out.join("squeeze.csv");
    let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_default();
    write_csv(
        &path,
        &["n", "lambda_n", "delta_hat"],
        (0..ns.len()).map(|i| vec![ns[i].to_string(), opt(rep.lambda_n[i]), opt(rep.delta_hat[i])]),
    )?;
    let pairs_path = out.join("squeeze_pairs.csv");
    write_csv(
        &pairs_path,
        &["pair", "psi0", "psi_T", "excluded"],
        rep.pairs.iter().map(|p| {
            vec![p.index.to_string(), fmt_f64(p.psi0), fmt_f64(p.psi_t), p.excluded.to_string()]
        }),
    )?;
    let mut o = Outcome::new();
    o.put("horizon", fmt_f64(rep.horizon));
    o.put("mode_count", rep.mode_count);
    o.put("pairs", rep.pairs.len());
    o.put("excluded", rep.excluded());
    o.put("delta_hat_n0", opt(rep.delta_hat[0]));
    match rep.first_squeezing_n() {
        Some((n, d)) => {
            o.put("first_n_below_one", n);
            o.put("delta_hat_at_first_n", fmt_f64(d));
        }
        None => o.put("first_n_below_one", "none"),
    }
    if let Some(d) = &rep.diagnostic {
        o.put("diagnostic", format!("{d:?}"));
    }
    o.artifacts.extend([path, pairs_path]);
    Ok(o)
}

fn cmd_gamma(cfg: &Config, out: &Path) -> Result<Outcome> {
    let model = cfg.model()?;
    let forcing = cfg.forcing(&model);
    let basis = SpectralBasis::build(&model)?;
    let pairs = attractor_pairs(cfg, &model, &forcing, cfg.ensemble.scale)?;
    let table = attractor::estimate_gamma(&model, &forcing, &cfg.stepper, &basis, &pairs, &cfg.ensemble.gamma_times)?;
    let path = out.join("gamma.csv");
    write_csv(
        &path,
        &["t", "gamma_hat"],
        table.times.iter().zip(&table.gamma).map(|(t, g)| vec![fmt_f64(*t), fmt_f64(*g)]),
    )?;
    let mut o = Outcome::new();
    o.put("pairs", pairs.len());
    o.put("excluded", table.per_pair.iter().filter(|p| p.is_none()).count());
    if let Some(c) = table.lipschitz_surrogate() {
        o.put("lipschitz_surrogate", fmt_f64(c));
    }
    o.artifacts.push(path);
    Ok(o)
}

fn cmd_dimbound(d: &DimboundConfig) -> Result<Outcome> {
    let v = attractor::dimension_bound(d.n, d.c, d.delta)?;
    let mut o = Outcome::new();
    o.put("N", d.n);
    o.put("c", d.c);
    o.put("delta", d.delta);
    o.put("dimension_bound", format!("{v:.6}"));
    Ok(o)
}

/// `dimbound` without a configuration file.
pub fn dimbound(n: usize, c: f64, delta: f64) -> Result<Outcome> {
    cmd_dimbound(&DimboundConfig { n, c, delta })
}
