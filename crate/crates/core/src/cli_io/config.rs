use serde::{Deserialize, Serialize};

use super::ConfigError;
use crate::column::VerticalGrid;
use crate::dynamics::{Forcing, ForcingPreset, Model, ModelParams};
use crate::integrator::StepperConfig;
use crate::sphere::SphereGrid;
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resolution {
    #[serde(rename = "L")]
    pub truncation: usize,
    pub n_lat: usize,
    pub n_lon: usize,
    #[serde(rename = "K")]
    pub levels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingConfig {
    pub preset: ForcingPreset,
    pub amplitude: f64,
}

impl Default for ForcingConfig {
    fn default() -> Self {
        Self {
            preset: ForcingPreset::Moist,
            amplitude: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Amplitude and largest degree of the random initial state.
    pub init_amplitude: f64,
    pub init_max_degree: usize,
    pub spin_up: f64,
    /// Measured interval after the spin-up.
    pub duration: f64,
    /// Steps between output rows.
    pub cadence: u64,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            init_amplitude: 1.0,
            init_max_degree: 8,
            spin_up: 20.0,
            duration: 100.0,
            cadence: 10,
            output_dir: "output".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub members: usize,
    /// Perturbation size relative to `|U|₂` of the base state.
    pub scale: f64,
    /// Time between consecutive base states on the spun-up trajectory.
    pub spacing: f64,
    /// `T` of the squeezing ratio `φ(T)/ψ(0)`.
    pub horizon: f64,
    /// Offsets at which `γ̂` is tabulated.
    pub gamma_times: Vec<f64>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            members: 8,
            scale: 1e-5,
            spacing: 1.0,
            horizon: 1.0,
            gamma_times: vec![0.0, 0.25, 0.5, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Number of random field sets fed to the identity suite.
    pub sets: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { sets: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DimboundConfig {
    #[serde(rename = "N")]
    pub n: usize,
    pub c: f64,
    pub delta: f64,
}

impl Default for DimboundConfig {
    fn default() -> Self {
        Self {
            n: 1,
            c: 1.0,
            delta: 1e-6,
        }
    }
}

/// Complete run configuration. Only `[resolution]` is required.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub resolution: Resolution,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub stepper: StepperConfig,
    #[serde(default)]
    pub forcing: ForcingConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub dimbound: DimboundConfig,
}

impl Config {
    /// Configuration with every section at its default.
    pub fn with_resolution(resolution: Resolution) -> Self {
        Self {
            resolution,
            model: ModelParams::default(),
            stepper: StepperConfig::default(),
            forcing: ForcingConfig::default(),
            run: RunConfig::default(),
            ensemble: EnsembleConfig::default(),
            verify: VerifyConfig::default(),
            dimbound: DimboundConfig::default(),
        }
    }

    pub fn grids(&self) -> Result<(SphereGrid, VerticalGrid)> {
        let r = &self.resolution;
        Ok((
            SphereGrid::new(r.truncation, r.n_lat, r.n_lon)?,
            VerticalGrid::new(r.levels)?,
        ))
    }

    pub fn model(&self) -> Result<Model> {
        let (g, vg) = self.grids()?;
        Model::new(g, vg, self.model.clone())
    }

    pub fn forcing(&self, model: &Model) -> Forcing {
        Forcing::preset(self.forcing.preset, self.forcing.amplitude, &model.grid, &model.vgrid)
    }

    /// Effective configuration with every default written out.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> std::result::Result<Config, ConfigError> {
    let cfg: Config = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        let msg = e.message().trim().to_string();
        ConfigError {
            key: backticked(&msg),
            line,
            msg,
        }
    })?;
    validate(&cfg, text)?;
    Ok(cfg)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn backticked(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

/// Line of `key = ...` inside `[section]` (dotted headers included).
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.split(']').next()) {
            current = h.trim().to_string();
            continue;
        }
        let Some((k, _)) = line.split_once('=') else {
            continue;
        };
        if current == section && k.trim().trim_matches('"') == key {
            return Some(i + 1);
        }
    }
    None
}

fn validate(cfg: &Config, text: &str) -> std::result::Result<(), ConfigError> {
    let err = |section: &str, key: &str, msg: String| ConfigError {
        key: Some(key.to_string()),
        line: locate(text, section, key),
        msg,
    };
    let r = &cfg.resolution;
    if let Err(e) = SphereGrid::new(r.truncation, r.n_lat, r.n_lon) {
        return Err(err("resolution", "n_lat", format!("resolution: {e}")));
    }
    if let Err(e) = VerticalGrid::new(r.levels) {
        return Err(err("resolution", "K", format!("resolution: {e}")));
    }

    let m = &cfg.model;
    if !(m.p_top > 0.0 && m.p_top <= m.p_surface) {
        let line = locate(text, "model", "p0").or_else(|| locate(text, "model", "P"));
        return Err(ConfigError {
            key: Some("p0".into()),
            line,
            msg: format!(
                "model.p0 = {} and model.P = {} violate 0 < p0 <= P",
                m.p_top, m.p_surface
            ),
        });
    }
    if let Err(e) = m.validate() {
        let msg = e.to_string();
        let key = msg
            .split_whitespace()
            .nth(2)
            .unwrap_or("model")
            .to_string();
        return Err(err("model", &key, msg));
    }
    if let Err(e) = cfg.stepper.validate() {
        let msg = e.to_string();
        let key = msg.split_whitespace().nth(2).unwrap_or("stepper").to_string();
        return Err(err("stepper", &key, msg));
    }

    if !cfg.forcing.amplitude.is_finite() {
        return Err(err("forcing", "amplitude", "forcing amplitude must be finite".into()));
    }
    let run = &cfg.run;
    for (key, v) in [
        ("spin_up", run.spin_up),
        ("duration", run.duration),
        ("init_amplitude", run.init_amplitude),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(err("run", key, format!("run.{key} = {v} must be finite and non-negative")));
        }
    }
    if run.cadence == 0 {
        return Err(err("run", "cadence", "run.cadence must be at least 1".into()));
    }
    let ens = &cfg.ensemble;
    if ens.members == 0 {
        return Err(err("ensemble", "members", "ensemble.members must be at least 1".into()));
    }
    for (key, v) in [("scale", ens.scale), ("spacing", ens.spacing), ("horizon", ens.horizon)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(err("ensemble", key, format!("ensemble.{key} = {v} must be positive")));
        }
    }
    let gt = &ens.gamma_times;
    if gt.is_empty() || gt.iter().any(|t| !(*t >= 0.0 && t.is_finite())) || gt.windows(2).any(|w| w[1] < w[0]) {
        return Err(err(
            "ensemble",
            "gamma_times",
            "ensemble.gamma_times must be a non-empty ascending list of non-negative times".into(),
        ));
    }
    if cfg.verify.sets == 0 {
        return Err(err("verify", "sets", "verify.sets must be at least 1".into()));
    }
    let d = &cfg.dimbound;
    if let Err(e) = crate::attractor::dimension_bound(d.n, d.c, d.delta) {
        let key = match e.to_string() {
            s if s.contains("delta") => "delta",
            s if s.contains("N ") => "N",
            _ => "c",
        };
        return Err(err("dimbound", key, e.to_string()));
    }
    Ok(())
}
