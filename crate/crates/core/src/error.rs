use thiserror::Error;

use crate::column::ColumnError;
use crate::sphere::SphereError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Sphere(#[from] SphereError),
    #[error(transparent)]
    Column(#[from] ColumnError),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("non-finite values in {term} at t = {time}{}", step.map(|s| format!(" (step {s})")).unwrap_or_default())]
    Blowup {
        term: &'static str,
        time: f64,
        step: Option<u64>,
    },
    #[error("implicit solve did not reach tolerance: residual {residual:e} after {iters} iterations")]
    ImplicitSolve { residual: f64, iters: usize },
    #[error(transparent)]
    Config(#[from] crate::cli_io::ConfigError),
    #[error("snapshot: {0}")]
    Snapshot(String),
    #[error("{0}")]
    Attractor(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
