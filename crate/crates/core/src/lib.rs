pub mod cli_io;
pub mod attractor;
pub mod column;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod norms_energy;
pub mod sphere;

pub use error::{Error, Result};
