//! Two-trajectory squeezing test near the numerical attractor: prints
//! the ensemble ratio delta_hat(n) for a range of projector ranks.
//!
//!     cargo run --release --example squeezing

use moistpe::attractor::{self, SpectralBasis};
use moistpe::cli_io;

fn main() -> moistpe::Result<()> {
    let mut cfg = cli_io::parse_config(include_str!("../../../configs/default.toml"))?;
    cfg.run.spin_up = 10.0;
    cfg.ensemble.members = 4;
    let model = cfg.model()?;
    let forcing = cfg.forcing(&model);
    let basis = SpectralBasis::build(&model)?;
    let pairs = cli_io::attractor_pairs(&cfg, &model, &forcing, cfg.ensemble.scale)?;
    let total = basis.mode_count();
    let ns: Vec<usize> = [0, 1, 2, 5, 10, 50, 100, 500, 1000, 2000, total].into_iter().filter(|&n| n <= total).collect();
    let rep = attractor::squeeze_experiment(&model, &forcing, &cfg.stepper, &basis, &pairs, cfg.ensemble.horizon, &ns)?;
    println!("{} pairs, horizon {}, {} modes", rep.pairs.len(), rep.horizon, rep.mode_count);
    for p in &rep.pairs {
        println!("pair {}: psi(0) {:.3e} -> psi(T) {:.3e}", p.index, p.psi0, p.psi_t);
    }
    println!("{:>6} {:>12} {:>12}", "n", "lambda_n", "delta_hat");
    for i in 0..ns.len() {
        let lam = rep.lambda_n[i].map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        println!("{:>6} {:>12} {:>12.4e}", ns[i], lam, rep.delta_hat[i].unwrap_or(f64::NAN));
    }
    println!("first n with delta_hat < 1: {:?}", rep.first_squeezing_n());
    Ok(())
}
