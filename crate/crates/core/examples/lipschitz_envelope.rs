//! Empirical Lipschitz envelope gamma_hat(t) at three perturbation scales.
//!
//!     cargo run --release --example lipschitz_envelope

use moistpe::attractor::{self, SpectralBasis};
use moistpe::cli_io;

fn main() -> moistpe::Result<()> {
    let mut cfg = cli_io::parse_config(include_str!("../../../configs/default.toml"))?;
    cfg.run.spin_up = 10.0;
    cfg.ensemble.members = 4;
    cfg.ensemble.gamma_times = vec![0.0, 0.1, 0.25, 0.5, 1.0, 2.0];
    let model = cfg.model()?;
    let forcing = cfg.forcing(&model);
    let basis = SpectralBasis::build(&model)?;
    let start = cli_io::spun_up_state(&cfg, &model, &forcing)?;
    let e = &cfg.ensemble;
    let bases = attractor::trajectory_states(&model, &forcing, &cfg.stepper, &start, e.members, e.spacing)?;
    print!("{:>8}", "scale");
    for t in &e.gamma_times {
        print!(" {:>10}", format!("t={t}"));
    }
    println!();
    for scale in [1e-4, 1e-5, 1e-6] {
        let pairs = attractor::perturbed_pairs(&model, &bases, scale, cfg.run.seed);
        let table = attractor::estimate_gamma(&model, &forcing, &cfg.stepper, &basis, &pairs, &e.gamma_times)?;
        print!("{scale:>8.0e}");
        for g in &table.gamma {
            print!(" {g:>10.6}");
        }
        println!("   sqrt(gamma_hat(T)) = {:.6}", table.lipschitz_surrogate().unwrap());
    }
    Ok(())
}
