//! Short forced run at the default resolution: spin up, integrate, print
//! the norms every time unit and the energy budget at the end.
//!
//!     cargo run --release --example forced_run

use moistpe::cli_io::{self, TimeseriesRow};
use moistpe::dynamics::State;
use moistpe::integrator;
use moistpe::norms_energy as ne;

fn main() -> moistpe::Result<()> {
    let mut cfg = cli_io::parse_config(include_str!("../../../configs/default.toml"))?;
    cfg.run.spin_up = 2.0;
    cfg.run.duration = 5.0;
    let model = cfg.model()?;
    let forcing = cfg.forcing(&model);
    let u0 = cli_io::initial_state(&cfg, &model);

    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "t", "|v|", "|T|", "|q|", "|dU/dt|");
    let mut print = |_: u64, s: &State| -> moistpe::Result<()> {
        let r = TimeseriesRow::compute(&model, s, &forcing)?;
        println!("{:>6.2} {:>12.5e} {:>12.5e} {:>12.5e} {:>12.5e}", r.t, r.l2_v, r.l2_t, r.l2_q, r.dtu_l2);
        Ok(())
    };
    let t_end = cfg.run.spin_up + cfg.run.duration;
    let steps_per_unit = (1.0 / cfg.stepper.dt).round() as u64;
    let last = integrator::run(&u0, &model, &forcing, &cfg.stepper, t_end, &mut [&mut print], steps_per_unit)?;

    let b = ne::energy_budget(&model, &last, &forcing)?;
    println!(
        "budget at t={:.1}: dE/dt {:.6e}, D {:.6e}, W {:.6e}, relative residual {:.2e} (tol {:.2e})",
        last.time,
        b.de_dt,
        b.dissipation,
        b.forcing_work,
        b.relative,
        ne::budget_tolerance(&model)
    );
    println!("constraint residual {:.2e}", model.constraint_residual(&last.v));
    Ok(())
}
