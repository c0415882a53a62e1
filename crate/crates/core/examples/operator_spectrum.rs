//! Eigenvalues of the three diffusion operators and the convergence of the
//! lowest vertical Robin eigenvalue to the root of `m tan m = alpha`.
//!
//!     cargo run --release --example operator_spectrum

use moistpe::attractor::SpectralBasis;
use moistpe::cli_io;
use moistpe::column::{vertical_modes, VerticalBc, VerticalGrid};

fn main() -> moistpe::Result<()> {
    let cfg = cli_io::parse_config(include_str!("../../../configs/default.toml"))?;
    let model = cfg.model()?;
    let basis = SpectralBasis::build(&model)?;
    for op in &basis.operators {
        let ev = op.eigenvalues();
        println!(
            "{:<12} {:>5} modes, lowest {:?}, largest {:.3}",
            op.component.name(),
            op.len(),
            &ev[..4].iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>(),
            ev[ev.len() - 1]
        );
    }
    for n in [1, 10, 100, 1000, basis.mode_count()] {
        println!("lambda_{n} = {:.4}", basis.lambda_n(n).unwrap());
    }

    let alpha = cfg.model.alpha_s;
    let (mut lo, mut hi) = (0.0f64, std::f64::consts::FRAC_PI_2 - 1e-12);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mid * mid.tan() < alpha { lo = mid } else { hi = mid }
    }
    let exact = lo * lo;
    println!("continuous lowest Robin eigenvalue (alpha = {alpha}): {exact:.8}");
    let mut prev: Option<f64> = None;
    for k in [9, 17, 33, 65, 129] {
        let err = (vertical_modes(&VerticalGrid::new(k)?, VerticalBc::robin(alpha)?).0[0] - exact).abs();
        let eoc = prev.map(|p| format!("{:.3}", (p / err).log2())).unwrap_or_default();
        println!("K={k:>4}  error {err:.3e}  EOC {eoc}");
        prev = Some(err);
    }
    Ok(())
}
