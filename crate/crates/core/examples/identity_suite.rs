//! Integration-by-parts identities on random fields, with the observed
//! order of the vertical ones under K -> 2K-1.
//!
//!     cargo run --release --example identity_suite

use moistpe::cli_io;
use moistpe::column::VerticalGrid;
use moistpe::norms_energy::IdentityKind;

fn main() -> moistpe::Result<()> {
    let cfg = cli_io::parse_config(include_str!("../../../configs/default.toml"))?;
    let base = cfg.model()?;
    let ks = [9, 17, 33, 65];
    let models: Vec<_> = ks
        .iter()
        .map(|&k| base.with_vgrid(VerticalGrid::new(k).unwrap()))
        .collect::<moistpe::Result<_>>()?;
    let sets = 5;
    // worst relative residual per identity and resolution
    let mut table: Vec<(&str, IdentityKind, Vec<f64>)> = Vec::new();
    for (i, m) in models.iter().enumerate() {
        for set in 0..sets {
            let (rep, _) = cli_io::identity_set(m, cfg.run.seed, set);
            for c in &rep.checks {
                if !table.iter().any(|r| r.0 == c.name) {
                    table.push((c.name, c.kind, vec![0.0; ks.len()]));
                }
                let row = table.iter_mut().find(|r| r.0 == c.name).unwrap();
                row.2[i] = row.2[i].max(c.relative);
            }
        }
    }
    print!("{:<30}", "identity");
    for k in ks {
        print!(" {:>10}", format!("K={k}"));
    }
    println!(" {:>6}", "EOC");
    for (name, kind, worst) in table {
        print!("{name:<30}");
        for w in &worst {
            print!(" {w:>10.2e}");
        }
        match kind {
            IdentityKind::Vertical => println!(" {:>6.3}", (worst[2] / worst[3]).log2()),
            IdentityKind::Horizontal => println!(" {:>6}", "-"),
        }
    }
    Ok(())
}
