//! The closed-form dimension bound over a grid of (N, c, delta).
//!
//!     cargo run --example dimension_bound

use moistpe::attractor::dimension_bound;

fn main() -> moistpe::Result<()> {
    let deltas = [1e-6, 0.1, 0.5, 0.9, 0.99];
    print!("{:>4} {:>6}", "N", "c");
    for d in deltas {
        print!(" {:>10}", format!("d={d}"));
    }
    println!();
    for n in [1, 10, 100] {
        for c in [1.0, 10.0, 100.0] {
            print!("{n:>4} {c:>6}");
            for d in deltas {
                print!(" {:>10.4}", dimension_bound(n, c, d)?);
            }
            println!();
        }
    }
    Ok(())
}
