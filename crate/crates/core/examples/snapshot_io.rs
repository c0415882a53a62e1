//! Writes a state to the binary snapshot format, reads it back, and shows
//! the header and a CSV time series round trip.
//!
//!     cargo run --example snapshot_io

use moistpe::cli_io::{self, read_timeseries, write_timeseries, TimeseriesRow};
use moistpe::dynamics::Forcing;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> moistpe::Result<()> {
    let cfg = cli_io::parse_config(include_str!("../../../configs/default.toml"))?;
    let model = cfg.model()?;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let state = model.random_state(&mut rng, 8, 1.0);
    let dir = std::env::temp_dir().join("moistpe-snapshot-example");
    std::fs::create_dir_all(&dir)?;

    let path = dir.join("state.snap");
    cli_io::write_snapshot(&state, &path)?;
    let bytes = std::fs::read(&path)?;
    let (header, offset) = cli_io::decode_header(&bytes)?;
    println!("{}: {} bytes, payload at {offset}", path.display(), bytes.len());
    println!("{header:?}");
    let back = cli_io::read_snapshot(&path)?;
    println!("bit-exact round trip: {}", back == state);

    let forcing = Forcing::zeros(&model.grid, &model.vgrid);
    let rows = vec![TimeseriesRow::compute(&model, &state, &forcing)?];
    let csv = dir.join("timeseries.csv");
    write_timeseries(&rows, &csv)?;
    print!("{}", std::fs::read_to_string(&csv)?);
    println!("csv round trip: {}", read_timeseries(&csv)? == rows);
    Ok(())
}
