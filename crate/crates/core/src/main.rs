use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand};
use moistpe::cli_io::{self, Subcommand};
use moistpe::Error;

#[derive(Parser)]
#[command(name = "moistpe", version, about = "Moist primitive equations on the sphere: solver and attractor diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory (overrides `run.output_dir`).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Spin up and integrate, writing the time series and a final snapshot.
    Run(Common),
    /// Identity suite and energy budget on random fields; exit 1 on failure.
    Verify(Common),
    /// Eigenvalues of the three diffusion operators.
    Spectrum(Common),
    /// Two-trajectory squeezing experiment.
    Squeeze(Common),
    /// Empirical Lipschitz envelope.
    Gamma(Common),
    /// Evaluate the dimension bound.
    Dimbound {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(long = "n", default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 1e-6)]
        delta: f64,
    },
}

fn load(common: &Common) -> moistpe::Result<cli_io::Config> {
    let text = std::fs::read_to_string(&common.config)?;
    let mut cfg = cli_io::parse_config(&text)?;
    if let Some(out) = &common.out {
        cfg.run.output_dir = out.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn execute(cmd: Command) -> Result<cli_io::Outcome, Error> {
    let (sub, common) = match cmd {
        Command::Run(c) => (Subcommand::Run, c),
        Command::Verify(c) => (Subcommand::Verify, c),
        Command::Spectrum(c) => (Subcommand::Spectrum, c),
        Command::Squeeze(c) => (Subcommand::Squeeze, c),
        Command::Gamma(c) => (Subcommand::Gamma, c),
        Command::Dimbound { config: Some(path), .. } => {
            let cfg = cli_io::parse_config(&std::fs::read_to_string(path)?)?;
            let d = cfg.dimbound;
            return cli_io::dimbound(d.n, d.c, d.delta);
        }
        Command::Dimbound { config: None, n, c, delta } => return cli_io::dimbound(n, c, delta),
    };
    cli_io::dispatch(sub, &load(&common)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(o) => {
            print!("{}", o.render());
            if o.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{}", cli_io::failure_summary(&e));
            ExitCode::from(2)
        }
    }
}
