mod args;
mod commands;
mod error;
mod output;
mod verify;

use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::Caps;
use error::CliError;
use output::Printer;

fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let caps = Caps::resolve(cli.cap)?;
    let mut p = Printer::new(cli.format, out);
    let p = &mut p;
    match cli.command {
        Command::Partitions { n, class, count } => commands::partitions(p, caps, n, class.as_deref(), count),
        Command::Mobius { n, sigma, pi } => commands::mobius_cmd(p, n, &sigma, &pi),
        Command::Diagrams { pi, nonflat, class, count, sigma } => {
            commands::diagrams(p, caps, &pi, nonflat, class.as_deref(), count, sigma.as_deref())
        }
        Command::Moment(f) => commands::moment(p, caps, &f),
        Command::Cumulant(f) => commands::cumulant(p, caps, &f),
        Command::Product { factors, general, emit_spec } => commands::product(p, caps, &factors, general, emit_spec),
        Command::Clt {
            input,
            threshold,
            fourth,
            tv,
            contractions,
            circular,
            poisson_double,
            rank_sufficiency,
            covariance,
        } => commands::clt(
            p,
            &input,
            threshold,
            fourth,
            tv,
            contractions,
            circular,
            poisson_double,
            rank_sufficiency,
            covariance.as_deref(),
        ),
        Command::Simulate { factors, samples, seed, cf } => {
            commands::simulate(p, caps, &factors, samples, seed, cf.as_deref())
        }
        Command::Verify { seed, configs } => verify::run(p, seed, configs),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let result = run(cli, &mut out);
    let flushed = out.flush();
    match result.and(flushed.map_err(CliError::from)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("chaosdiag: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
