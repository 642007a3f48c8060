use crate::commands::{self, Context, FitRequest};
use crate::config::LoadedConfig;
use crate::error::{CliError, Result};
use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "nftrap", version, about = "Heating, coupling and transmission dynamics of atoms trapped near a nanofiber")]
pub struct Cli {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `monte_carlo.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `output.directory` (default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for Monte-Carlo sampling and sweeps.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bound-state energies and mean distances.
    Spectrum,
    /// Mean coupling, remaining fraction and detuning against temperature.
    Coupling,
    /// Monte-Carlo heating per scattering event, per state and thermally averaged.
    Heating,
    /// Run the `[simulate]` recipe.
    Simulate,
    /// Fit a model to a two-column data file.
    Fit {
        /// double-exp | exp-lifetime | saturation | od-spectrum
        #[arg(long)]
        model: String,
        #[arg(long)]
        data: PathBuf,
        /// Ordinate column name; defaults to the second column.
        #[arg(long)]
        column: Option<String>,
        /// Lower end of the fit window in abscissa units.
        #[arg(long, allow_negative_numbers = true)]
        from: Option<f64>,
        /// Upper end of the fit window in abscissa units.
        #[arg(long, allow_negative_numbers = true)]
        to: Option<f64>,
    },
    /// Calibrate the coupling profile and the cooling rate.
    Calibrate,
}

pub fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    let loaded = match &cli.config {
        Some(path) => LoadedConfig::from_file(path)?,
        None => LoadedConfig::defaults(),
    };
    let mut ctx = Context::new(loaded, cli.out, cli.seed)?;
    match cli.command {
        Command::Spectrum => {
            let s = commands::spectrum(&mut ctx)?;
            log::info!("{} bound states, trap frequency {:.4e} Hz", s.states, s.trap_frequency_hz);
        }
        Command::Coupling => {
            let s = commands::coupling(&mut ctx)?;
            log::info!("beta_inf {:.5}, beta(100 uK) {:.5}", s.beta_infinite, s.beta_100uk);
        }
        Command::Heating => {
            let s = commands::heating(&mut ctx)?;
            log::info!("max relative standard error {:.3e}", s.max_relative_standard_error);
        }
        Command::Simulate => {
            commands::simulate(&mut ctx)?;
        }
        Command::Fit { model, data, column, from, to } => {
            let s = commands::fit_data(&mut ctx, &FitRequest { model, data, column, from, to })?;
            log::info!("fit {} rms {:.3e} converged {}", s.model, s.rms, s.converged);
        }
        Command::Calibrate => {
            let s = commands::calibrate(&mut ctx)?;
            log::info!("cooling rate {:.4} /s", s.cooling_rate_per_s);
        }
    }
    Ok(())
}

/// Parse `args`, run, and map the outcome to the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
