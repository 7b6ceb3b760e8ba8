//! `symss`: steady states of collective spins with symmetry-engineered
//! auxiliary baths.

mod commands;
mod config;
mod error;
mod recipes;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{parse_overrides, ExperimentConfig};
use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(
    name = "symss",
    version,
    about = "Symmetric steady states of collective spins"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset id: d2_minimal, u1z2, tetra, tetra_axes, octa, icosa.
    #[arg(long)]
    preset: Option<String>,
    /// Parameter override `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweep points (all cores when omitted).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Steady state and metrics at a single parameter point.
    Steady {
        #[command(flatten)]
        common: Common,
    },
    /// Parameter sweep from a config file or a built-in recipe.
    Sweep {
        /// fig2, fig3, fig4b or fig4c.
        #[arg(long)]
        recipe: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Randomized check of the spin-only no-go statement.
    VerifyNogo {
        /// Spin numbers to test.
        #[arg(long = "n-spins", value_delimiter = ',', default_value = "2,3,4,5,6")]
        n_spins: Vec<usize>,
        /// Random instances per family and N.
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Checks that a jump set is closed under a symmetry group.
    ClosureCheck {
        /// Group for an ad hoc check (D2, T, O, I, U1) instead of a preset.
        #[arg(long, requires = "jumps")]
        group: Option<String>,
        /// Jump operators for an ad hoc check, e.g. `sx,sy,sz`.
        #[arg(long, value_delimiter = ',', requires = "group")]
        jumps: Vec<String>,
        /// Spin number for an ad hoc check.
        #[arg(long = "n-spins", default_value_t = 4)]
        n_spins: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Spin Wigner function of the steady state as (theta, phi, W) rows.
    Wigner {
        /// fig4a or sm-fig-s1.
        #[arg(long)]
        recipe: Option<String>,
        #[arg(long = "n-theta")]
        n_theta: Option<usize>,
        #[arg(long = "n-phi")]
        n_phi: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

/// Recipe, then config file, then command-line flags.
fn build_config(recipe: Option<&str>, c: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match recipe {
        Some(r) => recipes::recipe(r)?,
        None => ExperimentConfig::default(),
    };
    if let Some(path) = &c.config {
        cfg = cfg.merge(ExperimentConfig::load(path)?);
    }
    let flags = ExperimentConfig {
        preset: c.preset.clone(),
        params: parse_overrides(&c.set)?,
        seed: c.seed,
        out: c.out.clone(),
        ..Default::default()
    };
    Ok(cfg.merge(flags))
}

fn sweep_like(command: &str, cfg: &ExperimentConfig, jobs: Option<usize>) -> CliResult<()> {
    let header = run::header(command, cfg)?;
    let table = run::run_table(cfg, jobs)?;
    run::write_table(cfg.out.as_deref(), &header, &table)?;
    let failed = table.failures();
    eprintln!("{command}: {} points, {failed} failed", table.rows.len());
    if failed > 0 {
        return Err(CliError::Solver(format!(
            "{failed} of {} points failed; see the status column",
            table.rows.len()
        )));
    }
    Ok(())
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Steady { common } => {
            let cfg = build_config(None, &common)?;
            if !cfg.sweep.is_empty() {
                return Err(CliError::Config(
                    "steady runs a single point; use `sweep` for grids".into(),
                ));
            }
            sweep_like("steady", &cfg, common.jobs)
        }
        Command::Sweep { recipe, common } => {
            if let Some(r) = recipe.as_deref().filter(|r| recipes::is_wigner(r)) {
                return Err(CliError::Config(format!(
                    "recipe '{r}' produces Wigner grids; use `wigner`"
                )));
            }
            let cfg = build_config(recipe.as_deref(), &common)?;
            if cfg.sweep.is_empty() {
                return Err(CliError::Config("no sweep axes given".into()));
            }
            sweep_like("sweep", &cfg, common.jobs)
        }
        Command::VerifyNogo {
            n_spins,
            instances,
            seed,
            out,
        } => commands::nogo(&n_spins, instances, seed, out.as_deref()),
        Command::ClosureCheck {
            group,
            jumps,
            n_spins,
            common,
        } => {
            let cfg = build_config(None, &common)?;
            let ad_hoc = group.map(|group| commands::AdHocClosure {
                group,
                n_spins,
                jumps,
            });
            if ad_hoc.is_none() && cfg.preset.is_none() {
                return Err(CliError::Config(
                    "give --preset or --group with --jumps".into(),
                ));
            }
            commands::closure(&cfg, ad_hoc, cfg.out.as_deref())
        }
        Command::Wigner {
            recipe,
            n_theta,
            n_phi,
            common,
        } => {
            if let Some(r) = recipe.as_deref().filter(|r| !recipes::is_wigner(r)) {
                return Err(CliError::Config(format!(
                    "recipe '{r}' is a sweep; use `sweep`"
                )));
            }
            let mut cfg = build_config(recipe.as_deref(), &common)?;
            let mut grid = cfg.wigner.unwrap_or_default();
            grid.n_theta = n_theta.unwrap_or(grid.n_theta);
            grid.n_phi = n_phi.unwrap_or(grid.n_phi);
            cfg.wigner = Some(grid);
            let header = run::header("wigner", &cfg)?;
            let table = run::run_wigner(&cfg, common.jobs)?;
            run::write_table(cfg.out.as_deref(), &header, &table)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Bad arguments are configuration errors, not solver failures.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
