use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use porous_lbm::profile::ProfileData;
use porous_lbm::scenario::{fit_report, Overrides, Plan, Scenario, ScenarioKind};
use porous_lbm::Error;

/// Lattice Boltzmann channel flow over porous layers.
#[derive(Debug, Parser)]
#[command(name = "porous-lbm", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Time SBB against CLI walls; without a file the default sphere-in-box is used.
    Bench {
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: OverrideArgs,
    },
    /// Extract interface parameters from a profile CSV.
    Fit {
        profile: PathBuf,
        /// Interface height; defaults to the top of the porous layer.
        #[arg(long)]
        interface_z: Option<f64>,
        /// Dynamic viscosity of the run that produced the profile.
        #[arg(long, default_value_t = 1.0 / 6.0)]
        mu: f64,
        /// Driving body force of that run.
        #[arg(long, default_value_t = 1e-6)]
        force: f64,
        /// Effective viscosity; defaults to mu over the mean porosity of the fit window.
        #[arg(long)]
        mu_eff: Option<f64>,
        /// Also write the report to DIR/fit_report.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct OverrideArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_steps: Option<u64>,
    /// Write velocity.vtk for pore-scale runs.
    #[arg(long)]
    vtk: bool,
}

impl From<OverrideArgs> for Overrides {
    fn from(a: OverrideArgs) -> Self {
        Overrides {
            seed: a.seed,
            output_dir: a.out,
            max_steps: a.max_steps,
            vtk: a.vtk,
        }
    }
}

const EXIT_CONFIG: u8 = 1;
const EXIT_INSTABILITY: u8 = 2;
const EXIT_UNCONVERGED: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("warning: steady state not reached within the step limit");
            ExitCode::from(EXIT_UNCONVERGED)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let instability = e.chain().any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Instability { .. })));
            ExitCode::from(if instability { EXIT_INSTABILITY } else { EXIT_CONFIG })
        }
    }
}

/// Returns whether every steady-state run converged.
fn execute(command: Command) -> anyhow::Result<bool> {
    match command {
        Command::Run { config, overrides } => {
            let scenario = Scenario::load(&config, &overrides.into())?;
            run(&scenario)
        }
        Command::Bench { config, overrides } => {
            let overrides = overrides.into();
            let scenario = match config {
                Some(path) => Scenario::load(&path, &overrides)?,
                None => Scenario::parse("[scenario]\nkind = bench\n", Path::new("<default>"), &overrides)?,
            };
            if !matches!(scenario.plan, Plan::Bench(_)) {
                anyhow::bail!("`bench` needs a scenario of kind {}, got {}", ScenarioKind::Bench, scenario.kind);
            }
            run(&scenario)
        }
        Command::Fit {
            profile,
            interface_z,
            mu,
            force,
            mu_eff,
            out,
        } => {
            let p = ProfileData::load_csv(&profile).with_context(|| format!("reading {}", profile.display()))?;
            let report = fit_report(&p, interface_z, mu, force, mu_eff)?;
            print!("{report}");
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("fit_report.txt"), &report)?;
            }
            Ok(true)
        }
    }
}

fn run(scenario: &Scenario) -> anyhow::Result<bool> {
    log::info!(
        "{} ({}) -> {} on {} threads",
        scenario.name,
        scenario.kind,
        scenario.output_dir.display(),
        rayon::current_num_threads()
    );
    let outcome = scenario.run()?;
    print!("{}", outcome.report);
    for f in &outcome.files {
        log::info!("wrote {}", f.display());
    }
    Ok(outcome.converged)
}
