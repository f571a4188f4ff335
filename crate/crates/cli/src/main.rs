use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use geofuse_cli::pipeline::{cmd_fit, cmd_mesh, cmd_predict, cmd_synthesize, cmd_zeroregion};
use geofuse_cli::verify::{format_table, run_checks};
use geofuse_cli::{CliError, CliResult, PipelineConfig};

#[derive(Parser)]
#[command(name = "geofuse", version, about = "Update a simulated spatial field with point observations")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set mesh.fibonacci_n=3000`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the mesh and print its quality report.
    Mesh,
    /// Derive zero-region polygons from an ensemble.
    Zeroregion,
    /// Integrate the hyperparameters.
    Fit,
    /// Write posterior grids from a fit.
    Predict,
    /// Generate synthetic truth, simulation, ensemble and observations.
    Synthesize,
    /// Run the planar correlation checks.
    Verify,
}

fn load(cli: &Cli) -> CliResult<PipelineConfig> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    PipelineConfig::load(path, &overrides)
}

fn json(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).unwrap_or_default()
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::Mesh => println!("{}", json(&cmd_mesh(&load(cli)?)?)),
        Command::Zeroregion => println!("{}", json(&cmd_zeroregion(&load(cli)?)?)),
        Command::Fit => {
            let fit = cmd_fit(&load(cli)?)?;
            for (k, name) in fit.hyper.names.iter().enumerate() {
                println!("{name}: mean {:.6} sd {:.6}", fit.theta_mean[k], fit.theta_sd[k]);
            }
            println!("nodes {}, observations {}, dropped {}", fit.hyper.nodes.len(), fit.num_observations, fit.dropped.len());
        }
        Command::Predict => {
            let p = cmd_predict(&load(cli)?)?;
            let finite = p.sd.iter().filter(|v| v.is_finite()).count();
            println!("{} cells ({} predicted), {} functionals", p.sd.len(), finite, p.functionals.len());
        }
        Command::Synthesize => {
            let f = cmd_synthesize(&load(cli)?)?;
            println!("observations {}\nsimulation {}\nensemble {}", f.observations.display(), f.simulation.display(), f.ensemble_dir.display());
        }
        Command::Verify => {
            let checks = run_checks()?;
            print!("{}", format_table(&checks));
            let failed = checks.iter().filter(|c| !c.pass).count();
            if failed > 0 {
                return Err(CliError::Verify(format!("{failed} of {} checks failed", checks.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
