use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pulsetomo_cli::config::{load, CostConfig, GradcheckConfig, ReconstructConfig, ScalingConfig};
use pulsetomo_cli::output::{write_cost, write_gradcheck, write_reconstruction, write_scaling};
use pulsetomo_cli::runs::{run_cost, run_gradcheck, run_reconstruction, run_scaling};
use pulsetomo_cli::{CliError, Overrides};

#[derive(Parser)]
#[command(name = "pulsetomo", version, about = "Pure-state tomography by learned control pulses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to `out/<name>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replaces the measurement model with this many shots per experiment.
    #[arg(long, global = true)]
    shots: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a pulse for one hidden state and reconstruct it.
    Reconstruct,
    /// Minimum slice count against register size.
    Scaling,
    /// Gradient estimators against the dense oracle.
    Gradcheck,
    /// Experiment budgets of conventional and pulse-based tomography.
    Cost,
}

fn out_dir(cli: &Cli, name: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| Path::new("out").join(name))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    let config = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let overrides = Overrides {
        seed: cli.seed,
        shots: cli.shots,
    };
    match cli.command {
        Command::Reconstruct => {
            let loaded = load::<ReconstructConfig>(config)?;
            let result = run_reconstruction(&loaded, overrides)?;
            let dir = out_dir(cli, &loaded.config.name);
            write_reconstruction(&dir, &result)?;
            let s = &result.summary;
            println!(
                "{}: {:?} after {} iterations, fitness {:.4}, fidelity {:.4}, {} experiments -> {}",
                s.name,
                s.status,
                s.iterations,
                s.measured_fitness,
                s.fidelity,
                s.experiments,
                dir.display()
            );
        }
        Command::Scaling => {
            let loaded = load::<ScalingConfig>(config)?;
            let seed = cli.seed.unwrap_or(loaded.config.seed);
            let study = run_scaling(&loaded, overrides)?;
            let dir = out_dir(cli, &loaded.config.name);
            write_scaling(&dir, &loaded.hash, seed, &study)?;
            for row in &study.rows {
                match row.min_slices {
                    Some(m) => println!("n = {}: M_min = {m} (fitness {:.4})", row.qubits, row.fitness),
                    None => println!("n = {}: unreachable (best {:.4})", row.qubits, row.fitness),
                }
            }
        }
        Command::Gradcheck => {
            let loaded = load::<GradcheckConfig>(config)?;
            let seed = cli.seed.unwrap_or(loaded.config.seed);
            let report = run_gradcheck(&loaded, overrides)?;
            let dir = out_dir(cli, &loaded.config.name);
            write_gradcheck(&dir, &loaded.hash, seed, &report)?;
            for s in &report.method1 {
                println!("method 1, tau = {:e}: mean relative error {:.3e}", s.parameter, s.mean());
            }
            for s in &report.method2 {
                println!("method 2, delta = {:e}: mean relative error {:.3e}", s.parameter, s.mean());
            }
            println!("commutator identity residual {:.3e}", report.commutator_residual);
        }
        Command::Cost => {
            let loaded = load::<CostConfig>(config)?;
            let seed = cli.seed.unwrap_or(loaded.config.seed);
            let rows = run_cost(&loaded, overrides)?;
            let dir = out_dir(cli, &loaded.config.name);
            write_cost(&dir, &loaded.hash, seed, &rows)?;
            for r in &rows {
                println!(
                    "n = {}: full QST {}, method 1 {}/iteration, method 2 {}/iteration",
                    r.qubits, r.full_qst, r.method1_per_iteration, r.method2_per_iteration
                );
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
            eprintln!("pulsetomo: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
