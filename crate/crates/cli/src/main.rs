use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lmsnn_cli::{commands, CliError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "lmsnn", version, about = "Lattice-map spiking neural network experiments")]
struct Cli {
    /// TOML run configuration; omitted keys take their defaults.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set network.n_neurons=100` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    /// 625 neurons, p_low x c_min x c_max = 2 x 3 x 3 cells, 5 seeds.
    Lattice625,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one network per seed and write checkpoints and training logs.
    Train,
    /// Label neurons of trained networks with frozen weights.
    Label {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Classify the test set under every configured scheme.
    Test {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Train, label and test in one go.
    Run,
    /// Run a two-level parameter grid and aggregate mean and std per cell.
    Grid {
        #[arg(long, value_enum)]
        preset: Option<Preset>,
    },
    /// Write the tiled filter map of a checkpoint as a PGM image.
    ExportFilters {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the lattice class-assignment map of a label file as a PPM image.
    ExportAssignments {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        cell: usize,
    },
    /// Re-smooth the online accuracy estimates of every seed.
    EstimateCurve {
        #[arg(long)]
        radius: Option<usize>,
    },
    /// Print the resolved configuration.
    ShowConfig,
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut base = RunConfig::default();
    if let Command::Grid {
        preset: Some(Preset::Lattice625),
    } = cli.command
    {
        commands::lattice625_preset(&mut base);
    }
    let cfg = RunConfig::load_over(base, cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Train => {
            commands::train(&cfg)?;
        }
        Command::Label { checkpoint } => commands::label(&cfg, checkpoint.as_deref())?,
        Command::Test { checkpoint, labels } => {
            for t in commands::test(&cfg, checkpoint.as_deref(), labels.as_deref())? {
                println!("seed {} {}: {:.2}%", t.seed, t.scheme, 100.0 * t.accuracy);
            }
        }
        Command::Run => {
            for o in commands::run(&cfg)? {
                for t in o.trials {
                    println!("seed {} {}: {:.2}%", t.seed, t.scheme, 100.0 * t.accuracy);
                }
            }
        }
        Command::Grid { .. } => {
            let rows = commands::grid(&cfg)?;
            let failed: usize = rows.iter().map(|r| r.failures.len()).sum();
            println!(
                "grid finished: {} cells, {failed} failed jobs, table at {}",
                rows.len(),
                cfg.output_root().join("grid.csv").display()
            );
        }
        Command::ExportFilters { checkpoint, out } => commands::export_filters(&cfg, &checkpoint, &out)?,
        Command::ExportAssignments { labels, out, cell } => commands::export_assignments(&labels, &out, cell)?,
        Command::EstimateCurve { radius } => {
            let out = commands::estimate_curve(&cfg, radius.unwrap_or(cfg.training.smooth_radius))?;
            println!("{}", out.display());
        }
        Command::ShowConfig => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
