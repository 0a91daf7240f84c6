use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use trimgame::engine::run_game;
use trimgame::harness::{
    run_experiment, DynamicsSweep, ExperimentConfig, GameFile, LdpSweep, Mode, TheorySweep,
};

#[derive(Parser)]
#[command(version, about = "Repeated trimming game simulator")]
struct Cli {
    /// Override the seed given in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play one game and write its round-by-round trace.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a configured sweep and write aggregated results.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        /// Also write per-repetition values.
        #[arg(long)]
        samples_output: Option<PathBuf>,
    },
    /// Compliance thresholds and, optionally, an integrated trajectory.
    Theory(TheoryArgs),
    /// Mean-estimation error under local perturbation and manipulation.
    Ldp(LdpArgs),
}

#[derive(Args)]
struct TheoryArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.7, 0.9, 0.95])]
    d: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 0.75, 1.0])]
    p: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
    g_ac: Vec<f64>,
    /// Write an integrated trajectory here.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    m_a: f64,
    #[arg(long, default_value_t = 1.0)]
    m_c: f64,
    #[arg(long, default_value_t = 0.5)]
    k: f64,
    /// Initial `u_a,u_c,du_a,du_c`.
    #[arg(long, value_delimiter = ',', num_args = 4, default_values_t = [1.0, -1.0, 0.0, 0.0])]
    init: Vec<f64>,
    #[arg(long, default_value_t = std::f64::consts::TAU)]
    span: f64,
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct LdpArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 1.0, 2.0, 4.0])]
    epsilons: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    users: usize,
    #[arg(long, default_value_t = 0.1)]
    attacker_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    target: f64,
    #[arg(long, default_value_t = 100)]
    repetitions: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn sink(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> trimgame::Result<()> {
    match cli.command {
        Command::Simulate { config, output } => {
            let file = GameFile::from_toml(&std::fs::read_to_string(&config)?)?;
            let base = config.parent().unwrap_or(Path::new(""));
            let mut game = file.game_config(base)?;
            if let Some(s) = cli.seed {
                game.seed = s;
            }
            let trace = run_game(&game)?;
            let out = output.or(file.output.map(|p| base.join(p)));
            trace.write_csv(sink(out.as_deref())?)?;
        }
        Command::Experiment {
            config,
            output,
            samples_output,
        } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let result = run_experiment(&cfg)?;
            let out = output.or(cfg.output.as_ref().map(|p| cfg.resolve(p)));
            result.write_results(sink(out.as_deref())?)?;
            if let Some(p) = samples_output.or(cfg.samples_output.as_ref().map(|p| cfg.resolve(p)))
            {
                result.write_samples(File::create(p)?)?;
            }
        }
        Command::Theory(a) => {
            let cfg = ExperimentConfig {
                mode: Mode::Theory,
                seed: cli.seed.unwrap_or(0),
                repetitions: 1,
                theory: Some(TheorySweep {
                    d: a.d,
                    p: a.p,
                    g_ac: a.g_ac,
                    dynamics: a.trajectory.map(|path| DynamicsSweep {
                        m_a: a.m_a,
                        m_c: a.m_c,
                        k: a.k,
                        init: [a.init[0], a.init[1], a.init[2], a.init[3]],
                        span: [0.0, a.span],
                        h: a.h,
                        trajectory_output: Some(path),
                    }),
                }),
                ..Default::default()
            };
            run_experiment(&cfg)?.write_results(sink(a.output.as_deref())?)?;
        }
        Command::Ldp(a) => {
            let cfg = ExperimentConfig {
                mode: Mode::Ldp,
                seed: cli.seed.unwrap_or(0),
                repetitions: a.repetitions,
                ldp: Some(LdpSweep {
                    epsilons: a.epsilons,
                    users: a.users,
                    attacker_fraction: a.attacker_fraction,
                    target: a.target,
                }),
                ..Default::default()
            };
            run_experiment(&cfg)?.write_results(sink(a.output.as_deref())?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
