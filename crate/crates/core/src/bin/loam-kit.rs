use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use loam_kit::config::{Config, RunMode};
use loam_kit::eval::{self, csvio, exit_code, pretty_json};
use loam_kit::map::MapBackendKind;
use loam_kit::{Error, Result};

#[derive(Parser)]
#[command(
    name = "loam-kit",
    version,
    about = "Lidar odometry runs, simulation and trajectory evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline as described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulate a preset scenario and run the pipeline on it.
    Simulate {
        /// static, line, corridor, corridor-loop, loop or figure-eight.
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 100)]
        frames: usize,
        #[arg(long, default_value = "ikd")]
        map_backend: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Meters per second along the path.
        #[arg(long)]
        speed: Option<f64>,
        /// Also write the generated dataset here, for later replay.
        #[arg(long)]
        save_dataset: Option<PathBuf>,
    },
    /// Absolute pose error of an estimated trajectory against ground truth.
    Ape {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Association window in seconds. Defaults to half the ground-truth period.
        #[arg(long)]
        max_dt: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config } => report(&Config::load(&config)?),
        Command::Simulate {
            preset,
            frames,
            map_backend,
            out,
            seed,
            speed,
            save_dataset,
        } => {
            let mut cfg = eval::preset(&preset)?;
            cfg.run.mode = RunMode::Simulate;
            cfg.run.out = out;
            cfg.run.save_dataset = save_dataset;
            cfg.sim.frames = frames;
            cfg.map.backend = map_backend.parse::<MapBackendKind>()?;
            if let Some(seed) = seed {
                cfg.sim.seed = seed;
            }
            if let Some(speed) = speed {
                cfg.sim.speed = speed;
            }
            report(&cfg)
        }
        Command::Ape { est, gt, max_dt } => {
            let est_traj = csvio::read_trajectory(&est)?;
            let gt_traj = csvio::read_trajectory(&gt)?;
            let stats = match max_dt {
                Some(dt) => eval::ape_within(&est_traj, &gt_traj, dt),
                None => eval::ape(&est_traj, &gt_traj),
            }
            .map_err(|e| Error::Dataset {
                path: est,
                msg: e.to_string(),
            })?;
            println!("{}", pretty_json(&stats));
            Ok(())
        }
    }
}

fn report(cfg: &Config) -> Result<()> {
    let out = eval::run(cfg)?;
    println!("{}", pretty_json(&out.summary));
    eprintln!("reports written to {}", cfg.run.out.display());
    Ok(())
}
