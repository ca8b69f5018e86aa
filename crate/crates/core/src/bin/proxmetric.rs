/*
Copyright 2026 The proxmetric Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use proxmetric::app::{run_command, Command};
use proxmetric::config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "proxmetric",
    version,
    about = "Learned proximal metrics for QP splitting solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML) or a preset name: toy, portfolio, quadcopter.
    #[arg(long)]
    config: String,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample parameters and solve for targets.
    GenData(Common),
    /// Train the warm-start estimator and the metric networks.
    Train(Common),
    /// Write mean relative error curves for learned and baseline metrics.
    Eval(Common),
    /// Write slack weights against constraint residuals.
    Correlate(Common),
}

fn load(common: &Common) -> proxmetric::Result<ExperimentConfig> {
    let mut cfg = if std::path::Path::new(&common.config).exists() {
        ExperimentConfig::load(&common.config)?
    } else {
        ExperimentConfig::preset(&common.config)?
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, common) = match &cli.command {
        Cmd::GenData(c) => (Command::GenData, c),
        Cmd::Train(c) => (Command::Train, c),
        Cmd::Eval(c) => (Command::Eval, c),
        Cmd::Correlate(c) => (Command::Correlate, c),
    };
    match load(common).and_then(|cfg| run_command(command, &cfg)) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
