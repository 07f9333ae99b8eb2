//! `safebar`: run scenario files against the barrier library.
//!
//! Exit status: 0 when the command succeeds and every requested check
//! passes, 2 when a check fails or is inconclusive, 1 on usage, config or
//! runtime errors.

mod artifacts;
mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use artifacts::Artifacts;
use commands::Outcome;
use safebar::barrier::Verdict;

/// Environment variable naming the default output directory.
const OUT_ENV: &str = "SAFEBAR_OUT";

#[derive(Parser, Debug)]
#[command(name = "safebar", version, about = "Barrier-function safety checks for differential inclusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory (overrides the config and SAFEBAR_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(clap::Args, Debug)]
struct ScenarioArgs {
    /// Scenario file.
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set sampling.horizon=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed, replacing the one in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the selector bundle from the configured starts.
    Simulate(ScenarioArgs),
    /// Reachable-set clouds as CSV and RCH1 binary.
    Reach(ScenarioArgs),
    /// Barrier values over the sampling grid.
    BarrierEval(ScenarioArgs),
    /// Run the checks listed in `checks.run`.
    Check(ScenarioArgs),
    /// Smooth the configured barrier or build the smooth converse barrier.
    Smooth(ScenarioArgs),
    /// Summarize the check reports in a results directory.
    Report {
        /// Results directory; defaults to the output directory.
        dir: Option<PathBuf>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Reach(_) => "reach",
            Command::BarrierEval(_) => "barrier-eval",
            Command::Check(_) => "check",
            Command::Smooth(_) => "smooth",
            Command::Report { .. } => "report",
        }
    }
}

fn out_dir(flag: Option<PathBuf>, from_config: Option<&str>) -> PathBuf {
    flag.or_else(|| from_config.map(PathBuf::from))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("safebar-out"))
}

fn status(verdicts: &[(String, Verdict)]) -> ExitCode {
    if verdicts.iter().all(|(_, v)| *v == Verdict::Pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the worker pool")?;
    }
    let name = cli.command.name();
    let args = match cli.command {
        Command::Report { dir } => {
            let dir = dir.unwrap_or_else(|| out_dir(cli.out, None));
            if !dir.is_dir() {
                anyhow::bail!("results directory {} does not exist", dir.display());
            }
            let mut out = Artifacts::open(&dir, name);
            let s = report::emit(&dir, &mut out)?;
            out.finish()?;
            print!("{}", report::render(&s));
            return Ok(if s.rollup == report::Rollup::Pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            });
        }
        Command::Simulate(a) | Command::Reach(a) | Command::BarrierEval(a) | Command::Check(a) | Command::Smooth(a) => a,
    };
    let cfg = config::load(&args.config, &args.overrides, args.seed)?;
    let dir = out_dir(cli.out, cfg.output.as_deref());
    let mut out = Artifacts::open(&dir, name);
    out.write_config(&cfg.to_toml()?)?;
    let outcome = match name {
        "simulate" => commands::simulate(&cfg, &mut out)?,
        "reach" => commands::reach_cmd(&cfg, &mut out)?,
        "barrier-eval" => commands::barrier_eval(&cfg, &mut out)?,
        "check" => commands::check(&cfg, &mut out)?,
        _ => commands::smooth(&cfg, &mut out)?,
    };
    let manifest = out.finish()?;
    println!("{name}: wrote {} files to {}", manifest.artifacts.len(), dir.display());
    Ok(match outcome {
        Outcome::Done => ExitCode::SUCCESS,
        Outcome::Checks(v) => {
            for (check, verdict) in &v {
                println!("  {check}: {verdict:?}");
            }
            status(&v)
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
