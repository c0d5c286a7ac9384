use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use homoglab::{run, Command, RunOptions};

/// Quantitative homogenization experiments.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Cli {
    /// corrector, homogenize, rho, rate, lipschitz, w1p, boundary, flatness or lemma-fuzz
    command: String,
    /// Experiment config file.
    config: PathBuf,
    /// Exit with code 3 when any pass flag fails.
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory (overrides [output] dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solve even when the grid under-resolves the oscillation.
    #[arg(long)]
    override_resolution: bool,
    /// Instance count for lemma-fuzz.
    #[arg(long)]
    count: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = std::env::var("HOMOGLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not cap threads: {e}");
        }
    }
    let command: Command = match cli.command.parse() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("homoglab: {e}");
            return ExitCode::from(1);
        }
    };
    let opts = RunOptions {
        strict: cli.strict,
        seed: cli.seed,
        out: cli.out,
        override_resolution: cli.override_resolution,
        count: cli.count,
    };
    let outcome = run(&cli.config, command, &opts);
    if let Some(err) = &outcome.error {
        eprintln!("homoglab: {err}");
    }
    if let (Some(dir), Some(art)) = (&outcome.out_dir, &outcome.artifacts) {
        for (flag, ok) in &art.pass {
            println!("{flag}: {}", if *ok { "pass" } else { "FAIL" });
        }
        println!("outputs in {}", dir.display());
    }
    ExitCode::from(outcome.code as u8)
}
