use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use skorohod_core::config::{write_outputs, RunConfig};
use skorohod_core::montecarlo::CATALOG;
use skorohod_core::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "skorohod", version, about = "Simulation experiments for reflected SDEs in nonsmooth domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a configuration file.
    Run {
        config: PathBuf,
        /// Override a configuration key, e.g. `--set params.paths=500`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Worker threads; overrides `workers` in the configuration.
        #[arg(long, env = "SKOROHOD_WORKERS")]
        workers: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Validate and print the resolved configuration without running.
        #[arg(long)]
        dry_run: bool,
        /// Output directory; overrides `output` in the configuration.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// List the available experiments.
    List {
        #[arg(long)]
        json: bool,
    },
}

fn error_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::TubeTooNarrow => 3,
        ErrorClass::Numeric => 4,
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(error_code(e))
}

fn list(json: bool) {
    if json {
        println!("{}", serde_json::to_string_pretty(CATALOG).expect("catalog serializes"));
        return;
    }
    for e in CATALOG {
        let keys = if e.required.is_empty() {
            "-".to_string()
        } else {
            e.required.join(",")
        };
        println!("{:<22} required: {:<28} anchor: {}", e.name, keys, e.anchor);
    }
}

fn run(
    path: PathBuf,
    mut overrides: Vec<String>,
    workers: Option<usize>,
    seed: Option<u64>,
    dry_run: bool,
    output: Option<PathBuf>,
) -> ExitCode {
    if let Some(s) = seed {
        overrides.push(format!("seed={s}"));
    }
    let resolved = match RunConfig::load(&path, &overrides).and_then(|c| c.resolve()) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    if dry_run {
        print!("{}", resolved.to_toml());
        return ExitCode::SUCCESS;
    }
    let workers = workers.or(resolved.config.workers);
    if workers == Some(0) {
        return fail(&Error::InvalidParameter {
            key: "workers".into(),
            message: "must be at least 1".into(),
        });
    }
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(4);
        }
    };
    let out = match pool.install(|| resolved.run()) {
        Ok(o) => o,
        Err(e) => return fail(&e),
    };
    let dir = output
        .or_else(|| resolved.config.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&resolved.config.experiment));
    if let Err(e) = write_outputs(&dir, &resolved, &out) {
        eprintln!("error: cannot write outputs to {}: {e}", dir.display());
        return ExitCode::from(4);
    }
    let report = &out.report;
    for c in &report.checks {
        println!(
            "{:<4} {:<32} [{:?}] {}",
            if c.passed { "ok" } else { "FAIL" },
            c.label,
            c.basis,
            c.detail
        );
    }
    println!("{}: {} ({})", report.name, report.verdict.label(), dir.display());
    if report.verdict.is_failure() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            overrides,
            workers,
            seed,
            dry_run,
            output,
        } => run(config, overrides, workers, seed, dry_run, output),
        Command::List { json } => {
            list(json);
            ExitCode::SUCCESS
        }
    }
}
