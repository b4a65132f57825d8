use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use fluctuant_cli::{execute, list_experiments, output_dir, write_artifacts, RunConfig};

/// Numerical checks of fluctuation relations.
#[derive(Parser)]
#[command(name = "fluctuant", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir` and $FLUCTUANT_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for the parallel engines.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List the available experiments.
    List {
        /// Print a JSON array instead of a table.
        #[arg(long)]
        json: bool,
    },
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::List { json } => {
            list(json);
            ExitCode::SUCCESS
        }
        Command::Run { config, out, seed, threads } => run(config, out, seed, threads),
    }
}

fn list(json: bool) {
    let entries = list_experiments();
    if json {
        println!("{}", serde_json::to_string_pretty(&entries).expect("catalog serializes"));
        return;
    }
    let width = entries.iter().map(|e| e.name.len()).max().unwrap_or(0);
    for e in &entries {
        println!("{:width$}  {}", e.name, e.relation);
        println!("{:width$}  required: {}", "", e.required_keys.join(", "));
    }
}

fn run(path: PathBuf, out: Option<PathBuf>, seed: Option<u64>, threads: Option<usize>) -> ExitCode {
    let mut config = match RunConfig::load(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(n) = threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_CONFIG);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let dir = output_dir(out.as_deref(), &config);
    let start = Instant::now();
    let (summary, tables) = match execute(&config) {
        Ok(result) => result,
        Err(e) => {
            eprintln!("error: {} failed: {e}", config.experiment.name());
            return ExitCode::from(EXIT_FAIL);
        }
    };
    if let Err(e) = write_artifacts(&dir, &summary, &tables, start.elapsed()) {
        eprintln!("error: cannot write artifacts to {}: {e}", dir.display());
        return ExitCode::from(EXIT_FAIL);
    }
    for check in &summary.checks {
        println!(
            "{} {:<28} {:.6e} {} {}",
            if check.pass { "PASS" } else { "FAIL" },
            check.name,
            check.value,
            check.relation,
            check.threshold
        );
    }
    println!("{}: {} ({})", summary.experiment, if summary.pass { "pass" } else { "fail" }, dir.display());
    if summary.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}
