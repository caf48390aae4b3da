use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crossnet_oracles::{run_suite, Filter, SUITE_SEED};

/// Run the registered oracle cases and report measured error against tolerance.
#[derive(Parser, Debug)]
#[command(name = "oracle-suite", version)]
struct Args {
    /// Only cases carrying one of these tags (module names count as tags).
    #[arg(long, value_delimiter = ',')]
    tags: Vec<String>,
    /// Skip cases carrying any of these tags, e.g. `slow`.
    #[arg(long, value_delimiter = ',')]
    skip: Vec<String>,
    #[arg(long, default_value_t = SUITE_SEED)]
    seed: u64,
    /// Also write the report as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// List the selected cases without running them.
    #[arg(long)]
    list: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let filter = Filter {
        include: args.tags,
        exclude: args.skip,
    };
    if args.list {
        for c in crossnet_oracles::registry().iter().filter(|c| filter.selects(c)) {
            println!("{:<34} {:<18} {}", c.name, c.module, c.tags.join(","));
        }
        return ExitCode::SUCCESS;
    }
    let report = run_suite(&filter, args.seed);
    print!("{}", report.text());
    if let Some(path) = args.csv {
        if let Err(e) = std::fs::write(&path, report.csv()) {
            eprintln!("cannot write {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
