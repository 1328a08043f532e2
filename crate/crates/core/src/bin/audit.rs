use std::path::PathBuf;
use std::process::ExitCode;

use autoais_audit::report::{self, Analysis, RunConfig};
use clap::{Parser, ValueEnum};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Metrics,
    Consistency,
    Quantify,
    Calibrate,
    Rank,
    RougeBins,
    Chunking,
    All,
}

impl Command {
    fn analyses(self) -> Vec<Analysis> {
        match self {
            Command::Metrics => vec![Analysis::Metrics],
            Command::Consistency => vec![Analysis::Consistency],
            Command::Quantify => vec![Analysis::Quantify],
            Command::Calibrate => vec![Analysis::Calibrate],
            Command::Rank => vec![Analysis::Rank],
            Command::RougeBins => vec![Analysis::RougeBins],
            Command::Chunking => vec![Analysis::Chunking],
            Command::All => Vec::new(),
        }
    }
}

/// Audit factuality evaluators against labeled claims.
#[derive(Debug, Parser)]
#[command(name = "audit", version)]
struct Args {
    /// Analysis to run; `all` runs the analyses listed in the config.
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    chunk_limit: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut config = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    let only = args.command.analyses();
    if !only.is_empty() {
        config.analyses = only;
    }
    if let Some(out) = args.out {
        config.output_dir = out;
    }
    if let Some(t) = args.threshold {
        config.threshold = t;
    }
    if let Some(a) = args.alpha {
        config.alpha = a;
    }
    if let Some(k) = args.chunk_limit {
        config.chunk_limit = k;
    }
    match report::run(&config) {
        Ok(manifest) => {
            println!(
                "wrote {} files for {} claims and {} evaluators to {}",
                manifest.outputs.len() + 1,
                manifest.claims,
                manifest.evaluators.len(),
                config.output_dir.display()
            );
            for s in &manifest.skipped {
                eprintln!("skipped {} on {}: {}", s.analysis, s.scope, s.reason);
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &report::ReportError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}
