mod error;
mod manifest;
mod output;
mod pipeline;
mod reproduce;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use error::CliError;
use manifest::Manifest;
use output::Sink;

#[derive(Parser)]
#[command(name = "homlab", version, about = "Manifest-driven homogenization experiments")]
struct Cli {
    /// Worker threads; all available cores by default.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a manifest and run its pipeline.
    Run {
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory; overrides the manifest's `output`.
        #[arg(long, env = "HOMLAB_OUT")]
        out: Option<PathBuf>,
    },
    /// Re-run a JSON result from its embedded manifest and compare payloads.
    Reproduce {
        result: PathBuf,
        /// Replace the recorded seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Relative tolerance for numeric values; 0 demands identical output.
        #[arg(long, default_value_t = 0.0)]
        rel_tol: f64,
    },
}

fn run(manifest: &PathBuf, out: Option<PathBuf>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(manifest)
        .map_err(|e| CliError::Schema(format!("cannot read {}: {e}", manifest.display())))?;
    let m = Manifest::from_json(&text)?;
    let dir = out
        .or_else(|| m.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("homlab-out"));
    log::info!("running {} into {}", m.command.name(), dir.display());
    let mut sink = Sink::new(Some(dir), &m);
    if let Err(e) = pipeline::run(&m, &mut sink) {
        sink.mark_failed(&e)?;
        return Err(e);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    let result = match cli.command {
        Cmd::Run { manifest, out } => run(&manifest, out),
        Cmd::Reproduce { result, seed, rel_tol } => reproduce::reproduce(&result, seed, rel_tol).map(|report| {
            println!("{}", serde_json::json!({ "status": "pass", "report": report }));
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            println!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
