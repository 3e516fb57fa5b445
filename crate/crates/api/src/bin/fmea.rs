//! `fmea serve` runs the HTTP service; `fmea evaluate` runs the benchmark.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fmea_api::{app, AppState, Config};
use fmea_core::evaluation::{run_benchmark, BenchmarkServices, DEFAULT_THRESHOLD};
use fmea_core::generation::ContextMode;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(version, about = "Document-grounded FMEA generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP API. Configuration comes from FMEA_* variables.
    Serve,
    /// Score generated failure locations against a gold case file.
    Evaluate {
        #[arg(long)]
        cases: PathBuf,
        /// Comma-separated context modes: zero-shot, chunks:<k>, long.
        #[arg(long, value_delimiter = ',', default_value = "zero-shot,chunks:3,chunks:5,long")]
        scenarios: Vec<ContextMode>,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Where to write the JSON report. The table goes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let config = Config::from_env()?;
    match cli.command {
        Command::Serve => serve(config).await,
        Command::Evaluate { cases, scenarios, threshold, out } => {
            tokio::task::spawn_blocking(move || evaluate(&config, &cases, &scenarios, threshold, out.as_deref())).await?
        }
    }
}

async fn serve(config: Config) -> anyhow::Result<()> {
    let state = AppState::from_config(&config)?;
    let listener = tokio::net::TcpListener::bind(config.listen_addr)
        .await
        .with_context(|| format!("binding {}", config.listen_addr))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn evaluate(
    config: &Config,
    cases: &std::path::Path,
    scenarios: &[ContextMode],
    threshold: f64,
    out: Option<&std::path::Path>,
) -> anyhow::Result<()> {
    let providers = config.providers()?;
    let mut services = BenchmarkServices::new(providers.text, providers.embedder);
    services.templates = providers.templates;
    let output = run_benchmark(cases, scenarios, threshold, &services)?;
    print!("{}", output.table);
    for row in &output.report.rows {
        for failed in &row.failed_cases {
            tracing::warn!(scenario = %row.scenario, case = %failed.case_id, error = %failed.error, "case failed");
        }
    }
    if let Some(path) = out {
        let json = serde_json::to_string_pretty(&output.report)?;
        std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
