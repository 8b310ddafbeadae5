use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use coops_server::{shutdown_signal, Config, Server};
use tracing_subscriber::EnvFilter;

/// Community oversight server.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// TOML or JSON config file. COOPS_* environment variables override it.
    #[arg(long, short, env = "COOPS_CONFIG")]
    config: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .init();
    let args = Args::parse();
    let config = match args.config.as_deref().map(Config::from_file).unwrap_or_else(|| Ok(Config::default())) {
        Ok(config) => config,
        Err(err) => return fail(err),
    };
    let config = match config.with_env() {
        Ok(config) => config,
        Err(err) => return fail(err),
    };
    let server = match Server::bind(&config).await {
        Ok(server) => server,
        Err(err) => return fail(err),
    };
    match server.local_addr() {
        Ok(addr) => tracing::info!(%addr, "listening"),
        Err(err) => return fail(err),
    }
    match server.run(shutdown_signal()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => fail(err),
    }
}

fn fail(err: impl std::fmt::Display) -> ExitCode {
    tracing::error!("{err}");
    ExitCode::FAILURE
}
