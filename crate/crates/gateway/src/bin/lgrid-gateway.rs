use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use lgrid_gateway::{Gateway, GatewayConfig, GatewaySettings};

/// Serves delegation and the job API on one HTTPS port.
#[derive(Debug, Parser)]
#[command(name = "lgrid-gateway", version)]
struct Args {
    /// TOML configuration file.
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides `listen` from the configuration.
    #[arg(long)]
    listen: Option<String>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let args = Args::parse();
    let mut config = GatewayConfig::load(&args.config)?;
    config.apply_env();
    if let Some(listen) = args.listen {
        config.listen = listen;
    }
    let settings = GatewaySettings::from_config(&config)?;
    let gateway = Gateway::start(settings).await.context("starting gateway")?;
    println!("listening on {}", gateway.addr());
    tokio::select! {
        _ = gateway.wait() => {}
        _ = tokio::signal::ctrl_c() => {}
    }
    Ok(())
}
