use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use lgrid_delegation::myproxy::{MyProxyServer, DEFAULT_MYPROXY_PORT};
use lgrid_delegation::tls::{server_acceptor, TlsIdentity};
use lgrid_pki::{Certificate, KeyPair, ProxyOptions, TrustStore};

/// A stand-alone credential repository speaking the put/get protocol.
#[derive(Debug, Parser)]
#[command(name = "lgrid-myproxy", version)]
struct Args {
    #[arg(long, default_value_t = format!("0.0.0.0:{DEFAULT_MYPROXY_PORT}"))]
    listen: String,
    /// Host certificate (PEM).
    #[arg(long)]
    cert: PathBuf,
    /// Host key (PEM).
    #[arg(long)]
    key: PathBuf,
    /// Trust anchors (PEM); repeatable.
    #[arg(long, required = true)]
    trust: Vec<PathBuf>,
    /// Issue proxies without the proxy-certificate-information extension.
    #[arg(long)]
    legacy: bool,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let args = Args::parse();
    let read = |p: &PathBuf| std::fs::read(p).with_context(|| format!("reading {}", p.display()));
    let cert = Certificate::from_pem(&read(&args.cert)?)?;
    let key = KeyPair::from_pem(&read(&args.key)?)?;
    let mut trust = TrustStore::new();
    for path in &args.trust {
        for anchor in TrustStore::from_pem(&read(path)?)?.anchors() {
            trust.add_trusted(anchor.clone());
        }
    }
    let acceptor = server_acceptor(&TlsIdentity { cert, key }, &trust)?;
    let listener = tokio::net::TcpListener::bind(&args.listen).await?;
    println!("listening on {}", listener.local_addr()?);
    let server = MyProxyServer::new(
        trust,
        ProxyOptions {
            legacy_proxy: args.legacy,
        },
    );
    tokio::select! {
        result = server.serve(listener, acceptor) => result?,
        _ = tokio::signal::ctrl_c() => {}
    }
    Ok(())
}
