//! Command-line grammar.

use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub const DEFAULT_GATEWAY: &str = "localhost:8443";

#[derive(Debug, Parser)]
#[command(name = "lgrid", version, about = "Client for the L-GRID job gateway")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Gateway address, `host:port`.
    #[arg(long, global = true, env = "LGRID_GATEWAY", default_value = DEFAULT_GATEWAY)]
    pub gateway: String,
    /// PEM file of trust anchors; defaults to ~/.lgrid/ca.pem.
    #[arg(long, global = true, env = "LGRID_CA")]
    pub ca: Option<PathBuf>,
    /// Expected subject DN of the gateway's host certificate.
    #[arg(long, global = true, env = "LGRID_GATEWAY_DN")]
    pub gateway_dn: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a PKCS#12 container into usercert.pem and userkey.pem.
    Convert(ConvertArgs),
    /// Delegate a proxy to the gateway and cache the issued token.
    Delegate(DelegateArgs),
    /// Submit a JDL file with optional input files.
    Submit(SubmitArgs),
    /// Show one job or all of them.
    Status(StatusArgs),
    /// Poll a job until it reaches a final state.
    Watch(WatchArgs),
    /// Retrieve a finished job's output sandbox.
    Output(OutputArgs),
    /// Cancel a job.
    Cancel(IdArgs),
    /// Compare embedded delegation with an external repository.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub p12: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Read the passphrase from this file instead of LGRID_PASSPHRASE or a prompt.
    #[arg(long)]
    pub passphrase_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DelegateArgs {
    /// User certificate; defaults to ~/.globus/usercert.pem.
    #[arg(long)]
    pub cert: Option<PathBuf>,
    /// User private key; defaults to ~/.globus/userkey.pem.
    #[arg(long)]
    pub key: Option<PathBuf>,
    /// Proxy lifetime, e.g. `12h` or `90m`.
    #[arg(long, default_value = "12h", value_parser = humantime::parse_duration)]
    pub lifetime: Duration,
}

#[derive(Debug, Args)]
pub struct SubmitArgs {
    #[arg(long)]
    pub jdl: PathBuf,
    /// Files or directories packed into the input sandbox.
    #[arg(long, num_args = 1..)]
    pub input: Vec<PathBuf>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Selection {
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Args)]
pub struct StatusArgs {
    #[command(flatten)]
    pub selection: Selection,
}

#[derive(Debug, Args)]
pub struct IdArgs {
    #[arg(long)]
    pub id: String,
}

#[derive(Debug, Args)]
pub struct WatchArgs {
    #[arg(long)]
    pub id: String,
    #[arg(long, default_value = "1s", value_parser = humantime::parse_duration)]
    pub interval: Duration,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long)]
    pub id: String,
    #[arg(long)]
    pub dest: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchMode {
    Embedded,
    External,
    Both,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Injected round-trip time in milliseconds.
    #[arg(long, default_value_t = 250)]
    pub rtt: u64,
    #[arg(long, default_value_t = 20)]
    pub iterations: u32,
    #[arg(long, value_enum, default_value_t = BenchMode::Both)]
    pub mode: BenchMode,
    /// Write per-iteration CSV here instead of after the table.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}
