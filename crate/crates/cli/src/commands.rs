//! Command implementations. Each writes its report to `out` and returns a
//! [`CliError`] carrying the exit code on failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::TimeDelta;
use lgrid_delegation::tls::{ClientTls, TlsIdentity};
use lgrid_delegation::ClientOptions;
use lgrid_gateway::views::{JobStatus, JobView};
use lgrid_gateway::GatewayClient;
use lgrid_jobs::sandbox::{read_tree, write_entries};
use lgrid_jobs::{pack, parse_jdl, unpack, SandboxEntry};
use lgrid_pki::{convert_credential_container, DistinguishedName, TrustStore, UserCredential};

use crate::args::{
    BenchArgs, BenchMode, ConvertArgs, DelegateArgs, GlobalArgs, OutputArgs, StatusArgs,
    SubmitArgs, WatchArgs,
};
use crate::bench::{run_bench, Mode};
use crate::cache::{self, CachedToken};
use crate::error::{CliError, CliResult};

pub const PASSPHRASE_ENV: &str = "LGRID_PASSPHRASE";

/// Where the user's files live.
#[derive(Debug, Clone)]
pub struct Context {
    pub global: GlobalArgs,
    pub home: PathBuf,
}

impl Context {
    pub fn from_env(global: GlobalArgs) -> Self {
        let home = std::env::var_os("HOME")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."));
        Context { global, home }
    }

    fn trust(&self) -> CliResult<TrustStore> {
        let path = self
            .global
            .ca
            .clone()
            .unwrap_or_else(|| cache::cache_dir(&self.home).join(cache::DEFAULT_CA_FILE));
        let pem = std::fs::read(&path).map_err(|e| {
            CliError::Failure(format!("trust anchors {}: {e}; pass --ca", path.display()))
        })?;
        TrustStore::from_pem(&pem).map_err(|e| CliError::pki(&path.display().to_string(), e))
    }

    fn expected_gateway(&self) -> CliResult<Option<DistinguishedName>> {
        self.global
            .gateway_dn
            .as_deref()
            .map(|dn| dn.parse().map_err(|e| CliError::failure("--gateway-dn", e)))
            .transpose()
    }

    fn client(&self, identity: Option<&TlsIdentity>) -> CliResult<GatewayClient> {
        let tls = ClientTls::new(&self.trust()?, identity, self.expected_gateway()?)
            .map_err(|e| CliError::failure("TLS setup", e))?;
        Ok(GatewayClient::new(self.global.gateway.clone(), tls))
    }

    /// A client carrying the cached token for this gateway.
    fn session(&self) -> CliResult<GatewayClient> {
        let cached = cache::load(&self.home, &self.global.gateway)?;
        Ok(self.client(None)?.with_token(cached.token))
    }
}

fn read_passphrase(args: &ConvertArgs) -> CliResult<String> {
    if let Some(path) = &args.passphrase_file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::failure(&path.display().to_string(), e))?;
        return Ok(text.trim_end_matches(['\r', '\n']).to_owned());
    }
    if let Ok(pass) = std::env::var(PASSPHRASE_ENV) {
        return Ok(pass);
    }
    rpassword::prompt_password("PKCS#12 passphrase: ")
        .map_err(|e| CliError::failure("reading passphrase", e))
}

pub fn convert(args: &ConvertArgs, out: &mut dyn Write) -> CliResult {
    let p12 = std::fs::read(&args.p12)
        .map_err(|e| CliError::failure(&args.p12.display().to_string(), e))?;
    let passphrase = read_passphrase(args)?;
    let credential = convert_credential_container(&p12, &passphrase)
        .map_err(|e| CliError::pki(&args.p12.display().to_string(), e))?;
    let (cert, key) = credential
        .write_pem_pair(&args.out)
        .map_err(|e| CliError::pki(&args.out.display().to_string(), e))?;
    let _ = writeln!(out, "subject: {}", credential.cert.subject());
    let _ = writeln!(out, "certificate: {}", cert.display());
    let _ = writeln!(out, "private key: {}", key.display());
    Ok(())
}

fn default_credential(home: &Path, given: &Option<PathBuf>, file: &str) -> PathBuf {
    given
        .clone()
        .unwrap_or_else(|| home.join(".globus").join(file))
}

pub async fn delegate(ctx: &Context, args: &DelegateArgs, out: &mut dyn Write) -> CliResult {
    let cert = default_credential(&ctx.home, &args.cert, lgrid_pki::USER_CERT_FILE);
    let key = default_credential(&ctx.home, &args.key, lgrid_pki::USER_KEY_FILE);
    let user = UserCredential::load(&cert, &key)
        .map_err(|e| CliError::pki(&key.display().to_string(), e))?;
    let identity = TlsIdentity {
        cert: user.cert.clone(),
        key: user.key.clone(),
    };
    let mut client = ctx.client(Some(&identity))?;
    let lifetime =
        TimeDelta::from_std(args.lifetime).map_err(|e| CliError::failure("--lifetime", e))?;
    let options = ClientOptions {
        lifetime,
        expected_server: ctx.expected_gateway()?,
        ..ClientOptions::default()
    };
    let delegated = client
        .delegate(&user, &options)
        .await
        .map_err(CliError::delegation)?;
    let cached = CachedToken {
        gateway: ctx.global.gateway.clone(),
        token: delegated.token.clone(),
        user_dn: user.cert.subject().to_string(),
        proxy_fingerprint: delegated.ack.proxy_fingerprint.clone(),
        not_after: delegated.ack.not_after,
    };
    let path = cache::store(&ctx.home, &cached)?;
    let _ = writeln!(
        out,
        "proxy fingerprint: {}",
        delegated.ack.proxy_fingerprint
    );
    let _ = writeln!(out, "valid until: {}", delegated.ack.not_after.to_rfc3339());
    let _ = writeln!(out, "token: {}", delegated.token);
    let _ = writeln!(out, "token cached in {}", path.display());
    Ok(())
}

/// Input files become entries named by their file name; directories
/// contribute their files below the directory's name.
pub fn collect_inputs(paths: &[PathBuf]) -> CliResult<Vec<SandboxEntry>> {
    let mut entries = Vec::new();
    for path in paths {
        let name = path.file_name().and_then(|n| n.to_str()).ok_or_else(|| {
            CliError::Failure(format!("{}: not a usable input name", path.display()))
        })?;
        let meta = std::fs::metadata(path)
            .map_err(|e| CliError::failure(&path.display().to_string(), e))?;
        if meta.is_dir() {
            let tree =
                read_tree(path).map_err(|e| CliError::failure(&path.display().to_string(), e))?;
            entries.extend(tree.into_iter().map(|e| SandboxEntry {
                path: format!("{name}/{}", e.path),
                data: e.data,
            }));
        } else {
            let data = std::fs::read(path)
                .map_err(|e| CliError::failure(&path.display().to_string(), e))?;
            entries.push(SandboxEntry::new(name, data));
        }
    }
    Ok(entries)
}

pub async fn submit(ctx: &Context, args: &SubmitArgs, out: &mut dyn Write) -> CliResult {
    let text = std::fs::read_to_string(&args.jdl)
        .map_err(|e| CliError::failure(&args.jdl.display().to_string(), e))?;
    parse_jdl(&text).map_err(|e| CliError::failure(&args.jdl.display().to_string(), e))?;
    let input = if args.input.is_empty() {
        None
    } else {
        Some(
            pack(&collect_inputs(&args.input)?)
                .map_err(|e| CliError::failure("packing inputs", e))?,
        )
    };
    let ids = ctx
        .session()?
        .submit(&text, input.as_deref())
        .await
        .map_err(|e| CliError::api(e, None))?;
    for id in ids {
        let _ = writeln!(out, "{id}");
    }
    Ok(())
}

fn print_status(status: &JobStatus, out: &mut dyn Write) {
    let _ = writeln!(out, "{}", status.view.id);
    let _ = writeln!(
        out,
        "  state:  {} ({})",
        status.view.state, status.view.color
    );
    let _ = writeln!(out, "  owner:  {}", status.owner_dn);
    let _ = writeln!(out, "  batch:  {}", status.view.batch);
    if let Some(code) = status.exit_code {
        let _ = writeln!(out, "  exit:   {code}");
    }
    let _ = writeln!(out, "  history:");
    for h in &status.history {
        let _ = writeln!(
            out,
            "    {}  {:<11} {}",
            h.at.to_rfc3339(),
            h.state.as_str(),
            h.reason
        );
    }
}

fn print_table(jobs: &[JobView], out: &mut dyn Write) {
    let _ = writeln!(
        out,
        "{:<10} {:<11} {:<8} LAST UPDATE",
        "JOB", "STATE", "COLOR"
    );
    for job in jobs {
        let _ = writeln!(
            out,
            "{:<10} {:<11} {:<8} {}",
            job.short_id,
            job.state.as_str(),
            job.color.as_str(),
            job.last_update.to_rfc3339()
        );
    }
}

pub async fn status(ctx: &Context, args: &StatusArgs, out: &mut dyn Write) -> CliResult {
    let mut client = ctx.session()?;
    match &args.selection.id {
        Some(id) => {
            let status = client
                .status(id)
                .await
                .map_err(|e| CliError::api(e, Some(id)))?;
            print_status(&status, out);
        }
        None => {
            let mut jobs = client.list().await.map_err(|e| CliError::api(e, None))?;
            jobs.sort_by_key(|j| j.submitted_at);
            print_table(&jobs, out);
        }
    }
    Ok(())
}

pub async fn watch(ctx: &Context, args: &WatchArgs, out: &mut dyn Write) -> CliResult {
    let mut client = ctx.session()?;
    let mut seen = None;
    loop {
        let status = client
            .status(&args.id)
            .await
            .map_err(|e| CliError::api(e, Some(&args.id)))?;
        let state = status.view.state;
        if seen != Some(state) {
            let _ = writeln!(
                out,
                "{}  {} ({})",
                status.view.last_update.to_rfc3339(),
                state,
                status.view.color
            );
            let _ = out.flush();
            seen = Some(state);
        }
        if !state.is_active() {
            return Ok(());
        }
        tokio::time::sleep(args.interval.max(Duration::from_millis(10))).await;
    }
}

pub async fn output(ctx: &Context, args: &OutputArgs, out: &mut dyn Write) -> CliResult {
    let fetched = ctx
        .session()?
        .output(&args.id)
        .await
        .map_err(|e| CliError::api(e, Some(&args.id)))?;
    let entries = unpack(&fetched.archive).map_err(|e| CliError::failure("output archive", e))?;
    std::fs::create_dir_all(&args.dest)
        .map_err(|e| CliError::failure(&args.dest.display().to_string(), e))?;
    let written = write_entries(&args.dest, &entries)
        .map_err(|e| CliError::failure(&args.dest.display().to_string(), e))?;
    for path in written {
        let _ = writeln!(out, "{}", path.display());
    }
    for name in &fetched.missing {
        eprintln!("warning: the job did not produce {name}");
    }
    Ok(())
}

pub async fn cancel(ctx: &Context, id: &str, out: &mut dyn Write) -> CliResult {
    let status = ctx
        .session()?
        .cancel(id)
        .await
        .map_err(|e| CliError::api(e, Some(id)))?;
    let _ = writeln!(
        out,
        "{}  {} ({})",
        status.view.id, status.view.state, status.view.color
    );
    Ok(())
}

pub async fn bench(args: &BenchArgs, out: &mut dyn Write) -> CliResult {
    let modes: &[Mode] = match args.mode {
        BenchMode::Embedded => &[Mode::Embedded],
        BenchMode::External => &[Mode::External],
        BenchMode::Both => &[Mode::Embedded, Mode::External],
    };
    let report = run_bench(Duration::from_millis(args.rtt), args.iterations, modes)
        .await
        .map_err(|e| CliError::failure("bench", e))?;
    let _ = write!(out, "{}", report.table());
    match &args.csv {
        Some(path) => {
            std::fs::write(path, report.to_csv())
                .map_err(|e| CliError::failure(&path.display().to_string(), e))?;
            let _ = writeln!(out, "csv written to {}", path.display());
        }
        None => {
            let _ = write!(out, "\n{}", report.to_csv());
        }
    }
    Ok(())
}
