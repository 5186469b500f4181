//! Acceptance checks. Prints one PASS or FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod credentials;
mod economics;
mod isolation;
mod jobs;
mod world;

use std::future::Future;
use std::process::ExitCode;
use std::time::{Duration, Instant};

/// Detail line on success, reason on failure.
pub type Outcome = Result<String, String>;

#[macro_export]
macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {{
        let held: bool = $cond;
        if !held {
            return Err(format!($($fmt)+));
        }
    }};
}

pub fn text<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Runs one criterion on its own task so a panic is reported as a failure.
/// `None` means the criterion was filtered out.
async fn judge<F>(filters: &[String], name: &str, limit: Option<Duration>, check: F) -> Option<bool>
where
    F: Future<Output = Outcome> + Send + 'static,
{
    if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
        return None;
    }
    let started = Instant::now();
    let outcome = match tokio::spawn(check).await {
        Ok(outcome) => outcome,
        Err(e) => Err(format!("panicked: {e}")),
    };
    let elapsed = started.elapsed();
    let outcome = match (outcome, limit) {
        (Ok(_), Some(limit)) if elapsed > limit => {
            Err(format!("took {elapsed:.1?}, limit {limit:?}"))
        }
        (outcome, _) => outcome,
    };
    match &outcome {
        Ok(detail) => println!("PASS  {name}: {detail} [{elapsed:.1?}]"),
        Err(reason) => println!("FAIL  {name}: {reason} [{elapsed:.1?}]"),
    }
    Some(outcome.is_ok())
}

fn main() -> ExitCode {
    // Positional arguments select criteria by substring; flags from the
    // test runner are ignored.
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let f = &filters;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("runtime");
    let minute = Some(Duration::from_secs(60));
    let results = runtime.block_on(async {
        [
            judge(f, "key confinement", minute, credentials::key_confinement()).await,
            judge(
                f,
                "proxy correctness",
                minute,
                credentials::proxy_correctness(),
            )
            .await,
            judge(f, "lifecycle soundness", None, jobs::lifecycle()).await,
            judge(
                f,
                "parametric/collection expansion",
                None,
                jobs::expansion(),
            )
            .await,
            judge(f, "sandbox fidelity", None, jobs::sandbox_fidelity()).await,
            judge(
                f,
                "identity isolation",
                None,
                isolation::identity_isolation(),
            )
            .await,
            judge(
                f,
                "round-trip economics",
                None,
                economics::round_trip_economics(),
            )
            .await,
        ]
    });
    let ran: Vec<bool> = results.into_iter().flatten().collect();
    let failed = ran.iter().filter(|ok| !**ok).count();
    println!("{} of {} criteria passed", ran.len() - failed, ran.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
