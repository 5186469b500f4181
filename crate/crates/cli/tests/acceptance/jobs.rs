//! Job lifecycle, expansion and sandbox archives.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::{TimeDelta, Utc};
use lgrid_jobs::layout::scan_histories;
use lgrid_jobs::sandbox::read_tree;
use lgrid_jobs::{
    expand, pack, parse_jdl, unpack, ExecutorConfig, JobManager, JobState, ProxyGrant, SandboxEntry,
};
use lgrid_pki::DistinguishedName;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::{ensure, text, Outcome};

const LIFECYCLE_JOBS: usize = 50;

/// The declared transition relation, written out edge by edge.
fn legal_edges() -> BTreeSet<(&'static str, &'static str)> {
    let mut edges = BTreeSet::from([
        ("SUBMITTED", "WAITING"),
        ("WAITING", "READY"),
        ("READY", "SCHEDULED"),
        ("SCHEDULED", "RUNNING"),
        ("RUNNING", "DONE_OK"),
        ("RUNNING", "DONE_FAILED"),
        ("DONE_OK", "CLEARED"),
        ("DONE_FAILED", "CLEARED"),
    ]);
    for from in ["SUBMITTED", "WAITING", "READY", "SCHEDULED", "RUNNING"] {
        edges.insert((from, "ABORTED"));
        edges.insert((from, "CANCELLED"));
    }
    edges
}

enum Plan {
    Echo(String),
    Fail,
    Sleep,
}

impl Plan {
    fn jdl(&self) -> String {
        match self {
            Plan::Echo(words) => format!(
                r#"Executable = "/bin/echo"; Arguments = "{words}"; StdOutput = "out.txt"; OutputSandbox = {{"out.txt"}};"#
            ),
            Plan::Fail => r#"Executable = "/bin/false"; StdError = "err.txt";"#.to_owned(),
            Plan::Sleep => r#"Executable = "/bin/sleep"; Arguments = "30";"#.to_owned(),
        }
    }
}

fn random_words(rng: &mut StdRng) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";
    let words: Vec<String> = (0..rng.gen_range(1..=5))
        .map(|_| {
            (0..rng.gen_range(1..=8))
                .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char)
                .collect()
        })
        .collect();
    words.join(" ")
}

fn run_lifecycle() -> Outcome {
    let dir = tempfile::tempdir().map_err(text)?;
    let manager = JobManager::open(
        dir.path(),
        "acceptance.test",
        ExecutorConfig::local(Duration::from_millis(5)),
    )
    .map_err(text)?;
    let owners: Vec<DistinguishedName> = ["Ada", "Grace", "Edsger"]
        .iter()
        .map(|n| format!("/C=IT/O=Acceptance/CN={n}").parse().map_err(text))
        .collect::<Result<_, String>>()?;
    let mut rng = StdRng::seed_from_u64(0x6c69_6665);
    let grant = ProxyGrant {
        fingerprint: "ac".repeat(32),
        not_after: Utc::now() + TimeDelta::hours(12),
    };

    // (id, owner, plan, tick at which a cancel is sent)
    let mut jobs = Vec::new();
    for _ in 0..LIFECYCLE_JOBS {
        let plan = match rng.gen_range(0..10) {
            0..=5 => Plan::Echo(random_words(&mut rng)),
            6..=7 => Plan::Fail,
            _ => Plan::Sleep,
        };
        let cancel_at = match plan {
            Plan::Sleep => Some(rng.gen_range(0..60)),
            Plan::Fail if rng.gen_bool(0.5) => Some(rng.gen_range(0..20)),
            _ => None,
        };
        let owner = owners.choose(&mut rng).expect("owners").clone();
        let descriptor = parse_jdl(&plan.jdl()).map_err(text)?;
        let ids = manager
            .submit(&descriptor, &owner, None, Some(&grant), Utc::now())
            .map_err(text)?;
        ensure!(ids.len() == 1, "normal job expanded to {} jobs", ids.len());
        jobs.push((ids[0].as_str().to_owned(), owner, plan, cancel_at));
        if rng.gen_bool(0.5) {
            manager.tick(Utc::now());
        }
    }

    let deadline = Instant::now() + Duration::from_secs(60);
    let mut cancels = 0;
    let mut tick = 0;
    while !manager.active_jobs().is_empty() {
        ensure!(Instant::now() < deadline, "jobs did not settle");
        for (id, owner, _, cancel_at) in &jobs {
            if *cancel_at == Some(tick) && manager.cancel(id, owner, Utc::now()).is_ok() {
                cancels += 1;
            }
        }
        if manager.tick(Utc::now()) == 0 {
            std::thread::sleep(Duration::from_millis(2));
        }
        tick += 1;
    }

    let mut echoes = 0;
    let mut failures = 0;
    for (id, owner, plan, _) in &jobs {
        let record = manager.status(id, owner).map_err(text)?;
        match plan {
            Plan::Echo(words) => {
                ensure!(
                    record.state == JobState::DoneOk,
                    "echo job {id} ended {}",
                    record.state
                );
                let fetched = manager.fetch_output(id, owner, Utc::now()).map_err(text)?;
                let entries = unpack(&fetched.archive).map_err(text)?;
                let out = entries
                    .iter()
                    .find(|e| e.path == "out.txt")
                    .ok_or("echo output missing")?;
                let want = format!("{words}\n");
                ensure!(
                    out.data == want.as_bytes(),
                    "echo job {id} wrote {:?}, expected {want:?}",
                    String::from_utf8_lossy(&out.data)
                );
                echoes += 1;
            }
            Plan::Fail => {
                ensure!(
                    matches!(record.state, JobState::DoneFailed | JobState::Cancelled),
                    "failing job {id} ended {}",
                    record.state
                );
                if record.state == JobState::DoneFailed {
                    failures += 1;
                    manager.fetch_output(id, owner, Utc::now()).map_err(text)?;
                }
            }
            Plan::Sleep => ensure!(
                record.state == JobState::Cancelled,
                "sleeping job {id} ended {}",
                record.state
            ),
        }
    }
    ensure!(
        failures > 0 && cancels > 0,
        "run exercised {failures} failures and {cancels} cancels"
    );

    let edges = legal_edges();
    let histories = scan_histories(dir.path()).map_err(text)?;
    ensure!(
        histories.len() == LIFECYCLE_JOBS,
        "{} persisted histories for {LIFECYCLE_JOBS} jobs",
        histories.len()
    );
    let mut transitions = 0;
    for (path, history, _) in &histories {
        ensure!(
            history.first().map(|h| h.state) == Some(JobState::Submitted),
            "{} does not start at SUBMITTED",
            path.display()
        );
        for pair in history.windows(2) {
            let edge = (pair[0].state.as_str(), pair[1].state.as_str());
            ensure!(
                edges.contains(&edge),
                "{}: illegal {} -> {}",
                path.display(),
                edge.0,
                edge.1
            );
            transitions += 1;
        }
    }
    Ok(format!(
        "{LIFECYCLE_JOBS} jobs ({echoes} echo, {failures} failed, {cancels} cancelled), {transitions} persisted transitions all legal"
    ))
}

pub async fn lifecycle() -> Outcome {
    tokio::task::spawn_blocking(run_lifecycle)
        .await
        .map_err(text)?
}

/// Every integer below `bound` reached from `start` in steps of `step`,
/// found by testing each candidate.
fn brute_force(start: i64, step: i64, bound: i64) -> Vec<String> {
    (start.min(0)..bound)
        .filter(|v| *v >= start && (v - start) % step == 0)
        .map(|v| v.to_string())
        .collect()
}

fn parametric_node(start: i64, step: i64, bound: i64) -> String {
    format!(
        r#"[JobType = "Parametric"; Executable = "/bin/echo"; Arguments = "value _PARAM_";
            Parameters = {bound}; ParameterStart = {start}; ParameterStep = {step};]"#
    )
}

fn arguments(jdl: &str) -> Result<Vec<String>, String> {
    let jobs = expand(&parse_jdl(jdl).map_err(text)?).map_err(text)?;
    Ok(jobs
        .iter()
        .map(|j| j.arguments().unwrap_or_default().to_owned())
        .collect())
}

pub async fn expansion() -> Outcome {
    let want: Vec<String> = brute_force(0, 2, 6)
        .into_iter()
        .map(|v| format!("value {v}"))
        .collect();
    let parametric = arguments(&parametric_node(0, 2, 6))?;
    ensure!(
        parametric.len() == 3,
        "Parameters=6/Start=0/Step=2 gave {} jobs",
        parametric.len()
    );
    ensure!(
        parametric == want,
        "expanded {parametric:?}, oracle {want:?}"
    );

    let collection = format!(
        r#"Type = "Collection"; Nodes = {{[Executable = "/bin/hostname";], {}}};"#,
        parametric_node(0, 2, 6)
    );
    let nodes = arguments(&collection)?;
    ensure!(
        nodes.len() == 4,
        "two-node collection gave {} jobs",
        nodes.len()
    );
    let mut oracle = vec![String::new()];
    oracle.extend(want);
    ensure!(
        nodes == oracle,
        "collection expanded {nodes:?}, oracle {oracle:?}"
    );

    let mut rng = StdRng::seed_from_u64(0x6578_7061);
    let sweeps = 300;
    for _ in 0..sweeps {
        let (start, step) = (rng.gen_range(-20..20), rng.gen_range(1..7));
        let bound = start + rng.gen_range(1..40);
        let got = arguments(&parametric_node(start, step, bound))?;
        let want: Vec<String> = brute_force(start, step, bound)
            .into_iter()
            .map(|v| format!("value {v}"))
            .collect();
        ensure!(
            got == want,
            "start {start} step {step} bound {bound}: {got:?} vs {want:?}"
        );
    }
    Ok(format!("6/0/2 gives 3 jobs, two-node collection gives 4, {sweeps} random ranges match the enumeration"))
}

fn random_segment(rng: &mut StdRng) -> String {
    const ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789_-";
    (0..rng.gen_range(1..=8))
        .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())] as char)
        .collect()
}

/// Files at distinct paths, none of which is a directory of another.
fn random_file_set(rng: &mut StdRng) -> Vec<SandboxEntry> {
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    for _ in 0..rng.gen_range(1..=10) {
        let depth = rng.gen_range(1..=3);
        let path = (0..depth)
            .map(|_| random_segment(rng))
            .collect::<Vec<_>>()
            .join("/");
        let clashes = files
            .keys()
            .any(|p| p.starts_with(&format!("{path}/")) || path.starts_with(&format!("{p}/")));
        if clashes || files.contains_key(&path) {
            continue;
        }
        let len = match rng.gen_range(0..4) {
            0 => 0,
            1 => rng.gen_range(1..64),
            _ => rng.gen_range(64..20_000),
        };
        files.insert(path, (0..len).map(|_| rng.gen()).collect());
    }
    files
        .into_iter()
        .map(|(path, data)| SandboxEntry::new(path, data))
        .collect()
}

fn sorted(mut entries: Vec<SandboxEntry>) -> Vec<(String, Vec<u8>)> {
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    entries.into_iter().map(|e| (e.path, e.data)).collect()
}

/// Extracts with the system tar and gzip and reads the files back.
fn extract_with_tools(archive: &[u8], scratch: &Path) -> Result<Vec<SandboxEntry>, String> {
    let file = scratch.join("archive.tar.gz");
    let out = scratch.join("extracted");
    std::fs::create_dir_all(&out).map_err(text)?;
    std::fs::write(&file, archive).map_err(text)?;
    let gzip = Command::new("gzip")
        .arg("-t")
        .arg(&file)
        .status()
        .map_err(|e| format!("gzip: {e}"))?;
    ensure!(gzip.success(), "gzip -t rejects the archive");
    let tar = Command::new("tar")
        .arg("-xzf")
        .arg(&file)
        .arg("-C")
        .arg(&out)
        .status()
        .map_err(|e| format!("tar: {e}"))?;
    ensure!(tar.success(), "tar -xzf rejects the archive");
    read_tree(&out).map_err(text)
}

/// 100 KiB of lines drawn from a small vocabulary.
fn low_entropy_input(rng: &mut StdRng) -> Vec<u8> {
    let vocabulary: Vec<String> = (0..16)
        .map(|i| format!("{i:02} {}\n", random_segment(rng).repeat(6)))
        .collect();
    let mut data = Vec::with_capacity(100 * 1024);
    while data.len() < 100 * 1024 {
        data.extend_from_slice(vocabulary.choose(rng).expect("vocabulary").as_bytes());
    }
    data.truncate(100 * 1024);
    data
}

pub async fn sandbox_fidelity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x7361_6e64);
    let scratch = tempfile::tempdir().map_err(text)?;
    let sets = 200;
    let mut bytes = 0;
    for i in 0..sets {
        let files = random_file_set(&mut rng);
        bytes += files.iter().map(|f| f.data.len()).sum::<usize>();
        let archive = pack(&files).map_err(text)?;
        let back = unpack(&archive).map_err(text)?;
        ensure!(
            sorted(back) == sorted(files.clone()),
            "set {i} changed in a pack/unpack round trip"
        );
        if i % 20 == 0 {
            let dir = scratch.path().join(format!("set{i}"));
            let extracted = extract_with_tools(&archive, &dir)?;
            ensure!(
                sorted(extracted) == sorted(files),
                "set {i} differs when extracted by tar"
            );
        }
    }

    let input = low_entropy_input(&mut rng);
    let archive = pack(&[SandboxEntry::new("log.txt", input.clone())]).map_err(text)?;
    ensure!(
        archive.len() < 10 * 1024,
        "100 KiB low-entropy input packed to {} bytes",
        archive.len()
    );
    let extracted = extract_with_tools(&archive, &scratch.path().join("low-entropy"))?;
    ensure!(
        extracted.len() == 1 && extracted[0].path == "log.txt" && extracted[0].data == input,
        "tar extracts something else from the compressed archive"
    );
    Ok(format!(
        "{sets} random file sets ({bytes} bytes) round-trip byte-identical; 100 KiB low-entropy input packs to {} bytes",
        archive.len()
    ))
}
