//! Two users interleaving requests, with every file operation recorded.

use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use lgrid_gateway::ApiClientError;
use lgrid_jobs::layout::home_dir;
use lgrid_jobs::{ExecutorConfig, FsObserver, FsOp};
use lgrid_pki::{AlgorithmId, UserId};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::world::World;
use crate::{ensure, text, Outcome};

const REQUESTS: usize = 1000;
const ECHO: &str = r#"Executable = "/bin/echo"; Arguments = "mine"; StdOutput = "out.txt"; OutputSandbox = {"out.txt"};"#;

#[derive(Default)]
struct Recorder(Mutex<Vec<(UserId, FsOp, PathBuf)>>);

impl FsObserver for Recorder {
    fn record(&self, actor: &UserId, op: FsOp, path: &Path) {
        self.0
            .lock()
            .expect("recorder")
            .push((actor.clone(), op, path.to_path_buf()));
    }
}

fn status_code(err: &ApiClientError) -> Option<u16> {
    match err {
        ApiClientError::Api { status, .. } => Some(*status),
        _ => None,
    }
}

fn random_token(rng: &mut StdRng, valid: &[String]) -> String {
    match rng.gen_range(0..3) {
        0 => (0..32)
            .map(|_| format!("{:x}", rng.gen_range(0..16u8)))
            .collect(),
        // A valid token with one character changed.
        1 => {
            let mut chars: Vec<char> = valid[rng.gen_range(0..valid.len())].chars().collect();
            let i = rng.gen_range(0..chars.len());
            chars[i] = if chars[i] == 'a' { 'b' } else { 'a' };
            chars.into_iter().collect()
        }
        _ => format!("{}x", valid[rng.gen_range(0..valid.len())]),
    }
}

pub async fn identity_isolation() -> Outcome {
    let recorder = Arc::new(Recorder::default());
    let world = World::start(
        ExecutorConfig::scripted(Duration::from_millis(20)),
        Some(recorder.clone()),
    )
    .await?;
    let users = [
        world.user("Alice", AlgorithmId::EcP256)?,
        world.user("Bob", AlgorithmId::EcP256)?,
    ];
    let mut clients = [world.login(&users[0]).await?, world.login(&users[1]).await?];
    let tokens: Vec<String> = clients
        .iter()
        .map(|c| c.token().unwrap_or_default().to_owned())
        .collect();
    let mut owned: [Vec<String>; 2] = Default::default();
    let mut rng = StdRng::seed_from_u64(0x6964_656e);

    let (mut cross, mut invalid, mut rejected) = (0, 0, 0);
    for _ in 0..REQUESTS {
        let me = rng.gen_range(0..2usize);
        let other = 1 - me;
        match rng.gen_range(0..8) {
            0 | 1 => owned[me].extend(clients[me].submit(ECHO, None).await.map_err(text)?),
            2 => {
                let mut listed: Vec<String> = clients[me]
                    .list()
                    .await
                    .map_err(text)?
                    .into_iter()
                    .map(|j| j.id)
                    .collect();
                let mut mine = owned[me].clone();
                listed.sort();
                mine.sort();
                ensure!(
                    listed == mine,
                    "user {me} lists {} jobs, owns {}",
                    listed.len(),
                    mine.len()
                );
            }
            3 if !owned[me].is_empty() => {
                let id = owned[me][rng.gen_range(0..owned[me].len())].clone();
                match clients[me].output(&id).await {
                    Ok(_) => {}
                    Err(e) => ensure!(status_code(&e) == Some(409), "own output: {e}"),
                }
            }
            4 => {
                invalid += 1;
                let token = random_token(&mut rng, &tokens);
                let mut forger = world.client(Some(&users[me]))?.with_token(token);
                match forger.list().await {
                    Err(e) if status_code(&e) == Some(401) => rejected += 1,
                    Err(e) => return Err(format!("invalid token answered with {e}")),
                    Ok(jobs) => return Err(format!("invalid token listed {} jobs", jobs.len())),
                }
            }
            _ if !owned[other].is_empty() => {
                cross += 1;
                let id = owned[other][rng.gen_range(0..owned[other].len())].clone();
                let result = match rng.gen_range(0..3) {
                    0 => clients[me].status(&id).await.map(|_| ()),
                    1 => clients[me].output(&id).await.map(|_| ()),
                    _ => clients[me].cancel(&id).await.map(|_| ()),
                };
                match result {
                    Err(e) if status_code(&e) == Some(404) => {}
                    Err(e) => return Err(format!("cross-user request answered with {e}")),
                    Ok(()) => return Err(format!("user {me} reached job {id} of user {other}")),
                }
            }
            _ => {
                clients[me].list().await.map_err(text)?;
            }
        }
    }
    ensure!(cross >= 100, "only {cross} cross-user attempts");
    ensure!(
        rejected == invalid,
        "{rejected} of {invalid} invalid tokens rejected"
    );

    let state_root = world.root.path().join("state");
    let ops = recorder.0.lock().map_err(text)?;
    let stray: Vec<_> = ops
        .iter()
        .filter(|(actor, _, path)| !path.starts_with(home_dir(&state_root, actor)))
        .collect();
    ensure!(
        stray.is_empty(),
        "{} file operations outside the actor's home, first {:?}",
        stray.len(),
        stray[0]
    );
    for (who, ids) in owned.iter().enumerate() {
        for id in ids {
            let record = world.gateway.state().jobs.record(id).map_err(text)?;
            ensure!(
                record.owner == users[who].cert.subject().user_id(),
                "job {id} changed owner"
            );
        }
    }
    Ok(format!(
        "{REQUESTS} requests, {cross} cross-user attempts all 404, {} file operations all in the actor's home, {rejected}/{invalid} invalid tokens rejected",
        ops.len()
    ))
}
