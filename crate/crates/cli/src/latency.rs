//! A TCP relay that injects latency and counts what crosses it.
//!
//! Opening a connection costs one round-trip time; every chunk is then
//! delivered half a round-trip time after it was read, in each direction,
//! preserving order. A round trip is counted each time traffic turns from
//! the client direction to the server direction.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::mpsc;
use tokio::task::JoinHandle;
use tokio::time::Instant;

/// Totals observed on a link.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkCounts {
    pub connections: u64,
    pub round_trips: u64,
    pub bytes: u64,
}

impl std::ops::Add for LinkCounts {
    type Output = LinkCounts;

    fn add(self, other: LinkCounts) -> LinkCounts {
        LinkCounts {
            connections: self.connections + other.connections,
            round_trips: self.round_trips + other.round_trips,
            bytes: self.bytes + other.bytes,
        }
    }
}

#[derive(Debug, Default)]
struct Stats {
    connections: AtomicU64,
    round_trips: AtomicU64,
    bytes: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    ToServer,
    ToClient,
}

pub struct LatencyProxy {
    addr: SocketAddr,
    stats: Arc<Stats>,
    task: JoinHandle<()>,
}

impl Drop for LatencyProxy {
    fn drop(&mut self) {
        self.task.abort();
    }
}

impl LatencyProxy {
    /// Listens on an ephemeral loopback port and relays to `upstream`.
    pub async fn start(
        upstream: impl Into<String>,
        rtt: Duration,
    ) -> std::io::Result<LatencyProxy> {
        let upstream = upstream.into();
        let listener = TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let stats = Arc::new(Stats::default());
        let counters = Arc::clone(&stats);
        let task = tokio::spawn(async move {
            let mut relays = tokio::task::JoinSet::new();
            loop {
                while relays.try_join_next().is_some() {}
                let Ok((client, _)) = listener.accept().await else {
                    continue;
                };
                counters.connections.fetch_add(1, Ordering::Relaxed);
                relays.spawn(relay(client, upstream.clone(), rtt, Arc::clone(&counters)));
            }
        });
        Ok(LatencyProxy { addr, stats, task })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn counts(&self) -> LinkCounts {
        LinkCounts {
            connections: self.stats.connections.load(Ordering::Relaxed),
            round_trips: self.stats.round_trips.load(Ordering::Relaxed),
            bytes: self.stats.bytes.load(Ordering::Relaxed),
        }
    }

    /// Returns the counts so far and starts again from zero.
    pub fn take_counts(&self) -> LinkCounts {
        LinkCounts {
            connections: self.stats.connections.swap(0, Ordering::Relaxed),
            round_trips: self.stats.round_trips.swap(0, Ordering::Relaxed),
            bytes: self.stats.bytes.swap(0, Ordering::Relaxed),
        }
    }
}

async fn relay(client: TcpStream, upstream: String, rtt: Duration, stats: Arc<Stats>) {
    tokio::time::sleep(rtt).await;
    let Ok(server) = TcpStream::connect(&upstream).await else {
        return;
    };
    let _ = client.set_nodelay(true);
    let _ = server.set_nodelay(true);
    let (client_read, client_write) = client.into_split();
    let (server_read, server_write) = server.into_split();
    let last = Arc::new(Mutex::new(None));
    let half = rtt / 2;
    let up = pump(
        client_read,
        server_write,
        half,
        Direction::ToServer,
        Arc::clone(&last),
        Arc::clone(&stats),
    );
    let down = pump(
        server_read,
        client_write,
        half,
        Direction::ToClient,
        last,
        stats,
    );
    let _ = tokio::join!(up, down);
}

async fn pump(
    mut from: OwnedReadHalf,
    mut to: OwnedWriteHalf,
    delay: Duration,
    direction: Direction,
    last: Arc<Mutex<Option<Direction>>>,
    stats: Arc<Stats>,
) {
    let (tx, mut rx) = mpsc::unbounded_channel::<(Instant, Vec<u8>)>();
    let reader = async move {
        let mut buf = vec![0u8; 64 * 1024];
        loop {
            let n = match from.read(&mut buf).await {
                Ok(0) | Err(_) => break,
                Ok(n) => n,
            };
            stats.bytes.fetch_add(n as u64, Ordering::Relaxed);
            {
                let mut last = last.lock().expect("direction lock");
                if direction == Direction::ToClient && *last == Some(Direction::ToServer) {
                    stats.round_trips.fetch_add(1, Ordering::Relaxed);
                }
                *last = Some(direction);
            }
            if tx
                .send((Instant::now() + delay, buf[..n].to_vec()))
                .is_err()
            {
                break;
            }
        }
    };
    let writer = async move {
        while let Some((due, chunk)) = rx.recv().await {
            tokio::time::sleep_until(due).await;
            if to.write_all(&chunk).await.is_err() {
                return;
            }
        }
        let _ = to.shutdown().await;
    };
    tokio::join!(reader, writer);
}
