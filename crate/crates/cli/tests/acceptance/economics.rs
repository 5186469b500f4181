//! Embedded against external delegation under injected latency.

use std::time::Duration;

use lgrid_cli::bench::{run_bench, BenchReport, Mode, Summary};

use crate::{ensure, text, Outcome};

const ITERATIONS: u32 = 20;
const MIN_GAP_SECONDS: f64 = 0.25;
const RATIO_TARGET: f64 = 2.0;
const RATIO_TOLERANCE: f64 = 0.25;

fn summaries(report: &BenchReport) -> Result<(Summary, Summary), String> {
    let embedded = report
        .summary(Mode::Embedded)
        .ok_or("no embedded samples")?;
    let external = report
        .summary(Mode::External)
        .ok_or("no external samples")?;
    Ok((embedded, external))
}

/// Means of the client-side transcript counts, as a cross-check of the
/// relay counts.
fn transcript_means(report: &BenchReport, mode: Mode) -> (f64, f64) {
    let samples: Vec<_> = report.samples.iter().filter(|s| s.mode == mode).collect();
    let n = samples.len().max(1) as f64;
    let connections = samples
        .iter()
        .map(|s| f64::from(s.transcript.connections))
        .sum::<f64>()
        / n;
    let round_trips = samples
        .iter()
        .map(|s| f64::from(s.transcript.round_trips))
        .sum::<f64>()
        / n;
    (connections, round_trips)
}

pub async fn round_trip_economics() -> Outcome {
    let modes = [Mode::Embedded, Mode::External];
    // Both latencies run side by side; their cost is waiting, not CPU.
    let (near, far) = tokio::join!(
        run_bench(Duration::from_millis(250), ITERATIONS, &modes),
        run_bench(Duration::from_millis(500), ITERATIONS, &modes)
    );
    let (near, far) = (near.map_err(text)?, far.map_err(text)?);

    let (embedded, external) = summaries(&near)?;
    ensure!(
        embedded.n == ITERATIONS as usize && external.n == ITERATIONS as usize,
        "missing iterations"
    );
    let gap = near.gap().ok_or("no gap")?;
    ensure!(
        gap >= MIN_GAP_SECONDS,
        "gap at 250 ms is {gap:.3} s, below {MIN_GAP_SECONDS} s"
    );
    ensure!(
        embedded.connections < external.connections,
        "embedded opens {:.1} connections, external {:.1}",
        embedded.connections,
        external.connections
    );
    ensure!(
        embedded.round_trips < external.round_trips,
        "embedded takes {:.1} round trips, external {:.1}",
        embedded.round_trips,
        external.round_trips
    );
    let (t_emb_conn, t_emb_rt) = transcript_means(&near, Mode::Embedded);
    let (t_ext_conn, t_ext_rt) = transcript_means(&near, Mode::External);
    ensure!(
        t_emb_conn < t_ext_conn && t_emb_rt < t_ext_rt,
        "transcripts disagree: embedded {t_emb_conn:.1} conn / {t_emb_rt:.1} rt, external {t_ext_conn:.1} conn / {t_ext_rt:.1} rt"
    );

    let far_gap = far.gap().ok_or("no gap at 500 ms")?;
    let ratio = far_gap / gap;
    ensure!(
        (ratio - RATIO_TARGET).abs() <= RATIO_TARGET * RATIO_TOLERANCE,
        "gap ratio 500/250 ms is {ratio:.2} ({far_gap:.3} s / {gap:.3} s), outside {RATIO_TARGET} ± 25%"
    );

    Ok(format!(
        "gap {gap:.3} s at 250 ms and {far_gap:.3} s at 500 ms (ratio {ratio:.2}); embedded {:.1} conn / {:.1} rt vs external {:.1} conn / {:.1} rt; means {:.3} s vs {:.3} s",
        embedded.connections, embedded.round_trips, external.connections, external.round_trips, embedded.mean, external.mean
    ))
}
