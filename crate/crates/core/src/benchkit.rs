//! Event classification latency versus event length, with averaging and
//! with the fusion network.
//!
//! Per repetition the frame classifier runs once and both fusion paths run
//! on its output, so `t_avg = t_frames + t_average` and
//! `t_fusion = t_frames + t_network` share the frame-classification sample.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::csv::{format_g, push_row};
use crate::error::{Error, Result};
use crate::eventfuse::{fuse_by_average, fuse_by_network};
use crate::framecls::frame_input;
use crate::nnkit::{softmax_confidence, Model};
use crate::rng::SeedStream;
use crate::sonargen::{render_event, EnvironmentProfile};
use crate::types::{ClassLabel, ConfidenceSequence, Event, MAX_EVENT_FRAMES, MIN_EVENT_FRAMES};

pub const DEFAULT_LENGTHS: [usize; 6] = [4, 50, 100, 150, 200, 300];
pub const MIN_REPETITIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub length: usize,
    pub t_avg_ms: f64,
    pub t_fusion_ms: f64,
    pub overhead_ratio: f64,
}

/// Mean after dropping one minimum and one maximum sample.
pub fn trimmed_mean(samples: &[f64]) -> Result<f64> {
    if samples.len() < 3 {
        return Err(Error::InvalidArgument(format!("trimmed mean needs at least 3 samples, got {}", samples.len())));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let kept = &s[1..s.len() - 1];
    Ok(kept.iter().sum::<f64>() / kept.len() as f64)
}

fn classify_sequential(model: &Model, event: &Event) -> Result<ConfidenceSequence> {
    let mut vectors = Vec::with_capacity(event.len());
    for f in event.frames() {
        vectors.push(softmax_confidence(model.forward(&frame_input(f)?)?.data())?);
    }
    Ok(ConfidenceSequence { event_id: event.id, vectors })
}

/// `(frames, average, network)` wall-clock milliseconds of one pass.
fn time_once(frame_model: &Model, fusion_model: &Model, event: &Event) -> Result<(f64, f64, f64)> {
    let t0 = Instant::now();
    let seq = classify_sequential(frame_model, event)?;
    let t1 = Instant::now();
    std::hint::black_box(fuse_by_average(&seq)?);
    let t2 = Instant::now();
    std::hint::black_box(fuse_by_network(fusion_model, &seq)?);
    let t3 = Instant::now();
    let ms = |a: Instant, b: Instant| (b - a).as_secs_f64() * 1e3;
    Ok((ms(t0, t1), ms(t1, t2), ms(t2, t3)))
}

pub fn bench_event_latency(
    frame_model: &Model,
    fusion_model: &Model,
    lengths: &[usize],
    repetitions: usize,
    seed: u64,
) -> Result<Vec<BenchRow>> {
    if lengths.is_empty() {
        return Err(Error::EmptyInput("no event lengths"));
    }
    if let Some(l) = lengths.iter().find(|l| !(MIN_EVENT_FRAMES..=MAX_EVENT_FRAMES).contains(*l)) {
        return Err(Error::InvalidArgument(format!(
            "event length {l} outside [{MIN_EVENT_FRAMES}, {MAX_EVENT_FRAMES}]"
        )));
    }
    if repetitions < MIN_REPETITIONS {
        return Err(Error::InvalidArgument(format!("repetitions must be at least {MIN_REPETITIONS}, got {repetitions}")));
    }
    let stream = SeedStream::new(seed).named("bench");
    let env = EnvironmentProfile::trial();
    let mut rows = Vec::with_capacity(lengths.len());
    for (i, &length) in lengths.iter().enumerate() {
        let event = render_event(i as u64, ClassLabel::Jellyfish, &env, length, &mut stream.child(i as u64).rng())?;
        time_once(frame_model, fusion_model, &event)?;
        let (mut avg, mut fused) = (Vec::with_capacity(repetitions), Vec::with_capacity(repetitions));
        for _ in 0..repetitions {
            let (frames, average, network) = time_once(frame_model, fusion_model, &event)?;
            avg.push(frames + average);
            fused.push(frames + network);
        }
        let t_avg_ms = trimmed_mean(&avg)?;
        let t_fusion_ms = trimmed_mean(&fused)?;
        rows.push(BenchRow { length, t_avg_ms, t_fusion_ms, overhead_ratio: t_fusion_ms / t_avg_ms - 1.0 });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("length,t_avg_ms,t_fusion_ms,overhead_ratio\n");
    for r in rows {
        push_row(
            &mut out,
            &[r.length.to_string(), format_g(r.t_avg_ms, 9), format_g(r.t_fusion_ms, 9), format_g(r.overhead_ratio, 9)],
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchMetadata {
    pub os: String,
    pub arch: String,
    pub family: String,
    pub available_parallelism: usize,
    pub cpu_model: Option<String>,
    pub peak_rss_kib: Option<u64>,
    pub repetitions: usize,
    pub seed: u64,
    pub lengths: Vec<usize>,
    pub max_overhead_ratio: f64,
}

fn proc_field(path: &str, key: &str) -> Option<String> {
    let text = std::fs::read_to_string(path).ok()?;
    text.lines()
        .find(|l| l.starts_with(key))
        .and_then(|l| l.split_once(':'))
        .map(|(_, v)| v.trim().to_string())
}

impl BenchMetadata {
    pub fn collect(rows: &[BenchRow], repetitions: usize, seed: u64) -> Self {
        Self {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            family: std::env::consts::FAMILY.into(),
            available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
            cpu_model: proc_field("/proc/cpuinfo", "model name"),
            peak_rss_kib: proc_field("/proc/self/status", "VmHWM")
                .and_then(|v| v.split_whitespace().next().and_then(|n| n.parse().ok())),
            repetitions,
            seed,
            lengths: rows.iter().map(|r| r.length).collect(),
            max_overhead_ratio: rows.iter().map(|r| r.overhead_ratio).fold(f64::NEG_INFINITY, f64::max),
        }
    }
}
