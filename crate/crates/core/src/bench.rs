//! Latency and real-time-factor measurement of batched against
//! chunk-by-chunk synthesis.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{plan, synthesize_with, PlanMode, Schedule};
use crate::model::ModelParams;
use crate::numerics::rng::stream;
use crate::score::{FrameAlignment, FrameRate};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    Batched,
    BatchedOverlapped,
    Sequential,
}

impl BenchMode {
    pub const ALL: [BenchMode; 3] = [BenchMode::Batched, BenchMode::Sequential, BenchMode::BatchedOverlapped];

    pub fn as_str(self) -> &'static str {
        match self {
            BenchMode::Batched => "batched",
            BenchMode::Sequential => "sequential",
            BenchMode::BatchedOverlapped => "batched_overlapped",
        }
    }

    fn plan_mode(self) -> PlanMode {
        match self {
            BenchMode::BatchedOverlapped => PlanMode::Overlapped,
            _ => PlanMode::Naive,
        }
    }

    fn schedule(self) -> Schedule {
        match self {
            BenchMode::Sequential => Schedule::Sequential,
            _ => Schedule::Batched,
        }
    }
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for BenchMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        BenchMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown bench mode {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub repeats: usize,
    pub warmup: usize,
    pub overlap: usize,
    /// Seed of the random aligned input.
    pub seed: u64,
    pub rate: FrameRate,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            repeats: 20,
            warmup: 2,
            overlap: crate::inference::DEFAULT_OVERLAP,
            seed: 0,
            rate: FrameRate::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub mode: BenchMode,
    pub frames: usize,
    pub repeats: usize,
    pub threads: usize,
    pub latencies: Vec<f64>,
    pub median_s: f64,
    pub p10_s: f64,
    pub p90_s: f64,
    pub rtf: f64,
    /// FNV-1a over the output bits of the last timed run.
    pub output_hash: u64,
}

/// Linear-interpolated percentile of an ascending slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Seconds of audio over seconds of compute.
pub fn real_time_factor(frames: usize, rate: FrameRate, latency_s: f64) -> f64 {
    rate.seconds(frames) / latency_s
}

fn random_alignment(frames: usize, seed: u64, params: &ModelParams) -> FrameAlignment {
    let mut rng = stream(seed, &[frames as u64]);
    let pv = params.config.pitch_vocab;
    let cv = params.config.phoneme_vocab;
    FrameAlignment {
        pitch_ids: (0..frames).map(|_| rng.gen_range(0..pv)).collect(),
        phoneme_ids: (0..frames).map(|_| rng.gen_range(0..cv)).collect(),
    }
}

fn hash_bits(data: &[f32]) -> u64 {
    data.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
        v.to_bits()
            .to_le_bytes()
            .iter()
            .fold(h, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
    })
}

/// Times planning, chunking, forward and stitching for each mode and frame
/// count on the current rayon pool. Input generation is not timed.
pub fn measure(params: &ModelParams, frame_counts: &[usize], modes: &[BenchMode], cfg: &BenchConfig) -> Result<Vec<BenchResult>> {
    if cfg.repeats == 0 {
        return Err(Error::Parameter("repeats must be at least 1".into()));
    }
    if frame_counts.contains(&0) {
        return Err(Error::Parameter("frame count must be positive".into()));
    }
    let l = params.config.seq_len;
    let mut out = Vec::new();
    for &frames in frame_counts {
        let alignment = random_alignment(frames, cfg.seed, params);
        for &mode in modes {
            let run = || -> Result<(f64, u64)> {
                let t = Instant::now();
                let p = plan(mode.plan_mode(), frames, l, cfg.overlap)?;
                let r = synthesize_with(params, &alignment, &p, mode.schedule())?;
                let dt = t.elapsed().as_secs_f64();
                Ok((dt, hash_bits(r.mel.values.data())))
            };
            for _ in 0..cfg.warmup {
                run()?;
            }
            let mut latencies = Vec::with_capacity(cfg.repeats);
            let mut output_hash = 0;
            for _ in 0..cfg.repeats {
                let (dt, h) = run()?;
                latencies.push(dt);
                output_hash = h;
            }
            let mut sorted = latencies.clone();
            sorted.sort_by(f64::total_cmp);
            let median_s = percentile(&sorted, 0.5);
            out.push(BenchResult {
                mode,
                frames,
                repeats: cfg.repeats,
                threads: rayon::current_num_threads(),
                p10_s: percentile(&sorted, 0.1),
                p90_s: percentile(&sorted, 0.9),
                rtf: real_time_factor(frames, cfg.rate, median_s),
                median_s,
                latencies,
                output_hash,
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub mode: BenchMode,
    pub frames: usize,
    pub median_s: f64,
    pub p10_s: f64,
    pub p90_s: f64,
    pub rtf: f64,
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Writes `mode,frames,median_s,p10_s,p90_s,rtf`, rows ordered by mode name
/// then frame count.
pub fn report(results: &[BenchResult], path: &Path) -> Result<()> {
    if results.is_empty() {
        return Err(Error::DegenerateInput("no benchmark results".into()));
    }
    let mut rows: Vec<ReportRow> = results
        .iter()
        .map(|r| ReportRow {
            mode: r.mode,
            frames: r.frames,
            median_s: r.median_s,
            p10_s: r.p10_s,
            p90_s: r.p90_s,
            rtf: r.rtf,
        })
        .collect();
    rows.sort_by(|a, b| (a.mode.as_str(), a.frames).cmp(&(b.mode.as_str(), b.frames)));
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    for row in &rows {
        w.serialize(row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_io)?;
    r.deserialize().map(|row| row.map_err(csv_io)).collect()
}
