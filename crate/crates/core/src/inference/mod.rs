//! Whole-song synthesis: cut the aligned input into `L`-frame chunks, run
//! them through the model as one batch and stitch the emitted frames.

use std::hint::black_box;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::MelSpectrogram;
use crate::model::{ModelParams, SegmentIds};
use crate::numerics::Matrix;
use crate::score::FrameAlignment;

pub const DEFAULT_OVERLAP: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanMode {
    Naive,
    Overlapped,
}

/// Chunk window `[chunk_start, chunk_start + L)`; frames
/// `[emit_start, emit_end)` of it go to the output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Chunk {
    pub chunk_start: usize,
    pub emit_start: usize,
    pub emit_end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentationPlan {
    pub mode: PlanMode,
    pub frames: usize,
    pub seq_len: usize,
    pub overlap: usize,
    pub chunks: Vec<Chunk>,
}

fn check_sizes(frames: usize, seq_len: usize) -> Result<()> {
    if frames == 0 {
        return Err(Error::DegenerateInput("nothing to synthesize: zero frames".into()));
    }
    if seq_len == 0 {
        return Err(Error::Parameter("segment length must be positive".into()));
    }
    Ok(())
}

/// Back-to-back `L`-frame chunks, each emitting all of its real frames.
pub fn plan_naive(frames: usize, seq_len: usize) -> Result<SegmentationPlan> {
    check_sizes(frames, seq_len)?;
    let chunks = (0..frames)
        .step_by(seq_len)
        .map(|s| Chunk {
            chunk_start: s,
            emit_start: s,
            emit_end: (s + seq_len).min(frames),
        })
        .collect();
    Ok(SegmentationPlan {
        mode: PlanMode::Naive,
        frames,
        seq_len,
        overlap: 0,
        chunks,
    })
}

/// Number of chunks [`plan_overlapped`] produces.
pub fn overlapped_chunk_count(frames: usize, seq_len: usize, w: usize) -> usize {
    let stride = seq_len - 2 * w;
    let reach = seq_len - w;
    if frames <= reach {
        1
    } else {
        (frames - reach).div_ceil(stride) + 1
    }
}

/// Chunks every `L - 2w` frames; each drops `w` frames at both ends except
/// at the song boundaries, where no other context exists.
pub fn plan_overlapped(frames: usize, seq_len: usize, w: usize) -> Result<SegmentationPlan> {
    check_sizes(frames, seq_len)?;
    if 2 * w >= seq_len {
        return Err(Error::Parameter(format!(
            "overlap {w} must be below half the segment length {seq_len}"
        )));
    }
    let stride = seq_len - 2 * w;
    let n = overlapped_chunk_count(frames, seq_len, w);
    let chunks = (0..n)
        .map(|j| {
            let start = j * stride;
            Chunk {
                chunk_start: start,
                emit_start: if j == 0 { 0 } else { start + w },
                emit_end: if j + 1 == n { frames } else { start + seq_len - w },
            }
        })
        .collect();
    Ok(SegmentationPlan {
        mode: PlanMode::Overlapped,
        frames,
        seq_len,
        overlap: w,
        chunks,
    })
}

pub fn plan(mode: PlanMode, frames: usize, seq_len: usize, w: usize) -> Result<SegmentationPlan> {
    match mode {
        PlanMode::Naive => plan_naive(frames, seq_len),
        PlanMode::Overlapped => plan_overlapped(frames, seq_len, w),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisTiming {
    pub plan_ms: f64,
    pub forward_ms: f64,
    pub stitch_ms: f64,
}

#[derive(Clone, Debug)]
pub struct SynthesisResult {
    pub mel: MelSpectrogram,
    pub timing: SynthesisTiming,
}

/// How the chunk forward passes are scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// One batch, split into contiguous parts over the current rayon pool.
    Batched,
    /// One chunk at a time, each waiting for the previous result.
    Sequential,
}

fn chunk_inputs(alignment: &FrameAlignment, plan: &SegmentationPlan) -> Vec<SegmentIds> {
    plan.chunks
        .iter()
        .map(|c| {
            let (pitch, phoneme) = alignment.window(c.chunk_start, plan.seq_len);
            SegmentIds { pitch, phoneme }
        })
        .collect()
}

fn forward_batched(params: &ModelParams, inputs: &[SegmentIds]) -> Result<Vec<Matrix>> {
    let parts = rayon::current_num_threads().min(inputs.len()).max(1);
    let per = inputs.len().div_ceil(parts);
    inputs.par_chunks(per).map(|group| params.predict(group)).collect()
}

fn forward_sequential(params: &ModelParams, inputs: &[SegmentIds]) -> Result<Vec<Matrix>> {
    let mut out: Vec<Matrix> = Vec::with_capacity(inputs.len());
    for s in inputs {
        // stand-in for autoregressive dependence: the next chunk is not
        // started until the previous output exists
        if let Some(prev) = out.last() {
            black_box(prev.data()[0]);
        }
        out.push(params.predict(std::slice::from_ref(s))?);
    }
    Ok(out)
}

/// Evaluates every chunk of `plan` and stitches the emitted frames.
pub fn synthesize_with(
    params: &ModelParams,
    alignment: &FrameAlignment,
    plan: &SegmentationPlan,
    schedule: Schedule,
) -> Result<SynthesisResult> {
    if plan.frames != alignment.frames() {
        return Err(Error::Range(format!(
            "plan covers {} frames, alignment has {}",
            plan.frames,
            alignment.frames()
        )));
    }
    if plan.seq_len != params.config.seq_len {
        return Err(Error::Range(format!(
            "plan segment length {} differs from model's {}",
            plan.seq_len, params.config.seq_len
        )));
    }
    let t0 = Instant::now();
    let inputs = chunk_inputs(alignment, plan);
    let t1 = Instant::now();
    let outputs = match schedule {
        Schedule::Batched => forward_batched(params, &inputs)?,
        Schedule::Sequential => forward_sequential(params, &inputs)?,
    };
    let t2 = Instant::now();
    let bins = params.config.d_mel;
    let l = plan.seq_len;
    let mut mel = Matrix::zeros(plan.frames, bins);
    let mut chunk = 0;
    for out in &outputs {
        for k in 0..out.rows() / l {
            let c = plan.chunks[chunk];
            let src = (c.emit_start - c.chunk_start) + k * l;
            let len = c.emit_end - c.emit_start;
            mel.data_mut()[c.emit_start * bins..c.emit_end * bins]
                .copy_from_slice(&out.data()[src * bins..(src + len) * bins]);
            chunk += 1;
        }
    }
    let mel = MelSpectrogram::new(mel)?;
    let t3 = Instant::now();
    let ms = |a: Instant, b: Instant| (b - a).as_secs_f64() * 1e3;
    Ok(SynthesisResult {
        mel,
        timing: SynthesisTiming {
            plan_ms: ms(t0, t1),
            forward_ms: ms(t1, t2),
            stitch_ms: ms(t2, t3),
        },
    })
}

/// Eval-mode batched synthesis over `plan`.
pub fn synthesize(params: &ModelParams, alignment: &FrameAlignment, plan: &SegmentationPlan) -> Result<SynthesisResult> {
    synthesize_with(params, alignment, plan, Schedule::Batched)
}

#[cfg(test)]
mod tests;
