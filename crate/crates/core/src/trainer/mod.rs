//! Segmenting songs into training examples, the optimization loop, evaluation
//! and checkpoints.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{log_floor, mcd::mcd_frames, MelSpectrogram};
use crate::model::{DropoutKey, ModelParams, SegmentIds};
use crate::numerics::loss::{l1_loss_backward, l1_loss_f64};
use crate::numerics::rng::stream;
use crate::numerics::{adam_step, tensor_file, AdamConfig, AdamState, Matrix, Mode};
use crate::score::FrameAlignment;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_steps: u64,
    pub warmup_steps: u64,
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub adam_eps: f32,
    pub seed: u64,
    pub seq_len: usize,
    /// Consonant frames per onset/coda when aligning scores.
    pub k: usize,
    pub eval_interval: u64,
    /// Global gradient norm cap; 0 disables clipping.
    pub clip_norm: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::with_steps(20_000)
    }
}

impl TrainConfig {
    /// Defaults with `total` steps and a warmup of a tenth of them.
    pub fn with_steps(total: u64) -> Self {
        TrainConfig {
            batch_size: 32,
            total_steps: total,
            warmup_steps: total / 10,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            seq_len: 200,
            k: 3,
            eval_interval: 1000,
            clip_norm: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.warmup_steps > self.total_steps {
            return Err(Error::Config(format!(
                "warmup {} exceeds total {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.seq_len == 0 || self.eval_interval == 0 {
            return Err(Error::Config("seq_len and eval_interval must be positive".into()));
        }
        if !(self.lr >= 0.0 && self.clip_norm >= 0.0) {
            return Err(Error::Config("lr and clip_norm must be non-negative".into()));
        }
        Ok(())
    }

    fn adam(&self, lr: f32) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

/// Linear warmup to the peak rate, then linear decay to 0 at `total_steps`.
pub fn lr_at(step: u64, cfg: &TrainConfig) -> f32 {
    let peak = cfg.lr as f64;
    let (w, t) = (cfg.warmup_steps as f64, cfg.total_steps as f64);
    let s = (step.min(cfg.total_steps)) as f64;
    let lr = if s < w {
        peak * s / w
    } else if t > w {
        peak * (t - s) / (t - w)
    } else {
        peak
    };
    lr as f32
}

/// One `L`-frame training window.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentExample {
    pub ids: SegmentIds,
    /// `L x bins` target, log-floor past the song end.
    pub target: Matrix,
    /// `true` on real frames, `false` on padding.
    pub mask: Vec<bool>,
}

impl SegmentExample {
    pub fn real_frames(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Cuts each song into consecutive non-overlapping `seq_len` windows; the
/// last window is padded (PAD/silence ids, log-floor mel) and masked.
pub fn segment_corpus<'a>(
    pairs: impl IntoIterator<Item = (&'a FrameAlignment, &'a MelSpectrogram)>,
    seq_len: usize,
) -> Result<Vec<SegmentExample>> {
    if seq_len == 0 {
        return Err(Error::Parameter("segment length must be positive".into()));
    }
    let mut out = Vec::new();
    for (song, (align, mel)) in pairs.into_iter().enumerate() {
        align.validate()?;
        if align.frames() != mel.frames() {
            return Err(Error::Alignment(format!(
                "song {song}: {} aligned frames vs {} mel frames",
                align.frames(),
                mel.frames()
            )));
        }
        let bins = mel.bins();
        for start in (0..align.frames()).step_by(seq_len) {
            let real = (align.frames() - start).min(seq_len);
            let (pitch, phoneme) = align.window(start, seq_len);
            let mut target = Matrix::filled(seq_len, bins, log_floor());
            target.data_mut()[..real * bins].copy_from_slice(&mel.values.data()[start * bins..(start + real) * bins]);
            out.push(SegmentExample {
                ids: SegmentIds { pitch, phoneme },
                target,
                mask: (0..seq_len).map(|i| i < real).collect(),
            });
        }
    }
    Ok(out)
}

fn stack(batch: &[&SegmentExample]) -> Result<(Vec<SegmentIds>, Matrix, Vec<bool>)> {
    let ids = batch.iter().map(|e| e.ids.clone()).collect();
    let target = Matrix::vstack(&batch.iter().map(|e| e.target.clone()).collect::<Vec<_>>())?;
    let mask = batch.iter().flat_map(|e| e.mask.iter().copied()).collect();
    Ok((ids, target, mask))
}

/// Adam moments for every model tensor, in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub states: Vec<AdamState>,
}

impl Optimizer {
    pub fn new(params: &ModelParams) -> Self {
        Optimizer {
            states: params.tensors().into_iter().map(AdamState::for_param).collect(),
        }
    }

    pub fn apply(&mut self, params: &mut ModelParams, cfg: &AdamConfig) -> Result<()> {
        let tensors = params.tensors_mut();
        if tensors.len() != self.states.len() {
            return Err(Error::dim("optimizer does not match the model"));
        }
        for (p, s) in tensors.into_iter().zip(&mut self.states) {
            adam_step(p, s, cfg)?;
        }
        Ok(())
    }

    pub fn save(&self, params: &ModelParams, path: &Path) -> Result<()> {
        let names: Vec<(String, String)> = params
            .tensors()
            .iter()
            .map(|p| (format!("m.{}", p.name), format!("v.{}", p.name)))
            .collect();
        let entries = names
            .iter()
            .zip(&self.states)
            .flat_map(|((m, v), s)| [(m.as_str(), &s.m), (v.as_str(), &s.v)]);
        tensor_file::write(path, entries)
    }

    pub fn load(params: &ModelParams, path: &Path, step: u64) -> Result<Self> {
        let mut by_name: HashMap<String, Matrix> = tensor_file::read(path)?.into_iter().collect();
        let mut states = Vec::new();
        for p in params.tensors() {
            let mut take = |prefix: &str| {
                let key = format!("{prefix}.{}", p.name);
                let m = by_name
                    .remove(&key)
                    .ok_or_else(|| Error::format(format!("optimizer state lacks {key}")))?;
                if m.shape() != p.value.shape() {
                    return Err(Error::format(format!("optimizer state {key} has the wrong shape")));
                }
                Ok(m)
            };
            let m = take("m")?;
            let v = take("v")?;
            states.push(AdamState { m, v, step });
        }
        if !by_name.is_empty() {
            return Err(Error::format("unexpected tensors in optimizer state"));
        }
        Ok(Optimizer { states })
    }
}

fn clip_gradients(params: &mut ModelParams, max_norm: f32) -> f64 {
    let norm = params.grad_norm();
    if max_norm > 0.0 && norm > max_norm as f64 {
        let s = (max_norm as f64 / norm) as f32;
        for p in params.tensors_mut() {
            p.grad.scale(s);
        }
    }
    norm
}

/// One optimization step on `batch` at 0-based `step`: masked L1, backprop,
/// clipping, then Adam at `lr_at(step + 1)`. Returns the pre-update loss.
pub fn train_step(
    params: &mut ModelParams,
    opt: &mut Optimizer,
    batch: &[&SegmentExample],
    cfg: &TrainConfig,
    step: u64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::DegenerateInput("empty batch".into()));
    }
    let (ids, target, mask) = stack(batch)?;
    params.zero_grad();
    let key = DropoutKey { seed: cfg.seed, step };
    let (pred, tape) = params.forward_with_tape(&ids, Mode::Train, key)?;
    let loss = l1_loss_f64(&pred, &target, Some(&mask))?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss at step {step}")));
    }
    let dy = l1_loss_backward(&pred, &target, Some(&mask))?;
    params.backward(tape, &dy)?;
    clip_gradients(params, cfg.clip_norm);
    opt.apply(params, &cfg.adam(lr_at(step + 1, cfg)))?;
    Ok(loss)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub l1: f64,
    pub mcd: f64,
}

/// Eval-mode masked L1 and frame-averaged MCD over the real frames of `examples`.
pub fn evaluate(params: &ModelParams, examples: &[SegmentExample], batch_size: usize) -> Result<EvalMetrics> {
    if examples.is_empty() {
        return Err(Error::DegenerateInput("empty holdout".into()));
    }
    let (mut abs_sum, mut entries, mut mcd_sum, mut frames) = (0f64, 0usize, 0f64, 0usize);
    for chunk in examples.chunks(batch_size.max(1)) {
        let ids: Vec<SegmentIds> = chunk.iter().map(|e| e.ids.clone()).collect();
        let pred = params.predict(&ids)?;
        let l = params.config.seq_len;
        for (i, e) in chunk.iter().enumerate() {
            let real = e.real_frames();
            if real == 0 {
                continue;
            }
            let p = pred.slice_rows(i * l, i * l + real);
            let t = e.target.slice_rows(0, real);
            abs_sum += l1_loss_f64(&p, &t, None)? * (real * t.cols()) as f64;
            entries += real * t.cols();
            mcd_sum += mcd_frames(&MelSpectrogram::new(p)?, &MelSpectrogram::new(t)?)?
                .iter()
                .sum::<f64>();
            frames += real;
        }
    }
    if frames == 0 {
        return Err(Error::DegenerateInput("holdout has no real frames".into()));
    }
    Ok(EvalMetrics {
        l1: abs_sum / entries as f64,
        mcd: mcd_sum / frames as f64,
    })
}

/// Example indices for `step`: position `step * batch` onward in the
/// concatenation of per-epoch seeded permutations.
pub fn batch_indices(n: usize, batch: usize, seed: u64, step: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(batch);
    let mut pos = step as usize * batch;
    let mut cached: Option<(usize, Vec<usize>)> = None;
    while out.len() < batch {
        let (epoch, offset) = (pos / n, pos % n);
        if cached.as_ref().map(|c| c.0) != Some(epoch) {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut stream(seed, &[0x6570_6f63, epoch as u64]));
            cached = Some((epoch, perm));
        }
        out.push(cached.as_ref().unwrap().1[offset]);
        pos += 1;
    }
    out
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub lr: f32,
    pub train_l1: f64,
    pub val_l1: f64,
    pub val_mcd: f64,
}

#[derive(Serialize, Deserialize)]
struct TrainerState {
    step: u64,
    config: TrainConfig,
}

pub struct Trainer {
    pub params: ModelParams,
    pub optimizer: Optimizer,
    pub config: TrainConfig,
    step: u64,
    train: Vec<SegmentExample>,
    val: Vec<SegmentExample>,
}

impl Trainer {
    pub fn new(params: ModelParams, config: TrainConfig, train: Vec<SegmentExample>, val: Vec<SegmentExample>) -> Result<Self> {
        config.validate()?;
        if config.seq_len != params.config.seq_len {
            return Err(Error::Config(format!(
                "train seq_len {} differs from model seq_len {}",
                config.seq_len, params.config.seq_len
            )));
        }
        if train.is_empty() {
            return Err(Error::DegenerateInput("no training segments".into()));
        }
        let optimizer = Optimizer::new(&params);
        Ok(Trainer {
            params,
            optimizer,
            config,
            step: 0,
            train,
            val,
        })
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Runs the next step and returns its training loss.
    pub fn train_step(&mut self) -> Result<f64> {
        let idx = batch_indices(self.train.len(), self.config.batch_size, self.config.seed, self.step);
        let batch: Vec<&SegmentExample> = idx.iter().map(|&i| &self.train[i]).collect();
        let loss = train_step(&mut self.params, &mut self.optimizer, &batch, &self.config, self.step)?;
        self.step += 1;
        Ok(loss)
    }

    pub fn evaluate(&self) -> Result<EvalMetrics> {
        evaluate(&self.params, &self.val, self.config.batch_size)
    }

    /// Trains until `total_steps`, logging and checkpointing every
    /// `eval_interval` steps and at the end. `log` receives CSV rows; the
    /// header is written when starting from step 0.
    pub fn run<W: Write>(&mut self, log: &mut csv::Writer<W>, checkpoints: Option<&Path>) -> Result<Vec<LogRow>> {
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        let mut rows = Vec::new();
        let mut window = (0f64, 0u64);
        while self.step < self.config.total_steps {
            let loss = self.train_step()?;
            window.0 += loss;
            window.1 += 1;
            if self.step % self.config.eval_interval == 0 || self.step == self.config.total_steps {
                let metrics = if self.val.is_empty() {
                    EvalMetrics {
                        l1: f64::NAN,
                        mcd: f64::NAN,
                    }
                } else {
                    self.evaluate()?
                };
                let row = LogRow {
                    step: self.step,
                    lr: lr_at(self.step, &self.config),
                    train_l1: window.0 / window.1 as f64,
                    val_l1: metrics.l1,
                    val_mcd: metrics.mcd,
                };
                window = (0.0, 0);
                log.serialize(&row).map_err(csv_err)?;
                log.flush()?;
                rows.push(row);
                if let Some(dir) = checkpoints {
                    std::fs::create_dir_all(dir)?;
                    self.save(&checkpoint_path(dir, self.step))?;
                }
            }
        }
        Ok(rows)
    }

    /// Model at `path`, optimizer moments at `<stem>.opt.ten1`, step and
    /// config at `<stem>.state.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.params.save(path)?;
        self.optimizer.save(&self.params, &path.with_extension("opt.ten1"))?;
        let state = TrainerState {
            step: self.step,
            config: self.config.clone(),
        };
        let json = serde_json::to_string_pretty(&state).map_err(|e| Error::format(e.to_string()))?;
        std::fs::write(path.with_extension("state.json"), json + "\n")?;
        Ok(())
    }

    /// Restores a trainer saved by [`Trainer::save`] over the same data.
    pub fn resume(path: &Path, train: Vec<SegmentExample>, val: Vec<SegmentExample>) -> Result<Self> {
        let params = ModelParams::load(path)?;
        let json = std::fs::read_to_string(path.with_extension("state.json"))?;
        let state: TrainerState = serde_json::from_str(&json).map_err(|e| Error::Config(e.to_string()))?;
        let optimizer = Optimizer::load(&params, &path.with_extension("opt.ten1"), state.step)?;
        let mut t = Trainer::new(params, state.config, train, val)?;
        t.optimizer = optimizer;
        t.step = state.step;
        Ok(t)
    }
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("step_{step:06}.ten1"))
}

/// CSV writer for training logs; the header comes from [`LogRow`].
pub fn log_writer<W: Write>(w: W, with_header: bool) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(with_header).from_writer(w)
}
