//! The `mixsvs` command line.

mod args;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::parser::ValueSource;
use clap::{ArgMatches, CommandFactory, FromArgMatches};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use args::{AnalyzeCommand, Cli, Command};
use args::*;

use crate::analysis::{edge_middle_ratio, export_heatmap, loss_profile, probe_all, write_profile_csv};
use crate::bench::{measure, report, BenchConfig, BenchMode};
use crate::error::{Error, Result};
use crate::features::synth::{render_score, random_score};
use crate::features::wav::read_wav;
use crate::features::{extract_mel, MelSpectrogram};
use crate::inference::{plan, synthesize, PlanMode, DEFAULT_OVERLAP};
use crate::model::{ModelConfig, ModelParams};
use crate::score::vocab::{PitchVocab, DEFAULT_PITCH_BASE};
use crate::score::{align_to_frames, FrameAlignment, FrameRate, Score};
use crate::trainer::{log_writer, segment_corpus, SegmentExample, TrainConfig, Trainer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    pub mode: PlanMode,
    pub overlap: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            mode: PlanMode::Overlapped,
            overlap: DEFAULT_OVERLAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub songs: usize,
    pub val_songs: usize,
    pub seconds_per_song: f64,
    pub pitch_base: u8,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            songs: 40,
            val_songs: 4,
            seconds_per_song: 30.0,
            pitch_base: DEFAULT_PITCH_BASE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub frames: Vec<usize>,
    pub modes: Vec<BenchMode>,
    pub repeats: usize,
    pub warmup: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            frames: vec![800, 1600, 4800],
            modes: BenchMode::ALL.to_vec(),
            repeats: 20,
            warmup: 2,
        }
    }
}

/// Everything a run depends on. `seed` is copied into `train.seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
    pub data: DataConfig,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            threads: 0,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            inference: InferenceConfig::default(),
            data: DataConfig::default(),
            bench: BenchSection::default(),
        }
    }
}

impl RunConfig {
    pub fn pitch_vocab(&self) -> PitchVocab {
        PitchVocab {
            base: self.data.pitch_base,
        }
    }

    pub fn dump(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::format(e.to_string()))?;
        fs::write(path, json + "\n")?;
        Ok(())
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Defaults overlaid with a partial JSON document. Unknown keys are errors.
pub fn config_from_json(text: &str) -> Result<(RunConfig, Value)> {
    let file: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    if !file.is_object() {
        return Err(Error::Config("config must be a JSON object".into()));
    }
    let mut base = serde_json::to_value(RunConfig::default()).map_err(|e| Error::Config(e.to_string()))?;
    merge(&mut base, file.clone());
    let cfg = serde_json::from_value(base).map_err(|e| Error::Config(e.to_string()))?;
    Ok((cfg, file))
}

/// Which flags were typed on the command line, across subcommand levels.
struct Explicit<'a>(Vec<&'a ArgMatches>);

impl Explicit<'_> {
    fn has(&self, id: &str) -> bool {
        self.0
            .iter()
            .any(|m| m.ids().any(|i| i.as_str() == id) && m.value_source(id) == Some(ValueSource::CommandLine))
    }
}

macro_rules! set {
    ($ex:expr, $id:literal, $dst:expr, $val:expr) => {
        if $ex.has($id) {
            $dst = $val;
        }
    };
}

fn apply_model(cfg: &mut RunConfig, a: &ModelArgs, ex: &Explicit) {
    let m = &mut cfg.model;
    set!(ex, "blocks", m.n_blocks, a.blocks);
    set!(ex, "seq_len", m.seq_len, a.seq_len);
    set!(ex, "d_phoneme", m.d_phoneme, a.d_phoneme);
    set!(ex, "d_pitch", m.d_pitch, a.d_pitch);
    set!(ex, "hidden_channel", m.hidden_channel, a.hidden_channel);
    set!(ex, "hidden_token", m.hidden_token, a.hidden_token);
    set!(ex, "dropout", m.dropout, a.dropout);
    set!(ex, "ablate", m.ablate_token_mixer, a.ablate);
    set!(ex, "seq_len", cfg.train.seq_len, a.seq_len);
}

fn apply_align(cfg: &mut RunConfig, a: &AlignArgs, ex: &Explicit) {
    set!(ex, "k", cfg.train.k, a.k);
    set!(ex, "pitch_base", cfg.data.pitch_base, a.pitch_base);
}

/// Builds the effective config: defaults, then the config file, then flags.
pub fn effective_config(cli: &Cli, matches: &ArgMatches) -> Result<RunConfig> {
    let (mut cfg, file) = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            config_from_json(&text)?
        }
        None => (RunConfig::default(), Value::Null),
    };
    let mut levels = vec![matches];
    let mut cur = matches;
    while let Some((_, sub)) = cur.subcommand() {
        levels.push(sub);
        cur = sub;
    }
    let ex = Explicit(levels);
    set!(ex, "seed", cfg.seed, cli.seed);
    set!(ex, "threads", cfg.threads, cli.threads);
    match &cli.command {
        Command::MakeData(a) => {
            set!(ex, "songs", cfg.data.songs, a.songs);
            set!(ex, "val_songs", cfg.data.val_songs, a.val_songs);
            set!(ex, "seconds", cfg.data.seconds_per_song, a.seconds);
            apply_align(&mut cfg, &a.align, &ex);
        }
        Command::Extract(a) => apply_align(&mut cfg, &a.align, &ex),
        Command::Train(a) => {
            apply_model(&mut cfg, &a.model, &ex);
            apply_align(&mut cfg, &a.align, &ex);
            let t = &mut cfg.train;
            set!(ex, "steps", t.total_steps, a.steps);
            set!(ex, "batch_size", t.batch_size, a.batch_size);
            set!(ex, "lr", t.lr, a.lr);
            set!(ex, "beta1", t.beta1, a.beta1);
            set!(ex, "beta2", t.beta2, a.beta2);
            set!(ex, "eval_interval", t.eval_interval, a.eval_interval);
            set!(ex, "clip_norm", t.clip_norm, a.clip_norm);
            let warmup_in_file = file.pointer("/train/warmup_steps").is_some();
            match a.warmup {
                Some(w) => t.warmup_steps = w,
                None if !warmup_in_file => t.warmup_steps = t.total_steps / 10,
                None => {}
            }
        }
        Command::Synth(a) => {
            apply_align(&mut cfg, &a.align, &ex);
            set!(ex, "mode", cfg.inference.mode, a.mode);
            set!(ex, "w", cfg.inference.overlap, a.w);
        }
        Command::Analyze(AnalyzeCommand::Probe(_)) => {}
        Command::Analyze(AnalyzeCommand::LossProfile(a)) => {
            apply_align(&mut cfg, &a.align, &ex);
            set!(ex, "batch_size", cfg.train.batch_size, a.batch_size);
        }
        Command::Bench(a) => {
            apply_model(&mut cfg, &a.model, &ex);
            set!(ex, "frames", cfg.bench.frames, a.frames.clone());
            set!(ex, "modes", cfg.bench.modes, a.modes.clone());
            set!(ex, "repeats", cfg.bench.repeats, a.repeats);
            set!(ex, "warmup_runs", cfg.bench.warmup, a.warmup_runs);
            set!(ex, "w", cfg.inference.overlap, a.w);
        }
    }
    cfg.train.seed = cfg.seed;
    cfg.model.validate()?;
    cfg.train.validate()?;
    if cfg.train.seq_len != cfg.model.seq_len {
        return Err(Error::Config(format!(
            "train.seq_len {} differs from model.seq_len {}",
            cfg.train.seq_len, cfg.model.seq_len
        )));
    }
    Ok(cfg)
}

/// Parses `argv`, runs the command and returns the process exit code:
/// 0 on success, 2 for usage errors, 1 for everything else.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("usage error"));
            return 2;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", e.to_string().lines().next().unwrap_or("usage error"));
            return 2;
        }
    };
    match execute(&cli, &matches) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}

fn execute(cli: &Cli, matches: &ArgMatches) -> Result<()> {
    let cfg = effective_config(cli, matches)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Parameter(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::MakeData(a) => make_data(&cfg, a),
        Command::Extract(a) => extract(&cfg, a),
        Command::Train(a) => train(&cfg, a),
        Command::Synth(a) => synth(&cfg, a),
        Command::Analyze(AnalyzeCommand::Probe(a)) => probe(&cfg, a),
        Command::Analyze(AnalyzeCommand::LossProfile(a)) => profile(&cfg, a),
        Command::Bench(a) => bench(&cfg, a),
    })
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn read_score(path: &Path) -> Result<Score> {
    Score::from_json(&fs::read(path)?)
}

fn make_data(cfg: &RunConfig, a: &MakeDataArgs) -> Result<()> {
    let vocab = cfg.pitch_vocab();
    let rate = FrameRate::default();
    let splits = [("train", 0u64, cfg.data.songs), ("val", 100_000, cfg.data.val_songs)];
    for (name, first, count) in splits {
        let dir = a.out.join(name);
        fs::create_dir_all(&dir)?;
        for i in 0..count as u64 {
            let score = random_score(cfg.seed, first + i, cfg.data.seconds_per_song, &vocab);
            let song = render_score(&score, cfg.train.k, None, rate, &vocab)?;
            let stem = dir.join(format!("song_{i:04}"));
            fs::write(sibling(&stem, "json"), song.score.to_json())?;
            song.mel.write(&sibling(&stem, "mel1"))?;
        }
    }
    cfg.dump(&a.out.join("config.json"))?;
    println!("wrote {} train and {} val songs to {}", cfg.data.songs, cfg.data.val_songs, a.out.display());
    Ok(())
}

fn extract(cfg: &RunConfig, a: &ExtractArgs) -> Result<()> {
    let wav = read_wav(&fs::read(&a.wav)?)?;
    let mel = extract_mel(&wav)?;
    if let Some(p) = &a.score {
        align_to_frames(&read_score(p)?, cfg.train.k, Some(mel.frames()), FrameRate::default(), &cfg.pitch_vocab())?;
    }
    create_parent(&a.out)?;
    mel.write(&a.out)?;
    cfg.dump(&sibling(&a.out, "json"))?;
    println!("wrote {} frames to {}", mel.frames(), a.out.display());
    Ok(())
}

/// Score/MEL1 pairs of a corpus directory, aligned to the mel length.
pub fn load_corpus(dir: &Path, k: usize, vocab: &PitchVocab) -> Result<Vec<(FrameAlignment, MelSpectrogram)>> {
    let mut mels: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    mels.retain(|p| p.extension().is_some_and(|e| e == "mel1"));
    mels.sort();
    mels.iter()
        .map(|p| {
            let mel = MelSpectrogram::read(p)?;
            let score = read_score(&sibling(p, "json"))?;
            let align = align_to_frames(&score, k, Some(mel.frames()), FrameRate::default(), vocab)?;
            Ok((align, mel))
        })
        .collect()
}

fn segments(dir: &Path, cfg: &RunConfig) -> Result<Vec<SegmentExample>> {
    let songs = load_corpus(dir, cfg.train.k, &cfg.pitch_vocab())?;
    segment_corpus(songs.iter().map(|(a, m)| (a, m)), cfg.model.seq_len)
}

fn train(cfg: &RunConfig, a: &TrainArgs) -> Result<()> {
    let train_set = segments(&a.data.join("train"), cfg)?;
    let val_dir = a.data.join("val");
    let val_set = if val_dir.is_dir() { segments(&val_dir, cfg)? } else { Vec::new() };
    let mut trainer = match &a.resume {
        Some(ckpt) => Trainer::resume(ckpt, train_set, val_set)?,
        None => Trainer::new(ModelParams::init(&cfg.model, cfg.seed)?, cfg.train.clone(), train_set, val_set)?,
    };
    fs::create_dir_all(&a.out)?;
    cfg.dump(&a.out.join("config.json"))?;
    let log_path = a.out.join("log.csv");
    let fresh = trainer.step() == 0;
    let file = fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(!fresh)
        .truncate(fresh)
        .open(&log_path)?;
    let mut log = log_writer(file, fresh);
    let rows = trainer.run(&mut log, Some(&a.out.join("checkpoints")))?;
    trainer.save(&a.out.join("model.ten1"))?;
    if let Some(last) = rows.last() {
        println!(
            "step {} train_l1 {:.5} val_l1 {:.5} val_mcd {:.4}",
            last.step, last.train_l1, last.val_l1, last.val_mcd
        );
    }
    Ok(())
}

fn synth(cfg: &RunConfig, a: &SynthArgs) -> Result<()> {
    let params = ModelParams::load(&a.ckpt)?;
    let score = read_score(&a.score)?;
    let align = align_to_frames(&score, cfg.train.k, None, FrameRate::default(), &cfg.pitch_vocab())?;
    let p = plan(cfg.inference.mode, align.frames(), params.config.seq_len, cfg.inference.overlap)?;
    let out = synthesize(&params, &align, &p)?;
    create_parent(&a.out)?;
    out.mel.write(&a.out)?;
    cfg.dump(&sibling(&a.out, "json"))?;
    let t = out.timing;
    println!(
        "wrote {} frames in {} chunks (plan {:.2} ms, forward {:.2} ms, stitch {:.2} ms)",
        out.mel.frames(),
        p.chunks.len(),
        t.plan_ms,
        t.forward_ms,
        t.stitch_ms
    );
    Ok(())
}

fn probe(cfg: &RunConfig, a: &ProbeArgs) -> Result<()> {
    let params = ModelParams::load(&a.ckpt)?;
    let trained = probe_all(&params)?;
    let untrained = probe_all(&ModelParams::init(&params.config, cfg.seed)?)?;
    fs::create_dir_all(&a.out)?;
    let mut w = csv::Writer::from_path(a.out.join("probe.csv")).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    w.write_record(["block", "diagonal_constancy", "bandwidth", "untrained_diagonal_constancy", "untrained_bandwidth"])
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let mut more = 0;
    for (t, u) in trained.iter().zip(&untrained) {
        export_heatmap(&t.matrix, &a.out.join(format!("block_{:02}.pgm", t.block)))?;
        more += (t.diagonal_constancy > u.diagonal_constancy) as usize;
        w.write_record([
            t.block.to_string(),
            t.diagonal_constancy.to_string(),
            t.bandwidth.to_string(),
            u.diagonal_constancy.to_string(),
            u.bandwidth.to_string(),
        ])
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    cfg.dump(&a.out.join("config.json"))?;
    println!(
        "{more} of {} blocks more diagonal-constant than the untrained model (seed {})",
        trained.len(),
        cfg.seed
    );
    Ok(())
}

fn profile(cfg: &RunConfig, a: &LossProfileArgs) -> Result<()> {
    let params = ModelParams::load(&a.ckpt)?;
    let val = a.data.join("val");
    let dir = if val.is_dir() { val } else { a.data.clone() };
    let cfg = RunConfig {
        model: params.config.clone(),
        ..cfg.clone()
    };
    let examples = segments(&dir, &cfg)?;
    let prof = loss_profile(&params, &examples, cfg.train.batch_size)?;
    create_parent(&a.out)?;
    write_profile_csv(&prof, &a.out)?;
    cfg.dump(&sibling(&a.out, "json"))?;
    println!("edge/middle loss ratio {:.4} over {} segments", edge_middle_ratio(&prof), examples.len());
    Ok(())
}

fn bench(cfg: &RunConfig, a: &BenchArgs) -> Result<()> {
    let params = match &a.ckpt {
        Some(p) => ModelParams::load(p)?,
        None => ModelParams::init(&cfg.model, cfg.seed)?,
    };
    let bc = BenchConfig {
        repeats: cfg.bench.repeats,
        warmup: cfg.bench.warmup,
        overlap: cfg.inference.overlap,
        seed: cfg.seed,
        rate: FrameRate::default(),
    };
    let results = measure(&params, &cfg.bench.frames, &cfg.bench.modes, &bc)?;
    create_parent(&a.out)?;
    report(&results, &a.out)?;
    let cfg = RunConfig {
        threads: rayon::current_num_threads(),
        model: params.config.clone(),
        ..cfg.clone()
    };
    cfg.dump(&sibling(&a.out, "json"))?;
    for r in &results {
        println!(
            "{:<18} {:>6} frames  median {:.4} s  p10 {:.4} s  p90 {:.4} s  rtf {:.1}",
            r.mode, r.frames, r.median_s, r.p10_s, r.p90_s, r.rtf
        );
    }
    println!("threads {}", cfg.threads);
    Ok(())
}

#[cfg(test)]
mod tests;
