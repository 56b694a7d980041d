//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! The 20k-step default-size comparison takes tens of CPU hours and only
//! runs with `cargo test --test acceptance -- --ignored` (or
//! `--include-ignored`); the default run uses the reduced 2k-step variant.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use mixsvs::analysis::{edge_middle_ratio, loss_profile, probe_all};
use mixsvs::bench::{measure, BenchConfig, BenchMode};
use mixsvs::features::mel::magnitude_spectrum;
use mixsvs::features::synth::{synth_dataset, SynthConfig, SynthSong};
use mixsvs::inference::{plan, synthesize_with, PlanMode, Schedule, SegmentationPlan};
use mixsvs::model::{DropoutKey, ModelConfig, ModelParams, SegmentIds, SegmentObjective};
use mixsvs::numerics::gradcheck::{gradient_check, GradCheckConfig};
use mixsvs::numerics::rng::stream;
use mixsvs::numerics::Mode;
use mixsvs::score::align::allocate;
use mixsvs::score::hangul::{compose, decompose, Jamo};
use mixsvs::score::FrameAlignment;
use mixsvs::trainer::{evaluate, log_writer, segment_corpus, EvalMetrics, SegmentExample, TrainConfig, Trainer};

struct Outcome {
    pass: bool,
    /// Counted toward the exit status.
    required: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Outcome { pass, required: true, detail }
    }
}

fn gradient_correctness() -> Outcome {
    let t = Instant::now();
    let cfg = ModelConfig {
        n_blocks: 2,
        seq_len: 8,
        d_phoneme: 8,
        d_pitch: 4,
        d_mel: 6,
        hidden_channel: 16,
        hidden_token: 6,
        dropout: 0.0,
        ..Default::default()
    };
    let mut worst = 0f64;
    let mut coords = 0;
    for seed in [8u64, 21, 34] {
        let mut params = ModelParams::init(&cfg, seed).unwrap();
        let mut rng = stream(seed, &[7]);
        for p in params.tensors_mut() {
            let a = if p.name.starts_with("embed") { 1.0 } else { 0.2 };
            for v in p.value.data_mut() {
                *v += rng.gen_range(-a..a);
            }
        }
        let mut rng = stream(seed, &[]);
        let segments: Vec<SegmentIds> = (0..4)
            .map(|_| SegmentIds {
                pitch: (0..8).map(|_| rng.gen_range(0..cfg.pitch_vocab)).collect(),
                phoneme: (0..8).map(|_| rng.gen_range(0..cfg.phoneme_vocab)).collect(),
            })
            .collect();
        let key = DropoutKey { seed: 3, step: 1 };
        // targets well away from the prediction keep probes off the |x| kink
        let mut target = params.forward(&segments, Mode::Eval, key).unwrap();
        for v in target.data_mut() {
            let off: f32 = rng.gen_range(0.5..1.5);
            *v += if rng.gen_bool(0.5) { off } else { -off };
        }
        let mut obj = SegmentObjective {
            params,
            segments,
            target,
            mask: None,
            mode: Mode::Eval,
            key,
        };
        let report = gradient_check(&mut obj, &GradCheckConfig::default()).unwrap();
        worst = worst.max(report.max_rel_err);
        coords += report.coords_checked;
    }
    let secs = t.elapsed().as_secs_f64();
    Outcome::new(
        worst < 1e-3 && secs < 60.0,
        format!("max relative error {worst:.2e} over {coords} coordinates (< 1e-3), {secs:.1} s (< 60 s)"),
    )
}

fn parameter_count() -> Outcome {
    let full = ModelConfig::default();
    let abl = ModelConfig::ablation();
    let runtime = |c: &ModelConfig| ModelParams::init(c, 0).unwrap().param_count();
    let (f, a) = (full.param_count(), abl.param_count());
    let (fr, ar) = (runtime(&full), runtime(&abl));
    let pass = f == fr && a == ar && (6_800_000..=9_200_000).contains(&f) && (7_200_000..=8_800_000).contains(&a);
    Outcome::new(
        pass,
        format!("default {f} (runtime {fr}, in [6.8M, 9.2M]), ablation {a} (runtime {ar}, in [7.2M, 8.8M])"),
    )
}

struct Comparison {
    full: EvalMetrics,
    ablated: EvalMetrics,
    profile_ratio: f64,
    more_constant: usize,
    blocks: usize,
    secs: f64,
}

fn segments(songs: &[SynthSong], seq_len: usize) -> Vec<SegmentExample> {
    segment_corpus(songs.iter().map(|s| (&s.alignment, &s.mel)), seq_len).unwrap()
}

fn train_and_compare(full_cfg: ModelConfig, abl_cfg: ModelConfig, train_cfg: TrainConfig, corpus: SynthConfig, val_songs: usize) -> Comparison {
    let t = Instant::now();
    let train_songs = synth_dataset(&corpus).unwrap();
    let val = synth_dataset(&SynthConfig {
        songs: val_songs,
        first_song: 100,
        ..corpus.clone()
    })
    .unwrap();
    let train_set = segments(&train_songs, train_cfg.seq_len);
    let val_set = segments(&val, train_cfg.seq_len);
    let run = |cfg: &ModelConfig| {
        let params = ModelParams::init(cfg, train_cfg.seed).unwrap();
        let mut trainer = Trainer::new(params, train_cfg.clone(), train_set.clone(), val_set.clone()).unwrap();
        trainer.run(&mut log_writer(std::io::sink(), true), None).unwrap();
        trainer.params
    };
    let full = run(&full_cfg);
    let ablated = run(&abl_cfg);
    let batch = train_cfg.batch_size;
    let profile = loss_profile(&full, &val_set, batch).unwrap();
    let trained = probe_all(&full).unwrap();
    let untrained = probe_all(&ModelParams::init(&full_cfg, train_cfg.seed).unwrap()).unwrap();
    let more_constant = trained
        .iter()
        .zip(&untrained)
        .filter(|(a, b)| a.diagonal_constancy > b.diagonal_constancy)
        .count();
    Comparison {
        full: evaluate(&full, &val_set, batch).unwrap(),
        ablated: evaluate(&ablated, &val_set, batch).unwrap(),
        profile_ratio: edge_middle_ratio(&profile),
        more_constant,
        blocks: trained.len(),
        secs: t.elapsed().as_secs_f64(),
    }
}

/// Channel width for an ablated model with `n_blocks` that is closest in
/// size to `full`.
fn matched_ablation(full: &ModelConfig, n_blocks: usize) -> ModelConfig {
    let target = full.param_count() as i64;
    (1..4 * full.hidden_channel)
        .map(|hc| ModelConfig {
            n_blocks,
            hidden_channel: hc,
            ablate_token_mixer: true,
            ..full.clone()
        })
        .min_by_key(|c| (c.param_count() as i64 - target).abs())
        .unwrap()
}

fn smoke_comparison() -> Comparison {
    let full = ModelConfig {
        n_blocks: 2,
        seq_len: 64,
        d_phoneme: 48,
        d_pitch: 16,
        hidden_channel: 128,
        hidden_token: 64,
        dropout: 0.1,
        ..Default::default()
    };
    let abl = matched_ablation(&full, 3);
    let train = TrainConfig {
        batch_size: 16,
        seq_len: 64,
        eval_interval: 500,
        seed: 1,
        ..TrainConfig::with_steps(2000)
    };
    let corpus = SynthConfig {
        songs: 12,
        seconds_per_song: 20.0,
        seed: 1,
        ..Default::default()
    };
    train_and_compare(full, abl, train, corpus, 3)
}

fn full_comparison() -> Comparison {
    train_and_compare(ModelConfig::default(), ModelConfig::ablation(), TrainConfig::default(), SynthConfig::default(), 4)
}

fn table2_direction(c: &Comparison, full_run: bool) -> Outcome {
    let ratio = c.full.l1 / c.ablated.l1;
    let mcd_ok = c.full.mcd < c.ablated.mcd;
    let pass = ratio <= 0.95 && (!full_run || mcd_ok);
    Outcome::new(
        pass,
        format!(
            "{}: L1 full {:.4} vs ablated {:.4} (ratio {ratio:.3} <= 0.95), MCD full {:.3} vs ablated {:.3}{}, {:.0} s",
            if full_run { "20k steps, default size" } else { "2k-step reduced variant" },
            c.full.l1,
            c.ablated.l1,
            c.full.mcd,
            c.ablated.mcd,
            if full_run { " (must be lower)" } else { " (reported)" },
            c.secs
        ),
    )
}

fn tiles_once(p: &SegmentationPlan, frames: usize) -> bool {
    let mut next = 0;
    for c in &p.chunks {
        if c.emit_start != next || c.emit_end <= c.emit_start {
            return false;
        }
        if c.emit_start < c.chunk_start || c.emit_end > c.chunk_start + p.seq_len {
            return false;
        }
        next = c.emit_end;
    }
    next == frames
}

fn segmentation_coverage() -> Outcome {
    let t = Instant::now();
    let mut rng = stream(4, &[]);
    let mut bad = 0;
    for _ in 0..1000 {
        let l = rng.gen_range(1..400usize);
        let f = rng.gen_range(1..6000usize);
        let w = rng.gen_range(0..=(l - 1) / 2);
        let naive = plan(PlanMode::Naive, f, l, w).unwrap();
        let over = plan(PlanMode::Overlapped, f, l, w).unwrap();
        bad += (!tiles_once(&naive, f) || !tiles_once(&over, f)) as usize;
    }
    let secs = t.elapsed().as_secs_f64();
    Outcome::new(bad == 0 && secs < 10.0, format!("{bad} of 1000 (F, L, w) triples mis-tiled, {secs:.2} s (< 10 s)"))
}

fn random_alignment(frames: usize, cfg: &ModelConfig, seed: u64) -> FrameAlignment {
    let mut rng = stream(seed, &[frames as u64]);
    FrameAlignment {
        pitch_ids: (0..frames).map(|_| rng.gen_range(0..cfg.pitch_vocab)).collect(),
        phoneme_ids: (0..frames).map(|_| rng.gen_range(0..cfg.phoneme_vocab)).collect(),
    }
}

fn batched_equals_sequential() -> Outcome {
    let cfg = ModelConfig {
        n_blocks: 2,
        ..Default::default()
    };
    let params = ModelParams::init(&cfg, 5).unwrap();
    let mut rng = stream(5, &[]);
    let mut equal = 0;
    for i in 0..20u64 {
        let frames = rng.gen_range(1..1500);
        let align = random_alignment(frames, &cfg, i);
        let mode = if i % 2 == 0 { PlanMode::Naive } else { PlanMode::Overlapped };
        let p = plan(mode, frames, cfg.seq_len, 30).unwrap();
        let a = synthesize_with(&params, &align, &p, Schedule::Batched).unwrap().mel;
        let b = synthesize_with(&params, &align, &p, Schedule::Sequential).unwrap().mel;
        let same = a.values.data().iter().zip(b.values.data()).all(|(x, y)| x.to_bits() == y.to_bits());
        equal += (same && a.frames() == frames) as usize;
    }
    Outcome::new(equal == 20, format!("{equal} of 20 random inputs bitwise identical"))
}

fn throughput_shape() -> Outcome {
    let cfg = ModelConfig::default();
    let params = ModelParams::init(&cfg, 0).unwrap();
    let hardware = std::thread::available_parallelism().map_or(1, |n| n.get());
    let bench = BenchConfig {
        repeats: 5,
        warmup: 1,
        ..Default::default()
    };
    let run = |threads: usize, modes: &[BenchMode]| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| measure(&params, &[4800], modes, &bench)).unwrap()
    };
    // RTF on every hardware thread; the latency ratio on a four-thread pool
    let native = run(hardware, &[BenchMode::Batched, BenchMode::Sequential, BenchMode::BatchedOverlapped]);
    let four = if hardware == 4 { native.clone() } else { run(4, &[BenchMode::Batched, BenchMode::Sequential]) };
    let latency_ratio = four[0].median_s / four[1].median_s;
    let (batched, overlapped) = (&native[0], &native[2]);
    let rtf_ratio = overlapped.rtf / batched.rtf;
    let threads_ok = latency_ratio <= 0.5;
    let rtf_ok = batched.rtf >= 20.0 && rtf_ratio >= 0.5;
    let mut out = Outcome::new(
        threads_ok && rtf_ok,
        format!(
            "60 s input: batched/sequential latency {latency_ratio:.3} on 4 threads (<= 0.5); RTF {:.1} on {} thread(s) (>= 20); \
             overlapped/naive RTF {rtf_ratio:.3} (>= 0.5)",
            batched.rtf, batched.threads
        ),
    );
    if hardware < 4 && !threads_ok {
        // the latency ratio is defined for four real cores; without them only
        // the RTF parts can be held to account
        out.required = !rtf_ok;
        out.detail.push_str(&format!(" [{hardware} hardware thread(s); latency ratio needs >= 4, not counted]"));
    }
    out
}

fn naive_dft(x: &[f32]) -> Vec<f64> {
    let n = x.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0f64, 0f64);
            for (t, &v) in x.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * ((k * t) % n) as f64 / n as f64;
                re += v as f64 * ang.cos();
                im += v as f64 * ang.sin();
            }
            re.hypot(im)
        })
        .collect()
}

fn stft_oracle() -> Outcome {
    let mut rng = stream(7, &[]);
    let mut worst = 0f64;
    for i in 0..50 {
        let n = if i == 0 { 4096 } else { rng.gen_range(1..=4096) };
        let x: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = magnitude_spectrum(&x);
        let slow = naive_dft(&x);
        assert_eq!(fast.len(), slow.len());
        for (a, b) in fast.iter().zip(&slow) {
            worst = worst.max((*a as f64 - b).abs());
        }
    }
    Outcome::new(worst < 1e-4, format!("max |FFT - DFT| {worst:.2e} over 50 signals (< 1e-4)"))
}

fn hangul_oracle() -> Outcome {
    let mut mismatches = 0;
    for code in 0xAC00u32..=0xD7A3 {
        let c = char::from_u32(code).unwrap();
        let s = code - 0xAC00;
        let expect = Jamo {
            initial: (s / (21 * 28)) as u8,
            medial: ((s % (21 * 28)) / 28) as u8,
            coda: Some((s % 28) as u8).filter(|&f| f != 0),
        };
        let got = decompose(c).ok();
        mismatches += (got != Some(expect) || compose(expect) != Some(c)) as usize;
    }
    Outcome::new(mismatches == 0, format!("{mismatches} mismatches over 11172 syllables"))
}

fn alignment_exhaustive() -> Outcome {
    let mut bad = 0;
    let mut cases = 0;
    for n in 1..40 {
        for k in 0..5 {
            for coda in [false, true] {
                let (on, nuc, cd) = allocate(n, k, coda);
                bad += (on + nuc + cd != n || nuc < 1 || (!coda && cd != 0)) as usize;
                cases += 1;
            }
        }
    }
    Outcome::new(bad == 0, format!("{bad} bad allocations over {cases} cases"))
}

fn edge_loss(c: &Comparison, full_run: bool) -> Outcome {
    let mut out = Outcome::new(
        c.profile_ratio >= 1.0,
        format!(
            "edge/middle mean loss ratio {:.3} (>= 1), {}",
            c.profile_ratio,
            if full_run { "asserted" } else { "reported only outside the 20k-step run" }
        ),
    );
    out.required = full_run;
    out
}

fn probe_structure(c: &Comparison) -> Outcome {
    let mut out = Outcome::new(
        2 * c.more_constant > c.blocks,
        format!(
            "{} of {} blocks more diagonal-constant than the seed-matched untrained model (report only)",
            c.more_constant, c.blocks
        ),
    );
    out.required = false;
    out
}

fn cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_mixsvs")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> usize {
    names
        .iter()
        .filter(|n| std::fs::read(a.join(n)).unwrap() == std::fs::read(b.join(n)).unwrap())
        .count()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_owned();
    cli(&["make-data", "--out", &p("data"), "--songs", "3", "--val-songs", "1", "--seconds", "4", "--seed", "11"]);
    let tiny = [
        "--blocks", "2", "--seq-len", "32", "--d-phoneme", "16", "--d-pitch", "8", "--hidden-channel", "32", "--hidden-token",
        "16", "--batch-size", "4", "--steps", "20", "--eval-interval", "10", "--seed", "11", "--threads", "1",
    ];
    for run in ["a", "b"] {
        let mut args = vec!["train".to_owned(), "--data".into(), p("data"), "--out".into(), p(run)];
        args.extend(tiny.iter().map(|s| s.to_string()));
        cli(&args.iter().map(String::as_str).collect::<Vec<_>>());
        let score = dir.path().join("data/val/song_0000.json");
        let model = dir.path().join(run).join("model.ten1");
        cli(&[
            "synth", "--score", score.to_str().unwrap(), "--ckpt", model.to_str().unwrap(), "--out",
            &p(&format!("{run}/out.mel1")), "--w", "8", "--threads", "1",
        ]);
    }
    let names = ["model.ten1", "model.json", "model.opt.ten1", "model.state.json", "log.csv", "config.json", "out.mel1", "out.json"];
    let same = same_files(&dir.path().join("a"), &dir.path().join("b"), &names);
    Outcome::new(same == names.len(), format!("{same} of {} train/synth artifacts bitwise identical across runs", names.len()))
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let full_run = args.iter().any(|a| a == "--ignored" || a == "--include-ignored");
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let mut failed = Vec::new();
    let mut report = |n: usize, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {n:>2} ({name}): {}", o.detail);
        if !o.pass && o.required {
            failed.push(n);
        }
    };
    report(1, "gradient correctness", gradient_correctness());
    report(2, "parameter count", parameter_count());
    let comparison = if full_run { full_comparison() } else { smoke_comparison() };
    report(3, "full vs channel-mixer-only", table2_direction(&comparison, full_run));
    report(4, "segmentation coverage", segmentation_coverage());
    report(5, "batched = sequential", batched_equals_sequential());
    report(6, "throughput shape", throughput_shape());
    report(7, "STFT oracle", stft_oracle());
    report(8, "Hangul oracle", hangul_oracle());
    report(9, "alignment exhaustive", alignment_exhaustive());
    report(10, "edge loss", edge_loss(&comparison, full_run));
    report(11, "probe structure", probe_structure(&comparison));
    report(12, "determinism", determinism());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
