use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::model::ModelConfig;
use crate::numerics::rng::stream;

fn emits(p: &SegmentationPlan) -> Vec<(usize, usize)> {
    p.chunks.iter().map(|c| (c.emit_start, c.emit_end)).collect()
}

fn assert_tiles(p: &SegmentationPlan) {
    let mut seen = vec![0u8; p.frames];
    for c in &p.chunks {
        assert!(c.chunk_start <= c.emit_start && c.emit_start < c.emit_end, "{c:?}");
        assert!(c.emit_end <= c.chunk_start + p.seq_len, "{c:?}");
        for f in c.emit_start..c.emit_end {
            seen[f] += 1;
        }
    }
    assert!(seen.iter().all(|&n| n == 1));
    for pair in p.chunks.windows(2) {
        assert_eq!(pair[0].emit_end, pair[1].emit_start);
    }
}

/// Greedy enumeration: keep adding chunks at stride `L - 2w` until one
/// could emit through `F`.
fn brute_force_count(frames: usize, l: usize, w: usize) -> usize {
    let mut n = 1;
    while (n - 1) * (l - 2 * w) + l - w < frames {
        n += 1;
    }
    n
}

#[test]
fn naive_examples() {
    assert_eq!(emits(&plan_naive(400, 200).unwrap()), vec![(0, 200), (200, 400)]);
    assert_eq!(emits(&plan_naive(150, 200).unwrap()), vec![(0, 150)]);
    let p = plan_naive(401, 200).unwrap();
    assert_eq!(p.chunks.len(), 3);
    assert_eq!(emits(&p)[2], (400, 401));
    assert!(matches!(plan_naive(0, 200), Err(Error::DegenerateInput(_))));
}

#[test]
fn overlapped_examples() {
    let p = plan_overlapped(400, 200, 30).unwrap();
    let starts: Vec<usize> = p.chunks.iter().map(|c| c.chunk_start).collect();
    assert_eq!(starts, vec![0, 140, 280]);
    assert_eq!(emits(&p), vec![(0, 170), (170, 310), (310, 400)]);
    assert_eq!(plan_overlapped(777, 200, 0).unwrap().chunks, plan_naive(777, 200).unwrap().chunks);
    assert_eq!(emits(&plan_overlapped(100, 200, 30).unwrap()), vec![(0, 100)]);
    // past L - w the tail needs a second chunk
    assert_eq!(emits(&plan_overlapped(180, 200, 30).unwrap()), vec![(0, 170), (170, 180)]);
    assert!(matches!(plan_overlapped(400, 200, 100), Err(Error::Parameter(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn plans_tile_exactly(frames in 1usize..5000, l in 1usize..400, wf in 0.0f64..1.0) {
        let w = ((l - 1) / 2) as f64 * wf;
        let w = w as usize;
        let naive = plan_naive(frames, l).unwrap();
        assert_tiles(&naive);
        prop_assert_eq!(naive.chunks.len(), frames.div_ceil(l));
        let over = plan_overlapped(frames, l, w).unwrap();
        assert_tiles(&over);
        let spec_count = {
            let num = frames as f64 - l as f64 + w as f64;
            ((num / (l - 2 * w) as f64).ceil() as i64 + 1).max(1) as usize
        };
        prop_assert_eq!(over.chunks.len(), spec_count);
        prop_assert_eq!(over.chunks.len(), brute_force_count(frames, l, w));
    }
}

fn model(seq_len: usize, seed: u64) -> ModelParams {
    let cfg = ModelConfig {
        n_blocks: 2,
        seq_len,
        d_phoneme: 12,
        d_pitch: 4,
        hidden_channel: 24,
        hidden_token: 10,
        ..Default::default()
    };
    let mut p = ModelParams::init(&cfg, seed).unwrap();
    let mut rng = stream(seed, &[3]);
    for t in p.tensors_mut() {
        for v in t.value.data_mut() {
            *v += rng.gen_range(-0.1..0.1);
        }
    }
    p
}

fn alignment(frames: usize, seed: u64) -> FrameAlignment {
    let mut rng = stream(seed, &[]);
    FrameAlignment {
        pitch_ids: (0..frames).map(|_| rng.gen_range(0..25)).collect(),
        phoneme_ids: (0..frames).map(|_| rng.gen_range(0..69)).collect(),
    }
}

/// One chunk at a time through the single-segment forward.
fn sequential_oracle(params: &ModelParams, a: &FrameAlignment, p: &SegmentationPlan) -> Matrix {
    let mut out = Matrix::zeros(p.frames, 120);
    for c in &p.chunks {
        let (pitch, phoneme) = a.window(c.chunk_start, p.seq_len);
        let y = params.predict(&[SegmentIds { pitch, phoneme }]).unwrap();
        for f in c.emit_start..c.emit_end {
            out.row_mut(f).copy_from_slice(y.row(f - c.chunk_start));
        }
    }
    out
}

#[test]
fn batched_equals_sequential() {
    let params = model(20, 1);
    let mut rng = stream(5, &[]);
    for i in 0..20 {
        let frames = rng.gen_range(1..150);
        let a = alignment(frames, i);
        for p in [plan_naive(frames, 20).unwrap(), plan_overlapped(frames, 20, 4).unwrap()] {
            let got = synthesize(&params, &a, &p).unwrap();
            assert_eq!(got.mel.frames(), frames);
            assert_eq!(got.mel.values, sequential_oracle(&params, &a, &p));
            let seq = synthesize_with(&params, &a, &p, Schedule::Sequential).unwrap();
            assert_eq!(seq.mel, got.mel);
        }
    }
}

#[test]
fn thread_split_is_invisible() {
    let params = model(20, 2);
    let a = alignment(333, 4);
    let p = plan_overlapped(333, 20, 5).unwrap();
    let one = synthesize(&params, &a, &p).unwrap().mel;
    for threads in [2, 3, 7] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let got = pool.install(|| synthesize(&params, &a, &p)).unwrap().mel;
        assert_eq!(got, one);
    }
}

#[test]
fn short_input_plans_agree() {
    // F <= L - w: both plans use one chunk with identical context
    let params = model(20, 3);
    let a = alignment(15, 6);
    let n = synthesize(&params, &a, &plan_naive(15, 20).unwrap()).unwrap().mel;
    let o = synthesize(&params, &a, &plan_overlapped(15, 20, 5).unwrap()).unwrap().mel;
    assert_eq!(n, o);
}

#[test]
fn plan_mismatch_is_range_error() {
    let params = model(20, 3);
    let a = alignment(50, 6);
    let r = synthesize(&params, &a, &plan_naive(49, 20).unwrap());
    assert!(matches!(r, Err(Error::Range(_))));
    let r = synthesize(&params, &a, &plan_naive(50, 10).unwrap());
    assert!(matches!(r, Err(Error::Range(_))));
}
