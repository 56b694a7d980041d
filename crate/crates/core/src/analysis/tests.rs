use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::model::{ModelConfig, SegmentIds};
use crate::numerics::loss::l1_loss_f64;
use crate::numerics::matmul;
use crate::numerics::rng::stream;

fn token_model(seq_len: usize, hidden_token: usize, seed: u64) -> ModelParams {
    let cfg = ModelConfig {
        n_blocks: 2,
        seq_len,
        d_phoneme: 6,
        d_pitch: 2,
        hidden_channel: 8,
        hidden_token,
        ..Default::default()
    };
    ModelParams::init(&cfg, seed).unwrap()
}

fn iid(n: usize, seed: u64) -> Matrix {
    let mut rng = stream(seed, &[]);
    Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0))
}

#[test]
fn constancy_examples() {
    assert_eq!(diagonal_constancy(&Matrix::identity(7)).unwrap(), 1.0);
    assert_eq!(diagonal_constancy(&Matrix::filled(5, 5, 3.0)).unwrap(), 1.0);
    let s = diagonal_constancy(&iid(200, 1)).unwrap();
    assert!(s < 0.1, "{s}");
    assert!(matches!(diagonal_constancy(&Matrix::zeros(2, 3)), Err(Error::Dimension(_))));
    // anti-diagonal structure is not Toeplitz
    let anti = Matrix::from_fn(6, 6, |i, j| (i + j) as f32);
    assert!(diagonal_constancy(&anti).unwrap() < 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn constancy_ignores_offsets(n in 2usize..30, seed in 0u64..1000, c in -50.0f32..50.0) {
        let m = iid(n, seed);
        let shifted = m.map(|v| v + c);
        let (a, b) = (diagonal_constancy(&m).unwrap(), diagonal_constancy(&shifted).unwrap());
        prop_assert!((a - b).abs() < 1e-4, "{} vs {}", a, b);
        prop_assert!((0.0..=1.0).contains(&a));
    }
}

#[test]
fn bandwidth_examples() {
    assert_eq!(bandwidth(&Matrix::identity(10)).unwrap(), 0);
    let tri = Matrix::from_fn(10, 10, |i, j| if i.abs_diff(j) <= 1 { 1.0 } else { 0.0 });
    assert_eq!(bandwidth(&tri).unwrap(), 1);
    assert_eq!(bandwidth(&Matrix::zeros(4, 4)).unwrap(), 0);
    // uniform mass: need all but the last 10% of diagonals' entries
    let b = bandwidth(&Matrix::filled(20, 20, 1.0)).unwrap();
    assert!((10..19).contains(&b), "{b}");
}

#[test]
fn zero_token_weights_probe_to_zero() {
    let mut p = token_model(12, 6, 0);
    let t = p.blocks[0].token.as_mut().unwrap();
    for w in [&mut t.w1, &mut t.b1, &mut t.w2, &mut t.b2] {
        w.value.fill(0.0);
    }
    let r = identity_probe(&p, 0).unwrap();
    assert!(r.matrix.data().iter().all(|&v| v == 0.0));
    assert_eq!(r.diagonal_constancy, 1.0);
    assert_eq!(r.matrix.shape(), (12, 12));
}

#[test]
fn circulant_weights_probe_to_toeplitz() {
    let l = 16;
    let mut p = token_model(l, l, 0);
    let t = p.blocks[1].token.as_mut().unwrap();
    t.w1.value = Matrix::identity(l).map(|v| v * 1.5);
    t.b1.value.fill(0.0);
    t.b2.value.fill(0.0);
    let taps: Vec<f32> = (0..l).map(|k| (k as f32 * 0.7).sin()).collect();
    t.w2.value = Matrix::from_fn(l, l, |i, j| taps[(j + l - i) % l]);
    let r = identity_probe(&p, 1).unwrap();
    assert_eq!(r.diagonal_constancy, 1.0);
}

#[test]
fn random_probes_score_low() {
    let mut worst = 0f64;
    for seed in 0..100 {
        let p = token_model(200, 200, seed);
        worst = worst.max(identity_probe(&p, 0).unwrap().diagonal_constancy);
    }
    assert!(worst < 0.2, "{worst}");
}

#[test]
fn probe_matches_basis_vector_oracle() {
    let mut p = token_model(10, 7, 3);
    let mut rng = stream(3, &[]);
    for w in p.tensors_mut() {
        for v in w.value.data_mut() {
            *v += rng.gen_range(-0.3..0.3);
        }
    }
    let r = identity_probe(&p, 1).unwrap();
    let t = p.blocks[1].token.as_ref().unwrap();
    for i in 0..10 {
        let e = Matrix::from_fn(1, 10, |_, j| (i == j) as u8 as f32);
        let mut h = matmul(&e, &t.w1.value).unwrap();
        h.add_assign(&t.b1.value).unwrap();
        let mut y = matmul(&gelu(&h), &t.w2.value).unwrap();
        y.add_assign(&t.b2.value).unwrap();
        for j in 0..10 {
            assert!((y.get(0, j) - r.matrix.get(i, j)).abs() < 1e-6);
        }
    }
}

#[test]
fn ablated_model_cannot_be_probed() {
    let p = ModelParams::init(
        &ModelConfig {
            ablate_token_mixer: true,
            ..ModelConfig {
                n_blocks: 1,
                ..token_model(8, 4, 0).config
            }
        },
        0,
    )
    .unwrap();
    assert!(matches!(identity_probe(&p, 0), Err(Error::Capability(_))));
    assert!(matches!(identity_probe(&token_model(8, 4, 0), 5), Err(Error::Range(_))));
}

fn segments(p: &ModelParams, n: usize, seed: u64, perfect: bool) -> Vec<SegmentExample> {
    let l = p.config.seq_len;
    let mut rng = stream(seed, &[]);
    (0..n)
        .map(|_| {
            let ids = SegmentIds {
                pitch: (0..l).map(|_| rng.gen_range(0..25)).collect(),
                phoneme: (0..l).map(|_| rng.gen_range(0..69)).collect(),
            };
            let target = if perfect {
                p.predict(std::slice::from_ref(&ids)).unwrap()
            } else {
                Matrix::from_fn(l, 120, |_, _| rng.gen_range(-3.0..3.0))
            };
            SegmentExample {
                ids,
                target,
                mask: vec![true; l],
            }
        })
        .collect()
}

#[test]
fn profile_of_perfect_model_is_zero() {
    let p = token_model(12, 6, 1);
    let prof = loss_profile(&p, &segments(&p, 5, 1, true), 2).unwrap();
    assert_eq!(prof, vec![0.0; 12]);
}

#[test]
fn profile_decomposes_overall_loss() {
    let p = token_model(12, 6, 1);
    let ex = segments(&p, 7, 2, false);
    let prof = loss_profile(&p, &ex, 3).unwrap();
    let ids: Vec<_> = ex.iter().map(|e| e.ids.clone()).collect();
    let pred = p.predict(&ids).unwrap();
    let target = Matrix::vstack(&ex.iter().map(|e| e.target.clone()).collect::<Vec<_>>()).unwrap();
    let overall = l1_loss_f64(&pred, &target, None).unwrap();
    let mean = prof.iter().sum::<f64>() / 12.0;
    assert!((mean - overall).abs() < 1e-6, "{mean} vs {overall}");
}

#[test]
fn edge_ratio() {
    let prof: Vec<f64> = (0..200).map(|t| if !(10..190).contains(&t) { 3.0 } else { 1.0 }).collect();
    assert_eq!(edge_middle_ratio(&prof), 3.0);
}

#[test]
fn heatmap_export() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("h.pgm");
    let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    export_heatmap(&m, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..11], b"P5\n2 2\n255\n");
    assert_eq!(&bytes[11..], &[0, 255, 255, 0]);

    export_heatmap(&Matrix::filled(3, 4, -2.5), &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..11], b"P5\n4 3\n255\n");
    assert!(bytes[11..].iter().all(|&b| b == 128));
    assert_eq!(bytes.len(), 11 + 12);

    let m = iid(9, 4).map(|v| v * 1e3);
    export_heatmap(&m, &path).unwrap();
    let back = read_matrix_csv(&dir.path().join("h.csv")).unwrap();
    assert!(back.max_abs_diff(&m) <= 1e-6);
}
