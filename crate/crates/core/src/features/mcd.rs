//! Mel-cepstral distortion between two log-mel spectrograms.

use super::MelSpectrogram;
use crate::error::{Error, Result};

/// Cepstral coefficients compared (c1..=c12; c0 carries overall level and is skipped).
pub const N_CEPS: usize = 12;

const DB: f64 = 10.0 / std::f64::consts::LN_10;

/// Orthonormal DCT-II basis rows `1..=N_CEPS` for a length-`n` input.
fn dct_basis(n: usize) -> Vec<Vec<f64>> {
    let scale = (2.0 / n as f64).sqrt();
    (1..=N_CEPS)
        .map(|k| {
            (0..n)
                .map(|i| scale * (std::f64::consts::PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
                .collect()
        })
        .collect()
}

/// Per-frame MCD in dB.
pub fn mcd_frames(a: &MelSpectrogram, b: &MelSpectrogram) -> Result<Vec<f64>> {
    if a.values.shape() != b.values.shape() {
        return Err(Error::dim(format!(
            "mcd of {:?} against {:?}",
            a.values.shape(),
            b.values.shape()
        )));
    }
    let basis = dct_basis(a.bins());
    Ok((0..a.frames())
        .map(|f| {
            let (ra, rb) = (a.values.row(f), b.values.row(f));
            let sum_sq: f64 = basis
                .iter()
                .map(|w| {
                    let dc: f64 = w
                        .iter()
                        .zip(ra.iter().zip(rb))
                        .map(|(w, (x, y))| w * (*x as f64 - *y as f64))
                        .sum();
                    dc * dc
                })
                .sum();
            DB * (2.0 * sum_sq).sqrt()
        })
        .collect())
}

/// Frame-averaged MCD in dB (0 for zero frames).
pub fn mcd(a: &MelSpectrogram, b: &MelSpectrogram) -> Result<f64> {
    let per = mcd_frames(a, b)?;
    Ok(if per.is_empty() {
        0.0
    } else {
        per.iter().sum::<f64>() / per.len() as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::N_MELS;
    use crate::numerics::Matrix;

    fn spec(f: impl Fn(usize, usize) -> f32) -> MelSpectrogram {
        MelSpectrogram::new(Matrix::from_fn(5, N_MELS, f)).unwrap()
    }

    #[test]
    fn identical_is_zero() {
        let a = spec(|r, c| ((r * 13 + c * 7) % 11) as f32 - 5.0);
        assert_eq!(mcd(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn constant_offset_only_moves_c0() {
        let a = spec(|r, c| ((r * 13 + c * 7) % 11) as f32 - 5.0);
        let b = spec(|r, c| ((r * 13 + c * 7) % 11) as f32 - 5.0 + 2.5);
        assert!(mcd(&a, &b).unwrap() < 1e-4);
    }

    #[test]
    fn unit_c1_difference() {
        // add the inverse-DCT image of a unit c1 to every frame
        let n = N_MELS as f64;
        let a = spec(|r, c| (r as f32 - c as f32) * 0.01);
        let b = spec(|r, c| {
            let basis = (2.0 / n).sqrt() * (std::f64::consts::PI * (2 * c + 1) as f64 / (2.0 * n)).cos();
            (r as f32 - c as f32) * 0.01 + basis as f32
        });
        let want = 10.0 / std::f64::consts::LN_10 * 2f64.sqrt();
        assert!((want - 6.14185).abs() < 1e-5);
        assert!((mcd(&a, &b).unwrap() - want).abs() < 1e-4);
        assert_eq!(mcd(&a, &b).unwrap(), mcd(&b, &a).unwrap());
    }

    #[test]
    fn shape_mismatch() {
        let a = MelSpectrogram::silence(3);
        let b = MelSpectrogram::silence(4);
        assert!(matches!(mcd(&a, &b), Err(Error::Dimension(_))));
    }
}
