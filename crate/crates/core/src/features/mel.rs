//! Log-mel extraction: pre-emphasis, Hann-windowed STFT, HTK mel filterbank.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::wav::Waveform;
use super::{MelSpectrogram, LOG_FLOOR, N_MELS};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const N_FFT: usize = 1024;
pub const HOP: usize = 200;
pub const WIN_LENGTH: usize = 800;
pub const PRE_EMPHASIS: f32 = 0.97;
pub const F_MIN: f64 = 0.0;
pub const F_MAX: f64 = 8000.0;
pub const N_BINS: usize = N_FFT / 2 + 1;

/// HTK mel scale.
pub fn mel_scale(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Mel-scale spacing between adjacent filter centers.
pub fn mel_step() -> f64 {
    (mel_scale(F_MAX) - mel_scale(F_MIN)) / (N_MELS + 1) as f64
}

/// Fractional filter index whose center sits at `hz`.
pub fn filter_position(hz: f64) -> f64 {
    (mel_scale(hz) - mel_scale(F_MIN)) / mel_step() - 1.0
}

/// `N_MELS x N_BINS` triangular filters, unit peak, centers equally spaced in mel.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    pub weights: Matrix,
}

impl MelFilterbank {
    pub fn new(sample_rate: u32) -> Self {
        let step = mel_step();
        let edges: Vec<f64> = (0..N_MELS + 2)
            .map(|i| mel_to_hz(mel_scale(F_MIN) + i as f64 * step))
            .collect();
        let bin_hz = sample_rate as f64 / N_FFT as f64;
        let weights = Matrix::from_fn(N_MELS, N_BINS, |m, k| {
            let f = k as f64 * bin_hz;
            let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let up = (f - lo) / (c - lo);
            let down = (hi - f) / (hi - c);
            up.min(down).max(0.0) as f32
        });
        MelFilterbank { weights }
    }
}

/// Magnitude spectrum `|DFT(frame)|` for bins `0..=n/2`, any length `n`.
pub fn magnitude_spectrum(frame: &[f32]) -> Vec<f32> {
    let fft = FftPlanner::<f64>::new().plan_fft_forward(frame.len());
    magnitude_with(&fft, frame)
}

fn magnitude_with(fft: &Arc<dyn Fft<f64>>, frame: &[f32]) -> Vec<f32> {
    let mut buf: Vec<Complex<f64>> = frame.iter().map(|&x| Complex::new(x as f64, 0.0)).collect();
    fft.process(&mut buf);
    buf[..frame.len() / 2 + 1].iter().map(|c| c.norm() as f32).collect()
}

/// Index into a signal of length `n` with mirror reflection at both ends
/// (the edge sample is not repeated).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Periodic Hann window of `WIN_LENGTH`, zero-padded and centered in `N_FFT`.
fn padded_window() -> Vec<f32> {
    let mut w = vec![0f32; N_FFT];
    let off = (N_FFT - WIN_LENGTH) / 2;
    for n in 0..WIN_LENGTH {
        let phase = 2.0 * std::f64::consts::PI * n as f64 / WIN_LENGTH as f64;
        w[off + n] = (0.5 - 0.5 * phase.cos()) as f32;
    }
    w
}

pub fn frame_count(n_samples: usize) -> usize {
    1 + n_samples / HOP
}

/// Linear STFT magnitudes, `frames x N_BINS`, after pre-emphasis and reflect padding.
pub fn stft_magnitudes(w: &Waveform) -> Result<Matrix> {
    let x = &w.samples;
    let n = x.len();
    if n < 1 {
        return Err(Error::DegenerateInput("empty waveform".into()));
    }
    let mut y = Vec::with_capacity(n);
    y.push(x[0]);
    for t in 1..n {
        y.push(x[t] - PRE_EMPHASIS * x[t - 1]);
    }
    let window = padded_window();
    let pad = (N_FFT / 2) as isize;
    let frames = frame_count(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(N_FFT);
    let mut out = Matrix::zeros(frames, N_BINS);
    let mut frame = vec![0f32; N_FFT];
    for f in 0..frames {
        let start = (f * HOP) as isize - pad;
        for (j, v) in frame.iter_mut().enumerate() {
            *v = y[reflect(start + j as isize, n)] * window[j];
        }
        out.row_mut(f).copy_from_slice(&magnitude_with(&fft, &frame));
    }
    Ok(out)
}

/// Log-mel spectrogram (`ln(max(mel, 1e-5))`) of a 16 kHz waveform.
pub fn extract_mel(w: &Waveform) -> Result<MelSpectrogram> {
    let mags = stft_magnitudes(w)?;
    let fb = MelFilterbank::new(w.sample_rate);
    let mut mel = Matrix::zeros(mags.rows(), N_MELS);
    crate::numerics::gemm(1.0, &mags, crate::numerics::Op::N, &fb.weights, crate::numerics::Op::T, 0.0, &mut mel)?;
    for v in mel.data_mut() {
        *v = v.max(LOG_FLOOR).ln();
    }
    MelSpectrogram::new(mel)
}
