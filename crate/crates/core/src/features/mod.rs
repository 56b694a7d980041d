//! Audio-side features: WAV input, log-mel extraction, the MCD metric,
//! `MEL1` files and the synthetic training corpus.

pub mod mcd;
pub mod mel;
pub mod synth;
pub mod wav;

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub use mcd::mcd;
pub use mel::{extract_mel, mel_scale, mel_to_hz, MelFilterbank};
pub use synth::{synth_dataset, SynthConfig, SynthSong};
pub use wav::{read_wav, Waveform};

pub const N_MELS: usize = 120;
pub const LOG_FLOOR: f32 = 1e-5;

pub fn log_floor() -> f32 {
    LOG_FLOOR.ln()
}

/// `frames x 120` natural-log mel magnitudes.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    pub values: Matrix,
}

const MEL1_MAGIC: &[u8; 4] = b"MEL1";

impl MelSpectrogram {
    pub fn new(values: Matrix) -> Result<Self> {
        if values.cols() != N_MELS {
            return Err(Error::dim(format!("mel spectrogram needs {N_MELS} bins, got {}", values.cols())));
        }
        Ok(MelSpectrogram { values })
    }

    /// All frames at the log floor.
    pub fn silence(frames: usize) -> Self {
        MelSpectrogram {
            values: Matrix::filled(frames, N_MELS, log_floor()),
        }
    }

    pub fn frames(&self) -> usize {
        self.values.rows()
    }

    pub fn bins(&self) -> usize {
        self.values.cols()
    }

    /// `MEL1`: magic, u32 frames, u32 bins, little-endian f32 row-major.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.values.len());
        out.extend_from_slice(MEL1_MAGIC);
        out.extend_from_slice(&(self.frames() as u32).to_le_bytes());
        out.extend_from_slice(&(self.bins() as u32).to_le_bytes());
        for v in self.values.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..4] != MEL1_MAGIC {
            return Err(Error::format("missing MEL1 header"));
        }
        let frames = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let bins = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = &bytes[12..];
        if Some(body.len()) != frames.checked_mul(bins).and_then(|n| n.checked_mul(4)) {
            return Err(Error::format(format!("MEL1 body holds {} bytes, header says {frames}x{bins}", body.len())));
        }
        let data = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        MelSpectrogram::new(Matrix::from_vec(frames, bins, data)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
