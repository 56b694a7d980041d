//! RIFF/WAVE reader for 16 kHz mono PCM16.

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub sample_rate: u32,
    pub samples: Vec<f32>,
}

impl Waveform {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn le_u16(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

pub fn read_wav(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::format("not a RIFF/WAVE file"));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let len = le_u32(&bytes[pos + 4..pos + 8]) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::format("WAV chunk runs past end of file"))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if len < 16 {
                    return Err(Error::format("fmt chunk too short"));
                }
                fmt = Some((le_u16(&body[0..2]), le_u16(&body[2..4]), le_u32(&body[4..8]), le_u16(&body[14..16])));
            }
            b"data" => {
                let (codec, channels, rate, bits) = fmt.ok_or_else(|| Error::format("data chunk before fmt chunk"))?;
                if codec != 1 || bits != 16 {
                    return Err(Error::format(format!("unsupported codec {codec} / {bits} bits; need PCM16")));
                }
                if channels != 1 {
                    return Err(Error::format(format!("{channels} channels; need mono")));
                }
                if rate != SAMPLE_RATE {
                    return Err(Error::format(format!("sample rate {rate} Hz; need {SAMPLE_RATE} Hz")));
                }
                let samples = body
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
                    .collect();
                return Ok(Waveform {
                    sample_rate: rate,
                    samples,
                });
            }
            _ => {}
        }
        pos = body_end + (len & 1);
    }
    Err(Error::format("WAV file has no data chunk"))
}

/// Encodes samples (clamped to [-1, 1]) as a canonical 44-byte-header PCM16 file.
pub fn write_wav_pcm16(samples: &[f32], sample_rate: u32, channels: u16) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * channels as u32 * 2).to_le_bytes());
    out.extend_from_slice(&(channels * 2).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_second_of_silence() {
        let w = read_wav(&write_wav_pcm16(&vec![0.0; 16_000], 16_000, 1)).unwrap();
        assert_eq!(w.samples.len(), 16_000);
        assert_eq!(w.duration_s(), 1.0);
        assert!(w.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn full_scale_sample() {
        let w = read_wav(&write_wav_pcm16(&[1.0], 16_000, 1)).unwrap();
        assert_eq!(w.samples[0], 32767.0 / 32768.0);
        assert!((w.samples[0] - 0.99997).abs() < 1e-5);
    }

    #[test]
    fn rejects_other_layouts() {
        assert!(matches!(read_wav(&write_wav_pcm16(&[0.0, 0.0], 16_000, 2)), Err(Error::Format(_))));
        assert!(matches!(read_wav(&write_wav_pcm16(&[0.0], 22_050, 1)), Err(Error::Format(_))));
        let mut float = write_wav_pcm16(&[0.0], 16_000, 1);
        float[20] = 3;
        assert!(read_wav(&float).is_err());
        assert!(read_wav(b"RIFF0000WAVE").is_err());
    }
}
