//! Deterministic synthetic corpus: random monophonic scores and a rule-based
//! score-to-mel renderer standing in for recorded singing.
//!
//! Rendering rules, in linear magnitude before the log:
//! - nucleus frames: Gaussian bumps at the filter position of each harmonic
//!   `h * f0` (`h = 1..=6`, amplitude `1/h`) over a faint spectral tilt
//! - onset / coda frames: the harmonic frame at 0.4x plus a fixed broadband
//!   template per consonant
//! - the first 3 frames of every note cross-fade linearly from the frame
//!   before the note (another note or silence)
//! - rest frames sit at the log floor

use rand::seq::SliceRandom;
use rand::Rng;

use super::mel::filter_position;
use super::{MelSpectrogram, LOG_FLOOR, N_MELS};
use crate::error::Result;
use crate::numerics::rng::stream;
use crate::numerics::Matrix;
use crate::score::vocab::{phoneme_class, phoneme_index_in_class, PhonemeClass, PitchVocab};
use crate::score::{align_with_spans, FrameAlignment, FrameRate, NoteEvent, NoteSpan, Score};

pub const HARMONICS: usize = 6;
pub const CROSSFADE_FRAMES: usize = 3;
const BUMP_WIDTH: f64 = 1.5;
const CONSONANT_HARMONIC_GAIN: f64 = 0.4;

/// Lyrics drawn by the generator; a mix of open and closed syllables.
pub const SYLLABLE_POOL: [char; 18] = [
    '가', '나', '다', '라', '마', '바', '사', '아', '자', '하', '강', '날', '달', '봄', '별', '산', '엄', '빛',
];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub songs: usize,
    pub seconds_per_song: f64,
    pub seed: u64,
    /// Consonant frames per onset/coda in the alignment.
    pub k: usize,
    pub pitch_vocab: PitchVocab,
    pub rate: FrameRate,
    /// Stream offset, so validation songs never repeat training songs.
    pub first_song: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            songs: 40,
            seconds_per_song: 30.0,
            seed: 0,
            k: 3,
            pitch_vocab: PitchVocab::default(),
            rate: FrameRate::default(),
            first_song: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSong {
    pub score: Score,
    pub alignment: FrameAlignment,
    pub mel: MelSpectrogram,
}

pub fn midi_to_hz(midi: f64) -> f64 {
    440.0 * 2f64.powf((midi - 69.0) / 12.0)
}

/// Random score of `seconds` length.
pub fn random_score(seed: u64, song: u64, seconds: f64, vocab: &PitchVocab) -> Score {
    let mut rng = stream(seed, &[0x736f_6e67, song]);
    let notes: Vec<u8> = vocab.notes().collect();
    let mut events = Vec::new();
    let mut t = 0.0f64;
    loop {
        let rest = rng.gen_bool(0.2);
        let dur = if rest { rng.gen_range(0.1..0.5) } else { rng.gen_range(0.2..0.9) };
        if t + dur > seconds {
            break;
        }
        if rest {
            events.push(NoteEvent::rest(t, t + dur));
        } else {
            let pitch = *notes.choose(&mut rng).unwrap();
            let syl = *SYLLABLE_POOL.choose(&mut rng).unwrap();
            events.push(NoteEvent::note(pitch, t, t + dur, syl));
        }
        t += dur;
    }
    Score::new(events).expect("generated events are ordered and disjoint")
}

fn harmonic_frame(midi: u8) -> Vec<f64> {
    let f0 = midi_to_hz(midi as f64);
    let mut out: Vec<f64> = (0..N_MELS).map(|j| 0.01 * (-(j as f64) / 60.0).exp()).collect();
    for h in 1..=HARMONICS {
        let f = h as f64 * f0;
        if f >= super::mel::F_MAX {
            break;
        }
        let pos = filter_position(f);
        let amp = 1.0 / h as f64;
        for (j, v) in out.iter_mut().enumerate() {
            let d = j as f64 - pos;
            *v += amp * (-d * d / (2.0 * BUMP_WIDTH * BUMP_WIDTH)).exp();
        }
    }
    out
}

/// Broadband template for consonant `class` (0..19 onsets, 19.. codas).
fn consonant_template(class: usize) -> Vec<f64> {
    let center = 20.0 + ((class * 37) % 90) as f64;
    let ripple = 0.2 + 0.05 * (class % 7) as f64;
    let phase = class as f64 * 0.9;
    (0..N_MELS)
        .map(|j| {
            let x = j as f64;
            let env = (-((x - center) / 25.0).powi(2)).exp();
            0.3 * env * (0.6 + 0.4 * (ripple * x + phase).sin())
        })
        .collect()
}

/// Renders the oracle target for an alignment whose notes occupy `spans`.
pub fn render_target(alignment: &FrameAlignment, spans: &[NoteSpan], vocab: &PitchVocab) -> MelSpectrogram {
    let frames = alignment.frames();
    let mut raw = vec![vec![0f64; N_MELS]; frames];
    for (f, frame) in raw.iter_mut().enumerate() {
        let Some(midi) = vocab.midi(alignment.pitch_ids[f]) else {
            continue;
        };
        let harm = harmonic_frame(midi);
        let ph = alignment.phoneme_ids[f];
        let consonant = match phoneme_class(ph) {
            Some(PhonemeClass::Onset) => phoneme_index_in_class(ph),
            Some(PhonemeClass::Coda) => phoneme_index_in_class(ph).map(|i| i + 19),
            _ => None,
        };
        match consonant {
            Some(class) => {
                let tpl = consonant_template(class);
                for ((v, h), t) in frame.iter_mut().zip(&harm).zip(&tpl) {
                    *v = CONSONANT_HARMONIC_GAIN * h + t;
                }
            }
            None => frame.copy_from_slice(&harm),
        }
    }
    let mut out = raw.clone();
    for s in spans {
        if s.start == 0 {
            continue;
        }
        let before = &raw[s.start - 1];
        for j in 0..CROSSFADE_FRAMES.min(s.end - s.start) {
            let alpha = (j + 1) as f64 / (CROSSFADE_FRAMES + 1) as f64;
            let f = s.start + j;
            for (o, (b, r)) in out[f].iter_mut().zip(before.iter().zip(&raw[f])) {
                *o = (1.0 - alpha) * b + alpha * r;
            }
        }
    }
    let floor = LOG_FLOOR as f64;
    let values = Matrix::from_fn(frames, N_MELS, |f, j| out[f][j].max(floor).ln() as f32);
    MelSpectrogram { values }
}

/// Renders the target for a score at the given consonant length.
pub fn render_score(score: &Score, k: usize, total_frames: Option<usize>, rate: FrameRate, vocab: &PitchVocab) -> Result<SynthSong> {
    let (alignment, spans) = align_with_spans(score, k, total_frames, rate, vocab)?;
    let mel = render_target(&alignment, &spans, vocab);
    Ok(SynthSong {
        score: score.clone(),
        alignment,
        mel,
    })
}

/// `cfg.songs` random songs with their oracle mel targets.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Vec<SynthSong>> {
    let frames = crate::score::time_to_frame(cfg.seconds_per_song, cfg.rate);
    (0..cfg.songs as u64)
        .map(|i| {
            let score = random_score(cfg.seed, cfg.first_song + i, cfg.seconds_per_song, &cfg.pitch_vocab);
            render_score(&score, cfg.k, Some(frames), cfg.rate, &cfg.pitch_vocab)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::log_floor;

    fn small() -> SynthConfig {
        SynthConfig {
            songs: 3,
            seconds_per_song: 4.0,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = synth_dataset(&small()).unwrap();
        let b = synth_dataset(&small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].mel.frames(), 320);
        assert_eq!(a[0].alignment.frames(), 320);
        let c = synth_dataset(&SynthConfig { seed: 6, ..small() }).unwrap();
        assert_ne!(a[0].mel, c[0].mel);
    }

    #[test]
    fn rest_only_is_floor() {
        let score = Score::new(vec![NoteEvent::rest(0.0, 1.0)]).unwrap();
        let s = render_score(&score, 3, None, FrameRate::default(), &PitchVocab::default()).unwrap();
        assert_eq!(s.mel.frames(), 80);
        assert!(s.mel.values.data().iter().all(|&v| v == log_floor()));
    }

    #[test]
    fn a440_nucleus_peak() {
        let score = Score::new(vec![NoteEvent::note(69, 0.0, 1.0, '아')]).unwrap();
        let s = render_score(&score, 3, None, FrameRate::default(), &PitchVocab::default()).unwrap();
        // independent placement: filters are centered at (j + 1) * mel(8000) / 121
        let mel440 = 2595.0 * (1.0f64 + 440.0 / 700.0).log10();
        let step = 2595.0 * (1.0f64 + 8000.0 / 700.0).log10() / 121.0;
        let want = (mel440 / step - 1.0).round() as usize;
        for f in 10..70 {
            let row = s.mel.values.row(f);
            let argmax = row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            assert_eq!(argmax, want);
        }
    }

    #[test]
    fn pitch_coverage() {
        let s = synth_dataset(&SynthConfig { songs: 4, seconds_per_song: 30.0, ..small() }).unwrap();
        let mut seen = [false; 25];
        for song in &s {
            for &p in &song.alignment.pitch_ids {
                seen[p] = true;
            }
        }
        assert!(seen.iter().all(|&x| x));
    }

    #[test]
    fn crossfade_needs_previous_frame() {
        // same note preceded by different pitches differs only in the fade frames
        let mk = |prev: u8| {
            let score = Score::new(vec![NoteEvent::note(prev, 0.0, 0.5, '아'), NoteEvent::note(64, 0.5, 1.0, '아')]).unwrap();
            render_score(&score, 3, None, FrameRate::default(), &PitchVocab::default()).unwrap()
        };
        let (a, b) = (mk(60), mk(70));
        for f in 40..80 {
            let same = a.mel.values.row(f) == b.mel.values.row(f);
            assert_eq!(same, f >= 40 + CROSSFADE_FRAMES, "frame {f}");
        }
    }
}
