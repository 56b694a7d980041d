//! Expansion of note events to spectrogram-frame pitch and phoneme ids.

use serde::{Deserialize, Serialize};

use super::hangul;
use super::vocab::{PhonemeTriple, PitchVocab, PHONEME_PAD, PHONEME_REST, PITCH_SILENCE};
use super::{Score, Syllable};
use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
pub const HOP: u32 = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRate {
    pub sample_rate: u32,
    pub hop: u32,
}

impl Default for FrameRate {
    fn default() -> Self {
        FrameRate {
            sample_rate: SAMPLE_RATE,
            hop: HOP,
        }
    }
}

impl FrameRate {
    pub fn frames_per_second(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    pub fn seconds(&self, frames: usize) -> f64 {
        frames as f64 / self.frames_per_second()
    }
}

/// `round(t * sample_rate / hop)`.
pub fn time_to_frame(t: f64, rate: FrameRate) -> usize {
    debug_assert!(t >= 0.0);
    (t * rate.sample_rate as f64 / rate.hop as f64).round() as usize
}

/// Frame-level pitch and phoneme ids, one pair per mel frame.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FrameAlignment {
    pub pitch_ids: Vec<usize>,
    pub phoneme_ids: Vec<usize>,
}

impl FrameAlignment {
    pub fn frames(&self) -> usize {
        self.pitch_ids.len()
    }

    /// Ids for frames `[start, start + len)`, padded with silence/PAD past the end.
    pub fn window(&self, start: usize, len: usize) -> (Vec<usize>, Vec<usize>) {
        let pick = |src: &[usize], pad: usize| {
            (start..start + len)
                .map(|i| src.get(i).copied().unwrap_or(pad))
                .collect::<Vec<_>>()
        };
        (pick(&self.pitch_ids, PITCH_SILENCE), pick(&self.phoneme_ids, PHONEME_PAD))
    }

    pub fn validate(&self) -> Result<()> {
        if self.pitch_ids.len() != self.phoneme_ids.len() {
            return Err(Error::Alignment(format!(
                "{} pitch ids vs {} phoneme ids",
                self.pitch_ids.len(),
                self.phoneme_ids.len()
            )));
        }
        Ok(())
    }
}

/// Frame span `[start, end)` of one sounding note after rounding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoteSpan {
    pub start: usize,
    pub end: usize,
    pub pitch_id: usize,
    pub phonemes: PhonemeTriple,
}

/// Frames given to (onset, nucleus, coda) for a note spanning `n` frames.
///
/// The consonants get `k` frames each, clamped so the nucleus keeps at
/// least one frame.
pub fn allocate(n: usize, k: usize, has_coda: bool) -> (usize, usize, usize) {
    if n == 0 {
        return (0, 0, 0);
    }
    if has_coda {
        let ke = k.min((n - 1) / 2);
        (ke, n - 2 * ke, ke)
    } else {
        let ke = k.min(n - 1);
        (ke, n - ke, 0)
    }
}

/// Rounds note boundaries to frames. Empty spans borrow one frame from a
/// directly preceding rest; notes with nothing to borrow are an error.
fn note_spans(score: &Score, rate: FrameRate, pitches: &PitchVocab) -> Result<(Vec<NoteSpan>, usize)> {
    let mut spans: Vec<NoteSpan> = Vec::new();
    let mut natural_end = 0;
    for ev in score.notes() {
        let mut start = time_to_frame(ev.start_s, rate);
        let end = time_to_frame(ev.end_s, rate);
        natural_end = natural_end.max(end);
        let (Some(midi), Syllable::Hangul(c)) = (ev.pitch, ev.syllable) else {
            continue;
        };
        let pitch_id = pitches.id(midi)?;
        let phonemes = PhonemeTriple::from(hangul::decompose(c)?);
        let prev_end = spans.last().map_or(0, |s| s.end);
        if start == end {
            if start > prev_end {
                start -= 1;
            } else {
                return Err(Error::Alignment(format!(
                    "note at {:.4}s rounds to zero frames and has no preceding rest to borrow from",
                    ev.start_s
                )));
            }
        }
        spans.push(NoteSpan {
            start,
            end,
            pitch_id,
            phonemes,
        });
    }
    Ok((spans, natural_end))
}

/// Expands `score` to per-frame ids with `k` consonant frames per onset/coda.
pub fn align_to_frames(
    score: &Score,
    k: usize,
    total_frames: Option<usize>,
    rate: FrameRate,
    pitches: &PitchVocab,
) -> Result<FrameAlignment> {
    align_with_spans(score, k, total_frames, rate, pitches).map(|(a, _)| a)
}

/// [`align_to_frames`] that also returns each note's frame span.
pub fn align_with_spans(
    score: &Score,
    k: usize,
    total_frames: Option<usize>,
    rate: FrameRate,
    pitches: &PitchVocab,
) -> Result<(FrameAlignment, Vec<NoteSpan>)> {
    let (spans, natural_end) = note_spans(score, rate, pitches)?;
    let last_note_end = spans.last().map_or(0, |s| s.end);
    let frames = match total_frames {
        Some(f) if f < last_note_end => {
            return Err(Error::Range(format!(
                "{f} frames requested but the last note ends at frame {last_note_end}"
            )));
        }
        Some(f) => f,
        None => natural_end,
    };
    let mut pitch_ids = vec![PITCH_SILENCE; frames];
    let mut phoneme_ids = vec![PHONEME_REST; frames];
    for s in &spans {
        let (on, nuc, coda) = allocate(s.end - s.start, k, s.phonemes.coda.is_some());
        pitch_ids[s.start..s.end].fill(s.pitch_id);
        let ph = &mut phoneme_ids[s.start..s.end];
        ph[..on].fill(s.phonemes.onset);
        ph[on..on + nuc].fill(s.phonemes.nucleus);
        if let Some(c) = s.phonemes.coda {
            ph[on + nuc..].fill(c);
        }
        debug_assert_eq!(on + nuc + coda, s.end - s.start);
    }
    Ok((FrameAlignment { pitch_ids, phoneme_ids }, spans))
}
