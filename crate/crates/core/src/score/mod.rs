//! Scores: note events with Hangul lyrics, their JSON and SMF readers, and
//! expansion to frame-level pitch/phoneme id sequences.

pub mod align;
pub mod hangul;
pub mod smf;
pub mod vocab;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use align::{align_to_frames, align_with_spans, allocate, time_to_frame, FrameAlignment, FrameRate, NoteSpan};
pub use hangul::decompose as decompose_hangul;
pub use vocab::{PhonemeTriple, PitchVocab};

/// Lyric attached to a note event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Syllable {
    Hangul(char),
    Rest,
}

impl fmt::Display for Syllable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Syllable::Hangul(c) => write!(f, "{c}"),
            Syllable::Rest => f.write_str(REST_TEXT),
        }
    }
}

const REST_TEXT: &str = "R";

impl Syllable {
    pub fn parse(text: &str) -> Result<Self> {
        if text == REST_TEXT {
            return Ok(Syllable::Rest);
        }
        let mut chars = text.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if hangul::is_syllable(c) => Ok(Syllable::Hangul(c)),
            _ => Err(Error::format(format!("{text:?} is not a single Hangul syllable or \"R\""))),
        }
    }

    pub fn is_rest(&self) -> bool {
        matches!(self, Syllable::Rest)
    }
}

/// One monophonic event. `pitch` is `None` for rests.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoteEvent {
    pub pitch: Option<u8>,
    pub start_s: f64,
    pub end_s: f64,
    pub syllable: Syllable,
}

impl NoteEvent {
    pub fn note(pitch: u8, start_s: f64, end_s: f64, syllable: char) -> Self {
        NoteEvent {
            pitch: Some(pitch),
            start_s,
            end_s,
            syllable: Syllable::Hangul(syllable),
        }
    }

    pub fn rest(start_s: f64, end_s: f64) -> Self {
        NoteEvent {
            pitch: None,
            start_s,
            end_s,
            syllable: Syllable::Rest,
        }
    }

    pub fn is_rest(&self) -> bool {
        self.pitch.is_none()
    }
}

/// Sorted, non-overlapping note events.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Score {
    notes: Vec<NoteEvent>,
}

#[derive(Serialize, Deserialize)]
struct RawNote {
    pitch: i64,
    start_s: f64,
    end_s: f64,
    syllable: String,
}

#[derive(Serialize, Deserialize)]
struct RawScore {
    notes: Vec<RawNote>,
}

impl Score {
    /// Sorts by start time and validates the monophonic invariants.
    pub fn new(mut notes: Vec<NoteEvent>) -> Result<Self> {
        for n in &notes {
            if !(n.start_s.is_finite() && n.end_s.is_finite()) || n.start_s < 0.0 {
                return Err(Error::format(format!(
                    "bad event times {}..{}",
                    n.start_s, n.end_s
                )));
            }
            if n.end_s <= n.start_s {
                return Err(Error::format(format!(
                    "event ends at {} before it starts at {}",
                    n.end_s, n.start_s
                )));
            }
            if n.pitch.is_some_and(|p| p > 127) {
                return Err(Error::format(format!("MIDI pitch {:?} out of range", n.pitch)));
            }
            if n.pitch.is_none() != n.syllable.is_rest() {
                return Err(Error::format("rests need both pitch -1 and syllable \"R\""));
            }
        }
        notes.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        for w in notes.windows(2) {
            if w[1].start_s < w[0].end_s {
                return Err(Error::format(format!(
                    "overlapping events at {}s and {}s",
                    w[0].start_s, w[1].start_s
                )));
            }
        }
        Ok(Score { notes })
    }

    pub fn notes(&self) -> &[NoteEvent] {
        &self.notes
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    /// End time of the last event (0 for an empty score).
    pub fn duration_s(&self) -> f64 {
        self.notes.last().map_or(0.0, |n| n.end_s)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let raw: RawScore = serde_json::from_slice(bytes).map_err(|e| Error::format(format!("score JSON: {e}")))?;
        let notes = raw
            .notes
            .into_iter()
            .map(|n| {
                let syllable = Syllable::parse(&n.syllable)?;
                let pitch = match n.pitch {
                    -1 => None,
                    p @ 0..=127 => Some(p as u8),
                    p => return Err(Error::format(format!("MIDI pitch {p} out of range"))),
                };
                Ok(NoteEvent {
                    pitch,
                    start_s: n.start_s,
                    end_s: n.end_s,
                    syllable,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Score::new(notes)
    }

    pub fn to_json(&self) -> String {
        let raw = RawScore {
            notes: self
                .notes
                .iter()
                .map(|n| RawNote {
                    pitch: n.pitch.map_or(-1, i64::from),
                    start_s: n.start_s,
                    end_s: n.end_s,
                    syllable: n.syllable.to_string(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("score serializes")
    }
}

/// Parses the score JSON format.
pub fn parse_score_json(bytes: &[u8]) -> Result<Score> {
    Score::from_json(bytes)
}
