//! Token vocabularies for the two input streams.
//!
//! Phonemes: `PAD`, `REST`, then 19 initials, 21 medials and 27 finals.
//! Pitches: silence, then 24 consecutive MIDI notes starting at the base note.

use serde::{Deserialize, Serialize};

use super::hangul::{Jamo, FINAL_COUNT, INITIAL_COUNT, MEDIAL_COUNT};
use crate::error::{Error, Result};

pub const PHONEME_PAD: usize = 0;
pub const PHONEME_REST: usize = 1;
const INITIAL_OFFSET: usize = 2;
const MEDIAL_OFFSET: usize = INITIAL_OFFSET + INITIAL_COUNT;
const FINAL_OFFSET: usize = MEDIAL_OFFSET + MEDIAL_COUNT;
pub const PHONEME_VOCAB: usize = FINAL_OFFSET + FINAL_COUNT;

pub const PITCH_SILENCE: usize = 0;
pub const PITCH_NOTES: usize = 24;
pub const PITCH_VOCAB: usize = PITCH_NOTES + 1;
pub const DEFAULT_PITCH_BASE: u8 = 55;

/// Phoneme ids of one syllable's onset, nucleus and optional coda.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PhonemeTriple {
    pub onset: usize,
    pub nucleus: usize,
    pub coda: Option<usize>,
}

impl From<Jamo> for PhonemeTriple {
    fn from(j: Jamo) -> Self {
        PhonemeTriple {
            onset: INITIAL_OFFSET + j.initial as usize,
            nucleus: MEDIAL_OFFSET + j.medial as usize,
            coda: j.coda.map(|f| FINAL_OFFSET + f as usize - 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhonemeClass {
    Pad,
    Rest,
    Onset,
    Nucleus,
    Coda,
}

pub fn phoneme_class(id: usize) -> Option<PhonemeClass> {
    Some(match id {
        PHONEME_PAD => PhonemeClass::Pad,
        PHONEME_REST => PhonemeClass::Rest,
        i if i < MEDIAL_OFFSET => PhonemeClass::Onset,
        i if i < FINAL_OFFSET => PhonemeClass::Nucleus,
        i if i < PHONEME_VOCAB => PhonemeClass::Coda,
        _ => return None,
    })
}

/// Index of a phoneme within its class (initial, medial or final table).
pub fn phoneme_index_in_class(id: usize) -> Option<usize> {
    match phoneme_class(id)? {
        PhonemeClass::Onset => Some(id - INITIAL_OFFSET),
        PhonemeClass::Nucleus => Some(id - MEDIAL_OFFSET),
        PhonemeClass::Coda => Some(id - FINAL_OFFSET),
        _ => None,
    }
}

/// Maps MIDI note numbers onto the 25-token pitch vocabulary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PitchVocab {
    pub base: u8,
}

impl Default for PitchVocab {
    fn default() -> Self {
        PitchVocab { base: DEFAULT_PITCH_BASE }
    }
}

impl PitchVocab {
    pub fn id(&self, midi: u8) -> Result<usize> {
        let lo = self.base as usize;
        let m = midi as usize;
        if m < lo || m >= lo + PITCH_NOTES {
            return Err(Error::Range(format!(
                "MIDI note {midi} outside pitch vocabulary {lo}..={}",
                lo + PITCH_NOTES - 1
            )));
        }
        Ok(1 + m - lo)
    }

    /// MIDI note for a pitch id; `None` for silence.
    pub fn midi(&self, id: usize) -> Option<u8> {
        (1..PITCH_VOCAB).contains(&id).then(|| self.base + (id - 1) as u8)
    }

    pub fn notes(&self) -> std::ops::Range<u8> {
        self.base..self.base + PITCH_NOTES as u8
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::hangul::decompose;

    #[test]
    fn sizes() {
        assert_eq!(PITCH_VOCAB, 25);
        assert_eq!(PHONEME_VOCAB, 69);
    }

    #[test]
    fn pitch_ids_dense() {
        let v = PitchVocab::default();
        assert_eq!(v.id(55).unwrap(), 1);
        assert_eq!(v.id(78).unwrap(), 24);
        assert!(matches!(v.id(79), Err(Error::Range(_))));
        assert!(v.id(54).is_err());
        assert_eq!(v.midi(24), Some(78));
        assert_eq!(v.midi(PITCH_SILENCE), None);
    }

    #[test]
    fn triple_classes() {
        let t = PhonemeTriple::from(decompose('강').unwrap());
        assert_eq!(phoneme_class(t.onset), Some(PhonemeClass::Onset));
        assert_eq!(phoneme_class(t.nucleus), Some(PhonemeClass::Nucleus));
        assert_eq!(t.coda.and_then(phoneme_class), Some(PhonemeClass::Coda));
        assert_eq!(t.coda.and_then(phoneme_index_in_class), Some(20));
        let last = PhonemeTriple::from(decompose('힣').unwrap());
        assert_eq!(last.coda, Some(PHONEME_VOCAB - 1));
        assert_eq!(phoneme_class(PHONEME_VOCAB), None);
    }
}
