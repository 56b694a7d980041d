//! Hangul syllable decomposition by Unicode block arithmetic.

use crate::error::{Error, Result};

pub const SYLLABLE_BASE: u32 = 0xAC00;
pub const SYLLABLE_LAST: u32 = 0xD7A3;
pub const INITIAL_COUNT: usize = 19;
pub const MEDIAL_COUNT: usize = 21;
/// Final consonants, excluding the "no final" slot at index 0.
pub const FINAL_COUNT: usize = 27;

const MEDIAL_FINAL: u32 = (MEDIAL_COUNT * (FINAL_COUNT + 1)) as u32;
const FINAL_SLOTS: u32 = (FINAL_COUNT + 1) as u32;

/// Compatibility jamo for display, indexed like the decomposition.
pub const INITIALS: [char; INITIAL_COUNT] = [
    'ㄱ', 'ㄲ', 'ㄴ', 'ㄷ', 'ㄸ', 'ㄹ', 'ㅁ', 'ㅂ', 'ㅃ', 'ㅅ', 'ㅆ', 'ㅇ', 'ㅈ', 'ㅉ', 'ㅊ', 'ㅋ', 'ㅌ', 'ㅍ', 'ㅎ',
];
pub const MEDIALS: [char; MEDIAL_COUNT] = [
    'ㅏ', 'ㅐ', 'ㅑ', 'ㅒ', 'ㅓ', 'ㅔ', 'ㅕ', 'ㅖ', 'ㅗ', 'ㅘ', 'ㅙ', 'ㅚ', 'ㅛ', 'ㅜ', 'ㅝ', 'ㅞ', 'ㅟ', 'ㅠ', 'ㅡ', 'ㅢ', 'ㅣ',
];
pub const FINALS: [char; FINAL_COUNT] = [
    'ㄱ', 'ㄲ', 'ㄳ', 'ㄴ', 'ㄵ', 'ㄶ', 'ㄷ', 'ㄹ', 'ㄺ', 'ㄻ', 'ㄼ', 'ㄽ', 'ㄾ', 'ㄿ', 'ㅀ', 'ㅁ', 'ㅂ', 'ㅄ', 'ㅅ', 'ㅆ',
    'ㅇ', 'ㅈ', 'ㅊ', 'ㅋ', 'ㅌ', 'ㅍ', 'ㅎ',
];

/// Jamo indices of one syllable. `coda` is the 1-based final index
/// (`None` when the syllable has no final consonant).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Jamo {
    pub initial: u8,
    pub medial: u8,
    pub coda: Option<u8>,
}

pub fn is_syllable(c: char) -> bool {
    (SYLLABLE_BASE..=SYLLABLE_LAST).contains(&(c as u32))
}

pub fn decompose(c: char) -> Result<Jamo> {
    if !is_syllable(c) {
        return Err(Error::Input(format!("{c:?} (U+{:04X}) is not a Hangul syllable", c as u32)));
    }
    let s = c as u32 - SYLLABLE_BASE;
    let fin = (s % FINAL_SLOTS) as u8;
    Ok(Jamo {
        initial: (s / MEDIAL_FINAL) as u8,
        medial: ((s % MEDIAL_FINAL) / FINAL_SLOTS) as u8,
        coda: (fin != 0).then_some(fin),
    })
}

pub fn compose(j: Jamo) -> Option<char> {
    if j.initial as usize >= INITIAL_COUNT || j.medial as usize >= MEDIAL_COUNT {
        return None;
    }
    let fin = j.coda.map_or(0, u32::from);
    if j.coda == Some(0) || fin > FINAL_COUNT as u32 {
        return None;
    }
    char::from_u32(SYLLABLE_BASE + j.initial as u32 * MEDIAL_FINAL + j.medial as u32 * FINAL_SLOTS + fin)
}
