//! Minimal Standard MIDI File reader: format 0/1, note on/off and tempo.

use super::{NoteEvent, Score, Syllable};
use crate::error::{Error, Result};

const DEFAULT_TEMPO_US: u32 = 500_000;

#[derive(Clone, Copy, Debug)]
enum Timing {
    Ppq(u16),
    /// Ticks per second for SMPTE time division.
    Smpte(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Off,
    On,
}

#[derive(Clone, Copy, Debug)]
struct RawNote {
    tick: u64,
    kind: Kind,
    key: u8,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    fn done(&self) -> bool {
        self.pos >= self.buf.len()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format("MIDI data truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn peek(&self) -> Result<u8> {
        self.buf.get(self.pos).copied().ok_or_else(|| Error::format("MIDI data truncated"))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn vlq(&mut self) -> Result<u32> {
        let mut v = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            v = (v << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(Error::format("variable-length quantity longer than 4 bytes"))
    }
}

fn read_track(data: &[u8], notes: &mut Vec<RawNote>, tempos: &mut Vec<(u64, u32)>) -> Result<()> {
    let mut c = Cursor::new(data);
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    while !c.done() {
        tick += c.vlq()? as u64;
        let status = if c.peek()? & 0x80 != 0 {
            c.u8()?
        } else {
            running.ok_or_else(|| Error::format("data byte without running status"))?
        };
        match status {
            0xff => {
                running = None;
                let kind = c.u8()?;
                let len = c.vlq()? as usize;
                let body = c.take(len)?;
                match kind {
                    0x51 if len == 3 => {
                        tempos.push((tick, u32::from_be_bytes([0, body[0], body[1], body[2]])));
                    }
                    0x51 => return Err(Error::format("tempo meta event must carry 3 bytes")),
                    0x2f => break,
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = c.vlq()? as usize;
                c.take(len)?;
            }
            0x80..=0xef => {
                running = Some(status);
                let data_len = match status & 0xf0 {
                    0xc0 | 0xd0 => 1,
                    _ => 2,
                };
                let d = c.take(data_len)?;
                match status & 0xf0 {
                    0x80 => notes.push(RawNote { tick, kind: Kind::Off, key: d[0] }),
                    0x90 if d[1] == 0 => notes.push(RawNote { tick, kind: Kind::Off, key: d[0] }),
                    0x90 => notes.push(RawNote { tick, kind: Kind::On, key: d[0] }),
                    _ => {}
                }
            }
            s => return Err(Error::format(format!("unsupported MIDI status byte {s:#04x}"))),
        }
    }
    Ok(())
}

/// Piecewise-constant tempo map converting ticks to seconds.
struct TempoMap {
    timing: Timing,
    /// (tick, seconds at tick, microseconds per quarter note from tick on)
    segments: Vec<(u64, f64, u32)>,
}

impl TempoMap {
    fn new(timing: Timing, mut changes: Vec<(u64, u32)>) -> Self {
        changes.sort_by_key(|&(t, _)| t);
        let mut segments = vec![(0u64, 0.0f64, DEFAULT_TEMPO_US)];
        for (tick, tempo) in changes {
            let secs = Self::advance(timing, segments.last().unwrap(), tick);
            let last = segments.last_mut().unwrap();
            if last.0 == tick {
                last.2 = tempo;
            } else {
                segments.push((tick, secs, tempo));
            }
        }
        TempoMap { timing, segments }
    }

    fn advance(timing: Timing, seg: &(u64, f64, u32), tick: u64) -> f64 {
        let dt = (tick - seg.0) as f64;
        match timing {
            Timing::Ppq(ppq) => seg.1 + dt * seg.2 as f64 / (ppq as f64 * 1e6),
            Timing::Smpte(tps) => seg.1 + dt / tps,
        }
    }

    fn seconds(&self, tick: u64) -> f64 {
        let i = self.segments.partition_point(|s| s.0 <= tick) - 1;
        Self::advance(self.timing, &self.segments[i], tick)
    }
}

/// Reads notes from a format 0/1 SMF and attaches `lyrics[i]` to the i-th note.
pub fn parse_smf(bytes: &[u8], lyrics: &[String]) -> Result<Score> {
    let mut c = Cursor::new(bytes);
    if c.take(4)? != b"MThd" {
        return Err(Error::format("missing MThd header"));
    }
    let hlen = c.u32()? as usize;
    if hlen < 6 {
        return Err(Error::format("MThd chunk too short"));
    }
    let header = c.take(hlen)?;
    let format = u16::from_be_bytes([header[0], header[1]]);
    let division = u16::from_be_bytes([header[4], header[5]]);
    if format > 1 {
        return Err(Error::format(format!("SMF format {format} is not supported")));
    }
    let timing = if division & 0x8000 == 0 {
        if division == 0 {
            return Err(Error::format("zero ticks per quarter note"));
        }
        Timing::Ppq(division)
    } else {
        let fps = match -((division >> 8) as u8 as i8) {
            29 => 30_000.0 / 1001.0,
            f if f > 0 => f as f64,
            f => return Err(Error::format(format!("bad SMPTE frame rate {f}"))),
        };
        Timing::Smpte(fps * (division & 0xff) as f64)
    };

    let mut raw = Vec::new();
    let mut tempos = Vec::new();
    while !c.done() {
        let id = c.take(4)?;
        let len = c.u32()? as usize;
        let body = c.take(len)?;
        if id == b"MTrk" {
            read_track(body, &mut raw, &mut tempos)?;
        }
    }

    // offs sort before ons at the same tick so legato notes do not overlap
    raw.sort_by_key(|n| (n.tick, n.kind));
    let mut spans = Vec::new();
    let mut active: Option<(u8, u64)> = None;
    for n in raw {
        match (n.kind, active) {
            (Kind::On, None) => active = Some((n.key, n.tick)),
            (Kind::On, Some(_)) => {
                return Err(Error::format(format!("overlapping notes at tick {}", n.tick)));
            }
            (Kind::Off, Some((key, start))) if key == n.key => {
                if n.tick == start {
                    return Err(Error::format(format!("zero-length note at tick {start}")));
                }
                spans.push((key, start, n.tick));
                active = None;
            }
            (Kind::Off, _) => {}
        }
    }
    if let Some((_, start)) = active {
        return Err(Error::format(format!("note at tick {start} is never released")));
    }
    if spans.len() != lyrics.len() {
        return Err(Error::Alignment(format!(
            "{} notes but {} lyric syllables",
            spans.len(),
            lyrics.len()
        )));
    }

    let map = TempoMap::new(timing, tempos);
    let notes = spans
        .into_iter()
        .zip(lyrics)
        .map(|((key, on, off), text)| {
            let syllable = match Syllable::parse(text)? {
                Syllable::Rest => return Err(Error::format("a sounding note cannot carry the rest syllable")),
                s => s,
            };
            Ok(NoteEvent {
                pitch: Some(key),
                start_s: map.seconds(on),
                end_s: map.seconds(off),
                syllable,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Score::new(notes)
}
