use std::collections::HashMap;

use super::*;
use crate::score::{Attributes, Clef, Measure, Metadata, NoteEvent, Pitch, Score, TimeSignature};
use crate::time::{notated_duration, NoteType, Time, Tuplet, MAX_DOTS};

/// Tokens `[start, end)` dropped while decoding in recovering mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedSpan {
    pub start: usize,
    pub end: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Decoded {
    pub score: Score,
    pub skipped: Vec<SkippedSpan>,
}

/// Decodes a token sequence, failing on the first malformed token.
pub fn delinearize(seq: &TokenSequence) -> Result<Score, LmxError> {
    Decoder::new(&seq.tokens, false).run(seq.source_id.clone()).map(|d| d.score)
}

/// Decodes a token sequence, skipping malformed spans. Fails only when
/// nothing usable remains.
pub fn delinearize_recovering(seq: &TokenSequence) -> Result<Decoded, LmxError> {
    Decoder::new(&seq.tokens, true).run(seq.source_id.clone())
}

struct OpenMeasure {
    measure: Measure,
    cursor: HashMap<(u8, u8), Time>,
    last_onset: HashMap<(u8, u8), Time>,
    reached: Time,
    in_header: bool,
    clef_slot: usize,
}

struct Decoder<'a> {
    toks: &'a [String],
    pos: usize,
    recover: bool,
    attrs: Attributes,
    measures: Vec<Measure>,
    open: Option<OpenMeasure>,
    skipped: Vec<SkippedSpan>,
    max_staff: u8,
    first_clefs: Option<usize>,
}

fn zero() -> Time {
    Time::from_integer(0)
}

fn starts_item(tok: &str) -> bool {
    matches!(tok, MEASURE | FORWARD | CHORD | GRACE | REST | TIME)
        || tok.starts_with("key:")
        || tok.starts_with("clef:")
        || tok.parse::<Pitch>().is_ok()
}

impl<'a> Decoder<'a> {
    fn new(toks: &'a [String], recover: bool) -> Decoder<'a> {
        Decoder {
            toks,
            pos: 0,
            recover,
            attrs: Attributes::piano_default(),
            measures: Vec::new(),
            open: None,
            skipped: Vec::new(),
            max_staff: 0,
            first_clefs: None,
        }
    }

    fn err(&self, index: usize, reason: impl Into<String>) -> LmxError {
        let token = self.toks.get(index).cloned().unwrap_or_else(|| "<end>".into());
        LmxError::Decode { index, token, reason: reason.into() }
    }

    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).map(String::as_str)
    }

    fn run(mut self, source_id: Option<String>) -> Result<Decoded, LmxError> {
        if self.toks.is_empty() {
            return Err(LmxError::EmptySequence);
        }
        while self.pos < self.toks.len() {
            let start = self.pos;
            if let Err(e) = self.item() {
                if !self.recover {
                    return Err(e);
                }
                let reason = e.to_string();
                let mut next = start + 1;
                while next < self.toks.len() && !starts_item(&self.toks[next]) {
                    next += 1;
                }
                match self.skipped.last_mut() {
                    Some(last) if last.end == start => last.end = next,
                    _ => self.skipped.push(SkippedSpan { start, end: next, reason }),
                }
                self.pos = next;
            }
        }
        self.close_measure();
        if self.measures.is_empty() {
            return Err(LmxError::EmptySequence);
        }
        let staves = self.first_clefs.unwrap_or(2).max(self.max_staff as usize) as u8;
        let metadata = Metadata { source_id, ..Metadata::default() };
        Ok(Decoded { score: Score { metadata, staves, measures: self.measures }, skipped: self.skipped })
    }

    fn close_measure(&mut self) {
        if let Some(open) = self.open.take() {
            let mut m = open.measure;
            m.attributes = self.attrs.clone();
            m.duration = if open.reached > zero() { open.reached } else { self.attrs.time.measure_length() };
            if self.measures.is_empty() {
                self.first_clefs = Some(self.attrs.clefs.len());
            }
            self.measures.push(m);
        }
    }

    fn item(&mut self) -> Result<(), LmxError> {
        let tok = self.peek().expect("caller checks bounds");
        if tok == MEASURE {
            self.close_measure();
            let start = self.measures.last().map(|m| m.end()).unwrap_or_else(zero);
            self.open = Some(OpenMeasure {
                measure: Measure {
                    number: (self.measures.len() + 1).to_string(),
                    start,
                    duration: zero(),
                    attributes: self.attrs.clone(),
                    notes: Vec::new(),
                },
                cursor: HashMap::new(),
                last_onset: HashMap::new(),
                reached: zero(),
                in_header: true,
                clef_slot: 0,
            });
            self.pos += 1;
            return Ok(());
        }
        let Some(open) = &self.open else {
            return Err(self.err(self.pos, "sequence must begin with `measure`"));
        };
        let in_header = open.in_header;
        if tok.starts_with("key:") || tok == TIME || tok.starts_with("clef:") {
            if !in_header {
                return Err(self.err(self.pos, "attribute after notes in a measure"));
            }
            return self.attribute(tok);
        }
        if tok == FORWARD {
            return self.forward();
        }
        if tok == CHORD || tok == GRACE || tok == REST || tok.parse::<Pitch>().is_ok() {
            return self.note();
        }
        if NoteType::from_name(tok).is_some() || tok == DOT {
            return Err(self.err(self.pos, "duration without a preceding pitch"));
        }
        Err(self.err(self.pos, "unexpected token"))
    }

    fn attribute(&mut self, tok: &str) -> Result<(), LmxError> {
        let at = self.pos;
        if let Some(v) = tok.strip_prefix("key:fifths:") {
            let fifths: i8 = v.parse().ok().filter(|f: &i8| (-7..=7).contains(f)).ok_or_else(|| self.err(at, "bad key"))?;
            self.attrs.fifths = fifths;
            self.pos += 1;
        } else if tok == TIME {
            let beats = self.numbered(at + 1, "beats:")?;
            let beat_type = self.numbered(at + 2, "beat-type:")?;
            self.attrs.time = TimeSignature { beats, beat_type };
            self.pos += 3;
        } else if let Some(v) = tok.strip_prefix("clef:") {
            let mut chars = v.chars();
            let sign = chars.next().filter(|c| matches!(c, 'G' | 'F' | 'C'));
            let line = chars.as_str().parse::<u8>().ok().filter(|l| (1..=5).contains(l));
            let (Some(sign), Some(line)) = (sign, line) else {
                return Err(self.err(at, "bad clef"));
            };
            let open = self.open.as_mut().expect("checked by caller");
            let slot = open.clef_slot;
            open.clef_slot += 1;
            if slot == 0 {
                self.attrs.clefs.clear();
            }
            self.attrs.clefs.push(Clef { sign: sign.to_string(), line });
            self.pos += 1;
        } else {
            return Err(self.err(at, "unknown attribute"));
        }
        Ok(())
    }

    fn numbered(&self, index: usize, prefix: &str) -> Result<u32, LmxError> {
        self.toks
            .get(index)
            .and_then(|t| t.strip_prefix(prefix))
            .and_then(|v| v.parse::<u32>().ok())
            .filter(|&v| v > 0)
            .ok_or_else(|| self.err(index, format!("expected {prefix}N")))
    }

    /// Parses `TYPE dot*` at the cursor.
    fn duration(&mut self) -> Result<(NoteType, u8), LmxError> {
        let t = self.peek().and_then(NoteType::from_name).ok_or_else(|| self.err(self.pos, "expected a duration type"))?;
        self.pos += 1;
        let mut dots = 0;
        while self.peek() == Some(DOT) {
            dots += 1;
            if dots > MAX_DOTS {
                return Err(self.err(self.pos, "too many dots"));
            }
            self.pos += 1;
        }
        Ok((t, dots))
    }

    /// Parses `[voice:V] staff:S` at the cursor.
    fn voice_staff(&mut self) -> Result<(u8, u8), LmxError> {
        let mut voice = None;
        if let Some(v) = self.peek().and_then(|t| t.strip_prefix("voice:")) {
            voice = Some(v.parse::<u8>().ok().filter(|&v| v > 0).ok_or_else(|| self.err(self.pos, "bad voice"))?);
            self.pos += 1;
        }
        let staff = self
            .peek()
            .and_then(|t| t.strip_prefix("staff:"))
            .and_then(|v| v.parse::<u8>().ok())
            .filter(|&s| s > 0)
            .ok_or_else(|| self.err(self.pos, "expected staff:S"))?;
        self.pos += 1;
        self.max_staff = self.max_staff.max(staff);
        Ok((voice.unwrap_or_else(|| default_voice(staff)), staff))
    }

    fn forward(&mut self) -> Result<(), LmxError> {
        self.pos += 1;
        let mut total = zero();
        loop {
            let (t, dots) = self.duration()?;
            total += notated_duration(t, dots, None);
            if self.peek().and_then(NoteType::from_name).is_none() {
                break;
            }
        }
        let (voice, staff) = self.voice_staff()?;
        let open = self.open.as_mut().expect("checked by caller");
        open.in_header = false;
        let c = open.cursor.entry((staff, voice)).or_insert_with(zero);
        *c += total;
        open.reached = open.reached.max(*c);
        Ok(())
    }

    fn note(&mut self) -> Result<(), LmxError> {
        let begin = self.pos;
        let chord = self.peek() == Some(CHORD);
        if chord {
            self.pos += 1;
        }
        let grace = self.peek() == Some(GRACE);
        if grace {
            self.pos += 1;
        }
        let pitch = match self.peek() {
            Some(REST) => None,
            Some(t) => Some(t.parse::<Pitch>().map_err(|_| self.err(self.pos, "expected a pitch or rest"))?),
            None => return Err(self.err(self.pos, "expected a pitch or rest")),
        };
        self.pos += 1;
        let (note_type, dots) = self.duration()?;
        let mut tuplet = None;
        if let Some(v) = self.peek().and_then(|t| t.strip_prefix("tuplet:")) {
            let parsed = v
                .split_once(':')
                .and_then(|(a, n)| Some(Tuplet { actual: a.parse().ok()?, normal: n.parse().ok()? }))
                .filter(|t| t.actual > 0 && t.normal > 0);
            tuplet = Some(parsed.ok_or_else(|| self.err(self.pos, "bad tuplet"))?);
            self.pos += 1;
        }
        let tie_stop = self.peek() == Some(TIE_STOP);
        if tie_stop {
            self.pos += 1;
        }
        let tie_start = self.peek() == Some(TIE_START);
        if tie_start {
            self.pos += 1;
        }
        let mut articulations = Vec::new();
        let mut dynamic = None;
        while let Some(t) = self.peek() {
            if ARTICULATIONS.contains(&t) {
                articulations.push(t.to_string());
            } else if let Some(d) = t.strip_prefix("dynamics:").filter(|d| DYNAMICS.contains(d)) {
                dynamic = Some(d.to_string());
            } else {
                break;
            }
            self.pos += 1;
        }
        let (voice, staff) = self.voice_staff()?;

        let duration = notated_duration(note_type, dots, tuplet);
        let open = self.open.as_mut().expect("checked by caller");
        let key = (staff, voice);
        let rel = if chord {
            match open.last_onset.get(&key) {
                Some(&t) => t,
                None => {
                    return Err(LmxError::Decode {
                        index: begin,
                        token: CHORD.into(),
                        reason: "chord without a preceding note in its voice".into(),
                    })
                }
            }
        } else {
            open.cursor.get(&key).copied().unwrap_or_else(zero)
        };
        if !chord {
            open.last_onset.insert(key, rel);
            if !grace {
                let end = rel + duration;
                open.cursor.insert(key, end);
                open.reached = open.reached.max(end);
            }
        }
        open.in_header = false;
        open.measure.notes.push(NoteEvent {
            onset: open.measure.start + rel,
            duration,
            pitch,
            voice,
            staff,
            chord,
            grace,
            tie_start,
            tie_stop,
            note_type,
            dots,
            tuplet,
            articulations,
            dynamic,
        });
        Ok(())
    }
}
