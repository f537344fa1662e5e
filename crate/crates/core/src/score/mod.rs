//! In-memory model of a two-staff piano score.
//!
//! A [`Score`] is a single part split into measures. Every [`NoteEvent`]
//! carries an absolute onset in quarter notes, so downstream analysis never
//! has to replay `<backup>`/`<forward>` cursors.

mod parse;
mod timeline;
mod write;

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{NoteType, Time, Tuplet};

pub use parse::{parse_musicxml, read_score_file, unzip_mxl};
pub use timeline::{sounding_notes, timeline, Segment, SoundingNote};
pub use write::serialize_musicxml;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("xml syntax error: {0}")]
    Xml(String),
    #[error("unsupported structure: {0}")]
    Unsupported(String),
    #[error("missing <divisions> before first duration in measure {measure}")]
    MissingDivisions { measure: String },
    #[error("invalid <{element}> value {value:?}")]
    InvalidValue { element: String, value: String },
    #[error("expected exactly 2 staves, found {found}")]
    StaffCount { found: u8 },
    #[error("score has no measures")]
    Empty,
    #[error("measure {measure}: {reason}")]
    Malformed { measure: String, reason: String },
    #[error("overlapping events in staff {staff} voice {voice} (measure {measure})")]
    Overlap { staff: u8, voice: u8, measure: String },
    #[error("archive error: {0}")]
    Archive(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Step {
    C,
    D,
    E,
    F,
    G,
    A,
    B,
}

impl Step {
    pub const ALL: [Step; 7] = [Step::C, Step::D, Step::E, Step::F, Step::G, Step::A, Step::B];

    pub fn semitone(self) -> i32 {
        match self {
            Step::C => 0,
            Step::D => 2,
            Step::E => 4,
            Step::F => 5,
            Step::G => 7,
            Step::A => 9,
            Step::B => 11,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Step::C => 'C',
            Step::D => 'D',
            Step::E => 'E',
            Step::F => 'F',
            Step::G => 'G',
            Step::A => 'A',
            Step::B => 'B',
        }
    }

    pub fn from_letter(c: char) -> Option<Step> {
        Step::ALL.into_iter().find(|s| s.letter() == c)
    }
}

/// A spelled pitch. MIDI number, pitch class and octave are derived, so they
/// can never disagree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pitch {
    pub step: Step,
    pub alter: i8,
    pub octave: i8,
}

impl Pitch {
    pub fn new(step: Step, alter: i8, octave: i8) -> Result<Pitch, ScoreError> {
        let p = Pitch { step, alter, octave };
        let midi = p.midi_i32();
        if !(-2..=2).contains(&alter) || !(0..=127).contains(&midi) {
            return Err(ScoreError::InvalidValue {
                element: "pitch".into(),
                value: format!("{}{}{}", step.letter(), alter, octave),
            });
        }
        Ok(p)
    }

    /// Spells a MIDI number with sharps.
    pub fn from_midi(midi: u8) -> Pitch {
        const SPELLING: [(Step, i8); 12] = [
            (Step::C, 0),
            (Step::C, 1),
            (Step::D, 0),
            (Step::D, 1),
            (Step::E, 0),
            (Step::F, 0),
            (Step::F, 1),
            (Step::G, 0),
            (Step::G, 1),
            (Step::A, 0),
            (Step::A, 1),
            (Step::B, 0),
        ];
        let (step, alter) = SPELLING[(midi % 12) as usize];
        Pitch { step, alter, octave: (midi / 12) as i8 - 1 }
    }

    fn midi_i32(&self) -> i32 {
        12 * (self.octave as i32 + 1) + self.step.semitone() + self.alter as i32
    }

    pub fn midi_number(&self) -> u8 {
        self.midi_i32() as u8
    }

    pub fn pitch_class(&self) -> u8 {
        self.midi_number() % 12
    }

    /// Shifts by whole octaves, keeping the spelling.
    pub fn transpose_octaves(&self, octaves: i8) -> Option<Pitch> {
        Pitch::new(self.step, self.alter, self.octave.checked_add(octaves)?).ok()
    }
}

impl fmt::Display for Pitch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let acc = match self.alter {
            -2 => "bb",
            -1 => "b",
            1 => "#",
            2 => "##",
            _ => "",
        };
        write!(f, "{}{}{}", self.step.letter(), acc, self.octave)
    }
}

impl FromStr for Pitch {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Pitch, ScoreError> {
        let bad = || ScoreError::InvalidValue { element: "pitch".into(), value: s.to_string() };
        let mut chars = s.chars();
        let step = chars.next().and_then(Step::from_letter).ok_or_else(bad)?;
        let rest = chars.as_str();
        let digits_at = rest.find(|c: char| c == '-' || c.is_ascii_digit()).ok_or_else(bad)?;
        let alter = match &rest[..digits_at] {
            "" => 0,
            "#" => 1,
            "##" => 2,
            "b" => -1,
            "bb" => -2,
            _ => return Err(bad()),
        };
        let octave: i8 = rest[digits_at..].parse().map_err(|_| bad())?;
        Pitch::new(step, alter, octave)
    }
}

/// One note, rest or grace note with its absolute position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub onset: Time,
    /// Sounding length. Grace notes keep their written value here but take no
    /// time in the measure.
    pub duration: Time,
    /// `None` for rests.
    pub pitch: Option<Pitch>,
    pub voice: u8,
    pub staff: u8,
    pub chord: bool,
    pub grace: bool,
    pub tie_start: bool,
    pub tie_stop: bool,
    pub note_type: NoteType,
    pub dots: u8,
    pub tuplet: Option<Tuplet>,
    pub articulations: Vec<String>,
    pub dynamic: Option<String>,
}

impl NoteEvent {
    pub fn is_rest(&self) -> bool {
        self.pitch.is_none()
    }

    pub fn end(&self) -> Time {
        self.onset + self.duration
    }

    /// A plain note with a duration spelled as a single written value.
    pub fn simple(onset: Time, duration: Time, pitch: Option<Pitch>, staff: u8, voice: u8) -> NoteEvent {
        let (note_type, dots) = crate::time::spell_duration(duration).unwrap_or((NoteType::Quarter, 0));
        NoteEvent {
            onset,
            duration,
            pitch,
            voice,
            staff,
            chord: false,
            grace: false,
            tie_start: false,
            tie_stop: false,
            note_type,
            dots,
            tuplet: None,
            articulations: Vec::new(),
            dynamic: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clef {
    pub sign: String,
    pub line: u8,
}

impl Clef {
    pub fn treble() -> Clef {
        Clef { sign: "G".into(), line: 2 }
    }

    pub fn bass() -> Clef {
        Clef { sign: "F".into(), line: 4 }
    }

    pub fn default_for_staff(staff: u8) -> Clef {
        if staff == 2 {
            Clef::bass()
        } else {
            Clef::treble()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSignature {
    pub beats: u32,
    pub beat_type: u32,
}

impl TimeSignature {
    pub fn measure_length(&self) -> Time {
        Time::new(4 * self.beats as i64, self.beat_type as i64)
    }
}

/// Attributes in force for a measure (after any changes inside it).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attributes {
    pub fifths: i8,
    pub time: TimeSignature,
    /// One clef per staff, staff 1 first.
    pub clefs: Vec<Clef>,
}

impl Attributes {
    pub fn piano_default() -> Attributes {
        Attributes {
            fifths: 0,
            time: TimeSignature { beats: 4, beat_type: 4 },
            clefs: vec![Clef::treble(), Clef::bass()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measure {
    pub number: String,
    pub start: Time,
    pub duration: Time,
    pub attributes: Attributes,
    /// Events in document order; chord members directly follow their anchor.
    pub notes: Vec<NoteEvent>,
}

impl Measure {
    pub fn end(&self) -> Time {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub title: Option<String>,
    pub genre: Option<String>,
    pub source_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub metadata: Metadata,
    pub staves: u8,
    pub measures: Vec<Measure>,
}

impl Score {
    pub fn notes(&self) -> impl Iterator<Item = &NoteEvent> {
        self.measures.iter().flat_map(|m| m.notes.iter())
    }

    pub fn is_empty(&self) -> bool {
        self.measures.is_empty()
    }

    /// Sum of measure lengths, extended if a note rings past the last barline.
    pub fn total_duration(&self) -> Time {
        let measures = self.measures.last().map(|m| m.end()).unwrap_or_default();
        self.notes()
            .filter(|n| !n.grace)
            .map(|n| n.end())
            .fold(measures, |acc, e| acc.max(e))
    }
}

/// A score that passed [`validate_two_staff`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedScore(Score);

impl ValidatedScore {
    pub fn into_inner(self) -> Score {
        self.0
    }
}

impl Deref for ValidatedScore {
    type Target = Score;

    fn deref(&self) -> &Score {
        &self.0
    }
}

/// Accepts only non-empty, exactly-two-staff scores with contiguous measures
/// and no overlapping events inside any voice.
pub fn validate_two_staff(score: Score) -> Result<ValidatedScore, ScoreError> {
    if score.measures.is_empty() {
        return Err(ScoreError::Empty);
    }
    if score.staves != 2 {
        return Err(ScoreError::StaffCount { found: score.staves });
    }
    let zero = Time::from_integer(0);
    let mut expected_start = score.measures[0].start;
    for m in &score.measures {
        let malformed = |reason: String| ScoreError::Malformed { measure: m.number.clone(), reason };
        if m.start != expected_start {
            return Err(malformed(format!("starts at {} instead of {}", m.start, expected_start)));
        }
        if m.duration <= zero {
            return Err(malformed("non-positive measure length".into()));
        }
        expected_start = m.end();

        let mut last_end: std::collections::HashMap<(u8, u8), Time> = Default::default();
        for n in &m.notes {
            if !(1..=2).contains(&n.staff) {
                return Err(ScoreError::StaffCount { found: n.staff });
            }
            if n.duration <= zero {
                return Err(malformed("non-positive note duration".into()));
            }
            if n.onset < m.start {
                return Err(malformed("note starts before the measure".into()));
            }
            if n.chord || n.grace {
                continue;
            }
            let key = (n.staff, n.voice);
            if let Some(&end) = last_end.get(&key) {
                if n.onset < end {
                    return Err(ScoreError::Overlap { staff: n.staff, voice: n.voice, measure: m.number.clone() });
                }
            }
            last_end.insert(key, n.end());
        }
    }
    Ok(ValidatedScore(score))
}
