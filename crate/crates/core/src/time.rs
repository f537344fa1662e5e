//! Exact musical time, measured in quarter notes.
//!
//! MusicXML expresses durations in `divisions` per quarter note, and the
//! divisions value may change between measures. Every onset and duration in
//! this crate is therefore a reduced fraction of a quarter note.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

/// A point or span of time in quarter notes.
pub type Time = Ratio<i64>;

/// Builds `num / den` quarter notes.
pub fn quarters(num: i64, den: i64) -> Time {
    Ratio::new(num, den)
}

pub fn to_f64(t: Time) -> f64 {
    *t.numer() as f64 / *t.denom() as f64
}

/// Written note value, named as in the MusicXML `<type>` element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NoteType {
    Breve,
    Whole,
    Half,
    Quarter,
    Eighth,
    Sixteenth,
    ThirtySecond,
    SixtyFourth,
    OneTwentyEighth,
    TwoFiftySixth,
}

impl NoteType {
    /// Longest first.
    pub const ALL: [NoteType; 10] = [
        NoteType::Breve,
        NoteType::Whole,
        NoteType::Half,
        NoteType::Quarter,
        NoteType::Eighth,
        NoteType::Sixteenth,
        NoteType::ThirtySecond,
        NoteType::SixtyFourth,
        NoteType::OneTwentyEighth,
        NoteType::TwoFiftySixth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NoteType::Breve => "breve",
            NoteType::Whole => "whole",
            NoteType::Half => "half",
            NoteType::Quarter => "quarter",
            NoteType::Eighth => "eighth",
            NoteType::Sixteenth => "16th",
            NoteType::ThirtySecond => "32nd",
            NoteType::SixtyFourth => "64th",
            NoteType::OneTwentyEighth => "128th",
            NoteType::TwoFiftySixth => "256th",
        }
    }

    pub fn from_name(name: &str) -> Option<NoteType> {
        NoteType::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Undotted value in quarter notes.
    pub fn quarters(self) -> Time {
        match self {
            NoteType::Breve => quarters(8, 1),
            NoteType::Whole => quarters(4, 1),
            NoteType::Half => quarters(2, 1),
            NoteType::Quarter => quarters(1, 1),
            NoteType::Eighth => quarters(1, 2),
            NoteType::Sixteenth => quarters(1, 4),
            NoteType::ThirtySecond => quarters(1, 8),
            NoteType::SixtyFourth => quarters(1, 16),
            NoteType::OneTwentyEighth => quarters(1, 32),
            NoteType::TwoFiftySixth => quarters(1, 64),
        }
    }
}

/// Tuplet ratio from `<time-modification>`: `actual` notes in the time of `normal`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tuplet {
    pub actual: u32,
    pub normal: u32,
}

pub const MAX_DOTS: u8 = 3;

/// Sounding length of a written value.
pub fn notated_duration(note_type: NoteType, dots: u8, tuplet: Option<Tuplet>) -> Time {
    let base = note_type.quarters();
    // base * (2 - 1/2^dots)
    let pow = 1i64 << dots;
    let mut d = base * quarters(2 * pow - 1, pow);
    if let Some(t) = tuplet {
        d *= quarters(t.normal as i64, t.actual as i64);
    }
    d
}

/// Finds a single written value (no tuplet) with exactly this duration.
pub fn spell_duration(d: Time) -> Option<(NoteType, u8)> {
    for dots in 0..=MAX_DOTS {
        for t in NoteType::ALL {
            if notated_duration(t, dots, None) == d {
                return Some((t, dots));
            }
        }
    }
    None
}

/// Splits a duration into a sum of written values, longest first.
///
/// Fails for durations that are not sums of binary note values down to a
/// 256th (for example triplet remainders).
pub fn decompose(d: Time) -> Option<Vec<(NoteType, u8)>> {
    if d <= Time::from_integer(0) {
        return None;
    }
    let mut candidates: Vec<(Time, NoteType, u8)> = NoteType::ALL
        .iter()
        .flat_map(|&t| (0..=2u8).map(move |dots| (notated_duration(t, dots, None), t, dots)))
        .collect();
    candidates.sort_by_key(|c| std::cmp::Reverse(c.0));
    let mut rest = d;
    let mut parts = Vec::new();
    while rest > Time::from_integer(0) {
        let (value, t, dots) = *candidates.iter().find(|c| c.0 <= rest)?;
        parts.push((t, dots));
        rest -= value;
        if parts.len() > 64 {
            return None;
        }
    }
    Some(parts)
}
