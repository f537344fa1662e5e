use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::lmx::{TokenSequence, DOT, REST};
use crate::score::{timeline, Pitch, Score};
use crate::time::{decompose, Time};

/// One skyline step. `pitch` is `None` where nothing sounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkylineEntry {
    pub pitch: Option<Pitch>,
    pub duration: Time,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SkylineSequence {
    pub entries: Vec<SkylineEntry>,
}

impl SkylineSequence {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Pitch (or `rest`) followed by duration tokens, using the LMX spelling.
    /// Durations that are not sums of plain note values are rounded to the
    /// nearest 256th first.
    pub fn tokens(&self) -> TokenSequence {
        let grid = Time::new(1, 64);
        let mut out = Vec::new();
        for e in &self.entries {
            out.push(e.pitch.map(|p| p.to_string()).unwrap_or_else(|| REST.to_string()));
            let parts = decompose(e.duration).unwrap_or_else(|| {
                let steps = (e.duration / grid).round().to_integer().max(1);
                decompose(grid * steps).expect("multiples of a 256th always decompose")
            });
            for (t, dots) in parts {
                out.push(t.name().to_string());
                out.extend(std::iter::repeat_n(DOT.to_string(), dots as usize));
            }
        }
        TokenSequence::new(out)
    }
}

/// Highest sounding pitch over each timeline segment, silent segments as
/// rests, equal neighbours merged.
pub fn melody_skyline(score: &Score) -> Result<SkylineSequence, AnalysisError> {
    let mut entries: Vec<SkylineEntry> = Vec::new();
    for seg in timeline(score) {
        let pitch = seg.highest();
        match entries.last_mut() {
            Some(last) if last.pitch.map(|p| p.midi_number()) == pitch.map(|p| p.midi_number()) => {
                last.duration += seg.duration();
            }
            _ => entries.push(SkylineEntry { pitch, duration: seg.duration() }),
        }
    }
    if entries.iter().all(|e| e.pitch.is_none()) {
        return Err(AnalysisError::EmptySkyline);
    }
    Ok(SkylineSequence { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lmx::delinearize;
    use crate::time::quarters;

    fn score(lmx: &str) -> Score {
        delinearize(&TokenSequence::from_text(lmx)).unwrap()
    }

    fn midis(s: &SkylineSequence) -> Vec<Option<u8>> {
        s.entries.iter().map(|e| e.pitch.map(|p| p.midi_number())).collect()
    }

    #[test]
    fn triad_gives_its_top() {
        let s = score("measure C4 whole staff:1 chord E4 whole staff:1 chord G4 whole staff:1");
        assert_eq!(midis(&melody_skyline(&s).unwrap()), vec![Some(67)]);
    }

    #[test]
    fn melody_over_held_chord() {
        let s = score("measure C5 half staff:1 D5 half staff:1 C3 whole staff:2 chord E3 whole staff:2 chord G3 whole staff:2");
        let sky = melody_skyline(&s).unwrap();
        assert_eq!(midis(&sky), vec![Some(72), Some(74)]);
        assert_eq!(sky.tokens().text(), "C5 half D5 half");
    }

    #[test]
    fn silence_is_a_rest_and_all_rest_is_an_error() {
        let s = score("measure rest half staff:1 C5 half staff:1");
        let sky = melody_skyline(&s).unwrap();
        assert_eq!(midis(&sky), vec![None, Some(72)]);
        assert_eq!(sky.entries[0].duration, quarters(2, 1));
        assert_eq!(melody_skyline(&score("measure rest whole staff:1")), Err(AnalysisError::EmptySkyline));
    }

    #[test]
    fn triplets_are_rounded_for_tokens() {
        let s = score("measure C5 eighth tuplet:3:2 staff:1 D5 eighth tuplet:3:2 staff:1 E5 eighth tuplet:3:2 staff:1 F5 quarter dot staff:1 rest half staff:1");
        let toks = melody_skyline(&s).unwrap().tokens();
        assert_eq!(toks.tokens[0], "C5");
        assert!(toks.tokens.iter().all(|t| !t.starts_with("tuplet")));
    }
}
