use std::collections::HashMap;

use serde::Serialize;

use super::{Pitch, Score};
use crate::time::Time;

/// A pitched, non-grace note after tie chains have been merged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoundingNote {
    pub onset: Time,
    pub end: Time,
    pub pitch: Pitch,
    pub staff: u8,
    pub voice: u8,
}

/// Pitched notes as heard: grace notes dropped, tied notes joined into one
/// event. Sorted by onset, then staff, then pitch.
pub fn sounding_notes(score: &Score) -> Vec<SoundingNote> {
    let mut notes: Vec<_> = score.notes().filter(|n| !n.grace && n.pitch.is_some()).collect();
    notes.sort_by_key(|n| n.onset);

    let mut out: Vec<SoundingNote> = Vec::new();
    // (staff, midi) -> index of a chain still waiting for its tie stop
    let mut open: HashMap<(u8, u8), usize> = HashMap::new();
    for n in notes {
        let pitch = n.pitch.expect("filtered to pitched notes");
        let key = (n.staff, pitch.midi_number());
        let continues = n.tie_stop && open.get(&key).is_some_and(|&i| out[i].end == n.onset);
        if continues {
            let i = open[&key];
            out[i].end += n.duration;
            if !n.tie_start {
                open.remove(&key);
            }
        } else {
            out.push(SoundingNote { onset: n.onset, end: n.end(), pitch, staff: n.staff, voice: n.voice });
            if n.tie_start {
                open.insert(key, out.len() - 1);
            } else {
                open.remove(&key);
            }
        }
    }
    out.sort_by_key(|a| (a.onset, a.staff, a.pitch.midi_number()));
    out
}

/// A maximal span during which the set of sounding pitches does not change.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    pub start: Time,
    pub end: Time,
    /// Distinct sounding pitches, lowest first.
    pub pitches: Vec<Pitch>,
}

impl Segment {
    pub fn duration(&self) -> Time {
        self.end - self.start
    }

    pub fn highest(&self) -> Option<Pitch> {
        self.pitches.last().copied()
    }
}

/// Cuts the score at every onset and offset. Segments are disjoint, ordered
/// and cover `[0, total_duration)`; silent spans appear with no pitches.
pub fn timeline(score: &Score) -> Vec<Segment> {
    if score.is_empty() {
        return Vec::new();
    }
    let zero = Time::from_integer(0);
    let total = score.total_duration();
    let notes = sounding_notes(score);

    let mut bounds: Vec<Time> = vec![zero, total];
    for n in &notes {
        bounds.push(n.onset);
        bounds.push(n.end);
    }
    bounds.sort();
    bounds.dedup();

    let mut segments = Vec::with_capacity(bounds.len());
    let mut next = 0;
    let mut active: Vec<&SoundingNote> = Vec::new();
    for w in bounds.windows(2) {
        let (start, end) = (w[0], w[1]);
        active.retain(|n| n.end > start);
        while next < notes.len() && notes[next].onset <= start {
            if notes[next].end > start {
                active.push(&notes[next]);
            }
            next += 1;
        }
        let mut pitches: Vec<Pitch> = active.iter().map(|n| n.pitch).collect();
        pitches.sort_by_key(|p| p.midi_number());
        pitches.dedup_by_key(|p| p.midi_number());
        segments.push(Segment { start, end, pitches });
    }
    segments
}
