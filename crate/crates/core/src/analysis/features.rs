use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::score::{sounding_notes, timeline, Score, SoundingNote};
use crate::time::{to_f64, Time};

/// Feature order shared by every consumer. Staff 1 is the right hand, staff
/// 2 the left hand.
pub const FEATURE_NAMES: [&str; 12] = [
    "rh_note_density",
    "lh_note_density",
    "rh_pitch_range",
    "lh_pitch_range",
    "rh_mean_abs_interval",
    "lh_mean_abs_interval",
    "rh_chord_rate",
    "lh_chord_rate",
    "distinct_pitch_classes",
    "max_simultaneous",
    "mean_ioi",
    "hand_span",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: [f64; 12],
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES.iter().position(|n| *n == name).map(|i| self.values[i])
    }
}

struct Hand<'a> {
    /// Notes grouped by onset, each group sorted low to high.
    onsets: BTreeMap<Time, Vec<&'a SoundingNote>>,
    count: usize,
}

impl<'a> Hand<'a> {
    fn new(notes: &'a [SoundingNote], staff: u8) -> Hand<'a> {
        let mut onsets: BTreeMap<Time, Vec<&SoundingNote>> = BTreeMap::new();
        let mut count = 0;
        for n in notes.iter().filter(|n| n.staff == staff) {
            onsets.entry(n.onset).or_default().push(n);
            count += 1;
        }
        for g in onsets.values_mut() {
            g.sort_by_key(|n| n.pitch.midi_number());
        }
        Hand { onsets, count }
    }

    fn range(&self) -> f64 {
        let midis = self.onsets.values().flatten().map(|n| n.pitch.midi_number());
        match (midis.clone().min(), midis.max()) {
            (Some(lo), Some(hi)) => (hi - lo) as f64,
            _ => 0.0,
        }
    }

    fn mean_abs_interval(&self, top: bool) -> f64 {
        let line: Vec<f64> = self
            .onsets
            .values()
            .map(|g| if top { g[g.len() - 1] } else { g[0] })
            .map(|n| n.pitch.midi_number() as f64)
            .collect();
        if line.len() < 2 {
            return 0.0;
        }
        line.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (line.len() - 1) as f64
    }

    fn chord_rate(&self) -> f64 {
        if self.onsets.is_empty() {
            return 0.0;
        }
        self.onsets.values().filter(|g| g.len() >= 2).count() as f64 / self.onsets.len() as f64
    }

    fn span(&self) -> f64 {
        self.onsets
            .values()
            .map(|g| (g[g.len() - 1].pitch.midi_number() - g[0].pitch.midi_number()) as f64)
            .fold(0.0, f64::max)
    }
}

/// Computes the 12 features in [`FEATURE_NAMES`] order from tie-merged,
/// non-grace notes.
pub fn extract_features(score: &Score) -> Result<FeatureVector, AnalysisError> {
    if score.is_empty() {
        return Err(AnalysisError::EmptyScore);
    }
    let notes = sounding_notes(score);
    let total = to_f64(score.total_duration()).max(f64::MIN_POSITIVE);
    let rh = Hand::new(&notes, 1);
    let lh = Hand::new(&notes, 2);

    let mut pcs = [false; 12];
    for n in &notes {
        pcs[n.pitch.pitch_class() as usize] = true;
    }
    let max_simultaneous = timeline(score).iter().map(|s| s.pitches.len()).max().unwrap_or(0);

    let mut onsets: Vec<Time> = notes.iter().map(|n| n.onset).collect();
    onsets.sort();
    onsets.dedup();
    let mean_ioi = if onsets.len() < 2 {
        0.0
    } else {
        to_f64(onsets[onsets.len() - 1] - onsets[0]) / (onsets.len() - 1) as f64
    };

    Ok(FeatureVector {
        values: [
            rh.count as f64 / total,
            lh.count as f64 / total,
            rh.range(),
            lh.range(),
            rh.mean_abs_interval(true),
            lh.mean_abs_interval(false),
            rh.chord_rate(),
            lh.chord_rate(),
            pcs.iter().filter(|&&b| b).count() as f64,
            max_simultaneous as f64,
            mean_ioi,
            rh.span().max(lh.span()),
        ],
    })
}
