//! Seeded synthetic piano pieces for tests and demos.
//!
//! A [`Skeleton`] fixes what a piece *is* (key, meter, melody, harmony).
//! [`render`] turns it into a two-staff score at a difficulty level from 1 to
//! 9: higher levels thicken the right hand, add a second voice, grace notes
//! and ties, and move the left hand from held roots to broken chords.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::extract_features;
use crate::classifier::{fit, synthetic_labels, VarianceFloor};
use crate::lmx::linearize;
use crate::pairs::Variation;
use crate::score::{Attributes, Clef, Measure, Metadata, NoteEvent, Pitch, Score, TimeSignature};
use crate::similarity::{BaselineEmbedder, EmbeddingProvider};
use crate::time::{quarters, Time};

pub const GENRES: [&str; 6] = ["pop", "rock", "k-pop", "latin", "film", "classical"];

const MAJOR: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];

#[derive(Debug, Clone, PartialEq)]
pub struct MelodyNote {
    pub onset: Time,
    pub duration: Time,
    pub midi: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub id: String,
    pub genre: String,
    pub fifths: i8,
    pub beats: u32,
    pub measures: usize,
    /// Scale degree (0-based) of each measure's chord root.
    pub harmony: Vec<usize>,
    /// Melody per measure, onsets relative to the measure start.
    pub melody: Vec<Vec<MelodyNote>>,
}

impl Skeleton {
    pub fn measure_length(&self) -> Time {
        Time::from_integer(self.beats as i64)
    }

    fn tonic(&self) -> u8 {
        (self.fifths as i32 * 7).rem_euclid(12) as u8
    }

    /// MIDI numbers of the triad on a scale degree, root position, with the
    /// root in the octave starting at `base`.
    fn triad(&self, degree: usize, base: u8) -> [u8; 3] {
        let pc = |d: usize| (self.tonic() + MAJOR[d % 7]) % 12;
        let root = base + (pc(degree) + 12 - base % 12) % 12;
        let above = |from: u8, d: usize| from + (pc(d) + 12 - from % 12) % 12;
        let third = above(root + 1, degree + 2);
        let fifth = above(third + 1, degree + 4);
        [root, third, fifth]
    }
}

const PROGRESSIONS: [[usize; 4]; 6] = [[0, 4, 5, 3], [0, 3, 4, 3], [5, 3, 0, 4], [0, 5, 1, 4], [0, 3, 5, 4], [0, 1, 4, 0]];

/// Draws a piece skeleton.
pub fn skeleton(seed: u64, index: usize, measures: usize) -> Skeleton {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * index as u64);
    let genre_idx = rng.random_range(0..GENRES.len());
    let fifths = rng.random_range(-4..=4i8);
    let beats = [4u32, 3, 2][rng.random_range(0..3)];
    let progression = PROGRESSIONS[genre_idx];
    let harmony: Vec<usize> = (0..measures).map(|m| progression[m % 4]).collect();

    let mut sk = Skeleton {
        id: format!("piece{index:03}"),
        genre: GENRES[genre_idx].to_string(),
        fifths,
        beats,
        measures,
        harmony,
        melody: Vec::new(),
    };
    let tonic = sk.tonic();
    let scale: Vec<u8> = (60u8..=84).filter(|m| MAJOR.contains(&((m + 12 - tonic) % 12))).collect();
    let mut pos = rng.random_range(3..scale.len() - 3);
    for m in 0..measures {
        let chord_pcs: Vec<u8> = sk.triad(sk.harmony[m], 48).iter().map(|p| p % 12).collect();
        let mut notes = Vec::new();
        let mut t = Time::from_integer(0);
        let end = sk.measure_length();
        while t < end {
            let left = end - t;
            let choice = rng.random_range(0..10);
            let durs: Vec<Time> = if choice < 2 && left >= quarters(2, 1) {
                vec![quarters(2, 1)]
            } else if choice < 4 {
                vec![quarters(1, 2), quarters(1, 2)]
            } else if choice < 5 && left >= quarters(2, 1) {
                vec![quarters(3, 2), quarters(1, 2)]
            } else {
                vec![quarters(1, 1)]
            };
            for d in durs {
                let step: i32 = rng.random_range(-2..=2);
                pos = (pos as i32 + step).clamp(0, scale.len() as i32 - 1) as usize;
                if t.is_integer() && !chord_pcs.contains(&(scale[pos] % 12)) && pos + 1 < scale.len() {
                    pos += 1;
                }
                notes.push(MelodyNote { onset: t, duration: d, midi: scale[pos] });
                t += d;
            }
        }
        sk.melody.push(notes);
    }
    sk
}

fn pitch(midi: u8) -> Option<Pitch> {
    Some(Pitch::from_midi(midi))
}

/// Renders a skeleton at difficulty `level` (1 easiest, 9 hardest).
pub fn render(sk: &Skeleton, level: u8, seed: u64) -> Score {
    let level = level.clamp(1, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    rng.set_stream(level as u64);
    let len = sk.measure_length();
    let attributes = Attributes {
        fifths: sk.fifths,
        time: TimeSignature { beats: sk.beats, beat_type: 4 },
        clefs: vec![Clef::treble(), Clef::bass()],
    };
    let shift: u8 = if level >= 7 { 12 } else { 0 };

    let mut measures = Vec::with_capacity(sk.measures);
    let mut carry_tie: Option<u8> = None;
    for (mi, melody) in sk.melody.iter().enumerate() {
        let start = len * mi as i64;
        let mut rh: Vec<NoteEvent> = Vec::new();
        let last = melody.len() - 1;
        for (ni, mn) in melody.iter().enumerate() {
            let mut midi = mn.midi + shift;
            let onset = start + mn.onset;
            let mut tie_stop = false;
            if ni == 0 {
                if let Some(tied) = carry_tie.take() {
                    midi = tied;
                    tie_stop = true;
                }
            }
            if level >= 8 && !tie_stop && rng.random_bool(0.15) {
                let mut g = NoteEvent::simple(onset, quarters(1, 4), pitch(midi + 2), 1, 1);
                g.grace = true;
                rh.push(g);
            }
            let run = level >= 9 && mn.duration == quarters(1, 1) && !tie_stop && rng.random_bool(0.5);
            if run {
                for k in 0..4u8 {
                    let m = midi.saturating_sub(k * 2).max(55);
                    rh.push(NoteEvent::simple(onset + quarters(k as i64, 4), quarters(1, 4), pitch(m), 1, 1));
                }
                continue;
            }
            let mut n = NoteEvent::simple(onset, mn.duration, pitch(midi), 1, 1);
            n.tie_stop = tie_stop;
            if ni == 0 && mi == 0 {
                n.dynamic = Some(["p", "mf", "f"][rng.random_range(0..3)].to_string());
            }
            if level >= 3 && mn.duration == quarters(1, 2) && rng.random_bool(0.3) {
                n.articulations.push("staccato".into());
            }
            if level >= 5 && ni == last && mi + 1 < sk.measures && rng.random_bool(0.4) {
                n.tie_start = true;
                carry_tie = Some(midi);
            }
            rh.push(n);
            let mut doubled = Vec::new();
            if level >= 4 && midi >= 12 + 48 {
                doubled.push(midi - 12);
            }
            if level >= 6 && midi >= 4 + 48 {
                let third = sk.triad(sk.harmony[mi], midi.saturating_sub(9) / 12 * 12);
                if let Some(&p) = third.iter().rev().find(|&&p| p < midi && p + 12 > midi && !doubled.contains(&p)) {
                    doubled.push(p);
                }
            }
            doubled.sort_unstable();
            for p in doubled.into_iter().rev() {
                let mut c = NoteEvent::simple(onset, mn.duration, pitch(p), 1, 1);
                c.chord = true;
                rh.push(c);
            }
        }

        if level >= 7 {
            let triad = sk.triad(sk.harmony[mi], 60);
            let mut t = Time::from_integer(0);
            let mut k = 0;
            while t < len {
                let d = if len - t >= quarters(2, 1) { quarters(2, 1) } else { len - t };
                rh.push(NoteEvent::simple(start + t, d, pitch(triad[k % 3]), 1, 2));
                t += d;
                k += 1;
            }
        }

        let lh = left_hand(sk, mi, level, start);
        let mut notes = rh;
        notes.extend(lh);
        measures.push(Measure {
            number: (mi + 1).to_string(),
            start,
            duration: len,
            attributes: attributes.clone(),
            notes,
        });
    }
    Score {
        metadata: Metadata {
            title: Some(format!("{} (level {level})", sk.id)),
            genre: Some(sk.genre.clone()),
            source_id: Some(sk.id.clone()),
        },
        staves: 2,
        measures,
    }
}

fn left_hand(sk: &Skeleton, mi: usize, level: u8, start: Time) -> Vec<NoteEvent> {
    let len = sk.measure_length();
    let base = if level >= 8 { 36 } else { 48 };
    let [root, third, fifth] = sk.triad(sk.harmony[mi], base);
    let mut out = Vec::new();
    let mut push = |onset: Time, dur: Time, midis: &[u8]| {
        for (i, &m) in midis.iter().enumerate() {
            let mut n = NoteEvent::simple(start + onset, dur, pitch(m), 2, 5);
            n.chord = i > 0;
            out.push(n);
        }
    };
    match level {
        1 | 2 => push(Time::from_integer(0), len, &[root]),
        3 | 4 => {
            let mut t = Time::from_integer(0);
            while t < len {
                let midis: &[u8] = if level == 4 { &[root, fifth] } else { &[root] };
                push(t, quarters(1, 1), midis);
                t += quarters(1, 1);
            }
        }
        5 | 6 => {
            let mut t = Time::from_integer(0);
            while t < len {
                let midis: &[u8] = if level == 6 { &[root, third, fifth, root + 12] } else { &[root, third, fifth] };
                push(t, quarters(1, 1), midis);
                t += quarters(1, 1);
            }
        }
        7 => {
            let pattern = [root, fifth, third, fifth];
            let mut t = Time::from_integer(0);
            let mut k = 0;
            while t < len {
                push(t, quarters(1, 2), &[pattern[k % 4]]);
                t += quarters(1, 2);
                k += 1;
            }
        }
        _ => {
            let step = if level == 9 { quarters(1, 4) } else { quarters(1, 2) };
            let pattern = [root, fifth, root + 12, third + 12, fifth + 12, third + 12];
            let mut t = Time::from_integer(0);
            let mut k = 0;
            while t < len {
                push(t, step, &[pattern[k % pattern.len()]]);
                t += step;
                k += 1;
            }
        }
    }
    out
}

/// `n` pieces, each rendered at a level drawn from the seed.
pub fn corpus(n: usize, seed: u64, measures: usize) -> Vec<Score> {
    corpus_with_levels(n, seed, measures).into_iter().map(|(_, s)| s).collect()
}

/// Like [`corpus`], also returning the level each piece was rendered at.
pub fn corpus_with_levels(n: usize, seed: u64, measures: usize) -> Vec<(u8, Score)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    (0..n)
        .map(|i| {
            let level = rng.random_range(1..=9u8);
            (level, render(&skeleton(seed, i, measures), level, seed))
        })
        .collect()
}

/// Variations of `pieces` pieces, each rendered at every level `per_level`
/// times, labelled by a classifier fitted on synthetic labels and embedded
/// with the baseline embedder. Ids follow `piece__vNNN`.
pub fn variation_population(seed: u64, pieces: usize, per_level: usize) -> Vec<Variation> {
    let mut rendered = Vec::new();
    for i in 0..pieces {
        let sk = skeleton(seed, i, 4);
        for level in 1..=9u8 {
            for r in 0..per_level {
                let score = render(&sk, level, seed.wrapping_add(r as u64));
                let id = format!("{}__v{:03}", sk.id, rendered.len() % (9 * per_level));
                rendered.push((sk.id.clone(), id, score));
            }
        }
    }
    let features: Vec<[f64; 12]> =
        rendered.iter().map(|(_, _, s)| extract_features(s).expect("fixtures are non-empty").values).collect();
    let labels = synthetic_labels(&features).expect("population has at least two items");
    let model = fit(&features, &labels, VarianceFloor::default()).expect("synthetic labels support every class");
    rendered
        .into_iter()
        .zip(&features)
        .map(|((piece, id, score), f)| {
            let tokens = linearize(&score).expect("fixtures encode").with_source(id.clone());
            Variation {
                posterior: Some(model.posterior(f).expect("finite features")),
                embedding: Some(BaselineEmbedder.embed(&tokens, &score).expect("fixtures embed")),
                piece,
                id,
                tokens,
            }
        })
        .collect()
}

/// Two measures in the style of a typical notation-program export: a
/// melody over a held bass, with default layout and print elements.
pub const TWO_MEASURE_EXCERPT: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<!DOCTYPE score-partwise PUBLIC "-//Recordare//DTD MusicXML 4.0 Partwise//EN" "http://www.musicxml.org/dtds/partwise.dtd">
<score-partwise version="4.0">
  <part-list>
    <score-part id="P1">
      <part-name>Piano</part-name>
    </score-part>
  </part-list>
  <part id="P1">
    <measure number="1" width="240.5">
      <print>
        <system-layout>
          <system-margins>
            <left-margin>50.00</left-margin>
            <right-margin>0.00</right-margin>
          </system-margins>
          <top-system-distance>170.00</top-system-distance>
        </system-layout>
      </print>
      <attributes>
        <divisions>1</divisions>
        <key>
          <fifths>0</fifths>
        </key>
        <time>
          <beats>4</beats>
          <beat-type>4</beat-type>
        </time>
        <staves>2</staves>
        <clef number="1">
          <sign>G</sign>
          <line>2</line>
        </clef>
        <clef number="2">
          <sign>F</sign>
          <line>4</line>
        </clef>
      </attributes>
      <note default-x="80.72" default-y="-15.00">
        <pitch>
          <step>C</step>
          <octave>5</octave>
        </pitch>
        <duration>4</duration>
        <voice>1</voice>
        <type>whole</type>
        <staff>1</staff>
      </note>
      <backup>
        <duration>4</duration>
      </backup>
      <note default-x="80.72" default-y="-160.00">
        <pitch>
          <step>C</step>
          <octave>3</octave>
        </pitch>
        <duration>4</duration>
        <voice>5</voice>
        <type>whole</type>
        <staff>2</staff>
      </note>
    </measure>
    <measure number="2" width="210.3">
      <note default-x="12.50" default-y="-5.00">
        <pitch>
          <step>E</step>
          <octave>5</octave>
        </pitch>
        <duration>2</duration>
        <voice>1</voice>
        <type>half</type>
        <stem>down</stem>
        <staff>1</staff>
      </note>
      <note default-x="110.25" default-y="-10.00">
        <pitch>
          <step>D</step>
          <octave>5</octave>
        </pitch>
        <duration>2</duration>
        <voice>1</voice>
        <type>half</type>
        <stem>down</stem>
        <staff>1</staff>
      </note>
      <backup>
        <duration>4</duration>
      </backup>
      <note default-x="12.50" default-y="-160.00">
        <pitch>
          <step>C</step>
          <octave>3</octave>
        </pitch>
        <duration>4</duration>
        <voice>5</voice>
        <type>whole</type>
        <staff>2</staff>
      </note>
      <barline location="right">
        <bar-style>light-heavy</bar-style>
      </barline>
    </measure>
  </part>
</score-partwise>
"#;
