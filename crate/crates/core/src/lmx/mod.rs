//! Linearized MusicXML: a flat token encoding of a score.
//!
//! Each measure starts with `measure`, followed by attribute tokens when they
//! change (`key:fifths:N`, `time beats:N beat-type:N`, one `clef:XL` per
//! staff) and then the notes of both staves merged in onset order. A note is
//!
//! ```text
//! [chord] [grace] PITCH|rest TYPE dot* [tuplet:A:N] [tie:stop] [tie:start]
//!     ARTICULATION* [dynamics:X] [voice:V] staff:S
//! ```
//!
//! and a silent gap inside a voice is `forward TYPE dot* ... [voice:V] staff:S`.
//! `voice:V` is omitted when it is the staff's default voice (1 for staff 1,
//! 5 for staff 2). Every note in a voice starts where the previous one in that
//! voice ended, so onsets are implied by the stream.

mod decode;
mod encode;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decode::{delinearize, delinearize_recovering, Decoded, SkippedSpan};
pub use encode::linearize;
pub use vocab::{Vocabulary, VocabError, BOS, EOS, HARMONY, MAX_VOCAB, PAD, SEP, SPECIALS};

pub const MEASURE: &str = "measure";
pub const TIME: &str = "time";
pub const CHORD: &str = "chord";
pub const GRACE: &str = "grace";
pub const REST: &str = "rest";
pub const DOT: &str = "dot";
pub const FORWARD: &str = "forward";
pub const TIE_START: &str = "tie:start";
pub const TIE_STOP: &str = "tie:stop";

pub const ARTICULATIONS: [&str; 6] = ["accent", "fermata", "staccatissimo", "staccato", "strong-accent", "tenuto"];
pub const DYNAMICS: [&str; 11] = ["fff", "ff", "f", "mf", "mp", "p", "pp", "ppp", "sf", "sfz", "fp"];

/// Voice assumed when a note carries no `voice:` token.
pub fn default_voice(staff: u8) -> u8 {
    4 * staff.saturating_sub(1) + 1
}

#[derive(Debug, Error)]
pub enum LmxError {
    #[error("measure {measure}: cannot encode {element}")]
    Unencodable { element: String, measure: String },
    #[error("empty token sequence")]
    EmptySequence,
    #[error("token {index} ({token:?}): {reason}")]
    Decode { index: usize, token: String, reason: String },
}

/// Ordered LMX tokens for one score.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub source_id: Option<String>,
}

impl TokenSequence {
    pub fn new(tokens: Vec<String>) -> TokenSequence {
        TokenSequence { tokens, source_id: None }
    }

    pub fn with_source(mut self, id: impl Into<String>) -> TokenSequence {
        self.source_id = Some(id.into());
        self
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Space-joined text, as stored in token files.
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn from_text(line: &str) -> TokenSequence {
        TokenSequence::new(line.split_whitespace().map(str::to_string).collect())
    }
}

/// One sequence per line, tokens separated by single spaces. A sequence
/// with a source id is prefixed by the id and a tab.
pub fn write_token_lines<'a>(seqs: impl IntoIterator<Item = &'a TokenSequence>) -> String {
    let mut out = String::new();
    for s in seqs {
        if let Some(id) = &s.source_id {
            out.push_str(id);
            out.push('\t');
        }
        out.push_str(&s.text());
        out.push('\n');
    }
    out
}

pub fn read_token_lines(text: &str) -> Vec<TokenSequence> {
    text.lines()
        .map(|line| match line.split_once('\t') {
            Some((id, rest)) => TokenSequence::from_text(rest).with_source(id),
            None => TokenSequence::from_text(line),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::TWO_MEASURE_EXCERPT;
    use crate::score::{parse_musicxml, Attributes, Measure, Metadata, Score};
    use crate::time::quarters;

    fn seq(s: &str) -> TokenSequence {
        TokenSequence::from_text(s)
    }

    #[test]
    fn excerpt_tokens() {
        let score = parse_musicxml(TWO_MEASURE_EXCERPT.as_bytes()).unwrap();
        let lmx = linearize(&score).unwrap();
        assert_eq!(
            lmx.text(),
            "measure key:fifths:0 time beats:4 beat-type:4 clef:G2 clef:F4 C5 whole staff:1 C3 whole staff:2 \
             measure E5 half staff:1 C3 whole staff:2 D5 half staff:1"
        );
    }

    #[test]
    fn empty_measure_has_only_header() {
        let score = Score {
            metadata: Metadata::default(),
            staves: 2,
            measures: vec![Measure {
                number: "1".into(),
                start: quarters(0, 1),
                duration: quarters(4, 1),
                attributes: Attributes::piano_default(),
                notes: vec![],
            }],
        };
        let lmx = linearize(&score).unwrap();
        assert_eq!(lmx.text(), "measure key:fifths:0 time beats:4 beat-type:4 clef:G2 clef:F4");
        assert_eq!(delinearize(&lmx).unwrap().measures[0].duration, quarters(4, 1));
    }

    #[test]
    fn empty_sequence_is_an_error() {
        assert!(matches!(delinearize(&seq("")), Err(LmxError::EmptySequence)));
    }

    #[test]
    fn bare_duration_reports_its_index() {
        let err = delinearize(&seq("measure C4 quarter staff:1 quarter staff:1")).unwrap_err();
        assert!(matches!(err, LmxError::Decode { index: 4, .. }), "{err}");
    }

    #[test]
    fn must_start_with_measure() {
        assert!(matches!(delinearize(&seq("C4 quarter staff:1")), Err(LmxError::Decode { index: 0, .. })));
    }

    #[test]
    fn chord_and_voices_decode() {
        let s = delinearize(&seq("measure C4 half staff:1 chord E4 half staff:1 G4 quarter voice:2 staff:1 C3 whole staff:2"))
            .unwrap();
        let notes = &s.measures[0].notes;
        assert_eq!(notes.len(), 4);
        assert!(notes[1].chord);
        assert_eq!(notes[1].onset, quarters(0, 1));
        assert_eq!(notes[2].voice, 2);
        assert_eq!(notes[3].voice, 5);
        assert_eq!(s.measures[0].duration, quarters(4, 1));
    }

    #[test]
    fn forward_advances_the_voice() {
        let s = delinearize(&seq("measure forward half staff:1 C5 half staff:1")).unwrap();
        assert_eq!(s.measures[0].notes[0].onset, quarters(2, 1));
        let s2 = delinearize(&seq("measure C5 quarter staff:1 measure D5 quarter staff:1")).unwrap();
        assert_eq!(s2.measures[1].start, quarters(1, 1));
    }

    #[test]
    fn recovery_skips_bad_spans() {
        let s = seq("measure C4 quarter staff:1 bogus token D4 quarter staff:1 E4 staff:1 F4 quarter staff:1");
        assert!(delinearize(&s).is_err());
        let d = delinearize_recovering(&s).unwrap();
        assert_eq!(d.score.measures[0].notes.len(), 3);
        assert_eq!(d.skipped.len(), 2);
        assert_eq!((d.skipped[0].start, d.skipped[0].end), (4, 6));
        assert!(matches!(delinearize_recovering(&seq("quarter dot")), Err(LmxError::EmptySequence)));
    }

    #[test]
    fn unsupported_dynamic_is_dropped() {
        let mut score = parse_musicxml(TWO_MEASURE_EXCERPT.as_bytes()).unwrap();
        score.measures[0].notes[0].dynamic = Some("niente".into());
        score.measures[0].notes[0].articulations.push("doit".into());
        let plain = linearize(&parse_musicxml(TWO_MEASURE_EXCERPT.as_bytes()).unwrap()).unwrap();
        assert_eq!(linearize(&score).unwrap(), plain);
    }

    #[test]
    fn unspellable_duration_is_unencodable() {
        let mut score = parse_musicxml(TWO_MEASURE_EXCERPT.as_bytes()).unwrap();
        score.measures[0].notes[0].duration = quarters(5, 1);
        score.measures[0].duration = quarters(5, 1);
        score.measures[1].start = quarters(5, 1);
        match linearize(&score) {
            Err(LmxError::Unencodable { measure, .. }) => assert_eq!(measure, "1"),
            other => panic!("{other:?}"),
        }
    }
}
