mod common;

use common::musically_equal;
use lmxpairs_core::fixtures::{corpus, render, skeleton};
use lmxpairs_core::lmx::{delinearize, linearize, read_token_lines, write_token_lines, TokenSequence, Vocabulary};
use lmxpairs_core::score::{parse_musicxml, serialize_musicxml, validate_two_staff, Pitch};
use lmxpairs_core::time::{notated_duration, NoteType, Time};
use proptest::prelude::*;

#[test]
fn fixture_corpus_round_trips() {
    for s in corpus(50, 42, 8) {
        let back = delinearize(&linearize(&s).unwrap()).unwrap();
        musically_equal(&s, &back).unwrap_or_else(|e| panic!("{:?}: {e}", s.metadata.source_id));
    }
}

#[test]
fn musicxml_round_trip() {
    for s in corpus(20, 3, 6) {
        let xml = serialize_musicxml(&s);
        let back = parse_musicxml(&xml).unwrap();
        musically_equal(&s, &back).unwrap();
        validate_two_staff(back).unwrap();
    }
}

#[test]
fn corpus_compresses_at_least_five_fold() {
    let scores = corpus(50, 42, 8);
    let ratios: Vec<f64> = scores
        .iter()
        .map(|s| serialize_musicxml(s).len() as f64 / linearize(s).unwrap().text().len() as f64)
        .collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!(mean >= 5.0, "mean ratio {mean}");
}

#[test]
fn vocabulary_ids_round_trip() {
    let seqs: Vec<TokenSequence> = corpus(50, 42, 8).iter().map(|s| linearize(s).unwrap()).collect();
    let vocab = Vocabulary::build(&seqs).unwrap();
    for s in &seqs {
        let ids = vocab.encode(s).unwrap();
        assert_eq!(vocab.decode(&ids).unwrap().tokens, s.tokens);
    }
    for (id, t) in vocab.tokens().iter().enumerate() {
        assert_eq!(vocab.id(t), Some(id as u32));
    }
    let text = write_token_lines(&seqs);
    let reread = read_token_lines(&text);
    assert_eq!(reread, seqs);
}

#[test]
fn ten_distinct_tokens_give_ten_plus_specials() {
    let s = TokenSequence::from_text("a b c d e f g h i j a b");
    assert_eq!(Vocabulary::build([&s]).unwrap().len(), 10 + 14);
}

#[test]
fn more_than_512_distinct_tokens_overflow() {
    let s = TokenSequence::new((0..600).map(|i| format!("tok{i}")).collect());
    assert!(Vocabulary::build([&s]).is_err());
}

/// Replays the token stream and returns the onset of each note item, per measure.
fn item_onsets(seq: &TokenSequence) -> Vec<Vec<Time>> {
    use std::collections::HashMap;
    let mut out: Vec<Vec<Time>> = Vec::new();
    let mut cursors: HashMap<(String, String), Time> = HashMap::new();
    let toks = &seq.tokens;
    let mut i = 0;
    while i < toks.len() {
        let t = toks[i].as_str();
        if t == "measure" {
            out.push(Vec::new());
            cursors.clear();
            i += 1;
            continue;
        }
        let is_note = t == "rest" || t.parse::<Pitch>().is_ok();
        if t == "forward" || t == "grace" || t == "chord" || is_note {
            let start = i;
            let mut j = i;
            while !toks[j].starts_with("staff:") {
                j += 1;
            }
            let staff = toks[j].clone();
            let voice = if toks[j - 1].starts_with("voice:") { toks[j - 1].clone() } else { "default".into() };
            let span = &toks[start..j];
            let cursor = cursors.entry((staff, voice)).or_default();
            if !span.iter().any(|t| t == "chord") {
                out.last_mut().unwrap().push(*cursor);
            }
            if !span.iter().any(|t| t == "chord" || t == "grace") {
                let mut d = Time::from_integer(0);
                let mut k = 0;
                while k < span.len() {
                    if let Some(nt) = NoteType::from_name(&span[k]) {
                        let dots = span[k + 1..].iter().take_while(|t| *t == "dot").count() as u8;
                        let tuplet = span.iter().find_map(|t| {
                            let (a, n) = t.strip_prefix("tuplet:")?.split_once(':')?;
                            Some(lmxpairs_core::time::Tuplet { actual: a.parse().ok()?, normal: n.parse().ok()? })
                        });
                        d += notated_duration(nt, dots, tuplet);
                    }
                    k += 1;
                }
                *cursor += d;
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_pieces_round_trip(seed in 0u64..10_000, idx in 0usize..50, level in 1u8..=9, measures in 1usize..6) {
        let s = render(&skeleton(seed, idx, measures), level, seed);
        let lmx = linearize(&s).unwrap();
        let back = delinearize(&lmx).unwrap();
        prop_assert!(musically_equal(&s, &back).is_ok());
        prop_assert_eq!(linearize(&back).unwrap().tokens, lmx.tokens);
    }

    #[test]
    fn note_onsets_never_go_backwards(seed in 0u64..10_000, idx in 0usize..50, level in 1u8..=9) {
        let s = render(&skeleton(seed, idx, 4), level, seed);
        for onsets in item_onsets(&linearize(&s).unwrap()) {
            prop_assert!(onsets.windows(2).all(|w| w[0] <= w[1]), "{:?}", onsets);
        }
    }
}
