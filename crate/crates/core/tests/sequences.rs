mod common;

use common::{ce_oracle, mask_oracle};
use lmxpairs_core::analysis::{melody_skyline, pitch_class_profile, PitchClassProfile, SkylineEntry, SkylineSequence};
use lmxpairs_core::classifier::Level;
use lmxpairs_core::fixtures::{render, skeleton, variation_population};
use lmxpairs_core::lmx::{delinearize, linearize, TokenSequence, Vocabulary, EOS, SEP};
use lmxpairs_core::pairs::{mine, MiningConfig, Strategy};
use lmxpairs_core::score::validate_two_staff;
use lmxpairs_core::sequences::{
    build_adaptation, build_conditioned, masked_cross_entropy, AdaptationLayout, Sample, SequenceError,
};
use lmxpairs_core::time::quarters;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lv(v: u8) -> Level {
    Level::new(v).unwrap()
}

fn flat_profile() -> PitchClassProfile {
    PitchClassProfile { weights: [1.0 / 12.0; 12] }
}

fn small_vocab() -> Vocabulary {
    Vocabulary::build([&TokenSequence::from_text("measure C4 D4 E4 F4 G4 quarter half whole dot staff:1 staff:2")]).unwrap()
}

#[test]
fn five_prefix_seven_body() {
    let sky = SkylineSequence {
        entries: vec![SkylineEntry { pitch: Some("C4".parse().unwrap()), duration: quarters(3, 1) }],
    };
    assert_eq!(sky.tokens().len(), 3);
    let body = TokenSequence::from_text("measure C4 whole staff:1 D4 half");
    let s = build_conditioned("x", &sky, &flat_profile(), &body, &small_vocab(), 100).unwrap();
    assert_eq!(s.mask, vec![1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0]);
    assert_eq!(s.harmony.position, 4);
    assert_eq!(*s.ids.last().unwrap(), EOS);
}

#[test]
fn prefix_is_skyline_plus_two() {
    let score = render(&skeleton(3, 1, 4), 6, 3);
    let body = linearize(&score).unwrap();
    let sky = melody_skyline(&score).unwrap();
    let vocab = Vocabulary::build([&body, &sky.tokens()]).unwrap();
    let s = build_conditioned("x", &sky, &pitch_class_profile(&score).unwrap(), &body, &vocab, 8000).unwrap();
    assert_eq!(s.prefix_len, sky.tokens().len() + 2);
    assert_eq!(s.ids.len(), s.prefix_len + body.len() + 1);
}

#[test]
fn empty_body_errors() {
    let sky = SkylineSequence::default();
    let r = build_conditioned("x", &sky, &flat_profile(), &TokenSequence::default(), &small_vocab(), 10);
    assert_eq!(r.unwrap_err(), SequenceError::EmptyBody);
}

#[test]
fn long_skyline_is_cut_to_half() {
    let entries = (0..40).map(|i| SkylineEntry { pitch: Some(if i % 2 == 0 { "C4" } else { "D4" }.parse().unwrap()), duration: quarters(1, 1) });
    let sky = SkylineSequence { entries: entries.collect() };
    let body = TokenSequence::from_text("measure C4 whole staff:1");
    let s = build_conditioned("x", &sky, &flat_profile(), &body, &small_vocab(), 50).unwrap();
    assert!(s.prefix_len - 2 <= 25);
    assert_eq!((s.prefix_len - 2) % 2, 0);
}

#[test]
fn ten_hard_six_easy() {
    let v = small_vocab();
    let hard: Vec<u32> = (0..10).map(|i| 14 + (i % 5)).collect();
    let easy: Vec<u32> = (0..6).map(|i| 14 + (i % 3)).collect();
    let s = build_adaptation("p", (&hard, lv(5)), (&easy, lv(2)), &v, AdaptationLayout::default()).unwrap();
    assert_eq!(s.ids.len(), 20);
    assert_eq!(Sample::from(s.clone()).loss_positions(), 7);
    assert_eq!(s.ids[0], Vocabulary::level_id(5));
    assert_eq!(s.ids[11], SEP);
    assert_eq!(s.ids[12], Vocabulary::level_id(2));
    let bare = AdaptationLayout { level_tokens: false, ..AdaptationLayout::default() };
    let b = build_adaptation("p", (&hard, lv(5)), (&easy, lv(2)), &v, bare).unwrap();
    assert_eq!(b.ids.len(), 18);
    assert_eq!(b.mask.iter().filter(|&&m| m == 0).count(), 7);
}

#[test]
fn zero_gap_is_rejected() {
    let r = build_adaptation("p", (&[14], lv(3)), (&[14], lv(3)), &small_vocab(), AdaptationLayout::default());
    assert!(matches!(r, Err(SequenceError::NoDifficultyGap { .. })));
}

#[test]
fn hard_segment_loses_trailing_measures_first() {
    let v = small_vocab();
    let hard = v.encode(&TokenSequence::from_text("measure C4 whole staff:1 measure D4 whole staff:1 measure E4 whole staff:1")).unwrap();
    let easy = v.encode(&TokenSequence::from_text("measure C4 whole staff:1")).unwrap();
    let layout = AdaptationLayout { max_len: 4 + 4 + 8, level_tokens: true };
    let s = build_adaptation("p", (&hard, lv(4)), (&easy, lv(1)), &v, layout).unwrap();
    assert_eq!(s.dropped_measures, 1);
    assert_eq!(&s.ids[s.ids.len() - 5..s.ids.len() - 1], &easy[..]);
}

#[test]
fn fixture_pair_masks_and_easy_segments() {
    let vars = variation_population(21, 4, 2);
    let seqs: Vec<&TokenSequence> = vars.iter().map(|v| &v.tokens).collect();
    let vocab = Vocabulary::build(seqs).unwrap();
    let (pairs, _) = mine(&vars, &MiningConfig::new(Strategy::Random, 1)).unwrap();
    assert!(pairs.len() >= 100);
    for p in pairs.iter().take(100) {
        let (h, e) = (&vars[p.hard], &vars[p.easy]);
        let (hi, ei) = (vocab.encode(&h.tokens).unwrap(), vocab.encode(&e.tokens).unwrap());
        let s = build_adaptation(&h.id, (&hi, p.hard_level), (&ei, p.easy_level), &vocab, AdaptationLayout::default()).unwrap();
        assert_eq!(s.mask, mask_oracle(&s.ids));
        assert_eq!(Sample::from(s.clone()).loss_positions(), ei.len() + 1);
        let start = s.mask.iter().position(|&m| m == 0).unwrap();
        let easy = vocab.decode(&s.ids[start..s.ids.len() - 1]).unwrap();
        validate_two_staff(delinearize(&easy).unwrap()).unwrap();
    }
}

#[test]
fn masked_positions_never_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let v = small_vocab();
    for k in 0..100 {
        let sample: Sample = if k % 2 == 0 {
            let n = rng.random_range(1..6);
            let sky = SkylineSequence {
                entries: (0..n).map(|i| SkylineEntry { pitch: Some(["C4", "E4"][i % 2].parse().unwrap()), duration: quarters(1, 1) }).collect(),
            };
            let body = TokenSequence::new((0..rng.random_range(1..20)).map(|_| v.tokens()[rng.random_range(14..v.len())].clone()).collect());
            build_conditioned("c", &sky, &flat_profile(), &body, &v, 200).unwrap().into()
        } else {
            let hard: Vec<u32> = (0..rng.random_range(1..20)).map(|_| rng.random_range(14..v.len() as u32)).collect();
            let easy: Vec<u32> = (0..rng.random_range(1..20)).map(|_| rng.random_range(14..v.len() as u32)).collect();
            build_adaptation("a", (&hard, lv(7)), (&easy, lv(3)), &v, AdaptationLayout::default()).unwrap().into()
        };
        let (_, targets, mask) = sample.shifted();
        let logits: Vec<f64> = (0..targets.len() * v.len()).map(|_| rng.random_range(-8.0..8.0)).collect();
        let base = masked_cross_entropy(&logits, v.len(), targets, mask).unwrap();
        assert!((base - ce_oracle(&logits, v.len(), targets, mask)).abs() < 1e-10);

        let mut permuted = targets.to_vec();
        let masked: Vec<usize> = (0..mask.len()).filter(|&i| mask[i] == 1).collect();
        let mut vals: Vec<u32> = masked.iter().map(|&i| permuted[i]).collect();
        vals.shuffle(&mut rng);
        for (&i, &x) in masked.iter().zip(&vals) {
            permuted[i] = if rng.random_bool(0.5) { x } else { rng.random_range(0..v.len() as u32) };
        }
        assert_eq!(masked_cross_entropy(&logits, v.len(), &permuted, mask).unwrap(), base);
    }
}
