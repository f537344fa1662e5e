//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fail.

#[path = "../../core/tests/common/mod.rs"]
mod core_oracles;
#[path = "../../tinylm/tests/common/mod.rs"]
mod lm_oracles;

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use lmxpairs_core::analysis::{melody_skyline, perturb_profile, perturb_unnormalized, pitch_class_profile};
use lmxpairs_core::classifier::{confidence_filter, fit, fit_temperature, synthetic_labels, Level, VarianceFloor, LEVELS};
use lmxpairs_core::fixtures::{corpus, render, skeleton, variation_population, TWO_MEASURE_EXCERPT};
use lmxpairs_core::lmx::{delinearize, linearize, TokenSequence, Vocabulary};
use lmxpairs_core::pairs::{enumerate_pairs, mine, MiningConfig, Strategy};
use lmxpairs_core::score::parse_musicxml;
use lmxpairs_core::sequences::{build_adaptation, build_conditioned, masked_cross_entropy, AdaptationLayout, Sample};
use lmxpairs_core::time::Time;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tinylm::sample::{check_generation, generate, SamplingConfig};
use tinylm::{Model, ModelConfig, OptimConfig, TrainState};

type Outcome = Result<String, String>;
type Criterion = (&'static str, &'static str, Duration, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lv(v: u8) -> Level {
    Level::new(v).unwrap()
}

fn ac1() -> Outcome {
    let score = parse_musicxml(TWO_MEASURE_EXCERPT.as_bytes()).map_err(|e| e.to_string())?;
    let tokens = linearize(&score).map_err(|e| e.to_string())?;
    let ratio = TWO_MEASURE_EXCERPT.len() as f64 / tokens.text().len() as f64;
    ensure((19..=27).contains(&tokens.len()), || format!("{} tokens", tokens.len()))?;
    ensure(ratio >= 5.0, || format!("compression {ratio:.2}x"))?;
    Ok(format!("{} tokens, {} -> {} chars ({ratio:.1}x)", tokens.len(), TWO_MEASURE_EXCERPT.len(), tokens.text().len()))
}

fn ac2() -> Outcome {
    let scores = corpus(50, 42, 8);
    for s in &scores {
        let back = linearize(s).and_then(|t| delinearize(&t)).map_err(|e| e.to_string())?;
        core_oracles::musically_equal(s, &back).map_err(|e| format!("{:?}: {e}", s.metadata.source_id))?;
    }
    Ok(format!("{}/50 pieces round trip", scores.len()))
}

fn ac3() -> Outcome {
    for i in 0..100 {
        let s = render(&skeleton(11, i, 4), 1 + (i % 9) as u8, 11);
        let got: Vec<(Option<u8>, Time)> = melody_skyline(&s)
            .map_err(|e| e.to_string())?
            .entries
            .iter()
            .map(|e| (e.pitch.map(|p| p.midi_number()), e.duration))
            .collect();
        ensure(got == core_oracles::skyline_oracle(&s), || format!("fixture {i} differs from the sweep oracle"))?;
    }
    Ok("100/100 fixtures match".into())
}

fn ac4() -> Outcome {
    let profiles: Vec<_> = corpus(20, 9, 4).iter().map(|s| pitch_class_profile(s).unwrap()).collect();
    for p in &profiles {
        let sum: f64 = p.weights.iter().sum();
        ensure((sum - 1.0).abs() <= 1e-9, || format!("profile sums to {sum}"))?;
    }
    for seed in 0..10_000u64 {
        let p = &profiles[seed as usize % profiles.len()];
        let raw = perturb_unnormalized(p, 0.2, seed).map_err(|e| e.to_string())?;
        for i in 0..12 {
            ensure((raw[i] - p.weights[i]).abs() <= 0.2 * p.weights[i], || format!("draw {seed} bin {i} out of bounds"))?;
            ensure(p.weights[i] != 0.0 || raw[i] == 0.0, || format!("draw {seed} revived bin {i}"))?;
        }
        let out = perturb_profile(p, 0.2, seed).map_err(|e| e.to_string())?;
        ensure((out.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9, || format!("draw {seed} does not sum to 1"))?;
    }
    Ok("20 profiles, 10000 draws in bounds".into())
}

fn ac5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let dim = rng.random_range(1..=12);
        let mut classes: Vec<usize> = (0..LEVELS).collect();
        classes.shuffle(&mut rng);
        let n = rng.random_range(2..=LEVELS);
        let m = core_oracles::random_model(&mut rng, dim, &classes[..n]);
        let f: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let got = m.posterior(&f).map_err(|e| e.to_string())?;
        let want = core_oracles::bayes_oracle(&m, &f);
        for k in 0..LEVELS {
            worst = worst.max((got.probs[k] - want[k]).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("posterior error {worst:e}"))?;

    let features: Vec<[f64; 12]> = corpus(120, 5, 2).iter().map(|s| lmxpairs_core::analysis::extract_features(s).unwrap().values).collect();
    let labels = synthetic_labels(&features).map_err(|e| e.to_string())?;
    let base = fit(&features, &labels, VarianceFloor::default()).map_err(|e| e.to_string())?;
    let tuned = fit_temperature(&base, &features, &labels).map_err(|e| e.to_string())?;
    for f in &features {
        let (a, b) = (base.posterior(f).unwrap().label, tuned.posterior(f).unwrap().label);
        ensure(a == b, || format!("temperature {} moved a label {a} -> {b}", tuned.temperature))?;
    }
    let conf: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
    let kept = confidence_filter(&conf, 0.25).map_err(|e| e.to_string())?.len();
    ensure(kept == 75, || format!("kept {kept} of 100"))?;
    Ok(format!("max error {worst:.1e}; T={:.3} keeps all 120 labels; 75/100 kept", tuned.temperature))
}

fn ac6() -> Outcome {
    let mut checked = 0;
    for size in 0..=8 {
        for ms in core_oracles::multisets(size, 1) {
            let labels: Vec<Level> = ms.iter().rev().map(|&x| lv(x)).collect();
            for gap in 1..=4 {
                let got: BTreeSet<_> = enumerate_pairs(&labels, gap).into_iter().collect();
                ensure(got == core_oracles::exhaustive(&labels, gap), || format!("{ms:?} gap {gap}"))?;
                checked += 1;
            }
        }
    }
    let mut means = Vec::new();
    for seed in [1u64, 2, 3] {
        let vars = variation_population(seed, 6, 2);
        for gap in [1u8, 2] {
            let (random, rr) = mine(&vars, &MiningConfig::new(Strategy::Random, gap)).map_err(|e| e.to_string())?;
            let (filtered, fr) = mine(&vars, &MiningConfig::new(Strategy::Filtered, gap)).map_err(|e| e.to_string())?;
            let rset: BTreeSet<_> = random.iter().map(|p| (p.hard, p.easy)).collect();
            ensure(filtered.iter().all(|p| rset.contains(&(p.hard, p.easy))), || format!("seed {seed} gap {gap}: filtered not a subset"))?;
            let (f, r) = (fr.mean_distance.unwrap_or(0.0), rr.mean_distance.unwrap_or(0.0));
            ensure(f <= r, || format!("seed {seed} gap {gap}: filtered {f:.4} > random {r:.4}"))?;
            means.push(format!("{r:.3}->{f:.3}"));
        }
    }
    Ok(format!("{checked} enumerations exact; distances {}", means.join(" ")))
}

fn ac7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let vars = variation_population(21, 3, 2);
    let skeletons: Vec<_> = (0..50).map(|i| render(&skeleton(21, i, 2), 1 + (i % 9) as u8, 21)).collect();
    let bodies: Vec<TokenSequence> = skeletons.iter().map(|s| linearize(s).unwrap()).collect();
    let skylines: Vec<_> = skeletons.iter().map(|s| melody_skyline(s).unwrap()).collect();
    let sky_tokens: Vec<TokenSequence> = skylines.iter().map(|s| s.tokens()).collect();
    let vocab = Vocabulary::build(vars.iter().map(|v| &v.tokens).chain(&bodies).chain(&sky_tokens)).map_err(|e| e.to_string())?;
    let mut samples: Vec<Sample> = Vec::new();
    for (i, s) in skeletons.iter().enumerate() {
        let c = build_conditioned(&format!("c{i}"), &skylines[i], &pitch_class_profile(s).unwrap(), &bodies[i], &vocab, 4000);
        samples.push(c.map_err(|e| e.to_string())?.into());
    }
    let (pairs, _) = mine(&vars, &MiningConfig::new(Strategy::Random, 1)).map_err(|e| e.to_string())?;
    for p in pairs.iter().take(50) {
        let (h, e) = (vocab.encode(&vars[p.hard].tokens).unwrap(), vocab.encode(&vars[p.easy].tokens).unwrap());
        let a = build_adaptation("a", (&h, p.hard_level), (&e, p.easy_level), &vocab, AdaptationLayout::default()).map_err(|e| e.to_string())?;
        let s = Sample::from(a);
        ensure(s.loss_positions() == e.len() + 1, || format!("{} loss positions for {} easy tokens", s.loss_positions(), e.len()))?;
        samples.push(s);
    }
    for (k, s) in samples.iter().enumerate() {
        let (_, targets, mask) = s.shifted();
        let logits: Vec<f64> = (0..targets.len() * vocab.len()).map(|_| rng.random_range(-8.0..8.0)).collect();
        let base = masked_cross_entropy(&logits, vocab.len(), targets, mask).map_err(|e| e.to_string())?;
        let mut permuted = targets.to_vec();
        let masked: Vec<usize> = (0..mask.len()).filter(|&i| mask[i] == 1).collect();
        let mut vals: Vec<u32> = masked.iter().map(|&i| permuted[i]).collect();
        vals.shuffle(&mut rng);
        for (&i, &x) in masked.iter().zip(&vals) {
            permuted[i] = x;
        }
        let moved = masked_cross_entropy(&logits, vocab.len(), &permuted, mask).unwrap();
        ensure(moved.to_bits() == base.to_bits(), || format!("sample {k}: loss moved by {:e}", moved - base))?;
    }
    Ok(format!("{} samples (50 conditioned, 50 adaptation) unchanged", samples.len()))
}

fn ac8() -> Outcome {
    let g = lm_oracles::gradient_check(11, 5, 100);
    ensure(g.worst < 1e-4, || format!("worst relative error {:e}", g.worst))?;
    ensure(g.tiny_worst < 1e-9, || format!("worst absolute error on tiny gradients {:e}", g.tiny_worst))?;
    Ok(format!("{} parameters, worst relative error {:.1e}", g.checked, g.worst))
}

fn ac9() -> Outcome {
    let model = lm_oracles::scrambled(lm_oracles::tiny(20, 16, 4, 2), 9, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let n = rng.random_range(2..40);
        let ids: Vec<u32> = (0..n).map(|_| rng.random_range(0..20)).collect();
        let cut = rng.random_range(0..n - 1);
        let mut other = ids.clone();
        for t in other.iter_mut().skip(cut + 1) {
            *t = rng.random_range(0..20);
        }
        let (a, b) = (model.logits(&ids, None, None).unwrap(), model.logits(&other, None, None).unwrap());
        let past = (cut + 1) * 20;
        ensure(a[..past].iter().zip(&b[..past]).all(|(x, y)| x.to_bits() == y.to_bits()), || format!("past logits moved (cut {cut})"))?;
    }
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let xq: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
        let xk: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (delta, shift) = (rng.random_range(0..64), rng.random_range(1..1000));
        for layer in 0..2 {
            for head in 0..4 {
                let base = model.attention_score(layer, head, &xq, delta, &xk, 0);
                let moved = model.attention_score(layer, head, &xq, shift + delta, &xk, shift);
                worst = worst.max((base - moved).abs());
            }
        }
    }
    ensure(worst < 1e-6, || format!("offset scores differ by {worst:e}"))?;
    Ok(format!("50 perturbations bitwise; rotary drift {worst:.1e}"))
}

fn ac10() -> Outcome {
    let pieces: Vec<_> = (0..10).map(|i| render(&skeleton(42, i, 1), 1 + (i % 2) as u8, 42)).collect();
    let bodies: Vec<_> = pieces.iter().map(|p| linearize(p).unwrap()).collect();
    let skylines: Vec<_> = pieces.iter().map(|p| melody_skyline(p).unwrap()).collect();
    let sky_tokens: Vec<_> = skylines.iter().map(|s| s.tokens()).collect();
    let vocab = Vocabulary::build(bodies.iter().chain(&sky_tokens)).map_err(|e| e.to_string())?;
    let conditioned: Vec<_> = pieces
        .iter()
        .enumerate()
        .map(|(i, p)| build_conditioned(&format!("p{i}"), &skylines[i], &pitch_class_profile(p).unwrap(), &bodies[i], &vocab, 256).unwrap())
        .collect();
    let samples: Vec<Sample> = conditioned.iter().cloned().map(Sample::from).collect();
    let model = Model::new(ModelConfig::new(vocab.len(), 256)).map_err(|e| e.to_string())?;
    let mut state = TrainState::new(model, OptimConfig::default());
    let mut last = f64::INFINITY;
    for _ in 0..2000 {
        let r = state.train_step(&samples).map_err(|e| e.to_string())?;
        last = r.loss;
        if r.loss < 0.1 {
            let c = &conditioned[0];
            let gens = generate(&state.model, &c.ids[..c.prefix_len], Some(&c.harmony), &SamplingConfig::new(128, 42, 256)).unwrap();
            let valid = gens.iter().filter(|g| check_generation(g, &vocab).is_ok()).count();
            return Ok(format!("loss {:.4} at step {}; {valid}/128 samples valid", r.loss, r.step));
        }
    }
    Err(format!("loss {last:.4} after 2000 steps"))
}

fn lmxpairs(dir: &Path, out: &str, args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_lmxpairs"))
        .current_dir(dir)
        .args(["--out", out, "--jobs", "4"])
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.success(), || format!("{out}: {}", String::from_utf8_lossy(&o.stderr).trim()))
}

fn ac11() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    let run = |out: &str, args: &[&str]| lmxpairs(d, out, args);
    run("orig", &["gen-fixtures", "--pieces", "6", "--measures", "1"])?;
    run("corpus", &["gen-fixtures", "--pieces", "6", "--measures", "1", "--levels", "1,2,3,4,5,6,7,8,9"])?;
    run("enc", &["lmx", "encode", "orig/scores"])?;
    run("sky", &["skyline", "orig/scores"])?;
    run("prof", &["profile", "orig/scores", "--noise-scale", "0.2"])?;
    run("seqs", &["build-seqs", "--mode", "conditioned", "corpus/scores", "orig/scores", "--max-len", "512"])?;
    run("prompts", &["build-seqs", "--mode", "conditioned", "orig/scores", "--vocab", "seqs/vocab.txt", "--max-len", "512"])?;
    run(
        "model",
        &["train", "--sequences", "seqs/sequences.jsonl", "--vocab", "seqs/vocab.txt", "--steps", "400", "--lr", "3e-3", "--width", "32"],
    )?;
    run("gen", &["sample", "--model", "model/model.json", "--vocab", "seqs/vocab.txt", "--prompts", "prompts/sequences.jsonl", "--n", "128"])?;
    run("feat-train", &["features", "corpus/scores"])?;
    run("gnb", &["fit-gnb", "--features", "feat-train/features.jsonl", "--labels", "corpus/labels.jsonl"])?;
    run("feat", &["features", "orig/scores", "gen/variations.lmx"])?;
    run("post", &["classify", "--model", "gnb/gnb.json", "--features", "feat/features.jsonl"])?;
    run("emb", &["embed", "orig/scores", "gen/variations.lmx"])?;
    let mut runs = Vec::new();
    for strategy in ["random", "filtered"] {
        for gap in ["1", "2"] {
            let out = format!("mine-{strategy}-{gap}");
            run(&out, &[
                "mine-pairs", "--variations", "gen/variations.lmx", "--posteriors", "post/posteriors.jsonl",
                "--embeddings", "emb/embeddings.jsonl", "--strategy", strategy, "--min-gap", gap,
            ])?;
            runs.push(out);
        }
    }
    let mut args = vec!["evaluate", "--posteriors", "post/posteriors.jsonl", "--embeddings", "emb/embeddings.jsonl", "--scores", "orig/scores", "--run"];
    args.extend(runs.iter().map(String::as_str));
    run("eval", &args)?;

    let stats: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("gen/stats.json")).unwrap()).unwrap();
    let csv = std::fs::read_to_string(d.join("eval/report.csv")).map_err(|e| e.to_string())?;
    let mut lines = csv.lines();
    ensure(lines.next() == Some("strategy,gap,↓,∼,↑,distance"), || "unexpected header".into())?;
    let rows: Vec<&str> = lines.collect();
    ensure(rows.len() == 4, || format!("{} rows instead of 4", rows.len()))?;
    for row in &rows {
        let cells: Vec<&str> = row.split(',').collect();
        let sum: f64 = cells[2..5].iter().map(|c| c.parse::<f64>().unwrap()).sum();
        ensure((sum - 100.0).abs() <= 0.1, || format!("row {row} sums to {sum}"))?;
    }
    Ok(format!("{}/{} variations valid; rows: {}", stats["valid"], stats["generated"], rows.join(" | ")))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("AC1", "LMX compression", Duration::from_secs(1), ac1),
        ("AC2", "codec round trip", Duration::from_secs(30), ac2),
        ("AC3", "skyline oracle", Duration::from_secs(10), ac3),
        ("AC4", "profile perturbation", Duration::from_secs(5), ac4),
        ("AC5", "naive Bayes oracle", Duration::from_secs(60), ac5),
        ("AC6", "pair mining", Duration::from_secs(60), ac6),
        ("AC7", "loss masks", Duration::from_secs(60), ac7),
        ("AC8", "gradient check", Duration::from_secs(120), ac8),
        ("AC9", "causality and rotary offsets", Duration::from_secs(60), ac9),
        ("AC10", "overfit", Duration::from_secs(600), ac10),
        ("AC11", "end-to-end pipeline", Duration::from_secs(1800), ac11),
    ];
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let result = result.and_then(|d| if took <= budget { Ok(d) } else { Err(format!("{d}; over the {budget:?} budget")) });
        match result {
            Ok(d) => println!("{id} PASS {name}: {d} ({:.2}s)", took.as_secs_f64()),
            Err(e) => {
                failed += 1;
                println!("{id} FAIL {name}: {e} ({:.2}s)", took.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
