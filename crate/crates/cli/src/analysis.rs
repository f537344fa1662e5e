//! Parsing, LMX conversion, per-score analysis, embeddings and fixtures.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use lmxpairs_core::analysis::{extract_features, melody_skyline, perturb_profile, pitch_class_profile};
use lmxpairs_core::fixtures::{corpus_with_levels, render, skeleton};
use lmxpairs_core::jsonl;
use lmxpairs_core::lmx::{delinearize, delinearize_recovering, linearize, write_token_lines, TokenSequence};
use lmxpairs_core::score::{serialize_musicxml, validate_two_staff};
use lmxpairs_core::similarity::{embeddings_to_jsonl, load_precomputed, BaselineEmbedder, EmbeddingProvider, StyleEmbedding};

use crate::inputs::{load_scores, read_tokens, FeatureRecord, Item, ProfileRecord};
use crate::run::Run;
use crate::Ctx;

#[derive(Debug, Args, Serialize)]
pub struct ScoresArgs {
    /// Score files (.musicxml, .xml, .mxl), token files (.lmx) or directories.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ParseArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scores: ScoresArgs,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum LmxAction {
    /// Scores to token lines.
    Encode(ScoresArgs),
    /// Token lines to MusicXML.
    Decode(DecodeArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DecodeArgs {
    pub tokens: PathBuf,
    /// Skip malformed spans instead of failing.
    #[arg(long)]
    pub recover: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ProfileArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scores: ScoresArgs,
    /// Relative noise in [0, 1); item `i` draws from seed + i.
    #[arg(long, default_value_t = 0.0)]
    pub noise_scale: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct EmbedArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub scores: ScoresArgs,
    /// JSONL of `{"id", "dim", "v"}` vectors to use instead of the baseline.
    #[arg(long)]
    pub precomputed: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FixtureArgs {
    #[arg(long, default_value_t = 20)]
    pub pieces: usize,
    #[arg(long, default_value_t = 4)]
    pub measures: usize,
    /// Render every piece at each of these levels (ids `pieceNNN-lL`)
    /// instead of once at a seeded level.
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u8).range(1..=9))]
    pub levels: Vec<u8>,
}

#[derive(Serialize)]
struct ParseRecord {
    id: String,
    staves: u8,
    measures: usize,
    notes: usize,
    duration: String,
    genre: Option<String>,
    two_staff: bool,
    problem: Option<String>,
}

pub fn parse(ctx: &Ctx, args: ParseArgs) -> anyhow::Result<()> {
    let mut run = Run::start(ctx, "parse")?;
    let items = load_scores(&mut run, &args.scores.inputs)?;
    let records: Vec<ParseRecord> = items
        .iter()
        .map(|it| {
            let s = &it.score;
            let check = validate_two_staff(s.clone());
            ParseRecord {
                id: it.id.clone(),
                staves: s.staves,
                measures: s.measures.len(),
                notes: s.notes().count(),
                duration: s.total_duration().to_string(),
                genre: s.metadata.genre.clone(),
                two_staff: check.is_ok(),
                problem: check.err().map(|e| e.to_string()),
            }
        })
        .collect();
    run.write("scores.jsonl", jsonl::to_string(&records))?;
    run.finish(ctx, &args)
}

fn encode_all(items: &[Item]) -> anyhow::Result<Vec<TokenSequence>> {
    items
        .par_iter()
        .map(|it| match &it.tokens {
            Some(t) => Ok(t.clone()),
            None => linearize(&it.score).map(|t| t.with_source(it.id.clone())).with_context(|| format!("encoding {}", it.id)),
        })
        .collect()
}

#[derive(Serialize)]
struct EncodeStats {
    sequences: usize,
    tokens: usize,
    mean_tokens: f64,
}

#[derive(Serialize)]
struct SkippedRecord {
    id: String,
    start: usize,
    end: usize,
    reason: String,
}

pub fn lmx(ctx: &Ctx, action: LmxAction) -> anyhow::Result<()> {
    match &action {
        LmxAction::Encode(args) => {
            let mut run = Run::start(ctx, "lmx encode")?;
            let items = load_scores(&mut run, &args.inputs)?;
            let seqs = encode_all(&items)?;
            let tokens: usize = seqs.iter().map(TokenSequence::len).sum();
            run.write("tokens.lmx", write_token_lines(&seqs))?;
            let stats = EncodeStats { sequences: seqs.len(), tokens, mean_tokens: tokens as f64 / seqs.len() as f64 };
            run.write_json("stats.json", &stats)?;
            run.finish(ctx, &action)
        }
        LmxAction::Decode(args) => {
            let mut run = Run::start(ctx, "lmx decode")?;
            let seqs = read_tokens(&mut run, &args.tokens)?;
            let decoded: Vec<_> = seqs
                .par_iter()
                .map(|s| {
                    let id = s.source_id.clone().unwrap_or_default();
                    if args.recover {
                        let d = delinearize_recovering(s).with_context(|| format!("decoding {id}"))?;
                        Ok((id, d.score, d.skipped))
                    } else {
                        Ok((id.clone(), delinearize(s).with_context(|| format!("decoding {id}"))?, Vec::new()))
                    }
                })
                .collect::<anyhow::Result<_>>()?;
            let mut skipped = Vec::new();
            for (id, mut score, spans) in decoded {
                score.metadata.source_id = Some(id.clone());
                run.write(&format!("scores/{}.musicxml", file_safe(&id)), serialize_musicxml(&score))?;
                skipped.extend(spans.into_iter().map(|s| SkippedRecord { id: id.clone(), start: s.start, end: s.end, reason: s.reason }));
            }
            if args.recover {
                run.write("skipped.jsonl", jsonl::to_string(&skipped))?;
            }
            run.finish(ctx, &action)
        }
    }
}

/// Replaces characters that do not belong in file names.
fn file_safe(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

pub fn skyline(ctx: &Ctx, args: ScoresArgs) -> anyhow::Result<()> {
    let mut run = Run::start(ctx, "skyline")?;
    let items = load_scores(&mut run, &args.inputs)?;
    let seqs: Vec<TokenSequence> = items
        .par_iter()
        .map(|it| Ok(melody_skyline(&it.score).with_context(|| format!("skyline of {}", it.id))?.tokens().with_source(it.id.clone())))
        .collect::<anyhow::Result<_>>()?;
    run.write("skylines.lmx", write_token_lines(&seqs))?;
    run.finish(ctx, &args)
}

pub fn profile(ctx: &Ctx, args: ProfileArgs) -> anyhow::Result<()> {
    let mut run = Run::start(ctx, "profile")?;
    let items = load_scores(&mut run, &args.scores.inputs)?;
    let records: Vec<ProfileRecord> = items
        .par_iter()
        .enumerate()
        .map(|(i, it)| {
            let mut p = pitch_class_profile(&it.score).with_context(|| format!("profile of {}", it.id))?;
            if args.noise_scale > 0.0 {
                p = perturb_profile(&p, args.noise_scale, ctx.seed.wrapping_add(i as u64))?;
            }
            Ok(ProfileRecord { id: it.id.clone(), weights: p.weights })
        })
        .collect::<anyhow::Result<_>>()?;
    run.write("profiles.jsonl", jsonl::to_string(&records))?;
    run.finish(ctx, &args)
}

pub fn features(ctx: &Ctx, args: ScoresArgs) -> anyhow::Result<()> {
    let mut run = Run::start(ctx, "features")?;
    let items = load_scores(&mut run, &args.inputs)?;
    let records: Vec<FeatureRecord> = items
        .par_iter()
        .map(|it| Ok(FeatureRecord { id: it.id.clone(), values: extract_features(&it.score).with_context(|| format!("features of {}", it.id))?.values }))
        .collect::<anyhow::Result<_>>()?;
    run.write("features.jsonl", jsonl::to_string(&records))?;
    run.finish(ctx, &args)
}

pub fn embed(ctx: &Ctx, args: EmbedArgs) -> anyhow::Result<()> {
    let mut run = Run::start(ctx, "embed")?;
    let items = load_scores(&mut run, &args.scores.inputs)?;
    let seqs = encode_all(&items)?;
    let provider: Box<dyn EmbeddingProvider> = match &args.precomputed {
        Some(path) => {
            run.read(path)?;
            Box::new(load_precomputed(path)?)
        }
        None => Box::new(BaselineEmbedder),
    };
    let embeddings: Vec<StyleEmbedding> = items
        .par_iter()
        .zip(&seqs)
        .map(|(it, t)| provider.embed(t, &it.score).with_context(|| format!("embedding {}", it.id)))
        .collect::<anyhow::Result<_>>()?;
    run.write("embeddings.jsonl", embeddings_to_jsonl(items.iter().map(|it| it.id.as_str()).zip(&embeddings)))?;
    run.finish(ctx, &args)
}

#[derive(Serialize)]
struct FixtureRecord {
    id: String,
    level: u8,
    genre: String,
}

pub fn gen_fixtures(ctx: &Ctx, args: FixtureArgs) -> anyhow::Result<()> {
    anyhow::ensure!(args.pieces >= 1, "--pieces must be at least 1");
    anyhow::ensure!(args.measures >= 1, "--measures must be at least 1");
    let mut run = Run::start(ctx, "gen-fixtures")?;
    let rendered: Vec<(String, u8, lmxpairs_core::score::Score)> = if args.levels.is_empty() {
        corpus_with_levels(args.pieces, ctx.seed, args.measures)
            .into_iter()
            .map(|(level, s)| (s.metadata.source_id.clone().unwrap_or_default(), level, s))
            .collect()
    } else {
        (0..args.pieces)
            .into_par_iter()
            .flat_map_iter(|i| {
                let sk = skeleton(ctx.seed, i, args.measures);
                args.levels.iter().map(move |&l| {
                    let mut s = render(&sk, l, ctx.seed);
                    let id = format!("{}-l{l}", sk.id);
                    s.metadata.source_id = Some(id.clone());
                    (id, l, s)
                }).collect::<Vec<_>>()
            })
            .collect()
    };
    let mut labels = Vec::new();
    for (id, level, score) in &rendered {
        run.write(&format!("scores/{id}.musicxml"), serialize_musicxml(score))?;
        labels.push(FixtureRecord { id: id.clone(), level: *level, genre: score.metadata.genre.clone().unwrap_or_default() });
    }
    run.write("labels.jsonl", jsonl::to_string(&labels))?;
    run.finish(ctx, &args)
}
