//! Pair mining over sampled variations.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use serde::Serialize;

use lmxpairs_core::lmx::Vocabulary;
use lmxpairs_core::pairs::{export_pairs, mine, pair_records, MiningConfig, Strategy, Variation};
use lmxpairs_core::similarity::{parse_precomputed, Precomputed};

use crate::inputs::{piece_of, posterior_map, read_tokens};
use crate::run::Run;
use crate::Ctx;

#[derive(Debug, Args, Serialize)]
pub struct MineArgs {
    /// Token file of variations with ids `piece__suffix`.
    #[arg(long, required = true, num_args = 1..)]
    pub variations: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    pub posteriors: Vec<PathBuf>,
    #[arg(long, required = true, num_args = 1..)]
    pub embeddings: Vec<PathBuf>,
    #[arg(long, default_value = "filtered", value_parser = ["random", "filtered"])]
    pub strategy: String,
    #[arg(long, default_value_t = 1)]
    pub min_gap: u8,
    #[arg(long, default_value_t = 0.25)]
    pub drop_fraction: f64,
    #[arg(long, default_value_t = 0.5)]
    pub keep_fraction: f64,
    /// Absolute confidence threshold replacing the quantile drop.
    #[arg(long)]
    pub min_confidence: Option<f64>,
    #[arg(long)]
    pub per_level_pair: bool,
    /// Vocabulary for the exported ids; built from the variations if absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

fn load_embeddings(run: &mut Run, paths: &[PathBuf]) -> anyhow::Result<Vec<Precomputed>> {
    paths
        .iter()
        .map(|p| parse_precomputed(&run.read_text(p)?).with_context(|| format!("reading {}", p.display())))
        .collect()
}

pub fn mine_pairs(ctx: &Ctx, args: MineArgs) -> anyhow::Result<()> {
    let mut run = Run::start(ctx, "mine-pairs")?;
    let mut seqs = Vec::new();
    for p in &args.variations {
        seqs.extend(read_tokens(&mut run, p)?);
    }
    let posteriors = posterior_map(&mut run, &args.posteriors)?;
    let embeddings = load_embeddings(&mut run, &args.embeddings)?;
    let variations: Vec<Variation> = seqs
        .into_iter()
        .map(|tokens| {
            let id = tokens.source_id.clone().unwrap_or_default();
            Ok(Variation {
                piece: piece_of(&id)?.to_string(),
                posterior: posteriors.get(&id).cloned(),
                embedding: embeddings.iter().find_map(|e| e.get(&id)).cloned(),
                id,
                tokens,
            })
        })
        .collect::<anyhow::Result<_>>()?;

    let strategy: Strategy = args.strategy.parse().map_err(anyhow::Error::msg)?;
    let config = MiningConfig {
        strategy,
        min_gap: args.min_gap,
        drop_fraction: args.drop_fraction,
        keep_fraction: args.keep_fraction,
        per_level_pair: args.per_level_pair,
        min_confidence: args.min_confidence,
    };
    let (pairs, report) = mine(&variations, &config)?;
    let vocab = match &args.vocab {
        Some(p) => Vocabulary::from_text(&run.read_text(p)?)?,
        None => Vocabulary::build(variations.iter().map(|v| &v.tokens))?,
    };
    let records = pair_records(&pairs, &variations, &vocab)?;
    log::info!("{} pairs from {} variations", records.len(), variations.len());
    run.write("pairs.jsonl", export_pairs(&records))?;
    run.write_json("mining_report.json", &report)?;
    run.write("vocab.txt", vocab.to_text())?;
    run.finish(ctx, &args)
}
