//! Outcome records and result tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{ArgGroup, Args};
use serde::Serialize;

use lmxpairs_core::classifier::DifficultyPosterior;
use lmxpairs_core::eval::{aggregate, parse_records, EvalError, Format, GroupField, OutcomeRecord, Report};
use lmxpairs_core::jsonl;
use lmxpairs_core::pairs::{import_pairs, MiningReport};
use lmxpairs_core::similarity::{cosine_distance, parse_precomputed, Precomputed, StyleEmbedding};

use crate::inputs::{load_scores, piece_of, posterior_map, read_tokens};
use crate::run::Run;
use crate::Ctx;

#[derive(Debug, Args, Serialize)]
#[command(group(ArgGroup::new("source").required(true).args(["run", "generated", "records"])))]
pub struct EvalArgs {
    /// Mining output directories; the easy side of each pair is scored
    /// against its original piece.
    #[arg(long, num_args = 1..)]
    pub run: Vec<PathBuf>,
    /// Token file of variations with ids `piece__suffix`.
    #[arg(long, requires_all = ["strategy", "gap"])]
    pub generated: Option<PathBuf>,
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub gap: Option<u8>,
    /// Precomputed outcome records.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Posteriors for originals and variations.
    #[arg(long, num_args = 1..)]
    pub posteriors: Vec<PathBuf>,
    /// Embeddings for originals and variations.
    #[arg(long, num_args = 1..)]
    pub embeddings: Vec<PathBuf>,
    /// Original scores, read for their genre.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "strategy,gap")]
    pub group_by: Vec<String>,
    /// Extra copy of the table in this format: csv or markdown.
    #[arg(long, default_value = "markdown")]
    pub format: String,
}

struct Lookup {
    posteriors: BTreeMap<String, DifficultyPosterior>,
    embeddings: Vec<Precomputed>,
    genres: BTreeMap<String, String>,
}

impl Lookup {
    fn posterior(&self, id: &str) -> anyhow::Result<&DifficultyPosterior> {
        self.posteriors.get(id).with_context(|| format!("no posterior for {id:?}"))
    }

    fn embedding(&self, id: &str) -> anyhow::Result<&StyleEmbedding> {
        self.embeddings.iter().find_map(|e| e.get(id)).with_context(|| format!("no embedding for {id:?}"))
    }

    fn record(&self, piece: &str, variation: &str, strategy: &str, gap: u8) -> anyhow::Result<OutcomeRecord> {
        let original = self.posterior(piece)?.label;
        let predicted = self.posterior(variation)?.label;
        let distance = cosine_distance(self.embedding(piece)?, self.embedding(variation)?)?.clamp(0.0, 2.0);
        let genre = self.genres.get(piece).map_or("unknown", String::as_str);
        Ok(OutcomeRecord::new(piece, variation, original, predicted, distance, genre, strategy, gap))
    }
}

fn load_lookup(run: &mut Run, args: &EvalArgs) -> anyhow::Result<Lookup> {
    let posteriors = posterior_map(run, &args.posteriors)?;
    let embeddings = args
        .embeddings
        .iter()
        .map(|p| parse_precomputed(&run.read_text(p)?).with_context(|| format!("reading {}", p.display())))
        .collect::<anyhow::Result<_>>()?;
    let mut genres = BTreeMap::new();
    if let Some(dir) = &args.scores {
        for it in load_scores(run, std::slice::from_ref(dir))? {
            if let Some(g) = it.score.metadata.genre {
                genres.insert(it.id, g);
            }
        }
    }
    Ok(Lookup { posteriors, embeddings, genres })
}

/// Records for every distinct easy variation of a mining run.
fn run_records(run: &mut Run, lookup: &Lookup, dir: &Path) -> anyhow::Result<Vec<OutcomeRecord>> {
    let report: MiningReport = serde_json::from_str(&run.read_text(&dir.join("mining_report.json"))?)
        .with_context(|| format!("reading {}", dir.join("mining_report.json").display()))?;
    let strategy = serde_json::to_value(report.config.strategy)?.as_str().unwrap_or_default().to_string();
    let pairs = import_pairs(&run.read_text(&dir.join("pairs.jsonl"))?)?;
    let mut easy: Vec<(&str, &str)> = pairs.iter().map(|p| (p.piece.as_str(), p.easy_var.as_str())).collect();
    easy.sort_unstable();
    easy.dedup();
    easy.into_iter().map(|(piece, var)| lookup.record(piece, var, &strategy, report.config.min_gap)).collect()
}

pub fn evaluate(ctx: &Ctx, args: EvalArgs) -> anyhow::Result<()> {
    let mut run = Run::start(ctx, "evaluate")?;
    let fields: Vec<GroupField> = args.group_by.iter().map(|f| f.parse()).collect::<Result<_, EvalError>>()?;
    let format: Format = args.format.parse()?;
    let records = if let Some(path) = &args.records {
        parse_records(&run.read_text(path)?)?
    } else {
        if args.posteriors.is_empty() || args.embeddings.is_empty() {
            bail!("--posteriors and --embeddings are required unless --records is given");
        }
        let lookup = load_lookup(&mut run, &args)?;
        let mut out = Vec::new();
        for dir in &args.run {
            out.extend(run_records(&mut run, &lookup, dir)?);
        }
        if let Some(path) = &args.generated {
            let strategy = args.strategy.as_deref().unwrap_or_default();
            let gap = args.gap.unwrap_or_default();
            for seq in read_tokens(&mut run, path)? {
                let id = seq.source_id.unwrap_or_default();
                out.push(lookup.record(piece_of(&id)?, &id, strategy, gap)?);
            }
        }
        out
    };
    let report = match aggregate(&records, &fields) {
        Ok(r) => r,
        Err(EvalError::NoRecords) => Report::empty(&fields),
        Err(e) => return Err(e.into()),
    };
    run.write("outcomes.jsonl", jsonl::to_string(&records))?;
    run.write("report.csv", report.render(Format::Csv))?;
    run.write("report.md", report.render(Format::Markdown))?;
    print!("{}", report.render(format));
    run.finish(ctx, &args)
}
