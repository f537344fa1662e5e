//! Training sequences, language-model training and sampling.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use lmxpairs_core::analysis::{melody_skyline, pitch_class_profile};
use lmxpairs_core::jsonl;
use lmxpairs_core::lmx::{linearize, write_token_lines, TokenSequence, Vocabulary};
use lmxpairs_core::pairs::import_pairs;
use lmxpairs_core::sequences::{build_adaptation, build_conditioned, AdaptationLayout, Sample, DEFAULT_MAX_LEN};
use tinylm::sample::check_generation;
use tinylm::train::log_csv;
use tinylm::{checkpoint, generate, Model, ModelConfig, OptimConfig, SamplingConfig, TrainState};

use crate::inputs::{load_scores, read_jsonl};
use crate::run::Run;
use crate::Ctx;

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `<bos> skyline <harmony> body <eos>` from whole scores.
    Conditioned,
    /// `<level:h> hard [SEP] <level:e> easy <eos>` from mined pairs.
    Adaptation,
}

#[derive(Debug, Args, Serialize)]
pub struct BuildArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Scores for conditioned sequences.
    pub inputs: Vec<PathBuf>,
    /// Pair dataset for adaptation sequences.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Required for adaptation; built from the inputs otherwise.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
    /// Omit the two level tokens from adaptation sequences.
    #[arg(long)]
    pub no_level_tokens: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub sequences: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub steps: u64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 6e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    /// Defaults to the longest sequence.
    #[arg(long)]
    pub max_context: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    /// Continue from a checkpoint; architecture flags are then ignored.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Sequences whose leading context positions become prompts.
    #[arg(long)]
    pub prompts: PathBuf,
    #[arg(long, default_value_t = 128)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 32)]
    pub top_k: usize,
    /// Defaults to the model context.
    #[arg(long)]
    pub max_len: Option<usize>,
}

fn read_vocab(run: &mut Run, path: &std::path::Path) -> anyhow::Result<Vocabulary> {
    Vocabulary::from_text(&run.read_text(path)?).with_context(|| format!("reading {}", path.display()))
}

pub fn build_seqs(ctx: &Ctx, args: BuildArgs) -> anyhow::Result<()> {
    let mut run = Run::start(ctx, "build-seqs")?;
    let (samples, vocab): (Vec<Sample>, Vocabulary) = match args.mode {
        Mode::Conditioned => {
            if args.inputs.is_empty() {
                bail!("conditioned mode needs score inputs");
            }
            let items = load_scores(&mut run, &args.inputs)?;
            let parts: Vec<_> = items
                .par_iter()
                .map(|it| {
                    let body = match &it.tokens {
                        Some(t) => t.clone(),
                        None => linearize(&it.score)?,
                    };
                    Ok((melody_skyline(&it.score)?, pitch_class_profile(&it.score)?, body))
                })
                .collect::<anyhow::Result<_>>()
                .context("analysing inputs")?;
            let vocab = match &args.vocab {
                Some(p) => read_vocab(&mut run, p)?,
                None => {
                    let skylines: Vec<TokenSequence> = parts.iter().map(|(s, _, _)| s.tokens()).collect();
                    Vocabulary::build(parts.iter().map(|(_, _, b)| b).chain(&skylines))?
                }
            };
            let samples = items
                .iter()
                .zip(&parts)
                .map(|(it, (sky, profile, body))| {
                    Ok(build_conditioned(&it.id, sky, profile, body, &vocab, args.max_len).with_context(|| format!("sequence for {}", it.id))?.into())
                })
                .collect::<anyhow::Result<_>>()?;
            (samples, vocab)
        }
        Mode::Adaptation => {
            let (Some(pairs), Some(vocab)) = (&args.pairs, &args.vocab) else {
                bail!("adaptation mode needs --pairs and --vocab");
            };
            let vocab = read_vocab(&mut run, vocab)?;
            let records = import_pairs(&run.read_text(pairs)?)?;
            let layout = AdaptationLayout { max_len: args.max_len, level_tokens: !args.no_level_tokens };
            let samples = records
                .iter()
                .map(|r| {
                    let id = format!("{}>{}", r.hard_var, r.easy_var);
                    let s = build_adaptation(&id, (&r.hard, r.hard_level), (&r.easy, r.easy_level), &vocab, layout)
                        .with_context(|| format!("sequence for {id}"))?;
                    Ok(s.into())
                })
                .collect::<anyhow::Result<_>>()?;
            (samples, vocab)
        }
    };
    log::info!("{} sequences over {} token types", samples.len(), vocab.len());
    run.write("sequences.jsonl", jsonl::to_string(&samples))?;
    run.write("vocab.txt", vocab.to_text())?;
    run.finish(ctx, &args)
}

pub fn train(ctx: &Ctx, args: TrainArgs) -> anyhow::Result<()> {
    let mut run = Run::start(ctx, "train")?;
    let vocab = read_vocab(&mut run, &args.vocab)?;
    let samples: Vec<Sample> = read_jsonl(&mut run, &args.sequences)?;
    if samples.is_empty() {
        bail!("{} holds no sequences", args.sequences.display());
    }
    let mut state = match &args.resume {
        Some(p) => checkpoint::from_json(&run.read_text(p)?)?,
        None => {
            let longest = samples.iter().map(Sample::len).max().unwrap_or(0);
            let config = ModelConfig {
                layers: args.layers,
                width: args.width,
                heads: args.heads,
                dropout: args.dropout,
                seed: ctx.seed,
                ..ModelConfig::new(vocab.len(), args.max_context.unwrap_or(longest))
            };
            TrainState::new(Model::new(config)?, OptimConfig { lr: args.lr, ..OptimConfig::default() })
        }
    };
    if state.model.config.vocab != vocab.len() {
        bail!("model has {} token types but the vocabulary has {}", state.model.config.vocab, vocab.len());
    }
    log::info!("{} parameters, {} sequences", state.model.num_params(), samples.len());
    let log = state.train(&samples, args.steps, args.batch_size, |r| {
        if r.step % 10 == 0 {
            log::info!("step {} loss {:.4}", r.step, r.loss);
        }
    })?;
    run.write("model.json", checkpoint::to_json(&state))?;
    run.write("train_log.csv", log_csv(&log))?;
    run.finish(ctx, &args)
}

#[derive(Serialize)]
struct GenerationRecord {
    prompt: String,
    index: usize,
    id: String,
    ended: bool,
    valid: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    problem: Option<String>,
    ids: Vec<u32>,
}

#[derive(Serialize)]
struct SampleStats {
    prompts: usize,
    generated: usize,
    ended: usize,
    valid: usize,
    validity: f64,
}

pub fn sample(ctx: &Ctx, args: SampleArgs) -> anyhow::Result<()> {
    let mut run = Run::start(ctx, "sample")?;
    let state = checkpoint::from_json(&run.read_text(&args.model)?)?;
    let model = state.model;
    let vocab = read_vocab(&mut run, &args.vocab)?;
    if model.config.vocab != vocab.len() {
        bail!("model has {} token types but the vocabulary has {}", model.config.vocab, vocab.len());
    }
    let prompts: Vec<Sample> = read_jsonl(&mut run, &args.prompts)?;
    let max_len = args.max_len.unwrap_or(model.config.max_context);
    let mut records = Vec::new();
    let mut valid = Vec::new();
    for (p, prompt) in prompts.iter().enumerate() {
        let context = prompt.mask.iter().take_while(|&&m| m == 1).count();
        if context == 0 {
            bail!("prompt {:?} has no context positions", prompt.id);
        }
        let harmony = prompt.harmony.as_ref().filter(|h| h.position < context);
        let cfg = SamplingConfig {
            temperature: args.temperature,
            top_k: args.top_k,
            ..SamplingConfig::new(args.n, ctx.seed.wrapping_add(p as u64), max_len)
        };
        let gens = generate(&model, &prompt.ids[..context], harmony, &cfg).with_context(|| format!("sampling {}", prompt.id))?;
        for g in gens {
            let id = format!("{}__g{:03}", prompt.id, g.index);
            let check = check_generation(&g, &vocab);
            if check.is_ok() {
                valid.push(vocab.decode(&g.ids)?.with_source(id.clone()));
            }
            records.push(GenerationRecord {
                prompt: prompt.id.clone(),
                index: g.index,
                id,
                ended: g.ended,
                valid: check.is_ok(),
                problem: check.err(),
                ids: g.ids,
            });
        }
    }
    let generated = records.len();
    let stats = SampleStats {
        prompts: prompts.len(),
        generated,
        ended: records.iter().filter(|r| r.ended).count(),
        valid: valid.len(),
        validity: if generated == 0 { 0.0 } else { valid.len() as f64 / generated as f64 },
    };
    log::info!("{} of {} generations valid", stats.valid, stats.generated);
    run.write("generations.jsonl", jsonl::to_string(&records))?;
    run.write("variations.lmx", write_token_lines(&valid))?;
    run.write_json("stats.json", &stats)?;
    run.finish(ctx, &args)
}
