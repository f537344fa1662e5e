//! Loading scores, token files and JSONL records.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use lmxpairs_core::classifier::{DifficultyPosterior, Level};
use lmxpairs_core::jsonl;
use lmxpairs_core::lmx::{delinearize, read_token_lines, TokenSequence};
use lmxpairs_core::score::{parse_musicxml, unzip_mxl, Score};

use crate::run::{list_inputs, MissingInput, Run};

/// A score with the id it is known by downstream, and its tokens when it
/// came from a token file.
pub struct Item {
    pub id: String,
    pub score: Score,
    pub tokens: Option<TokenSequence>,
}

fn is_token_file(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("lmx"))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Expands directories and loads every score. Token files contribute one
/// score per line, decoded strictly.
pub fn load_scores(run: &mut Run, paths: &[PathBuf]) -> anyhow::Result<Vec<Item>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            files.extend(list_inputs(p)?);
        } else if p.exists() {
            files.push(p.clone());
        } else {
            return Err(MissingInput(p.clone()).into());
        }
    }
    if files.is_empty() {
        bail!("no score or token files among the inputs");
    }
    let mut sources = Vec::new();
    for f in &files {
        if is_token_file(f) {
            for seq in read_tokens(run, f)? {
                sources.push(Source::Tokens(seq));
            }
        } else {
            sources.push(Source::Xml { id: stem(f), path: f.clone(), bytes: run.read(f)? });
        }
    }
    let items: Vec<Item> = sources.into_par_iter().map(Source::load).collect::<anyhow::Result<_>>()?;
    let mut ids = BTreeSet::new();
    for it in &items {
        if !ids.insert(it.id.as_str()) {
            bail!("duplicate score id {:?}", it.id);
        }
    }
    Ok(items)
}

enum Source {
    Xml { id: String, path: PathBuf, bytes: Vec<u8> },
    Tokens(TokenSequence),
}

impl Source {
    fn load(self) -> anyhow::Result<Item> {
        match self {
            Source::Xml { id, path, bytes } => {
                let is_mxl = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("mxl"));
                let xml = if is_mxl { unzip_mxl(&bytes)? } else { bytes };
                let mut score = parse_musicxml(&xml).with_context(|| format!("parsing {}", path.display()))?;
                score.metadata.source_id = Some(id.clone());
                Ok(Item { id, score, tokens: None })
            }
            Source::Tokens(seq) => {
                let id = seq.source_id.clone().expect("token files carry ids");
                let mut score = delinearize(&seq).with_context(|| format!("decoding {id}"))?;
                score.metadata.source_id = Some(id.clone());
                Ok(Item { id, score, tokens: Some(seq) })
            }
        }
    }
}

/// Token lines; lines without an id get `<file stem>:<line>`.
pub fn read_tokens(run: &mut Run, path: &Path) -> anyhow::Result<Vec<TokenSequence>> {
    let text = run.read_text(path)?;
    let name = stem(path);
    Ok(read_token_lines(&text)
        .into_iter()
        .enumerate()
        .filter(|(_, s)| !s.is_empty())
        .map(|(i, s)| match s.source_id {
            Some(_) => s,
            None => s.with_source(format!("{name}:{}", i + 1)),
        })
        .collect())
}

pub fn read_jsonl<T: DeserializeOwned>(run: &mut Run, path: &Path) -> anyhow::Result<Vec<T>> {
    let text = run.read_text(path)?;
    jsonl::parse(&text).with_context(|| format!("reading {}", path.display()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub id: String,
    pub values: [f64; 12],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub id: String,
    pub weights: [f64; 12],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelRecord {
    pub id: String,
    pub level: Level,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorRecord {
    pub id: String,
    #[serde(flatten)]
    pub posterior: DifficultyPosterior,
}

/// Posteriors from several files, keyed by id; later files may not redefine ids.
pub fn posterior_map(run: &mut Run, paths: &[PathBuf]) -> anyhow::Result<BTreeMap<String, DifficultyPosterior>> {
    let mut out = BTreeMap::new();
    for p in paths {
        for r in read_jsonl::<PosteriorRecord>(run, p)? {
            if out.insert(r.id.clone(), r.posterior).is_some() {
                bail!("posterior for {:?} given twice", r.id);
            }
        }
    }
    Ok(out)
}

/// Piece id of a variation id `piece__suffix`.
pub fn piece_of(variation: &str) -> anyhow::Result<&str> {
    variation.split_once("__").map(|(p, _)| p).with_context(|| format!("variation id {variation:?} lacks a `piece__` prefix"))
}
