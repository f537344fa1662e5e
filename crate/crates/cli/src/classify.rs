//! Difficulty classifier fitting and inference.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use serde::Serialize;

use lmxpairs_core::classifier::{fit, fit_temperature, synthetic_labels, GnbModel, Level, VarianceFloor};
use lmxpairs_core::jsonl;

use crate::inputs::{read_jsonl, FeatureRecord, LabelRecord, PosteriorRecord};
use crate::run::Run;
use crate::Ctx;

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    pub features: PathBuf,
    /// JSONL of `{"id", "level"}`; without it, labels come from binned
    /// feature z-scores.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Variance floor as a fraction of the mean ML variance.
    #[arg(long, default_value_t = 1e-6, conflicts_with = "absolute_floor")]
    pub relative_floor: f64,
    #[arg(long)]
    pub absolute_floor: Option<f64>,
    /// Keep temperature 1 instead of fitting it.
    #[arg(long)]
    pub no_calibrate: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
}

pub fn fit_gnb(ctx: &Ctx, args: FitArgs) -> anyhow::Result<()> {
    let mut run = Run::start(ctx, "fit-gnb")?;
    let records: Vec<FeatureRecord> = read_jsonl(&mut run, &args.features)?;
    if records.is_empty() {
        bail!("{} holds no feature vectors", args.features.display());
    }
    let features: Vec<[f64; 12]> = records.iter().map(|r| r.values).collect();
    let labels: Vec<Level> = match &args.labels {
        Some(path) => {
            let given: BTreeMap<String, Level> = read_jsonl::<LabelRecord>(&mut run, path)?.into_iter().map(|r| (r.id, r.level)).collect();
            records
                .iter()
                .map(|r| given.get(&r.id).copied().with_context(|| format!("no label for {:?}", r.id)))
                .collect::<anyhow::Result<_>>()?
        }
        None => synthetic_labels(&features)?,
    };
    let floor = match args.absolute_floor {
        Some(v) => VarianceFloor::Absolute(v),
        None => VarianceFloor::Relative(args.relative_floor),
    };
    let mut model = fit(&features, &labels, floor)?;
    if !args.no_calibrate {
        model = fit_temperature(&model, &features, &labels)?;
    }
    run.write("gnb.json", model.to_json() + "\n")?;
    let used: Vec<LabelRecord> = records.iter().zip(&labels).map(|(r, &level)| LabelRecord { id: r.id.clone(), level }).collect();
    run.write("labels.jsonl", jsonl::to_string(&used))?;
    run.finish(ctx, &args)
}

pub fn classify(ctx: &Ctx, args: ClassifyArgs) -> anyhow::Result<()> {
    let mut run = Run::start(ctx, "classify")?;
    let model = GnbModel::from_json(&run.read_text(&args.model)?)?;
    let records: Vec<FeatureRecord> = read_jsonl(&mut run, &args.features)?;
    let out: Vec<PosteriorRecord> = records
        .iter()
        .map(|r| Ok(PosteriorRecord { id: r.id.clone(), posterior: model.posterior(&r.values).with_context(|| format!("classifying {}", r.id))? }))
        .collect::<anyhow::Result<_>>()?;
    run.write("posteriors.jsonl", jsonl::to_string(&out))?;
    run.finish(ctx, &args)
}
