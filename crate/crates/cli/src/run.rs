//! Output directory bookkeeping: hashed inputs and outputs, and the manifest.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::Ctx;

#[derive(Debug, Error)]
#[error("input not found: {}", .0.display())]
pub struct MissingInput(pub PathBuf);

/// Failure category printed in the `error` field.
pub fn error_kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if cause.is::<MissingInput>() {
            return "missing-input";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "invalid-input"
}

#[derive(Debug, Clone, Serialize)]
struct FileRecord {
    path: String,
    sha256: String,
    bytes: usize,
}

fn record(path: String, bytes: &[u8]) -> FileRecord {
    FileRecord { path, sha256: format!("{:x}", Sha256::digest(bytes)), bytes: bytes.len() }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    jobs: usize,
    config: &'a C,
    inputs: &'a [FileRecord],
    outputs: &'a [FileRecord],
}

pub struct Run {
    out: PathBuf,
    command: &'static str,
    seen: BTreeSet<PathBuf>,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
}

impl Run {
    pub fn start(ctx: &Ctx, command: &'static str) -> anyhow::Result<Run> {
        fs::create_dir_all(&ctx.out).with_context(|| format!("creating {}", ctx.out.display()))?;
        Ok(Run { out: ctx.out.clone(), command, seen: BTreeSet::new(), inputs: Vec::new(), outputs: Vec::new() })
    }

    pub fn read(&mut self, path: &Path) -> anyhow::Result<Vec<u8>> {
        if !path.exists() {
            return Err(MissingInput(path.to_path_buf()).into());
        }
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        if self.seen.insert(path.to_path_buf()) {
            self.inputs.push(record(path.display().to_string(), &bytes));
        }
        Ok(bytes)
    }

    pub fn read_text(&mut self, path: &Path) -> anyhow::Result<String> {
        let bytes = self.read(path)?;
        String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
    }

    /// Writes `name` (relative, `/`-separated) under the output directory.
    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
        let path = self.out.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(&path, bytes.as_ref()).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(record(name.to_string(), bytes.as_ref()));
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn finish(self, ctx: &Ctx, config: &impl Serialize) -> anyhow::Result<()> {
        let m = Manifest {
            tool: "lmxpairs",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            seed: ctx.seed,
            jobs: ctx.jobs,
            config,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        let path = self.out.join("manifest.json");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

/// Score and token files under `dir`, sorted by name.
pub fn list_inputs(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if path.is_file() && matches!(ext.as_deref(), Some("musicxml" | "xml" | "mxl" | "lmx")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}
