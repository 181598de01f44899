//! Per-stage run manifests under `<out>/manifests/`.
//!
//! Each completed stage run appends `<stage>[.<variant>]-NNNN.json`; earlier
//! manifests are never rewritten.

use crate::error::CliError;
use delibench::io::{file_sha256, write_atomic};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const MANIFEST_DIR: &str = "manifests";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

impl FileHash {
    pub fn of(path: &Path, label: String) -> Result<Self, CliError> {
        let sha256 = file_sha256(path).map_err(|e| CliError::io(path.display(), e))?;
        Ok(Self { path: label, sha256 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub engine: String,
    pub generator: String,
    pub resample_reading: String,
}

impl Default for Versions {
    fn default() -> Self {
        Self {
            engine: env!("CARGO_PKG_VERSION").to_string(),
            generator: delibench::rng::GENERATOR_NAME.to_string(),
            resample_reading: delibench::sampler::RESAMPLE_READING.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    /// Distinguishes parallel runs of one stage, e.g. the judge used.
    pub variant: Option<String>,
    pub sequence: u32,
    pub config_sha256: String,
    pub seed: u64,
    pub versions: Versions,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub corpus: Vec<FileHash>,
    /// Upstream artifacts consumed, relative to the output directory.
    pub inputs: Vec<FileHash>,
    /// Files produced, relative to the output directory.
    pub outputs: Vec<FileHash>,
}

pub fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

fn stem(stage: &str, variant: Option<&str>) -> String {
    match variant {
        Some(v) => format!("{stage}.{v}"),
        None => stage.to_string(),
    }
}

pub fn manifest_dir(out: &Path) -> PathBuf {
    out.join(MANIFEST_DIR)
}

/// All manifests in the output directory, in file-name order.
pub fn all_manifests(out: &Path) -> Result<Vec<(PathBuf, StageManifest)>, CliError> {
    let dir = manifest_dir(out);
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| CliError::io(dir.display(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(p.display(), e))?;
            let m: StageManifest = serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("manifest {}: {e}", p.display())))?;
            Ok((p, m))
        })
        .collect()
}

pub fn latest(out: &Path, stage: &str, variant: Option<&str>) -> Result<Option<StageManifest>, CliError> {
    Ok(all_manifests(out)?
        .into_iter()
        .map(|(_, m)| m)
        .filter(|m| m.stage == stage && m.variant.as_deref() == variant)
        .max_by_key(|m| m.sequence))
}

/// Checks that every output recorded in `m` still has its recorded hash.
pub fn verify_outputs(out: &Path, m: &StageManifest) -> Result<(), CliError> {
    for f in &m.outputs {
        let full = out.join(&f.path);
        let actual = file_sha256(&full).map_err(|_| {
            CliError::Stale(format!("`{}` output {} is missing", m.stage, f.path))
        })?;
        if actual != f.sha256 {
            return Err(CliError::Stale(format!(
                "`{}` output {} changed since its manifest was written",
                m.stage, f.path
            )));
        }
    }
    Ok(())
}

/// The latest manifest of an upstream stage, checked against the files on disk
/// and against the current corpus.
pub fn upstream(
    out: &Path,
    stage: &'static str,
    variant: Option<&str>,
    corpus: &[FileHash],
) -> Result<StageManifest, CliError> {
    let m = latest(out, stage, variant)?.ok_or_else(|| CliError::MissingUpstream {
        stage,
        missing: format!("no `{}` manifest in {}", stem(stage, variant), manifest_dir(out).display()),
    })?;
    verify_outputs(out, &m)?;
    if m.corpus != corpus {
        return Err(CliError::Stale(format!(
            "corpus changed since `{stage}` ran; rerun `{stage}`"
        )));
    }
    Ok(m)
}

/// The upstream output with relative path `rel`, as a consumed input.
pub fn input(m: &StageManifest, rel: &str) -> Result<FileHash, CliError> {
    m.outputs
        .iter()
        .find(|f| f.path == rel)
        .cloned()
        .ok_or_else(|| CliError::Stale(format!("`{}` manifest does not list {rel}", m.stage)))
}

/// Whether a run with this config and these inputs already completed and its
/// outputs are intact.
pub fn up_to_date(
    out: &Path,
    stage: &str,
    variant: Option<&str>,
    config_sha256: &str,
    corpus: &[FileHash],
    inputs: &[FileHash],
) -> Result<bool, CliError> {
    let Some(m) = latest(out, stage, variant)? else {
        return Ok(false);
    };
    Ok(m.config_sha256 == config_sha256
        && m.corpus == corpus
        && m.inputs == inputs
        && verify_outputs(out, &m).is_ok())
}

/// Writes the next manifest for a stage and returns its path.
pub fn append(out: &Path, mut m: StageManifest) -> Result<PathBuf, CliError> {
    let prev = latest(out, &m.stage, m.variant.as_deref())?;
    m.sequence = prev.map_or(1, |p| p.sequence + 1);
    let path = manifest_dir(out).join(format!("{}-{:04}.json", stem(&m.stage, m.variant.as_deref()), m.sequence));
    let mut bytes = serde_json::to_vec_pretty(&m).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(&path, &bytes).map_err(|e| CliError::io(path.display(), e))?;
    Ok(path)
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Files under `out` that no manifest lists as an output.
pub fn orphans(out: &Path) -> Result<Vec<String>, CliError> {
    let listed: BTreeSet<String> = all_manifests(out)?
        .into_iter()
        .flat_map(|(_, m)| m.outputs.into_iter().map(|f| f.path))
        .collect();
    let mut files = Vec::new();
    if out.is_dir() {
        walk(out, &mut files).map_err(|e| CliError::io(out.display(), e))?;
    }
    let manifests = manifest_dir(out);
    let mut orphans: Vec<String> = files
        .into_iter()
        .filter(|p| !p.starts_with(&manifests))
        .filter_map(|p| p.strip_prefix(out).ok().map(rel_string))
        .filter(|rel| !listed.contains(rel))
        .collect();
    orphans.sort();
    Ok(orphans)
}

/// Forward-slash relative path, stable across platforms.
pub fn rel_string(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}
