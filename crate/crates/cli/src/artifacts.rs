//! Artifact documents exchanged between subcommands, and atomic file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use webfsm_core::datagen::StatsManifest;
use webfsm_core::replay::{DefectSet, GroundedTrajectory, ReplayVerdict};
use webfsm_core::search::{GoalPredicate, NegativeTrajectory, SearchConfig, SemanticTrajectory};
use webfsm_core::FORMAT_VERSION;

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub expanded: usize,
    pub truncated: bool,
    pub goal_hits: usize,
    pub shortest_length: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoriesDoc {
    pub format_version: u32,
    pub kind: String,
    pub spec_digest: String,
    pub goal: GoalPredicate,
    pub config: SearchConfig,
    pub summary: GraphSummary,
    pub trajectories: Vec<SemanticTrajectory>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NegativesDoc {
    pub format_version: u32,
    pub kind: String,
    pub spec_digest: String,
    pub negatives: Vec<NegativeTrajectory>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundedDoc {
    pub format_version: u32,
    pub kind: String,
    pub spec_digest: String,
    pub seed: u64,
    pub trajectories: Vec<GroundedTrajectory>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictEntry {
    pub index: usize,
    pub verdict: ReplayVerdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictsDoc {
    pub format_version: u32,
    pub kind: String,
    pub spec_digest: String,
    pub seed: u64,
    pub defects: DefectSet,
    pub accepted: usize,
    pub rejected: usize,
    pub verdicts: Vec<VerdictEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectedEntry {
    pub trajectory: GroundedTrajectory,
    pub verdict: ReplayVerdict,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectedDoc {
    pub format_version: u32,
    pub kind: String,
    pub spec_digest: String,
    pub seed: u64,
    pub rejected: Vec<RejectedEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestDoc {
    pub spec_digest: String,
    #[serde(flatten)]
    pub manifest: StatsManifest,
}

pub const TRAJECTORIES: &str = "trajectories";
pub const NEGATIVES: &str = "negatives";
pub const GROUNDED: &str = "grounded";
pub const VERDICTS: &str = "verdicts";
pub const REJECTED: &str = "rejected";

pub fn version() -> u32 {
    FORMAT_VERSION
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Reads a JSON artifact of the given `kind`.
pub fn read_doc<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T, CliError> {
    let bytes = read_bytes(path)?;
    let raw: serde_json::Value = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Domain(format!("{}: not a JSON document: {e}", path.display())))?;
    let found = raw.get("kind").and_then(|k| k.as_str()).unwrap_or("");
    if found != kind {
        return Err(CliError::Domain(format!(
            "{}: expected a `{kind}` artifact, found `{found}`",
            path.display()
        )));
    }
    serde_json::from_value(raw).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

/// Refuses artifacts derived from a different fsm.json.
pub fn check_digest(path: &Path, found: &str, expected: &str) -> Result<(), CliError> {
    if found == expected {
        Ok(())
    } else {
        Err(CliError::Domain(format!(
            "{} was produced from an fsm.json with digest {found}, but --spec has digest {expected}",
            path.display()
        )))
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    ensure_dir(dir)?;
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Replaces directory `dir` with exactly `files`: the new tree is built next
/// to it and swapped in, so stale files from earlier runs never survive.
pub fn replace_dir(dir: &Path, files: &[(String, Vec<u8>)]) -> Result<(), CliError> {
    let parent = dir.parent().unwrap_or(Path::new("."));
    ensure_dir(parent)?;
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
    let staging = tempfile::Builder::new()
        .prefix(".staging")
        .tempdir_in(parent)
        .map_err(io)?;
    for (name, bytes) in files {
        fs::write(staging.path().join(name), bytes).map_err(io)?;
    }
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(io)?;
    }
    let staged: PathBuf = staging.keep();
    fs::rename(&staged, dir).map_err(io)?;
    Ok(())
}
