//! Dataset synthesis from accepted trajectories.
//!
//! Query instances come from fixed per-mode templates. The dataset is a
//! line-delimited stream with one record per grounded step and one per query;
//! the statistics manifest summarizes it and can be rebuilt from the stream
//! alone.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value as Json};
use thiserror::Error;

use crate::engine::{ParamBinding, StateKey};
use crate::replay::{BBox, GroundedTrajectory};
use crate::search::GoalPredicate;
use crate::spec::{DataCatalog, EffectOp, FsmSpec, GuiOp};
use crate::value::{Literal, SigPath, SignatureValue};
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    BfsDriven,
    VisualGrounded,
    ScreenshotQa,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::BfsDriven => "bfs_driven",
            Family::VisualGrounded => "visual_grounded",
            Family::ScreenshotQa => "screenshot_qa",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Search,
    Scroll,
    Slider,
    Sort,
    Checkbox,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Search,
        Mode::Scroll,
        Mode::Slider,
        Mode::Sort,
        Mode::Checkbox,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Search => "search",
            Mode::Scroll => "scroll",
            Mode::Slider => "slider",
            Mode::Sort => "sort",
            Mode::Checkbox => "checkbox",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryInstance {
    pub id: String,
    pub family: Family,
    pub mode: Mode,
    pub text: String,
    pub template_params: Map<String, Json>,
    pub trajectory_ref: String,
    pub goal: GoalPredicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub id: String,
    pub website: String,
    pub grounded: GroundedTrajectory,
}

impl TrajectoryRecord {
    pub fn action_count(&self) -> usize {
        self.grounded.semantic.actions.len()
    }

    pub fn step_count(&self) -> usize {
        self.grounded.steps.len()
    }

    pub fn final_key(&self) -> StateKey {
        self.grounded.semantic.final_key()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatagenError {
    #[error("the {} family needs item images and is not supported", .0.as_str())]
    Unsupported(Family),
    #[error("query `{query}` references unknown trajectory `{trajectory}`")]
    DanglingReference { query: String, trajectory: String },
    #[error("duplicate trajectory id `{0}`")]
    DuplicateTrajectory(String),
}

/// Only the BFS-driven family can be generated.
pub fn check_family(family: Family) -> Result<(), DatagenError> {
    match family {
        Family::BfsDriven => Ok(()),
        other => Err(DatagenError::Unsupported(other)),
    }
}

fn ordinal(n: usize) -> String {
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

fn literal_json(l: &Literal) -> Json {
    l.to_json()
}

fn is_sort_action(id: &str, name: &str, params: &BTreeMap<String, Json>) -> bool {
    name.eq_ignore_ascii_case("sort")
        || params.get("widget").and_then(Json::as_str) == Some("sort")
        || id.to_ascii_lowercase().contains("sort")
}

struct Trigger {
    mode: Mode,
    params: Map<String, Json>,
}

fn selected_option(record: &TrajectoryRecord, action_index: usize) -> Option<String> {
    let proc = &record.grounded.procedures.get(action_index)?.gui_procedure;
    proc.iter().find_map(|s| {
        let ui = s.ui_elements.as_ref()?;
        let sel = s.selector.as_deref()?;
        ui.options
            .iter()
            .find(|o| o.selector == sel)
            .map(|o| o.value.clone())
    })
}

fn find_triggers(record: &TrajectoryRecord, spec: &FsmSpec, catalog: &DataCatalog) -> Vec<Trigger> {
    let sem = &record.grounded.semantic;
    let mut out = Vec::new();
    for (i, ta) in sem.actions.iter().enumerate() {
        let Some(action) = spec.action(&ta.action) else {
            continue;
        };
        let binding: &ParamBinding = &ta.binding;
        let slots = action.slots();
        let param_value = |param: &str| {
            slots
                .params
                .iter()
                .find(|p| p.param == param)
                .and_then(|p| binding.get(&p.placeholder))
        };

        if action.name == "search" {
            if let Some(q) = param_value("query") {
                let mut m = Map::new();
                m.insert("query".into(), literal_json(q));
                out.push(Trigger {
                    mode: Mode::Search,
                    params: m,
                });
            }
        }
        if is_sort_action(&ta.action, &action.name, &action.params) {
            if let Some(key) = selected_option(record, i) {
                let mut m = Map::new();
                m.insert("sort_key".into(), Json::String(key));
                out.push(Trigger {
                    mode: Mode::Sort,
                    params: m,
                });
            }
        }
        for slot in &slots.params {
            let Some(v) = binding.get(&slot.placeholder) else {
                continue;
            };
            if let Literal::Number(_) = v {
                let mut m = Map::new();
                m.insert("param".into(), Json::String(slot.param.clone()));
                m.insert("threshold".into(), literal_json(v));
                out.push(Trigger {
                    mode: Mode::Slider,
                    params: m,
                });
            }
            if let Some((collection, pos, item)) = catalog.find_item(v) {
                let mut m = Map::new();
                m.insert("n".into(), json!(pos));
                m.insert("collection".into(), Json::String(collection.to_string()));
                m.insert("item_id".into(), literal_json(v));
                if let Some(name) = item.get("name") {
                    m.insert("item_name".into(), literal_json(name));
                }
                out.push(Trigger {
                    mode: Mode::Scroll,
                    params: m,
                });
            }
        }
        for eff in &action.effects {
            let checkbox = match eff.op {
                EffectOp::Toggle | EffectOp::SetInsert | EffectOp::SetDelete => true,
                EffectOp::Assign => matches!(
                    &eff.value,
                    Some(SignatureValue::Literal(Literal::Bool(_)) | SignatureValue::Record(_))
                ),
                _ => false,
            };
            if !checkbox {
                continue;
            }
            let after = SigPath::parse(&eff.path)
                .ok()
                .and_then(|p| {
                    sem.states
                        .get(i + 1)
                        .and_then(|s| s.signature.get(&p).cloned())
                })
                .or_else(|| eff.value.clone());
            let mut m = Map::new();
            m.insert("field".into(), Json::String(eff.path.clone()));
            if let Some(v) = after {
                m.insert("value".into(), v.to_json());
            }
            out.push(Trigger {
                mode: Mode::Checkbox,
                params: m,
            });
        }
    }
    out
}

fn render(mode: Mode, p: &Map<String, Json>, website: &str) -> String {
    let s = |k: &str| match p.get(k) {
        Some(Json::String(v)) => v.clone(),
        Some(other) => other.to_string(),
        None => String::new(),
    };
    match mode {
        Mode::Search => format!(
            "On {website}, search for \"{}\" and complete the task.",
            s("query")
        ),
        Mode::Sort => format!(
            "On {website}, sort the list by {} and complete the task.",
            s("sort_key")
        ),
        Mode::Checkbox => format!(
            "On {website}, set {} to {} and complete the task.",
            s("field"),
            s("value")
        ),
        Mode::Slider => format!(
            "On {website}, set {} to {} and complete the task.",
            s("param"),
            s("threshold")
        ),
        Mode::Scroll => {
            let n = p.get("n").and_then(Json::as_u64).unwrap_or(0) as usize;
            format!(
                "On {website}, scroll to the {} item ({}) and open it.",
                ordinal(n),
                s("item_name")
            )
        }
    }
}

/// One query per requested mode whose trigger occurs in the trajectory; the
/// first occurrence wins. Modes without a trigger are skipped.
pub fn instantiate_queries(
    record: &TrajectoryRecord,
    spec: &FsmSpec,
    catalog: &DataCatalog,
    modes: &BTreeSet<Mode>,
) -> Vec<QueryInstance> {
    let triggers = find_triggers(record, spec, catalog);
    let mut out = Vec::new();
    for mode in Mode::ALL.into_iter().filter(|m| modes.contains(m)) {
        if let Some(t) = triggers.iter().find(|t| t.mode == mode) {
            out.push(QueryInstance {
                id: format!("{}-{}", record.id, mode.as_str()),
                family: Family::BfsDriven,
                mode,
                text: render(mode, &t.params, &record.website),
                template_params: t.params.clone(),
                trajectory_ref: record.id.clone(),
                goal: record.grounded.semantic.goal.clone(),
            });
        }
    }
    out
}

/// Keeps one trajectory per goal: the one with the smallest final key.
pub fn dedup_per_task(records: Vec<TrajectoryRecord>) -> Vec<TrajectoryRecord> {
    let mut best: BTreeMap<String, (StateKey, usize)> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let goal = serde_json::to_string(&r.grounded.semantic.goal).expect("goal serializes");
        let key = r.final_key();
        match best.get(&goal) {
            Some((k, _)) if *k <= key => {}
            _ => {
                best.insert(goal, (key, i));
            }
        }
    }
    let keep: BTreeSet<usize> = best.values().map(|(_, i)| *i).collect();
    records
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| keep.contains(&i).then_some(r))
        .collect()
}

#[derive(Serialize)]
struct BfsEntry<'a> {
    id: &'a str,
    gui_procedure: &'a [crate::spec::GuiStep],
}

#[derive(Serialize)]
struct BfsDocument<'a> {
    trajectory: Vec<BfsEntry<'a>>,
}

/// The `bfs.json` document for one trajectory: a `trajectory` array of
/// `{id, gui_procedure}` entries, pretty-printed.
pub fn export_bfs_json(record: &TrajectoryRecord) -> Vec<u8> {
    let doc = BfsDocument {
        trajectory: record
            .grounded
            .procedures
            .iter()
            .map(|p| BfsEntry {
                id: &p.id,
                gui_procedure: &p.gui_procedure,
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&doc).expect("document serializes");
    out.push(b'\n');
    out
}

/// One line of the dataset stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetLine {
    Step(StepLine),
    Query(QueryLine),
    /// Emitted only for trajectories without grounded steps, so that every
    /// trajectory is visible in the stream.
    Trajectory(TrajectoryLine),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLine {
    pub format_version: u32,
    pub trajectory_id: String,
    pub step_index: usize,
    pub action_index: usize,
    pub action_id: String,
    pub trajectory_actions: usize,
    pub trajectory_steps: usize,
    pub page: String,
    pub op: GuiOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryLine {
    pub format_version: u32,
    pub trajectory_id: String,
    pub query_id: String,
    pub family: Family,
    pub mode: Mode,
    pub text: String,
    pub template_params: Map<String, Json>,
    pub goal: GoalPredicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLine {
    pub format_version: u32,
    pub trajectory_id: String,
    pub trajectory_actions: usize,
    pub trajectory_steps: usize,
}

/// Queries grouped under their trajectory, in record order.
fn ordered_queries<'a>(
    records: &[TrajectoryRecord],
    queries: &'a [QueryInstance],
) -> Result<Vec<Vec<&'a QueryInstance>>, DatagenError> {
    let mut index = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if index.insert(r.id.as_str(), i).is_some() {
            return Err(DatagenError::DuplicateTrajectory(r.id.clone()));
        }
    }
    let mut groups = alloc::vec![Vec::new(); records.len()];
    for q in queries {
        let i = index.get(q.trajectory_ref.as_str()).ok_or_else(|| {
            DatagenError::DanglingReference {
                query: q.id.clone(),
                trajectory: q.trajectory_ref.clone(),
            }
        })?;
        groups[*i].push(q);
    }
    Ok(groups)
}

pub fn dataset_lines(
    records: &[TrajectoryRecord],
    queries: &[QueryInstance],
) -> Result<Vec<DatasetLine>, DatagenError> {
    let groups = ordered_queries(records, queries)?;
    let mut out = Vec::new();
    for (r, qs) in records.iter().zip(groups) {
        let (n_act, n_steps) = (r.action_count(), r.step_count());
        if n_steps == 0 {
            out.push(DatasetLine::Trajectory(TrajectoryLine {
                format_version: FORMAT_VERSION,
                trajectory_id: r.id.clone(),
                trajectory_actions: n_act,
                trajectory_steps: 0,
            }));
        }
        for (i, s) in r.grounded.steps.iter().enumerate() {
            out.push(DatasetLine::Step(StepLine {
                format_version: FORMAT_VERSION,
                trajectory_id: r.id.clone(),
                step_index: i,
                action_index: s.action_index,
                action_id: s.action.clone(),
                trajectory_actions: n_act,
                trajectory_steps: n_steps,
                page: s.page.clone(),
                op: s.op,
                selector: s.selector.clone(),
                point: s.point,
                bbox: s.bbox,
                text: s.text.clone(),
            }));
        }
        for q in qs {
            out.push(DatasetLine::Query(QueryLine {
                format_version: FORMAT_VERSION,
                trajectory_id: r.id.clone(),
                query_id: q.id.clone(),
                family: q.family,
                mode: q.mode,
                text: q.text.clone(),
                template_params: q.template_params.clone(),
                goal: q.goal.clone(),
            }));
        }
    }
    Ok(out)
}

pub fn write_dataset(lines: &[DatasetLine]) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&serde_json::to_string(l).expect("line serializes"));
        out.push('\n');
    }
    out
}

pub fn export_dataset(
    records: &[TrajectoryRecord],
    queries: &[QueryInstance],
) -> Result<String, DatagenError> {
    Ok(write_dataset(&dataset_lines(records, queries)?))
}

/// Parses a dataset stream. Every corrupt line is reported with its 1-based
/// line number.
pub fn parse_dataset(text: &str) -> Result<Vec<DatasetLine>, Vec<(usize, String)>> {
    let mut lines = Vec::new();
    let mut errors = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<DatasetLine>(raw) {
            Ok(l) => lines.push(l),
            Err(e) => errors.push((i + 1, e.to_string())),
        }
    }
    if errors.is_empty() {
        Ok(lines)
    } else {
        Err(errors)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryAttributes {
    pub query_id: String,
    pub trajectory_id: String,
    pub family: Family,
    pub mode: Mode,
    pub template_params: Map<String, Json>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsManifest {
    pub format_version: u32,
    pub trajectory_count: usize,
    pub query_count: usize,
    pub total_steps: usize,
    pub total_actions: usize,
    pub mean_steps: f64,
    pub mean_actions: f64,
    pub max_depth: usize,
    pub per_family: BTreeMap<String, usize>,
    pub per_mode: BTreeMap<String, usize>,
    pub queries: Vec<QueryAttributes>,
}

fn manifest_from(trajectories: &[(usize, usize)], queries: Vec<QueryAttributes>) -> StatsManifest {
    let n = trajectories.len();
    let total_actions: usize = trajectories.iter().map(|t| t.0).sum();
    let total_steps: usize = trajectories.iter().map(|t| t.1).sum();
    let mean = |total: usize| if n == 0 { 0.0 } else { total as f64 / n as f64 };
    let mut per_family = BTreeMap::new();
    let mut per_mode = BTreeMap::new();
    for q in &queries {
        *per_family.entry(q.family.as_str().to_string()).or_insert(0) += 1;
        *per_mode.entry(q.mode.as_str().to_string()).or_insert(0) += 1;
    }
    StatsManifest {
        format_version: FORMAT_VERSION,
        trajectory_count: n,
        query_count: queries.len(),
        total_steps,
        total_actions,
        mean_steps: mean(total_steps),
        mean_actions: mean(total_actions),
        max_depth: trajectories.iter().map(|t| t.0).max().unwrap_or(0),
        per_family,
        per_mode,
        queries,
    }
}

pub fn build_manifest(
    records: &[TrajectoryRecord],
    queries: &[QueryInstance],
) -> Result<StatsManifest, DatagenError> {
    let groups = ordered_queries(records, queries)?;
    let trajectories: Vec<(usize, usize)> = records
        .iter()
        .map(|r| (r.action_count(), r.step_count()))
        .collect();
    let attrs = groups
        .into_iter()
        .flatten()
        .map(|q| QueryAttributes {
            query_id: q.id.clone(),
            trajectory_id: q.trajectory_ref.clone(),
            family: q.family,
            mode: q.mode,
            template_params: q.template_params.clone(),
        })
        .collect();
    Ok(manifest_from(&trajectories, attrs))
}

/// Rebuilds the manifest from dataset lines alone.
pub fn recompute_manifest(lines: &[DatasetLine]) -> StatsManifest {
    let mut seen: Vec<String> = Vec::new();
    let mut trajectories = Vec::new();
    let mut queries = Vec::new();
    let mut note = |id: &str, actions: usize, steps: usize, seen: &mut Vec<String>| {
        if !seen.iter().any(|s| s == id) {
            seen.push(id.to_string());
            trajectories.push((actions, steps));
        }
    };
    for l in lines {
        match l {
            DatasetLine::Step(s) => note(
                &s.trajectory_id,
                s.trajectory_actions,
                s.trajectory_steps,
                &mut seen,
            ),
            DatasetLine::Trajectory(t) => note(
                &t.trajectory_id,
                t.trajectory_actions,
                t.trajectory_steps,
                &mut seen,
            ),
            DatasetLine::Query(q) => queries.push(QueryAttributes {
                query_id: q.query_id.clone(),
                trajectory_id: q.trajectory_id.clone(),
                family: q.family,
                mode: q.mode,
                template_params: q.template_params.clone(),
            }),
        }
    }
    manifest_from(&trajectories, queries)
}

/// Field-by-field differences between two manifests.
pub fn manifest_diff(a: &StatsManifest, b: &StatsManifest) -> Vec<String> {
    let (ja, jb) = (
        serde_json::to_value(a).expect("manifest serializes"),
        serde_json::to_value(b).expect("manifest serializes"),
    );
    let (Json::Object(ma), Json::Object(mb)) = (ja, jb) else {
        return Vec::new();
    };
    let keys: BTreeSet<&String> = ma.keys().chain(mb.keys()).collect();
    keys.into_iter()
        .filter(|k| ma.get(*k) != mb.get(*k))
        .map(|k| k.to_string())
        .collect()
}
