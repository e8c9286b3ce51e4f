//! Grounding of semantic trajectories into atomic GUI operations and strict
//! replay against a headless page model.
//!
//! The page model registers every selector mentioned by the procedures of a
//! page's actions, gives each one a synthetic bounding box and an
//! availability rule, and stands in for a rendered page. Replay walks the
//! atomic steps, checks each against the model and an optional defect set,
//! and advances the semantic state with the transition engine at every
//! action boundary.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;
use thiserror::Error;

use crate::digest::digest64;
use crate::engine::{eval_all, state_key, step, EngineError, ParamBinding, State, StateKey};
use crate::search::SemanticTrajectory;
use crate::spec::{ActionId, Condition, FsmSpec, GuiOp, GuiStep, PageId};
use crate::value::placeholder_name;

/// Cells per side of the layout grid.
pub const GRID: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn center(&self) -> [f64; 2] {
        [(self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0]
    }

    pub fn contains_strictly(&self, p: [f64; 2]) -> bool {
        self.x1 < p[0] && p[0] < self.x2 && self.y1 < p[1] && p[1] < self.y2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Availability {
    Always,
    /// Option of a dropdown-like widget: the container must have been acted
    /// on earlier in the same action's procedure.
    RequiresContainer {
        container: String,
    },
    /// Rendered only while these conditions hold on the current signature.
    Gated {
        conditions: Vec<Condition>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub bbox: BBox,
    pub availability: Availability,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PageModel {
    pub seed: u64,
    pub pages: BTreeMap<PageId, BTreeMap<String, Element>>,
    spec: FsmSpec,
}

impl PageModel {
    pub fn element(&self, page: &str, selector: &str) -> Option<&Element> {
        self.pages.get(page)?.get(selector)
    }

    pub fn spec(&self) -> &FsmSpec {
        &self.spec
    }

    /// Layout document: page → selector → box and availability rule.
    pub fn layout_json(&self) -> Json {
        serde_json::json!({ "seed": self.seed, "pages": self.pages })
    }
}

fn literal_selector(s: &str) -> Option<&str> {
    if placeholder_name(s).is_some() {
        None
    } else {
        Some(s)
    }
}

fn step_selectors(step: &GuiStep) -> impl Iterator<Item = &str> {
    let ui = step.ui_elements.iter().flat_map(|u| {
        core::iter::once(u.container.as_str()).chain(u.options.iter().map(|o| o.selector.as_str()))
    });
    step.selector
        .iter()
        .chain(step.to_selector.iter())
        .map(String::as_str)
        .chain(ui)
        .filter_map(literal_selector)
}

fn place(page: &str, selectors: &BTreeSet<&str>, seed: u64) -> BTreeMap<String, BBox> {
    let side = GRID.max(libm::ceil(libm::sqrt(selectors.len() as f64)) as usize);
    let cells = side * side;
    let cell = 1.0 / side as f64;
    let mut taken = alloc::vec![false; cells];
    let mut out = BTreeMap::new();
    for sel in selectors {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(page.as_bytes());
        bytes.push(0);
        bytes.extend_from_slice(sel.as_bytes());
        bytes.push(0);
        bytes.extend_from_slice(&seed.to_be_bytes());
        let h = digest64(&bytes);
        let mut idx = (h % cells as u64) as usize;
        while taken[idx] {
            idx = (idx + 1) % cells;
        }
        taken[idx] = true;
        let unit = |shift: u32| ((h >> shift) & 0xffff) as f64 / 65535.0;
        let w = cell * (0.5 + 0.5 * unit(16));
        let hgt = cell * (0.5 + 0.5 * unit(32));
        let cx0 = (idx % side) as f64 * cell;
        let cy0 = (idx / side) as f64 * cell;
        let x1 = cx0 + (cell - w) * unit(48);
        let y1 = cy0 + (cell - hgt) * unit(8);
        out.insert(
            sel.to_string(),
            BBox {
                x1,
                y1,
                x2: (x1 + w).min(1.0),
                y2: (y1 + hgt).min(1.0),
            },
        );
    }
    out
}

/// Builds the deterministic page model for `spec`.
pub fn build_page_model(spec: &FsmSpec, layout_seed: u64) -> PageModel {
    let mut pages = BTreeMap::new();
    for page in spec.pages.keys() {
        let mut users: BTreeMap<&str, Vec<&[Condition]>> = BTreeMap::new();
        let mut options: BTreeMap<&str, &str> = BTreeMap::new();
        for action in spec.actions.values().filter(|a| a.from == *page) {
            for step in &action.gui_procedure {
                for sel in step_selectors(step) {
                    let entry = users.entry(sel).or_default();
                    entry.push(&action.preconditions);
                }
                if let Some(ui) = &step.ui_elements {
                    for o in &ui.options {
                        options
                            .entry(o.selector.as_str())
                            .or_insert(ui.container.as_str());
                    }
                }
            }
        }
        let names: BTreeSet<&str> = users.keys().copied().collect();
        let boxes = place(page, &names, layout_seed);
        let mut registry = BTreeMap::new();
        for (sel, bbox) in boxes {
            let availability = if let Some(container) = options.get(sel.as_str()) {
                Availability::RequiresContainer {
                    container: container.to_string(),
                }
            } else {
                let conds = &users[sel.as_str()];
                let first = conds[0];
                if !first.is_empty() && conds.iter().all(|c| *c == first) {
                    Availability::Gated {
                        conditions: first.to_vec(),
                    }
                } else {
                    Availability::Always
                }
            };
            registry.insert(sel, Element { bbox, availability });
        }
        pages.insert(page.clone(), registry);
    }
    PageModel {
        seed: layout_seed,
        pages,
        spec: spec.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedStep {
    pub action_index: usize,
    pub action: ActionId,
    pub page: PageId,
    pub op: GuiOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selector: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_selector: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_point: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

/// One action's procedure with the binding substituted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionProcedure {
    pub id: ActionId,
    pub gui_procedure: Vec<GuiStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedTrajectory {
    pub semantic: SemanticTrajectory,
    pub procedures: Vec<ActionProcedure>,
    pub steps: Vec<GroundedStep>,
}

impl GroundedTrajectory {
    /// Every selector the grounded steps touch, with its page.
    pub fn referenced_selectors(&self) -> BTreeSet<(PageId, String)> {
        self.steps
            .iter()
            .flat_map(|s| {
                s.selector
                    .iter()
                    .chain(s.to_selector.iter())
                    .map(move |sel| (s.page.clone(), sel.clone()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroundError {
    #[error("unknown action `{0}`")]
    UnknownAction(ActionId),
    #[error("selector `{selector}` of `{action}` is not registered on page `{page}`")]
    UnknownSelector {
        page: PageId,
        action: ActionId,
        selector: String,
    },
    #[error("action `{action}`: {source}")]
    Binding {
        action: ActionId,
        source: EngineError,
    },
    #[error("trajectory has {states} states for {actions} actions")]
    Misaligned { states: usize, actions: usize },
}

fn substitute_step(step: &GuiStep, binding: &ParamBinding) -> Result<GuiStep, EngineError> {
    let mut out = step.clone();
    if let Some(s) = &step.selector {
        out.selector = Some(binding.resolve_selector(s)?);
    }
    if let Some(s) = &step.to_selector {
        out.to_selector = Some(binding.resolve_selector(s)?);
    }
    if let Some(t) = &step.text {
        out.text = Some(binding.substitute_text(t)?);
    }
    Ok(out)
}

/// Expands every action of `traj` into its atomic steps.
pub fn ground_trajectory(
    traj: &SemanticTrajectory,
    spec: &FsmSpec,
    model: &PageModel,
) -> Result<GroundedTrajectory, GroundError> {
    if traj.states.len() != traj.actions.len() + 1 {
        return Err(GroundError::Misaligned {
            states: traj.states.len(),
            actions: traj.actions.len(),
        });
    }
    let mut procedures = Vec::with_capacity(traj.actions.len());
    let mut steps = Vec::new();
    for (i, ta) in traj.actions.iter().enumerate() {
        let action = spec
            .action(&ta.action)
            .ok_or_else(|| GroundError::UnknownAction(ta.action.clone()))?;
        let page = &traj.states[i].page;
        let mut proc_steps = Vec::with_capacity(action.gui_procedure.len());
        for raw in &action.gui_procedure {
            let s = substitute_step(raw, &ta.binding).map_err(|source| GroundError::Binding {
                action: ta.action.clone(),
                source,
            })?;
            let lookup = |sel: &str| {
                model.element(page, sel).map(|e| e.bbox).ok_or_else(|| {
                    GroundError::UnknownSelector {
                        page: page.clone(),
                        action: ta.action.clone(),
                        selector: sel.to_string(),
                    }
                })
            };
            let bbox = s.selector.as_deref().map(lookup).transpose()?;
            let to_box = s.to_selector.as_deref().map(lookup).transpose()?;
            let pointed = s.op.is_pointer() || s.op == GuiOp::Drag;
            let grounded = GroundedStep {
                action_index: i,
                action: ta.action.clone(),
                page: page.clone(),
                op: s.op,
                selector: s.selector.clone(),
                to_selector: s.to_selector.clone(),
                bbox,
                point: bbox.filter(|_| pointed).map(|b| b.center()),
                to_point: to_box.map(|b| b.center()),
                text: s.text.clone(),
            };
            for _ in 0..s.repeat_count().unwrap_or(1) {
                steps.push(grounded.clone());
            }
            proc_steps.push(s);
        }
        procedures.push(ActionProcedure {
            id: ta.action.clone(),
            gui_procedure: proc_steps,
        });
    }
    Ok(GroundedTrajectory {
        semantic: traj.clone(),
        procedures,
        steps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectKind {
    Missing,
    NonFunctional,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Defect {
    pub page: PageId,
    pub selector: String,
    pub kind: DefectKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DefectSet(pub BTreeSet<Defect>);

impl DefectSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, page: &str, selector: &str, kind: DefectKind) -> Self {
        self.0.insert(Defect {
            page: page.to_string(),
            selector: selector.to_string(),
            kind,
        });
        self
    }

    pub fn from_json(doc: &Json) -> Result<Self, serde_json::Error> {
        serde_json::from_value(doc.clone())
    }

    fn has(&self, page: &str, selector: &str, kind: DefectKind) -> bool {
        self.0.contains(&Defect {
            page: page.to_string(),
            selector: selector.to_string(),
            kind,
        })
    }

    pub fn is_subset(&self, other: &DefectSet) -> bool {
        self.0.is_subset(&other.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureReason {
    SelectorMissing,
    AvailabilityUnsatisfied,
    /// An element was present but did not respond, and nothing later in the
    /// same procedure depended on it.
    ElementUnresponsive,
    EngineError,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub state: StateKey,
    /// Selectors acted on so far within the current action's procedure.
    pub acted: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayVerdict {
    pub accepted: bool,
    pub failed_step: Option<usize>,
    pub reason: Option<FailureReason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    pub snapshots: Vec<Snapshot>,
}

struct Failure {
    step: usize,
    reason: FailureReason,
    detail: String,
}

/// Replays `grounded` against `model`, stopping at the first failure.
pub fn replay_trajectory(
    grounded: &GroundedTrajectory,
    model: &PageModel,
    defects: &DefectSet,
) -> ReplayVerdict {
    let mut snapshots = Vec::new();
    match run(grounded, model, defects, &mut snapshots) {
        Ok(()) => ReplayVerdict {
            accepted: true,
            failed_step: None,
            reason: None,
            detail: None,
            snapshots,
        },
        Err(f) => ReplayVerdict {
            accepted: false,
            failed_step: Some(f.step),
            reason: Some(f.reason),
            detail: Some(f.detail),
            snapshots,
        },
    }
}

fn run(
    grounded: &GroundedTrajectory,
    model: &PageModel,
    defects: &DefectSet,
    snapshots: &mut Vec<Snapshot>,
) -> Result<(), Failure> {
    let spec = model.spec();
    let semantic = &grounded.semantic;
    let Some(mut state) = semantic.states.first().cloned() else {
        return Err(Failure {
            step: 0,
            reason: FailureReason::EngineError,
            detail: "trajectory has no initial state".into(),
        });
    };
    let mut cursor = 0;
    for (i, ta) in semantic.actions.iter().enumerate() {
        let start = cursor;
        while cursor < grounded.steps.len() && grounded.steps[cursor].action_index == i {
            cursor += 1;
        }
        let mut acted: Vec<String> = Vec::new();
        let mut unresponsive: Option<(usize, String)> = None;
        for g in start..cursor {
            let s = &grounded.steps[g];
            for sel in s.selector.iter().chain(s.to_selector.iter()) {
                check_element(model, defects, &state, &acted, g, sel)?;
            }
            for sel in s.selector.iter().chain(s.to_selector.iter()) {
                if defects.has(&state.page, sel, DefectKind::NonFunctional) {
                    unresponsive.get_or_insert((g, sel.clone()));
                } else if !acted.contains(sel) {
                    acted.push(sel.clone());
                }
            }
            if g + 1 < cursor {
                snapshots.push(Snapshot {
                    step: g,
                    state: state_key(&state),
                    acted: acted.clone(),
                });
            }
        }
        if let Some((g, sel)) = unresponsive {
            return Err(Failure {
                step: g,
                reason: FailureReason::ElementUnresponsive,
                detail: format!("`{sel}` did not respond"),
            });
        }
        let last = cursor.checked_sub(1).filter(|&l| l >= start);
        let fail_at = last.unwrap_or(start);
        state = advance(spec, &state, ta, semantic.states.get(i + 1), fail_at)?;
        if let Some(l) = last {
            snapshots.push(Snapshot {
                step: l,
                state: state_key(&state),
                acted,
            });
        }
    }
    Ok(())
}

fn check_element(
    model: &PageModel,
    defects: &DefectSet,
    state: &State,
    acted: &[String],
    step: usize,
    sel: &str,
) -> Result<(), Failure> {
    let missing = |detail: String| Failure {
        step,
        reason: FailureReason::SelectorMissing,
        detail,
    };
    if defects.has(&state.page, sel, DefectKind::Missing) {
        return Err(missing(format!(
            "`{sel}` is not rendered on `{}`",
            state.page
        )));
    }
    let Some(el) = model.element(&state.page, sel) else {
        return Err(missing(format!(
            "`{sel}` is not registered on `{}`",
            state.page
        )));
    };
    match &el.availability {
        Availability::Always => Ok(()),
        Availability::RequiresContainer { container } => {
            if acted.iter().any(|a| a == container) {
                Ok(())
            } else {
                Err(Failure {
                    step,
                    reason: FailureReason::AvailabilityUnsatisfied,
                    detail: format!("`{sel}` needs `{container}` opened first"),
                })
            }
        }
        Availability::Gated { conditions } => match eval_all(&state.signature, conditions) {
            Ok(true) => Ok(()),
            Ok(false) => Err(Failure {
                step,
                reason: FailureReason::AvailabilityUnsatisfied,
                detail: format!("`{sel}` is hidden in the current state"),
            }),
            Err(e) => Err(Failure {
                step,
                reason: FailureReason::EngineError,
                detail: e.to_string(),
            }),
        },
    }
}

fn advance(
    spec: &FsmSpec,
    state: &State,
    ta: &crate::search::TrajectoryStep,
    expected: Option<&State>,
    step_index: usize,
) -> Result<State, Failure> {
    let fail = |detail: String| Failure {
        step: step_index,
        reason: FailureReason::EngineError,
        detail,
    };
    let action = spec
        .action(&ta.action)
        .ok_or_else(|| fail(format!("unknown action `{}`", ta.action)))?;
    let out = step(spec, state, action, &ta.binding).map_err(|e| fail(e.to_string()))?;
    if !out.valid {
        return Err(fail(format!(
            "preconditions of `{}` do not hold",
            ta.action
        )));
    }
    if expected != Some(&out.state) {
        return Err(fail(format!(
            "`{}` diverged from the recorded state",
            ta.action
        )));
    }
    Ok(out.state)
}

pub type Partition = (
    Vec<GroundedTrajectory>,
    Vec<(GroundedTrajectory, ReplayVerdict)>,
);

/// Splits trajectories into accepted and rejected, preserving order.
pub fn filter_trajectories(
    grounded: Vec<GroundedTrajectory>,
    model: &PageModel,
    defects: &DefectSet,
) -> Partition {
    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for g in grounded {
        let v = replay_trajectory(&g, model, defects);
        if v.accepted {
            accepted.push(g);
        } else {
            rejected.push((g, v));
        }
    }
    (accepted, rejected)
}
