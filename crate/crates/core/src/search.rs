//! Breadth-first enumeration of the semantic state graph.
//!
//! The search is layered: every node of depth `d` is dequeued (and checked
//! against the goal) before any node of depth `d + 1`. Children are produced
//! in page-declared action order and, within an action, in binding order, and
//! are deduplicated by [`StateKey`]. The first parent recorded for a key is
//! therefore on a shortest path.
//!
//! With the `parallel` feature, successor computation for one layer runs on
//! the rayon pool; merging stays sequential and in layer order, so both modes
//! produce the same graph.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    eval_all, eval_condition, eval_preconditions, initial_state, state_key, step, EngineError,
    ParamBinding, State, StateKey,
};
use crate::spec::{ActionId, ActionSpec, Condition, DataCatalog, FsmSpec, PageId, ParamSource};
use crate::value::Literal;

pub const DEFAULT_MAX_NODES: usize = 100_000;
pub const DEFAULT_PARAM_CAP: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub max_depth: u32,
    #[serde(default)]
    pub max_nodes: Option<usize>,
    /// Cap on expanded nodes for the goal being searched.
    #[serde(default)]
    pub per_goal_cap: Option<usize>,
    #[serde(default = "default_param_cap")]
    pub param_instantiation_cap: usize,
}

fn default_param_cap() -> usize {
    DEFAULT_PARAM_CAP
}

impl SearchConfig {
    pub fn with_depth(max_depth: u32) -> Self {
        SearchConfig {
            max_depth,
            max_nodes: Some(DEFAULT_MAX_NODES),
            per_goal_cap: None,
            param_instantiation_cap: DEFAULT_PARAM_CAP,
        }
    }
}

/// Which executor computes successors. Both give identical graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExpansionMode {
    #[default]
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoalPredicate {
    TerminalPage {
        pages: Vec<PageId>,
    },
    SignatureConstraints {
        /// Restricts the goal to one page; other pages never satisfy it.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        page: Option<PageId>,
        conditions: Vec<Condition>,
    },
}

impl GoalPredicate {
    pub fn terminal(spec: &FsmSpec) -> Self {
        GoalPredicate::TerminalPage {
            pages: spec.meta.terminal_pages.clone(),
        }
    }
}

pub fn check_goal(state: &State, goal: &GoalPredicate) -> Result<bool, EngineError> {
    match goal {
        GoalPredicate::TerminalPage { pages } => Ok(pages.contains(&state.page)),
        GoalPredicate::SignatureConstraints { page, conditions } => {
            if page.as_ref().is_some_and(|p| *p != state.page) {
                return Ok(false);
            }
            eval_all(&state.signature, conditions)
        }
    }
}

/// Goal test used while searching: a constraint whose path is absent on the
/// current page simply does not hold there.
fn goal_holds(state: &State, goal: &GoalPredicate) -> Result<bool, EngineError> {
    match check_goal(state, goal) {
        Err(EngineError::PathNotFound(_)) => Ok(false),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentLink {
    pub key: StateKey,
    pub action: ActionId,
    pub binding: ParamBinding,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub key: StateKey,
    pub state: State,
    pub depth: u32,
    pub parent: Option<ParentLink>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGraph {
    pub goal: GoalPredicate,
    pub config: SearchConfig,
    /// Nodes in discovery order.
    pub nodes: Vec<GraphNode>,
    /// Goal hits ordered by (depth, page, sig_hash).
    pub goal_hits: Vec<StateKey>,
    pub expanded: usize,
    pub truncated: bool,
    #[serde(skip)]
    index: BTreeMap<StateKey, usize>,
}

impl StateGraph {
    pub fn node(&self, key: &StateKey) -> Option<&GraphNode> {
        self.index.get(key).map(|&i| &self.nodes[i])
    }

    /// Rebuilds the key index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.key.clone(), i))
            .collect();
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("engine error at {state} via `{action}`: {source}")]
    Expansion {
        state: StateKey,
        action: ActionId,
        source: Box<EngineError>,
    },
    #[error("goal evaluation failed at {state}: {source}")]
    Goal {
        state: StateKey,
        source: EngineError,
    },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("max_depth must be at least 1")]
    ZeroDepth,
    #[error("parameter `{param}` of `{action}`: {message}")]
    Binding {
        action: ActionId,
        param: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrajectoryError {
    #[error("{0} is not a goal hit of this graph")]
    NotAHit(StateKey),
    #[error("dangling parent link at {0}")]
    DanglingParent(StateKey),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub action: ActionId,
    pub binding: ParamBinding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticTrajectory {
    pub actions: Vec<TrajectoryStep>,
    pub states: Vec<State>,
    pub goal: GoalPredicate,
    pub shortest: bool,
}

impl SemanticTrajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn final_state(&self) -> &State {
        self.states.last().expect("at least the initial state")
    }

    pub fn final_key(&self) -> StateKey {
        state_key(self.final_state())
    }

    /// Re-executes the actions from the first state and checks that every
    /// step is valid and lands on the recorded state.
    pub fn verify(&self, spec: &FsmSpec) -> Result<bool, EngineError> {
        if self.states.len() != self.actions.len() + 1 {
            return Ok(false);
        }
        for (i, a) in self.actions.iter().enumerate() {
            let Some(action) = spec.action(&a.action) else {
                return Ok(false);
            };
            let out = step(spec, &self.states[i], action, &a.binding)?;
            if !out.valid || out.state != self.states[i + 1] {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeMode {
    Truncated,
    ForcedInvalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvalidStep {
    pub index: usize,
    pub action: ActionId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeTrajectory {
    /// For forced-invalid negatives the last action is the invalid one and
    /// the last two states are equal.
    pub base: SemanticTrajectory,
    pub mode: NegativeMode,
    pub invalid_step: Option<InvalidStep>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NegativeError {
    #[error("negatives need a trajectory with at least one action")]
    EmptyTrajectory,
    #[error("the goal already holds at the initial state")]
    GoalAtRoot,
    #[error("no action on `{0}` has unsatisfied preconditions")]
    NotConstructible(PageId),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

fn default_field(param: &str) -> &str {
    if param == "query" {
        "name"
    } else if param.ends_with("id") {
        "id"
    } else {
        param
    }
}

fn param_domain(
    catalog: &DataCatalog,
    action: &ActionSpec,
    param: &str,
) -> Result<Vec<Literal>, String> {
    let mut values = match action.param_sources.get(param) {
        Some(ParamSource::Values { values }) => values.clone(),
        Some(ParamSource::Catalog { collection, field }) => catalog.field_values(collection, field),
        None => {
            let field = default_field(param);
            match catalog.collection_with_field(field) {
                Some(c) => catalog.field_values(c, field),
                None => return Err(format!("no catalog collection has field `{field}`")),
            }
        }
    };
    let mut seen = Vec::new();
    values.retain(|v| {
        if seen.contains(v) {
            false
        } else {
            seen.push(v.clone());
            true
        }
    });
    Ok(values)
}

/// Bounded parameter bindings for `action`: the cartesian product of each
/// slot's domain (params by name, then option slots in procedure order),
/// truncated to `cap`. Actions without slots get one empty binding.
pub fn bindings(
    catalog: &DataCatalog,
    action_id: &str,
    action: &ActionSpec,
    cap: usize,
) -> Result<Vec<ParamBinding>, SearchError> {
    let slots = action.slots();
    let mut axes: Vec<Vec<Vec<(String, Literal)>>> = Vec::new();
    for p in &slots.params {
        let dom =
            param_domain(catalog, action, &p.param).map_err(|message| SearchError::Binding {
                action: action_id.to_string(),
                param: p.param.clone(),
                message,
            })?;
        axes.push(
            dom.into_iter()
                .map(|v| alloc::vec![(p.placeholder.clone(), v)])
                .collect(),
        );
    }
    for o in &slots.options {
        axes.push(
            o.options
                .iter()
                .map(|opt| {
                    alloc::vec![
                        (o.value_placeholder.clone(), Literal::Str(opt.value.clone())),
                        (
                            o.selector_placeholder.clone(),
                            Literal::Str(opt.selector.clone())
                        ),
                    ]
                })
                .collect(),
        );
    }
    let mut out = alloc::vec![ParamBinding::new()];
    for axis in axes {
        let mut next = Vec::new();
        'outer: for prefix in &out {
            for choice in &axis {
                if next.len() >= cap {
                    break 'outer;
                }
                let mut b = prefix.clone();
                for (k, v) in choice {
                    b.0.insert(k.clone(), v.clone());
                }
                next.push(b);
            }
        }
        out = next;
    }
    Ok(out)
}

type Successors = Vec<(ActionId, ParamBinding, State)>;

struct Expander<'a> {
    spec: &'a FsmSpec,
    bindings: BTreeMap<&'a str, Vec<ParamBinding>>,
}

impl<'a> Expander<'a> {
    fn new(spec: &'a FsmSpec, catalog: &DataCatalog, cap: usize) -> Result<Self, SearchError> {
        let mut map = BTreeMap::new();
        for (id, a) in &spec.actions {
            map.insert(id.as_str(), bindings(catalog, id, a, cap)?);
        }
        Ok(Expander {
            spec,
            bindings: map,
        })
    }

    fn successors(&self, node: &GraphNode) -> Result<Successors, SearchError> {
        let mut out = Vec::new();
        for (aid, action) in self.spec.page_actions(&node.state.page) {
            let err = |source| SearchError::Expansion {
                state: node.key.clone(),
                action: aid.to_string(),
                source: Box::new(source),
            };
            if !eval_preconditions(&node.state, action).map_err(err)? {
                continue;
            }
            for b in &self.bindings[aid] {
                let next = step(self.spec, &node.state, action, b).map_err(err)?;
                out.push((aid.to_string(), b.clone(), next.state));
            }
        }
        Ok(out)
    }
}

/// Sequential reference enumeration.
pub fn enumerate(
    spec: &FsmSpec,
    catalog: &DataCatalog,
    goal: &GoalPredicate,
    config: &SearchConfig,
) -> Result<StateGraph, SearchError> {
    enumerate_with(spec, catalog, goal, config, ExpansionMode::Sequential)
}

pub fn enumerate_with(
    spec: &FsmSpec,
    catalog: &DataCatalog,
    goal: &GoalPredicate,
    config: &SearchConfig,
    mode: ExpansionMode,
) -> Result<StateGraph, SearchError> {
    if config.max_depth == 0 {
        return Err(SearchError::ZeroDepth);
    }
    let expander = Expander::new(spec, catalog, config.param_instantiation_cap)?;
    let root = initial_state(spec)?;
    let root_key = state_key(&root);
    let mut graph = StateGraph {
        goal: goal.clone(),
        config: config.clone(),
        nodes: alloc::vec![GraphNode {
            key: root_key.clone(),
            state: root,
            depth: 0,
            parent: None,
        }],
        goal_hits: Vec::new(),
        expanded: 0,
        truncated: false,
        index: BTreeMap::new(),
    };
    graph.index.insert(root_key, 0);
    let max_nodes = config.max_nodes.unwrap_or(usize::MAX);
    let expand_cap = config.per_goal_cap.unwrap_or(usize::MAX);

    let mut layer_start = 0;
    let mut depth = 0;
    loop {
        let layer_end = graph.nodes.len();
        if layer_start == layer_end {
            break;
        }
        for i in layer_start..layer_end {
            let node = &graph.nodes[i];
            let hit = goal_holds(&node.state, goal).map_err(|source| SearchError::Goal {
                state: node.key.clone(),
                source,
            })?;
            if hit {
                graph.goal_hits.push(node.key.clone());
            }
        }
        if depth >= config.max_depth {
            break;
        }
        let budget = expand_cap.saturating_sub(graph.expanded);
        let take = (layer_end - layer_start).min(budget);
        if take < layer_end - layer_start {
            graph.truncated = true;
        }
        let layer = &graph.nodes[layer_start..layer_start + take];
        let expanded: Vec<Result<Successors, SearchError>> = match mode {
            ExpansionMode::Sequential => layer.iter().map(|n| expander.successors(n)).collect(),
            #[cfg(feature = "parallel")]
            ExpansionMode::Parallel => {
                use rayon::prelude::*;
                layer.par_iter().map(|n| expander.successors(n)).collect()
            }
        };
        graph.expanded += take;
        let parents: Vec<StateKey> = layer.iter().map(|n| n.key.clone()).collect();
        'merge: for (parent, succ) in parents.into_iter().zip(expanded) {
            for (action, binding, state) in succ? {
                let key = state_key(&state);
                if graph.index.contains_key(&key) {
                    continue;
                }
                if graph.nodes.len() >= max_nodes {
                    graph.truncated = true;
                    break 'merge;
                }
                graph.index.insert(key.clone(), graph.nodes.len());
                graph.nodes.push(GraphNode {
                    key,
                    state,
                    depth: depth + 1,
                    parent: Some(ParentLink {
                        key: parent.clone(),
                        action,
                        binding,
                    }),
                });
            }
        }
        layer_start = layer_end;
        depth += 1;
        if take == 0 {
            break;
        }
    }
    let depth_of = |k: &StateKey| graph.nodes[graph.index[k]].depth;
    let mut hits = core::mem::take(&mut graph.goal_hits);
    hits.sort_by(|a, b| depth_of(a).cmp(&depth_of(b)).then_with(|| a.cmp(b)));
    graph.goal_hits = hits;
    Ok(graph)
}

/// Walks parent links from `hit` back to the root.
pub fn extract_trajectory(
    graph: &StateGraph,
    hit: &StateKey,
) -> Result<SemanticTrajectory, TrajectoryError> {
    if !graph.goal_hits.contains(hit) {
        return Err(TrajectoryError::NotAHit(hit.clone()));
    }
    let mut actions = Vec::new();
    let mut states = Vec::new();
    let mut cur = graph
        .node(hit)
        .ok_or_else(|| TrajectoryError::DanglingParent(hit.clone()))?;
    loop {
        states.push(cur.state.clone());
        match &cur.parent {
            None => break,
            Some(link) => {
                actions.push(TrajectoryStep {
                    action: link.action.clone(),
                    binding: link.binding.clone(),
                });
                cur = graph
                    .node(&link.key)
                    .filter(|p| p.depth + 1 == cur.depth)
                    .ok_or_else(|| TrajectoryError::DanglingParent(cur.key.clone()))?;
            }
        }
    }
    actions.reverse();
    states.reverse();
    Ok(SemanticTrajectory {
        actions,
        states,
        goal: graph.goal.clone(),
        shortest: true,
    })
}

/// Up to `k` trajectories ending in pairwise distinct state keys, in hit
/// order.
pub fn sample_diverse(graph: &StateGraph, k: usize) -> Vec<SemanticTrajectory> {
    let mut out: Vec<SemanticTrajectory> = Vec::new();
    for hit in &graph.goal_hits {
        if out.len() >= k {
            break;
        }
        if out.iter().any(|t| t.final_key() == *hit) {
            continue;
        }
        if let Ok(t) = extract_trajectory(graph, hit) {
            out.push(t);
        }
    }
    out
}

pub fn make_negatives(
    traj: &SemanticTrajectory,
    mode: NegativeMode,
    spec: &FsmSpec,
) -> Result<NegativeTrajectory, NegativeError> {
    if traj.is_empty() {
        return Err(NegativeError::EmptyTrajectory);
    }
    match mode {
        NegativeMode::Truncated => {
            let mut base = traj.clone();
            base.shortest = false;
            while check_goal(base.final_state(), &base.goal)? {
                if base.actions.pop().is_none() {
                    return Err(NegativeError::GoalAtRoot);
                }
                base.states.pop();
            }
            Ok(NegativeTrajectory {
                base,
                mode,
                invalid_step: None,
            })
        }
        NegativeMode::ForcedInvalid => {
            let last = traj.final_state().clone();
            for (aid, action) in spec.page_actions(&last.page) {
                let failing = action
                    .preconditions
                    .iter()
                    .map(|c| eval_condition(&last.signature, c).map(|ok| (ok, c)))
                    .collect::<Result<Vec<_>, _>>()?
                    .into_iter()
                    .find(|(ok, _)| !ok);
                let Some((_, cond)) = failing else { continue };
                let mut base = traj.clone();
                base.shortest = false;
                base.actions.push(TrajectoryStep {
                    action: aid.to_string(),
                    binding: ParamBinding::new(),
                });
                base.states.push(last.clone());
                return Ok(NegativeTrajectory {
                    invalid_step: Some(InvalidStep {
                        index: base.actions.len() - 1,
                        action: aid.to_string(),
                        reason: format!("precondition {cond} does not hold"),
                    }),
                    base,
                    mode,
                });
            }
            Err(NegativeError::NotConstructible(last.page))
        }
    }
}
