use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value as Json;

use super::{ActionSpec, EffectOp, FsmSpec, NavEdge, NavSkeleton};
use crate::engine::navigation_effect_base;
use crate::value::{placeholder_name, Literal, SigPath, SignatureValue};

/// Upper bound on a procedure step's `repeat` count.
pub const MAX_REPEAT: u32 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CheckId {
    /// Terminal pages reachable from the initial page.
    C1,
    /// Precondition paths well-formed and resolvable.
    C2,
    /// Effects local, typed and fully bound.
    C3,
    /// Navigation and procedures well-defined.
    C4,
    /// Result-set-changing actions reset pagination.
    C5,
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Finding {
    pub check: CheckId,
    pub severity: Severity,
    pub location: String,
    pub message: String,
}

impl Finding {
    fn error(check: CheckId, location: &str, message: String) -> Self {
        Finding {
            check,
            severity: Severity::Error,
            location: location.to_string(),
            message,
        }
    }

    fn warning(check: CheckId, location: &str, message: String) -> Self {
        Finding {
            check,
            severity: Severity::Warning,
            location: location.to_string(),
            message,
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}\t{}\t{}",
            self.check, self.severity, self.location, self.message
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    fn from_findings(mut findings: Vec<Finding>) -> Self {
        findings.sort();
        findings.dedup();
        let ok = findings.iter().all(|f| f.severity != Severity::Error);
        ValidationReport { ok, findings }
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Error)
    }

    /// One `CHECK<TAB>severity<TAB>location<TAB>message` line per finding.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for f in &self.findings {
            out.push_str(&f.to_string());
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Json {
        serde_json::to_value(self).expect("report serializes")
    }
}

/// Runs every check and collects the findings. Never fails.
pub fn validate_spec(spec: &FsmSpec) -> ValidationReport {
    let mut findings = Vec::new();
    check_reachability(spec, &mut findings);
    for (id, action) in &spec.actions {
        check_preconditions(spec, id, action, &mut findings);
        check_effects(spec, id, action, &mut findings);
        check_navigation(spec, id, action, &mut findings);
        check_procedure(id, action, &mut findings);
        check_pagination_reset(spec, id, action, &mut findings);
    }
    for (pid, page) in &spec.pages {
        for aid in &page.actions {
            if let Some(a) = spec.action(aid) {
                if a.from != *pid {
                    findings.push(Finding::error(
                        CheckId::C4,
                        aid,
                        format!("listed on page `{pid}` but declares from `{}`", a.from),
                    ));
                }
            }
        }
    }
    if let Some(shipped) = &spec.nav_skeleton {
        findings.extend(skeleton_findings(spec, shipped));
    }
    ValidationReport::from_findings(findings)
}

/// Cross-page edges induced by navigation actions; nodes are all pages.
pub fn derive_nav_skeleton(spec: &FsmSpec) -> NavSkeleton {
    let mut edges: Vec<NavEdge> = spec
        .actions
        .iter()
        .filter(|(_, a)| a.is_navigation)
        .map(|(id, a)| NavEdge {
            from: a.from.clone(),
            to: a.target().to_string(),
            via: id.clone(),
        })
        .collect();
    edges.sort();
    NavSkeleton {
        nodes: spec.pages.keys().cloned().collect(),
        edges,
    }
}

/// Compares a shipped skeleton with the derived one. Edges whose `via` does
/// not name a matching navigation action are errors; set differences are
/// warnings.
pub fn skeleton_findings(spec: &FsmSpec, shipped: &NavSkeleton) -> Vec<Finding> {
    let mut out = Vec::new();
    let derived: BTreeSet<NavEdge> = derive_nav_skeleton(spec).edges.into_iter().collect();
    let given: BTreeSet<NavEdge> = shipped.edges.iter().cloned().collect();
    for e in &given {
        let ok = spec
            .action(&e.via)
            .map(|a| a.is_navigation && a.from == e.from && a.target() == e.to)
            .unwrap_or(false);
        if !ok {
            out.push(Finding::error(
                CheckId::C4,
                &e.via,
                format!(
                    "skeleton edge {}->{} does not match a navigation action",
                    e.from, e.to
                ),
            ));
        }
    }
    for e in derived.difference(&given) {
        out.push(Finding::warning(
            CheckId::C4,
            "nav_skeleton",
            format!("missing edge {}->{} via {}", e.from, e.to, e.via),
        ));
    }
    for e in given.difference(&derived) {
        out.push(Finding::warning(
            CheckId::C4,
            "nav_skeleton",
            format!("extra edge {}->{} via {}", e.from, e.to, e.via),
        ));
    }
    for n in &shipped.nodes {
        if spec.page(n).is_none() {
            out.push(Finding::error(
                CheckId::C4,
                "nav_skeleton",
                format!("unknown node `{n}`"),
            ));
        }
    }
    out
}

fn check_reachability(spec: &FsmSpec, findings: &mut Vec<Finding>) {
    let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for a in spec.actions.values().filter(|a| a.is_navigation) {
        adj.entry(a.from.as_str()).or_default().push(a.target());
    }
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(spec.meta.initial_page_id.as_str());
    queue.push_back(spec.meta.initial_page_id.as_str());
    while let Some(p) = queue.pop_front() {
        for &q in adj.get(p).into_iter().flatten() {
            if seen.insert(q) {
                queue.push_back(q);
            }
        }
    }
    for t in &spec.meta.terminal_pages {
        if !seen.contains(t.as_str()) {
            findings.push(Finding::error(
                CheckId::C1,
                t,
                format!(
                    "terminal page unreachable from `{}`",
                    spec.meta.initial_page_id
                ),
            ));
        }
    }
}

fn check_preconditions(spec: &FsmSpec, id: &str, action: &ActionSpec, findings: &mut Vec<Finding>) {
    let Some(page) = spec.page(&action.from) else {
        return;
    };
    for c in &action.preconditions {
        match SigPath::parse(&c.path) {
            Err(e) => findings.push(Finding::error(
                CheckId::C2,
                id,
                format!("`{}`: {e}", c.path),
            )),
            Ok(p) => {
                if page.signature.get(&p).is_none() {
                    findings.push(Finding::error(
                        CheckId::C2,
                        id,
                        format!("`{}` not declared on page `{}`", c.path, action.from),
                    ));
                }
            }
        }
        if c.value.contains_placeholder() {
            findings.push(Finding::error(
                CheckId::C2,
                id,
                format!("condition on `{}` compares against a placeholder", c.path),
            ));
        }
    }
}

/// Schema an action's effects operate on.
fn effect_schema(spec: &FsmSpec, action: &ActionSpec) -> Option<SignatureValue> {
    let source = &spec.page(&action.from)?.signature;
    if action.is_navigation {
        let target = &spec.page(action.target())?.signature;
        Some(navigation_effect_base(source, target))
    } else {
        Some(source.clone())
    }
}

fn check_effects(spec: &FsmSpec, id: &str, action: &ActionSpec, findings: &mut Vec<Finding>) {
    let Some(schema) = effect_schema(spec, action) else {
        return;
    };
    let slots = action.slots();
    let domain = action.option_domain();
    for e in &action.effects {
        let path = match SigPath::parse(&e.path) {
            Ok(p) => p,
            Err(err) => {
                findings.push(Finding::error(
                    CheckId::C3,
                    id,
                    format!("`{}`: {err}", e.path),
                ));
                continue;
            }
        };
        let Some(slot) = schema.get(&path) else {
            findings.push(Finding::error(
                CheckId::C3,
                id,
                format!("effect path `{}` is not a declared field", e.path),
            ));
            continue;
        };
        if e.op.needs_value() && e.value.is_none() {
            findings.push(Finding::error(
                CheckId::C3,
                id,
                format!("`{:?}` on `{}` needs a value", e.op, e.path),
            ));
        }
        let expected = match e.op {
            EffectOp::Increment | EffectOp::Decrement => Some((
                "number",
                matches!(slot, SignatureValue::Literal(Literal::Number(_))),
            )),
            EffectOp::Toggle => Some((
                "boolean",
                matches!(slot, SignatureValue::Literal(Literal::Bool(_))),
            )),
            EffectOp::SetInsert | EffectOp::SetDelete => {
                Some(("set", matches!(slot, SignatureValue::Set(_))))
            }
            EffectOp::Assign | EffectOp::EnumSwitch => None,
        };
        if let Some((kind, false)) = expected {
            findings.push(Finding::error(
                CheckId::C3,
                id,
                format!(
                    "`{}` holds {} but the effect expects a {kind}",
                    e.path,
                    slot.kind()
                ),
            ));
        }
        let Some(value) = &e.value else { continue };
        match value {
            SignatureValue::Literal(Literal::Str(s)) => {
                if let Some(name) = placeholder_name(s) {
                    if !slots.is_bound(name) {
                        findings.push(Finding::error(
                            CheckId::C3,
                            id,
                            format!("placeholder `<{name}>` has no binding source"),
                        ));
                    }
                } else if e.op == EffectOp::EnumSwitch
                    && !domain.is_empty()
                    && !domain.contains(&Literal::Str(s.clone()))
                {
                    findings.push(Finding::error(
                        CheckId::C3,
                        id,
                        format!("`{s}` is not among the declared options"),
                    ));
                }
            }
            SignatureValue::Set(_) | SignatureValue::Record(_) if value.contains_placeholder() => {
                findings.push(Finding::error(
                    CheckId::C3,
                    id,
                    format!("placeholder nested inside the value for `{}`", e.path),
                ));
            }
            _ => {}
        }
    }
}

fn check_navigation(spec: &FsmSpec, id: &str, action: &ActionSpec, findings: &mut Vec<Finding>) {
    if action.is_navigation {
        match &action.to_page_id {
            Some(t) if *t != action.to => findings.push(Finding::error(
                CheckId::C4,
                id,
                format!("to_page_id `{t}` differs from to `{}`", action.to),
            )),
            None => findings.push(Finding::error(
                CheckId::C4,
                id,
                "navigation without to_page_id".into(),
            )),
            _ => {}
        }
        if spec.page(action.target()).is_none() {
            findings.push(Finding::error(
                CheckId::C4,
                id,
                format!("unknown target `{}`", action.target()),
            ));
        }
    } else if action.from != action.to {
        findings.push(Finding::error(
            CheckId::C4,
            id,
            format!(
                "in-page action moves from `{}` to `{}`",
                action.from, action.to
            ),
        ));
    }
}

fn check_procedure(id: &str, action: &ActionSpec, findings: &mut Vec<Finding>) {
    let slots = action.slots();
    for (i, step) in action.gui_procedure.iter().enumerate() {
        if step.repeat_count().is_none() {
            findings.push(Finding::error(
                CheckId::C4,
                id,
                format!("step {i}: repeat must be an integer in 1..={MAX_REPEAT}"),
            ));
        }
    }
    for name in action.used_placeholders() {
        if !slots.is_bound(&name) {
            findings.push(Finding::error(
                CheckId::C4,
                id,
                format!("procedure placeholder `<{name}>` has no binding source"),
            ));
        }
    }
}

fn pagination_leaves(schema: &SignatureValue) -> Vec<SigPath> {
    schema
        .leaf_paths()
        .into_iter()
        .filter(|p| {
            p.top() == "pagination"
                || matches!(
                    p.segments().last().map(String::as_str),
                    Some("page_index" | "page")
                )
        })
        .collect()
}

fn check_pagination_reset(
    spec: &FsmSpec,
    id: &str,
    action: &ActionSpec,
    findings: &mut Vec<Finding>,
) {
    if !action.changes_result_set() {
        return;
    }
    let Some(page) = spec.page(&action.from) else {
        return;
    };
    for leaf in pagination_leaves(&page.signature) {
        let default = page.signature.get(&leaf);
        let reset = action.effects.iter().any(|e| {
            e.op == EffectOp::Assign
                && SigPath::parse(&e.path).ok().as_ref() == Some(&leaf)
                && e.value.as_ref() == default
        });
        if !reset {
            findings.push(Finding::error(
                CheckId::C5,
                id,
                format!("does not reset `{leaf}` to its default"),
            ));
        }
    }
}
