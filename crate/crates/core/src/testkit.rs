//! Seeded generators and brute-force oracles shared by the test suites.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value as Json};

use crate::engine::{
    apply_effects, canonical_serialize, eval_preconditions, initial_state, navigation_effect_base,
    state_key, step, ParamBinding, State, StateKey,
};
use crate::search::{check_goal, GoalPredicate};
use crate::spec::{parse_spec, validate_spec, EffectOp, FsmSpec, ParamSource};
use crate::value::{placeholder_name, Literal, SigPath, SignatureValue};

pub struct GeneratedSpec {
    pub spec: FsmSpec,
    pub document: Json,
}

const MODES: [&str; 3] = ["a", "b", "c"];

fn page_signature(rng: &mut ChaCha8Rng) -> serde_json::Map<String, Json> {
    let mut sig = serde_json::Map::new();
    sig.insert("count".into(), json!(0));
    if rng.random_bool(0.6) {
        sig.insert("flag".into(), json!(false));
    }
    if rng.random_bool(0.5) {
        sig.insert("mode".into(), json!("a"));
    }
    if rng.random_bool(0.4) {
        sig.insert("tags".into(), json!([]));
    }
    if rng.random_bool(0.5) {
        sig.insert("pick".into(), Json::Null);
    }
    sig
}

fn condition(rng: &mut ChaCha8Rng, sig: &serde_json::Map<String, Json>) -> Option<Json> {
    let fields: Vec<&String> = sig.keys().collect();
    let f = fields[rng.random_range(0..fields.len())].as_str();
    Some(match f {
        "count" => {
            let op = ["<", "<=", "==", ">="][rng.random_range(0..4)];
            json!({"path": "$.count", "op": op, "value": rng.random_range(0..3)})
        }
        "flag" => json!({"path": "$.flag", "op": "==", "value": rng.random_bool(0.5)}),
        "mode" => {
            let op = ["==", "!="][rng.random_range(0..2)];
            json!({"path": "$.mode", "op": op, "value": MODES[rng.random_range(0..3)]})
        }
        "tags" => json!({"path": "$.tags", "op": "contains", "value": "x"}),
        "pick" => json!({"path": "$.pick", "op": "!=", "value": null}),
        _ => return None,
    })
}

fn effect(rng: &mut ChaCha8Rng, sig: &serde_json::Map<String, Json>) -> Option<Json> {
    let fields: Vec<&String> = sig.keys().collect();
    let f = fields[rng.random_range(0..fields.len())].as_str();
    Some(match f {
        "count" => {
            json!({"path": "$.count", "op": if rng.random_bool(0.7) { "increment" } else { "decrement" }})
        }
        "flag" => json!({"path": "$.flag", "op": "toggle"}),
        "mode" => json!({"path": "$.mode", "op": "assign", "value": MODES[rng.random_range(0..3)]}),
        "tags" => {
            let op = if rng.random_bool(0.7) {
                "set_insert"
            } else {
                "set_delete"
            };
            let tag = ["x", "y"][rng.random_range(0..2)];
            json!({"path": "$.tags", "op": op, "value": tag})
        }
        "pick" => json!({"path": "$.pick", "op": "assign", "value": "p0"}),
        _ => return None,
    })
}

/// A random FSM document that passes validation: at most `max_pages`
/// pages and `max_actions` actions, parameterized actions drawing from
/// explicit value lists.
pub fn random_spec(seed: u64, max_pages: usize, max_actions: usize) -> GeneratedSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_pages.max(2));
    let pages: Vec<String> = (0..n).map(|i| format!("P{i}")).collect();
    let sigs: Vec<_> = (0..n).map(|_| page_signature(&mut rng)).collect();
    let mut actions = serde_json::Map::new();
    let mut page_actions: Vec<Vec<String>> = alloc::vec![Vec::new(); n];
    let mut counter = 0usize;

    let mut add = |rng: &mut ChaCha8Rng,
                   from: usize,
                   to: Option<usize>,
                   page_actions: &mut Vec<Vec<String>>| {
        let id = format!("A{counter:02}");
        counter += 1;
        let nav = to.is_some();
        let target = to.unwrap_or(from);
        let schema = if nav {
            let mut s = sigs[from].clone();
            for (k, v) in &sigs[target] {
                s.entry(k.clone()).or_insert(v.clone());
            }
            s
        } else {
            sigs[from].clone()
        };
        let mut a = json!({
            "name": if nav { "go" } else { "act" },
            "from": pages[from], "to": pages[target], "is_navigation": nav,
            "params": {}, "preconditions": [], "effects": [],
            "gui_procedure": [{"op": "click", "selector": format!("#{}", id.to_lowercase())}]
        });
        if nav {
            a["to_page_id"] = json!(pages[target]);
        }
        let param = schema.contains_key("pick") && rng.random_bool(0.35);
        if param {
            let k = rng.random_range(1..=4);
            let values: Vec<Json> = (0..k).map(|i| json!(format!("v{i}"))).collect();
            a["params"] = json!({"pick": "<PICK>"});
            a["param_sources"] = json!({"pick": {"values": values}});
            a["effects"] = json!([{"path": "$.pick", "op": "assign", "value": "<PICK>"}]);
        }
        if rng.random_bool(if nav { 0.25 } else { 0.5 }) {
            if let Some(c) = condition(rng, &sigs[from]) {
                a["preconditions"].as_array_mut().unwrap().push(c);
            }
        }
        let n_eff = if nav {
            rng.random_range(0..=1)
        } else {
            rng.random_range(1..=2)
        };
        for _ in 0..n_eff {
            if let Some(e) = effect(rng, &schema) {
                a["effects"].as_array_mut().unwrap().push(e);
            }
        }
        page_actions[from].push(id.clone());
        (id, a)
    };

    for i in 1..n {
        let parent = rng.random_range(0..i);
        let (id, a) = add(&mut rng, parent, Some(i), &mut page_actions);
        actions.insert(id, a);
    }
    while actions.len() < max_actions && rng.random_bool(0.9) {
        let from = rng.random_range(0..n);
        let to = rng
            .random_bool(0.3)
            .then(|| rng.random_range(0..n))
            .filter(|t| *t != from);
        let (id, a) = add(&mut rng, from, to, &mut page_actions);
        actions.insert(id, a);
    }
    let terminal = rng.random_range(1..n);
    let mut pages_doc = serde_json::Map::new();
    for i in 0..n {
        pages_doc.insert(
            pages[i].clone(),
            json!({"page_name": format!("Page {i}"), "signature": sigs[i], "actions": page_actions[i]}),
        );
    }
    let document = json!({
        "meta": {"initial_page_id": "P0", "terminal_pages": [pages[terminal]]},
        "pages": pages_doc,
        "actions": actions,
    });
    let bytes = serde_json::to_vec(&document).expect("document serializes");
    let spec = parse_spec(&bytes).expect("generated spec parses");
    let report = validate_spec(&spec);
    assert!(
        report.ok,
        "generated spec {seed} is invalid:\n{}",
        report.to_tsv()
    );
    GeneratedSpec { spec, document }
}

/// Bindings as the oracle understands them: the first `cap` values of each
/// explicit value list (generated specs have at most one slot per action).
fn oracle_bindings(spec: &FsmSpec, action: &str, cap: usize) -> Vec<ParamBinding> {
    let a = &spec.actions[action];
    let mut out = Vec::new();
    for (param, v) in &a.params {
        let Some(name) = v.as_str().and_then(placeholder_name) else {
            continue;
        };
        if let Some(ParamSource::Values { values }) = a.param_sources.get(param) {
            for val in values.iter().take(cap) {
                out.push(ParamBinding::new().with(name, val.clone()));
            }
            return out;
        }
    }
    alloc::vec![ParamBinding::new()]
}

/// Minimum depth (≤ `max_depth`) of every goal-satisfying state key, found by
/// exhaustive depth-bounded DFS. Revisits are pruned only when the key was
/// already reached at a smaller or equal depth.
pub fn dfs_goal_depths(
    spec: &FsmSpec,
    goal: &GoalPredicate,
    max_depth: u32,
    cap: usize,
) -> BTreeMap<StateKey, u32> {
    let mut best: BTreeMap<StateKey, (u32, State)> = BTreeMap::new();
    let root = initial_state(spec).expect("initial state");
    dfs(spec, &root, 0, max_depth, cap, &mut best);
    best.into_iter()
        .filter(|(_, (_, s))| matches!(check_goal(s, goal), Ok(true)))
        .map(|(k, (d, _))| (k, d))
        .collect()
}

fn dfs(
    spec: &FsmSpec,
    s: &State,
    depth: u32,
    max: u32,
    cap: usize,
    best: &mut BTreeMap<StateKey, (u32, State)>,
) {
    let k = state_key(s);
    if best.get(&k).is_some_and(|(d, _)| *d <= depth) {
        return;
    }
    best.insert(k, (depth, s.clone()));
    if depth == max {
        return;
    }
    for (aid, a) in spec.page_actions(&s.page) {
        if !eval_preconditions(s, a).unwrap_or(false) {
            continue;
        }
        for b in oracle_bindings(spec, aid, cap) {
            let next = step(spec, s, a, &b).expect("step succeeds");
            dfs(spec, &next.state, depth + 1, max, cap, best);
        }
    }
}

/// A signature with the same fields as `defaults` but random values.
pub fn random_signature(rng: &mut ChaCha8Rng, defaults: &SignatureValue) -> SignatureValue {
    let Some(fields) = defaults.as_record() else {
        return defaults.clone();
    };
    let mut out = BTreeMap::new();
    for (k, v) in fields {
        let nv = match k.as_str() {
            "count" => SignatureValue::num(rng.random_range(-2..4) as f64),
            "flag" => SignatureValue::bool(rng.random_bool(0.5)),
            "mode" => SignatureValue::str(MODES[rng.random_range(0..3)]),
            "tags" => SignatureValue::Set(
                ["x", "y"]
                    .iter()
                    .filter(|_| rng.random_bool(0.5))
                    .map(|t| Literal::str(t))
                    .collect(),
            ),
            "pick" if rng.random_bool(0.5) => {
                SignatureValue::str(&format!("v{}", rng.random_range(0..4)))
            }
            _ => v.clone(),
        };
        out.insert(k.clone(), nv);
    }
    SignatureValue::Record(out)
}

/// One randomized transition case, checked against the engine's contract:
/// failed preconditions leave the state untouched, in-page effects touch only
/// their declared paths, toggles are involutions, and navigation yields
/// exactly the target's field set with carried values where the names match.
/// Returns a description of every violated property.
pub fn engine_case(seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_spec(rng.random(), 6, 20);
    let spec = &g.spec;
    let pages: Vec<&String> = spec.pages.keys().collect();
    let page = pages[rng.random_range(0..pages.len())].clone();
    let acts: Vec<(&str, &crate::spec::ActionSpec)> = spec.page_actions(&page).collect();
    if acts.is_empty() {
        return Vec::new();
    }
    let (aid, action) = acts[rng.random_range(0..acts.len())];
    let state = State {
        page: page.clone(),
        signature: random_signature(&mut rng, &spec.pages[&page].signature),
    };
    let bs = oracle_bindings(spec, aid, 4);
    let binding = &bs[rng.random_range(0..bs.len())];
    let mut violations = Vec::new();
    let out = match step(spec, &state, action, binding) {
        Ok(o) => o,
        Err(e) => return alloc::vec![format!("{seed}: {aid} errored: {e}")],
    };
    let pre_ok = eval_preconditions(&state, action).unwrap_or(false);
    if !pre_ok {
        if out.valid || out.state != state {
            violations.push(format!(
                "{seed}: {aid} changed state despite failing preconditions"
            ));
        }
        return violations;
    }
    let touched: BTreeSet<String> = action.effects.iter().map(|e| e.path.clone()).collect();
    let masked = |sig: &SignatureValue| {
        let mut s = sig.clone();
        for p in &touched {
            if let Ok(path) = SigPath::parse(p) {
                s.remove(&path);
            }
        }
        canonical_serialize(&s)
    };
    if !action.is_navigation {
        if out.state.page != state.page {
            violations.push(format!("{seed}: in-page {aid} moved"));
        }
        if masked(&state.signature) != masked(&out.state.signature) {
            violations.push(format!("{seed}: {aid} touched undeclared paths"));
        }
    } else {
        let target = &spec.pages[action.target()].signature;
        let fields = |s: &SignatureValue| {
            s.as_record()
                .map(|r| r.keys().cloned().collect::<BTreeSet<_>>())
        };
        if fields(&out.state.signature) != fields(target) {
            violations.push(format!("{seed}: {aid} produced the wrong field set"));
        }
        let (src, tgt, post) = (
            state.signature.as_record().unwrap(),
            target.as_record().unwrap(),
            out.state.signature.as_record().unwrap(),
        );
        for (k, dv) in tgt {
            if touched.contains(&format!("$.{k}")) {
                continue;
            }
            let want = src.get(k).unwrap_or(dv);
            if post.get(k) != Some(want) {
                violations.push(format!("{seed}: {aid} did not carry `{k}`"));
            }
        }
    }
    let base = if action.is_navigation {
        navigation_effect_base(&state.signature, &spec.pages[action.target()].signature)
    } else {
        state.signature.clone()
    };
    for eff in action.effects.iter().filter(|e| e.op == EffectOp::Toggle) {
        let once = apply_effects(&base, core::slice::from_ref(eff), binding);
        let twice = once.and_then(|s| apply_effects(&s, core::slice::from_ref(eff), binding));
        if twice.as_ref() != Ok(&base) {
            violations.push(format!(
                "{seed}: toggle on {} is not an involution",
                eff.path
            ));
        }
    }
    violations
}

/// A random literal drawn from a small pool.
pub fn random_literal(rng: &mut ChaCha8Rng) -> Literal {
    match rng.random_range(0..4) {
        0 => Literal::Null,
        1 => Literal::Bool(rng.random_bool(0.5)),
        2 => Literal::Number(crate::value::Number::from_i64(rng.random_range(-3..4))),
        _ => Literal::Str(String::from(MODES[rng.random_range(0..3)])),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
