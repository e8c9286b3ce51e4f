use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::{Map, Value as Json};
use thiserror::Error;

use super::*;
use crate::value::SignatureValue;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("malformed document at byte {offset}: {message}")]
    Malformed { offset: usize, message: String },
    #[error("{path} missing")]
    Missing { path: String },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
}

fn schema(path: &str, message: impl Into<String>) -> SpecError {
    SpecError::Schema {
        path: path.to_string(),
        message: message.into(),
    }
}

/// Byte offset of a 1-based (line, column) position reported by serde_json.
pub(crate) fn byte_offset(doc: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut cur_line = 1;
    let mut line_start = 0;
    for (i, b) in doc.iter().enumerate() {
        if cur_line == line {
            break;
        }
        if *b == b'\n' {
            cur_line += 1;
            line_start = i + 1;
        }
    }
    (line_start + column.saturating_sub(1)).min(doc.len())
}

pub(crate) fn parse_json(document: &[u8]) -> Result<Json, SpecError> {
    serde_json::from_slice(document).map_err(|e| SpecError::Malformed {
        offset: byte_offset(document, e.line(), e.column()),
        message: e.to_string(),
    })
}

struct Obj<'a> {
    path: String,
    map: &'a Map<String, Json>,
    used: Vec<&'static str>,
}

impl<'a> Obj<'a> {
    fn new(path: impl Into<String>, v: &'a Json) -> Result<Self, SpecError> {
        let path = path.into();
        match v {
            Json::Object(map) => Ok(Obj {
                path,
                map,
                used: Vec::new(),
            }),
            _ => Err(schema(&path, "expected an object")),
        }
    }

    fn child_path(&self, key: &str) -> String {
        if self.path.is_empty() {
            key.to_string()
        } else {
            format!("{}.{}", self.path, key)
        }
    }

    fn opt(&mut self, key: &'static str) -> Option<&'a Json> {
        self.used.push(key);
        self.map.get(key).filter(|v| !v.is_null())
    }

    fn opt_raw(&mut self, key: &'static str) -> Option<&'a Json> {
        self.used.push(key);
        self.map.get(key)
    }

    fn req(&mut self, key: &'static str) -> Result<&'a Json, SpecError> {
        let path = self.child_path(key);
        self.opt_raw(key).ok_or(SpecError::Missing { path })
    }

    fn req_str(&mut self, key: &'static str) -> Result<String, SpecError> {
        let path = self.child_path(key);
        match self.req(key)? {
            Json::String(s) => Ok(s.clone()),
            _ => Err(schema(&path, "expected a string")),
        }
    }

    fn opt_str(&mut self, key: &'static str) -> Result<Option<String>, SpecError> {
        let path = self.child_path(key);
        match self.opt(key) {
            None => Ok(None),
            Some(Json::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(schema(&path, "expected a string")),
        }
    }

    fn req_bool(&mut self, key: &'static str) -> Result<bool, SpecError> {
        let path = self.child_path(key);
        self.req(key)?
            .as_bool()
            .ok_or_else(|| schema(&path, "expected a boolean"))
    }

    fn opt_array(&mut self, key: &'static str) -> Result<&'a [Json], SpecError> {
        let path = self.child_path(key);
        match self.opt(key) {
            None => Ok(&[]),
            Some(Json::Array(a)) => Ok(a),
            Some(_) => Err(schema(&path, "expected an array")),
        }
    }

    fn rest(&self) -> BTreeMap<String, Json> {
        self.map
            .iter()
            .filter(|(k, _)| !self.used.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

fn string_list(path: &str, items: &[Json]) -> Result<Vec<String>, SpecError> {
    items
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| schema(&format!("{path}[{i}]"), "expected a string"))
        })
        .collect()
}

fn sig_value(path: &str, v: &Json) -> Result<SignatureValue, SpecError> {
    SignatureValue::from_json(v).map_err(|e| schema(path, e.to_string()))
}

/// Parses an `fsm.json` document.
///
/// Unknown fields are kept in the `extra` maps. Referential invariants
/// (action ids on pages, `from`/`to`/`to_page_id`, the initial and terminal
/// pages) are enforced here as schema errors.
pub fn parse_spec(document: &[u8]) -> Result<FsmSpec, SpecError> {
    let root = parse_json(document)?;
    let mut top = Obj::new("", &root)?;

    let meta = parse_meta(top.req("meta")?)?;

    let pages_path = top.child_path("pages");
    let mut pages = BTreeMap::new();
    match top.req("pages")? {
        Json::Object(map) => {
            for (id, v) in map {
                pages.insert(id.clone(), parse_page(&format!("{pages_path}.{id}"), v)?);
            }
        }
        _ => return Err(schema(&pages_path, "expected an object")),
    }

    let actions_path = top.child_path("actions");
    let mut actions = BTreeMap::new();
    match top.req("actions")? {
        Json::Object(map) => {
            for (id, v) in map {
                actions.insert(
                    id.clone(),
                    parse_action(&format!("{actions_path}.{id}"), v)?,
                );
            }
        }
        _ => return Err(schema(&actions_path, "expected an object")),
    }

    let nav_skeleton = match top.opt("nav_skeleton") {
        None => None,
        Some(v) => Some(parse_skeleton(v)?),
    };

    let spec = FsmSpec {
        meta,
        pages,
        actions,
        nav_skeleton,
        extra: top.rest(),
    };
    check_references(&spec)?;
    Ok(spec)
}

fn parse_meta(v: &Json) -> Result<Meta, SpecError> {
    let mut o = Obj::new("meta", v)?;
    let initial_page_id = o.req_str("initial_page_id")?;
    let tp_path = o.child_path("terminal_pages");
    let terminal_pages = match o.req("terminal_pages")? {
        Json::Array(items) => string_list(&tp_path, items)?,
        _ => return Err(schema(&tp_path, "expected an array")),
    };
    if terminal_pages.is_empty() {
        return Err(schema(&tp_path, "must not be empty"));
    }
    let complexity_profile = o.opt_raw("complexity_profile").cloned();
    Ok(Meta {
        initial_page_id,
        terminal_pages,
        complexity_profile,
        extra: o.rest(),
    })
}

fn parse_page(path: &str, v: &Json) -> Result<PageSpec, SpecError> {
    let mut o = Obj::new(path, v)?;
    let page_name = o.opt_str("page_name")?.unwrap_or_default();
    let sig_path = o.child_path("signature");
    let signature = match o.opt("signature") {
        None => SignatureValue::default(),
        Some(s) => sig_value(&sig_path, s)?,
    };
    if signature.as_record().is_none() {
        return Err(schema(&sig_path, "expected an object"));
    }
    let actions_path = o.child_path("actions");
    let actions = string_list(&actions_path, o.opt_array("actions")?)?;
    Ok(PageSpec {
        page_name,
        signature,
        actions,
        extra: o.rest(),
    })
}

fn parse_action(path: &str, v: &Json) -> Result<ActionSpec, SpecError> {
    let mut o = Obj::new(path, v)?;
    let name = o.req_str("name")?;
    let from = o.req_str("from")?;
    let to = o.req_str("to")?;
    let is_navigation = o.req_bool("is_navigation")?;
    let to_page_id = o.opt_str("to_page_id")?;
    if is_navigation && to_page_id.is_none() {
        return Err(SpecError::Missing {
            path: o.child_path("to_page_id"),
        });
    }

    let params_path = o.child_path("params");
    let params = match o.opt("params") {
        None => BTreeMap::new(),
        Some(Json::Object(m)) => m.iter().map(|(k, v)| (k.clone(), v.clone())).collect(),
        Some(_) => return Err(schema(&params_path, "expected an object")),
    };

    let pre_path = o.child_path("preconditions");
    let preconditions = o
        .opt_array("preconditions")?
        .iter()
        .enumerate()
        .map(|(i, c)| parse_condition(&format!("{pre_path}[{i}]"), c))
        .collect::<Result<Vec<_>, _>>()?;

    let eff_path = o.child_path("effects");
    let effects = o
        .opt_array("effects")?
        .iter()
        .enumerate()
        .map(|(i, e)| parse_effect(&format!("{eff_path}[{i}]"), e))
        .collect::<Result<Vec<_>, _>>()?;

    let gui_path = o.child_path("gui_procedure");
    let gui_procedure = o
        .opt_array("gui_procedure")?
        .iter()
        .enumerate()
        .map(|(i, s)| parse_step(&format!("{gui_path}[{i}]"), s))
        .collect::<Result<Vec<_>, _>>()?;

    let rr_path = o.child_path("resets_results");
    let resets_results = match o.opt("resets_results") {
        None => None,
        Some(Json::Bool(b)) => Some(*b),
        Some(_) => return Err(schema(&rr_path, "expected a boolean")),
    };

    let ps_path = o.child_path("param_sources");
    let param_sources = match o.opt("param_sources") {
        None => BTreeMap::new(),
        Some(v) => {
            serde_json::from_value(v.clone()).map_err(|e| schema(&ps_path, e.to_string()))?
        }
    };

    Ok(ActionSpec {
        name,
        from,
        to,
        is_navigation,
        to_page_id,
        params,
        preconditions,
        effects,
        gui_procedure,
        resets_results,
        param_sources,
        extra: o.rest(),
    })
}

fn parse_condition(path: &str, v: &Json) -> Result<Condition, SpecError> {
    let mut o = Obj::new(path, v)?;
    let cpath = o.req_str("path")?;
    let op_path = o.child_path("op");
    let op_raw = o.req_str("op")?;
    let op = CmpOp::parse(&op_raw)
        .ok_or_else(|| schema(&op_path, format!("unknown comparison `{op_raw}`")))?;
    let value_path = o.child_path("value");
    let value = sig_value(&value_path, o.req("value")?)?;
    Ok(Condition {
        path: cpath,
        op,
        value,
    })
}

fn parse_effect(path: &str, v: &Json) -> Result<Effect, SpecError> {
    let mut o = Obj::new(path, v)?;
    let epath = o.req_str("path")?;
    let op_path = o.child_path("op");
    let op_raw = o.req_str("op")?;
    let op = EffectOp::parse(&op_raw)
        .ok_or_else(|| schema(&op_path, format!("unknown effect op `{op_raw}`")))?;
    let value_path = o.child_path("value");
    let value = match o.opt_raw("value") {
        Some(v) => Some(sig_value(&value_path, v)?),
        None if op.needs_value() => return Err(SpecError::Missing { path: value_path }),
        None => None,
    };
    Ok(Effect {
        path: epath,
        op,
        value,
    })
}

fn parse_step(path: &str, v: &Json) -> Result<GuiStep, SpecError> {
    let step: GuiStep =
        serde_json::from_value(v.clone()).map_err(|e| schema(path, e.to_string()))?;
    if step.op.requires_selector() && step.selector.is_none() {
        return Err(SpecError::Missing {
            path: format!("{path}.selector"),
        });
    }
    if step.op == GuiOp::TypeText && step.text.is_none() {
        return Err(SpecError::Missing {
            path: format!("{path}.text"),
        });
    }
    Ok(step)
}

fn parse_skeleton(v: &Json) -> Result<NavSkeleton, SpecError> {
    serde_json::from_value(v.clone()).map_err(|e| schema("nav_skeleton", e.to_string()))
}

fn check_references(spec: &FsmSpec) -> Result<(), SpecError> {
    let page_exists = |p: &str| spec.pages.contains_key(p);
    if !page_exists(&spec.meta.initial_page_id) {
        return Err(schema(
            "meta.initial_page_id",
            format!("unknown page `{}`", spec.meta.initial_page_id),
        ));
    }
    for (i, t) in spec.meta.terminal_pages.iter().enumerate() {
        if !page_exists(t) {
            return Err(schema(
                &format!("meta.terminal_pages[{i}]"),
                format!("unknown page `{t}`"),
            ));
        }
    }
    for (pid, page) in &spec.pages {
        for (i, aid) in page.actions.iter().enumerate() {
            if !spec.actions.contains_key(aid) {
                return Err(schema(
                    &format!("pages.{pid}.actions[{i}]"),
                    format!("unknown action `{aid}`"),
                ));
            }
        }
    }
    for (aid, a) in &spec.actions {
        let fields = [
            ("from", Some(&a.from)),
            ("to", Some(&a.to)),
            ("to_page_id", a.to_page_id.as_ref()),
        ];
        for (field, page) in fields {
            if let Some(p) = page {
                if !page_exists(p) {
                    return Err(schema(
                        &format!("actions.{aid}.{field}"),
                        format!("unknown page `{p}`"),
                    ));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Json {
        json!({
            "meta": {"initial_page_id": "A", "terminal_pages": ["B"], "app": "demo"},
            "pages": {
                "A": {"page_name": "a", "signature": {"n": 0}, "actions": ["GO"]},
                "B": {"page_name": "b", "signature": {}, "actions": []}
            },
            "actions": {
                "GO": {
                    "name": "go", "from": "A", "to": "B", "is_navigation": true,
                    "to_page_id": "B", "params": {}, "preconditions": [], "effects": [],
                    "gui_procedure": [{"op": "click", "selector": "#go"}],
                    "custom": 7
                }
            }
        })
    }

    fn parse(v: &Json) -> Result<FsmSpec, SpecError> {
        parse_spec(&serde_json::to_vec(v).unwrap())
    }

    #[test]
    fn empty_document_reports_meta() {
        let err = parse_spec(b"{}").unwrap_err();
        assert_eq!(
            err,
            SpecError::Missing {
                path: "meta".into()
            }
        );
        assert_eq!(err.to_string(), "meta missing");
    }

    #[test]
    fn malformed_document_reports_offset() {
        let doc = b"{\n  \"meta\": ,\n}";
        match parse_spec(doc).unwrap_err() {
            SpecError::Malformed { offset, .. } => assert_eq!(offset, 12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn navigation_without_target_is_schema_error() {
        let mut v = minimal();
        v["actions"]["GO"]
            .as_object_mut()
            .unwrap()
            .remove("to_page_id");
        assert_eq!(
            parse(&v).unwrap_err(),
            SpecError::Missing {
                path: "actions.GO.to_page_id".into()
            }
        );
    }

    #[test]
    fn unknown_fields_are_preserved() {
        let spec = parse(&minimal()).unwrap();
        assert_eq!(spec.meta.extra["app"], json!("demo"));
        assert_eq!(spec.actions["GO"].extra["custom"], json!(7));
        let again = parse(&spec.to_json()).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn dangling_references_rejected() {
        let mut v = minimal();
        v["pages"]["A"]["actions"] = json!(["GO", "NOPE"]);
        assert!(
            matches!(parse(&v), Err(SpecError::Schema { path, .. }) if path == "pages.A.actions[1]")
        );
        let mut v = minimal();
        v["actions"]["GO"]["to_page_id"] = json!("Z");
        assert!(
            matches!(parse(&v), Err(SpecError::Schema { path, .. }) if path == "actions.GO.to_page_id")
        );
    }

    #[test]
    fn step_invariants() {
        let mut v = minimal();
        v["actions"]["GO"]["gui_procedure"] = json!([{"op": "type_text"}]);
        assert!(
            matches!(parse(&v), Err(SpecError::Missing { path }) if path.ends_with("[0].text"))
        );
        let mut v = minimal();
        v["actions"]["GO"]["gui_procedure"] = json!([{"op": "fly", "selector": "#x"}]);
        assert!(parse(&v).is_err());
    }

    #[test]
    fn unknown_effect_op_rejected() {
        let mut v = minimal();
        v["actions"]["GO"]["effects"] = json!([{"path": "$.n", "op": "multiply", "value": 2}]);
        assert!(
            matches!(parse(&v), Err(SpecError::Schema { path, .. }) if path == "actions.GO.effects[0].op")
        );
    }
}
