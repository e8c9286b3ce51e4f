mod common;

use common::{read_fixture, spec};
use serde_json::{json, Value};
use webfsm_core::spec::{
    derive_nav_skeleton, parse_spec, skeleton_findings, validate_spec, CheckId, Severity, SpecError,
};

fn planted(name: &str) -> Vec<(CheckId, String)> {
    let report = validate_spec(&spec(&format!("invalid/{name}.json")));
    assert!(!report.ok, "{name} should fail");
    report
        .errors()
        .map(|f| (f.check, f.location.clone()))
        .collect()
}

fn shop_doc() -> Value {
    serde_json::from_slice(&read_fixture("shop_fsm.json")).unwrap()
}

fn validate_doc(doc: &Value) -> webfsm_core::ValidationReport {
    validate_spec(&parse_spec(&serde_json::to_vec(doc).unwrap()).unwrap())
}

#[test]
fn valid_fixtures_have_no_findings() {
    for name in ["shop_fsm.json", "automations_fsm.json"] {
        let report = validate_spec(&spec(name));
        assert!(report.ok, "{name}:\n{}", report.to_tsv());
        assert!(report.findings.is_empty(), "{name}:\n{}", report.to_tsv());
    }
}

#[test]
fn each_invalid_fixture_reports_exactly_its_planted_violation() {
    assert_eq!(
        planted("c1_unreachable_terminal"),
        [(CheckId::C1, "SUCCESS_1".to_string())]
    );
    assert_eq!(
        planted("c2_path_without_root"),
        [(CheckId::C2, "ACT_ID_ADD".to_string())]
    );
    assert_eq!(
        planted("c3_increment_on_string"),
        [(CheckId::C3, "ACT_ID_1".to_string())]
    );
    assert_eq!(
        planted("c4_in_page_action_moves"),
        [(CheckId::C4, "ACT_ID_BACK".to_string())]
    );
    assert_eq!(
        planted("c5_search_without_reset"),
        [(CheckId::C5, "ACT_ID_SEARCH".to_string())]
    );
}

#[test]
fn placeholder_in_precondition_is_a_c2_error() {
    let mut doc = shop_doc();
    doc["actions"]["ACT_ID_ADD"]["preconditions"] =
        json!([{"path": "$.selected_item_id", "op": "==", "value": "<X>"}]);
    let report = validate_doc(&doc);
    assert!(report
        .errors()
        .any(|f| f.check == CheckId::C2 && f.location == "ACT_ID_ADD"));
}

#[test]
fn effect_outside_the_schema_is_a_c3_error() {
    let mut doc = shop_doc();
    doc["actions"]["ACT_ID_2"]["effects"] =
        json!([{"path": "$.no_such_field", "op": "assign", "value": 1}]);
    let report = validate_doc(&doc);
    let errs: Vec<_> = report.errors().collect();
    assert_eq!(errs.len(), 1);
    assert_eq!(
        (errs[0].check, errs[0].location.as_str()),
        (CheckId::C3, "ACT_ID_2")
    );
}

#[test]
fn unbound_effect_placeholder_is_a_c3_error() {
    let mut doc = shop_doc();
    doc["actions"]["ACT_ID_2"]["effects"] =
        json!([{"path": "$.sig_field_1", "op": "assign", "value": "<FREE>"}]);
    assert!(validate_doc(&doc).errors().any(|f| f.check == CheckId::C3));
}

#[test]
fn unbounded_repeat_is_flagged() {
    let mut doc = shop_doc();
    doc["actions"]["ACT_ID_2"]["gui_procedure"] =
        json!([{"op": "click", "selector": "#x", "repeat": 10_000}]);
    assert!(!validate_doc(&doc).ok);
}

#[test]
fn skeleton_gaps_are_warnings_only() {
    let mut doc = shop_doc();
    let edges = doc["nav_skeleton"]["edges"].as_array_mut().unwrap();
    edges.pop();
    let report = validate_doc(&doc);
    assert!(report.ok, "{}", report.to_tsv());
    assert!(report
        .findings
        .iter()
        .any(|f| f.check == CheckId::C4 && f.severity == Severity::Warning));
}

#[test]
fn derived_skeleton_matches_the_shipped_one() {
    let s = spec("shop_fsm.json");
    let derived = derive_nav_skeleton(&s);
    assert_eq!(derived.edges.len(), 3);
    assert!(skeleton_findings(&s, &derived).is_empty());
    assert_eq!(derived.nodes.len(), s.pages.len());
}

#[test]
fn structural_errors_surface_at_parse_time() {
    let mut doc = shop_doc();
    doc["meta"]["initial_page_id"] = json!("NOWHERE");
    assert!(parse_spec(&serde_json::to_vec(&doc).unwrap()).is_err());
    assert!(matches!(
        parse_spec(b"{not json"),
        Err(SpecError::Malformed { offset: 1, .. })
    ));
}

#[test]
fn complexity_profile_is_inert() {
    let mut doc = shop_doc();
    doc["meta"]["complexity_profile"] = json!({"anything": [1, 2, 3]});
    let a = spec("shop_fsm.json");
    let b = parse_spec(&serde_json::to_vec(&doc).unwrap()).unwrap();
    assert_eq!(validate_spec(&a), validate_spec(&b));
    assert_eq!(a.pages, b.pages);
    assert_eq!(a.actions, b.actions);
}
