mod common;

use std::collections::BTreeSet;

use common::{automations, grounded_automation, read_fixture, shop};
use serde_json::{json, Value};
use webfsm_core::datagen::{
    build_manifest, check_family, dataset_lines, dedup_per_task, export_bfs_json, export_dataset,
    instantiate_queries, manifest_diff, parse_dataset, recompute_manifest, DatagenError,
    DatasetLine, Family, Mode, TrajectoryRecord,
};
use webfsm_core::replay::{build_page_model, ground_trajectory, GroundedTrajectory};
use webfsm_core::search::{
    check_goal, enumerate, extract_trajectory, sample_diverse, GoalPredicate, SearchConfig,
};
use webfsm_core::spec::Condition;

fn record(id: &str, grounded: GroundedTrajectory, website: &str) -> TrajectoryRecord {
    TrajectoryRecord {
        id: id.into(),
        website: website.into(),
        grounded,
    }
}

fn automation_record() -> TrajectoryRecord {
    record("automations-0", grounded_automation(7).0, "automations")
}

fn cond(path: &str, op: &str, value: Value) -> Condition {
    serde_json::from_value(json!({"path": path, "op": op, "value": value})).unwrap()
}

/// HOME → LIST, filter, search "laptop": 3 actions, 5 grounded steps.
fn laptop_record() -> TrajectoryRecord {
    let (spec, catalog) = shop();
    let goal = GoalPredicate::SignatureConstraints {
        page: Some("LIST".into()),
        conditions: vec![
            cond("$.query", "==", json!("laptop")),
            cond("$.filters.in_stock", "==", json!(true)),
        ],
    };
    let graph = enumerate(&spec, &catalog, &goal, &SearchConfig::with_depth(3)).unwrap();
    let t = extract_trajectory(&graph, &graph.goal_hits[0]).unwrap();
    let model = build_page_model(&spec, 0);
    record(
        "shop-laptop",
        ground_trajectory(&t, &spec, &model).unwrap(),
        "demo_shop",
    )
}

fn all_modes() -> BTreeSet<Mode> {
    Mode::ALL.into_iter().collect()
}

#[test]
fn bfs_json_matches_the_reference_listing() {
    let out = export_bfs_json(&automation_record());
    let got: Value = serde_json::from_slice(&out).unwrap();
    let want: Value =
        serde_json::from_slice(&read_fixture("bfs_automations_expected.json")).unwrap();
    assert_eq!(got, want);
    assert_eq!(got["trajectory"].as_array().unwrap().len(), 11);
    assert_eq!(got["trajectory"][0]["id"], "ACT_HOME_ACCEPT_COOKIES");
    assert_eq!(out, export_bfs_json(&automation_record()));
}

#[test]
fn empty_trajectory_exports_an_empty_array() {
    let mut r = automation_record();
    r.grounded.procedures.clear();
    let v: Value = serde_json::from_slice(&export_bfs_json(&r)).unwrap();
    assert_eq!(v, json!({"trajectory": []}));
}

#[test]
fn search_trigger_yields_a_search_query() {
    let (spec, catalog) = shop();
    let r = laptop_record();
    assert_eq!((r.action_count(), r.step_count()), (3, 5));
    let qs = instantiate_queries(&r, &spec, &catalog, &[Mode::Search].into());
    assert_eq!(qs.len(), 1);
    assert_eq!(qs[0].mode, Mode::Search);
    assert_eq!(
        Value::Object(qs[0].template_params.clone()),
        json!({"query": "laptop"})
    );
    assert_eq!(qs[0].trajectory_ref, "shop-laptop");
    assert!(check_goal(r.grounded.semantic.final_state(), &qs[0].goal).unwrap());
}

#[test]
fn automation_trajectory_yields_a_sort_query() {
    let (spec, catalog) = automations();
    let r = automation_record();
    let qs = instantiate_queries(&r, &spec, &catalog, &[Mode::Sort].into());
    assert_eq!(qs.len(), 1);
    assert_eq!(
        Value::Object(qs[0].template_params.clone()),
        json!({"sort_key": "recent"})
    );
}

#[test]
fn modes_without_triggers_are_skipped() {
    let (spec, catalog) = automations();
    let r = automation_record();
    assert!(
        instantiate_queries(&r, &spec, &catalog, &[Mode::Search, Mode::Slider].into()).is_empty()
    );
    assert!(instantiate_queries(&r, &spec, &catalog, &BTreeSet::new()).is_empty());
}

#[test]
fn item_clicks_yield_scroll_queries_with_positions() {
    let (spec, catalog) = shop();
    let goal = GoalPredicate::TerminalPage {
        pages: vec!["DETAIL".into()],
    };
    let graph = enumerate(&spec, &catalog, &goal, &SearchConfig::with_depth(2)).unwrap();
    let model = build_page_model(&spec, 0);
    let mut positions = Vec::new();
    for (i, t) in sample_diverse(&graph, 3).iter().enumerate() {
        let r = record(
            &format!("d{i}"),
            ground_trajectory(t, &spec, &model).unwrap(),
            "demo_shop",
        );
        let qs = instantiate_queries(&r, &spec, &catalog, &all_modes());
        let scroll = qs.iter().find(|q| q.mode == Mode::Scroll).unwrap();
        let id = scroll.template_params["item_id"].as_str().unwrap();
        let n = scroll.template_params["n"].as_u64().unwrap();
        // catalog ids are item_<position>
        assert_eq!(id, format!("item_{n}"));
        positions.push(n);
    }
    positions.sort();
    positions.dedup();
    assert_eq!(positions.len(), 3);
}

#[test]
fn one_trajectory_plus_one_query_is_six_lines() {
    let (spec, catalog) = shop();
    let r = laptop_record();
    let qs = instantiate_queries(&r, &spec, &catalog, &[Mode::Search].into());
    let text = export_dataset(std::slice::from_ref(&r), &qs).unwrap();
    assert_eq!(text.lines().count(), 6);
    assert_eq!(export_dataset(&[], &[]).unwrap(), "");
}

#[test]
fn dataset_round_trips_byte_for_byte() {
    let (spec, catalog) = shop();
    let records = vec![laptop_record(), automation_record()];
    let mut qs = instantiate_queries(&records[0], &spec, &catalog, &all_modes());
    let (aspec, acat) = automations();
    qs.extend(instantiate_queries(
        &records[1],
        &aspec,
        &acat,
        &all_modes(),
    ));
    let text = export_dataset(&records, &qs).unwrap();
    let parsed = parse_dataset(&text).unwrap();
    let again = webfsm_core::datagen::write_dataset(&parsed);
    assert_eq!(text, again);
    assert_eq!(parsed, dataset_lines(&records, &qs).unwrap());
}

#[test]
fn dangling_query_reference_is_an_error() {
    let (spec, catalog) = shop();
    let r = laptop_record();
    let mut qs = instantiate_queries(&r, &spec, &catalog, &all_modes());
    qs[0].trajectory_ref = "ghost".into();
    assert!(matches!(
        export_dataset(&[r], &qs),
        Err(DatagenError::DanglingReference { .. })
    ));
}

#[test]
fn corrupt_lines_are_reported_with_line_numbers() {
    let r = laptop_record();
    let mut text = export_dataset(&[r], &[]).unwrap();
    text.push_str("{broken\n");
    let errs = parse_dataset(&text).unwrap_err();
    assert_eq!(errs.len(), 1);
    assert_eq!(errs[0].0, 6);
}

#[test]
fn manifest_for_the_automation_trajectory() {
    let (spec, catalog) = automations();
    let r = automation_record();
    let qs = instantiate_queries(&r, &spec, &catalog, &all_modes());
    let m = build_manifest(std::slice::from_ref(&r), &qs).unwrap();
    assert_eq!(m.trajectory_count, 1);
    assert_eq!(m.mean_actions, 11.0);
    assert_eq!(m.mean_steps, 15.0);
    assert_eq!(m.max_depth, 11);
    assert_eq!(m.query_count, qs.len());
    assert_eq!(m.per_family.values().sum::<usize>(), m.query_count);
    assert_eq!(m.per_mode.values().sum::<usize>(), m.query_count);
    let lines = parse_dataset(&export_dataset(&[r], &qs).unwrap()).unwrap();
    assert!(manifest_diff(&m, &recompute_manifest(&lines)).is_empty());
}

#[test]
fn tampered_manifest_is_detected() {
    let r = laptop_record();
    let m = build_manifest(std::slice::from_ref(&r), &[]).unwrap();
    let mut bad = m.clone();
    bad.total_steps += 1;
    assert_eq!(manifest_diff(&m, &bad), ["total_steps"]);
}

#[test]
fn zero_step_trajectories_still_count() {
    let mut r = laptop_record();
    r.grounded.steps.clear();
    let text = export_dataset(std::slice::from_ref(&r), &[]).unwrap();
    let lines = parse_dataset(&text).unwrap();
    assert!(matches!(lines[0], DatasetLine::Trajectory(_)));
    let m = recompute_manifest(&lines);
    assert_eq!(
        (m.trajectory_count, m.total_steps, m.total_actions),
        (1, 0, 3)
    );
}

#[test]
fn dedup_keeps_the_smallest_final_key_per_goal() {
    let (spec, catalog) = shop();
    let goal = GoalPredicate::TerminalPage {
        pages: vec!["DETAIL".into()],
    };
    let graph = enumerate(&spec, &catalog, &goal, &SearchConfig::with_depth(2)).unwrap();
    let model = build_page_model(&spec, 0);
    let records: Vec<_> = sample_diverse(&graph, 4)
        .iter()
        .enumerate()
        .map(|(i, t)| {
            record(
                &format!("d{i}"),
                ground_trajectory(t, &spec, &model).unwrap(),
                "demo_shop",
            )
        })
        .collect();
    let min = records.iter().map(|r| r.final_key()).min().unwrap();
    let kept = dedup_per_task(records);
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0].final_key(), min);
}

#[test]
fn image_families_are_unsupported() {
    assert!(check_family(Family::BfsDriven).is_ok());
    assert_eq!(
        check_family(Family::VisualGrounded),
        Err(DatagenError::Unsupported(Family::VisualGrounded))
    );
    assert!(check_family(Family::ScreenshotQa).is_err());
}
