mod common;

use std::collections::BTreeSet;

use common::{automations, grounded_automation, read_fixture, shop};
use webfsm_core::replay::{
    build_page_model, filter_trajectories, ground_trajectory, replay_trajectory, Availability,
    DefectKind, DefectSet, FailureReason,
};
use webfsm_core::search::{enumerate, sample_diverse, GoalPredicate, SearchConfig};

#[test]
fn automation_trajectory_replays_all_fifteen_steps() {
    let (g, model) = grounded_automation(7);
    // independent count: steps in the bundled listing
    let listing: serde_json::Value =
        serde_json::from_slice(&read_fixture("bfs_automations_expected.json")).unwrap();
    let expected: usize = listing["trajectory"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["gui_procedure"].as_array().unwrap().len())
        .sum();
    assert_eq!(expected, 15);
    assert_eq!(g.steps.len(), expected);
    let v = replay_trajectory(&g, &model, &DefectSet::new());
    assert!(v.accepted, "{v:?}");
    assert_eq!(v.failed_step, None);
    assert_eq!(v.snapshots.len(), expected);
}

#[test]
fn cookie_defect_rejects_at_step_zero() {
    let (g, model) = grounded_automation(7);
    let defects = DefectSet::new().with("HOME", "#cookie-accept", DefectKind::Missing);
    let v = replay_trajectory(&g, &model, &defects);
    assert!(!v.accepted);
    assert_eq!(v.failed_step, Some(0));
    assert_eq!(v.reason, Some(FailureReason::SelectorMissing));
}

#[test]
fn unresponsive_container_leaves_its_option_unavailable() {
    let (g, model) = grounded_automation(7);
    let defects = DefectSet::new().with("BASES", "#bases-sort-dropdown", DefectKind::NonFunctional);
    let v = replay_trajectory(&g, &model, &defects);
    assert!(!v.accepted);
    assert_eq!(v.reason, Some(FailureReason::AvailabilityUnsatisfied));
    let failed = &g.steps[v.failed_step.unwrap()];
    assert_eq!(failed.selector.as_deref(), Some("#bases-sort-recent-desc"));
}

#[test]
fn unresponsive_leaf_element_fails_at_the_action_boundary() {
    let (g, model) = grounded_automation(7);
    let defects = DefectSet::new().with("HOME", "#cookie-accept", DefectKind::NonFunctional);
    let v = replay_trajectory(&g, &model, &defects);
    assert_eq!(v.reason, Some(FailureReason::ElementUnresponsive));
    assert_eq!(v.failed_step, Some(0));
}

#[test]
fn missing_container_is_a_selector_failure() {
    let (g, model) = grounded_automation(7);
    let defects = DefectSet::new().with("BASES", "#bases-sort-dropdown", DefectKind::Missing);
    let v = replay_trajectory(&g, &model, &defects);
    assert_eq!(v.reason, Some(FailureReason::SelectorMissing));
    assert_eq!(
        g.steps[v.failed_step.unwrap()].selector.as_deref(),
        Some("#bases-sort-dropdown")
    );
}

#[test]
fn defect_on_another_page_is_harmless() {
    let (g, model) = grounded_automation(7);
    let defects = DefectSet::new().with("AUTOMATIONS", "#cookie-accept", DefectKind::Missing);
    assert!(replay_trajectory(&g, &model, &defects).accepted);
}

#[test]
fn option_selectors_require_their_container() {
    let (spec, _) = automations();
    let model = build_page_model(&spec, 0);
    let el = model.element("BASES", "#bases-sort-recent-desc").unwrap();
    assert_eq!(
        el.availability,
        Availability::RequiresContainer {
            container: "#bases-sort-dropdown".into()
        }
    );
}

#[test]
fn every_page_has_unique_centres_and_points_inside_boxes() {
    for (spec, _) in [shop(), automations()] {
        for seed in [0, 1, 99] {
            let model = build_page_model(&spec, seed);
            for (page, els) in &model.pages {
                let centres: BTreeSet<(u64, u64)> = els
                    .values()
                    .map(|e| {
                        let c = e.bbox.center();
                        (c[0].to_bits(), c[1].to_bits())
                    })
                    .collect();
                assert_eq!(centres.len(), els.len(), "{page}");
                for e in els.values() {
                    assert!(e.bbox.contains_strictly(e.bbox.center()));
                    assert!(e.bbox.x2 - e.bbox.x1 >= 0.02 && e.bbox.y2 - e.bbox.y1 >= 0.02);
                    assert!(
                        e.bbox.x1 >= 0.0
                            && e.bbox.y1 >= 0.0
                            && e.bbox.x2 <= 1.0
                            && e.bbox.y2 <= 1.0
                    );
                }
            }
        }
    }
}

#[test]
fn grounded_points_lie_strictly_inside_their_boxes() {
    let (g, _) = grounded_automation(3);
    for s in &g.steps {
        if let (Some(b), Some(p)) = (s.bbox, s.point) {
            assert!(b.contains_strictly(p));
        }
    }
}

#[test]
fn layout_depends_only_on_the_seed() {
    let (spec, _) = shop();
    assert_eq!(
        build_page_model(&spec, 5).layout_json(),
        build_page_model(&spec, 5).layout_json()
    );
    assert_ne!(
        build_page_model(&spec, 5).layout_json(),
        build_page_model(&spec, 6).layout_json()
    );
}

#[test]
fn placeholder_selectors_are_substituted_when_grounding() {
    let (spec, catalog) = shop();
    let goal = GoalPredicate::TerminalPage {
        pages: vec!["DETAIL".into()],
    };
    let graph = enumerate(&spec, &catalog, &goal, &SearchConfig::with_depth(2)).unwrap();
    let model = build_page_model(&spec, 0);
    for t in sample_diverse(&graph, 3) {
        let g = ground_trajectory(&t, &spec, &model).unwrap();
        assert!(g
            .steps
            .iter()
            .all(|s| s.selector.as_deref().is_none_or(|x| !x.contains('<'))));
        assert!(replay_trajectory(&g, &model, &DefectSet::new()).accepted);
    }
}

#[test]
fn filtering_partitions_in_order() {
    let (spec, catalog) = shop();
    let goal = GoalPredicate::TerminalPage {
        pages: vec!["LIST".into()],
    };
    let graph = enumerate(&spec, &catalog, &goal, &SearchConfig::with_depth(2)).unwrap();
    let model = build_page_model(&spec, 0);
    let grounded: Vec<_> = sample_diverse(&graph, 10)
        .iter()
        .map(|t| ground_trajectory(t, &spec, &model).unwrap())
        .collect();
    let n = grounded.len();
    let sigma = ("LIST", "#sort-price-asc");
    let hit: Vec<bool> = grounded
        .iter()
        .map(|g| {
            g.referenced_selectors()
                .contains(&(sigma.0.to_string(), sigma.1.to_string()))
        })
        .collect();
    let defects = DefectSet::new().with(sigma.0, sigma.1, DefectKind::Missing);
    let (acc, rej) = filter_trajectories(grounded.clone(), &model, &defects);
    assert_eq!(acc.len() + rej.len(), n);
    assert_eq!(rej.len(), hit.iter().filter(|h| **h).count());
    assert!(!rej.is_empty());
    let expect_acc: Vec<_> = grounded
        .iter()
        .zip(&hit)
        .filter(|(_, h)| !**h)
        .map(|(g, _)| g.clone())
        .collect();
    assert_eq!(acc, expect_acc);
    let (all, none) = filter_trajectories(grounded, &model, &DefectSet::new());
    assert_eq!((all.len(), none.len()), (n, 0));
    let (a, r) = filter_trajectories(Vec::new(), &model, &defects);
    assert!(a.is_empty() && r.is_empty());
}

#[test]
fn replay_is_deterministic() {
    let (g, model) = grounded_automation(11);
    let d = DefectSet::new().with(
        "AUTOMATION_EDITOR",
        "#action-dropdown",
        DefectKind::NonFunctional,
    );
    assert_eq!(
        replay_trajectory(&g, &model, &d),
        replay_trajectory(&g, &model, &d)
    );
}

#[test]
fn defect_sets_load_from_documents() {
    let doc = serde_json::json!([
        {"page": "HOME", "selector": "#cookie-accept", "kind": "missing"},
        {"page": "BASES", "selector": "#bases-sort-dropdown", "kind": "non_functional"}
    ]);
    let d = DefectSet::from_json(&doc).unwrap();
    assert_eq!(d.0.len(), 2);
    assert!(DefectSet::new()
        .with("HOME", "#cookie-accept", DefectKind::Missing)
        .is_subset(&d));
}
