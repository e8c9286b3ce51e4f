#![allow(dead_code)]

use std::path::PathBuf;

use webfsm_core::replay::{build_page_model, ground_trajectory, GroundedTrajectory, PageModel};
use webfsm_core::search::{
    enumerate, extract_trajectory, GoalPredicate, SearchConfig, SemanticTrajectory,
};
use webfsm_core::spec::{load_catalog, parse_spec, DataCatalog};
use webfsm_core::FsmSpec;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn read_fixture(name: &str) -> Vec<u8> {
    std::fs::read(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn spec(name: &str) -> FsmSpec {
    parse_spec(&read_fixture(name)).expect("fixture parses")
}

pub fn catalog(name: &str) -> DataCatalog {
    load_catalog(&read_fixture(name)).expect("catalog parses")
}

pub fn shop() -> (FsmSpec, DataCatalog) {
    (spec("shop_fsm.json"), catalog("shop_catalog.json"))
}

pub fn automations() -> (FsmSpec, DataCatalog) {
    (
        spec("automations_fsm.json"),
        catalog("automations_catalog.json"),
    )
}

/// The first shortest trajectory to a terminal page.
pub fn shortest_terminal(spec: &FsmSpec, catalog: &DataCatalog, depth: u32) -> SemanticTrajectory {
    let graph = enumerate(
        spec,
        catalog,
        &GoalPredicate::terminal(spec),
        &SearchConfig::with_depth(depth),
    )
    .unwrap();
    extract_trajectory(&graph, &graph.goal_hits[0]).unwrap()
}

pub fn grounded_automation(seed: u64) -> (GroundedTrajectory, PageModel) {
    let (spec, catalog) = automations();
    let traj = shortest_terminal(&spec, &catalog, 12);
    let model = build_page_model(&spec, seed);
    let g = ground_trajectory(&traj, &spec, &model).unwrap();
    (g, model)
}
