use std::collections::BTreeSet;
use std::path::Path;

use webfsm_core::datagen::{
    build_manifest, check_family, dedup_per_task, export_bfs_json, export_dataset,
    instantiate_queries, manifest_diff, parse_dataset, recompute_manifest, Family, Mode,
    StatsManifest, TrajectoryRecord,
};
use webfsm_core::replay::{
    build_page_model, filter_trajectories, ground_trajectory, DefectSet, GroundedTrajectory,
};
use webfsm_core::reward::score_batch;
use webfsm_core::search::{
    enumerate_with, make_negatives, sample_diverse, ExpansionMode, GoalPredicate, NegativeMode,
    SearchConfig, SemanticTrajectory,
};
use webfsm_core::spec::{load_catalog, parse_spec, validate_spec, DataCatalog};
use webfsm_core::FsmSpec;

use crate::artifacts::*;
use crate::error::CliError;

pub type CmdResult = Result<(), CliError>;

fn load_spec(path: &Path) -> Result<FsmSpec, CliError> {
    parse_spec(&read_bytes(path)?).map_err(|e| CliError::Domain(format!("{}: {e}", path.display())))
}

/// Parses and validates; an invalid spec is refused with its report.
fn load_valid_spec(path: &Path) -> Result<FsmSpec, CliError> {
    let spec = load_spec(path)?;
    let report = validate_spec(&spec);
    if !report.ok {
        eprint!("{}", report.to_tsv());
        return Err(CliError::Domain(format!(
            "{} does not validate",
            path.display()
        )));
    }
    Ok(spec)
}

fn load_catalog_opt(path: Option<&Path>) -> Result<DataCatalog, CliError> {
    match path {
        None => Ok(DataCatalog::default()),
        Some(p) => load_catalog(&read_bytes(p)?)
            .map_err(|e| CliError::Domain(format!("{}: {e}", p.display()))),
    }
}

/// Inline JSON when the argument starts with `{`, otherwise a file path.
fn load_goal(arg: Option<&str>, spec: &FsmSpec) -> Result<GoalPredicate, CliError> {
    let Some(arg) = arg else {
        return Ok(GoalPredicate::terminal(spec));
    };
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        read_text(Path::new(arg))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("goal: {e}")))
}

pub fn validate(spec_path: &Path, json: bool) -> CmdResult {
    let spec = load_spec(spec_path)?;
    let report = validate_spec(&spec);
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report.to_json()).expect("report serializes")
        );
    } else {
        print!("{}", report.to_tsv());
        let n = report.findings.len();
        println!(
            "{}: {} ({n} finding{})",
            spec_path.display(),
            if report.ok { "ok" } else { "invalid" },
            if n == 1 { "" } else { "s" }
        );
    }
    if report.ok {
        Ok(())
    } else {
        Err(CliError::Domain(format!(
            "{} does not validate",
            spec_path.display()
        )))
    }
}

pub struct EnumerateArgs<'a> {
    pub spec: &'a Path,
    pub catalog: Option<&'a Path>,
    pub goal: Option<&'a str>,
    pub config: SearchConfig,
    pub samples: usize,
    pub negatives: bool,
    pub parallel: bool,
    pub out: &'a Path,
}

pub fn enumerate(a: EnumerateArgs) -> CmdResult {
    let spec = load_valid_spec(a.spec)?;
    let catalog = load_catalog_opt(a.catalog)?;
    let goal = load_goal(a.goal, &spec)?;
    let mode = if a.parallel {
        ExpansionMode::Parallel
    } else {
        ExpansionMode::Sequential
    };
    let graph = enumerate_with(&spec, &catalog, &goal, &a.config, mode)
        .map_err(|e| CliError::Domain(e.to_string()))?;
    let trajectories = sample_diverse(&graph, a.samples);
    let digest = spec.digest();
    let summary = GraphSummary {
        nodes: graph.nodes.len(),
        expanded: graph.expanded,
        truncated: graph.truncated,
        goal_hits: graph.goal_hits.len(),
        shortest_length: trajectories.iter().map(SemanticTrajectory::len).min(),
    };
    ensure_dir(a.out)?;
    if a.negatives {
        let mut negatives = Vec::new();
        for t in &trajectories {
            for m in [NegativeMode::Truncated, NegativeMode::ForcedInvalid] {
                if let Ok(n) = make_negatives(t, m, &spec) {
                    negatives.push(n);
                }
            }
        }
        write_json(
            &a.out.join("negatives.json"),
            &NegativesDoc {
                format_version: version(),
                kind: NEGATIVES.into(),
                spec_digest: digest.clone(),
                negatives,
            },
        )?;
    }
    println!(
        "{} trajectories ({} goal hits, {} nodes{}), shortest length {}",
        trajectories.len(),
        summary.goal_hits,
        summary.nodes,
        if summary.truncated { ", truncated" } else { "" },
        summary
            .shortest_length
            .map_or("-".to_string(), |l| l.to_string()),
    );
    write_json(
        &a.out.join("trajectories.json"),
        &TrajectoriesDoc {
            format_version: version(),
            kind: TRAJECTORIES.into(),
            spec_digest: digest,
            goal,
            config: a.config,
            summary,
            trajectories,
        },
    )
}

fn ground_all(
    spec: &FsmSpec,
    trajectories: &[SemanticTrajectory],
    seed: u64,
) -> Result<Vec<GroundedTrajectory>, CliError> {
    let model = build_page_model(spec, seed);
    trajectories
        .iter()
        .map(|t| ground_trajectory(t, spec, &model).map_err(|e| CliError::Domain(e.to_string())))
        .collect()
}

pub fn ground(spec_path: &Path, trajectories: &Path, seed: u64, out: &Path) -> CmdResult {
    let spec = load_valid_spec(spec_path)?;
    let doc: TrajectoriesDoc = read_doc(trajectories, TRAJECTORIES)?;
    let digest = spec.digest();
    check_digest(trajectories, &doc.spec_digest, &digest)?;
    let grounded = ground_all(&spec, &doc.trajectories, seed)?;
    let steps: usize = grounded.iter().map(|g| g.steps.len()).sum();
    println!(
        "grounded {} trajectories into {steps} steps",
        grounded.len()
    );
    let model = build_page_model(&spec, seed);
    let mut layout = model.layout_json();
    layout["format_version"] = version().into();
    layout["spec_digest"] = digest.clone().into();
    write_json(&out.join("layout.json"), &layout)?;
    write_json(
        &out.join("grounded.json"),
        &GroundedDoc {
            format_version: version(),
            kind: GROUNDED.into(),
            spec_digest: digest,
            seed,
            trajectories: grounded,
        },
    )
}

/// Grounded trajectories from either a `grounded` or a `trajectories`
/// artifact (the latter is grounded on the fly with `seed`).
fn load_grounded(
    path: &Path,
    spec: &FsmSpec,
    digest: &str,
    seed: u64,
) -> Result<Vec<GroundedTrajectory>, CliError> {
    let raw: serde_json::Value = serde_json::from_slice(&read_bytes(path)?)
        .map_err(|e| CliError::Domain(format!("{}: not a JSON document: {e}", path.display())))?;
    match raw.get("kind").and_then(|k| k.as_str()) {
        Some(TRAJECTORIES) => {
            let doc: TrajectoriesDoc = read_doc(path, TRAJECTORIES)?;
            check_digest(path, &doc.spec_digest, digest)?;
            ground_all(spec, &doc.trajectories, seed)
        }
        _ => {
            let doc: GroundedDoc = read_doc(path, GROUNDED)?;
            check_digest(path, &doc.spec_digest, digest)?;
            if doc.seed != seed {
                return Err(CliError::Domain(format!(
                    "{} was grounded with layout seed {}, not {seed}",
                    path.display(),
                    doc.seed
                )));
            }
            Ok(doc.trajectories)
        }
    }
}

pub fn replay(
    spec_path: &Path,
    input: &Path,
    seed: u64,
    defects: Option<&Path>,
    out: &Path,
) -> CmdResult {
    let spec = load_valid_spec(spec_path)?;
    let digest = spec.digest();
    let grounded = load_grounded(input, &spec, &digest, seed)?;
    let defects = match defects {
        None => DefectSet::new(),
        Some(p) => {
            let v: serde_json::Value = serde_json::from_slice(&read_bytes(p)?)
                .map_err(|e| CliError::Domain(format!("{}: {e}", p.display())))?;
            DefectSet::from_json(&v)
                .map_err(|e| CliError::Domain(format!("{}: {e}", p.display())))?
        }
    };
    let model = build_page_model(&spec, seed);
    let n = grounded.len();
    let verdicts: Vec<VerdictEntry> = grounded
        .iter()
        .enumerate()
        .map(|(index, g)| VerdictEntry {
            index,
            verdict: webfsm_core::replay::replay_trajectory(g, &model, &defects),
        })
        .collect();
    let (accepted, rejected) = filter_trajectories(grounded, &model, &defects);
    if n == 0 {
        println!("accepted 0/0");
    } else {
        println!(
            "accepted {}/{n} ({:.1}%)",
            accepted.len(),
            100.0 * accepted.len() as f64 / n as f64
        );
    }
    write_json(
        &out.join("verdicts.json"),
        &VerdictsDoc {
            format_version: version(),
            kind: VERDICTS.into(),
            spec_digest: digest.clone(),
            seed,
            defects,
            accepted: accepted.len(),
            rejected: rejected.len(),
            verdicts,
        },
    )?;
    write_json(
        &out.join("rejected.json"),
        &RejectedDoc {
            format_version: version(),
            kind: REJECTED.into(),
            spec_digest: digest.clone(),
            seed,
            rejected: rejected
                .into_iter()
                .map(|(trajectory, verdict)| RejectedEntry {
                    trajectory,
                    verdict,
                })
                .collect(),
        },
    )?;
    write_json(
        &out.join("accepted.json"),
        &GroundedDoc {
            format_version: version(),
            kind: GROUNDED.into(),
            spec_digest: digest,
            seed,
            trajectories: accepted,
        },
    )
}

pub struct ExportArgs<'a> {
    pub spec: &'a Path,
    pub catalog: Option<&'a Path>,
    pub accepted: &'a Path,
    pub modes: Vec<String>,
    pub family: String,
    pub website: Option<String>,
    pub dedup: bool,
    pub out: &'a Path,
}

fn parse_family(s: &str) -> Result<Family, CliError> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| CliError::Io(format!("unknown query family `{s}`")))
}

pub fn export(a: ExportArgs) -> CmdResult {
    let family = parse_family(&a.family)?;
    check_family(family).map_err(|e| CliError::Domain(e.to_string()))?;
    let modes: BTreeSet<Mode> = if a.modes.is_empty() {
        Mode::ALL.into_iter().collect()
    } else {
        a.modes
            .iter()
            .map(|m| {
                Mode::parse(m)
                    .ok_or_else(|| CliError::Io(format!("unknown interaction mode `{m}`")))
            })
            .collect::<Result<_, _>>()?
    };
    let spec = load_valid_spec(a.spec)?;
    let catalog = load_catalog_opt(a.catalog)?;
    let digest = spec.digest();
    let doc: GroundedDoc = read_doc(a.accepted, GROUNDED)?;
    check_digest(a.accepted, &doc.spec_digest, &digest)?;
    let website = a.website.clone().unwrap_or_else(|| {
        spec.meta
            .extra
            .get("app")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .or_else(|| a.spec.file_stem().map(|s| s.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "site".into())
    });
    let mut records: Vec<TrajectoryRecord> = doc
        .trajectories
        .into_iter()
        .enumerate()
        .map(|(i, grounded)| TrajectoryRecord {
            id: format!("{website}-{i:04}"),
            website: website.clone(),
            grounded,
        })
        .collect();
    if a.dedup {
        records = dedup_per_task(records);
    }
    let queries: Vec<_> = records
        .iter()
        .flat_map(|r| instantiate_queries(r, &spec, &catalog, &modes))
        .collect();
    let dataset =
        export_dataset(&records, &queries).map_err(|e| CliError::Domain(e.to_string()))?;
    let manifest =
        build_manifest(&records, &queries).map_err(|e| CliError::Domain(e.to_string()))?;
    let bfs: Vec<(String, Vec<u8>)> = records
        .iter()
        .map(|r| (format!("{}.json", r.id), export_bfs_json(r)))
        .collect();
    replace_dir(&a.out.join("bfs"), &bfs)?;
    write_atomic(&a.out.join("dataset.jsonl"), dataset.as_bytes())?;
    write_json(
        &a.out.join("manifest.json"),
        &ManifestDoc {
            spec_digest: digest,
            manifest,
        },
    )?;
    println!(
        "exported {} trajectories, {} queries, {} dataset lines",
        records.len(),
        queries.len(),
        dataset.lines().count()
    );
    Ok(())
}

pub fn reward(batch: &Path, out: Option<&Path>) -> CmdResult {
    let text = read_text(batch)?;
    let (records, summary) = score_batch(&text);
    if let Some(out) = out {
        let mut lines = String::new();
        for r in &records {
            lines.push_str(&serde_json::to_string(r).expect("record serializes"));
            lines.push('\n');
        }
        write_atomic(&out.join("rewards.jsonl"), lines.as_bytes())?;
        let mut s = serde_json::to_value(&summary).expect("summary serializes");
        s["format_version"] = version().into();
        write_json(&out.join("summary.json"), &s)?;
    }
    for r in records.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "line {}: {}",
            r.line,
            r.error.as_deref().unwrap_or_default()
        );
    }
    match summary.means {
        None => println!("n=0 errors={} means undefined", summary.errors),
        Some([a, c, f, t]) => println!(
            "n={} errors={} r_act={a:.6} r_coord={c:.6} r_fmt={f:.6} total={t:.6}",
            summary.n, summary.errors
        ),
    }
    Ok(())
}

fn print_aggregates(m: &StatsManifest) {
    println!("trajectory_count\t{}", m.trajectory_count);
    println!("query_count\t{}", m.query_count);
    println!("total_steps\t{}", m.total_steps);
    println!("total_actions\t{}", m.total_actions);
    println!("mean_steps\t{}", m.mean_steps);
    println!("mean_actions\t{}", m.mean_actions);
    println!("max_depth\t{}", m.max_depth);
    for (k, v) in &m.per_family {
        println!("family.{k}\t{v}");
    }
    for (k, v) in &m.per_mode {
        println!("mode.{k}\t{v}");
    }
}

pub fn stats(dataset: &Path, manifest: Option<&Path>) -> CmdResult {
    let text = read_text(dataset)?;
    let lines = match parse_dataset(&text) {
        Ok(l) => l,
        Err(errors) => {
            for (line, msg) in &errors {
                eprintln!("{}:{line}: {msg}", dataset.display());
            }
            return Err(CliError::Domain(format!("{} corrupt lines", errors.len())));
        }
    };
    let recomputed = recompute_manifest(&lines);
    print_aggregates(&recomputed);
    let Some(mpath) = manifest else { return Ok(()) };
    let bytes = read_bytes(mpath)?;
    let doc: ManifestDoc = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Domain(format!("{}: {e}", mpath.display())))?;
    let diff = manifest_diff(&doc.manifest, &recomputed);
    if diff.is_empty() {
        println!("manifest consistent");
        Ok(())
    } else {
        Err(CliError::Domain(format!(
            "{} disagrees with the dataset on: {}",
            mpath.display(),
            diff.join(", ")
        )))
    }
}
