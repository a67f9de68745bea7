use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use proptest::prelude::*;
use uptodate::harness::{load_records, run_experiment_with, RunOptions, RunSummary};
use uptodate::{run_experiment, ExperimentConfig, HarnessError};
use uptodate_core::ScenarioId;

fn config(dir: &Path, s: ScenarioId, name: &str, rounds: u32) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(s, dir.join(name));
    cfg.rounds = rounds;
    cfg
}

fn run_limited(cfg: &ExperimentConfig, limit: usize) -> RunSummary {
    let opts = RunOptions { resume: true, cell_limit: Some(limit), jobs: 1 };
    run_experiment_with(cfg, opts, &mut |_| {}).unwrap()
}

fn distinct_cells(path: &Path) -> (usize, usize) {
    let records = load_records(path).unwrap();
    let cells: BTreeSet<(String, u32)> = records.iter().map(|r| (r.method.clone(), r.round_index)).collect();
    (records.len(), cells.len())
}

#[test]
fn one_round_writes_one_completed_record_per_method() {
    let dir = tempfile::tempdir().unwrap();
    for s in ScenarioId::ALL {
        let cfg = config(dir.path(), s, &format!("{s}.ndjson"), 1);
        run_experiment(&cfg, true).unwrap();
        let records = load_records(&cfg.out).unwrap();
        assert_eq!(records.len(), s.methods().len());
        assert!(records.iter().all(|r| r.completed && r.seed == 7 && r.round_index == 0));
    }
}

#[test]
fn every_scenario_resumes_to_the_same_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    for s in ScenarioId::ALL {
        let whole = run_experiment(&config(dir.path(), s, &format!("{s}-whole"), 3), true).unwrap();
        let cfg = config(dir.path(), s, &format!("{s}-split"), 3);
        let partial = run_limited(&cfg, 5);
        assert!(!partial.finished);
        assert_eq!(partial.appended, 5);
        let resumed = run_experiment(&cfg, true).unwrap();
        assert_eq!(resumed, whole, "{s}");
        let n = s.methods().len() * 3;
        assert_eq!(distinct_cells(&cfg.out), (n, n));
    }
}

#[test]
fn rerunning_a_finished_experiment_appends_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), ScenarioId::Routine, "r.ndjson", 4);
    run_experiment(&cfg, true).unwrap();
    let before = fs::read(&cfg.out).unwrap();
    let again = run_experiment_with(&cfg, RunOptions::default(), &mut |_| {}).unwrap();
    assert_eq!((again.appended, again.skipped), (0, 16));
    assert_eq!(fs::read(&cfg.out).unwrap(), before);
}

#[test]
fn thirty_round_routine_proposed_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), ScenarioId::Routine, "r.ndjson", 30);
    let t = run_experiment(&cfg, true).unwrap();
    let row = t.row("proposed").unwrap();
    assert_eq!(row.rounds, 30);
    assert_eq!(row.mean["succ"], 1.0);
    assert_eq!(row.mean["len"], 4.0);
    assert!((row.mean["time"] - 5.0).abs() < 0.5);
    assert_eq!(format!("{:.3}", row.mean["comp"]), "0.692");
    assert_eq!(row.mean["fail"], 0.0);
    assert_eq!(load_records(&cfg.out).unwrap().len(), 120);
}

#[test]
fn incomplete_records_are_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), ScenarioId::Evidence, "e.ndjson", 2);
    let whole = run_experiment(&config(dir.path(), ScenarioId::Evidence, "w.ndjson", 2), true).unwrap();
    run_limited(&cfg, 1);
    let text = fs::read_to_string(&cfg.out).unwrap();
    let mut rec: uptodate::RoundRecord = serde_json::from_str(text.trim()).unwrap();
    rec.metrics.remove("scope");
    rec.completed = false;
    fs::write(&cfg.out, rec.to_line()).unwrap();
    assert_eq!(run_experiment(&cfg, true).unwrap(), whole);
}

#[test]
fn corrupt_middle_line_aborts_with_its_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), ScenarioId::Routine, "r.ndjson", 2);
    run_limited(&cfg, 3);
    let lines: Vec<String> = fs::read_to_string(&cfg.out).unwrap().lines().map(String::from).collect();
    let damaged = format!("{}\n{{oops\n{}\n", lines[0], lines[1..].join("\n"));
    fs::write(&cfg.out, &damaged).unwrap();
    match run_experiment(&cfg, true) {
        Err(HarnessError::CorruptResultsFile { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    assert_eq!(fs::read_to_string(&cfg.out).unwrap(), damaged);
}

#[test]
fn foreign_records_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), ScenarioId::Routine, "r.ndjson", 2);
    run_limited(&cfg, 2);
    cfg.base_seed = 8;
    assert!(matches!(run_experiment(&cfg, true), Err(HarnessError::SeedMismatch { .. })));
    let mut other = config(dir.path(), ScenarioId::Evidence, "r.ndjson", 2);
    other.base_seed = 7;
    assert!(matches!(run_experiment(&other, true), Err(HarnessError::MixedScenarios { .. })));
}

#[test]
fn no_resume_starts_over() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), ScenarioId::Routine, "r.ndjson", 2);
    run_experiment(&cfg, true).unwrap();
    let s = run_experiment_with(&cfg, RunOptions { resume: false, ..RunOptions::default() }, &mut |_| {}).unwrap();
    assert_eq!(s.appended, 8);
    assert_eq!(distinct_cells(&cfg.out), (8, 8));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let serial = config(dir.path(), ScenarioId::Openset, "a.ndjson", 3);
    let parallel = config(dir.path(), ScenarioId::Openset, "b.ndjson", 3);
    let a = run_experiment_with(&serial, RunOptions { jobs: 1, ..RunOptions::default() }, &mut |_| {}).unwrap();
    let b = run_experiment_with(&parallel, RunOptions { jobs: 4, ..RunOptions::default() }, &mut |_| {}).unwrap();
    assert_eq!(a.table, b.table);
}

#[test]
fn overrides_reach_the_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), ScenarioId::Routine, "r.ndjson", 2);
    cfg.methods = vec!["random".into()];
    cfg.overrides.routine.trial_budget = 1;
    let t = run_experiment(&cfg, true).unwrap();
    // One trial per round: time is at most one trial.
    assert!(t.value("random", "time").unwrap() <= 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Any sequence of interruptions, with or without a torn trailing
    /// fragment, ends in the uninterrupted aggregate and an append-only file.
    #[test]
    fn interrupted_runs_converge(
        evidence in any::<bool>(),
        rounds in 1u32..4,
        cuts in prop::collection::vec((0usize..6, any::<bool>()), 0..4),
    ) {
        let s = if evidence { ScenarioId::Evidence } else { ScenarioId::Routine };
        let dir = tempfile::tempdir().unwrap();
        let whole = run_experiment(&config(dir.path(), s, "whole", rounds), true).unwrap();
        let cfg = config(dir.path(), s, "split", rounds);
        for (limit, tear) in cuts {
            let before = fs::read(&cfg.out).unwrap_or_default();
            run_limited(&cfg, limit);
            let after = fs::read(&cfg.out).unwrap();
            let kept = before.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
            prop_assert_eq!(&after[..kept], &before[..kept]);
            if tear {
                let mut torn = after;
                torn.extend_from_slice(b"{\"scenario\":\"rou");
                fs::write(&cfg.out, torn).unwrap();
            }
        }
        prop_assert_eq!(run_experiment(&cfg, true).unwrap(), whole);
        let n = s.methods().len() * rounds as usize;
        prop_assert_eq!(distinct_cells(&cfg.out), (n, n));
    }
}
