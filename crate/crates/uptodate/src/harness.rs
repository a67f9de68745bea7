//! Resumable (scenario × method × round) runner over an NDJSON results file.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use uptodate_core::scenario::{run_method, MetricMap};
use uptodate_core::ScenarioId;

use crate::config::ExperimentConfig;
use crate::error::HarnessError;

/// One line of the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundRecord {
    pub scenario: ScenarioId,
    pub method: String,
    pub round_index: u32,
    pub seed: u64,
    pub metrics: MetricMap,
    pub completed: bool,
    pub wall_time_ms: u64,
}

impl RoundRecord {
    /// Builds a record whose `completed` flag reflects whether every metric
    /// of the scenario is present and finite.
    pub fn new(
        scenario: ScenarioId,
        method: &str,
        round_index: u32,
        seed: u64,
        metrics: MetricMap,
        wall_time_ms: u64,
    ) -> Self {
        let completed = has_all_metrics(scenario, &metrics);
        RoundRecord {
            scenario,
            method: method.to_owned(),
            round_index,
            seed,
            metrics,
            completed,
            wall_time_ms,
        }
    }

    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("record serializes");
        line.push('\n');
        line
    }
}

fn has_all_metrics(scenario: ScenarioId, metrics: &MetricMap) -> bool {
    scenario
        .metrics()
        .iter()
        .all(|k| metrics.get(*k).is_some_and(|v| v.is_finite()))
}

/// Records recovered from a results file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedResults {
    /// Each record with its 1-based line number.
    pub records: Vec<(usize, RoundRecord)>,
    /// Byte length of the well-formed prefix. Shorter than the input only
    /// when the last line is an unterminated fragment left by a crash.
    pub valid_len: usize,
}

/// Parses NDJSON results. Blank lines are skipped; an unparseable line is
/// an error unless it is the final, unterminated one.
pub fn parse_results(text: &str, path: &Path) -> Result<ParsedResults, HarnessError> {
    let mut out = ParsedResults::default();
    let mut offset = 0;
    for (idx, raw) in text.split_inclusive('\n').enumerate() {
        let line_no = idx + 1;
        let terminated = raw.ends_with('\n');
        let body = raw.trim();
        if body.is_empty() {
            offset += raw.len();
            continue;
        }
        match serde_json::from_str::<RoundRecord>(body) {
            Ok(rec) => {
                if rec.completed && !has_all_metrics(rec.scenario, &rec.metrics) {
                    return Err(HarnessError::CorruptResultsFile {
                        path: path.to_path_buf(),
                        line: line_no,
                        message: "marked completed but metrics are missing".into(),
                    });
                }
                if !terminated {
                    // Complete JSON without its newline: keep it, the writer
                    // adds the separator before appending.
                    out.records.push((line_no, rec));
                    offset += raw.len();
                    break;
                }
                out.records.push((line_no, rec));
            }
            Err(_) if !terminated => break,
            Err(e) => {
                return Err(HarnessError::CorruptResultsFile {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: e.to_string(),
                })
            }
        }
        offset += raw.len();
    }
    out.valid_len = offset;
    Ok(out)
}

/// Reads every record of a results file (used by report and plot).
pub fn load_records(path: &Path) -> Result<Vec<RoundRecord>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let parsed = parse_results(&text, path)?;
    if parsed.records.is_empty() {
        return Err(HarnessError::EmptyResults { path: path.to_path_buf() });
    }
    Ok(parsed.records.into_iter().map(|(_, r)| r).collect())
}

/// Per-method means and standard deviations in table row order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateTable {
    pub scenario: ScenarioId,
    pub rows: Vec<AggregateRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub method: String,
    /// Distinct completed cells that entered the means.
    pub rounds: usize,
    pub mean: MetricMap,
    pub std_dev: MetricMap,
}

/// Extra routine column: mean length over rounds that succeeded.
pub const LEN_SUCC: &str = "len_succ";

impl AggregateTable {
    pub fn row(&self, method: &str) -> Option<&AggregateRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn value(&self, method: &str, metric: &str) -> Option<f64> {
        self.row(method)?.mean.get(metric).copied()
    }
}

/// Means over completed records, one row per method present, ordered as
/// in [`ScenarioId::methods`]. Duplicate cells (same method, round and
/// seed) count once, and sums run in round order so the result does not
/// depend on line order.
pub fn aggregate(records: &[RoundRecord]) -> Result<AggregateTable, HarnessError> {
    let scenario = match records.first() {
        Some(r) => r.scenario,
        None => return Err(HarnessError::InvalidExperiment("no records to aggregate".into())),
    };
    for r in records {
        if r.scenario != scenario {
            return Err(HarnessError::MixedScenarios { expected: scenario, found: r.scenario });
        }
        if !scenario.methods().contains(&r.method.as_str()) {
            return Err(HarnessError::UnknownRecordMethod { scenario, method: r.method.clone() });
        }
    }
    let mut rows = Vec::new();
    for method in scenario.methods() {
        let mut cells: Vec<&RoundRecord> = records
            .iter()
            .filter(|r| r.completed && r.method == *method)
            .collect();
        cells.sort_by_key(|r| (r.round_index, r.seed));
        cells.dedup_by_key(|r| (r.round_index, r.seed));
        if cells.is_empty() {
            continue;
        }
        let mut mean = MetricMap::new();
        let mut std_dev = MetricMap::new();
        for metric in scenario.metrics() {
            let values: Vec<f64> = cells.iter().map(|r| r.metrics[*metric]).collect();
            let (m, s) = mean_std(&values);
            mean.insert((*metric).to_owned(), m);
            std_dev.insert((*metric).to_owned(), s);
        }
        if scenario == ScenarioId::Routine {
            let lens: Vec<f64> = cells
                .iter()
                .filter(|r| r.metrics["succ"] >= 0.5)
                .map(|r| r.metrics["len"])
                .collect();
            if !lens.is_empty() {
                let (m, s) = mean_std(&lens);
                mean.insert(LEN_SUCC.to_owned(), m);
                std_dev.insert(LEN_SUCC.to_owned(), s);
            }
        }
        rows.push(AggregateRow { method: (*method).to_owned(), rounds: cells.len(), mean, std_dev });
    }
    Ok(AggregateTable { scenario, rows })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep existing records and run only missing cells; otherwise the
    /// results file is truncated first.
    pub resume: bool,
    /// Stop after executing this many cells, as if the process died.
    pub cell_limit: Option<usize>,
    /// Worker threads; 0 means one per available core.
    pub jobs: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { resume: true, cell_limit: None, jobs: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub appended: usize,
    pub skipped: usize,
    /// Every requested cell has a completed record.
    pub finished: bool,
    pub table: Option<AggregateTable>,
}

/// Runs every missing cell and returns the aggregate over the requested
/// methods and rounds.
pub fn run_experiment(config: &ExperimentConfig, resume: bool) -> Result<AggregateTable, HarnessError> {
    let opts = RunOptions { resume, ..RunOptions::default() };
    let summary = run_experiment_with(config, opts, &mut |_| {})?;
    Ok(summary.table.expect("a finished run has records"))
}

#[derive(Debug, Clone)]
struct Cell {
    method: String,
    round: u32,
    seed: u64,
}

pub fn run_experiment_with(
    config: &ExperimentConfig,
    opts: RunOptions,
    progress: &mut dyn FnMut(&RoundRecord),
) -> Result<RunSummary, HarnessError> {
    config.validate()?;
    let path = config.out.as_path();
    let existing = if opts.resume { load_for_resume(config)? } else { Vec::new() };

    let done: BTreeSet<(String, u32)> = existing
        .iter()
        .filter(|r| r.completed)
        .map(|r| (r.method.clone(), r.round_index))
        .collect();
    let mut pending = Vec::new();
    for method in &config.methods {
        for round in 0..config.rounds {
            if !done.contains(&(method.clone(), round)) {
                pending.push(Cell { method: method.clone(), round, seed: config.seed_for(round) });
            }
        }
    }
    let skipped = config.methods.len() * config.rounds as usize - pending.len();

    let mut file = open_for_append(path, opts.resume)?;
    let budget = opts.cell_limit.map_or(pending.len(), |l| l.min(pending.len()));
    let mut appended = 0;
    execute_cells(config, &pending[..budget], opts.jobs, &mut |rec| {
        file.write_all(rec.to_line().as_bytes())
            .and_then(|_| file.flush())
            .map_err(|source| HarnessError::Write { path: path.to_path_buf(), source })?;
        appended += 1;
        progress(&rec);
        Ok(())
    })?;
    drop(file);

    let finished = budget == pending.len();
    let records: Vec<RoundRecord> = load_records_or_empty(path)?
        .into_iter()
        .filter(|r| config.methods.contains(&r.method) && r.round_index < config.rounds)
        .collect();
    let table = if records.is_empty() { None } else { Some(aggregate(&records)?) };
    Ok(RunSummary { appended, skipped, finished, table })
}

fn load_records_or_empty(path: &Path) -> Result<Vec<RoundRecord>, HarnessError> {
    let text = read_if_exists(path)?;
    Ok(parse_results(&text, path)?.records.into_iter().map(|(_, r)| r).collect())
}

fn read_if_exists(path: &Path) -> Result<String, HarnessError> {
    match fs::read_to_string(path) {
        Ok(t) => Ok(t),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(String::new()),
        Err(source) => Err(HarnessError::Read { path: path.to_path_buf(), source }),
    }
}

/// Parses the existing file, drops a torn trailing fragment and checks the
/// records belong to this experiment.
fn load_for_resume(config: &ExperimentConfig) -> Result<Vec<RoundRecord>, HarnessError> {
    let path = config.out.as_path();
    let text = read_if_exists(path)?;
    let parsed = parse_results(&text, path)?;
    if parsed.valid_len < text.len() {
        let f = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|source| HarnessError::Write { path: path.to_path_buf(), source })?;
        f.set_len(parsed.valid_len as u64)
            .map_err(|source| HarnessError::Write { path: path.to_path_buf(), source })?;
    }
    let mut out = Vec::with_capacity(parsed.records.len());
    for (line, rec) in parsed.records {
        if rec.scenario != config.scenario {
            return Err(HarnessError::MixedScenarios { expected: config.scenario, found: rec.scenario });
        }
        let expected = config.seed_for(rec.round_index);
        if rec.seed != expected {
            return Err(HarnessError::SeedMismatch {
                path: path.to_path_buf(),
                line,
                round: rec.round_index,
                found: rec.seed,
                expected,
            });
        }
        out.push(rec);
    }
    Ok(out)
}

fn open_for_append(path: &Path, resume: bool) -> Result<File, HarnessError> {
    let wrap = |source| HarnessError::Write { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(wrap)?;
    }
    let mut file = if resume {
        OpenOptions::new().create(true).append(true).read(true).open(path).map_err(wrap)?
    } else {
        File::create(path).map_err(wrap)?
    };
    if resume && needs_separator(path).map_err(wrap)? {
        file.write_all(b"\n").map_err(wrap)?;
    }
    Ok(file)
}

fn needs_separator(path: &Path) -> io::Result<bool> {
    let bytes = fs::read(path)?;
    Ok(bytes.last().is_some_and(|b| *b != b'\n'))
}

fn run_cell(config: &ExperimentConfig, cell: &Cell) -> Result<RoundRecord, HarnessError> {
    let start = Instant::now();
    let metrics = run_method(config.scenario, &cell.method, &config.overrides, cell.seed).map_err(
        |source| HarnessError::Scenario {
            scenario: config.scenario,
            method: cell.method.clone(),
            round: cell.round,
            source,
        },
    )?;
    let ms = u64::try_from(start.elapsed().as_millis()).unwrap_or(u64::MAX);
    Ok(RoundRecord::new(config.scenario, &cell.method, cell.round, cell.seed, metrics, ms))
}

/// Runs cells on worker threads and hands each finished record to `sink`
/// on the calling thread, which is the only writer.
fn execute_cells(
    config: &ExperimentConfig,
    cells: &[Cell],
    jobs: usize,
    sink: &mut dyn FnMut(RoundRecord) -> Result<(), HarnessError>,
) -> Result<(), HarnessError> {
    let jobs = match jobs {
        0 => thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(cells.len().max(1));
    if jobs == 1 {
        for cell in cells {
            sink(run_cell(config, cell)?)?;
        }
        return Ok(());
    }

    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel();
    let mut first_err = None;
    thread::scope(|s| {
        for _ in 0..jobs {
            let tx = tx.clone();
            let (next, stop) = (&next, &stop);
            s.spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(cell) = cells.get(i) else { break };
                    if tx.send(run_cell(config, cell)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);
        for res in rx {
            if first_err.is_some() {
                continue;
            }
            if let Err(e) = res.and_then(&mut *sink) {
                stop.store(true, Ordering::Relaxed);
                first_err = Some(e);
            }
        }
    });
    first_err.map_or(Ok(()), Err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(method: &str, round: u32, value: f64) -> RoundRecord {
        let metrics = ScenarioId::Evidence
            .metrics()
            .iter()
            .map(|k| ((*k).to_owned(), value))
            .collect();
        RoundRecord::new(ScenarioId::Evidence, method, round, 7 + u64::from(round), metrics, 1)
    }

    #[test]
    fn single_record_aggregates_to_itself() {
        let r = rec("proposed", 0, 0.25);
        let t = aggregate(std::slice::from_ref(&r)).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.rows[0].mean, r.metrics);
        assert_eq!(t.rows[0].std_dev["useful"], 0.0);
    }

    #[test]
    fn zero_and_one_average_to_half() {
        let t = aggregate(&[rec("proposed", 0, 0.0), rec("proposed", 1, 1.0)]).unwrap();
        assert_eq!(t.value("proposed", "cost"), Some(0.5));
    }

    #[test]
    fn rows_follow_table_order_and_skip_incomplete() {
        let mut partial = rec("memory_only", 0, 1.0);
        partial.metrics.remove("scope");
        partial.completed = false;
        let t = aggregate(&[rec("proposed", 0, 1.0), partial, rec("no_improvement", 0, 0.0)]).unwrap();
        let order: Vec<&str> = t.rows.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(order, ["no_improvement", "proposed"]);
    }

    #[test]
    fn duplicate_cells_count_once() {
        let t = aggregate(&[rec("proposed", 0, 0.0), rec("proposed", 0, 0.0), rec("proposed", 1, 1.0)]).unwrap();
        assert_eq!(t.rows[0].rounds, 2);
        assert_eq!(t.value("proposed", "useful"), Some(0.5));
    }

    #[test]
    fn mixed_scenarios_are_rejected() {
        let mut other = rec("proposed", 0, 0.0);
        other.scenario = ScenarioId::Feature;
        other.method = "proposed".into();
        assert!(matches!(
            aggregate(&[rec("proposed", 0, 0.0), other]),
            Err(HarnessError::MixedScenarios { .. })
        ));
    }

    #[test]
    fn completed_flag_tracks_metric_presence() {
        let r = rec("proposed", 0, 0.5);
        assert!(r.completed);
        let mut m = r.metrics.clone();
        m.remove("think");
        assert!(!RoundRecord::new(ScenarioId::Evidence, "proposed", 0, 7, m, 0).completed);
    }

    #[test]
    fn record_json_has_exact_field_order() {
        let line = rec("proposed", 2, 0.1).to_line();
        let keys = ["scenario", "method", "round_index", "seed", "metrics", "completed", "wall_time_ms"];
        let mut at = 0;
        for k in keys {
            let pos = line[at..].find(&format!("\"{k}\":")).expect(k) + at;
            at = pos;
        }
        assert!(line.starts_with("{\"scenario\":\"evidence\",\"method\":\"proposed\""));
        assert!(line.ends_with("}\n"));
    }

    #[test]
    fn floats_round_trip_exactly() {
        let r = rec("proposed", 0, 0.1 + 0.2);
        let back: RoundRecord = serde_json::from_str(r.to_line().trim()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn torn_tail_is_dropped_but_mid_file_garbage_is_an_error() {
        let p = Path::new("r.ndjson");
        let good = rec("proposed", 0, 0.5).to_line();
        let text = format!("{good}{good}{{\"scenario\":\"ev");
        let parsed = parse_results(&text, p).unwrap();
        assert_eq!(parsed.records.len(), 2);
        assert_eq!(parsed.valid_len, 2 * good.len());

        let text = format!("{good}not json\n{good}");
        match parse_results(&text, p) {
            Err(HarnessError::CorruptResultsFile { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unterminated_complete_record_is_kept() {
        let good = rec("proposed", 0, 0.5).to_line();
        let parsed = parse_results(good.trim_end(), Path::new("r")).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.valid_len, good.len() - 1);
    }
}
