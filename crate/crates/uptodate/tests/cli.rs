use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn uptodate(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uptodate"))
        .args(args)
        .current_dir(cwd)
        .env_remove("UPTODATE_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn run_writes_every_cell_and_rerun_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["run", "--scenario", "routine", "--rounds", "30", "--seed", "7", "--out", "results.ndjson"];
    let first = uptodate(&args, dir.path());
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    assert_eq!(line_count(&dir.path().join("results.ndjson")), 120);
    assert!(stdout(&first).starts_with("Method"));
    let before = fs::read(dir.path().join("results.ndjson")).unwrap();

    let second = uptodate(&args, dir.path());
    assert_eq!(second.status.code(), Some(0));
    assert!(stderr(&second).contains("0 cells run, 120 already complete"));
    assert_eq!(fs::read(dir.path().join("results.ndjson")).unwrap(), before);
}

#[test]
fn quiet_run_prints_nothing_on_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let o = uptodate(&["run", "--scenario", "evidence", "--rounds", "1", "--quiet", "--out", "e.ndjson"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).is_empty());
    assert!(!stderr(&o).is_empty());
}

#[test]
fn feature_run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = uptodate(&["run", "--scenario", "feature", "--rounds", "30", "--quiet", "--out", "f.ndjson"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rep = uptodate(&["report", "--out", "f.ndjson", "--csv"], dir.path());
    assert_eq!(rep.status.code(), Some(0));
    let text = stdout(&rep);
    assert_eq!(text.lines().next(), Some("method,acc,disc,false,steps"));
    let proposed = text.lines().find(|l| l.starts_with("proposed,")).unwrap();
    let acc: f64 = proposed.split(',').nth(1).unwrap().parse().unwrap();
    assert!((0.795..=0.895).contains(&acc), "{acc}");
}

#[test]
fn closed_set_only_report_is_a_zero_row() {
    let dir = tempfile::tempdir().unwrap();
    let o = uptodate(
        &["run", "--scenario", "openset", "--methods", "closed_set", "--rounds", "2", "--quiet", "--out", "o.ndjson"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = stdout(&uptodate(&["report", "--out", "o.ndjson", "--csv"], dir.path()));
    assert_eq!(csv, "method,unk,new,false,model,forget\nclosed_set,0.000,0.000,0.000,0.000,0.000\n");
    let text = stdout(&uptodate(&["report", "--out", "o.ndjson"], dir.path()));
    assert_eq!(text.lines().nth(1), Some("Closed-set  0.000  0.000  0.000  0.000   0.000"));
}

#[test]
fn report_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.ndjson"), "").unwrap();
    let o = uptodate(&["report", "--out", "empty.ndjson"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty.ndjson"));

    let o = uptodate(&["report", "--out", "missing.ndjson"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.ndjson"));

    fs::write(dir.path().join("bad.ndjson"), "{\"x\":1}\n").unwrap();
    let o = uptodate(&["report", "--out", "bad.ndjson"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.ndjson:1"), "{}", stderr(&o));
}

#[test]
fn report_does_not_touch_the_results_file() {
    let dir = tempfile::tempdir().unwrap();
    uptodate(&["run", "--scenario", "routine", "--rounds", "2", "--quiet", "--out", "r.ndjson"], dir.path());
    let path = dir.path().join("r.ndjson");
    let mut bytes = fs::read(&path).unwrap();
    bytes.extend_from_slice(b"{\"scen");
    fs::write(&path, &bytes).unwrap();
    assert_eq!(uptodate(&["report", "--out", "r.ndjson"], dir.path()).status.code(), Some(0));
    assert_eq!(uptodate(&["plot", "--out", "r.ndjson", "--plot-dir", "p"], dir.path()).status.code(), Some(0));
    assert_eq!(fs::read(&path).unwrap(), bytes);
}

#[test]
fn plot_writes_deterministic_svgs() {
    let dir = tempfile::tempdir().unwrap();
    uptodate(&["run", "--scenario", "routine", "--rounds", "3", "--quiet", "--out", "r.ndjson"], dir.path());
    let o = uptodate(&["plot", "--out", "r.ndjson", "--plot-dir", "a"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    uptodate(&["plot", "--out", "r.ndjson", "--plot-dir", "b"], dir.path());
    for f in ["routine_success_length.svg", "routine_compression.svg"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(f)).unwrap());
        assert!(a.starts_with(b"<svg xmlns=\"http://www.w3.org/2000/svg\""));
    }
}

#[test]
fn plot_into_unwritable_location_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    uptodate(&["run", "--scenario", "evidence", "--rounds", "1", "--quiet", "--out", "e.ndjson"], dir.path());
    fs::write(dir.path().join("blocker"), "").unwrap();
    let o = uptodate(&["plot", "--out", "e.ndjson", "--plot-dir", "blocker/sub"], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let o = uptodate(&["plot", "--out", "nothing.ndjson"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn routine_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let o = uptodate(&["oracle", "--scenario", "routine", "--max-len", "4"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "4 power_on,press_program,press_program,confirm\n");
    let o = uptodate(&["oracle", "--scenario", "routine", "--max-len", "3"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let o = uptodate(&["oracle", "--scenario", "routine", "--max-len", "9"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn feature_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let o = uptodate(&["oracle", "--scenario", "feature", "--features", "shape,size"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!((0.40..=0.45).contains(&v));
    let v: f64 = stdout(&uptodate(&["oracle", "--scenario", "feature", "--features", "shape,size,color"], dir.path()))
        .trim()
        .parse()
        .unwrap();
    assert!((0.82..=0.87).contains(&v));
    for bad in [
        &["oracle", "--scenario", "feature"][..],
        &["oracle", "--scenario", "feature", "--features", "smell"],
        &["oracle", "--scenario", "feature", "--features", "shape", "--max-len", "4"],
        &["oracle", "--scenario", "openset"],
    ] {
        assert_eq!(uptodate(bad, dir.path()).status.code(), Some(2), "{bad:?}");
    }
}

#[test]
fn seed_precedence_flag_then_env() {
    let dir = tempfile::tempdir().unwrap();
    let run = |extra: &[&str], env: Option<&str>, out: &str| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_uptodate"));
        cmd.args(["run", "--scenario", "routine", "--methods", "fixed", "--rounds", "2", "--quiet", "--out", out])
            .args(extra)
            .current_dir(dir.path())
            .env_remove("UPTODATE_SEED");
        if let Some(v) = env {
            cmd.env("UPTODATE_SEED", v);
        }
        assert_eq!(cmd.output().unwrap().status.code(), Some(0));
        let text = fs::read_to_string(dir.path().join(out)).unwrap();
        text.lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["seed"].as_u64().unwrap())
            .collect::<Vec<u64>>()
    };
    assert_eq!(run(&[], None, "a"), [7, 8]);
    assert_eq!(run(&[], Some("100"), "b"), [100, 101]);
    assert_eq!(run(&["--seed", "5"], Some("100"), "c"), [5, 6]);
}

#[test]
fn invalid_invocations_fail_before_side_effects() {
    let dir = tempfile::tempdir().unwrap();
    for bad in [
        &["run", "--scenario", "routine", "--resume", "--no-resume", "--out", "x.ndjson"][..],
        &["run", "--scenario", "routine", "--rounds", "0", "--out", "x.ndjson"],
        &["run", "--scenario", "weather", "--out", "x.ndjson"],
        &["run", "--scenario", "routine", "--methods", "closed_set", "--out", "x.ndjson"],
        &["run", "--out", "x.ndjson"],
        &["report", "--features", "shape"],
        &[],
    ] {
        let o = uptodate(bad, dir.path());
        assert_eq!(o.status.code(), Some(2), "{bad:?}");
        assert!(!dir.path().join("x.ndjson").exists(), "{bad:?}");
    }
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_uptodate"));
    let o = cmd
        .args(["run", "--scenario", "routine", "--out", "x.ndjson"])
        .env("UPTODATE_SEED", "abc")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("x.ndjson").exists());
}

#[test]
fn config_file_drives_the_run() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("exp.toml"),
        "scenario = \"routine\"\nmethods = [\"proposed\"]\nrounds = 2\nbase_seed = 40\nout = \"cfg.ndjson\"\n",
    )
    .unwrap();
    let o = uptodate(&["run", "--config", "exp.toml", "--quiet"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("cfg.ndjson")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.contains("\"seed\":40") && text.contains("\"seed\":41"));

    fs::write(dir.path().join("typo.toml"), "scenario = \"routine\"\nrundz = 2\n").unwrap();
    let o = uptodate(&["run", "--config", "typo.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rundz"));
}

#[test]
fn help_and_version_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let o = uptodate(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    for sub in ["run", "report", "plot", "oracle"] {
        assert!(stdout(&o).contains(sub));
    }
    assert_eq!(uptodate(&["--version"], dir.path()).status.code(), Some(0));
}
