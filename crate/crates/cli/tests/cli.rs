use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn masv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_masv"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn check_valid_fixtures() {
    for f in ["tower.masv", "coffee.masv", "patrol.masv", "patrol_small.masv"] {
        let o = masv(&["check", s(&fixture(f))]);
        assert_eq!(code(&o), 0, "{f}: {}", text(&o.stderr));
        assert!(text(&o.stdout).starts_with("ok:"));
    }
}

#[test]
fn check_unstratifiable() {
    let o = masv(&["check", s(&fixture("unstratified.masv"))]);
    assert_eq!(code(&o), 1);
    assert!(text(&o.stderr).contains("negative cycle p -> r -> p"));
}

#[test]
fn check_missing_file() {
    assert_eq!(code(&masv(&["check", "/nonexistent/spec.masv"])), 2);
}

#[test]
fn check_reports_located_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.masv");
    fs::write(&bad, "system { domains { o = {a}; } actions { } rules { } }\nagent r1 { beliefs { p(b). } goals { } }\n").unwrap();
    let o = masv(&["check", s(&bad)]);
    assert_eq!(code(&o), 1);
    let err = text(&o.stderr);
    assert!(err.contains("bad.masv:2:"), "{err}");
    assert!(err.contains("undeclared constant `b`"), "{err}");
}

#[test]
fn compile_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = masv(&["compile", s(&fixture("tower.masv")), "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    assert_eq!(text(&o.stdout), "states 5\ntransitions 7\n");
    for f in ["ts.json", "model.prism", "props.pctl"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let props = fs::read_to_string(dir.path().join("props.pctl")).unwrap();
    assert!(props.contains("Pmax=? [ F !\"safe\" ]"));
}

#[test]
fn compile_bound_exceeded() {
    let dir = tempfile::tempdir().unwrap();
    let o = masv(&["compile", s(&fixture("tower.masv")), "--out", s(dir.path()), "--max-states", "1"]);
    assert_eq!(code(&o), 3);
    assert!(text(&o.stderr).contains("max-states bound of 1 exceeded after exploring 1 states"));
    let o = masv(&["compile", s(&fixture("tower.masv")), "--out", s(dir.path()), "--max-depth", "1"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn compile_unwritable_out() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain");
    fs::write(&file, "").unwrap();
    let o = masv(&["compile", s(&fixture("tower.masv")), "--out", s(&file.join("sub"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn compile_matches_oracle() {
    for f in ["tower.masv", "coffee.masv"] {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(code(&masv(&["compile", s(&fixture(f)), "--out", s(dir.path())])), 0);
        assert_eq!(code(&masv(&["oracle", s(&fixture(f)), "--out", s(dir.path())])), 0);
        let ours = fs::read(dir.path().join("ts.json")).unwrap();
        let oracle = fs::read(dir.path().join("ts.oracle.json")).unwrap();
        assert_eq!(ours, oracle, "{f}");
    }
}

#[test]
fn oracle_single_state() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("one.masv");
    fs::write(&spec, "system { domains { o = {a}; } actions { } rules { } }\nagent r1 { beliefs { p(a). } goals { } }\n").unwrap();
    assert_eq!(code(&masv(&["compile", s(&spec), "--out", s(dir.path())])), 0);
    let o = masv(&["oracle", s(&spec), "--out", s(dir.path())]);
    assert_eq!(text(&o.stdout), "states 1\ntransitions 1\n");
    assert_eq!(
        fs::read(dir.path().join("ts.json")).unwrap(),
        fs::read(dir.path().join("ts.oracle.json")).unwrap()
    );
}

#[test]
fn oracle_cap_exceeded() {
    let dir = tempfile::tempdir().unwrap();
    let o = masv(&["oracle", s(&fixture("patrol.masv")), "--out", s(dir.path())]);
    assert_eq!(code(&o), 3);
    assert!(text(&o.stderr).contains("cap of 2000"));
}

#[test]
fn run_tower_golden_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.ndjson");
    let o = masv(&["run", s(&fixture("tower.masv")), "--seed", "42", "--trace", s(&trace)]);
    assert_eq!(code(&o), 0, "{}", text(&o.stderr));
    assert_eq!(text(&o.stdout), "steps 6\ncommits 3\nrejections 0\nviolations 0\n");
    let golden = fs::read_to_string(fixture("golden/tower_seed42.ndjson")).unwrap();
    assert_eq!(fs::read_to_string(&trace).unwrap(), golden);
}

#[test]
fn run_dispatches_actions() {
    let dir = tempfile::tempdir().unwrap();
    let actions = dir.path().join("actions.ndjson");
    let o = masv(&[
        "run",
        s(&fixture("tower.masv")),
        "--trace",
        s(&dir.path().join("t.ndjson")),
        "--actions",
        s(&actions),
    ]);
    assert_eq!(code(&o), 0);
    let lines: Vec<serde_json::Value> = fs::read_to_string(&actions)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["action"], "move(c,table)");
    assert_eq!(lines[0]["agent"], "builder");
    assert_eq!(lines[0]["step"], 1);
}

#[test]
fn run_unsafe_injection() {
    let dir = tempfile::tempdir().unwrap();
    let o = masv(&[
        "run",
        s(&fixture("patrol_small.masv")),
        "--scenario",
        s(&fixture("scenarios/hazard.ndjson")),
        "--conversions",
        s(&fixture("scenarios/conversions.toml")),
        "--trace",
        s(&dir.path().join("t.ndjson")),
    ]);
    assert_eq!(code(&o), 4, "{}", text(&o.stderr));
    let out = text(&o.stdout);
    assert!(out.contains("step 1 rejected step(c0) (r1): constraint 0 violated by r1 with {C=c1}"), "{out}");
}

#[test]
fn run_zero_steps() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.ndjson");
    let o = masv(&["run", s(&fixture("tower.masv")), "--steps", "0", "--trace", s(&trace)]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(&trace).unwrap(), b"");
}

#[test]
fn run_unwritable_trace() {
    let o = masv(&["run", s(&fixture("tower.masv")), "--trace", "/nonexistent/dir/t.ndjson"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn run_new_goal_mid_run() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.ndjson");
    let o = masv(&[
        "run",
        s(&fixture("tower.masv")),
        "--scenario",
        s(&fixture("scenarios/tower_goal.ndjson")),
        "--trace",
        s(&trace),
    ]);
    assert_eq!(code(&o), 0);
    let reports: Vec<serde_json::Value> = fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let committed: Vec<&serde_json::Value> = reports.iter().filter(|r| r["committed"] == true).collect();
    assert_eq!(committed.len(), 4);
    assert_eq!(committed[3]["chosen"]["action"], "move(a,table)");
    assert_eq!(reports[4]["drained"][0]["atom"], "on(a,table)");
    let last = committed[3]["state"][0]["goals"].as_array().unwrap();
    assert!(last.is_empty());
}

#[test]
fn run_stream_mode() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("idle.masv");
    let tower = fs::read_to_string(fixture("tower.masv")).unwrap();
    fs::write(&spec, tower.replace("on(a, b) & on(b, c) & on(c, table);", "")).unwrap();
    let trace = dir.path().join("t.ndjson");
    let mut child = Command::new(env!("CARGO_BIN_EXE_masv"))
        .args(["run", s(&spec), "--scenario", "-", "--steps", "50", "--trace", s(&trace)])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    std::thread::sleep(std::time::Duration::from_millis(100));
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"{\"t\":0,\"agent\":\"builder\",\"kind\":\"goal\",\"op\":\"insert\",\"atom\":\"on(c,table)\"}\n")
        .unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(text(&o.stdout).contains("commits 1\n"), "{}", text(&o.stdout));
    let trace = fs::read_to_string(&trace).unwrap();
    assert!(trace.lines().count() < 50);
    assert!(trace.contains("\"atom\":\"on(c,table)\""));
    assert!(trace.contains("\"action\":\"move(c,table)\""));
}

#[test]
fn bad_scenario_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("s.ndjson");
    fs::write(&sc, "{\"t\":2,\"agent\":\"builder\",\"kind\":\"belief\",\"op\":\"insert\",\"atom\":\"block(a)\"}\n{\"t\":1,\"agent\":\"builder\",\"kind\":\"belief\",\"op\":\"insert\",\"atom\":\"block(a)\"}\n").unwrap();
    let o = masv(&["run", s(&fixture("tower.masv")), "--scenario", s(&sc), "--trace", s(&dir.path().join("t"))]);
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("precedes"));
}

#[test]
fn outputs_are_deterministic() {
    let runs: Vec<(Vec<u8>, Vec<u8>, Vec<u8>)> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            masv(&["compile", s(&fixture("coffee.masv")), "--out", s(dir.path())]);
            let trace = dir.path().join("t.ndjson");
            masv(&["run", s(&fixture("coffee.masv")), "--seed", "5", "--trace", s(&trace)]);
            (
                fs::read(dir.path().join("ts.json")).unwrap(),
                fs::read(dir.path().join("model.prism")).unwrap(),
                fs::read(&trace).unwrap(),
            )
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
}
