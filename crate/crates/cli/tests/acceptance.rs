//! Acceptance suite: one PASS/FAIL line per criterion.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeSet;
use std::fs;
use std::hash::{Hash, Hasher};
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use masv::{cmd_compile, cmd_oracle, cmd_run, CompileArgs, OracleArgs, RunArgs};
use masv_core::oracle::naive_model;
use masv_core::prism::check_prism_syntax;
use masv_core::runtime::{run_loop, Feed, Limits, NoFeed, Node, SimulatedAgents};
use masv_core::sensor::{ConversionTable, ScenarioFeed};
use masv_core::testkit::{
    check_path, check_prism_round_trip, random_program, random_scenario, random_spec, Gen,
    ProgramShape,
};
use masv_core::ts::{generate_ts, Bounds, TsDocument};
use masv_core::{load_spec, Engine};

type Outcome = Result<String, String>;

const FIXTURES: [&str; 4] = ["tower.masv", "coffee.masv", "patrol_small.masv", "patrol.masv"];

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn engine_for(path: &Path) -> Engine {
    Engine::new(load_spec(&fs::read_to_string(path).unwrap()).unwrap()).unwrap()
}

fn compile_into(spec: &Path, out: &Path) -> Result<(), String> {
    cmd_compile(&CompileArgs {
        spec: spec.to_path_buf(),
        out: out.to_path_buf(),
        max_states: 100_000,
        max_depth: None,
    })
    .map(|_| ())
    .map_err(|e| e.to_string())
}

fn read_doc(dir: &Path, name: &str) -> TsDocument {
    TsDocument::from_json(&fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

fn minimal_model_equivalence() -> Outcome {
    let started = Instant::now();
    let n = 250;
    for seed in 0..n {
        let src = random_program(&mut Gen::new(seed), ProgramShape::default());
        let spec = load_spec(&src).map_err(|e| format!("seed {seed}: {e}"))?;
        let engine = Engine::new(spec.clone()).map_err(|e| e.to_string())?;
        let beliefs = &engine.initial_states()[0].beliefs;
        let ours: BTreeSet<String> = engine.closure(beliefs).to_strings(engine.index()).into_iter().collect();
        let facts = beliefs.to_strings(engine.index()).into_iter().collect();
        if ours != naive_model(&spec, &facts) {
            return Err(format!("program {seed} differs from the naive fixpoint"));
        }
    }
    let t = started.elapsed();
    if t > Duration::from_secs(10) {
        return Err(format!("took {}", secs(t)));
    }
    Ok(format!("{n} programs, {}", secs(t)))
}

fn ts_oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut specs = vec![fixture("tower.masv"), fixture("coffee.masv")];
    let mut seed = 0;
    let mut random = 0;
    while random < 20 {
        let src = random_spec(&mut Gen::new(seed));
        let e = Engine::new(load_spec(&src).unwrap()).unwrap();
        let bounds = Bounds {
            max_states: 499,
            max_depth: None,
        };
        if generate_ts(&e, bounds).is_ok_and(|ts| ts.states.len() > 1) {
            let p = dir.path().join(format!("random{seed}.masv"));
            fs::write(&p, src).unwrap();
            specs.push(p);
            random += 1;
        }
        seed += 1;
    }
    for spec in &specs {
        let out = dir.path().join(spec.file_stem().unwrap());
        compile_into(spec, &out)?;
        cmd_oracle(&OracleArgs {
            spec: spec.clone(),
            out: out.clone(),
        })
        .map_err(|e| e.to_string())?;
        if fs::read(out.join("ts.json")).unwrap() != fs::read(out.join("ts.oracle.json")).unwrap() {
            return Err(format!("{} differs from the oracle", spec.display()));
        }
    }
    let t = started.elapsed();
    if t > Duration::from_secs(30) {
        return Err(format!("took {}", secs(t)));
    }
    Ok(format!("{} specs ({random} random), {}", specs.len(), secs(t)))
}

/// Extreme reachability probabilities by value iteration over the document.
fn reach(doc: &TsDocument, target: impl Fn(usize) -> bool, maximize: bool) -> f64 {
    let mut v: Vec<f64> = (0..doc.states.len()).map(|s| if target(s) { 1.0 } else { 0.0 }).collect();
    let prob = |p: &str| -> f64 {
        match p.split_once('/') {
            Some((a, b)) => a.parse::<f64>().unwrap() / b.parse::<f64>().unwrap(),
            None => p.parse().unwrap(),
        }
    };
    for _ in 0..100_000 {
        let mut best: Vec<Option<f64>> = vec![None; v.len()];
        for t in &doc.transitions {
            let x: f64 = t.outcomes.iter().map(|o| prob(&o.prob) * v[o.target]).sum();
            let slot = &mut best[t.source];
            *slot = Some(match *slot {
                None => x,
                Some(y) if maximize => y.max(x),
                Some(y) => y.min(x),
            });
        }
        let next: Vec<f64> = (0..v.len())
            .map(|s| if target(s) { 1.0 } else { best[s].unwrap_or(0.0) })
            .collect();
        let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = next;
        if delta < 1e-12 {
            break;
        }
    }
    v[doc.initial]
}

fn external_checker() -> Option<&'static str> {
    ["storm", "prism"].into_iter().find(|b| {
        std::process::Command::new(b)
            .arg("--version")
            .output()
            .is_ok_and(|o| o.status.success())
    })
}

/// Runs Storm or Prism on one property and reads back the result.
fn run_checker(bin: &str, model: &Path, prop: &str) -> Result<f64, String> {
    let model = model.to_str().unwrap();
    let args: Vec<&str> = if bin == "storm" {
        vec!["--prism", model, "--prop", prop]
    } else {
        vec![model, "-pf", prop]
    };
    let out = std::process::Command::new(bin)
        .args(&args)
        .output()
        .map_err(|e| format!("{bin}: {e}"))?;
    let text = String::from_utf8_lossy(&out.stdout);
    text.lines()
        .rev()
        .filter(|l| l.starts_with("Result"))
        .find_map(|l| l.split_whitespace().find_map(|w| w.parse::<f64>().ok()))
        .ok_or_else(|| format!("{bin} printed no result for {prop}"))
}

fn prism_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for f in FIXTURES {
        let out = dir.path().join(f);
        compile_into(&fixture(f), &out)?;
        let text = fs::read_to_string(out.join("model.prism")).unwrap();
        let model = check_prism_syntax(&text).map_err(|e| format!("{f}: {e}"))?;
        check_prism_round_trip(&read_doc(&out, "ts.json"), &model).map_err(|e| format!("{f}: {e}"))?;
    }
    let doc = read_doc(&dir.path().join("tower.masv"), "ts.json");
    let unsafe_max = reach(&doc, |s| !doc.states[s].safe, true);
    let goal_min = reach(&doc, |s| doc.states[s].goal, false);
    if unsafe_max != 0.0 || (goal_min - 1.0).abs() > 1e-9 {
        return Err(format!("tower Pmax unsafe {unsafe_max}, Pmin goal {goal_min}"));
    }
    let external = match external_checker() {
        Some(b) => {
            let model = dir.path().join("tower.masv").join("model.prism");
            let unsafe_ext = run_checker(b, &model, "Pmax=? [ F !\"safe\" ]")?;
            let goal_ext = run_checker(b, &model, "Pmin=? [ F \"goal\" ]")?;
            if unsafe_ext != 0.0 || (goal_ext - 1.0).abs() > 1e-6 {
                return Err(format!("{b} reports Pmax unsafe {unsafe_ext}, Pmin goal {goal_ext}"));
            }
            format!("{b} agrees")
        }
        None => "no external checker on PATH".to_string(),
    };
    Ok(format!(
        "{} fixtures; tower Pmax=? [F !safe] = {unsafe_max}, Pmin=? [F goal] = {goal_min}; {external}",
        FIXTURES.len()
    ))
}

fn path_consistency() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = 0;
    for f in FIXTURES {
        let out = dir.path().join(f);
        compile_into(&fixture(f), &out)?;
        let doc = read_doc(&out, "ts.json");
        let engine = Arc::new(engine_for(&fixture(f)));
        for seed in 0..100 {
            let mut node = Node::new(engine.clone(), seed).map_err(|e| e.to_string())?;
            let limits = Limits {
                max_steps: 300,
                ..Limits::default()
            };
            let trace = run_loop(&mut node, &limits, &mut NoFeed, &mut io::sink(), &mut SimulatedAgents::default())
                .map_err(|e| e.to_string())?;
            check_path(&doc, &trace.reports).map_err(|e| format!("{f} seed {seed}: {e}"))?;
            runs += 1;
        }
    }
    Ok(format!("{runs} runs, 0 failures"))
}

fn never_unsafe() -> Outcome {
    let started = Instant::now();
    let mut engines: Vec<Arc<Engine>> = FIXTURES.iter().map(|f| Arc::new(engine_for(&fixture(f)))).collect();
    for seed in 0..16 {
        engines.push(Arc::new(Engine::new(load_spec(&random_spec(&mut Gen::new(seed))).unwrap()).unwrap()));
    }
    let (mut scenarios, mut commits) = (0, 0u64);
    for i in 0..1000u64 {
        let engine = &engines[i as usize % engines.len()];
        let Ok(mut node) = Node::new(engine.clone(), i) else {
            continue;
        };
        let scenario = random_scenario(&mut Gen::new(i), engine, 60, 100);
        let mut feed = ScenarioFeed::new(scenario, ConversionTable::default());
        let queue = node.queue();
        for step in 1..=100 {
            feed.before_step(step, &queue);
            let (report, _) = node.step_once();
            if report.committed {
                commits += 1;
                if !node.verdict().safe {
                    return Err(format!("scenario {i} step {step}: committed an unsafe state"));
                }
            }
        }
        scenarios += 1;
    }
    let t = started.elapsed();
    if scenarios < 1000 {
        return Err(format!("only {scenarios} scenarios could start"));
    }
    if t > Duration::from_secs(120) {
        return Err(format!("took {}", secs(t)));
    }
    Ok(format!("{scenarios} scenarios x 100 steps, {commits} commits checked, {}", secs(t)))
}

fn mean_check_ns(engine: &Engine, samples: &[Vec<Arc<masv_core::logic::Interpretation>>], calls: usize) -> f64 {
    let started = Instant::now();
    let mut safe = 0;
    for i in 0..calls {
        safe += engine.safety_check(&samples[i % samples.len()]).safe as usize;
    }
    std::hint::black_box(safe);
    started.elapsed().as_nanos() as f64 / calls as f64
}

fn check_flatness() -> Outcome {
    let sample = |f: &str| {
        let engine = engine_for(&fixture(f));
        let ts = generate_ts(&engine, Bounds::default()).unwrap();
        let mut g = Gen::new(1);
        let samples: Vec<_> = (0..32)
            .map(|_| {
                let js = &ts.states[g.below(ts.states.len())];
                js.agents.iter().map(|m| engine.property(m)).collect::<Vec<_>>()
            })
            .collect();
        (engine, ts.states.len(), samples)
    };
    let (small, small_states, small_samples) = sample("patrol_small.masv");
    let (large, large_states, large_samples) = sample("patrol.masv");
    if large_states < 1000 * small_states {
        return Err(format!("state spaces {small_states} and {large_states} are too close"));
    }
    mean_check_ns(&small, &small_samples, 1000);
    mean_check_ns(&large, &large_samples, 1000);
    let mut best = (f64::MAX, f64::MAX);
    for _ in 0..5 {
        best.0 = best.0.min(mean_check_ns(&small, &small_samples, 1000));
        best.1 = best.1.min(mean_check_ns(&large, &large_samples, 1000));
    }
    let ratio = best.0.max(best.1) / best.0.min(best.1);
    let msg = format!(
        "{small_states} states: {:.0} ns, {large_states} states: {:.0} ns, ratio {ratio:.2}",
        best.0, best.1
    );
    if ratio < 2.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn runtime_efficiency() -> Outcome {
    let spec = fixture("patrol.masv");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let started = Instant::now();
    compile_into(&spec, dir.path())?;
    let compile = started.elapsed();

    let mut node = Node::new(Arc::new(engine_for(&spec)), 0).map_err(|e| e.to_string())?;
    let steps = 200;
    let started = Instant::now();
    for _ in 0..steps {
        node.step_once();
    }
    let step = started.elapsed() / steps;

    let started = Instant::now();
    cmd_run(&RunArgs {
        spec: spec.clone(),
        seed: 0,
        steps: 1,
        quiesce: 3,
        wall_ms: None,
        scenario: None,
        conversions: None,
        trace: dir.path().join("t.ndjson"),
        actions: None,
    })
    .map_err(|e| e.to_string())?;
    let one_step_run = started.elapsed();

    let factor = compile.as_secs_f64() / step.as_secs_f64();
    let msg = format!(
        "compile {:.1} ms, one step {:.1} us ({factor:.0}x), whole `run --steps 1` {:.1} ms",
        compile.as_secs_f64() * 1e3,
        step.as_secs_f64() * 1e6,
        one_step_run.as_secs_f64() * 1e3
    );
    if factor >= 10.0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn digest(bytes: &[u8]) -> u64 {
    let mut h = DefaultHasher::new();
    bytes.hash(&mut h);
    h.finish()
}

fn determinism() -> Outcome {
    let mut hashes = Vec::new();
    for f in FIXTURES {
        let mut seen: Vec<Vec<u64>> = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            compile_into(&fixture(f), dir.path())?;
            let trace = dir.path().join("trace.ndjson");
            cmd_run(&RunArgs {
                spec: fixture(f),
                seed: 7,
                steps: 500,
                quiesce: 3,
                wall_ms: None,
                scenario: None,
                conversions: None,
                trace: trace.clone(),
                actions: Some(dir.path().join("actions.ndjson")),
            })
            .map_err(|e| e.to_string())?;
            let files = ["ts.json", "model.prism", "props.pctl", "trace.ndjson", "actions.ndjson"];
            seen.push(files.iter().map(|n| digest(&fs::read(dir.path().join(n)).unwrap())).collect());
        }
        if seen[0] != seen[1] {
            return Err(format!("{f}: artifacts differ between invocations"));
        }
        hashes.push(format!("{}={:016x}", f.trim_end_matches(".masv"), digest(format!("{:?}", seen[0]).as_bytes())));
    }
    Ok(hashes.join(" "))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("minimal-model oracle equivalence", minimal_model_equivalence),
        ("transition-system oracle equivalence", ts_oracle_equivalence),
        ("prism round-trip", prism_round_trip),
        ("runtime-static path consistency", path_consistency),
        ("never-unsafe fuzzing", never_unsafe),
        ("safety-check flatness", check_flatness),
        ("runtime-vs-static efficiency", runtime_efficiency),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
