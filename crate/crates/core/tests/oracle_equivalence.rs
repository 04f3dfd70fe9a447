use std::collections::BTreeSet;

use masv_core::logic::Interpretation;
use masv_core::oracle::{naive_model, oracle_document, ORACLE_STATE_CAP};
use masv_core::testkit::{random_program, random_spec, Gen, ProgramShape};
use masv_core::ts::{generate_ts, Bounds, TsDocument};
use masv_core::{load_spec, Engine};

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn compare_documents(src: &str) -> Option<usize> {
    let spec = load_spec(src).unwrap();
    let engine = Engine::new(spec.clone()).unwrap();
    let ts = generate_ts(
        &engine,
        Bounds {
            max_states: 500,
            max_depth: None,
        },
    )
    .ok()?;
    let ours = TsDocument::new(&engine, &ts);
    let oracle = oracle_document(&spec, ORACLE_STATE_CAP).unwrap();
    assert_eq!(ours, oracle, "documents differ for\n{src}");
    Some(ts.states.len())
}

#[test]
fn fixtures_match_oracle() {
    for name in ["tower.masv", "coffee.masv", "patrol_small.masv"] {
        assert!(compare_documents(&fixture(name)).is_some(), "{name}");
    }
}

#[test]
fn random_specs_match_oracle() {
    let mut compared = 0;
    let mut seed = 0;
    while compared < 60 {
        let src = random_spec(&mut Gen::new(seed));
        if compare_documents(&src).is_some_and(|n| n > 1) {
            compared += 1;
        }
        seed += 1;
    }
}

#[test]
fn closure_matches_naive_model() {
    for seed in 0..300 {
        let src = random_program(&mut Gen::new(seed), ProgramShape::default());
        let spec = load_spec(&src).unwrap();
        let engine = Engine::new(spec.clone()).unwrap();
        let beliefs: &Interpretation = &engine.initial_states()[0].beliefs;
        let ours: BTreeSet<String> = engine
            .closure(beliefs)
            .to_strings(engine.index())
            .into_iter()
            .collect();
        let facts: BTreeSet<String> = beliefs.to_strings(engine.index()).into_iter().collect();
        assert_eq!(ours, naive_model(&spec, &facts), "seed {seed}\n{src}");
    }
}
