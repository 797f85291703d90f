use std::path::PathBuf;
use sweepplast::output;
use sweepplast::pipeline::{self, Setup};
use sweepplast::scenario::{Scenario, ScenarioError};

fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn shipped() -> Vec<(String, Scenario)> {
    let mut out: Vec<_> = std::fs::read_dir(dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "scn"))
        .map(|p| (p.display().to_string(), Scenario::load(&p).unwrap()))
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn shipped_scenarios_round_trip() {
    let all = shipped();
    assert!(all.len() >= 4);
    for (name, s) in all {
        let again = Scenario::parse(&s.to_toml()).unwrap();
        assert_eq!(again, s, "{name}");
        Setup::build(&s).unwrap();
    }
}

#[test]
fn csv_output_is_deterministic() {
    let s = Scenario::load(&dir().join("example1.scn")).unwrap();
    let render = || {
        let setup = Setup::build(&s).unwrap();
        let grid = setup.grid(None, None).unwrap();
        let sol = pipeline::solve_sweeping(&setup, &grid).unwrap();
        let rec = pipeline::recover(&setup, &sol).unwrap();
        let mut a = Vec::new();
        output::sweep_csv(&mut a, &sol).unwrap();
        output::strain_csv(&mut a, &rec).unwrap();
        a
    };
    let first = render();
    assert!(!first.is_empty());
    assert_eq!(first, render());
}

#[test]
fn malformed_input_is_rejected() {
    assert!(matches!(Scenario::parse("[model]\nkind = \"rod\""), Err(ScenarioError::Parse(_))));
    let text = std::fs::read_to_string(dir().join("example1.scn")).unwrap();
    let bad = text.replace("lower = [-1, -1]", "lower = [0.5, -1]");
    assert!(matches!(Scenario::parse(&bad), Err(ScenarioError::Invalid(_))));
}
