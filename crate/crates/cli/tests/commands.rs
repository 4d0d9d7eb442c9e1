use std::path::{Path, PathBuf};
use std::process::Command;

use clap::Parser;

use flowmap_cli::commands::{run, Cli};
use flowmap_cli::CliError;
use flowmap_core::model::ModelBundle;
use flowmap_core::proximity::MapGrid;
use flowmap_core::simulate::{reference_spec, ScenarioSpec, REFERENCE_SPACINGS_NM};

const THREE_FLOWS: &str = r#"
version = "flowmap-scenario/1"
seed = 11
days = 1

[[flows]]
waypoints = [[-150.0, 0.0, 35000.0], [150.0, 0.0, 35000.0]]
lateral_std_nm = 1.0
vertical_std_ft = 0.0
rate_per_15min = 0.4166
speed = { mu = 450.0, sigma = 15.0, nu = 5.0 }

[[flows]]
waypoints = [[0.0, -150.0, 35000.0], [0.0, 150.0, 35000.0]]
lateral_std_nm = 1.0
vertical_std_ft = 0.0
rate_per_15min = 0.4166
speed = { mu = 450.0, sigma = 15.0, nu = 5.0 }

[[flows]]
waypoints = [[-120.0, 100.0, 35000.0], [0.0, 60.0, 35000.0], [120.0, -100.0, 35000.0]]
lateral_std_nm = 1.0
vertical_std_ft = 0.0
rate_per_15min = 0.4166
speed = { mu = 450.0, sigma = 15.0, nu = 5.0 }

[outliers]
rate_per_15min = 0.125
lo = [-150.0, -150.0, 34000.0]
hi = [150.0, 150.0, 36000.0]
length_nm = [100.0, 250.0]
"#;

const ONE_FLOW: &str = r#"
version = "flowmap-scenario/1"
days = 1

[[flows]]
waypoints = [[-100.0, 0.0, 35000.0], [100.0, 0.0, 35000.0]]
lateral_std_nm = 1.0
vertical_std_ft = 100.0
rate_per_15min = 2.5
speed = { mu = 450.0, sigma = 15.0, nu = 5.0 }
"#;

fn flowmap(args: &[&str]) -> Result<(), CliError> {
    let argv = std::iter::once("flowmap").chain(args.iter().copied());
    run(Cli::try_parse_from(argv).expect("arguments parse"))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Write a scenario file and simulate it into `dir/<name>.csv`.
fn simulate(dir: &Path, name: &str, scenario: &str) -> PathBuf {
    let spec = dir.join(format!("{name}.toml"));
    std::fs::write(&spec, scenario).unwrap();
    let out = dir.join(format!("{name}.csv"));
    flowmap(&["simulate", "--config", p(&spec), "--out", p(&out)]).unwrap();
    out
}

fn load_map(path: &Path) -> MapGrid {
    MapGrid::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn pipeline_recovers_three_flows_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = simulate(dir.path(), "three", THREE_FLOWS);
    assert!(dir.path().join("three.truth.csv").exists());

    let a = dir.path().join("a/bundle.json");
    let b = dir.path().join("b/bundle.json");
    flowmap(&["pipeline", "--input", p(&corpus), "--out", p(&a)]).unwrap();
    flowmap(&["pipeline", "--input", p(&corpus), "--out", p(&b)]).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(dir.path().join("a/bundle.report.txt").exists());
    let model = ModelBundle::load(&a).unwrap();
    assert_eq!(model.flows.len(), 3);

    // the staged commands produce the same bundle as the one-shot pipeline
    let ingested = dir.path().join("ingested.json");
    let labels = dir.path().join("labels.csv");
    let staged = dir.path().join("staged.json");
    flowmap(&["ingest", "--input", p(&corpus), "--out", p(&ingested)]).unwrap();
    flowmap(&["cluster", "--ingested", p(&ingested), "--out", p(&labels)]).unwrap();
    flowmap(&["fit", "--ingested", p(&ingested), "--labels", p(&labels), "--out", p(&staged)]).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&staged).unwrap());

    let m1 = dir.path().join("m1.json");
    let m2 = dir.path().join("m2.json");
    for out in [&m1, &m2] {
        flowmap(&["map", "--bundle", p(&a), "--kind", "conflict", "--step-nm", "4", "--csv", "--out", p(out)]).unwrap();
    }
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
    assert!(dir.path().join("m1.FL350.csv").exists());
    assert!(load_map(&m1).max() > 0.0);
}

#[test]
fn single_flow_has_no_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "one", ONE_FLOW);
    let bundle = dir.path().join("one.model.json");
    let out = dir.path().join("conflict.json");
    flowmap(&["map", "--bundle", p(&bundle), "--kind", "conflict", "--bin", "10", "--weekday", "2", "--out", p(&out)])
        .unwrap();
    let grid = load_map(&out);
    assert!(!grid.values.is_empty());
    assert!(grid.values.iter().all(|v| *v == 0.0));

    let presence = dir.path().join("presence.json");
    flowmap(&["map", "--bundle", p(&bundle), "--bin", "10", "--out", p(&presence)]).unwrap();
    assert!(load_map(&presence).max() > 0.1);
}

#[test]
fn zero_rate_override_gives_an_empty_map() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "one", ONE_FLOW);
    let bundle = dir.path().join("one.model.json");
    let overrides = dir.path().join("overrides.json");
    std::fs::write(&overrides, r#"{"rate_scale": {"0": 0.0}}"#).unwrap();
    let out = dir.path().join("map.json");
    flowmap(&["map", "--bundle", p(&bundle), "--overrides", p(&overrides), "--out", p(&out)]).unwrap();
    assert!(load_map(&out).values.iter().all(|v| *v == 0.0));

    std::fs::write(&overrides, r#"{"removed_flows": [3]}"#).unwrap();
    let err = flowmap(&["map", "--bundle", p(&bundle), "--overrides", p(&overrides), "--out", p(&out)]).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("unknown flow id 3"), "{err}");
}

#[test]
fn input_problems_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "one", ONE_FLOW);
    let bundle = dir.path().join("one.model.json");
    let out = dir.path().join("map.json");
    let err = flowmap(&["map", "--bundle", p(&bundle), "--bin", "96", "--out", p(&out)]).unwrap_err();
    assert!(err.to_string().contains("invalid time bin"), "{err}");

    let err = flowmap(&["map", "--bundle", p(&bundle), "--region", "-10,0,10", "--out", p(&out)]).unwrap_err();
    assert!(err.to_string().contains("four values"), "{err}");

    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "flight_id,timestamp_s,lat_deg,lon_deg,alt_ft\n").unwrap();
    let err = flowmap(&["pipeline", "--input", p(&empty), "--out", p(&out)]).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("no clean trajectories"), "{err}");

    let err = flowmap(&["pipeline"]).unwrap_err();
    assert!(err.to_string().contains("--input"), "{err}");

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "version = \"flowmap-scenario/1\"\ndays = 1\nbogus = 2\n").unwrap();
    let err = flowmap(&["simulate", "--config", p(&bad)]).unwrap_err();
    assert!(err.to_string().contains("bogus"), "{err}");
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_flowmap");
    let dir = tempfile::tempdir().unwrap();
    let status = |args: &[&str]| Command::new(bin).args(args).current_dir(dir.path()).output().unwrap();

    assert_eq!(status(&["--help"]).status.code(), Some(0));
    assert_eq!(status(&["--version"]).status.code(), Some(0));
    assert_eq!(status(&["frobnicate"]).status.code(), Some(1));
    let missing = status(&["map", "--bundle", "nowhere.json"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nowhere.json"));

    std::fs::write(dir.path().join("one.toml"), ONE_FLOW).unwrap();
    let ok = status(&["simulate", "--config", "one.toml", "--out", "one.csv"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    // the output path is a directory, so writing fails
    std::fs::create_dir(dir.path().join("taken")).unwrap();
    let blocked = status(&["map", "--bundle", "one.model.json", "--out", "taken"]);
    assert_eq!(blocked.status.code(), Some(2), "{}", String::from_utf8_lossy(&blocked.stderr));
}

/// On-centroid presence maxima of the ten reference flows fall as their mean
/// spacing grows.
#[test]
fn reference_maxima_follow_the_spacings() {
    let dir = tempfile::tempdir().unwrap();
    let spec: ScenarioSpec = reference_spec(1);
    simulate(dir.path(), "reference", &spec.to_toml().unwrap());

    // The whole chain runs on the simulated traffic. Pairs of parallel
    // same-heading routes share each flight level, which the default
    // neighborhood radius over-segments, so the radius is widened.
    let config = dir.path().join("pipeline.toml");
    std::fs::write(&config, "[clustering]\neps = 2.0\nsecond_pass_eps = 1.2\n").unwrap();
    let fitted = dir.path().join("fitted.json");
    let corpus = dir.path().join("reference.csv");
    flowmap(&["pipeline", "--config", p(&config), "--input", p(&corpus), "--out", p(&fitted)]).unwrap();
    let model = ModelBundle::load(&fitted).unwrap();
    assert_eq!(model.flows.len(), 10);
    let mut fitted_y: Vec<f64> = model.flows.iter().map(|f| f.track[0].y).collect();
    fitted_y.sort_by(f64::total_cmp);
    for (y, f) in fitted_y.iter().zip(&spec.flows) {
        assert!((y - f.waypoints[0][1]).abs() < 5.0, "fitted entries {fitted_y:?}");
    }

    let out = dir.path().join("presence.json");
    let bundle = dir.path().join("reference.model.json");
    let region = "-200,-200,200,200";
    flowmap(&["map", "--bundle", p(&bundle), "--region", region, "--levels", "310,350", "--step-nm", "2", "--out", p(&out)])
        .unwrap();
    let grid = load_map(&out);
    let maxima: Vec<f64> = spec
        .flows
        .iter()
        .map(|f| {
            let (y0, z) = (f.waypoints[0][1], f.waypoints[0][2]);
            let k = grid.level_of(z / 100.0).unwrap();
            let mut best = 0.0f64;
            for j in 0..grid.dims[1] {
                for i in 0..grid.dims[0] {
                    let n = grid.node(i, j, k);
                    if (y0 - 2.0..=y0 + 10.0).contains(&n.y) {
                        best = best.max(grid.get(i, j, k));
                    }
                }
            }
            best
        })
        .collect();
    assert_eq!(maxima.len(), REFERENCE_SPACINGS_NM.len());
    for w in maxima.windows(2) {
        assert!(w[0] > w[1], "maxima not decreasing: {maxima:?}");
    }
}
