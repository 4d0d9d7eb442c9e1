#![allow(dead_code)]

use flowmap_core::flowmodel::TLocationScale;
use flowmap_core::simulate::{OutlierLaw, ScenarioFlow, ScenarioSpec, DEFAULT_START, SCENARIO_VERSION};

pub fn flow(waypoints: Vec<[f64; 3]>, rate_per_15min: f64) -> ScenarioFlow {
    ScenarioFlow {
        waypoints,
        lateral_std_nm: 1.0,
        vertical_std_ft: 0.0,
        speed: TLocationScale { mu: 450.0, sigma: 15.0, nu: 5.0 },
        rate_per_15min,
        daily_profile: None,
    }
}

/// Three level routes at FL350 with uniform outlier legs in the same band.
/// Rates give about 40 flights per flow and 12 outliers per day.
pub fn three_flow_spec(days: u32) -> ScenarioSpec {
    ScenarioSpec {
        version: SCENARIO_VERSION.into(),
        seed: 2024,
        days,
        start_time: DEFAULT_START,
        sample_interval_s: 60,
        origin_lat: 41.5,
        origin_lon: -81.7,
        flows: vec![
            flow(vec![[-150.0, 0.0, 35000.0], [150.0, 0.0, 35000.0]], 40.0 / 96.0),
            flow(vec![[0.0, -150.0, 35000.0], [0.0, 150.0, 35000.0]], 40.0 / 96.0),
            flow(vec![[-120.0, 100.0, 35000.0], [0.0, 60.0, 35000.0], [120.0, -100.0, 35000.0]], 40.0 / 96.0),
        ],
        outliers: Some(OutlierLaw {
            rate_per_15min: 12.0 / 96.0,
            lo: [-150.0, -150.0, 34000.0],
            hi: [150.0, 150.0, 36000.0],
            length_nm: [100.0, 250.0],
            speed_kt: [380.0, 480.0],
        }),
    }
}

/// ARI and outlier recall of `labels` (aligned with `ingested`) against the
/// scenario truth, matched by flight id.
pub fn recovery(
    scenario: &flowmap_core::simulate::Scenario,
    ingested: &flowmap_core::pipeline::Ingested,
    labels: &[Option<usize>],
) -> (f64, f64) {
    use std::collections::HashMap;
    let truth: HashMap<&str, Option<usize>> = scenario
        .trajectories
        .iter()
        .zip(&scenario.truth)
        .map(|(t, f)| (t.flight_id.as_str(), *f))
        .collect();
    let aligned: Vec<Option<usize>> = ingested.resampled.iter().map(|r| truth[r.flight_id.as_str()]).collect();
    let ari = flowmap_core::clustering::adjusted_rand_index(labels, &aligned);
    let outliers = aligned.iter().filter(|t| t.is_none()).count();
    let found = aligned.iter().zip(labels).filter(|(t, l)| t.is_none() && l.is_none()).count();
    let recall = if outliers == 0 { 1.0 } else { found as f64 / outliers as f64 };
    (ari, recall)
}

/// A level flow through `xy` at altitude `z` with tight lateral (0.5 NM) and
/// vertical (100 ft) scatter.
pub fn level_flow(xy: &[[f64; 2]], z: f64, rate_per_15min: f64) -> ScenarioFlow {
    ScenarioFlow {
        waypoints: xy.iter().map(|p| [p[0], p[1], z]).collect(),
        lateral_std_nm: 0.5,
        vertical_std_ft: 100.0,
        speed: TLocationScale { mu: 450.0, sigma: 15.0, nu: 5.0 },
        rate_per_15min,
        daily_profile: None,
    }
}

pub fn spec(flows: Vec<ScenarioFlow>, outliers: Option<OutlierLaw>) -> ScenarioSpec {
    ScenarioSpec {
        version: SCENARIO_VERSION.into(),
        seed: 1,
        days: 1,
        start_time: DEFAULT_START,
        sample_interval_s: 60,
        origin_lat: 41.5,
        origin_lon: -81.7,
        flows,
        outliers,
    }
}
