mod common;

use statrs::function::erf::erf;

use flowmap_core::flowmodel::TimeBin;
use flowmap_core::geometry::{PointEnu, ProximityDims};
use flowmap_core::model::ModelBundle;
use flowmap_core::proximity::{
    generate_map, map_slice_csv, outlier_factor, p1_point, p2_point, po_point, resolve_flows, DistanceParams,
    MapGrid, MapKind, MapRegion, MapRequest, OutlierInjection, Parallelism, WhatIfOverrides,
};
use flowmap_core::simulate::{scenario_model, OutlierLaw};
use flowmap_core::Error;

const TB: TimeBin = TimeBin { weekday: 1, bin: 30 };

fn crossing() -> ModelBundle {
    scenario_model(&common::spec(
        vec![
            common::level_flow(&[[-60.0, 0.0], [60.0, 0.0]], 35000.0, 2.5),
            common::level_flow(&[[0.0, -60.0], [0.0, 60.0]], 35000.0, 2.5),
        ],
        None,
    ))
    .unwrap()
}

fn request(kind: MapKind, lo: [f64; 2], hi: [f64; 2], step: f64) -> MapRequest {
    MapRequest {
        kind,
        region: MapRegion { lo: PointEnu::new(lo[0], lo[1], 35000.0), hi: PointEnu::new(hi[0], hi[1], 35000.0) },
        steps: [step, step, 1000.0],
        time_bin: TB,
        distance: DistanceParams::default(),
    }
}

#[test]
fn far_points_see_nothing() {
    let model = crossing();
    let flows = resolve_flows(&model, TB, &WhatIfOverrides::default(), &DistanceParams::default()).unwrap();
    let dims = ProximityDims::default();
    for p in [PointEnu::new(30.0, 30.0, 35000.0), PointEnu::new(0.0, 0.0, 25000.0), PointEnu::new(500.0, 0.0, 35000.0)] {
        assert_eq!(p1_point(&p, &flows, dims), 0.0);
        assert_eq!(p2_point(&p, &flows, dims), 0.0);
    }
}

#[test]
fn on_centroid_presence_factorizes_in_closed_form() {
    let mut flow = common::level_flow(&[[-100.0, 0.0], [0.0, 0.0], [100.0, 0.0]], 35000.0, 2.5);
    flow.lateral_std_nm = 2.0;
    flow.vertical_std_ft = 400.0;
    let model = scenario_model(&common::spec(vec![flow], None)).unwrap();
    let flows = resolve_flows(&model, TB, &WhatIfOverrides::default(), &DistanceParams::default()).unwrap();
    let dims = ProximityDims::default();
    let p = PointEnu::new(-50.0, 0.0, 35000.0);
    let lateral = erf(2.5 / (2.0 * 2f64.sqrt()));
    let vertical = erf(1000.0 / (400.0 * 2f64.sqrt()));
    let along = 1.0 - (-5.0f64 / 45.0).exp();
    let value = p1_point(&p, &flows, dims);
    assert!((value - lateral * vertical * along).abs() < 2e-4, "{value} vs {}", lateral * vertical * along);
}

#[test]
fn presence_is_continuous_across_a_waypoint() {
    let model = scenario_model(&common::spec(
        vec![common::level_flow(&[[-100.0, 0.0], [0.0, 0.0], [100.0, 30.0]], 35000.0, 2.5)],
        None,
    ))
    .unwrap();
    let flows = resolve_flows(&model, TB, &WhatIfOverrides::default(), &DistanceParams::default()).unwrap();
    let dims = ProximityDims::default();
    let values: Vec<f64> = (-80..=80).map(|i| p1_point(&PointEnu::new(i as f64 * 0.05, 0.0, 35000.0), &flows, dims)).collect();
    for w in values.windows(2) {
        assert!((w[1] - w[0]).abs() < 0.01, "jump {} -> {}", w[0], w[1]);
    }
    // two boxes overlap the proximity volume at the bend
    let at_bend = values[80];
    let inside = values[0];
    assert!(at_bend >= inside - 1e-3, "{at_bend} vs {inside}");
}

#[test]
fn conflicts_peak_at_the_crossing() {
    let model = crossing();
    let grid = generate_map(&model, &request(MapKind::Conflict, [-30.0, -30.0], [30.0, 30.0], 1.0), &WhatIfOverrides::default(), Parallelism::Parallel)
        .unwrap();
    let (best, _) = grid.values.iter().enumerate().fold((0, 0.0), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
    let (i, j) = (best % grid.dims[0], best / grid.dims[0]);
    let node = grid.node(i, j, 0);
    assert!(node.x.hypot(node.y) <= 2.0, "maximum at {node:?}");
    let presence = generate_map(&model, &request(MapKind::Presence, [-30.0, -30.0], [30.0, 30.0], 1.0), &WhatIfOverrides::default(), Parallelism::Parallel)
        .unwrap();
    assert!(grid.values.iter().zip(&presence.values).all(|(c, p)| c <= p));
    assert_eq!(grid.clip_events, 0);
}

#[test]
fn a_model_without_flows_gives_zero_maps() {
    let model = scenario_model(&common::spec(vec![], None)).unwrap();
    for kind in [MapKind::Presence, MapKind::Conflict, MapKind::Outlier] {
        let grid = generate_map(&model, &request(kind, [-5.0, -5.0], [5.0, 5.0], 1.0), &WhatIfOverrides::default(), Parallelism::Sequential)
            .unwrap();
        assert_eq!(grid.values.len(), 121);
        assert!(grid.values.iter().all(|v| *v == 0.0));
    }
}

#[test]
fn overrides_are_validated() {
    let model = crossing();
    let req = request(MapKind::Presence, [-5.0, -5.0], [5.0, 5.0], 1.0);
    let unknown = WhatIfOverrides { removed_flows: vec![9], ..Default::default() };
    assert!(matches!(
        generate_map(&model, &req, &unknown, Parallelism::Parallel),
        Err(Error::UnknownFlow { id: 9, .. })
    ));
    let negative = WhatIfOverrides { rate_scale: [(0, -1.0)].into(), ..Default::default() };
    assert!(generate_map(&model, &req, &negative, Parallelism::Parallel).is_err());
    let bad_bin = MapRequest { time_bin: TimeBin { weekday: 0, bin: 96 }, ..req };
    assert!(matches!(
        generate_map(&model, &bad_bin, &WhatIfOverrides::default(), Parallelism::Parallel),
        Err(Error::InvalidTimeBin { .. })
    ));
}

#[test]
fn outlier_term_scales_flow_presence() {
    let law = OutlierLaw {
        rate_per_15min: 1.0,
        lo: [-60.0, -60.0, 34000.0],
        hi: [60.0, 60.0, 36000.0],
        length_nm: [100.0, 100.0],
        speed_kt: [450.0, 450.0],
    };
    let model = scenario_model(&common::spec(
        vec![common::level_flow(&[[-60.0, 0.0], [60.0, 0.0]], 35000.0, 2.5)],
        Some(law),
    ))
    .unwrap();
    let flows = resolve_flows(&model, TB, &WhatIfOverrides::default(), &DistanceParams::default()).unwrap();
    let dims = ProximityDims::default();
    let p = PointEnu::new(0.0, 0.0, 35000.0);
    // 1 per 15 min, 100 NM at 450 kt: 0.8889 outliers airborne on average,
    // spread over 120 x 120 NM x 2000 ft; the box holds 25 NM² x 2000 ft of it
    let mu = (100.0 / 450.0) * 4.0 * 25.0 / (120.0 * 120.0);
    let o = outlier_factor(&p, &model.outliers, dims);
    assert!(!o.out_of_region);
    assert!((o.value - mu).abs() < 1e-9, "{} vs {mu}", o.value);
    let po = po_point(&p, &flows, &model.outliers, dims);
    assert!((po.value - p1_point(&p, &flows, dims) * mu).abs() < 1e-12);
    assert!(po_point(&PointEnu::new(500.0, 0.0, 35000.0), &flows, &model.outliers, dims).out_of_region);

    // injected traffic raises the outlier map everywhere it lands
    let req = MapRequest { kind: MapKind::Outlier, ..request(MapKind::Outlier, [-20.0, -5.0], [20.0, 5.0], 1.0) };
    let base = generate_map(&model, &req, &WhatIfOverrides::default(), Parallelism::Parallel).unwrap();
    let inject = WhatIfOverrides {
        injected_outliers: vec![OutlierInjection {
            lo: PointEnu::new(-30.0, -30.0, 34000.0),
            hi: PointEnu::new(30.0, 30.0, 36000.0),
            expected_count: 2.0,
        }],
        ..Default::default()
    };
    let more = generate_map(&model, &req, &inject, Parallelism::Parallel).unwrap();
    assert!(base.values.iter().zip(&more.values).all(|(a, b)| b >= a));
    assert!(more.max() > base.max());
    assert!(base.probabilistic);
}

#[test]
fn maps_serialize_and_slice() {
    let model = crossing();
    let grid = generate_map(&model, &request(MapKind::Presence, [-4.0, -2.0], [4.0, 2.0], 2.0), &WhatIfOverrides::default(), Parallelism::Parallel)
        .unwrap();
    assert_eq!(grid.dims, [5, 3, 1]);
    let back = MapGrid::from_json(&grid.to_json().unwrap()).unwrap();
    assert_eq!(back, grid);
    let slice = grid.slice(0).unwrap();
    assert_eq!((slice.nx, slice.ny, slice.flight_level), (5, 3, 350));
    assert_eq!(slice.values, grid.values);
    let csv = map_slice_csv(&grid, 0).unwrap();
    // one header row of x nodes, then one row per y node
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 1 + 3);
    assert!(rows.iter().all(|r| r.split(',').count() == 1 + 5));
    assert_eq!(grid.level_of(350.0).unwrap(), 0);
    assert!(grid.level_of(360.0).is_err());
    assert_eq!(grid.model_hash, model.model_hash().unwrap());
}

#[test]
fn doubling_rates_raises_every_cell() {
    let model = crossing();
    let req = request(MapKind::Presence, [-20.0, -20.0], [20.0, 20.0], 1.0);
    let base = generate_map(&model, &req, &WhatIfOverrides::default(), Parallelism::Parallel).unwrap();
    let busy = WhatIfOverrides { rate_scale: [(0, 2.0), (1, 2.0)].into(), ..Default::default() };
    let doubled = generate_map(&model, &req, &busy, Parallelism::Parallel).unwrap();
    assert!(base.values.iter().zip(&doubled.values).all(|(a, b)| b >= a));
    let removed = WhatIfOverrides { removed_flows: vec![0, 1], ..Default::default() };
    let none = generate_map(&model, &req, &removed, Parallelism::Parallel).unwrap();
    assert!(none.values.iter().all(|v| *v == 0.0));
}
