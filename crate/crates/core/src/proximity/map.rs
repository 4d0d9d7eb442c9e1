//! Map lattices of presence, conflict and outlier-proximity values.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{combine_presence, exactly_one, outlier_factor, DistanceParams, FlowPresence};
use crate::error::{Error, Result};
use crate::flowmodel::{OutlierDensity, OutlierMode, TimeBin};
use crate::geometry::{PointEnu, ProximityDims};
use crate::model::ModelBundle;
use crate::proximity::inter_aircraft_pdf;

pub const MAP_VERSION: &str = "flowmap-map/1";
/// Overshoot beyond `[0, 1]` that counts as a clip event.
const CLIP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Presence,
    Conflict,
    Outlier,
}

impl std::str::FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "presence" => Ok(Self::Presence),
            "conflict" => Ok(Self::Conflict),
            "outlier" => Ok(Self::Outlier),
            _ => Err(Error::invalid(format!("unknown map kind `{s}` (presence, conflict, outlier)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapRegion {
    pub lo: PointEnu,
    pub hi: PointEnu,
}

impl MapRegion {
    /// Horizontal extent of the model's flows (or of its outlier grid when it
    /// has no flows), padded by `pad_nm` and snapped outwards to multiples of
    /// `step_nm`, between altitudes `z_lo` and `z_hi`.
    pub fn around_model(model: &ModelBundle, pad_nm: f64, step_nm: f64, z_lo: f64, z_hi: f64) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for f in &model.flows {
            let (l, h) = f.bounds();
            for a in 0..2 {
                lo[a] = lo[a].min(l[a]);
                hi[a] = hi[a].max(h[a]);
            }
        }
        if !lo[0].is_finite() {
            let g = &model.outliers.grid;
            let h = g.hi();
            lo = [g.origin.x, g.origin.y];
            hi = [h[0], h[1]];
        }
        let snap_lo = |v: f64| ((v - pad_nm) / step_nm).floor() * step_nm;
        let snap_hi = |v: f64| ((v + pad_nm) / step_nm).ceil() * step_nm;
        Self {
            lo: PointEnu::new(snap_lo(lo[0]), snap_lo(lo[1]), z_lo),
            hi: PointEnu::new(snap_hi(hi[0]), snap_hi(hi[1]), z_hi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapRequest {
    pub kind: MapKind,
    pub region: MapRegion,
    /// Lattice spacing: NM, NM, ft.
    pub steps: [f64; 3],
    pub time_bin: TimeBin,
    #[serde(default)]
    pub distance: DistanceParams,
}

impl MapRequest {
    /// Lattice size per axis; nodes are `lo + i·step` up to `hi`.
    pub fn dims(&self) -> Result<[usize; 3]> {
        let lo = [self.region.lo.x, self.region.lo.y, self.region.lo.z];
        let hi = [self.region.hi.x, self.region.hi.y, self.region.hi.z];
        let mut dims = [0; 3];
        for a in 0..3 {
            if !(self.steps[a] > 0.0) || !self.steps[a].is_finite() {
                return Err(Error::invalid(format!("map steps must be positive, got {:?}", self.steps)));
            }
            if !(hi[a] >= lo[a]) || !lo[a].is_finite() || !hi[a].is_finite() {
                return Err(Error::invalid("map region is empty or not finite"));
            }
            dims[a] = ((hi[a] - lo[a]) / self.steps[a] + 1e-9).floor() as usize + 1;
        }
        Ok(dims)
    }
}

/// Uniform outlier traffic added on top of the model's outlier density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierInjection {
    pub lo: PointEnu,
    pub hi: PointEnu,
    /// Expected number of outliers inside the region at a random instant.
    pub expected_count: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WhatIfOverrides {
    /// Multiplier of each listed flow's arrival rate.
    pub rate_scale: BTreeMap<usize, f64>,
    pub removed_flows: Vec<usize>,
    pub injected_outliers: Vec<OutlierInjection>,
    pub proximity: Option<ProximityDims>,
}

impl WhatIfOverrides {
    pub fn validate(&self, valid_ids: &[usize]) -> Result<()> {
        for id in self.rate_scale.keys().chain(&self.removed_flows) {
            if !valid_ids.contains(id) {
                return Err(Error::UnknownFlow { id: *id, valid: valid_ids.to_vec() });
            }
        }
        if let Some((id, s)) = self.rate_scale.iter().find(|(_, s)| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!("rate_scale for flow {id} must be a finite number >= 0, got {s}")));
        }
        if let Some(d) = &self.proximity {
            d.validate()?;
        }
        Ok(())
    }

    pub fn dims(&self) -> ProximityDims {
        self.proximity.unwrap_or_default()
    }
}

fn bin_index(model: &ModelBundle, tb: TimeBin) -> Result<usize> {
    let s = &model.schedule;
    if s.observed_weekdays().is_empty() && (tb.weekday as usize) < crate::flowmodel::WEEKDAYS && tb.bin < s.bins_per_day {
        return Ok(tb.weekday as usize * s.bins_per_day + tb.bin);
    }
    s.index(tb)
}

/// Spacing laws of the model's flows for one time bin, after overrides.
pub fn resolve_flows<'a>(
    model: &'a ModelBundle,
    time_bin: TimeBin,
    overrides: &WhatIfOverrides,
    distance: &DistanceParams,
) -> Result<Vec<FlowPresence<'a>>> {
    overrides.validate(&model.flow_ids())?;
    let idx = bin_index(model, time_bin)?;
    let lambda = model.schedule.lambda(idx);
    model
        .flows
        .iter()
        .filter(|f| !overrides.removed_flows.contains(&f.id))
        .map(|f| {
            let scale = overrides.rate_scale.get(&f.id).copied().unwrap_or(1.0);
            let rate = f.rate_share[idx] * lambda * scale;
            Ok(FlowPresence::new(f, inter_aircraft_pdf(f.id, &f.speed, rate, distance)?))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    #[default]
    Parallel,
}

/// A lattice of map values, x fastest, then y, then z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapGrid {
    pub version: String,
    pub kind: MapKind,
    pub region: MapRegion,
    pub steps: [f64; 3],
    pub dims: [usize; 3],
    pub time_bin: TimeBin,
    pub overrides: WhatIfOverrides,
    pub proximity: ProximityDims,
    pub distance: DistanceParams,
    pub model_hash: String,
    /// False for outlier maps built on a max-normalized outlier density.
    pub probabilistic: bool,
    /// Values that overshot `[0, 1]` by more than 1e-9 before clipping.
    pub clip_events: usize,
    /// Lattice points outside the outlier density grid (outlier maps only).
    pub out_of_region: usize,
    pub values: Vec<f64>,
}

impl MapGrid {
    pub fn node(&self, i: usize, j: usize, k: usize) -> PointEnu {
        PointEnu::new(
            self.region.lo.x + i as f64 * self.steps[0],
            self.region.lo.y + j as f64 * self.steps[1],
            self.region.lo.z + k as f64 * self.steps[2],
        )
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Altitude level `k` as a standalone slice.
    pub fn slice(&self, k: usize) -> Result<MapSlice> {
        if k >= self.dims[2] {
            return Err(Error::invalid(format!("level index {k} outside 0..{}", self.dims[2])));
        }
        let n = self.dims[0] * self.dims[1];
        let altitude_ft = self.node(0, 0, k).z;
        Ok(MapSlice {
            version: self.version.clone(),
            kind: self.kind,
            model_hash: self.model_hash.clone(),
            time_bin: self.time_bin,
            altitude_ft,
            flight_level: (altitude_ft / 100.0).round() as i64,
            x0: self.region.lo.x,
            y0: self.region.lo.y,
            dx: self.steps[0],
            dy: self.steps[1],
            nx: self.dims[0],
            ny: self.dims[1],
            probabilistic: self.probabilistic,
            values: self.values[k * n..(k + 1) * n].to_vec(),
        })
    }

    /// Index of the level closest to flight level `fl`.
    pub fn level_of(&self, fl: f64) -> Result<usize> {
        let z = fl * 100.0;
        let u = (z - self.region.lo.z) / self.steps[2];
        let k = u.round();
        if !(k >= 0.0) || k as usize >= self.dims[2] || (u - k).abs() > 1e-6 {
            let levels: Vec<i64> = (0..self.dims[2]).map(|k| (self.node(0, 0, k).z / 100.0).round() as i64).collect();
            return Err(Error::invalid(format!("flight level {fl} not on the map; levels: {levels:?}")));
        }
        Ok(k as usize)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.version != MAP_VERSION {
            return Err(Error::Format(format!("unsupported map version `{}`", m.version)));
        }
        if m.values.len() != m.dims.iter().product::<usize>() {
            return Err(Error::Format("map value count does not match its dimensions".into()));
        }
        Ok(m)
    }
}

/// One altitude level of a map, row-major with x fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSlice {
    pub version: String,
    pub kind: MapKind,
    pub model_hash: String,
    pub time_bin: TimeBin,
    pub altitude_ft: f64,
    pub flight_level: i64,
    pub x0: f64,
    pub y0: f64,
    pub dx: f64,
    pub dy: f64,
    pub nx: usize,
    pub ny: usize,
    pub probabilistic: bool,
    pub values: Vec<f64>,
}

/// CSV of level `k`: a header of x coordinates, then one row per y.
pub fn map_slice_csv(grid: &MapGrid, k: usize) -> Result<String> {
    let s = grid.slice(k)?;
    let mut out = String::from("y_nm\\x_nm");
    for i in 0..s.nx {
        let _ = write!(out, ",{}", s.x0 + i as f64 * s.dx);
    }
    out.push('\n');
    for j in 0..s.ny {
        let _ = write!(out, "{}", s.y0 + j as f64 * s.dy);
        for i in 0..s.nx {
            let _ = write!(out, ",{}", s.values[i + s.nx * j]);
        }
        out.push('\n');
    }
    Ok(out)
}

struct Evaluated {
    values: Vec<f64>,
    clips: usize,
    out_of_region: usize,
}

fn clip(raw: f64, hi: f64, clips: &mut usize) -> f64 {
    if raw > hi + CLIP_TOLERANCE || raw < -CLIP_TOLERANCE {
        *clips += 1;
    }
    raw.clamp(0.0, hi.max(0.0))
}

/// Evaluate a map over the request lattice.
pub fn generate_map(
    model: &ModelBundle,
    request: &MapRequest,
    overrides: &WhatIfOverrides,
    parallelism: Parallelism,
) -> Result<MapGrid> {
    let dims = request.dims()?;
    request.distance.validate()?;
    let flows = resolve_flows(model, request.time_bin, overrides, &request.distance)?;
    let prox = overrides.dims();

    let outliers: Option<OutlierDensity> = match request.kind {
        MapKind::Outlier => {
            let mut d = model.outliers.clone();
            for inj in &overrides.injected_outliers {
                d.inject_uniform(
                    [inj.lo.x, inj.lo.y, inj.lo.z],
                    [inj.hi.x, inj.hi.y, inj.hi.z],
                    inj.expected_count,
                )?;
            }
            Some(d)
        }
        _ => None,
    };

    let template = MapGrid {
        version: MAP_VERSION.to_owned(),
        kind: request.kind,
        region: request.region,
        steps: request.steps,
        dims,
        time_bin: request.time_bin,
        overrides: overrides.clone(),
        proximity: prox,
        distance: request.distance,
        model_hash: model.model_hash()?,
        probabilistic: outliers.as_ref().is_none_or(|d| d.mode == OutlierMode::Occupancy),
        clip_events: 0,
        out_of_region: 0,
        values: Vec::new(),
    };

    let row = |r: usize| -> Evaluated {
        let (j, k) = (r % dims[1], r / dims[1]);
        let mut ev = Evaluated { values: Vec::with_capacity(dims[0]), clips: 0, out_of_region: 0 };
        let mut per_flow = vec![0.0; flows.len()];
        for i in 0..dims[0] {
            let p = template.node(i, j, k);
            for (slot, f) in per_flow.iter_mut().zip(&flows) {
                *slot = f.p1_flow(&p, prox);
            }
            let p1 = combine_presence(&per_flow);
            let v = match request.kind {
                MapKind::Presence => clip(p1, 1.0, &mut ev.clips),
                MapKind::Conflict => {
                    let p1c = p1.clamp(0.0, 1.0);
                    clip(p1 - exactly_one(&per_flow), p1c, &mut ev.clips)
                }
                MapKind::Outlier => {
                    let o = outlier_factor(&p, outliers.as_ref().expect("outlier density"), prox);
                    if o.out_of_region {
                        ev.out_of_region += 1;
                    }
                    clip(p1.clamp(0.0, 1.0) * o.value, 1.0, &mut ev.clips)
                }
            };
            ev.values.push(v);
        }
        ev
    };

    let rows = dims[1] * dims[2];
    let evaluated: Vec<Evaluated> = match parallelism {
        Parallelism::Sequential => (0..rows).map(row).collect(),
        Parallelism::Parallel => (0..rows).into_par_iter().map(row).collect(),
    };
    let mut grid = template;
    grid.values.reserve(dims.iter().product());
    for ev in evaluated {
        grid.values.extend(ev.values);
        grid.clip_events += ev.clips;
        grid.out_of_region += ev.out_of_region;
    }
    Ok(grid)
}
