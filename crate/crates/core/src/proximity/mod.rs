//! Presence, conflict and outlier-proximity probabilities at a point, and
//! the maps built from them.

mod distance;
mod map;

use serde::{Deserialize, Serialize};

use crate::flowmodel::{Flow, OutlierDensity, OutlierMode};
use crate::geometry::{intersect_box, FlowBoxExtents, PointEnu, ProximityBox, ProximityDims};

pub use distance::{
    inter_aircraft_pdf, interp_window_density, residual_pdf_first, residual_pdf_k, DistanceMode, DistanceParams,
    FlowDistanceModel, SpeedEstimate, MAX_NODES, SPEED_NODES,
};
pub use map::{
    generate_map, map_slice_csv, resolve_flows, MapGrid, MapKind, MapRegion, MapRequest, MapSlice,
    OutlierInjection, Parallelism, WhatIfOverrides, MAP_VERSION,
};

/// A flow with its boxes precomputed and its spacing law for one time bin.
#[derive(Debug, Clone)]
pub struct FlowPresence<'a> {
    pub flow: &'a Flow,
    pub boxes: Vec<FlowBoxExtents>,
    pub dist: FlowDistanceModel,
}

impl<'a> FlowPresence<'a> {
    pub fn new(flow: &'a Flow, dist: FlowDistanceModel) -> Self {
        Self { flow, boxes: flow.boxes(), dist }
    }

    /// `P₁(P, ℬ_i^k)`.
    pub fn p1_box(&self, p: &PointEnu, k: usize, dims: ProximityDims) -> f64 {
        if self.dist.residual_first.is_none() {
            return 0.0;
        }
        let b = &self.boxes[k];
        let prox = ProximityBox::aligned(*p, &b.frame, dims);
        let v = intersect_box(b, &prox);
        if v.empty {
            return 0.0;
        }
        let length = b.extents.along.length();
        // interpolation weight at the entry point of the intersection
        let s = if length > 0.0 { (v.along_lo / length).clamp(0.0, 1.0) } else { 0.0 };
        let (w0, w1) = (&self.flow.windows[k], &self.flow.windows[k + 1]);
        let lateral = (1.0 - s) * w0.lateral_density.integrate(v.lateral_lo, v.lateral_hi)
            + s * w1.lateral_density.integrate(v.lateral_lo, v.lateral_hi);
        let vertical = (1.0 - s) * w0.vertical_density.integrate(v.vert_lo, v.vert_hi)
            + s * w1.vertical_density.integrate(v.vert_lo, v.vert_hi);
        let along = self.dist.along_probability(v.along_length());
        (lateral * vertical * along).clamp(0.0, 1.0)
    }

    /// `P₁(P, ℱ_i) = 1 − Π_k (1 − P₁(P, ℬ_i^k))`.
    pub fn p1_flow(&self, p: &PointEnu, dims: ProximityDims) -> f64 {
        if self.dist.residual_first.is_none() {
            return 0.0;
        }
        let miss: f64 = (0..self.boxes.len()).map(|k| 1.0 - self.p1_box(p, k, dims)).product();
        (1.0 - miss).clamp(0.0, 1.0)
    }
}

/// `1 − Π (1 − p_i)`.
pub fn combine_presence(p: &[f64]) -> f64 {
    1.0 - p.iter().map(|q| 1.0 - q).product::<f64>()
}

/// `Σ_i p_i Π_{j≠i} (1 − p_j)`: probability that exactly one flow is present.
pub(crate) fn exactly_one(p: &[f64]) -> f64 {
    (0..p.len())
        .map(|i| {
            p[i] * p
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| 1.0 - q)
                .product::<f64>()
        })
        .sum()
}

/// `P₁ − Σ_i p_i Π_{j≠i} (1 − p_j)`, clipped to `[0, P₁]`.
pub fn combine_conflict(p: &[f64]) -> f64 {
    let p1 = combine_presence(p);
    (p1 - exactly_one(p)).clamp(0.0, p1.max(0.0))
}

pub fn flow_presences(p: &PointEnu, flows: &[FlowPresence<'_>], dims: ProximityDims) -> Vec<f64> {
    flows.iter().map(|f| f.p1_flow(p, dims)).collect()
}

/// `P₁(P)`: at least one flow aircraft in the proximity volume.
pub fn p1_point(p: &PointEnu, flows: &[FlowPresence<'_>], dims: ProximityDims) -> f64 {
    combine_presence(&flow_presences(p, flows, dims)).clamp(0.0, 1.0)
}

/// `P₂(P)`: aircraft of at least two distinct flows in the proximity volume.
pub fn p2_point(p: &PointEnu, flows: &[FlowPresence<'_>], dims: ProximityDims) -> f64 {
    combine_conflict(&flow_presences(p, flows, dims))
}

/// Outlier-proximity value and whether `P` fell outside the outlier grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierProximity {
    pub value: f64,
    pub out_of_region: bool,
}

/// Outlier term over the axis-aligned proximity box around `P`: in occupancy
/// mode `min(1, expected outliers)`, in normalized mode the mean normalized density.
pub fn outlier_factor(p: &PointEnu, f_o: &OutlierDensity, dims: ProximityDims) -> OutlierProximity {
    if !f_o.grid.contains(p) {
        return OutlierProximity { value: 0.0, out_of_region: true };
    }
    let lo = [p.x - dims.half_lateral, p.y - dims.half_lateral, p.z - dims.half_vertical];
    let hi = [p.x + dims.half_lateral, p.y + dims.half_lateral, p.z + dims.half_vertical];
    let value = match f_o.mode {
        OutlierMode::Occupancy => f_o.integrate_box(lo, hi).min(1.0),
        OutlierMode::Normalized => f_o.mean_over_box(lo, hi),
    };
    OutlierProximity { value, out_of_region: false }
}

/// `P_O(P) = P₁(P) · (outlier term)`.
pub fn po_point(p: &PointEnu, flows: &[FlowPresence<'_>], f_o: &OutlierDensity, dims: ProximityDims) -> OutlierProximity {
    let o = outlier_factor(p, f_o, dims);
    if o.out_of_region || o.value == 0.0 {
        return o;
    }
    OutlierProximity { value: p1_point(p, flows, dims) * o.value, out_of_region: false }
}
