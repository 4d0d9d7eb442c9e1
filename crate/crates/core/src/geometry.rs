//! East-North-Up geometry: flat-earth projection, per-window local frames,
//! oriented boxes and their axis-wise intersection.
//!
//! Horizontal coordinates are nautical miles, altitudes are feet. Local
//! frames are always horizontal: the vertical axis is global up and the
//! longitudinal axis has no vertical component.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nautical miles per degree of latitude.
pub const NM_PER_DEG: f64 = 60.0;

/// A position in the airspace frame: `x` East and `y` North in NM, `z` altitude in ft.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEnu {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl PointEnu {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn horizontal_distance(&self, other: &PointEnu) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.z >= 0.0
    }
}

/// Equirectangular projection about `(origin_lat, origin_lon)`, returning `(x, y)` in NM.
pub fn project_lat_lon(lat: f64, lon: f64, origin_lat: f64, origin_lon: f64) -> Result<(f64, f64)> {
    for (name, v, lim) in [
        ("lat", lat, 90.0),
        ("lon", lon, 180.0),
        ("origin_lat", origin_lat, 90.0),
        ("origin_lon", origin_lon, 180.0),
    ] {
        if !v.is_finite() || v.abs() > lim {
            return Err(Error::invalid(format!("{name} = {v} outside [-{lim}, {lim}]")));
        }
    }
    let y = NM_PER_DEG * (lat - origin_lat);
    let x = NM_PER_DEG * (lon - origin_lon) * origin_lat.to_radians().cos();
    Ok((x, y))
}

/// Inverse of [`project_lat_lon`].
pub fn unproject(x: f64, y: f64, origin_lat: f64, origin_lon: f64) -> (f64, f64) {
    let lat = origin_lat + y / NM_PER_DEG;
    let lon = origin_lon + x / (NM_PER_DEG * origin_lat.to_radians().cos());
    (lat, lon)
}

/// Horizontal frame attached to a track point.
///
/// Only the unit heading is stored; `lateral = up × longitudinal`, so lateral
/// offsets are positive to the left of the direction of flight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame {
    pub origin: PointEnu,
    heading: [f64; 2],
}

impl LocalFrame {
    /// Frame at `origin` whose longitudinal axis points along the horizontal
    /// direction `(dx, dy)`.
    pub fn from_direction(origin: PointEnu, dx: f64, dy: f64) -> Result<Self> {
        let norm = dx.hypot(dy);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateFrame);
        }
        Ok(Self {
            origin,
            heading: [dx / norm, dy / norm],
        })
    }

    pub fn longitudinal(&self) -> [f64; 3] {
        [self.heading[0], self.heading[1], 0.0]
    }

    pub fn lateral(&self) -> [f64; 3] {
        [-self.heading[1], self.heading[0], 0.0]
    }

    pub fn vertical(&self) -> [f64; 3] {
        [0.0, 0.0, 1.0]
    }

    /// Coordinates of `p` in this frame: (along-track NM, lateral NM, altitude ft).
    ///
    /// The vertical coordinate stays absolute altitude.
    pub fn to_local(&self, p: &PointEnu) -> (f64, f64, f64) {
        let dx = p.x - self.origin.x;
        let dy = p.y - self.origin.y;
        let [hx, hy] = self.heading;
        (dx * hx + dy * hy, -dx * hy + dy * hx, p.z)
    }

    /// Inverse of [`LocalFrame::to_local`].
    pub fn to_global(&self, along: f64, lateral: f64, z: f64) -> PointEnu {
        let [hx, hy] = self.heading;
        PointEnu::new(
            self.origin.x + along * hx - lateral * hy,
            self.origin.y + along * hy + lateral * hx,
            z,
        )
    }
}

/// Frame at track point `k`, oriented towards point `k + 1`.
pub fn build_local_frame(track: &[PointEnu], k: usize) -> Result<LocalFrame> {
    if k + 1 >= track.len() {
        return Err(Error::invalid(format!(
            "frame index {k} needs a following point (track has {} points)",
            track.len()
        )));
    }
    let (a, b) = (track[k], track[k + 1]);
    LocalFrame::from_direction(a, b.x - a.x, b.y - a.y)
}

/// Closed interval; `lo > hi` encodes the empty interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn centered(center: f64, half: f64) -> Self {
        Self::new(center - half, center + half)
    }

    pub fn is_empty(&self) -> bool {
        !(self.lo <= self.hi)
    }

    pub fn length(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.hi - self.lo
        }
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Axis-aligned box in some [`LocalFrame`]: along-track and lateral in NM,
/// vertical as absolute altitude in ft.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub along: Interval,
    pub lateral: Interval,
    pub vertical: Interval,
}

impl AxisBox {
    pub fn intersect(&self, other: &AxisBox) -> IntersectionExtents {
        IntersectionExtents::from_box(AxisBox {
            along: self.along.intersect(&other.along),
            lateral: self.lateral.intersect(&other.lateral),
            vertical: self.vertical.intersect(&other.vertical),
        })
    }

    pub fn contains(&self, along: f64, lateral: f64, z: f64) -> bool {
        self.along.contains(along) && self.lateral.contains(lateral) && self.vertical.contains(z)
    }
}

/// A flow box `ℬ` together with the frame its extents are expressed in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowBoxExtents {
    pub frame: LocalFrame,
    pub extents: AxisBox,
}

/// Circumscribing box of the proximity cylinder around `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityBox {
    pub center: PointEnu,
    pub orientation: LocalFrame,
    /// Cylinder radius `a_p` in NM; the box is `2·a_p` wide and long.
    pub half_lateral: f64,
    /// Cylinder half-height `b_p` in ft; the box is `2·b_p` tall.
    pub half_vertical: f64,
}

/// Proximity-volume dimensions shared by every box built for a map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximityDims {
    pub half_lateral: f64,
    pub half_vertical: f64,
}

impl Default for ProximityDims {
    fn default() -> Self {
        Self {
            half_lateral: 2.5,
            half_vertical: 1000.0,
        }
    }
}

impl ProximityDims {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_lateral > 0.0 && self.half_vertical > 0.0)
            || !self.half_lateral.is_finite()
            || !self.half_vertical.is_finite()
        {
            return Err(Error::invalid(format!(
                "proximity half-dimensions must be positive, got {} NM x {} ft",
                self.half_lateral, self.half_vertical
            )));
        }
        Ok(())
    }
}

impl ProximityBox {
    /// Proximity box centered on `center`, aligned with `frame`'s axes.
    pub fn aligned(center: PointEnu, frame: &LocalFrame, dims: ProximityDims) -> Self {
        Self {
            center,
            orientation: LocalFrame { origin: center, heading: frame.heading },
            half_lateral: dims.half_lateral,
            half_vertical: dims.half_vertical,
        }
    }

    /// Extents of this box in `frame`, which must share its heading.
    pub fn extents_in(&self, frame: &LocalFrame) -> AxisBox {
        let (a, l, z) = frame.to_local(&self.center);
        AxisBox {
            along: Interval::centered(a, self.half_lateral),
            lateral: Interval::centered(l, self.half_lateral),
            vertical: Interval::centered(z, self.half_vertical),
        }
    }
}

/// Bounds of `𝒱 = ℬ ∩ 𝒫`: entry/exit coordinates along each local axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntersectionExtents {
    pub along_lo: f64,
    pub along_hi: f64,
    pub lateral_lo: f64,
    pub lateral_hi: f64,
    pub vert_lo: f64,
    pub vert_hi: f64,
    pub empty: bool,
}

impl IntersectionExtents {
    fn from_box(b: AxisBox) -> Self {
        let empty = b.along.is_empty() || b.lateral.is_empty() || b.vertical.is_empty();
        Self {
            along_lo: b.along.lo,
            along_hi: b.along.hi,
            lateral_lo: b.lateral.lo,
            lateral_hi: b.lateral.hi,
            vert_lo: b.vertical.lo,
            vert_hi: b.vertical.hi,
            empty,
        }
    }

    pub fn along_length(&self) -> f64 {
        if self.empty {
            0.0
        } else {
            self.along_hi - self.along_lo
        }
    }
}

/// Intersect a (horizontal) flow box with a proximity box aligned to it.
pub fn intersect_box(flow_box: &FlowBoxExtents, prox: &ProximityBox) -> IntersectionExtents {
    flow_box.extents.intersect(&prox.extents_in(&flow_box.frame))
}
