//! Spatial density of outlier traffic on a lattice of cubes.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointEnu;

/// Maximum horizontal interpolation step, NM.
pub const MAX_STEP_NM: f64 = 0.5;
/// Maximum vertical interpolation step, ft.
pub const MAX_STEP_FT: f64 = 500.0;

/// Axis-aligned lattice of cells. Cell `(i, j, k)` spans
/// `origin + [i, i+1)·cell` on each axis; storage is x fastest, then y, then z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellGrid {
    pub origin: PointEnu,
    /// Cell size: NM, NM, ft.
    pub cell: [f64; 3],
    pub dims: [usize; 3],
}

impl CellGrid {
    /// Cover `[lo, hi]` with cells of the given size; the upper bound is
    /// rounded up to a whole cell.
    pub fn covering(lo: PointEnu, hi: PointEnu, cell: [f64; 3]) -> Result<Self> {
        let span = [hi.x - lo.x, hi.y - lo.y, hi.z - lo.z];
        if span.iter().chain(&cell).any(|v| !v.is_finite()) || cell.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::invalid("cell grid needs finite bounds and positive cell sizes"));
        }
        if span.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("cell grid region is empty"));
        }
        let dims = [0, 1, 2].map(|a| ((span[a] / cell[a]).ceil() as usize).max(1));
        Ok(Self { origin: lo, cell, dims })
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn lo(&self) -> [f64; 3] {
        [self.origin.x, self.origin.y, self.origin.z]
    }

    pub fn hi(&self) -> [f64; 3] {
        let lo = self.lo();
        [0, 1, 2].map(|a| lo[a] + self.dims[a] as f64 * self.cell[a])
    }

    pub fn contains(&self, p: &PointEnu) -> bool {
        self.cell_of(p).is_some()
    }

    /// Flat index of the cell containing `p`.
    pub fn cell_of(&self, p: &PointEnu) -> Option<usize> {
        let c = [p.x, p.y, p.z];
        let lo = self.lo();
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let u = ((c[a] - lo[a]) / self.cell[a]).floor();
            if !(u >= 0.0) || u >= self.dims[a] as f64 {
                return None;
            }
            idx[a] = u as usize;
        }
        Some(self.flat(idx))
    }

    fn flat(&self, [i, j, k]: [usize; 3]) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    /// Cells overlapping the box `[lo, hi]` with the fraction of each cell's
    /// volume inside the box.
    pub fn overlaps(&self, lo: [f64; 3], hi: [f64; 3]) -> Vec<(usize, f64)> {
        let glo = self.lo();
        let mut ranges: [Vec<(usize, f64)>; 3] = Default::default();
        for a in 0..3 {
            let first = ((lo[a] - glo[a]) / self.cell[a]).floor().max(0.0);
            let last = ((hi[a] - glo[a]) / self.cell[a]).ceil().min(self.dims[a] as f64);
            if !(last > first) {
                return Vec::new();
            }
            for i in first as usize..last as usize {
                let c0 = glo[a] + i as f64 * self.cell[a];
                let w = (hi[a].min(c0 + self.cell[a]) - lo[a].max(c0)) / self.cell[a];
                if w > 0.0 {
                    ranges[a].push((i, w));
                }
            }
        }
        let mut out = Vec::with_capacity(ranges[0].len() * ranges[1].len() * ranges[2].len());
        for &(k, wz) in &ranges[2] {
            for &(j, wy) in &ranges[1] {
                for &(i, wx) in &ranges[0] {
                    out.push((self.flat([i, j, k]), wx * wy * wz));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutlierMode {
    /// Flight counts per cube rescaled to a maximum of 1.
    #[serde(rename = "paper")]
    Normalized,
    /// Expected number of outliers in each cube at a random instant.
    Occupancy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierDensity {
    pub grid: CellGrid,
    pub mode: OutlierMode,
    /// Serialized sparsely as `{"len": n, "nonzero": [[index, value], ...]}`.
    #[serde(with = "sparse")]
    pub values: Vec<f64>,
}

mod sparse {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Sparse {
        len: usize,
        nonzero: Vec<(usize, f64)>,
    }

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let nonzero = values.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect();
        Sparse { len: values.len(), nonzero }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let sp = Sparse::deserialize(d)?;
        let mut values = vec![0.0; sp.len];
        for (i, v) in sp.nonzero {
            *values
                .get_mut(i)
                .ok_or_else(|| serde::de::Error::custom(format!("cell index {i} outside 0..{}", sp.len)))? = v;
        }
        Ok(values)
    }
}

/// A flight as timestamped positions (s, ENU).
pub type TimedTrack = Vec<(f64, PointEnu)>;

impl OutlierDensity {
    pub fn zeros(grid: CellGrid, mode: OutlierMode) -> Self {
        Self { grid, mode, values: vec![0.0; grid.len()] }
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// `∫ f_O` over `[lo, hi]` in cell units: each cell contributes its value
    /// times the fraction of its volume inside the box.
    pub fn integrate_box(&self, lo: [f64; 3], hi: [f64; 3]) -> f64 {
        self.grid
            .overlaps(lo, hi)
            .into_iter()
            .map(|(c, w)| self.values[c] * w)
            .sum()
    }

    /// Mean cell value over `[lo, hi]`.
    pub fn mean_over_box(&self, lo: [f64; 3], hi: [f64; 3]) -> f64 {
        let cells: f64 = [0, 1, 2].iter().map(|&a| (hi[a] - lo[a]) / self.grid.cell[a]).product();
        if cells > 0.0 {
            self.integrate_box(lo, hi) / cells
        } else {
            0.0
        }
    }

    /// Add `expected_count` outliers spread uniformly over `[lo, hi]`.
    pub fn inject_uniform(&mut self, lo: [f64; 3], hi: [f64; 3], expected_count: f64) -> Result<()> {
        if self.mode != OutlierMode::Occupancy {
            return Err(Error::invalid("outlier injection needs an occupancy-mode density"));
        }
        if !(expected_count >= 0.0) || (0..3).any(|a| !(hi[a] > lo[a])) {
            return Err(Error::invalid("injection needs a nonempty region and a nonnegative count"));
        }
        let cells: f64 = (0..3).map(|a| (hi[a] - lo[a]) / self.grid.cell[a]).product();
        for (c, w) in self.grid.overlaps(lo, hi) {
            self.values[c] += expected_count * w / cells;
        }
        Ok(())
    }
}

/// Cells visited by a track and the time spent in each.
fn dwell_cells(grid: &CellGrid, track: &[(f64, PointEnu)]) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for w in track.windows(2) {
        let ((t0, p0), (t1, p1)) = (w[0], w[1]);
        let steps = ((p0.horizontal_distance(&p1) / MAX_STEP_NM).ceil())
            .max(((p1.z - p0.z).abs() / MAX_STEP_FT).ceil())
            .max(1.0) as usize;
        let dt = (t1 - t0) / steps as f64;
        for s in 0..steps {
            let f = (s as f64 + 0.5) / steps as f64;
            let p = PointEnu::new(p0.x + f * (p1.x - p0.x), p0.y + f * (p1.y - p0.y), p0.z + f * (p1.z - p0.z));
            if let Some(c) = grid.cell_of(&p) {
                out.push((c, dt));
            }
        }
    }
    out
}

/// Build `f_O` from outlier flights. `observation_seconds` is the length of
/// the observation period, used by occupancy mode only.
pub fn build_outlier_density(
    tracks: &[TimedTrack],
    grid: CellGrid,
    mode: OutlierMode,
    observation_seconds: f64,
) -> Result<OutlierDensity> {
    if mode == OutlierMode::Occupancy && !(observation_seconds > 0.0) {
        return Err(Error::invalid("occupancy mode needs a positive observation period"));
    }
    let mut density = OutlierDensity::zeros(grid, mode);
    for track in tracks {
        let cells = dwell_cells(&grid, track);
        match mode {
            OutlierMode::Normalized => {
                let visited: HashSet<usize> = cells.iter().map(|&(c, _)| c).collect();
                for c in visited {
                    density.values[c] += 1.0;
                }
            }
            OutlierMode::Occupancy => {
                for (c, dt) in cells {
                    density.values[c] += dt / observation_seconds;
                }
            }
        }
    }
    if mode == OutlierMode::Normalized {
        let max = density.values.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            density.values.iter_mut().for_each(|v| *v /= max);
        }
    }
    Ok(density)
}
