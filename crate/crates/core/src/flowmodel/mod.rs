//! Generative flow model built from a cluster labeling: flow geometry,
//! window densities, speed law, arrival rates and the outlier density.

mod arrivals;
mod gof;
mod outliers;
mod speed;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_local_frame, AxisBox, FlowBoxExtents, Interval, LocalFrame, PointEnu};
use crate::ingest::ResampledTrajectory;
use crate::pdf::DiscretePdf;

pub use arrivals::{
    day_index, estimate_arrival_rates, proportion_rates, weekday, RateSchedule, RateShares, TimeBin, DEFAULT_TAU,
    SECONDS_PER_DAY, WEEKDAYS,
};
pub use gof::{chi2_exponential, chi2_poisson, GofTestResult, DEFAULT_ALPHA, DEFAULT_BIN_WIDTH, MIN_EXPECTED};
pub use outliers::{
    build_outlier_density, CellGrid, OutlierDensity, OutlierMode, TimedTrack, MAX_STEP_FT, MAX_STEP_NM,
};
pub use speed::{
    fit_speed, fit_speed_or_moments, initial_guess, nelder_mead, TLocationScale, MIN_SPEED_SAMPLES, NU_MAX, NU_MIN,
    SIGMA_MIN,
};

/// Lateral histogram bin, NM.
pub const LATERAL_BIN_NM: f64 = 0.5;
/// Vertical histogram bin, ft.
pub const VERTICAL_BIN_FT: f64 = 200.0;

/// Cross-section of a flow at one track point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub frame: LocalFrame,
    /// Lateral offsets from the track point, NM (positive left of track).
    pub lateral_extent: Interval,
    /// Absolute altitude, ft.
    pub vertical_extent: Interval,
    pub lateral_density: DiscretePdf,
    pub vertical_density: DiscretePdf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub id: usize,
    pub track: Vec<PointEnu>,
    pub windows: Vec<Window>,
    pub speed: TLocationScale,
    /// `π_i^j` per time bin, indexed like [`RateSchedule::lambda_tau`].
    pub rate_share: Vec<f64>,
    pub member_count: usize,
}

impl Flow {
    pub fn n_boxes(&self) -> usize {
        self.track.len().saturating_sub(1)
    }

    /// Box `k`: the hull of windows `k` and `k + 1`, in window `k`'s frame.
    pub fn box_extents(&self, k: usize) -> FlowBoxExtents {
        let (w0, w1) = (&self.windows[k], &self.windows[k + 1]);
        let length = w0.frame.to_local(&self.track[k + 1]).0;
        FlowBoxExtents {
            frame: w0.frame,
            extents: AxisBox {
                along: Interval::new(0.0, length),
                lateral: w0.lateral_extent.hull(&w1.lateral_extent),
                vertical: w0.vertical_extent.hull(&w1.vertical_extent),
            },
        }
    }

    pub fn boxes(&self) -> Vec<FlowBoxExtents> {
        (0..self.n_boxes()).map(|k| self.box_extents(k)).collect()
    }

    /// Horizontal bounding rectangle and altitude range of the tube.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for b in self.boxes() {
            let e = b.extents;
            for (a, l) in [(e.along.lo, e.lateral.lo), (e.along.lo, e.lateral.hi), (e.along.hi, e.lateral.lo), (e.along.hi, e.lateral.hi)] {
                let p = b.frame.to_global(a, l, 0.0);
                lo[0] = lo[0].min(p.x);
                lo[1] = lo[1].min(p.y);
                hi[0] = hi[0].max(p.x);
                hi[1] = hi[1].max(p.y);
            }
            lo[2] = lo[2].min(e.vertical.lo);
            hi[2] = hi[2].max(e.vertical.hi);
        }
        (lo, hi)
    }
}

fn check_members(members: &[ResampledTrajectory], min: usize) -> Result<usize> {
    if members.len() < min {
        return Err(Error::InsufficientData(format!(
            "a flow needs at least {min} members, got {}",
            members.len()
        )));
    }
    let l = members[0].points.len();
    if l < 2 || members.iter().any(|m| m.points.len() != l) {
        return Err(Error::invalid("flow members must share a resampling length of at least 2"));
    }
    Ok(l)
}

/// Mean of the members' k-th points for every k.
pub fn centroid_track(members: &[ResampledTrajectory]) -> Vec<PointEnu> {
    let n = members.len() as f64;
    let l = members.first().map_or(0, |m| m.points.len());
    (0..l)
        .map(|k| {
            let (mut x, mut y, mut z) = (0.0, 0.0, 0.0);
            for m in members {
                x += m.points[k].x;
                y += m.points[k].y;
                z += m.points[k].z;
            }
            PointEnu::new(x / n, y / n, z / n)
        })
        .collect()
}

/// Local frames at every track point; the last one reuses the final heading.
pub fn track_frames(track: &[PointEnu]) -> Result<Vec<LocalFrame>> {
    let l = track.len();
    let mut frames = Vec::with_capacity(l);
    for k in 0..l - 1 {
        frames.push(build_local_frame(track, k)?);
    }
    let last = frames[l - 2];
    frames.push(LocalFrame::from_direction(track[l - 1], last.longitudinal()[0], last.longitudinal()[1])?);
    Ok(frames)
}

/// Signed lateral offsets and altitudes of the members at window `k`.
pub fn window_samples(members: &[ResampledTrajectory], frame: &LocalFrame, k: usize) -> (Vec<f64>, Vec<f64>) {
    members
        .iter()
        .map(|m| {
            let (_, lat, z) = frame.to_local(&m.points[k]);
            (lat, z)
        })
        .unzip()
}

/// Build flow geometry, window densities and the speed law. Rate shares are
/// left empty; they come from the arrival schedule.
pub fn build_flow(id: usize, members: &[ResampledTrajectory]) -> Result<Flow> {
    let l = check_members(members, 2)?;
    let track = centroid_track(members);
    let frames = track_frames(&track)?;
    let windows = (0..l)
        .map(|k| {
            let (lat, vert) = window_samples(members, &frames[k], k);
            let lateral_density = DiscretePdf::histogram(&lat, LATERAL_BIN_NM)?;
            let vertical_density = DiscretePdf::histogram(&vert, VERTICAL_BIN_FT)?;
            let (llo, lhi) = lateral_density.support();
            let (vlo, vhi) = vertical_density.support();
            Ok(Window {
                frame: frames[k],
                lateral_extent: Interval::new(llo, lhi),
                vertical_extent: Interval::new(vlo, vhi),
                lateral_density,
                vertical_density,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let speeds: Vec<f64> = members.iter().flat_map(|m| m.ground_speeds.iter().copied()).collect();
    let speed = fit_speed_or_moments(&speeds)?;
    Ok(Flow {
        id,
        track,
        windows,
        speed,
        rate_share: Vec::new(),
        member_count: members.len(),
    })
}

/// Pearson correlation of lateral offset and altitude at one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowCorrelation {
    pub value: f64,
    /// Either coordinate had zero variance; `value` is reported as 0.
    pub degenerate: bool,
}

pub fn pearson(a: &[f64], b: &[f64]) -> WindowCorrelation {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    let scale_a = 1e-12 * (1.0 + ma.abs());
    let scale_b = 1e-12 * (1.0 + mb.abs());
    if saa.sqrt() <= scale_a * n.sqrt() || sbb.sqrt() <= scale_b * n.sqrt() {
        return WindowCorrelation { value: 0.0, degenerate: true };
    }
    WindowCorrelation { value: (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0), degenerate: false }
}

/// Per-window lateral/vertical correlation of a flow's members.
pub fn lateral_vertical_correlation(flow: &Flow, members: &[ResampledTrajectory]) -> Result<Vec<WindowCorrelation>> {
    let l = check_members(members, 3)?;
    if l != flow.windows.len() {
        return Err(Error::invalid("members and flow have different resampling lengths"));
    }
    Ok((0..l)
        .map(|k| {
            let (lat, vert) = window_samples(members, &flow.windows[k].frame, k);
            pearson(&lat, &vert)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    /// 90th percentile of |corr| over all non-degenerate windows.
    pub p90_abs: f64,
    pub windows: usize,
    pub degenerate: usize,
}

pub fn summarize_correlations(all: &[WindowCorrelation]) -> CorrelationSummary {
    let mut abs: Vec<f64> = all.iter().filter(|c| !c.degenerate).map(|c| c.value.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let p90_abs = if abs.is_empty() {
        0.0
    } else {
        abs[((0.9 * abs.len() as f64).ceil() as usize).clamp(1, abs.len()) - 1]
    };
    CorrelationSummary {
        p90_abs,
        windows: all.len(),
        degenerate: all.len() - abs.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn member(offset: f64, z: f64) -> ResampledTrajectory {
        ResampledTrajectory {
            flight_id: format!("m{offset}"),
            points: (0..8).map(|k| PointEnu::new(-40.0 + 10.0 * k as f64, offset, z)).collect(),
            entry_time: 0,
            exit_time: 0,
            ground_speeds: vec![450.0; 7],
        }
    }

    #[test]
    fn identical_members_give_point_masses() {
        let members = vec![member(0.0, 35000.0); 4];
        let f = build_flow(0, &members).unwrap();
        assert_eq!(f.track, members[0].points);
        for w in &f.windows {
            assert_eq!(w.lateral_density.len(), 3);
            assert_eq!(w.vertical_density.len(), 3);
            assert!(w.lateral_density.mean().abs() < 1e-12);
        }
        assert_eq!(f.speed.mu, 450.0);
    }

    #[test]
    fn symmetric_members_center_the_track() {
        let members = vec![member(-3.0, 35000.0), member(3.0, 35000.0), member(0.0, 35000.0)];
        let f = build_flow(0, &members).unwrap();
        for (p, w) in f.track.iter().zip(&f.windows) {
            assert!(p.y.abs() < 1e-12);
            assert!(w.lateral_density.mean().abs() < 1e-9);
            assert_eq!(w.lateral_extent, Interval::new(-3.5, 3.5));
        }
    }

    #[test]
    fn boxes_chain_along_the_track() {
        let members = vec![member(-1.0, 34000.0), member(1.0, 36000.0)];
        let f = build_flow(3, &members).unwrap();
        assert_eq!(f.n_boxes(), 7);
        for b in f.boxes() {
            assert!((b.extents.along.length() - 10.0).abs() < 1e-12);
            assert_eq!(b.extents.vertical, Interval::new(33800.0, 36200.0));
        }
        let (lo, hi) = f.bounds();
        assert!((lo[0] + 40.0).abs() < 1e-9 && (hi[0] - 30.0).abs() < 1e-9);
    }

    #[test]
    fn too_few_members() {
        assert!(build_flow(0, &[member(0.0, 35000.0)]).is_err());
    }

    #[test]
    fn correlation_of_linear_relation_is_one() {
        let members: Vec<_> = (0..5).map(|i| member(i as f64, 33000.0 + 500.0 * i as f64)).collect();
        let f = build_flow(0, &members).unwrap();
        let c = lateral_vertical_correlation(&f, &members).unwrap();
        assert!(c.iter().all(|w| (w.value - 1.0).abs() < 1e-12 && !w.degenerate));
        let flat: Vec<_> = (0..5).map(|i| member(i as f64, 33000.0)).collect();
        let f = build_flow(0, &flat).unwrap();
        assert!(lateral_vertical_correlation(&f, &flat).unwrap().iter().all(|w| w.degenerate && w.value == 0.0));
    }

    #[test]
    fn summary_percentile() {
        let c: Vec<WindowCorrelation> =
            (1..=10).map(|i| WindowCorrelation { value: -(i as f64) / 10.0, degenerate: false }).collect();
        let s = summarize_correlations(&c);
        assert!((s.p90_abs - 0.9).abs() < 1e-12);
        assert_eq!(s.windows, 10);
    }
}
