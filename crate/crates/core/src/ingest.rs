//! Trajectory log ingestion.
//!
//! Files are UTF-8 text with a mandatory header line
//! `flight_id,timestamp_s,lat_deg,lon_deg,alt_ft` followed by one radar fix
//! per line. Fixes of different flights may be interleaved.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_lat_lon, PointEnu};

pub const HEADER: &str = "flight_id,timestamp_s,lat_deg,lon_deg,alt_ft";

/// Number of points every trajectory is resampled to.
pub const DEFAULT_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawSample {
    pub timestamp: i64,
    pub lat: f64,
    pub lon: f64,
    pub alt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrajectory {
    pub flight_id: String,
    pub samples: Vec<RawSample>,
}

impl RawTrajectory {
    pub fn entry_time(&self) -> i64 {
        self.samples.first().map_or(0, |s| s.timestamp)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedFile {
    pub trajectories: Vec<RawTrajectory>,
    pub data_lines: usize,
    pub malformed_lines: usize,
    /// Flights dropped because fewer than two valid fixes remained.
    pub short_flights: usize,
}

pub fn parse_trajectory_file(path: impl AsRef<Path>) -> Result<ParsedFile> {
    let text = fs::read_to_string(path)?;
    parse_trajectories(&text)
}

pub fn parse_trajectories(text: &str) -> Result<ParsedFile> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return Ok(ParsedFile::default());
    };
    if header.trim() != HEADER {
        return Err(Error::Format(format!("expected header `{HEADER}`, found `{}`", header.trim())));
    }

    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Vec<RawSample>> = HashMap::new();
    let mut data_lines = 0;
    let mut malformed = 0;
    for (_, line) in lines {
        data_lines += 1;
        match parse_line(line) {
            Some((id, sample)) => {
                let entry = by_id.entry(id.to_owned()).or_insert_with(|| {
                    order.push(id.to_owned());
                    Vec::new()
                });
                entry.push(sample);
            }
            None => malformed += 1,
        }
    }
    if data_lines > 0 && 2 * malformed > data_lines {
        return Err(Error::Format(format!("{malformed} of {data_lines} lines are malformed")));
    }

    let mut trajectories = Vec::with_capacity(order.len());
    let mut short_flights = 0;
    for id in order {
        let mut samples = by_id.remove(&id).unwrap_or_default();
        samples.sort_by_key(|s| s.timestamp);
        let before = samples.len();
        samples.dedup_by_key(|s| s.timestamp);
        malformed += before - samples.len();
        if samples.len() < 2 {
            short_flights += 1;
            continue;
        }
        trajectories.push(RawTrajectory { flight_id: id, samples });
    }
    Ok(ParsedFile {
        trajectories,
        data_lines,
        malformed_lines: malformed,
        short_flights,
    })
}

fn parse_line(line: &str) -> Option<(&str, RawSample)> {
    let mut it = line.trim().split(',');
    let id = it.next()?.trim();
    let timestamp = it.next()?.trim().parse::<i64>().ok()?;
    let lat = it.next()?.trim().parse::<f64>().ok()?;
    let lon = it.next()?.trim().parse::<f64>().ok()?;
    let alt = it.next()?.trim().parse::<f64>().ok()?;
    if it.next().is_some() || id.is_empty() {
        return None;
    }
    let ok = lat.abs() <= 90.0 && lon.abs() <= 180.0 && alt.is_finite() && alt >= 0.0;
    ok.then_some((id, RawSample { timestamp, lat, lon, alt }))
}

/// Render trajectories in the file format; [`parse_trajectories`] inverts it.
pub fn serialize_trajectories(trajs: &[RawTrajectory]) -> String {
    let mut out = String::with_capacity(64 * trajs.iter().map(|t| t.samples.len()).sum::<usize>() + 64);
    out.push_str(HEADER);
    out.push('\n');
    for t in trajs {
        for s in &t.samples {
            out.push_str(&format!("{},{},{},{},{}\n", t.flight_id, s.timestamp, s.lat, s.lon, s.alt));
        }
    }
    out
}

pub fn write_trajectory_file(path: impl AsRef<Path>, trajs: &[RawTrajectory]) -> Result<()> {
    fs::write(path, serialize_trajectories(trajs))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningThresholds {
    /// kt
    pub max_ground_speed: f64,
    /// ft/min
    pub max_climb_rate: f64,
    /// s
    pub max_gap: f64,
    /// ft; at least one fix must reach it
    pub min_top_altitude: f64,
}

impl Default for CleaningThresholds {
    fn default() -> Self {
        Self {
            max_ground_speed: 700.0,
            max_climb_rate: 8000.0,
            max_gap: 600.0,
            min_top_altitude: 25_000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RejectReason {
    Speed,
    Climb,
    Gap,
    Altitude,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::Speed => "speed",
            RejectReason::Climb => "climb",
            RejectReason::Gap => "gap",
            RejectReason::Altitude => "altitude",
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct CleaningOutcome {
    pub clean: Vec<RawTrajectory>,
    pub rejected: Vec<(RawTrajectory, RejectReason)>,
}

/// Horizontal distance in NM between two fixes, flat earth at their mean latitude.
fn fix_distance_nm(a: &RawSample, b: &RawSample) -> f64 {
    let mid = (0.5 * (a.lat + b.lat)).to_radians().cos();
    let dy = 60.0 * (b.lat - a.lat);
    let dx = 60.0 * (b.lon - a.lon) * mid;
    dx.hypot(dy)
}

/// Ground speed of every segment, in kt.
pub fn segment_ground_speeds(traj: &RawTrajectory) -> Vec<f64> {
    traj.samples
        .windows(2)
        .map(|w| {
            let dt_h = (w[1].timestamp - w[0].timestamp) as f64 / 3600.0;
            fix_distance_nm(&w[0], &w[1]) / dt_h
        })
        .collect()
}

pub fn rejection_reason(traj: &RawTrajectory, th: &CleaningThresholds) -> Option<RejectReason> {
    for w in traj.samples.windows(2) {
        let dt = (w[1].timestamp - w[0].timestamp) as f64;
        if dt > th.max_gap {
            return Some(RejectReason::Gap);
        }
        let speed = fix_distance_nm(&w[0], &w[1]) / (dt / 3600.0);
        if speed > th.max_ground_speed {
            return Some(RejectReason::Speed);
        }
        let climb = (w[1].alt - w[0].alt) / (dt / 60.0);
        if climb.abs() > th.max_climb_rate {
            return Some(RejectReason::Climb);
        }
    }
    let top = traj.samples.iter().map(|s| s.alt).fold(f64::NEG_INFINITY, f64::max);
    (top < th.min_top_altitude).then_some(RejectReason::Altitude)
}

pub fn clean_trajectories(raw: Vec<RawTrajectory>, th: &CleaningThresholds) -> CleaningOutcome {
    let mut out = CleaningOutcome::default();
    for t in raw {
        match rejection_reason(&t, th) {
            None => out.clean.push(t),
            Some(r) => out.rejected.push((t, r)),
        }
    }
    out
}

/// Flat-earth projection anchored at the airspace origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub origin_lat: f64,
    pub origin_lon: f64,
}

impl Projection {
    /// Origin at the centre of the fixes' latitude/longitude bounding box.
    pub fn centered_on(trajs: &[RawTrajectory]) -> Option<Self> {
        let mut lat = (f64::INFINITY, f64::NEG_INFINITY);
        let mut lon = (f64::INFINITY, f64::NEG_INFINITY);
        for s in trajs.iter().flat_map(|t| &t.samples) {
            lat = (lat.0.min(s.lat), lat.1.max(s.lat));
            lon = (lon.0.min(s.lon), lon.1.max(s.lon));
        }
        lat.0.is_finite().then(|| Self {
            origin_lat: 0.5 * (lat.0 + lat.1),
            origin_lon: 0.5 * (lon.0 + lon.1),
        })
    }

    pub fn point(&self, s: &RawSample) -> Result<PointEnu> {
        let (x, y) = project_lat_lon(s.lat, s.lon, self.origin_lat, self.origin_lon)?;
        Ok(PointEnu::new(x, y, s.alt))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampledTrajectory {
    pub flight_id: String,
    pub points: Vec<PointEnu>,
    pub entry_time: i64,
    pub exit_time: i64,
    /// kt, one per original segment
    pub ground_speeds: Vec<f64>,
}

/// Resample a projected polyline to `l` points equally spaced in horizontal
/// arc length; altitude follows the same parameterization.
pub fn resample_polyline(path: &[PointEnu], l: usize) -> Option<Vec<PointEnu>> {
    if l < 2 || path.len() < 2 {
        return None;
    }
    let mut cum = Vec::with_capacity(path.len());
    cum.push(0.0);
    for w in path.windows(2) {
        let last = *cum.last().unwrap_or(&0.0);
        cum.push(last + w[0].horizontal_distance(&w[1]));
    }
    let total = *cum.last().unwrap_or(&0.0);
    if !(total > 0.0) {
        return None;
    }
    let mut out = Vec::with_capacity(l);
    out.push(path[0]);
    let mut seg = 0;
    for i in 1..l - 1 {
        let target = total * i as f64 / (l - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < target {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { (target - cum[seg]) / len } else { 0.0 };
        let (a, b) = (path[seg], path[seg + 1]);
        out.push(PointEnu::new(
            a.x + t * (b.x - a.x),
            a.y + t * (b.y - a.y),
            a.z + t * (b.z - a.z),
        ));
    }
    out.push(path[path.len() - 1]);
    Some(out)
}

pub fn resample(traj: &RawTrajectory, l: usize, proj: &Projection) -> Result<ResampledTrajectory> {
    if l < 2 {
        return Err(Error::invalid(format!("cannot resample to {l} points")));
    }
    let path = traj.samples.iter().map(|s| proj.point(s)).collect::<Result<Vec<_>>>()?;
    let points = resample_polyline(&path, l).ok_or_else(|| Error::DegenerateTrajectory(traj.flight_id.clone()))?;
    Ok(ResampledTrajectory {
        flight_id: traj.flight_id.clone(),
        points,
        entry_time: traj.entry_time(),
        exit_time: traj.samples.last().map_or(0, |s| s.timestamp),
        ground_speeds: segment_ground_speeds(traj),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: i64, lat: f64, lon: f64, alt: f64) -> RawSample {
        RawSample { timestamp: t, lat, lon, alt }
    }

    /// Straight eastbound cruise at `kt` knots, one fix per minute.
    fn cruise(id: &str, kt: f64, alt: f64, n: usize) -> RawTrajectory {
        let lat: f64 = 41.0;
        let dlon_per_min = kt / 60.0 / (60.0 * lat.to_radians().cos());
        RawTrajectory {
            flight_id: id.into(),
            samples: (0..n)
                .map(|i| sample(60 * i as i64, lat, -82.0 + dlon_per_min * i as f64, alt))
                .collect(),
        }
    }

    #[test]
    fn empty_file_and_header_only() {
        assert!(parse_trajectories("").unwrap().trajectories.is_empty());
        assert!(parse_trajectories(&format!("{HEADER}\n")).unwrap().trajectories.is_empty());
    }

    #[test]
    fn missing_header_is_a_format_error() {
        let err = parse_trajectories("A,0,41,-81,35000\n").unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn interleaved_flights_are_grouped_and_sorted() {
        let mut text = String::from(HEADER);
        text.push('\n');
        for i in (0..10).rev() {
            text.push_str(&format!("A,{},41.0,{},35000\n", 60 * i, -81.0 + 0.01 * i as f64));
            text.push_str(&format!("B,{},42.0,{},33000\n", 60 * i + 7, -80.0 - 0.01 * i as f64));
        }
        let parsed = parse_trajectories(&text).unwrap();
        assert_eq!(parsed.trajectories.len(), 2);
        for t in &parsed.trajectories {
            assert_eq!(t.samples.len(), 10);
            assert!(t.samples.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
        }
        assert_eq!(parsed.malformed_lines, 0);
    }

    #[test]
    fn malformed_lines_are_counted_until_majority() {
        let text = format!("{HEADER}\nA,0,41,-81,35000\nA,60,41,-81.1,35000\ngarbage\nA,x,1,2,3\nA,120,41,-81.2,35000\n");
        let p = parse_trajectories(&text).unwrap();
        assert_eq!(p.malformed_lines, 2);
        assert_eq!(p.trajectories[0].samples.len(), 3);

        let bad = format!("{HEADER}\nA,0,41,-81,35000\nno\nnope\n");
        assert!(matches!(parse_trajectories(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn serialize_parse_round_trip() {
        let trajs = vec![cruise("X1", 450.0, 35000.0, 12), cruise("X2", 470.5, 37000.0, 5)];
        let back = parse_trajectories(&serialize_trajectories(&trajs)).unwrap();
        assert_eq!(back.trajectories, trajs);
    }

    #[test]
    fn cruise_is_kept_and_teleport_rejected() {
        let th = CleaningThresholds::default();
        assert_eq!(rejection_reason(&cruise("C", 450.0, 35000.0, 30), &th), None);

        let mut jump = cruise("J", 450.0, 35000.0, 30);
        // 100 NM north within one minute
        jump.samples[10].lat += 100.0 / 60.0;
        assert_eq!(rejection_reason(&jump, &th), Some(RejectReason::Speed));
    }

    #[test]
    fn climb_gap_and_altitude_rules() {
        let th = CleaningThresholds::default();
        let mut c = cruise("C", 450.0, 35000.0, 10);
        c.samples[5].alt = 45000.0;
        assert_eq!(rejection_reason(&c, &th), Some(RejectReason::Climb));

        let mut g = cruise("G", 450.0, 35000.0, 10);
        for s in &mut g.samples[5..] {
            s.timestamp += 3600;
        }
        assert_eq!(rejection_reason(&g, &th), Some(RejectReason::Gap));

        assert_eq!(rejection_reason(&cruise("L", 300.0, 20000.0, 10), &th), Some(RejectReason::Altitude));
    }

    #[test]
    fn cleaning_partitions_and_is_idempotent() {
        let th = CleaningThresholds::default();
        let mut bad = cruise("B", 450.0, 35000.0, 10);
        bad.samples[3].lon += 3.0;
        let input = vec![cruise("A", 450.0, 35000.0, 10), bad, cruise("C", 420.0, 36000.0, 10)];
        let out = clean_trajectories(input.clone(), &th);
        assert_eq!(out.clean.len() + out.rejected.len(), input.len());
        assert_eq!(out.rejected[0].0.flight_id, "B");
        let again = clean_trajectories(out.clean.clone(), &th);
        assert!(again.rejected.is_empty());
    }

    #[test]
    fn straight_segment_resamples_to_equal_steps() {
        let path = [PointEnu::new(0.0, 0.0, 30000.0), PointEnu::new(70.0, 0.0, 37000.0)];
        let r = resample_polyline(&path, 8).unwrap();
        assert_eq!(r.len(), 8);
        for (i, p) in r.iter().enumerate() {
            assert!((p.x - 10.0 * i as f64).abs() < 1e-12);
            assert_eq!(p.y, 0.0);
            assert!((p.z - (30000.0 + 1000.0 * i as f64)).abs() < 1e-9);
        }
    }

    /// Arc-length positions of the outputs compared with a 10⁴-point dense
    /// parameterization of the same L-shaped path.
    #[test]
    fn l_shaped_path_matches_dense_arc_length() {
        let path = [
            PointEnu::new(0.0, 0.0, 35000.0),
            PointEnu::new(30.0, 0.0, 35000.0),
            PointEnu::new(30.0, 40.0, 35000.0),
        ];
        let r = resample_polyline(&path, 8).unwrap();

        // 10⁴-scale sampling with the corner on a node
        let n = 10_500;
        let dense: Vec<PointEnu> = (0..=n)
            .map(|i| {
                let s = 70.0 * i as f64 / n as f64;
                if s <= 30.0 {
                    PointEnu::new(s, 0.0, 35000.0)
                } else {
                    PointEnu::new(30.0, s - 30.0, 35000.0)
                }
            })
            .collect();
        // arc length of the closest point on the dense polyline
        let arc_of = |p: &PointEnu| -> f64 {
            let (mut best, mut arc, mut acc) = (f64::INFINITY, 0.0, 0.0);
            for w in dense.windows(2) {
                let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
                let len2 = dx * dx + dy * dy;
                let t = (((p.x - w[0].x) * dx + (p.y - w[0].y) * dy) / len2).clamp(0.0, 1.0);
                let d = (w[0].x + t * dx - p.x).hypot(w[0].y + t * dy - p.y);
                if d < best {
                    best = d;
                    arc = acc + t * len2.sqrt();
                }
                acc += len2.sqrt();
            }
            arc
        };
        for (i, p) in r.iter().enumerate() {
            let expected = 10.0 * i as f64;
            let got = arc_of(p);
            assert!((got - expected).abs() < 1e-6, "point {i}: {got} vs {expected}");
        }
    }

    #[test]
    fn endpoints_preserved_and_degenerate_rejected() {
        let proj = Projection { origin_lat: 41.0, origin_lon: -82.0 };
        let t = cruise("E", 450.0, 35000.0, 17);
        let r = resample(&t, 8, &proj).unwrap();
        assert_eq!(r.points[0], proj.point(&t.samples[0]).unwrap());
        assert_eq!(r.points[7], proj.point(&t.samples[16]).unwrap());
        assert_eq!(r.ground_speeds.len(), 16);
        assert!(r.ground_speeds.iter().all(|v| (v - 450.0).abs() < 0.5));

        let still = RawTrajectory {
            flight_id: "S".into(),
            samples: vec![sample(0, 41.0, -82.0, 35000.0), sample(60, 41.0, -82.0, 36000.0)],
        };
        assert!(matches!(resample(&still, 8, &proj), Err(Error::DegenerateTrajectory(_))));
    }
}
