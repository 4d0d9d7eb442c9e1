//! Synthetic scenarios with known ground truth, and Monte Carlo snapshot
//! oracles for the analytic probabilities.
//!
//! A scenario is described in TOML:
//!
//! ```toml
//! version = "flowmap-scenario/1"
//! seed = 7
//! days = 1
//! start_time = 1704067200      # unix seconds (default: Monday 2024-01-01)
//! sample_interval_s = 60
//! origin_lat = 41.5
//! origin_lon = -81.7
//!
//! [[flows]]
//! waypoints = [[-150.0, 0.0, 35000.0], [150.0, 0.0, 35000.0]]   # NM, NM, ft
//! lateral_std_nm = 0.5
//! vertical_std_ft = 100.0
//! speed = { mu = 450.0, sigma = 15.0, nu = 5.0 }
//! rate_per_15min = 2.5
//!
//! [outliers]
//! rate_per_15min = 0.5
//! lo = [-150.0, -150.0, 34000.0]
//! hi = [150.0, 150.0, 36000.0]
//! ```

mod monte_carlo;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowmodel::{
    track_frames, CellGrid, Flow, OutlierDensity, OutlierMode, RateSchedule, TLocationScale, Window, DEFAULT_TAU,
    SECONDS_PER_DAY, WEEKDAYS,
};
use crate::geometry::{unproject, Interval, PointEnu};
use crate::ingest::{Projection, RawSample, RawTrajectory};
use crate::model::{sha256_hex, ModelBundle, Provenance, BUNDLE_VERSION};
use crate::pdf::DiscretePdf;

pub use monte_carlo::{mc_presence, McOptions, MonteCarloEstimate, PresenceEstimates, UniformOutliers, MC_BATCH};

pub const SCENARIO_VERSION: &str = "flowmap-scenario/1";
/// Monday 2024-01-01 00:00 UTC.
pub const DEFAULT_START: i64 = 1_704_067_200;
const BINS_PER_DAY: usize = (SECONDS_PER_DAY / DEFAULT_TAU) as usize;
/// Ground speeds outside this range are redrawn.
const SPEED_RANGE_KT: (f64, f64) = (100.0, 650.0);

fn default_start() -> i64 {
    DEFAULT_START
}

fn default_interval() -> i64 {
    60
}

fn default_origin_lat() -> f64 {
    41.5
}

fn default_origin_lon() -> f64 {
    -81.7
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFlow {
    /// Centroid track, `[x NM, y NM, altitude ft]` per waypoint.
    pub waypoints: Vec<[f64; 3]>,
    pub lateral_std_nm: f64,
    pub vertical_std_ft: f64,
    pub speed: TLocationScale,
    pub rate_per_15min: f64,
    /// Optional multiplier of the rate for each 15-minute bin of the day.
    #[serde(default)]
    pub daily_profile: Option<Vec<f64>>,
}

impl ScenarioFlow {
    fn rate_in_bin(&self, j: usize) -> f64 {
        self.rate_per_15min * self.daily_profile.as_ref().map_or(1.0, |p| p[j])
    }

    fn points(&self) -> Vec<PointEnu> {
        self.waypoints.iter().map(|w| PointEnu::new(w[0], w[1], w[2])).collect()
    }
}

fn default_lengths() -> [f64; 2] {
    [60.0, 200.0]
}

fn default_speeds() -> [f64; 2] {
    [380.0, 480.0]
}

/// Outliers fly level straight legs that start uniformly inside `[lo, hi]`
/// with a uniform heading, length and speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierLaw {
    pub rate_per_15min: f64,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    #[serde(default = "default_lengths")]
    pub length_nm: [f64; 2],
    #[serde(default = "default_speeds")]
    pub speed_kt: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub version: String,
    #[serde(default)]
    pub seed: u64,
    pub days: u32,
    #[serde(default = "default_start")]
    pub start_time: i64,
    #[serde(default = "default_interval")]
    pub sample_interval_s: i64,
    #[serde(default = "default_origin_lat")]
    pub origin_lat: f64,
    #[serde(default = "default_origin_lon")]
    pub origin_lon: f64,
    #[serde(default)]
    pub flows: Vec<ScenarioFlow>,
    #[serde(default)]
    pub outliers: Option<OutlierLaw>,
}

fn check_range(name: &str, r: [f64; 2], min: f64) -> Result<()> {
    if !(r[0] >= min && r[1] >= r[0] && r[1].is_finite()) {
        return Err(Error::invalid(format!("{name} must be an increasing pair >= {min}, got {r:?}")));
    }
    Ok(())
}

impl ScenarioSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCENARIO_VERSION {
            return Err(Error::Format(format!(
                "unsupported scenario version `{}` (expected `{SCENARIO_VERSION}`)",
                self.version
            )));
        }
        if self.sample_interval_s <= 0 {
            return Err(Error::invalid("sample_interval_s must be positive"));
        }
        if !(self.origin_lat.abs() < 89.0) || !self.origin_lon.is_finite() {
            return Err(Error::invalid("scenario origin must be a finite latitude/longitude away from the poles"));
        }
        for (i, f) in self.flows.iter().enumerate() {
            let bad = |m: &str| Error::invalid(format!("flow {i}: {m}"));
            if f.waypoints.len() < 2 {
                return Err(bad("needs at least two waypoints"));
            }
            if f.waypoints.iter().flatten().any(|v| !v.is_finite()) {
                return Err(bad("waypoints must be finite"));
            }
            if f.waypoints.windows(2).any(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]) <= 0.0) {
                return Err(bad("consecutive waypoints must differ horizontally"));
            }
            if !(f.lateral_std_nm >= 0.0 && f.vertical_std_ft >= 0.0) {
                return Err(bad("offset standard deviations must be >= 0"));
            }
            if !(f.rate_per_15min >= 0.0) || !f.rate_per_15min.is_finite() {
                return Err(bad("rate_per_15min must be >= 0"));
            }
            TLocationScale::new(f.speed.mu, f.speed.sigma, f.speed.nu).map_err(|e| bad(&e.to_string()))?;
            if !(f.speed.mu > 0.0) {
                return Err(bad("mean speed must be positive"));
            }
            if let Some(p) = &f.daily_profile {
                if p.len() != BINS_PER_DAY || p.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                    return Err(bad(&format!("daily_profile needs {BINS_PER_DAY} values >= 0")));
                }
            }
        }
        if let Some(o) = &self.outliers {
            if !(o.rate_per_15min >= 0.0) || !o.rate_per_15min.is_finite() {
                return Err(Error::invalid("outlier rate_per_15min must be >= 0"));
            }
            if (0..3).any(|a| !(o.hi[a] > o.lo[a]) || !o.lo[a].is_finite() || !o.hi[a].is_finite()) {
                return Err(Error::invalid("outlier region must be nonempty and finite"));
            }
            check_range("outlier length_nm", o.length_nm, 0.0)?;
            check_range("outlier speed_kt", o.speed_kt, 1.0)?;
        }
        Ok(())
    }

    pub fn projection(&self) -> Projection {
        Projection { origin_lat: self.origin_lat, origin_lon: self.origin_lon }
    }
}

/// Generated flights in the trajectory file format with their true flows.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub trajectories: Vec<RawTrajectory>,
    /// Generating flow of each trajectory; `None` for outliers.
    pub truth: Vec<Option<usize>>,
}

impl Scenario {
    /// `flight_id,flow` with `-1` for outliers.
    pub fn truth_csv(&self) -> String {
        let mut out = String::from("flight_id,flow\n");
        for (t, f) in self.trajectories.iter().zip(&self.truth) {
            let f = f.map_or(-1, |f| f as i64);
            out.push_str(&format!("{},{f}\n", t.flight_id));
        }
        out
    }
}

/// Arrival times of a Poisson process whose rate is constant within each
/// 15-minute bin: `rate(j)` expected arrivals in bin `j` of every day.
pub fn poisson_arrivals<R: Rng + ?Sized>(rng: &mut R, start: i64, days: u32, rate: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut times = Vec::new();
    for d in 0..days as i64 {
        for j in 0..BINS_PER_DAY {
            let r = rate(j);
            if !(r > 0.0) {
                continue;
            }
            let count = Poisson::new(r).expect("positive rate").sample(rng) as u64;
            let bin_start = (start + d * SECONDS_PER_DAY + j as i64 * DEFAULT_TAU) as f64;
            let mut bin: Vec<f64> = (0..count).map(|_| bin_start + rng.random::<f64>() * DEFAULT_TAU as f64).collect();
            bin.sort_by(f64::total_cmp);
            times.extend(bin);
        }
    }
    times
}

/// Arc length positions of a polyline's vertices.
fn cumulative_lengths(path: &[PointEnu]) -> Vec<f64> {
    let mut cum = vec![0.0];
    for w in path.windows(2) {
        let last = cum[cum.len() - 1];
        cum.push(last + w[0].horizontal_distance(&w[1]));
    }
    cum
}

fn point_at(path: &[PointEnu], cum: &[f64], s: f64) -> PointEnu {
    let k = cum.partition_point(|&c| c <= s).clamp(1, path.len() - 1) - 1;
    let len = cum[k + 1] - cum[k];
    let t = if len > 0.0 { ((s - cum[k]) / len).clamp(0.0, 1.0) } else { 0.0 };
    let (a, b) = (path[k], path[k + 1]);
    PointEnu::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.z + t * (b.z - a.z))
}

/// Fixes every `interval` seconds from `t0` while flying `path` at `speed`
/// kt, plus a final fix at the end of the path.
fn fly(path: &[PointEnu], speed: f64, t0: i64, interval: i64, proj: &Projection) -> Vec<RawSample> {
    let cum = cumulative_lengths(path);
    let total = cum[cum.len() - 1];
    let duration = (total / speed * 3600.0).ceil() as i64;
    let fix = |t: i64, p: PointEnu| {
        let (lat, lon) = unproject(p.x, p.y, proj.origin_lat, proj.origin_lon);
        RawSample { timestamp: t, lat, lon, alt: p.z }
    };
    let mut out = Vec::with_capacity((duration / interval) as usize + 2);
    let mut dt = 0;
    while dt < duration {
        out.push(fix(t0 + dt, point_at(path, &cum, speed * dt as f64 / 3600.0)));
        dt += interval;
    }
    out.push(fix(t0 + duration, path[path.len() - 1]));
    out
}

fn draw_speed<R: Rng + ?Sized>(law: &TLocationScale, rng: &mut R) -> f64 {
    for _ in 0..1000 {
        let v = law.sample(rng);
        if (SPEED_RANGE_KT.0..=SPEED_RANGE_KT.1).contains(&v) {
            return v;
        }
    }
    law.mu.clamp(SPEED_RANGE_KT.0, SPEED_RANGE_KT.1)
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("std is finite and nonnegative")
}

/// Generate the scenario's flights. Each flow and the outlier stream draw
/// from their own stream of a ChaCha8 generator seeded with `seed`, so the
/// output is a pure function of the spec and the seed.
pub fn generate_scenario(spec: &ScenarioSpec, seed: u64) -> Result<Scenario> {
    spec.validate()?;
    let proj = spec.projection();
    // (entry time, flow, samples)
    let mut flights: Vec<(f64, Option<usize>, Vec<RawSample>)> = Vec::new();

    for (i, f) in spec.flows.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64 + 1);
        let track = f.points();
        let frames = track_frames(&track)?;
        let (lat_law, vert_law) = (normal(f.lateral_std_nm), normal(f.vertical_std_ft));
        for t in poisson_arrivals(&mut rng, spec.start_time, spec.days, |j| f.rate_in_bin(j)) {
            let (dl, dz) = (lat_law.sample(&mut rng), vert_law.sample(&mut rng));
            let speed = draw_speed(&f.speed, &mut rng);
            let path: Vec<PointEnu> = track
                .iter()
                .zip(&frames)
                .map(|(p, fr)| fr.to_global(0.0, dl, p.z + dz))
                .collect();
            flights.push((t, Some(i), fly(&path, speed, t.floor() as i64, spec.sample_interval_s, &proj)));
        }
    }

    if let Some(o) = &spec.outliers {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        for t in poisson_arrivals(&mut rng, spec.start_time, spec.days, |_| o.rate_per_15min) {
            let u = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| lo + rng.random::<f64>() * (hi - lo);
            let start = PointEnu::new(
                u(&mut rng, o.lo[0], o.hi[0]),
                u(&mut rng, o.lo[1], o.hi[1]),
                u(&mut rng, o.lo[2], o.hi[2]),
            );
            let heading = u(&mut rng, 0.0, std::f64::consts::TAU);
            let length = u(&mut rng, o.length_nm[0], o.length_nm[1]).max(1.0);
            let speed = u(&mut rng, o.speed_kt[0], o.speed_kt[1]);
            let end = PointEnu::new(start.x + length * heading.cos(), start.y + length * heading.sin(), start.z);
            flights.push((t, None, fly(&[start, end], speed, t.floor() as i64, spec.sample_interval_s, &proj)));
        }
    }

    flights.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (trajectories, truth) = flights
        .into_iter()
        .enumerate()
        .map(|(k, (_, flow, samples))| (RawTrajectory { flight_id: format!("SIM{k:06}"), samples }, flow))
        .unzip();
    Ok(Scenario { trajectories, truth })
}

/// Zero-mean normal density sampled over `±5σ` (a point mass when `σ = 0`).
fn gaussian_pdf(center: f64, std: f64, point_step: f64) -> Result<DiscretePdf> {
    if std <= 0.0 {
        return DiscretePdf::point_mass(center, point_step);
    }
    let n = 201;
    let step = 10.0 * std / (n - 1) as f64;
    DiscretePdf::from_fn(center - 5.0 * std, step, n, |x| (-0.5 * ((x - center) / std).powi(2)).exp())
}

/// The analytic flow a scenario flow generates: its waypoints as the track
/// and normal window densities. Rate shares are left empty.
pub fn flow_from_law(id: usize, law: &ScenarioFlow) -> Result<Flow> {
    let track = law.points();
    let frames = track_frames(&track)?;
    let windows = track
        .iter()
        .zip(&frames)
        .map(|(p, frame)| {
            let lateral_density = gaussian_pdf(0.0, law.lateral_std_nm, 0.01)?;
            let vertical_density = gaussian_pdf(p.z, law.vertical_std_ft, 1.0)?;
            let (llo, lhi) = lateral_density.support();
            let (vlo, vhi) = vertical_density.support();
            Ok(Window {
                frame: *frame,
                lateral_extent: Interval::new(llo, lhi),
                vertical_extent: Interval::new(vlo, vhi),
                lateral_density,
                vertical_density,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Flow { id, track, windows, speed: law.speed, rate_share: Vec::new(), member_count: 0 })
}

/// Mean number of outliers airborne at a random instant.
pub fn expected_airborne_outliers(law: &OutlierLaw) -> f64 {
    let mean_len = 0.5 * (law.length_nm[0] + law.length_nm[1]).max(2.0);
    // E[1/v] for v uniform on [a, b]
    let [a, b] = law.speed_kt;
    let inv_speed = if b > a { (b / a).ln() / (b - a) } else { 1.0 / a };
    law.rate_per_15min / DEFAULT_TAU as f64 * mean_len * inv_speed * 3600.0
}

/// Ground-truth model of a scenario: the generating flows, the exact
/// per-bin rates and an occupancy outlier density that spreads the airborne
/// outlier count uniformly over the outlier region.
pub fn scenario_model(spec: &ScenarioSpec) -> Result<ModelBundle> {
    spec.validate()?;
    let n = spec.flows.len();
    let mut schedule = RateSchedule::empty(DEFAULT_TAU, n)?;
    schedule.days_per_weekday = vec![1; WEEKDAYS];
    let mut flows = spec
        .flows
        .iter()
        .enumerate()
        .map(|(i, f)| flow_from_law(i, f))
        .collect::<Result<Vec<_>>>()?;
    let outlier_rate = spec.outliers.as_ref().map_or(0.0, |o| o.rate_per_15min);
    let bins = schedule.lambda_tau.len();
    let mut outlier_share = vec![0.0; bins];
    for f in &mut flows {
        f.rate_share = vec![0.0; bins];
    }
    for idx in 0..bins {
        let j = idx % BINS_PER_DAY;
        let total: f64 = spec.flows.iter().map(|f| f.rate_in_bin(j)).sum::<f64>() + outlier_rate;
        schedule.lambda_tau[idx] = total;
        if total > 0.0 {
            for (flow, law) in flows.iter_mut().zip(&spec.flows) {
                flow.rate_share[idx] = law.rate_in_bin(j) / total;
            }
            outlier_share[idx] = outlier_rate / total;
        }
    }

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    let mut grow = |l: [f64; 3], h: [f64; 3]| {
        for a in 0..3 {
            lo[a] = lo[a].min(l[a]);
            hi[a] = hi[a].max(h[a]);
        }
    };
    for f in &flows {
        let (l, h) = f.bounds();
        grow(l, h);
    }
    if let Some(o) = &spec.outliers {
        grow(o.lo, o.hi);
    }
    if !lo[0].is_finite() {
        (lo, hi) = ([0.0, 0.0, 0.0], [1.0, 1.0, 1000.0]);
    }
    let grid = CellGrid::covering(
        PointEnu::new(lo[0], lo[1], lo[2]),
        PointEnu::new(hi[0], hi[1], hi[2]),
        [1.0, 1.0, 1000.0],
    )?;
    let mut outliers = OutlierDensity::zeros(grid, OutlierMode::Occupancy);
    if let Some(o) = &spec.outliers {
        let count = expected_airborne_outliers(o);
        if count > 0.0 {
            outliers.inject_uniform(o.lo, o.hi, count)?;
        }
    }

    let toml = spec.to_toml()?;
    Ok(ModelBundle {
        version: BUNDLE_VERSION.to_owned(),
        projection: spec.projection(),
        flows,
        schedule,
        outlier_share,
        outliers,
        provenance: Provenance {
            corpus_hash: sha256_hex(toml.as_bytes()),
            parameters: serde_json::to_value(spec)?,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
        },
    })
}

/// Mean along-track spacings, NM, of the ten reference flows.
pub const REFERENCE_SPACINGS_NM: [f64; 10] = [45.0, 56.0, 57.0, 88.0, 90.0, 101.0, 105.0, 116.0, 140.0, 225.0];

/// Ten level eastbound routes 40 NM apart across a 400 x 400 NM region,
/// spread over FL310 to FL350. Flow `i` flies at 450 kt with mean spacing
/// `REFERENCE_SPACINGS_NM[i]`, so its rate is `450 / Δd` per hour.
pub fn reference_spec(days: u32) -> ScenarioSpec {
    let flows = REFERENCE_SPACINGS_NM
        .iter()
        .enumerate()
        .map(|(i, dd)| {
            let y = -180.0 + 40.0 * i as f64;
            let z = 31000.0 + 1000.0 * (i % 5) as f64;
            ScenarioFlow {
                waypoints: vec![[-200.0, y, z], [0.0, y + 8.0, z], [200.0, y, z]],
                lateral_std_nm: 1.0,
                vertical_std_ft: 0.0,
                speed: TLocationScale { mu: 450.0, sigma: 15.0, nu: 5.0 },
                rate_per_15min: 450.0 / dd / 4.0,
                daily_profile: None,
            }
        })
        .collect();
    ScenarioSpec {
        version: SCENARIO_VERSION.to_owned(),
        seed: 7,
        days,
        start_time: DEFAULT_START,
        sample_interval_s: default_interval(),
        origin_lat: default_origin_lat(),
        origin_lon: default_origin_lon(),
        flows,
        outliers: None,
    }
}
