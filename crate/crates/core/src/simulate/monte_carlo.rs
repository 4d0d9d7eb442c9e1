//! Snapshot Monte Carlo for presence, conflict and outlier proximity.
//!
//! Snapshots are drawn in batches of [`MC_BATCH`]. Batch `b` uses a ChaCha8
//! generator seeded with the run seed and switched to stream `b`, so the
//! merged counts do not depend on how batches are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AxisBox, PointEnu, ProximityBox, ProximityDims};
use crate::pdf::InverseCdf;
use crate::proximity::{FlowPresence, Parallelism};

pub const MC_BATCH: usize = 1 << 16;
const MIN_SAMPLES: usize = 1000;
/// Two-sided 99% normal quantile.
const Z_99: f64 = 2.576;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub half_width_99: f64,
    pub n_samples: usize,
}

impl MonteCarloEstimate {
    pub fn from_hits(hits: u64, n: usize) -> Self {
        let p = hits as f64 / n as f64;
        Self {
            estimate: p,
            half_width_99: Z_99 * (p * (1.0 - p) / n as f64).sqrt(),
            n_samples: n,
        }
    }

    /// Whether `value` lies within `slack` plus the 99% half-width.
    pub fn agrees_with(&self, value: f64, slack: f64) -> bool {
        (self.estimate - value).abs() <= self.half_width_99 + slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresenceEstimates {
    /// At least one flow aircraft in the proximity box.
    pub p1: MonteCarloEstimate,
    /// Aircraft of at least two distinct flows in the box.
    pub p2: MonteCarloEstimate,
    /// At least one flow aircraft and at least one outlier in the box.
    pub po: MonteCarloEstimate,
}

/// Outliers at a snapshot: a Poisson number of points, uniform in `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformOutliers {
    pub lo: [f64; 3],
    pub hi: [f64; 3],
    pub expected_count: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub n: usize,
    pub seed: u64,
    /// Distance before each track's start at which the renewal process is
    /// observed from. Stationarity makes the estimates independent of it.
    pub origin_shift: f64,
    pub parallelism: Parallelism,
}

impl McOptions {
    pub fn new(n: usize, seed: u64) -> Self {
        Self { n, seed, origin_shift: 0.0, parallelism: Parallelism::Parallel }
    }
}

/// Sampler for one flow's aircraft near the proximity box.
struct FlowSampler {
    residual: InverseCdf,
    inter: InverseCdf,
    lateral: Vec<InverseCdf>,
    vertical: Vec<InverseCdf>,
    /// Track position at the start of each box.
    starts: Vec<f64>,
    lengths: Vec<f64>,
    /// The proximity box expressed in each box frame.
    targets: Vec<AxisBox>,
    /// Track positions outside which no aircraft can be in the box.
    window: (f64, f64),
}

impl FlowSampler {
    fn new(fp: &FlowPresence<'_>, p: &PointEnu, dims: ProximityDims) -> Option<Self> {
        let residual = fp.dist.residual_first.clone()?;
        let inter = fp.dist.inter_distance.clone()?;
        let mut starts = Vec::with_capacity(fp.boxes.len());
        let mut lengths = Vec::with_capacity(fp.boxes.len());
        let mut targets = Vec::with_capacity(fp.boxes.len());
        let mut window = (f64::INFINITY, f64::NEG_INFINITY);
        let mut s = 0.0;
        for b in &fp.boxes {
            let len = b.extents.along.hi;
            let target = ProximityBox::aligned(*p, &b.frame, dims).extents_in(&b.frame);
            let hit = b.extents.intersect(&target);
            if !hit.empty {
                window = (window.0.min(s + hit.along_lo), window.1.max(s + hit.along_hi));
            }
            starts.push(s);
            lengths.push(len);
            targets.push(target);
            s += len;
        }
        if window.0 > window.1 {
            return None;
        }
        Some(Self {
            residual: InverseCdf::new(residual),
            inter: InverseCdf::new(inter),
            lateral: fp.flow.windows.iter().map(|w| InverseCdf::new(w.lateral_density.clone())).collect(),
            vertical: fp.flow.windows.iter().map(|w| InverseCdf::new(w.vertical_density.clone())).collect(),
            starts,
            lengths,
            targets,
            window,
        })
    }

    /// Whether an aircraft at track position `s` falls in the box.
    fn aircraft_hits<R: Rng>(&self, s: f64, rng: &mut R) -> bool {
        let k = self.starts.partition_point(|&b| b <= s).clamp(1, self.starts.len()) - 1;
        let along = s - self.starts[k];
        if along > self.lengths[k] {
            return false;
        }
        let t = &self.targets[k];
        if !t.along.contains(along) {
            return false;
        }
        let u = (along / self.lengths[k]).clamp(0.0, 1.0);
        let pick = |rng: &mut R| if rng.random::<f64>() < u { k + 1 } else { k };
        let lat = self.lateral[pick(rng)].quantile(rng.random());
        let z = self.vertical[pick(rng)].quantile(rng.random());
        t.lateral.contains(lat) && t.vertical.contains(z)
    }

    /// One snapshot: does any aircraft of the flow fall in the box?
    fn snapshot<R: Rng>(&self, shift: f64, rng: &mut R) -> bool {
        let mut s = -shift + self.residual.quantile(rng.random());
        while s <= self.window.1 {
            if s >= self.window.0 && self.aircraft_hits(s, rng) {
                return true;
            }
            s += self.inter.quantile(rng.random());
        }
        false
    }
}

struct OutlierSampler {
    law: UniformOutliers,
    poisson: Option<Poisson<f64>>,
    lo: [f64; 3],
    hi: [f64; 3],
}

impl OutlierSampler {
    fn snapshot<R: Rng>(&self, rng: &mut R) -> bool {
        let Some(poisson) = &self.poisson else {
            return false;
        };
        let count = poisson.sample(rng) as u64;
        let mut any = false;
        for _ in 0..count {
            let q: [f64; 3] =
                std::array::from_fn(|a| self.law.lo[a] + rng.random::<f64>() * (self.law.hi[a] - self.law.lo[a]));
            any |= (0..3).all(|a| q[a] >= self.lo[a] && q[a] <= self.hi[a]);
        }
        any
    }
}

#[derive(Default, Clone, Copy)]
struct Counts {
    p1: u64,
    p2: u64,
    po: u64,
}

/// Estimate `P₁`, `P₂` and `P_O` at `p` from `options.n` independent
/// snapshots. Each flow places aircraft along its track by a stationary
/// renewal process: the first at a distance drawn from the first residual
/// law, the rest at gaps drawn from the inter-aircraft law. Offsets are drawn
/// independently from the window densities interpolated at the aircraft's
/// position, and membership is tested in the frame of the box it occupies.
pub fn mc_presence(
    flows: &[FlowPresence<'_>],
    outliers: Option<&UniformOutliers>,
    p: PointEnu,
    dims: ProximityDims,
    options: McOptions,
) -> Result<PresenceEstimates> {
    if options.n < MIN_SAMPLES {
        return Err(Error::invalid(format!("Monte Carlo needs at least {MIN_SAMPLES} samples, got {}", options.n)));
    }
    dims.validate()?;
    let samplers: Vec<FlowSampler> = flows.iter().filter_map(|f| FlowSampler::new(f, &p, dims)).collect();
    let outlier = match outliers {
        Some(o) => {
            if !(o.expected_count >= 0.0) || (0..3).any(|a| !(o.hi[a] > o.lo[a])) {
                return Err(Error::invalid("outlier law needs a nonempty region and a nonnegative count"));
            }
            Some(OutlierSampler {
                law: *o,
                poisson: (o.expected_count > 0.0).then(|| Poisson::new(o.expected_count).expect("positive mean")),
                lo: [p.x - dims.half_lateral, p.y - dims.half_lateral, p.z - dims.half_vertical],
                hi: [p.x + dims.half_lateral, p.y + dims.half_lateral, p.z + dims.half_vertical],
            })
        }
        None => None,
    };

    let batches = options.n.div_ceil(MC_BATCH);
    let run = |b: usize| -> Counts {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        rng.set_stream(b as u64);
        let size = MC_BATCH.min(options.n - b * MC_BATCH);
        let mut c = Counts::default();
        for _ in 0..size {
            let present = samplers.iter().filter(|s| s.snapshot(options.origin_shift, &mut rng)).count();
            if present == 0 {
                continue;
            }
            c.p1 += 1;
            c.p2 += u64::from(present >= 2);
            if let Some(o) = &outlier {
                c.po += u64::from(o.snapshot(&mut rng));
            }
        }
        c
    };
    let per_batch: Vec<Counts> = match options.parallelism {
        Parallelism::Sequential => (0..batches).map(run).collect(),
        Parallelism::Parallel => (0..batches).into_par_iter().map(run).collect(),
    };
    let total = per_batch.iter().fold(Counts::default(), |a, c| Counts {
        p1: a.p1 + c.p1,
        p2: a.p2 + c.p2,
        po: a.po + c.po,
    });
    Ok(PresenceEstimates {
        p1: MonteCarloEstimate::from_hits(total.p1, options.n),
        p2: MonteCarloEstimate::from_hits(total.p2, options.n),
        po: MonteCarloEstimate::from_hits(total.po, options.n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowmodel::TimeBin;
    use crate::proximity::{p1_point, resolve_flows, DistanceParams, WhatIfOverrides};
    use crate::simulate::{scenario_model, tests::straight_spec};

    const TB: TimeBin = TimeBin { weekday: 0, bin: 40 };

    #[test]
    fn no_flows_give_zero_estimates() {
        let e = mc_presence(&[], None, PointEnu::new(0.0, 0.0, 35000.0), ProximityDims::default(), McOptions::new(1000, 1))
            .unwrap();
        assert_eq!(e.p1.estimate, 0.0);
        assert_eq!(e.p1.half_width_99, 0.0);
        assert_eq!(e.p2.estimate, 0.0);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        assert!(mc_presence(&[], None, PointEnu::new(0.0, 0.0, 0.0), ProximityDims::default(), McOptions::new(999, 1))
            .is_err());
    }

    #[test]
    fn single_flow_matches_the_analytic_value() {
        let model = scenario_model(&straight_spec(2.5, 1)).unwrap();
        let flows = resolve_flows(&model, TB, &WhatIfOverrides::default(), &DistanceParams::default()).unwrap();
        let dims = ProximityDims::default();
        let p = PointEnu::new(-50.0, 0.0, 35000.0);
        let analytic = p1_point(&p, &flows, dims);
        assert!((analytic - (1.0 - (-5.0f64 / 45.0).exp())).abs() < 1e-4, "{analytic}");
        let mc = mc_presence(&flows, None, p, dims, McOptions::new(200_000, 3)).unwrap();
        assert!(mc.p1.agrees_with(analytic, 0.0), "{mc:?} vs {analytic}");
    }

    #[test]
    fn thread_scheduling_does_not_change_counts() {
        let model = scenario_model(&straight_spec(2.5, 1)).unwrap();
        let flows = resolve_flows(&model, TB, &WhatIfOverrides::default(), &DistanceParams::default()).unwrap();
        let p = PointEnu::new(0.0, 0.0, 35000.0);
        let mut opts = McOptions::new(3 * MC_BATCH + 17, 9);
        let par = mc_presence(&flows, None, p, ProximityDims::default(), opts).unwrap();
        opts.parallelism = Parallelism::Sequential;
        let seq = mc_presence(&flows, None, p, ProximityDims::default(), opts).unwrap();
        assert_eq!(par, seq);
    }
}
