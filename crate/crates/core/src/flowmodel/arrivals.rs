//! Arrival-rate schedule per weekday and time-of-day bin, and the per-flow
//! shares of each bin's arrivals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;
pub const DEFAULT_TAU: i64 = 900;
pub const WEEKDAYS: usize = 7;

/// Day index since the Unix epoch.
pub fn day_index(t: i64) -> i64 {
    t.div_euclid(SECONDS_PER_DAY)
}

/// Weekday of a Unix timestamp, Monday = 0.
pub fn weekday(t: i64) -> u8 {
    // 1970-01-01 was a Thursday
    (day_index(t) + 3).rem_euclid(7) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TimeBin {
    pub weekday: u8,
    pub bin: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSchedule {
    /// Bin length, s.
    pub tau: i64,
    pub bins_per_day: usize,
    /// Number of calendar days of each weekday in the observed span.
    pub days_per_weekday: Vec<u32>,
    /// Expected arrivals `λ^j·τ` per bin, indexed `weekday·bins_per_day + j`.
    pub lambda_tau: Vec<f64>,
    /// `Σ_d x^j_d`: all arrivals per bin, outliers included.
    pub totals: Vec<u64>,
    /// `Σ_d x^j_{d,i}` per flow.
    pub flow_counts: Vec<Vec<u64>>,
}

impl RateSchedule {
    pub fn empty(tau: i64, n_flows: usize) -> Result<Self> {
        check_tau(tau)?;
        let bins_per_day = (SECONDS_PER_DAY / tau) as usize;
        let n = WEEKDAYS * bins_per_day;
        Ok(Self {
            tau,
            bins_per_day,
            days_per_weekday: vec![0; WEEKDAYS],
            lambda_tau: vec![0.0; n],
            totals: vec![0; n],
            flow_counts: vec![vec![0; n]; n_flows],
        })
    }

    /// Weekdays with at least one observed day.
    pub fn observed_weekdays(&self) -> Vec<u8> {
        (0..WEEKDAYS as u8).filter(|&w| self.days_per_weekday[w as usize] > 0).collect()
    }

    /// Flat index of a time bin, validated against the observed weekdays.
    pub fn index(&self, tb: TimeBin) -> Result<usize> {
        let observed = self.observed_weekdays();
        if !observed.contains(&tb.weekday) || tb.bin >= self.bins_per_day {
            return Err(Error::InvalidTimeBin {
                weekday: tb.weekday,
                bin: tb.bin,
                weekdays: observed,
                bins_per_day: self.bins_per_day,
            });
        }
        Ok(tb.weekday as usize * self.bins_per_day + tb.bin)
    }

    /// `λ^j` in arrivals per second.
    pub fn lambda(&self, idx: usize) -> f64 {
        self.lambda_tau[idx] / self.tau as f64
    }

    /// The bin with the largest expected arrival count (first on ties).
    pub fn busiest_bin(&self) -> Option<TimeBin> {
        let observed = self.observed_weekdays();
        let mut best: Option<(TimeBin, f64)> = None;
        for &w in &observed {
            for j in 0..self.bins_per_day {
                let v = self.lambda_tau[w as usize * self.bins_per_day + j];
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((TimeBin { weekday: w, bin: j }, v));
                }
            }
        }
        best.map(|(tb, _)| tb)
    }
}

fn check_tau(tau: i64) -> Result<()> {
    if tau <= 0 || SECONDS_PER_DAY % tau != 0 {
        return Err(Error::invalid(format!("bin length {tau} s must divide 24 h")));
    }
    Ok(())
}

/// Bin arrivals by weekday and time of day. `flow_of[k]` is the flow of the
/// k-th flight, `None` for outliers. Each bin's `λτ` is its count averaged
/// over every day of that weekday between the first and last arrival.
pub fn estimate_arrival_rates(
    entry_times: &[i64],
    flow_of: &[Option<usize>],
    n_flows: usize,
    tau: i64,
) -> Result<RateSchedule> {
    if entry_times.len() != flow_of.len() {
        return Err(Error::invalid("entry times and flow assignments differ in length"));
    }
    if let Some(bad) = flow_of.iter().flatten().find(|&&f| f >= n_flows) {
        return Err(Error::UnknownFlow { id: *bad, valid: (0..n_flows).collect() });
    }
    let mut sched = RateSchedule::empty(tau, n_flows)?;
    let (Some(first), Some(last)) = (
        entry_times.iter().map(|&t| day_index(t)).min(),
        entry_times.iter().map(|&t| day_index(t)).max(),
    ) else {
        return Ok(sched);
    };
    for d in first..=last {
        sched.days_per_weekday[weekday(d * SECONDS_PER_DAY) as usize] += 1;
    }
    for (&t, f) in entry_times.iter().zip(flow_of) {
        let j = (t.rem_euclid(SECONDS_PER_DAY) / tau) as usize;
        let idx = weekday(t) as usize * sched.bins_per_day + j;
        sched.totals[idx] += 1;
        if let Some(f) = f {
            sched.flow_counts[*f][idx] += 1;
        }
    }
    for (idx, lt) in sched.lambda_tau.iter_mut().enumerate() {
        let days = sched.days_per_weekday[idx / sched.bins_per_day];
        if days > 0 {
            *lt = sched.totals[idx] as f64 / days as f64;
        }
    }
    Ok(sched)
}

/// Per-bin shares `π_i^j` of each flow and of the outliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateShares {
    pub flows: Vec<Vec<f64>>,
    pub outliers: Vec<f64>,
    /// Bins without arrivals, where every share is reported as 0.
    pub undefined: Vec<bool>,
}

pub fn proportion_rates(sched: &RateSchedule) -> RateShares {
    let n = sched.totals.len();
    let mut flows = vec![vec![0.0; n]; sched.flow_counts.len()];
    let mut outliers = vec![0.0; n];
    let mut undefined = vec![false; n];
    for j in 0..n {
        let total = sched.totals[j];
        if total == 0 {
            undefined[j] = true;
            continue;
        }
        let mut assigned = 0;
        for (i, counts) in sched.flow_counts.iter().enumerate() {
            flows[i][j] = counts[j] as f64 / total as f64;
            assigned += counts[j];
        }
        outliers[j] = (total - assigned) as f64 / total as f64;
    }
    RateShares { flows, outliers, undefined }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Monday 2024-01-01 00:00 UTC
    const MONDAY: i64 = 1_704_067_200;

    #[test]
    fn weekday_of_known_dates() {
        assert_eq!(weekday(0), 3);
        assert_eq!(weekday(MONDAY), 0);
        assert_eq!(weekday(MONDAY + 6 * SECONDS_PER_DAY + 86_399), 6);
        assert_eq!(weekday(-1), 2);
    }

    #[test]
    fn one_busy_bin() {
        let t0 = MONDAY + 14 * 3600;
        let times: Vec<i64> = (0..65).map(|k| t0 + k * 13).collect();
        let s = estimate_arrival_rates(&times, &vec![Some(0); 65], 1, DEFAULT_TAU).unwrap();
        let idx = s.index(TimeBin { weekday: 0, bin: 56 }).unwrap();
        assert_eq!(s.lambda_tau[idx], 65.0);
        assert_eq!(s.lambda_tau.iter().sum::<f64>(), 65.0);
        assert_eq!(s.busiest_bin(), Some(TimeBin { weekday: 0, bin: 56 }));
    }

    #[test]
    fn no_flights_gives_zero_rates() {
        let s = estimate_arrival_rates(&[], &[], 2, DEFAULT_TAU).unwrap();
        assert!(s.lambda_tau.iter().all(|&v| v == 0.0));
        assert!(s.observed_weekdays().is_empty());
    }

    #[test]
    fn averages_over_same_weekday_days() {
        // two Mondays one week apart, 4 and 6 arrivals in bin 0
        let mut times: Vec<i64> = (0..4).map(|k| MONDAY + k).collect();
        times.extend((0..6).map(|k| MONDAY + 7 * SECONDS_PER_DAY + k));
        let s = estimate_arrival_rates(&times, &vec![None; 10], 0, DEFAULT_TAU).unwrap();
        assert_eq!(s.days_per_weekday[0], 2);
        assert_eq!(s.days_per_weekday[1], 1);
        assert_eq!(s.lambda_tau[0], 5.0);
    }

    #[test]
    fn invalid_bin_lists_valid_ones() {
        let s = estimate_arrival_rates(&[MONDAY], &[None], 0, DEFAULT_TAU).unwrap();
        let err = s.index(TimeBin { weekday: 2, bin: 0 }).unwrap_err();
        assert!(matches!(err, Error::InvalidTimeBin { ref weekdays, bins_per_day: 96, .. } if weekdays == &vec![0]));
        assert!(s.index(TimeBin { weekday: 0, bin: 96 }).is_err());
    }

    #[test]
    fn tau_must_divide_a_day() {
        assert!(estimate_arrival_rates(&[], &[], 0, 7).is_err());
    }

    #[test]
    fn shares_partition_counts() {
        let t = MONDAY + 100;
        let flow_of: Vec<Option<usize>> = (0..100)
            .map(|k| match k % 10 {
                0..=2 => Some(0),
                3..=8 => Some(1),
                _ => None,
            })
            .collect();
        let times = vec![t; 100];
        let s = estimate_arrival_rates(&times, &flow_of, 2, DEFAULT_TAU).unwrap();
        let p = proportion_rates(&s);
        assert_eq!(p.flows[0][0], 0.3);
        assert_eq!(p.flows[1][0], 0.6);
        assert!((p.flows[0][0] + p.flows[1][0] + p.outliers[0] - 1.0).abs() < 1e-12);
        assert!(p.undefined[1]);
        assert_eq!(p.flows[0][1], 0.0);
    }
}
