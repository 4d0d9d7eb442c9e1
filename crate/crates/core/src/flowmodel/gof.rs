//! χ² goodness-of-fit tests for exponential inter-arrival times and Poisson
//! counts. Adjacent bins are merged until each expected count reaches
//! [`MIN_EXPECTED`]; the test has `bins − 2` degrees of freedom.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};

pub const DEFAULT_ALPHA: f64 = 0.05;
/// Inter-arrival histogram bin width, s.
pub const DEFAULT_BIN_WIDTH: f64 = 2.0;
pub const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GofTestResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    /// Too few merged bins to test; never rejects.
    pub inconclusive: bool,
}

fn merge(observed: &[f64], expected: &[f64]) -> Vec<(f64, f64)> {
    let mut groups: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&ob, &ex) in observed.iter().zip(expected) {
        o += ob;
        e += ex;
        if e >= MIN_EXPECTED {
            groups.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if o > 0.0 || e > 0.0 {
        match groups.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => groups.push((o, e)),
        }
    }
    groups
}

fn chi2_from_bins(observed: &[f64], expected: &[f64], alpha: f64) -> GofTestResult {
    let groups = merge(observed, expected);
    let statistic: f64 = groups
        .iter()
        .map(|&(o, e)| if e > 0.0 { (o - e).powi(2) / e } else { 0.0 })
        .sum();
    if groups.len() < 3 {
        return GofTestResult {
            statistic,
            dof: 0,
            p_value: 1.0,
            alpha,
            reject: false,
            inconclusive: true,
        };
    }
    let dof = groups.len() - 2;
    let p_value = ChiSquared::new(dof as f64).expect("positive dof").sf(statistic);
    GofTestResult {
        statistic,
        dof,
        p_value,
        alpha,
        reject: p_value < alpha,
        inconclusive: false,
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("significance level {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// Test inter-arrival times against `F(t) = 1 − e^{−λt}`.
pub fn chi2_exponential(inter_arrivals: &[f64], lambda: f64, bin_width: f64, alpha: f64) -> Result<GofTestResult> {
    check_alpha(alpha)?;
    if !(lambda > 0.0) || !lambda.is_finite() || !(bin_width > 0.0) {
        return Err(Error::invalid(format!(
            "exponential test needs lambda > 0 and bin width > 0, got {lambda}, {bin_width}"
        )));
    }
    if let Some(v) = inter_arrivals.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::invalid(format!("inter-arrival time {v} is not a nonnegative number")));
    }
    let n = inter_arrivals.len() as f64;
    // finite bins until the remaining tail expects fewer than MIN_EXPECTED
    let tail_bins = if n > MIN_EXPECTED {
        ((n / MIN_EXPECTED).ln() / (lambda * bin_width)).ceil() as usize
    } else {
        0
    };
    let k = tail_bins + 1;
    let mut observed = vec![0.0; k + 1];
    for &t in inter_arrivals {
        let b = ((t / bin_width).floor() as usize).min(k);
        observed[b] += 1.0;
    }
    let surv = |i: usize| (-lambda * bin_width * i as f64).exp();
    let mut expected: Vec<f64> = (0..k).map(|i| n * (surv(i) - surv(i + 1))).collect();
    expected.push(n * surv(k));
    Ok(chi2_from_bins(&observed, &expected, alpha))
}

fn poisson_pmf(k: u64, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (k as f64 * mean.ln() - mean - ln_factorial(k)).exp()
}

/// Test per-interval counts against a Poisson law with mean `lambda_tau`.
pub fn chi2_poisson(counts: &[u64], lambda_tau: f64, alpha: f64) -> Result<GofTestResult> {
    check_alpha(alpha)?;
    if !(lambda_tau >= 0.0) || !lambda_tau.is_finite() {
        return Err(Error::invalid(format!("Poisson mean must be nonnegative, got {lambda_tau}")));
    }
    let n = counts.len() as f64;
    let max_seen = counts.iter().copied().max().unwrap_or(0);
    let k_max = max_seen.max((lambda_tau + 10.0 * lambda_tau.sqrt() + 10.0).ceil() as u64);
    let mut observed = vec![0.0; k_max as usize + 1];
    for &c in counts {
        observed[c.min(k_max) as usize] += 1.0;
    }
    let mut expected: Vec<f64> = (0..k_max).map(|k| n * poisson_pmf(k, lambda_tau)).collect();
    let head: f64 = expected.iter().sum();
    expected.push((n - head).max(0.0));
    Ok(chi2_from_bins(&observed, &expected, alpha))
}
