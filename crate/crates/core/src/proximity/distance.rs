//! Along-track spacing between consecutive aircraft and the residual distance
//! from an observation point to the next aircraft.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowmodel::TLocationScale;
use crate::pdf::{DiscretePdf, TAIL_MASS};

/// Upper bound on the number of nodes of a spacing density.
pub const MAX_NODES: usize = 100_000;
/// Number of speed nodes in the product-mode quadrature.
pub const SPEED_NODES: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMode {
    /// `Δd = v̂·Δt` with a single representative speed.
    #[default]
    ConstantSpeed,
    /// `Δd = v·Δt` with `v` and `Δt` independent.
    Product,
}

/// Representative speed used in constant-speed mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum SpeedEstimate {
    /// The location parameter `μ` (the density mode).
    #[default]
    Location,
    /// A quantile of the speed law.
    Quantile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceParams {
    pub mode: DistanceMode,
    pub speed_estimate: SpeedEstimate,
    /// Preferred grid step, NM; widened when the density would need more than
    /// [`MAX_NODES`] nodes.
    pub step_nm: f64,
}

impl Default for DistanceParams {
    fn default() -> Self {
        Self {
            mode: DistanceMode::ConstantSpeed,
            speed_estimate: SpeedEstimate::Location,
            step_nm: 0.05,
        }
    }
}

impl DistanceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_nm > 0.0) || !self.step_nm.is_finite() {
            return Err(Error::invalid(format!("distance step must be positive, got {}", self.step_nm)));
        }
        if let SpeedEstimate::Quantile(q) = self.speed_estimate {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::invalid(format!("speed quantile {q} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Spacing law of one flow. `inter_distance` and `residual_first` are `None`
/// when the flow carries no traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowDistanceModel {
    pub flow_id: usize,
    /// Arrival rate, 1/s.
    pub lambda: f64,
    pub inter_distance: Option<DiscretePdf>,
    /// NM; 0 when there is no traffic.
    pub mean_inter_distance: f64,
    pub residual_first: Option<DiscretePdf>,
}

impl FlowDistanceModel {
    pub fn no_traffic(flow_id: usize) -> Self {
        Self {
            flow_id,
            lambda: 0.0,
            inter_distance: None,
            mean_inter_distance: 0.0,
            residual_first: None,
        }
    }

    /// Build from a given spacing density.
    pub fn from_inter_distance(flow_id: usize, lambda: f64, inter: DiscretePdf) -> Result<Self> {
        let residual = residual_pdf_first(&inter)?;
        Ok(Self {
            flow_id,
            lambda,
            mean_inter_distance: inter.mean(),
            inter_distance: Some(inter),
            residual_first: Some(residual),
        })
    }

    /// `∫₀^L f_{R¹}`: probability that the next aircraft lies within `L` NM.
    pub fn along_probability(&self, length: f64) -> f64 {
        match &self.residual_first {
            Some(r) if length > 0.0 => r.integrate(0.0, length),
            _ => 0.0,
        }
    }
}

fn grid_step(preferred: f64, extent: f64) -> f64 {
    preferred.max(extent / MAX_NODES as f64)
}

/// Spacing density for a flow with speed law `speed` (kt) and arrival rate
/// `lambda` (1/s).
pub fn inter_aircraft_pdf(
    flow_id: usize,
    speed: &TLocationScale,
    lambda: f64,
    params: &DistanceParams,
) -> Result<FlowDistanceModel> {
    params.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid(format!("arrival rate must be nonnegative, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok(FlowDistanceModel::no_traffic(flow_id));
    }
    // arrivals per hour, so that distance = kt · h
    let per_hour = 3600.0 * lambda;
    let tail = (1.0 / TAIL_MASS).ln();
    let inter = match params.mode {
        DistanceMode::ConstantSpeed => {
            let v = match params.speed_estimate {
                SpeedEstimate::Location => speed.mu,
                SpeedEstimate::Quantile(q) => speed.quantile(q),
            };
            if !(v > 0.0) {
                return Err(Error::invalid(format!("representative speed must be positive, got {v}")));
            }
            let mean = v / per_hour;
            DiscretePdf::exponential(mean, grid_step(params.step_nm, mean * tail))?
        }
        DistanceMode::Product => {
            let (lo, hi) = speed.quantile_bounds(TAIL_MASS);
            let lo = lo.max(1e-3 * speed.mu.abs()).max(1e-6);
            if !(hi > lo) {
                return Err(Error::invalid("speed law has no positive support"));
            }
            let dv = (hi - lo) / (SPEED_NODES - 1) as f64;
            let nodes: Vec<(f64, f64)> = (0..SPEED_NODES)
                .map(|j| {
                    let v = lo + j as f64 * dv;
                    let w = if j == 0 || j + 1 == SPEED_NODES { 0.5 } else { 1.0 };
                    (v, w * speed.pdf(v))
                })
                .collect();
            let wsum: f64 = nodes.iter().map(|n| n.1).sum();
            if !(wsum > 0.0) {
                return Err(Error::invalid("speed law has no mass on its quadrature grid"));
            }
            let end = hi / per_hour * tail;
            let step = grid_step(params.step_nm, end);
            let n = (end / step).ceil() as usize + 1;
            // mixture over speeds of exponentials with mean v / λ
            DiscretePdf::from_fn(0.0, step, n, |d| {
                nodes
                    .iter()
                    .map(|&(v, w)| w / wsum * per_hour / v * (-d * per_hour / v).exp())
                    .sum()
            })?
        }
    };
    FlowDistanceModel::from_inter_distance(flow_id, lambda, inter)
}

/// `f_{R¹}(r) = (1 − F_{ΔD}(r)) / Δd_m` on a grid from 0 with the input's step.
pub fn residual_pdf_first(inter: &DiscretePdf) -> Result<DiscretePdf> {
    let mean = inter.mean();
    if !(mean > 0.0) || inter.origin() < -1e-9 * inter.step() {
        return Err(Error::invalid(format!(
            "residual distance needs a nonnegative spacing law with positive mean, got mean {mean}"
        )));
    }
    let h = inter.step();
    let end = inter.support().1;
    let n = (end / h).round() as usize + 1;
    let mut values = Vec::with_capacity(n);
    let mut cdf = 0.0;
    let mut prev = 0.0;
    for i in 0..n {
        let r = i as f64 * h;
        if i > 0 {
            cdf += inter.integrate(prev, r);
        }
        prev = r;
        values.push(((1.0 - cdf) / mean).max(0.0));
    }
    DiscretePdf::new(0.0, h, values)
}

/// `f_{R^k} = f_{R^{k−1}} * f_{ΔD}`, with `f_{R¹}` from [`residual_pdf_first`].
pub fn residual_pdf_k(model: &FlowDistanceModel, k: usize) -> Result<Option<DiscretePdf>> {
    if k == 0 {
        return Err(Error::invalid("residual index starts at 1"));
    }
    let (Some(first), Some(inter)) = (&model.residual_first, &model.inter_distance) else {
        return Ok(None);
    };
    let mut out = first.clone();
    for _ in 1..k {
        out = out.convolve(inter)?;
    }
    Ok(Some(out))
}

/// Lateral or vertical density between two windows: `(1 − s)·f_k + s·f_{k+1}`.
pub fn interp_window_density(f_k: &DiscretePdf, f_k1: &DiscretePdf, s: f64) -> Result<DiscretePdf> {
    f_k.mix(f_k1, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sup_norm(a: &DiscretePdf, b: &DiscretePdf) -> f64 {
        (0..a.len()).map(|i| (a.densities()[i] - b.value_at(a.node(i))).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn constant_speed_table_value() {
        let v = TLocationScale::new(450.0, 15.0, 5.0).unwrap();
        let m = inter_aircraft_pdf(1, &v, 10.0 / 3600.0, &DistanceParams::default()).unwrap();
        assert!((m.mean_inter_distance - 45.0).abs() < 1e-3, "{}", m.mean_inter_distance);
    }

    #[test]
    fn zero_rate_is_no_traffic() {
        let v = TLocationScale::new(450.0, 15.0, 5.0).unwrap();
        let m = inter_aircraft_pdf(1, &v, 0.0, &DistanceParams::default()).unwrap();
        assert!(m.residual_first.is_none());
        assert_eq!(m.along_probability(5.0), 0.0);
        assert!(inter_aircraft_pdf(1, &v, -1.0, &DistanceParams::default()).is_err());
    }

    #[test]
    fn exponential_residual_equals_input() {
        let f = DiscretePdf::exponential(45.0, 0.05).unwrap();
        let r = residual_pdf_first(&f).unwrap();
        assert!(sup_norm(&r, &f) < 1e-6);
        assert!(sup_norm(&f, &r) < 1e-6);
    }

    #[test]
    fn deterministic_spacing_gives_uniform_residual() {
        let d = 20.0;
        let f = DiscretePdf::point_mass(d, 0.05).unwrap();
        let r = residual_pdf_first(&f).unwrap();
        for i in 0..r.len() {
            let x = r.node(i);
            if x <= d - 0.05 + 1e-9 {
                assert!((r.densities()[i] - 1.0 / d).abs() < 1e-6, "{x}");
            }
        }
        assert!((r.integrate(0.0, d / 2.0) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn second_residual_of_deterministic_spacing_is_shifted_uniform() {
        let d = 20.0;
        let m = FlowDistanceModel::from_inter_distance(0, 1.0, DiscretePdf::point_mass(d, 0.05).unwrap()).unwrap();
        let r2 = residual_pdf_k(&m, 2).unwrap().unwrap();
        // the jump at the residual's origin is smeared over one grid step
        let h = 0.05;
        assert!((r2.integrate(d + 0.1, 2.0 * d - 0.1) - (d - 0.2) / d).abs() < h / d);
        assert!((r2.value_at(1.5 * d) - 1.0 / d).abs() < h / (d * d));
        assert!(r2.integrate(0.0, d - h) == 0.0 && r2.integrate(2.0 * d + h, 3.0 * d) == 0.0);
        assert_eq!(residual_pdf_k(&m, 1).unwrap().as_ref(), m.residual_first.as_ref());
    }

    #[test]
    fn exponential_residual_k_has_erlang_mean() {
        let m = FlowDistanceModel::from_inter_distance(0, 1.0, DiscretePdf::exponential(10.0, 0.05).unwrap()).unwrap();
        for k in 1..=4 {
            let r = residual_pdf_k(&m, k).unwrap().unwrap();
            assert!((r.mean() - 10.0 * k as f64).abs() < 0.01 * 10.0 * k as f64);
        }
    }

    #[test]
    fn product_mode_with_point_mass_speed_matches_constant_speed() {
        let v = TLocationScale::point_mass(450.0);
        let lambda = 10.0 / 3600.0;
        let p = DistanceParams { mode: DistanceMode::Product, ..Default::default() };
        let a = inter_aircraft_pdf(0, &v, lambda, &p).unwrap();
        let b = inter_aircraft_pdf(0, &v, lambda, &DistanceParams::default()).unwrap();
        let (fa, fb) = (a.inter_distance.unwrap(), b.inter_distance.unwrap());
        assert!((fa.mean() - fb.mean()).abs() < 1e-3 * fb.mean());
        assert!(sup_norm(&fb, &fa) < 1e-6);
    }

    #[test]
    fn interpolation_endpoints() {
        let a = DiscretePdf::histogram(&[0.0, 0.5, 1.0], 0.5).unwrap();
        let b = DiscretePdf::histogram(&[3.0, 3.5], 0.5).unwrap();
        let m0 = interp_window_density(&a, &b, 0.0).unwrap();
        let m1 = interp_window_density(&a, &b, 1.0).unwrap();
        for x in [-0.5, 0.0, 0.25, 1.0, 3.0, 3.5] {
            assert_eq!(m0.value_at(x), a.value_at(x));
            assert_eq!(m1.value_at(x), b.value_at(x));
        }
        let half = interp_window_density(&a, &b, 0.5).unwrap();
        assert!((half.integrate(-1.0, 2.0) - 0.5).abs() < 1e-9);
    }
}
