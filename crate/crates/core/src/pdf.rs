//! Sampled one-dimensional densities.
//!
//! A [`DiscretePdf`] stores density values at the nodes `origin + i·step` and
//! is read as the piecewise-linear function through those nodes, zero outside
//! them. Its trapezoidal integral is therefore exact, and every constructor
//! renormalizes so the total mass is one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tail mass discarded when a density with unbounded support is sampled.
pub const TAIL_MASS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretePdf {
    origin: f64,
    step: f64,
    densities: Vec<f64>,
}

impl DiscretePdf {
    /// Build from raw node values, renormalizing to unit mass.
    pub fn new(origin: f64, step: f64, densities: Vec<f64>) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() || !origin.is_finite() {
            return Err(Error::invalid(format!("bad grid: origin {origin}, step {step}")));
        }
        if let Some(v) = densities.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!("density value {v} is not a finite nonnegative number")));
        }
        let mut pdf = Self { origin, step, densities };
        pdf.renormalize()?;
        Ok(pdf)
    }

    /// Sample `f` at `n` nodes starting from `origin`.
    pub fn from_fn(origin: f64, step: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let densities = (0..n).map(|i| f(origin + i as f64 * step)).collect();
        Self::new(origin, step, densities)
    }

    /// Unit mass concentrated at `at`: a tent one step wide on each side.
    pub fn point_mass(at: f64, step: f64) -> Result<Self> {
        Self::new(at - step, step, vec![0.0, 1.0 / step, 0.0])
    }

    /// Exponential density with the given mean, truncated where the tail mass
    /// drops below [`TAIL_MASS`].
    pub fn exponential(mean: f64, step: f64) -> Result<Self> {
        if !(mean > 0.0) || !mean.is_finite() {
            return Err(Error::invalid(format!("exponential mean must be positive, got {mean}")));
        }
        let end = mean * (1.0 / TAIL_MASS).ln();
        let n = (end / step).ceil() as usize + 1;
        Self::from_fn(0.0, step, n, |x| (-x / mean).exp() / mean)
    }

    /// Normalized histogram of `samples` with bins of width `step` centered on
    /// integer multiples of `step`. Bin heights become node values, with a
    /// zero node on either side.
    pub fn histogram(samples: &[f64], step: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InsufficientData("histogram of an empty sample".into()));
        }
        if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample {v}")));
        }
        let idx = |v: f64| (v / step).round() as i64;
        let lo = samples.iter().map(|&v| idx(v)).min().unwrap_or(0);
        let hi = samples.iter().map(|&v| idx(v)).max().unwrap_or(0);
        let mut counts = vec![0.0; (hi - lo + 3) as usize];
        for &v in samples {
            counts[(idx(v) - lo + 1) as usize] += 1.0;
        }
        Self::new((lo - 1) as f64 * step, step, counts)
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    pub fn node(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.step
    }

    /// First and last grid node.
    pub fn support(&self) -> (f64, f64) {
        (self.origin, self.node(self.len().saturating_sub(1)))
    }

    /// Linear interpolation between nodes; zero outside the grid.
    pub fn value_at(&self, x: f64) -> f64 {
        let u = (x - self.origin) / self.step;
        if !(u >= 0.0) || u > (self.len() - 1) as f64 {
            return 0.0;
        }
        let i = (u.floor() as usize).min(self.len() - 1);
        if i + 1 >= self.len() {
            return self.densities[i];
        }
        let t = u - i as f64;
        self.densities[i] * (1.0 - t) + self.densities[i + 1] * t
    }

    /// Trapezoidal mass of the node values.
    pub fn total_mass(&self) -> f64 {
        trapezoid(&self.densities, self.step)
    }

    fn renormalize(&mut self) -> Result<()> {
        let mass = self.total_mass();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::invalid("density has no mass on its grid"));
        }
        for v in &mut self.densities {
            *v /= mass;
        }
        Ok(())
    }

    /// Exact integral of the piecewise-linear density over `[lo, hi]`,
    /// clipped to `[0, 1]`.
    pub fn integrate(&self, lo: f64, hi: f64) -> f64 {
        if !(hi > lo) || self.len() < 2 {
            return 0.0;
        }
        let (s_lo, s_hi) = self.support();
        let a = lo.max(s_lo);
        let b = hi.min(s_hi);
        if !(b > a) {
            return 0.0;
        }
        let h = self.step;
        let first = (((a - self.origin) / h).floor() as usize).min(self.len() - 2);
        let last = (((b - self.origin) / h).ceil() as usize).clamp(first + 1, self.len() - 1);
        let mut total = 0.0;
        for i in first..last {
            let x0 = self.node(i);
            let x1 = x0 + h;
            let (f0, f1) = (self.densities[i], self.densities[i + 1]);
            let u = a.max(x0);
            let w = b.min(x1);
            if w <= u {
                continue;
            }
            // integral of the segment's linear interpolant over [u, w]
            let fu = f0 + (f1 - f0) * (u - x0) / h;
            let fw = f0 + (f1 - f0) * (w - x0) / h;
            total += 0.5 * (fu + fw) * (w - u);
        }
        total.clamp(0.0, 1.0)
    }

    /// Cumulative distribution evaluated at every node.
    pub fn cdf_nodes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for i in 0..self.len() {
            if i > 0 {
                acc += 0.5 * (self.densities[i - 1] + self.densities[i]) * self.step;
            }
            out.push(acc.min(1.0));
        }
        out
    }

    pub fn mean(&self) -> f64 {
        self.moments().0
    }

    pub fn variance(&self) -> f64 {
        let (m1, m2) = self.moments();
        (m2 - m1 * m1).max(0.0)
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// First and second raw moments of the piecewise-linear density.
    fn moments(&self) -> (f64, f64) {
        let h = self.step;
        let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for i in 0..self.len().saturating_sub(1) {
            let x0 = self.node(i);
            let (f0, f1) = (self.densities[i], self.densities[i + 1]);
            let i0 = h * (f0 + f1) / 2.0;
            let i1 = h * h * (f0 / 6.0 + f1 / 3.0);
            let i2 = h * h * h * (f0 / 12.0 + f1 / 4.0);
            m0 += i0;
            m1 += x0 * i0 + i1;
            m2 += x0 * x0 * i0 + 2.0 * x0 * i1 + i2;
        }
        if m0 > 0.0 {
            (m1 / m0, m2 / m0)
        } else {
            (0.0, 0.0)
        }
    }

    /// Drop end nodes while the discarded tail mass stays below `eps`, then
    /// renormalize.
    pub fn trim_tails(&self, eps: f64) -> Result<Self> {
        let cdf = self.cdf_nodes();
        let n = self.len();
        let mut first = 0;
        while first + 2 < n && cdf[first + 1] < eps {
            first += 1;
        }
        let mut last = n - 1;
        while last > first + 2 && 1.0 - cdf[last - 1] < eps {
            last -= 1;
        }
        Self::new(self.node(first), self.step, self.densities[first..=last].to_vec())
    }

    /// Linear interpolation of this density onto another grid.
    pub fn resample(&self, origin: f64, step: f64, n: usize) -> Result<Self> {
        Self::from_fn(origin, step, n, |x| self.value_at(x))
    }

    /// Pointwise `(1 − s)·self + s·other` on the union grid, renormalized.
    ///
    /// Both densities must use the same step and nodes offset by a whole
    /// number of steps.
    pub fn mix(&self, other: &DiscretePdf, s: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::invalid(format!("interpolation fraction {s} outside [0, 1]")));
        }
        self.check_aligned(other)?;
        let h = self.step;
        let lo = self.origin.min(other.origin);
        let hi = self.support().1.max(other.support().1);
        let n = ((hi - lo) / h).round() as usize + 1;
        let start_self = ((self.origin - lo) / h).round() as usize;
        let start_other = ((other.origin - lo) / h).round() as usize;
        let mut out = vec![0.0; n];
        for (i, v) in self.densities.iter().enumerate() {
            out[start_self + i] += (1.0 - s) * v;
        }
        for (i, v) in other.densities.iter().enumerate() {
            out[start_other + i] += s * v;
        }
        Self::new(lo, h, out)
    }

    fn check_aligned(&self, other: &DiscretePdf) -> Result<()> {
        if (self.step - other.step).abs() > 1e-12 * self.step {
            return Err(Error::invalid(format!(
                "grid steps differ: {} vs {}",
                self.step, other.step
            )));
        }
        let k = (other.origin - self.origin) / self.step;
        if (k - k.round()).abs() > 1e-6 {
            return Err(Error::invalid("grids are not aligned on a common lattice"));
        }
        Ok(())
    }

    /// Linear convolution `self * other`, scaled by the step and renormalized.
    pub fn convolve(&self, other: &DiscretePdf) -> Result<Self> {
        if (self.step - other.step).abs() > 1e-12 * self.step {
            return Err(Error::invalid(format!(
                "cannot convolve densities with steps {} and {}",
                self.step, other.step
            )));
        }
        let (f, g) = (&self.densities, &other.densities);
        let mut out = vec![0.0; f.len() + g.len() - 1];
        for (i, &fi) in f.iter().enumerate() {
            if fi == 0.0 {
                continue;
            }
            for (j, &gj) in g.iter().enumerate() {
                out[i + j] += fi * gj;
            }
        }
        for v in &mut out {
            *v *= self.step;
        }
        Self::new(self.origin + other.origin, self.step, out)
    }
}

/// Inverse cumulative distribution of a [`DiscretePdf`], for sampling.
#[derive(Debug, Clone)]
pub struct InverseCdf {
    pdf: DiscretePdf,
    cdf: Vec<f64>,
}

impl InverseCdf {
    pub fn new(pdf: DiscretePdf) -> Self {
        let cdf = pdf.cdf_nodes();
        Self { pdf, cdf }
    }

    pub fn pdf(&self) -> &DiscretePdf {
        &self.pdf
    }

    /// Smallest `x` with `F(x) = p`, solving the quadratic CDF segment exactly.
    pub fn quantile(&self, p: f64) -> f64 {
        let total = *self.cdf.last().unwrap_or(&1.0);
        let p = p.clamp(0.0, 1.0) * total;
        let i = self.cdf.partition_point(|&c| c < p).clamp(1, self.cdf.len() - 1) - 1;
        let h = self.pdf.step;
        let (f0, f1) = (self.pdf.densities[i], self.pdf.densities[i + 1]);
        let q = (p - self.cdf[i]).max(0.0);
        let a = (f1 - f0) / (2.0 * h);
        let disc = (f0 * f0 + 4.0 * a * q).max(0.0);
        let denom = f0 + disc.sqrt();
        let t = if denom > 0.0 { 2.0 * q / denom } else { 0.0 };
        self.pdf.node(i) + t.clamp(0.0, h)
    }
}

/// Trapezoidal integral of node values with spacing `step`.
pub fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => step * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])),
    }
}

/// `∫ f` over `[lo, hi]`.
pub fn pdf_integrate(f: &DiscretePdf, lo: f64, hi: f64) -> f64 {
    f.integrate(lo, hi)
}

/// `f * g`.
pub fn pdf_convolve(f: &DiscretePdf, g: &DiscretePdf) -> Result<DiscretePdf> {
    f.convolve(g)
}
