//! Ground-speed model: the t location-scale distribution and its maximum
//! likelihood fit.

use rand::Rng;
use rand_distr::{Distribution, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

pub const NU_MIN: f64 = 1.0;
pub const NU_MAX: f64 = 100.0;
/// Scale used when every sample is identical.
pub const SIGMA_MIN: f64 = 1e-3;
/// Minimum sample count for a likelihood fit.
pub const MIN_SPEED_SAMPLES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TLocationScale {
    /// Location, kt.
    pub mu: f64,
    /// Scale, kt.
    pub sigma: f64,
    /// Shape (degrees of freedom).
    pub nu: f64,
}

impl TLocationScale {
    pub fn new(mu: f64, sigma: f64, nu: f64) -> Result<Self> {
        if !mu.is_finite() || !(sigma > 0.0) || !sigma.is_finite() || !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::invalid(format!(
                "t location-scale parameters need finite mu, sigma > 0, nu > 0; got ({mu}, {sigma}, {nu})"
            )));
        }
        Ok(Self { mu, sigma, nu })
    }

    pub fn point_mass(mu: f64) -> Self {
        Self { mu, sigma: SIGMA_MIN, nu: NU_MAX }
    }

    /// Log density; `Γ` is the gamma function.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let nu = self.nu;
        let z = (x - self.mu) / self.sigma;
        ln_gamma((nu + 1.0) / 2.0)
            - ln_gamma(nu / 2.0)
            - self.sigma.ln()
            - 0.5 * (nu * std::f64::consts::PI).ln()
            - (nu + 1.0) / 2.0 * ((nu + z * z) / nu).ln()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.ln_pdf(x).exp()
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        samples.iter().map(|&x| self.ln_pdf(x)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.mu
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let t = StudentT::new(self.nu).expect("nu is positive");
        self.mu + self.sigma * t.sample(rng)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        use statrs::distribution::{ContinuousCDF, StudentsT};
        StudentsT::new(self.mu, self.sigma, self.nu).expect("valid parameters").inverse_cdf(p)
    }

    /// Interval outside which each tail carries `tail` probability.
    pub fn quantile_bounds(&self, tail: f64) -> (f64, f64) {
        (self.quantile(tail), self.quantile(1.0 - tail))
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 0 {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    } else {
        sorted[n / 2]
    }
}

fn mean_std(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Robust starting point: median, 1.4826·MAD and `ν = 5`.
pub fn initial_guess(samples: &[f64]) -> TLocationScale {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let mu = median(&s);
    let mut dev: Vec<f64> = s.iter().map(|x| (x - mu).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let mut sigma = 1.4826 * median(&dev);
    if !(sigma > SIGMA_MIN) {
        sigma = mean_std(samples).1.max(SIGMA_MIN);
    }
    TLocationScale { mu, sigma, nu: 5.0 }
}

/// Maximum-likelihood fit with `ν` restricted to `[NU_MIN, NU_MAX]`.
pub fn fit_speed(speeds: &[f64]) -> Result<TLocationScale> {
    if speeds.len() < MIN_SPEED_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "speed fit needs at least {MIN_SPEED_SAMPLES} samples, got {}",
            speeds.len()
        )));
    }
    if let Some(v) = speeds.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite speed sample {v}")));
    }
    let first = speeds[0];
    if speeds.iter().all(|&v| v == first) {
        return Ok(TLocationScale::point_mass(first));
    }
    let init = initial_guess(speeds);
    let unpack = |p: &[f64; 3]| TLocationScale {
        mu: p[0],
        sigma: p[1].exp(),
        nu: p[2].exp().clamp(NU_MIN, NU_MAX),
    };
    let objective = |p: &[f64; 3]| {
        let ll = unpack(p).log_likelihood(speeds);
        if ll.is_finite() {
            -ll
        } else {
            f64::INFINITY
        }
    };
    let x0 = [init.mu, init.sigma.ln(), init.nu.ln()];
    let steps = [0.5 * init.sigma, 0.2, 0.5];
    let (best, _) = nelder_mead(objective, x0, steps, 1e-10, 20_000);
    Ok(unpack(&best))
}

/// Speed model when too few samples exist for a likelihood fit: moment
/// matching with the Gaussian-limit shape.
pub fn fit_speed_or_moments(speeds: &[f64]) -> Result<TLocationScale> {
    if speeds.len() >= MIN_SPEED_SAMPLES {
        return fit_speed(speeds);
    }
    if speeds.is_empty() {
        return Err(Error::InsufficientData("no speed samples".into()));
    }
    let (mean, std) = mean_std(speeds);
    Ok(TLocationScale {
        mu: mean,
        sigma: std.max(SIGMA_MIN),
        nu: NU_MAX,
    })
}

/// Derivative-free simplex minimization. Stops once the spread of objective
/// values over the simplex falls below `tol·(1 + |f_best|)`.
pub fn nelder_mead<F>(f: F, x0: [f64; 3], steps: [f64; 3], tol: f64, max_iter: usize) -> ([f64; 3], f64)
where
    F: Fn(&[f64; 3]) -> f64,
{
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((x0, f(&x0)));
    for (i, s) in steps.iter().enumerate() {
        let mut x = x0;
        x[i] += s;
        simplex.push((x, f(&x)));
    }
    let lerp = |a: &[f64; 3], b: &[f64; 3], t: f64| -> [f64; 3] {
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])]
    };
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[3].1);
        if (worst - best).abs() <= tol * (1.0 + best.abs()) {
            break;
        }
        let mut centroid = [0.0; 3];
        for (x, _) in &simplex[..3] {
            for d in 0..3 {
                centroid[d] += x[d] / 3.0;
            }
        }
        let xw = simplex[3].0;
        let xr = lerp(&centroid, &xw, -1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = lerp(&centroid, &xw, -2.0);
            let fe = f(&xe);
            simplex[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst {
                let xc = lerp(&centroid, &xr, 0.5);
                (xc, f(&xc))
            } else {
                let xc = lerp(&centroid, &xw, 0.5);
                (xc, f(&xc))
            };
            if fc < worst.min(fr) {
                simplex[3] = (xc, fc);
            } else {
                let x_best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    v.0 = lerp(&x_best, &v.0, 0.5);
                    v.1 = f(&v.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn density_integrates_to_one() {
        let d = TLocationScale::new(450.0, 15.0, 5.0).unwrap();
        let h = 0.01;
        let n = (100.0 * 15.0 / h) as usize;
        let mass: f64 = (0..=n).map(|i| d.pdf(450.0 - 750.0 + i as f64 * h) * h).sum();
        assert!((mass - 1.0).abs() < 1e-4, "{mass}");
    }

    #[test]
    fn cauchy_limit_matches_closed_form() {
        let d = TLocationScale::new(0.0, 2.0, 1.0).unwrap();
        let x: f64 = 3.0;
        let cauchy = 1.0 / (std::f64::consts::PI * 2.0 * (1.0 + (x / 2.0).powi(2)));
        assert!((d.pdf(x) - cauchy).abs() < 1e-14);
    }

    #[test]
    fn recovers_generating_parameters() {
        let truth = TLocationScale::new(450.0, 15.0, 5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s: Vec<f64> = (0..5000).map(|_| truth.sample(&mut rng)).collect();
        let fit = fit_speed(&s).unwrap();
        assert!((fit.mu - 450.0).abs() < 1.0, "{fit:?}");
        assert!((fit.sigma - 15.0).abs() < 1.5, "{fit:?}");
        assert!((3.5..=7.0).contains(&fit.nu), "{fit:?}");
        assert!(fit.log_likelihood(&s) >= initial_guess(&s).log_likelihood(&s));
    }

    #[test]
    fn gaussian_data_hits_the_shape_cap() {
        let n = 4000;
        let normal = Normal::new(420.0, 12.0).unwrap();
        let s: Vec<f64> = (0..n).map(|i| normal.inverse_cdf((i as f64 + 0.5) / n as f64)).collect();
        let fit = fit_speed(&s).unwrap();
        let (m, sd) = mean_std(&s);
        assert!(fit.nu >= NU_MAX - 1e-9, "{fit:?}");
        assert!((fit.mu - m).abs() / m < 0.02);
        assert!((fit.sigma - sd).abs() / sd < 0.02, "{fit:?} vs {sd}");
    }

    #[test]
    fn constant_samples_give_point_mass() {
        let fit = fit_speed(&[450.0; 40]).unwrap();
        assert_eq!(fit.mu, 450.0);
        assert_eq!(fit.sigma, SIGMA_MIN);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        assert!(matches!(fit_speed(&[450.0; 29]), Err(Error::InsufficientData(_))));
        let m = fit_speed_or_moments(&[440.0, 460.0]).unwrap();
        assert_eq!(m.mu, 450.0);
        assert_eq!(m.nu, NU_MAX);
    }

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let (x, fx) = nelder_mead(
            |p| (p[0] - 1.0).powi(2) + 2.0 * (p[1] + 2.0).powi(2) + 0.5 * (p[2] - 0.3).powi(2),
            [0.0; 3],
            [1.0; 3],
            1e-16,
            10_000,
        );
        assert!(fx < 1e-10);
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] + 2.0).abs() < 1e-4 && (x[2] - 0.3).abs() < 1e-4);
    }
}
