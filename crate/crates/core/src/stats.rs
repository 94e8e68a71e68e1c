//! Small statistics toolkit: binomial intervals, z-scores, two-sample KS,
//! and (weighted) straight-line fits.

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `hits` successes out of `n`.
pub fn wilson(hits: u64, n: u64, z: f64) -> Option<(f64, f64)> {
    if n == 0 {
        return None;
    }
    let n_f = n as f64;
    let p = hits as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if hits == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if hits == n { 1.0 } else { (center + half).min(1.0) };
    Some((lo, hi))
}

/// Standard error of a proportion estimated from `n` Bernoulli(p) draws.
pub fn binomial_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// `(observed - expected) / se`, zero when both the gap and `se` vanish.
pub fn z_score(observed: f64, expected: f64, se: f64) -> f64 {
    let gap = observed - expected;
    if se > 0.0 {
        gap / se
    } else if gap == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(gap)
    }
}

/// Running mean/variance (Welford).
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn sem(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic Kolmogorov
/// distribution (Stephens' small-sample correction). Ties are handled by
/// stepping both empirical CDFs past each distinct value together.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    assert!(!a.is_empty() && !b.is_empty(), "KS needs two non-empty samples");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    let lambda = (en + 0.12 + 0.11 / en) * d;
    KsResult { statistic: d, p_value: kolmogorov_q(lambda) }
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let jf = j as f64;
        let term = sign * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs().max(1e-300) {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Straight-line fit `y = intercept + slope * x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// Degrees of freedom left after the fit.
    pub dof: usize,
}

impl LineFit {
    /// Two-sided 95% interval using Student t with the residual dof.
    pub fn slope_ci_t(&self) -> (f64, f64) {
        let q = if self.dof == 0 {
            f64::INFINITY
        } else {
            StudentsT::new(0.0, 1.0, self.dof as f64).expect("dof > 0").inverse_cdf(0.975)
        };
        (self.slope - q * self.slope_se, self.slope + q * self.slope_se)
    }

    pub fn slope_ci_z(&self) -> (f64, f64) {
        (self.slope - Z95 * self.slope_se, self.slope + Z95 * self.slope_se)
    }
}

/// Weighted least squares. With `known_variance` the weights are taken to be
/// inverse variances and `slope_se = 1/sqrt(Sxx_w)`; otherwise the residual
/// variance rescales it (the ordinary regression formula when all weights
/// are equal).
pub fn weighted_line_fit(xs: &[f64], ys: &[f64], ws: &[f64], known_variance: bool) -> Result<LineFit> {
    let n = xs.len();
    if n != ys.len() || n != ws.len() {
        return Err(Error::Domain("fit inputs differ in length".into()));
    }
    if n < 2 {
        return Err(Error::InsufficientPoints { need: 2, have: n });
    }
    let sw: f64 = ws.iter().sum();
    let xbar = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ybar = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(ws).map(|(x, w)| w * (x - xbar).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Domain("fit needs at least two distinct x values".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).zip(ws).map(|((x, y), w)| w * (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let dof = n - 2;
    let slope_se = if known_variance {
        (1.0 / sxx).sqrt()
    } else if dof == 0 {
        f64::INFINITY
    } else {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .zip(ws)
            .map(|((x, y), w)| w * (y - intercept - slope * x).powi(2))
            .sum();
        (rss / dof as f64 / sxx).sqrt()
    };
    Ok(LineFit { slope, intercept, slope_se, dof })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_known_value() {
        // 5 of 10 at 95%: the interval is symmetric about one half.
        let (lo, hi) = wilson(5, 10, Z95).unwrap();
        assert!((lo - 0.236_593).abs() < 1e-5, "{lo}");
        assert!((hi - 0.763_407).abs() < 1e-5, "{hi}");
        let (lo0, hi0) = wilson(0, 100, Z95).unwrap();
        assert_eq!(lo0, 0.0);
        assert!(hi0 > 0.0 && hi0 < 0.05);
        assert!(wilson(0, 0, Z95).is_none());
    }

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let r = ks_two_sample(&a, &a);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let b: Vec<f64> = a.iter().map(|v| v + 300.0).collect();
        let r = ks_two_sample(&a, &b);
        assert!((r.statistic - 0.3).abs() < 1e-12);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn ks_ties_do_not_inflate_statistic() {
        let a = vec![1.0, 1.0, 2.0, 2.0];
        let b = vec![1.0, 2.0];
        assert_eq!(ks_two_sample(&a, &b).statistic, 0.0);
    }

    #[test]
    fn kolmogorov_reference_points() {
        // Q(1.36) ~ 0.049, Q(1.63) ~ 0.0098 (classical table values).
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_q(1.628) - 0.01).abs() < 5e-4);
    }

    #[test]
    fn exact_line_recovered() {
        let xs: Vec<f64> = (0..6).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.7 * x).collect();
        let ws = vec![1.0; 6];
        let f = weighted_line_fit(&xs, &ys, &ws, false).unwrap();
        assert!((f.slope + 0.7).abs() < 1e-12);
        assert!((f.intercept - 2.0).abs() < 1e-12);
        assert!(f.slope_se < 1e-10);
    }

    #[test]
    fn moments_basic() {
        let m: Moments = [1.0, 2.0, 3.0, 4.0].into_iter().collect();
        assert_eq!(m.mean(), 2.5);
        assert!((m.variance() - 5.0 / 3.0).abs() < 1e-12);
    }
}
