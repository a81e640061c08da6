use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Ordinary least squares `y = slope·x + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard errors; NaN with fewer than three points.
    pub slope_se: f64,
    pub intercept_se: f64,
    pub r2: f64,
    pub n: usize,
}

impl Fit {
    /// One-sided upper confidence bound on the slope.
    pub fn slope_upper(&self, confidence: f64) -> f64 {
        self.slope + t_quantile(confidence, self.n.saturating_sub(2)) * self.slope_se
    }

    pub fn slope_lower(&self, confidence: f64) -> f64 {
        self.slope - t_quantile(confidence, self.n.saturating_sub(2)) * self.slope_se
    }
}

pub fn ols(x: &[f64], y: &[f64]) -> Option<Fit> {
    let n = x.len();
    if n != y.len() || n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    let (slope_se, intercept_se) = if n > 2 {
        let s2 = sse / (nf - 2.0);
        ((s2 / sxx).sqrt(), (s2 * (1.0 / nf + mx * mx / sxx)).sqrt())
    } else {
        (f64::NAN, f64::NAN)
    };
    Some(Fit {
        slope,
        intercept,
        slope_se,
        intercept_se,
        r2,
        n,
    })
}

/// Quantile of Student's t with `dof` degrees of freedom; infinite when `dof = 0`.
pub fn t_quantile(p: f64, dof: usize) -> f64 {
    if dof == 0 {
        return f64::INFINITY;
    }
    if dof > 10_000 {
        // statrs loses accuracy here; first term of the Cornish-Fisher expansion
        let z = normal_quantile(p);
        return z + (z * z * z + z) / (4.0 * dof as f64);
    }
    StudentsT::new(0.0, 1.0, dof as f64).map(|t| t.inverse_cdf(p)).unwrap_or(f64::NAN)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

/// Sample mean and its standard error.
pub fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, f64::NAN);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let den = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / den;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / den;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_a_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let f = ols(&x, &y).unwrap();
        assert!((f.slope - 2.5).abs() < 1e-12 && (f.intercept + 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12 && f.slope_se < 1e-12);
        assert!(ols(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn ols_standard_errors() {
        // hand-computed: x = 0..4, y = (0, 2, 1, 4, 3)
        let f = ols(&[0.0, 1.0, 2.0, 3.0, 4.0], &[0.0, 2.0, 1.0, 4.0, 3.0]).unwrap();
        assert!((f.slope - 0.8).abs() < 1e-12);
        assert!((f.intercept - 0.4).abs() < 1e-12);
        // SSE = 3.6, s² = 1.2, Sxx = 10
        assert!((f.slope_se - 0.12f64.sqrt()).abs() < 1e-12);
        assert!((f.r2 - (1.0 - 3.6 / 10.0)).abs() < 1e-12);
    }

    #[test]
    fn wilson_and_quantiles() {
        let (lo, hi) = wilson(0, 100, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson(50, 100, 1.96);
        assert!((lo + hi - 1.0).abs() < 1e-12);
        assert!((t_quantile(0.975, 1_000_000) - 1.959964).abs() < 1e-4);
        assert!((t_quantile(0.95, 3) - 2.353363).abs() < 1e-5);
        assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-5);
    }
}
