//! Student-t machinery: paired t-test, quantiles and confidence intervals.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{math, Error, Result};

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection.
        let pi = core::f64::consts::PI;
        return math::ln(pi / libm::sin(pi * x)) - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + 7.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * math::ln(2.0 * core::f64::consts::PI) + (x + 0.5) * math::ln(t) - t + math::ln(a)
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-12;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if math::abs(d) < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if math::abs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if math::abs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if math::abs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if math::abs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if math::abs(delta - 1.0) < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * math::ln(x) + b * math::ln(1.0 - x);
    let front = math::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Student-t CDF with `df` degrees of freedom.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided tail probability `P(|T| >= |t|)`.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
}

/// Student-t quantile by bisection on the CDF.
pub fn t_quantile(p: f64, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || !(df > 0.0) {
        return Err(Error::InvalidArgument("t quantile needs 0 < p < 1 and df > 0".into()));
    }
    let (mut lo, mut hi) = (-1e3, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    pub p_two_sided: f64,
    pub significant: bool,
    /// Differences had zero variance; `p` was set by convention.
    pub degenerate: bool,
}

pub const ALPHA: f64 = 0.05;

/// Paired t-test on `a - b`, sample standard deviation (divisor n - 1).
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "paired samples".into(),
            expected: a.len(),
            found: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidArgument("paired t-test needs n >= 2".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = math::mean(&d);
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let df = n - 1;
    if var <= 0.0 {
        let (t, p) = if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (if mean > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY }, 0.0)
        };
        return Ok(TTest {
            t,
            df,
            p_two_sided: p,
            significant: p < ALPHA,
            degenerate: true,
        });
    }
    let t = mean / math::sqrt(var / n as f64);
    let p = t_two_sided_p(t, df as f64);
    Ok(TTest {
        t,
        df,
        p_two_sided: p,
        significant: p < ALPHA,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    /// Single value; the interval collapses to the mean.
    pub degenerate: bool,
}

/// Mean and two-sided t interval at `level` (e.g. 0.95), sample sd.
pub fn t_confidence_interval(values: &[f64], level: f64) -> Result<ConfidenceInterval> {
    let n = values.len();
    if n == 0 {
        return Err(Error::InvalidArgument("confidence interval of no values".into()));
    }
    let mean = math::mean(values);
    if values.iter().all(|&v| v == values[0]) {
        return Ok(ConfidenceInterval {
            mean: values[0],
            lower: values[0],
            upper: values[0],
            n,
            degenerate: n == 1,
        });
    }
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let q = t_quantile(0.5 + level / 2.0, (n - 1) as f64)?;
    let half = q * math::sqrt(var / n as f64);
    Ok(ConfidenceInterval {
        mean,
        lower: mean - half,
        upper: mean + half,
        n,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-13);
        assert!((ln_gamma(5.0) - math::ln(24.0)).abs() < 1e-12);
        assert!((ln_gamma(0.5) - math::ln(core::f64::consts::PI.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn beta_closed_forms() {
        // I_x(1, 1) = x; I_x(2, 1) = x^2
        assert!((regularized_incomplete_beta(1.0, 1.0, 0.3) - 0.3).abs() < 1e-12);
        assert!((regularized_incomplete_beta(2.0, 1.0, 0.3) - 0.09).abs() < 1e-12);
    }

    #[test]
    fn t_distribution_one_df_is_cauchy() {
        // Cauchy CDF: 1/2 + atan(t)/pi
        for t in [-3.0, -0.5, 0.0, 1.0, 7.0] {
            let exact = 0.5 + libm::atan(t) / core::f64::consts::PI;
            assert!((t_cdf(t, 1.0) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn textbook_paired_case() {
        let r = paired_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]).unwrap();
        assert!((r.t - 4.242_640_687).abs() < 1e-6);
        assert_eq!(r.df, 4);
        assert!((r.p_two_sided - 0.013_2).abs() < 1e-3);
        assert!(r.significant);
    }

    #[test]
    fn degenerate_differences() {
        let same = paired_t_test(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(same.p_two_sided, 1.0);
        assert!(same.degenerate);
        let shifted = paired_t_test(&[2.0, 3.0], &[1.0, 2.0]).unwrap();
        assert_eq!(shifted.p_two_sided, 0.0);
        assert!(shifted.degenerate && shifted.significant);
        assert!(paired_t_test(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn sign_flip_negates_t() {
        let a = [0.3, 0.9, 0.1, 0.5];
        let b = [0.2, 0.4, 0.4, 0.1];
        let f = paired_t_test(&a, &b).unwrap();
        let r = paired_t_test(&b, &a).unwrap();
        assert_eq!(f.t, -r.t);
        assert_eq!(f.p_two_sided, r.p_two_sided);
    }

    #[test]
    fn ci_cases() {
        let one = t_confidence_interval(&[0.7], 0.95).unwrap();
        assert!(one.degenerate && one.lower == 0.7 && one.upper == 0.7);
        let flat = t_confidence_interval(&[0.8; 10], 0.95).unwrap();
        assert_eq!(flat.upper - flat.lower, 0.0);
    }
}
