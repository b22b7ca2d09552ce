//! Classification accuracy and the two-tailed paired t-test.

use crate::{Error, Result};

/// Fraction of positions where `predictions` and `truth` agree.
pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::ShapeMismatch {
            context: "accuracy",
            expected: alloc::vec![truth.len()],
            found: alloc::vec![predictions.len()],
        });
    }
    if truth.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let correct = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

/// Two-tailed paired t-test on `a − b`.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<PairedTTestResult> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            context: "paired_ttest",
            expected: alloc::vec![a.len()],
            found: alloc::vec![b.len()],
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let diffs = || a.iter().zip(b).map(|(x, y)| x - y);
    let mean = diffs().sum::<f64>() / n as f64;
    let ss: f64 = diffs().map(|d| (d - mean) * (d - mean)).sum();
    // relative guard: differences equal up to rounding count as constant
    let scale = diffs().map(f64::abs).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    if ss <= (1e-13 * scale) * (1e-13 * scale) * n as f64 {
        return Err(Error::ZeroVariance);
    }
    let sd = libm::sqrt(ss / (n - 1) as f64);
    let t = mean / (sd / libm::sqrt(n as f64));
    let df = n - 1;
    Ok(PairedTTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: student_t_two_tailed(t, df as f64),
    })
}

/// `P(|T| ≥ |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_tailed(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    regularized_incomplete_beta(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

/// `I_x(a, b)` by continued fraction (modified Lentz).
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    const MAX_ITER: usize = 500;
    let guard = |v: f64| if v.abs() < TINY { TINY } else { v };
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 / guard(1.0 - qab * x / qap);
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 / guard(1.0 + aa * d);
        c = guard(1.0 + aa / c);
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
