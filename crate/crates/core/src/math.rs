//! Scalar math used throughout the crate.
//!
//! `f64` transcendentals live in `std`, not `core`; everything here routes
//! through `libm` so the crate builds without `std` and produces identical
//! results on every target.

/// 97.5% standard normal quantile used for 95% confidence intervals.
pub const Z_95: f64 = 1.959964;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

/// Logistic function. The linear predictor is capped at +-500 so extreme
/// fits stay finite; the cap is far outside any representable probability
/// difference.
#[inline]
pub fn expit(x: f64) -> f64 {
    let x = x.clamp(-500.0, 500.0);
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Inverse of [`expit`]; input is clamped away from {0, 1}.
#[inline]
pub fn logit(p: f64) -> f64 {
    let p = clamp_prob(p);
    ln(p / (1.0 - p))
}

/// Probability clamp applied before logits and ratio denominators.
pub const PROB_EPS: f64 = 1e-6;

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Compensated (Kahan) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut acc = KahanSum::new();
    for &x in xs {
        acc.add(x);
    }
    acc.value() / xs.len() as f64
}

/// Unbiased sample variance (n-1 denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let mut acc = KahanSum::new();
    for &x in xs {
        let d = x - m;
        acc.add(d * d);
    }
    acc.value() / (n - 1) as f64
}

/// Population variance (n denominator).
pub fn population_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    let m = mean(xs);
    let mut acc = KahanSum::new();
    for &x in xs {
        let d = x - m;
        acc.add(d * d);
    }
    acc.value() / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expit_logit_roundtrip() {
        for &p in &[1e-5, 0.25, 0.5, 0.9, 1.0 - 1e-5] {
            assert!((expit(logit(p)) - p).abs() < 1e-12);
        }
    }

    #[test]
    fn expit_extremes_stay_finite() {
        assert!(expit(1e9).is_finite());
        assert!(expit(-1e9) >= 0.0);
        assert!(expit(f64::MAX) <= 1.0);
    }

    #[test]
    fn kahan_handles_many_small_terms() {
        let mut acc = KahanSum::new();
        for _ in 0..10_000_000 {
            acc.add(1e-7);
        }
        assert!((acc.value() - 1.0).abs() < 1e-9);
    }
}
