//! Small sample-statistics helpers shared by the Monte Carlo estimators.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Sample mean with standard error and a normal 95% confidence interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Estimate {
        let n = xs.len();
        let mean = mean(xs);
        let stderr = if n > 1 {
            (variance(xs) / n as f64).sqrt()
        } else {
            0.0
        };
        Estimate {
            mean,
            stderr,
            ci_low: mean - Z95 * stderr,
            ci_high: mean + Z95 * stderr,
            n,
        }
    }

    /// A value with a known standard error (no underlying sample).
    pub fn exact(mean: f64, stderr: f64) -> Estimate {
        Estimate {
            mean,
            stderr,
            ci_low: mean - Z95 * stderr,
            ci_high: mean + Z95 * stderr,
            n: 0,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.ci_low && v <= self.ci_high
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Standard error of the mean of a stationary sequence from non-overlapping
/// batch means. `xs` is split into `n_batches` equal consecutive batches.
pub fn batch_means_stderr(xs: &[f64], n_batches: usize) -> f64 {
    let b = n_batches.max(2);
    let len = xs.len() / b;
    if len == 0 {
        return 0.0;
    }
    let means: Vec<f64> = (0..b).map(|i| mean(&xs[i * len..(i + 1) * len])).collect();
    (variance(&means) / b as f64).sqrt()
}

/// Pearson correlation coefficient.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let mx = mean(xs);
    let my = mean(ys);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Two-sample Kolmogorov–Smirnov statistic sup |F_a − F_b|.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
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
    d
}

/// Asymptotic two-sample KS critical value at level `alpha`
/// (c(α)·sqrt((n+m)/(n·m)), c(α) = sqrt(−ln(α/2)/2)).
pub fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}
