//! Summary statistics for travel-time pools and tuning results.

use serde::{Deserialize, Serialize};

/// Named in every emitted summary so readers know how quartiles were taken.
pub const QUARTILE_METHOD: &str = "linear interpolation between order statistics at p*(n-1)";

/// Half-width multiplier of a two-sided 95% normal interval.
pub const Z_95: f64 = 1.96;

/// Mean and sample standard deviation (`n - 1`; zero for one sample).
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Some((mean, 0.0));
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    Some((mean, (ss / (n - 1.0)).sqrt()))
}

/// Quantile `p` of ascending `sorted` by linear interpolation.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Boxplot summary of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
    /// Samples strictly outside the fences, ascending.
    pub outliers: Vec<f64>,
}

impl BoxStats {
    /// `None` for an empty sample.
    pub fn from_samples(samples: &[f64]) -> Option<Self> {
        let (mean, std) = mean_std(samples)?;
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let q1 = quantile(&sorted, 0.25);
        let q3 = quantile(&sorted, 0.75);
        let iqr = q3 - q1;
        let lower_fence = q1 - 1.5 * iqr;
        let upper_fence = q3 + 1.5 * iqr;
        let outliers = sorted.iter().copied().filter(|&x| x < lower_fence || x > upper_fence).collect();
        Some(BoxStats {
            count: sorted.len(),
            mean,
            std,
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            median: quantile(&sorted, 0.5),
            q1,
            q3,
            iqr,
            lower_fence,
            upper_fence,
            outliers,
        })
    }

    pub fn is_outlier(&self, x: f64) -> bool {
        x < self.lower_fence || x > self.upper_fence
    }
}

/// Mean with a 95% normal-approximation band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

impl Band {
    pub fn from_samples(xs: &[f64]) -> Option<Self> {
        let (mean, std) = mean_std(xs)?;
        let half = Z_95 * std / (xs.len() as f64).sqrt();
        Some(Band { mean, low: mean - half, high: mean + half })
    }
}

/// Ordering score of a tuning config: lower is better.
pub fn rank_score(mean: f64, std: f64) -> f64 {
    mean + std
}
