//! Means with normal-approximation 95% intervals.

use serde::{Deserialize, Serialize};

const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub n: usize,
    pub mean: f64,
    pub low: f64,
    pub high: f64,
}

impl MeanCi {
    pub fn excludes_zero(&self) -> bool {
        self.n > 1 && (self.low > 0.0 || self.high < 0.0)
    }
}

/// Sample mean and `mean ± z·s/√n`. Empty input gives zeros; one sample
/// gives a degenerate interval.
pub fn mean_ci(xs: &[f64]) -> MeanCi {
    let n = xs.len();
    if n == 0 {
        return MeanCi {
            n,
            mean: 0.0,
            low: 0.0,
            high: 0.0,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanCi {
            n,
            mean,
            low: mean,
            high: mean,
        };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let half = Z95 * (var / n as f64).sqrt();
    MeanCi {
        n,
        mean,
        low: mean - half,
        high: mean + half,
    }
}

/// Interval for the mean of `a[i] − b[i]`.
pub fn paired_ci(a: &[f64], b: &[f64]) -> MeanCi {
    assert_eq!(a.len(), b.len(), "paired samples must align");
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    mean_ci(&d)
}
