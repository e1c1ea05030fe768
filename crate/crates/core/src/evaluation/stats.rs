//! Paired t-test and Pearson correlation with Student-t p-values.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("samples have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} observations, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("correlation undefined: zero variance in {0}")]
    ZeroVariance(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub t_statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub mean_diff: f64,
    /// Differences have zero variance but a nonzero mean.
    pub degenerate: bool,
}

impl SignificanceResult {
    pub fn is_significant(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Two-sided p-value of a t statistic with `dof` degrees of freedom.
pub fn two_sided_p(t: f64, dof: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom");
    (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Two-sided paired t-test on `a[i] - b[i]`, `n - 1` degrees of freedom.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<SignificanceResult, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFew { need: 2, got: n });
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean_diff = mean(&diffs);
    if diffs.iter().all(|&d| d == 0.0) {
        return Ok(SignificanceResult { t_statistic: 0.0, p_value: 1.0, n, mean_diff: 0.0, degenerate: false });
    }
    let var = diffs.iter().map(|d| (d - mean_diff).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    // constant differences up to float noise from the subtraction
    if sd <= 1e-12 * mean_diff.abs() {
        return Ok(SignificanceResult {
            t_statistic: f64::INFINITY.copysign(mean_diff),
            p_value: 0.0,
            n,
            mean_diff,
            degenerate: true,
        });
    }
    let t = mean_diff / (sd / (n as f64).sqrt());
    Ok(SignificanceResult { t_statistic: t, p_value: two_sided_p(t, (n - 1) as f64), n, mean_diff, degenerate: false })
}

/// Sample Pearson r with a two-sided p-value from `t = r sqrt((n-2)/(1-r^2))`.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<Correlation, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFew { need: 3, got: n });
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(StatsError::ZeroVariance("x"));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(StatsError::ZeroVariance("y"));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let p_value = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * ((n - 2) as f64 / (1.0 - r * r)).sqrt();
        two_sided_p(t, (n - 2) as f64)
    };
    Ok(Correlation { r, p_value, n })
}
