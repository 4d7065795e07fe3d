//! Equal-tailed credible intervals for a binomial error rate.
//!
//! With `k` errors in `n` trials and a `Beta(a0, b0)` prior the posterior is
//! `Beta(k + a0, n - k + b0)`; the interval is bounded by its `(1 - mass) / 2`
//! and `(1 + mass) / 2` quantiles.

use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

/// Bisection stops once the bracket is narrower than this.
pub const QUANTILE_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prior {
    /// `Beta(1, 1)`.
    #[default]
    Uniform,
    /// `Beta(1/2, 1/2)`.
    Jeffreys,
}

impl Prior {
    fn params(self) -> (f64, f64) {
        match self {
            Prior::Uniform => (1.0, 1.0),
            Prior::Jeffreys => (0.5, 0.5),
        }
    }
}

/// Quantile of `Beta(a, b)` by bisection on the regularized incomplete beta
/// function.
pub fn beta_quantile(a: f64, b: f64, q: f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > QUANTILE_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        if beta_reg(a, b, mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Equal-tailed interval holding `mass` of the posterior for `k` errors in
/// `n` trials.
pub fn credible_interval(k: usize, n: usize, mass: f64, prior: Prior) -> Result<(f64, f64)> {
    if n == 0 || k > n {
        return Err(Error::invalid(format!(
            "credible interval needs 0 <= k <= n and n >= 1, got k={k} n={n}"
        )));
    }
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::invalid(format!("mass {mass} outside (0, 1)")));
    }
    let (a0, b0) = prior.params();
    let (a, b) = (k as f64 + a0, (n - k) as f64 + b0);
    let tail = 0.5 * (1.0 - mass);
    Ok((beta_quantile(a, b, tail), beta_quantile(a, b, 1.0 - tail)))
}

/// Error rate with its 95% equal-tailed credible interval.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ErrorRateReport {
    pub edits: usize,
    pub n: usize,
    pub rate: f64,
    pub interval_low: f64,
    pub interval_high: f64,
}

impl ErrorRateReport {
    /// Builds a report from pooled edit counts. Insertions can push `edits`
    /// above `n`; the interval is then computed for `min(edits, n)` errors.
    pub fn new(edits: usize, n: usize) -> Result<Self> {
        let trials = n.max(1);
        let (interval_low, interval_high) =
            credible_interval(edits.min(trials), trials, 0.95, Prior::Uniform)?;
        Ok(ErrorRateReport {
            edits,
            n,
            rate: edits as f64 / trials as f64,
            interval_low,
            interval_high,
        })
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.interval_high - self.interval_low)
    }

    /// `k n rate low high`.
    pub fn to_line(&self) -> String {
        format!(
            "{} {} {} {} {}",
            self.edits, self.n, self.rate, self.interval_low, self.interval_high
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let bad = || Error::Format(format!("bad error-rate line {line:?}"));
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(bad());
        }
        Ok(ErrorRateReport {
            edits: f[0].parse().map_err(|_| bad())?,
            n: f[1].parse().map_err(|_| bad())?,
            rate: f[2].parse().map_err(|_| bad())?,
            interval_low: f[3].parse().map_err(|_| bad())?,
            interval_high: f[4].parse().map_err(|_| bad())?,
        })
    }
}
