//! Success-rate statistics shared by the game and the trial harness.

use serde::Serialize;
use thiserror::Error;

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("no outcomes to summarize")]
    Empty,
}

/// Wilson score interval for `successes` out of `trials` at 95%.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    assert!(trials > 0 && successes <= trials);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // clamp away rounding at the extremes so the interval always contains p
    ((centre - half).max(0.0).min(p), (centre + half).min(1.0).max(p))
}

/// `|Pr[d = b] - 1/2|` with a Wilson interval on `Pr[d = b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdvantageEstimate {
    pub games: u64,
    pub wins: u64,
    pub pr_success: f64,
    pub advantage: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl AdvantageEstimate {
    pub fn from_counts(wins: u64, games: u64) -> Result<Self, StatsError> {
        if games == 0 {
            return Err(StatsError::Empty);
        }
        let pr_success = wins as f64 / games as f64;
        let (ci_low, ci_high) = wilson_interval(wins, games);
        Ok(AdvantageEstimate {
            games,
            wins,
            pr_success,
            advantage: (pr_success - 0.5).abs(),
            ci_low,
            ci_high,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterStats {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub max: u64,
}

impl CounterStats {
    pub fn from_values(name: &str, values: &[u64]) -> Result<Self, StatsError> {
        if values.is_empty() {
            return Err(StatsError::Empty);
        }
        let mut sorted = values.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2] as f64
        } else {
            (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
        };
        Ok(CounterStats {
            name: name.to_owned(),
            mean: sorted.iter().map(|&v| v as f64).sum::<f64>() / n as f64,
            median,
            max: sorted[n - 1],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from statsmodels' proportion_confint(method="wilson").
    #[test]
    fn wilson_reference_values() {
        let cases = [
            (10, 10, 0.722_467_200_137_110_6, 1.0),
            (5, 10, 0.236_593_090_512_563_94, 0.763_406_909_487_436_1),
            (0, 10, 0.0, 0.277_532_799_862_889_26),
            (750, 1000, 0.722_239_719_740_913_8, 0.775_846_901_016_308_7),
            (1, 3, 0.061_491_944_720_396_26, 0.792_340_399_197_952_3),
        ];
        for (s, n, lo, hi) in cases {
            let (l, h) = wilson_interval(s, n);
            assert!((l - lo).abs() < 1e-12, "{s}/{n}: {l} vs {lo}");
            assert!((h - hi).abs() < 1e-12, "{s}/{n}: {h} vs {hi}");
        }
        let (l, h) = wilson_interval(10, 10);
        assert!(l > 0.69 && h <= 1.0);
    }

    #[test]
    fn interval_contains_rate() {
        for n in 1..60u64 {
            for s in 0..=n {
                let (l, h) = wilson_interval(s, n);
                let p = s as f64 / n as f64;
                assert!(l <= p && p <= h);
            }
        }
    }

    #[test]
    fn advantage_arithmetic() {
        assert_eq!(AdvantageEstimate::from_counts(1000, 1000).unwrap().advantage, 0.5);
        assert_eq!(AdvantageEstimate::from_counts(500, 1000).unwrap().advantage, 0.0);
        assert_eq!(AdvantageEstimate::from_counts(750, 1000).unwrap().advantage, 0.25);
        assert_eq!(AdvantageEstimate::from_counts(0, 1000).unwrap().advantage, 0.5);
        assert_eq!(AdvantageEstimate::from_counts(0, 0), Err(StatsError::Empty));
    }

    #[test]
    fn counters() {
        let c = CounterStats::from_values("x", &[4, 1, 3, 2]).unwrap();
        assert_eq!((c.mean, c.median, c.max), (2.5, 2.5, 4));
        let c = CounterStats::from_values("x", &[7]).unwrap();
        assert_eq!((c.mean, c.median, c.max), (7.0, 7.0, 7));
        assert!(CounterStats::from_values("x", &[]).is_err());
    }
}
