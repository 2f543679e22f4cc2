//! Distribution statistics and platform comparison.

use serde::{Deserialize, Serialize};

use super::{BenchError, SampleSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformStats {
    pub platform: String,
    pub samples: usize,
    pub mean_ms: f64,
    /// Population standard deviation.
    pub std_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
}

/// Summary statistics with nearest-rank percentiles.
pub fn stats(set: &SampleSet) -> Result<PlatformStats, BenchError> {
    let n = set.samples.len();
    if n == 0 {
        return Err(BenchError::EmptySampleSet(set.platform.clone()));
    }
    let mut sorted = set.samples.clone();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    Ok(PlatformStats {
        platform: set.platform.clone(),
        samples: n,
        mean_ms: mean,
        std_ms: var.sqrt(),
        min_ms: sorted[0],
        max_ms: sorted[n - 1],
        p50_ms: nearest_rank(&sorted, 50.0),
        p95_ms: nearest_rank(&sorted, 95.0),
    })
}

/// Nearest-rank percentile of an ascending, non-empty slice.
pub fn nearest_rank(sorted: &[f64], percentile: f64) -> f64 {
    let n = sorted.len();
    let rank = ((percentile / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Relative difference of `other` against `base`, in percent.
pub fn percent_delta(base_ms: f64, other_ms: f64) -> f64 {
    (other_ms - base_ms) / base_ms * 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub base: String,
    pub other: String,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Fastest first; equal means keep input order.
    pub order: Vec<PlatformStats>,
    /// Every ordered pair of distinct platforms, in ranking order.
    pub deltas: Vec<Delta>,
}

impl Ranking {
    pub fn names(&self) -> Vec<&str> {
        self.order.iter().map(|s| s.platform.as_str()).collect()
    }

    pub fn delta(&self, base: &str, other: &str) -> Option<f64> {
        self.deltas
            .iter()
            .find(|d| d.base == base && d.other == other)
            .map(|d| d.percent)
    }
}

pub fn compare(stats_list: &[PlatformStats]) -> Result<Ranking, BenchError> {
    if stats_list.len() < 2 {
        return Err(BenchError::TooFewPlatforms(stats_list.len()));
    }
    let mut order = stats_list.to_vec();
    order.sort_by(|a, b| a.mean_ms.total_cmp(&b.mean_ms));
    let deltas = order
        .iter()
        .flat_map(|base| {
            order
                .iter()
                .filter(move |other| !std::ptr::eq(*other, base))
                .map(move |other| Delta {
                    base: base.platform.clone(),
                    other: other.platform.clone(),
                    percent: percent_delta(base.mean_ms, other.mean_ms),
                })
        })
        .collect();
    Ok(Ranking { order, deltas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(samples: &[f64]) -> SampleSet {
        SampleSet::new("t", 0, samples.to_vec())
    }

    fn with_mean(name: &str, mean: f64) -> PlatformStats {
        PlatformStats {
            platform: name.into(),
            samples: 1,
            mean_ms: mean,
            std_ms: 0.0,
            min_ms: mean,
            max_ms: mean,
            p50_ms: mean,
            p95_ms: mean,
        }
    }

    #[test]
    fn constant_samples() {
        let s = stats(&set(&[2790.0, 2790.0, 2790.0])).unwrap();
        assert_eq!(s.mean_ms, 2790.0);
        assert_eq!(s.std_ms, 0.0);
    }

    #[test]
    fn one_to_four() {
        let s = stats(&set(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(s.mean_ms, 2.5);
        // sqrt(((1.5^2)*2 + (0.5^2)*2) / 4) = sqrt(1.25)
        assert!((s.std_ms - 1.25f64.sqrt()).abs() < 1e-12);
        assert!((s.std_ms - 1.118).abs() < 1e-3);
        assert_eq!((s.min_ms, s.max_ms), (1.0, 4.0));
        assert_eq!(s.p50_ms, 2.0);
        assert_eq!(s.p95_ms, 4.0);
    }

    #[test]
    fn empty_set_is_an_error() {
        assert!(matches!(stats(&set(&[])), Err(BenchError::EmptySampleSet(_))));
    }

    #[test]
    fn nearest_rank_on_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank(&v, 50.0), 50.0);
        assert_eq!(nearest_rank(&v, 95.0), 95.0);
        assert_eq!(nearest_rank(&v, 0.0), 1.0);
        assert_eq!(nearest_rank(&v, 100.0), 100.0);
    }

    #[test]
    fn ranking_of_reported_means() {
        let r = compare(&[
            with_mean("Azure", 6102.0),
            with_mean("Acurast", 2790.0),
            with_mean("GCP", 5565.0),
            with_mean("AWS", 3683.0),
        ])
        .unwrap();
        assert_eq!(r.names(), vec!["Acurast", "AWS", "GCP", "Azure"]);
        assert_eq!(r.deltas.len(), 12);
    }

    #[test]
    fn ties_keep_input_order() {
        let r = compare(&[with_mean("x", 1.0), with_mean("y", 1.0)]).unwrap();
        assert_eq!(r.names(), vec!["x", "y"]);
        let r = compare(&[with_mean("y", 1.0), with_mean("x", 1.0)]).unwrap();
        assert_eq!(r.names(), vec!["y", "x"]);
    }

    #[test]
    fn delta_against_local_baseline() {
        let r = compare(&[with_mean("Acurast", 2790.0), with_mean("Local1", 2137.0)]).unwrap();
        let d = r.delta("Local1", "Acurast").unwrap();
        assert!((d - 30.55).abs() < 0.01, "{d}");
    }

    #[test]
    fn too_few_platforms() {
        assert!(matches!(compare(&[with_mean("a", 1.0)]), Err(BenchError::TooFewPlatforms(1))));
    }

    proptest! {
        #[test]
        fn percentiles_are_ordered(samples in proptest::collection::vec(0.001f64..1e6, 1..200)) {
            let s = stats(&set(&samples)).unwrap();
            prop_assert!(s.min_ms <= s.p50_ms && s.p50_ms <= s.p95_ms && s.p95_ms <= s.max_ms);
            prop_assert!(s.min_ms <= s.mean_ms + 1e-9 && s.mean_ms <= s.max_ms + 1e-9);
        }

        #[test]
        fn compare_sorts_a_permutation(means in proptest::collection::vec(0.0f64..1e4, 2..12)) {
            let input: Vec<_> = means.iter().enumerate().map(|(i, m)| with_mean(&format!("p{i}"), *m)).collect();
            let r = compare(&input).unwrap();
            prop_assert!(r.order.windows(2).all(|w| w[0].mean_ms <= w[1].mean_ms));
            let mut a: Vec<_> = r.names().into_iter().map(str::to_owned).collect();
            let mut b: Vec<_> = input.iter().map(|s| s.platform.clone()).collect();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
    }
}
