//! Per-processor reliability scores.
//!
//! A score is the mean of a Beta(1, 1) prior updated with the observed
//! fulfillment outcomes: `(successes + 1) / (successes + failures + 2)`.
//! Records are immutable values; [`ReputationBook`] keeps one per processor.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::ProcessorId;

/// Result of one fulfilled (or failed) slot, as seen by the reputation engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReputationRecord {
    pub processor_id: ProcessorId,
    pub successes: u64,
    pub failures: u64,
}

impl ReputationRecord {
    pub fn initial(processor_id: ProcessorId) -> Self {
        Self {
            processor_id,
            successes: 0,
            failures: 0,
        }
    }

    #[must_use]
    pub fn update(&self, feedback: Feedback) -> Self {
        let mut next = self.clone();
        match feedback {
            Feedback::Success => next.successes += 1,
            Feedback::Failure => next.failures += 1,
        }
        next
    }

    pub fn score(&self) -> f64 {
        score(self.successes, self.failures)
    }
}

/// Laplace-smoothed success rate.
pub fn score(successes: u64, failures: u64) -> f64 {
    (successes as f64 + 1.0) / (successes as f64 + failures as f64 + 2.0)
}

/// Global reputation store, one record per processor.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReputationBook {
    records: BTreeMap<ProcessorId, ReputationRecord>,
}

impl ReputationBook {
    pub fn new() -> Self {
        Self::default()
    }

    /// Current record, or the prior for processors never seen.
    pub fn record(&self, processor: &ProcessorId) -> ReputationRecord {
        self.records
            .get(processor)
            .cloned()
            .unwrap_or_else(|| ReputationRecord::initial(processor.clone()))
    }

    pub fn score(&self, processor: &ProcessorId) -> f64 {
        self.record(processor).score()
    }

    pub fn report(&mut self, processor: &ProcessorId, feedback: Feedback) {
        let next = self.record(processor).update(feedback);
        self.records.insert(processor.clone(), next);
    }

    pub fn records(&self) -> impl Iterator<Item = &ReputationRecord> {
        self.records.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(s: u64, f: u64) -> ReputationRecord {
        ReputationRecord {
            processor_id: "p".into(),
            successes: s,
            failures: f,
        }
    }

    #[test]
    fn prior_is_one_half() {
        let a = ReputationRecord::initial("a".into());
        let b = ReputationRecord::initial("b".into());
        assert_eq!(a.score(), 0.5);
        assert_eq!(a.score(), b.score());
        assert_eq!((a.successes, a.failures), (0, 0));
    }

    #[test]
    fn update_examples() {
        let r = rec(0, 0).update(Feedback::Success);
        assert_eq!((r.successes, r.failures), (1, 0));
        assert!((r.score() - 2.0 / 3.0).abs() < 1e-12);

        let r = r.update(Feedback::Failure);
        assert_eq!((r.successes, r.failures), (1, 1));
        assert_eq!(r.score(), 0.5);

        let r = rec(99, 0).update(Feedback::Success);
        assert_eq!(r.successes, 100);
        assert!((r.score() - 101.0 / 102.0).abs() < 1e-12);
    }

    #[test]
    fn score_examples() {
        assert_eq!(rec(0, 0).score(), 0.5);
        assert_eq!(rec(1, 1).score(), 0.5);
        assert!((rec(4, 0).score() - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn book_defaults_to_prior() {
        let mut book = ReputationBook::new();
        let p: ProcessorId = "p1".into();
        assert_eq!(book.score(&p), 0.5);
        book.report(&p, Feedback::Success);
        book.report(&p, Feedback::Success);
        assert_eq!(book.record(&p).successes, 2);
        assert_eq!(book.score(&"other".into()), 0.5);
    }

    proptest! {
        #[test]
        fn score_is_strictly_inside_unit_interval(s in 0u64..1_000_000_000, f in 0u64..1_000_000_000) {
            let x = rec(s, f).score();
            prop_assert!(x > 0.0 && x < 1.0);
        }

        #[test]
        fn success_never_lowers_failure_never_raises(s in 0u64..1_000_000, f in 0u64..1_000_000) {
            let r = rec(s, f);
            prop_assert!(r.update(Feedback::Success).score() >= r.score());
            prop_assert!(r.update(Feedback::Failure).score() <= r.score());
        }

        #[test]
        fn order_of_outcomes_is_irrelevant(outcomes in proptest::collection::vec(any::<bool>(), 0..200), seed in any::<u64>()) {
            let fb = |b: bool| if b { Feedback::Success } else { Feedback::Failure };
            let forward = outcomes.iter().fold(rec(0, 0), |r, &b| r.update(fb(b)));
            let mut shuffled = outcomes.clone();
            // deterministic rotation + reversal as a cheap permutation
            let k = (seed as usize) % (shuffled.len().max(1));
            shuffled.rotate_left(k);
            shuffled.reverse();
            let other = shuffled.iter().fold(rec(0, 0), |r, &b| r.update(fb(b)));
            prop_assert_eq!(forward, other);
        }
    }
}
