//! Energy per execution and executions per watt-hour.

use serde::{Deserialize, Serialize};

const MS_PER_HOUR: f64 = 3_600_000.0;

/// Share of a multi-core package's power attributed to one saturated core.
pub fn per_core_watts(tdp_watts: f64, cores: u32) -> f64 {
    tdp_watts / f64::from(cores.max(1))
}

/// Energy for running at `power_watts` for `duration_ms`.
pub fn energy_wh(power_watts: f64, duration_ms: f64) -> f64 {
    power_watts * duration_ms / MS_PER_HOUR
}

/// Whole executions that fit in one watt-hour.
pub fn executions_per_wh(energy_wh: f64) -> u64 {
    (1.0 / energy_wh).floor() as u64
}

/// One executing core running the benchmark workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub label: String,
    pub power_watts: f64,
    pub duration_ms: f64,
}

impl PowerModel {
    pub fn new(label: impl Into<String>, power_watts: f64, duration_ms: f64) -> Option<Self> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        (ok(power_watts) && ok(duration_ms)).then(|| Self {
            label: label.into(),
            power_watts,
            duration_ms,
        })
    }

    pub fn energy_wh(&self) -> f64 {
        energy_wh(self.power_watts, self.duration_ms)
    }

    pub fn executions_per_wh(&self) -> u64 {
        executions_per_wh(self.energy_wh())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn per_core_examples() {
        assert_eq!(per_core_watts(180.0, 32), 5.625);
        assert_eq!(per_core_watts(180.0, 1), 180.0);
        assert_eq!(per_core_watts(100.0, 4), 25.0);
    }

    #[test]
    fn energy_examples() {
        assert!((energy_wh(5.625, 2092.0) - 3.268750e-3).abs() < 1e-12);
        assert_eq!(energy_wh(1.0, 3_600_000.0), 1.0);
        assert!((energy_wh(0.3, 2790.0) - 2.325e-4).abs() < 1e-12);
    }

    #[test]
    fn executions_examples() {
        // 1 / 3.26875e-3 = 305.93...
        assert_eq!(executions_per_wh(3.268750e-3), 305);
        // 1 / 2.275833e-4 = 4393.99...
        assert_eq!(executions_per_wh(2.275833e-4), 4393);
        assert_eq!(executions_per_wh(1.0), 1);
    }

    #[test]
    fn model_rejects_non_positive() {
        assert!(PowerModel::new("x", 0.0, 1.0).is_none());
        assert!(PowerModel::new("x", 1.0, -1.0).is_none());
        let m = PowerModel::new("server core", per_core_watts(180.0, 32), 2092.0).unwrap();
        assert_eq!(m.executions_per_wh(), 305);
    }

    proptest! {
        #[test]
        fn energy_is_linear(p in 1e-3f64..1e3, t in 1e-3f64..1e7, k in 1e-2f64..1e2) {
            let base = energy_wh(p, t);
            prop_assert!((energy_wh(2.0 * p, t) - 2.0 * base).abs() <= 1e-12 * base.max(1.0));
            prop_assert!((energy_wh(p, k * t) - k * base).abs() <= 1e-9 * (k * base).max(1.0));
        }
    }
}
