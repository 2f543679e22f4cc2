//! Value types and schedule arithmetic shared by every other module.
//!
//! Times are integer milliseconds on a simulated clock that starts at 0.
//! Token amounts are integers in the smallest denomination.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Absolute simulated time or a duration, in milliseconds.
pub type Millis = u64;

/// Token amount in the smallest denomination.
pub type Tokens = u64;

macro_rules! string_id {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Identity holding a ledger balance: consumers, processor owners and
    /// processors themselves.
    AccountId
);
string_id!(
    /// Identity of an execution node.
    ProcessorId
);

impl ProcessorId {
    /// The ledger account that receives this processor's payouts.
    pub fn account(&self) -> AccountId {
        AccountId(self.0.clone())
    }
}

/// Dense, monotonically increasing job identifier assigned by the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JobId(pub u64);

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "job#{}", self.0)
    }
}

/// When a job runs: executions start every `interval_ms` from `start_ms`,
/// each lasting `duration_ms`, and the last one has to finish by `end_ms`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub start_ms: Millis,
    pub end_ms: Millis,
    pub interval_ms: Millis,
    pub duration_ms: Millis,
    #[serde(default)]
    pub max_start_delay_ms: Millis,
}

impl Schedule {
    /// A run-once ("on demand") schedule: the window is exactly one execution long.
    pub fn single_shot(start_ms: Millis, duration_ms: Millis, max_start_delay_ms: Millis) -> Self {
        Self {
            start_ms,
            end_ms: start_ms + duration_ms,
            interval_ms: 1,
            duration_ms,
            max_start_delay_ms,
        }
    }

    /// Number of executions that fit in the window.
    ///
    /// `floor((end - start - duration) / interval) + 1`. Returns 0 for
    /// schedules violating their invariants instead of panicking.
    pub fn slot_count(&self) -> u64 {
        if self.interval_ms == 0 {
            return 0;
        }
        match self
            .end_ms
            .checked_sub(self.start_ms)
            .and_then(|window| window.checked_sub(self.duration_ms))
        {
            Some(slack) if self.start_ms < self.end_ms => slack / self.interval_ms + 1,
            _ => 0,
        }
    }

    /// Scheduled start time of every slot, ascending.
    pub fn slot_times(&self) -> Vec<Millis> {
        (0..self.slot_count())
            .map(|k| self.start_ms + k * self.interval_ms)
            .collect()
    }

    /// Scheduled start of one slot, if it exists.
    pub fn slot_time(&self, slot_index: u64) -> Option<Millis> {
        (slot_index < self.slot_count()).then(|| self.start_ms + slot_index * self.interval_ms)
    }
}

/// Free function form of [`Schedule::slot_count`].
pub fn slot_count(schedule: &Schedule) -> u64 {
    schedule.slot_count()
}

/// Free function form of [`Schedule::slot_times`].
pub fn slot_times(schedule: &Schedule) -> Vec<Millis> {
    schedule.slot_times()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceRequirements {
    #[serde(default)]
    pub memory_bytes: u64,
    #[serde(default)]
    pub network_requests: u64,
    #[serde(default)]
    pub storage_bytes: u64,
}

/// Which processors may take a job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMode {
    /// Only processors owned by the consumer (permissioned; reward may be 0).
    Personal,
    /// Only the listed processors.
    Selected(Vec<ProcessorId>),
    /// Any processor meeting the reputation and price requirements.
    Public,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadRef {
    pub name: String,
    #[serde(default)]
    pub param: u64,
}

/// Where fulfillments are delivered, and what each delivery costs in gas.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DestinationRef {
    pub sink_id: String,
    #[serde(default)]
    pub gas_fee: Tokens,
}

/// A consumer's job declaration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub consumer_id: AccountId,
    pub workload: WorkloadRef,
    pub schedule: Schedule,
    #[serde(default)]
    pub resources: ResourceRequirements,
    #[serde(default)]
    pub reward: Tokens,
    #[serde(default)]
    pub gas_budget: Tokens,
    /// Only consulted for [`AssignmentMode::Public`].
    #[serde(default)]
    pub min_reputation: f64,
    pub mode: AssignmentMode,
    pub destination: DestinationRef,
    /// Request execution inside a confidential environment. Carried through
    /// the lifecycle but not otherwise modeled.
    #[serde(default)]
    pub confidential: bool,
}

impl JobSpec {
    pub fn slot_count(&self) -> u64 {
        self.schedule.slot_count()
    }

    /// Gas needed to settle every fulfillment at the destination.
    pub fn required_gas(&self) -> Tokens {
        self.slot_count().saturating_mul(self.destination.gas_fee)
    }
}

/// A single broken rule found by [`validate_spec`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Violation {
    #[error("empty schedule window: start {start_ms} ms is not before end {end_ms} ms")]
    EmptyScheduleWindow { start_ms: Millis, end_ms: Millis },
    #[error("interval must be at least 1 ms")]
    ZeroInterval,
    #[error("duration must be at least 1 ms")]
    ZeroDuration,
    #[error("duration {duration_ms} ms does not fit in a {window_ms} ms window")]
    DurationExceedsWindow { duration_ms: Millis, window_ms: Millis },
    #[error("insufficient gas budget: {required} required for all slots, {budget} provided")]
    InsufficientGasBudget { required: Tokens, budget: Tokens },
    #[error("minimum reputation {0} is outside [0, 1]")]
    MinReputationOutOfRange(f64),
    #[error("selected processor set is empty")]
    EmptySelection,
}

/// Every violated invariant of `spec`; empty iff the spec is valid.
pub fn validate_spec(spec: &JobSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let s = &spec.schedule;
    if s.start_ms >= s.end_ms {
        out.push(Violation::EmptyScheduleWindow {
            start_ms: s.start_ms,
            end_ms: s.end_ms,
        });
    }
    if s.interval_ms == 0 {
        out.push(Violation::ZeroInterval);
    }
    if s.duration_ms == 0 {
        out.push(Violation::ZeroDuration);
    }
    let window_ms = s.end_ms.saturating_sub(s.start_ms);
    if s.start_ms < s.end_ms && s.duration_ms > window_ms {
        out.push(Violation::DurationExceedsWindow {
            duration_ms: s.duration_ms,
            window_ms,
        });
    }
    let required = spec.required_gas();
    if spec.gas_budget < required {
        out.push(Violation::InsufficientGasBudget {
            required,
            budget: spec.gas_budget,
        });
    }
    if !(0.0..=1.0).contains(&spec.min_reputation) {
        out.push(Violation::MinReputationOutOfRange(spec.min_reputation));
    }
    if matches!(&spec.mode, AssignmentMode::Selected(set) if set.is_empty()) {
        out.push(Violation::EmptySelection);
    }
    out
}

/// Lifecycle state of a registered job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Open,
    Matched,
    Assigned,
    Completed,
    Failed,
}

impl JobState {
    /// Whether `self -> next` is an edge of the lifecycle.
    pub fn can_transition_to(self, next: JobState) -> bool {
        use JobState::*;
        matches!(
            (self, next),
            (Open, Matched)
                | (Matched, Assigned)
                | (Matched, Open)
                | (Assigned, Completed)
                | (Assigned, Failed)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Completed | JobState::Failed)
    }
}

/// Distribution of a processor's execution time for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExecutionTimeModel {
    Constant { duration_ms: Millis },
    /// Normal distribution, truncated to strictly positive draws.
    Normal { mean_ms: f64, std_ms: f64 },
}

impl ExecutionTimeModel {
    pub fn mean_ms(&self) -> f64 {
        match *self {
            ExecutionTimeModel::Constant { duration_ms } => duration_ms as f64,
            ExecutionTimeModel::Normal { mean_ms, .. } => mean_ms,
        }
    }

    pub fn is_valid(&self) -> bool {
        match *self {
            ExecutionTimeModel::Constant { duration_ms } => duration_ms > 0,
            ExecutionTimeModel::Normal { mean_ms, std_ms } => {
                mean_ms.is_finite() && mean_ms > 0.0 && std_ms.is_finite() && std_ms >= 0.0
            }
        }
    }
}

/// A simulated execution node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessorProfile {
    pub processor_id: ProcessorId,
    pub owner_id: AccountId,
    #[serde(default)]
    pub device_model: String,
    #[serde(default)]
    pub android_version: u32,
    /// ISO 3166 alpha-3.
    #[serde(default)]
    pub country: String,
    /// Label used to group duration samples; defaults to the processor id.
    #[serde(default)]
    pub platform: Option<String>,
    pub exec_model: ExecutionTimeModel,
    pub power_watts: f64,
    #[serde(default)]
    pub price_floor: Tokens,
    pub capacity: u32,
    pub reliability: f64,
    /// Chance of refusing slot confirmation after acknowledging a match.
    #[serde(default)]
    pub refusal_probability: f64,
}

impl ProcessorProfile {
    pub fn platform_label(&self) -> &str {
        self.platform
            .as_deref()
            .unwrap_or(self.processor_id.as_str())
    }

    /// Human-readable description of every broken profile invariant.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.exec_model.is_valid() {
            out.push(format!("{}: invalid execution time model", self.processor_id));
        }
        if !(self.power_watts.is_finite() && self.power_watts > 0.0) {
            out.push(format!("{}: power_watts must be positive", self.processor_id));
        }
        if self.capacity == 0 {
            out.push(format!("{}: capacity must be at least 1", self.processor_id));
        }
        if !(0.0..=1.0).contains(&self.reliability) {
            out.push(format!("{}: reliability must be in [0, 1]", self.processor_id));
        }
        if !(0.0..=1.0).contains(&self.refusal_probability) {
            out.push(format!(
                "{}: refusal_probability must be in [0, 1]",
                self.processor_id
            ));
        }
        out
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn public_spec(consumer: &str, reward: Tokens, schedule: Schedule) -> JobSpec {
        JobSpec {
            consumer_id: consumer.into(),
            workload: WorkloadRef {
                name: "sieve".into(),
                param: 1_000,
            },
            schedule,
            resources: ResourceRequirements::default(),
            reward,
            gas_budget: schedule.slot_count(),
            min_reputation: 0.0,
            mode: AssignmentMode::Public,
            destination: DestinationRef {
                sink_id: "sink".into(),
                gas_fee: 1,
            },
            confidential: false,
        }
    }

    pub fn profile(id: &str, owner: &str) -> ProcessorProfile {
        ProcessorProfile {
            processor_id: id.into(),
            owner_id: owner.into(),
            device_model: "Pixel 7".into(),
            android_version: 13,
            country: "CHE".into(),
            platform: None,
            exec_model: ExecutionTimeModel::Constant { duration_ms: 100 },
            power_watts: 0.3,
            price_floor: 0,
            capacity: 1,
            reliability: 1.0,
            refusal_probability: 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::public_spec;
    use super::*;
    use proptest::prelude::*;

    fn sched(start: u64, end: u64, interval: u64, duration: u64) -> Schedule {
        Schedule {
            start_ms: start,
            end_ms: end,
            interval_ms: interval,
            duration_ms: duration,
            max_start_delay_ms: 0,
        }
    }

    /// Enumerate k = 0, 1, ... while slot k still finishes by the end.
    fn enumerate_slots(s: &Schedule) -> Vec<u64> {
        let mut out = Vec::new();
        let mut k = 0;
        while s.start_ms + k * s.interval_ms + s.duration_ms <= s.end_ms {
            out.push(s.start_ms + k * s.interval_ms);
            k += 1;
        }
        out
    }

    #[test]
    fn slot_count_examples() {
        let s = sched(0, 10_000, 1_000, 500);
        assert_eq!(enumerate_slots(&s).len(), 10);
        assert_eq!(slot_count(&s), 10);

        assert_eq!(slot_count(&sched(0, 1_000, 1, 1_000)), 1);

        let s = sched(0, 10_000, 20_000, 500);
        assert_eq!(enumerate_slots(&s).len(), 1);
        assert_eq!(slot_count(&s), 1);
    }

    #[test]
    fn slot_times_examples() {
        let s = sched(0, 3_000, 1_000, 500);
        assert_eq!(enumerate_slots(&s), vec![0, 1_000, 2_000]);
        assert_eq!(slot_times(&s), vec![0, 1_000, 2_000]);

        assert_eq!(Schedule::single_shot(42, 10, 0).slot_times(), vec![42]);

        let s = sched(5, 10_005, 2_500, 100);
        assert_eq!(enumerate_slots(&s), vec![5, 2_505, 5_005, 7_505]);
        assert_eq!(slot_times(&s), vec![5, 2_505, 5_005, 7_505]);
    }

    #[test]
    fn invalid_schedules_have_no_slots() {
        assert_eq!(sched(10, 10, 1, 1).slot_count(), 0);
        assert_eq!(sched(0, 10, 0, 1).slot_count(), 0);
        assert_eq!(sched(0, 10, 1, 11).slot_count(), 0);
        assert_eq!(sched(20, 10, 1, 1).slot_count(), 0);
    }

    #[test]
    fn valid_public_spec_has_no_violations() {
        let spec = public_spec("alice", 10, sched(0, 10_000, 1_000, 500));
        assert!(validate_spec(&spec).is_empty());
    }

    #[test]
    fn gas_budget_must_cover_every_slot() {
        let mut spec = public_spec("alice", 10, sched(0, 3_000, 1_000, 500));
        spec.gas_budget = 0;
        assert_eq!(
            validate_spec(&spec),
            vec![Violation::InsufficientGasBudget {
                required: 3,
                budget: 0
            }]
        );
        assert!(validate_spec(&spec)[0]
            .to_string()
            .starts_with("insufficient gas budget"));
    }

    #[test]
    fn degenerate_window_is_reported() {
        let mut spec = public_spec("alice", 10, sched(0, 1_000, 100, 10));
        spec.schedule.start_ms = 1_000;
        let v = validate_spec(&spec);
        assert!(v.iter().any(|v| matches!(v, Violation::EmptyScheduleWindow { .. })));
        assert!(v[0].to_string().starts_with("empty schedule window"));
    }

    #[test]
    fn empty_selection_and_reputation_range() {
        let mut spec = public_spec("alice", 10, sched(0, 1_000, 100, 10));
        spec.mode = AssignmentMode::Selected(vec![]);
        spec.min_reputation = 1.5;
        let v = validate_spec(&spec);
        assert!(v.contains(&Violation::EmptySelection));
        assert!(v.contains(&Violation::MinReputationOutOfRange(1.5)));
    }

    #[test]
    fn transition_relation() {
        use JobState::*;
        let all = [Open, Matched, Assigned, Completed, Failed];
        let legal: Vec<_> = all
            .iter()
            .flat_map(|&a| all.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| a.can_transition_to(b))
            .collect();
        assert_eq!(
            legal,
            vec![
                (Open, Matched),
                (Matched, Open),
                (Matched, Assigned),
                (Assigned, Completed),
                (Assigned, Failed)
            ]
        );
    }

    proptest! {
        #[test]
        fn slot_count_matches_enumeration(
            start in 0u64..10_000,
            window in 1u64..50_000,
            interval in 1u64..5_000,
            duration_frac in 0.0f64..=1.0,
        ) {
            let duration = ((window as f64 * duration_frac) as u64).clamp(1, window);
            let s = sched(start, start + window, interval, duration);
            let times = s.slot_times();
            prop_assert_eq!(&times, &enumerate_slots(&s));
            prop_assert!(s.slot_count() >= 1);
            prop_assert!(times.last().unwrap() + duration <= s.end_ms);
            prop_assert!(times.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn validate_spec_is_total(
            start in any::<u64>(),
            end in any::<u64>(),
            interval in any::<u64>(),
            duration in any::<u64>(),
            gas_fee in any::<u64>(),
            gas_budget in any::<u64>(),
            min_rep in proptest::num::f64::ANY,
        ) {
            let mut spec = public_spec("c", 0, sched(start, end, interval, duration));
            spec.destination.gas_fee = gas_fee;
            spec.gas_budget = gas_budget;
            spec.min_reputation = min_rep;
            let violations = validate_spec(&spec);
            if violations.is_empty() {
                prop_assert!(spec.slot_count() >= 1);
            }
        }
    }
}
