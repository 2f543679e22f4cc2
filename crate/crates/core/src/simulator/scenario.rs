//! Scenario description and its TOML file format.
//!
//! ```toml
//! seed = 42
//! match_tick_ms = 1000
//!
//! [initial_balances]
//! alice = 1000000
//!
//! [[processors]]
//! processor_id = "node-01"
//! owner_id = "op-01"
//! device_model = "Pixel 7"
//! android_version = 13
//! country = "CHE"
//! platform = "acurast"
//! power_watts = 0.3
//! price_floor = 1
//! capacity = 4
//! reliability = 1.0
//! exec_model = { kind = "normal", mean_ms = 2790.0, std_ms = 134.0 }
//!
//! [[jobs]]
//! registration_ms = 0
//! repeat = 121               # optional: register 121 copies ...
//! repeat_every_ms = 1500     # ... this far apart
//! dispatch_latency_ms = 0    # optional: added to every response-time sample
//! [jobs.spec]
//! consumer_id = "alice"
//! workload = { name = "sieve", param = 50000000 }
//! schedule = { start_ms = 0, end_ms = 10000, interval_ms = 1, duration_ms = 10000, max_start_delay_ms = 500 }
//! reward = 10
//! gas_budget = 1
//! min_reputation = 0.0
//! mode = "public"            # or "personal", or { selected = ["node-01"] }
//! destination = { sink_id = "chain-a", gas_fee = 1 }
//! ```
//!
//! A job's schedule is relative to its own registration time when
//! `relative_schedule = true` (the default for repeated entries).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{AccountId, JobSpec, Millis, ProcessorProfile, Tokens};

/// One job registration planned by a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedJob {
    pub registration_ms: Millis,
    /// Extra response-time latency between the consumer and the platform.
    #[serde(default)]
    pub dispatch_latency_ms: Millis,
    pub spec: JobSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub match_tick_ms: Millis,
    pub processors: Vec<ProcessorProfile>,
    pub jobs: Vec<PlannedJob>,
    pub initial_balances: BTreeMap<AccountId, Tokens>,
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioFileError {
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("jobs[{index}]: {message}")]
    Job { index: usize, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_tick")]
    match_tick_ms: Millis,
    #[serde(default)]
    initial_balances: BTreeMap<AccountId, Tokens>,
    #[serde(default)]
    processors: Vec<ProcessorProfile>,
    #[serde(default)]
    jobs: Vec<JobEntry>,
}

fn default_tick() -> Millis {
    1_000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JobEntry {
    registration_ms: Millis,
    #[serde(default)]
    dispatch_latency_ms: Millis,
    #[serde(default)]
    repeat: Option<u32>,
    #[serde(default)]
    repeat_every_ms: Millis,
    #[serde(default)]
    relative_schedule: Option<bool>,
    spec: JobSpec,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioFileError> {
        let file: ScenarioFile = toml::from_str(text)?;
        let mut jobs = Vec::new();
        for (index, entry) in file.jobs.into_iter().enumerate() {
            let repeat = entry.repeat.unwrap_or(1);
            if repeat == 0 {
                return Err(ScenarioFileError::Job {
                    index,
                    message: "repeat must be at least 1".into(),
                });
            }
            let relative = entry.relative_schedule.unwrap_or(entry.repeat.is_some());
            for k in 0..u64::from(repeat) {
                let registration_ms = entry.registration_ms + k * entry.repeat_every_ms;
                let mut spec = entry.spec.clone();
                if relative {
                    spec.schedule.start_ms += registration_ms;
                    spec.schedule.end_ms += registration_ms;
                }
                jobs.push(PlannedJob {
                    registration_ms,
                    dispatch_latency_ms: entry.dispatch_latency_ms,
                    spec,
                });
            }
        }
        Ok(Scenario {
            seed: file.seed,
            match_tick_ms: file.match_tick_ms,
            processors: file.processors,
            jobs,
            initial_balances: file.initial_balances,
        })
    }
}
