//! Seeded discrete-event simulation of the job lifecycle.
//!
//! Events are processed in `(time, insertion sequence)` order on a
//! millisecond clock. Registrations lock funds; match ticks pair Open jobs
//! with processors, which acknowledge and confirm on the spot (or refuse with
//! their configured probability); each confirmed job then executes its slots
//! one after another on the assigned processor, reporting every fulfillment
//! back to the registry, the ledger and the reputation book.
//!
//! Randomness (start delays, execution times, failures, refusals) comes from
//! a single ChaCha stream seeded by the scenario, so a `(scenario, seed)`
//! pair always yields the same report.

mod scenario;

use std::collections::BTreeMap;
use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bench::{self, SampleSet};
use crate::ledger::{Ledger, Locked};
use crate::matching::{match_jobs, Candidate};
use crate::model::{
    validate_spec, AccountId, ExecutionTimeModel, JobId, JobState, Millis, ProcessorId,
    ProcessorProfile, Tokens,
};
use crate::registry::{ExecutionRecord, JobRecord, Outcome, Registry, RegistryError};
use crate::reputation::{ReputationBook, ReputationRecord};

pub use scenario::{PlannedJob, Scenario, ScenarioFileError};

pub const MISSED_WINDOW: &str = "missed start window";
pub const EXECUTION_FAULT: &str = "execution fault";

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {}", .0.join("; "))]
    InvalidScenario(Vec<String>),
    #[error("internal invariant violated at {time_ms} ms: {message}")]
    Invariant { time_ms: Millis, message: String },
}

/// Draw one execution time in whole milliseconds (at least 1).
pub fn sample_exec_time<R: Rng + ?Sized>(model: &ExecutionTimeModel, rng: &mut R) -> Millis {
    match *model {
        ExecutionTimeModel::Constant { duration_ms } => duration_ms.max(1),
        ExecutionTimeModel::Normal { mean_ms, std_ms } => {
            if std_ms == 0.0 {
                return (mean_ms.round() as Millis).max(1);
            }
            let dist = Normal::new(mean_ms, std_ms).expect("validated normal parameters");
            loop {
                let draw = dist.sample(rng).round();
                if draw >= 1.0 {
                    return draw as Millis;
                }
            }
        }
    }
}

/// What happened, as recorded in the event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    JobRegistered { job_id: JobId, consumer: AccountId },
    RegistrationRejected { index: usize, reason: String },
    MatchTick { open_jobs: usize, proposals: usize },
    Matched { job_id: JobId, processor: ProcessorId },
    SlotsRefused { job_id: JobId, processor: ProcessorId },
    Assigned { job_id: JobId, processor: ProcessorId },
    SlotStarted { job_id: JobId, slot: u64, processor: ProcessorId },
    SlotMissed { job_id: JobId, slot: u64, processor: ProcessorId },
    SlotFinished { job_id: JobId, slot: u64, processor: ProcessorId, outcome: Outcome },
    JobTerminated { job_id: JobId, state: JobState },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub time_ms: Millis,
    pub seq: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProcessorSummary {
    pub platform: String,
    pub fulfilled: u64,
    pub failed: u64,
    pub earnings: Tokens,
    pub reputation: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub total_supply: u128,
    pub balances: BTreeMap<AccountId, Tokens>,
    pub locked: BTreeMap<JobId, Locked>,
}

impl TryFrom<LedgerSnapshot> for Ledger {
    type Error = crate::ledger::AuditViolation;

    fn try_from(s: LedgerSnapshot) -> Result<Self, Self::Error> {
        Ledger::from_parts(s.balances, s.locked, s.total_supply)
    }
}

impl From<&Ledger> for LedgerSnapshot {
    fn from(l: &Ledger) -> Self {
        Self {
            total_supply: l.total_supply(),
            balances: l.balances().clone(),
            locked: l.locked_entries().clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub end_time_ms: Millis,
    pub jobs: Vec<JobRecord>,
    pub processors: BTreeMap<ProcessorId, ProcessorSummary>,
    pub reported_slots: u64,
    pub successful_slots: u64,
    /// `successful_slots / reported_slots`, 0 when nothing was reported.
    pub success_rate: f64,
    /// Response time of every successful slot (dispatch latency plus
    /// execution time), grouped by platform label.
    pub samples: BTreeMap<String, Vec<Millis>>,
    /// Fulfillments delivered per destination sink.
    pub deliveries: BTreeMap<String, u64>,
    pub reputation: Vec<ReputationRecord>,
    pub ledger: LedgerSnapshot,
    pub events: Vec<LoggedEvent>,
}

impl SimReport {
    pub fn count_in_state(&self, state: JobState) -> usize {
        self.jobs.iter().filter(|j| j.state == state).count()
    }

    pub fn sample_sets(&self, workload_param: u64) -> Vec<SampleSet> {
        self.samples
            .iter()
            .map(|(platform, v)| SampleSet::new(platform.clone(), workload_param, v.iter().map(|&x| x as f64).collect()))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable") + "\n"
    }

    pub fn write_samples_csv<W: io::Write>(&self, out: W) -> Result<(), bench::BenchError> {
        bench::write_samples_csv(out, &self.sample_sets(0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Event {
    Register(usize),
    MatchTick,
    SlotStart { job: JobId, slot: u64 },
    SlotEnd { record: ExecutionRecord, job: JobId },
}

struct Engine<'a> {
    scenario: &'a Scenario,
    rng: ChaCha8Rng,
    now: Millis,
    seq: u64,
    queue: BTreeMap<(Millis, u64), Event>,
    tick_armed: bool,
    registry: Registry,
    ledger: Ledger,
    reputation: ReputationBook,
    /// Jobs each processor holds (Matched or Assigned).
    load: BTreeMap<ProcessorId, u32>,
    dispatch_latency: BTreeMap<JobId, Millis>,
    summaries: BTreeMap<ProcessorId, ProcessorSummary>,
    samples: BTreeMap<String, Vec<Millis>>,
    deliveries: BTreeMap<String, u64>,
    reported: u64,
    succeeded: u64,
    events: Vec<LoggedEvent>,
}

/// Check a scenario without running it.
pub fn validate_scenario(scenario: &Scenario) -> Vec<String> {
    let mut problems = Vec::new();
    if scenario.match_tick_ms == 0 {
        problems.push("match_tick_ms must be at least 1".to_owned());
    }
    let mut seen = std::collections::BTreeSet::new();
    for p in &scenario.processors {
        if !seen.insert(&p.processor_id) {
            problems.push(format!("duplicate processor id {}", p.processor_id));
        }
        problems.extend(p.violations());
    }
    for (i, job) in scenario.jobs.iter().enumerate() {
        for v in validate_spec(&job.spec) {
            problems.push(format!("jobs[{i}]: {v}"));
        }
    }
    problems
}

/// Run `scenario` to completion.
pub fn run(scenario: &Scenario) -> Result<SimReport, SimError> {
    let problems = validate_scenario(scenario);
    if !problems.is_empty() {
        return Err(SimError::InvalidScenario(problems));
    }
    let mut engine = Engine::new(scenario);
    engine.run()?;
    Ok(engine.finish())
}

impl<'a> Engine<'a> {
    fn new(scenario: &'a Scenario) -> Self {
        let summaries = scenario
            .processors
            .iter()
            .map(|p| {
                (
                    p.processor_id.clone(),
                    ProcessorSummary {
                        platform: p.platform_label().to_owned(),
                        reputation: 0.5,
                        ..Default::default()
                    },
                )
            })
            .collect();
        let mut engine = Self {
            scenario,
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            now: 0,
            seq: 0,
            queue: BTreeMap::new(),
            tick_armed: false,
            registry: Registry::new(),
            ledger: Ledger::new(scenario.initial_balances.iter().map(|(a, &v)| (a.clone(), v))),
            reputation: ReputationBook::new(),
            load: BTreeMap::new(),
            dispatch_latency: BTreeMap::new(),
            summaries,
            samples: BTreeMap::new(),
            deliveries: BTreeMap::new(),
            reported: 0,
            succeeded: 0,
            events: Vec::new(),
        };
        let mut order: Vec<usize> = (0..scenario.jobs.len()).collect();
        order.sort_by_key(|&i| scenario.jobs[i].registration_ms);
        for i in order {
            engine.push(scenario.jobs[i].registration_ms, Event::Register(i));
        }
        engine
    }

    fn push(&mut self, at: Millis, event: Event) {
        self.queue.insert((at, self.seq), event);
        self.seq += 1;
    }

    fn log(&mut self, kind: EventKind) {
        let seq = self.events.len() as u64;
        self.events.push(LoggedEvent {
            time_ms: self.now,
            seq,
            kind,
        });
    }

    fn invariant(&self, message: impl Into<String>) -> SimError {
        SimError::Invariant {
            time_ms: self.now,
            message: message.into(),
        }
    }

    fn registry_error(&self, e: RegistryError) -> SimError {
        self.invariant(e.to_string())
    }

    fn profile(&self, id: &ProcessorId) -> &'a ProcessorProfile {
        self.scenario
            .processors
            .iter()
            .find(|p| &p.processor_id == id)
            .expect("proposals only name scenario processors")
    }

    fn run(&mut self) -> Result<(), SimError> {
        while let Some(((at, _), event)) = self.queue.pop_first() {
            debug_assert!(at >= self.now);
            self.now = at;
            match event {
                Event::Register(i) => self.on_register(i),
                Event::MatchTick => self.on_tick()?,
                Event::SlotStart { job, slot } => self.on_slot_start(job, slot)?,
                Event::SlotEnd { record, job } => self.on_slot_end(job, record)?,
            }
            if let Err(v) = self.ledger.audit() {
                return Err(self.invariant(v.to_string()));
            }
        }
        Ok(())
    }

    fn arm_tick(&mut self) {
        if !self.tick_armed {
            let tick = self.scenario.match_tick_ms;
            let at = self.now.div_ceil(tick) * tick;
            self.push(at, Event::MatchTick);
            self.tick_armed = true;
        }
    }

    fn on_register(&mut self, index: usize) {
        let planned = &self.scenario.jobs[index];
        match self.registry.register_job(planned.spec.clone(), &mut self.ledger) {
            Ok(job_id) => {
                self.dispatch_latency.insert(job_id, planned.dispatch_latency_ms);
                self.log(EventKind::JobRegistered {
                    job_id,
                    consumer: planned.spec.consumer_id.clone(),
                });
                self.arm_tick();
            }
            Err(e) => self.log(EventKind::RegistrationRejected {
                index,
                reason: e.to_string(),
            }),
        }
    }

    /// An Open job is still worth matching while its last slot could start.
    fn servable(&self, job: &JobRecord) -> bool {
        let s = &job.spec.schedule;
        let last = s.start_ms + (s.slot_count() - 1) * s.interval_ms;
        self.now <= last + s.max_start_delay_ms
    }

    fn on_tick(&mut self) -> Result<(), SimError> {
        self.tick_armed = false;
        let open: Vec<&JobRecord> = self
            .registry
            .open_jobs()
            .into_iter()
            .filter(|j| self.servable(j))
            .collect();
        let candidates: Vec<Candidate<'_>> = self
            .scenario
            .processors
            .iter()
            .map(|p| Candidate {
                profile: p,
                reputation: self.reputation.score(&p.processor_id),
                load: self.load.get(&p.processor_id).copied().unwrap_or(0),
            })
            .collect();
        let proposals = match_jobs(&open, &candidates);
        let open_count = open.len();
        self.log(EventKind::MatchTick {
            open_jobs: open_count,
            proposals: proposals.len(),
        });
        self.registry.propose(&proposals);

        for p in proposals {
            let (job, processor) = (p.job_id, p.processor_id);
            self.registry
                .acknowledge(job, &processor)
                .map_err(|e| self.registry_error(e))?;
            self.log(EventKind::Matched {
                job_id: job,
                processor: processor.clone(),
            });
            let refusal = self.profile(&processor).refusal_probability;
            let accepted = !(refusal > 0.0 && self.rng.random_bool(refusal));
            self.registry
                .confirm_slots(job, &processor, accepted)
                .map_err(|e| self.registry_error(e))?;
            if accepted {
                *self.load.entry(processor.clone()).or_insert(0) += 1;
                self.log(EventKind::Assigned {
                    job_id: job,
                    processor,
                });
                self.schedule_slot(job, 0)?;
            } else {
                self.log(EventKind::SlotsRefused {
                    job_id: job,
                    processor,
                });
            }
        }

        let still_open = self
            .registry
            .open_jobs()
            .into_iter()
            .any(|j| self.servable(j));
        if still_open {
            let next = self.now + self.scenario.match_tick_ms;
            self.push(next, Event::MatchTick);
            self.tick_armed = true;
        }
        Ok(())
    }

    fn schedule_slot(&mut self, job: JobId, slot: u64) -> Result<(), SimError> {
        let record = self.registry.job(job).map_err(|e| self.registry_error(e))?;
        let schedule = record.spec.schedule;
        let scheduled = schedule
            .slot_time(slot)
            .ok_or_else(|| self.invariant(format!("{job} has no slot {slot}")))?;
        let delay = self.rng.random_range(0..=schedule.max_start_delay_ms);
        let at = (scheduled + delay).max(self.now);
        self.push(at, Event::SlotStart { job, slot });
        Ok(())
    }

    fn on_slot_start(&mut self, job: JobId, slot: u64) -> Result<(), SimError> {
        let record = self.registry.job(job).map_err(|e| self.registry_error(e))?;
        let schedule = record.spec.schedule;
        let processor = record
            .matched_processor
            .clone()
            .ok_or_else(|| self.invariant(format!("{job} runs without a processor")))?;
        let scheduled = schedule.slot_time(slot).expect("slot scheduled from schedule");
        let mut exec = ExecutionRecord {
            slot_index: slot,
            scheduled_start_ms: scheduled,
            actual_start_ms: self.now,
            duration_ms: 0,
            outcome: Outcome::Success,
        };
        if self.now - scheduled > schedule.max_start_delay_ms {
            exec.outcome = Outcome::Failure {
                reason: MISSED_WINDOW.into(),
            };
            self.log(EventKind::SlotMissed {
                job_id: job,
                slot,
                processor,
            });
            return self.on_slot_end(job, exec);
        }
        let profile = self.profile(&processor);
        exec.duration_ms = sample_exec_time(&profile.exec_model, &mut self.rng);
        if !self.rng.random_bool(profile.reliability) {
            exec.outcome = Outcome::Failure {
                reason: EXECUTION_FAULT.into(),
            };
        }
        self.log(EventKind::SlotStarted {
            job_id: job,
            slot,
            processor,
        });
        self.push(self.now + exec.duration_ms, Event::SlotEnd { record: exec, job });
        Ok(())
    }

    fn on_slot_end(&mut self, job: JobId, exec: ExecutionRecord) -> Result<(), SimError> {
        let (processor, sink, latency) = {
            let record = self.registry.job(job).map_err(|e| self.registry_error(e))?;
            (
                record.matched_processor.clone().expect("assigned job has a processor"),
                record.spec.destination.sink_id.clone(),
                self.dispatch_latency.get(&job).copied().unwrap_or(0),
            )
        };
        let slot = exec.slot_index;
        let outcome = exec.outcome.clone();
        let duration = exec.duration_ms;
        let balance_before = self.ledger.balance(&processor.account());
        let state = self
            .registry
            .report_fulfillment(job, slot, exec, &mut self.ledger, &mut self.reputation)
            .map_err(|e| self.registry_error(e))?;
        let earned = self.ledger.balance(&processor.account()) - balance_before;

        self.reported += 1;
        let platform = self.profile(&processor).platform_label().to_owned();
        let summary = self.summaries.get_mut(&processor).expect("known processor");
        summary.earnings += earned;
        summary.reputation = self.reputation.score(&processor);
        if outcome.is_success() {
            self.succeeded += 1;
            summary.fulfilled += 1;
            *self.deliveries.entry(sink).or_insert(0) += 1;
            self.samples.entry(platform).or_default().push(latency + duration);
        } else {
            summary.failed += 1;
        }
        if !matches!(&outcome, Outcome::Failure { reason } if reason == MISSED_WINDOW) {
            self.log(EventKind::SlotFinished {
                job_id: job,
                slot,
                processor: processor.clone(),
                outcome,
            });
        }

        if state.is_terminal() {
            let load = self.load.get_mut(&processor).expect("assigned processor has load");
            *load -= 1;
            self.log(EventKind::JobTerminated { job_id: job, state });
            // capacity freed up: give waiting jobs a chance
            if self.registry.open_jobs().into_iter().any(|j| self.servable(j)) {
                self.arm_tick();
            }
        } else {
            self.schedule_slot(job, slot + 1)?;
        }
        Ok(())
    }

    fn finish(self) -> SimReport {
        SimReport {
            seed: self.scenario.seed,
            end_time_ms: self.now,
            jobs: self.registry.jobs().cloned().collect(),
            processors: self.summaries,
            reported_slots: self.reported,
            successful_slots: self.succeeded,
            success_rate: if self.reported == 0 {
                0.0
            } else {
                self.succeeded as f64 / self.reported as f64
            },
            samples: self.samples,
            deliveries: self.deliveries,
            reputation: self.reputation.records().cloned().collect(),
            ledger: LedgerSnapshot::from(&self.ledger),
            events: self.events,
        }
    }
}
