//! Job registry and lifecycle state machine.
//!
//! ```text
//!   register ──► Open ──acknowledge──► Matched ──confirm(accept)──► Assigned
//!                 ▲                       │                            │
//!                 └────confirm(refuse)────┘            all slots reported
//!                                                                      ▼
//!                                                       Completed | Failed
//! ```
//!
//! Fulfillment reports settle through the [`Ledger`] and feed the
//! [`ReputationBook`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::ledger::{Ledger, LedgerError};
use crate::matching::MatchProposal;
use crate::model::{validate_spec, JobId, JobSpec, JobState, Millis, ProcessorId, Violation};
use crate::reputation::{Feedback, ReputationBook};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure { reason: String },
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success)
    }

    pub fn feedback(&self) -> Feedback {
        match self {
            Outcome::Success => Feedback::Success,
            Outcome::Failure { .. } => Feedback::Failure,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub slot_index: u64,
    pub scheduled_start_ms: Millis,
    pub actual_start_ms: Millis,
    pub duration_ms: Millis,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: JobId,
    pub spec: JobSpec,
    pub state: JobState,
    pub matched_processor: Option<ProcessorId>,
    pub executions: Vec<ExecutionRecord>,
    /// Every state the job has been in, oldest first.
    pub history: Vec<JobState>,
}

impl JobRecord {
    pub fn slot_count(&self) -> u64 {
        self.spec.slot_count()
    }

    pub fn is_reported(&self, slot_index: u64) -> bool {
        self.executions.iter().any(|e| e.slot_index == slot_index)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegistryError {
    #[error("invalid job spec: {}", join(.0))]
    InvalidSpec(Vec<Violation>),
    #[error("insufficient balance to lock reward and gas")]
    InsufficientBalance,
    #[error("unknown {0}")]
    UnknownJob(JobId),
    #[error("{job} is {actual:?}, operation needs {expected:?}")]
    WrongState {
        job: JobId,
        expected: JobState,
        actual: JobState,
    },
    #[error("{processor} was not proposed for {job}")]
    NotProposed { job: JobId, processor: ProcessorId },
    #[error("{job} is already matched to {holder}")]
    AlreadyMatched { job: JobId, holder: ProcessorId },
    #[error("{processor} is not the processor matched to {job}")]
    WrongProcessor { job: JobId, processor: ProcessorId },
    #[error("slot {slot} of {job} was already reported")]
    DuplicateSlot { job: JobId, slot: u64 },
    #[error("slot {slot} is outside the {slots} slots of {job}")]
    SlotOutOfRange { job: JobId, slot: u64, slots: u64 },
    #[error("execution record for slot {slot} of {job} is inconsistent: {reason}")]
    InconsistentRecord { job: JobId, slot: u64, reason: String },
    #[error("settlement failed: {0}")]
    Ledger(#[from] LedgerError),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
}

/// Owner of all job records. Mutated from a single event loop.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    jobs: BTreeMap<JobId, JobRecord>,
    proposals: BTreeMap<JobId, BTreeSet<ProcessorId>>,
    next_id: u64,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Persist a job in state Open after locking its reward and gas budget.
    pub fn register_job(&mut self, spec: JobSpec, ledger: &mut Ledger) -> Result<JobId, RegistryError> {
        let violations = validate_spec(&spec);
        if !violations.is_empty() {
            return Err(RegistryError::InvalidSpec(violations));
        }
        let job_id = JobId(self.next_id + 1);
        ledger
            .lock(&spec.consumer_id, job_id, spec.reward, spec.gas_budget)
            .map_err(|e| match e {
                LedgerError::InsufficientBalance { .. } => RegistryError::InsufficientBalance,
                other => RegistryError::Ledger(other),
            })?;
        self.next_id += 1;
        self.jobs.insert(
            job_id,
            JobRecord {
                job_id,
                spec,
                state: JobState::Open,
                matched_processor: None,
                executions: Vec::new(),
                history: vec![JobState::Open],
            },
        );
        Ok(job_id)
    }

    /// Record matching-engine proposals so the proposed processors may
    /// acknowledge. Proposals for jobs that are not Open are ignored.
    pub fn propose(&mut self, proposals: &[MatchProposal]) {
        for p in proposals {
            if self.jobs.get(&p.job_id).is_some_and(|j| j.state == JobState::Open) {
                self.proposals
                    .entry(p.job_id)
                    .or_default()
                    .insert(p.processor_id.clone());
            }
        }
    }

    pub fn acknowledge(&mut self, job_id: JobId, processor: &ProcessorId) -> Result<JobState, RegistryError> {
        let job = self.jobs.get_mut(&job_id).ok_or(RegistryError::UnknownJob(job_id))?;
        match job.state {
            JobState::Open => {}
            JobState::Matched => {
                return Err(RegistryError::AlreadyMatched {
                    job: job_id,
                    holder: job.matched_processor.clone().expect("matched job has a processor"),
                })
            }
            actual => {
                return Err(RegistryError::WrongState {
                    job: job_id,
                    expected: JobState::Open,
                    actual,
                })
            }
        }
        if !self.proposals.get(&job_id).is_some_and(|s| s.contains(processor)) {
            return Err(RegistryError::NotProposed {
                job: job_id,
                processor: processor.clone(),
            });
        }
        self.proposals.remove(&job_id);
        job.matched_processor = Some(processor.clone());
        transition(job, JobState::Matched);
        Ok(job.state)
    }

    /// The matched processor accepts (Assigned) or refuses (back to Open) the
    /// job's full slot schedule.
    pub fn confirm_slots(
        &mut self,
        job_id: JobId,
        processor: &ProcessorId,
        accepted: bool,
    ) -> Result<JobState, RegistryError> {
        let job = self.jobs.get_mut(&job_id).ok_or(RegistryError::UnknownJob(job_id))?;
        expect_state(job, JobState::Matched)?;
        if job.matched_processor.as_ref() != Some(processor) {
            return Err(RegistryError::WrongProcessor {
                job: job_id,
                processor: processor.clone(),
            });
        }
        if accepted {
            transition(job, JobState::Assigned);
        } else {
            job.matched_processor = None;
            transition(job, JobState::Open);
        }
        Ok(job.state)
    }

    /// Record one slot's execution, settle it and update reputation. Once all
    /// slots are in, the job terminates and leftover locked funds are refunded.
    pub fn report_fulfillment(
        &mut self,
        job_id: JobId,
        slot_index: u64,
        record: ExecutionRecord,
        ledger: &mut Ledger,
        reputation: &mut ReputationBook,
    ) -> Result<JobState, RegistryError> {
        let job = self.jobs.get_mut(&job_id).ok_or(RegistryError::UnknownJob(job_id))?;
        expect_state(job, JobState::Assigned)?;
        let slots = job.slot_count();
        if slot_index >= slots {
            return Err(RegistryError::SlotOutOfRange {
                job: job_id,
                slot: slot_index,
                slots,
            });
        }
        if job.is_reported(slot_index) {
            return Err(RegistryError::DuplicateSlot {
                job: job_id,
                slot: slot_index,
            });
        }
        check_record(job, slot_index, &record)?;

        let processor = job.matched_processor.clone().expect("assigned job has a processor");
        let last_report = job.executions.len() as u64 + 1 == slots;
        if record.outcome.is_success() {
            let base = job.spec.reward / slots;
            let share = if last_report {
                base + job.spec.reward % slots
            } else {
                base
            };
            ledger.pay_slot(job_id, &processor.account(), share, job.spec.destination.gas_fee)?;
        }
        reputation.report(&processor, record.outcome.feedback());
        job.executions.push(record);

        if last_report {
            let all_ok = job.executions.iter().all(|e| e.outcome.is_success());
            transition(job, if all_ok { JobState::Completed } else { JobState::Failed });
            ledger.refund(job_id, &job.spec.consumer_id)?;
        }
        Ok(job.state)
    }

    pub fn job_state(&self, job_id: JobId) -> Result<JobState, RegistryError> {
        self.job(job_id).map(|j| j.state)
    }

    pub fn job(&self, job_id: JobId) -> Result<&JobRecord, RegistryError> {
        self.jobs.get(&job_id).ok_or(RegistryError::UnknownJob(job_id))
    }

    pub fn jobs(&self) -> impl Iterator<Item = &JobRecord> {
        self.jobs.values()
    }

    /// Open jobs in ascending id order.
    pub fn open_jobs(&self) -> Vec<&JobRecord> {
        self.jobs.values().filter(|j| j.state == JobState::Open).collect()
    }

    pub fn len(&self) -> usize {
        self.jobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jobs.is_empty()
    }
}

fn expect_state(job: &JobRecord, expected: JobState) -> Result<(), RegistryError> {
    if job.state == expected {
        Ok(())
    } else {
        Err(RegistryError::WrongState {
            job: job.job_id,
            expected,
            actual: job.state,
        })
    }
}

fn transition(job: &mut JobRecord, next: JobState) {
    assert!(
        job.state.can_transition_to(next),
        "illegal transition {:?} -> {:?} for {}",
        job.state,
        next,
        job.job_id
    );
    job.state = next;
    job.history.push(next);
}

fn check_record(job: &JobRecord, slot_index: u64, record: &ExecutionRecord) -> Result<(), RegistryError> {
    let inconsistent = |reason: String| RegistryError::InconsistentRecord {
        job: job.job_id,
        slot: slot_index,
        reason,
    };
    if record.slot_index != slot_index {
        return Err(inconsistent(format!("record names slot {}", record.slot_index)));
    }
    let scheduled = job.spec.schedule.slot_time(slot_index).expect("slot checked in range");
    if record.scheduled_start_ms != scheduled {
        return Err(inconsistent(format!(
            "scheduled start {} ms, expected {} ms",
            record.scheduled_start_ms, scheduled
        )));
    }
    if record.outcome.is_success() {
        let delay = record.actual_start_ms.checked_sub(scheduled);
        match delay {
            Some(d) if d <= job.spec.schedule.max_start_delay_ms => {}
            _ => {
                return Err(inconsistent(format!(
                    "successful execution started at {} ms, outside the allowed delay",
                    record.actual_start_ms
                )))
            }
        }
    }
    Ok(())
}
