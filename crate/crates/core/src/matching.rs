//! Greedy deterministic pairing of Open jobs with processors.
//!
//! Jobs are visited in ascending id order. Each takes the eligible processor
//! with the highest reputation, then the lowest price floor, then the
//! smallest id. Proposals count against a processor's remaining capacity for
//! the rest of the call.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::model::{AssignmentMode, JobId, JobSpec, ProcessorId, ProcessorProfile};
use crate::registry::JobRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchProposal {
    pub job_id: JobId,
    pub processor_id: ProcessorId,
}

/// A processor as the matcher sees it: profile, current reputation score and
/// number of jobs it currently holds.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub profile: &'a ProcessorProfile,
    pub reputation: f64,
    pub load: u32,
}

/// Whether `profile` may take `spec` right now.
pub fn eligible(spec: &JobSpec, profile: &ProcessorProfile, reputation: f64, load: u32) -> bool {
    if load >= profile.capacity {
        return false;
    }
    match &spec.mode {
        AssignmentMode::Personal => profile.owner_id == spec.consumer_id,
        AssignmentMode::Selected(set) => set.contains(&profile.processor_id),
        AssignmentMode::Public => {
            reputation >= spec.min_reputation
                && spec.reward >= profile.price_floor.saturating_mul(spec.slot_count())
        }
    }
}

/// Preference order: better candidates sort first.
fn preference(a: &Candidate<'_>, b: &Candidate<'_>) -> Ordering {
    b.reputation
        .total_cmp(&a.reputation)
        .then(a.profile.price_floor.cmp(&b.profile.price_floor))
        .then_with(|| a.profile.processor_id.cmp(&b.profile.processor_id))
}

/// Propose at most one processor per Open job.
pub fn match_jobs(open_jobs: &[&JobRecord], processors: &[Candidate<'_>]) -> Vec<MatchProposal> {
    let mut load: Vec<u32> = processors.iter().map(|c| c.load).collect();
    let mut jobs: Vec<&JobRecord> = open_jobs.to_vec();
    jobs.sort_by_key(|j| j.job_id);

    let mut proposals = Vec::new();
    for job in jobs {
        let best = processors
            .iter()
            .enumerate()
            .filter(|(i, c)| eligible(&job.spec, c.profile, c.reputation, load[*i]))
            .min_by(|(_, a), (_, b)| preference(a, b));
        if let Some((i, c)) = best {
            load[i] += 1;
            proposals.push(MatchProposal {
                job_id: job.job_id,
                processor_id: c.profile.processor_id.clone(),
            });
        }
    }
    proposals
}
