//! Orchestration, settlement and measurement toolkit for a decentralized
//! serverless compute network.
//!
//! The crate is layered the same way the network is:
//!
//! * [`model`] holds the value types shared by everything else (job
//!   declarations, schedules, processor profiles).
//! * [`registry`], [`matching`], [`reputation`] and [`ledger`] form the
//!   consensus-side job lifecycle: registration, pairing with processors,
//!   reliability bookkeeping and token settlement.
//! * [`simulator`] drives all of the above from a seeded discrete-event loop.
//! * [`bench`] and [`discovery`] are the measurement side: the prime-sieve
//!   benchmark with its statistics and power model, and the offline node
//!   discovery analysis over access logs.

pub mod bench;
pub mod discovery;
pub mod ledger;
pub mod matching;
pub mod model;
pub mod registry;
pub mod reputation;
pub mod simulator;

pub use model::{
    AccountId, AssignmentMode, DestinationRef, ExecutionTimeModel, JobId, JobSpec, JobState,
    ProcessorId, ProcessorProfile, ResourceRequirements, Schedule, WorkloadRef,
};
