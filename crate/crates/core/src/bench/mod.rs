//! Measurement harness: the prime-sieve workload, timed repetitions, sample
//! statistics, platform comparison and the per-watt efficiency model.

mod power;
mod sieve;
mod stats;

use std::io;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use power::{energy_wh, executions_per_wh, per_core_watts, PowerModel};
pub use sieve::sieve_primes;
pub use stats::{compare, nearest_rank, percent_delta, stats, Delta, PlatformStats, Ranking};

/// Upper bound used by the reference experiment.
pub const DEFAULT_WORKLOAD_PARAM: usize = 50_000_000;
pub const DEFAULT_WARMUP_RUNS: u32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("sample set for {0:?} is empty")]
    EmptySampleSet(String),
    #[error("comparison needs at least 2 platforms, got {0}")]
    TooFewPlatforms(usize),
    #[error("iterations must be at least 1")]
    ZeroIterations,
    #[error("run {run} found {found} primes, earlier runs found {expected}")]
    InconsistentResult { run: u32, expected: usize, found: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Timing samples for one platform, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub platform: String,
    pub workload_param: u64,
    pub samples: Vec<f64>,
}

impl SampleSet {
    pub fn new(platform: impl Into<String>, workload_param: u64, samples: Vec<f64>) -> Self {
        Self {
            platform: platform.into(),
            workload_param,
            samples,
        }
    }
}

/// A local benchmark run: the samples and the prime count every run agreed on.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub samples: SampleSet,
    pub prime_count: usize,
}

/// Time `iterations` sequential sieve runs after the default warm-up.
pub fn run_benchmark(workload_param: usize, iterations: u32) -> Result<BenchRun, BenchError> {
    run_benchmark_with(workload_param, iterations, DEFAULT_WARMUP_RUNS, "local")
}

pub fn run_benchmark_with(
    workload_param: usize,
    iterations: u32,
    warmup: u32,
    platform: &str,
) -> Result<BenchRun, BenchError> {
    if iterations == 0 {
        return Err(BenchError::ZeroIterations);
    }
    for _ in 0..warmup {
        std::hint::black_box(sieve_primes(std::hint::black_box(workload_param)));
    }
    let mut samples = Vec::with_capacity(iterations as usize);
    let mut prime_count = None;
    for run in 0..iterations {
        let started = Instant::now();
        let primes = sieve_primes(std::hint::black_box(workload_param));
        let elapsed = started.elapsed();
        let found = std::hint::black_box(primes).len();
        match prime_count {
            None => prime_count = Some(found),
            Some(expected) if expected != found => {
                return Err(BenchError::InconsistentResult { run, expected, found })
            }
            Some(_) => {}
        }
        // sub-nanosecond runs still count as a positive sample
        samples.push((elapsed.as_secs_f64() * 1e3).max(1e-6));
    }
    Ok(BenchRun {
        samples: SampleSet::new(platform, workload_param as u64, samples),
        prime_count: prime_count.expect("at least one iteration"),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRow {
    platform: String,
    iteration: usize,
    duration_ms: f64,
}

/// Write `platform,iteration,duration_ms` rows for every set, LF-terminated.
pub fn write_samples_csv<W: io::Write>(out: W, sets: &[SampleSet]) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for set in sets {
        for (iteration, &duration_ms) in set.samples.iter().enumerate() {
            w.serialize(SampleRow {
                platform: set.platform.clone(),
                iteration,
                duration_ms,
            })?;
        }
    }
    if sets.iter().all(|s| s.samples.is_empty()) {
        w.write_record(["platform", "iteration", "duration_ms"])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a samples CSV back, one set per platform in first-seen order.
pub fn read_samples_csv<R: io::Read>(input: R) -> Result<Vec<SampleSet>, BenchError> {
    let mut sets: Vec<SampleSet> = Vec::new();
    for row in csv::Reader::from_reader(input).deserialize() {
        let row: SampleRow = row?;
        match sets.iter_mut().find(|s| s.platform == row.platform) {
            Some(set) => set.samples.push(row.duration_ms),
            None => sets.push(SampleSet::new(row.platform, 0, vec![row.duration_ms])),
        }
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_benchmark() {
        let run = run_benchmark(10, 5).unwrap();
        assert_eq!(run.samples.samples.len(), 5);
        assert_eq!(run.prime_count, 4);
        assert!(run.samples.samples.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn one_million() {
        let run = run_benchmark_with(1_000_000, 3, 0, "local").unwrap();
        assert_eq!(run.prime_count, 78_498);
        assert_eq!(run.samples.samples.len(), 3);
        assert_eq!(run.samples.workload_param, 1_000_000);
    }

    #[test]
    fn zero_iterations_rejected() {
        assert!(matches!(run_benchmark(10, 0), Err(BenchError::ZeroIterations)));
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_samples_csv(
            &mut buf,
            &[
                SampleSet::new("a", 10, vec![1.5, 2.0]),
                SampleSet::new("b", 10, vec![3.0]),
            ],
        )
        .unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "platform,iteration,duration_ms\na,0,1.5\na,1,2.0\nb,0,3.0\n"
        );
        let back = read_samples_csv(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].samples, vec![1.5, 2.0]);
    }

    #[test]
    fn empty_csv_still_has_header() {
        let mut buf = Vec::new();
        write_samples_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "platform,iteration,duration_ms\n");
    }
}
