//! Deterministic parallel execution of candidate sweeps.
//!
//! Every candidate is one independent training job; jobs share nothing and
//! own their random stream, so the sweep result is a pure function of the
//! job list — never of the worker count or of scheduling order. Results are
//! reduced only after all jobs complete, so reported loss vectors are
//! always complete.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::num::rng::{StreamId, StreamPurpose};
use crate::ops::OperatorSet;

/// Descriptor of one candidate training. The stream id is a pure function
/// of `(step, sweep, candidate_index)` — see [`CandidateJob::stream_for`].
#[derive(Debug, Clone)]
pub struct CandidateJob {
    pub candidate_index: usize,
    pub opset: OperatorSet,
    pub rng_stream_id: u64,
}

impl CandidateJob {
    pub fn new(step: usize, sweep: usize, candidate_index: usize, opset: OperatorSet) -> Self {
        Self {
            candidate_index,
            opset,
            rng_stream_id: Self::stream_for(step, sweep, candidate_index),
        }
    }

    /// The documented candidate-stream derivation rule.
    pub fn stream_for(step: usize, sweep: usize, candidate_index: usize) -> u64 {
        StreamId::new(StreamPurpose::Candidate, step, sweep, candidate_index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepFailure {
    pub candidate_index: usize,
    pub reason: String,
}

/// Aggregated sweep outcome. `losses` is indexed by candidate index, with
/// failed candidates carrying `+inf`. `winner_index` is the argmin with
/// lowest-index tie-breaking; `winner` is `None` exactly when every
/// candidate failed. `seconds` carries per-candidate wall time and is the
/// only field excluded from the determinism contract.
pub struct SweepResult<R> {
    pub losses: Vec<f64>,
    pub winner_index: usize,
    pub winner: Option<R>,
    pub failures: Vec<SweepFailure>,
    pub seconds: Vec<f64>,
}

impl<R> SweepResult<R> {
    pub fn all_failed(&self) -> bool {
        self.winner.is_none()
    }

    pub fn winner_loss(&self) -> f64 {
        self.losses[self.winner_index]
    }
}

fn panic_reason(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        format!("worker panic: {}", s)
    } else if let Some(s) = payload.downcast_ref::<String>() {
        format!("worker panic: {}", s)
    } else {
        "worker panic".to_string()
    }
}

/// Runs every job exactly once (plus at most one retry after a worker
/// panic) on a dedicated pool of `workers` threads and aggregates the
/// losses. A job returning an error — a diverged candidate — is recorded
/// as a failure with loss `+inf` without retry, since training is
/// deterministic given the job.
pub fn run_sweep<R, F>(jobs: &[CandidateJob], workers: usize, run: F) -> Result<SweepResult<R>>
where
    R: Send,
    F: Fn(&CandidateJob) -> Result<(f64, R)> + Sync,
{
    if jobs.is_empty() {
        return Err(Error::invalid("run_sweep needs at least one job"));
    }
    if workers == 0 {
        return Err(Error::invalid("run_sweep needs at least one worker"));
    }
    let n = jobs.len();
    let mut seen = vec![false; n];
    for job in jobs {
        if job.candidate_index >= n || seen[job.candidate_index] {
            return Err(Error::invalid(format!(
                "candidate indices must form a permutation of 0..{}, offending index {}",
                n, job.candidate_index
            )));
        }
        seen[job.candidate_index] = true;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {}", e)))?;

    type Outcome<R> = (usize, std::result::Result<(f64, R), String>, f64);
    let outcomes: Vec<Outcome<R>> = pool.install(|| {
        use rayon::prelude::*;
        jobs.par_iter()
            .map(|job| {
                let start = Instant::now();
                let first = catch_unwind(AssertUnwindSafe(|| run(job)));
                let outcome = match first {
                    Ok(Ok(v)) => Ok(v),
                    Ok(Err(e)) => Err(e.to_string()),
                    Err(panic) => {
                        log::warn!(
                            "candidate {} crashed ({}); retrying once",
                            job.candidate_index,
                            panic_reason(panic)
                        );
                        match catch_unwind(AssertUnwindSafe(|| run(job))) {
                            Ok(Ok(v)) => Ok(v),
                            Ok(Err(e)) => Err(e.to_string()),
                            Err(panic) => Err(panic_reason(panic)),
                        }
                    }
                };
                (job.candidate_index, outcome, start.elapsed().as_secs_f64())
            })
            .collect()
    });

    let mut losses = vec![f64::INFINITY; n];
    let mut seconds = vec![0.0; n];
    let mut params: Vec<Option<R>> = (0..n).map(|_| None).collect();
    let mut failures = Vec::new();
    for (index, outcome, secs) in outcomes {
        seconds[index] = secs;
        match outcome {
            Ok((loss, r)) => {
                losses[index] = loss;
                params[index] = Some(r);
            }
            Err(reason) => failures.push(SweepFailure {
                candidate_index: index,
                reason,
            }),
        }
    }
    failures.sort_by_key(|f| f.candidate_index);
    debug_assert_eq!(
        params.iter().filter(|p| p.is_some()).count() + failures.len(),
        n,
        "work conservation: completed + failed == submitted"
    );

    // Argmin with lowest-index tie-break. NaN losses are treated as +inf.
    let mut winner_index = 0;
    let mut best = f64::INFINITY;
    for (i, &l) in losses.iter().enumerate() {
        if l < best {
            best = l;
            winner_index = i;
        }
    }
    let winner = if best.is_finite() {
        params[winner_index].take()
    } else {
        None
    };

    Ok(SweepResult {
        losses,
        winner_index,
        winner,
        failures,
        seconds,
    })
}
