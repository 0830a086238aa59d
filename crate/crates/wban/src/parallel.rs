//! Parallel sweep execution.
//!
//! Runs are independent, so every (combination, repetition) pair becomes a
//! job. Results are gathered by index, which keeps the output identical to
//! [`wban_core::sweep`] whatever the thread count.

use rayon::prelude::*;
use wban_core::engine::{aggregate, EngineError, SweepPlan, SweepResult};

/// Runs `plan` on a pool of `threads` workers (0 picks the core count).
pub fn sweep(plan: &SweepPlan, threads: usize) -> Result<SweepResult, EngineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| EngineError::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| run(plan))
}

fn run(plan: &SweepPlan) -> Result<SweepResult, EngineError> {
    if plan.combinations.is_empty() {
        return Err(EngineError::Invalid("combination matrix is empty".into()));
    }
    let prepared = (0..plan.combinations.len())
        .into_par_iter()
        .map(|id| plan.prepare(id))
        .collect::<Result<Vec<_>, _>>()?;
    let reps = plan.base.repetitions;
    let jobs: Vec<(usize, usize)> = (0..prepared.len())
        .flat_map(|c| (0..reps).map(move |r| (c, r)))
        .collect();
    let mut runs = jobs
        .par_iter()
        .map(|&(c, r)| prepared[c].run_repetition(r))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter();
    let combinations = (0..prepared.len())
        .map(|id| aggregate(plan, id, runs.by_ref().take(reps).collect()))
        .collect();
    Ok(SweepResult { combinations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use wban_core::channel::BodyLocation::*;
    use wban_core::engine::{combination_matrix, ExperimentConfig, StartPolicy};
    use wban_core::network::WbanConfig;

    fn plan() -> SweepPlan {
        let w = WbanConfig::chest_hub(1, &[Head, RightWrist, LeftAnkle]).unwrap();
        let mut base =
            ExperimentConfig::two_wban(w.clone(), w.with_subject(wban_core::SubjectId(2)));
        base.epochs = 200;
        base.repetitions = 3;
        let combinations =
            combination_matrix(&base.victim, &base.interferers[0], &[1, 2], &[1, 2, 3]);
        SweepPlan {
            base,
            combinations,
            starts: StartPolicy::Random,
        }
    }

    #[test]
    fn matches_sequential_for_any_thread_count() {
        let p = plan();
        let expected = wban_core::sweep(&p).unwrap();
        for threads in [1, 3] {
            assert_eq!(sweep(&p, threads).unwrap(), expected);
        }
    }

    #[test]
    fn empty_matrix_is_an_error() {
        let mut p = plan();
        p.combinations.clear();
        assert!(sweep(&p, 1).is_err());
    }
}
