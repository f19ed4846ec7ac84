//! Time integration driver: repeated steps with diagnostics and snapshots.

use std::sync::Arc;

use crate::diagnostics::SeriesRecord;
use crate::error::Result;
use crate::fespace::{FeSpace, NodalField};
use crate::schemes::{SchemeParams, StepReport, Stepper};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub steps: usize,
    /// Record diagnostics every this many steps (0: initial and final only).
    pub record_every: usize,
    /// Hand fields to the snapshot sink every this many steps (0: never).
    pub snapshot_every: usize,
    /// Stop at the first step whose Picard iteration does not converge.
    /// Runs always stop at a step whose iterates diverged.
    pub abort_on_fail: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    /// Picard failed at `step` and the run stopped there.
    PicardFailure { step: usize },
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub phi: NodalField,
    pub mu: NodalField,
    pub series: Vec<SeriesRecord>,
    pub reports: Vec<StepReport>,
    pub status: RunStatus,
    /// Steps that did not converge (only nonempty without `abort_on_fail`,
    /// apart from the failing step itself).
    pub failed_steps: Vec<usize>,
}

/// Advances `phi0` by `opts.steps` steps. The initial chemical potential
/// comes from [`Stepper::initial_mu`]. `snapshot` receives
/// `(step, phi, mu)` at step 0 and every `snapshot_every` steps.
///
/// On an aborting Picard failure the series ends with a record of the last
/// finite iterate of the failed step.
pub fn run_simulation<S>(
    space: Arc<FeSpace>,
    params: SchemeParams,
    phi0: NodalField,
    opts: &RunOptions,
    mut snapshot: S,
) -> Result<RunOutcome>
where
    S: FnMut(usize, &NodalField, &NodalField) -> Result<()>,
{
    let mut stepper = Stepper::new(space.clone(), params)?;
    let pot = *stepper.potential();
    let tr = *stepper.truncation();
    let record = |step: usize, phi: &NodalField, iters: usize| {
        SeriesRecord::compute(&space, params.scheme, &pot, &tr, step, step as f64 * params.dt, phi, iters)
    };

    let mut mu = stepper.initial_mu(&phi0)?;
    let mut phi = phi0;
    let mut series = vec![record(0, &phi, 0)];
    if opts.snapshot_every > 0 {
        snapshot(0, &phi, &mu)?;
    }
    let mut reports = Vec::with_capacity(opts.steps);
    let mut failed_steps = Vec::new();
    let mut status = RunStatus::Completed;
    for step in 1..=opts.steps {
        let out = stepper.step(&phi, &mu)?;
        reports.push(out.report);
        phi = out.phi;
        mu = out.mu;
        let iters = out.report.iterations;
        if !out.report.converged {
            failed_steps.push(step);
            // a diverged step leaves nothing meaningful to continue from
            if opts.abort_on_fail || out.report.diverged() {
                series.push(record(step, &phi, iters));
                status = RunStatus::PicardFailure { step };
                break;
            }
        }
        let last = step == opts.steps;
        if last || (opts.record_every > 0 && step % opts.record_every == 0) {
            series.push(record(step, &phi, iters));
        }
        if opts.snapshot_every > 0 && (step % opts.snapshot_every == 0) {
            snapshot(step, &phi, &mu)?;
        }
    }
    Ok(RunOutcome {
        phi,
        mu,
        series,
        reports,
        status,
        failed_steps,
    })
}
