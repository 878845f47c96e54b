//! Macro-step size control.

use crate::polynomial::Step;

/// Growth factor after a converged step.
pub const GROWTH: f64 = 1.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanStatus {
    Fresh,
    /// Number of consecutive halvings of this step.
    Retried(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacroStepPlan {
    pub step: Step,
    pub dt_ref: f64,
    pub status: PlanStatus,
    pub min_step: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NextStep {
    Continue(MacroStepPlan),
    Finished,
    /// The halved step would fall below `min_step`.
    Abort {
        t: f64,
        size: f64,
    },
}

/// Default rejection floor: `dt_ref · 2⁻²⁰`.
pub fn default_min_step(dt_ref: f64) -> f64 {
    dt_ref * 2f64.powi(-20)
}

/// End of a step of `size` from `start`, clipped at `t_end`. Slivers shorter
/// than a relative `1e-10` are absorbed into the step.
fn clipped_end(start: f64, size: f64, t_end: f64) -> f64 {
    let end = start + size;
    let slack = 1e-10 * size.max(t_end.abs() * 1e-6);
    if end >= t_end - slack {
        t_end
    } else {
        end
    }
}

/// First plan: a step of `dt_ref` from `t_init`, clipped at `t_end`.
pub fn first_step(t_init: f64, t_end: f64, dt_ref: f64, min_step: f64) -> Option<MacroStepPlan> {
    if t_end <= t_init {
        return None;
    }
    let end = clipped_end(t_init, dt_ref, t_end);
    Some(MacroStepPlan {
        step: Step { start: t_init, end },
        dt_ref,
        status: PlanStatus::Fresh,
        min_step,
    })
}

/// Step-size rule: halve on rejection, otherwise continue from the old end
/// with `min(dt_ref, 1.3·δ)`.
pub fn next_step(old: &MacroStepPlan, converged: bool, t_end: f64) -> NextStep {
    let Step { start, end } = old.step;
    let size = end - start;
    if converged {
        if end >= t_end {
            return NextStep::Finished;
        }
        let new_size = old.dt_ref.min(GROWTH * size);
        NextStep::Continue(MacroStepPlan {
            step: Step {
                start: end,
                end: clipped_end(end, new_size, t_end),
            },
            status: PlanStatus::Fresh,
            ..*old
        })
    } else {
        let half = 0.5 * size;
        if half < old.min_step {
            return NextStep::Abort {
                t: start,
                size: half,
            };
        }
        let retries = match old.status {
            PlanStatus::Fresh => 1,
            PlanStatus::Retried(n) => n + 1,
        };
        NextStep::Continue(MacroStepPlan {
            step: Step {
                start,
                end: start + half,
            },
            status: PlanStatus::Retried(retries),
            ..*old
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(a: f64, b: f64, dt_ref: f64) -> MacroStepPlan {
        MacroStepPlan {
            step: Step { start: a, end: b },
            dt_ref,
            status: PlanStatus::Fresh,
            min_step: default_min_step(dt_ref),
        }
    }

    fn cont(n: NextStep) -> MacroStepPlan {
        match n {
            NextStep::Continue(p) => p,
            other => panic!("expected a plan, got {other:?}"),
        }
    }

    #[test]
    fn rejection_halves() {
        let p = cont(next_step(&plan(0.0, 0.1, 0.1), false, 10.0));
        assert_eq!(
            p.step,
            Step {
                start: 0.0,
                end: 0.05
            }
        );
        assert_eq!(p.status, PlanStatus::Retried(1));
        let p = cont(next_step(&p, false, 10.0));
        assert_eq!(
            p.step,
            Step {
                start: 0.0,
                end: 0.025
            }
        );
        assert_eq!(p.status, PlanStatus::Retried(2));
    }

    #[test]
    fn growth_is_capped_by_dt_ref() {
        let p = cont(next_step(&plan(0.1, 0.15, 0.1), true, 10.0));
        assert_eq!(p.step.start, 0.15);
        assert!((p.step.end - 0.215).abs() < 1e-15);
        let p = cont(next_step(&plan(1.0, 1.09, 0.1), true, 10.0));
        assert!((p.step.size() - 0.1).abs() < 1e-12);
        assert_eq!(p.status, PlanStatus::Fresh);
    }

    #[test]
    fn finishes_and_clips() {
        assert_eq!(
            next_step(&plan(9.95, 10.0, 0.1), true, 10.0),
            NextStep::Finished
        );
        let p = cont(next_step(&plan(9.85, 9.95, 0.1), true, 10.0));
        assert_eq!(p.step.end, 10.0);
    }

    #[test]
    fn aborts_below_floor() {
        let mut p = plan(2.0, 2.1, 0.1);
        let mut halvings = 0;
        loop {
            match next_step(&p, false, 10.0) {
                NextStep::Continue(q) => {
                    p = q;
                    halvings += 1;
                }
                NextStep::Abort { t, .. } => {
                    assert_eq!(t, 2.0);
                    break;
                }
                NextStep::Finished => unreachable!(),
            }
        }
        assert_eq!(halvings, 20);
    }

    #[test]
    fn first_step_clips() {
        assert_eq!(first_step(0.0, 0.05, 0.1, 1e-9).unwrap().step.end, 0.05);
        assert!(first_step(1.0, 1.0, 0.1, 1e-9).is_none());
    }
}
