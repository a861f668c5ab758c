//! Step-size schedules and their admissibility machinery: the largest safe
//! constant step on a log grid, the first admissible round `K*` for
//! decreasing steps, and trailing step-window sums.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::OperatorConstants;

/// Number of grid points used by [`max_constant_step`].
pub const STEP_GRID_POINTS: usize = 200;

/// Default cap on the `K*` scan.
pub const DEFAULT_KSTAR_CAP: usize = 10_000_000;

/// Step-size schedule: constant `alpha` or harmonic `alpha0 / (k + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant { alpha: f64 },
    Harmonic { alpha0: f64 },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let a = match self {
            StepSchedule::Constant { alpha } => *alpha,
            StepSchedule::Harmonic { alpha0 } => *alpha0,
        };
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "step size must be positive and finite, got {a}"
            )));
        }
        Ok(())
    }

    /// `alpha_k`.
    pub fn alpha(&self, k: usize) -> f64 {
        match self {
            StepSchedule::Constant { alpha } => *alpha,
            StepSchedule::Harmonic { alpha0 } => alpha0 / (k as f64 + 1.0),
        }
    }

    pub fn is_decreasing(&self) -> bool {
        matches!(self, StepSchedule::Harmonic { .. })
    }
}

/// `alpha_{k; tau} = sum_{t = k - tau}^{k} alpha_t`, the trailing window sum.
pub fn alpha_window_sum(schedule: &StepSchedule, k: usize, tau: usize) -> Result<f64> {
    if k < tau {
        return Err(Error::WindowUnderflow { k, tau });
    }
    Ok((k - tau..=k).map(|t| schedule.alpha(t)).sum())
}

/// The log-spaced candidate grid for constant steps: `STEP_GRID_POINTS`
/// points spanning `[1e-8, 1]`.
pub fn step_grid() -> Vec<f64> {
    (0..STEP_GRID_POINTS)
        .map(|j| 10f64.powf(-8.0 + 8.0 * j as f64 / (STEP_GRID_POINTS - 1) as f64))
        .collect()
}

/// Right-hand side of the constant-step admissibility condition:
/// `min{ log 2 / (2BH), mu / (8N (19 B^2 H + 9 + 57 L B H)), N / (2 H mu) }`.
pub fn admissibility_rhs(constants: &OperatorConstants, n_agents: usize, local_steps: usize) -> f64 {
    let b = constants.b;
    let l = constants.l;
    let mu = constants.mu;
    let n = n_agents as f64;
    let h = local_steps as f64;
    let t1 = 2f64.ln() / (2.0 * b * h);
    let t2 = mu / (8.0 * n * (19.0 * b * b * h + 9.0 + 57.0 * l * b * h));
    let t3 = n / (2.0 * h * mu);
    t1.min(t2).min(t3)
}

/// Largest grid step `alpha` with `alpha * max(tau(alpha), 1)` below the
/// admissibility right-hand side.
///
/// The `max(.., 1)` keeps the side conditions the downstream trajectory
/// bounds rely on (`2BH alpha <= log 2` in particular) in force even for
/// chains that are already mixed at every queried precision, where the raw
/// product would be vacuously zero. Each candidate is certified pointwise
/// because `alpha * tau(alpha)` need not be monotone across the grid.
pub fn max_constant_step(
    constants: &OperatorConstants,
    n_agents: usize,
    local_steps: usize,
    mut tau: impl FnMut(f64) -> Result<usize>,
) -> Result<f64> {
    let rhs = admissibility_rhs(constants, n_agents, local_steps);
    for &alpha in step_grid().iter().rev() {
        // Cheap reject before paying for a mixing-time query.
        if alpha > rhs {
            continue;
        }
        let t = tau(alpha)?.max(1);
        if alpha * t as f64 <= rhs {
            return Ok(alpha);
        }
    }
    Err(Error::NoAdmissibleStep)
}

/// Right-hand side of the decreasing-step admissibility condition:
/// `min{ log 2 / (2BH), mu / (8N (19 B^2 H + 9 + 57 L B H)), 2 alpha_0 }`.
pub fn tv_admissibility_rhs(
    constants: &OperatorConstants,
    n_agents: usize,
    local_steps: usize,
    alpha0: f64,
) -> f64 {
    let b = constants.b;
    let l = constants.l;
    let mu = constants.mu;
    let n = n_agents as f64;
    let h = local_steps as f64;
    let t1 = 2f64.ln() / (2.0 * b * h);
    let t2 = mu / (8.0 * n * (19.0 * b * b * h + 9.0 + 57.0 * l * b * h));
    let t3 = 2.0 * alpha0;
    t1.min(t2).min(t3)
}

/// Smallest round `k` whose trailing step-window sum sits below `rhs`, with
/// the condition re-verified over a lookahead horizon to guard against
/// non-monotone crossings, and `k >= tau(step(k))` so the window exists.
///
/// `step(k)` is the effective step consumed at round `k` (the schedule value
/// at the round's first global index).
pub fn find_first_admissible_round(
    step: impl Fn(usize) -> f64,
    mut tau: impl FnMut(f64) -> Result<usize>,
    rhs: f64,
    horizon: Option<usize>,
    cap: usize,
) -> Result<usize> {
    let holds = |k: usize, tau: &mut dyn FnMut(f64) -> Result<usize>| -> Result<bool> {
        let a_k = step(k);
        if a_k > rhs {
            return Ok(false);
        }
        let t = tau(a_k)?;
        if k < t {
            return Ok(false);
        }
        let window: f64 = (k - t..=k).map(&step).sum();
        Ok(window <= rhs)
    };

    let mut k = 0usize;
    'outer: while k <= cap {
        if holds(k, &mut tau)? {
            let lookahead = horizon.unwrap_or(10 * k);
            for k2 in k + 1..=k.saturating_add(lookahead).min(cap) {
                if !holds(k2, &mut tau)? {
                    k = k2 + 1;
                    continue 'outer;
                }
            }
            return Ok(k);
        }
        k += 1;
    }
    Err(Error::NotFoundWithinCap { cap })
}

/// `K*` for a harmonic schedule: first round where the trailing window sum
/// `sum_{t=k-tau(alpha_k)}^{k} alpha_t` drops below the decreasing-step
/// admissibility right-hand side.
///
/// `stride` maps round indices to schedule indices (the schedule clock runs
/// on the same counter as the sample clock: `H` per round under fresh
/// indexing, 1 under the literal overlapping-window mode).
pub fn find_k_star(
    schedule: &StepSchedule,
    stride: usize,
    constants: &OperatorConstants,
    n_agents: usize,
    local_steps: usize,
    tau: impl FnMut(f64) -> Result<usize>,
    horizon: Option<usize>,
    cap: usize,
) -> Result<usize> {
    let alpha0 = match schedule {
        StepSchedule::Harmonic { alpha0 } => *alpha0,
        StepSchedule::Constant { .. } => {
            return Err(Error::InvalidParameter(
                "K* is defined for decreasing schedules".into(),
            ))
        }
    };
    let rhs = tv_admissibility_rhs(constants, n_agents, local_steps, alpha0);
    let sched = *schedule;
    find_first_admissible_round(move |k| sched.alpha(k * stride), tau, rhs, horizon, cap)
}
