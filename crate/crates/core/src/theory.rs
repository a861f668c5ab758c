//! Rate-bound evaluators and trajectory monitors.
//!
//! The two bound evaluators compute the printed finite-time bounds for
//! constant and harmonic step sizes. The monitors replay the inequalities
//! those bounds rest on against live trajectories: per-iterate norm and
//! drift bounds hold almost surely and are checked exactly; the Markovian
//! bias bound is a statement in expectation and is checked by Monte Carlo
//! with a three-standard-error allowance.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run_local_sa, AlgorithmConfig, Trajectory};
use crate::error::{Error, Result};
use crate::markov::{MarkovChain, MixingOracle};
use crate::operators::{mean_operator, Federation, OperatorConstants, OperatorSpec};
use crate::schedule::StepSchedule;

/// Everything the bound formulas need.
#[derive(Clone)]
pub struct BoundParams {
    pub b: f64,
    pub l: f64,
    pub mu: f64,
    pub n_agents: usize,
    pub local_steps: usize,
    /// Geometric-mixing constant, `tau(alpha) <= C log(1/alpha)`.
    pub c: f64,
    pub theta_star_norm: f64,
    pub tau: Arc<dyn Fn(f64) -> Result<usize> + Send + Sync>,
}

impl std::fmt::Debug for BoundParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BoundParams")
            .field("b", &self.b)
            .field("l", &self.l)
            .field("mu", &self.mu)
            .field("n_agents", &self.n_agents)
            .field("local_steps", &self.local_steps)
            .field("c", &self.c)
            .field("theta_star_norm", &self.theta_star_norm)
            .finish()
    }
}

impl BoundParams {
    pub fn new(
        constants: &OperatorConstants,
        n_agents: usize,
        local_steps: usize,
        c: f64,
        tau: Arc<dyn Fn(f64) -> Result<usize> + Send + Sync>,
    ) -> Self {
        BoundParams {
            b: constants.b,
            l: constants.l,
            mu: constants.mu,
            n_agents,
            local_steps,
            c,
            theta_star_norm: constants.theta_star_norm,
            tau,
        }
    }

    /// Wraps a shared mixing oracle as the `tau` closure.
    pub fn oracle_tau(oracle: Arc<MixingOracle>) -> Arc<dyn Fn(f64) -> Result<usize> + Send + Sync> {
        Arc::new(move |alpha| oracle.tau(alpha))
    }

    /// `B^2 H + 9 + 3 (19 L + 6 B) B H`, the shared constant factor.
    fn gamma(&self) -> f64 {
        let h = self.local_steps as f64;
        self.b * self.b * h + 9.0 + 3.0 * (19.0 * self.l + 6.0 * self.b) * self.b * h
    }
}

/// Constant-step bound at round `k`:
/// `(1 - H mu alpha / N)^(k + 1 - tau(alpha)) * E_tau
///  + 8 N C (B^2 H + 9 + 3 (19 L + 6 B) B H) (||theta*|| + 1)^2 / mu
///    * log(1/alpha) * alpha`.
///
/// `e_tau` is the measured `E ||bar_theta_{tau(alpha)} - theta*||^2`.
pub fn bound_constant_step(k: usize, alpha: f64, params: &BoundParams, e_tau: f64) -> Result<f64> {
    let n = params.n_agents as f64;
    let h = params.local_steps as f64;
    let decay = 1.0 - h * params.mu * alpha / n;
    if decay <= 0.0 {
        return Err(Error::InadmissibleStep { alpha });
    }
    let tau = (params.tau)(alpha)?;
    if k < tau {
        return Err(Error::WindowUnderflow { k, tau });
    }
    let transient = decay.powi((k + 1 - tau) as i32) * e_tau;
    let floor = 8.0 * n * params.c * params.gamma() * (params.theta_star_norm + 1.0).powi(2)
        / params.mu
        * (1.0 / alpha).ln()
        * alpha;
    Ok(transient + floor)
}

/// Harmonic-step bound at round `k >= K*`:
/// `(K*)^2 E_{K*} / (k + 1)^2
///  + 16 alpha0^2 C H (B^2 H + 9 + 3 (19 L + 6 B) B H) (||theta*|| + 1)^2
///    * log((k + 1) / alpha0) / (k + 1)`.
pub fn bound_timevarying(
    k: usize,
    alpha0: f64,
    k_star: usize,
    params: &BoundParams,
    e_kstar: f64,
) -> Result<f64> {
    if k < k_star {
        return Err(Error::WindowUnderflow { k, tau: k_star });
    }
    let h = params.local_steps as f64;
    let kp1 = k as f64 + 1.0;
    let transient = (k_star as f64).powi(2) * e_kstar / (kp1 * kp1);
    let floor = 16.0 * alpha0 * alpha0 * params.c * h * params.gamma()
        * (params.theta_star_norm + 1.0).powi(2)
        * (kp1 / alpha0).ln()
        / kp1;
    Ok(transient + floor)
}

const DETAIL_CAP: usize = 20;

/// One recorded inequality violation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Violation {
    pub context: String,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of one monitor pass over a trajectory or estimate.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub total_checks: usize,
    pub violations: usize,
    /// Smallest observed slack `rhs - lhs`; `None` when nothing was checked.
    pub worst_margin: Option<f64>,
    /// True when the check is a Monte-Carlo estimate rather than exact.
    pub statistical: bool,
    pub details: Vec<Violation>,
    pub notes: Vec<String>,
    pub passed: bool,
}

impl CheckReport {
    fn new(name: impl Into<String>, statistical: bool) -> Self {
        CheckReport {
            name: name.into(),
            total_checks: 0,
            violations: 0,
            worst_margin: None,
            statistical,
            details: Vec::new(),
            notes: Vec::new(),
            passed: true,
        }
    }

    fn record(&mut self, context: impl Fn() -> String, lhs: f64, rhs: f64) {
        self.total_checks += 1;
        let margin = rhs - lhs;
        if self.worst_margin.map_or(true, |w| margin < w) {
            self.worst_margin = Some(margin);
        }
        // Tiny absolute guard so pure round-off cannot flag a violation.
        if lhs > rhs + 1e-12 * rhs.abs().max(1.0) {
            self.violations += 1;
            self.passed = false;
            if self.details.len() < DETAIL_CAP {
                self.details.push(Violation {
                    context: context(),
                    lhs,
                    rhs,
                });
            }
        }
    }
}

fn require_locals(traj: &Trajectory) -> Result<&Vec<Vec<Vec<DVector<f64>>>>> {
    traj.locals
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("trajectory has no recorded locals".into()))
}

/// Per-iterate norm and drift bounds, checked exactly for every
/// `(agent, round, local step)` from `from_round` on:
/// `||theta_i^{k,t}|| <= 2 ||bar_theta_k|| + 2 B H alpha_k` and
/// `||theta_i^{k,t} - bar_theta_k|| <= 2 B H alpha_k (||bar_theta_k|| + 1)`.
pub fn check_iterate_bounds(
    traj: &Trajectory,
    params: &BoundParams,
    from_round: usize,
) -> Result<CheckReport> {
    let locals = require_locals(traj)?;
    let mut report = CheckReport::new("iterate-bounds", false);
    let bh = params.b * params.local_steps as f64;
    for k in from_round..traj.meta.rounds {
        let alpha_k = traj.round_alpha(k);
        let bar_norm = traj.bar_theta[k].norm();
        let rhs_norm = 2.0 * bar_norm + 2.0 * bh * alpha_k;
        let rhs_drift = 2.0 * bh * alpha_k * (bar_norm + 1.0);
        for (i, agent) in locals[k].iter().enumerate() {
            for (t, theta) in agent.iter().enumerate() {
                report.record(
                    || format!("norm k={k} i={i} t={t}"),
                    theta.norm(),
                    rhs_norm,
                );
                report.record(
                    || format!("drift k={k} i={i} t={t}"),
                    (theta - &traj.bar_theta[k]).norm(),
                    rhs_drift,
                );
            }
        }
    }
    Ok(report)
}

/// Coordinator drift over one mixing window, checked exactly for every
/// round `k >= max(from_round, tau)`:
/// `||bar_theta_k - bar_theta_{k - tau}|| <= 12 B H W (||bar_theta_k|| + 1)`
/// and its squared form with `288 B^2 H^2 W^2 (||bar_theta_k||^2 + 1)`,
/// where `W = alpha tau(alpha)` under constant steps and the trailing
/// step-window sum under decreasing steps.
pub fn check_consensus_drift(
    traj: &Trajectory,
    params: &BoundParams,
    from_round: usize,
) -> Result<CheckReport> {
    let mut report = CheckReport::new("consensus-drift", false);
    let h = traj.meta.local_steps;
    let stride = traj.meta.sample_indexing.stride(h);
    let bh = params.b * h as f64;
    let round_alpha = |k: usize| traj.meta.schedule.alpha(k * stride);
    for k in from_round..=traj.meta.rounds {
        let alpha_k = round_alpha(k);
        let tau = (params.tau)(alpha_k)?;
        if k < tau {
            continue;
        }
        let window = match traj.meta.schedule {
            StepSchedule::Constant { alpha } => alpha * tau as f64,
            StepSchedule::Harmonic { .. } => (k - tau..=k).map(round_alpha).sum(),
        };
        let bar_norm = traj.bar_theta[k].norm();
        let gap = (&traj.bar_theta[k] - &traj.bar_theta[k - tau]).norm();
        report.record(
            || format!("drift k={k} tau={tau}"),
            gap,
            12.0 * bh * window * (bar_norm + 1.0),
        );
        report.record(
            || format!("drift^2 k={k} tau={tau}"),
            gap * gap,
            288.0 * bh * bh * window * window * (bar_norm * bar_norm + 1.0),
        );
    }
    Ok(report)
}

/// Exact Markov-bias check at one parameter point: for every start state and
/// every `k` in `[tau(alpha), tau(alpha) + 20]`, the conditional expectation
/// `E[F(theta, X_k) | X_0 = x0]` (computed by matrix powers) deviates from
/// the mean field by at most `alpha (||theta|| + 1)` in every coordinate.
/// The Euclidean-norm form is recorded as a note.
pub fn check_mixing_bias(
    op: &OperatorSpec,
    chain: &MarkovChain,
    theta: &DVector<f64>,
    alpha_level: f64,
) -> Result<CheckReport> {
    let pi = chain.stationary_distribution()?;
    let tau = chain.mixing_time(alpha_level)?.tau;
    let f_mean = mean_operator(op, &pi, theta)?;
    let threshold = alpha_level * (theta.norm() + 1.0);

    let evals: Vec<DVector<f64>> = (0..op.n_states()).map(|x| op.eval(theta, x)).collect();

    let mut report = CheckReport::new("mixing-bias", false);
    let n = chain.n_states();
    let mut power = nalgebra::DMatrix::<f64>::identity(n, n);
    let mut worst_euclid: f64 = 0.0;
    for k in 0..=tau + 20 {
        if k >= tau {
            for x0 in 0..n {
                let mut cond = DVector::<f64>::zeros(op.dim());
                for x in 0..n {
                    cond.axpy(power[(x0, x)], &evals[x], 1.0);
                }
                let dev = cond - &f_mean;
                let coord = dev.amax();
                report.record(|| format!("k={k} x0={x0}"), coord, threshold);
                worst_euclid = worst_euclid.max(dev.norm());
            }
        }
        power *= chain.transition();
    }
    report.notes.push(format!(
        "worst euclidean deviation {worst_euclid:.3e} against threshold {threshold:.3e}"
    ));
    Ok(report)
}

/// Monte-Carlo check of the Markovian bias bound at the trajectory's final
/// executed round. Estimates
/// `-sum_i sum_t w_t E<bar_theta_k - theta*, F_i(theta_i^{k,t}; X) - F_i(bar_theta_k)>`
/// across independent trials (`w_t = 1` under constant steps, the consumed
/// step under decreasing ones) and compares against the printed right-hand
/// side; passes when the estimate stays below it plus three standard errors.
pub fn check_bias_bound_mc(
    fed: &Federation,
    cfg: &AlgorithmConfig,
    alpha_level: f64,
    trials: usize,
    params: &BoundParams,
    seed: u64,
) -> Result<CheckReport> {
    if trials < 2 {
        return Err(Error::InvalidParameter(
            "bias-bound Monte Carlo needs at least 2 trials".into(),
        ));
    }
    let k_eval = cfg.rounds - 1;
    let tau_level = (params.tau)(alpha_level)?;
    if k_eval < tau_level {
        return Err(Error::WindowUnderflow {
            k: k_eval,
            tau: tau_level,
        });
    }

    let mut run_cfg = cfg.clone();
    run_cfg.record_locals = true;

    let theta_star = fed.theta_star();
    let per_trial: Vec<Result<(f64, f64)>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let traj = run_local_sa(fed, &run_cfg, crate::engine::derive_seed(seed, &[trial as u64]))?;
            let locals = traj.locals.as_ref().expect("recorded");
            let samples = traj.samples.as_ref().expect("recorded");
            let bar = &traj.bar_theta[k_eval];
            let err_vec = bar - theta_star;
            let h = run_cfg.local_steps;

            let mut inner = 0.0;
            for i in 0..fed.n_agents() {
                let f_mean_bar =
                    mean_operator(&fed.ops()[i], &fed.stationary_distributions()[i], bar)?;
                for t in 0..h {
                    let weight = match run_cfg.schedule {
                        StepSchedule::Constant { .. } => 1.0,
                        StepSchedule::Harmonic { .. } => traj.alphas_used[k_eval * h + t],
                    };
                    let x = samples[k_eval][i][t];
                    let f_sample = fed.ops()[i].eval(&locals[k_eval][i][t], x);
                    inner += weight * (&f_sample - &f_mean_bar).dot(&err_vec);
                }
            }
            Ok((-inner, err_vec.norm_squared()))
        })
        .collect();

    let mut lhs_samples = Vec::with_capacity(trials);
    let mut err_samples = Vec::with_capacity(trials);
    for r in per_trial {
        let (lhs, err) = r?;
        lhs_samples.push(lhs);
        err_samples.push(err);
    }
    let t = trials as f64;
    let lhs_mean = lhs_samples.iter().sum::<f64>() / t;
    let lhs_var =
        lhs_samples.iter().map(|v| (v - lhs_mean).powi(2)).sum::<f64>() / (t - 1.0);
    let se = (lhs_var / t).sqrt();
    let e_hat = err_samples.iter().sum::<f64>() / t;

    let n = params.n_agents as f64;
    let h = params.local_steps as f64;
    let star = (1.0 + params.theta_star_norm).powi(2);
    let coupling = 12.0 * (19.0 * params.l + 6.0 * params.b) * n * params.b * h * h;
    let rhs = match cfg.schedule {
        StepSchedule::Constant { alpha } => {
            let tau = (params.tau)(alpha)? as f64;
            36.0 * n * h * alpha * e_hat
                + 36.0 * n * h * alpha * star
                + coupling * alpha * tau * (e_hat + star)
        }
        StepSchedule::Harmonic { .. } => {
            let stride = cfg.sample_indexing.stride(cfg.local_steps);
            let alpha_k = cfg.schedule.alpha(k_eval * stride);
            let tau = (params.tau)(alpha_k)?;
            if k_eval < tau {
                return Err(Error::WindowUnderflow {
                    k: k_eval,
                    tau,
                });
            }
            let window: f64 = (k_eval - tau..=k_eval)
                .map(|r| cfg.schedule.alpha(r * stride))
                .sum();
            36.0 * n * h * alpha_k * alpha_k * (e_hat + star)
                + coupling * alpha_k * window * (e_hat + star)
        }
    };

    let mut report = CheckReport::new("bias-bound-mc", true);
    report.record(
        || format!("k={k_eval} trials={trials} se={se:.3e}"),
        lhs_mean,
        rhs + 3.0 * se,
    );
    report.notes.push(format!(
        "estimate {lhs_mean:.6e}, rhs {rhs:.6e}, se {se:.3e}, E||bar-theta*||^2 {e_hat:.6e}"
    ));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::MarkovChain;
    use crate::operators::{OperatorSpec, ProbeOptions};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn fixed_tau(t: usize) -> Arc<dyn Fn(f64) -> Result<usize> + Send + Sync> {
        Arc::new(move |_| Ok(t))
    }

    fn unit_params(tau: usize) -> BoundParams {
        BoundParams {
            b: 1.0,
            l: 1.0,
            mu: 1.0,
            n_agents: 1,
            local_steps: 1,
            c: 1.0,
            theta_star_norm: 0.0,
            tau: fixed_tau(tau),
        }
    }

    #[test]
    fn constant_bound_hand_arithmetic() {
        // N=H=B=L=mu=C=1, ||theta*||=0, alpha=0.01, tau=0, k=0, E_tau=1:
        // (1 - 0.01)^1 + 680 * 0.01 * ln(100) = 0.99 + 6.8 ln(100).
        let params = unit_params(0);
        let got = bound_constant_step(0, 0.01, &params, 1.0).unwrap();
        let expected = 0.99 + 6.8 * 100f64.ln();
        assert_relative_eq!(got, expected, epsilon = 1e-9);
    }

    #[test]
    fn constant_bound_zero_initial_error() {
        let params = unit_params(2);
        let alpha = 0.01;
        let got = bound_constant_step(2, alpha, &params, 0.0).unwrap();
        let floor = 8.0 * 85.0 * (1.0 / alpha).ln() * alpha;
        assert_relative_eq!(got, floor, epsilon = 1e-12);
    }

    #[test]
    fn constant_bound_limits() {
        let params = unit_params(0);
        // Second term vanishes and the decay factor approaches 1 as
        // alpha -> 0.
        let tiny = bound_constant_step(5, 1e-12, &params, 1.0).unwrap();
        assert!(tiny < 1.0 + 1e-6 && tiny > 0.99);
        // Monotone decreasing in k for fixed admissible alpha.
        let mut prev = f64::INFINITY;
        for k in 0..50 {
            let v = bound_constant_step(k, 0.01, &params, 1.0).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn constant_bound_inadmissible() {
        let params = unit_params(0);
        assert!(matches!(
            bound_constant_step(3, 1.5, &params, 1.0),
            Err(Error::InadmissibleStep { .. })
        ));
    }

    #[test]
    fn timevarying_bound_hand_arithmetic() {
        // N=H=B=L=mu=C=1 so alpha0=2, ||theta*||=0, K*=4, E=1, k=9:
        // 16/100 + 16*4*85*ln(5)/10.
        let params = unit_params(0);
        let got = bound_timevarying(9, 2.0, 4, &params, 1.0).unwrap();
        let expected = 16.0 / 100.0 + 16.0 * 4.0 * 85.0 * 5f64.ln() / 10.0;
        assert_relative_eq!(got, expected, epsilon = 1e-9);
    }

    #[test]
    fn timevarying_bound_vanishes() {
        let params = unit_params(0);
        // First term drops when E_{K*} = 0; the whole bound tends to zero.
        let at_kstar = bound_timevarying(10, 2.0, 10, &params, 0.0).unwrap();
        let later = bound_timevarying(10_000, 2.0, 10, &params, 0.0).unwrap();
        let far = bound_timevarying(10_000_000, 2.0, 10, &params, 0.0).unwrap();
        assert!(later < at_kstar && far < later);
        assert!(far < 1e-2);
        assert!(matches!(
            bound_timevarying(5, 2.0, 10, &params, 1.0),
            Err(Error::WindowUnderflow { .. })
        ));
    }

    fn near_constant_federation() -> Federation {
        // Almost-stationary dynamics: negligible curvature, zero-mean
        // per-state offsets. The offsets keep B positive, which the drift
        // bounds assume; the coordinator barely moves.
        let op = OperatorSpec::linear(
            vec![-DMatrix::identity(1, 1) * 1e-9, -DMatrix::identity(1, 1) * 1e-9],
            vec![
                DVector::from_vec(vec![0.1]),
                DVector::from_vec(vec![-0.1]),
            ],
        )
        .unwrap();
        let chain = MarkovChain::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        Federation::new(vec![op], vec![chain], ProbeOptions::default()).unwrap()
    }

    #[test]
    fn iterate_bounds_trivial_at_t0() {
        let fed = near_constant_federation();
        let mut cfg = AlgorithmConfig::new(1, 1, 1, StepSchedule::Constant { alpha: 0.1 }, 5);
        cfg.record_locals = true;
        cfg.theta0 = Some(DVector::from_vec(vec![2.0]));
        let traj = run_local_sa(&fed, &cfg, 0).unwrap();
        let params = BoundParams::new(fed.constants(), 1, 1, 1.0, fixed_tau(1));
        let report = check_iterate_bounds(&traj, &params, 0).unwrap();
        assert_eq!(report.violations, 0);
        assert!(report.passed);
    }

    #[test]
    fn consensus_drift_stationary_trajectory() {
        let fed = near_constant_federation();
        let mut cfg = AlgorithmConfig::new(1, 2, 1, StepSchedule::Constant { alpha: 0.1 }, 8);
        cfg.record_locals = true;
        cfg.theta0 = Some(DVector::from_vec(vec![1.0]));
        let traj = run_local_sa(&fed, &cfg, 0).unwrap();
        let params = BoundParams::new(fed.constants(), 1, 2, 1.0, fixed_tau(3));
        let report = check_consensus_drift(&traj, &params, 0).unwrap();
        // The operator is (numerically) zero, so the coordinator never moves.
        assert_eq!(report.violations, 0);
        assert!(report.total_checks > 0);
    }

    #[test]
    fn consensus_drift_tau_zero_passes() {
        let fed = near_constant_federation();
        let mut cfg = AlgorithmConfig::new(1, 1, 1, StepSchedule::Constant { alpha: 0.05 }, 6);
        cfg.record_locals = true;
        let traj = run_local_sa(&fed, &cfg, 1).unwrap();
        let params = BoundParams::new(fed.constants(), 1, 1, 1.0, fixed_tau(0));
        let report = check_consensus_drift(&traj, &params, 0).unwrap();
        assert_eq!(report.violations, 0);
    }

    #[test]
    fn mixing_bias_rank_one_chain() {
        // All rows equal pi: the conditional expectation equals the mean
        // field exactly from k = 1 on.
        let chain = MarkovChain::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let op = OperatorSpec::linear(
            vec![
                -DMatrix::identity(1, 1) * 0.2,
                -DMatrix::identity(1, 1) * 0.1,
            ],
            vec![
                DVector::from_vec(vec![0.1]),
                DVector::from_vec(vec![-0.1]),
            ],
        )
        .unwrap();
        let theta = DVector::from_vec(vec![1.0]);
        let report = check_mixing_bias(&op, &chain, &theta, 0.1).unwrap();
        assert_eq!(report.violations, 0);
        // Margin is the full threshold alpha (||theta|| + 1) = 0.2.
        assert!(report.worst_margin.unwrap() > 0.19);
    }

    #[test]
    fn mixing_bias_two_state_linear() {
        let chain = MarkovChain::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8]]).unwrap();
        let op = OperatorSpec::linear(
            vec![
                -DMatrix::identity(2, 2) * 0.2,
                DMatrix::from_row_slice(2, 2, &[0.1, 0.05, 0.0, -0.2]),
            ],
            vec![
                DVector::from_vec(vec![0.1, 0.0]),
                DVector::from_vec(vec![0.0, 0.2]),
            ],
        )
        .unwrap();
        let theta = DVector::from_vec(vec![0.5, -1.0]);
        let report = check_mixing_bias(&op, &chain, &theta, 0.01).unwrap();
        assert_eq!(report.violations, 0, "details: {:?}", report.details);
    }

    #[test]
    fn bias_bound_mc_degenerate_noise() {
        // H = 1 and a single-state chain: locals equal the coordinator
        // iterate and the sample equals the mean field, so the estimate is
        // exactly zero against a strictly positive right-hand side.
        let op = OperatorSpec::linear(
            vec![-DMatrix::identity(1, 1) * 0.5],
            vec![DVector::from_vec(vec![0.5])],
        )
        .unwrap();
        let chain = MarkovChain::from_rows(&[vec![1.0]]).unwrap();
        let fed = Federation::new(vec![op], vec![chain], ProbeOptions::default()).unwrap();
        let cfg = AlgorithmConfig::new(1, 1, 1, StepSchedule::Constant { alpha: 0.05 }, 4);
        let params = BoundParams::new(fed.constants(), 1, 1, 1.0, fixed_tau(0));
        let report = check_bias_bound_mc(&fed, &cfg, 0.05, 16, &params, 7).unwrap();
        assert!(report.statistical);
        assert_eq!(report.violations, 0);
    }
}
