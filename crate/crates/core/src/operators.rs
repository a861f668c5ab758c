//! Sampled operators `F_i(theta; x)` over finite state spaces, their mean
//! fields under the stationary distribution, validators for the Lipschitz /
//! strong-monotonicity / growth constants, and the ground-truth root solver.
//!
//! Sign convention: the simulation engine always *subtracts* `alpha * F`,
//! so linear operators are stored as `F(theta; x) = -A(x) theta - b(x)`.
//! Application modules negate their natural mappings where needed so a
//! single engine serves optimization and reinforcement-learning instances.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{MarkovChain, StationaryDistribution};

/// Residual required of a federation root: `|| sum_i F_i(theta*) || <= this`.
pub const FEDERATION_RESIDUAL_TOL: f64 = 1e-8;

/// Residual the solvers drive to before handing a root back.
pub const SOLVER_RESIDUAL_TOL: f64 = 1e-10;

const DAMPED_MAX_ITERS: usize = 1_000_000;

/// Per-state matrices and offsets of a linear operator,
/// `F(theta; x) = -a[x] * theta - b[x]`.
#[derive(Debug, Clone)]
pub struct LinearParts {
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DVector<f64>>,
}

type EvalFn = Arc<dyn Fn(&DVector<f64>, usize) -> DVector<f64> + Send + Sync>;

#[derive(Clone)]
enum OpInner {
    Linear(LinearParts),
    Nonlinear(EvalFn),
}

/// Operator kind tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Linear,
    Nonlinear,
}

/// One agent's sampled operator over a finite state space.
///
/// Evaluation is deterministic in `(theta, x)`; instances are immutable and
/// shareable across threads.
#[derive(Clone)]
pub struct OperatorSpec {
    dim: usize,
    n_states: usize,
    inner: OpInner,
}

impl std::fmt::Debug for OperatorSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorSpec")
            .field("dim", &self.dim)
            .field("n_states", &self.n_states)
            .field("kind", &self.kind())
            .finish()
    }
}

impl OperatorSpec {
    /// Linear operator from per-state `A(x)` and `b(x)`.
    pub fn linear(a: Vec<DMatrix<f64>>, b: Vec<DVector<f64>>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len().max(1),
                got: b.len(),
            });
        }
        let dim = a[0].nrows();
        for m in &a {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: m.nrows().max(m.ncols()),
                });
            }
        }
        for v in &b {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
        }
        let n_states = a.len();
        Ok(OperatorSpec {
            dim,
            n_states,
            inner: OpInner::Linear(LinearParts { a, b }),
        })
    }

    /// Nonlinear operator from an evaluation closure.
    pub fn nonlinear(
        dim: usize,
        n_states: usize,
        eval: impl Fn(&DVector<f64>, usize) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        OperatorSpec {
            dim,
            n_states,
            inner: OpInner::Nonlinear(Arc::new(eval)),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn kind(&self) -> OperatorKind {
        match &self.inner {
            OpInner::Linear(_) => OperatorKind::Linear,
            OpInner::Nonlinear(_) => OperatorKind::Nonlinear,
        }
    }

    pub fn linear_parts(&self) -> Option<&LinearParts> {
        match &self.inner {
            OpInner::Linear(parts) => Some(parts),
            OpInner::Nonlinear(_) => None,
        }
    }

    /// `F(theta; x)`.
    pub fn eval(&self, theta: &DVector<f64>, x: usize) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.eval_into(theta, x, &mut out);
        out
    }

    /// Allocation-free evaluation used by the hot simulation loop.
    pub fn eval_into(&self, theta: &DVector<f64>, x: usize, out: &mut DVector<f64>) {
        debug_assert!(x < self.n_states);
        match &self.inner {
            OpInner::Linear(parts) => {
                out.gemv(-1.0, &parts.a[x], theta, 0.0);
                *out -= &parts.b[x];
            }
            OpInner::Nonlinear(f) => {
                *out = f(theta, x);
            }
        }
    }
}

/// `F_i(theta) = sum_x pi(x) F_i(theta; x)`, the exact mean field over the
/// finite state space.
pub fn mean_operator(
    op: &OperatorSpec,
    pi: &StationaryDistribution,
    theta: &DVector<f64>,
) -> Result<DVector<f64>> {
    if pi.len() != op.n_states() {
        return Err(Error::DimensionMismatch {
            expected: op.n_states(),
            got: pi.len(),
        });
    }
    if theta.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: theta.len(),
        });
    }
    let mut acc = DVector::zeros(op.dim());
    let mut scratch = DVector::zeros(op.dim());
    for (x, &w) in pi.as_slice().iter().enumerate() {
        op.eval_into(theta, x, &mut scratch);
        acc.axpy(w, &scratch, 1.0);
    }
    Ok(acc)
}

/// Stationary-weighted mean matrices `(A_mean, b_mean)` of a linear operator.
pub fn mean_matrices(
    op: &OperatorSpec,
    pi: &StationaryDistribution,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let parts = op
        .linear_parts()
        .ok_or_else(|| Error::InvalidParameter("mean matrices need a linear operator".into()))?;
    if pi.len() != op.n_states() {
        return Err(Error::DimensionMismatch {
            expected: op.n_states(),
            got: pi.len(),
        });
    }
    let mut a_mean = DMatrix::zeros(op.dim(), op.dim());
    let mut b_mean = DVector::zeros(op.dim());
    for (x, &w) in pi.as_slice().iter().enumerate() {
        a_mean += &parts.a[x] * w;
        b_mean.axpy(w, &parts.b[x], 1.0);
    }
    Ok((a_mean, b_mean))
}

/// Largest singular value.
pub(crate) fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0f64, |acc, &s| acc.max(s))
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub(crate) fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v))
}

/// Worst-case constants of a federation plus the root norm.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OperatorConstants {
    /// Lipschitz constant of the sampled operators (exact for linear).
    pub l: f64,
    /// Strong-monotonicity constant of the mean fields (exact for linear).
    pub mu: f64,
    /// `max_i max_x ||F_i(0; x)||`.
    pub b: f64,
    /// `||theta*||` of the federation the constants belong to.
    pub theta_star_norm: f64,
}

impl OperatorConstants {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu <= self.l) {
            return Err(Error::AssumptionFailed(format!(
                "need 0 < mu <= L, got mu = {}, L = {}",
                self.mu, self.l
            )));
        }
        if self.b < 0.0 || self.theta_star_norm < 0.0 {
            return Err(Error::AssumptionFailed(
                "B and ||theta*|| must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Result of a Lipschitz-constant certification.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LipschitzReport {
    /// Exact `max_x ||A(x)||_2` for linear operators; for nonlinear ones the
    /// max finite-difference ratio over probes (a lower bound, empirical).
    pub l_hat: f64,
    /// Spectral norm of the mean matrix (linear operators only).
    pub l_mean: Option<f64>,
    pub exact: bool,
    pub pass: bool,
}

/// Result of a strong-monotonicity certification.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// Exact `lambda_min(sym(-A_mean))` for linear operators; minimal probe
    /// ratio of the mean field otherwise.
    pub mu_hat: f64,
    pub exact: bool,
    pub pass: bool,
}

fn random_in_ball<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> DVector<f64> {
    let mut v = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
    let norm = v.norm();
    if norm > 0.0 {
        let r: f64 = rng.random::<f64>() * radius;
        v *= r / norm;
    }
    v
}

/// Certifies the Lipschitz constant of one operator.
pub fn verify_lipschitz<R: Rng + ?Sized>(
    op: &OperatorSpec,
    pi: &StationaryDistribution,
    probes: usize,
    rng: &mut R,
) -> Result<LipschitzReport> {
    if probes == 0 {
        return Err(Error::InvalidParameter("probes must be >= 1".into()));
    }
    match op.kind() {
        OperatorKind::Linear => {
            let parts = op.linear_parts().expect("linear");
            let l_hat = parts
                .a
                .iter()
                .map(spectral_norm)
                .fold(0.0f64, f64::max);
            let (a_mean, _) = mean_matrices(op, pi)?;
            Ok(LipschitzReport {
                l_hat,
                l_mean: Some(spectral_norm(&a_mean)),
                exact: true,
                pass: l_hat.is_finite(),
            })
        }
        OperatorKind::Nonlinear => {
            let mut l_hat: f64 = 0.0;
            for _ in 0..probes {
                let theta = random_in_ball(op.dim(), 10.0, rng);
                let omega = random_in_ball(op.dim(), 10.0, rng);
                let gap = (&theta - &omega).norm();
                if gap < 1e-12 {
                    continue;
                }
                let x = rng.random_range(0..op.n_states());
                let diff = (op.eval(&theta, x) - op.eval(&omega, x)).norm();
                l_hat = l_hat.max(diff / gap);
            }
            Ok(LipschitzReport {
                l_hat,
                l_mean: None,
                exact: false,
                pass: l_hat.is_finite() && l_hat > 0.0,
            })
        }
    }
}

/// Certifies strong monotonicity of one operator's mean field.
pub fn verify_strong_monotonicity<R: Rng + ?Sized>(
    op: &OperatorSpec,
    pi: &StationaryDistribution,
    probes: usize,
    rng: &mut R,
) -> Result<MonotonicityReport> {
    if probes == 0 {
        return Err(Error::InvalidParameter("probes must be >= 1".into()));
    }
    match op.kind() {
        OperatorKind::Linear => {
            let (a_mean, _) = mean_matrices(op, pi)?;
            let mu_hat = min_symmetric_eigenvalue(&(-a_mean));
            Ok(MonotonicityReport {
                mu_hat,
                exact: true,
                pass: mu_hat > 0.0,
            })
        }
        OperatorKind::Nonlinear => {
            let mut mu_hat = f64::INFINITY;
            for _ in 0..probes {
                let theta = random_in_ball(op.dim(), 10.0, rng);
                let omega = random_in_ball(op.dim(), 10.0, rng);
                let delta = &theta - &omega;
                let gap2 = delta.norm_squared();
                if gap2 < 1e-20 {
                    continue;
                }
                let f_theta = mean_operator(op, pi, &theta)?;
                let f_omega = mean_operator(op, pi, &omega)?;
                mu_hat = mu_hat.min((f_theta - f_omega).dot(&delta) / gap2);
            }
            Ok(MonotonicityReport {
                mu_hat,
                exact: false,
                pass: mu_hat.is_finite() && mu_hat > 0.0,
            })
        }
    }
}

/// Options for the empirical certification of nonlinear operators.
#[derive(Debug, Clone, Copy)]
pub struct ProbeOptions {
    pub probes: usize,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            probes: 1000,
            seed: 0x1005A,
        }
    }
}

/// The full problem instance: N agents' operators, their chains, worst-case
/// constants, and the common root.
///
/// Immutable after construction; `|| sum_i F_i(theta*) ||` is certified to
/// stay below [`FEDERATION_RESIDUAL_TOL`].
#[derive(Debug, Clone)]
pub struct Federation {
    ops: Vec<OperatorSpec>,
    chains: Vec<MarkovChain>,
    pis: Vec<StationaryDistribution>,
    constants: OperatorConstants,
    theta_star: DVector<f64>,
}

impl Federation {
    /// Assembles a federation: stationary distributions, validated constants,
    /// and the root. Fails if any agent's mean field is not strongly monotone.
    pub fn new(ops: Vec<OperatorSpec>, chains: Vec<MarkovChain>, probe: ProbeOptions) -> Result<Self> {
        if ops.is_empty() || ops.len() != chains.len() {
            return Err(Error::DimensionMismatch {
                expected: ops.len().max(1),
                got: chains.len(),
            });
        }
        let dim = ops[0].dim();
        for op in &ops {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: op.dim(),
                });
            }
        }
        for (op, chain) in ops.iter().zip(&chains) {
            if op.n_states() != chain.n_states() {
                return Err(Error::DimensionMismatch {
                    expected: op.n_states(),
                    got: chain.n_states(),
                });
            }
        }
        let pis: Vec<StationaryDistribution> = chains
            .iter()
            .map(|c| c.stationary_distribution())
            .collect::<Result<_>>()?;

        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
        let mut l = 0.0f64;
        let mut mu = f64::INFINITY;
        for (i, (op, pi)) in ops.iter().zip(&pis).enumerate() {
            let lip = verify_lipschitz(op, pi, probe.probes, &mut rng)?;
            let mono = verify_strong_monotonicity(op, pi, probe.probes, &mut rng)?;
            if !mono.pass {
                return Err(Error::AssumptionFailed(format!(
                    "agent {i} mean field is not strongly monotone (mu_hat = {})",
                    mono.mu_hat
                )));
            }
            l = l.max(lip.l_hat);
            mu = mu.min(mono.mu_hat);
        }
        // Probed Lipschitz values are lower bounds; keep mu <= L coherent.
        l = l.max(mu);
        let b = ops
            .iter()
            .map(max_zero_eval_norm)
            .fold(0.0f64, f64::max);

        let mut constants = OperatorConstants {
            l,
            mu,
            b,
            theta_star_norm: 0.0,
        };
        let theta_star = solve_root_parts(&ops, &pis, &constants)?;
        constants.theta_star_norm = theta_star.norm();
        constants.validate()?;

        let fed = Federation {
            ops,
            chains,
            pis,
            constants,
            theta_star,
        };
        let residual = fed.sum_mean_field(&fed.theta_star)?.norm();
        if residual > FEDERATION_RESIDUAL_TOL {
            return Err(Error::AssumptionFailed(format!(
                "root residual {residual:.3e} exceeds {FEDERATION_RESIDUAL_TOL:.0e}"
            )));
        }
        Ok(fed)
    }

    pub fn n_agents(&self) -> usize {
        self.ops.len()
    }

    pub fn dim(&self) -> usize {
        self.ops[0].dim()
    }

    pub fn ops(&self) -> &[OperatorSpec] {
        &self.ops
    }

    pub fn chains(&self) -> &[MarkovChain] {
        &self.chains
    }

    pub fn stationary_distributions(&self) -> &[StationaryDistribution] {
        &self.pis
    }

    pub fn constants(&self) -> &OperatorConstants {
        &self.constants
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    /// `sum_i F_i(theta)` over mean fields.
    pub fn sum_mean_field(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let mut acc = DVector::zeros(self.dim());
        for (op, pi) in self.ops.iter().zip(&self.pis) {
            acc += mean_operator(op, pi, theta)?;
        }
        Ok(acc)
    }
}

/// `max_x ||F(0; x)||` for one operator.
fn max_zero_eval_norm(op: &OperatorSpec) -> f64 {
    let zero = DVector::zeros(op.dim());
    (0..op.n_states())
        .map(|x| op.eval(&zero, x).norm())
        .fold(0.0, f64::max)
}

/// Exact `B = max_i max_x ||F_i(0; x)||` over the federation.
pub fn estimate_b(fed: &Federation) -> f64 {
    fed.ops().iter().map(max_zero_eval_norm).fold(0.0, f64::max)
}

/// Solves `sum_i F_i(theta*) = 0`, re-verifying the residual.
///
/// Linear federations use a direct solve; any nonlinear agent switches to a
/// damped mean-field iteration with step `mu / L^2`.
pub fn solve_root(fed: &Federation) -> Result<DVector<f64>> {
    solve_root_parts(&fed.ops, &fed.pis, &fed.constants)
}

/// Forces the damped mean-field iteration even for linear federations.
/// Cross-checks the direct solve in tests and backs the nonlinear path.
pub fn solve_root_damped(fed: &Federation) -> Result<DVector<f64>> {
    damped_root(&fed.ops, &fed.pis, &fed.constants)
}

fn solve_root_parts(
    ops: &[OperatorSpec],
    pis: &[StationaryDistribution],
    constants: &OperatorConstants,
) -> Result<DVector<f64>> {
    let dim = ops[0].dim();
    let all_linear = ops.iter().all(|op| op.kind() == OperatorKind::Linear);
    let theta = if all_linear {
        // sum_i (A_mean_i theta + b_mean_i) = 0
        let mut a_tot = DMatrix::<f64>::zeros(dim, dim);
        let mut b_tot = DVector::<f64>::zeros(dim);
        for (op, pi) in ops.iter().zip(pis) {
            let (a_mean, b_mean) = mean_matrices(op, pi)?;
            a_tot += a_mean;
            b_tot += b_mean;
        }
        a_tot.lu().solve(&(-b_tot)).ok_or(Error::SingularSystem)?
    } else {
        damped_root(ops, pis, constants)?
    };

    let mut g = DVector::<f64>::zeros(dim);
    for (op, pi) in ops.iter().zip(pis) {
        g += mean_operator(op, pi, &theta)?;
    }
    if g.norm() > FEDERATION_RESIDUAL_TOL {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual: g.norm(),
        });
    }
    Ok(theta)
}

/// Damped mean-field iteration `theta <- theta - (eta / N) sum_i F_i(theta)`
/// with the contraction step `eta = mu / L^2`, convergent for strongly
/// monotone Lipschitz mean fields.
fn damped_root(
    ops: &[OperatorSpec],
    pis: &[StationaryDistribution],
    constants: &OperatorConstants,
) -> Result<DVector<f64>> {
    let dim = ops[0].dim();
    let eta = constants.mu / (constants.l * constants.l);
    let n = ops.len() as f64;
    let mut theta = DVector::<f64>::zeros(dim);
    let mut residual = f64::INFINITY;
    for _ in 0..DAMPED_MAX_ITERS {
        let mut g = DVector::<f64>::zeros(dim);
        for (op, pi) in ops.iter().zip(pis) {
            g += mean_operator(op, pi, &theta)?;
        }
        residual = g.norm();
        if residual <= SOLVER_RESIDUAL_TOL {
            return Ok(theta);
        }
        theta.axpy(-eta / n, &g, 1.0);
    }
    Err(Error::NoConvergence {
        iterations: DAMPED_MAX_ITERS,
        residual,
    })
}

// ---------------------------------------------------------------------------
// JSON serialization of linear federations
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct LinearAgentJson {
    /// Row-major per-state matrices `A(x)`.
    a: Vec<Vec<Vec<f64>>>,
    b: Vec<Vec<f64>>,
    /// Plain-text transition matrix of the agent's chain.
    chain: String,
}

#[derive(Serialize, Deserialize)]
pub struct LinearFederationJson {
    agents: Vec<LinearAgentJson>,
}

/// Serializes a linear federation (per agent, per state: `A(x)`, `b(x)`,
/// and the chain). Errs on nonlinear agents.
pub fn linear_federation_to_json(fed: &Federation) -> Result<String> {
    let mut agents = Vec::with_capacity(fed.n_agents());
    for (op, chain) in fed.ops().iter().zip(fed.chains()) {
        let parts = op.linear_parts().ok_or_else(|| {
            Error::InvalidParameter("only linear federations serialize to JSON".into())
        })?;
        agents.push(LinearAgentJson {
            a: parts
                .a
                .iter()
                .map(|m| {
                    (0..m.nrows())
                        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
                        .collect()
                })
                .collect(),
            b: parts.b.iter().map(|v| v.as_slice().to_vec()).collect(),
            chain: chain.to_matrix_text(),
        });
    }
    Ok(serde_json::to_string_pretty(&LinearFederationJson { agents })?)
}

/// Rebuilds a linear federation from its JSON form.
pub fn linear_federation_from_json(json: &str, probe: ProbeOptions) -> Result<Federation> {
    let parsed: LinearFederationJson = serde_json::from_str(json)?;
    let mut ops = Vec::with_capacity(parsed.agents.len());
    let mut chains = Vec::with_capacity(parsed.agents.len());
    for agent in parsed.agents {
        let a: Vec<DMatrix<f64>> = agent
            .a
            .iter()
            .map(|rows| {
                let nr = rows.len();
                let nc = rows.first().map_or(0, Vec::len);
                DMatrix::from_fn(nr, nc, |r, c| rows[r][c])
            })
            .collect();
        let b: Vec<DVector<f64>> = agent
            .b
            .iter()
            .map(|v| DVector::from_column_slice(v))
            .collect();
        ops.push(OperatorSpec::linear(a, b)?);
        chains.push(MarkovChain::from_matrix_text(&agent.chain)?);
    }
    Federation::new(ops, chains, probe)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::random_ergodic_chain;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn point_mass(n: usize, at: usize) -> StationaryDistribution {
        let mut probs = DVector::zeros(n);
        probs[at] = 1.0;
        StationaryDistribution::from_probs(probs).unwrap()
    }

    fn single_state_chain() -> MarkovChain {
        MarkovChain::from_rows(&[vec![1.0]]).unwrap()
    }

    fn uniform_pi(n: usize) -> StationaryDistribution {
        let rows = vec![vec![1.0 / n as f64; n]; n];
        MarkovChain::from_rows(&rows)
            .unwrap()
            .stationary_distribution()
            .unwrap()
    }

    #[test]
    fn mean_operator_state_independent() {
        let op = OperatorSpec::nonlinear(2, 3, |theta, _| theta.clone());
        let pi = uniform_pi(3);
        let theta = DVector::from_vec(vec![1.5, -2.0]);
        let mean = mean_operator(&op, &pi, &theta).unwrap();
        assert_relative_eq!((mean - theta).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn mean_operator_two_state_linear() {
        // A(0) = [[1]], A(1) = [[3]], b = 0, pi uniform, theta = 1
        // -> -(0.5*1 + 0.5*3) * 1 = -2, hand-summable.
        let op = OperatorSpec::linear(
            vec![
                DMatrix::from_row_slice(1, 1, &[1.0]),
                DMatrix::from_row_slice(1, 1, &[3.0]),
            ],
            vec![DVector::zeros(1), DVector::zeros(1)],
        )
        .unwrap();
        let pi = uniform_pi(2);
        let theta = DVector::from_vec(vec![1.0]);
        let mean = mean_operator(&op, &pi, &theta).unwrap();
        assert_relative_eq!(mean[0], -2.0, epsilon = 1e-14);
    }

    #[test]
    fn mean_operator_point_mass() {
        let op = OperatorSpec::nonlinear(1, 3, |theta, x| {
            DVector::from_vec(vec![theta[0] * (x as f64 + 1.0)])
        });
        let pi = point_mass(3, 2);
        let theta = DVector::from_vec(vec![2.0]);
        let mean = mean_operator(&op, &pi, &theta).unwrap();
        assert_relative_eq!(mean[0], op.eval(&theta, 2)[0], epsilon = 1e-14);
    }

    #[test]
    fn mean_operator_independent_accumulation_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let chain = random_ergodic_chain(6, 0.05, &mut rng).unwrap();
        let pi = chain.stationary_distribution().unwrap();
        let a: Vec<DMatrix<f64>> = (0..6)
            .map(|_| DMatrix::from_fn(3, 3, |_, _| rng.random::<f64>() - 0.5))
            .collect();
        let b: Vec<DVector<f64>> = (0..6)
            .map(|_| DVector::from_fn(3, |_, _| rng.random::<f64>() - 0.5))
            .collect();
        let op = OperatorSpec::linear(a, b).unwrap();
        let theta = DVector::from_fn(3, |_, _| rng.random::<f64>());
        let mean = mean_operator(&op, &pi, &theta).unwrap();
        // Reverse-order accumulation as the independent route.
        let mut acc = DVector::zeros(3);
        for x in (0..6).rev() {
            acc += op.eval(&theta, x) * pi.as_slice()[x];
        }
        assert!((mean - acc).norm() <= 1e-12);
    }

    #[test]
    fn estimate_b_examples() {
        // All-zero offsets: B = 0.
        let op = OperatorSpec::linear(
            vec![-DMatrix::identity(2, 2), -DMatrix::identity(2, 2)],
            vec![DVector::zeros(2), DVector::zeros(2)],
        )
        .unwrap();
        let chain = MarkovChain::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let fed = Federation::new(vec![op], vec![chain], ProbeOptions::default()).unwrap();
        assert_eq!(estimate_b(&fed), 0.0);

        // b(0) = (3,4), b(1) = (0,1): B = 5.
        let op = OperatorSpec::linear(
            vec![-DMatrix::identity(2, 2), -DMatrix::identity(2, 2)],
            vec![
                DVector::from_vec(vec![3.0, 4.0]),
                DVector::from_vec(vec![0.0, 1.0]),
            ],
        )
        .unwrap();
        let chain = MarkovChain::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let fed = Federation::new(vec![op], vec![chain], ProbeOptions::default()).unwrap();
        assert_relative_eq!(estimate_b(&fed), 5.0, epsilon = 1e-14);
    }

    #[test]
    fn lipschitz_linear_exact() {
        let pi = uniform_pi(1);
        let op = OperatorSpec::linear(
            vec![DMatrix::from_diagonal_element(2, 2, 2.0)],
            vec![DVector::zeros(2)],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rep = verify_lipschitz(&op, &pi, 10, &mut rng).unwrap();
        assert!(rep.exact && rep.pass);
        assert_relative_eq!(rep.l_hat, 2.0, epsilon = 1e-12);

        let op = OperatorSpec::linear(
            vec![DMatrix::from_partial_diagonal(2, 2, &[1.0, 3.0])],
            vec![DVector::zeros(2)],
        )
        .unwrap();
        let rep = verify_lipschitz(&op, &pi, 10, &mut rng).unwrap();
        assert_relative_eq!(rep.l_hat, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn monotonicity_linear_cases() {
        let pi = uniform_pi(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // -A_mean = I
        let op = OperatorSpec::linear(vec![-DMatrix::identity(2, 2)], vec![DVector::zeros(2)])
            .unwrap();
        let rep = verify_strong_monotonicity(&op, &pi, 10, &mut rng).unwrap();
        assert!(rep.pass);
        assert_relative_eq!(rep.mu_hat, 1.0, epsilon = 1e-12);

        // -A_mean = diag(0.5, 2)
        let op = OperatorSpec::linear(
            vec![-DMatrix::from_partial_diagonal(2, 2, &[0.5, 2.0])],
            vec![DVector::zeros(2)],
        )
        .unwrap();
        let rep = verify_strong_monotonicity(&op, &pi, 10, &mut rng).unwrap();
        assert_relative_eq!(rep.mu_hat, 0.5, epsilon = 1e-12);

        // Eigenvalues {-0.1, 1}: must fail.
        let op = OperatorSpec::linear(
            vec![-DMatrix::from_partial_diagonal(2, 2, &[-0.1, 1.0])],
            vec![DVector::zeros(2)],
        )
        .unwrap();
        let rep = verify_strong_monotonicity(&op, &pi, 10, &mut rng).unwrap();
        assert!(!rep.pass);
    }

    /// `F_i(theta) = theta - b_i` as a linear spec: A = -I, b = b_i.
    fn shift_op(b: Vec<f64>) -> OperatorSpec {
        let d = b.len();
        OperatorSpec::linear(vec![-DMatrix::identity(d, d)], vec![DVector::from_vec(b)]).unwrap()
    }

    #[test]
    fn solve_root_two_shift_agents() {
        let ops = vec![shift_op(vec![1.0, 0.0]), shift_op(vec![0.0, 1.0])];
        let chains = vec![single_state_chain(), single_state_chain()];
        let fed = Federation::new(ops, chains, ProbeOptions::default()).unwrap();
        assert_relative_eq!(fed.theta_star()[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(fed.theta_star()[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn solve_root_matches_independent_elimination() {
        // Random 3-agent linear federation vs a hand-rolled Gaussian
        // elimination oracle.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = 3;
        let mut ops = Vec::new();
        let mut chains = Vec::new();
        for _ in 0..3 {
            let chain = random_ergodic_chain(4, 0.05, &mut rng).unwrap();
            let mut a = Vec::new();
            let mut b = Vec::new();
            for _ in 0..4 {
                // Diagonally dominant negative A(x) keeps -A_mean monotone.
                let mut m = DMatrix::from_fn(d, d, |_, _| 0.1 * (rng.random::<f64>() - 0.5));
                for i in 0..d {
                    m[(i, i)] -= 1.0;
                }
                a.push(m);
                b.push(DVector::from_fn(d, |_, _| rng.random::<f64>() - 0.5));
            }
            ops.push(OperatorSpec::linear(a, b).unwrap());
            chains.push(chain);
        }
        let fed = Federation::new(ops, chains, ProbeOptions::default()).unwrap();

        // Oracle: accumulate sum A_mean and sum b_mean, then eliminate.
        let mut a_tot = vec![vec![0.0f64; d]; d];
        let mut b_tot = vec![0.0f64; d];
        for (op, pi) in fed.ops().iter().zip(fed.stationary_distributions()) {
            let parts = op.linear_parts().unwrap();
            for (x, &w) in pi.as_slice().iter().enumerate() {
                for r in 0..d {
                    for c in 0..d {
                        a_tot[r][c] += w * parts.a[x][(r, c)];
                    }
                    b_tot[r] -= w * parts.b[x][r];
                }
            }
        }
        // Solve a_tot * theta = b_tot by Gaussian elimination with pivoting.
        let mut m = a_tot.clone();
        let mut rhs = b_tot.clone();
        for col in 0..d {
            let piv = (col..d)
                .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
                .unwrap();
            m.swap(col, piv);
            rhs.swap(col, piv);
            for row in col + 1..d {
                let f = m[row][col] / m[col][col];
                for c2 in col..d {
                    m[row][c2] -= f * m[col][c2];
                }
                rhs[row] -= f * rhs[col];
            }
        }
        let mut theta = vec![0.0f64; d];
        for row in (0..d).rev() {
            let mut acc = rhs[row];
            for c2 in row + 1..d {
                acc -= m[row][c2] * theta[c2];
            }
            theta[row] = acc / m[row][row];
        }

        for i in 0..d {
            assert!((fed.theta_star()[i] - theta[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn growth_bound_probes() {
        // Federation arranged so that B >= L; the sампled growth bound
        // || F(theta; x) || <= B (||theta|| + 1) then holds everywhere.
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let d = 3;
        let mut ops = Vec::new();
        let mut chains = Vec::new();
        for _ in 0..3 {
            let chain = random_ergodic_chain(3, 0.05, &mut rng).unwrap();
            let mut a = Vec::new();
            let mut b = Vec::new();
            for _ in 0..3 {
                let mut m = DMatrix::from_fn(d, d, |_, _| 0.05 * (rng.random::<f64>() - 0.5));
                for i in 0..d {
                    m[(i, i)] -= 0.5;
                }
                a.push(m);
                let mut off = DVector::from_fn(d, |_, _| rng.random::<f64>() - 0.5);
                off *= 2.0 / off.norm();
                b.push(off);
            }
            ops.push(OperatorSpec::linear(a, b).unwrap());
            chains.push(chain);
        }
        let fed = Federation::new(ops, chains, ProbeOptions::default()).unwrap();
        let b_const = estimate_b(&fed);
        assert!(b_const >= fed.constants().l, "construction should give B >= L");

        let mut violations = 0;
        for _ in 0..1000 {
            let i = rng.random_range(0..fed.n_agents());
            let x = rng.random_range(0..fed.ops()[i].n_states());
            let theta = random_in_ball(d, 10.0, &mut rng);
            let sample = fed.ops()[i].eval(&theta, x).norm();
            let mean = mean_operator(&fed.ops()[i], &fed.stationary_distributions()[i], &theta)
                .unwrap()
                .norm();
            let cap = b_const * (theta.norm() + 1.0);
            if sample > cap + 1e-12 || mean > cap + 1e-12 {
                violations += 1;
            }
        }
        assert_eq!(violations, 0);
    }

    #[test]
    fn federation_constants_mu_le_l() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let chain = random_ergodic_chain(4, 0.05, &mut rng).unwrap();
        let a: Vec<DMatrix<f64>> = (0..4).map(|_| -DMatrix::identity(2, 2)).collect();
        let b: Vec<DVector<f64>> = (0..4)
            .map(|_| DVector::from_fn(2, |_, _| rng.random::<f64>()))
            .collect();
        let fed = Federation::new(
            vec![OperatorSpec::linear(a, b).unwrap()],
            vec![chain],
            ProbeOptions::default(),
        )
        .unwrap();
        assert!(fed.constants().mu <= fed.constants().l);
        assert!(fed.constants().mu > 0.0);
    }

    #[test]
    fn linear_federation_json_round_trip() {
        let ops = vec![shift_op(vec![1.0, 0.0]), shift_op(vec![0.0, 1.0])];
        let chains = vec![single_state_chain(), single_state_chain()];
        let fed = Federation::new(ops, chains, ProbeOptions::default()).unwrap();
        let json = linear_federation_to_json(&fed).unwrap();
        let back = linear_federation_from_json(&json, ProbeOptions::default()).unwrap();
        assert_eq!(back.n_agents(), 2);
        assert!((back.theta_star() - fed.theta_star()).norm() <= 1e-12);
    }
}
