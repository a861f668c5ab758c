//! Distributed TD(0) policy evaluation with linear function approximation.
//!
//! Per observation triple `X = (s, a, s')` the linear statistics are
//! `A(X) = phi(s) (gamma phi(s') - phi(s))^T` and `b(X) = R(s, a) phi(s)`.
//! The operator handed to the engine is `F(theta; X) = -A(X) theta - b(X)`,
//! so the engine's subtract-update reproduces the textbook plus-form
//! TD(0) recursion step for step.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::markov::MarkovChain;
use crate::operators::{
    mean_matrices, Federation, OperatorSpec, ProbeOptions,
};

use super::features::FeatureMap;
use super::mdp::{induced_chain, Mdp, Policy};

/// Builds the TD(0) operator and its observation chain for one agent.
pub fn td0_operator(
    mdp: &Mdp,
    policy: &Policy,
    features: &FeatureMap,
) -> Result<(OperatorSpec, MarkovChain)> {
    if features.n_rows() != mdp.n_states() {
        return Err(Error::DimensionMismatch {
            expected: mdp.n_states(),
            got: features.n_rows(),
        });
    }
    features.validate()?;
    let tc = induced_chain(mdp, policy)?;
    let dim = features.n_features();
    let mut a = Vec::with_capacity(tc.triples.len());
    let mut b = Vec::with_capacity(tc.triples.len());
    for &(s, act, s2) in &tc.triples {
        let phi_s = features.row(s);
        let phi_s2 = features.row(s2);
        let diff = &phi_s2 * mdp.gamma - &phi_s;
        let mut m = DMatrix::<f64>::zeros(dim, dim);
        // Rank-one outer product phi(s) diff^T.
        m.ger(1.0, &phi_s, &diff, 0.0);
        a.push(m);
        b.push(phi_s * mdp.reward[s][act]);
    }
    Ok((OperatorSpec::linear(a, b)?, tc.chain))
}

/// Assembles a TD federation: one `(mdp, policy, features)` triple per agent.
pub fn td_federation(
    envs: &[(Mdp, Policy, FeatureMap)],
    probe: ProbeOptions,
) -> Result<Federation> {
    let mut ops = Vec::with_capacity(envs.len());
    let mut chains = Vec::with_capacity(envs.len());
    for (mdp, policy, features) in envs {
        let (op, chain) = td0_operator(mdp, policy, features)?;
        ops.push(op);
        chains.push(chain);
    }
    Federation::new(ops, chains, probe)
}

/// Direct solve of `sum_i (A_mean_i theta + b_mean_i) = 0` from the
/// stationary-weighted mean statistics, with the residual re-checked.
pub fn td_fixed_point(fed: &Federation) -> Result<DVector<f64>> {
    let dim = fed.dim();
    let mut a_tot = DMatrix::<f64>::zeros(dim, dim);
    let mut b_tot = DVector::<f64>::zeros(dim);
    for (op, pi) in fed.ops().iter().zip(fed.stationary_distributions()) {
        let (a_mean, b_mean) = mean_matrices(op, pi)?;
        a_tot += a_mean;
        b_tot += b_mean;
    }
    let theta = a_tot.clone().lu().solve(&(-&b_tot)).ok_or(Error::SingularSystem)?;
    let residual = (a_tot * &theta + b_tot).norm();
    if residual > 1e-10 {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual,
        });
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps::mdp::make_random_mdp;
    use crate::operators::{solve_root_damped, verify_strong_monotonicity};
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    fn single_state_td() -> (Mdp, Policy, FeatureMap) {
        let mdp = Mdp {
            transition: vec![vec![vec![1.0]]],
            reward: vec![vec![1.0]],
            gamma: 0.5,
            r_max: 1.0,
        };
        (mdp, Policy::uniform(1, 1), FeatureMap::tabular(1))
    }

    #[test]
    fn single_state_statistics_and_root() {
        // phi = 1, R = 1, gamma = 0.5: A = -0.5, b = 1, root theta* = 2.
        let (mdp, policy, features) = single_state_td();
        let (op, chain) = td0_operator(&mdp, &policy, &features).unwrap();
        let parts = op.linear_parts().unwrap();
        assert_relative_eq!(parts.a[0][(0, 0)], -0.5);
        assert_relative_eq!(parts.b[0][0], 1.0);
        let fed = Federation::new(vec![op], vec![chain], ProbeOptions::default()).unwrap();
        assert_relative_eq!(td_fixed_point(&fed).unwrap()[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(fed.theta_star()[0], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn zero_parameter_evaluation_is_negated_reward_feature() {
        let mdp = make_random_mdp(4, 2, 0.9, 1.0, 0.3, 2).unwrap();
        let policy = Policy::uniform(4, 2);
        let features = FeatureMap::random_orthonormal(4, 2, &[], 3).unwrap();
        let (op, chain) = td0_operator(&mdp, &policy, &features).unwrap();
        let _ = chain;
        let tc = induced_chain(&mdp, &policy).unwrap();
        let zero = DVector::zeros(2);
        for (idx, &(s, a, _)) in tc.triples.iter().enumerate() {
            let expected = features.row(s) * (-mdp.reward[s][a]);
            assert!((op.eval(&zero, idx) - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn identical_agents_share_the_single_agent_root() {
        let (mdp, policy, features) = single_state_td();
        let envs = vec![
            (mdp.clone(), policy.clone(), features.clone()),
            (mdp, policy, features),
        ];
        let fed = td_federation(&envs, ProbeOptions::default()).unwrap();
        assert_relative_eq!(td_fixed_point(&fed).unwrap()[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn mean_matrix_negative_definite_on_generated_instances() {
        // The negated mean statistics must be strongly monotone for every
        // generated instance (spot-checked over 20 seeds).
        let mut ok = 0;
        for seed in 0..20 {
            let mdp = make_random_mdp(5, 2, 0.9, 1.0, 0.1, seed).unwrap();
            let policy = Policy::uniform(5, 2);
            let features = FeatureMap::random_orthonormal(5, 3, &[], seed + 100).unwrap();
            let (op, chain) = td0_operator(&mdp, &policy, &features).unwrap();
            let pi = chain.stationary_distribution().unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
            let rep = verify_strong_monotonicity(&op, &pi, 4, &mut rng).unwrap();
            assert!(rep.exact);
            assert!(rep.pass, "seed {seed}: mu_hat = {}", rep.mu_hat);
            ok += 1;
        }
        assert_eq!(ok, 20);
    }

    #[test]
    fn direct_solve_matches_damped_iteration() {
        let mut envs = Vec::new();
        for seed in 0..3 {
            let mdp = make_random_mdp(4, 2, 0.85, 1.0, 0.2, seed).unwrap();
            let policy = Policy::uniform(4, 2);
            let features = FeatureMap::random_orthonormal(4, 2, &[], seed + 50).unwrap();
            envs.push((mdp, policy, features));
        }
        let fed = td_federation(&envs, ProbeOptions::default()).unwrap();
        let direct = td_fixed_point(&fed).unwrap();
        let damped = solve_root_damped(&fed).unwrap();
        assert!((direct - damped).norm() <= 1e-8);
    }

    #[test]
    fn engine_reproduces_textbook_recursion() {
        // One agent, H = 1: the engine run must equal the independently
        // coded plus-form TD(0) recursion, iterate for iterate.
        use crate::engine::{run_local_sa, AlgorithmConfig, SampleIndexing};
        use crate::schedule::StepSchedule;

        let mdp = make_random_mdp(4, 2, 0.9, 1.0, 0.3, 6).unwrap();
        let policy = Policy::uniform(4, 2);
        let features = FeatureMap::random_orthonormal(4, 2, &[], 8).unwrap();
        let (op, chain) = td0_operator(&mdp, &policy, &features).unwrap();
        let tc = induced_chain(&mdp, &policy).unwrap();
        let fed = Federation::new(vec![op], vec![chain], ProbeOptions::default()).unwrap();

        let alpha = 0.05;
        let mut cfg = AlgorithmConfig::new(1, 1, 2, StepSchedule::Constant { alpha }, 30);
        cfg.record_locals = true;
        cfg.sample_indexing = SampleIndexing::Fresh;
        let traj = run_local_sa(&fed, &cfg, 19).unwrap();
        let samples = traj.samples.as_ref().unwrap();

        // The recursion below evaluates the same update in its scalar
        // (td-error) arrangement, so agreement is up to round-off of the
        // differing accumulation orders.
        let mut theta = DVector::<f64>::zeros(2);
        for k in 0..30 {
            let gap = (traj.bar_theta[k].clone() - &theta).norm();
            assert!(gap <= 1e-12 * (1.0 + theta.norm()), "round {k}: gap {gap}");
            let x = samples[k][0][0];
            let (s, a, s2) = tc.triples[x];
            let phi_s = features.row(s);
            let phi_s2 = features.row(s2);
            let td_error =
                mdp.reward[s][a] + mdp.gamma * phi_s2.dot(&theta) - phi_s.dot(&theta);
            theta += phi_s * (alpha * td_error);
        }
    }
}
