//! Distributed Q-learning with linear function approximation — the
//! nonlinear instance.
//!
//! Per observation triple `X = (s, a, s')` the natural mapping is
//! `phi(s, a) [ R(s, a) + gamma max_a' phi(s', a')^T theta
//!              - phi(s, a)^T theta ]`.
//! The operator handed to the engine is its negation, so the engine's
//! subtract-update reproduces the plus-form Q-learning recursion. Ties in
//! the max are broken toward the lowest action index so replays are
//! deterministic.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::markov::MarkovChain;
use crate::operators::{solve_root, Federation, OperatorSpec, ProbeOptions};

use super::features::FeatureMap;
use super::mdp::{induced_chain, Mdp, Policy};

/// Builds the Q-learning operator (negated mapping) and its observation
/// chain for one agent. `features` is indexed by state-action pairs, row
/// `s * n_actions + a`; the behavior policy must sample every action.
pub fn q_learning_operator(
    mdp: &Mdp,
    behavior: &Policy,
    features: &FeatureMap,
) -> Result<(OperatorSpec, MarkovChain)> {
    let s_count = mdp.n_states();
    let a_count = mdp.n_actions();
    if features.n_rows() != s_count * a_count {
        return Err(Error::DimensionMismatch {
            expected: s_count * a_count,
            got: features.n_rows(),
        });
    }
    features.validate()?;
    if !behavior.is_strictly_positive() {
        return Err(Error::AssumptionFailed(
            "behavior policy must sample every action with positive probability".into(),
        ));
    }
    let tc = induced_chain(mdp, behavior)?;
    let dim = features.n_features();

    let rows: Vec<DVector<f64>> = (0..s_count * a_count).map(|r| features.row(r)).collect();
    let rewards: Vec<Vec<f64>> = mdp.reward.clone();
    let gamma = mdp.gamma;
    let triples = tc.triples.clone();

    let eval = move |theta: &DVector<f64>, x: usize| -> DVector<f64> {
        let (s, a, s2) = triples[x];
        let row_sa = &rows[s * a_count + a];
        // Greedy value at the next state; strict comparison keeps the
        // lowest-index action on ties.
        let mut best = f64::NEG_INFINITY;
        for a2 in 0..a_count {
            let v = rows[s2 * a_count + a2].dot(theta);
            if v > best {
                best = v;
            }
        }
        let residual = rewards[s][a] + gamma * best - row_sa.dot(theta);
        row_sa * (-residual)
    };

    Ok((
        OperatorSpec::nonlinear(dim, tc.triples.len(), eval),
        tc.chain,
    ))
}

/// Assembles a Q-learning federation. Construction runs the empirical
/// monotonicity gate; instances that fail it are rejected.
pub fn q_federation(
    envs: &[(Mdp, Policy, FeatureMap)],
    probe: ProbeOptions,
) -> Result<Federation> {
    let mut ops = Vec::with_capacity(envs.len());
    let mut chains = Vec::with_capacity(envs.len());
    for (mdp, behavior, features) in envs {
        let (op, chain) = q_learning_operator(mdp, behavior, features)?;
        ops.push(op);
        chains.push(chain);
    }
    Federation::new(ops, chains, probe)
}

/// Root via the damped mean-field iteration, gated on the monotonicity
/// check that federation construction already enforced. The residual
/// `|| sum_i F_i(theta*) ||` is re-verified.
pub fn q_fixed_point_oracle(fed: &Federation) -> Result<DVector<f64>> {
    if fed.constants().mu <= 0.0 {
        return Err(Error::AssumptionFailed(
            "Q-learning fixed point needs a positive empirical monotonicity constant".into(),
        ));
    }
    solve_root(fed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// S = 1, A = 2 tabular example: R = (1, 0), gamma = 0.5.
    fn analytic_instance() -> (Mdp, Policy, FeatureMap) {
        let mdp = Mdp {
            transition: vec![vec![vec![1.0]], vec![vec![1.0]]],
            reward: vec![vec![1.0, 0.0]],
            gamma: 0.5,
            r_max: 1.0,
        };
        (mdp, Policy::uniform(1, 2), FeatureMap::tabular(2))
    }

    /// Plain Q-value iteration, the independent oracle for tabular cases.
    fn value_iteration(mdp: &Mdp) -> Vec<f64> {
        let s_count = mdp.n_states();
        let a_count = mdp.n_actions();
        let mut q = vec![0.0f64; s_count * a_count];
        for _ in 0..100_000 {
            let mut next = q.clone();
            let mut shift = 0.0f64;
            for s in 0..s_count {
                for a in 0..a_count {
                    let mut v = mdp.reward[s][a];
                    for s2 in 0..s_count {
                        let best = (0..a_count)
                            .map(|a2| q[s2 * a_count + a2])
                            .fold(f64::NEG_INFINITY, f64::max);
                        v += mdp.gamma * mdp.prob(s, a, s2) * best;
                    }
                    shift = shift.max((v - q[s * a_count + a]).abs());
                    next[s * a_count + a] = v;
                }
            }
            q = next;
            if shift < 1e-13 {
                break;
            }
        }
        q
    }

    #[test]
    fn analytic_fixed_point_is_two_one() {
        let (mdp, behavior, features) = analytic_instance();
        let fed = q_federation(
            &[(mdp.clone(), behavior, features)],
            ProbeOptions::default(),
        )
        .unwrap();
        let root = q_fixed_point_oracle(&fed).unwrap();
        assert_relative_eq!(root[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(root[1], 1.0, epsilon = 1e-9);
        // Matches value iteration.
        let vi = value_iteration(&mdp);
        assert_relative_eq!(vi[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(vi[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_parameter_evaluation() {
        let (mdp, behavior, features) = analytic_instance();
        let (op, _) = q_learning_operator(&mdp, &behavior, &features).unwrap();
        let tc = induced_chain(&mdp, &behavior).unwrap();
        let zero = DVector::zeros(2);
        for (idx, &(s, a, _)) in tc.triples.iter().enumerate() {
            // Negated mapping at theta = 0: -phi(s, a) R(s, a).
            let expected = features.row(s * 2 + a) * (-mdp.reward[s][a]);
            assert!((op.eval(&zero, idx) - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn max_tie_breaks_to_lowest_action() {
        let (mdp, behavior, features) = analytic_instance();
        let (op, _) = q_learning_operator(&mdp, &behavior, &features).unwrap();
        // theta with equal action values: the greedy pick is action 0, so
        // the residual for triple (0, a, 0) is R(a) + 0.5 * theta_0 - theta_a.
        let theta = DVector::from_vec(vec![3.0, 3.0]);
        let tc = induced_chain(&mdp, &behavior).unwrap();
        for (idx, &(_, a, _)) in tc.triples.iter().enumerate() {
            let residual = mdp.reward[0][a] + 0.5 * 3.0 - 3.0;
            let expected = features.row(a) * (-residual);
            assert!((op.eval(&theta, idx) - expected).norm() < 1e-14);
        }
    }

    #[test]
    fn gamma_zero_matches_linear_solve() {
        // With gamma = 0 the mapping is affine in theta for tabular
        // features; the damped oracle must agree with the explicit linear
        // solution theta(s, a) = R(s, a).
        let mdp = Mdp {
            transition: vec![vec![vec![1.0]], vec![vec![1.0]]],
            reward: vec![vec![0.7, -0.3]],
            gamma: 1e-9,
            r_max: 1.0,
        };
        let fed = q_federation(
            &[(mdp.clone(), Policy::uniform(1, 2), FeatureMap::tabular(2))],
            ProbeOptions::default(),
        )
        .unwrap();
        let root = q_fixed_point_oracle(&fed).unwrap();
        assert_relative_eq!(root[0], 0.7, epsilon = 1e-6);
        assert_relative_eq!(root[1], -0.3, epsilon = 1e-6);
    }

    #[test]
    fn identical_agents_share_root() {
        let (mdp, behavior, features) = analytic_instance();
        let fed = q_federation(
            &[
                (mdp.clone(), behavior.clone(), features.clone()),
                (mdp, behavior, features),
            ],
            ProbeOptions::default(),
        )
        .unwrap();
        let root = q_fixed_point_oracle(&fed).unwrap();
        assert_relative_eq!(root[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(root[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn growth_bound_compatible() {
        // || G(theta, X) || <= (1 + gamma) ||theta|| + R_max for tabular
        // features, hence <= max(1 + gamma, R_max) (||theta|| + 1).
        let (mdp, behavior, features) = analytic_instance();
        let (op, _) = q_learning_operator(&mdp, &behavior, &features).unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let b = (1.0 + mdp.gamma).max(mdp.r_max);
        for _ in 0..1000 {
            let theta = DVector::from_fn(2, |_, _| (rng.random::<f64>() - 0.5) * 20.0);
            let x = rng.random_range(0..op.n_states());
            let norm = op.eval(&theta, x).norm();
            assert!(norm <= (1.0 + mdp.gamma) * theta.norm() + mdp.r_max + 1e-12);
            assert!(norm <= b * (theta.norm() + 1.0) + 1e-12);
        }
    }

    #[test]
    fn behavior_policy_must_cover_actions() {
        let (mdp, _, features) = analytic_instance();
        let bad = Policy {
            probs: vec![vec![1.0, 0.0]],
        };
        assert!(matches!(
            q_learning_operator(&mdp, &bad, &features),
            Err(Error::AssumptionFailed(_))
        ));
    }
}
