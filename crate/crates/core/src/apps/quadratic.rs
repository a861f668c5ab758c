//! Heterogeneous quadratic federations: each agent runs stochastic gradient
//! steps on a strongly convex quadratic whose curvature and offset vary per
//! chain state, and agents' individual minimizers are pulled apart by a
//! controllable heterogeneity shift.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::markov::random_ergodic_chain;
use crate::operators::{min_symmetric_eigenvalue, spectral_norm, Federation, OperatorSpec, ProbeOptions};

/// Generator knobs beyond the spec'd core arguments.
#[derive(Debug, Clone, Copy)]
pub struct QuadraticParams {
    pub n_states: usize,
    pub mu_target: f64,
    pub l_target: f64,
    /// Norm of the per-agent minimizer shift.
    pub heterogeneity: f64,
    /// Scale of zero-mean per-state curvature perturbations, as a fraction
    /// of `mu_target` (capped below 1 so per-state matrices stay PSD).
    pub curvature_noise: f64,
    /// Norm of the offset shared by all agents.
    pub offset_base: f64,
    /// Scale of zero-mean per-state offset noise.
    pub offset_noise: f64,
    /// Uniform smoothing of the random chains.
    pub smoothing: f64,
}

impl Default for QuadraticParams {
    fn default() -> Self {
        QuadraticParams {
            n_states: 4,
            mu_target: 1.0,
            l_target: 2.0,
            heterogeneity: 0.5,
            curvature_noise: 0.2,
            offset_base: 1.0,
            offset_noise: 0.25,
            smoothing: 0.05,
        }
    }
}

fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn random_symmetric<R: Rng + ?Sized>(dim: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| {
        let s: f64 = StandardNormal.sample(rng);
        s * scale
    });
    (&g + g.transpose()) * 0.5
}

/// Spec-level entry point with default generator knobs.
pub fn make_quadratic_federation(
    n_agents: usize,
    dim: usize,
    n_states: usize,
    mu_target: f64,
    l_target: f64,
    heterogeneity: f64,
    seed: u64,
) -> Result<Federation> {
    let params = QuadraticParams {
        n_states,
        mu_target,
        l_target,
        heterogeneity,
        ..QuadraticParams::default()
    };
    make_quadratic_federation_with(n_agents, dim, &params, seed)
}

/// Builds a federation of linear operators
/// `F_i(theta; x) = Q_i(x) theta - c_i(x)` where the mean curvature
/// `Q_mean_i` is symmetric with eigenvalues spanning
/// `[mu_target, l_target]`, per-state curvatures stay positive
/// semidefinite, and per-state offsets carry zero-mean noise around a
/// heterogeneity-shifted center.
pub fn make_quadratic_federation_with(
    n_agents: usize,
    dim: usize,
    params: &QuadraticParams,
    seed: u64,
) -> Result<Federation> {
    if n_agents == 0 || dim == 0 || params.n_states == 0 {
        return Err(Error::InvalidParameter(
            "n_agents, dim, and n_states must be positive".into(),
        ));
    }
    if !(params.mu_target > 0.0 && params.mu_target <= params.l_target) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < mu_target <= l_target, got {} and {}",
            params.mu_target, params.l_target
        )));
    }
    if params.heterogeneity < 0.0 {
        return Err(Error::InvalidParameter("heterogeneity must be >= 0".into()));
    }
    if !(0.0..1.0).contains(&params.curvature_noise) {
        return Err(Error::InvalidParameter(
            "curvature_noise is a fraction of mu_target and must lie in [0, 1)".into(),
        ));
    }

    const GEN_STREAM: u64 = 0x51;
    let mut rng = ChaCha8Rng::seed_from_u64(crate::engine::derive_seed(seed, &[GEN_STREAM]));
    let shared_offset = if params.offset_base > 0.0 {
        random_unit(dim, &mut rng) * params.offset_base
    } else {
        DVector::zeros(dim)
    };

    let mut ops = Vec::with_capacity(n_agents);
    let mut chains = Vec::with_capacity(n_agents);
    for _ in 0..n_agents {
        let chain = random_ergodic_chain(params.n_states, params.smoothing, &mut rng)?;
        let pi = chain.stationary_distribution()?;

        // Mean curvature: random orthogonal basis, eigenvalues pinned to the
        // target interval endpoints with the rest drawn uniformly inside.
        let gauss: DMatrix<f64> = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
        let basis = gauss.qr().q();
        let mut eigs = vec![params.mu_target];
        if dim > 1 {
            eigs.push(params.l_target);
        }
        for _ in 2..dim {
            eigs.push(params.mu_target + (params.l_target - params.mu_target) * rng.random::<f64>());
        }
        let q_mean = &basis * DMatrix::from_diagonal(&DVector::from_vec(eigs)) * basis.transpose();
        let q_mean = (&q_mean + q_mean.transpose()) * 0.5;

        // Zero-mean-under-pi symmetric perturbations, rescaled so every
        // per-state curvature keeps a positive spectrum.
        let mut built = None;
        for attempt in 0..100 {
            let raw: Vec<DMatrix<f64>> = (0..params.n_states)
                .map(|_| random_symmetric(dim, params.curvature_noise * params.mu_target, &mut rng))
                .collect();
            let mut mean = DMatrix::<f64>::zeros(dim, dim);
            for (x, m) in raw.iter().enumerate() {
                mean += m * pi.as_slice()[x];
            }
            let mut deltas: Vec<DMatrix<f64>> = raw.iter().map(|m| m - &mean).collect();
            let worst = deltas.iter().map(spectral_norm).fold(0.0f64, f64::max);
            let cap = 0.9 * params.mu_target;
            if worst > cap {
                let scale = cap / worst;
                for d in deltas.iter_mut() {
                    *d *= scale;
                }
            }
            let ok = deltas
                .iter()
                .all(|d| min_symmetric_eigenvalue(&(&q_mean + d)) >= 0.0);
            if ok {
                built = Some(deltas);
                break;
            }
            if attempt == 99 {
                return Err(Error::GenerationFailed(
                    "could not keep per-state curvature PSD within 100 retries".into(),
                ));
            }
        }
        let deltas = built.expect("loop either builds or errors");

        let center = &shared_offset + random_unit(dim, &mut rng) * params.heterogeneity;
        let raw_noise: Vec<DVector<f64>> = (0..params.n_states)
            .map(|_| {
                DVector::from_fn(dim, |_, _| {
                    let s: f64 = StandardNormal.sample(&mut rng);
                    s * params.offset_noise
                })
            })
            .collect();
        let mut noise_mean = DVector::<f64>::zeros(dim);
        for (x, v) in raw_noise.iter().enumerate() {
            noise_mean.axpy(pi.as_slice()[x], v, 1.0);
        }

        let mut a = Vec::with_capacity(params.n_states);
        let mut b = Vec::with_capacity(params.n_states);
        for x in 0..params.n_states {
            a.push(-(&q_mean + &deltas[x]));
            b.push(&center + &raw_noise[x] - &noise_mean);
        }
        ops.push(OperatorSpec::linear(a, b)?);
        chains.push(chain);
    }

    const PROBE_STREAM: u64 = 0x52;
    Federation::new(
        ops,
        chains,
        ProbeOptions {
            seed: crate::engine::derive_seed(seed, &[PROBE_STREAM]),
            ..ProbeOptions::default()
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{verify_lipschitz, verify_strong_monotonicity};
    use approx::assert_relative_eq;

    #[test]
    fn homogeneous_single_state_agents_share_root() {
        // Zero heterogeneity plus identical curvature targets
        // (mu_target == l_target pins every mean curvature to mu * I):
        // all agents share the offset and therefore the root.
        let params = QuadraticParams {
            n_states: 1,
            mu_target: 1.5,
            l_target: 1.5,
            heterogeneity: 0.0,
            offset_noise: 0.0,
            curvature_noise: 0.0,
            smoothing: 0.5,
            ..QuadraticParams::default()
        };
        let fed = make_quadratic_federation_with(3, 2, &params, 11).unwrap();
        for (op, pi) in fed.ops().iter().zip(fed.stationary_distributions()) {
            let (a_mean, b_mean) = crate::operators::mean_matrices(op, pi).unwrap();
            let own_root = (-a_mean).lu().solve(&b_mean).unwrap();
            assert!((own_root - fed.theta_star()).norm() < 1e-8);
        }
    }

    #[test]
    fn scalar_single_state_root() {
        // One agent, d = 1, Q = 2, c = 3: root 1.5.
        let op = OperatorSpec::linear(
            vec![DMatrix::from_row_slice(1, 1, &[-2.0])],
            vec![DVector::from_vec(vec![3.0])],
        )
        .unwrap();
        let chain = crate::markov::MarkovChain::from_rows(&[vec![1.0]]).unwrap();
        let fed = Federation::new(vec![op], vec![chain], ProbeOptions::default()).unwrap();
        assert_relative_eq!(fed.theta_star()[0], 1.5, epsilon = 1e-12);
    }

    #[test]
    fn generated_federation_meets_targets() {
        let params = QuadraticParams::default();
        let fed = make_quadratic_federation_with(4, 3, &params, 5).unwrap();
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for (op, pi) in fed.ops().iter().zip(fed.stationary_distributions()) {
            let mono = verify_strong_monotonicity(op, pi, 10, &mut rng).unwrap();
            assert!(mono.exact && mono.mu_hat >= params.mu_target - 1e-9);
            let lip = verify_lipschitz(op, pi, 10, &mut rng).unwrap();
            // Sample Lipschitz may exceed the mean target only by the
            // perturbation budget.
            assert!(lip.l_hat <= params.l_target + 0.9 * params.mu_target + 1e-9);
        }
        assert!(fed.constants().mu >= params.mu_target - 1e-9);
    }

    #[test]
    fn heterogeneity_separates_agent_roots() {
        let fed = make_quadratic_federation(3, 2, 3, 1.0, 2.0, 0.8, 42).unwrap();
        let mut roots = Vec::new();
        for (op, pi) in fed.ops().iter().zip(fed.stationary_distributions()) {
            let (a_mean, b_mean) = crate::operators::mean_matrices(op, pi).unwrap();
            roots.push((-a_mean).lu().solve(&b_mean).unwrap());
        }
        assert!((&roots[0] - &roots[1]).norm() > 1e-3);
        assert!((&roots[1] - &roots[2]).norm() > 1e-3);
    }
}
