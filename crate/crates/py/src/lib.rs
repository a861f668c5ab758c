//! Python bindings: finite ergodic chains with exact mixing diagnostics,
//! federation builders for the quadratic / TD(0) / Q-learning instances,
//! the local-update/averaging simulation loop, and the rate-bound
//! evaluators.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use localsa::apps;
use localsa::engine::{self, AlgorithmConfig, SampleIndexing};
use localsa::harness;
use localsa::markov;
use localsa::operators;
use localsa::schedule::{self, StepSchedule};
use localsa::theory;

use std::sync::Arc;

fn err(e: localsa::Error) -> PyErr {
    match &e {
        localsa::Error::InvalidParameter(_)
        | localsa::Error::DimensionMismatch { .. }
        | localsa::Error::Parse(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A finite ergodic Markov chain.
#[pyclass(name = "MarkovChain")]
struct PyMarkovChain {
    inner: markov::MarkovChain,
}

#[pymethods]
impl PyMarkovChain {
    /// Build from row-stochastic transition rows; rejects non-ergodic
    /// matrices.
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(PyMarkovChain {
            inner: markov::MarkovChain::from_rows(&rows).map_err(err)?,
        })
    }

    /// Random chain with uniform smoothing mixed into every row.
    #[staticmethod]
    fn random_ergodic(n_states: usize, smoothing: f64, seed: u64) -> PyResult<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Ok(PyMarkovChain {
            inner: markov::random_ergodic_chain(n_states, smoothing, &mut rng).map_err(err)?,
        })
    }

    fn n_states(&self) -> usize {
        self.inner.n_states()
    }

    fn is_ergodic(&self) -> bool {
        self.inner.is_ergodic()
    }

    fn certificate(&self) -> String {
        self.inner.ergodicity_certificate().to_string()
    }

    fn stationary(&self) -> PyResult<Vec<f64>> {
        Ok(self
            .inner
            .stationary_distribution()
            .map_err(err)?
            .as_slice()
            .to_vec())
    }

    /// Exact mixing time: returns `(tau, d_curve)`.
    fn mixing_time(&self, alpha: f64) -> PyResult<(usize, Vec<f64>)> {
        let profile = self.inner.mixing_time(alpha).map_err(err)?;
        Ok((profile.tau, profile.d_curve))
    }

    /// Smallest C with `tau(a) <= C log(1/a)` across the grid.
    fn geometric_constant(&self, grid: Vec<f64>) -> PyResult<f64> {
        self.inner.estimate_geometric_constant(&grid).map_err(err)
    }

    /// Deterministic sample path of the given length.
    #[pyo3(signature = (length, seed, start=None))]
    fn sample_path(&self, length: usize, seed: u64, start: Option<usize>) -> PyResult<Vec<usize>> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut state = match start {
            Some(s) => {
                if s >= self.inner.n_states() {
                    return Err(PyValueError::new_err("start state out of range"));
                }
                s
            }
            None => markov::sample_from_distribution(
                &self.inner.stationary_distribution().map_err(err)?,
                &mut rng,
            ),
        };
        let mut path = Vec::with_capacity(length);
        for _ in 0..length {
            path.push(state);
            state = self.inner.sample_step(state, &mut rng);
        }
        Ok(path)
    }

    /// Plain-text matrix serialization (first line n, then n rows).
    fn to_text(&self) -> String {
        self.inner.to_matrix_text()
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(PyMarkovChain {
            inner: markov::MarkovChain::from_matrix_text(text).map_err(err)?,
        })
    }
}

/// Total-variation distance between two distributions.
#[pyfunction]
fn tv_distance(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    markov::tv_distance(&p, &q).map_err(err)
}

/// One simulation run: coordinator iterates and the squared distance to the
/// federation root per round.
#[pyclass(name = "RunResult")]
struct PyRunResult {
    #[pyo3(get)]
    bar_theta: Vec<Vec<f64>>,
    #[pyo3(get)]
    mse: Vec<f64>,
    #[pyo3(get)]
    alphas_used: Vec<f64>,
}

/// An N-agent problem instance with its chains, constants, and root.
#[pyclass(name = "Federation")]
struct PyFederation {
    inner: operators::Federation,
}

impl PyFederation {
    fn schedule_from(&self, alpha: Option<f64>, alpha0: Option<f64>) -> PyResult<StepSchedule> {
        match (alpha, alpha0) {
            (Some(a), None) => Ok(StepSchedule::Constant { alpha: a }),
            (None, Some(a0)) => Ok(StepSchedule::Harmonic { alpha0: a0 }),
            _ => Err(PyValueError::new_err(
                "pass exactly one of alpha= (constant) or alpha0= (harmonic)",
            )),
        }
    }
}

#[pymethods]
impl PyFederation {
    /// Heterogeneous strongly convex quadratics over random ergodic chains.
    #[staticmethod]
    fn quadratic(
        n_agents: usize,
        dim: usize,
        n_states: usize,
        mu_target: f64,
        l_target: f64,
        heterogeneity: f64,
        seed: u64,
    ) -> PyResult<Self> {
        Ok(PyFederation {
            inner: apps::make_quadratic_federation(
                n_agents,
                dim,
                n_states,
                mu_target,
                l_target,
                heterogeneity,
                seed,
            )
            .map_err(err)?,
        })
    }

    /// Distributed TD(0) over independently drawn random MDPs with random
    /// orthonormal features.
    #[staticmethod]
    #[pyo3(signature = (n_agents, env_states, actions, n_features, gamma, r_max, smoothing, seed))]
    #[allow(clippy::too_many_arguments)]
    fn td0(
        n_agents: usize,
        env_states: usize,
        actions: usize,
        n_features: usize,
        gamma: f64,
        r_max: f64,
        smoothing: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let mut envs = Vec::with_capacity(n_agents);
        for i in 0..n_agents {
            let mdp = apps::make_random_mdp(
                env_states,
                actions,
                gamma,
                r_max,
                smoothing,
                engine::derive_seed(seed, &[1, i as u64]),
            )
            .map_err(err)?;
            let policy = apps::Policy::uniform(env_states, actions);
            let features = apps::FeatureMap::random_orthonormal(
                env_states,
                n_features,
                &[],
                engine::derive_seed(seed, &[2, i as u64]),
            )
            .map_err(err)?;
            envs.push((mdp, policy, features));
        }
        Ok(PyFederation {
            inner: apps::td_federation(&envs, operators::ProbeOptions::default()).map_err(err)?,
        })
    }

    /// Distributed Q-learning over random MDPs with tabular features and a
    /// uniform behavior policy.
    #[staticmethod]
    fn qlearning_tabular(
        n_agents: usize,
        env_states: usize,
        actions: usize,
        gamma: f64,
        r_max: f64,
        smoothing: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let mut envs = Vec::with_capacity(n_agents);
        for i in 0..n_agents {
            let mdp = apps::make_random_mdp(
                env_states,
                actions,
                gamma,
                r_max,
                smoothing,
                engine::derive_seed(seed, &[1, i as u64]),
            )
            .map_err(err)?;
            let behavior = apps::Policy::uniform(env_states, actions);
            let features = apps::FeatureMap::tabular(env_states * actions);
            envs.push((mdp, behavior, features));
        }
        Ok(PyFederation {
            inner: apps::q_federation(&envs, operators::ProbeOptions::default()).map_err(err)?,
        })
    }

    fn n_agents(&self) -> usize {
        self.inner.n_agents()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn theta_star(&self) -> Vec<f64> {
        self.inner.theta_star().as_slice().to_vec()
    }

    /// `(B, L, mu, ||theta*||)`.
    fn constants(&self) -> (f64, f64, f64, f64) {
        let c = self.inner.constants();
        (c.b, c.l, c.mu, c.theta_star_norm)
    }

    /// Largest admissible constant step for `H` local steps per round.
    fn max_constant_step(&self, local_steps: usize) -> PyResult<f64> {
        let oracle = markov::MixingOracle::new(self.inner.chains()).map_err(err)?;
        schedule::max_constant_step(self.inner.constants(), self.inner.n_agents(), local_steps, |a| {
            oracle.tau(a)
        })
        .map_err(err)
    }

    /// Worst-case mixing time over the federation's chains.
    fn tau(&self, alpha: f64) -> PyResult<usize> {
        let oracle = markov::MixingOracle::new(self.inner.chains()).map_err(err)?;
        oracle.tau(alpha).map_err(err)
    }

    /// First admissible round for a harmonic schedule under fresh indexing.
    fn k_star(&self, alpha0: f64, local_steps: usize) -> PyResult<usize> {
        let oracle = markov::MixingOracle::new(self.inner.chains()).map_err(err)?;
        schedule::find_k_star(
            &StepSchedule::Harmonic { alpha0 },
            local_steps,
            self.inner.constants(),
            self.inner.n_agents(),
            local_steps,
            |a| oracle.tau(a),
            None,
            schedule::DEFAULT_KSTAR_CAP,
        )
        .map_err(err)
    }

    /// Run the local-update/averaging loop. Exactly one of `alpha`
    /// (constant schedule) or `alpha0` (harmonic) must be given.
    #[pyo3(signature = (local_steps, rounds, seed, alpha=None, alpha0=None, paper_literal=false))]
    fn run(
        &self,
        local_steps: usize,
        rounds: usize,
        seed: u64,
        alpha: Option<f64>,
        alpha0: Option<f64>,
        paper_literal: bool,
    ) -> PyResult<PyRunResult> {
        let schedule = self.schedule_from(alpha, alpha0)?;
        let mut cfg = AlgorithmConfig::new(
            self.inner.n_agents(),
            local_steps,
            self.inner.dim(),
            schedule,
            rounds,
        );
        if paper_literal {
            cfg.sample_indexing = SampleIndexing::PaperLiteral;
        }
        let traj = engine::run_local_sa(&self.inner, &cfg, seed).map_err(err)?;
        Ok(PyRunResult {
            mse: traj.mse_series(self.inner.theta_star()),
            bar_theta: traj
                .bar_theta
                .iter()
                .map(|v| v.as_slice().to_vec())
                .collect(),
            alphas_used: traj.alphas_used,
        })
    }

    /// Constant-step rate bound at round `k` (the geometric-mixing constant
    /// is estimated from the federation's chains).
    fn rate_bound_constant(
        &self,
        local_steps: usize,
        k: usize,
        alpha: f64,
        e_tau: f64,
    ) -> PyResult<f64> {
        let params = self.bound_params(local_steps)?;
        theory::bound_constant_step(k, alpha, &params, e_tau).map_err(err)
    }

    /// Harmonic-step rate bound at round `k >= k_star`.
    fn rate_bound_harmonic(
        &self,
        local_steps: usize,
        k: usize,
        alpha0: f64,
        k_star: usize,
        e_kstar: f64,
    ) -> PyResult<f64> {
        let params = self.bound_params(local_steps)?;
        theory::bound_timevarying(k, alpha0, k_star, &params, e_kstar).map_err(err)
    }
}

impl PyFederation {
    fn bound_params(&self, local_steps: usize) -> PyResult<theory::BoundParams> {
        let oracle = Arc::new(markov::MixingOracle::new(self.inner.chains()).map_err(err)?);
        let grid = harness::geometric_constant_grid();
        let mut c = 0.0f64;
        for chain in self.inner.chains() {
            c = c.max(chain.estimate_geometric_constant(&grid).map_err(err)?);
        }
        Ok(theory::BoundParams::new(
            self.inner.constants(),
            self.inner.n_agents(),
            local_steps,
            c,
            theory::BoundParams::oracle_tau(oracle),
        ))
    }
}

/// Ordinary least squares of log(mse) on log(k); returns
/// `(slope, intercept, r_squared)`.
#[pyfunction]
fn fit_loglog_slope(mse: Vec<f64>, k_min: usize, k_max: usize) -> PyResult<(f64, f64, f64)> {
    let fit = harness::fit_loglog_slope(&mse, k_min, k_max).map_err(err)?;
    Ok((fit.slope, fit.intercept, fit.r_squared))
}

#[pymodule]
fn localsa_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMarkovChain>()?;
    m.add_class::<PyFederation>()?;
    m.add_class::<PyRunResult>()?;
    m.add_function(wrap_pyfunction!(tv_distance, m)?)?;
    m.add_function(wrap_pyfunction!(fit_loglog_slope, m)?)?;
    Ok(())
}
