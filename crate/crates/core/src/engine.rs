//! The simulation loop: every round each agent pulls the coordinator
//! iterate, runs `H` local stochastic-approximation steps on its own chain,
//! and the coordinator averages the results.
//!
//! Two sample-indexing modes are supported. Under `Fresh` (the default) the
//! chain advances once per local step and the step-size clock runs on the
//! same global counter: round `k`, local step `t` consumes sample and step
//! index `k * H + t`, so every sample is used exactly once. `PaperLiteral`
//! indexes both clocks by `k + t`, which makes consecutive rounds' sample
//! windows overlap; the per-agent sample path is materialized up front and
//! replayed so the overlap is reproduced exactly.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::sample_from_distribution;
use crate::operators::Federation;
use crate::schedule::StepSchedule;

/// How sample and step-size indices advance across rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleIndexing {
    /// Index `k * H + t`: the chain physically advances once per local step.
    Fresh,
    /// Index `k + t`: overlapping round windows, replayed from a cached path.
    PaperLiteral,
}

impl SampleIndexing {
    /// Schedule/sample index consumed at round `k`, local step `t`.
    pub fn global_index(self, k: usize, t: usize, local_steps: usize) -> usize {
        match self {
            SampleIndexing::Fresh => k * local_steps + t,
            SampleIndexing::PaperLiteral => k + t,
        }
    }

    /// Stride between consecutive rounds' first indices.
    pub fn stride(self, local_steps: usize) -> usize {
        match self {
            SampleIndexing::Fresh => local_steps,
            SampleIndexing::PaperLiteral => 1,
        }
    }
}

/// Where each agent's chain starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainStart {
    /// Initial state drawn from the stationary distribution (default).
    Stationary,
    /// Deterministic start state, for mixing-sensitivity experiments.
    Fixed(usize),
}

/// Run configuration for [`run_local_sa`].
#[derive(Debug, Clone)]
pub struct AlgorithmConfig {
    pub n_agents: usize,
    /// `H`, local steps per round.
    pub local_steps: usize,
    pub dim: usize,
    pub schedule: StepSchedule,
    /// `K`, number of averaging rounds.
    pub rounds: usize,
    pub sample_indexing: SampleIndexing,
    /// Record all local iterates and visited states (needed by the
    /// trajectory monitors; costs memory).
    pub record_locals: bool,
    /// Common initial point; zero vector when absent.
    pub theta0: Option<DVector<f64>>,
    pub chain_start: ChainStart,
}

impl AlgorithmConfig {
    pub fn new(n_agents: usize, local_steps: usize, dim: usize, schedule: StepSchedule, rounds: usize) -> Self {
        AlgorithmConfig {
            n_agents,
            local_steps,
            dim,
            schedule,
            rounds,
            sample_indexing: SampleIndexing::Fresh,
            record_locals: false,
            theta0: None,
            chain_start: ChainStart::Stationary,
        }
    }

    fn validate(&self, fed: &Federation) -> Result<()> {
        if self.n_agents != fed.n_agents() {
            return Err(Error::DimensionMismatch {
                expected: fed.n_agents(),
                got: self.n_agents,
            });
        }
        if self.dim != fed.dim() {
            return Err(Error::DimensionMismatch {
                expected: fed.dim(),
                got: self.dim,
            });
        }
        if self.n_agents == 0 || self.local_steps == 0 || self.rounds == 0 {
            return Err(Error::InvalidParameter(
                "n_agents, local_steps, and rounds must be >= 1".into(),
            ));
        }
        if let Some(theta0) = &self.theta0 {
            if theta0.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: theta0.len(),
                });
            }
        }
        if let ChainStart::Fixed(x) = self.chain_start {
            for chain in fed.chains() {
                if x >= chain.n_states() {
                    return Err(Error::InvalidParameter(format!(
                        "fixed start state {x} out of range"
                    )));
                }
            }
        }
        self.schedule.validate()
    }
}

/// Static facts about a finished run, carried by the trajectory so the
/// monitors can re-derive effective step sizes and window sums.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub n_agents: usize,
    pub local_steps: usize,
    pub dim: usize,
    pub rounds: usize,
    pub sample_indexing: SampleIndexing,
    pub schedule: StepSchedule,
}

/// Recorded run: coordinator iterates, optional local iterates
/// (`locals[k][i][t]`, `t` in `0..=H`), optional visited states
/// (`samples[k][i][t]`, `t` in `0..H`), and the step sizes consumed in
/// `(k, t)` order.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub bar_theta: Vec<DVector<f64>>,
    pub locals: Option<Vec<Vec<Vec<DVector<f64>>>>>,
    pub samples: Option<Vec<Vec<Vec<usize>>>>,
    pub alphas_used: Vec<f64>,
}

impl Trajectory {
    /// Effective step at round `k`: the first step consumed in the round
    /// (the largest, since schedules are non-increasing).
    pub fn round_alpha(&self, k: usize) -> f64 {
        self.alphas_used[k * self.meta.local_steps]
    }

    /// `|| bar_theta_k - theta* ||^2` per round.
    pub fn mse_series(&self, theta_star: &DVector<f64>) -> Vec<f64> {
        self.bar_theta
            .iter()
            .map(|th| (th - theta_star).norm_squared())
            .collect()
    }

    pub fn final_iterate(&self) -> &DVector<f64> {
        self.bar_theta.last().expect("non-empty trajectory")
    }
}

/// SplitMix64 finalizer.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a stream seed from a master seed and a role path (trial index,
/// agent index, ...). Collision-free in practice and reproducible across
/// thread counts.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut z = splitmix(master);
    for &p in parts {
        z = splitmix(z ^ splitmix(p.wrapping_add(0xD6E8_FEB8_6659_FD93)));
    }
    z
}

/// Runs the local-update/averaging loop.
///
/// Chains advance independently per agent from independently seeded streams;
/// initial states are drawn from the stationary distributions unless pinned.
/// Identical `(federation, config, seed)` triples produce bit-identical
/// trajectories. Admissibility of the schedule is *not* required; callers
/// may deliberately run inadmissible steps for negative tests.
pub fn run_local_sa(fed: &Federation, cfg: &AlgorithmConfig, seed: u64) -> Result<Trajectory> {
    cfg.validate(fed)?;
    let n = cfg.n_agents;
    let h = cfg.local_steps;
    let rounds = cfg.rounds;
    let dim = cfg.dim;

    let path_len = match cfg.sample_indexing {
        SampleIndexing::Fresh => rounds * h,
        SampleIndexing::PaperLiteral => rounds + h - 1,
    };
    let paths: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[i as u64]));
            let chain = &fed.chains()[i];
            let mut state = match cfg.chain_start {
                ChainStart::Stationary => {
                    sample_from_distribution(&fed.stationary_distributions()[i], &mut rng)
                }
                ChainStart::Fixed(x) => x,
            };
            let mut path = Vec::with_capacity(path_len);
            for _ in 0..path_len {
                path.push(state);
                state = chain.sample_step(state, &mut rng);
            }
            path
        })
        .collect();

    let theta0 = cfg
        .theta0
        .clone()
        .unwrap_or_else(|| DVector::zeros(dim));

    let mut bar = theta0;
    let mut bar_theta = Vec::with_capacity(rounds + 1);
    bar_theta.push(bar.clone());
    let mut locals = cfg.record_locals.then(Vec::new);
    let mut samples = cfg.record_locals.then(Vec::new);
    let mut alphas_used = Vec::with_capacity(rounds * h);
    let mut f_val = DVector::zeros(dim);

    for k in 0..rounds {
        let mut round_locals = cfg
            .record_locals
            .then(|| Vec::with_capacity(n));
        let mut round_samples = cfg
            .record_locals
            .then(|| Vec::with_capacity(n));
        let mut sum = DVector::<f64>::zeros(dim);
        for i in 0..n {
            let mut theta = bar.clone();
            let mut agent_locals = cfg
                .record_locals
                .then(|| {
                    let mut v = Vec::with_capacity(h + 1);
                    v.push(theta.clone());
                    v
                });
            let mut agent_samples = cfg.record_locals.then(|| Vec::with_capacity(h));
            for t in 0..h {
                let g = cfg.sample_indexing.global_index(k, t, h);
                let alpha = cfg.schedule.alpha(g);
                if i == 0 {
                    alphas_used.push(alpha);
                }
                let x = paths[i][g];
                fed.ops()[i].eval_into(&theta, x, &mut f_val);
                theta.axpy(-alpha, &f_val, 1.0);
                if let Some(v) = agent_locals.as_mut() {
                    v.push(theta.clone());
                }
                if let Some(v) = agent_samples.as_mut() {
                    v.push(x);
                }
            }
            sum += &theta;
            if let Some(v) = round_locals.as_mut() {
                v.push(agent_locals.expect("recording"));
            }
            if let Some(v) = round_samples.as_mut() {
                v.push(agent_samples.expect("recording"));
            }
        }
        // Fixed agent order, single division: bit-reproducible averaging.
        bar = sum / (n as f64);
        if !bar.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged { round: k });
        }
        bar_theta.push(bar.clone());
        if let Some(v) = locals.as_mut() {
            v.push(round_locals.expect("recording"));
        }
        if let Some(v) = samples.as_mut() {
            v.push(round_samples.expect("recording"));
        }
    }

    Ok(Trajectory {
        meta: TrajectoryMeta {
            n_agents: n,
            local_steps: h,
            dim,
            rounds,
            sample_indexing: cfg.sample_indexing,
            schedule: cfg.schedule,
        },
        bar_theta,
        locals,
        samples,
        alphas_used,
    })
}
