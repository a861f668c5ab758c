//! Finite ergodic Markov chains: construction, sampling, stationary
//! distributions, total-variation distance, and exact mixing times.
//!
//! Mixing times are computed by exact matrix powers over all start states,
//! which is feasible because every chain in this crate is desk-scale
//! (a few hundred states at most). The distance-to-stationarity curve
//! `d(k) = max_x TV(P^k(x, .), pi)` is non-increasing, so the first
//! threshold crossing is final.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

/// Row sums may deviate from 1 by at most this much at construction.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Residual tolerance for the stationary fixed-point check.
pub const STATIONARY_TOL: f64 = 1e-10;

/// Default cap on mixing-time searches.
pub const DEFAULT_MIXING_CAP: usize = 1_000_000;

/// Outcome of the ergodicity decision, naming the violation when there is one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ErgodicityCertificate {
    Ergodic,
    /// The transition graph is not strongly connected; holds one
    /// strongly-connected component that is not the whole state space.
    Reducible { component: Vec<usize> },
    /// Strongly connected but periodic with the given period.
    Periodic { period: usize },
}

impl ErgodicityCertificate {
    pub fn is_ergodic(&self) -> bool {
        matches!(self, ErgodicityCertificate::Ergodic)
    }
}

impl std::fmt::Display for ErgodicityCertificate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ErgodicityCertificate::Ergodic => write!(f, "ergodic"),
            ErgodicityCertificate::Reducible { component } => {
                write!(f, "reducible; closed component {component:?}")
            }
            ErgodicityCertificate::Periodic { period } => write!(f, "periodic with period {period}"),
        }
    }
}

/// A finite Markov chain with a row-stochastic transition matrix.
///
/// Construction validates stochasticity and (unless explicitly waived for
/// negative tests) ergodicity. Instances are immutable afterwards and safe
/// to share across threads.
#[derive(Debug, Clone)]
pub struct MarkovChain {
    p: DMatrix<f64>,
    labels: Option<Vec<String>>,
}

/// Stationary distribution of an ergodic chain.
#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    pi: DVector<f64>,
}

impl StationaryDistribution {
    /// Wraps an explicit probability vector (entries nonnegative, unit sum).
    pub fn from_probs(pi: DVector<f64>) -> Result<Self> {
        if pi.iter().any(|&v| !(0.0..=1.0 + 1e-12).contains(&v)) {
            return Err(Error::InvalidParameter(
                "distribution entries must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = pi.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidParameter(format!(
                "distribution sums to {sum}, not 1"
            )));
        }
        Ok(StationaryDistribution { pi })
    }

    pub fn probs(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn as_slice(&self) -> &[f64] {
        self.pi.as_slice()
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.len() == 0
    }
}

/// Exact mixing profile at one precision level.
///
/// `d_curve[k]` is the worst-case total-variation distance to stationarity
/// after `k` steps; `tau` is the first index where it drops to `alpha`.
#[derive(Debug, Clone)]
pub struct MixingProfile {
    pub alpha: f64,
    pub tau: usize,
    pub d_curve: Vec<f64>,
}

impl MarkovChain {
    /// Builds a chain, rejecting non-stochastic and non-ergodic matrices.
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        let chain = Self::new_allowing_nonergodic(p)?;
        match chain.ergodicity_certificate() {
            ErgodicityCertificate::Ergodic => Ok(chain),
            cert => Err(Error::NonErgodic(cert.to_string())),
        }
    }

    /// Builds a chain without the ergodicity requirement. Meant for negative
    /// tests (periodic or reducible chains); stochasticity is still enforced.
    pub fn new_allowing_nonergodic(p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() == 0 || p.nrows() != p.ncols() {
            return Err(Error::DimensionMismatch {
                expected: p.nrows().max(1),
                got: p.ncols(),
            });
        }
        for r in 0..p.nrows() {
            let mut sum = 0.0;
            for c in 0..p.ncols() {
                let v = p[(r, c)];
                if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                    return Err(Error::ProbabilityOutOfRange {
                        row: r,
                        col: c,
                        value: v,
                    });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotStochastic { row: r, sum });
            }
        }
        Ok(MarkovChain { p, labels: None })
    }

    /// Convenience constructor from row slices.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rows.iter().map(Vec::len).find(|&l| l != n).unwrap_or(0),
            });
        }
        let p = DMatrix::from_fn(n, n, |r, c| rows[r][c]);
        Self::new(p)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n_states() {
            return Err(Error::DimensionMismatch {
                expected: self.n_states(),
                got: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.p.nrows()
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Strong connectivity plus aperiodicity, with a certificate naming the
    /// violating component or the period on failure.
    pub fn ergodicity_certificate(&self) -> ErgodicityCertificate {
        ergodicity_certificate(&self.p)
    }

    pub fn is_ergodic(&self) -> bool {
        self.ergodicity_certificate().is_ergodic()
    }

    /// Solves `pi^T P = pi^T`, `sum pi = 1` by a direct linear solve
    /// ((P^T - I) with one row replaced by the normalization constraint).
    pub fn stationary_distribution(&self) -> Result<StationaryDistribution> {
        let n = self.n_states();
        let mut a = self.p.transpose() - DMatrix::<f64>::identity(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        for c in 0..n {
            a[(n - 1, c)] = 1.0;
        }
        rhs[n - 1] = 1.0;
        let pi = a.lu().solve(&rhs).ok_or(Error::SingularSystem)?;

        // A degenerate solve (non-ergodic chain slipping through) shows up as
        // negative mass or a broken fixed point.
        if pi.iter().any(|&v| !v.is_finite() || v < -1e-9) {
            return Err(Error::SingularSystem);
        }
        let pi = pi.map(|v| v.max(0.0));
        let sum: f64 = pi.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::SingularSystem);
        }
        let pi = pi / sum;
        let image = self.p.transpose() * &pi;
        if tv_distance(pi.as_slice(), image.as_slice())? > STATIONARY_TOL {
            return Err(Error::SingularSystem);
        }
        Ok(StationaryDistribution { pi })
    }

    /// Exact mixing time at precision `alpha` with the default step cap.
    pub fn mixing_time(&self, alpha: f64) -> Result<MixingProfile> {
        self.mixing_time_capped(alpha, DEFAULT_MIXING_CAP)
    }

    /// Exact mixing time by matrix powers: the smallest `k` with
    /// `max_x TV(P^k(x, .), pi) <= alpha`, quantified over every start state.
    pub fn mixing_time_capped(&self, alpha: f64, cap: usize) -> Result<MixingProfile> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mixing precision must be positive, got {alpha}"
            )));
        }
        let pi = self.stationary_distribution()?;
        let n = self.n_states();
        let mut power = DMatrix::<f64>::identity(n, n);
        let mut d_curve = Vec::new();
        let mut tau: Option<usize> = None;
        // A few extra points past tau document the plateau.
        const EXTRA: usize = 5;
        for k in 0..=cap + EXTRA {
            let d = worst_case_tv(&power, &pi)?;
            d_curve.push(d);
            if tau.is_none() && d <= alpha {
                tau = Some(k);
            }
            if let Some(t) = tau {
                if k >= t + EXTRA {
                    break;
                }
            }
            if k > cap {
                break;
            }
            power *= &self.p;
        }
        match tau {
            Some(tau) => Ok(MixingProfile {
                alpha,
                tau,
                d_curve,
            }),
            None => Err(Error::MixingTimeout { cap, alpha }),
        }
    }

    /// Smallest `C` with `tau(alpha) <= C log(1/alpha)` across the grid,
    /// i.e. the max of `tau(alpha) / log(1/alpha)`. The grid must stay in
    /// `(0, 1/e)` so the logarithm exceeds 1.
    pub fn estimate_geometric_constant(&self, alpha_grid: &[f64]) -> Result<f64> {
        if alpha_grid.is_empty() {
            return Err(Error::InvalidParameter("empty alpha grid".into()));
        }
        let mut c: f64 = 0.0;
        for &alpha in alpha_grid {
            if !(alpha > 0.0 && alpha < 1.0 / std::f64::consts::E) {
                return Err(Error::InvalidParameter(format!(
                    "alpha {alpha} outside (0, 1/e)"
                )));
            }
            let tau = self.mixing_time(alpha)?.tau;
            c = c.max(tau as f64 / (1.0 / alpha).ln());
        }
        Ok(c)
    }

    /// Draws the next state from row `state`. Identical seeds give identical
    /// sequences; streams are never shared between consumers.
    pub fn sample_step<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        debug_assert!(state < self.n_states());
        sample_categorical(self.p.row(state).iter().copied(), self.n_states(), rng)
    }

    /// Plain-text serialization: first line `n`, then `n` rows of `n`
    /// decimal probabilities.
    pub fn to_matrix_text(&self) -> String {
        let n = self.n_states();
        let mut out = String::new();
        out.push_str(&format!("{n}\n"));
        for r in 0..n {
            let row: Vec<String> = (0..n).map(|c| format!("{}", self.p[(r, c)])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses the plain-text matrix format accepted by [`to_matrix_text`].
    /// Ergodicity is enforced, matching [`MarkovChain::new`].
    pub fn from_matrix_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let n: usize = lines
            .next()
            .ok_or_else(|| Error::Parse("empty chain file".into()))?
            .trim()
            .parse()
            .map_err(|e| Error::Parse(format!("bad state count: {e}")))?;
        let mut p = DMatrix::<f64>::zeros(n, n);
        for r in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing row {r}")))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("row {r}: {e}")))?;
            if vals.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: vals.len(),
                });
            }
            for c in 0..n {
                p[(r, c)] = vals[c];
            }
        }
        Self::new(p)
    }
}

/// `max_x TV(power(x, .), pi)` for one matrix power.
fn worst_case_tv(power: &DMatrix<f64>, pi: &StationaryDistribution) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for r in 0..power.nrows() {
        let row: Vec<f64> = power.row(r).iter().copied().collect();
        worst = worst.max(tv_distance(&row, pi.as_slice())?);
    }
    Ok(worst)
}

/// Total-variation distance `(1/2) sum |p_j - q_j|` between two
/// probability vectors of the same length.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// Inverse-CDF draw from a categorical row.
pub fn sample_categorical<R: Rng + ?Sized>(
    weights: impl Iterator<Item = f64>,
    n: usize,
    rng: &mut R,
) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (idx, w) in weights.enumerate() {
        acc += w;
        if u < acc {
            return idx;
        }
    }
    n - 1
}

/// Draws one state from a stationary distribution.
pub fn sample_from_distribution<R: Rng + ?Sized>(
    pi: &StationaryDistribution,
    rng: &mut R,
) -> usize {
    sample_categorical(pi.as_slice().iter().copied(), pi.len(), rng)
}

/// Decides irreducibility via strongly-connected components and
/// aperiodicity via the gcd of BFS level differences.
pub fn ergodicity_certificate(p: &DMatrix<f64>) -> ErgodicityCertificate {
    let n = p.nrows();
    let mut graph = petgraph::graph::DiGraph::<(), ()>::new();
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for r in 0..n {
        for c in 0..n {
            if p[(r, c)] > 0.0 {
                graph.add_edge(nodes[r], nodes[c], ());
            }
        }
    }
    let sccs = petgraph::algo::tarjan_scc(&graph);
    if sccs.len() > 1 {
        // Report the first component in Tarjan order; its members cannot
        // reach the rest of the graph or vice versa.
        let component: Vec<usize> = sccs[0].iter().map(|ix| ix.index()).collect();
        return ErgodicityCertificate::Reducible { component };
    }

    // Period of a strongly connected graph: gcd over edges (u, v) of
    // level(u) + 1 - level(v), levels from a BFS rooted at state 0.
    let mut level = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    level[0] = 0;
    queue.push_back(0usize);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if p[(u, v)] > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g: u64 = 0;
    for u in 0..n {
        for v in 0..n {
            if p[(u, v)] > 0.0 {
                let diff = (level[u] as i64 + 1 - level[v] as i64).unsigned_abs();
                g = gcd(g, diff);
            }
        }
    }
    if g == 1 {
        ErgodicityCertificate::Ergodic
    } else {
        ErgodicityCertificate::Periodic { period: g as usize }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Random chain with Dirichlet(1)-style rows mixed with the uniform
/// distribution by `smoothing`, which guarantees ergodicity for any
/// positive smoothing.
pub fn random_ergodic_chain<R: Rng + ?Sized>(
    n_states: usize,
    smoothing: f64,
    rng: &mut R,
) -> Result<MarkovChain> {
    if n_states == 0 {
        return Err(Error::InvalidParameter("n_states must be positive".into()));
    }
    if !(0.0..1.0).contains(&smoothing) || (smoothing == 0.0 && n_states > 1) {
        return Err(Error::InvalidParameter(format!(
            "smoothing {smoothing} must lie in (0, 1) to certify ergodicity"
        )));
    }
    let uniform = 1.0 / n_states as f64;
    let mut p = DMatrix::<f64>::zeros(n_states, n_states);
    for r in 0..n_states {
        let raw: Vec<f64> = (0..n_states).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = raw.iter().sum();
        let mut row_sum = 0.0;
        for c in 0..n_states {
            let v = (1.0 - smoothing) * raw[c] / total + smoothing * uniform;
            p[(r, c)] = v;
            row_sum += v;
        }
        // Normalize away the last few ulps so construction never trips on
        // the row-sum tolerance.
        for c in 0..n_states {
            p[(r, c)] /= row_sum;
        }
    }
    MarkovChain::new(p)
}

struct ChainCurve {
    p: DMatrix<f64>,
    pi: StationaryDistribution,
    power: DMatrix<f64>,
    d: Vec<f64>,
}

impl ChainCurve {
    /// First index with `d(k) <= alpha`, extending the curve lazily.
    fn tau(&mut self, alpha: f64, cap: usize) -> Result<usize> {
        loop {
            // d is non-increasing: binary search over the recorded prefix.
            let idx = self.d.partition_point(|&d| d > alpha);
            if idx < self.d.len() {
                return Ok(idx);
            }
            if self.d.len() > cap {
                return Err(Error::MixingTimeout { cap, alpha });
            }
            self.power *= &self.p;
            let d = worst_case_tv(&self.power, &self.pi)?;
            self.d.push(d);
        }
    }
}

/// Worst-case-over-agents mixing time `tau(alpha) = max_i tau_i(alpha)`,
/// backed by lazily extended exact distance curves so repeated queries at
/// ever-finer precision stay cheap. Thread-safe.
pub struct MixingOracle {
    curves: std::sync::Mutex<Vec<ChainCurve>>,
    cap: usize,
}

impl MixingOracle {
    pub fn new(chains: &[MarkovChain]) -> Result<Self> {
        Self::with_cap(chains, DEFAULT_MIXING_CAP)
    }

    pub fn with_cap(chains: &[MarkovChain], cap: usize) -> Result<Self> {
        let mut curves = Vec::with_capacity(chains.len());
        for chain in chains {
            let pi = chain.stationary_distribution()?;
            let n = chain.n_states();
            let power = DMatrix::<f64>::identity(n, n);
            let d0 = worst_case_tv(&power, &pi)?;
            curves.push(ChainCurve {
                p: chain.transition().clone(),
                pi,
                power,
                d: vec![d0],
            });
        }
        Ok(MixingOracle {
            curves: std::sync::Mutex::new(curves),
            cap,
        })
    }

    /// `max_i tau_i(alpha)`.
    pub fn tau(&self, alpha: f64) -> Result<usize> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "mixing precision must be positive, got {alpha}"
            )));
        }
        let mut curves = self.curves.lock().expect("mixing oracle poisoned");
        let mut worst = 0;
        for curve in curves.iter_mut() {
            worst = worst.max(curve.tau(alpha, self.cap)?);
        }
        Ok(worst)
    }
}
