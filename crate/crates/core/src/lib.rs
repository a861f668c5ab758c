//! Local stochastic approximation over a group of agents whose samples come
//! from finite ergodic Markov chains.
//!
//! The crate simulates the synchronous local-update/averaging scheme
//! (each agent runs `H` stochastic-approximation steps on its own chain
//! between coordinator averages), evaluates the finite-time rate bounds that
//! govern it under constant and harmonic step sizes, and monitors the
//! almost-sure and in-expectation inequalities the bounds rest on.
//!
//! Module map:
//! - [`markov`]: finite ergodic chains, stationary distributions, exact
//!   total-variation mixing times.
//! - [`operators`]: sampled operators `F_i(theta; x)`, their mean fields,
//!   constant estimation (`L`, `mu`, `B`), and root solvers.
//! - [`schedule`]: step-size schedules and admissibility (largest safe
//!   constant step, first admissible round `K*` for harmonic steps).
//! - [`engine`]: the local-update/averaging simulation loop.
//! - [`theory`]: rate-bound evaluators and trajectory monitors.
//! - [`apps`]: quadratic optimization, TD(0), and Q-learning federations.
//! - [`harness`]: configuration-driven multi-trial experiments, traces,
//!   and assumption validation.

pub mod apps;
pub mod engine;
pub mod error;
pub mod harness;
pub mod markov;
pub mod operators;
pub mod schedule;
pub mod theory;

pub use error::{Error, Result};
