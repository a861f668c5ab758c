//! Concrete federations: heterogeneous quadratic optimization, distributed
//! TD(0) policy evaluation, and distributed Q-learning, plus the MDP and
//! feature-map generators they are built from.

mod features;
mod mdp;
mod qlearning;
mod quadratic;
mod td;

pub use features::FeatureMap;
pub use mdp::{induced_chain, make_random_mdp, make_random_mdp_with, Mdp, Policy, TripleChain};
pub use qlearning::{q_federation, q_fixed_point_oracle, q_learning_operator};
pub use quadratic::{make_quadratic_federation, make_quadratic_federation_with, QuadraticParams};
pub use td::{td0_operator, td_federation, td_fixed_point};
