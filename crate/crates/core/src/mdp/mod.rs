//! Linear MDP instances, policies, episode sampling and exact oracles.

pub mod dp;
pub mod generators;
pub mod instance;
pub mod policy;
pub mod reward;
pub mod sampling;

pub use dp::{
    enumerate_deterministic_policies, evaluate_policy_exact, expected_covariance, optimal_value_exact,
    uncertainty_diagnostic,
};
pub use instance::{InstanceParts, LinearMdpInstance, RewardTable};
pub use policy::{DeterministicPolicy, Policy};
pub use reward::RewardSpec;
pub use sampling::{sample_episode, Step, Trajectory};
