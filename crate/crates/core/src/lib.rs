//! Simulation and learning library for a two-pair energy-harvesting sensor
//! network: the plant, a linear-Gaussian policy-gradient learner, a lifelong
//! learner over a shared latent policy basis, two baselines and the
//! experiment harness that compares them on unseen tasks.

pub mod baselines;
pub mod env;
pub mod harness;
pub mod lifelong;
pub mod rl;
pub mod rng;

pub use env::{ControlAction, StepOutcome, SystemConfig, SystemState, TaskProfile};
pub use rl::{PolicyParams, RlHyperparams, Trajectory};
pub use rng::SimRng;
