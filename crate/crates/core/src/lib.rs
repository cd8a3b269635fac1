//! Configurable tree-graph POMDP benchmark.
//!
//! A graph of shape `<b, d, p>` starts at a home state, alternates wait and
//! decision states for `d` levels and ends in one of `b^d` end states. Wrong
//! actions lead to a terminal fail state. One end state pays the reward.
//!
//! Start with [`config::preset`] or [`config::load_config`], build an
//! [`dynamics::Env`] from the spec and drive it with `reset`/`step`.

pub mod agents;
pub mod analytics;
pub mod config;
pub mod dynamics;
pub mod mc;
pub mod observations;
pub mod rewards;
pub mod rng;
pub mod topology;

pub use config::{load_config, preset, GraphSpec};
pub use dynamics::{Action, Env, EnvError, Step, StepInfo};
pub use observations::{Observation, Payload};
pub use topology::{GraphShape, StateId, StateKind};
