//! Hierarchical constrained contextual bandits.
//!
//! The crate is organized around the simulation loop of a hierarchical
//! constrained linear bandit:
//!
//! - [`model`]: online ridge regression with rank-one inverse updates and
//!   the self-normalized confidence radius.
//! - [`env`]: synthetic ground-truth instances (contexts, per-prefix costs,
//!   per-composite-action rewards, noise) and the exhaustive feasible optimum.
//! - [`agents`]: HC-UCB and the baseline policies behind one [`agents::Policy`]
//!   interface.
//! - [`metrics`]: constrained regret, its high/low-level decomposition,
//!   violation counts and log-log slope summaries.
//! - [`theory`]: brute-force checks for the decomposition gap on small MDPs and
//!   the packed hard-instance family.
//! - [`harness`]: configuration, seeded runs and sweeps, CSV/JSON/SVG artifacts.
//!
//! Everything is deterministic given a seed: random draws come from
//! counter-addressed ChaCha substreams (see [`rng`]).

pub mod agents;
pub mod env;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
