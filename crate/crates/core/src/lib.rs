//! GFlowNet training on cardinality-constrained submodular set selection,
//! augmented with submodular upper bounds on terminating states that were
//! never queried.
//!
//! - [`dag`]: states, trajectories, enumeration.
//! - [`rewards`]: coverage rewards, graph generators, metered oracle.
//! - [`bounds`]: observation ledger and upper-bound index.
//! - [`combinatorics`]: closed-form counts, bound probabilities, oracles.
//! - [`gfn`]: policy, trajectory balance, training loop.
//! - [`metrics`]: exact TV, FCS, top-k reward.
//! - [`harness`]: configs, experiment runs, CSV and manifests.

pub mod bounds;
pub mod combinatorics;
pub mod dag;
pub mod gfn;
pub mod harness;
pub mod metrics;
pub mod par;
pub mod rewards;
pub mod rng;

pub use dag::{Element, ProblemInstance, StateSet, Trajectory};
pub use par::Execution;
