//! Quantifying multimodal interactions over discrete distributions.
//!
//! Given the labeled unimodal marginals `p(x1, y)`, `p(x2, y)` and the
//! unlabeled paired marginal `p(x1, x2)`, this crate computes
//!
//! * redundancy and uniqueness exactly ([`pid`]),
//! * lower and upper bounds on synergy ([`bounds`]) using max-entropy
//!   programs ([`maxent`]) and min-entropy coupling bounds ([`coupling`]),
//! * bounds on the accuracy of the Bayes-optimal multimodal classifier
//!   ([`performance`]).
//!
//! [`synthetic`] provides the canonical example distributions and random
//! sweeps, and [`ingest`] turns real-valued features into the discrete
//! marginals the estimators consume. All information quantities are in bits.

pub mod bounds;
pub mod coupling;
pub mod dist;
pub mod error;
pub mod ingest;
pub mod io;
pub mod maxent;
pub mod oracle;
pub mod performance;
pub mod pid;
pub mod synthetic;

pub use bounds::{bounds_summary, DisagreementConfig, SynergyBounds};
pub use coupling::{greedy_coupling, CouplingResult};
pub use dist::{
    conditional_mutual_info, conditionals_from_marginal, entropy, interaction_info, mutual_info,
    pairwise_marginals, Axis, DiscreteJoint, MarginalDistribution, PairwiseMarginals,
};
pub use error::{Error, Result};
pub use maxent::{solve_q_star, solve_r_star, MaxEntSolution, SolverConfig};
pub use ingest::{Discretizer, IngestOptions};
pub use performance::{estimate_for_marginals, PerformanceBounds};
pub use pid::{compute_pid_full, compute_rui, PidResult};
pub use synthetic::{canonical, run_sweep, CanonicalName, SweepConfig, SweepReport};
