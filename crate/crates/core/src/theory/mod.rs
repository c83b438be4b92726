//! Brute-force checks at desk scale: the decomposition gap on small MDPs and
//! packed hard-instance families.

mod gap;
mod hard;
mod mdp;

pub use gap::{
    gap_check, hierarchical_value, random_pair, tightness_instance, GapReport, HierarchicalDecomposition,
    HierarchicalSolution, PairParams, GAP_TOLERANCE,
};
pub use hard::{generate_hard_family, FamilyAudit, HardInstanceFamily, MAX_MEMBERS, MAX_PROPOSALS};
pub use mdp::{value_iteration, SmallMdp, ValueSolution, MAX_ACTIONS, MAX_STATES, ROW_SUM_TOL};
