//! Actor-critic learners on exactly solvable finite-horizon MDPs.
//!
//! The crate couples a family of online, rare-switching, and hybrid
//! offline+online actor-critic algorithms with exact dynamic-programming
//! oracles, so learned behavior can be audited against ground truth:
//! per-episode regret is exact, regret decompositions are algebraic
//! identities checked to machine precision, and switch counts and regret
//! growth rates are measured rather than assumed.
//!
//! Modules:
//! - [`mdp`]: tabular/linear MDPs, DP solvers, occupancy measures, sampling.
//! - [`envs`]: chain, random tabular/linear, and tetris constructors.
//! - [`approx`]: critics, TD losses, ridge/FQE/FQI fits, bonuses, triggers.
//! - [`policy`]: softmax actor with multiplicative-weights updates.
//! - [`algorithms`]: the episode-loop learners.
//! - [`offline`]: offline data generation, merging, concentrability.
//! - [`analysis`]: regret ledgers, decompositions, exponent fits.

// DP-style code indexes several parallel [h][s][a] tables in one loop;
// iterator rewrites obscure that.
#![allow(clippy::needless_range_loop)]

pub mod algorithms;
pub mod analysis;
pub mod approx;
pub mod envs;
pub mod mdp;
pub mod offline;
pub mod policy;

pub use algorithms::{Algo, AlgoConfig, EpisodeRecord, RunResult};
pub use analysis::{CriticSnapshot, ExponentFit, RegretLedger};
pub use approx::{BonusState, Critic, FunctionClass, StepDataset, SwitchRule};
pub use envs::{EnvConfig, EnvKind};
pub use mdp::{Env, LinearMdp, PolicyTable, TabularMdp, Trajectory, Transition, ValueTables};
pub use offline::OfflineDataset;
pub use policy::SoftmaxPolicy;
