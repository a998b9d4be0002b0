//! A desk-scale laboratory for the TopRank online learning-to-rank
//! algorithm and its iterated-logarithm refinement.
//!
//! The crate has three layers:
//!
//! * **Machinery** — click-model environments ([`env`]), the algorithm loop
//!   ([`toprank`]), and the confidence boundaries that gate its decisions
//!   ([`boundary`]), including the exact method-of-mixtures boundary and
//!   its asymptotic approximations.
//! * **Claims** — closed-form regret and per-pair bounds ([`theory`]).
//! * **Evidence** — Monte-Carlo validators that test the probability
//!   claims against live simulation ([`montecarlo`]).
//!
//! Everything is deterministic given a master seed ([`seeding`]); batch
//! runs are driven by TOML configs ([`config`]) through the command-line
//! entry points ([`cli`]).

pub mod boundary;
pub mod cli;
pub mod config;
pub mod env;
pub mod montecarlo;
pub mod seeding;
pub mod theory;
pub mod toprank;

pub use boundary::{BoundarySpec, BoundaryVariant, ThresholdTable};
pub use env::{ClickModel, ItemCatalog, ModelKind, Permutation};
pub use theory::BoundVariant;
pub use toprank::{run_episode, RegretTrace};
