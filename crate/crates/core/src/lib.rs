//! Task-driven synthesis of quasi-serial manipulators.
//!
//! The mechanism under study is a planar four-bar loop whose two actuated links
//! share an axis at the origin, with a rigid L-shaped upper arm fixed to the
//! rocker. The pipeline samples unit-normalized designs, keeps the ones that
//! close over the whole operating range, scales each to the smallest size whose
//! workspace covers a given task region, labels it with a workspace-usage ratio
//! and quasi-static joint torques, trains a neural surrogate on those labels,
//! searches the design space with a constrained evolutionary optimizer, and
//! finally mines the optimizer's output for human-readable design rules.

pub mod dynamics;
pub mod geometry;
pub mod mining;
pub mod moo;
pub mod sampler;
pub mod surrogate;

#[cfg(feature = "test-oracle")]
pub mod oracle;
