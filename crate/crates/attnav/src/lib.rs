//! A desk-scale object-goal navigation workbench.
//!
//! The crate bundles everything needed to train, evaluate, and inspect a
//! recurrent attention policy that hunts typed objects in procedurally
//! generated gridworld rooms:
//!
//! * [`tensor`] — dense `f64` tensors plus a tape-based reverse-mode
//!   autodiff graph, finite-difference gradient checking, and a binary
//!   named-tensor checkpoint format.
//! * [`gridworld`] — discrete rooms (walls, typed objects, height bands),
//!   agent kinematics (45° headings, camera tilt), visibility and success
//!   rules, a BFS shortest-path oracle, and procedural scene generation.
//! * [`observe`] — egocentric rendering of a scene into an `n_v × n_v`
//!   feature-map grid of class codes, and frozen target-class embeddings.
//! * [`attention`] — the spatial attention stack: cosine potentials for
//!   target / previous-action / memory cues, per-cue softmax distributions,
//!   and log-space fusion weighted by a learned β head.
//! * [`policy`] — the recurrent actor-critic built on the attention stack,
//!   with its navigation loss, a self-supervised interaction loss, and a
//!   first-order in-episode adaptation step.
//! * [`trainer`] — synchronous advantage actor-critic over parallel
//!   workers, Adam updates, ablation switches, and checkpointing.
//! * [`evaluator`] — greedy evaluation with success rate, path-length
//!   weighted success (SPL), hard-episode subsets, β statistics, and a
//!   structured-text report.
//! * [`cli`] — the `attnav` binary: scene generation, training,
//!   evaluation, rollout traces, gradient checks, and attention exports.
//!
//! Runnable walkthroughs for each capability live under `examples/`
//! (`cargo run --release --example <name>`).

pub mod attention;
pub mod cli;
pub mod evaluator;
pub mod gridworld;
pub mod observe;
pub mod policy;
pub mod rollout;
pub mod seeding;
pub mod tensor;
pub mod trainer;

#[cfg(test)]
pub(crate) mod testkit;
