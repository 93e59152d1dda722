//! Stacked multilevel-fusion GRU (SF-GRU) for pedestrian crossing anticipation.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense vectors/matrices, nonlinearities, Glorot init, a
//!   seeded PRNG and a central-difference gradient oracle.
//! - [`gru`]: the GRU cell with exact forward/backward passes, sequence
//!   unrolling, the linear read-out and binary cross-entropy.
//! - [`model`]: the six architectures (Static, GRU, M-GRU, H-GRU, S-GRU and
//!   SF-GRU) built from GRU cells, plus checkpoint I/O.
//! - [`features`]: box geometry, pose normalisation, displacement features,
//!   horizontal flip and observation windows.
//! - [`dataset`]: the JSON-lines track format, splitting, TTE-anchored window
//!   sampling, class balancing and a synthetic track generator.
//! - [`train`], [`metrics`], [`sweep`]: ADAM training, evaluation metrics and
//!   the experiment sweeps with CSV reports.
//! - [`gradcheck`], [`reference`]: analytic gradients against finite
//!   differences, with a loop-level double-double forward pass as backstop.
//! - [`cli`]: the `sfgru` command-line front end.
//!
//! Runnable walkthroughs live in `examples/`; see the README for the list.

// `!(x >= lo)` comparisons are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataset;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod gru;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod reference;
pub mod sweep;
pub mod train;

pub use error::{Error, Result};
pub use features::{BBox, FeatureKey, FrameFeatures, ObservationWindow, Pose};
pub use model::{Model, ModelKind, ModelParams, ModelSpec};
pub use numerics::{Matrix, Rng, Vector};
