//! Differentially private split-based clustering (DPM) and its analysis toolkit.
//!
//! The crate is organised bottom-up:
//!
//! * [`datagen`] builds and loads datasets,
//! * [`dp`] holds the Laplace mechanism, shifted noisy counts, the exponential
//!   mechanism and privacy budget bookkeeping,
//! * [`splitting`] generates split candidates and scores them by emptiness and
//!   centreness,
//! * [`engine`] runs the recursive clustering itself,
//! * [`halting`] evaluates the closed-form halting-probability bounds and the
//!   Gaussian case study,
//! * [`silhouette`] computes silhouette scores and classifies how a split
//!   changes them,
//! * [`separability`] checks (ξ, ρ)-separability certificates and finds gaps in
//!   projections,
//! * [`simulate`] validates the analytic bounds by Monte Carlo and by exact
//!   enumeration on small instances.

// NaN-rejecting checks are written as !(x > 0.0) on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datagen;
pub mod dp;
pub mod engine;
mod error;
pub mod halting;
pub mod normal;
pub mod rng;
pub mod separability;
pub mod silhouette;
pub mod simulate;
pub mod splitting;
pub mod stats;

pub use error::{Error, Result};
