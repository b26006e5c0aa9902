//! Causal impact of dated events on daily electricity demand.
//!
//! The crate fits Bayesian structural time-series models to pre-event data,
//! simulates counterfactual post-event paths and summarizes the effect per
//! calendar period. Companion modules align dates across years by day of
//! week, estimate a partial-adjustment panel model by GMM, run Levene and
//! Tukey HSD tests, and ingest utility and mobility files.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod align;
pub mod analysis;
pub mod bsts;
pub mod calendar;
pub mod error;
pub mod gmm;
pub mod impact;
pub mod ingest;
pub mod pipeline;
pub mod stats;
pub mod synth;

pub use error::{Error, ErrorClass, Result};
