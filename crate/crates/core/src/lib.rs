//! Benchmark engine for text-driven video-editing quality assessment.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`stats`]: per-subject z-score normalisation, MOS aggregation, five-level
//!   discretisation, ICC(2,1)/ICC(2,k) reliability and grouped descriptive tables.
//! * [`correlation`]: SRCC, PLCC and KRCC (tau-b) with exact tie handling.
//! * [`manifest`]: dataset manifest and ratings/predictions file formats.
//! * [`session`]: the protocol-enforcing rating session service.
//! * [`harness`]: seeded split trials, leaderboards and report emission.
//! * [`head`]: reference quality-regression head, LoRA arithmetic and trainer.
//! * [`cli`]: the `editqa` command-line front end.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod correlation;
mod dimension;
pub mod harness;
pub mod head;
pub mod manifest;
pub mod seed;
pub mod session;
pub mod stats;

pub use dimension::{Dimension, ParseDimensionError};
