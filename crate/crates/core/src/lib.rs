//! Membership-inference auditing for small language models through
//! gradient-induced feature drift.
//!
//! The crate trains a toy transformer on a synthetic question-answering world,
//! nudges it by one gradient-ascent step per candidate sample, and measures how
//! its loss, target logit, probe projection and final hidden state move. A
//! logistic-regression classifier over those measurements decides membership;
//! loss-based baselines are scored on the same samples for comparison.

pub mod attacks;
pub mod autodiff;
pub mod classifier;
pub mod corpus;
pub mod error;
pub mod fsutil;
pub mod harness;
pub mod lm;
pub mod seed;

pub use error::{Error, Result};
