//! Bayesian nonparametric analysis of repeated-attempt designs with
//! nonignorable missing outcomes.
//!
//! The observed data (outcome, attempt count, covariates, arm) are modeled
//! jointly by a truncated Dirichlet process mixture fitted with a blocked
//! Gibbs sampler ([`gibbs`]). The mean of the never-observed pattern is
//! identified by one of a small family of priors ([`extrapolation`]), and
//! the treatment effect is computed by Monte-Carlo integration over the
//! posterior draws ([`estimands`]). [`simulate`] and [`metrics`] reproduce
//! the simulation study; [`pipeline`] backs the `ram-dpm` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod error;
pub mod estimands;
pub mod extrapolation;
pub mod gibbs;
pub mod math;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod simulate;
pub mod slice;

pub use error::{Error, Result};
