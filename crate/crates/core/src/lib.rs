//! Constrained Bayesian optimization for closed-loop MPC tuning.
//!
//! The tuner treats a simulated CSTR as a black box and searches jointly over
//! the MPC's NARX prediction-model coefficients and a temperature backoff,
//! using GP surrogates for the closed-loop objective and the chance
//! constraint.

pub mod acquisition;
pub mod app;
pub mod benchmarks;
pub mod bo;
pub mod config;
pub mod error;
pub mod gp;
pub mod harness;
pub mod mpc;
pub mod narx;
pub mod optim;
pub mod plant;
pub mod rng;

pub use error::{Error, Result};
