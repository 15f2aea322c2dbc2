//! Hybrid least-squares Monte Carlo / Fourier PDE pricing of Bermudan
//! options under one- and two-asset Heston dynamics.
//!
//! Variance paths are simulated once; conditional on each path the
//! log-asset PDE is solved exactly over an exercise interval by a spectral
//! step, and the per-path solutions are regressed on the variance to give
//! continuation surfaces `C_n(s, v)`.

// `!(x > 0.0)` is how parameter checks reject NaN along with bad values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod clustering;
pub mod error;
pub mod fst;
pub mod mlmc;
pub mod model;
pub mod par;
pub mod pricer;
pub mod regression;
pub mod stats;

pub use error::{Error, Result};
