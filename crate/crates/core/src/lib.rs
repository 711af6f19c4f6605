//! Finite-volume Gibbs measures of mean-field spin glasses, Ruelle probability
//! cascades, and statistical checks of the structure their overlap matrices
//! are expected to carry.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: spin configurations, covariance functions, Gaussian disorder
//!   and Hamiltonian evaluation.
//! - [`gibbs`]: exact Gibbs tables by Gray-code enumeration, replica sampling
//!   and the stochastically perturbed measure.
//! - [`observables`]: overlap matrices, monomial observables, nested
//!   disorder/replica estimates and weak-exchangeability tests.
//! - [`coalescent`]: the Bolthausen–Sznitman coalescent on `n` labels.
//! - [`rpc`]: parameter functions, the coalescent time-change, the
//!   Poisson–Dirichlet cascade and the Gaussian reweighting map.
//! - [`identities`]: Ghirlanda–Guerra checks and the coincidence
//!   (singularity) curve.
//! - [`oracle`]: every source of overlap matrices behind one trait, with a
//!   registry that builds them by name from JSON parameters.

// `!(x >= 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coalescent;
mod error;
pub mod gibbs;
pub mod identities;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod parallel;
pub mod rng;
pub mod rpc;
pub mod stats;

pub use error::{Error, Result};
