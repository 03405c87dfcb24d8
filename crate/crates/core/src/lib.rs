//! Multiple-step greedy policy iteration for finite MDPs.
//!
//! The crate covers exact κ-PI, the two-timescale online variant, the
//! approximate κ-API / κ-PSDP schemes with a controlled-error greedy oracle,
//! and the concentrability coefficients that enter their error bounds.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod cli;
pub mod concentrability;
pub mod error;
pub mod garnet;
pub mod io;
pub mod kappa;
pub mod linalg;
pub mod mdp;
pub mod mixture;
pub mod online;
pub mod verify;

pub use error::{Error, Result};
pub use mdp::{Mdp, Policy, QFunction, StateDistribution, ValueFunction};
