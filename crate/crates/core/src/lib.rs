//! Singularly perturbed systems with state-dependent perturbation functions.
//!
//! The crate covers comparison-function algebra ([`comparison`]), model
//! definition and simulation ([`system`]), ISS-Lyapunov certificate checks
//! and perturbation-function synthesis ([`certificates`]), the shipped
//! application scenarios ([`apps`]) and a scenario runner ([`cli`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apps;
pub mod catalog;
pub mod certificates;
pub mod cli;
pub mod comparison;
pub mod error;
pub mod integrate;
pub mod report;
pub mod system;

pub use error::{Error, Result};
