//! Conserved-money exchange economies: agent ensembles and their kinetic
//! exchange dynamics, credit and banking, distribution statistics and fits,
//! a Fokker-Planck continuum solver, and an exact master-equation oracle
//! for small systems.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod credit;
pub mod engine;
pub mod ensemble;
pub mod fit;
pub mod fokker_planck;
pub mod error;
pub mod kernel;
pub mod lets;
pub mod measures;
pub mod money;
pub mod oracle;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use money::{MoneyAmount, Rate};
