//! Exact-diagonalization laboratory for disordered quantum spin systems: free-energy
//! concentration, order-parameter self-averaging and replica overlaps.

// `!(x > 0.0)` is how range checks here reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod disorder;
pub mod ensemble;
pub mod error;
pub mod gibbs;
pub mod model;
pub mod replica;
pub mod report;
pub mod selfcheck;
pub mod spin_algebra;
pub mod stats;

pub use error::{LabError, Result};
