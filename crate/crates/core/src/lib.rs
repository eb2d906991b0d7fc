//! Optimal-transport and kernel discrepancies between probability measures,
//! random-feature sketching and compressive learning, with numerical checks
//! of the inequalities relating Wasserstein distances and MMD.

pub mod discrepancy;
pub mod error;
pub mod kernels;
pub mod lab;
pub mod measures;
pub mod numerics;
pub mod report;
pub mod rng;
pub mod sketch;
pub mod tasks;
pub mod transport;

pub use error::{Error, Result};
