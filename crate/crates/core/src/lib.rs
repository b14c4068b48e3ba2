//! Simulation and certification core for two random dynamical systems: a product
//! martingale diffusion on the unit cube and random Volterra polynomial stochastic
//! operators on the simplex.
//!
//! The crate is `no_std` with `alloc`. File formats, configuration and the experiment
//! runner live in the `rdslab` crate.

#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod certification;
pub mod diffusion;
pub mod error;
pub mod geometry;
pub mod noise;
pub mod properties;
pub mod seeding;
pub mod stats;
pub mod testsets;
pub mod vpso;

pub use error::{Error, Result};
