//! Random walks with internal states (RWwIS), a two-particle energy-exchange
//! model built on them, and scaled-type Markov renewal processes.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: single-particle walk definition, validation and moments.
//! * [`spectral`]: Fourier symbol, eigenvalue expansion, exact laws and
//!   first-return tails.
//! * [`collision`]: energy-exchange kernels and the induced energy chain.
//! * [`duet`]: event-driven simulation of the interacting pair.
//! * [`renewal`]: slowly varying renewal processes.
//! * [`mixture`]: the Gaussian mixture limit law and goodness-of-fit tests.
//! * [`stats`], [`survival`]: shared estimators.
//! * [`rng`]: reproducible per-trial random streams.

pub mod collision;
pub mod duet;
pub mod error;
pub mod mixture;
pub mod model;
pub mod renewal;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod survival;

pub use error::{Error, Result};
