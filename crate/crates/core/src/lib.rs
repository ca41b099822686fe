//! Bayes-optimal inference for the spiked tensor model.
//!
//! An order-`p` symmetric tensor `Y = √((p−1)!)/N^{(p−1)/2} Σ_k x_k^{⊗p} + V`
//! is observed on its strictly increasing index tuples. This crate provides
//!
//! * storage and deterministic (optionally rayon-parallel) contraction kernels
//!   for such tensors ([`tensor`]),
//! * priors, channels and planted instances ([`model`]),
//! * finite-`N` approximate message passing ([`amp`]),
//! * state evolution ([`state_evolution`]) and the replica potential
//!   ([`free_energy`]),
//! * thresholds and phase diagrams ([`phase`]),
//! * exact small-`N` references ([`oracle`]).

pub mod amp;
pub mod error;
pub mod free_energy;
pub mod model;
pub mod oracle;
pub mod par;
pub mod phase;
pub mod quadrature;
pub mod rng;
pub mod state_evolution;
pub mod tensor;

pub use error::{Error, Result};
pub use par::Exec;
