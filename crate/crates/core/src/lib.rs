//! Simulation and statistical analysis of continuous collapse models on
//! finite-dimensional Hilbert spaces.
//!
//! The central object is the diffusive stochastic master equation
//!
//! ```text
//! drho = L(rho) dt + gamma D[O](rho) dt + sqrt(eta gamma) H[O](rho) dW
//! ```
//!
//! together with its scalar qubit reduction
//! `dp = lambda (p_eq - p) dt + sqrt(gamma) p(1-p) dW`. The crate provides
//! reproducible seeded integrators for both ([`sde`]), a model catalog
//! ([`models`]), and statistical analyses of the collapse phenomenology:
//! Born-rule statistics and decay-rate fits ([`analysis::collapse`]),
//! emergent jump rates and their theoretical prediction
//! ([`analysis::jumps`]), spike excursion statistics ([`analysis::spikes`]),
//! and the classical hidden-Markov-model counterpart with forward and
//! forward-backward estimates ([`hmm`]).

pub mod analysis;
pub mod error;
pub mod hmm;
pub mod linalg;
pub mod models;
pub mod quantum;
pub mod report;
pub mod rng;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
