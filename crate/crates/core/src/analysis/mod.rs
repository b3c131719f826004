//! Statistical analyses of simulated ensembles.

pub mod collapse;
pub mod jumps;
pub mod spikes;
