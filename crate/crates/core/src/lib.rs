//! Runtime safety monitors for image object detectors.
//!
//! Three monitors guard a detector: an operational-domain check on flight
//! metadata ([`odd`]), an out-of-distribution check on image statistics
//! ([`ood`]) and an out-of-model-scope check on detection features ([`oms`]).
//! [`safety`] scores monitored systems by safety gain, residual hazard and
//! availability cost, and [`pipeline`] wires everything together.

pub mod cli;
pub mod detect;
pub mod imaging;
pub mod odd;
pub mod oms;
pub mod ood;
pub mod pipeline;
pub mod safety;
pub mod synth;
pub mod trace_io;
pub mod verdict;
