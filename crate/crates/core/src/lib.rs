//! Molecule propagation and reception in linear branched vessel networks.
//!
//! The pipeline runs network → hydraulic flow solve → per-pipe diffusion →
//! end-to-end impulse response → receiver signal, and the topology metrics
//! place each network in the (molecule delay, multi-path spread) plane.

pub mod convolution;
pub mod family;
pub mod hydraulics;
pub mod io;
pub mod metrics;
pub mod montecarlo;
pub mod network;
pub mod quadrature;
pub mod receiver;
pub mod scenario;
pub mod series;
pub mod transport;
