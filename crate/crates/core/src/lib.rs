//! Deterministic layered spiking-neural-network simulator.
//!
//! The crate is organized around a fixed per-step pipeline: binary DVS frames
//! drive the first layer, Izhikevich neurons integrate gathered synaptic
//! current, and trace-based STDP reshapes feed-forward weights. Everything is
//! a pure function of (config, seed, stimulus): same inputs, bit-identical
//! rasters, weights and artifacts, independent of thread count.
//!
//! Modules:
//! - [`rng`]: the fully specified random stream (splitmix64 + xoshiro256++)
//! - [`topology`]: layered sheets, kernel connectivity, polarity, weights
//! - [`dynamics`]: Izhikevich update, current gather, input injection
//! - [`plasticity`]: spike traces, excitatory STDP, inhibitory STDP, bounds
//! - [`events`]: DVS event streams, binary frame batching, stimulus synthesis
//! - [`analytics`]: outgoing-weight entropy, PSTH windows, raster logs
//! - [`engine`]: the step orchestrator, checkpoints, benchmarks
//! - [`oracle`]: dense-matrix reference engine used to cross-check the
//!   sparse one

pub mod analytics;
pub mod config;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod events;
pub mod oracle;
pub mod plasticity;
pub mod rng;
pub mod topology;

pub use config::SimConfig;
pub use error::{Error, Result};
