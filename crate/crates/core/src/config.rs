//! Whole-simulation configuration: topology, plasticity, and engine/run
//! options, with strict (unknown-key-rejecting) serde parsing and a stable
//! content digest used to pair checkpoints with the config that produced
//! them.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::V_THRESHOLD_DEFAULT;
use crate::plasticity::PlasticityConfig;
use crate::topology::TopologyConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// simulated steps (1 step = 1 ms)
    pub steps: u64,
    /// scales binary frame cells into layer-1 input current
    pub input_gain: f64,
    /// spike threshold (mV)
    pub v_threshold: f64,
    /// event-batching window (ms)
    pub window_ms: u32,
    /// wrap back to the first frame when the stimulus runs out (otherwise
    /// the run stops there)
    pub loop_stimulus: bool,
    /// apply plasticity while running
    pub train: bool,
    /// spike-count (PSTH) window (ms)
    pub psth_window_ms: u32,
    /// write a checkpoint every this many steps (0 disables periodic
    /// checkpoints; a final one is always written when an output directory
    /// is given)
    pub checkpoint_every_steps: u64,
    /// write entropy maps every this many completed PSTH windows
    /// (0 disables periodic maps; final maps are always written)
    pub entropy_maps_every_windows: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            steps: 1000,
            input_gain: 20.0,
            v_threshold: V_THRESHOLD_DEFAULT,
            window_ms: 10,
            loop_stimulus: false,
            train: true,
            psth_window_ms: 300,
            checkpoint_every_steps: 10_000,
            entropy_maps_every_windows: 1,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.window_ms == 0 {
            return Err(crate::Error::config("window_ms must be at least 1"));
        }
        if self.psth_window_ms == 0 {
            return Err(crate::Error::config("psth_window_ms must be at least 1"));
        }
        if !self.input_gain.is_finite() || self.input_gain < 0.0 {
            return Err(crate::Error::config("input_gain must be finite and >= 0"));
        }
        if !self.v_threshold.is_finite() {
            return Err(crate::Error::config("v_threshold must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    /// DVSE stimulus file; absent means zero-input mode
    pub stimulus: Option<String>,
    /// artifact directory; absent means run without writing artifacts
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub topology: TopologyConfig,
    pub plasticity: PlasticityConfig,
    pub engine: EngineConfig,
    pub io: IoConfig,
}

impl SimConfig {
    pub fn validate(&self) -> crate::Result<()> {
        self.topology.validate()?;
        self.plasticity.validate()?;
        self.engine.validate()?;
        Ok(())
    }

    /// SHA-256 over the canonical JSON serialization. Field order is the
    /// struct declaration order, so equal configs digest equally.
    pub fn digest(&self) -> [u8; 32] {
        let json = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&json);
        hasher.finalize().into()
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
