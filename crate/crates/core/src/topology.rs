//! Network construction: layered 2-D sheets, kernel-box connectivity,
//! polarity assignment and initial weights.
//!
//! Everything here is a pure function of `(TopologyConfig, seed)`. The draw
//! order is normative so two builds of the same config are bit-identical:
//! first polarity flags (layer-major), then per-neuron parameter
//! randomization (layer-major, row-major), then synapses (layer-major,
//! pre-neuron row-major, feed-forward targets row-major, then lateral
//! targets row-major). Each candidate consumes one keep draw; a kept
//! candidate consumes one more for its weight.

use serde::{Deserialize, Serialize};

use crate::dynamics::NeuronParams;
use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Dimensions of one neuron sheet. All layers in a network share them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub width: u32,
    pub height: u32,
}

impl LayerSpec {
    pub fn new(width: u32, height: u32) -> Self {
        LayerSpec { width, height }
    }

    pub fn len(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat row-major index of (row, col).
    pub fn idx(&self, row: u32, col: u32) -> usize {
        row as usize * self.width as usize + col as usize
    }

    pub fn coords(&self, idx: usize) -> (u32, u32) {
        ((idx / self.width as usize) as u32, (idx % self.width as usize) as u32)
    }

    pub fn contains(&self, row: u32, col: u32) -> bool {
        row < self.height && col < self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Excitatory,
    Inhibitory,
}

/// Initial weight assignment for kept synapses.
///
/// `Equal` gives every synapse the full cap magnitude, which starts the
/// network at maximum outgoing-weight entropy and leaves depression as the
/// only direction plasticity can move first. `UniformRandom` draws
/// magnitudes uniformly on (0, max].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightInit {
    Equal,
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub num_layers: u32,
    #[serde(flatten)]
    pub layer: LayerSpec,
    /// Odd side length of the feed-forward kernel box.
    pub kernel_ff: u32,
    /// Odd side length of the lateral kernel box.
    pub kernel_lat: u32,
    pub p_keep_ff: f64,
    pub p_keep_lat: f64,
    pub inhibitory_fraction: f64,
    pub w_init_max_exc: f64,
    pub w_init_max_inh_mag: f64,
    pub init_weights: WeightInit,
    pub seed: u64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            num_layers: 3,
            layer: LayerSpec::new(32, 32),
            kernel_ff: 5,
            kernel_lat: 5,
            p_keep_ff: 0.20,
            p_keep_lat: 0.30,
            inhibitory_fraction: 0.20,
            w_init_max_exc: 7.0,
            w_init_max_inh_mag: 30.0,
            init_weights: WeightInit::Equal,
            seed: 42,
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers < 2 {
            return Err(Error::config("num_layers must be at least 2"));
        }
        if self.layer.width < 1 || self.layer.height < 1 {
            return Err(Error::config("layer dimensions must be at least 1x1"));
        }
        for (name, side) in [("kernel_ff", self.kernel_ff), ("kernel_lat", self.kernel_lat)] {
            if side < 1 || side % 2 == 0 {
                return Err(Error::config(format!("{name} must be odd and >= 1, got {side}")));
            }
        }
        for (name, p) in [
            ("p_keep_ff", self.p_keep_ff),
            ("p_keep_lat", self.p_keep_lat),
            ("inhibitory_fraction", self.inhibitory_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} must lie in [0,1], got {p}")));
            }
        }
        // NaN must fail too, hence the explicit check
        if self.w_init_max_exc.is_nan()
            || self.w_init_max_exc <= 0.0
            || self.w_init_max_inh_mag.is_nan()
            || self.w_init_max_inh_mag <= 0.0
        {
            return Err(Error::config("initial weight maxima must be positive"));
        }
        Ok(())
    }
}

/// One incoming synapse entry. The kind (feed-forward vs lateral) is encoded
/// by position: entries before the post neuron's `ff_end` split are
/// feed-forward (pre lives in the previous layer), the rest are lateral
/// (pre lives in the same layer).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Synapse {
    pub pre: u32,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynapseKind {
    FeedForward,
    Lateral,
}

/// Incoming-indexed connectivity for one layer, CSR-style.
///
/// Canonical order per post neuron: feed-forward entries first, then
/// lateral, each ascending by pre index. Plasticity mutates weights in
/// place and never reorders.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerConnectivity {
    /// len = n + 1; entry range of post i is offsets[i]..offsets[i+1]
    pub offsets: Vec<u32>,
    /// len = n; absolute index where post i's lateral entries begin
    pub ff_end: Vec<u32>,
    pub entries: Vec<Synapse>,
}

impl LayerConnectivity {
    pub fn num_posts(&self) -> usize {
        self.ff_end.len()
    }

    pub fn incoming(&self, post: usize) -> &[Synapse] {
        &self.entries[self.offsets[post] as usize..self.offsets[post + 1] as usize]
    }

    pub fn incoming_ff(&self, post: usize) -> &[Synapse] {
        &self.entries[self.offsets[post] as usize..self.ff_end[post] as usize]
    }

    pub fn incoming_lat(&self, post: usize) -> &[Synapse] {
        &self.entries[self.ff_end[post] as usize..self.offsets[post + 1] as usize]
    }

    pub fn kind_of(&self, post: usize, entry_idx: usize) -> SynapseKind {
        if (entry_idx as u32) < self.ff_end[post] {
            SynapseKind::FeedForward
        } else {
            SynapseKind::Lateral
        }
    }
}

/// All layers' incoming connectivity. `layers[0]` has an empty feed-forward
/// part (layer 1 is driven by the stimulus, not by synapses).
#[derive(Debug, Clone, PartialEq)]
pub struct SynapseTable {
    pub layers: Vec<LayerConnectivity>,
}

impl SynapseTable {
    pub fn total_synapses(&self) -> u64 {
        self.layers.iter().map(|l| l.entries.len() as u64).sum()
    }

    /// Derive the outgoing feed-forward view for the given pre layer:
    /// for each pre neuron, the weights of its kept synapses into the next
    /// layer. Entry order follows the incoming canonical order, which is
    /// irrelevant to the entropy computed from it.
    pub fn outgoing_ff_weights(&self, pre_layer: usize, n_pre: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); n_pre];
        if pre_layer + 1 >= self.layers.len() {
            return out;
        }
        let next = &self.layers[pre_layer + 1];
        for post in 0..next.num_posts() {
            for syn in next.incoming_ff(post) {
                out[syn.pre as usize].push(syn.weight);
            }
        }
        out
    }
}

/// Per-layer neuron population: immutable parameters and polarity flags.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerPopulation {
    pub params: Vec<NeuronParams>,
    pub polarity: Vec<Polarity>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: LayerSpec,
    pub populations: Vec<LayerPopulation>,
    pub synapses: SynapseTable,
}

impl Network {
    pub fn num_layers(&self) -> usize {
        self.populations.len()
    }

    pub fn layer_len(&self) -> usize {
        self.spec.len()
    }

    pub fn total_neurons(&self) -> usize {
        self.layer_len() * self.num_layers()
    }

    /// Flat id across layers, used in raster logs and count dumps.
    pub fn global_id(&self, layer: usize, idx: usize) -> u32 {
        (layer * self.layer_len() + idx) as u32
    }
}

/// All in-bounds coordinates of the `side`x`side` box centered at `center`,
/// row-major. Boxes are clipped at the sheet border; there is no wraparound.
pub fn kernel_targets(spec: LayerSpec, center: (u32, u32), side: u32) -> Result<Vec<(u32, u32)>> {
    if !spec.contains(center.0, center.1) {
        return Err(Error::invalid_argument(format!(
            "kernel center ({}, {}) outside {}x{} sheet",
            center.0, center.1, spec.height, spec.width
        )));
    }
    if side % 2 == 0 || side == 0 {
        return Err(Error::invalid_argument(format!("kernel side must be odd, got {side}")));
    }
    let mut coords = Vec::new();
    for_each_kernel_target(spec, center, side, |row, col| coords.push((row, col)));
    Ok(coords)
}

#[inline]
fn for_each_kernel_target(spec: LayerSpec, center: (u32, u32), side: u32, mut f: impl FnMut(u32, u32)) {
    let half = (side / 2) as i64;
    let row_lo = (center.0 as i64 - half).max(0) as u32;
    let row_hi = (center.0 as i64 + half).min(spec.height as i64 - 1) as u32;
    let col_lo = (center.1 as i64 - half).max(0) as u32;
    let col_hi = (center.1 as i64 + half).min(spec.width as i64 - 1) as u32;
    for row in row_lo..=row_hi {
        for col in col_lo..=col_hi {
            f(row, col);
        }
    }
}

fn draw_weight(rng: &mut RandomStream, pre: Polarity, config: &TopologyConfig) -> f64 {
    match (config.init_weights, pre) {
        (WeightInit::Equal, Polarity::Excitatory) => config.w_init_max_exc,
        (WeightInit::Equal, Polarity::Inhibitory) => -config.w_init_max_inh_mag,
        (WeightInit::UniformRandom, Polarity::Excitatory) => rng.uniform_pos(config.w_init_max_exc),
        (WeightInit::UniformRandom, Polarity::Inhibitory) => -rng.uniform_pos(config.w_init_max_inh_mag),
    }
}

/// Build populations, polarity and the synapse table from a config.
/// Construction is single-threaded and bit-reproducible.
pub fn build_network(config: &TopologyConfig) -> Result<Network> {
    config.validate()?;
    let spec = config.layer;
    let n = spec.len();
    let num_layers = config.num_layers as usize;
    let mut rng = RandomStream::new(config.seed);

    // polarity flags, one seeded shuffle per layer
    let n_inh = (config.inhibitory_fraction * n as f64).round() as usize;
    let mut polarity: Vec<Vec<Polarity>> = Vec::with_capacity(num_layers);
    for _ in 0..num_layers {
        let mut flags = vec![Polarity::Excitatory; n];
        let mut order: Vec<u32> = (0..n as u32).collect();
        rng.shuffle(&mut order);
        for &i in order.iter().take(n_inh) {
            flags[i as usize] = Polarity::Inhibitory;
        }
        polarity.push(flags);
    }

    // per-neuron reset randomization
    let mut populations: Vec<LayerPopulation> = Vec::with_capacity(num_layers);
    for flags in polarity {
        let params = (0..n).map(|_| NeuronParams::randomized_rs(rng.next_f64())).collect();
        populations.push(LayerPopulation { params, polarity: flags });
    }

    // synapse draws; per-post buckets stay pre-sorted because pre iterates
    // in increasing order
    let mut ff_in: Vec<Vec<Vec<Synapse>>> = (0..num_layers).map(|_| vec![Vec::new(); n]).collect();
    let mut lat_in: Vec<Vec<Vec<Synapse>>> = (0..num_layers).map(|_| vec![Vec::new(); n]).collect();
    for layer in 0..num_layers {
        for pre in 0..n {
            let center = spec.coords(pre);
            let pre_pol = populations[layer].polarity[pre];
            if layer + 1 < num_layers {
                let next_ff = &mut ff_in[layer + 1];
                for_each_kernel_target(spec, center, config.kernel_ff, |row, col| {
                    if rng.keep(config.p_keep_ff) {
                        let weight = draw_weight(&mut rng, pre_pol, config);
                        next_ff[spec.idx(row, col)].push(Synapse { pre: pre as u32, weight });
                    }
                });
            }
            let same_lat = &mut lat_in[layer];
            for_each_kernel_target(spec, center, config.kernel_lat, |row, col| {
                if (row, col) == center {
                    return;
                }
                if rng.keep(config.p_keep_lat) {
                    let weight = draw_weight(&mut rng, pre_pol, config);
                    same_lat[spec.idx(row, col)].push(Synapse { pre: pre as u32, weight });
                }
            });
        }
    }

    // assemble CSR, feed-forward entries before lateral per post
    let mut layers = Vec::with_capacity(num_layers);
    for (ff_buckets, lat_buckets) in ff_in.into_iter().zip(lat_in) {
        let mut offsets = Vec::with_capacity(n + 1);
        let mut ff_end = Vec::with_capacity(n);
        let mut entries = Vec::new();
        offsets.push(0u32);
        for (ff, lat) in ff_buckets.into_iter().zip(lat_buckets) {
            entries.extend(ff);
            ff_end.push(entries.len() as u32);
            entries.extend(lat);
            offsets.push(entries.len() as u32);
        }
        layers.push(LayerConnectivity { offsets, ff_end, entries });
    }

    Ok(Network { spec, populations, synapses: SynapseTable { layers } })
}
