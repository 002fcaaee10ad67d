//! Dense reference implementation of the step semantics.
//!
//! Deliberately simple: per layer, full `n x n` weight matrices plus keep
//! masks, and straightforward loops in the canonical order (feed-forward
//! then lateral, ascending pre). No CSR, no double-buffer trickery beyond
//! the same prev/curr swap, no parallelism. It exists solely to cross-check
//! the sparse engine, which must match it bitwise on spikes and weights.

use crate::config::SimConfig;
use crate::dynamics::{self, NeuronParams, NeuronState};
use crate::error::Result;
use crate::plasticity;
use crate::topology::{build_network, LayerSpec, Network, Polarity};

/// Dense weight matrices for one layer. Flat `[pre * n + post]` indexing;
/// the feed-forward pair is empty for the first layer.
struct DenseLayer {
    ff_w: Vec<f64>,
    ff_mask: Vec<bool>,
    lat_w: Vec<f64>,
    lat_mask: Vec<bool>,
}

pub struct DenseOracle {
    config: SimConfig,
    spec: LayerSpec,
    polarity: Vec<Vec<Polarity>>,
    params: Vec<Vec<NeuronParams>>,
    states: Vec<Vec<NeuronState>>,
    traces: Vec<Vec<f64>>,
    spikes_prev: Vec<Vec<bool>>,
    spikes_curr: Vec<Vec<bool>>,
    layers: Vec<DenseLayer>,
    step: u64,
}

impl DenseOracle {
    /// Build from a config, constructing the same network the engine would.
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let net = build_network(&config.topology)?;
        Ok(Self::from_network(&net, config))
    }

    /// Densify an existing network (shared with an engine under test).
    pub fn from_network(net: &Network, config: &SimConfig) -> Self {
        let n = net.layer_len();
        let num_layers = net.num_layers();
        let mut layers = Vec::with_capacity(num_layers);
        for (l, conn) in net.synapses.layers.iter().enumerate() {
            let ff_len = if l == 0 { 0 } else { n * n };
            let mut dense = DenseLayer {
                ff_w: vec![0.0; ff_len],
                ff_mask: vec![false; ff_len],
                lat_w: vec![0.0; n * n],
                lat_mask: vec![false; n * n],
            };
            for post in 0..n {
                for syn in conn.incoming_ff(post) {
                    let at = syn.pre as usize * n + post;
                    dense.ff_w[at] = syn.weight;
                    dense.ff_mask[at] = true;
                }
                for syn in conn.incoming_lat(post) {
                    let at = syn.pre as usize * n + post;
                    dense.lat_w[at] = syn.weight;
                    dense.lat_mask[at] = true;
                }
            }
            layers.push(dense);
        }
        DenseOracle {
            config: config.clone(),
            spec: net.spec,
            polarity: net.populations.iter().map(|p| p.polarity.clone()).collect(),
            params: net.populations.iter().map(|p| p.params.clone()).collect(),
            states: vec![vec![NeuronState::rest(); n]; num_layers],
            traces: vec![vec![0.0; n]; num_layers],
            spikes_prev: vec![vec![false; n]; num_layers],
            spikes_curr: vec![vec![false; n]; num_layers],
            layers,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One full step; `frame` drives the first layer (None means silence).
    /// Returns the spike flags of this step, per layer.
    pub fn step(&mut self, frame: Option<&[u8]>) -> Vec<Vec<bool>> {
        let n = self.spec.len();
        let num_layers = self.layers.len();
        let vth = self.config.engine.v_threshold;
        let gain = self.config.engine.input_gain;

        for l in 0..num_layers {
            for post in 0..n {
                let input = if l == 0 {
                    match frame {
                        Some(f) => gain * f[post] as f64,
                        None => 0.0,
                    }
                } else {
                    let dense = &self.layers[l];
                    let below = &self.spikes_prev[l - 1];
                    let same = &self.spikes_prev[l];
                    let mut sum = 0.0;
                    for pre in 0..n {
                        let at = pre * n + post;
                        if dense.ff_mask[at] && below[pre] {
                            sum += dense.ff_w[at];
                        }
                    }
                    for pre in 0..n {
                        let at = pre * n + post;
                        if dense.lat_mask[at] && same[pre] {
                            sum += dense.lat_w[at];
                        }
                    }
                    sum
                };
                let (next, fired) =
                    dynamics::izhikevich_step(self.states[l][post], &self.params[l][post], input, vth);
                self.states[l][post] = next;
                self.spikes_curr[l][post] = fired;
            }
        }

        let factor = plasticity::trace_decay_factor(1.0, self.config.plasticity.tau_trace);
        for traces in &mut self.traces {
            for t in traces.iter_mut() {
                *t *= factor;
            }
        }

        if self.config.engine.train {
            for l in 1..num_layers {
                self.dense_stdp(l);
                self.dense_istdp(l);
            }
        }

        for (traces, fired) in self.traces.iter_mut().zip(&self.spikes_curr) {
            for (t, &f) in traces.iter_mut().zip(fired) {
                if f {
                    *t = plasticity::TRACE_MAX;
                }
            }
        }

        if self.config.engine.train {
            for l in 0..num_layers {
                self.dense_clamp(l);
            }
        }

        std::mem::swap(&mut self.spikes_prev, &mut self.spikes_curr);
        self.step += 1;
        self.spikes_prev.clone()
    }

    fn dense_stdp(&mut self, l: usize) {
        let n = self.spec.len();
        let cfg = &self.config.plasticity;
        let dense = &mut self.layers[l];
        let pre_polarity = &self.polarity[l - 1];
        let pre_fired = &self.spikes_curr[l - 1];
        let post_fired = &self.spikes_curr[l];
        let traces_pre = &self.traces[l - 1];
        let traces_post = &self.traces[l];
        for post in 0..n {
            let t_post = traces_post[post];
            let post_spk = post_fired[post];
            for pre in 0..n {
                let at = pre * n + post;
                if !dense.ff_mask[at] || pre_polarity[pre] != Polarity::Excitatory {
                    continue;
                }
                let mut w = dense.ff_w[at];
                if cfg.potentiate_on_pre_spike {
                    if post_spk {
                        w -= cfg.a_ltd * w * traces_pre[pre];
                    }
                    if pre_fired[pre] {
                        w += cfg.a_ltp * w * t_post;
                    }
                } else {
                    if pre_fired[pre] {
                        w -= cfg.a_ltd * w * t_post;
                    }
                    if post_spk {
                        w += cfg.a_ltp * w * traces_pre[pre];
                    }
                }
                dense.ff_w[at] = w.clamp(0.0, cfg.w_max_exc);
            }
        }
    }

    fn dense_istdp(&mut self, l: usize) {
        let cfg = &self.config.plasticity;
        if !cfg.istdp_enabled {
            return;
        }
        let n = self.spec.len();
        let alpha = cfg.istdp_alpha();
        let dense = &mut self.layers[l];
        let pre_polarity = &self.polarity[l - 1];
        let post_polarity = &self.polarity[l];
        let pre_fired = &self.spikes_curr[l - 1];
        let post_fired = &self.spikes_curr[l];
        let traces_pre = &self.traces[l - 1];
        let traces_post = &self.traces[l];
        for post in 0..n {
            if post_polarity[post] != Polarity::Excitatory {
                continue;
            }
            let t_post = traces_post[post];
            let post_spk = post_fired[post];
            for pre in 0..n {
                let at = pre * n + post;
                if !dense.ff_mask[at] || pre_polarity[pre] != Polarity::Inhibitory {
                    continue;
                }
                let mut mag = -dense.ff_w[at];
                if pre_fired[pre] {
                    mag += cfg.istdp_eta * (t_post - alpha);
                }
                if post_spk {
                    mag += cfg.istdp_eta * traces_pre[pre];
                }
                dense.ff_w[at] = -mag.clamp(0.0, cfg.w_max_inh_mag);
            }
        }
    }

    fn dense_clamp(&mut self, l: usize) {
        let n = self.spec.len();
        let cfg = &self.config.plasticity;
        let dense = &mut self.layers[l];
        if l > 0 {
            let pre_polarity = &self.polarity[l - 1];
            for pre in 0..n {
                for post in 0..n {
                    let at = pre * n + post;
                    if !dense.ff_mask[at] {
                        continue;
                    }
                    dense.ff_w[at] = match pre_polarity[pre] {
                        Polarity::Excitatory => dense.ff_w[at].clamp(0.0, cfg.w_max_exc),
                        Polarity::Inhibitory => dense.ff_w[at].clamp(-cfg.w_max_inh_mag, 0.0),
                    };
                }
            }
        }
        let pre_polarity = &self.polarity[l];
        for pre in 0..n {
            for post in 0..n {
                let at = pre * n + post;
                if !dense.lat_mask[at] {
                    continue;
                }
                dense.lat_w[at] = match pre_polarity[pre] {
                    Polarity::Excitatory => dense.lat_w[at].clamp(0.0, cfg.w_max_exc),
                    Polarity::Inhibitory => dense.lat_w[at].clamp(-cfg.w_max_inh_mag, 0.0),
                };
            }
        }
    }

    /// Largest absolute weight difference against a sparse network's
    /// synapses, over every kept synapse. Infinity if the connectivity
    /// itself disagrees (an entry the mask does not know about).
    pub fn max_weight_delta(&self, net: &Network) -> f64 {
        let n = self.spec.len();
        let mut max = 0.0f64;
        for (l, conn) in net.synapses.layers.iter().enumerate() {
            let dense = &self.layers[l];
            for post in 0..n {
                for syn in conn.incoming_ff(post) {
                    let at = syn.pre as usize * n + post;
                    if !dense.ff_mask[at] {
                        return f64::INFINITY;
                    }
                    max = max.max((syn.weight - dense.ff_w[at]).abs());
                }
                for syn in conn.incoming_lat(post) {
                    let at = syn.pre as usize * n + post;
                    if !dense.lat_mask[at] {
                        return f64::INFINITY;
                    }
                    max = max.max((syn.weight - dense.lat_w[at]).abs());
                }
            }
        }
        max
    }
}
