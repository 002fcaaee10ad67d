//! Step orchestration: the normative per-step phase order across layers,
//! artifact-producing runs, binary checkpoints, and a throughput benchmark.
//!
//! Phase order within one 1 ms step:
//!   1. layer-1 input currents from the current stimulus frame;
//!   2. currents for higher layers gathered from the previous step's spike
//!      buffer (one-step transmission latency via double buffering);
//!   3. membrane update and spike detection for every neuron, filling the
//!      current spike buffer;
//!   4. trace decay;
//!   5. weight updates (when training) from the current step's spikes and
//!      the pre-bump traces;
//!   6. trace bump for the current step's spikes;
//!   7. weight clamping;
//!   8. buffer swap, counters, spike-count windows, raster.
//!
//! Every phase is deterministic and bitwise independent of the rayon worker
//! count: current gathering is per-post in canonical order, weight updates
//! are partitioned by post neuron, and no phase overlaps another.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::analytics::{self, EntropyMap, RasterLog, SpikeCountWindow, SpikeCounts};
use crate::config::SimConfig;
use crate::dynamics::{self, NeuronParams, NeuronState};
use crate::error::{Error, Result};
use crate::events::{self, FrameSequence};
use crate::plasticity;
use crate::rng::RandomStream;
use crate::topology::{
    build_network, LayerConnectivity, LayerPopulation, Network, Polarity, Synapse, SynapseTable,
};

/// Layers with at least this many neurons run their per-neuron phase on the
/// rayon pool; smaller layers stay serial. Results are bitwise identical
/// either way, so this is purely a scheduling threshold.
pub const PAR_MIN_NEURONS: usize = 4096;

const CHECKPOINT_MAGIC: [u8; 4] = *b"SNNC";
const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepReport {
    pub step: u64,
    pub spikes_per_layer: Vec<u32>,
}

/// Per-window line item of a run: spike totals and mean defined
/// excitatory-class entropy per layer (None where no neuron has 2+
/// outgoing feed-forward synapses, e.g. the last layer).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSummary {
    pub index: u64,
    pub spikes_per_layer: Vec<u64>,
    pub mean_e_exc: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps_run: u64,
    pub total_spikes_per_layer: Vec<u64>,
    pub final_mean_e_exc: Vec<Option<f64>>,
    pub windows: Vec<WindowSummary>,
}

pub struct Simulation {
    config: SimConfig,
    net: Network,
    states: Vec<Vec<NeuronState>>,
    traces: Vec<Vec<f64>>,
    spikes_prev: Vec<Vec<bool>>,
    spikes_curr: Vec<Vec<bool>>,
    step: u64,
    /// runtime stream; no phase draws from it today, but it is part of the
    /// checkpointed state so future stochastic phases stay resume-exact
    rng: RandomStream,
    frames: Option<FrameSequence>,
    input_scratch: Vec<f64>,
    psth: SpikeCounts,
    completed_windows: Vec<SpikeCountWindow>,
    raster: RasterLog,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let net = build_network(&config.topology)?;
        Ok(Self::from_parts(config, net, None))
    }

    fn from_parts(config: SimConfig, net: Network, restored: Option<RestoredState>) -> Self {
        let n = net.layer_len();
        let num_layers = net.num_layers();
        let total = n * num_layers;
        let psth_window = config.engine.psth_window_ms;
        let rng_seed = config.topology.seed;
        match restored {
            Some(r) => Simulation {
                config,
                net,
                states: r.states,
                traces: r.traces,
                spikes_prev: r.spikes_prev,
                spikes_curr: r.spikes_curr,
                step: r.step,
                rng: RandomStream::from_state(r.rng_state),
                frames: None,
                input_scratch: vec![0.0; n],
                psth: SpikeCounts {
                    window_ms: psth_window,
                    window_index: r.psth_window_index,
                    current: r.psth_counts,
                },
                completed_windows: Vec::new(),
                raster: RasterLog::default(),
            },
            None => Simulation {
                config,
                net,
                states: vec![vec![NeuronState::rest(); n]; num_layers],
                traces: vec![vec![0.0; n]; num_layers],
                spikes_prev: vec![vec![false; n]; num_layers],
                spikes_curr: vec![vec![false; n]; num_layers],
                step: 0,
                rng: RandomStream::new(rng_seed),
                frames: None,
                input_scratch: vec![0.0; n],
                psth: SpikeCounts::new(psth_window, total),
                completed_windows: Vec::new(),
                raster: RasterLog::default(),
            },
        }
    }

    /// Attach a batched stimulus. Frame dimensions must match the layers.
    pub fn attach_frames(&mut self, frames: FrameSequence) -> Result<()> {
        if frames.spec != self.net.spec {
            return Err(Error::invalid_argument(format!(
                "stimulus frames are {}x{} but layers are {}x{}",
                frames.spec.width, frames.spec.height, self.net.spec.width, self.net.spec.height
            )));
        }
        self.frames = Some(frames);
        Ok(())
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn raster(&self) -> &RasterLog {
        &self.raster
    }

    pub fn completed_windows(&self) -> &[SpikeCountWindow] {
        &self.completed_windows
    }

    /// Spike flags of the most recently completed step (all layers).
    pub fn spikes_last_step(&self) -> &[Vec<bool>] {
        &self.spikes_prev
    }

    pub fn entropy_map(&self) -> EntropyMap {
        analytics::layer_entropy_map(&self.net)
    }

    /// True when a non-looping stimulus has run out of frames.
    pub fn stimulus_exhausted(&self) -> bool {
        match &self.frames {
            Some(frames) => {
                !self.config.engine.loop_stimulus
                    && (self.step / frames.window_ms as u64) as usize >= frames.frames.len()
            }
            None => false,
        }
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let num_layers = self.net.num_layers();
        let n = self.net.layer_len();
        let vth = self.config.engine.v_threshold;
        let gain = self.config.engine.input_gain;

        // phases 1-3: per-layer currents and membrane updates, writing the
        // current spike buffer; all reads come from the previous buffer
        {
            let step = self.step;
            let loop_stim = self.config.engine.loop_stimulus;
            let frame: Option<&[u8]> = self.frames.as_ref().and_then(|frames| {
                if frames.frames.is_empty() {
                    return None;
                }
                let idx = (step / frames.window_ms as u64) as usize;
                if idx < frames.frames.len() {
                    Some(&frames.frames[idx][..])
                } else if loop_stim {
                    Some(&frames.frames[idx % frames.frames.len()][..])
                } else {
                    None
                }
            });
            match frame {
                Some(f) => dynamics::inject_input_layer(f, gain, &mut self.input_scratch)?,
                None => self.input_scratch.fill(0.0),
            }
        }
        for layer in 0..num_layers {
            let params = &self.net.populations[layer].params;
            let conn = &self.net.synapses.layers[layer];
            let (below, same) = if layer == 0 {
                (&[][..], &[][..])
            } else {
                (&self.spikes_prev[layer - 1][..], &self.spikes_prev[layer][..])
            };
            let input0 = if layer == 0 { Some(&self.input_scratch[..]) } else { None };
            let states = &mut self.states[layer];
            let spikes = &mut self.spikes_curr[layer];
            let update = |i: usize, st: &mut NeuronState, spk: &mut bool| {
                let input = match input0 {
                    Some(cur) => cur[i],
                    None => dynamics::synaptic_current(i, conn, below, same),
                };
                let (next, fired) = dynamics::izhikevich_step(*st, &params[i], input, vth);
                *st = next;
                *spk = fired;
            };
            if n >= PAR_MIN_NEURONS {
                states
                    .par_iter_mut()
                    .zip(spikes.par_iter_mut())
                    .enumerate()
                    .for_each(|(i, (st, spk))| update(i, st, spk));
            } else {
                for (i, (st, spk)) in states.iter_mut().zip(spikes.iter_mut()).enumerate() {
                    update(i, st, spk);
                }
            }
            if let Some(neuron) = states.iter().position(|s| !s.is_finite()) {
                return Err(Error::NumericFault { step: self.step, layer, neuron });
            }
        }

        // phase 4: trace decay
        let factor = plasticity::trace_decay_factor(1.0, self.config.plasticity.tau_trace);
        for traces in &mut self.traces {
            plasticity::decay_traces(traces, factor);
        }

        // phase 5: weight updates from this step's spikes + pre-bump traces
        if self.config.engine.train {
            let pcfg = &self.config.plasticity;
            let pops = &self.net.populations;
            let layers = &mut self.net.synapses.layers;
            for layer in 1..num_layers {
                apply_plasticity_for_layer(
                    &mut layers[layer],
                    &pops[layer - 1].polarity,
                    &pops[layer].polarity,
                    &self.spikes_curr[layer - 1],
                    &self.spikes_curr[layer],
                    &self.traces[layer - 1],
                    &self.traces[layer],
                    pcfg,
                );
            }
        }

        // phase 6: trace bump
        for (traces, fired) in self.traces.iter_mut().zip(&self.spikes_curr) {
            plasticity::bump_traces(traces, fired);
        }

        // phase 7: clamp (skipped on frozen runs, where no weight moved and
        // projection would be an arithmetic no-op)
        if self.config.engine.train {
            let pcfg = &self.config.plasticity;
            let pops = &self.net.populations;
            let layers = &mut self.net.synapses.layers;
            for layer in 0..num_layers {
                let ff_pol: &[Polarity] =
                    if layer == 0 { &[] } else { &pops[layer - 1].polarity };
                plasticity::clamp_weights(&mut layers[layer], ff_pol, &pops[layer].polarity, pcfg);
            }
        }

        // phase 8: bookkeeping
        let mut fired_ids = Vec::new();
        let mut spikes_per_layer = vec![0u32; num_layers];
        for (layer, flags) in self.spikes_curr.iter().enumerate() {
            for (i, &f) in flags.iter().enumerate() {
                if f {
                    fired_ids.push(self.net.global_id(layer, i));
                    spikes_per_layer[layer] += 1;
                }
            }
        }
        self.raster.push_step(self.step, &fired_ids);
        let completed = self.psth.record_step(self.step, &fired_ids);
        self.completed_windows.extend(completed);
        std::mem::swap(&mut self.spikes_prev, &mut self.spikes_curr);
        let report = StepReport { step: self.step, spikes_per_layer };
        self.step += 1;
        Ok(report)
    }

    /// The in-progress spike-count window, without disturbing it.
    pub fn partial_window(&self) -> SpikeCountWindow {
        SpikeCountWindow { index: self.psth.window_index, counts: self.psth.current.clone() }
    }

    /// SHA-256 over the full mutable state (weights, membrane state,
    /// traces, buffers, counters, RNG) plus the config digest. Two
    /// simulations with equal digests are indistinguishable going forward.
    pub fn state_digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.config.digest());
        h.update(self.step.to_le_bytes());
        h.update(self.psth.window_index.to_le_bytes());
        for c in &self.psth.current {
            h.update(c.to_le_bytes());
        }
        for s in self.rng.state() {
            h.update(s.to_le_bytes());
        }
        for layer in 0..self.net.num_layers() {
            for st in &self.states[layer] {
                h.update(st.v.to_le_bytes());
                h.update(st.u.to_le_bytes());
            }
            for t in &self.traces[layer] {
                h.update(t.to_le_bytes());
            }
            for &f in &self.spikes_prev[layer] {
                h.update([f as u8]);
            }
            for &f in &self.spikes_curr[layer] {
                h.update([f as u8]);
            }
            for syn in &self.net.synapses.layers[layer].entries {
                h.update(syn.pre.to_le_bytes());
                h.update(syn.weight.to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

/// STDP then the inhibitory rule for one post layer's incoming
/// feed-forward synapses.
#[allow(clippy::too_many_arguments)]
fn apply_plasticity_for_layer(
    conn: &mut LayerConnectivity,
    pre_polarity: &[Polarity],
    post_polarity: &[Polarity],
    pre_fired: &[bool],
    post_fired: &[bool],
    traces_pre: &[f64],
    traces_post: &[f64],
    pcfg: &plasticity::PlasticityConfig,
) {
    plasticity::apply_stdp(conn, pre_polarity, pre_fired, post_fired, traces_pre, traces_post, pcfg);
    plasticity::apply_istdp(
        conn,
        pre_polarity,
        post_polarity,
        pre_fired,
        post_fired,
        traces_pre,
        traces_post,
        pcfg,
    );
}

/// Execute up to `steps` steps (stopping early if a non-looping stimulus
/// runs out), writing artifacts into `out_dir` when given: raster and
/// spike-count CSVs, entropy maps per window cadence and at the end, and
/// checkpoints per step cadence and at the end.
pub fn run(sim: &mut Simulation, steps: u64, out_dir: Option<&Path>) -> Result<RunSummary> {
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let num_layers = sim.net.num_layers();
    let n = sim.net.layer_len();
    let mut totals = vec![0u64; num_layers];
    let mut steps_run = 0u64;
    let mut windows = Vec::new();
    let mut summarized = sim.completed_windows.len();
    let ckpt_every = sim.config.engine.checkpoint_every_steps;
    let maps_every = sim.config.engine.entropy_maps_every_windows;

    for _ in 0..steps {
        if sim.stimulus_exhausted() {
            break;
        }
        let report = sim.step()?;
        for (t, &s) in totals.iter_mut().zip(&report.spikes_per_layer) {
            *t += s as u64;
        }
        steps_run += 1;

        while summarized < sim.completed_windows.len() {
            let window = sim.completed_windows[summarized].clone();
            summarized += 1;
            let map = sim.entropy_map();
            let summary = summarize_window(&window, &map, num_layers, n);
            if let Some(dir) = out_dir {
                if maps_every > 0 && window.index % maps_every == 0 {
                    write_entropy_maps(sim, &map, dir, &format!("w{:06}", window.index))?;
                }
            }
            windows.push(summary);
        }
        if let Some(dir) = out_dir {
            if ckpt_every > 0 && sim.step % ckpt_every == 0 {
                sim.save_checkpoint(&dir.join(format!("checkpoint_{:09}.snnc", sim.step)))?;
            }
        }
    }

    let final_map = sim.entropy_map();
    let final_mean_e_exc: Vec<Option<f64>> =
        (0..num_layers).map(|l| final_map.mean_exc_defined(l)).collect();
    if let Some(dir) = out_dir {
        analytics::export_raster_csv(&sim.raster, &dir.join("raster.csv"))?;
        let mut all_windows = sim.completed_windows.clone();
        all_windows.push(sim.partial_window());
        analytics::export_counts_csv(&all_windows, &dir.join("counts.csv"))?;
        write_entropy_maps(sim, &final_map, dir, "final")?;
        sim.save_checkpoint(&dir.join("checkpoint_final.snnc"))?;
    }
    Ok(RunSummary { steps_run, total_spikes_per_layer: totals, final_mean_e_exc, windows })
}

fn summarize_window(
    window: &SpikeCountWindow,
    map: &EntropyMap,
    num_layers: usize,
    layer_len: usize,
) -> WindowSummary {
    let mut spikes_per_layer = vec![0u64; num_layers];
    for (id, &c) in window.counts.iter().enumerate() {
        spikes_per_layer[id / layer_len] += c as u64;
    }
    let mean_e_exc = (0..num_layers).map(|l| map.mean_exc_defined(l)).collect();
    WindowSummary { index: window.index, spikes_per_layer, mean_e_exc }
}

fn write_entropy_maps(
    sim: &Simulation,
    map: &EntropyMap,
    dir: &Path,
    suffix: &str,
) -> Result<()> {
    for layer in 0..sim.net.num_layers() {
        analytics::export_map_pgm(
            &map.e_exc[layer],
            sim.net.spec,
            &dir.join(format!("entropy_exc_l{layer}_{suffix}.pgm")),
        )?;
        analytics::export_map_pgm(
            &map.e_inh[layer],
            sim.net.spec,
            &dir.join(format!("entropy_inh_l{layer}_{suffix}.pgm")),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

struct RestoredState {
    step: u64,
    psth_window_index: u64,
    psth_counts: Vec<u32>,
    states: Vec<Vec<NeuronState>>,
    traces: Vec<Vec<f64>>,
    spikes_prev: Vec<Vec<bool>>,
    spikes_curr: Vec<Vec<bool>>,
    rng_state: [u64; 4],
}

mod tag {
    pub const CONFIG: u8 = 1;
    pub const COUNTERS: u8 = 2;
    pub const POLARITY: u8 = 3;
    pub const PARAMS: u8 = 4;
    pub const STATE: u8 = 5;
    pub const SYNAPSES: u8 = 6;
    pub const TRACES: u8 = 7;
    pub const SPIKES: u8 = 8;
    pub const RNG: u8 = 9;
    pub const PSTH: u8 = 10;
    pub const TRAILER: u8 = 0xFF;
}

fn push_section(buf: &mut Vec<u8>, t: u8, payload: &[u8]) {
    buf.push(t);
    buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    buf.extend_from_slice(payload);
}

impl Simulation {
    /// Write a versioned binary image of the full mutable state. Layout:
    /// magic "SNNC", version u16 LE, 32-byte config digest, then tagged
    /// length-prefixed sections in fixed order, then a trailer section
    /// holding the SHA-256 of everything before it.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(&CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.config.digest());

        push_section(&mut buf, tag::CONFIG, &serde_json::to_vec(&self.config).expect("serializes"));

        let mut counters = Vec::new();
        counters.extend_from_slice(&self.step.to_le_bytes());
        counters.extend_from_slice(&self.psth.window_index.to_le_bytes());
        push_section(&mut buf, tag::COUNTERS, &counters);

        let mut polarity = Vec::new();
        for pop in &self.net.populations {
            polarity.extend(pop.polarity.iter().map(|&p| p as u8));
        }
        push_section(&mut buf, tag::POLARITY, &polarity);

        let mut params = Vec::new();
        for pop in &self.net.populations {
            for p in &pop.params {
                for v in [p.a, p.b, p.c, p.d] {
                    params.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        push_section(&mut buf, tag::PARAMS, &params);

        let mut state = Vec::new();
        for layer in &self.states {
            for s in layer {
                state.extend_from_slice(&s.v.to_le_bytes());
                state.extend_from_slice(&s.u.to_le_bytes());
            }
        }
        push_section(&mut buf, tag::STATE, &state);

        let mut synapses = Vec::new();
        for conn in &self.net.synapses.layers {
            synapses.extend_from_slice(&(conn.entries.len() as u64).to_le_bytes());
            for &off in &conn.offsets {
                synapses.extend_from_slice(&off.to_le_bytes());
            }
            for &off in &conn.ff_end {
                synapses.extend_from_slice(&off.to_le_bytes());
            }
            for syn in &conn.entries {
                synapses.extend_from_slice(&syn.pre.to_le_bytes());
                synapses.extend_from_slice(&syn.weight.to_le_bytes());
            }
        }
        push_section(&mut buf, tag::SYNAPSES, &synapses);

        let mut traces = Vec::new();
        for layer in &self.traces {
            for t in layer {
                traces.extend_from_slice(&t.to_le_bytes());
            }
        }
        push_section(&mut buf, tag::TRACES, &traces);

        let mut spikes = Vec::new();
        for flags in self.spikes_prev.iter().chain(&self.spikes_curr) {
            spikes.extend(flags.iter().map(|&f| f as u8));
        }
        push_section(&mut buf, tag::SPIKES, &spikes);

        let mut rng = Vec::new();
        for s in self.rng.state() {
            rng.extend_from_slice(&s.to_le_bytes());
        }
        push_section(&mut buf, tag::RNG, &rng);

        let mut psth = Vec::new();
        for c in &self.psth.current {
            psth.extend_from_slice(&c.to_le_bytes());
        }
        push_section(&mut buf, tag::PSTH, &psth);

        let digest: [u8; 32] = Sha256::digest(&buf).into();
        push_section(&mut buf, tag::TRAILER, &digest);
        fs::write(path, buf)?;
        Ok(())
    }

    /// Load a checkpoint. The stimulus is not part of the image; reattach
    /// it with [`Simulation::attach_frames`] before running.
    pub fn load_checkpoint(path: &Path) -> Result<Simulation> {
        let buf = fs::read(path)?;
        let mut cur = Cursor { buf: &buf, off: 0 };
        if cur.take(4, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::UnsupportedFormat("not a checkpoint file (bad magic)".into()));
        }
        let version = u16::from_le_bytes(cur.take(2, "version")?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedFormat(format!("checkpoint version {version}")));
        }
        let header_digest: [u8; 32] = cur.take(32, "config digest")?.try_into().unwrap();

        let config_bytes = cur.section(tag::CONFIG)?;
        let config: SimConfig = serde_json::from_slice(config_bytes)
            .map_err(|e| Error::format(cur.off as u64, format!("bad embedded config: {e}")))?;
        if config.digest() != header_digest {
            return Err(Error::format(6, "config digest mismatch"));
        }
        let spec = config.topology.layer;
        let n = spec.len();
        let num_layers = config.topology.num_layers as usize;
        let total = n * num_layers;

        let counters = cur.section(tag::COUNTERS)?;
        if counters.len() != 16 {
            return Err(Error::format(cur.off as u64, "counters section size"));
        }
        let step = u64::from_le_bytes(counters[0..8].try_into().unwrap());
        let psth_window_index = u64::from_le_bytes(counters[8..16].try_into().unwrap());

        let polarity_bytes = cur.section(tag::POLARITY)?;
        if polarity_bytes.len() != total {
            return Err(Error::format(cur.off as u64, "polarity section size"));
        }
        let mut polarity = Vec::with_capacity(num_layers);
        for layer in 0..num_layers {
            let mut flags = Vec::with_capacity(n);
            for &b in &polarity_bytes[layer * n..(layer + 1) * n] {
                flags.push(match b {
                    0 => Polarity::Excitatory,
                    1 => Polarity::Inhibitory,
                    other => {
                        return Err(Error::format(cur.off as u64, format!("polarity byte {other}")))
                    }
                });
            }
            polarity.push(flags);
        }

        let params_bytes = cur.section(tag::PARAMS)?;
        if params_bytes.len() != total * 32 {
            return Err(Error::format(cur.off as u64, "params section size"));
        }
        let mut all_params = read_f64s(params_bytes).into_iter();
        let mut params_per_layer = Vec::with_capacity(num_layers);
        for _ in 0..num_layers {
            let params: Vec<NeuronParams> = (0..n)
                .map(|_| NeuronParams {
                    a: all_params.next().unwrap(),
                    b: all_params.next().unwrap(),
                    c: all_params.next().unwrap(),
                    d: all_params.next().unwrap(),
                })
                .collect();
            params_per_layer.push(params);
        }

        let state_bytes = cur.section(tag::STATE)?;
        if state_bytes.len() != total * 16 {
            return Err(Error::format(cur.off as u64, "state section size"));
        }
        let mut vu = read_f64s(state_bytes).into_iter();
        let states: Vec<Vec<NeuronState>> = (0..num_layers)
            .map(|_| {
                (0..n)
                    .map(|_| NeuronState { v: vu.next().unwrap(), u: vu.next().unwrap() })
                    .collect()
            })
            .collect();

        let syn_bytes = cur.section(tag::SYNAPSES)?;
        let mut layers = Vec::with_capacity(num_layers);
        let mut so = 0usize;
        for _ in 0..num_layers {
            let need = |so: usize, len: usize| -> Result<()> {
                if so + len > syn_bytes.len() {
                    Err(Error::format(cur.off as u64, "synapse section truncated"))
                } else {
                    Ok(())
                }
            };
            need(so, 8)?;
            let entries_len = u64::from_le_bytes(syn_bytes[so..so + 8].try_into().unwrap()) as usize;
            so += 8;
            need(so, (n + 1) * 4 + n * 4 + entries_len * 12)?;
            let mut offsets = Vec::with_capacity(n + 1);
            for _ in 0..=n {
                offsets.push(u32::from_le_bytes(syn_bytes[so..so + 4].try_into().unwrap()));
                so += 4;
            }
            let mut ff_end = Vec::with_capacity(n);
            for _ in 0..n {
                ff_end.push(u32::from_le_bytes(syn_bytes[so..so + 4].try_into().unwrap()));
                so += 4;
            }
            let mut entries = Vec::with_capacity(entries_len);
            for _ in 0..entries_len {
                let pre = u32::from_le_bytes(syn_bytes[so..so + 4].try_into().unwrap());
                let weight = f64::from_le_bytes(syn_bytes[so + 4..so + 12].try_into().unwrap());
                entries.push(Synapse { pre, weight });
                so += 12;
            }
            if *offsets.last().unwrap() as usize != entries.len() {
                return Err(Error::format(cur.off as u64, "synapse offsets inconsistent"));
            }
            layers.push(LayerConnectivity { offsets, ff_end, entries });
        }
        if so != syn_bytes.len() {
            return Err(Error::format(cur.off as u64, "synapse section has trailing bytes"));
        }

        let traces_bytes = cur.section(tag::TRACES)?;
        if traces_bytes.len() != total * 8 {
            return Err(Error::format(cur.off as u64, "traces section size"));
        }
        let mut ts = read_f64s(traces_bytes).into_iter();
        let traces: Vec<Vec<f64>> =
            (0..num_layers).map(|_| (0..n).map(|_| ts.next().unwrap()).collect()).collect();

        let spike_bytes = cur.section(tag::SPIKES)?;
        if spike_bytes.len() != total * 2 {
            return Err(Error::format(cur.off as u64, "spike section size"));
        }
        let to_flags = |bytes: &[u8]| -> Vec<Vec<bool>> {
            (0..num_layers)
                .map(|l| bytes[l * n..(l + 1) * n].iter().map(|&b| b != 0).collect())
                .collect()
        };
        let spikes_prev = to_flags(&spike_bytes[..total]);
        let spikes_curr = to_flags(&spike_bytes[total..]);

        let rng_bytes = cur.section(tag::RNG)?;
        if rng_bytes.len() != 32 {
            return Err(Error::format(cur.off as u64, "rng section size"));
        }
        let mut rng_state = [0u64; 4];
        for (i, chunk) in rng_bytes.chunks_exact(8).enumerate() {
            rng_state[i] = u64::from_le_bytes(chunk.try_into().unwrap());
        }

        let psth_bytes = cur.section(tag::PSTH)?;
        if psth_bytes.len() != total * 4 {
            return Err(Error::format(cur.off as u64, "psth section size"));
        }
        let psth_counts: Vec<u32> =
            psth_bytes.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect();

        let trailer_start = cur.off;
        let trailer = cur.section(tag::TRAILER)?;
        let expected: [u8; 32] = Sha256::digest(&buf[..trailer_start]).into();
        if trailer != expected {
            return Err(Error::format(trailer_start as u64, "checkpoint digest mismatch"));
        }
        if cur.off != buf.len() {
            return Err(Error::format(cur.off as u64, "trailing bytes after trailer"));
        }

        let populations: Vec<LayerPopulation> = params_per_layer
            .into_iter()
            .zip(polarity)
            .map(|(params, polarity)| LayerPopulation { params, polarity })
            .collect();
        let net = Network { spec, populations, synapses: SynapseTable { layers } };
        let restored = RestoredState {
            step,
            psth_window_index,
            psth_counts,
            states,
            traces,
            spikes_prev,
            spikes_curr,
            rng_state,
        };
        Ok(Simulation::from_parts(config, net, Some(restored)))
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    off: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.off + len > self.buf.len() {
            return Err(Error::format(self.off as u64, format!("truncated {what}")));
        }
        let s = &self.buf[self.off..self.off + len];
        self.off += len;
        Ok(s)
    }

    /// Read the next section, which must carry the expected tag.
    fn section(&mut self, expect: u8) -> Result<&'a [u8]> {
        let at = self.off;
        let t = self.take(1, "section tag")?[0];
        if t != expect {
            return Err(Error::format(at as u64, format!("expected section {expect}, found {t}")));
        }
        let len = u64::from_le_bytes(self.take(8, "section length")?.try_into().unwrap());
        self.take(len as usize, "section payload")
    }
}

fn read_f64s(bytes: &[u8]) -> Vec<f64> {
    bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
}

// ---------------------------------------------------------------------------
// benchmark
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub steps: u64,
    pub train_steps_per_s: f64,
    pub frozen_steps_per_s: f64,
    /// frozen / train throughput (> 1 means plasticity costs time)
    pub plasticity_ratio: f64,
    /// synapse reads per second during the training run (every incoming
    /// entry of layers past the first is scanned once per step)
    pub synapse_events_per_s: f64,
    pub oracle_steps_per_s: Option<f64>,
    /// sparse / oracle throughput
    pub sparse_oracle_ratio: Option<f64>,
}

impl BenchReport {
    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }
}

/// Measure wall-clock throughput with and without plasticity (after a
/// warmup excluded from timing), and optionally against the dense
/// reference implementation on the same network and stimulus.
pub fn benchmark(
    config: &SimConfig,
    steps: u64,
    warmup: u64,
    compare_oracle: bool,
) -> Result<BenchReport> {
    if steps == 0 {
        return Ok(BenchReport {
            steps: 0,
            train_steps_per_s: 0.0,
            frozen_steps_per_s: 0.0,
            plasticity_ratio: 0.0,
            synapse_events_per_s: 0.0,
            oracle_steps_per_s: None,
            sparse_oracle_ratio: None,
        });
    }
    let spec = config.topology.layer;
    // four sweeps per second over at least a second guarantees events at
    // any sheet size; the run loops the stimulus regardless of length
    let stream = events::gen_moving_bar(
        spec.width as u16,
        spec.height as u16,
        (spec.width as u16 / 8).max(1),
        spec.width as f64 * 4.0,
        ((warmup + steps) as u32 + config.engine.window_ms).max(1000),
        config.topology.seed,
        0,
    )?;
    let frames = events::batch_frames(&stream, config.engine.window_ms, spec)?;

    let timed = |train: bool, run_steps: u64| -> Result<f64> {
        let mut cfg = config.clone();
        cfg.engine.train = train;
        cfg.engine.loop_stimulus = true;
        let mut sim = Simulation::new(cfg)?;
        sim.attach_frames(frames.clone())?;
        for _ in 0..warmup {
            sim.step()?;
        }
        let start = Instant::now();
        for _ in 0..run_steps {
            sim.step()?;
        }
        Ok(run_steps as f64 / start.elapsed().as_secs_f64())
    };

    let train_steps_per_s = timed(true, steps)?;
    let frozen_steps_per_s = timed(false, steps)?;

    let net = build_network(&config.topology)?;
    let scanned_per_step: u64 = net.synapses.layers[1..]
        .iter()
        .map(|l| l.entries.len() as u64)
        .sum();
    let synapse_events_per_s = scanned_per_step as f64 * train_steps_per_s;

    let (oracle_steps_per_s, sparse_oracle_ratio) = if compare_oracle {
        let oracle_steps = (steps / 10).max(5);
        let oracle_warmup = warmup.min(5);
        let mut cfg = config.clone();
        cfg.engine.train = true;
        cfg.engine.loop_stimulus = true;
        let mut oracle = crate::oracle::DenseOracle::new(&cfg)?;
        let frame_index =
            |step: u64| (step / frames.window_ms as u64) as usize % frames.frames.len();
        for s in 0..oracle_warmup {
            oracle.step(Some(&frames.frames[frame_index(s)]));
        }
        let start = Instant::now();
        for s in 0..oracle_steps {
            oracle.step(Some(&frames.frames[frame_index(oracle_warmup + s)]));
        }
        let rate = oracle_steps as f64 / start.elapsed().as_secs_f64();
        (Some(rate), Some(train_steps_per_s / rate))
    } else {
        (None, None)
    };

    Ok(BenchReport {
        steps,
        train_steps_per_s,
        frozen_steps_per_s,
        plasticity_ratio: frozen_steps_per_s / train_steps_per_s,
        synapse_events_per_s,
        oracle_steps_per_s,
        sparse_oracle_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::LayerSpec;

    fn config(num_layers: u32, side: u32) -> SimConfig {
        let mut config = SimConfig::default();
        config.topology.num_layers = num_layers;
        config.topology.layer = LayerSpec::new(side, side);
        config.topology.seed = 31;
        config
    }

    fn ones_frames(spec: LayerSpec, window_ms: u32, count: usize) -> FrameSequence {
        FrameSequence { window_ms, spec, frames: vec![vec![1; spec.len()]; count] }
    }

    fn weights_snapshot(sim: &Simulation) -> Vec<Vec<f64>> {
        sim.network()
            .synapses
            .layers
            .iter()
            .map(|l| l.entries.iter().map(|s| s.weight).collect())
            .collect()
    }

    #[test]
    fn silent_network_stays_silent_and_unchanged() {
        let mut sim = Simulation::new(config(3, 6)).unwrap();
        let before = weights_snapshot(&sim);
        for _ in 0..100 {
            let report = sim.step().unwrap();
            assert!(report.spikes_per_layer.iter().all(|&s| s == 0));
        }
        assert_eq!(weights_snapshot(&sim), before);
        assert!(sim.raster().is_empty());
    }

    #[test]
    fn first_layer_fires_before_second() {
        let mut sim = Simulation::new(config(2, 8)).unwrap();
        let spec = sim.network().spec;
        sim.attach_frames(ones_frames(spec, 10, 100)).unwrap();
        let mut first = [None; 2];
        for _ in 0..100 {
            let report = sim.step().unwrap();
            for (l, &s) in report.spikes_per_layer.iter().enumerate() {
                if s > 0 && first[l].is_none() {
                    first[l] = Some(report.step);
                }
            }
        }
        let (l0, l1) = (first[0].expect("layer 1 fired"), first[1].expect("layer 2 fired"));
        assert!(l1 > l0, "downstream layer fired at {l1}, not after {l0}");
    }

    #[test]
    fn frozen_run_leaves_weights_bit_identical() {
        let mut cfg = config(3, 8);
        cfg.engine.train = false;
        let mut sim = Simulation::new(cfg).unwrap();
        let spec = sim.network().spec;
        sim.attach_frames(ones_frames(spec, 10, 100)).unwrap();
        let before = weights_snapshot(&sim);
        let mut any_spike = false;
        for _ in 0..60 {
            any_spike |= sim.step().unwrap().spikes_per_layer.iter().any(|&s| s > 0);
        }
        assert!(any_spike, "stimulus should drive activity");
        assert_eq!(weights_snapshot(&sim), before);
    }

    #[test]
    fn training_run_is_reproducible() {
        let digest_of = || {
            let mut sim = Simulation::new(config(3, 8)).unwrap();
            let spec = sim.network().spec;
            sim.attach_frames(ones_frames(spec, 10, 20)).unwrap();
            for _ in 0..80 {
                sim.step().unwrap();
            }
            sim.state_digest()
        };
        assert_eq!(digest_of(), digest_of());
    }

    #[test]
    fn digest_is_independent_of_worker_count() {
        let run_with_threads = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let mut sim = Simulation::new(config(2, 64)).unwrap();
                let spec = sim.network().spec;
                sim.attach_frames(ones_frames(spec, 10, 10)).unwrap();
                for _ in 0..8 {
                    sim.step().unwrap();
                }
                sim.state_digest()
            })
        };
        assert_eq!(run_with_threads(1), run_with_threads(4));
    }

    #[test]
    fn checkpoint_round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut sim = Simulation::new(config(3, 8)).unwrap();
        let spec = sim.network().spec;
        sim.attach_frames(ones_frames(spec, 10, 20)).unwrap();
        for _ in 0..40 {
            sim.step().unwrap();
        }
        let path = dir.path().join("a.snnc");
        sim.save_checkpoint(&path).unwrap();
        let restored = Simulation::load_checkpoint(&path).unwrap();
        assert_eq!(restored.state_digest(), sim.state_digest());
        let resaved = dir.path().join("b.snnc");
        restored.save_checkpoint(&resaved).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&resaved).unwrap());
    }

    #[test]
    fn split_run_matches_straight_run() {
        let dir = tempfile::tempdir().unwrap();
        let frames = ones_frames(LayerSpec::new(8, 8), 10, 100);

        let mut whole = Simulation::new(config(3, 8)).unwrap();
        whole.attach_frames(frames.clone()).unwrap();
        for _ in 0..100 {
            whole.step().unwrap();
        }

        let mut part = Simulation::new(config(3, 8)).unwrap();
        part.attach_frames(frames.clone()).unwrap();
        for _ in 0..40 {
            part.step().unwrap();
        }
        let path = dir.path().join("mid.snnc");
        part.save_checkpoint(&path).unwrap();
        let mut resumed = Simulation::load_checkpoint(&path).unwrap();
        resumed.attach_frames(frames).unwrap();
        for _ in 0..60 {
            resumed.step().unwrap();
        }
        assert_eq!(resumed.state_digest(), whole.state_digest());
        assert_eq!(resumed.step_count(), 100);
    }

    #[test]
    fn corrupted_checkpoints_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut sim = Simulation::new(config(2, 6)).unwrap();
        for _ in 0..5 {
            sim.step().unwrap();
        }
        let path = dir.path().join("ok.snnc");
        sim.save_checkpoint(&path).unwrap();
        let clean = fs::read(&path).unwrap();

        let mut flipped = clean.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 0x40;
        let bad = dir.path().join("flipped.snnc");
        fs::write(&bad, &flipped).unwrap();
        assert!(matches!(
            Simulation::load_checkpoint(&bad),
            Err(Error::Format { .. }) | Err(Error::UnsupportedFormat(_))
        ));

        let truncated = dir.path().join("short.snnc");
        fs::write(&truncated, &clean[..clean.len() - 9]).unwrap();
        assert!(matches!(Simulation::load_checkpoint(&truncated), Err(Error::Format { .. })));

        let alien = dir.path().join("alien.snnc");
        fs::write(&alien, b"not a checkpoint at all").unwrap();
        assert!(matches!(
            Simulation::load_checkpoint(&alien),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(2, 8);
        cfg.engine.psth_window_ms = 20;
        let mut sim = Simulation::new(cfg).unwrap();
        let spec = sim.network().spec;
        sim.attach_frames(ones_frames(spec, 10, 10)).unwrap();
        let summary = run(&mut sim, 50, Some(dir.path())).unwrap();
        assert_eq!(summary.steps_run, 50);
        assert_eq!(summary.windows.len(), 2); // windows 0 and 1 complete at steps 20/40
        for name in [
            "raster.csv",
            "counts.csv",
            "entropy_exc_l0_final.pgm",
            "entropy_inh_l1_final.pgm",
            "checkpoint_final.snnc",
        ] {
            assert!(dir.path().join(name).exists(), "missing artifact {name}");
        }
        let total: u64 = summary.total_spikes_per_layer.iter().sum();
        assert!(total > 0);
    }

    #[test]
    fn run_halts_when_stimulus_is_exhausted() {
        let mut sim = Simulation::new(config(2, 6)).unwrap();
        let spec = sim.network().spec;
        sim.attach_frames(ones_frames(spec, 10, 2)).unwrap();
        let summary = run(&mut sim, 50, None).unwrap();
        assert_eq!(summary.steps_run, 20);

        let mut cfg = config(2, 6);
        cfg.engine.loop_stimulus = true;
        let mut sim = Simulation::new(cfg).unwrap();
        sim.attach_frames(ones_frames(spec, 10, 2)).unwrap();
        let summary = run(&mut sim, 50, None).unwrap();
        assert_eq!(summary.steps_run, 50);
    }

    #[test]
    fn absurd_input_reports_a_numeric_fault() {
        let mut cfg = config(2, 4);
        cfg.engine.input_gain = 1e308;
        let mut sim = Simulation::new(cfg).unwrap();
        let spec = sim.network().spec;
        sim.attach_frames(ones_frames(spec, 10, 5)).unwrap();
        let mut fault = None;
        for _ in 0..20 {
            match sim.step() {
                Ok(_) => {}
                Err(e) => {
                    fault = Some(e);
                    break;
                }
            }
        }
        match fault {
            Some(Error::NumericFault { layer, .. }) => assert_eq!(layer, 0),
            other => panic!("expected a numeric fault, got {other:?}"),
        }
    }

    #[test]
    fn benchmark_reports_plausible_numbers() {
        let report = benchmark(&config(2, 8), 30, 5, true).unwrap();
        assert_eq!(report.steps, 30);
        assert!(report.train_steps_per_s > 0.0);
        assert!(report.frozen_steps_per_s > 0.0);
        assert!(report.synapse_events_per_s > 0.0);
        assert!(report.oracle_steps_per_s.unwrap() > 0.0);
        assert!(report.sparse_oracle_ratio.unwrap() > 0.0);
        assert!(benchmark(&config(2, 8), 0, 0, false).unwrap().is_empty());
    }
}
