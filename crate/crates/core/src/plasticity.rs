//! Spike traces and the two weight-update rules: multiplicative STDP on
//! excitatory feed-forward synapses, and a homeostatic inhibitory rule on
//! inhibitory feed-forward synapses onto excitatory posts.
//!
//! Per-step ordering is normative: traces are decayed first, then both
//! rules run using this step's spike flags together with the pre-bump trace
//! values, then traces are bumped for this step's spikes. A same-step
//! pre/post coincidence therefore reads the partner's previous-spike trace,
//! and the depression term applies before the potentiation term.

use serde::{Deserialize, Serialize};

use crate::topology::{LayerConnectivity, Polarity};

/// Value a neuron's trace is set to when it fires.
pub const TRACE_MAX: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlasticityConfig {
    /// potentiation rate
    pub a_ltp: f64,
    /// depression rate
    pub a_ltd: f64,
    /// trace decay constant (ms)
    pub tau_trace: f64,
    pub w_max_exc: f64,
    pub w_max_inh_mag: f64,
    pub istdp_enabled: bool,
    pub istdp_eta: f64,
    /// homeostatic target firing rate (Hz)
    pub istdp_target_rate_hz: f64,
    /// Alternative pairing: potentiate when the pre neuron fires and
    /// depress when the post neuron fires (the default is the reverse, so
    /// that pre-before-post potentiates).
    pub potentiate_on_pre_spike: bool,
}

impl Default for PlasticityConfig {
    fn default() -> Self {
        PlasticityConfig {
            a_ltp: 0.010,
            a_ltd: 0.012,
            tau_trace: 20.0,
            w_max_exc: 7.0,
            w_max_inh_mag: 30.0,
            istdp_enabled: true,
            istdp_eta: 0.001,
            istdp_target_rate_hz: 5.0,
            potentiate_on_pre_spike: false,
        }
    }
}

impl PlasticityConfig {
    pub fn validate(&self) -> crate::Result<()> {
        for (name, v) in [
            ("a_ltp", self.a_ltp),
            ("a_ltd", self.a_ltd),
            ("istdp_eta", self.istdp_eta),
            ("istdp_target_rate_hz", self.istdp_target_rate_hz),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(crate::Error::config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        // NaN must fail too, hence the explicit checks
        if self.tau_trace.is_nan() || self.tau_trace <= 0.0 {
            return Err(crate::Error::config("tau_trace must be positive"));
        }
        if self.w_max_exc.is_nan()
            || self.w_max_exc <= 0.0
            || self.w_max_inh_mag.is_nan()
            || self.w_max_inh_mag <= 0.0
        {
            return Err(crate::Error::config("weight caps must be positive"));
        }
        Ok(())
    }

    /// Homeostatic offset: 2 * target rate * tau, with the rate in
    /// spikes/ms. Defaults give 2 * 0.005 * 20 = 0.2.
    pub fn istdp_alpha(&self) -> f64 {
        2.0 * (self.istdp_target_rate_hz / 1000.0) * self.tau_trace
    }
}

/// Multiplier for one decay interval. Shared by the engine and the dense
/// oracle so both decay traces with the bit-identical factor.
#[inline]
pub fn trace_decay_factor(dt_ms: f64, tau_trace: f64) -> f64 {
    (-dt_ms / tau_trace).exp()
}

pub fn decay_traces(traces: &mut [f64], factor: f64) {
    for t in traces {
        *t *= factor;
    }
}

/// Set the trace of every neuron that fired this step to [`TRACE_MAX`]
/// (a set, not an increment).
pub fn bump_traces(traces: &mut [f64], fired: &[bool]) {
    for (t, &f) in traces.iter_mut().zip(fired) {
        if f {
            *t = TRACE_MAX;
        }
    }
}

/// Decay then bump in one call, for callers outside the engine's phase
/// sequence (the engine itself runs the weight updates in between).
pub fn decay_and_bump_traces(traces: &mut [f64], fired: &[bool], dt_ms: f64, tau_trace: f64) {
    decay_traces(traces, trace_decay_factor(dt_ms, tau_trace));
    bump_traces(traces, fired);
}

/// Trace STDP over the feed-forward synapses with excitatory pre neurons.
/// Default convention: a pre spike depresses (w -= a_ltd * w * T_post), a
/// post spike potentiates (w += a_ltp * w * T_pre); on a same-step
/// coincidence the depression applies first and the potentiation sees the
/// depressed weight. Weights are clamped to [0, w_max_exc] on the way out.
pub fn apply_stdp(
    conn: &mut LayerConnectivity,
    pre_polarity: &[Polarity],
    pre_fired: &[bool],
    post_fired: &[bool],
    traces_pre: &[f64],
    traces_post: &[f64],
    cfg: &PlasticityConfig,
) {
    for post in 0..conn.num_posts() {
        let t_post = traces_post[post];
        let post_spk = post_fired[post];
        let range = conn.offsets[post] as usize..conn.ff_end[post] as usize;
        for syn in &mut conn.entries[range] {
            let pre = syn.pre as usize;
            if pre_polarity[pre] != Polarity::Excitatory {
                continue;
            }
            let mut w = syn.weight;
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
            syn.weight = w.clamp(0.0, cfg.w_max_exc);
        }
    }
}

/// Homeostatic inhibitory rule over feed-forward synapses with inhibitory
/// pre neurons onto excitatory posts. Works on the weight magnitude: a pre
/// spike adds eta * (T_post - alpha) (so a quiet post relaxes inhibition),
/// a post spike adds eta * T_pre; pre term first on a same-step
/// coincidence. Magnitudes are clamped to [0, w_max_inh_mag] and stored
/// with the negative sign.
pub fn apply_istdp(
    conn: &mut LayerConnectivity,
    pre_polarity: &[Polarity],
    post_polarity: &[Polarity],
    pre_fired: &[bool],
    post_fired: &[bool],
    traces_pre: &[f64],
    traces_post: &[f64],
    cfg: &PlasticityConfig,
) {
    if !cfg.istdp_enabled {
        return;
    }
    let alpha = cfg.istdp_alpha();
    for post in 0..conn.num_posts() {
        if post_polarity[post] != Polarity::Excitatory {
            continue;
        }
        let t_post = traces_post[post];
        let post_spk = post_fired[post];
        let range = conn.offsets[post] as usize..conn.ff_end[post] as usize;
        for syn in &mut conn.entries[range] {
            let pre = syn.pre as usize;
            if pre_polarity[pre] != Polarity::Inhibitory {
                continue;
            }
            let mut mag = -syn.weight;
            if pre_fired[pre] {
                mag += cfg.istdp_eta * (t_post - alpha);
            }
            if post_spk {
                mag += cfg.istdp_eta * traces_pre[pre];
            }
            syn.weight = -mag.clamp(0.0, cfg.w_max_inh_mag);
        }
    }
}

/// Project every weight onto its polarity-determined interval. Idempotent;
/// runs over feed-forward and lateral entries alike.
pub fn clamp_weights(
    conn: &mut LayerConnectivity,
    ff_pre_polarity: &[Polarity],
    lat_pre_polarity: &[Polarity],
    cfg: &PlasticityConfig,
) {
    for post in 0..conn.num_posts() {
        let ff = conn.offsets[post] as usize..conn.ff_end[post] as usize;
        let lat = conn.ff_end[post] as usize..conn.offsets[post + 1] as usize;
        for (range, polarity) in [(ff, ff_pre_polarity), (lat, lat_pre_polarity)] {
            for syn in &mut conn.entries[range] {
                syn.weight = match polarity[syn.pre as usize] {
                    Polarity::Excitatory => syn.weight.clamp(0.0, cfg.w_max_exc),
                    Polarity::Inhibitory => syn.weight.clamp(-cfg.w_max_inh_mag, 0.0),
                };
            }
        }
    }
}
