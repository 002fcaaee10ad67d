//! Izhikevich membrane dynamics, spike detection/reset, and synaptic
//! current gathering.
//!
//! The integrator is normative: voltage advances by forward Euler in two
//! 0.5 ms half-steps of dv = 0.04v^2 + 5v + 140 - u + I, then the recovery
//! variable advances one full 1 ms step using the updated voltage. The
//! threshold test (v >= v_threshold, default -30 mV) runs after the update;
//! a spike resets v to c and adds d to u. Every implementation in this
//! workspace (sparse engine, dense oracle, test references) must follow the
//! identical arithmetic sequence so results agree bitwise.
//!
//! Non-finite inputs are not trapped here: they propagate into the returned
//! state, where the engine detects them (see [`NeuronState::is_finite`]) and
//! reports a numeric fault with step/layer/neuron context.

use crate::topology::LayerConnectivity;

/// Default spike threshold (mV).
pub const V_THRESHOLD_DEFAULT: f64 = -30.0;

/// Regular-spiking base parameters.
pub const BASE_A: f64 = 0.02;
pub const BASE_B: f64 = 0.2;
pub const BASE_C: f64 = -65.0;
pub const BASE_D: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl NeuronParams {
    pub fn base_rs() -> Self {
        NeuronParams { a: BASE_A, b: BASE_B, c: BASE_C, d: BASE_D }
    }

    /// Regular-spiking parameters with the reset pair randomized:
    /// c = -65 + 15r^2, d = 2 - 6r^2 for r in [0,1].
    pub fn randomized_rs(r: f64) -> Self {
        let r2 = r * r;
        NeuronParams { a: BASE_A, b: BASE_B, c: BASE_C + 15.0 * r2, d: BASE_D - 6.0 * r2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronState {
    /// membrane voltage (mV)
    pub v: f64,
    /// recovery variable
    pub u: f64,
}

impl NeuronState {
    /// Conventional starting point: v at the base reset voltage, u = b*v.
    pub fn rest() -> Self {
        NeuronState { v: BASE_C, u: BASE_B * BASE_C }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.u.is_finite()
    }
}

#[inline]
fn dv(v: f64, u: f64, input: f64) -> f64 {
    0.04 * v * v + 5.0 * v + 140.0 - u + input
}

/// Advance one neuron by one 1 ms step. Returns the new state and whether
/// the neuron fired (in which case the state is already reset).
#[inline]
pub fn izhikevich_step(
    state: NeuronState,
    params: &NeuronParams,
    input: f64,
    v_threshold: f64,
) -> (NeuronState, bool) {
    let mut v = state.v;
    let mut u = state.u;
    v += 0.5 * dv(v, u, input);
    v += 0.5 * dv(v, u, input);
    u += params.a * (params.b * v - u);
    if v >= v_threshold {
        (NeuronState { v: params.c, u: u + params.d }, true)
    } else {
        (NeuronState { v, u }, false)
    }
}

/// Incoming synaptic current for one post neuron: the sum of weights of its
/// incoming synapses whose pre neuron fired on the previous step.
/// Feed-forward pres index into the previous layer's spike buffer, lateral
/// pres into the post's own layer's buffer. Summation follows the canonical
/// storage order (feed-forward then lateral, each ascending pre) and skips
/// non-fired entries rather than adding zero terms — the normative sequence
/// both the sparse engine and the dense oracle must reproduce.
#[inline]
pub fn synaptic_current(
    post: usize,
    conn: &LayerConnectivity,
    prev_below: &[bool],
    prev_same: &[bool],
) -> f64 {
    let mut sum = 0.0;
    for syn in conn.incoming_ff(post) {
        if prev_below[syn.pre as usize] {
            sum += syn.weight;
        }
    }
    for syn in conn.incoming_lat(post) {
        if prev_same[syn.pre as usize] {
            sum += syn.weight;
        }
    }
    sum
}

/// Input-layer currents: gain * frame cell, cells in {0,1}.
pub fn inject_input_layer(frame: &[u8], gain: f64, out: &mut [f64]) -> crate::Result<()> {
    if frame.len() != out.len() {
        return Err(crate::Error::invalid_argument(format!(
            "frame has {} cells but layer has {} neurons",
            frame.len(),
            out.len()
        )));
    }
    for (cur, &cell) in out.iter_mut().zip(frame) {
        *cur = gain * cell as f64;
    }
    Ok(())
}
