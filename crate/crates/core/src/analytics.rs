//! Outgoing-weight entropy, windowed spike counts, raster logging, and the
//! file exports for all three (PGM maps, CSV logs).
//!
//! Entropy of a neuron's outgoing weights of one polarity class: with
//! K non-zero synapses and p_j = |w_j| / sum |w|, E = -(1/ln K) * sum of
//! p_j ln p_j, defined as 0 when K <= 1. Equal weights give exactly 1 (the
//! uniform distribution attains the ln K maximum, so the value is returned
//! exactly rather than recomputed through the log sum).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::topology::{LayerSpec, Network};

/// Normalized entropy of one polarity class of outgoing weights.
/// Zero-weight entries are excluded; mixing positive and negative weights
/// is an error.
pub fn neuron_entropy(weights: &[f64]) -> Result<f64> {
    let mut any_pos = false;
    let mut any_neg = false;
    for &w in weights {
        any_pos |= w > 0.0;
        any_neg |= w < 0.0;
    }
    if any_pos && any_neg {
        return Err(Error::invalid_argument("mixed-polarity weight list"));
    }
    let mags: Vec<f64> = weights.iter().filter(|&&w| w != 0.0).map(|w| w.abs()).collect();
    Ok(entropy_of_magnitudes(&mags))
}

fn entropy_of_magnitudes(mags: &[f64]) -> f64 {
    let k = mags.len();
    if k <= 1 {
        return 0.0;
    }
    if mags.iter().all(|m| m.to_bits() == mags[0].to_bits()) {
        return 1.0;
    }
    let sum: f64 = mags.iter().sum();
    if sum == 0.0 || !sum.is_finite() {
        return 0.0;
    }
    let mut acc = 0.0;
    for &m in mags {
        let p = m / sum;
        if p > 0.0 {
            acc -= p * p.ln();
        }
    }
    (acc / (k as f64).ln()).clamp(0.0, 1.0)
}

/// Per-neuron entropy over outgoing feed-forward weights, split by synapse
/// class, plus the class fan-out counts (K) so callers can tell a genuine
/// zero from an undefined one.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyMap {
    /// [layer][neuron]
    pub e_exc: Vec<Vec<f64>>,
    pub e_inh: Vec<Vec<f64>>,
    pub k_exc: Vec<Vec<u32>>,
    pub k_inh: Vec<Vec<u32>>,
}

impl EntropyMap {
    /// Mean excitatory-class entropy over the layer's neurons that have a
    /// defined value (K >= 2). None when no neuron qualifies.
    pub fn mean_exc_defined(&self, layer: usize) -> Option<f64> {
        mean_where(&self.e_exc[layer], &self.k_exc[layer])
    }

    pub fn mean_inh_defined(&self, layer: usize) -> Option<f64> {
        mean_where(&self.e_inh[layer], &self.k_inh[layer])
    }

    /// Mean excitatory-class entropy over every defined neuron in the
    /// network.
    pub fn mean_exc_defined_overall(&self) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0u64;
        for (es, ks) in self.e_exc.iter().zip(&self.k_exc) {
            for (&e, &k) in es.iter().zip(ks) {
                if k >= 2 {
                    sum += e;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }
}

fn mean_where(es: &[f64], ks: &[u32]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0u64;
    for (&e, &k) in es.iter().zip(ks) {
        if k >= 2 {
            sum += e;
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Entropy over the feed-forward outgoing weights (the plastic set) of
/// every neuron. Classes are separated by weight sign; zero weights count
/// toward neither.
pub fn layer_entropy_map(net: &Network) -> EntropyMap {
    let n = net.layer_len();
    let num_layers = net.num_layers();
    let mut map = EntropyMap {
        e_exc: vec![vec![0.0; n]; num_layers],
        e_inh: vec![vec![0.0; n]; num_layers],
        k_exc: vec![vec![0; n]; num_layers],
        k_inh: vec![vec![0; n]; num_layers],
    };
    for layer in 0..num_layers {
        let outgoing = net.synapses.outgoing_ff_weights(layer, n);
        for (i, weights) in outgoing.iter().enumerate() {
            let pos: Vec<f64> = weights.iter().copied().filter(|&w| w > 0.0).collect();
            let neg: Vec<f64> = weights.iter().copied().filter(|&w| w < 0.0).map(f64::abs).collect();
            map.e_exc[layer][i] = entropy_of_magnitudes(&pos);
            map.e_inh[layer][i] = entropy_of_magnitudes(&neg);
            map.k_exc[layer][i] = pos.len() as u32;
            map.k_inh[layer][i] = neg.len() as u32;
        }
    }
    map
}

/// One completed spike-count window (a PSTH column).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeCountWindow {
    pub index: u64,
    /// per neuron, global ids
    pub counts: Vec<u32>,
}

/// Windowed per-neuron spike counting. Windows are half-open in steps:
/// window n covers [n*window_ms, (n+1)*window_ms), so a spike exactly on a
/// boundary lands in the new window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeCounts {
    pub window_ms: u32,
    pub window_index: u64,
    pub current: Vec<u32>,
}

impl SpikeCounts {
    pub fn new(window_ms: u32, total_neurons: usize) -> Self {
        SpikeCounts { window_ms, window_index: 0, current: vec![0; total_neurons] }
    }

    /// Record one step's spikes (global neuron ids). Returns the windows
    /// completed by advancing to this step, oldest first.
    pub fn record_step(&mut self, step_ms: u64, fired: &[u32]) -> Vec<SpikeCountWindow> {
        let idx = step_ms / self.window_ms as u64;
        let mut completed = Vec::new();
        while self.window_index < idx {
            let fresh = vec![0; self.current.len()];
            let counts = std::mem::replace(&mut self.current, fresh);
            completed.push(SpikeCountWindow { index: self.window_index, counts });
            self.window_index += 1;
        }
        for &id in fired {
            self.current[id as usize] += 1;
        }
        completed
    }

    /// Emit the in-progress window (possibly partial), used at end of run.
    pub fn finish(&mut self) -> SpikeCountWindow {
        let fresh = vec![0; self.current.len()];
        let counts = std::mem::replace(&mut self.current, fresh);
        let w = SpikeCountWindow { index: self.window_index, counts };
        self.window_index += 1;
        w
    }
}

/// Append-only spike raster: (step, global neuron id) pairs, steps
/// nondecreasing.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RasterLog {
    pub records: Vec<(u64, u32)>,
}

impl RasterLog {
    pub fn push_step(&mut self, step: u64, fired: &[u32]) {
        debug_assert!(self.records.last().is_none_or(|&(s, _)| s <= step));
        for &id in fired {
            self.records.push((step, id));
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Plain-text PGM (P2) export of a per-neuron scalar field in [0,1];
/// pixel = round(255 * value), half away from zero. Row-major, one sheet
/// row per line — the byte layout is fixed so repeated exports of equal
/// fields are identical files.
pub fn export_map_pgm(values: &[f64], spec: LayerSpec, path: &Path) -> Result<()> {
    if values.len() != spec.len() {
        return Err(Error::invalid_argument(format!(
            "map has {} values but sheet is {}x{}",
            values.len(),
            spec.width,
            spec.height
        )));
    }
    let mut out = format!("P2\n{} {}\n255\n", spec.width, spec.height);
    for row in 0..spec.height {
        let mut line = String::new();
        for col in 0..spec.width {
            if col > 0 {
                line.push(' ');
            }
            let v = (255.0 * values[spec.idx(row, col)]).round().clamp(0.0, 255.0) as u8;
            line.push_str(&v.to_string());
        }
        out.push_str(&line);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn export_raster_csv(log: &RasterLog, path: &Path) -> Result<()> {
    let mut out = String::from("step,neuron_id\n");
    for &(step, id) in &log.records {
        out.push_str(&format!("{step},{id}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Per-window spike counts; zero counts are omitted to keep files
/// proportional to activity.
pub fn export_counts_csv(windows: &[SpikeCountWindow], path: &Path) -> Result<()> {
    let mut out = String::from("window,neuron_id,count\n");
    for w in windows {
        for (id, &c) in w.counts.iter().enumerate() {
            if c > 0 {
                out.push_str(&format!("{},{id},{c}\n", w.index));
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use crate::topology::{build_network, LayerSpec, TopologyConfig, WeightInit};

    #[test]
    fn entropy_hand_example() {
        let e = neuron_entropy(&[4.0, 2.0, 1.0, 1.0]).unwrap();
        assert!((e - 0.875).abs() < 1e-12, "got {e}");
    }

    #[test]
    fn equal_weights_give_exactly_one() {
        for k in 2..=64usize {
            let weights = vec![3.7; k];
            assert_eq!(neuron_entropy(&weights).unwrap(), 1.0, "K = {k}");
        }
    }

    #[test]
    fn degenerate_counts_give_zero() {
        assert_eq!(neuron_entropy(&[]).unwrap(), 0.0);
        assert_eq!(neuron_entropy(&[5.0]).unwrap(), 0.0);
        assert_eq!(neuron_entropy(&[0.0, 0.0, 5.0]).unwrap(), 0.0);
        assert_eq!(neuron_entropy(&[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn mixed_polarity_is_rejected() {
        assert!(neuron_entropy(&[1.0, -1.0]).is_err());
        // zeros are classless
        assert!(neuron_entropy(&[1.0, 0.0, 2.0]).is_ok());
        assert!(neuron_entropy(&[-1.0, 0.0, -2.0]).is_ok());
    }

    #[test]
    fn entropy_is_scale_and_permutation_invariant() {
        let base = [4.0, 2.0, 1.0, 1.0];
        let e = neuron_entropy(&base).unwrap();
        let doubled: Vec<f64> = base.iter().map(|w| w * 4.0).collect();
        assert_eq!(neuron_entropy(&doubled).unwrap(), e); // power-of-two scale is exact
        let scaled: Vec<f64> = base.iter().map(|w| w * 3.7).collect();
        assert!((neuron_entropy(&scaled).unwrap() - e).abs() < 1e-12);
        let mut reversed = base;
        reversed.reverse();
        assert!((neuron_entropy(&reversed).unwrap() - e).abs() < 1e-12);
    }

    #[test]
    fn entropy_stays_in_range_on_random_inputs() {
        let mut rng = RandomStream::new(11);
        for _ in 0..200 {
            let k = 2 + rng.index(12);
            let weights: Vec<f64> = (0..k).map(|_| rng.uniform_pos(7.0)).collect();
            let e = neuron_entropy(&weights).unwrap();
            assert!((0.0..=1.0).contains(&e), "out of range: {e} for {weights:?}");
        }
    }

    #[test]
    fn concentrating_mass_never_raises_entropy() {
        // brute force on K = 3: move one grid unit from a smaller weight to
        // the largest. The source must stay positive — once a weight hits
        // zero the synapse count K drops and the ln K normalizer shrinks
        // with it, which can raise the normalized value.
        for a in 2..=20u32 {
            for b in 2..=a {
                for c in 2..=b {
                    let e = neuron_entropy(&[a as f64, b as f64, c as f64]).unwrap();
                    let moved_b = neuron_entropy(&[a as f64 + 1.0, b as f64 - 1.0, c as f64]).unwrap();
                    let moved_c = neuron_entropy(&[a as f64 + 1.0, b as f64, c as f64 - 1.0]).unwrap();
                    assert!(moved_b <= e + 1e-12);
                    assert!(moved_c <= e + 1e-12);
                }
            }
        }
    }

    #[test]
    fn dominant_synapse_drives_entropy_to_zero() {
        let e = neuron_entropy(&[7.0, 1e-9, 1e-9]).unwrap();
        assert!(e < 0.01, "got {e}");
    }

    #[test]
    fn fresh_equal_weight_network_is_at_maximum_entropy() {
        let config = TopologyConfig {
            num_layers: 3,
            layer: LayerSpec::new(12, 12),
            ..TopologyConfig::default()
        };
        let net = build_network(&config).unwrap();
        let map = layer_entropy_map(&net);
        for layer in 0..2 {
            for i in 0..net.layer_len() {
                if map.k_exc[layer][i] >= 2 {
                    assert_eq!(map.e_exc[layer][i], 1.0);
                }
                if map.k_inh[layer][i] >= 2 {
                    assert_eq!(map.e_inh[layer][i], 1.0);
                }
            }
        }
        assert_eq!(map.mean_exc_defined(0), Some(1.0));
        assert_eq!(map.mean_exc_defined_overall(), Some(1.0));
        // the last layer has no feed-forward fan-out
        assert_eq!(map.mean_exc_defined(2), None);
        assert!(map.k_exc[2].iter().all(|&k| k == 0));
    }

    #[test]
    fn no_synapses_means_all_entropies_zero() {
        let config = TopologyConfig {
            num_layers: 2,
            layer: LayerSpec::new(8, 8),
            p_keep_ff: 0.0,
            p_keep_lat: 0.0,
            init_weights: WeightInit::UniformRandom,
            ..TopologyConfig::default()
        };
        let net = build_network(&config).unwrap();
        let map = layer_entropy_map(&net);
        assert!(map.e_exc.iter().flatten().all(|&e| e == 0.0));
        assert_eq!(map.mean_exc_defined_overall(), None);
    }

    #[test]
    fn spike_counts_accumulate_and_reset_on_boundaries() {
        let mut counts = SpikeCounts::new(300, 4);
        for step in 0..300u64 {
            let fired = if step % 25 == 0 { vec![2u32] } else { vec![] };
            assert!(counts.record_step(step, &fired).is_empty());
        }
        // step 300 crosses into window 1
        let done = counts.record_step(300, &[2]);
        assert_eq!(done.len(), 1);
        assert_eq!(done[0].index, 0);
        assert_eq!(done[0].counts, vec![0, 0, 12, 0]);
        let partial = counts.finish();
        assert_eq!(partial.index, 1);
        assert_eq!(partial.counts, vec![0, 0, 1, 0]); // the boundary spike
    }

    #[test]
    fn silent_windows_emit_zeros() {
        let mut counts = SpikeCounts::new(10, 2);
        let done = counts.record_step(25, &[]);
        assert_eq!(done.len(), 2);
        assert!(done.iter().all(|w| w.counts == vec![0, 0]));
    }

    #[test]
    fn pgm_export_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("map.pgm");
        let spec = LayerSpec::new(2, 2);
        export_map_pgm(&[1.0, 0.5, 0.0, 0.25], spec, &path).unwrap();
        let body = fs::read_to_string(&path).unwrap();
        assert_eq!(body, "P2\n2 2\n255\n255 128\n0 64\n");
        export_map_pgm(&[1.0; 4], spec, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "P2\n2 2\n255\n255 255\n255 255\n");
        assert!(export_map_pgm(&[1.0; 3], spec, &path).is_err());
    }

    #[test]
    fn raster_and_counts_exports() {
        let dir = tempfile::tempdir().unwrap();
        let raster_path = dir.path().join("raster.csv");
        let mut log = RasterLog::default();
        export_raster_csv(&log, &raster_path).unwrap();
        assert_eq!(fs::read_to_string(&raster_path).unwrap(), "step,neuron_id\n");
        log.push_step(3, &[7, 9]);
        log.push_step(5, &[1]);
        export_raster_csv(&log, &raster_path).unwrap();
        assert_eq!(fs::read_to_string(&raster_path).unwrap(), "step,neuron_id\n3,7\n3,9\n5,1\n");

        let counts_path = dir.path().join("counts.csv");
        let windows = vec![
            SpikeCountWindow { index: 0, counts: vec![0, 12, 0] },
            SpikeCountWindow { index: 1, counts: vec![1, 0, 2] },
        ];
        export_counts_csv(&windows, &counts_path).unwrap();
        assert_eq!(
            fs::read_to_string(&counts_path).unwrap(),
            "window,neuron_id,count\n0,1,12\n1,0,1\n1,2,2\n"
        );
    }
}
