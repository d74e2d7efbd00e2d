//! End-to-end experiment programs run against the device model: readout
//! calibration, active qubit and qutrit reset, randomized benchmarking, the
//! parametric iSWAP tune-up, single-qubit characterization and a CW lock-in
//! demonstration.
//!
//! All experiments share the port layout of [`Setup`]: one control port per
//! qubit, then a readout port on the common feedline, then (if the device
//! has one) the coupler port. Input port `k` digitizes the feedline in the
//! frame of qubit `k`'s readout tone.

pub mod characterize;
pub mod clifford;
pub mod cw;
pub mod fit;
pub mod iswap;
pub mod rb;
pub mod readout;
pub mod reset;

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::calibration::{optimize_clear, ClearPulse};
use crate::device::DeviceParams;
use crate::dsp::CarrierConfig;
use crate::rng::{keyed, Stream};
use crate::sequencer::{run, EventKind, EventSchedule, InputPortConfig, InstrumentConfig, Program, RunOptions};
use crate::siggen::{drag_samples, split_into_templates, OutputTarget, PortConfig, Template, TemplateMode};
use crate::{Error, Result};

/// Hold amplitude (full scale) of the CLEAR readout pulse.
pub const READOUT_HOLD: f64 = 0.03;
/// Duration of each CLEAR segment.
pub const SEGMENT_NS: u32 = 350;
/// Single-qubit gate duration.
pub const GATE_NS: u32 = 20;
pub const GATE_TICKS: u64 = GATE_NS as u64 / 2;

/// Control-port template ids.
pub const PI_PULSE: usize = 0;
pub const HALF_PI_PULSE: usize = 1;
/// Group-1 template driving the e–f transition (qutrits only).
pub const PI_EF_PULSE: usize = 8;

/// Coupler-port flat-top template ids and their lengths in ticks.
pub const COUPLER_BLOCKS: [(usize, u64); 3] = [(0, 100), (1, 10), (2, 1)];

/// Number of carrier-table entries reserved for virtual-Z phases on each
/// control port (multiples of π/2).
pub const PHASE_ENTRIES: usize = 4;

/// Signal-generator center of the coupler port; the carrier covers the
/// offset to the exchange resonance.
pub const COUPLER_CENTER_HZ: f64 = 500e6;

/// Parallelism and seeding shared by experiment runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exec {
    pub seed: u64,
    pub threads: usize,
}

impl Default for Exec {
    fn default() -> Self {
        Self { seed: 0, threads: 1 }
    }
}

impl Exec {
    pub fn new(seed: u64, threads: usize) -> Self {
        Self { seed, threads }
    }

    /// Options for sub-run `label`, with a seed derived from the base seed.
    pub fn shots(&self, label: u64) -> RunOptions {
        RunOptions { keep_shots: false, ..RunOptions::shots(crate::rng::derive_seed(self.seed, label)) }
            .with_threads(self.threads)
    }

    pub fn ensemble(&self, label: u64) -> RunOptions {
        RunOptions { keep_shots: false, ..RunOptions::ensemble(crate::rng::derive_seed(self.seed, label)) }
            .with_threads(self.threads)
    }
}

/// Device plus the calibrated drive parameters of every qubit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub device: DeviceParams,
    /// Readout tone of each qubit (Hz).
    pub readout_hz: Vec<f64>,
    pub clear: Vec<ClearPulse>,
    /// Full-scale amplitude of each qubit's π pulse.
    pub pi_amplitude: Vec<f64>,
    /// DRAG coefficient β. Zero for two-level qubits, where there is no
    /// leakage level to suppress.
    pub drag_beta: f64,
    /// Coupler drive amplitude (full scale).
    pub coupler_amplitude: f64,
}

impl Setup {
    /// Readout tones at the bare resonator frequencies (midway between the
    /// g and e dressed resonances) with CLEAR pulses designed for them.
    pub fn new(device: DeviceParams) -> Result<Self> {
        device.validate()?;
        let readout_hz: Vec<f64> = device.qubits.iter().map(|q| q.omega_r / TAU).collect();
        let clear = device
            .qubits
            .iter()
            .zip(&readout_hz)
            .map(|(q, &f)| optimize_clear(q, f, READOUT_HOLD, SEGMENT_NS))
            .collect::<Result<Vec<_>>>()?;
        let pi_amplitude = device.qubits.iter().map(|q| q.sin2_amplitude_for(PI)).collect();
        let coupler_amplitude = match &device.coupler {
            Some(c) => 0.21 / c.flux_per_full_scale,
            None => 0.0,
        };
        let line = device.qubits[0].readout_line;
        if device.qubits.iter().any(|q| q.readout_line != line) {
            return Err(Error::InvalidArgument("experiments expect all resonators on one feedline".into()));
        }
        if device.qubits.len() > 2 {
            return Err(Error::InvalidArgument("experiments support at most two qubits".into()));
        }
        Ok(Self { device, readout_hz, clear, pi_amplitude, drag_beta: 0.0, coupler_amplitude })
    }

    pub fn qubits(&self) -> usize {
        self.device.qubits.len()
    }

    pub fn control_port(&self, q: usize) -> usize {
        q
    }

    pub fn readout_port(&self) -> usize {
        self.qubits()
    }

    pub fn coupler_port(&self) -> Option<usize> {
        self.device.coupler.as_ref().map(|_| self.qubits() + 1)
    }

    /// Frame of the readout port: the single readout tone, or the midpoint
    /// of the tones for multiplexed readout.
    pub fn readout_frame_hz(&self) -> f64 {
        self.readout_hz.iter().sum::<f64>() / self.readout_hz.len() as f64
    }

    pub fn readout_ticks(&self) -> u64 {
        4 * SEGMENT_NS as u64 / 2
    }

    /// Readout template ids for qubit `q`: both halves of its CLEAR pulse.
    pub fn readout_templates(&self, q: usize) -> [usize; 2] {
        [8 * q, 8 * q + 1]
    }

    fn control_port_config(&self, q: usize) -> Result<PortConfig> {
        let qp = &self.device.qubits[q];
        let mut p = PortConfig::new(OutputTarget::Control { qubit: q }, qp.omega_01 / TAU);
        let amp = self.pi_amplitude[q];
        for a in [amp, amp / 2.0] {
            let s = drag_samples(GATE_NS, a, qp.alpha, self.drag_beta)?;
            p.add_template(0, Template::envelope(&s)?)?;
        }
        p.groups[0].carrier_lut = (0..PHASE_ENTRIES).map(|k| CarrierConfig::from_frequency(0.0, k as f64 * PI / 2.0)).collect();
        if qp.levels == 3 {
            let s = drag_samples(GATE_NS, amp / std::f64::consts::SQRT_2, qp.alpha, 0.0)?;
            p.add_template(1, Template::envelope(&s)?)?;
            p.groups[1].carrier_lut = vec![CarrierConfig::from_frequency(qp.alpha / TAU, 0.0)];
        }
        Ok(p)
    }

    fn readout_port_config(&self) -> Result<PortConfig> {
        let line = self.device.qubits[0].readout_line;
        let frame = self.readout_frame_hz();
        let mut p = PortConfig::new(OutputTarget::Readout { line }, frame);
        for q in 0..self.qubits() {
            let halves = split_into_templates(&self.clear[q].samples(), TemplateMode::Envelope)?;
            for t in halves {
                p.add_template(q, t)?;
            }
            p.groups[q].carrier_lut = vec![CarrierConfig::from_frequency(self.readout_hz[q] - frame, 0.0)];
        }
        Ok(p)
    }

    fn coupler_port_config(&self) -> Result<PortConfig> {
        let mut p = PortConfig::new(OutputTarget::Coupler, COUPLER_CENTER_HZ);
        for (_, ticks) in COUPLER_BLOCKS {
            let s = vec![Complex64::new(self.coupler_amplitude, 0.0); 2 * ticks as usize];
            p.add_template(0, Template::envelope(&s)?)?;
        }
        if let Some(c) = &self.device.coupler {
            let f = c.resonance_hz(&self.device.qubits[0], &self.device.qubits[1]);
            p.groups[0].carrier_lut = vec![CarrierConfig::from_frequency(f - COUPLER_CENTER_HZ, 0.0)];
        }
        Ok(p)
    }

    /// Port configuration shared by all experiments.
    pub fn instrument(&self) -> Result<InstrumentConfig> {
        let mut outputs = Vec::new();
        for q in 0..self.qubits() {
            outputs.push(self.control_port_config(q)?);
        }
        outputs.push(self.readout_port_config()?);
        if self.coupler_port().is_some() {
            outputs.push(self.coupler_port_config()?);
        }
        let inputs = self
            .device
            .qubits
            .iter()
            .zip(&self.readout_hz)
            .map(|(q, &f)| InputPortConfig { line: q.readout_line, rf_center_hz: f, ..Default::default() })
            .collect();
        Ok(InstrumentConfig { outputs, inputs, feedback: Default::default() })
    }

    /// Plays template `template_id` on qubit `q`'s control port; returns the
    /// end tick.
    pub fn gate(&self, s: &mut EventSchedule, at: u64, q: usize, template_id: usize) -> u64 {
        s.push(at, EventKind::OutputTemplate { port: self.control_port(q), template_id });
        at + GATE_TICKS
    }

    /// Selects virtual-Z phase `k·π/2` for subsequent pulses on qubit `q`.
    pub fn phase(&self, s: &mut EventSchedule, at: u64, q: usize, k: usize) {
        s.push(
            at,
            EventKind::SetCarrier { port: self.control_port(q), group: 0, lut_index: k % PHASE_ENTRIES, stride: 0 },
        );
    }

    /// Plays the readout pulses of `qubits` from `at`; returns the end tick.
    pub fn readout(&self, s: &mut EventSchedule, at: u64, qubits: &[usize]) -> u64 {
        let half = self.readout_ticks() / 2;
        for &q in qubits {
            let [a, b] = self.readout_templates(q);
            s.push(at, EventKind::OutputTemplate { port: self.readout_port(), template_id: a });
            s.push(at + half, EventKind::OutputTemplate { port: self.readout_port(), template_id: b });
        }
        at + self.readout_ticks()
    }

    /// Drives the coupler for `ticks` from `at` using the flat-top blocks.
    pub fn coupler_drive(&self, s: &mut EventSchedule, mut at: u64, mut ticks: u64) -> Result<u64> {
        let port = self.coupler_port().ok_or_else(|| Error::InvalidArgument("device has no coupler".into()))?;
        for (id, len) in COUPLER_BLOCKS {
            while ticks >= len {
                s.push(at, EventKind::OutputTemplate { port, template_id: id });
                at += len;
                ticks -= len;
            }
        }
        Ok(at)
    }
}

/// Excited-state population (all levels above g) of qubit `q` at its first
/// readout in each repetition, from an ensemble-mode run.
pub fn ensemble_excited(program: &Program, device: &DeviceParams, q: usize, exec: &Exec, label: u64) -> Result<Vec<f64>> {
    let r = run(program, device, RunOptions { keep_shots: true, ..exec.ensemble(label) })?;
    r.shots
        .iter()
        .map(|shot| {
            shot.probes
                .iter()
                .find(|p| p.qubit == q)
                .map(|p| p.populations[1..].iter().sum::<f64>().clamp(0.0, 1.0))
                .ok_or_else(|| Error::Fit("no readout probe recorded".into()))
        })
        .collect()
}

/// Fraction of `shots` Bernoulli(p) draws, keyed by (`label`, `point`).
/// Stands in for single-shot readout with ideal discrimination.
pub fn sampled_fraction(exec: &Exec, label: u64, point: u64, p: f64, shots: u64) -> Result<f64> {
    let mut rng = keyed(exec.seed, label, point, Stream::Shots, 0);
    let k = Binomial::new(shots, p.clamp(0.0, 1.0)).map_err(|e| Error::Fit(e.to_string()))?.sample(&mut rng);
    Ok(k as f64 / shots.max(1) as f64)
}

/// Median and interquartile range.
pub fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| {
        if v.is_empty() {
            return f64::NAN;
        }
        let pos = p * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    (q(0.25), q(0.5), q(0.75))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instrument_layout() {
        let s = Setup::new(DeviceParams::two_qubit()).unwrap();
        let ins = s.instrument().unwrap();
        assert_eq!(ins.outputs.len(), 4);
        assert_eq!(ins.inputs.len(), 2);
        let mut sched = EventSchedule::new(2000, 1);
        let end = s.readout(&mut sched, 0, &[0, 1]);
        assert_eq!(end, 700);
        let p = Program { instrument: ins, schedule: sched };
        assert!(p.violations().is_empty(), "{:?}", p.violations());
    }

    #[test]
    fn coupler_blocks_cover_duration() {
        let s = Setup::new(DeviceParams::two_qubit()).unwrap();
        let mut sched = EventSchedule::new(2000, 1);
        assert_eq!(s.coupler_drive(&mut sched, 5, 123).unwrap(), 128);
        assert_eq!(sched.events.len(), 1 + 2 + 3);
    }
}
