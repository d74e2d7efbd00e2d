//! iSWAP tune-up: excite qubit 2, drive the coupler near the exchange
//! resonance for a variable time, then read out both qubits through one
//! multiplexed readout pulse.
//!
//! Two pairs of maps are produced. `population` holds the excited-state
//! populations of the simulated state at readout (ensemble mode, exact);
//! `measured` holds the fraction of shots the matched filters assigned to e.

use serde::{Deserialize, Serialize};

use super::fit::{cosine, curve_fit, dominant_frequency, CurveFit};
use super::readout::ReadoutCalibration;
use super::{Exec, Setup, COUPLER_CENTER_HZ, GATE_TICKS, PI_PULSE};
use crate::calibration::{Provenance, ReferencePair};
use crate::dsp::CarrierConfig;
use crate::sequencer::{run, run_with, EventKind, EventSchedule, InstrumentConfig, Program, RunOptions};
use crate::{Error, Result};

const TAIL_TICKS: u64 = 50;
/// SDRAM spacing between the two stored readout traces.
const REGION_STRIDE: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IswapConfig {
    /// Drive frequencies relative to the exchange resonance (Hz).
    pub detunings_hz: Vec<f64>,
    /// Coupler pulse durations (ns, even).
    pub durations_ns: Vec<u32>,
    /// Shots per pixel of the measured maps; 0 skips them.
    pub shots: u64,
}

impl IswapConfig {
    /// 9 detunings × 31 durations (0–600 ns) × 100 shots.
    pub fn desk() -> Self {
        Self {
            detunings_hz: (-4..=4).map(|k| k as f64 * 1e6).collect(),
            durations_ns: (0..=30).map(|k| 20 * k).collect(),
            shots: 100,
        }
    }

    /// 41 detunings × 61 durations × 1000 shots.
    pub fn paper() -> Self {
        Self {
            detunings_hz: (-20..=20).map(|k| k as f64 * 0.2e6).collect(),
            durations_ns: (0..=60).map(|k| 10 * k).collect(),
            shots: 1000,
        }
    }
}

/// Cosine fit of one constant-detuning cut of a P_e map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutFit {
    pub detuning_hz: f64,
    pub fit: CurveFit,
    /// Peak-to-peak amplitude 2|A|.
    pub contrast: f64,
    /// Time of the first maximum exchange, half the fitted period (s).
    pub swap_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IswapResult {
    pub config: IswapConfig,
    /// Absolute drive frequencies (Hz).
    pub frequencies_hz: Vec<f64>,
    /// Excited population of each qubit, indexed [qubit][detuning][duration].
    pub population: [Vec<Vec<f64>>; 2],
    /// Fraction of shots assigned to e, same layout; empty without shots.
    pub measured: [Vec<Vec<f64>>; 2],
    /// Cosine fits of qubit 1's population cuts, one per detuning.
    pub cuts: Vec<CutFit>,
    /// g_eff (rad/s) at the configured coupler amplitude.
    pub g_eff: f64,
}

impl IswapResult {
    fn resonant_index(&self) -> Option<usize> {
        self.config
            .detunings_hz
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
    }

    pub fn resonant_cut(&self) -> Option<&CutFit> {
        self.resonant_index().and_then(|i| self.cuts.get(i))
    }

    /// Contrast of each cut relative to the resonant one, next to
    /// g²/(g²+δ²) with δ = π·detuning.
    pub fn chevron_contrast(&self) -> Vec<(f64, f64, f64)> {
        let Some(c0) = self.resonant_cut().map(|c| c.contrast) else {
            return Vec::new();
        };
        let g2 = self.g_eff * self.g_eff;
        self.cuts
            .iter()
            .map(|c| {
                let d = std::f64::consts::PI * c.detuning_hz;
                (c.detuning_hz, c.contrast / c0, g2 / (g2 + d * d))
            })
            .collect()
    }
}

fn instrument_for(setup: &Setup, frequencies: &[f64]) -> Result<InstrumentConfig> {
    let mut ins = setup.instrument()?;
    let port = setup.coupler_port().ok_or_else(|| Error::InvalidArgument("device has no coupler".into()))?;
    ins.outputs[port].groups[0].carrier_lut =
        frequencies.iter().map(|f| CarrierConfig::from_frequency(f - COUPLER_CENTER_HZ, 0.0)).collect();
    Ok(ins)
}

/// π on qubit 2 then the coupler drive, timed to end at `readout_at`.
///
/// Both resonators share the feedline, so each input port also sees the
/// other resonator's tone 140 MHz away; averaged templates contain that
/// component at a fixed phase. Keeping the readout at one absolute tick in
/// every pixel (and in the calibration) keeps that phase fixed.
fn pixel_schedule(setup: &Setup, fi: usize, ticks: u64, shots: u64, readout_at: u64) -> Result<EventSchedule> {
    let mut s = EventSchedule::new(1, shots);
    let port = setup.coupler_port().expect("checked by instrument_for");
    let start = readout_at - ticks - GATE_TICKS;
    s.push(start, EventKind::SetCarrier { port, group: 0, lut_index: fi, stride: 0 });
    let at = setup.gate(&mut s, start, 1, PI_PULSE);
    setup.coupler_drive(&mut s, at, ticks)?;
    Ok(s)
}

/// Multiplexed readout templates from averages of thermal shots and of
/// shots with a π on one qubit at a time, stored from both input ports in
/// the same program. Exciting one qubit per reference keeps the other
/// resonator's tone, which both ports see, out of the template difference.
/// The readout starts at `at` (at least one gate long).
pub fn multiplexed_calibration(setup: &Setup, at: u64, shots: u64, exec: &Exec) -> Result<[ReadoutCalibration; 2]> {
    let ins = setup.instrument()?;
    let mut traces = Vec::new();
    for (k, excite) in [None, Some(0), Some(1)].into_iter().enumerate() {
        let mut s = EventSchedule::new(1, shots);
        if let Some(q) = excite {
            setup.gate(&mut s, at - GATE_TICKS, q, PI_PULSE);
        }
        let end = setup.readout(&mut s, at, &[0, 1]);
        for q in 0..2 {
            s.push(at, EventKind::StoreWindow { port: q, duration: setup.readout_ticks(), address: q as u64 * REGION_STRIDE, sweep: None });
        }
        s.period = end + TAIL_TICKS;
        let p = Program { instrument: ins.clone(), schedule: s };
        let r = run(&p, &setup.device, exec.shots(400 + k as u64))?;
        let avg = |q: u64| r.sdram.averaged(q * REGION_STRIDE).ok_or_else(|| Error::Fit("no stored traces".into()));
        traces.push([avg(0)?, avg(1)?]);
    }
    let cal = |q: usize| -> Result<ReadoutCalibration> {
        let pair = ReferencePair::new(traces[0][q].clone(), traces[1 + q][q].clone(), Provenance::Preliminary)?;
        ReadoutCalibration::from_references(q, q, pair.clone(), pair, [0; 2])
    };
    Ok([cal(0)?, cal(1)?])
}

/// Fits A·cos(2πft + φ) + B to one cut.
pub fn fit_cut(detuning_hz: f64, t: &[f64], p: &[f64]) -> Result<CutFit> {
    let f0 = dominant_frequency(t, p);
    let (lo, hi) = p.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
    let fit = curve_fit(cosine, t, p, &[-(hi - lo) / 2.0, f0, 0.0, (hi + lo) / 2.0])?;
    let f = fit.params[1].abs();
    Ok(CutFit { detuning_hz, contrast: 2.0 * fit.params[0].abs(), swap_time: 0.5 / f, fit })
}

pub fn run_iswap_scan(setup: &Setup, cfg: &IswapConfig, exec: &Exec) -> Result<IswapResult> {
    if setup.qubits() != 2 {
        return Err(Error::InvalidArgument("iSWAP needs two qubits".into()));
    }
    let coupler = setup.device.coupler.clone().ok_or_else(|| Error::InvalidArgument("device has no coupler".into()))?;
    if cfg.durations_ns.iter().any(|d| d % 2 != 0) {
        return Err(Error::InvalidArgument("durations must be whole ticks (even ns)".into()));
    }
    let res = coupler.resonance_hz(&setup.device.qubits[0], &setup.device.qubits[1]);
    let frequencies: Vec<f64> = cfg.detunings_hz.iter().map(|d| res + d).collect();
    let ins = instrument_for(setup, &frequencies)?;
    let (nf, nt) = (frequencies.len(), cfg.durations_ns.len());
    let mut population = [vec![vec![0.0; nt]; nf], vec![vec![0.0; nt]; nf]];
    let mut measured = [Vec::new(), Vec::new()];
    let at = GATE_TICKS + cfg.durations_ns.iter().max().map_or(0, |&d| u64::from(d / 2));
    let cals = if cfg.shots > 0 { Some(multiplexed_calibration(setup, at, cfg.shots.max(2000), exec)?) } else { None };
    if cals.is_some() {
        measured = [vec![vec![0.0; nt]; nf], vec![vec![0.0; nt]; nf]];
    }
    for fi in 0..nf {
        for (ti, &d) in cfg.durations_ns.iter().enumerate() {
            let label = (fi * nt + ti) as u64;
            let mut s = pixel_schedule(setup, fi, u64::from(d / 2), 1, at)?;
            let end = setup.readout(&mut s, at, &[0, 1]);
            s.period = end + TAIL_TICKS;
            let p = Program { instrument: ins.clone(), schedule: s };
            let r = run(&p, &setup.device, RunOptions { keep_shots: true, ..exec.ensemble(10_000 + label) })?;
            let shot = r.shots.first().ok_or_else(|| Error::Fit("no repetition recorded".into()))?;
            for pr in &shot.probes {
                if pr.qubit < 2 {
                    population[pr.qubit][fi][ti] = pr.populations[1..].iter().sum();
                }
            }
            if let Some(cals) = &cals {
                let mut s = pixel_schedule(setup, fi, u64::from(d / 2), cfg.shots, at)?;
                let end = setup.readout(&mut s, at, &[0, 1]);
                let mut instrument = ins.clone();
                for (pair, c) in cals.iter().enumerate() {
                    c.bind(&mut instrument.feedback, pair);
                    c.match_at(&mut s, at, pair);
                }
                s.period = end + TAIL_TICKS;
                let p = Program { instrument, schedule: s };
                let (_, parts) = run_with(&p, &setup.device, exec.shots(20_000 + label), || [0u64; 2], |acc, shot, _| {
                    for m in &shot.matches {
                        if m.pair < 2 && m.comparison {
                            acc[m.pair] += 1;
                        }
                    }
                })?;
                for q in 0..2 {
                    measured[q][fi][ti] = parts.iter().map(|c| c[q]).sum::<u64>() as f64 / cfg.shots as f64;
                }
            }
        }
    }
    let t: Vec<f64> = cfg.durations_ns.iter().map(|&d| f64::from(d) * 1e-9).collect();
    let cuts = cfg
        .detunings_hz
        .iter()
        .zip(&population[0])
        .map(|(&d, row)| fit_cut(d, &t, row))
        .collect::<Result<Vec<_>>>()?;
    Ok(IswapResult {
        config: cfg.clone(),
        frequencies_hz: frequencies,
        population,
        measured,
        cuts,
        g_eff: coupler.exchange_rate(setup.coupler_amplitude),
    })
}
