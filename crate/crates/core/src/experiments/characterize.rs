//! Single-qubit characterization: Rabi amplitude, T1, Ramsey echo, the
//! detuned-drive chevron and pulsed resonator spectroscopy.
//!
//! Qubit populations come from ensemble runs sampled with `shots` Bernoulli
//! draws per point. Spectroscopy needs resonator fields and runs in shot
//! mode with averaged stored traces.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fit::{cosine, curve_fit, dominant_frequency, exp_decay, CurveFit};
use super::{ensemble_excited, sampled_fraction, Exec, Setup, GATE_NS, GATE_TICKS, HALF_PI_PULSE, PI_PULSE, READOUT_HOLD};
use crate::dsp::CarrierConfig;
use crate::sequencer::{run, EventKind, EventSchedule, InputPortConfig, InstrumentConfig, Program};
use crate::siggen::{drag_samples, scale_value, GroupConfig, OutputTarget, PortConfig, Template};
use crate::{Error, Result};

const TAIL_TICKS: u64 = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharacterizeConfig {
    /// Shots per point for the qubit panels.
    pub shots: u64,
    /// Shots per point and state for spectroscopy.
    pub spectroscopy_shots: u64,
    /// Pulses per Rabi point.
    pub rabi_pulses: usize,
    pub rabi_points: usize,
    /// Delays (ns) for T1 and echo.
    pub t1_delays_ns: Vec<u64>,
    pub echo_delays_ns: Vec<u64>,
    /// Rabi rate of the flat chevron drive (Hz).
    pub chevron_rabi_hz: f64,
    pub chevron_detunings_hz: Vec<f64>,
    pub chevron_durations_ns: Vec<u32>,
    /// Spectroscopy frequencies relative to the bare resonator (Hz).
    pub spectroscopy_offsets_hz: Vec<f64>,
}

impl CharacterizeConfig {
    pub fn desk() -> Self {
        Self {
            shots: 1000,
            spectroscopy_shots: 50,
            rabi_pulses: 10,
            rabi_points: 41,
            t1_delays_ns: (0..=30).map(|k| k * 4000).collect(),
            echo_delays_ns: (0..=30).map(|k| k * 4000).collect(),
            chevron_rabi_hz: 5e6,
            chevron_detunings_hz: (-5..=5).map(|k| k as f64 * 2e6).collect(),
            chevron_durations_ns: (0..=100).map(|k| 4 * k).collect(),
            spectroscopy_offsets_hz: (-20..=20).map(|k| k as f64 * 75e3).collect(),
        }
    }

    pub fn paper() -> Self {
        Self { spectroscopy_shots: 1000, ..Self::desk() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiResult {
    /// Pulse amplitudes (full scale).
    pub amplitudes: Vec<f64>,
    pub p_e: Vec<f64>,
    pub fit: Option<CurveFit>,
    /// Fitted π-pulse amplitude.
    pub pi_amplitude: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayResult {
    pub delays_ns: Vec<u64>,
    pub p_e: Vec<f64>,
    pub fit: Option<CurveFit>,
    /// Fitted time constant (s).
    pub time_constant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChevronResult {
    pub detunings_hz: Vec<f64>,
    pub durations_ns: Vec<u32>,
    /// P_e indexed [detuning][duration].
    pub p_e: Vec<Vec<f64>>,
    /// Fitted oscillation frequency per detuning (Hz), next to √(Ω²+Δ²)/2π.
    pub frequencies: Vec<(f64, Option<f64>, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectroscopyResult {
    pub frequencies_hz: Vec<f64>,
    /// Mean steady-state response with the qubit in g and e, as [re, im].
    pub r_g: Vec<[f64; 2]>,
    pub r_e: Vec<[f64; 2]>,
    /// |R_e − R_g|.
    pub separation: Vec<f64>,
    /// Frequency of the largest separation.
    pub readout_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterizationResult {
    pub qubit: usize,
    pub rabi: RabiResult,
    pub t1: DecayResult,
    pub echo: DecayResult,
    pub chevron: ChevronResult,
    pub spectroscopy: SpectroscopyResult,
}

pub fn run_characterization_suite(setup: &Setup, q: usize, cfg: &CharacterizeConfig, exec: &Exec) -> Result<CharacterizationResult> {
    if q >= setup.qubits() {
        return Err(Error::InvalidArgument(format!("no qubit {q}")));
    }
    Ok(CharacterizationResult {
        qubit: q,
        rabi: rabi(setup, q, cfg, exec)?,
        t1: t1(setup, q, cfg, exec)?,
        echo: echo(setup, q, cfg, exec)?,
        chevron: chevron(setup, q, cfg, exec)?,
        spectroscopy: spectroscopy(setup, q, cfg, exec)?,
    })
}

/// Samples ensemble populations of one program per point.
fn sweep(setup: &Setup, q: usize, label: u64, shots: u64, exec: &Exec, programs: impl Iterator<Item = Result<Program>>) -> Result<Vec<f64>> {
    programs
        .enumerate()
        .map(|(k, p)| {
            let pe = ensemble_excited(&p?, &setup.device, q, exec, label * 1_000_000 + k as u64)?[0];
            sampled_fraction(exec, label, k as u64, pe, shots)
        })
        .collect()
}

/// Rabi: `rabi_pulses` identical pulses whose amplitude is swept through
/// the control port's scale table, one table entry per repetition.
pub fn rabi(setup: &Setup, q: usize, cfg: &CharacterizeConfig, exec: &Exec) -> Result<RabiResult> {
    let nominal = setup.pi_amplitude[q];
    let top = (1.2 * nominal).min(0.99);
    let mut ins = setup.instrument()?;
    let port = setup.control_port(q);
    let qp = &setup.device.qubits[q];
    let id = ins.outputs[port].add_template(0, Template::envelope(&drag_samples(GATE_NS, top, qp.alpha, setup.drag_beta)?)?)?;
    let n = cfg.rabi_points.max(2);
    let scales: Vec<f64> = (0..n).map(|k| scale_value((0.8 + 0.4 * k as f64 / (n - 1) as f64) * nominal / top)).collect();
    ins.outputs[port].groups[0].scale_lut = scales.clone();
    let mut s = EventSchedule::new(1, n as u64);
    s.push(0, EventKind::SetScale { port, group: 0, lut_index: 0, stride: 1 });
    let mut at = 0;
    for _ in 0..cfg.rabi_pulses {
        s.push(at, EventKind::OutputTemplate { port, template_id: id });
        at += GATE_TICKS;
    }
    let end = setup.readout(&mut s, at, &[q]);
    s.period = end + TAIL_TICKS;
    let pops = ensemble_excited(&Program { instrument: ins, schedule: s }, &setup.device, q, exec, 1)?;
    let p_e = pops.iter().enumerate().map(|(k, &p)| sampled_fraction(exec, 1, k as u64, p, cfg.shots)).collect::<Result<Vec<_>>>()?;
    let amplitudes: Vec<f64> = scales.iter().map(|s| s * top).collect();
    // P_e = (1 − cos(N·π·a/a_π))/2, a cosine in a at frequency N/(2a_π).
    let n_pulses = cfg.rabi_pulses as f64;
    let f0 = n_pulses / (2.0 * nominal);
    let fit = curve_fit(cosine, &amplitudes, &p_e, &[-0.5, f0, 0.0, 0.5]).ok();
    let pi_amplitude = fit.as_ref().map(|f| n_pulses / (2.0 * f.params[1].abs()));
    Ok(RabiResult { amplitudes, p_e, fit, pi_amplitude })
}

fn decay_fit(delays_ns: &[u64], p_e: &[f64]) -> (Option<CurveFit>, Option<f64>) {
    let t: Vec<f64> = delays_ns.iter().map(|&d| d as f64 * 1e-9).collect();
    let (first, last) = (p_e.first().copied().unwrap_or(0.0), p_e.last().copied().unwrap_or(0.0));
    let span = t.last().copied().unwrap_or(1.0).max(1e-9);
    let fit = curve_fit(exp_decay, &t, p_e, &[first - last, span / 3.0, last]).ok();
    let tc = fit.as_ref().map(|f| f.params[1]).filter(|t| *t > 0.0);
    (fit, tc)
}

/// T1: π pulse, variable wait, readout.
pub fn t1(setup: &Setup, q: usize, cfg: &CharacterizeConfig, exec: &Exec) -> Result<DecayResult> {
    let ins = setup.instrument()?;
    let programs = cfg.t1_delays_ns.iter().map(|&d| {
        let mut s = EventSchedule::new(1, 1);
        let at = setup.gate(&mut s, 0, q, PI_PULSE) + d / 2;
        let end = setup.readout(&mut s, at, &[q]);
        s.period = end + TAIL_TICKS;
        Ok(Program { instrument: ins.clone(), schedule: s })
    });
    let p_e = sweep(setup, q, 2, cfg.shots, exec, programs)?;
    let (fit, time_constant) = decay_fit(&cfg.t1_delays_ns, &p_e);
    Ok(DecayResult { delays_ns: cfg.t1_delays_ns.clone(), p_e, fit, time_constant })
}

/// Hahn echo: π/2, τ/2, π, τ/2, π/2. The final pulse maps the remaining
/// coherence back to g, so P_e rises towards ½ as the coherence decays.
pub fn echo(setup: &Setup, q: usize, cfg: &CharacterizeConfig, exec: &Exec) -> Result<DecayResult> {
    let ins = setup.instrument()?;
    let programs = cfg.echo_delays_ns.iter().map(|&d| {
        let half = d / 4;
        let mut s = EventSchedule::new(1, 1);
        let at = setup.gate(&mut s, 0, q, HALF_PI_PULSE) + half;
        let at = setup.gate(&mut s, at, q, PI_PULSE) + half;
        let at = setup.gate(&mut s, at, q, HALF_PI_PULSE);
        let end = setup.readout(&mut s, at, &[q]);
        s.period = end + TAIL_TICKS;
        Ok(Program { instrument: ins.clone(), schedule: s })
    });
    let p_e = sweep(setup, q, 3, cfg.shots, exec, programs)?;
    let (fit, time_constant) = decay_fit(&cfg.echo_delays_ns, &p_e);
    Ok(DecayResult { delays_ns: cfg.echo_delays_ns.clone(), p_e, fit, time_constant })
}

/// Flat control blocks of 100, 10 and 1 ticks in group 1, with one carrier
/// entry per detuning.
fn chevron_instrument(setup: &Setup, q: usize, amplitude: f64, detunings: &[f64]) -> Result<(InstrumentConfig, [(usize, u64); 3])> {
    let mut ins = setup.instrument()?;
    let port = &mut ins.outputs[setup.control_port(q)];
    port.groups[1] = GroupConfig::default();
    let mut blocks = [(0, 100), (0, 10), (0, 1)];
    for b in &mut blocks {
        b.0 = port.add_template(1, Template::envelope(&vec![Complex64::new(amplitude, 0.0); 2 * b.1 as usize])?)?;
    }
    port.groups[1].carrier_lut = detunings.iter().map(|&d| CarrierConfig::from_frequency(d, 0.0)).collect();
    Ok((ins, blocks))
}

/// Chevron: a flat drive of variable length and detuning Δ, for which P_e
/// oscillates at √(Ω²+Δ²)/2π.
pub fn chevron(setup: &Setup, q: usize, cfg: &CharacterizeConfig, exec: &Exec) -> Result<ChevronResult> {
    let qp = &setup.device.qubits[q];
    let amplitude = scale_value(TAU * cfg.chevron_rabi_hz / qp.rabi_rate_full_scale);
    if !(amplitude > 0.0 && amplitude < 1.0) {
        return Err(Error::InvalidArgument("chevron Rabi rate needs an amplitude in (0, 1)".into()));
    }
    let omega = amplitude * qp.rabi_rate_full_scale;
    let (ins, blocks) = chevron_instrument(setup, q, amplitude, &cfg.chevron_detunings_hz)?;
    let port = setup.control_port(q);
    let t: Vec<f64> = cfg.chevron_durations_ns.iter().map(|&d| f64::from(d) * 1e-9).collect();
    let mut p_e = Vec::new();
    let mut frequencies = Vec::new();
    for (fi, &delta) in cfg.chevron_detunings_hz.iter().enumerate() {
        let programs = cfg.chevron_durations_ns.iter().map(|&d| {
            let mut s = EventSchedule::new(1, 1);
            s.push(0, EventKind::SetCarrier { port, group: 1, lut_index: fi, stride: 0 });
            let (mut at, mut left) = (0, u64::from(d / 2));
            for (id, len) in blocks {
                while left >= len {
                    s.push(at, EventKind::OutputTemplate { port, template_id: id });
                    at += len;
                    left -= len;
                }
            }
            let end = setup.readout(&mut s, at, &[q]);
            s.period = end + TAIL_TICKS;
            Ok(Program { instrument: ins.clone(), schedule: s })
        });
        let row = sweep(setup, q, 100 + fi as u64, cfg.shots, exec, programs)?;
        let f0 = dominant_frequency(&t, &row);
        let (lo, hi) = row.iter().fold((1.0f64, 0.0f64), |a, &v| (a.0.min(v), a.1.max(v)));
        let fit = curve_fit(cosine, &t, &row, &[-(hi - lo) / 2.0, f0, 0.0, (hi + lo) / 2.0]).ok();
        let expected = (omega * omega + (TAU * delta).powi(2)).sqrt() / TAU;
        frequencies.push((delta, fit.map(|f| f.params[1].abs()), expected));
        p_e.push(row);
    }
    Ok(ChevronResult {
        detunings_hz: cfg.chevron_detunings_hz.clone(),
        durations_ns: cfg.chevron_durations_ns.clone(),
        p_e,
        frequencies,
    })
}

/// Pulsed spectroscopy: a flat 1 µs tone at each frequency with the qubit
/// in g or e; the response is the mean of the last 500 ns of the averaged
/// trace demodulated at the tone.
pub fn spectroscopy(setup: &Setup, q: usize, cfg: &CharacterizeConfig, exec: &Exec) -> Result<SpectroscopyResult> {
    const PULSE_TICKS: u64 = 500;
    const WINDOW_TICKS: u64 = 250;
    let qp = &setup.device.qubits[q];
    let bare = qp.omega_r / TAU;
    let block = Template::envelope(&vec![Complex64::new(READOUT_HOLD, 0.0); 2 * WINDOW_TICKS as usize])?;
    let mut frequencies_hz = Vec::new();
    let (mut r_g, mut r_e, mut separation) = (Vec::new(), Vec::new(), Vec::new());
    for (k, off) in cfg.spectroscopy_offsets_hz.iter().enumerate() {
        let f = bare + off;
        let mut ins = setup.instrument()?;
        let ro = setup.readout_port();
        let mut port = PortConfig::new(OutputTarget::Readout { line: qp.readout_line }, f);
        let id = port.add_template(0, block.clone())?;
        ins.outputs[ro] = port;
        ins.inputs = vec![InputPortConfig { line: qp.readout_line, rf_center_hz: f, ..Default::default() }];
        let mut resp = [Complex64::new(0.0, 0.0); 2];
        for (state, r) in resp.iter_mut().enumerate() {
            let mut s = EventSchedule::new(1, cfg.spectroscopy_shots);
            let at = if state == 1 { setup.gate(&mut s, 0, q, PI_PULSE) } else { GATE_TICKS };
            let mut t = at;
            while t < at + PULSE_TICKS {
                s.push(t, EventKind::OutputTemplate { port: ro, template_id: id });
                t += WINDOW_TICKS;
            }
            s.push(at + PULSE_TICKS - WINDOW_TICKS, EventKind::StoreWindow { port: 0, duration: WINDOW_TICKS, address: 0, sweep: None });
            s.period = at + PULSE_TICKS + TAIL_TICKS;
            let p = Program { instrument: ins.clone(), schedule: s };
            let out = run(&p, &setup.device, exec.shots(5_000 + 2 * k as u64 + state as u64))?;
            let trace = out.sdram.averaged(0).ok_or_else(|| Error::Fit("no stored traces".into()))?;
            *r = trace.iter().sum::<Complex64>() / trace.len() as f64;
        }
        frequencies_hz.push(f);
        r_g.push([resp[0].re, resp[0].im]);
        r_e.push([resp[1].re, resp[1].im]);
        separation.push((resp[1] - resp[0]).norm());
    }
    let best = separation.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(i, _)| i);
    Ok(SpectroscopyResult { readout_hz: frequencies_hz[best], frequencies_hz, r_g, r_e, separation })
}
