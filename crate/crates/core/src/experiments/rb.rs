//! Single-qubit randomized benchmarking.
//!
//! Each (realization, length) program is simulated once in ensemble mode,
//! which yields the exact ground-state population at readout. The survival
//! probability is then estimated from `shots` Bernoulli draws on that
//! population, which is what shot-mode readout with ideal discrimination
//! would produce, at a fraction of the cost.

use serde::{Deserialize, Serialize};

use super::clifford::{compile_clifford_sequence, SQRT_X_PER_CLIFFORD};
use super::fit::{curve_fit, power_decay};
use super::{ensemble_excited, quartiles, sampled_fraction, Exec, Setup, GATE_NS, GATE_TICKS, HALF_PI_PULSE};
use crate::sequencer::{EventSchedule, Program};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RbConfig {
    pub lengths: Vec<usize>,
    pub realizations: usize,
    pub shots: u64,
}

impl RbConfig {
    /// 20 realizations × 200 shots, lengths up to 2000.
    pub fn desk() -> Self {
        Self { lengths: vec![1, 10, 50, 100, 200, 400, 700, 1000, 1400, 2000], realizations: 20, shots: 200 }
    }

    /// 50 realizations × 1000 shots.
    pub fn paper() -> Self {
        Self { realizations: 50, shots: 1000, ..Self::desk() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub length: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbResult {
    pub lengths: Vec<usize>,
    /// Survival probabilities indexed [realization][length].
    pub survival: Vec<Vec<f64>>,
    pub stats: Vec<LengthStats>,
    /// Fit of A·α^m + B; `None` if the fit failed (raw data are still kept).
    pub fit: Option<[f64; 3]>,
    pub epc: Option<f64>,
    pub fidelity: Option<f64>,
    /// Mean √X pulses per Clifford in the compiled sequences.
    pub sqrt_x_per_clifford: f64,
    /// Coherence-limited error per √X, (Γ1 + Γφ)τ/3.
    pub coherence_limit: f64,
}

impl RbResult {
    /// Coherence-limited error per Clifford predicted from the pulse count.
    pub fn predicted_epc(&self) -> f64 {
        self.sqrt_x_per_clifford * self.coherence_limit
    }
}

/// Builds the RB program for one compiled sequence on qubit `q`.
fn rb_program(setup: &Setup, q: usize, pulses: &[super::clifford::PulseStep]) -> Result<Program> {
    let mut s = EventSchedule::new(1, 1);
    let mut at = 0;
    let mut phase = usize::MAX;
    for p in pulses {
        if p.phase_quarters != phase {
            setup.phase(&mut s, at, q, p.phase_quarters);
            phase = p.phase_quarters;
        }
        at = setup.gate(&mut s, at, q, HALF_PI_PULSE);
    }
    let end = setup.readout(&mut s, at, &[q]);
    s.period = end + 1;
    Ok(Program { instrument: setup.instrument()?, schedule: s })
}

/// Excited-state rates of qubit `q` expressed as the per-pulse coherence
/// limit (Γ1 + Γφ)·τ/3.
pub fn coherence_limit(setup: &Setup, q: usize) -> f64 {
    let qp = &setup.device.qubits[q];
    let gamma1 = 1.0 / qp.t1;
    (gamma1 + qp.gamma_phi()) * GATE_NS as f64 * 1e-9 / 3.0
}

pub fn run_rb(setup: &Setup, q: usize, cfg: &RbConfig, exec: &Exec) -> Result<RbResult> {
    if cfg.lengths.is_empty() || cfg.realizations == 0 || cfg.shots == 0 {
        return Err(Error::InvalidArgument("RB needs lengths, realizations and shots".into()));
    }
    let mut survival = vec![vec![0.0; cfg.lengths.len()]; cfg.realizations];
    let mut pulse_count = 0usize;
    let mut clifford_count = 0usize;
    for (r, row) in survival.iter_mut().enumerate() {
        for (li, &m) in cfg.lengths.iter().enumerate() {
            let mut rng = crate::rng::keyed(exec.seed, r as u64, li as u64, crate::rng::Stream::Sequence, 0);
            let seq = compile_clifford_sequence(m, &mut rng);
            pulse_count += seq.pulses.len();
            clifford_count += m + 1;
            let p = rb_program(setup, q, &seq.pulses)?;
            let p_g = 1.0 - ensemble_excited(&p, &setup.device, q, exec, 1000 + (r * cfg.lengths.len() + li) as u64)?[0];
            row[li] = sampled_fraction(exec, r as u64, li as u64, p_g, cfg.shots)?;
        }
    }
    let sqrt_x_per_clifford = pulse_count as f64 / clifford_count as f64;
    debug_assert!((sqrt_x_per_clifford - SQRT_X_PER_CLIFFORD).abs() < 1e-12);
    let stats: Vec<LengthStats> = cfg
        .lengths
        .iter()
        .enumerate()
        .map(|(li, &length)| {
            let col: Vec<f64> = survival.iter().map(|row| row[li]).collect();
            let (q1, median, q3) = quartiles(&col);
            LengthStats { length, mean: col.iter().sum::<f64>() / col.len() as f64, median, q1, q3 }
        })
        .collect();
    let fit = fit_rb(&stats, &survival, &cfg.lengths).ok();
    let epc = fit.map(|f| (1.0 - f[1]) / 2.0);
    Ok(RbResult {
        lengths: cfg.lengths.clone(),
        survival,
        stats,
        fit,
        epc,
        fidelity: epc.map(|e| 1.0 - e),
        sqrt_x_per_clifford,
        coherence_limit: coherence_limit(setup, q),
    })
}

/// B from the plateau (capped at the fully mixed value), α and A by
/// log-linear regression of mean − B, then least-squares refinement on all
/// realizations.
pub fn fit_rb(stats: &[LengthStats], survival: &[Vec<f64>], lengths: &[usize]) -> Result<[f64; 3]> {
    let last = stats.last().ok_or_else(|| Error::Fit("no data".into()))?;
    let b0 = last.mean.min(0.5);
    let pts: Vec<(f64, f64)> = stats
        .iter()
        .filter(|s| s.mean - b0 > 1e-6)
        .map(|s| (s.length as f64, (s.mean - b0).ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Fit("too few points above the asymptote".into()));
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let alpha0 = slope.exp().min(1.0);
    let a0 = (my - slope * mx).exp();
    if alpha0 >= 1.0 - 1e-12 {
        // No measurable decay; the nonlinear fit is degenerate here.
        return Ok([a0, 1.0, b0]);
    }
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for row in survival {
        for (&m, &v) in lengths.iter().zip(row) {
            x.push(m as f64);
            y.push(v);
        }
    }
    match curve_fit(power_decay, &x, &y, &[a0, alpha0, b0]) {
        Ok(f) if f.params[1] > 0.0 && f.params[1] <= 1.0 => Ok([f.params[0], f.params[1], f.params[2]]),
        _ => Ok([a0, alpha0, b0]),
    }
}

/// Gate time implied by the pulse layout (for reporting).
pub fn gate_time_s() -> f64 {
    GATE_TICKS as f64 * 2e-9
}
