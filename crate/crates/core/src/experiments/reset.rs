//! Active reset: single-shot readout, a conditional π pulse after the
//! feedback latency, and a second readout to check the outcome. The qutrit
//! variant discriminates g, e and f with three match pairs.

use serde::{Deserialize, Serialize};

use super::readout::{calibrate_readout, tune_noise, ReadoutCalibration};
use super::{Exec, Setup, GATE_TICKS, PI_EF_PULSE, PI_PULSE};
use crate::calibration::{effective_temperature, fit_bimodal, fit_weight, noise_for_overlap, overlap_error, BimodalFit, Histogram, OverlapError, HISTOGRAM_BINS};
use crate::feedback::{qutrit_reset_config, LatencyModel, MaskBitLogic, QUTRIT_BIT_PI_EG, QUTRIT_BIT_PI_FG};
use crate::sequencer::{run_with, EventKind, EventSchedule, Program, ShotRecord};
use crate::siggen::Template;
use crate::{Error, Result};

const TAIL_TICKS: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetTarget {
    Ground,
    Excited,
}

/// Match outcomes (sum − θ) of both readouts and their fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResetResult {
    pub target: ResetTarget,
    pub latency_ns: u32,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub fit_first: BimodalFit,
    pub fit_second: BimodalFit,
    /// Excited weights of both readouts with the Gaussian shapes fixed to
    /// those of `fit_first`.
    pub excited_before: f64,
    pub excited_after: f64,
    /// Fraction of shots in which the conditional pulse fired.
    pub fired_fraction: f64,
    /// Excited population at the second readout, from the simulated state
    /// rather than the fit.
    pub true_excited_after: f64,
}

impl ResetResult {
    pub fn histograms(&self) -> (Histogram, Histogram) {
        (Histogram::pooled(&self.first, HISTOGRAM_BINS), Histogram::pooled(&self.second, HISTOGRAM_BINS))
    }
}

#[derive(Default)]
struct Tally {
    first: Vec<f64>,
    second: Vec<f64>,
    fired: u64,
    excited_after: f64,
}

fn second_probe_level(shot: &ShotRecord, q: usize) -> Option<&Vec<f64>> {
    shot.probes.iter().filter(|p| p.qubit == q).nth(1).map(|p| &p.populations)
}

/// Two readouts with a conditional π in between. For `Ground` the pulse
/// fires when e is detected; for `Excited` when g is detected.
pub fn run_reset_experiment(
    setup: &Setup,
    cal: &ReadoutCalibration,
    target: ResetTarget,
    shots: u64,
    latency: LatencyModel,
    exec: &Exec,
) -> Result<ResetResult> {
    let q = cal.qubit;
    let mut instrument = setup.instrument()?;
    cal.bind(&mut instrument.feedback, 0);
    instrument.feedback.operator.bits[0] = match target {
        ResetTarget::Ground => MaskBitLogic::copy_of(0),
        ResetTarget::Excited => MaskBitLogic::not_of(0),
    };
    instrument.feedback.latency = latency;
    let mut s = EventSchedule::new(1, shots);
    let first_end = setup.readout(&mut s, 0, &[q]);
    let match_end = cal.match_at(&mut s, 0, 0);
    let pulse_at = match_end + latency.ticks();
    s.push(pulse_at, EventKind::ConditionalOutput { port: setup.control_port(q), template_id: PI_PULSE, mask_bit: 0 });
    let second_at = first_end.max(pulse_at + GATE_TICKS);
    let end = setup.readout(&mut s, second_at, &[q]);
    cal.match_at(&mut s, second_at, 0);
    s.period = end + TAIL_TICKS;
    let p = Program { instrument, schedule: s };
    let theta = cal.theta as f64;
    let (_, parts) = run_with(&p, &setup.device, exec.shots(100 + target as u64), Tally::default, |t, shot, _| {
        if let [a, b] = shot.matches.as_slice() {
            t.first.push(a.sum() as f64 - theta);
            t.second.push(b.sum() as f64 - theta);
        }
        t.fired += shot.conditionals.iter().filter(|c| c.fired).count() as u64;
        if let Some(p) = second_probe_level(shot, q) {
            t.excited_after += p[1..].iter().sum::<f64>();
        }
    })?;
    let mut all = Tally::default();
    for part in parts {
        all.first.extend(part.first);
        all.second.extend(part.second);
        all.fired += part.fired;
        all.excited_after += part.excited_after;
    }
    let n = all.first.len().max(1) as f64;
    let fit_first = fit_bimodal(&all.first)?;
    Ok(ResetResult {
        target,
        latency_ns: latency.round_trip_ns,
        excited_before: fit_weight(&all.first, &fit_first)?.weight_e,
        excited_after: fit_weight(&all.second, &fit_first)?.weight_e,
        fit_second: fit_bimodal(&all.second)?,
        fit_first,
        fired_fraction: all.fired as f64 / n,
        true_excited_after: all.excited_after / n,
        first: all.first,
        second: all.second,
    })
}

/// Qutrit reset outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QutritResetResult {
    pub shots: u64,
    /// Level populations sampled at the first and second readout.
    pub before: [f64; 3],
    pub after: [f64; 3],
    /// Fractions of shots firing π_eg and π_fg.
    pub fired: [f64; 2],
    /// Empirical discrimination error per prepared level (g, e, f).
    pub assignment_error: [f64; 3],
}

/// Windowed g/e/f templates of a three-level readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QutritTemplates {
    pub window_start: usize,
    pub tau: [Template; 3],
}

/// Builds qutrit templates from averaged responses, prepared in g, e
/// (π_ge) and f (π_ge then π_ef).
pub fn qutrit_templates(setup: &Setup, q: usize, shots: u64, exec: &Exec) -> Result<QutritTemplates> {
    if setup.device.qubits[q].levels != 3 {
        return Err(Error::InvalidArgument("qutrit reset needs a three-level qubit".into()));
    }
    let mut clean = setup.clone();
    for qp in &mut clean.device.qubits {
        qp.p_therm = 0.0;
    }
    clean.device.noise_sigma = 0.0;
    let instrument = clean.instrument()?;
    let mut traces = Vec::new();
    for level in 0..3 {
        let mut s = EventSchedule::new(1, shots);
        let mut at = 0;
        if level >= 1 {
            at = clean.gate(&mut s, at, q, PI_PULSE);
        }
        if level == 2 {
            at = clean.gate(&mut s, at, q, PI_EF_PULSE);
        }
        let end = clean.readout(&mut s, at, &[q]);
        s.push(at, EventKind::StoreWindow { port: q, duration: clean.readout_ticks(), address: 0, sweep: None });
        s.period = end + TAIL_TICKS;
        let p = Program { instrument: instrument.clone(), schedule: s };
        let r = crate::sequencer::run(&p, &clean.device, exec.shots(200 + level))?;
        traces.push(r.sdram.averaged(0).ok_or_else(|| Error::Fit("no stored traces".into()))?);
    }
    // Window maximizing the smallest pairwise separation.
    let len = crate::acquisition::MAX_MATCH_SAMPLES.min(traces[0].len()) / 2 * 2;
    let mut best = (0usize, f64::NEG_INFINITY);
    for start in (0..=traces[0].len() - len).step_by(2) {
        let d = |a: usize, b: usize| (start..start + len).map(|k| (traces[a][k] - traces[b][k]).norm()).sum::<f64>();
        let m = d(0, 1).min(d(1, 2)).min(d(2, 0));
        if m > best.1 {
            best = (start, m);
        }
    }
    let w = best.0;
    let mk = |t: &crate::dsp::ComplexTrace| Template::raw(&t[w..w + len]);
    Ok(QutritTemplates { window_start: w, tau: [mk(&traces[0])?, mk(&traces[1])?, mk(&traces[2])?] })
}

/// Qutrit reset from thermal equilibrium: three match pairs, π_eg on
/// mask bit 0 and π_ef followed by π_eg on mask bit 1.
pub fn run_qutrit_reset(setup: &Setup, q: usize, templates: &QutritTemplates, shots: u64, latency: LatencyModel, exec: &Exec) -> Result<QutritResetResult> {
    let mut instrument = setup.instrument()?;
    let [g, e, f] = &templates.tau;
    qutrit_reset_config(&mut instrument.feedback, 0, q, g, e, f)?;
    instrument.feedback.latency = latency;
    let ticks = g.len() as u64 / 2;
    let offset = templates.window_start as u64 / 2;
    let mut s = EventSchedule::new(1, shots);
    let first_end = setup.readout(&mut s, 0, &[q]);
    for pair in 0..3 {
        s.push(offset, EventKind::MatchWindow { pair_id: pair, duration: ticks });
    }
    let t0 = offset + ticks + latency.ticks();
    let port = setup.control_port(q);
    s.push(t0, EventKind::ConditionalOutput { port, template_id: PI_EF_PULSE, mask_bit: QUTRIT_BIT_PI_FG });
    let t1 = t0 + GATE_TICKS;
    s.push(t1, EventKind::ConditionalOutput { port, template_id: PI_PULSE, mask_bit: QUTRIT_BIT_PI_FG });
    s.push(t1, EventKind::ConditionalOutput { port, template_id: PI_PULSE, mask_bit: QUTRIT_BIT_PI_EG });
    let second_at = first_end.max(t1 + GATE_TICKS);
    let end = setup.readout(&mut s, second_at, &[q]);
    s.period = end + TAIL_TICKS;
    let p = Program { instrument, schedule: s };

    #[derive(Default)]
    struct Acc {
        before: [f64; 3],
        after: [f64; 3],
        fired: [u64; 2],
        wrong: [u64; 3],
        prepared: [u64; 3],
    }
    let (_, parts) = run_with(&p, &setup.device, exec.shots(300), Acc::default, |a, shot, _| {
        let probes: Vec<_> = shot.probes.iter().filter(|p| p.qubit == q).collect();
        let level = probes.first().and_then(|p| p.populations.iter().position(|&x| x == 1.0));
        for (k, p) in probes.iter().take(2).enumerate() {
            let dst = if k == 0 { &mut a.before } else { &mut a.after };
            for (d, x) in dst.iter_mut().zip(&p.populations) {
                *d += x;
            }
        }
        let bits: Vec<bool> = shot.matches.iter().map(|m| m.comparison).collect();
        if let (Some(l), [r_eg, r_fe, r_gf]) = (level, bits.as_slice()) {
            let assigned = if *r_eg && !*r_fe {
                1
            } else if *r_fe && !*r_gf {
                2
            } else {
                0
            };
            a.prepared[l] += 1;
            a.wrong[l] += u64::from(assigned != l);
        }
        for c in &shot.conditionals {
            if c.fired && c.template_id == PI_PULSE {
                a.fired[usize::from(c.mask_bit == QUTRIT_BIT_PI_FG)] += 1;
            }
        }
    })?;
    let mut acc = Acc::default();
    for part in parts {
        for k in 0..3 {
            acc.before[k] += part.before[k];
            acc.after[k] += part.after[k];
            acc.wrong[k] += part.wrong[k];
            acc.prepared[k] += part.prepared[k];
        }
        acc.fired[0] += part.fired[0];
        acc.fired[1] += part.fired[1];
    }
    let n = shots.max(1) as f64;
    Ok(QutritResetResult {
        shots,
        before: acc.before.map(|x| x / n),
        after: acc.after.map(|x| x / n),
        fired: acc.fired.map(|x| x as f64 / n),
        assignment_error: std::array::from_fn(|k| {
            if acc.prepared[k] == 0 {
                0.0
            } else {
                acc.wrong[k] as f64 / acc.prepared[k] as f64
            }
        }),
    })
}

/// Readout calibration followed by resets to g and to e, on a device whose
/// noise has been tuned for a target overlap error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResetStudy {
    pub noise_sigma: f64,
    pub calibration: ReadoutCalibration,
    pub ground: ResetResult,
    pub excited: ResetResult,
    /// Overlap error of the first-readout fit of the reset-to-g run.
    pub overlap: OverlapError,
    /// Effective temperatures (K) of the thermal and post-reset populations.
    pub thermal_temperature: Option<f64>,
    pub reset_temperature: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResetStudyConfig {
    pub qubit: usize,
    /// Target wrong-assignment probability used to set the noise.
    pub target_overlap: f64,
    /// Shots per class for the preliminary templates and the refinement.
    pub calibration_shots: u64,
    pub shots: u64,
    pub latency_ns: u32,
}

impl ResetStudyConfig {
    pub fn desk() -> Self {
        Self { qubit: 0, target_overlap: 1e-3, calibration_shots: 20_000, shots: 100_000, latency_ns: 250 }
    }
}

pub fn run_reset_study(setup: &Setup, cfg: &ResetStudyConfig, exec: &Exec) -> Result<ResetStudy> {
    let q = cfg.qubit;
    let mut setup = setup.clone();
    let noise_sigma = tune_noise(&setup, q, cfg.target_overlap, cfg.calibration_shots.min(2000), exec)?;
    setup.device.noise_sigma = noise_sigma;
    let calibration = calibrate_readout(&setup, q, cfg.calibration_shots, cfg.calibration_shots, exec)?;
    let latency = LatencyModel::new(cfg.latency_ns);
    let ground = run_reset_experiment(&setup, &calibration, ResetTarget::Ground, cfg.shots, latency, exec)?;
    let excited = run_reset_experiment(&setup, &calibration, ResetTarget::Excited, cfg.shots, latency, exec)?;
    let omega = setup.device.qubits[q].omega_01;
    Ok(ResetStudy {
        noise_sigma,
        overlap: overlap_error(&ground.fit_first),
        thermal_temperature: effective_temperature(ground.excited_before, omega).ok(),
        reset_temperature: effective_temperature(ground.excited_after, omega).ok(),
        calibration,
        ground,
        excited,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QutritStudyConfig {
    pub qubit: usize,
    /// Overlap error of the least separated template pair.
    pub target_overlap: f64,
    pub template_shots: u64,
    pub shots: u64,
    pub latency_ns: u32,
}

impl QutritStudyConfig {
    pub fn desk() -> Self {
        Self { qubit: 0, target_overlap: 1e-3, template_shots: 2000, shots: 20_000, latency_ns: 250 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QutritStudy {
    pub noise_sigma: f64,
    pub overlap: f64,
    pub templates: QutritTemplates,
    pub reset: QutritResetResult,
    /// 1 − 2λ/T1 − 3ε_overlap.
    pub ground_bound: f64,
}

/// Templates from noise-free averages, noise set so the closest pair of
/// templates has the target overlap error, then one round of qutrit reset.
pub fn run_qutrit_study(setup: &Setup, cfg: &QutritStudyConfig, exec: &Exec) -> Result<QutritStudy> {
    let q = cfg.qubit;
    let templates = qutrit_templates(setup, q, cfg.template_shots, exec)?;
    let noise_sigma = [(0, 1), (1, 2), (2, 0)]
        .into_iter()
        .map(|(i, j)| {
            let (a, b) = (templates.tau[i].samples(), templates.tau[j].samples());
            let delta: Vec<_> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
            noise_for_overlap(&delta, cfg.target_overlap)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let mut noisy = setup.clone();
    noisy.device.noise_sigma = noise_sigma;
    let latency = LatencyModel::new(cfg.latency_ns);
    let reset = run_qutrit_reset(&noisy, q, &templates, cfg.shots, latency, exec)?;
    let t1 = setup.device.qubits[q].t1;
    Ok(QutritStudy {
        noise_sigma,
        overlap: cfg.target_overlap,
        ground_bound: 1.0 - 2.0 * cfg.latency_ns as f64 * 1e-9 / t1 - 3.0 * cfg.target_overlap,
        templates,
        reset,
    })
}
