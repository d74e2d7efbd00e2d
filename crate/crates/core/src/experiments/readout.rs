//! Readout calibration: preliminary reference templates, post-selected
//! refinement, matching-window selection and noise tuning.

use serde::{Deserialize, Serialize};

use super::{Exec, Setup, PI_PULSE};
use crate::acquisition::{pair_threshold, select_match_window, MatchWindowChoice, SdramImage, MAX_MATCH_SAMPLES};
use crate::calibration::{noise_for_overlap, Provenance, ReferencePair, TemplateRefiner};
use crate::dsp::ComplexTrace;
use crate::feedback::FeedbackConfig;
use crate::sequencer::{run, run_with, EventKind, EventSchedule, Program};
use crate::siggen::Template;
use crate::{Error, Result};

/// Idle ticks appended after the last readout of each repetition.
const TAIL_TICKS: u64 = 50;

/// Everything needed to discriminate one qubit's state in real time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutCalibration {
    pub qubit: usize,
    pub input_port: usize,
    /// Matching window, in samples from the start of the readout pulse.
    pub window: MatchWindowChoice,
    pub preliminary: ReferencePair,
    /// Full-length refined references.
    pub reference: ReferencePair,
    /// Windowed templates loaded into the match units.
    pub tau_g: Template,
    pub tau_e: Template,
    /// θ_eg in accumulator units.
    pub theta: i64,
    /// Shots used per class in the refinement.
    pub refined_counts: [u64; 2],
}

impl ReadoutCalibration {
    /// Picks the matching window and threshold from `reference`.
    pub fn from_references(
        qubit: usize,
        input_port: usize,
        preliminary: ReferencePair,
        reference: ReferencePair,
        refined_counts: [u64; 2],
    ) -> Result<Self> {
        let window = select_match_window(&reference.tau_g, &reference.tau_e, MAX_MATCH_SAMPLES)?;
        let (tau_g, tau_e, theta) = window_templates(&reference, &window)?;
        Ok(Self { qubit, input_port, window, preliminary, reference, tau_g, tau_e, theta, refined_counts })
    }

    /// Tick offset of the matching window from the readout start.
    pub fn window_offset_ticks(&self) -> u64 {
        self.window.start as u64 / 2
    }

    pub fn window_ticks(&self) -> u64 {
        self.window.len as u64 / 2
    }

    /// Binds match pair `pair` to this qubit: units (τ_e, −τ_g) and θ_eg.
    pub fn bind(&self, fb: &mut FeedbackConfig, pair: usize) {
        fb.set_unit(2 * pair, crate::acquisition::MatchUnit { input_port: self.input_port, template: self.tau_e.clone() });
        fb.set_unit(2 * pair + 1, crate::acquisition::MatchUnit { input_port: self.input_port, template: self.tau_g.negated() });
        fb.set_threshold(pair, self.theta);
    }

    /// Pushes a match window for `pair` aligned to a readout starting at
    /// `readout_at`; returns the window end tick.
    pub fn match_at(&self, s: &mut EventSchedule, readout_at: u64, pair: usize) -> u64 {
        let at = readout_at + self.window_offset_ticks();
        s.push(at, EventKind::MatchWindow { pair_id: pair, duration: self.window_ticks() });
        at + self.window_ticks()
    }
}

/// Averages `shots` readout responses of qubit `q`, prepared in e if
/// `excited` (otherwise left in thermal equilibrium).
pub fn average_response(setup: &Setup, q: usize, excited: bool, shots: u64, exec: &Exec, label: u64) -> Result<ComplexTrace> {
    let instrument = setup.instrument()?;
    let mut at = 0;
    let mut s = EventSchedule::new(1, shots);
    if excited {
        at = setup.gate(&mut s, 0, q, PI_PULSE);
    }
    let end = setup.readout(&mut s, at, &[q]);
    s.push(at, EventKind::StoreWindow { port: q, duration: setup.readout_ticks(), address: 0, sweep: None });
    s.period = end + TAIL_TICKS;
    let p = Program { instrument, schedule: s };
    let r = run(&p, &setup.device, exec.shots(label))?;
    r.sdram.averaged(0).ok_or_else(|| Error::Fit("no stored traces".into()))
}

/// Raw store image of `shots` thermal readouts at cell 0 followed by
/// `shots` π-prepared readouts in the next region.
pub fn store_responses(setup: &Setup, q: usize, shots: u64, exec: &Exec) -> Result<SdramImage> {
    let instrument = setup.instrument()?;
    let stride = 2 * setup.readout_ticks() * crate::SAMPLES_PER_TICK;
    let mut image = SdramImage::new();
    for excited in [false, true] {
        let mut at = 0;
        let mut s = EventSchedule::new(1, shots);
        if excited {
            at = setup.gate(&mut s, 0, q, PI_PULSE);
        }
        let end = setup.readout(&mut s, at, &[q]);
        let address = u64::from(excited) * stride;
        s.push(at, EventKind::StoreWindow { port: q, duration: setup.readout_ticks(), address, sweep: None });
        s.period = end + TAIL_TICKS;
        let p = Program { instrument: instrument.clone(), schedule: s };
        image.merge(&run(&p, &setup.device, exec.shots(3 + u64::from(excited)))?.sdram)?;
    }
    Ok(image)
}

/// Preliminary references: plain averages of g- and π-prepared shots.
pub fn preliminary_templates(setup: &Setup, q: usize, shots: u64, exec: &Exec) -> Result<ReferencePair> {
    let g = average_response(setup, q, false, shots, exec, 1)?;
    let e = average_response(setup, q, true, shots, exec, 2)?;
    ReferencePair::new(g, e, Provenance::Preliminary)
}

fn window_templates(pair: &ReferencePair, w: &MatchWindowChoice) -> Result<(Template, Template, i64)> {
    let g = Template::raw(&pair.tau_g[w.start..w.start + w.len])?;
    let e = Template::raw(&pair.tau_e[w.start..w.start + w.len])?;
    let theta = pair_threshold(e.samples(), g.samples());
    Ok((g, e, theta))
}

/// Post-selects second-readout traces on the first-readout outcome, using
/// thermal and π-prepared shots.
pub fn refine(setup: &Setup, q: usize, preliminary: &ReferencePair, shots: u64, exec: &Exec) -> Result<(ReferencePair, [u64; 2])> {
    let pre = ReadoutCalibration::from_references(q, q, preliminary.clone(), preliminary.clone(), [0; 2])?;
    let theta = pre.theta;
    let len = preliminary.tau_g.len();
    let mut refiner = TemplateRefiner::new(len, 0);
    for (k, excited) in [false, true].into_iter().enumerate() {
        let mut instrument = setup.instrument()?;
        pre.bind(&mut instrument.feedback, 0);
        let mut s = EventSchedule::new(1, shots);
        let at = if excited { setup.gate(&mut s, 0, q, PI_PULSE) } else { 0 };
        let first_end = setup.readout(&mut s, at, &[q]);
        pre.match_at(&mut s, at, 0);
        let end = setup.readout(&mut s, first_end, &[q]);
        s.push(first_end, EventKind::StoreWindow { port: q, duration: setup.readout_ticks(), address: 0, sweep: None });
        s.period = end + TAIL_TICKS;
        let p = Program { instrument, schedule: s };
        let (_, parts) = run_with(
            &p,
            &setup.device,
            exec.shots(10 + k as u64),
            || TemplateRefiner::new(len, 0),
            |r, shot, traces| {
                if let (Some(m), Some(t)) = (shot.matches.first(), traces.first()) {
                    r.add(m.sum(), theta, &t.samples).expect("trace length fixed by the schedule");
                }
            },
        )?;
        for part in &parts {
            refiner.merge(part)?;
        }
    }
    let out = refiner.finish()?;
    Ok((out.pair, out.counts))
}

/// Full calibration of qubit `q`'s readout.
pub fn calibrate_readout(setup: &Setup, q: usize, preliminary_shots: u64, refine_shots: u64, exec: &Exec) -> Result<ReadoutCalibration> {
    let preliminary = preliminary_templates(setup, q, preliminary_shots, exec)?;
    let (reference, refined_counts) = refine(setup, q, &preliminary, refine_shots, exec)?;
    ReadoutCalibration::from_references(q, q, preliminary, reference, refined_counts)
}

/// Noise σ giving wrong-assignment probability `eps` per state, from the
/// noise-free responses of a copy of the device without thermal
/// excitation.
pub fn tune_noise(setup: &Setup, q: usize, eps: f64, shots: u64, exec: &Exec) -> Result<f64> {
    let mut clean = setup.clone();
    clean.device.noise_sigma = 0.0;
    for qp in &mut clean.device.qubits {
        qp.p_therm = 0.0;
    }
    let g = average_response(&clean, q, false, shots, exec, 3)?;
    let e = average_response(&clean, q, true, shots, exec, 4)?;
    let w = select_match_window(&g, &e, MAX_MATCH_SAMPLES)?;
    let delta: Vec<_> = (w.start..w.start + w.len).map(|k| e[k] - g[k]).collect();
    noise_for_overlap(&delta, eps)
}
