//! Per-repetition device state advanced segment by segment by the sequencer.
//!
//! Qubits live in a joint density matrix. In shot mode, a qubit whose readout
//! resonator is driven is projectively sampled; while it stays collapsed its
//! level follows a classical jump process (relaxation and thermal
//! excitation), which sets the resonator's dispersive shift sample by
//! sample. The next control or coupler drive on that qubit returns it to the
//! density-matrix description. In ensemble mode nothing is sampled: the start
//! of each readout drive records the qubit populations instead.

use std::collections::HashMap;
use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use super::lindblad::{embed, liouvillian, qubit_hamiltonian, qubit_jumps, CMat, Register, Superop};
use super::resonator::{Resonator, StepFactors};
use super::DeviceParams;
use crate::dsp::QuantSpec;
use crate::rng::{keyed, Stream};
use crate::siggen::OutputTarget;
use crate::{Error, Result, SAMPLE_PERIOD};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const NOISE_BLOCK: u64 = 1024;
const CACHE_LIMIT: usize = 200_000;
/// Tolerated density-matrix defect before a run is aborted.
const DEFECT_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    /// Full single-shot simulation: measurement collapse, resonator traces,
    /// noise, matching and feedback.
    #[default]
    Shots,
    /// Density-matrix evolution only; readouts record populations.
    Ensemble,
}

/// Qubit populations at the start of a readout (ensemble mode), or the
/// sampled outcome as a one-hot vector (shot mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub sample: u64,
    pub qubit: usize,
    pub populations: Vec<f64>,
}

/// One port's rendered output over a segment.
#[derive(Debug, Clone, Copy)]
pub struct DriveSource<'a> {
    pub target: OutputTarget,
    /// RF frequency (Hz) that baseband DC of `samples` represents.
    pub frame_hz: f64,
    /// Tone frequency (Hz) of the playing pulse; used for coupler drives.
    pub tone_hz: f64,
    pub samples: &'a [Complex64],
}

/// A request to digitize a feedline over a segment in the frame `frame_hz`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capture {
    pub line: usize,
    pub frame_hz: f64,
}

/// Propagator caches; valid for one device configuration and frame set.
#[derive(Debug, Default)]
pub struct DeviceCache {
    idle: HashMap<(usize, u64), Superop>,
    sample: HashMap<(usize, u64, u64), Superop>,
    joint: HashMap<(u64, u64, u64), Superop>,
}

impl DeviceCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn trim(&mut self) {
        if self.sample.len() > CACHE_LIMIT {
            self.sample.clear();
        }
        if self.idle.len() > CACHE_LIMIT {
            self.idle.clear();
        }
        if self.joint.len() > CACHE_LIMIT {
            self.joint.clear();
        }
    }
}

/// Reference frames: qubit drive frames and feedline frames (Hz).
#[derive(Debug, Clone, PartialEq)]
pub struct Frames {
    pub qubit_hz: Vec<f64>,
    pub line_hz: Vec<f64>,
}

impl Frames {
    /// Frames at each qubit's own transition and each line at the first
    /// resonator on it.
    pub fn natural(params: &DeviceParams) -> Self {
        let qubit_hz = params.qubits.iter().map(|q| q.omega_01 / TAU).collect();
        let lines = params.qubits.iter().map(|q| q.readout_line + 1).max().unwrap_or(0);
        let line_hz = (0..lines)
            .map(|l| {
                params
                    .qubits
                    .iter()
                    .find(|q| q.readout_line == l)
                    .map_or(0.0, |q| q.omega_r / TAU)
            })
            .collect();
        Self { qubit_hz, line_hz }
    }
}

struct NoiseBlock {
    line: usize,
    block: u64,
    values: Vec<Complex64>,
}

/// Device state for one repetition.
pub struct World<'a> {
    params: &'a DeviceParams,
    frames: &'a Frames,
    cache: &'a mut DeviceCache,
    mode: ExecutionMode,
    seed: u64,
    repetition: u64,
    register: Register,
    collapsed: Vec<Option<usize>>,
    last_level: Vec<usize>,
    resonators: Vec<Resonator>,
    /// Step factors per qubit and level, in the line frame.
    factors: Vec<Vec<StepFactors>>,
    line_driving: Vec<bool>,
    now: u64,
    rng_collapse: ChaCha8Rng,
    rng_jumps: ChaCha8Rng,
    noise: Option<NoiseBlock>,
    probes: Vec<Probe>,
    adc_saturated: bool,
}

impl<'a> World<'a> {
    pub fn new(
        params: &'a DeviceParams,
        frames: &'a Frames,
        cache: &'a mut DeviceCache,
        mode: ExecutionMode,
        seed: u64,
        repetition: u64,
    ) -> Self {
        let pops: Vec<Vec<f64>> = params.qubits.iter().map(|q| q.thermal_populations()).collect();
        let factors = params
            .qubits
            .iter()
            .map(|q| {
                let line = frames.line_hz.get(q.readout_line).copied().unwrap_or(0.0);
                (0..q.levels)
                    .map(|l| StepFactors::new(q.dressed_frequency(l) - TAU * line, q.kappa, SAMPLE_PERIOD))
                    .collect()
            })
            .collect();
        let nq = params.qubits.len();
        let lines = frames.line_hz.len();
        Self {
            params,
            frames,
            cache,
            mode,
            seed,
            repetition,
            register: Register::from_populations(&pops),
            collapsed: vec![None; nq],
            last_level: vec![0; nq],
            resonators: params.qubits.iter().map(|q| Resonator::new(q.kappa)).collect(),
            factors,
            line_driving: vec![false; lines],
            now: 0,
            rng_collapse: keyed(seed, repetition, 0, Stream::Collapse, 0),
            rng_jumps: keyed(seed, repetition, 0, Stream::Jumps, 0),
            noise: None,
            probes: Vec::new(),
            adc_saturated: false,
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn register(&self) -> &Register {
        &self.register
    }

    pub fn probes(&self) -> &[Probe] {
        &self.probes
    }

    pub fn take_probes(&mut self) -> Vec<Probe> {
        std::mem::take(&mut self.probes)
    }

    pub fn adc_saturated(&self) -> bool {
        self.adc_saturated
    }

    /// Level populations of qubit `q`, treating a collapsed qubit as its level.
    pub fn populations(&self, q: usize) -> Vec<f64> {
        match self.collapsed[q] {
            Some(l) => one_hot(self.params.qubits[q].levels, l),
            None => self.register.populations(q),
        }
    }

    fn fail(&self, message: String) -> Error {
        Error::Device {
            tick: self.now / crate::SAMPLES_PER_TICK,
            repetition: self.repetition,
            message,
        }
    }

    fn check_register(&self) -> Result<()> {
        let d = self.register.defect();
        if d > DEFECT_LIMIT {
            return Err(self.fail(format!("density matrix lost validity (defect {d:.3e})")));
        }
        Ok(())
    }

    /// Advances `n` samples with no drive and no capture.
    pub fn idle(&mut self, n: u64) -> Result<()> {
        if n == 0 {
            return Ok(());
        }
        for l in self.line_driving.iter_mut() {
            *l = false;
        }
        for q in 0..self.params.qubits.len() {
            let path = self.evolve_undriven(q, n);
            self.ring_down(q, &path, n);
        }
        self.now += n;
        self.cache.trim();
        self.check_register()
    }

    /// Advances over a segment with the given drives, returning one trace per
    /// capture request.
    pub fn segment(&mut self, n: usize, drives: &[DriveSource], captures: &[Capture]) -> Result<Vec<Vec<Complex64>>> {
        if n == 0 {
            return Ok(vec![Vec::new(); captures.len()]);
        }
        let nq = self.params.qubits.len();
        let nl = self.frames.line_hz.len();
        for d in drives {
            if d.samples.len() != n {
                return Err(Error::LengthMismatch { left: d.samples.len(), right: n });
            }
        }
        let mut control: Vec<Option<Vec<Complex64>>> = vec![None; nq];
        let mut line_drive: Vec<Option<Vec<Complex64>>> = vec![None; nl];
        let mut coupler: Vec<&DriveSource> = Vec::new();
        for d in drives {
            if d.samples.iter().all(|z| *z == ZERO) {
                continue;
            }
            match d.target {
                OutputTarget::None => {}
                OutputTarget::Control { qubit } => {
                    let frame = *self
                        .frames
                        .qubit_hz
                        .get(qubit)
                        .ok_or_else(|| self.fail(format!("control port targets missing qubit {qubit}")))?;
                    accumulate(&mut control[qubit], d, frame, self.now, n);
                }
                OutputTarget::Readout { line } => {
                    let frame = *self
                        .frames
                        .line_hz
                        .get(line)
                        .ok_or_else(|| self.fail(format!("readout port targets missing line {line}")))?;
                    accumulate(&mut line_drive[line], d, frame, self.now, n);
                }
                OutputTarget::Coupler => coupler.push(d),
            }
        }

        // Readout onset: sample (shot mode) or record (ensemble mode) qubits
        // on lines that start being driven.
        for line in 0..nl {
            let driven = line_drive[line].is_some();
            let onset = driven && !self.line_driving[line];
            self.line_driving[line] = driven;
            if !onset {
                continue;
            }
            for q in 0..nq {
                if self.params.qubits[q].readout_line != line {
                    continue;
                }
                match self.mode {
                    ExecutionMode::Ensemble => self.probes.push(Probe {
                        sample: self.now,
                        qubit: q,
                        populations: self.register.populations(q),
                    }),
                    ExecutionMode::Shots => match self.collapsed[q] {
                        // Still classical since an earlier readout: record
                        // the current level without resampling.
                        Some(level) => self.probes.push(Probe {
                            sample: self.now,
                            qubit: q,
                            populations: one_hot(self.params.qubits[q].levels, level),
                        }),
                        None if control[q].is_none() && coupler.is_empty() => self.collapse(q),
                        None => {}
                    },
                }
            }
        }

        let mut paths: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nq];
        if !coupler.is_empty() {
            if control.iter().any(Option::is_some) {
                return Err(self.fail("coupler and qubit drives overlap in time".into()));
            }
            self.coupler_block(&coupler, n)?;
            for (q, p) in paths.iter_mut().enumerate() {
                *p = vec![(0, self.last_level[q])];
            }
        } else {
            for q in 0..nq {
                paths[q] = match &control[q] {
                    Some(s) => {
                        self.drive_qubit(q, s);
                        vec![(0, self.last_level[q])]
                    }
                    None => self.evolve_undriven(q, n as u64),
                };
            }
        }

        let mut line_out: Vec<Option<Vec<Complex64>>> = vec![None; nl];
        for (line, out) in line_out.iter_mut().enumerate() {
            if line_drive[line].is_some() || captures.iter().any(|c| c.line == line) {
                *out = Some(line_drive[line].clone().unwrap_or_else(|| vec![ZERO; n]));
            }
        }
        for q in 0..nq {
            let line = self.params.qubits[q].readout_line;
            if self.mode == ExecutionMode::Ensemble {
                continue;
            }
            match line_out.get_mut(line).and_then(Option::as_mut) {
                Some(out) => {
                    let eps = line_drive[line].as_deref();
                    self.integrate(q, &paths[q], eps, out);
                }
                None => self.ring_down(q, &paths[q], n as u64),
            }
        }

        let mut result = Vec::with_capacity(captures.len());
        for c in captures {
            let line = line_out
                .get(c.line)
                .and_then(Option::as_ref)
                .ok_or_else(|| self.fail(format!("capture on missing line {}", c.line)))?
                .clone();
            let trace = self.digitize(c, &line);
            result.push(trace);
        }
        self.now += n as u64;
        self.cache.trim();
        self.check_register()?;
        Ok(result)
    }

    fn collapse(&mut self, q: usize) {
        let pops = self.register.populations(q);
        let u: f64 = self.rng_collapse.random();
        let mut acc = 0.0;
        let mut level = pops.len() - 1;
        for (l, p) in pops.iter().enumerate() {
            acc += p;
            if u < acc {
                level = l;
                break;
            }
        }
        self.register.project(q, level);
        self.collapsed[q] = Some(level);
        self.last_level[q] = level;
        self.probes.push(Probe {
            sample: self.now,
            qubit: q,
            populations: one_hot(pops.len(), level),
        });
    }

    /// Returns a collapsed qubit to the density-matrix description.
    fn release(&mut self, q: usize) {
        if let Some(l) = self.collapsed[q].take() {
            self.register.reset_to(q, l);
        }
    }

    /// Idle evolution; returns the level path (offset, level) seen by the
    /// resonator.
    fn evolve_undriven(&mut self, q: usize, n: u64) -> Vec<(usize, usize)> {
        match self.collapsed[q] {
            Some(level) => {
                let path = self.jump_path(q, level, n);
                let last = path.last().unwrap().1;
                self.collapsed[q] = Some(last);
                self.last_level[q] = last;
                path
            }
            None => {
                let op = self.idle_propagator(q, n);
                self.register.apply_local(q, &op);
                vec![(0, self.last_level[q])]
            }
        }
    }

    fn jump_path(&mut self, q: usize, mut level: usize, n: u64) -> Vec<(usize, usize)> {
        let qp = &self.params.qubits[q];
        let mut path = vec![(0usize, level)];
        let mut t = 0.0f64;
        loop {
            let down = if level > 0 { qp.transition_rates(level - 1).0 } else { 0.0 };
            let up = if level + 1 < qp.levels { qp.transition_rates(level).1 } else { 0.0 };
            let total = (down + up) * SAMPLE_PERIOD;
            if total <= 0.0 {
                break;
            }
            t += Exp::new(total).expect("positive rate").sample(&mut self.rng_jumps);
            if t >= n as f64 {
                break;
            }
            let u: f64 = self.rng_jumps.random();
            level = if u * (down + up) < down { level - 1 } else { level + 1 };
            path.push((t as usize, level));
        }
        path
    }

    fn idle_propagator(&mut self, q: usize, n: u64) -> Superop {
        if let Some(op) = self.cache.idle.get(&(q, n)) {
            return op.clone();
        }
        let l = self.generator(q, ZERO);
        let op = Superop::propagator(&l, n as f64 * SAMPLE_PERIOD);
        self.cache.idle.insert((q, n), op.clone());
        op
    }

    fn generator(&self, q: usize, drive: Complex64) -> CMat {
        let qp = &self.params.qubits[q];
        let detuning = qp.omega_01 - TAU * self.frames.qubit_hz[q];
        liouvillian(
            &qubit_hamiltonian(qp, detuning, drive * qp.rabi_rate_full_scale),
            &qubit_jumps(qp),
        )
    }

    fn drive_qubit(&mut self, q: usize, samples: &[Complex64]) {
        self.release(q);
        for &s in samples {
            let key = (q, s.re.to_bits(), s.im.to_bits());
            if !self.cache.sample.contains_key(&key) {
                let op = Superop::propagator(&self.generator(q, s), SAMPLE_PERIOD);
                self.cache.sample.insert(key, op);
            }
            let op = &self.cache.sample[&key];
            self.register.apply_local(q, op);
        }
    }

    /// Parametric exchange between qubits 0 and 1 over the segment, with
    /// H = δ(n₁ − n₂) + g_eff(σ₊σ₋ + σ₋σ₊) in the frame of the drive.
    fn coupler_block(&mut self, sources: &[&DriveSource], n: usize) -> Result<()> {
        let cp = self
            .params
            .coupler
            .as_ref()
            .ok_or_else(|| self.fail("coupler drive on a device without a coupler".into()))?;
        let mut amp = 0.0;
        let mut tone = 0.0;
        for s in sources {
            let mean = s.samples.iter().map(|z| z.norm()).sum::<f64>() / n as f64;
            if mean > amp {
                tone = s.tone_hz;
            }
            amp += mean;
        }
        for q in 0..self.params.qubits.len() {
            self.release(q);
        }
        let (q1, q2) = (&self.params.qubits[0], &self.params.qubits[1]);
        let g = cp.exchange_rate(amp);
        let delta = cp.exchange_detuning(tone, q1, q2);
        let key = (delta.to_bits(), g.to_bits(), n as u64);
        if !self.cache.joint.contains_key(&key) {
            let dims: Vec<usize> = self.params.qubits.iter().map(|q| q.levels).collect();
            let mut h = CMat::zeros(dims.iter().product(), dims.iter().product());
            let mut jumps = Vec::new();
            for (k, qp) in self.params.qubits.iter().enumerate() {
                let sign = if k == 0 { 1.0 } else { -1.0 };
                h += embed(&qubit_hamiltonian(qp, sign * delta, ZERO), k, &dims);
                jumps.extend(qubit_jumps(qp).iter().map(|j| embed(j, k, &dims)));
            }
            let lower = |k: usize| {
                let mut m = CMat::zeros(dims[k], dims[k]);
                m[(0, 1)] = Complex64::new(1.0, 0.0);
                embed(&m, k, &dims)
            };
            let (a1, a2) = (lower(0), lower(1));
            let ex = a1.adjoint() * &a2 + a2.adjoint() * &a1;
            h += ex * Complex64::new(g, 0.0);
            let op = Superop::propagator(&liouvillian(&h, &jumps), n as f64 * SAMPLE_PERIOD);
            self.cache.joint.insert(key, op);
        }
        let op = &self.cache.joint[&key];
        self.register.apply_joint(op);
        Ok(())
    }

    fn integrate(&mut self, q: usize, path: &[(usize, usize)], eps: Option<&[Complex64]>, out: &mut [Complex64]) {
        let r = &mut self.resonators[q];
        let mut seg = 0;
        for (k, o) in out.iter_mut().enumerate() {
            while seg + 1 < path.len() && path[seg + 1].0 <= k {
                seg += 1;
            }
            let f = &self.factors[q][path[seg].1];
            let e = eps.map_or(ZERO, |e| e[k]);
            *o += r.step(f, e) - e;
        }
    }

    fn ring_down(&mut self, q: usize, path: &[(usize, usize)], n: u64) {
        if self.mode == ExecutionMode::Ensemble || self.resonators[q].a == ZERO {
            return;
        }
        let qp = &self.params.qubits[q];
        let line = self.frames.line_hz.get(qp.readout_line).copied().unwrap_or(0.0);
        for (i, &(start, level)) in path.iter().enumerate() {
            let end = path.get(i + 1).map_or(n as usize, |p| p.0);
            let delta = qp.dressed_frequency(level) - TAU * line;
            self.resonators[q].ring_down(delta, (end - start) as f64 * SAMPLE_PERIOD);
        }
        if self.resonators[q].a.norm() < 1e-30 {
            self.resonators[q].a = ZERO;
        }
    }

    fn noise_sample(&mut self, line: usize, sample: u64) -> Complex64 {
        let sigma = self.params.noise_sigma;
        if sigma == 0.0 {
            return ZERO;
        }
        let block = sample / NOISE_BLOCK;
        let fresh = !matches!(&self.noise, Some(b) if b.line == line && b.block == block);
        if fresh {
            let mut rng = keyed(self.seed, self.repetition, block, Stream::InputNoise, line as u64);
            let values = (0..NOISE_BLOCK)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(re * sigma, im * sigma)
                })
                .collect();
            self.noise = Some(NoiseBlock { line, block, values });
        }
        self.noise.as_ref().unwrap().values[(sample % NOISE_BLOCK) as usize]
    }

    fn digitize(&mut self, c: &Capture, line: &[Complex64]) -> Vec<Complex64> {
        let shift = c.frame_hz - self.frames.line_hz[c.line];
        let mut out = Vec::with_capacity(line.len());
        for (k, s) in line.iter().enumerate() {
            let t = self.now + k as u64;
            let y = s + self.noise_sample(c.line, t);
            let (re, sr) = QuantSpec::ADC.quantize(y.re);
            let (im, si) = QuantSpec::ADC.quantize(y.im);
            self.adc_saturated |= sr || si;
            let mut z = Complex64::new(re, im);
            if shift != 0.0 {
                z *= Complex64::from_polar(1.0, -TAU * shift * t as f64 * SAMPLE_PERIOD);
            }
            out.push(z);
        }
        out
    }
}

fn one_hot(d: usize, l: usize) -> Vec<f64> {
    (0..d).map(|k| if k == l { 1.0 } else { 0.0 }).collect()
}

/// Adds a drive to an accumulator, shifting it from the port frame into
/// the destination frame.
fn accumulate(acc: &mut Option<Vec<Complex64>>, d: &DriveSource, frame_hz: f64, start: u64, n: usize) {
    let buf = acc.get_or_insert_with(|| vec![ZERO; n]);
    let shift = d.frame_hz - frame_hz;
    for (k, (b, s)) in buf.iter_mut().zip(d.samples).enumerate() {
        if shift == 0.0 {
            *b += s;
        } else {
            let t = (start + k as u64) as f64 * SAMPLE_PERIOD;
            *b += s * Complex64::from_polar(1.0, TAU * shift * t);
        }
    }
}
