//! Readout calibration: CLEAR segment design, post-selected template
//! refinement, bimodal Gaussian fits of match outcomes, overlap error and
//! effective temperature.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::acquisition::code16;
use crate::device::{QubitParams, StepFactors, HBAR, K_B};
use crate::dsp::{ComplexTrace, QuantSpec};
use crate::{Error, Result, SAMPLE_PERIOD};

/// Fraction of the steady-state g/e separation the ring-up segments must
/// reach by the end of segment 2.
pub const RING_UP_TARGET: f64 = 0.95;
const MAX_BOOST: f64 = 8.0;

/// Four constant segments of a CLEAR readout pulse and their predicted
/// resonator response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearPulse {
    pub segments: [Complex64; 4],
    pub segment_ns: u32,
    /// Segment-1 amplitude relative to the hold amplitude.
    pub boost: f64,
    /// Largest |a| reached by either state during the pulse.
    pub peak: f64,
    /// |a(T)|/peak for the ground and excited state.
    pub residual: [f64; 2],
    /// g/e field separation after segment 2, relative to steady state.
    pub ring_up_fraction: f64,
}

impl ClearPulse {
    pub fn samples(&self) -> Vec<Complex64> {
        let n = self.segment_ns as usize;
        self.segments.iter().flat_map(|&s| std::iter::repeat_n(s, n)).collect()
    }

    pub fn duration_ns(&self) -> u32 {
        4 * self.segment_ns
    }
}

/// Per-segment propagation a ← E·a + B·ε of a constant drive held for `t`.
fn segment_factors(kappa: f64, delta: f64, t: f64) -> (Complex64, Complex64) {
    let z = Complex64::new(kappa / 2.0, delta);
    let e = (-z * t).exp();
    (e, Complex64::new(0.0, kappa.sqrt()) * (1.0 - e) / z)
}

/// Resonator field, sampled at the start of every sample, for a piecewise
/// constant drive at detuning `delta`, followed by the final field.
pub fn clear_response(kappa: f64, delta: f64, drive: &[Complex64]) -> (Vec<Complex64>, Complex64) {
    let f = StepFactors::new(delta, kappa, SAMPLE_PERIOD);
    let mut a = Complex64::new(0.0, 0.0);
    let mut trace = Vec::with_capacity(drive.len());
    for &eps in drive {
        trace.push(a);
        a = f.decay * a + f.gain * eps;
    }
    (trace, a)
}

/// Designs a CLEAR pulse for a readout tone at `drive_hz` holding
/// `hold_amplitude` full scale during segment 2.
///
/// Segment 1 overdrives by the smallest boost in [1, 8] that reaches
/// [`RING_UP_TARGET`] of the steady-state separation, found by bisection.
/// Segments 3 and 4 then solve the 2×2 complex system that empties the
/// resonator for both qubit states at the end of the pulse. With χ = 0 the
/// two rows coincide and the minimum-norm solution is used.
pub fn optimize_clear(q: &QubitParams, drive_hz: f64, hold_amplitude: f64, segment_ns: u32) -> Result<ClearPulse> {
    if segment_ns == 0 || !(hold_amplitude > 0.0 && hold_amplitude <= 1.0) {
        return Err(Error::InvalidArgument("CLEAR needs a positive segment duration and hold amplitude".into()));
    }
    let kappa = q.kappa;
    let t = segment_ns as f64 * 1e-9;
    let deltas = [0, 1].map(|l| q.dressed_frequency(l) - std::f64::consts::TAU * drive_hz);
    let fac = deltas.map(|d| segment_factors(kappa, d, t));
    let hold = Complex64::new(hold_amplitude, 0.0);

    let ring_up = |boost: f64| fac.map(|(e, b)| (e * boost + 1.0) * b * hold);
    let ss = deltas.map(|d| crate::device::steady_state(hold, d, kappa));
    let ss_sep = (ss[1] - ss[0]).norm();
    let fraction = |boost: f64| {
        let a = ring_up(boost);
        if ss_sep == 0.0 {
            1.0
        } else {
            (a[1] - a[0]).norm() / ss_sep
        }
    };
    let boost = if fraction(1.0) >= RING_UP_TARGET {
        1.0
    } else {
        // First bracket on a coarse grid, then bisection.
        let grid: Vec<f64> = (0..=28).map(|k| 1.0 + 0.25 * k as f64).collect();
        let hi = grid
            .iter()
            .copied()
            .find(|&b| fraction(b) >= RING_UP_TARGET)
            .ok_or_else(|| {
                Error::Infeasible(format!(
                    "ring-up reaches only {:.3} of steady-state separation with boost {MAX_BOOST}",
                    fraction(MAX_BOOST)
                ))
            })?;
        let (mut lo, mut hi) = (hi - 0.25, hi);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if fraction(mid) >= RING_UP_TARGET {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let a2 = ring_up(boost);

    // a(4T) = E²·a(2T) + E·B·ε₃ + B·ε₄ = 0 for both states.
    let row = |l: usize| [fac[l].0 * fac[l].1, fac[l].1];
    let rhs = [0, 1].map(|l| -fac[l].0 * fac[l].0 * a2[l]);
    let (r0, r1) = (row(0), row(1));
    let det = r0[0] * r1[1] - r0[1] * r1[0];
    let scale = r0[0].norm() * r1[1].norm() + r0[1].norm() * r1[0].norm();
    let (e3, e4) = if det.norm() > 1e-12 * scale {
        ((rhs[0] * r1[1] - r0[1] * rhs[1]) / det, (r0[0] * rhs[1] - rhs[0] * r1[0]) / det)
    } else {
        let n2 = r0[0].norm_sqr() + r0[1].norm_sqr();
        (rhs[0] * r0[0].conj() / n2, rhs[0] * r0[1].conj() / n2)
    };
    let mut segments = [hold * boost, hold, e3, e4];
    let largest = segments.iter().map(|s| s.norm()).fold(0.0, f64::max);
    let clipped = largest > 1.0;
    if clipped {
        for s in &mut segments {
            *s /= largest;
        }
    }

    let n = segment_ns as usize;
    let drive: Vec<Complex64> = segments.iter().flat_map(|&s| std::iter::repeat_n(s, n)).collect();
    let mut peak = 0.0f64;
    let mut ends = [0.0; 2];
    for l in 0..2 {
        let (trace, end) = clear_response(kappa, deltas[l], &drive);
        peak = trace.iter().map(|a| a.norm()).fold(peak, f64::max);
        ends[l] = end.norm();
    }
    let residual = ends.map(|e| e / peak);
    if clipped {
        return Err(Error::Infeasible(format!(
            "ring-down needs {largest:.3} full scale; clipped to full scale the achievable residual is {:.3e}",
            residual[0].max(residual[1])
        )));
    }
    Ok(ClearPulse { segments, segment_ns, boost, peak, residual, ring_up_fraction: fraction(boost) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Preliminary,
    Refined,
}

/// Ground and excited reference templates of equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferencePair {
    pub tau_g: ComplexTrace,
    pub tau_e: ComplexTrace,
    pub provenance: Provenance,
}

impl ReferencePair {
    pub fn new(tau_g: ComplexTrace, tau_e: ComplexTrace, provenance: Provenance) -> Result<Self> {
        if tau_g.len() != tau_e.len() {
            return Err(Error::LengthMismatch { left: tau_g.len(), right: tau_e.len() });
        }
        Ok(Self { tau_g, tau_e, provenance })
    }

    /// Σ|τ_e − τ_g| over the whole trace.
    pub fn separation(&self) -> f64 {
        self.tau_g.iter().zip(self.tau_e.iter()).map(|(g, e)| (e - g).norm()).sum()
    }

    /// ‖τ_e − τ_g‖.
    pub fn distance(&self) -> f64 {
        self.tau_g.iter().zip(self.tau_e.iter()).map(|(g, e)| (e - g).norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Streaming post-selection: second-readout traces are summed per class of
/// the first-readout outcome. Sums are exact integers on the 16-bit grid,
/// so partial refiners merge in any order.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateRefiner {
    len: usize,
    /// Shots with |first − θ| below the guard are rejected.
    guard: i64,
    sums: [Vec<i64>; 2],
    counts: [u64; 2],
    rejected: u64,
}

/// Result of [`TemplateRefiner::finish`].
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub pair: ReferencePair,
    pub counts: [u64; 2],
    pub rejected_fraction: f64,
}

impl TemplateRefiner {
    pub fn new(len: usize, guard: i64) -> Self {
        Self { len, guard: guard.max(0), sums: [vec![0; 2 * len], vec![0; 2 * len]], counts: [0; 2], rejected: 0 }
    }

    /// Adds one shot. `first` is the first-readout match sum and `theta`
    /// its threshold; `second` is the stored second-readout trace.
    pub fn add(&mut self, first: i64, theta: i64, second: &[Complex64]) -> Result<()> {
        if second.len() != self.len {
            return Err(Error::LengthMismatch { left: second.len(), right: self.len });
        }
        let margin = first - theta;
        if margin.abs() < self.guard {
            self.rejected += 1;
            return Ok(());
        }
        let class = usize::from(margin >= 0);
        for (k, z) in second.iter().enumerate() {
            self.sums[class][2 * k] += code16(z.re);
            self.sums[class][2 * k + 1] += code16(z.im);
        }
        self.counts[class] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &TemplateRefiner) -> Result<()> {
        if other.len != self.len {
            return Err(Error::LengthMismatch { left: other.len, right: self.len });
        }
        for c in 0..2 {
            for (d, s) in self.sums[c].iter_mut().zip(&other.sums[c]) {
                *d += s;
            }
            self.counts[c] += other.counts[c];
        }
        self.rejected += other.rejected;
        Ok(())
    }

    pub fn finish(&self) -> Result<Refinement> {
        let names = ["ground", "excited"];
        let mut traces = Vec::with_capacity(2);
        for c in 0..2 {
            if self.counts[c] == 0 {
                return Err(Error::Fit(format!("no shots classified as {}", names[c])));
            }
            let scale = QuantSpec::TEMPLATE.step() / self.counts[c] as f64;
            let s = &self.sums[c];
            traces.push(ComplexTrace::from_fn(self.len, |k| {
                Complex64::new(s[2 * k] as f64 * scale, s[2 * k + 1] as f64 * scale)
            }));
        }
        let total = self.counts[0] + self.counts[1] + self.rejected;
        let tau_e = traces.pop().unwrap();
        let tau_g = traces.pop().unwrap();
        Ok(Refinement {
            pair: ReferencePair::new(tau_g, tau_e, Provenance::Refined)?,
            counts: self.counts,
            rejected_fraction: self.rejected as f64 / total as f64,
        })
    }
}

/// Refines a preliminary pair from (first-readout match sum, second-readout
/// trace) shots, classified against `theta`.
pub fn refine_templates<'a>(
    preliminary: &ReferencePair,
    theta: i64,
    shots: impl IntoIterator<Item = (i64, &'a [Complex64])>,
) -> Result<Refinement> {
    let mut r = TemplateRefiner::new(preliminary.tau_g.len(), 0);
    for (first, second) in shots {
        r.add(first, theta, second)?;
    }
    r.finish()
}

/// Two-component Gaussian mixture of match outcomes, measured from the
/// decision threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BimodalFit {
    pub mu_g: f64,
    pub sigma_g: f64,
    pub mu_e: f64,
    pub sigma_e: f64,
    pub weight_e: f64,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Set when one component is empty or vanishes during the fit.
    pub degenerate: bool,
}

impl BimodalFit {
    fn pdf(mu: f64, sigma: f64, x: f64) -> f64 {
        let z = (x - mu) / sigma;
        (-0.5 * z * z).exp() / (sigma * (std::f64::consts::TAU).sqrt())
    }

    /// Density of the component for `excited` (unweighted).
    pub fn component_pdf(&self, excited: bool, x: f64) -> f64 {
        if excited {
            Self::pdf(self.mu_e, self.sigma_e, x)
        } else {
            Self::pdf(self.mu_g, self.sigma_g, x)
        }
    }

    /// Mixture density.
    pub fn pdf_at(&self, x: f64) -> f64 {
        (1.0 - self.weight_e) * self.component_pdf(false, x) + self.weight_e * self.component_pdf(true, x)
    }
}

pub const MIN_FIT_SAMPLES: usize = 1000;
const EM_TOLERANCE: f64 = 1e-9;
const EM_MAX_ITERATIONS: usize = 500;
/// Components lighter than this are reported as degenerate.
const DEGENERATE_WEIGHT: f64 = 1e-4;

/// Two Gaussians closer than twice the wider σ form a unimodal mixture.
fn unresolved(mu_g: f64, sigma_g: f64, mu_e: f64, sigma_e: f64) -> bool {
    (mu_e - mu_g).abs() < 2.0 * sigma_g.max(sigma_e)
}

fn moments(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64, usize) {
    let n = xs.clone().count();
    let mean = xs.clone().sum::<f64>() / n as f64;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt(), n)
}

/// Maximum-likelihood bimodal Gaussian fit by expectation maximization,
/// initialized by splitting the data at the midpoint of its range.
pub fn fit_bimodal(data: &[f64]) -> Result<BimodalFit> {
    if data.len() < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!("{} samples, at least {MIN_FIT_SAMPLES} needed", data.len())));
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Fit("non-finite sample".into()));
    }
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = ((hi - lo) * 1e-9).max(f64::MIN_POSITIVE);
    let (mean, sd, _) = moments(data.iter().copied());
    let single = |iterations| {
        let sigma = sd.max(floor);
        let ll = data.iter().map(|&x| BimodalFit::pdf(mean, sigma, x).ln()).sum();
        BimodalFit {
            mu_g: mean,
            sigma_g: sigma,
            mu_e: mean,
            sigma_e: sigma,
            weight_e: 0.0,
            iterations,
            log_likelihood: ll,
            degenerate: true,
        }
    };
    let mid = 0.5 * (lo + hi);
    let below = data.iter().copied().filter(|&x| x < mid);
    let above = data.iter().copied().filter(|&x| x >= mid);
    let (mut mu_g, sg, ng) = moments(below);
    let (mut mu_e, se, ne) = moments(above);
    if ng == 0 || ne == 0 || hi == lo {
        return Ok(single(0));
    }
    let (mut sigma_g, mut sigma_e) = (sg.max(floor), se.max(floor));
    let mut w = ne as f64 / data.len() as f64;
    let n = data.len() as f64;
    let mut prev = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    for it in 1..=EM_MAX_ITERATIONS {
        // E step with log-likelihood of the current parameters.
        let (mut s0, mut s1, mut sx0, mut sx1) = (0.0, 0.0, 0.0, 0.0);
        let mut ll = 0.0;
        let resp: Vec<f64> = data
            .iter()
            .map(|&x| {
                let pg = (1.0 - w) * BimodalFit::pdf(mu_g, sigma_g, x);
                let pe = w * BimodalFit::pdf(mu_e, sigma_e, x);
                let tot = pg + pe;
                ll += tot.max(f64::MIN_POSITIVE).ln();
                if tot > 0.0 {
                    pe / tot
                } else {
                    f64::from(x >= mid)
                }
            })
            .collect();
        for (&x, &r) in data.iter().zip(&resp) {
            s0 += 1.0 - r;
            s1 += r;
            sx0 += (1.0 - r) * x;
            sx1 += r * x;
        }
        let mean_ll = ll / n;
        trace.push(mean_ll);
        if (mean_ll - prev).abs() < EM_TOLERANCE {
            let degenerate = w < DEGENERATE_WEIGHT || w > 1.0 - DEGENERATE_WEIGHT || unresolved(mu_g, sigma_g, mu_e, sigma_e);
            let (mu_g, sigma_g, mu_e, sigma_e, w) = if mu_g <= mu_e {
                (mu_g, sigma_g, mu_e, sigma_e, w)
            } else {
                (mu_e, sigma_e, mu_g, sigma_g, 1.0 - w)
            };
            return Ok(BimodalFit { mu_g, sigma_g, mu_e, sigma_e, weight_e: w, iterations: it, log_likelihood: ll, degenerate });
        }
        prev = mean_ll;
        if s1 < 0.5 || s0 < 0.5 {
            return Ok(single(it));
        }
        // M step.
        mu_g = sx0 / s0;
        mu_e = sx1 / s1;
        let (mut v0, mut v1) = (0.0, 0.0);
        for (&x, &r) in data.iter().zip(&resp) {
            v0 += (1.0 - r) * (x - mu_g).powi(2);
            v1 += r * (x - mu_e).powi(2);
        }
        sigma_g = (v0 / s0).sqrt().max(floor);
        sigma_e = (v1 / s1).sqrt().max(floor);
        w = s1 / n;
    }
    // Slow convergence is typical when the two components merge into one.
    if unresolved(mu_g, sigma_g, mu_e, sigma_e) {
        return Ok(single(EM_MAX_ITERATIONS));
    }
    let tail: Vec<String> = trace.iter().rev().take(5).rev().map(|l| format!("{l:.12}")).collect();
    Err(Error::Fit(format!(
        "EM did not converge in {EM_MAX_ITERATIONS} iterations; last mean log-likelihoods [{}]",
        tail.join(", ")
    )))
}

/// Excited weight of `data` with both Gaussian components fixed to those
/// of `shape`, by expectation maximization over the weight alone.
///
/// Useful when the free fit is pulled by non-Gaussian tails, e.g. from
/// relaxation during the readout, which a free e component absorbs by
/// widening.
pub fn fit_weight(data: &[f64], shape: &BimodalFit) -> Result<BimodalFit> {
    if data.is_empty() || data.iter().any(|x| !x.is_finite()) {
        return Err(Error::Fit("weight fit needs finite samples".into()));
    }
    let pg: Vec<f64> = data.iter().map(|&x| shape.component_pdf(false, x)).collect();
    let pe: Vec<f64> = data.iter().map(|&x| shape.component_pdf(true, x)).collect();
    let n = data.len() as f64;
    let mut w = 0.5;
    for it in 1..=EM_MAX_ITERATIONS {
        let (mut s1, mut ll) = (0.0, 0.0);
        for (&g, &e) in pg.iter().zip(&pe) {
            let tot = (1.0 - w) * g + w * e;
            if tot > 0.0 {
                s1 += w * e / tot;
            }
            ll += tot.max(f64::MIN_POSITIVE).ln();
        }
        let next = s1 / n;
        let done = (next - w).abs() < 1e-12;
        w = next;
        if done || it == EM_MAX_ITERATIONS {
            return Ok(BimodalFit { weight_e: w, iterations: it, log_likelihood: ll, degenerate: shape.degenerate, ..shape.clone() });
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// Histogram with uniform bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

/// Bin count used for reporting match-outcome histograms.
pub const HISTOGRAM_BINS: usize = 316;

impl Histogram {
    /// Bins `data` over mean ± 4σ of the pooled data; values outside are
    /// dropped.
    pub fn pooled(data: &[f64], bins: usize) -> Self {
        let (mean, sd, _) = if data.is_empty() { (0.0, 1.0, 0) } else { moments(data.iter().copied()) };
        let half = if sd > 0.0 { 4.0 * sd } else { 1.0 };
        Self::with_range(data, mean - half, mean + half, bins)
    }

    pub fn with_range(data: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let mut counts = vec![0u64; bins];
        let w = (hi - lo) / bins as f64;
        for &x in data {
            if x >= lo && x < hi {
                counts[(((x - lo) / w) as usize).min(bins - 1)] += 1;
            }
        }
        Self { lo, hi, counts }
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        self.lo + (k as f64 + 0.5) * self.width()
    }
}

/// Wrong-assignment probabilities implied by a bimodal fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapError {
    pub eps_g: f64,
    pub eps_e: f64,
    pub overlap: f64,
    pub fidelity_bound: f64,
}

/// ε_i = [1 − erf(x_i)]/2 with x_i = |μ_i|/(√2·σ_i); ε_overlap is the mean
/// of ε_g and ε_e and bounds the fidelity from above by 1 − ε_overlap.
pub fn overlap_error(fit: &BimodalFit) -> OverlapError {
    let eps = |mu: f64, sigma: f64| 0.5 * erfc(mu.abs() / (std::f64::consts::SQRT_2 * sigma));
    let eps_g = eps(fit.mu_g, fit.sigma_g);
    let eps_e = eps(fit.mu_e, fit.sigma_e);
    let overlap = 0.5 * (eps_g + eps_e);
    OverlapError { eps_g, eps_e, overlap, fidelity_bound: 1.0 - overlap }
}

/// Additive noise σ (per quadrature, per sample) at which a matched filter
/// built from mean responses differing by `delta_tau` misassigns each state
/// with probability `eps`: σ = ‖Δτ‖ / (2√2·erfc⁻¹(2ε)).
pub fn noise_for_overlap(delta_tau: &[Complex64], eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.5) {
        return Err(Error::InvalidArgument(format!("error probability {eps} outside (0, 0.5)")));
    }
    let norm = delta_tau.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    Ok(norm / (2.0 * std::f64::consts::SQRT_2 * erfc_inv(2.0 * eps)))
}

/// T_eff = ħω₀₁ / (k_B·ln(1/p − 1)).
pub fn effective_temperature(p_excited: f64, omega_01: f64) -> Result<f64> {
    if !(p_excited > 0.0 && p_excited < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "excited population {p_excited} outside (0, 0.5); negative temperatures are not supported"
        )));
    }
    Ok(HBAR * omega_01 / (K_B * (1.0 / p_excited - 1.0).ln()))
}

/// Two-level thermal excited population at temperature `kelvin`.
pub fn excited_population(kelvin: f64, omega_01: f64) -> f64 {
    1.0 / (1.0 + (HBAR * omega_01 / (K_B * kelvin)).exp())
}
