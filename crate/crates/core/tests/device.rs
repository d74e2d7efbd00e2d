use pulsemu::device::*;
use pulsemu::dsp::QuantSpec;
use pulsemu::siggen::OutputTarget;
use pulsemu::Complex64;
use std::f64::consts::{PI, TAU};

const DT: f64 = 1e-9;

/// Qubit 2 with negligible decoherence and no thermal population.
fn quiet_qubit() -> QubitParams {
    let mut q = QubitParams::qubit2();
    q.t1 = 1e3;
    q.t2_echo = 2e3;
    q.p_therm = 0.0;
    q
}

fn world<'a>(p: &'a DeviceParams, f: &'a Frames, c: &'a mut DeviceCache, mode: ExecutionMode, rep: u64) -> World<'a> {
    World::new(p, f, c, mode, 7, rep)
}

fn control<'a>(q: usize, frame_hz: f64, samples: &'a [Complex64]) -> DriveSource<'a> {
    DriveSource { target: OutputTarget::Control { qubit: q }, frame_hz, tone_hz: frame_hz, samples }
}

fn readout<'a>(frame_hz: f64, samples: &'a [Complex64]) -> DriveSource<'a> {
    DriveSource { target: OutputTarget::Readout { line: 0 }, frame_hz, tone_hz: frame_hz, samples }
}

/// Closed-form resonator trajectory for piecewise-constant drive.
fn resonator_oracle(segments: &[(Complex64, usize)], delta: f64, kappa: f64) -> Vec<Complex64> {
    let z = Complex64::new(kappa / 2.0, delta);
    let mut a = Complex64::new(0.0, 0.0);
    let mut out = Vec::new();
    for &(eps, n) in segments {
        let ss = Complex64::new(0.0, kappa.sqrt()) * eps / z;
        let a0 = a;
        for k in 0..n {
            let ak = ss + (a0 - ss) * (-z * (k as f64 * DT)).exp();
            out.push(eps + Complex64::new(0.0, kappa.sqrt() / 2.0) * ak);
        }
        a = ss + (a0 - ss) * (-z * (n as f64 * DT)).exp();
    }
    out
}

#[test]
fn resonator_matches_piecewise_exponential() {
    let q = QubitParams::qubit2();
    let delta = q.chi;
    let segs = [
        (Complex64::new(0.1, 0.02), 350),
        (Complex64::new(0.03, 0.0), 350),
        (Complex64::new(-0.05, 0.01), 350),
        (Complex64::new(0.0, 0.0), 350),
    ];
    let f = StepFactors::new(delta, q.kappa, DT);
    let mut r = Resonator::new(q.kappa);
    let got: Vec<Complex64> = segs.iter().flat_map(|&(e, n)| std::iter::repeat_n(e, n)).map(|e| r.step(&f, e)).collect();
    let want = resonator_oracle(&segs, delta, q.kappa);
    let scale = want.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for (k, (g, w)) in got.iter().zip(&want).enumerate() {
        assert!((g - w).norm() <= 1e-9 * scale, "sample {k}: {g} vs {w}");
    }
}

#[test]
fn feedline_capture_matches_oracle_to_adc_resolution() {
    let p = DeviceParams::single(quiet_qubit());
    let frames = Frames::natural(&p);
    let mut cache = DeviceCache::new();
    let mut w = world(&p, &frames, &mut cache, ExecutionMode::Shots, 0);
    let eps = vec![Complex64::new(0.1, 0.0); 2000];
    let line_hz = frames.line_hz[0];
    let out = w.segment(2000, &[readout(line_hz, &eps)], &[Capture { line: 0, frame_hz: line_hz }]).unwrap();
    // Qubit in g: dressed resonance at ω_r + χ relative to the line frame at ω_r.
    let want = resonator_oracle(&[(eps[0], 2000)], p.qubits[0].chi, p.qubits[0].kappa);
    let half = QuantSpec::ADC.step() / 2.0;
    for (k, (g, w)) in out[0].iter().zip(&want).enumerate() {
        assert!((g.re - w.re).abs() <= half + 1e-12 && (g.im - w.im).abs() <= half + 1e-12, "sample {k}");
    }
}

#[test]
fn undriven_line_is_pure_noise() {
    let mut p = DeviceParams::single(quiet_qubit());
    p.noise_sigma = 0.05;
    let frames = Frames::natural(&p);
    let mut cache = DeviceCache::new();
    let mut w = world(&p, &frames, &mut cache, ExecutionMode::Shots, 0);
    let n = 20000;
    let out = w.segment(n, &[], &[Capture { line: 0, frame_hz: frames.line_hz[0] }]).unwrap();
    let mean: Complex64 = out[0].iter().sum::<Complex64>() / n as f64;
    let var = out[0].iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / n as f64;
    // Mean within 5σ of zero; variance 2σ² within 5%.
    assert!(mean.norm() < 5.0 * 0.05 / (n as f64).sqrt(), "mean {mean}");
    assert!((var / (2.0 * 0.05 * 0.05) - 1.0).abs() < 0.05, "variance {var}");
}

#[test]
fn notch_transmission_is_a_lorentzian_dip() {
    let kappa = TAU * 455e3;
    let eps = Complex64::new(0.2, 0.0);
    for &d in &[0.0, 0.3, 1.0, -2.0, 5.0] {
        let delta = d * kappa;
        let s = notch_output(eps, steady_state(eps, delta, kappa), kappa);
        let t2 = (s / eps).norm_sqr();
        let lorentz = delta * delta / (delta * delta + kappa * kappa / 4.0);
        assert!((t2 - lorentz).abs() < 1e-12, "Δ/κ = {d}: {t2} vs {lorentz}");
    }
}

/// Offset of maximum steady-state g/e separation from the bare resonance:
/// |a_g − a_e| ∝ 1/√[(κ²/4 + (χ−δ)²)(κ²/4 + (χ+δ)²)], minimized in the
/// denominator at δ² = χ² − κ²/4 when |χ| > κ/2 and at δ = 0 otherwise.
fn separation_peak_oracle(q: &QubitParams) -> f64 {
    let d2 = q.chi * q.chi - q.kappa * q.kappa / 4.0;
    d2.max(0.0).sqrt() / TAU
}

#[test]
fn separation_peak_matches_analytic_offset() {
    let eps = Complex64::new(0.05, 0.0);
    for q in [QubitParams::qubit1(), QubitParams::qubit2()] {
        let sep = |f_hz: f64| {
            let w = TAU * f_hz;
            let sg = notch_output(eps, steady_state(eps, q.dressed_frequency(0) - w, q.kappa), q.kappa);
            let se = notch_output(eps, steady_state(eps, q.dressed_frequency(1) - w, q.kappa), q.kappa);
            (sg - se).norm()
        };
        let f0 = q.omega_r / TAU;
        // Upper half only; the curve is symmetric about the bare resonance.
        let best = (0..=2000)
            .map(|k| f0 + k as f64 * 100.0)
            .max_by(|a, b| sep(*a).total_cmp(&sep(*b)))
            .unwrap();
        let want = separation_peak_oracle(&q);
        assert!((best - f0 - want).abs() <= 100.0, "peak {} Hz vs {want} Hz", best - f0);
    }
}

#[test]
fn resonant_pi_pulse_reaches_e() {
    let q = quiet_qubit();
    let p = DeviceParams::single(q.clone());
    let frames = Frames::natural(&p);
    let mut cache = DeviceCache::new();
    let mut w = world(&p, &frames, &mut cache, ExecutionMode::Ensemble, 0);
    let amp = q.sin2_amplitude_for(PI);
    let pulse: Vec<Complex64> = (0..20).map(|k| Complex64::new(amp * (PI * k as f64 / 20.0).sin().powi(2), 0.0)).collect();
    w.segment(20, &[control(0, frames.qubit_hz[0], &pulse)], &[]).unwrap();
    let pe = w.populations(0)[1];
    assert!(1.0 - pe < 1e-9, "P_e = {pe}");
}

#[test]
fn idle_decay_follows_closed_form() {
    let q = QubitParams::qubit2();
    let p = DeviceParams::single(q.clone());
    let frames = Frames::natural(&p);
    let mut cache = DeviceCache::new();
    let mut w = world(&p, &frames, &mut cache, ExecutionMode::Ensemble, 0);
    let amp = q.sin2_amplitude_for(PI);
    let pulse: Vec<Complex64> = (0..20).map(|k| Complex64::new(amp * (PI * k as f64 / 20.0).sin().powi(2), 0.0)).collect();
    w.segment(20, &[control(0, frames.qubit_hz[0], &pulse)], &[]).unwrap();
    let p0 = w.populations(0)[1];
    let mut t = 0.0;
    for step in [1000u64, 9000, 40000] {
        w.idle(step).unwrap();
        t += step as f64 * DT;
        let want = q.p_therm + (p0 - q.p_therm) * (-t / q.t1).exp();
        let got = w.populations(0)[1];
        assert!((got - want).abs() < 1e-9, "t = {t}: {got} vs {want}");
    }
}

/// Two-level amplitudes under a sequence of held samples w_k, using the
/// closed-form SU(2) exponential of H = ½[[0, w], [w*, 0]] per sample.
fn su2_oracle(ws: &[Complex64]) -> f64 {
    let (mut cg, mut ce) = (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
    let mi = Complex64::new(0.0, -1.0);
    for &w in ws {
        let r = w.norm();
        if r == 0.0 {
            continue;
        }
        let (c, sn) = ((r * DT / 2.0).cos(), (r * DT / 2.0).sin());
        let u = w / r;
        (cg, ce) = (cg * c + mi * sn * u * ce, ce * c + mi * sn * u.conj() * cg);
    }
    ce.norm_sqr()
}

#[test]
fn detuned_drive_oscillates_at_generalized_rabi_rate() {
    let q = quiet_qubit();
    let p = DeviceParams::single(q.clone());
    let frames = Frames::natural(&p);
    let amp = 0.05;
    let omega = q.rabi_rate_full_scale * amp;
    for &detune_hz in &[0.0, 3e6, -5e6] {
        let delta = TAU * detune_hz;
        let mut cache = DeviceCache::new();
        let mut w = world(&p, &frames, &mut cache, ExecutionMode::Ensemble, 0);
        let drive = vec![Complex64::new(amp, 0.0); 10];
        let mut held = Vec::new();
        for _ in 0..40 {
            // Shifting the pulse frame by Δ puts the drive Δ above the qubit.
            w.segment(10, &[control(0, frames.qubit_hz[0] + detune_hz, &drive)], &[]).unwrap();
            held.extend((held.len()..held.len() + 10).map(|k| Complex64::from_polar(omega, delta * k as f64 * DT)));
            let t = held.len() as f64 * DT;
            let got = w.populations(0)[1];
            let exact = su2_oracle(&held);
            assert!((got - exact).abs() < 1e-9, "Δ/2π = {detune_hz}, t = {t}: {got} vs {exact}");
            // Continuous-time Rabi formula, up to the O(Δ·dt)² hold error.
            let r = (omega * omega + delta * delta).sqrt();
            let rabi = omega * omega / (r * r) * (r * t / 2.0).sin().powi(2);
            assert!((got - rabi).abs() < 2e-4, "Δ/2π = {detune_hz}, t = {t}: {got} vs {rabi}");
        }
    }
}

#[test]
fn ground_state_always_reads_g() {
    let p = DeviceParams::single(quiet_qubit());
    let frames = Frames::natural(&p);
    let eps = vec![Complex64::new(0.05, 0.0); 4];
    for rep in 0..200 {
        let mut cache = DeviceCache::new();
        let mut w = world(&p, &frames, &mut cache, ExecutionMode::Shots, rep);
        w.segment(4, &[readout(frames.line_hz[0], &eps)], &[]).unwrap();
        assert_eq!(w.probes()[0].populations, vec![1.0, 0.0]);
    }
}

#[test]
fn thermal_collapse_statistics() {
    // Excited fraction of 10^5 thermal shots against 5.8% ± 4 binomial σ.
    let p = DeviceParams::single(QubitParams::qubit2());
    let frames = Frames::natural(&p);
    let eps = vec![Complex64::new(0.05, 0.0); 2];
    let shots = 100_000u64;
    let mut cache = DeviceCache::new();
    let mut excited = 0u64;
    for rep in 0..shots {
        let mut w = world(&p, &frames, &mut cache, ExecutionMode::Shots, rep);
        w.segment(2, &[readout(frames.line_hz[0], &eps)], &[]).unwrap();
        excited += (w.probes()[0].populations[1] == 1.0) as u64;
    }
    let frac = excited as f64 / shots as f64;
    let sigma = (0.058 * 0.942 / shots as f64).sqrt();
    assert!((frac - 0.058).abs() < 4.0 * sigma, "excited fraction {frac}");
}

#[test]
fn same_seed_and_repetition_are_reproducible() {
    let mut p = DeviceParams::single(QubitParams::qubit2());
    p.noise_sigma = 0.02;
    let frames = Frames::natural(&p);
    let eps = vec![Complex64::new(0.05, 0.0); 300];
    let cap = [Capture { line: 0, frame_hz: frames.line_hz[0] }];
    let trace = |rep| {
        let mut cache = DeviceCache::new();
        let mut w = world(&p, &frames, &mut cache, ExecutionMode::Shots, rep);
        w.segment(300, &[readout(frames.line_hz[0], &eps)], &cap).unwrap()
    };
    assert_eq!(trace(3), trace(3));
    assert_ne!(trace(3), trace(4));
}

fn swap_device() -> DeviceParams {
    let mut p = DeviceParams::two_qubit();
    for q in p.qubits.iter_mut() {
        q.t1 = 1e3;
        q.t2_echo = 2e3;
        q.p_therm = 0.0;
    }
    p
}

/// Excites qubit 0, drives the coupler for `ticks`, and returns P_e of both qubits.
fn exchange(p: &DeviceParams, detune_hz: f64, samples: usize) -> (f64, f64) {
    let frames = Frames::natural(p);
    let mut cache = DeviceCache::new();
    let mut w = world(p, &frames, &mut cache, ExecutionMode::Ensemble, 0);
    let q = &p.qubits[0];
    let amp = q.sin2_amplitude_for(PI);
    let pulse: Vec<Complex64> = (0..20).map(|k| Complex64::new(amp * (PI * k as f64 / 20.0).sin().powi(2), 0.0)).collect();
    w.segment(20, &[control(0, frames.qubit_hz[0], &pulse)], &[]).unwrap();
    let cp = p.coupler.as_ref().unwrap();
    let tone = cp.resonance_hz(&p.qubits[0], &p.qubits[1]) + detune_hz;
    let a = 0.21 / cp.flux_per_full_scale;
    let drive = vec![Complex64::new(a, 0.0); samples];
    if samples > 0 {
        let src = DriveSource { target: OutputTarget::Coupler, frame_hz: tone, tone_hz: tone, samples: &drive };
        w.segment(samples, &[src], &[]).unwrap();
    }
    (w.populations(0)[1], w.populations(1)[1])
}

#[test]
fn coupler_zero_duration_is_identity() {
    let p = swap_device();
    let (a, b) = exchange(&p, 0.0, 0);
    assert!(a > 1.0 - 1e-9 && b < 1e-9);
}

#[test]
fn resonant_exchange_swaps_in_300_ns() {
    let p = swap_device();
    for t in [0usize, 75, 150, 300, 450, 600] {
        let (p1, p2) = exchange(&p, 0.0, t);
        let want = (PI * t as f64 / 600.0).cos().powi(2);
        assert!((p1 - want).abs() < 1e-6, "t = {t} ns: {p1} vs {want}");
        assert!((p1 + p2 - 1.0).abs() < 1e-6, "t = {t} ns");
    }
}

#[test]
fn detuned_exchange_has_reduced_contrast() {
    let p = swap_device();
    let cp = p.coupler.as_ref().unwrap();
    let g = cp.exchange_rate(0.21 / cp.flux_per_full_scale);
    for detune_hz in [1e6, -2.5e6] {
        let delta = PI * detune_hz;
        let r = (g * g + delta * delta).sqrt();
        for t in [100usize, 200, 333] {
            let (p1, _) = exchange(&p, detune_hz, t);
            let moved = g * g / (r * r) * (r * t as f64 * DT).sin().powi(2);
            assert!((1.0 - p1 - moved).abs() < 1e-6, "δ = {detune_hz} Hz, t = {t}: {p1}");
        }
    }
}
