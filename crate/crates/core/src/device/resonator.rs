//! Driven, damped readout resonator: da/dt = −(iΔ + κ/2)·a + i√κ·ε(t),
//! integrated exactly for drives held constant over each sample.

use num_complex::Complex64;

/// Steady-state amplitude for a constant drive ε at detuning Δ.
pub fn steady_state(eps: Complex64, delta: f64, kappa: f64) -> Complex64 {
    Complex64::new(0.0, kappa.sqrt()) * eps / Complex64::new(kappa / 2.0, delta)
}

/// Transmitted field past a notch-coupled resonator: ε + i(√κ/2)·a. On
/// resonance in steady state the drive is fully cancelled.
pub fn notch_output(eps: Complex64, a: Complex64, kappa: f64) -> Complex64 {
    eps + Complex64::new(0.0, kappa.sqrt() / 2.0) * a
}

/// Resonator field with a cached zero-order-hold step for one detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resonator {
    pub kappa: f64,
    pub a: Complex64,
}

/// One-sample propagation factors (E, B): a ← E·a + B·ε.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepFactors {
    pub decay: Complex64,
    pub gain: Complex64,
}

impl StepFactors {
    pub fn new(delta: f64, kappa: f64, dt: f64) -> Self {
        let z = Complex64::new(kappa / 2.0, delta);
        let decay = (-z * dt).exp();
        let gain = Complex64::new(0.0, kappa.sqrt()) * (1.0 - decay) / z;
        Self { decay, gain }
    }
}

impl Resonator {
    pub fn new(kappa: f64) -> Self {
        Self { kappa, a: Complex64::new(0.0, 0.0) }
    }

    /// Advances one sample of constant drive, returning the output sample
    /// (taken at the start of the sample).
    #[inline]
    pub fn step(&mut self, f: &StepFactors, eps: Complex64) -> Complex64 {
        let out = notch_output(eps, self.a, self.kappa);
        self.a = f.decay * self.a + f.gain * eps;
        out
    }

    /// Free decay over `t` seconds at detuning Δ.
    pub fn ring_down(&mut self, delta: f64, t: f64) {
        self.a *= (-Complex64::new(self.kappa / 2.0, delta) * t).exp();
    }

    /// Exact evolution under a constant drive for `t` seconds.
    pub fn evolve_constant(&mut self, eps: Complex64, delta: f64, t: f64) {
        let ss = steady_state(eps, delta, self.kappa);
        self.a = ss + (self.a - ss) * (-Complex64::new(self.kappa / 2.0, delta) * t).exp();
    }
}
