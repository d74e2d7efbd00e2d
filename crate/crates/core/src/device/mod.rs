//! Simulated device: dispersive readout resonators on shared feedlines,
//! transmon qubits (two or three levels) with relaxation, dephasing and
//! thermal excitation, and a parametrically driven tunable coupler.

mod lindblad;
mod resonator;
mod world;

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use lindblad::{Register, Superop};
pub use resonator::{notch_output, steady_state, Resonator, StepFactors};
pub use world::{Capture, DeviceCache, DriveSource, ExecutionMode, Frames, Probe, World};

/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;

/// Angular frequency (rad/s) from a frequency in Hz.
pub fn rad(hz: f64) -> f64 {
    TAU * hz
}

/// Lifetimes may be infinite (no decay); JSON carries those as `null`.
mod lifetime {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// One qubit, its readout resonator, and how they are wired. All angular
/// quantities are in rad/s and times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitParams {
    /// Bare resonator frequency ω_R.
    pub omega_r: f64,
    /// Resonator linewidth κ.
    pub kappa: f64,
    /// Qubit transition frequency ω_01.
    pub omega_01: f64,
    /// Anharmonicity α (ω_12 = ω_01 + α).
    pub alpha: f64,
    /// Dispersive shift: |g⟩ pulls the resonator to ω_R + χ, |e⟩ to ω_R − χ.
    pub chi: f64,
    /// Resonator shift for |f⟩; defaults to 2χ.
    #[serde(default)]
    pub chi_f: Option<f64>,
    /// Qubit–resonator coupling g (recorded, not used by the dispersive model).
    pub g: f64,
    /// Purcell-limited lifetime 1/Γ_Purcell (recorded, not used).
    #[serde(with = "lifetime")]
    pub purcell_time: f64,
    #[serde(with = "lifetime")]
    pub t1: f64,
    #[serde(with = "lifetime")]
    pub t2_echo: f64,
    /// f→e lifetime; defaults to T1/2.
    #[serde(default)]
    pub t1_fe: Option<f64>,
    /// Thermal excited-state population.
    pub p_therm: f64,
    /// Number of simulated levels (2 or 3).
    #[serde(default = "two")]
    pub levels: usize,
    /// Rabi rate (rad/s) produced by a full-scale drive sample.
    #[serde(default = "default_rabi_rate")]
    pub rabi_rate_full_scale: f64,
    /// Feedline the resonator hangs on.
    #[serde(default)]
    pub readout_line: usize,
}

fn two() -> usize {
    2
}

/// Amplitude (fraction of full scale) of a 20 ns sin² π pulse at the default
/// Rabi rate.
pub const DEFAULT_PI_AMPLITUDE: f64 = 0.5186;
/// Envelope area of a 20 ns sin² pulse per unit amplitude (seconds).
const SIN2_AREA_20NS: f64 = 10e-9;

fn default_rabi_rate() -> f64 {
    PI / (DEFAULT_PI_AMPLITUDE * SIN2_AREA_20NS)
}

impl QubitParams {
    /// Qubit 1 of the two-qubit sample.
    pub fn qubit1() -> Self {
        Self {
            omega_r: rad(6.17e9),
            kappa: rad(615e3),
            omega_01: rad(3.56e9),
            alpha: rad(-240e6),
            chi: rad(-155e3),
            chi_f: None,
            g: rad(69.3e6),
            purcell_time: 370e-6,
            t1: 46e-6,
            t2_echo: 55e-6,
            t1_fe: None,
            p_therm: 0.0,
            levels: 2,
            rabi_rate_full_scale: default_rabi_rate(),
            readout_line: 0,
        }
    }

    /// Qubit 2 of the two-qubit sample, with its measured thermal population.
    pub fn qubit2() -> Self {
        Self {
            omega_r: rad(6.03e9),
            kappa: rad(455e3),
            omega_01: rad(4.09e9),
            alpha: rad(-231e6),
            chi: rad(-302e3),
            chi_f: None,
            g: rad(74.3e6),
            purcell_time: 240e-6,
            t1: 34e-6,
            t2_echo: 34e-6,
            t1_fe: None,
            p_therm: 0.058,
            levels: 2,
            rabi_rate_full_scale: default_rabi_rate(),
            readout_line: 0,
        }
    }

    pub fn chi_f(&self) -> f64 {
        self.chi_f.unwrap_or(2.0 * self.chi)
    }

    /// Dressed resonator frequency (rad/s) with the qubit in `level`.
    pub fn dressed_frequency(&self, level: usize) -> f64 {
        self.omega_r
            + match level {
                0 => self.chi,
                1 => -self.chi,
                _ => self.chi_f(),
            }
    }

    pub fn t1_fe(&self) -> f64 {
        self.t1_fe.unwrap_or(self.t1 / 2.0)
    }

    /// Boltzmann ratio p_e/p_g implied by the thermal population.
    pub fn boltzmann_ratio(&self) -> f64 {
        self.p_therm / (1.0 - self.p_therm)
    }

    /// Boltzmann ratio p_f/p_e at the same effective temperature.
    pub fn boltzmann_ratio_fe(&self) -> f64 {
        let x = self.boltzmann_ratio();
        if x == 0.0 {
            0.0
        } else {
            x.powf((self.omega_01 + self.alpha) / self.omega_01)
        }
    }

    /// Transition rates (down, up) between `level` and `level + 1`.
    pub fn transition_rates(&self, level: usize) -> (f64, f64) {
        match level {
            0 => {
                let down = (1.0 - self.p_therm) / self.t1;
                (down, self.p_therm / self.t1)
            }
            _ => {
                let down = 1.0 / self.t1_fe();
                (down, down * self.boltzmann_ratio_fe())
            }
        }
    }

    /// Pure dephasing rate Γφ = Γ2 − Γ1/2.
    pub fn gamma_phi(&self) -> f64 {
        (1.0 / self.t2_echo - 0.5 / self.t1).max(0.0)
    }

    /// Thermal-equilibrium level populations.
    pub fn thermal_populations(&self) -> Vec<f64> {
        let mut p = vec![1.0, self.boltzmann_ratio()];
        if self.levels == 3 {
            p.push(p[1] * self.boltzmann_ratio_fe());
        }
        let s: f64 = p.iter().sum();
        p.iter().map(|x| x / s).collect()
    }

    /// Full-scale amplitude of a 20 ns sin² pulse rotating by `angle`.
    pub fn sin2_amplitude_for(&self, angle: f64) -> f64 {
        angle / (self.rabi_rate_full_scale * SIN2_AREA_20NS)
    }

    pub fn check(&self, idx: usize) -> Vec<String> {
        let mut v = Vec::new();
        let q = format!("qubit {idx}");
        if !(self.kappa > 0.0) {
            v.push(format!("{q}: kappa must be positive"));
        }
        if !(self.t1 > 0.0) || !(self.t2_echo > 0.0) {
            v.push(format!("{q}: T1 and T2 must be positive"));
        }
        if self.t2_echo > 2.0 * self.t1 {
            v.push(format!("{q}: T2 exceeds 2·T1"));
        }
        if !(0.0..0.5).contains(&self.p_therm) {
            v.push(format!("{q}: thermal population must lie in [0, 0.5)"));
        }
        if !(self.levels == 2 || self.levels == 3) {
            v.push(format!("{q}: levels must be 2 or 3"));
        }
        if self.t1_fe.is_some_and(|t| !(t > 0.0)) {
            v.push(format!("{q}: f-level lifetime must be positive"));
        }
        if ![self.omega_r, self.omega_01, self.alpha, self.chi, self.rabi_rate_full_scale]
            .iter()
            .all(|x| x.is_finite())
        {
            v.push(format!("{q}: non-finite frequency parameter"));
        }
        v
    }
}

/// Parametric exchange through the tunable coupler. The exchange rate is
/// g_eff = k·A·|sin(π Φ_dc)| with flux amplitude A, peaking when the drive
/// frequency matches |ω_01,1 − ω_01,2| plus a static shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplerParams {
    /// DC operating point (Φ0).
    pub dc_flux: f64,
    /// Flux amplitude (Φ0) produced by a full-scale drive sample.
    pub flux_per_full_scale: f64,
    /// k in g_eff = k·A·|sin(π Φ_dc)| (rad/s per Φ0).
    pub exchange_coefficient: f64,
    /// Offset (Hz) of the exchange resonance from |f_01,1 − f_01,2|.
    pub resonance_shift_hz: f64,
}

/// Full-swap time of the default coupler operating point.
pub const DEFAULT_SWAP_TIME: f64 = 300e-9;

impl Default for CouplerParams {
    fn default() -> Self {
        let (dc, amp) = (0.26, 0.21);
        let g_peak = PI / (2.0 * DEFAULT_SWAP_TIME);
        Self {
            dc_flux: dc,
            flux_per_full_scale: 2.0 * amp,
            exchange_coefficient: g_peak / (amp * (PI * dc).sin().abs()),
            resonance_shift_hz: 4.5e6,
        }
    }
}

impl CouplerParams {
    /// Exchange rate g_eff (rad/s) for a drive of `amplitude` full scale.
    pub fn exchange_rate(&self, amplitude: f64) -> f64 {
        self.exchange_coefficient * amplitude * self.flux_per_full_scale * (PI * self.dc_flux).sin().abs()
    }

    /// Drive frequency (Hz) of the exchange resonance between two qubits.
    pub fn resonance_hz(&self, q1: &QubitParams, q2: &QubitParams) -> f64 {
        (q1.omega_01 - q2.omega_01).abs() / TAU + self.resonance_shift_hz
    }

    /// Detuning δ (rad/s) in the rotating frame of the exchange: the
    /// {|01⟩,|10⟩} splitting seen by the drive, halved.
    pub fn exchange_detuning(&self, drive_hz: f64, q1: &QubitParams, q2: &QubitParams) -> f64 {
        PI * (drive_hz - self.resonance_hz(q1, q2))
    }
}

/// The full simulated device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceParams {
    pub qubits: Vec<QubitParams>,
    #[serde(default)]
    pub coupler: Option<CouplerParams>,
    /// Standard deviation of the additive noise per quadrature per sample,
    /// in full-scale units at the ADC input.
    pub noise_sigma: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self::two_qubit()
    }
}

impl DeviceParams {
    /// Both qubits on one multiplexed feedline, joined by the coupler.
    pub fn two_qubit() -> Self {
        Self {
            qubits: vec![QubitParams::qubit1(), QubitParams::qubit2()],
            coupler: Some(CouplerParams::default()),
            noise_sigma: 0.0,
        }
    }

    /// Qubit 2 alone, as used for readout, reset and benchmarking.
    pub fn single(q: QubitParams) -> Self {
        Self { qubits: vec![q], coupler: None, noise_sigma: 0.0 }
    }

    pub fn check(&self) -> Vec<String> {
        let mut v: Vec<String> = self.qubits.iter().enumerate().flat_map(|(i, q)| q.check(i)).collect();
        if self.qubits.is_empty() {
            v.push("device has no qubits".into());
        }
        let dim: usize = self.qubits.iter().map(|q| q.levels).product();
        if dim > 9 {
            v.push(format!("joint register dimension {dim} exceeds 9"));
        }
        if !(self.noise_sigma >= 0.0) {
            v.push("noise_sigma must be non-negative".into());
        }
        if let Some(c) = &self.coupler {
            if self.qubits.len() != 2 {
                v.push("coupler requires exactly two qubits".into());
            }
            if !(c.exchange_coefficient >= 0.0) || !c.flux_per_full_scale.is_finite() {
                v.push("coupler parameters must be finite and non-negative".into());
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.check();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(v.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults() {
        let q = QubitParams::qubit2();
        assert!((q.omega_r / TAU - 6.03e9).abs() < 1.0);
        assert!((q.chi / q.kappa + 0.66).abs() < 0.01);
        let q1 = QubitParams::qubit1();
        assert!((q1.chi / q1.kappa + 0.25).abs() < 0.01);
        assert!(DeviceParams::default().check().is_empty());
    }

    #[test]
    fn pi_amplitude_round_trip() {
        let q = QubitParams::qubit2();
        assert!((q.sin2_amplitude_for(PI) - DEFAULT_PI_AMPLITUDE).abs() < 1e-12);
    }

    #[test]
    fn coupler_default_swap() {
        let c = CouplerParams::default();
        let g = c.exchange_rate(0.5);
        assert!((PI / (2.0 * g) - 300e-9).abs() < 1e-15);
        let (q1, q2) = (QubitParams::qubit1(), QubitParams::qubit2());
        assert!((c.resonance_hz(&q1, &q2) - 534.5e6).abs() < 1.0);
    }

    #[test]
    fn rates_balance() {
        let q = QubitParams::qubit2();
        let (down, up) = q.transition_rates(0);
        assert!((down + up - 1.0 / q.t1).abs() < 1e-9);
        assert!((up / (up + down) - 0.058).abs() < 1e-12);
        let p = q.thermal_populations();
        assert!((p[1] - 0.058).abs() < 1e-12);
    }

    #[test]
    fn infinite_lifetime_json() {
        let mut q = QubitParams::qubit2();
        q.t1 = f64::INFINITY;
        let s = serde_json::to_string(&q).unwrap();
        let back: QubitParams = serde_json::from_str(&s).unwrap();
        assert!(back.t1.is_infinite());
        assert_eq!(back.gamma_phi(), 1.0 / q.t2_echo);
    }
}
