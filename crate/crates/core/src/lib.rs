//! Emulator of a pulsed-mode RFSoC qubit controller.
//!
//! The instrument side (event sequencer, signal generators, store and
//! template-matching engines, feedback unit) is modelled bit-faithfully on a
//! single 1 GS/s complex baseband stream. The device side simulates dispersive
//! readout resonators, qubits/qutrits with relaxation and dephasing, and a
//! parametrically driven coupler. Experiments close the loop between the two.

pub mod acquisition;
pub mod calibration;
pub mod device;
pub mod dsp;
pub mod error;
pub mod experiments;
pub mod feedback;
pub mod rng;
pub mod sequencer;
pub mod siggen;

pub use error::{Error, Result};

pub use num_complex::Complex64;

/// Baseband sample rate of the FPGA data stream (samples per second).
pub const SAMPLE_RATE: f64 = 1.0e9;
/// Duration of one baseband sample in seconds.
pub const SAMPLE_PERIOD: f64 = 1.0 / SAMPLE_RATE;
/// Baseband samples per sequencer tick (2 ns grid at 1 GS/s).
pub const SAMPLES_PER_TICK: u64 = 2;
