//! Fixed-point direct-digital-synthesis primitives.
//!
//! Phase accumulators are exact modular integers; signal samples are `f64`
//! IQ pairs on the 1 GS/s baseband stream. Quantization is applied only at the
//! documented hardware boundaries.

use std::f64::consts::TAU;
use std::ops::{Deref, DerefMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Width of the converter NCO frequency word.
pub const NCO_FREQ_BITS: u32 = 48;
/// Width of the converter NCO phase word.
pub const NCO_PHASE_BITS: u32 = 18;
/// Width of carrier-generator frequency and phase words.
pub const CARRIER_BITS: u32 = 40;
/// Nominal DAC converter rate used to interpret NCO frequency words.
pub const DAC_RATE: f64 = 10.0e9;
/// Maximum number of tones in a continuous-wave comb.
pub const MAX_COMB_TONES: usize = 192;

const NCO_FREQ_MASK: u64 = (1 << NCO_FREQ_BITS) - 1;
const NCO_PHASE_MASK: u32 = (1 << NCO_PHASE_BITS) - 1;
const CARRIER_MASK: u64 = (1 << CARRIER_BITS) - 1;

/// A sequence of IQ samples at the 1 GS/s baseband rate.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComplexTrace(pub Vec<Complex64>);

impl ComplexTrace {
    pub fn zeros(n: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> Complex64) -> Self {
        Self((0..n).map(f).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self(self.0.iter().map(|z| z * k).collect())
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }
}

impl Deref for ComplexTrace {
    type Target = Vec<Complex64>;
    fn deref(&self) -> &Self::Target {
        &self.0
    }
}

impl DerefMut for ComplexTrace {
    fn deref_mut(&mut self) -> &mut Self::Target {
        &mut self.0
    }
}

impl From<Vec<Complex64>> for ComplexTrace {
    fn from(v: Vec<Complex64>) -> Self {
        Self(v)
    }
}

/// Unit phasor for a phase expressed in turns.
#[inline]
fn phasor_turns(turns: f64) -> Complex64 {
    let (s, c) = (TAU * turns).sin_cos();
    Complex64::new(c, s)
}

/// Converter NCO configuration: 48-bit frequency word, 18-bit phase word.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NcoConfig {
    pub frequency_word: u64,
    pub phase_word: u32,
}

impl NcoConfig {
    pub fn new(frequency_word: u64, phase_word: u32) -> Self {
        Self {
            frequency_word: frequency_word & NCO_FREQ_MASK,
            phase_word: phase_word & NCO_PHASE_MASK,
        }
    }

    /// Nearest frequency word for `freq_hz` at converter rate `rate_hz`.
    /// Negative frequencies wrap modulo 2^48.
    pub fn from_frequency(freq_hz: f64, rate_hz: f64) -> Self {
        let word = (freq_hz / rate_hz * (1u64 << NCO_FREQ_BITS) as f64).round() as i64;
        Self::new(word as u64, 0)
    }

    /// Signed frequency represented by the word at converter rate `rate_hz`.
    pub fn frequency(&self, rate_hz: f64) -> f64 {
        signed_word(self.frequency_word, NCO_FREQ_BITS) as f64 * rate_hz
            / (1u64 << NCO_FREQ_BITS) as f64
    }

    /// Phase offset in radians.
    pub fn phase(&self) -> f64 {
        TAU * self.phase_word as f64 / (1u64 << NCO_PHASE_BITS) as f64
    }

    /// Accumulator value (mod 2^48) at `tick`, including the phase offset.
    pub fn accumulator_at(&self, tick: u64) -> u64 {
        let acc = (self.frequency_word as u128 * tick as u128) as u64 & NCO_FREQ_MASK;
        let offset = (self.phase_word as u64) << (NCO_FREQ_BITS - NCO_PHASE_BITS);
        acc.wrapping_add(offset) & NCO_FREQ_MASK
    }

    pub fn phasor_at(&self, tick: u64) -> Complex64 {
        phasor_turns(self.accumulator_at(tick) as f64 / (1u64 << NCO_FREQ_BITS) as f64)
    }
}

/// Interprets the low `bits` of `word` as a two's-complement integer.
pub fn signed_word(word: u64, bits: u32) -> i64 {
    let shift = 64 - bits;
    ((word << shift) as i64) >> shift
}

/// Incremental 48-bit phase accumulator.
#[derive(Debug, Clone)]
pub struct NcoAccumulator {
    cfg: NcoConfig,
    acc: u64,
}

impl NcoAccumulator {
    pub fn new(cfg: NcoConfig, start_tick: u64) -> Self {
        Self {
            acc: cfg.accumulator_at(start_tick),
            cfg,
        }
    }

    pub fn accumulator(&self) -> u64 {
        self.acc
    }

    pub fn next_phasor(&mut self) -> Complex64 {
        let out = phasor_turns(self.acc as f64 / (1u64 << NCO_FREQ_BITS) as f64);
        self.acc = (self.acc + self.cfg.frequency_word) & NCO_FREQ_MASK;
        out
    }
}

/// Unit phasors of the NCO for `n` consecutive ticks starting at `start_tick`.
pub fn nco_phase_sequence(cfg: NcoConfig, n: usize, start_tick: u64) -> ComplexTrace {
    let mut acc = NcoAccumulator::new(NcoConfig::new(cfg.frequency_word, cfg.phase_word), start_tick);
    ComplexTrace::from_fn(n, |_| acc.next_phasor())
}

/// Carrier-generator configuration: 40-bit frequency word and independent
/// 40-bit phase offsets for the I and Q components.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarrierConfig {
    pub frequency_word: u64,
    pub phase_i_word: u64,
    pub phase_q_word: u64,
}

impl CarrierConfig {
    /// Nearest words for a carrier at `freq_hz` (1 GS/s base) with a common
    /// phase offset `phase_rad` on both quadratures.
    pub fn from_frequency(freq_hz: f64, phase_rad: f64) -> Self {
        let scale = (1u64 << CARRIER_BITS) as f64;
        let fw = ((freq_hz / crate::SAMPLE_RATE * scale).round() as i64) as u64 & CARRIER_MASK;
        let pw = ((phase_rad / TAU * scale).round() as i64) as u64 & CARRIER_MASK;
        Self {
            frequency_word: fw,
            phase_i_word: pw,
            phase_q_word: pw,
        }
    }

    pub fn frequency(&self) -> f64 {
        signed_word(self.frequency_word, CARRIER_BITS) as f64 * crate::SAMPLE_RATE
            / (1u64 << CARRIER_BITS) as f64
    }

    pub fn masked(self) -> Self {
        Self {
            frequency_word: self.frequency_word & CARRIER_MASK,
            phase_i_word: self.phase_i_word & CARRIER_MASK,
            phase_q_word: self.phase_q_word & CARRIER_MASK,
        }
    }

    /// Carrier sample given the (already advanced) 40-bit accumulator value.
    pub fn sample(&self, acc: u64) -> Complex64 {
        let scale = (1u64 << CARRIER_BITS) as f64;
        let ti = (acc.wrapping_add(self.phase_i_word) & CARRIER_MASK) as f64 / scale;
        let tq = (acc.wrapping_add(self.phase_q_word) & CARRIER_MASK) as f64 / scale;
        Complex64::new((TAU * ti).cos(), (TAU * tq).sin())
    }
}

/// Carrier frequency step (Hz) of the 40-bit generator at 1 GS/s.
pub fn carrier_frequency_step() -> f64 {
    crate::SAMPLE_RATE / (1u64 << CARRIER_BITS) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixDirection {
    Up,
    Down,
}

/// Digital IQ mixer: elementwise `signal·lo` (up) or `signal·conj(lo)` (down).
pub fn iq_mix(signal: &[Complex64], lo: &[Complex64], direction: MixDirection) -> Result<ComplexTrace> {
    if signal.len() != lo.len() {
        return Err(Error::LengthMismatch {
            left: signal.len(),
            right: lo.len(),
        });
    }
    Ok(signal
        .iter()
        .zip(lo)
        .map(|(s, l)| match direction {
            MixDirection::Up => s * l,
            MixDirection::Down => s * l.conj(),
        })
        .collect::<Vec<_>>()
        .into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    Nearest,
    /// Truncation toward negative infinity, as at the DAC's 14-bit output.
    Floor,
}

/// Quantizer description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantSpec {
    pub bits: u32,
    pub signed: bool,
    #[serde(default)]
    pub rounding: Rounding,
}

impl QuantSpec {
    pub const TEMPLATE: QuantSpec = QuantSpec { bits: 16, signed: true, rounding: Rounding::Nearest };
    pub const DAC: QuantSpec = QuantSpec { bits: 14, signed: true, rounding: Rounding::Floor };
    pub const ADC: QuantSpec = QuantSpec { bits: 14, signed: true, rounding: Rounding::Nearest };
    pub const SCALER: QuantSpec = QuantSpec { bits: 17, signed: true, rounding: Rounding::Nearest };

    pub fn new(bits: u32, signed: bool, rounding: Rounding) -> Result<Self> {
        if ![14, 16, 17, 32].contains(&bits) {
            return Err(Error::InvalidArgument(format!("unsupported quantizer width {bits}")));
        }
        Ok(Self { bits, signed, rounding })
    }

    pub fn step(&self) -> f64 {
        1.0 / self.inv_step()
    }

    /// 1/step, an exact power of two.
    #[inline]
    fn inv_step(&self) -> f64 {
        let e = if self.signed { self.bits - 1 } else { self.bits };
        f64::from_bits((1023 + e as u64) << 52)
    }

    #[inline]
    fn code_range(&self) -> (i64, i64) {
        if self.signed {
            (-(1i64 << (self.bits - 1)), (1i64 << (self.bits - 1)) - 1)
        } else {
            (0, (1i64 << self.bits) - 1)
        }
    }

    /// Integer code for `x`, saturating; the flag reports saturation.
    #[inline]
    pub fn code(&self, x: f64) -> (i64, bool) {
        let scaled = x * self.inv_step();
        let (lo, hi) = self.code_range();
        if scaled.is_nan() {
            return (0, true);
        }
        // Rounding through an integer cast: f64::round and f64::floor are
        // library calls on baseline x86-64, and this is the innermost loop
        // of every DAC, ADC and match computation.
        let raw = if scaled.abs() < 4.0e18 {
            let t = scaled as i64;
            let frac = scaled - t as f64;
            match self.rounding {
                Rounding::Nearest => t + (frac >= 0.5) as i64 - (frac <= -0.5) as i64,
                Rounding::Floor => t - (frac < 0.0) as i64,
            }
        } else if scaled > 0.0 {
            i64::MAX
        } else {
            i64::MIN
        };
        if raw < lo {
            (lo, true)
        } else if raw > hi {
            (hi, true)
        } else {
            (raw, false)
        }
    }

    #[inline]
    pub fn quantize(&self, x: f64) -> (f64, bool) {
        let (c, sat) = self.code(x);
        (c as f64 * self.step(), sat)
    }
}

/// Result of quantizing a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub trace: ComplexTrace,
    pub saturated: bool,
}

/// Snaps every component of `t` onto the grid of `q`, saturating out-of-range
/// values and reporting whether any saturation occurred.
pub fn quantize_trace(t: &[Complex64], q: QuantSpec) -> Quantized {
    let mut saturated = false;
    let trace = t
        .iter()
        .map(|z| {
            let (re, s1) = q.quantize(z.re);
            let (im, s2) = q.quantize(z.im);
            saturated |= s1 | s2;
            Complex64::new(re, im)
        })
        .collect::<Vec<_>>()
        .into();
    Quantized { trace, saturated }
}

/// One tone of a continuous-wave comb.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    /// 48-bit NCO frequency word relative to the 1 GS/s stream.
    pub frequency_word: u64,
    pub amplitude: f64,
    /// 18-bit phase word.
    pub phase_word: u32,
}

/// Sum of NCO-generated tones with the given amplitude and phase.
pub fn comb_generate(tones: &[Tone], n: usize) -> Result<ComplexTrace> {
    if tones.len() > MAX_COMB_TONES {
        return Err(Error::Capacity(format!(
            "{} tones requested, at most {MAX_COMB_TONES} available",
            tones.len()
        )));
    }
    let total: f64 = tones.iter().map(|t| t.amplitude.abs()).sum();
    if total > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "comb amplitude sum {total} exceeds full scale (clipping)"
        )));
    }
    let mut out = ComplexTrace::zeros(n);
    for tone in tones {
        let mut acc = NcoAccumulator::new(NcoConfig::new(tone.frequency_word, tone.phase_word), 0);
        for s in out.iter_mut() {
            *s += acc.next_phasor() * tone.amplitude;
        }
    }
    Ok(out)
}

/// Lock-in demodulation: mean of `signal·conj(phasor)` over the first
/// `window` samples, with the phasor referenced to tick 0.
pub fn lockin_demodulate(signal: &[Complex64], demod_frequency_word: u64, window: usize) -> Result<Complex64> {
    if window == 0 {
        return Err(Error::InvalidArgument("empty demodulation window".into()));
    }
    if window > signal.len() {
        return Err(Error::LengthMismatch {
            left: window,
            right: signal.len(),
        });
    }
    let mut acc = NcoAccumulator::new(NcoConfig::new(demod_frequency_word, 0), 0);
    let sum: Complex64 = signal[..window].iter().map(|s| s * acc.next_phasor().conj()).sum();
    Ok(sum / window as f64)
}
