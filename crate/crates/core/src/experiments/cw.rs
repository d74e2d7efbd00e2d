//! Continuous-wave two-tone demonstration of the comb generator and the
//! multifrequency lock-in: two tones are synthesized, quantized by the DAC,
//! summed with white noise, digitized by the ADC and demodulated on a set
//! of comb bins that includes the tones, their intermodulation products and
//! empty neighbours.

use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::Exec;
use crate::dsp::{comb_generate, lockin_demodulate, quantize_trace, QuantSpec, Tone, NCO_FREQ_BITS};
use crate::rng::{keyed, Stream};
use crate::{Result, SAMPLE_RATE};

/// Demodulation window as a power of two, so every bin is an exact
/// frequency word and bins are mutually orthogonal over the window.
pub const WINDOW_LOG2: u32 = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CwConfig {
    /// Bins (multiples of 1 GS/s / 2^14) of the two drive tones.
    pub tone_bins: [u64; 2],
    pub amplitudes: [f64; 2],
    pub phases_rad: [f64; 2],
    /// Noise per quadrature and sample, full scale.
    pub noise_sigma: f64,
}

impl Default for CwConfig {
    fn default() -> Self {
        Self { tone_bins: [200, 280], amplitudes: [0.4, 0.2], phases_rad: [0.0, 1.0], noise_sigma: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LockinReading {
    pub bin: u64,
    pub frequency_hz: f64,
    /// Generated amplitude (zero for bins without a tone), as [re, im].
    pub expected: [f64; 2],
    pub measured: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CwResult {
    pub config: CwConfig,
    pub window: usize,
    pub readings: Vec<LockinReading>,
    pub dac_saturated: bool,
    pub adc_saturated: bool,
}

fn bin_word(bin: u64) -> u64 {
    bin << (NCO_FREQ_BITS - WINDOW_LOG2)
}

fn phase_word(phase: f64) -> u32 {
    let turns = phase.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU;
    ((turns * (1u64 << 18) as f64).round() as u64 % (1 << 18)) as u32
}

pub fn run_cw_demo(cfg: &CwConfig, exec: &Exec) -> Result<CwResult> {
    let window = 1usize << WINDOW_LOG2;
    let tones: Vec<Tone> = (0..2)
        .map(|k| Tone { frequency_word: bin_word(cfg.tone_bins[k]), amplitude: cfg.amplitudes[k], phase_word: phase_word(cfg.phases_rad[k]) })
        .collect();
    let comb = comb_generate(&tones, window)?;
    let dac = quantize_trace(&comb, QuantSpec::DAC);
    let mut rng = keyed(exec.seed, 0, 0, Stream::Synthetic, 0);
    let noisy: Vec<Complex64> = dac
        .trace
        .iter()
        .map(|s| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            s + Complex64::new(re, im) * cfg.noise_sigma
        })
        .collect();
    let adc = quantize_trace(&noisy, QuantSpec::ADC);

    let [a, b] = cfg.tone_bins;
    let mut bins = vec![a, b, a + 1, b + 1, a.saturating_sub(1), b.saturating_sub(1)];
    // Third-order intermodulation products.
    bins.extend([(2 * a).checked_sub(b), (2 * b).checked_sub(a)].into_iter().flatten());
    bins.retain(|&k| k > 0 && k < (window as u64) / 2);
    bins.sort_unstable();
    bins.dedup();
    let readings = bins
        .into_iter()
        .map(|bin| {
            let z = lockin_demodulate(&adc.trace, bin_word(bin), window)?;
            let expected = tones
                .iter()
                .filter(|t| t.frequency_word == bin_word(bin))
                .map(|t| Complex64::from_polar(t.amplitude, std::f64::consts::TAU * t.phase_word as f64 / (1u64 << 18) as f64))
                .sum::<Complex64>();
            Ok(LockinReading {
                bin,
                frequency_hz: bin as f64 * SAMPLE_RATE / window as f64,
                expected: [expected.re, expected.im],
                measured: [z.re, z.im],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CwResult { config: cfg.clone(), window, readings, dac_saturated: dac.saturated, adc_saturated: adc.saturated })
}
