//! Per-port output synthesis.
//!
//! Each output port owns 16 templates split into two groups of 8. Every group
//! has a carrier generator and a signed 17-bit scaler. Group outputs are summed,
//! saturated, truncated to 14 bits, and handed to the port NCO, whose frequency
//! is carried symbolically as the port's RF frame.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{quantize_trace, CarrierConfig, ComplexTrace, NcoConfig, QuantSpec, DAC_RATE};
use crate::{Error, Result, SAMPLES_PER_TICK};

/// Maximum template length in samples (1022 ns at 1 GS/s).
pub const MAX_TEMPLATE_SAMPLES: usize = 1022;
pub const TEMPLATES_PER_GROUP: usize = 8;
pub const TEMPLATES_PER_PORT: usize = 16;
pub const LUT_ENTRIES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateMode {
    /// Output directly, bypassing the carrier generator.
    #[default]
    Raw,
    /// Multiplied by the group carrier before scaling.
    Envelope,
}

#[derive(Serialize, Deserialize)]
struct TemplateDoc {
    samples: ComplexTrace,
    #[serde(default)]
    mode: TemplateMode,
}

/// A stored waveform, quantized to 16 bits on upload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TemplateDoc")]
pub struct Template {
    samples: ComplexTrace,
    mode: TemplateMode,
}

impl TryFrom<TemplateDoc> for Template {
    type Error = Error;
    fn try_from(doc: TemplateDoc) -> Result<Self> {
        Template::new(&doc.samples, doc.mode)
    }
}

impl Template {
    /// Uploads `samples`, quantizing to the 16-bit grid. Out-of-range values
    /// saturate.
    pub fn new(samples: &[Complex64], mode: TemplateMode) -> Result<Self> {
        if samples.len() > MAX_TEMPLATE_SAMPLES {
            return Err(Error::Capacity(format!(
                "template of {} samples exceeds {MAX_TEMPLATE_SAMPLES}",
                samples.len()
            )));
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("template contains non-finite samples".into()));
        }
        Ok(Self {
            samples: quantize_trace(samples, QuantSpec::TEMPLATE).trace,
            mode,
        })
    }

    pub fn raw(samples: &[Complex64]) -> Result<Self> {
        Self::new(samples, TemplateMode::Raw)
    }

    pub fn envelope(samples: &[Complex64]) -> Result<Self> {
        Self::new(samples, TemplateMode::Envelope)
    }

    pub fn samples(&self) -> &ComplexTrace {
        &self.samples
    }

    pub fn mode(&self) -> TemplateMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Length rounded up to whole sequencer ticks.
    pub fn ticks(&self) -> u64 {
        (self.samples.len() as u64).div_ceil(SAMPLES_PER_TICK)
    }

    pub fn negated(&self) -> Self {
        let neg: Vec<Complex64> = self.samples.iter().map(|z| -z).collect();
        Self::new(&neg, self.mode).expect("negation keeps length")
    }

    /// Returns a copy delayed by a fraction of a sample (or more), computed
    /// by a linear-phase shift on the zero-padded DFT of the waveform.
    pub fn delayed(&self, delay_samples: f64) -> Result<Self> {
        let n = self.samples.len();
        if n == 0 {
            return Ok(self.clone());
        }
        let shifted = fractional_delay(&self.samples, delay_samples, n);
        Self::new(&shifted, self.mode)
    }
}

/// Delays `x` by `delay` samples through the DFT of its zero-padded copy,
/// returning the first `out_len` samples.
pub fn fractional_delay(x: &[Complex64], delay: f64, out_len: usize) -> Vec<Complex64> {
    let n = (2 * x.len().max(out_len)).max(2);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for (k, bin) in spectrum.iter_mut().enumerate() {
        *bin = x
            .iter()
            .enumerate()
            .map(|(t, v)| v * Complex64::from_polar(1.0, -TAU * (k * t) as f64 / n as f64))
            .sum();
        // Signed bin frequency keeps the shift band-limited and real-symmetric.
        let kf = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        *bin *= Complex64::from_polar(1.0, -TAU * kf * delay / n as f64);
    }
    (0..out_len)
        .map(|t| {
            spectrum
                .iter()
                .enumerate()
                .map(|(k, b)| b * Complex64::from_polar(1.0, TAU * (k * t) as f64 / n as f64))
                .sum::<Complex64>()
                / n as f64
        })
        .collect()
}

/// Quantizes a gain onto the signed 17-bit scaler grid.
pub fn scale_value(x: f64) -> f64 {
    QuantSpec::SCALER.quantize(x).0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    #[serde(default)]
    pub templates: Vec<Template>,
    #[serde(default)]
    pub carrier_lut: Vec<CarrierConfig>,
    /// Gains in [-1, 1) on the 2^-16 grid. An empty table means unity gain.
    #[serde(default)]
    pub scale_lut: Vec<f64>,
}

/// What an output port is physically connected to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OutputTarget {
    #[default]
    None,
    /// Feedline driving the readout resonators on line `line`.
    Readout { line: usize },
    /// Charge drive of qubit `qubit`.
    Control { qubit: usize },
    /// Flux drive of the tunable coupler.
    Coupler,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortConfig {
    pub groups: [GroupConfig; 2],
    #[serde(default)]
    pub nco: NcoConfig,
    /// Symbolic RF frequency that baseband DC maps to, before the NCO shift.
    #[serde(default)]
    pub rf_center_hz: f64,
    #[serde(default)]
    pub target: OutputTarget,
}

impl PortConfig {
    pub fn new(target: OutputTarget, rf_center_hz: f64) -> Self {
        Self {
            target,
            rf_center_hz,
            ..Default::default()
        }
    }

    /// RF frequency represented by baseband DC at this port.
    pub fn rf_frame_hz(&self) -> f64 {
        self.rf_center_hz + self.nco.frequency(DAC_RATE)
    }

    pub fn template(&self, template_id: usize) -> Option<&Template> {
        self.groups
            .get(template_id / TEMPLATES_PER_GROUP)?
            .templates
            .get(template_id % TEMPLATES_PER_GROUP)
    }

    /// Stores `t` in the first free slot of `group`, returning its port-wide id.
    pub fn add_template(&mut self, group: usize, t: Template) -> Result<usize> {
        let g = &mut self.groups[group];
        if g.templates.len() >= TEMPLATES_PER_GROUP {
            return Err(Error::Capacity(format!("group {group} already holds 8 templates")));
        }
        g.templates.push(t);
        Ok(group * TEMPLATES_PER_GROUP + g.templates.len() - 1)
    }

    pub fn check(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (gi, g) in self.groups.iter().enumerate() {
            if g.templates.len() > TEMPLATES_PER_GROUP {
                v.push(format!("group {gi}: more than 8 templates"));
            }
            if g.carrier_lut.len() > LUT_ENTRIES {
                v.push(format!("group {gi}: carrier table exceeds 512 entries"));
            }
            if g.scale_lut.len() > LUT_ENTRIES {
                v.push(format!("group {gi}: scale table exceeds 512 entries"));
            }
            for &s in &g.scale_lut {
                if !(-1.0..1.0).contains(&s) || scale_value(s) != s {
                    v.push(format!("group {gi}: scale {s} not on the 17-bit grid"));
                }
            }
        }
        v
    }
}

/// One template playback on a port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveOutput {
    pub tick: u64,
    pub template_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamChange {
    Carrier(usize),
    Scale(usize),
}

/// A carrier or scale update taking effect at `tick`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamUpdate {
    pub tick: u64,
    pub group: usize,
    pub change: ParamChange,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    /// First sample index (in samples from tick 0) of `output`.
    pub start_sample: u64,
    /// Summed group outputs before saturation and DAC truncation.
    pub pre_dac: ComplexTrace,
    /// 14-bit DAC samples after the NCO phase offset.
    pub output: ComplexTrace,
    pub saturated: bool,
}

#[derive(Debug, Clone)]
struct GroupState {
    carrier: CarrierConfig,
    /// Accumulator offset keeping the carrier phase continuous across
    /// frequency changes: acc(n) = fw·n + offset (mod 2^40).
    offset: u64,
    scale: f64,
}

/// Stateful renderer for one port; carrier accumulators run freely from
/// sample 0 and stay phase-continuous across updates.
#[derive(Debug, Clone)]
pub struct PortRenderer<'a> {
    port: &'a PortConfig,
    groups: [GroupState; 2],
}

const CARRIER_MASK: u64 = (1 << crate::dsp::CARRIER_BITS) - 1;

impl<'a> PortRenderer<'a> {
    pub fn new(port: &'a PortConfig) -> Self {
        let init = |g: &GroupConfig| GroupState {
            carrier: g.carrier_lut.first().copied().unwrap_or_default().masked(),
            offset: 0,
            scale: g.scale_lut.first().copied().unwrap_or(1.0),
        };
        Self {
            groups: [init(&port.groups[0]), init(&port.groups[1])],
            port,
        }
    }

    pub fn port(&self) -> &PortConfig {
        self.port
    }

    /// Current carrier frequency (Hz) of `group`.
    pub fn carrier_frequency(&self, group: usize) -> f64 {
        self.groups[group].carrier.frequency()
    }

    pub fn apply(&mut self, update: ParamUpdate) -> Result<()> {
        let cfg = self
            .port
            .groups
            .get(update.group)
            .ok_or_else(|| Error::InvalidArgument(format!("group {} out of range", update.group)))?;
        let st = &mut self.groups[update.group];
        match update.change {
            ParamChange::Carrier(i) => {
                let new = *cfg
                    .carrier_lut
                    .get(i)
                    .ok_or_else(|| Error::InvalidArgument(format!("carrier index {i} out of table")))?;
                let n = update.tick * SAMPLES_PER_TICK;
                let delta = st.carrier.frequency_word.wrapping_sub(new.frequency_word);
                st.offset = st.offset.wrapping_add(delta.wrapping_mul(n)) & CARRIER_MASK;
                st.carrier = new.masked();
            }
            ParamChange::Scale(i) => {
                st.scale = *cfg
                    .scale_lut
                    .get(i)
                    .ok_or_else(|| Error::InvalidArgument(format!("scale index {i} out of table")))?;
            }
        }
        Ok(())
    }

    fn carrier_sample(&self, group: usize, n: u64) -> Complex64 {
        let st = &self.groups[group];
        let acc = st.carrier.frequency_word.wrapping_mul(n).wrapping_add(st.offset) & CARRIER_MASK;
        st.carrier.sample(acc)
    }

    /// Renders samples `[start, end)` (in samples from tick 0). Updates must
    /// be time-ordered and not precede previously rendered spans.
    pub fn render(
        &mut self,
        outputs: &[ActiveOutput],
        updates: &[ParamUpdate],
        start: u64,
        end: u64,
    ) -> Result<Rendered> {
        let len = end.saturating_sub(start) as usize;
        for o in outputs {
            if self.port.template(o.template_id).is_none() {
                return Err(Error::InvalidArgument(format!("template {} not loaded", o.template_id)));
            }
        }
        let mut pre = vec![Complex64::new(0.0, 0.0); len];
        let mut pending = updates.iter().peekable();
        for (k, slot) in pre.iter_mut().enumerate() {
            let n = start + k as u64;
            while let Some(u) = pending.peek() {
                if u.tick * SAMPLES_PER_TICK <= n {
                    self.apply(*pending.next().unwrap())?;
                } else {
                    break;
                }
            }
            let mut group_sum = [Complex64::new(0.0, 0.0); 2];
            for o in outputs {
                let t0 = o.tick * SAMPLES_PER_TICK;
                if n < t0 {
                    continue;
                }
                let tpl = self.port.template(o.template_id).unwrap();
                let idx = (n - t0) as usize;
                if idx >= tpl.len() {
                    continue;
                }
                let g = o.template_id / TEMPLATES_PER_GROUP;
                let v = tpl.samples()[idx];
                group_sum[g] += match tpl.mode() {
                    crate::siggen::TemplateMode::Raw => v,
                    crate::siggen::TemplateMode::Envelope => v * self.carrier_sample(g, n),
                };
            }
            *slot = group_sum[0] * self.groups[0].scale + group_sum[1] * self.groups[1].scale;
        }
        for u in pending {
            self.apply(*u)?;
        }
        let q = quantize_trace(&pre, QuantSpec::DAC);
        let rot = Complex64::from_polar(1.0, self.port.nco.phase());
        let output = if self.port.nco.phase_word == 0 {
            q.trace
        } else {
            q.trace.iter().map(|z| z * rot).collect::<Vec<_>>().into()
        };
        Ok(Rendered {
            start_sample: start,
            pre_dac: pre.into(),
            output,
            saturated: q.saturated,
        })
    }
}

/// Renders one port over `span` (ticks) from its initial configuration.
pub fn render_port(
    port: &PortConfig,
    outputs: &[ActiveOutput],
    updates: &[ParamUpdate],
    span: std::ops::Range<u64>,
) -> Result<Rendered> {
    for o in outputs {
        let tpl = port
            .template(o.template_id)
            .ok_or_else(|| Error::InvalidArgument(format!("template {} not loaded", o.template_id)))?;
        if o.tick < span.start || o.tick + tpl.ticks() > span.end {
            return Err(Error::InvalidArgument(format!(
                "output at tick {} does not fit in span {:?}",
                o.tick, span
            )));
        }
    }
    let mut r = PortRenderer::new(port);
    let before: Vec<_> = updates.iter().filter(|u| u.tick < span.start).copied().collect();
    for u in before {
        r.apply(u)?;
    }
    let inside: Vec<_> = updates.iter().filter(|u| u.tick >= span.start).copied().collect();
    r.render(outputs, &inside, span.start * SAMPLES_PER_TICK, span.end * SAMPLES_PER_TICK)
}

/// DRAG pulse with a sin² envelope: I = A·sin²(πt/τ), Q = β·(dI/dt)/α.
pub fn drag_pulse(duration_ns: u32, amplitude: f64, anharmonicity: f64, drag_coefficient: f64) -> Result<Template> {
    Template::envelope(&drag_samples(duration_ns, amplitude, anharmonicity, drag_coefficient)?)
}

/// Unquantized DRAG samples, one per nanosecond.
pub fn drag_samples(duration_ns: u32, amplitude: f64, anharmonicity: f64, drag_coefficient: f64) -> Result<Vec<Complex64>> {
    if duration_ns == 0 {
        return Err(Error::InvalidArgument("DRAG pulse duration must be positive".into()));
    }
    if anharmonicity == 0.0 && drag_coefficient != 0.0 {
        return Err(Error::InvalidArgument(
            "DRAG correction requires a nonzero anharmonicity".into(),
        ));
    }
    let tau = duration_ns as f64 * 1e-9;
    Ok((0..duration_ns)
        .map(|k| {
            let t = k as f64 * 1e-9;
            let x = PI * t / tau;
            let i = amplitude * x.sin().powi(2);
            let q = if drag_coefficient == 0.0 {
                0.0
            } else {
                drag_coefficient * amplitude * (PI / tau) * (2.0 * x).sin() / anharmonicity
            };
            Complex64::new(i, q)
        })
        .collect())
}

/// Four-segment piecewise-constant readout pulse, split into tick-aligned raw
/// templates of at most 1022 samples each.
pub fn clear_pulse(segments: [Complex64; 4], segment_duration_ns: u32) -> Result<Vec<Template>> {
    for z in &segments {
        if !(-1.0..1.0).contains(&z.re) || !(-1.0..1.0).contains(&z.im) {
            return Err(Error::InvalidArgument(format!("segment amplitude {z} out of range")));
        }
    }
    let samples: Vec<Complex64> = segments
        .iter()
        .flat_map(|&z| std::iter::repeat_n(z, segment_duration_ns as usize))
        .collect();
    split_into_templates(&samples, TemplateMode::Raw)
}

/// Splits a long waveform into consecutive templates of equal, even length.
pub fn split_into_templates(samples: &[Complex64], mode: TemplateMode) -> Result<Vec<Template>> {
    if samples.is_empty() {
        return Ok(Vec::new());
    }
    let pieces = samples.len().div_ceil(MAX_TEMPLATE_SAMPLES);
    let mut chunk = samples.len().div_ceil(pieces);
    chunk += chunk % 2;
    samples.chunks(chunk).map(|c| Template::new(c, mode)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn port_with(templates: Vec<Template>) -> PortConfig {
        let mut p = PortConfig::default();
        for t in templates {
            p.add_template(0, t).unwrap();
        }
        p
    }

    #[test]
    fn raw_passthrough() {
        let samples: Vec<_> = (0..10).map(|k| c(0.05 * k as f64, -0.03 * k as f64)).collect();
        let t = Template::raw(&samples).unwrap();
        let p = port_with(vec![t.clone()]);
        let r = render_port(&p, &[ActiveOutput { tick: 0, template_id: 0 }], &[], 0..5).unwrap();
        let expect = quantize_trace(t.samples(), QuantSpec::DAC).trace;
        assert_eq!(r.output, expect);
    }

    #[test]
    fn envelope_makes_tone() {
        let t = Template::envelope(&vec![c(0.5, 0.0); 100]).unwrap();
        let mut p = port_with(vec![t]);
        p.groups[0].carrier_lut.push(CarrierConfig::from_frequency(25e6, 0.0));
        let r = render_port(&p, &[ActiveOutput { tick: 0, template_id: 0 }], &[], 0..50).unwrap();
        for (k, z) in r.pre_dac.iter().enumerate() {
            let ph = TAU * 25e6 * k as f64 * 1e-9;
            assert!((z - Complex64::from_polar(0.5, ph)).norm() < 1e-9);
        }
    }

    #[test]
    fn overlapping_sum() {
        let t = Template::raw(&vec![c(0.3, 0.0); 20]).unwrap();
        let p = port_with(vec![t.clone(), t]);
        let r = render_port(
            &p,
            &[
                ActiveOutput { tick: 0, template_id: 0 },
                ActiveOutput { tick: 5, template_id: 1 },
            ],
            &[],
            0..20,
        )
        .unwrap();
        let q = QuantSpec::TEMPLATE.quantize(0.3).0;
        for k in 0..40 {
            let a = if k < 20 { q } else { 0.0 };
            let b = if (10..30).contains(&k) { q } else { 0.0 };
            assert_eq!(r.pre_dac[k].re, a + b);
        }
    }

    #[test]
    fn overflow_saturates_and_flags() {
        let t = Template::raw(&vec![c(0.9, 0.0); 4]).unwrap();
        let p = port_with(vec![t.clone(), t]);
        let outs = [ActiveOutput { tick: 0, template_id: 0 }, ActiveOutput { tick: 0, template_id: 1 }];
        let r = render_port(&p, &outs, &[], 0..2).unwrap();
        assert!(r.saturated);
        assert!(r.output.iter().all(|z| z.re < 1.0));
    }

    #[test]
    fn zero_scale_silences_group() {
        let t = Template::raw(&vec![c(0.4, 0.2); 8]).unwrap();
        let mut p = port_with(vec![t]);
        p.groups[0].scale_lut = vec![0.0];
        let r = render_port(&p, &[ActiveOutput { tick: 0, template_id: 0 }], &[], 0..4).unwrap();
        assert!(r.output.iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn carrier_phase_continuous_across_pause() {
        let t = Template::envelope(&vec![c(0.5, 0.0); 10]).unwrap();
        let mut p = port_with(vec![t]);
        p.groups[0].carrier_lut.push(CarrierConfig::from_frequency(13e6, 0.3));
        let outs = [ActiveOutput { tick: 0, template_id: 0 }, ActiveOutput { tick: 40, template_id: 0 }];
        let r = render_port(&p, &outs, &[], 0..45).unwrap();
        let carrier = p.groups[0].carrier_lut[0];
        for k in 80..90u64 {
            let acc = carrier.frequency_word.wrapping_mul(k) & CARRIER_MASK;
            let expect = carrier.sample(acc) * 0.5;
            assert!((r.pre_dac[k as usize] - expect).norm() < 1e-12);
        }
    }

    #[test]
    fn frequency_change_keeps_phase() {
        let t = Template::envelope(&vec![c(0.5, 0.0); 100]).unwrap();
        let mut p = port_with(vec![t]);
        p.groups[0].carrier_lut = vec![
            CarrierConfig::from_frequency(10e6, 0.0),
            CarrierConfig::from_frequency(30e6, 0.0),
        ];
        let upd = [ParamUpdate { tick: 25, group: 0, change: ParamChange::Carrier(1) }];
        let r = render_port(&p, &[ActiveOutput { tick: 0, template_id: 0 }], &upd, 0..50).unwrap();
        // Sample 50 continues the old phase; the new increment applies from there on.
        let step = |k: usize| (r.pre_dac[k + 1] / r.pre_dac[k]).arg();
        assert!((step(48) - TAU * 10e6 * 1e-9).abs() < 1e-9);
        assert!((step(50) - TAU * 30e6 * 1e-9).abs() < 1e-9);
        assert!((step(49) - TAU * 10e6 * 1e-9).abs() < 1e-9);
    }

    #[test]
    fn raw_equals_envelope_times_carrier() {
        let env: Vec<_> = (0..64).map(|k| c((k as f64 * 0.1).sin() * 0.4, 0.1)).collect();
        let carrier = CarrierConfig::from_frequency(37e6, 0.7);
        let env_t = Template::envelope(&env).unwrap();
        let mut pe = port_with(vec![env_t.clone()]);
        pe.groups[0].carrier_lut.push(carrier);
        let product: Vec<_> = env_t
            .samples()
            .iter()
            .enumerate()
            .map(|(k, e)| e * carrier.sample(carrier.frequency_word.wrapping_mul(k as u64) & CARRIER_MASK))
            .collect();
        let pr = port_with(vec![Template::raw(&product).unwrap()]);
        let a = render_port(&pe, &[ActiveOutput { tick: 0, template_id: 0 }], &[], 0..32).unwrap();
        let b = render_port(&pr, &[ActiveOutput { tick: 0, template_id: 0 }], &[], 0..32).unwrap();
        let half_lsb = QuantSpec::TEMPLATE.step() / 2.0 + 1e-15;
        for (x, y) in a.pre_dac.iter().zip(b.pre_dac.iter()) {
            assert!((x.re - y.re).abs() <= half_lsb && (x.im - y.im).abs() <= half_lsb);
        }
    }

    #[test]
    fn drag_shape() {
        let s = drag_samples(20, 0.5, -2.0 * PI * 231e6, 0.0).unwrap();
        assert!(s.iter().all(|z| z.im == 0.0));
        assert!((s[10].re - 0.5).abs() < 1e-15);
        assert!(s.iter().all(|z| z.re <= 0.5 + 1e-15));
        assert!(drag_samples(20, 0.5, 0.0, 0.3).is_err());
        let s = drag_samples(20, 0.5, -2.0 * PI * 231e6, 0.5).unwrap();
        // Derivative is antisymmetric about the peak.
        assert!((s[5].im + s[15].im).abs() < 1e-12);
        assert!(s[5].im != 0.0);
    }

    #[test]
    fn clear_flat_and_split() {
        let a = c(0.2, -0.1);
        let tpls = clear_pulse([a; 4], 350).unwrap();
        assert_eq!(tpls.len(), 2);
        assert!(tpls.iter().all(|t| t.len() == 700 && t.len() % 2 == 0));
        let q = quantize_trace(&[a], QuantSpec::TEMPLATE).trace[0];
        assert!(tpls.iter().all(|t| t.samples().iter().all(|z| *z == q)));
        let tpls = clear_pulse([a, c(0.4, 0.0), c(0.0, 0.0), c(0.0, 0.0)], 350).unwrap();
        assert!(tpls[1].samples().iter().all(|z| *z == c(0.0, 0.0)));
        assert!(clear_pulse([c(1.2, 0.0); 4], 350).is_err());
    }

    #[test]
    fn template_limits() {
        assert!(Template::raw(&vec![c(0.0, 0.0); 1023]).is_err());
        assert!(Template::raw(&vec![c(0.0, 0.0); 1022]).is_ok());
        let mut p = PortConfig::default();
        for _ in 0..8 {
            p.add_template(1, Template::raw(&[c(0.0, 0.0)]).unwrap()).unwrap();
        }
        assert!(p.add_template(1, Template::raw(&[c(0.0, 0.0)]).unwrap()).is_err());
    }

    #[test]
    fn integer_delay_shifts() {
        let x: Vec<_> = (0..16).map(|k| c(if k == 3 { 0.5 } else { 0.0 }, 0.0)).collect();
        let y = fractional_delay(&x, 2.0, 16);
        assert!((y[5].re - 0.5).abs() < 1e-12);
        assert!(y[3].norm() < 1e-12);
    }

    #[test]
    fn template_json_requantizes() {
        let json = r#"{"samples":[[0.1000001,0.0]],"mode":"envelope"}"#;
        let t: Template = serde_json::from_str(json).unwrap();
        assert_eq!(t.samples()[0].re, QuantSpec::TEMPLATE.quantize(0.1000001).0);
        assert_eq!(t.mode(), TemplateMode::Envelope);
    }
}
