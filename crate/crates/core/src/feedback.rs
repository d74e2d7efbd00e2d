//! Threshold comparisons, the Boolean mask operator, and the round-trip
//! latency model.

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::acquisition::{pair_threshold, MatchUnit, MATCH_UNITS};
use crate::siggen::Template;
use crate::{Error, Result};

pub const PAIRS: usize = MATCH_UNITS / 2;
pub const MASK_BITS: usize = 8;
pub const MAX_OPERATOR_INPUTS: usize = 8;
pub const DEFAULT_ROUND_TRIP_NS: u32 = 250;
pub const ROUND_TRIP_RANGE_NS: (u32, u32) = (184, 254);

/// 256-entry truth table, serialized as 64 hex digits (entry 0 in the least
/// significant bit of the last byte).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TruthTable(pub [u8; 32]);

impl TruthTable {
    pub fn from_fn(mut f: impl FnMut(usize) -> bool) -> Self {
        let mut t = [0u8; 32];
        for idx in 0..256 {
            if f(idx) {
                t[31 - idx / 8] |= 1 << (idx % 8);
            }
        }
        Self(t)
    }

    pub fn get(&self, idx: usize) -> bool {
        self.0[31 - (idx & 0xff) / 8] >> (idx % 8) & 1 == 1
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        if s.len() != 64 || !s.is_ascii() {
            return Err(Error::InvalidArgument("truth table must be 64 hex digits".into()));
        }
        let mut t = [0u8; 32];
        for (i, b) in t.iter_mut().enumerate() {
            *b = u8::from_str_radix(&s[2 * i..2 * i + 2], 16)
                .map_err(|e| Error::InvalidArgument(format!("truth table: {e}")))?;
        }
        Ok(Self(t))
    }
}

impl Serialize for TruthTable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for TruthTable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        TruthTable::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// One mask bit: selected comparison bits (input k is the k-th index bit of
/// the truth table) and the table itself.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskBitLogic {
    pub inputs: Vec<usize>,
    pub table: TruthTable,
}

impl MaskBitLogic {
    /// Mask bit equal to comparison bit `pair`.
    pub fn copy_of(pair: usize) -> Self {
        Self { inputs: vec![pair], table: TruthTable::from_fn(|i| i & 1 == 1) }
    }

    /// Mask bit equal to the negation of comparison bit `pair`.
    pub fn not_of(pair: usize) -> Self {
        Self { inputs: vec![pair], table: TruthTable::from_fn(|i| i & 1 == 0) }
    }

    pub fn eval(&self, comparisons: u64) -> bool {
        let idx = self
            .inputs
            .iter()
            .enumerate()
            .fold(0usize, |acc, (k, &p)| acc | (((comparisons >> p) & 1) as usize) << k);
        self.table.get(idx)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BooleanOperator {
    pub bits: [MaskBitLogic; MASK_BITS],
}

impl BooleanOperator {
    pub fn mask(&self, comparisons: u64) -> u8 {
        self.bits
            .iter()
            .enumerate()
            .fold(0u8, |m, (k, b)| m | (b.eval(comparisons) as u8) << k)
    }

    pub fn check(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (k, b) in self.bits.iter().enumerate() {
            if b.inputs.len() > MAX_OPERATOR_INPUTS {
                v.push(format!("mask bit {k}: more than 8 operator inputs"));
            }
            if let Some(p) = b.inputs.iter().find(|&&p| p >= PAIRS) {
                v.push(format!("mask bit {k}: comparison input {p} out of range"));
            }
        }
        v
    }
}

/// Comparison bits for all 64 pairs: bit i set iff m[2i] + m[2i+1] ≥ θ_i.
pub fn comparison_bits(match_values: &[i64; MATCH_UNITS], thresholds: &[i64]) -> u64 {
    (0..PAIRS).fold(0u64, |bits, i| {
        let theta = thresholds.get(i).copied().unwrap_or(0);
        bits | ((match_values[2 * i] + match_values[2 * i + 1] >= theta) as u64) << i
    })
}

pub fn evaluate_mask(match_values: &[i64; MATCH_UNITS], thresholds: &[i64], op: &BooleanOperator) -> u8 {
    op.mask(comparison_bits(match_values, thresholds))
}

/// Round-trip latency from the end of a match window to the earliest
/// conditional output. The output/input split is bookkeeping only: both
/// ends share one timeline, so only the sum affects results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyModel {
    pub round_trip_ns: u32,
    #[serde(default = "half")]
    pub output_fraction: f64,
    /// Permits values outside the hardware range for what-if studies.
    #[serde(default)]
    pub allow_out_of_range: bool,
}

fn half() -> f64 {
    0.5
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self { round_trip_ns: DEFAULT_ROUND_TRIP_NS, output_fraction: 0.5, allow_out_of_range: false }
    }
}

impl LatencyModel {
    pub fn new(round_trip_ns: u32) -> Self {
        Self { round_trip_ns, ..Default::default() }
    }

    pub fn what_if(round_trip_ns: u32) -> Self {
        Self { round_trip_ns, allow_out_of_range: true, ..Default::default() }
    }

    /// Latency rounded up to whole ticks.
    pub fn ticks(&self) -> u64 {
        (self.round_trip_ns as u64).div_ceil(crate::SAMPLES_PER_TICK)
    }

    pub fn check(&self) -> Vec<String> {
        let mut v = Vec::new();
        let (lo, hi) = ROUND_TRIP_RANGE_NS;
        if !self.allow_out_of_range && !(lo..=hi).contains(&self.round_trip_ns) {
            v.push(format!("round-trip latency {} ns outside [{lo}, {hi}] ns", self.round_trip_ns));
        }
        if !(0.0..=1.0).contains(&self.output_fraction) {
            v.push("latency output fraction must lie in [0, 1]".into());
        }
        v
    }
}

/// Complete feedback configuration carried in a schedule document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackConfig {
    /// Match units by id; unused units are `null` and contribute 0.
    #[serde(default)]
    pub units: Vec<Option<MatchUnit>>,
    #[serde(default)]
    pub thresholds: Vec<i64>,
    #[serde(default)]
    pub operator: BooleanOperator,
    #[serde(default)]
    pub latency: LatencyModel,
}

impl FeedbackConfig {
    pub fn unit(&self, id: usize) -> Option<&MatchUnit> {
        self.units.get(id).and_then(Option::as_ref)
    }

    pub fn set_unit(&mut self, id: usize, unit: MatchUnit) {
        if self.units.len() <= id {
            self.units.resize(id + 1, None);
        }
        self.units[id] = Some(unit);
    }

    pub fn set_threshold(&mut self, pair: usize, theta: i64) {
        if self.thresholds.len() <= pair {
            self.thresholds.resize(pair + 1, 0);
        }
        self.thresholds[pair] = theta;
    }

    pub fn check(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.units.len() > MATCH_UNITS {
            v.push(format!("{} match units configured, at most 128", self.units.len()));
        }
        if self.thresholds.len() > PAIRS {
            v.push(format!("{} thresholds configured, at most 64", self.thresholds.len()));
        }
        v.extend(self.operator.check());
        v.extend(self.latency.check());
        v
    }

    /// Binds pair `pair` on `input_port` to discriminate e from g: units
    /// (τ_e, −τ_g), θ_eg, and mask bit `mask_bit` equal to (or, if `invert`,
    /// the negation of) the comparison.
    pub fn program_qubit_reset(
        &mut self,
        pair: usize,
        input_port: usize,
        tau_g: &Template,
        tau_e: &Template,
        mask_bit: usize,
        invert: bool,
    ) -> Result<()> {
        check_separated(tau_g.samples(), tau_e.samples())?;
        self.set_unit(2 * pair, MatchUnit { input_port, template: tau_e.clone() });
        self.set_unit(2 * pair + 1, MatchUnit { input_port, template: tau_g.negated() });
        self.set_threshold(pair, pair_threshold(tau_e.samples(), tau_g.samples()));
        self.operator.bits[mask_bit] = if invert { MaskBitLogic::not_of(pair) } else { MaskBitLogic::copy_of(pair) };
        Ok(())
    }
}

fn check_separated(a: &[Complex64], b: &[Complex64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.iter().zip(b).all(|(x, y)| x == y) {
        return Err(Error::InvalidArgument("reference templates have zero separation".into()));
    }
    Ok(())
}

/// Mask-bit assignment produced by [`qutrit_reset_config`].
pub const QUTRIT_BIT_PI_EG: usize = 0;
pub const QUTRIT_BIT_PI_FG: usize = 1;

/// Programs three pairs on `input_port` starting at `first_pair`:
/// (τ_e, −τ_g), (τ_f, −τ_e), (τ_g, −τ_f) with thresholds θ_eg, θ_fe, θ_gf.
/// Mask bit 0 (π_eg) = R_eg ∧ ¬R_fe; bit 1 (π_fg) = R_fe ∧ ¬R_gf.
pub fn qutrit_reset_config(
    cfg: &mut FeedbackConfig,
    first_pair: usize,
    input_port: usize,
    tau_g: &Template,
    tau_e: &Template,
    tau_f: &Template,
) -> Result<()> {
    let (g, e, f) = (tau_g.samples(), tau_e.samples(), tau_f.samples());
    check_separated(g, e)?;
    check_separated(e, f)?;
    check_separated(f, g)?;
    let pairs = [(tau_e, tau_g), (tau_f, tau_e), (tau_g, tau_f)];
    for (k, (i, j)) in pairs.iter().enumerate() {
        let p = first_pair + k;
        cfg.set_unit(2 * p, MatchUnit { input_port, template: (*i).clone() });
        cfg.set_unit(2 * p + 1, MatchUnit { input_port, template: j.negated() });
        cfg.set_threshold(p, pair_threshold(i.samples(), j.samples()));
    }
    let inputs = vec![first_pair, first_pair + 1, first_pair + 2];
    // Index bit 0 = R_eg, bit 1 = R_fe, bit 2 = R_gf.
    cfg.operator.bits[QUTRIT_BIT_PI_EG] = MaskBitLogic {
        inputs: inputs.clone(),
        table: TruthTable::from_fn(|i| i & 1 == 1 && i & 2 == 0),
    };
    cfg.operator.bits[QUTRIT_BIT_PI_FG] = MaskBitLogic {
        inputs,
        table: TruthTable::from_fn(|i| i & 2 == 2 && i & 4 == 0),
    };
    Ok(())
}
