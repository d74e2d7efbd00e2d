//! Input-path analysis: the store engine accumulating traces into SDRAM and
//! the template-matching units computing overlap sums in fixed point.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{ComplexTrace, QuantSpec};
use crate::siggen::Template;
use crate::{Error, Result};

/// IQ pairs the high-bandwidth buffer can hold per sequence.
pub const STORE_CAPACITY_PAIRS: u64 = 1 << 19;
/// 32-bit cells available in SDRAM.
pub const SDRAM_CELLS: u64 = 1 << 29;
pub const MATCH_UNITS: usize = 128;
/// Longest match window in samples (511 ticks).
pub const MAX_MATCH_SAMPLES: usize = 1022;
/// Match accumulator width.
pub const MATCH_ACC_BITS: u32 = 48;
const CELL_MAX: i64 = i32::MAX as i64;

/// Maps a sample on the 16-bit grid to its integer code.
#[inline]
pub fn code16(x: f64) -> i64 {
    QuantSpec::TEMPLATE.code(x).0
}

fn codes(trace: &[Complex64]) -> Vec<(i64, i64)> {
    trace.iter().map(|z| (code16(z.re), code16(z.im))).collect()
}

/// Overlap sum Re{Σ conj(τ)·s} in accumulator units (16-bit × 16-bit
/// products summed in a 48-bit signed accumulator).
pub fn match_value(template: &[Complex64], signal: &[Complex64]) -> Result<i64> {
    if template.len() != signal.len() {
        return Err(Error::LengthMismatch { left: template.len(), right: signal.len() });
    }
    let mut acc: i64 = 0;
    for (t, s) in template.iter().zip(signal) {
        acc += code16(t.re) * code16(s.re) + code16(t.im) * code16(s.im);
    }
    debug_assert!(acc.unsigned_abs() < 1 << (MATCH_ACC_BITS - 1));
    Ok(acc)
}

/// ‖τ‖² in accumulator units.
pub fn template_energy(t: &[Complex64]) -> i64 {
    codes(t).iter().map(|(r, i)| r * r + i * i).sum()
}

/// Threshold θ_ij = (‖τ_i‖² − ‖τ_j‖²)/2, rounded toward zero.
pub fn pair_threshold(tau_i: &[Complex64], tau_j: &[Complex64]) -> i64 {
    (template_energy(tau_i) - template_energy(tau_j)) / 2
}

/// One template-matching unit bound to an input port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchUnit {
    pub input_port: usize,
    pub template: Template,
}

impl MatchUnit {
    pub fn evaluate(&self, signal: &[Complex64]) -> Result<i64> {
        match_value(self.template.samples(), signal)
    }
}

/// Contiguous window chosen for template matching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchWindowChoice {
    /// First sample (always tick-aligned, i.e. even).
    pub start: usize,
    pub len: usize,
    /// Σ|τ_e − τ_g| over the window.
    pub separation: f64,
    pub zero_separation: bool,
}

/// Finds the tick-aligned window of at most `max_len` samples maximizing
/// Σ|τ_e(t) − τ_g(t)|.
pub fn select_match_window(tau_g: &[Complex64], tau_e: &[Complex64], max_len: usize) -> Result<MatchWindowChoice> {
    if tau_g.len() != tau_e.len() {
        return Err(Error::LengthMismatch { left: tau_g.len(), right: tau_e.len() });
    }
    if max_len == 0 || max_len > MAX_MATCH_SAMPLES {
        return Err(Error::InvalidArgument(format!("match window length {max_len} outside 1..=1022")));
    }
    let n = tau_g.len();
    let len = (max_len.min(n) / 2) * 2;
    if len == 0 {
        return Err(Error::InvalidArgument("traces shorter than one tick".into()));
    }
    let diff: Vec<f64> = tau_g.iter().zip(tau_e).map(|(g, e)| (e - g).norm()).collect();
    let mut prefix = vec![0.0; n + 1];
    for (k, d) in diff.iter().enumerate() {
        prefix[k + 1] = prefix[k] + d;
    }
    let mut best = (0, prefix[len]);
    for start in (2..=n - len).step_by(2) {
        let d = prefix[start + len] - prefix[start];
        if d > best.1 {
            best = (start, d);
        }
    }
    Ok(MatchWindowChoice {
        start: best.0,
        len,
        separation: best.1,
        zero_separation: best.1 == 0.0,
    })
}

/// Accumulated SDRAM contents. Regions are keyed by their start cell; each
/// IQ pair occupies two cells (I then Q). Sums are kept exactly and clamped
/// to the 32-bit range on read, so the image is independent of the order in
/// which repetitions are accumulated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SdramImage {
    regions: BTreeMap<u64, Region>,
}

#[derive(Debug, Clone, PartialEq)]
struct Region {
    cells: Vec<i64>,
    accumulations: u64,
}

/// Description of one stored region, used for export manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionInfo {
    pub address: u64,
    pub pairs: usize,
    pub accumulations: u64,
    pub saturated: bool,
}

impl SdramImage {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `trace` (on the 16-bit grid) to the cells starting at `address`.
    pub fn store(&mut self, address: u64, trace: &[Complex64]) -> Result<()> {
        self.check_region(address, trace.len())?;
        let region = self.regions.entry(address).or_insert_with(|| Region {
            cells: vec![0; 2 * trace.len()],
            accumulations: 0,
        });
        for (k, z) in trace.iter().enumerate() {
            region.cells[2 * k] += code16(z.re);
            region.cells[2 * k + 1] += code16(z.im);
        }
        region.accumulations += 1;
        Ok(())
    }

    fn check_region(&self, address: u64, pairs: usize) -> Result<()> {
        let end = address + 2 * pairs as u64;
        if end > SDRAM_CELLS {
            return Err(Error::Capacity(format!(
                "store of {pairs} pairs at address {address} exceeds SDRAM capacity"
            )));
        }
        if let Some(r) = self.regions.get(&address) {
            if r.cells.len() != 2 * pairs {
                return Err(Error::InvalidArgument(format!(
                    "store at address {address} with {pairs} pairs conflicts with existing region of {} pairs",
                    r.cells.len() / 2
                )));
            }
            return Ok(());
        }
        let overlaps = self
            .regions
            .range(..end)
            .next_back()
            .is_some_and(|(&a, r)| a + r.cells.len() as u64 > address);
        if overlaps {
            return Err(Error::InvalidArgument(format!("store at address {address} overlaps another region")));
        }
        Ok(())
    }

    /// Merges another image into this one (exact integer addition).
    pub fn merge(&mut self, other: &SdramImage) -> Result<()> {
        for (&addr, r) in &other.regions {
            self.check_region(addr, r.cells.len() / 2)?;
            let dst = self.regions.entry(addr).or_insert_with(|| Region {
                cells: vec![0; r.cells.len()],
                accumulations: 0,
            });
            for (d, s) in dst.cells.iter_mut().zip(&r.cells) {
                *d += s;
            }
            dst.accumulations += r.accumulations;
        }
        Ok(())
    }

    pub fn regions(&self) -> Vec<RegionInfo> {
        self.regions
            .iter()
            .map(|(&address, r)| RegionInfo {
                address,
                pairs: r.cells.len() / 2,
                accumulations: r.accumulations,
                saturated: r.cells.iter().any(|c| c.abs() > CELL_MAX),
            })
            .collect()
    }

    /// 32-bit cell values of a region, saturated at ±(2^31−1), and whether
    /// any cell saturated.
    pub fn cells(&self, address: u64) -> Option<(Vec<i32>, bool)> {
        let r = self.regions.get(&address)?;
        let mut sat = false;
        let cells = r
            .cells
            .iter()
            .map(|&c| {
                if c.abs() > CELL_MAX {
                    sat = true;
                }
                c.clamp(-CELL_MAX, CELL_MAX) as i32
            })
            .collect();
        Some((cells, sat))
    }

    /// Flat little-endian 32-bit export of one region.
    pub fn export_le(&self, address: u64) -> Option<Vec<u8>> {
        let (cells, _) = self.cells(address)?;
        Some(cells.iter().flat_map(|c| c.to_le_bytes()).collect())
    }

    /// Mean trace of a region (accumulated sum / accumulation count).
    pub fn averaged(&self, address: u64) -> Option<ComplexTrace> {
        let r = self.regions.get(&address)?;
        let scale = QuantSpec::TEMPLATE.step() / r.accumulations.max(1) as f64;
        Some(ComplexTrace::from_fn(r.cells.len() / 2, |k| {
            Complex64::new(r.cells[2 * k] as f64 * scale, r.cells[2 * k + 1] as f64 * scale)
        }))
    }

    /// CSV of the averaged trace: `sample,i,q`.
    pub fn averaged_csv(&self, address: u64) -> Option<String> {
        let t = self.averaged(address)?;
        let mut out = String::from("sample,i,q\n");
        for (k, z) in t.iter().enumerate() {
            out.push_str(&format!("{k},{:e},{:e}\n", z.re, z.im));
        }
        Some(out)
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}
