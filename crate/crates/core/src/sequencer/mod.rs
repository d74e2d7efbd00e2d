//! The timed event program: template outputs, carrier and scale updates,
//! store and match windows, conditional outputs, DC-bias steps and markers
//! on a 2 ns grid, repeated with per-repetition parameter sweeps.

mod engine;

use serde::{Deserialize, Serialize};

use crate::acquisition::{MATCH_UNITS, SDRAM_CELLS, STORE_CAPACITY_PAIRS};
use crate::dsp::NcoConfig;
use crate::feedback::{FeedbackConfig, MASK_BITS, PAIRS};
use crate::siggen::{PortConfig, LUT_ENTRIES, TEMPLATES_PER_GROUP, TEMPLATES_PER_PORT};
use crate::{Error, Result, SAMPLES_PER_TICK};

pub use engine::{
    run, run_with, ConditionalRecord, DigitalEvent, MatchRecord, RunOptions, RunResult, ShotRecord, StoredTrace,
};

/// Ticks must stay below 2^48 within one repetition.
pub const TICK_LIMIT: u64 = 1 << 48;
/// Longest match window in ticks (1022 ns).
pub const MAX_MATCH_TICKS: u64 = 511;
pub const DC_CHANNELS: usize = 16;
pub const MARKER_BITS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopMark {
    Begin,
    End,
}

/// Address progression of a store window across repetitions: repetition r
/// writes to `address + (r mod count)·stride_cells`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AddressSweep {
    pub stride_cells: u64,
    pub count: u64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventKind {
    OutputTemplate {
        port: usize,
        template_id: usize,
    },
    /// Selects carrier-table entry (lut_index + r·stride) mod L on repetition r.
    SetCarrier {
        port: usize,
        group: usize,
        lut_index: usize,
        #[serde(default = "one")]
        stride: u64,
    },
    /// Selects scale-table entry (lut_index + r·stride) mod L on repetition r.
    SetScale {
        port: usize,
        group: usize,
        lut_index: usize,
        #[serde(default = "one")]
        stride: u64,
    },
    /// Captures `duration` ticks from input `port` and accumulates them in SDRAM.
    StoreWindow {
        port: usize,
        duration: u64,
        address: u64,
        #[serde(default)]
        sweep: Option<AddressSweep>,
    },
    /// Runs match units 2·pair_id and 2·pair_id+1 over `duration` ticks.
    MatchWindow {
        pair_id: usize,
        duration: u64,
    },
    /// Plays a template only if `mask_bit` of the feedback mask is set.
    ConditionalOutput {
        port: usize,
        template_id: usize,
        mask_bit: usize,
    },
    SetDcBias {
        channel: usize,
        code: i32,
    },
    SetMarker {
        bit: usize,
        level: bool,
    },
    /// Repeats the events between a begin and end marker `count` times with a
    /// period equal to the span between the markers.
    LoopMarker {
        mark: LoopMark,
        #[serde(default = "one")]
        count: u64,
    },
}

impl EventKind {
    /// Parameter changes apply before outputs and windows at the same tick.
    fn priority(&self) -> u8 {
        match self {
            EventKind::SetCarrier { .. }
            | EventKind::SetScale { .. }
            | EventKind::SetDcBias { .. }
            | EventKind::SetMarker { .. } => 0,
            EventKind::LoopMarker { .. } => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub at: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn new(at: u64, kind: EventKind) -> Self {
        Self { at, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSchedule {
    pub events: Vec<Event>,
    pub repeat_count: u64,
    /// Ticks per repetition.
    pub period: u64,
}

impl EventSchedule {
    pub fn new(period: u64, repeat_count: u64) -> Self {
        Self { events: Vec::new(), repeat_count, period }
    }

    pub fn push(&mut self, at: u64, kind: EventKind) {
        self.events.push(Event::new(at, kind));
    }
}

/// An input port digitizing one feedline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPortConfig {
    pub line: usize,
    #[serde(default)]
    pub nco: NcoConfig,
    #[serde(default)]
    pub rf_center_hz: f64,
}

impl InputPortConfig {
    pub fn rf_frame_hz(&self) -> f64 {
        self.rf_center_hz + self.nco.frequency(crate::dsp::DAC_RATE)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentConfig {
    #[serde(default)]
    pub outputs: Vec<PortConfig>,
    #[serde(default)]
    pub inputs: Vec<InputPortConfig>,
    #[serde(default)]
    pub feedback: FeedbackConfig,
}

/// A complete, self-describing program document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Program {
    pub instrument: InstrumentConfig,
    pub schedule: EventSchedule,
}

impl Program {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// All rule violations; empty when the program can run.
    pub fn violations(&self) -> Vec<String> {
        validate(self)
    }

    pub fn validate(&self) -> Result<()> {
        let v = validate(self);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }
}

/// Sorts events by tick, then by kind priority, keeping document order for ties.
pub fn sort_events(events: &mut [Event]) {
    events.sort_by_key(|e| (e.at, e.kind.priority()));
}

/// Unrolls loop markers. Events after a loop shift by the extra iterations.
pub fn expand_loops(events: &[Event]) -> std::result::Result<Vec<Event>, String> {
    let mut sorted = events.to_vec();
    sort_events(&mut sorted);
    let mut out = Vec::with_capacity(sorted.len());
    let mut shift = 0u64;
    let mut i = 0;
    while i < sorted.len() {
        let e = &sorted[i];
        match e.kind {
            EventKind::LoopMarker { mark: LoopMark::Begin, count } => {
                let end = sorted[i + 1..]
                    .iter()
                    .position(|x| matches!(x.kind, EventKind::LoopMarker { .. }))
                    .map(|p| p + i + 1)
                    .ok_or_else(|| format!("loop begin at tick {} has no matching end", e.at))?;
                if let EventKind::LoopMarker { mark: LoopMark::Begin, .. } = sorted[end].kind {
                    return Err(format!("nested loop at tick {} is not supported", sorted[end].at));
                }
                if count == 0 {
                    return Err(format!("loop at tick {} has zero count", e.at));
                }
                let span = sorted[end].at - e.at;
                if span == 0 {
                    return Err(format!("loop at tick {} spans zero ticks", e.at));
                }
                for k in 0..count {
                    for x in &sorted[i + 1..end] {
                        out.push(Event::new(x.at + shift + k * span, x.kind.clone()));
                    }
                }
                shift += (count - 1) * span;
                i = end + 1;
            }
            EventKind::LoopMarker { mark: LoopMark::End, .. } => {
                return Err(format!("loop end at tick {} has no matching begin", e.at));
            }
            _ => {
                out.push(Event::new(e.at + shift, e.kind.clone()));
                i += 1;
            }
        }
    }
    sort_events(&mut out);
    Ok(out)
}

/// Duration of an event's effect in ticks (0 for instantaneous events).
fn event_ticks(p: &Program, kind: &EventKind) -> u64 {
    match kind {
        EventKind::OutputTemplate { port, template_id } | EventKind::ConditionalOutput { port, template_id, .. } => p
            .instrument
            .outputs
            .get(*port)
            .and_then(|o| o.template(*template_id))
            .map_or(0, |t| t.ticks()),
        EventKind::StoreWindow { duration, .. } | EventKind::MatchWindow { duration, .. } => *duration,
        _ => 0,
    }
}

/// Checks every rule and returns all violations.
pub fn validate(p: &Program) -> Vec<String> {
    let mut v = Vec::new();
    let ins = &p.instrument;
    let s = &p.schedule;
    for (i, port) in ins.outputs.iter().enumerate() {
        v.extend(port.check().into_iter().map(|m| format!("output port {i}: {m}")));
    }
    v.extend(ins.feedback.check());
    if s.period == 0 {
        v.push("period must be at least one tick".into());
    }
    if s.period >= TICK_LIMIT {
        v.push("period exceeds the 48-bit tick range".into());
    }
    if s.repeat_count.checked_mul(s.period).is_none() {
        v.push("repeat_count × period exceeds 2^64 ticks".into());
    }
    let events = match expand_loops(&s.events) {
        Ok(e) => e,
        Err(m) => {
            v.push(m);
            s.events.clone()
        }
    };
    let latency = ins.feedback.latency.ticks();
    let mut store_pairs = 0u64;
    let mut last_match: Option<(u64, u64)> = None;
    for e in &events {
        let at = e.at;
        let end = at + event_ticks(p, &e.kind);
        if end > s.period {
            v.push(format!("event at tick {at} ends at tick {end}, beyond the period of {} ticks", s.period));
        }
        let out_port = |port: usize, v: &mut Vec<String>| -> Option<&PortConfig> {
            let r = ins.outputs.get(port);
            if r.is_none() {
                v.push(format!("event at tick {at}: output port {port} does not exist"));
            }
            r
        };
        match &e.kind {
            EventKind::OutputTemplate { port, template_id } | EventKind::ConditionalOutput { port, template_id, .. } => {
                if *template_id >= TEMPLATES_PER_PORT {
                    v.push(format!("event at tick {at}: template id {template_id} out of range (16 per port)"));
                } else if let Some(pc) = out_port(*port, &mut v) {
                    if pc.template(*template_id).is_none() {
                        v.push(format!("event at tick {at}: template {template_id} not loaded on port {port}"));
                    }
                }
                if let EventKind::ConditionalOutput { mask_bit, .. } = e.kind {
                    if mask_bit >= MASK_BITS {
                        v.push(format!("event at tick {at}: mask bit {mask_bit} out of range"));
                    }
                    match last_match {
                        None => v.push(format!("conditional output at tick {at} has no preceding match window")),
                        Some((_, m_end)) if at < m_end + latency => v.push(format!(
                            "conditional output at tick {at} precedes feedback availability; minimum legal tick is {}",
                            m_end + latency
                        )),
                        _ => {}
                    }
                }
            }
            EventKind::SetCarrier { port, group, lut_index, .. } | EventKind::SetScale { port, group, lut_index, .. } => {
                let carrier = matches!(e.kind, EventKind::SetCarrier { .. });
                if *lut_index >= LUT_ENTRIES {
                    v.push(format!("event at tick {at}: lut index {lut_index} out of range (512 entries)"));
                }
                if *group >= 2 {
                    v.push(format!("event at tick {at}: group {group} out of range"));
                } else if let Some(pc) = out_port(*port, &mut v) {
                    let g = &pc.groups[*group];
                    let len = if carrier { g.carrier_lut.len() } else { g.scale_lut.len() };
                    if len == 0 {
                        v.push(format!("event at tick {at}: port {port} group {group} has an empty look-up table"));
                    } else if *lut_index >= len && *lut_index < LUT_ENTRIES {
                        v.push(format!("event at tick {at}: lut index {lut_index} beyond table of {len} entries"));
                    }
                }
            }
            EventKind::StoreWindow { port, duration, address, sweep } => {
                if ins.inputs.get(*port).is_none() {
                    v.push(format!("store window at tick {at}: input port {port} does not exist"));
                }
                if *duration == 0 {
                    v.push(format!("store window at tick {at}: zero duration"));
                }
                let pairs = duration * SAMPLES_PER_TICK;
                store_pairs += pairs;
                if store_pairs > STORE_CAPACITY_PAIRS {
                    v.push(format!(
                        "store window at tick {at} exceeds the buffer capacity of 2^19 IQ pairs ({store_pairs} requested)"
                    ));
                }
                let span = sweep.map_or(0, |s| s.stride_cells.saturating_mul(s.count.saturating_sub(1)));
                if sweep.is_some_and(|s| s.count == 0) {
                    v.push(format!("store window at tick {at}: address sweep count must be positive"));
                }
                if address.saturating_add(span).saturating_add(2 * pairs) > SDRAM_CELLS {
                    v.push(format!("store window at tick {at}: SDRAM address range exceeds 2^29 cells"));
                }
            }
            EventKind::MatchWindow { pair_id, duration } => {
                if *pair_id >= PAIRS {
                    v.push(format!("match window at tick {at}: pair id {pair_id} out of range (64 pairs)"));
                }
                if *duration > MAX_MATCH_TICKS {
                    v.push(format!(
                        "match window at tick {at}: {} ns exceeds the template-matching limit of 1022 ns",
                        duration * SAMPLES_PER_TICK
                    ));
                }
                if *duration == 0 {
                    v.push(format!("match window at tick {at}: zero duration"));
                }
                if *pair_id < PAIRS {
                    let units: Vec<_> = (2 * pair_id..2 * pair_id + 2)
                        .filter_map(|u| ins.feedback.unit(u).map(|m| (u, m)))
                        .collect();
                    if units.is_empty() {
                        v.push(format!("match window at tick {at}: pair {pair_id} has no configured units"));
                    }
                    for (u, m) in units {
                        if m.template.len() as u64 != duration * SAMPLES_PER_TICK {
                            v.push(format!(
                                "match window at tick {at}: unit {u} template has {} samples, window has {}",
                                m.template.len(),
                                duration * SAMPLES_PER_TICK
                            ));
                        }
                        if ins.inputs.get(m.input_port).is_none() {
                            v.push(format!("match unit {u}: input port {} does not exist", m.input_port));
                        }
                    }
                }
                last_match = Some((at, at + duration));
            }
            EventKind::SetDcBias { channel, code } => {
                if *channel >= DC_CHANNELS {
                    v.push(format!("event at tick {at}: DC channel {channel} out of range"));
                }
                if i16::try_from(*code).is_err() {
                    v.push(format!("event at tick {at}: DC code {code} outside 16 bits"));
                }
            }
            EventKind::SetMarker { bit, .. } => {
                if *bit >= MARKER_BITS {
                    v.push(format!("event at tick {at}: marker bit {bit} out of range"));
                }
            }
            EventKind::LoopMarker { .. } => {}
        }
        if at >= TICK_LIMIT {
            v.push(format!("event at tick {at} exceeds the 48-bit tick range"));
        }
    }
    let _ = (MATCH_UNITS, TEMPLATES_PER_GROUP);
    v
}
