//! Execution of a validated program against the device model.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{expand_loops, Event, EventKind, Program};
use crate::acquisition::{match_value, SdramImage};
use crate::device::{Capture, DeviceCache, DeviceParams, DriveSource, ExecutionMode, Frames, Probe, World};
use crate::feedback::PAIRS;
use crate::siggen::{ActiveOutput, OutputTarget, ParamChange, ParamUpdate, PortRenderer, Rendered, TemplateMode, TEMPLATES_PER_GROUP};
use crate::{Error, Result, SAMPLES_PER_TICK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    pub seed: u64,
    pub mode: ExecutionMode,
    /// Worker threads; 0 uses the available parallelism.
    pub threads: usize,
    /// Keep per-repetition records in the result.
    pub keep_shots: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { seed: 0, mode: ExecutionMode::Shots, threads: 1, keep_shots: true }
    }
}

impl RunOptions {
    pub fn shots(seed: u64) -> Self {
        Self { seed, ..Default::default() }
    }

    pub fn ensemble(seed: u64) -> Self {
        Self { seed, mode: ExecutionMode::Ensemble, ..Default::default() }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub tick: u64,
    pub pair: usize,
    /// Results of units 2·pair and 2·pair+1.
    pub values: [i64; 2],
    pub comparison: bool,
}

impl MatchRecord {
    /// ⟨s,τ_2i⟩ + ⟨s,τ_2i+1⟩, the quantity compared with the threshold.
    pub fn sum(&self) -> i64 {
        self.values[0] + self.values[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalRecord {
    pub tick: u64,
    pub port: usize,
    pub template_id: usize,
    pub mask_bit: usize,
    pub fired: bool,
}

/// Results of one repetition.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ShotRecord {
    pub repetition: u64,
    pub matches: Vec<MatchRecord>,
    pub conditionals: Vec<ConditionalRecord>,
    /// SDRAM addresses written by store windows.
    pub stores: Vec<u64>,
    /// Readout populations (ensemble) or sampled outcomes (shots).
    pub probes: Vec<Probe>,
}

/// A store window's captured samples, handed to run visitors.
#[derive(Debug, Clone, PartialEq)]
pub struct StoredTrace {
    pub tick: u64,
    pub port: usize,
    pub address: u64,
    pub samples: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DigitalEvent {
    DcBias { tick: u64, channel: usize, code: i32 },
    Marker { tick: u64, bit: usize, level: bool },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunResult {
    pub repetitions: u64,
    pub shots: Vec<ShotRecord>,
    pub sdram: SdramImage,
    pub dac_saturated: bool,
    pub adc_saturated: bool,
    /// DC-bias and marker changes of the first repetition.
    pub digital_log: Vec<DigitalEvent>,
}

struct Ctx<'a> {
    program: &'a Program,
    device: &'a DeviceParams,
    frames: Frames,
    events: Vec<Event>,
    latency_ticks: u64,
    opts: RunOptions,
}

/// Runs `program` and returns the collected results.
pub fn run(program: &Program, device: &DeviceParams, opts: RunOptions) -> Result<RunResult> {
    Ok(run_with(program, device, opts, || (), |_, _, _| {})?.0)
}

/// Runs `program`, additionally folding every repetition into per-worker
/// states. Repetitions are split into contiguous chunks, one per worker; the
/// states are returned in chunk order, so folds must merge exactly (for
/// example integer sums) for results to be independent of the thread count.
pub fn run_with<S, I, V>(
    program: &Program,
    device: &DeviceParams,
    opts: RunOptions,
    init: I,
    visit: V,
) -> Result<(RunResult, Vec<S>)>
where
    S: Send,
    I: Fn() -> S + Sync,
    V: Fn(&mut S, &ShotRecord, &[StoredTrace]) + Sync,
{
    program.validate()?;
    device.validate()?;
    let events = expand_loops(&program.schedule.events).map_err(|m| Error::Validation(vec![m]))?;
    let ctx = Ctx {
        program,
        device,
        frames: frames_for(program, device),
        events,
        latency_ticks: program.instrument.feedback.latency.ticks(),
        opts,
    };
    let reps = program.schedule.repeat_count;
    let threads = match opts.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        t => t,
    };
    let chunks = (threads as u64).min(reps).max(1);
    let bounds: Vec<(u64, u64)> = (0..chunks).map(|c| (reps * c / chunks, reps * (c + 1) / chunks)).collect();
    let outcomes: Vec<Result<Chunk<S>>> = if chunks == 1 {
        vec![run_chunk(&ctx, bounds[0], &init, &visit)]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = bounds
                .iter()
                .map(|&b| {
                    let (ctx, init, visit) = (&ctx, &init, &visit);
                    scope.spawn(move || run_chunk(ctx, b, init, visit))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        })
    };
    let mut result = RunResult { repetitions: reps, ..Default::default() };
    let mut states = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let c = o?;
        result.shots.extend(c.shots);
        result.sdram.merge(&c.sdram)?;
        result.dac_saturated |= c.dac_saturated;
        result.adc_saturated |= c.adc_saturated;
        if result.digital_log.is_empty() {
            result.digital_log = c.digital_log;
        }
        states.push(c.state);
    }
    Ok((result, states))
}

/// Qubit drive frames follow the first control port on each qubit; line
/// frames follow the first readout port (else input port) on each line.
fn frames_for(p: &Program, device: &DeviceParams) -> Frames {
    let mut f = Frames::natural(device);
    let ins = &p.instrument;
    for (q, frame) in f.qubit_hz.iter_mut().enumerate() {
        if let Some(port) = ins.outputs.iter().find(|o| o.target == OutputTarget::Control { qubit: q }) {
            *frame = port.rf_frame_hz();
        }
    }
    for (l, frame) in f.line_hz.iter_mut().enumerate() {
        if let Some(port) = ins.outputs.iter().find(|o| o.target == OutputTarget::Readout { line: l }) {
            *frame = port.rf_frame_hz();
        } else if let Some(inp) = ins.inputs.iter().find(|i| i.line == l) {
            *frame = inp.rf_frame_hz();
        }
    }
    f
}

struct Chunk<S> {
    shots: Vec<ShotRecord>,
    sdram: SdramImage,
    dac_saturated: bool,
    adc_saturated: bool,
    digital_log: Vec<DigitalEvent>,
    state: S,
}

fn run_chunk<S, I, V>(ctx: &Ctx, (lo, hi): (u64, u64), init: &I, visit: &V) -> Result<Chunk<S>>
where
    I: Fn() -> S,
    V: Fn(&mut S, &ShotRecord, &[StoredTrace]),
{
    let mut cache = DeviceCache::new();
    let mut chunk = Chunk {
        shots: Vec::new(),
        sdram: SdramImage::new(),
        dac_saturated: false,
        adc_saturated: false,
        digital_log: Vec::new(),
        state: init(),
    };
    for r in lo..hi {
        let mut rep = Repetition::new(ctx, r, &mut cache);
        rep.execute(&mut chunk.sdram)?;
        chunk.dac_saturated |= rep.dac_saturated;
        chunk.adc_saturated |= rep.world.adc_saturated();
        let mut shot = std::mem::take(&mut rep.shot);
        shot.probes = rep.world.take_probes();
        if r == 0 {
            chunk.digital_log = std::mem::take(&mut rep.digital_log);
        }
        visit(&mut chunk.state, &shot, &rep.traces);
        if ctx.opts.keep_shots {
            chunk.shots.push(shot);
        }
    }
    Ok(chunk)
}

struct ActiveOut {
    port: usize,
    start: u64,
    end: u64,
    template_id: usize,
}

enum WindowKind {
    Store { port: usize, address: u64 },
    Match { pair: usize },
}

struct Window {
    tick: u64,
    end: u64,
    kind: WindowKind,
    /// Input ports captured, with one buffer each.
    ports: Vec<usize>,
    buffers: Vec<Vec<Complex64>>,
}

struct Repetition<'c, 'w> {
    ctx: &'c Ctx<'c>,
    r: u64,
    world: World<'w>,
    renderers: Vec<PortRenderer<'c>>,
    actives: Vec<ActiveOut>,
    windows: Vec<Window>,
    comparisons: u64,
    pending_masks: Vec<(u64, usize, bool)>,
    shot: ShotRecord,
    traces: Vec<StoredTrace>,
    digital_log: Vec<DigitalEvent>,
    dac_saturated: bool,
}

impl<'c, 'w> Repetition<'c, 'w>
where
    'c: 'w,
{
    fn new(ctx: &'c Ctx<'c>, r: u64, cache: &'w mut DeviceCache) -> Self {
        let world = World::new(ctx.device, &ctx.frames, cache, ctx.opts.mode, ctx.opts.seed, r);
        Self {
            ctx,
            r,
            world,
            renderers: ctx.program.instrument.outputs.iter().map(PortRenderer::new).collect(),
            actives: Vec::new(),
            windows: Vec::new(),
            comparisons: 0,
            pending_masks: Vec::new(),
            shot: ShotRecord { repetition: r, ..Default::default() },
            traces: Vec::new(),
            digital_log: Vec::new(),
            dac_saturated: false,
        }
    }

    fn sweep_index(&self, lut_index: usize, stride: u64, len: usize) -> usize {
        let step = (self.r as u128 * stride as u128) % len as u128;
        ((lut_index as u128 + step) % len as u128) as usize
    }

    fn execute(&mut self, sdram: &mut SdramImage) -> Result<()> {
        let ctx = self.ctx;
        let ins = &ctx.program.instrument;
        for e in &ctx.events {
            let at = e.at;
            self.advance(at * SAMPLES_PER_TICK, sdram)?;
            match &e.kind {
                EventKind::OutputTemplate { port, template_id } => self.start_output(*port, *template_id, at),
                EventKind::ConditionalOutput { port, template_id, mask_bit } => {
                    self.settle_masks(at);
                    let mask = ins.feedback.operator.mask(self.comparisons);
                    let fired = mask >> mask_bit & 1 == 1;
                    if fired {
                        self.start_output(*port, *template_id, at);
                    }
                    self.shot.conditionals.push(ConditionalRecord {
                        tick: at,
                        port: *port,
                        template_id: *template_id,
                        mask_bit: *mask_bit,
                        fired,
                    });
                }
                EventKind::SetCarrier { port, group, lut_index, stride } => {
                    let len = ins.outputs[*port].groups[*group].carrier_lut.len();
                    let idx = self.sweep_index(*lut_index, *stride, len);
                    self.renderers[*port].apply(ParamUpdate { tick: at, group: *group, change: ParamChange::Carrier(idx) })?;
                }
                EventKind::SetScale { port, group, lut_index, stride } => {
                    let len = ins.outputs[*port].groups[*group].scale_lut.len();
                    let idx = self.sweep_index(*lut_index, *stride, len);
                    self.renderers[*port].apply(ParamUpdate { tick: at, group: *group, change: ParamChange::Scale(idx) })?;
                }
                EventKind::StoreWindow { port, duration, address, sweep } => {
                    let address = address + sweep.map_or(0, |s| (self.r % s.count) * s.stride_cells);
                    self.open_window(at, *duration, WindowKind::Store { port: *port, address }, vec![*port]);
                }
                EventKind::MatchWindow { pair_id, duration } => {
                    let mut ports: Vec<usize> = (2 * pair_id..2 * pair_id + 2)
                        .filter_map(|u| ins.feedback.unit(u).map(|m| m.input_port))
                        .collect();
                    ports.dedup();
                    self.open_window(at, *duration, WindowKind::Match { pair: *pair_id }, ports);
                }
                EventKind::SetDcBias { channel, code } => {
                    self.digital_log.push(DigitalEvent::DcBias { tick: at, channel: *channel, code: *code });
                }
                EventKind::SetMarker { bit, level } => {
                    self.digital_log.push(DigitalEvent::Marker { tick: at, bit: *bit, level: *level });
                }
                EventKind::LoopMarker { .. } => {}
            }
        }
        let end = self
            .actives
            .iter()
            .map(|a| a.end)
            .chain(self.windows.iter().map(|w| w.end))
            .max()
            .unwrap_or(0);
        self.advance(end, sdram)
    }

    fn start_output(&mut self, port: usize, template_id: usize, at: u64) {
        let tpl = self.ctx.program.instrument.outputs[port].template(template_id).expect("validated template");
        let start = at * SAMPLES_PER_TICK;
        self.actives.push(ActiveOut { port, start, end: start + tpl.len() as u64, template_id });
    }

    fn open_window(&mut self, at: u64, duration: u64, kind: WindowKind, ports: Vec<usize>) {
        let start = at * SAMPLES_PER_TICK;
        let n = ports.len();
        self.windows.push(Window {
            tick: at,
            end: start + duration * SAMPLES_PER_TICK,
            kind,
            ports,
            buffers: vec![Vec::new(); n],
        });
    }

    fn settle_masks(&mut self, at: u64) {
        self.pending_masks.sort_by_key(|m| m.0);
        let (ready, later): (Vec<_>, Vec<_>) = self.pending_masks.iter().partition(|m| m.0 <= at);
        for (_, pair, bit) in ready {
            if bit {
                self.comparisons |= 1 << pair;
            } else {
                self.comparisons &= !(1 << pair);
            }
        }
        self.pending_masks = later;
    }

    /// Advances the device to sample `to`, synthesizing drives and filling
    /// capture windows on the way.
    fn advance(&mut self, to: u64, sdram: &mut SdramImage) -> Result<()> {
        loop {
            let now = self.world.now();
            self.retire(now, sdram)?;
            if now >= to {
                return Ok(());
            }
            let next = self
                .actives
                .iter()
                .map(|a| a.end)
                .chain(self.windows.iter().map(|w| w.end))
                .min();
            let Some(next) = next else {
                return self.world.idle(to - now);
            };
            let end = next.min(to);
            self.segment(now, end)?;
        }
    }

    fn segment(&mut self, start: u64, end: u64) -> Result<()> {
        let ctx = self.ctx;
        let ins = &ctx.program.instrument;
        let n = (end - start) as usize;
        let mut rendered: Vec<(usize, Rendered, f64)> = Vec::new();
        for port in 0..ins.outputs.len() {
            let outs: Vec<ActiveOutput> = self
                .actives
                .iter()
                .filter(|a| a.port == port)
                .map(|a| ActiveOutput { tick: a.start / SAMPLES_PER_TICK, template_id: a.template_id })
                .collect();
            if outs.is_empty() {
                continue;
            }
            let pc = &ins.outputs[port];
            let r = self.renderers[port].render(&outs, &[], start, end)?;
            self.dac_saturated |= r.saturated;
            let first = outs[0].template_id;
            let tone = pc.rf_frame_hz()
                + match pc.template(first).map(|t| t.mode()) {
                    Some(TemplateMode::Envelope) => self.renderers[port].carrier_frequency(first / TEMPLATES_PER_GROUP),
                    _ => 0.0,
                };
            rendered.push((port, r, tone));
        }
        let drives: Vec<DriveSource> = rendered
            .iter()
            .map(|(port, r, tone)| DriveSource {
                target: ins.outputs[*port].target,
                frame_hz: ins.outputs[*port].rf_frame_hz(),
                tone_hz: *tone,
                samples: &r.output,
            })
            .collect();
        let mut ports: Vec<usize> = self.windows.iter().flat_map(|w| w.ports.iter().copied()).collect();
        ports.sort_unstable();
        ports.dedup();
        let captures: Vec<Capture> = ports
            .iter()
            .map(|&p| Capture { line: ins.inputs[p].line, frame_hz: ins.inputs[p].rf_frame_hz() })
            .collect();
        let traces = self.world.segment(n, &drives, &captures)?;
        for w in &mut self.windows {
            for (k, p) in w.ports.iter().enumerate() {
                let idx = ports.binary_search(p).expect("captured port");
                w.buffers[k].extend_from_slice(&traces[idx]);
            }
        }
        Ok(())
    }

    /// Completes outputs and windows that have ended by sample `now`.
    fn retire(&mut self, now: u64, sdram: &mut SdramImage) -> Result<()> {
        self.actives.retain(|a| a.end > now);
        let (done, open): (Vec<Window>, Vec<Window>) = self.windows.drain(..).partition(|w| w.end <= now);
        self.windows = open;
        let fb = &self.ctx.program.instrument.feedback;
        for w in done {
            match w.kind {
                WindowKind::Store { port, address } => {
                    let samples = w.buffers.into_iter().next().unwrap_or_default();
                    sdram.store(address, &samples).map_err(|e| Error::Device {
                        tick: w.tick,
                        repetition: self.r,
                        message: format!("store window at tick {}: {e}", w.tick),
                    })?;
                    self.shot.stores.push(address);
                    self.traces.push(StoredTrace { tick: w.tick, port, address, samples });
                }
                WindowKind::Match { pair } => {
                    let mut values = [0i64; 2];
                    for (k, v) in values.iter_mut().enumerate() {
                        if let Some(unit) = fb.unit(2 * pair + k) {
                            let idx = w.ports.iter().position(|&p| p == unit.input_port).expect("unit port captured");
                            *v = match_value(unit.template.samples(), &w.buffers[idx])?;
                        }
                    }
                    let theta = fb.thresholds.get(pair).copied().unwrap_or(0);
                    let comparison = values[0] + values[1] >= theta;
                    debug_assert!(pair < PAIRS);
                    let ready = w.end / SAMPLES_PER_TICK + self.ctx.latency_ticks;
                    self.pending_masks.push((ready, pair, comparison));
                    self.shot.matches.push(MatchRecord { tick: w.tick, pair, values, comparison });
                }
            }
        }
        Ok(())
    }
}
