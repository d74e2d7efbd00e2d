//! One function per experiment subcommand. Each resolves its effective
//! configuration, runs the experiment and renders the result files.

use pulsemu::calibration::{Histogram, HISTOGRAM_BINS};
use pulsemu::device::DeviceParams;
use pulsemu::experiments::characterize::{run_characterization_suite, CharacterizeConfig};
use pulsemu::experiments::cw::{run_cw_demo, CwConfig};
use pulsemu::experiments::iswap::{run_iswap_scan, IswapConfig};
use pulsemu::experiments::rb::{run_rb, RbConfig};
use pulsemu::experiments::readout::{calibrate_readout, store_responses};
use pulsemu::experiments::reset::{run_qutrit_study, run_reset_study, QutritStudyConfig, ResetResult, ResetStudyConfig};
use pulsemu::experiments::{Exec, Setup};
use serde::Serialize;
use serde_json::json;

use crate::config::{single_qubit, single_qutrit, ConfigDoc, Scale};
use crate::persist::{csv, Artifact};
use crate::{core_error, svg, CliError};

/// What every experiment command produces.
pub struct Outcome {
    /// Canonical JSON of everything that affects the results.
    pub effective_config: Vec<u8>,
    pub artifacts: Vec<Artifact>,
}

pub struct Context {
    pub doc: ConfigDoc,
    pub scale: Scale,
    pub shots: Option<u64>,
    pub exec: Exec,
}

impl Context {
    fn setup(&self, default: DeviceParams) -> Result<Setup, CliError> {
        Setup::new(self.doc.device_or(default)?).map_err(core_error)
    }

    /// Effective config document plus its copy under `<dir>/config.json`.
    fn outcome<C: Serialize>(&self, dir: &str, device: Option<&DeviceParams>, section: &C, mut artifacts: Vec<Artifact>) -> Result<Outcome, CliError> {
        let value = json!({ "command": dir, "device": device, "experiment": section });
        let effective_config = serde_json::to_vec(&value).map_err(|e| CliError::Runtime(e.to_string()))?;
        artifacts.push(Artifact::json(format!("{dir}/config.json"), &value)?);
        Ok(Outcome { effective_config, artifacts })
    }
}

fn s(x: impl ToString) -> String {
    x.to_string()
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn characterize(ctx: &Context) -> Result<Outcome, CliError> {
    let setup = ctx.setup(single_qubit())?;
    let mut cfg = ctx.doc.characterize.clone().unwrap_or(match ctx.scale {
        Scale::Desk => CharacterizeConfig::desk(),
        Scale::Paper => CharacterizeConfig::paper(),
    });
    if let Some(n) = ctx.shots {
        cfg.shots = n;
    }
    let r = run_characterization_suite(&setup, 0, &cfg, &ctx.exec).map_err(core_error)?;
    let d = "characterize";
    let mut a = Vec::new();
    let rabi = csv(&["amplitude", "p_e"], r.rabi.amplitudes.iter().zip(&r.rabi.p_e).map(|(x, p)| vec![s(x), s(p)]));
    a.push(Artifact::text(format!("{d}/rabi.csv"), rabi));
    a.push(Artifact::text(format!("{d}/rabi.svg"), svg::lines("Rabi", "amplitude (full scale)", "P_e", &[("P_e", &r.rabi.amplitudes, &r.rabi.p_e)])));
    for (name, decay) in [("t1", &r.t1), ("echo", &r.echo)] {
        let rows = decay.delays_ns.iter().zip(&decay.p_e).map(|(t, p)| vec![s(t), s(p)]);
        a.push(Artifact::text(format!("{d}/{name}.csv"), csv(&["delay_ns", "p_e"], rows)));
        let t: Vec<f64> = decay.delays_ns.iter().map(|&x| x as f64).collect();
        a.push(Artifact::text(format!("{d}/{name}.svg"), svg::lines(name, "delay (ns)", "P_e", &[("P_e", &t, &decay.p_e)])));
    }
    let c = &r.chevron;
    let rows = c.detunings_hz.iter().zip(&c.p_e).flat_map(|(det, row)| {
        c.durations_ns.iter().zip(row).map(move |(t, p)| vec![s(det), s(t), s(p)])
    });
    a.push(Artifact::text(format!("{d}/chevron.csv"), csv(&["detuning_hz", "duration_ns", "p_e"], rows)));
    let durations: Vec<f64> = c.durations_ns.iter().map(|&x| f64::from(x)).collect();
    a.push(Artifact::text(format!("{d}/chevron.svg"), svg::heatmap("Chevron", "duration (ns)", "detuning (Hz)", &durations, &c.detunings_hz, &c.p_e)));
    let rows = c.frequencies.iter().map(|&(det, fit, want)| vec![s(det), opt(fit), s(want)]);
    a.push(Artifact::text(format!("{d}/chevron_frequencies.csv"), csv(&["detuning_hz", "fitted_hz", "expected_hz"], rows)));
    let sp = &r.spectroscopy;
    let rows = (0..sp.frequencies_hz.len()).map(|k| {
        vec![s(sp.frequencies_hz[k]), s(sp.r_g[k][0]), s(sp.r_g[k][1]), s(sp.r_e[k][0]), s(sp.r_e[k][1]), s(sp.separation[k])]
    });
    a.push(Artifact::text(format!("{d}/spectroscopy.csv"), csv(&["frequency_hz", "r_g_re", "r_g_im", "r_e_re", "r_e_im", "separation"], rows)));
    let amp = |r: &[[f64; 2]]| -> Vec<f64> { r.iter().map(|z| z[0].hypot(z[1])).collect() };
    let (ag, ae) = (amp(&sp.r_g), amp(&sp.r_e));
    a.push(Artifact::text(
        format!("{d}/spectroscopy.svg"),
        svg::lines("Resonator spectroscopy", "frequency (Hz)", "amplitude", &[("|R_g|", &sp.frequencies_hz, &ag), ("|R_e|", &sp.frequencies_hz, &ae), ("separation", &sp.frequencies_hz, &sp.separation)]),
    ));
    a.push(Artifact::json(format!("{d}/result.json"), &r)?);
    ctx.outcome(d, Some(&setup.device), &cfg, a)
}

pub fn readout_calibrate(ctx: &Context) -> Result<Outcome, CliError> {
    let mut setup = ctx.setup(single_qubit())?;
    let mut rc = ctx.doc.readout.unwrap_or_default();
    if let Some(n) = ctx.shots {
        rc.preliminary_shots = n;
        rc.refine_shots = n;
    }
    if let Some(sigma) = rc.noise_sigma {
        setup.device.noise_sigma = sigma;
    }
    let cal = calibrate_readout(&setup, rc.qubit, rc.preliminary_shots, rc.refine_shots, &ctx.exec).map_err(core_error)?;
    let image = store_responses(&setup, rc.qubit, rc.store_shots, &ctx.exec).map_err(core_error)?;
    let d = "readout-calibrate";
    let (p, f) = (&cal.preliminary, &cal.reference);
    let rows = (0..p.tau_g.len()).map(|k| {
        vec![s(k), s(p.tau_g[k].re), s(p.tau_g[k].im), s(p.tau_e[k].re), s(p.tau_e[k].im), s(f.tau_g[k].re), s(f.tau_g[k].im), s(f.tau_e[k].re), s(f.tau_e[k].im)]
    });
    let header = ["sample", "prelim_g_re", "prelim_g_im", "prelim_e_re", "prelim_e_im", "refined_g_re", "refined_g_im", "refined_e_re", "refined_e_im"];
    let mut a = vec![Artifact::text(format!("{d}/templates.csv"), csv(&header, rows))];
    let t: Vec<f64> = (0..p.tau_g.len()).map(|k| k as f64).collect();
    let diff = |pair: &pulsemu::calibration::ReferencePair| -> Vec<f64> { pair.tau_g.iter().zip(pair.tau_e.iter()).map(|(g, e)| (e - g).norm()).collect() };
    let (dp, df) = (diff(p), diff(f));
    a.push(Artifact::text(format!("{d}/templates.svg"), svg::lines("Template difference", "sample", "|τ_e − τ_g|", &[("preliminary", &t, &dp), ("refined", &t, &df)])));
    let regions = image.regions();
    for r in &regions {
        let bytes = image.export_le(r.address).expect("listed region exists");
        a.push(Artifact { path: format!("sdram/{}.bin", r.address), bytes });
    }
    let summary = json!({
        "qubit": cal.qubit,
        "theta": cal.theta,
        "window": cal.window,
        "preliminary_distance": p.distance(),
        "refined_distance": f.distance(),
        "refined_counts": cal.refined_counts,
        "noise_sigma": setup.device.noise_sigma,
        "sdram": regions,
    });
    a.push(Artifact::json(format!("{d}/result.json"), &summary)?);
    ctx.outcome(d, Some(&setup.device), &rc, a)
}

fn reset_summary(r: &ResetResult) -> serde_json::Value {
    json!({
        "target": r.target,
        "latency_ns": r.latency_ns,
        "excited_before": r.excited_before,
        "excited_after": r.excited_after,
        "fired_fraction": r.fired_fraction,
        "true_excited_after": r.true_excited_after,
        "fit_first": r.fit_first,
        "fit_second": r.fit_second,
    })
}

pub fn reset(ctx: &Context) -> Result<Outcome, CliError> {
    let setup = ctx.setup(single_qubit())?;
    let mut cfg = ctx.doc.reset.unwrap_or(ResetStudyConfig::desk());
    if let Some(n) = ctx.shots {
        cfg.shots = n;
    }
    let st = run_reset_study(&setup, &cfg, &ctx.exec).map_err(core_error)?;
    let d = "reset";
    // Shared bins so the three panels are directly comparable.
    let range = Histogram::pooled(&st.ground.first, HISTOGRAM_BINS);
    let mut a = Vec::new();
    for (name, title, data) in [
        ("thermal", "Thermal state", &st.ground.first),
        ("reset_to_g", "After reset to g", &st.ground.second),
        ("reset_to_e", "After reset to e", &st.excited.second),
    ] {
        let h = Histogram::with_range(data, range.lo, range.hi, HISTOGRAM_BINS);
        let rows = h.counts.iter().enumerate().map(|(k, c)| vec![s(h.center(k)), s(c)]);
        a.push(Artifact::text(format!("{d}/{name}.csv"), csv(&["match_minus_threshold", "count"], rows)));
        a.push(Artifact::text(format!("{d}/{name}.svg"), svg::histogram(title, "match value − θ", h.lo, h.width(), &h.counts)));
    }
    let summary = json!({
        "noise_sigma": st.noise_sigma,
        "overlap": st.overlap,
        "thermal_temperature_k": st.thermal_temperature,
        "reset_temperature_k": st.reset_temperature,
        "theta": st.calibration.theta,
        "ground": reset_summary(&st.ground),
        "excited": reset_summary(&st.excited),
    });
    a.push(Artifact::json(format!("{d}/result.json"), &summary)?);
    ctx.outcome(d, Some(&setup.device), &cfg, a)
}

pub fn rb(ctx: &Context) -> Result<Outcome, CliError> {
    let setup = ctx.setup(single_qubit())?;
    let mut cfg = ctx.doc.rb.clone().unwrap_or(match ctx.scale {
        Scale::Desk => RbConfig::desk(),
        Scale::Paper => RbConfig::paper(),
    });
    if let Some(n) = ctx.shots {
        cfg.shots = n;
    }
    let r = run_rb(&setup, 0, &cfg, &ctx.exec).map_err(core_error)?;
    let d = "rb";
    let rows = r.stats.iter().map(|x| vec![s(x.length), s(x.mean), s(x.median), s(x.q1), s(x.q3)]);
    let mut a = vec![Artifact::text(format!("{d}/survival.csv"), csv(&["length", "mean", "median", "q1", "q3"], rows))];
    let rows = r.survival.iter().enumerate().flat_map(|(i, row)| r.lengths.iter().zip(row).map(move |(m, p)| vec![s(i), s(m), s(p)]));
    a.push(Artifact::text(format!("{d}/realizations.csv"), csv(&["realization", "length", "survival"], rows)));
    let m: Vec<f64> = r.lengths.iter().map(|&x| x as f64).collect();
    let col = |f: fn(&pulsemu::experiments::rb::LengthStats) -> f64| -> Vec<f64> { r.stats.iter().map(f).collect() };
    let (med, q1, q3) = (col(|x| x.median), col(|x| x.q1), col(|x| x.q3));
    let fit: Vec<f64> = match r.fit {
        Some([amp, alpha, b]) => m.iter().map(|&x| amp * alpha.powf(x) + b).collect(),
        None => Vec::new(),
    };
    a.push(Artifact::text(
        format!("{d}/survival.svg"),
        svg::lines("Randomized benchmarking", "Clifford length m", "ground-state survival", &[("median", &m, &med), ("q1", &m, &q1), ("q3", &m, &q3), ("fit", &m[..fit.len()], &fit)]),
    ));
    let doc = json!({ "result": r, "predicted_epc": r.predicted_epc() });
    a.push(Artifact::json(format!("{d}/result.json"), &doc)?);
    ctx.outcome(d, Some(&setup.device), &cfg, a)
}

pub fn iswap(ctx: &Context) -> Result<Outcome, CliError> {
    let setup = ctx.setup(DeviceParams::two_qubit())?;
    let mut cfg = ctx.doc.iswap.clone().unwrap_or(match ctx.scale {
        Scale::Desk => IswapConfig::desk(),
        Scale::Paper => IswapConfig::paper(),
    });
    if let Some(n) = ctx.shots {
        cfg.shots = n;
    }
    let r = run_iswap_scan(&setup, &cfg, &ctx.exec).map_err(core_error)?;
    let d = "iswap";
    let mut a = Vec::new();
    let durations: Vec<f64> = cfg.durations_ns.iter().map(|&x| f64::from(x)).collect();
    for q in 0..2 {
        let (r, cfg) = (&r, &cfg);
        let rows = (0..cfg.detunings_hz.len()).flat_map(|fi| {
            cfg.durations_ns.iter().enumerate().map(move |(ti, t)| {
                let measured = r.measured[q].get(fi).map(|row| s(row[ti])).unwrap_or_default();
                vec![s(cfg.detunings_hz[fi]), s(r.frequencies_hz[fi]), s(t), s(r.population[q][fi][ti]), measured]
            })
        });
        let name = format!("population_q{}", q + 1);
        a.push(Artifact::text(format!("{d}/{name}.csv"), csv(&["detuning_hz", "frequency_hz", "duration_ns", "population", "measured"], rows)));
        let title = format!("Qubit {} excited population", q + 1);
        a.push(Artifact::text(format!("{d}/{name}.svg"), svg::heatmap(&title, "duration (ns)", "detuning (Hz)", &durations, &cfg.detunings_hz, &r.population[q])));
    }
    let contrast = r.chevron_contrast();
    let rows = r.cuts.iter().zip(&contrast).map(|(c, (_, rel, want))| {
        vec![s(c.detuning_hz), s(c.contrast), s(c.swap_time * 1e9), s(c.fit.rms_residual), s(rel), s(want)]
    });
    a.push(Artifact::text(format!("{d}/cuts.csv"), csv(&["detuning_hz", "contrast", "swap_time_ns", "rms_residual", "relative_contrast", "expected_contrast"], rows)));
    a.push(Artifact::json(format!("{d}/result.json"), &r)?);
    ctx.outcome(d, Some(&setup.device), &cfg, a)
}

pub fn qutrit_reset(ctx: &Context) -> Result<Outcome, CliError> {
    let setup = ctx.setup(single_qutrit())?;
    let mut cfg = ctx.doc.qutrit.unwrap_or(QutritStudyConfig::desk());
    if let Some(n) = ctx.shots {
        cfg.shots = n;
    }
    let st = run_qutrit_study(&setup, &cfg, &ctx.exec).map_err(core_error)?;
    let d = "qutrit-reset";
    let rows = ["g", "e", "f"].iter().enumerate().map(|(k, l)| vec![s(l), s(st.reset.before[k]), s(st.reset.after[k]), s(st.reset.assignment_error[k])]);
    let mut a = vec![Artifact::text(format!("{d}/populations.csv"), csv(&["level", "before", "after", "assignment_error"], rows))];
    let levels = [0.0, 1.0, 2.0];
    a.push(Artifact::text(
        format!("{d}/populations.svg"),
        svg::lines("Qutrit reset", "level (g, e, f)", "population", &[("before", &levels, &st.reset.before), ("after", &levels, &st.reset.after)]),
    ));
    let summary = json!({
        "noise_sigma": st.noise_sigma,
        "overlap": st.overlap,
        "ground_bound": st.ground_bound,
        "reset": st.reset,
        "window_start": st.templates.window_start,
    });
    a.push(Artifact::json(format!("{d}/result.json"), &summary)?);
    ctx.outcome(d, Some(&setup.device), &cfg, a)
}

pub fn cw_demo(ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = ctx.doc.cw.clone().unwrap_or_else(CwConfig::default);
    let r = run_cw_demo(&cfg, &ctx.exec).map_err(core_error)?;
    let d = "cw-demo";
    let rows = r.readings.iter().map(|x| vec![s(x.bin), s(x.frequency_hz), s(x.expected[0]), s(x.expected[1]), s(x.measured[0]), s(x.measured[1])]);
    let mut a = vec![Artifact::text(format!("{d}/lockin.csv"), csv(&["bin", "frequency_hz", "expected_re", "expected_im", "measured_re", "measured_im"], rows))];
    let f: Vec<f64> = r.readings.iter().map(|x| x.frequency_hz).collect();
    let mag = |v: fn(&pulsemu::experiments::cw::LockinReading) -> [f64; 2]| -> Vec<f64> { r.readings.iter().map(|x| v(x)[0].hypot(v(x)[1])).collect() };
    let (exp, meas) = (mag(|x| x.expected), mag(|x| x.measured));
    a.push(Artifact::text(format!("{d}/lockin.svg"), svg::lines("Lock-in readings", "frequency (Hz)", "amplitude", &[("expected", &f, &exp), ("measured", &f, &meas)])));
    a.push(Artifact::json(format!("{d}/result.json"), &r)?);
    ctx.outcome(d, None, &cfg, a)
}
