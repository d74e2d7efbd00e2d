use proptest::prelude::*;
use pulsemu::dsp::{CarrierConfig, QuantSpec};
use pulsemu::siggen::*;
use pulsemu::Complex64;
use std::f64::consts::{PI, TAU};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn port_with(group0: Vec<Template>, carrier: Option<CarrierConfig>) -> PortConfig {
    let mut p = PortConfig::default();
    for t in group0 {
        p.add_template(0, t).unwrap();
    }
    if let Some(cc) = carrier {
        p.groups[0].carrier_lut = vec![cc];
    }
    p
}

/// Independent carrier phasor: e^{i2π·fw·n/2^40}.
fn carrier_oracle(fw: u64, n: u64) -> Complex64 {
    let turns = (fw as u128 * n as u128 % (1u128 << 40)) as f64 / (1u64 << 40) as f64;
    Complex64::from_polar(1.0, TAU * turns)
}

#[test]
fn overlapping_templates_sum() {
    let t = Template::raw(&[c(0.3, 0.0); 20]).unwrap();
    let p = port_with(vec![t.clone(), t], None);
    let outs = [ActiveOutput { tick: 0, template_id: 0 }, ActiveOutput { tick: 5, template_id: 1 }];
    let r = render_port(&p, &outs, &[], 0..20).unwrap();
    let q = |x: f64| QuantSpec::DAC.quantize(QuantSpec::TEMPLATE.quantize(x).0).0;
    let single = q(0.3);
    let double = QuantSpec::DAC.quantize(2.0 * QuantSpec::TEMPLATE.quantize(0.3).0).0;
    for (i, z) in r.output.iter().enumerate() {
        let expect = match i {
            0..10 => single,
            10..20 => double,
            20..30 => single,
            _ => 0.0,
        };
        assert_eq!(z.re, expect, "sample {i}");
    }
    assert!((double - 0.6).abs() < 2.0 * QuantSpec::DAC.step());
    assert!(!r.saturated);
}

#[test]
fn overflow_saturates_and_flags() {
    let t = Template::raw(&[c(0.7, -0.7); 4]).unwrap();
    let p = port_with(vec![t.clone(), t], None);
    let outs = [ActiveOutput { tick: 0, template_id: 0 }, ActiveOutput { tick: 0, template_id: 1 }];
    let r = render_port(&p, &outs, &[], 0..2).unwrap();
    assert!(r.saturated);
    let (lo, hi) = (-1.0, 1.0 - QuantSpec::DAC.step());
    assert!(r.output.iter().all(|z| z.re == hi && z.im == lo));
}

#[test]
fn envelope_of_ones_is_a_pure_tone() {
    let fw = 37u64 << 31;
    let ones = Template::envelope(&[c(0.5, 0.0); 512]).unwrap();
    let p = port_with(vec![ones], Some(CarrierConfig { frequency_word: fw, phase_i_word: 0, phase_q_word: 0 }));
    let r = render_port(&p, &[ActiveOutput { tick: 0, template_id: 0 }], &[], 0..256).unwrap();
    for (n, z) in r.pre_dac.iter().enumerate() {
        assert!((z - carrier_oracle(fw, n as u64) * 0.5).norm() < 1e-12, "sample {n}");
    }
}

#[test]
fn zero_scale_silences_its_group() {
    let mut p = port_with(vec![Template::raw(&[c(0.4, 0.2); 10]).unwrap()], None);
    p.add_template(1, Template::raw(&[c(0.1, 0.0); 10]).unwrap()).unwrap();
    p.groups[0].scale_lut = vec![0.0];
    let outs = [ActiveOutput { tick: 0, template_id: 0 }, ActiveOutput { tick: 0, template_id: 8 }];
    let r = render_port(&p, &outs, &[], 0..5).unwrap();
    for z in r.pre_dac.iter() {
        assert_eq!(*z, c(QuantSpec::TEMPLATE.quantize(0.1).0, 0.0));
    }
}

#[test]
fn carrier_runs_through_pauses() {
    // Two bursts separated by a gap; both sample the same free-running phase.
    let fw = 0x12_3456_789a;
    let env = Template::envelope(&[c(0.25, 0.0); 30]).unwrap();
    let p = port_with(vec![env], Some(CarrierConfig { frequency_word: fw, phase_i_word: 0, phase_q_word: 0 }));
    let outs = [ActiveOutput { tick: 3, template_id: 0 }, ActiveOutput { tick: 101, template_id: 0 }];
    let r = render_port(&p, &outs, &[], 0..140).unwrap();
    for start in [6u64, 202] {
        for k in 0..30 {
            let n = start + k;
            assert!((r.pre_dac[n as usize] - carrier_oracle(fw, n) * 0.25).norm() < 1e-12, "sample {n}");
        }
    }
}

#[test]
fn carrier_update_is_phase_continuous() {
    let (f1, f2) = (0x10_0000_0000u64, 0x31_0000_0000u64);
    let env = Template::envelope(&vec![c(0.25, 0.0); 200]).unwrap();
    let mut p = port_with(vec![env], None);
    p.groups[0].carrier_lut = vec![
        CarrierConfig { frequency_word: f1, phase_i_word: 0, phase_q_word: 0 },
        CarrierConfig { frequency_word: f2, phase_i_word: 0, phase_q_word: 0 },
    ];
    let switch = 40u64;
    let up = ParamUpdate { tick: switch, group: 0, change: ParamChange::Carrier(1) };
    let r = render_port(&p, &[ActiveOutput { tick: 0, template_id: 0 }], &[up], 0..100).unwrap();
    // Phase accumulates f1 up to the switch sample, then f2.
    let ns = 2 * switch;
    for n in 0..200u64 {
        let acc = if n < ns {
            f1 as u128 * n as u128
        } else {
            f1 as u128 * ns as u128 + f2 as u128 * (n - ns) as u128
        };
        let turns = (acc % (1u128 << 40)) as f64 / (1u64 << 40) as f64;
        let expect = Complex64::from_polar(0.25, TAU * turns);
        assert!((r.pre_dac[n as usize] - expect).norm() < 1e-12, "sample {n}");
    }
}

#[test]
fn drag_shape() {
    let (a, alpha, beta) = (0.4, -TAU * 250e6, 0.7);
    let plain = drag_samples(20, a, alpha, 0.0).unwrap();
    assert!(plain.iter().all(|z| z.im == 0.0));
    assert!((plain[10].re - a).abs() < 1e-15);
    assert!(plain.iter().all(|z| z.re <= a + 1e-15));
    let d = drag_samples(20, a, alpha, beta).unwrap();
    // Q against a central-difference derivative of the continuous envelope.
    let i_of = |t: f64| a * (PI * t / 20e-9).sin().powi(2);
    for (k, z) in d.iter().enumerate() {
        let t = k as f64 * 1e-9;
        let h = 1e-13;
        let di = (i_of(t + h) - i_of(t - h)) / (2.0 * h);
        assert!((z.im - beta * di / alpha).abs() < 1e-6, "sample {k}");
        assert_eq!(z.re, plain[k].re);
    }
    assert!(drag_samples(20, a, 0.0, beta).is_err());
    let tpl = drag_pulse(20, a, alpha, beta).unwrap();
    assert_eq!(tpl.len(), 20);
    assert_eq!(tpl.mode(), TemplateMode::Envelope);
}

#[test]
fn clear_pulse_concatenates_to_the_segments() {
    let seg = [c(0.3, 0.1), c(0.1, 0.0), c(-0.2, 0.05), c(0.02, -0.01)];
    let parts = clear_pulse(seg, 350).unwrap();
    assert!(parts.len() >= 2);
    assert!(parts.iter().all(|t| t.len() <= MAX_TEMPLATE_SAMPLES && t.len() % 2 == 0));
    let mut p = PortConfig::default();
    let mut outs = Vec::new();
    let mut tick = 0;
    for t in &parts {
        let id = p.add_template(0, t.clone()).unwrap();
        outs.push(ActiveOutput { tick, template_id: id });
        tick += t.ticks();
    }
    let r = render_port(&p, &outs, &[], 0..tick).unwrap();
    assert_eq!(r.pre_dac.len(), 1400);
    for (k, z) in r.pre_dac.iter().enumerate() {
        let s = seg[k / 350];
        let expect = c(QuantSpec::TEMPLATE.quantize(s.re).0, QuantSpec::TEMPLATE.quantize(s.im).0);
        assert_eq!(*z, expect, "sample {k}");
    }
    let flat = clear_pulse([c(0.2, 0.0); 4], 350).unwrap();
    assert!(flat.iter().flat_map(|t| t.samples().iter()).all(|z| *z == flat[0].samples()[0]));
    assert!(clear_pulse([c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)], 350).is_err());
}

#[test]
fn integer_fractional_delay_is_a_shift() {
    let x: Vec<Complex64> = (0..16).map(|k| c((k as f64 * 0.7).sin() * 0.3, (k as f64 * 0.3).cos() * 0.2)).collect();
    let y = fractional_delay(&x, 3.0, 20);
    for (k, z) in y.iter().enumerate() {
        let expect = if (3..19).contains(&k) { x[k - 3] } else { c(0.0, 0.0) };
        assert!((z - expect).norm() < 1e-12, "sample {k}");
    }
}

#[test]
fn template_limits() {
    assert!(Template::raw(&vec![c(0.0, 0.0); 1022]).is_ok());
    assert!(Template::raw(&vec![c(0.0, 0.0); 1023]).is_err());
    let mut p = PortConfig::default();
    for _ in 0..8 {
        p.add_template(1, Template::raw(&[c(0.0, 0.0); 2]).unwrap()).unwrap();
    }
    assert!(p.add_template(1, Template::raw(&[c(0.0, 0.0); 2]).unwrap()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn envelope_equals_precomputed_raw(fw in 0u64..(1 << 40), env in proptest::collection::vec((-0.9f64..0.9, -0.9f64..0.9), 2..80), start in 0u64..1000) {
        let env: Vec<Complex64> = env.iter().map(|&(a, b)| c(a, b) / 2f64.sqrt()).collect();
        let len = env.len() & !1;
        let env = &env[..len];
        let etpl = Template::envelope(env).unwrap();
        let cc = CarrierConfig { frequency_word: fw, phase_i_word: 0, phase_q_word: 0 };
        let product: Vec<Complex64> = etpl
            .samples()
            .iter()
            .enumerate()
            .map(|(k, e)| e * carrier_oracle(fw, 2 * start + k as u64))
            .collect();
        let rtpl = Template::raw(&product).unwrap();
        let pe = port_with(vec![etpl], Some(cc));
        let pr = port_with(vec![rtpl], None);
        let span = start..start + (len / 2) as u64;
        let a = render_port(&pe, &[ActiveOutput { tick: start, template_id: 0 }], &[], span.clone()).unwrap();
        let b = render_port(&pr, &[ActiveOutput { tick: start, template_id: 0 }], &[], span).unwrap();
        let half = QuantSpec::TEMPLATE.step() / 2.0 + 1e-12;
        for (x, y) in a.pre_dac.iter().zip(b.pre_dac.iter()) {
            prop_assert!((x.re - y.re).abs() <= half && (x.im - y.im).abs() <= half);
        }
    }

    #[test]
    fn superposition_is_linear(a in proptest::collection::vec(-0.4f64..0.4, 20), b in proptest::collection::vec(-0.4f64..0.4, 20), shift in 0u64..10) {
        let ta = Template::raw(&a.iter().map(|&x| c(x, -x / 2.0)).collect::<Vec<_>>()).unwrap();
        let tb = Template::envelope(&b.iter().map(|&x| c(x / 3.0, x)).collect::<Vec<_>>()).unwrap();
        let cc = CarrierConfig { frequency_word: 0x55_5555_5555, phase_i_word: 0, phase_q_word: 0x1000 };
        let mut p = port_with(vec![ta, tb], Some(cc));
        p.add_template(1, Template::raw(&[c(0.1, 0.1); 6]).unwrap()).unwrap();
        p.groups[1].scale_lut = vec![-0.5];
        let oa = ActiveOutput { tick: 0, template_id: 0 };
        let ob = ActiveOutput { tick: shift, template_id: 1 };
        let oc = ActiveOutput { tick: 4, template_id: 8 };
        let span = 0..20;
        let all = render_port(&p, &[oa, ob, oc], &[], span.clone()).unwrap();
        let parts: Vec<_> = [oa, ob, oc].iter().map(|o| render_port(&p, &[*o], &[], span.clone()).unwrap()).collect();
        for n in 0..40 {
            let sum: Complex64 = parts.iter().map(|r| r.pre_dac[n]).sum();
            let d = all.pre_dac[n] - sum;
            prop_assert!(d.re.abs() <= 2.0 * f64::EPSILON && d.im.abs() <= 2.0 * f64::EPSILON, "sample {}: {}", n, d);
        }
    }
}
