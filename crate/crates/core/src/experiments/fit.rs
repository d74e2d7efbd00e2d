//! Least-squares curve fits used by the experiment analyses.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fitted parameters and the RMS of the residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveFit {
    pub params: Vec<f64>,
    pub rms_residual: f64,
}

struct Problem<'a, F> {
    model: F,
    x: &'a [f64],
    y: &'a [f64],
    p: DVector<f64>,
}

impl<F: Fn(&[f64], f64) -> f64> Problem<'_, F> {
    fn eval(&self, p: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.x.len(), self.x.iter().zip(self.y).map(|(&x, &y)| (self.model)(p, x) - y))
    }
}

impl<F: Fn(&[f64], f64) -> f64> LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_, F> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, p: &DVector<f64>) {
        self.p.copy_from(p);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let r = self.eval(self.p.as_slice());
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        // Central differences.
        let n = self.p.len();
        let mut j = DMatrix::zeros(self.x.len(), n);
        let mut p = self.p.as_slice().to_vec();
        for k in 0..n {
            let h = 1e-7 * p[k].abs().max(1e-6);
            let orig = p[k];
            p[k] = orig + h;
            let plus = self.eval(&p);
            p[k] = orig - h;
            let minus = self.eval(&p);
            p[k] = orig;
            j.set_column(k, &((plus - minus) / (2.0 * h)));
        }
        j.iter().all(|v| v.is_finite()).then_some(j)
    }
}

/// Levenberg–Marquardt fit of `model(params, x)` to `(x, y)` from `p0`.
pub fn curve_fit(model: impl Fn(&[f64], f64) -> f64, x: &[f64], y: &[f64], p0: &[f64]) -> Result<CurveFit> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < p0.len() {
        return Err(Error::Fit(format!("{} points for {} parameters", x.len(), p0.len())));
    }
    let problem = Problem { model, x, y, p: DVector::from_column_slice(p0) };
    let (done, report) = LevenbergMarquardt::new().minimize(problem);
    if !report.termination.was_successful() {
        return Err(Error::Fit(format!("{:?}", report.termination)));
    }
    let r = done.eval(done.p.as_slice());
    Ok(CurveFit {
        params: done.p.as_slice().to_vec(),
        rms_residual: (r.norm_squared() / x.len() as f64).sqrt(),
    })
}

/// A·e^(−t/T) + B; parameters [A, T, B].
pub fn exp_decay(p: &[f64], t: f64) -> f64 {
    p[0] * (-t / p[1]).exp() + p[2]
}

/// A·cos(2πft + φ) + B; parameters [A, f, φ, B].
pub fn cosine(p: &[f64], t: f64) -> f64 {
    p[0] * (std::f64::consts::TAU * p[1] * t + p[2]).cos() + p[3]
}

/// A·e^(−t/T)·cos(2πft + φ) + B; parameters [A, T, f, φ, B].
pub fn damped_cosine(p: &[f64], t: f64) -> f64 {
    p[0] * (-t / p[1]).exp() * (std::f64::consts::TAU * p[2] * t + p[3]).cos() + p[4]
}

/// A·α^m + B; parameters [A, α, B].
pub fn power_decay(p: &[f64], m: f64) -> f64 {
    p[0] * p[1].powf(m) + p[2]
}

/// Dominant frequency of uniformly sampled data by a fine DFT scan, used
/// to seed oscillation fits.
pub fn dominant_frequency(t: &[f64], y: &[f64]) -> f64 {
    if t.len() < 3 {
        return 0.0;
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let span = t[t.len() - 1] - t[0];
    let df = 1.0 / (8.0 * span);
    let fmax = 0.5 * (t.len() - 1) as f64 / span;
    let mut best = (0.0, 0.0);
    let mut f = df;
    while f <= fmax {
        let (mut c, mut s) = (0.0, 0.0);
        for (&ti, &yi) in t.iter().zip(y) {
            let ph = std::f64::consts::TAU * f * ti;
            c += (yi - mean) * ph.cos();
            s += (yi - mean) * ph.sin();
        }
        let p = c * c + s * s;
        if p > best.1 {
            best = (f, p);
        }
        f += df;
    }
    best.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_exponential() {
        let t: Vec<f64> = (0..40).map(|k| k as f64 * 2e-6).collect();
        let y: Vec<f64> = t.iter().map(|&t| exp_decay(&[0.9, 34e-6, 0.05], t)).collect();
        let f = curve_fit(exp_decay, &t, &y, &[1.0, 20e-6, 0.0]).unwrap();
        assert!((f.params[1] / 34e-6 - 1.0).abs() < 1e-6, "{:?}", f.params);
    }

    #[test]
    fn recovers_cosine() {
        let t: Vec<f64> = (0..60).map(|k| k as f64 * 10e-9).collect();
        let y: Vec<f64> = t.iter().map(|&t| cosine(&[0.5, 1.7e6, 0.3, 0.5], t)).collect();
        let f0 = dominant_frequency(&t, &y);
        let f = curve_fit(cosine, &t, &y, &[0.4, f0, 0.0, 0.5]).unwrap();
        assert!((f.params[1] / 1.7e6 - 1.0).abs() < 1e-6, "{:?}", f.params);
    }
}
