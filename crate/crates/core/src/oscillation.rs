//! Cosine fitting of sampled oscillations.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::{self, LeastSquares, LmOptions};

/// Least-squares fit of `y = A cos(2 pi f t + phi) + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineFit {
    /// Oscillation frequency (MHz), positive.
    pub frequency: f64,
    /// Standard error of `frequency` (MHz).
    pub std_error: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    /// Residual sum of squares.
    pub rss: f64,
    pub dof: usize,
}

impl CosineFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * PI * self.frequency * t + self.phase).cos() + self.offset
    }
}

/// Minimum number of oscillation periods a record must span.
pub const MIN_PERIODS: f64 = 1.5;
/// Minimum number of samples per oscillation period.
pub const MIN_POINTS_PER_PERIOD: f64 = 8.0;

const ZERO_PADDING: usize = 8;

struct CosineModel<'a> {
    t: &'a [f64],
    y: &'a [f64],
}

impl LeastSquares for CosineModel<'_> {
    // p = [a, b, c, f]: a cos + b sin + c
    fn residuals(&self, p: &[f64]) -> Vec<f64> {
        self.t
            .iter()
            .zip(self.y)
            .map(|(&t, &y)| {
                let (s, c) = (2.0 * PI * p[3] * t).sin_cos();
                p[0] * c + p[1] * s + p[2] - y
            })
            .collect()
    }

    fn param_scales(&self, p: &[f64]) -> Vec<f64> {
        let amp = p[0].hypot(p[1]).max(p[2].abs()).max(f64::MIN_POSITIVE);
        vec![amp, amp, amp, p[3].abs().max(f64::MIN_POSITIVE)]
    }

    fn jacobian(&self, p: &[f64], _step: f64) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.t.len(), 4);
        for (i, &t) in self.t.iter().enumerate() {
            let w = 2.0 * PI * t;
            let (s, c) = (w * p[3]).sin_cos();
            j[(i, 0)] = c;
            j[(i, 1)] = s;
            j[(i, 2)] = 1.0;
            j[(i, 3)] = w * (-p[0] * s + p[1] * c);
        }
        j
    }
}

/// Peak of the zero-padded periodogram, refined by parabolic interpolation.
pub fn spectral_peak(t: &[f64], y: &[f64]) -> Result<f64> {
    let n = t.len();
    let span = t[n - 1] - t[0];
    if span <= 0.0 {
        return Err(Error::InsufficientSampling("record has zero duration".into()));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let df = 1.0 / (span * ZERO_PADDING as f64);
    let nyquist = (n as f64 - 1.0) / (2.0 * span);
    let kmax = (nyquist / df).floor() as usize;
    let power: Vec<f64> = (0..=kmax)
        .map(|k| {
            let f = k as f64 * df;
            let (mut re, mut im) = (0.0, 0.0);
            for (&ti, &yi) in t.iter().zip(&centered) {
                let (s, c) = (2.0 * PI * f * (ti - t[0])).sin_cos();
                re += yi * c;
                im -= yi * s;
            }
            re * re + im * im
        })
        .collect();
    let (kpeak, &pmax) = power
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty spectrum");
    if pmax <= 0.0 || !pmax.is_finite() {
        return Err(Error::NoOscillation("record is constant".into()));
    }
    // peaks inside the main lobe of the zero bin are not oscillations
    if kpeak < ZERO_PADDING {
        return Err(Error::NoOscillation(format!(
            "spectral peak at {:.4e} MHz is within the zero-frequency bin",
            kpeak as f64 * df
        )));
    }
    let mut k = kpeak as f64;
    if kpeak + 1 < power.len() {
        let (a, b, c) = (power[kpeak - 1], power[kpeak], power[kpeak + 1]);
        let denom = a - 2.0 * b + c;
        if denom < 0.0 {
            k += 0.5 * (a - c) / denom;
        }
    }
    Ok(k * df)
}

/// Fits a cosine to `(t, y)`, seeding the frequency from the periodogram.
///
/// Standard errors come from the Jacobian at the optimum scaled by the
/// residual variance `rss / (n - 4)`.
pub fn fit_cosine(t: &[f64], y: &[f64]) -> Result<CosineFit> {
    if t.len() != y.len() {
        return Err(Error::InsufficientData("time and value arrays differ in length".into()));
    }
    if t.len() < 5 {
        return Err(Error::InsufficientSampling(format!("{} samples; need at least 5", t.len())));
    }
    if t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InsufficientData("times must be strictly ascending".into()));
    }
    let seed = spectral_peak(t, y)?;

    // linear amplitudes at the seeded frequency
    let design = DMatrix::from_fn(t.len(), 3, |i, k| {
        let (s, c) = (2.0 * PI * seed * t[i]).sin_cos();
        [c, s, 1.0][k]
    });
    let lin = design
        .svd(true, true)
        .solve(&DVector::from_column_slice(y), 1e-14)
        .map_err(|e| Error::NoOscillation(e.to_string()))?;

    let model = CosineModel { t, y };
    let opts = LmOptions { xtol: 1e-12, gtol: 0.0, max_iter: 500, ..Default::default() };
    let sol = lsq::minimize(&model, &[lin[0], lin[1], lin[2], seed], &opts);
    if !sol.converged {
        return Err(Error::NonConvergence {
            iterations: sol.iterations,
            cost: sol.cost,
            start: format!("f = {seed:.6e} MHz"),
        });
    }
    let [a, b, c, f] = [sol.params[0], sol.params[1], sol.params[2], sol.params[3]];
    let frequency = f.abs();
    let span = t[t.len() - 1] - t[0];
    let cycles = frequency * span;
    if cycles < MIN_PERIODS * (1.0 - 1e-9) {
        return Err(Error::InsufficientSampling(format!(
            "record spans {cycles:.2} periods; need at least {MIN_PERIODS}"
        )));
    }
    let per_period = (t.len() as f64 - 1.0) / cycles;
    if per_period < MIN_POINTS_PER_PERIOD * (1.0 - 1e-9) {
        return Err(Error::InsufficientSampling(format!(
            "{per_period:.1} samples per period; need at least {MIN_POINTS_PER_PERIOD}"
        )));
    }
    let dof = t.len() - 4;
    let s2 = sol.cost / dof as f64;
    let cov = lsq::covariance(&sol.jacobian, 1e-13)?;
    let std_error = (s2 * cov[(3, 3)]).max(0.0).sqrt();
    // a cos + b sin = A cos(x + phi) with A = hypot, phi = atan2(-b, a)
    let mut phase = (-b).atan2(a);
    if f < 0.0 {
        phase = -phase;
    }
    Ok(CosineFit {
        frequency,
        std_error,
        amplitude: a.hypot(b),
        phase,
        offset: c,
        rss: sol.cost,
        dof,
    })
}
