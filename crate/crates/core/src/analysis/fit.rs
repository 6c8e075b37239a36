//! Envelope extraction and log-linear decay fits.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{parabolic_time, weighted_time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Abscissa {
    /// `t`
    Time,
    /// `((1+t)^{1-p} - 1)/(1-p)`, or `log(1+t)` at `p = 1`
    WeightedTime,
    /// `log(1+t)`
    LogTime,
    /// `((1+t)^{1+p} - 1)/(1+p)`
    ParabolicTime,
}

impl Abscissa {
    pub fn map(self, p: f64, t: f64) -> f64 {
        match self {
            Abscissa::Time => t,
            Abscissa::WeightedTime => weighted_time(p, t),
            Abscissa::LogTime => t.ln_1p(),
            Abscissa::ParabolicTime => parabolic_time(p, t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub name: String,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: [f64; 2],
    pub abscissa: Abscissa,
    pub points: usize,
}

impl RateFit {
    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// Last 60% of `[0, t_end]`.
pub fn default_window(t_end: f64) -> (f64, f64) {
    (0.4 * t_end, t_end)
}

fn is_strictly_monotone(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0]) || v.windows(2).all(|w| w[1] > w[0])
}

fn local_maxima(v: &[f64]) -> Vec<usize> {
    let n = v.len();
    let mut idx = Vec::new();
    if v[0] > v[1] {
        idx.push(0);
    }
    for i in 1..n - 1 {
        if v[i] > v[i - 1] && v[i] > v[i + 1] {
            idx.push(i);
        }
    }
    if v[n - 1] > v[n - 2] {
        idx.push(n - 1);
    }
    idx
}

fn envelope_indices(values: &[f64]) -> Result<Vec<usize>> {
    if values.len() < 3 {
        return Err(Error::DegenerateInput(format!("envelope needs at least 3 points, got {}", values.len())));
    }
    if is_strictly_monotone(values) {
        return Ok((0..values.len()).collect());
    }
    if values.iter().all(|&v| v == values[0]) {
        return Ok(vec![0, values.len() - 1]);
    }
    Ok(local_maxima(values))
}

/// Strict local maxima of an oscillating series; monotone series pass through.
pub fn envelope(series: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    if series.iter().any(|&(_, v)| v < 0.0 || v.is_nan()) {
        return Err(Error::domain("envelope expects nonnegative values"));
    }
    let values: Vec<f64> = series.iter().map(|&(_, v)| v).collect();
    Ok(envelope_indices(&values)?.into_iter().map(|i| series[i]).collect())
}

/// Envelope of a series given by its logarithm; the log is monotone so the
/// maxima coincide with those of the values.
pub fn envelope_ln(times: &[f64], ln_values: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let idx = envelope_indices(ln_values)?;
    Ok((idx.iter().map(|&i| times[i]).collect(), idx.iter().map(|&i| ln_values[i]).collect()))
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r²)`.
fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(&a, &b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    (slope, intercept, r2)
}

/// Fits `ln(value)` against the abscissa over the window.
pub fn fit_decay_exponent(series: &[(f64, f64)], p: f64, abscissa: Abscissa, window: (f64, f64)) -> Result<RateFit> {
    let times: Vec<f64> = series.iter().map(|s| s.0).collect();
    let mut ln = Vec::with_capacity(series.len());
    for &(t, v) in series {
        if t >= window.0 && t <= window.1 && !(v > 0.0) {
            return Err(Error::domain(format!("nonpositive value {v} at t = {t} inside the fit window")));
        }
        ln.push(v.ln());
    }
    fit_ln_series(&times, &ln, p, abscissa, window)
}

/// Same as [`fit_decay_exponent`] for a series already given as logarithms.
pub fn fit_ln_series(
    times: &[f64],
    ln_values: &[f64],
    p: f64,
    abscissa: Abscissa,
    window: (f64, f64),
) -> Result<RateFit> {
    if !(window.0 < window.1) {
        return Err(Error::domain(format!("empty fit window [{}, {}]", window.0, window.1)));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (&t, &l) in times.iter().zip(ln_values) {
        if t >= window.0 && t <= window.1 {
            if !l.is_finite() {
                return Err(Error::domain(format!("nonpositive value at t = {t} inside the fit window")));
            }
            x.push(abscissa.map(p, t));
            y.push(l);
        }
    }
    if x.len() < 3 {
        return Err(Error::DegenerateInput(format!("fit window holds {} points, need at least 3", x.len())));
    }
    let (slope, intercept, r_squared) = least_squares(&x, &y);
    Ok(RateFit {
        name: String::new(),
        slope,
        intercept,
        r_squared,
        window: [window.0, window.1],
        abscissa,
        points: x.len(),
    })
}
