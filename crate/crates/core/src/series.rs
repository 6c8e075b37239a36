//! Time series with a per-sample logarithmic scale.
//!
//! Quadratic functionals of a renormalised trajectory are stored as a mantissa
//! and a natural-log scale so values far below the `f64` range stay usable.

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledSeries {
    pub times: Vec<f64>,
    pub mantissa: Vec<f64>,
    pub ln_scale: Vec<f64>,
}

impl ScaledSeries {
    pub fn from_plain(times: Vec<f64>, values: Vec<f64>) -> Self {
        let n = values.len();
        Self { times, mantissa: values, ln_scale: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Plain value; underflows to zero when the scale is below the `f64` range.
    pub fn value(&self, i: usize) -> f64 {
        self.mantissa[i] * self.ln_scale[i].exp()
    }

    /// `ln |value|`, or `-inf` for a zero sample.
    pub fn ln_abs(&self, i: usize) -> f64 {
        self.mantissa[i].abs().ln() + self.ln_scale[i]
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }

    /// Value of sample `i` expressed relative to `e^{reference}`.
    pub fn value_in_frame(&self, i: usize, reference: f64) -> f64 {
        if self.mantissa[i] == 0.0 {
            0.0
        } else {
            self.mantissa[i] * (self.ln_scale[i] - reference).exp()
        }
    }

    pub fn is_identically_zero(&self) -> bool {
        self.mantissa.iter().all(|&m| m == 0.0)
    }
}
