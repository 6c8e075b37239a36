//! Adaptive Gauss–Kronrod quadrature and composite rules for sampled series.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

// published 15-point Kronrod nodes and weights, kept at full listed precision
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
// Gauss weights for the odd-indexed Kronrod nodes 1, 3, 5, 7.
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

const MAX_INTERVALS: usize = 4000;
const INITIAL_SPLIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kr = WGK[7] * fc;
    let mut ga = WG[3] * fc;
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let pair = f(c - h * x) + f(c + h * x);
        kr += w * pair;
        if j % 2 == 1 {
            ga += WG[j / 2] * pair;
        }
    }
    Segment { a, b, value: kr * h, error: ((kr - ga) * h).abs() }
}

/// Integrates `f` over `[a, b]` until the estimated error is below
/// `max(abs_tol, rel_tol |I|)`.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadratureResult> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain("finite interval required; use integrate_to_infinity"));
    }
    if a == b {
        return Ok(QuadratureResult { value: 0.0, abs_error: 0.0 });
    }
    // a uniform start keeps narrow endpoint peaks from hiding between nodes
    let width = (b - a) / INITIAL_SPLIT as f64;
    let mut heap = BinaryHeap::with_capacity(4 * INITIAL_SPLIT);
    for i in 0..INITIAL_SPLIT {
        let lo = a + i as f64 * width;
        let hi = if i + 1 == INITIAL_SPLIT { b } else { lo + width };
        heap.push(kronrod(&mut f, lo, hi));
    }
    let mut value: f64 = heap.iter().map(|s| s.value).sum();
    let mut error: f64 = heap.iter().map(|s| s.error).sum();
    while error > abs_tol.max(rel_tol * value.abs()) {
        if !(value.is_finite() && error.is_finite()) {
            return Err(Error::domain("integrand is not finite on the interval"));
        }
        if heap.len() >= MAX_INTERVALS {
            return Err(Error::domain(format!(
                "quadrature did not converge: error estimate {error:e} after {MAX_INTERVALS} subintervals"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval at machine resolution; accept what we have
            heap.push(Segment { error: 0.0, ..worst });
            error -= worst.error;
            continue;
        }
        let left = kronrod(&mut f, worst.a, mid);
        let right = kronrod(&mut f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // resum to shed accumulated cancellation from the running updates
    let value: f64 = heap.iter().map(|s| s.value).sum();
    let error: f64 = heap.iter().map(|s| s.error).sum();
    Ok(QuadratureResult { value, abs_error: error })
}

/// Integrates `f` over `[a, ∞)` through the map `t = a + s/(1-s)`.
pub fn integrate_to_infinity<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadratureResult> {
    integrate(
        |s| {
            let one_minus = 1.0 - s;
            let t = a + s / one_minus;
            let v = f(t) / (one_minus * one_minus);
            if t.is_finite() && v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        abs_tol,
        rel_tol,
    )
}

/// Composite Simpson over an arbitrary sample grid (trapezoid on a leftover pair).
pub fn simpson(t: &[f64], y: &[f64]) -> f64 {
    assert_eq!(t.len(), y.len(), "grid and values must align");
    let n = t.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut i = 0;
    while i + 2 < n {
        let h0 = t[i + 1] - t[i];
        let h1 = t[i + 2] - t[i + 1];
        let hs = h0 + h1;
        total += hs / 6.0 * (y[i] * (2.0 - h1 / h0) + y[i + 1] * hs * hs / (h0 * h1) + y[i + 2] * (2.0 - h0 / h1));
        i += 2;
    }
    if i + 1 < n {
        total += 0.5 * (t[i + 1] - t[i]) * (y[i] + y[i + 1]);
    }
    total
}

/// Running trapezoid integral, starting at 0.
pub fn cumulative_trapezoid(t: &[f64], y: &[f64]) -> Vec<f64> {
    assert_eq!(t.len(), y.len(), "grid and values must align");
    let mut out = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    for i in 0..t.len() {
        if i > 0 {
            acc += 0.5 * (t[i] - t[i - 1]) * (y[i] + y[i - 1]);
        }
        out.push(acc);
    }
    out
}
