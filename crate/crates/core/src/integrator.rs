//! Dormand–Prince 5(4) with continuous output.
//!
//! Systems that are homogeneous of degree one in the state (for a fixed
//! coefficient) can opt into renormalisation: the stored state is kept near
//! unit size by exact powers of two and the removed factor is accumulated as a
//! natural-log scale. The physical state is `e^{ln_scale} * y`.

use crate::error::IntegrationError;

pub trait OdeSystem {
    fn dim(&self) -> usize;

    /// Writes `dy/dt` for the stored state `y`; the physical state is `e^{ln_scale} y`.
    fn rhs(&self, t: f64, y: &[f64], ln_scale: f64, dy: &mut [f64]);

    /// Upper bound on the step size at the current state.
    fn step_cap(&self, _t: f64, _y: &[f64], _ln_scale: f64) -> f64 {
        f64::INFINITY
    }

    /// Whether `rhs(t, a y, s - ln a) = a rhs(t, y, s)` for every `a > 0`.
    fn homogeneous(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-8, abs_tol: 1e-10, max_step: f64::INFINITY, max_steps: 10_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub states: Vec<Vec<f64>>,
    pub ln_scale: Vec<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;

/// Renormalisation keeps the sup norm of the stored state inside `[2^-8, 2^8]`.
const RENORM_EXPONENT: i32 = 8;

/// Exact `2^k` for `k` in the normal exponent range.
fn pow2(k: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&k));
    f64::from_bits(((k + 1023) as u64) << 52)
}

/// Brings `y` back to unit size; returns the exponent `k` removed (`y_old = 2^k y_new`).
fn renormalize(y: &mut [f64]) -> i32 {
    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 || !peak.is_finite() {
        return 0;
    }
    let e = peak.log2();
    if e.abs() <= RENORM_EXPONENT as f64 {
        return 0;
    }
    let k = (e.floor() as i32).clamp(-1000, 1000);
    let f = pow2(-k);
    y.iter_mut().for_each(|v| *v *= f);
    k
}

fn error_norm(err: &[f64], y: &[f64], ynew: &[f64], opts: &SolverOptions) -> f64 {
    let n = err.len().max(1) as f64;
    let sum: f64 = err
        .iter()
        .zip(y.iter().zip(ynew))
        .map(|(&e, (&a, &b))| {
            let sc = opts.abs_tol + opts.rel_tol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / n).sqrt()
}

fn initial_step<S: OdeSystem>(sys: &S, t: f64, y: &[f64], s: f64, f0: &[f64], opts: &SolverOptions) -> f64 {
    let n = y.len();
    // scaled RMS norm, factored by the largest entry so tiny tolerances cannot overflow it
    let norm = |v: &[f64]| {
        let r: Vec<f64> = v.iter().zip(y).map(|(&a, &b)| (a / (opts.abs_tol + opts.rel_tol * b.abs())).abs()).collect();
        let m = r.iter().copied().fold(0.0, f64::max);
        if m == 0.0 || !m.is_finite() {
            return m;
        }
        let sum: f64 = r.iter().map(|x| (x / m).powi(2)).sum();
        m * (sum / n.max(1) as f64).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![0.0; n];
    sys.rhs(t + h0, &y1, s, &mut f1);
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = norm(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1)
}

/// Integrates from `times[0]` and returns the state at every entry of `times`.
///
/// `times` must be strictly increasing.
pub fn solve<S: OdeSystem>(
    sys: &S,
    y0: &[f64],
    times: &[f64],
    opts: &SolverOptions,
) -> Result<Solution, IntegrationError> {
    let n = sys.dim();
    assert_eq!(y0.len(), n, "initial state has the wrong dimension");
    assert!(!times.is_empty(), "at least one sample time is required");
    let homogeneous = sys.homogeneous();

    let mut t = times[0];
    let t_end = times[times.len() - 1];
    let mut y = y0.to_vec();
    let mut s = 0.0f64;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(IntegrationError::NonFinite { t });
    }
    if homogeneous {
        s += renormalize(&mut y) as f64 * std::f64::consts::LN_2;
    }

    let mut states = Vec::with_capacity(times.len());
    let mut scales = Vec::with_capacity(times.len());
    states.push(y.clone());
    scales.push(s);
    if times.len() == 1 {
        return Ok(Solution { states, ln_scale: scales, accepted_steps: 0, rejected_steps: 0 });
    }

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    let mut err = vec![0.0; n];

    sys.rhs(t, &y, s, &mut k1);
    let mut cap = opts.max_step.min(sys.step_cap(t, &y, s));
    let mut h = initial_step(sys, t, &y, s, &k1, opts).min(cap);
    let mut next = 1;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut last_rejected = false;

    while next < times.len() {
        cap = cap.min(sys.step_cap(t, &y, s));
        h = h.min(cap);
        let remaining = t_end - t;
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h <= 1e-14 * t.abs().max(1.0) {
            return Err(IntegrationError::StepUnderflow { t, h });
        }
        if accepted + rejected >= opts.max_steps {
            return Err(IntegrationError::StepBudget { t, max_steps: opts.max_steps });
        }

        for i in 0..n {
            stage[i] = y[i] + h * A21 * k1[i];
        }
        sys.rhs(t + C2 * h, &stage, s, &mut k2);
        for i in 0..n {
            stage[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(t + C3 * h, &stage, s, &mut k3);
        for i in 0..n {
            stage[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(t + C4 * h, &stage, s, &mut k4);
        for i in 0..n {
            stage[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(t + C5 * h, &stage, s, &mut k5);
        for i in 0..n {
            stage[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t_end } else { t + h };
        sys.rhs(t_new, &stage, s, &mut k6);
        for i in 0..n {
            ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        sys.rhs(t_new, &ynew, s, &mut k7);
        for i in 0..n {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let e = error_norm(&err, &y, &ynew, opts);

        if !e.is_finite() {
            if ynew.iter().any(|v| !v.is_finite()) && h <= 1e-10 * t.abs().max(1.0) {
                return Err(IntegrationError::NonFinite { t });
            }
            h *= MIN_FACTOR;
            rejected += 1;
            last_rejected = true;
            continue;
        }

        if e <= 1.0 {
            while next < times.len() && times[next] <= t_new {
                let theta = ((times[next] - t) / h).clamp(0.0, 1.0);
                let theta1 = 1.0 - theta;
                let out: Vec<f64> = (0..n)
                    .map(|i| {
                        let r2 = ynew[i] - y[i];
                        let r3 = h * k1[i] - r2;
                        let r4 = r2 - h * k7[i] - r3;
                        let r5 = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
                        y[i] + theta * (r2 + theta1 * (r3 + theta * (r4 + theta1 * r5)))
                    })
                    .collect();
                states.push(out);
                scales.push(s);
                next += 1;
            }
            t = t_new;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            accepted += 1;
            if y.iter().any(|v| !v.is_finite()) {
                return Err(IntegrationError::NonFinite { t });
            }
            if homogeneous {
                let k = renormalize(&mut y);
                if k != 0 {
                    let f = pow2(-k);
                    k1.iter_mut().for_each(|v| *v *= f);
                    s += k as f64 * std::f64::consts::LN_2;
                }
            }
            let mut factor = (SAFETY * e.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR);
            if last_rejected {
                factor = factor.min(1.0);
            }
            h *= factor;
            last_rejected = false;
        } else {
            h *= (SAFETY * e.powf(-0.2)).max(MIN_FACTOR);
            rejected += 1;
            last_rejected = true;
        }
    }

    Ok(Solution { states, ln_scale: scales, accepted_steps: accepted, rejected_steps: rejected })
}
