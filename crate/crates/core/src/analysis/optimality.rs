//! Optimality of decay envelopes and the amplitude law of oscillating modes.

use serde::{Deserialize, Serialize};

use crate::energies::{gamma_series, ln_h_series, ln_psi, norm_series};
use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::scalar::damping_power;

use super::fit::{default_window, envelope_ln, fit_ln_series, Abscissa, RateFit};
use super::CheckReport;

/// Required growth of `H` between `t_end/2` and `t_end`.
pub const GROWTH_FACTOR: f64 = 10.0;

/// Blocks over `[3t_end/4, t_end]` whose minima must not decrease.
pub const MONOTONE_BLOCKS: usize = 8;

/// Candidate comparison function for the optimality check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ComparisonEnvelope {
    /// `exp(-α((1+t)^{1+p} - 1))`
    Psi { alpha: f64 },
    /// `e^{-rate·t}`; with `p = 0` it must decay faster than the measured rate.
    Exponential { rate: f64, measured_rate: Option<f64> },
    /// `exp(-β((1+t)^q - 1))`
    StretchedExp { beta: f64, exponent: f64 },
    /// `Φ_{β,p}`; never steep enough.
    Phi { beta: f64 },
}

impl ComparisonEnvelope {
    pub fn ln_value(&self, p: f64, t: f64) -> f64 {
        match *self {
            ComparisonEnvelope::Psi { alpha } => ln_psi(alpha, p, t),
            ComparisonEnvelope::Exponential { rate, .. } => -rate * t,
            ComparisonEnvelope::StretchedExp { beta, exponent } => -beta * (exponent * t.ln_1p()).exp_m1(),
            ComparisonEnvelope::Phi { beta } => crate::energies::ln_phi(beta, p, t),
        }
    }

    /// Whether `(1+t)^p Φ'/Φ → -∞`.
    pub fn check_admissible(&self, p: f64) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            ComparisonEnvelope::Psi { alpha } => {
                positive("alpha", alpha)?;
                if p > 0.0 {
                    Ok(())
                } else {
                    Err(Error::config("the Psi envelope decays too slowly for p = 0; use an exponential"))
                }
            }
            ComparisonEnvelope::Exponential { rate, measured_rate } => {
                positive("rate", rate)?;
                if p > 0.0 {
                    return Ok(());
                }
                match measured_rate {
                    Some(m) if rate > m => Ok(()),
                    Some(m) => Err(Error::config(format!(
                        "for p = 0 the exponential rate {rate} must exceed the measured rate {m}"
                    ))),
                    None => Err(Error::config("for p = 0 an exponential envelope needs the measured decay rate")),
                }
            }
            ComparisonEnvelope::StretchedExp { beta, exponent } => {
                positive("beta", beta)?;
                positive("exponent", exponent)?;
                if p + exponent > 1.0 {
                    Ok(())
                } else {
                    Err(Error::config(format!("a stretched exponential needs p + exponent > 1, got {}", p + exponent)))
                }
            }
            ComparisonEnvelope::Phi { .. } => {
                Err(Error::config("Phi_{beta,p} keeps (1+t)^p Phi'/Phi bounded and cannot witness optimality"))
            }
        }
    }
}

/// Checks that a ratio given by its logarithm grows by [`GROWTH_FACTOR`]
/// between `t_end/2` and `t_end` and is increasing over the last quarter.
///
/// Slack is in natural-log units: the smaller of `ln(ratio/10)` and the
/// smallest increase between consecutive block minima.
pub fn check_ratio_growth(name: &str, times: &[f64], ln_h: &[f64]) -> Result<CheckReport> {
    let n = times.len();
    if n < 2 * MONOTONE_BLOCKS || ln_h.len() != n {
        return Err(Error::DegenerateInput(format!("ratio growth needs at least {} samples", 2 * MONOTONE_BLOCKS)));
    }
    let t_end = times[n - 1];
    let t_half = 0.5 * t_end;
    let half = times.iter().position(|&t| t >= t_half).expect("t_end >= t_end/2");
    if ln_h.iter().any(|v| v.is_nan()) || ln_h[half] == f64::NEG_INFINITY {
        return Err(Error::DegenerateInput("the ratio is not positive on the second half".into()));
    }
    let growth = ln_h[n - 1] - ln_h[half];
    let mut worst = (growth - GROWTH_FACTOR.ln(), t_end);
    let quarter = times.iter().position(|&t| t >= 0.75 * t_end).expect("t_end >= 3t_end/4");
    let tail = &ln_h[quarter..];
    let len = tail.len();
    let mut prev: Option<f64> = None;
    for b in 0..MONOTONE_BLOCKS {
        let lo = b * len / MONOTONE_BLOCKS;
        let hi = ((b + 1) * len / MONOTONE_BLOCKS).max(lo + 1);
        let (min_idx, min) =
            tail[lo..hi]
                .iter()
                .enumerate()
                .fold((lo, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (lo + i, v) } else { acc });
        if let Some(p) = prev {
            if min - p < worst.0 {
                worst = (min - p, times[quarter + min_idx]);
            }
        }
        prev = Some(min);
    }
    Ok(CheckReport::new(name, worst.0, worst.1, 0.0).with_params([
        ("ln_growth", growth),
        ("factor", GROWTH_FACTOR),
        ("t_half", times[half]),
    ]))
}

/// `H = E/Φ` is eventually increasing and grows tenfold over `[t_end/2, t_end]`.
pub fn check_optimality(traj: &Trajectory, envelope: &ComparisonEnvelope) -> Result<CheckReport> {
    let p = traj.meta.p;
    envelope.check_admissible(p)?;
    if traj.is_zero() {
        return Err(Error::DegenerateInput("optimality is meaningless for the zero solution".into()));
    }
    let ln_h = ln_h_series(traj, |t| envelope.ln_value(p, t))?;
    let eps = traj.flow.epsilon().unwrap_or(f64::NAN);
    Ok(check_ratio_growth("optimality", &traj.times, &ln_h)?.with_params([("epsilon", eps), ("p", p)]))
}

/// `Γ/Ψ_{γ,p}` (or another envelope) grows in the same sense as [`check_optimality`].
pub fn check_gamma_ratio_growth(traj: &Trajectory, envelope: &ComparisonEnvelope) -> Result<CheckReport> {
    let p = traj.meta.p;
    envelope.check_admissible(p)?;
    let g = gamma_series(traj);
    let ln_h: Vec<f64> = (0..g.len()).map(|i| g.ln_abs(i) - envelope.ln_value(p, g.times[i])).collect();
    let eps = traj.flow.epsilon().unwrap_or(f64::NAN);
    Ok(check_ratio_growth("gamma_ratio_growth", &traj.times, &ln_h)?.with_params([("epsilon", eps), ("p", p)]))
}

/// Series whose envelope is compared with the amplitude law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WkbQuantity {
    /// `|u_ε|²`
    Displacement,
    /// `Γ_ε`
    Gamma,
}

/// Relative agreement required between fitted and predicted slopes.
pub const WKB_TOLERANCE: f64 = 0.15;
/// Minimum `r²` of the fit on the weighted abscissa.
pub const WKB_MIN_R2: f64 = 0.99;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WkbReport {
    pub check: CheckReport,
    pub weighted_fit: RateFit,
    pub parabolic_fit: RateFit,
    /// slope on `(1+t)^{1-p}`: fitted slope on the weighted abscissa over `1-p`
    pub measured_slope: f64,
    /// `-1/(ε(1-p))`
    pub predicted_slope: f64,
    /// relative change of the parabolic-abscissa slope between window halves
    pub parabolic_drift: f64,
    /// the parabolic abscissa fits worse by 0.05 in `r²` or its slope drifts by more than 15%
    pub spread_confirmed: bool,
}

/// Compares the envelope decay of a single oscillating mode with
/// `λ_ε² = exp(-((1+t)^{1-p} - 1)/(ε(1-p)))`.
///
/// Slopes are reported against `(1+t)^{1-p}`, whose coefficient is `-1/(ε(1-p))`.
pub fn wkb_compare(traj: &Trajectory, quantity: WkbQuantity, window: Option<(f64, f64)>) -> Result<WkbReport> {
    let eps = traj.flow.epsilon().ok_or_else(|| Error::config("the amplitude law concerns hyperbolic runs"))?;
    let p = traj.meta.p;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::config(format!("the amplitude comparison needs p in (0, 1), got {p}")));
    }
    if traj.operator().dim() != 1 {
        return Err(Error::config("the amplitude comparison needs a single mode"));
    }
    if !traj.meta.mass.is_constant() {
        return Err(Error::config("the amplitude comparison needs a constant mass function"));
    }
    let series = match quantity {
        WkbQuantity::Displacement => norm_series(traj, 0.0),
        WkbQuantity::Gamma => gamma_series(traj),
    };
    let t_end = traj.times.last().copied().unwrap_or(0.0);
    let window = window.unwrap_or_else(|| default_window(t_end));
    let ln: Vec<f64> = (0..series.len()).map(|i| series.ln_abs(i)).collect();
    let (et, ev) = envelope_ln(&series.times, &ln)?;
    let name = match quantity {
        WkbQuantity::Displacement => "displacement",
        WkbQuantity::Gamma => "gamma",
    };
    let weighted_fit = fit_ln_series(&et, &ev, p, Abscissa::WeightedTime, window)?.named(format!("{name}_weighted"));
    let parabolic_fit = fit_ln_series(&et, &ev, p, Abscissa::ParabolicTime, window)?.named(format!("{name}_parabolic"));
    let mid = 0.5 * (window.0 + window.1);
    let first = fit_ln_series(&et, &ev, p, Abscissa::ParabolicTime, (window.0, mid))?;
    let second = fit_ln_series(&et, &ev, p, Abscissa::ParabolicTime, (mid, window.1))?;
    let parabolic_drift = ((first.slope - second.slope) / second.slope).abs();

    let measured_slope = weighted_fit.slope / (1.0 - p);
    let predicted_slope = -1.0 / (eps * (1.0 - p));
    let rel = ((measured_slope - predicted_slope) / predicted_slope).abs();
    let slope_slack = (WKB_TOLERANCE - rel) / WKB_TOLERANCE;
    let r2_slack = (weighted_fit.r_squared - WKB_MIN_R2) / (1.0 - WKB_MIN_R2);
    let spread_confirmed = weighted_fit.r_squared - parabolic_fit.r_squared >= 0.05 || parabolic_drift > WKB_TOLERANCE;
    let check = CheckReport::new(format!("wkb_{name}"), slope_slack.min(r2_slack), window.1, 0.0).with_params([
        ("epsilon", eps),
        ("p", p),
        ("measured_slope", measured_slope),
        ("predicted_slope", predicted_slope),
        ("relative_error", rel),
        ("r_squared", weighted_fit.r_squared),
    ]);
    Ok(WkbReport {
        check,
        weighted_fit,
        parabolic_fit,
        measured_slope,
        predicted_slope,
        parabolic_drift,
        spread_confirmed,
    })
}

/// `(1+t)^p Φ'/Φ` for an envelope, for reporting.
pub fn log_derivative_weight(envelope: &ComparisonEnvelope, p: f64, t: f64) -> f64 {
    let h = 1e-6 * (1.0 + t);
    let d = (envelope.ln_value(p, t + h) - envelope.ln_value(p, (t - h).max(0.0))) / (t + h - (t - h).max(0.0));
    damping_power(t, p) * d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energies::gamma_rate;
    use crate::evolution::{Flow, IntegratorConfig, KirchhoffModel};
    use crate::spectral::{MassFunction, SpectralOperator};
    use approx::assert_relative_eq;

    fn single(p: f64) -> KirchhoffModel {
        KirchhoffModel::new(SpectralOperator::from_eigenvalues(vec![1.0]).unwrap(), MassFunction::Constant(1.0), p)
            .unwrap()
    }

    fn run(p: f64, eps: f64, t_end: f64, samples: usize) -> Trajectory {
        single(p)
            .integrate(
                Flow::Hyperbolic { epsilon: eps },
                &[1.0],
                Some(&[0.0]),
                t_end,
                samples,
                &IntegratorConfig::default(),
            )
            .unwrap()
    }

    #[test]
    fn exponential_envelope_beats_scalar_rate() {
        let traj = run(0.0, 0.1, 2.0, 401);
        let env = ComparisonEnvelope::Exponential { rate: 5.0, measured_rate: Some(2.254033) };
        let r = check_optimality(&traj, &env).unwrap();
        assert!(r.passed, "{r:?}");
        // H grows like e^{(5 - 2.254)t} once the fast mode has died out
        assert_relative_eq!(r.params["ln_growth"], 5.0 - 2.254033, max_relative = 0.02);
    }

    #[test]
    fn matching_or_slow_envelopes_are_rejected() {
        let traj = run(0.0, 0.1, 2.0, 401);
        let same = ComparisonEnvelope::Exponential { rate: 2.254, measured_rate: Some(2.254) };
        assert!(matches!(check_optimality(&traj, &same), Err(Error::Config(_))));
        let phi = ComparisonEnvelope::Phi { beta: 1.0 };
        assert!(matches!(check_optimality(&traj, &phi), Err(Error::Config(_))));
        let psi = ComparisonEnvelope::Psi { alpha: 1.0 };
        assert!(matches!(check_optimality(&traj, &psi), Err(Error::Config(_))));
        assert!(ComparisonEnvelope::StretchedExp { beta: 1.0, exponent: 0.5 }.check_admissible(0.5).is_err());
        assert!(ComparisonEnvelope::StretchedExp { beta: 1.0, exponent: 0.6 }.check_admissible(0.5).is_ok());
    }

    #[test]
    fn admissibility_matches_the_log_derivative() {
        let psi = ComparisonEnvelope::Psi { alpha: 1.0 };
        // (1+t)^p Ψ'/Ψ = -α(1+p)(1+t)^{2p}
        assert_relative_eq!(log_derivative_weight(&psi, 0.5, 3.0), -1.5 * 4.0, max_relative = 1e-6);
        let phi = ComparisonEnvelope::Phi { beta: 2.0 };
        assert_relative_eq!(log_derivative_weight(&phi, 0.5, 3.0), -2.0, max_relative = 1e-6);
    }

    #[test]
    fn psi_ratio_grows_for_weak_damping() {
        // E/Ψ turns upward only after t = 24 for these parameters
        let p = 0.5;
        let traj = run(p, 0.02, 60.0, 12001);
        let env = ComparisonEnvelope::Psi { alpha: gamma_rate(1.0, 1.0, p) };
        let r = check_optimality(&traj, &env).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(check_gamma_ratio_growth(&traj, &env).unwrap().passed);
    }

    #[test]
    fn amplitude_law_slopes() {
        for (p, eps, t_end) in [(0.5, 0.02, 60.0), (0.3, 0.05, 100.0)] {
            let traj = run(p, eps, t_end, 20001);
            let r = wkb_compare(&traj, WkbQuantity::Displacement, None).unwrap();
            assert!(r.check.passed, "{:?}", r.check);
            assert!(r.spread_confirmed, "{r:?}");
            assert_relative_eq!(r.predicted_slope, -1.0 / (eps * (1.0 - p)));
        }
    }

    #[test]
    fn amplitude_law_preconditions() {
        let traj = run(0.0, 0.1, 2.0, 101);
        assert!(matches!(wkb_compare(&traj, WkbQuantity::Displacement, None), Err(Error::Config(_))));
    }

    #[test]
    fn ratio_growth_detects_decrease() {
        let times: Vec<f64> = (0..101).map(|i| i as f64 * 0.1).collect();
        let up: Vec<f64> = times.clone();
        assert!(check_ratio_growth("r", &times, &up).unwrap().passed);
        let down: Vec<f64> = times.iter().map(|t| -t).collect();
        assert!(!check_ratio_growth("r", &times, &down).unwrap().passed);
        let flat: Vec<f64> = times.iter().map(|t| 0.1 * t).collect();
        assert!(!check_ratio_growth("r", &times, &flat).unwrap().passed);
    }
}
