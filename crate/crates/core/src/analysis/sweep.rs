//! ε sweeps: the ε² law of the decay-error estimate, and an informational
//! probe at the critical exponential rate.

use serde::Serialize;

use crate::energies::{gamma_series, ln_phi};
use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::series::ScaledSeries;

use super::CheckReport;

/// Allowed spread of `S(ε)` across the sweep.
pub const SWEEP_SPREAD: f64 = 4.0;
/// Allowed range of `S(ε/2)/S(ε)`.
pub const HALVING_RANGE: (f64, f64) = (0.5, 2.0);

/// One point of an ε sweep; `gamma_r` is `None` when its integration failed.
#[derive(Debug, Clone, Copy)]
pub struct SweepInput<'a> {
    pub epsilon: f64,
    pub gamma_r: Option<&'a ScaledSeries>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    /// `sup_t Γ_{r,ε}/(ε² Φ_{β,p})`, absent when the run failed
    pub s: Option<f64>,
    pub sup_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub check: CheckReport,
    pub partial: bool,
}

/// `sup_t Γ_r/(ε² Φ_{β,p})` and where it is attained.
pub fn normalised_supremum(gamma_r: &ScaledSeries, eps: f64, beta: f64, p: f64) -> (f64, f64) {
    let shift = 2.0 * eps.ln();
    let mut best = (0.0, gamma_r.times.first().copied().unwrap_or(0.0));
    for i in 0..gamma_r.len() {
        let t = gamma_r.times[i];
        let v = gamma_r.value_in_frame(i, ln_phi(beta, p, t) + shift);
        if v > best.0 {
            best = (v, t);
        }
    }
    best
}

fn check_geometric(eps: &[f64]) -> Result<()> {
    if eps.len() < 3 {
        return Err(Error::config(format!("the sweep needs at least 3 values of epsilon, got {}", eps.len())));
    }
    for w in eps.windows(2) {
        if ((w[0] / w[1]) - 2.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "epsilon values must halve in descending order, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// `S(ε)` stable within a factor 4, and `S(ε/2)/S(ε) ∈ [1/2, 2]` for every halving.
///
/// Failed runs are listed without a value and make the report fail.
pub fn epsilon_sweep_decay_error(inputs: &[SweepInput<'_>], beta: f64, p: f64) -> Result<SweepReport> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::config(format!("beta must be positive, got {beta}")));
    }
    let eps: Vec<f64> = inputs.iter().map(|i| i.epsilon).collect();
    check_geometric(&eps)?;

    let points: Vec<SweepPoint> = inputs
        .iter()
        .map(|inp| {
            let m = inp.gamma_r.map(|g| normalised_supremum(g, inp.epsilon, beta, p));
            SweepPoint { epsilon: inp.epsilon, s: m.map(|x| x.0), sup_t: m.map(|x| x.1) }
        })
        .collect();
    let partial = points.iter().any(|pt| pt.s.is_none());
    let t_end = inputs.iter().filter_map(|i| i.gamma_r.and_then(|g| g.times.last().copied())).fold(0.0, f64::max);

    let values: Vec<f64> = points.iter().filter_map(|pt| pt.s).collect();
    let max = values.iter().copied().fold(0.0, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let spread = if max == 0.0 {
        1.0
    } else if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    };
    let mut worst = (SWEEP_SPREAD - spread) / SWEEP_SPREAD;
    let mut worst_halving = f64::NAN;
    for w in points.windows(2) {
        if let (Some(a), Some(b)) = (w[0].s, w[1].s) {
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let q = b / a;
            let slack = if q > 0.0 && q.is_finite() {
                (q / HALVING_RANGE.0).ln().min((HALVING_RANGE.1 / q).ln()) / 2f64.ln()
            } else {
                f64::NEG_INFINITY
            };
            if slack < worst {
                worst = slack;
                worst_halving = w[1].epsilon;
            }
        }
    }
    let mut check = CheckReport::new("decay_error_eps2", worst, t_end, 0.0).with_params([
        ("beta", beta),
        ("p", p),
        ("spread", spread),
        ("factor", SWEEP_SPREAD),
    ]);
    if worst_halving.is_finite() {
        check = check.with_param("worst_halving_epsilon", worst_halving);
    }
    if partial {
        check.passed = false;
        check.failure = Some(super::FailureKind::Conclusion);
        check = check.with_param("failed_runs", points.iter().filter(|pt| pt.s.is_none()).count() as f64);
    }
    Ok(SweepReport { points, check, partial })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeEntry {
    pub epsilon: f64,
    pub modes: usize,
    /// `sup Γ_ε e^{2μνt}` over `[0, t_end]`
    pub sup_full: f64,
    /// the same over `[0, t_end/2]`
    pub sup_half: f64,
    /// `sup_full` exceeds `sup_half` by more than 1%
    pub grows: bool,
}

/// Empirical look at the critical rate `β = 2μν` with `p = 0`.
/// Evidence only: no pass/fail verdict is attached.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OpenProblemProbe {
    pub informational: bool,
    pub note: &'static str,
    pub entries: Vec<ProbeEntry>,
}

pub fn probe_open_problem(runs: &[&Trajectory]) -> Result<OpenProblemProbe> {
    let mut entries = Vec::with_capacity(runs.len());
    for traj in runs {
        let eps = traj.flow.epsilon().ok_or_else(|| Error::config("the probe uses hyperbolic runs"))?;
        if traj.meta.p != 0.0 {
            return Err(Error::config("the probe is defined for p = 0"));
        }
        if !traj.meta.mass.is_constant() {
            return Err(Error::config("the probe needs a constant mass function"));
        }
        let rate = 2.0 * traj.meta.mass.mu() * traj.operator().nu();
        let g = gamma_series(traj);
        let t_half = 0.5 * traj.times.last().copied().unwrap_or(0.0);
        let (mut full, mut half) = (0.0f64, 0.0f64);
        for i in 0..g.len() {
            let t = g.times[i];
            let v = g.value_in_frame(i, -rate * t);
            full = full.max(v);
            if t <= t_half {
                half = half.max(v);
            }
        }
        entries.push(ProbeEntry {
            epsilon: eps,
            modes: traj.operator().dim(),
            sup_full: full,
            sup_half: half,
            grows: full > 1.01 * half,
        });
    }
    Ok(OpenProblemProbe { informational: true, note: "sampled evidence at the critical rate; not conclusive", entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energies::gamma_r_series;
    use crate::evolution::{remainders, Flow, IntegratorConfig, KirchhoffModel};
    use crate::spectral::{MassFunction, SpectralOperator};

    fn model(p: f64, modes: usize) -> KirchhoffModel {
        KirchhoffModel::new(SpectralOperator::power_family(1.0, modes, 1.0).unwrap(), MassFunction::Constant(1.0), p)
            .unwrap()
    }

    #[test]
    fn well_prepared_sweep_follows_the_square_law() {
        let m = model(0.5, 1);
        let cfg = IntegratorConfig::default();
        let u0 = [1.0];
        let u1 = m.well_prepared_velocity(&u0).unwrap();
        let par = m.integrate(Flow::Parabolic, &u0, None, 10.0, 2001, &cfg).unwrap();
        let mut series = Vec::new();
        for eps in [0.04, 0.02, 0.01] {
            let h = m.integrate(Flow::Hyperbolic { epsilon: eps }, &u0, Some(&u1), 10.0, 2001, &cfg).unwrap();
            let theta0 = m.theta0(&u0, &u1).unwrap();
            assert!(theta0.is_zero());
            let rem = remainders(&m, &h, &par, &theta0).unwrap();
            series.push((eps, gamma_r_series(&rem, &m.operator)));
        }
        let inputs: Vec<SweepInput> =
            series.iter().map(|(e, s)| SweepInput { epsilon: *e, gamma_r: Some(s) }).collect();
        let r = epsilon_sweep_decay_error(&inputs, 1.0, 0.5).unwrap();
        assert!(r.check.passed, "{r:#?}");
        assert!(r.points.iter().all(|pt| pt.s.unwrap() > 0.0));
    }

    #[test]
    fn zero_data_gives_zero_supremum() {
        let s = ScaledSeries::from_plain(vec![0.0, 1.0, 2.0], vec![0.0; 3]);
        let inputs: Vec<SweepInput> =
            [0.04, 0.02, 0.01].iter().map(|&e| SweepInput { epsilon: e, gamma_r: Some(&s) }).collect();
        let r = epsilon_sweep_decay_error(&inputs, 1.0, 0.5).unwrap();
        assert!(r.points.iter().all(|pt| pt.s == Some(0.0)));
        assert!(r.check.passed);
    }

    #[test]
    fn failed_runs_give_a_partial_report() {
        let s = ScaledSeries::from_plain(vec![0.0, 1.0, 2.0], vec![1e-4, 1e-4, 1e-4]);
        let inputs = [
            SweepInput { epsilon: 0.04, gamma_r: Some(&s) },
            SweepInput { epsilon: 0.02, gamma_r: Some(&s) },
            SweepInput { epsilon: 0.01, gamma_r: None },
        ];
        let r = epsilon_sweep_decay_error(&inputs, 1.0, 0.5).unwrap();
        assert!(r.partial);
        assert!(!r.check.passed);
        assert_eq!(r.points[2].s, None);
        assert!(r.points[0].s.is_some());
    }

    #[test]
    fn sweep_grid_is_validated() {
        let s = ScaledSeries::from_plain(vec![0.0, 1.0], vec![0.0; 2]);
        let two = [SweepInput { epsilon: 0.04, gamma_r: Some(&s) }, SweepInput { epsilon: 0.02, gamma_r: Some(&s) }];
        assert!(matches!(epsilon_sweep_decay_error(&two, 1.0, 0.5), Err(Error::Config(_))));
        let uneven: Vec<SweepInput> =
            [0.04, 0.02, 0.005].iter().map(|&e| SweepInput { epsilon: e, gamma_r: Some(&s) }).collect();
        assert!(matches!(epsilon_sweep_decay_error(&uneven, 1.0, 0.5), Err(Error::Config(_))));
    }

    #[test]
    fn scalar_probe_stays_bounded() {
        let m = model(0.0, 1);
        let cfg = IntegratorConfig::default();
        let h = m.integrate(Flow::Hyperbolic { epsilon: 0.1 }, &[1.0], Some(&[0.0]), 20.0, 2001, &cfg).unwrap();
        let z = m.integrate(Flow::Hyperbolic { epsilon: 0.1 }, &[0.0], Some(&[0.0]), 20.0, 201, &cfg).unwrap();
        let probe = probe_open_problem(&[&h, &z]).unwrap();
        assert!(probe.informational);
        assert!(!probe.entries[0].grows, "{probe:?}");
        assert!(probe.entries[0].sup_full.is_finite());
        assert_eq!(probe.entries[1].sup_full, 0.0);
    }

    #[test]
    fn probe_requires_p_zero() {
        let m = model(0.5, 1);
        let h = m
            .integrate(Flow::Hyperbolic { epsilon: 0.1 }, &[1.0], Some(&[0.0]), 1.0, 11, &IntegratorConfig::default())
            .unwrap();
        assert!(matches!(probe_open_problem(&[&h]), Err(Error::Config(_))));
    }
}
