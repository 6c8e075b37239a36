//! Coefficient hypotheses and weighted-bound constants as measured suprema.
//!
//! Each constant is a supremum over a run. "Bounded" is tested as stability:
//! the suprema agree within a factor 2 across the ε sweep, and the supremum
//! over the whole run is within a factor 2 of the one over its first half.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{Flow, Trajectory};
use crate::scalar::damping_power;

use super::monitors::monitor_tolerance;
use super::{CheckReport, SlackTracker};

/// Allowed spread of a measured supremum.
pub const STABILITY_FACTOR: f64 = 2.0;

/// Supremum over the whole run and over its first half.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Supremum {
    pub full: f64,
    pub half: f64,
}

impl Supremum {
    fn measure(times: &[f64], values: impl Iterator<Item = f64>) -> Self {
        let t_half = 0.5 * times.last().copied().unwrap_or(0.0);
        let mut full = 0.0f64;
        let mut half = 0.0f64;
        for (&t, v) in times.iter().zip(values) {
            full = full.max(v);
            if t <= t_half {
                half = half.max(v);
            }
        }
        Self { full, half }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParabolicConstants {
    /// `sup c`
    pub m1: Supremum,
    /// `sup |c'|`
    pub m2: Supremum,
    /// `sup (1+t)²|u'|² + (1+t)^{1+p}|A^{1/2}u|² + (1+t)^{2(1+p)}|Au|²`
    pub c_2_2: Supremum,
    pub min_c: f64,
    pub min_c_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonConstants {
    pub epsilon: f64,
    /// `sup c_ε`
    pub m3: Supremum,
    /// `sup (1+t)^p |c_ε'|`
    pub m4: Supremum,
    /// `sup |c_ε - c|/ε`
    pub m5: Supremum,
    /// weighted bound of the hyperbolic solution
    pub c_2_4: Supremum,
    pub min_c: f64,
    pub min_c_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub parabolic: ParabolicConstants,
    pub per_epsilon: Vec<EpsilonConstants>,
    pub checks: Vec<CheckReport>,
}

impl HypothesisReport {
    /// One report aggregating every check: passes iff all of them pass.
    pub fn summary(&self) -> CheckReport {
        let worst = self.checks.iter().min_by(|a, b| a.worst_slack.total_cmp(&b.worst_slack)).cloned();
        let mut r = match worst {
            Some(w) => {
                let mut r = CheckReport::new("hypotheses", w.worst_slack, w.worst_t, w.tolerance());
                r.passed = self.checks.iter().all(|c| c.passed);
                r.failure = if r.passed { None } else { w.failure };
                r
            }
            None => CheckReport::new("hypotheses", 0.0, 0.0, 0.0),
        };
        r.params.insert("checks".into(), self.checks.len() as f64);
        r
    }

    /// `M1..M5`, `C_2_2`, `C_2_4`; sweep-dependent constants are maxima over the sweep.
    pub fn measured_constants(&self) -> BTreeMap<String, f64> {
        let over = |f: fn(&EpsilonConstants) -> f64| self.per_epsilon.iter().map(f).fold(0.0, f64::max);
        BTreeMap::from([
            ("M1".to_string(), self.parabolic.m1.full),
            ("M2".to_string(), self.parabolic.m2.full),
            ("M3".to_string(), over(|e| e.m3.full)),
            ("M4".to_string(), over(|e| e.m4.full)),
            ("M5".to_string(), over(|e| e.m5.full)),
            ("C_2_2".to_string(), self.parabolic.c_2_2.full),
            ("C_2_4".to_string(), over(|e| e.c_2_4.full)),
        ])
    }
}

fn weighted_bound(traj: &Trajectory) -> Supremum {
    let op = traj.operator();
    let p = traj.meta.p;
    let values = (0..traj.len()).map(|i| {
        let t = traj.times[i];
        let w = (2.0 * traj.ln_scale(i)).exp();
        let u = traj.u_scaled(i);
        w * (damping_power(t, 2.0) * traj.v_scaled(i).norm_sq()
            + damping_power(t, 1.0 + p) * op.norm_sq_unchecked(u, 0.5)
            + damping_power(t, 2.0 * (1.0 + p)) * op.norm_sq_unchecked(u, 1.0))
    });
    Supremum::measure(&traj.times, values)
}

/// Smallest value and the time where it occurs.
fn argmin(times: &[f64], v: &[f64]) -> (f64, f64) {
    times.iter().zip(v).fold((f64::INFINITY, 0.0), |acc, (&t, &x)| if x < acc.0 { (x, t) } else { acc })
}

fn same_grid(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0))
}

/// Margin of `max/min ≤ factor`, as `(factor - ratio)/factor`.
fn spread_slack(values: &[f64], factor: f64) -> f64 {
    let max = values.iter().copied().fold(0.0, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        return 1.0;
    }
    if min <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (factor - max / min) / factor
}

/// Measures the constants of a parabolic run and a hyperbolic ε sweep on the
/// same grid, and checks the lower bound `c ≥ μ` and their stability.
pub fn check_hypotheses(parabolic: &Trajectory, hyperbolic: &[&Trajectory]) -> Result<HypothesisReport> {
    if parabolic.flow != Flow::Parabolic {
        return Err(Error::domain("the reference trajectory must be parabolic"));
    }
    let p = parabolic.meta.p;
    let mu = parabolic.meta.mass.mu();
    let times = &parabolic.times;
    let t_end = times.last().copied().unwrap_or(0.0);

    let c = &parabolic.c_trace;
    let c_prime = parabolic.c_prime_trace();
    let (min_c, min_c_t) = argmin(times, c);
    let par = ParabolicConstants {
        m1: Supremum::measure(times, c.iter().copied()),
        m2: Supremum::measure(times, c_prime.iter().map(|x| x.abs())),
        c_2_2: weighted_bound(parabolic),
        min_c,
        min_c_t,
    };

    let mut per_epsilon = Vec::with_capacity(hyperbolic.len());
    let mut tol = monitor_tolerance(parabolic.meta.config.rel_tol);
    for traj in hyperbolic {
        let eps = traj.flow.epsilon().ok_or_else(|| Error::domain("sweep trajectories must be hyperbolic"))?;
        if !same_grid(&traj.times, times) {
            return Err(Error::GridMismatch(format!("run with epsilon = {eps} is sampled on a different grid")));
        }
        if traj.meta.mass != parabolic.meta.mass || (traj.meta.p - p).abs() > 1e-12 {
            return Err(Error::config("sweep runs must share the mass function and p of the reference run"));
        }
        tol = tol.max(monitor_tolerance(traj.meta.config.rel_tol));
        let ce = &traj.c_trace;
        let ce_prime = traj.c_prime_trace();
        let (min_c, min_c_t) = argmin(times, ce);
        per_epsilon.push(EpsilonConstants {
            epsilon: eps,
            m3: Supremum::measure(times, ce.iter().copied()),
            m4: Supremum::measure(times, times.iter().zip(&ce_prime).map(|(&t, d)| damping_power(t, p) * d.abs())),
            m5: Supremum::measure(times, ce.iter().zip(c).map(|(a, b)| (a - b).abs() / eps)),
            c_2_4: weighted_bound(traj),
            min_c,
            min_c_t,
        });
    }

    let mut checks = Vec::new();
    let mut lower = SlackTracker::new(0.0);
    lower.observe((par.min_c - mu) / mu, par.min_c_t);
    for e in &per_epsilon {
        lower.observe((e.min_c - mu) / mu, e.min_c_t);
    }
    checks.push(CheckReport::from_tracker("hypothesis_c_lower_bound", &lower.finish(), tol).with_param("mu", mu));

    type Pick = fn(&EpsilonConstants) -> Supremum;
    let swept: [(&str, Pick); 4] = [("M3", |e| e.m3), ("M4", |e| e.m4), ("M5", |e| e.m5), ("C_2_4", |e| e.c_2_4)];
    for (name, pick) in swept {
        let values: Vec<f64> = per_epsilon.iter().map(|e| pick(e).full).collect();
        let slack = if values.len() < 2 { 1.0 } else { spread_slack(&values, STABILITY_FACTOR) };
        checks.push(
            CheckReport::new(format!("hypothesis_sweep_stable_{name}"), slack, t_end, 0.0)
                .with_param("factor", STABILITY_FACTOR)
                .with_param("runs", values.len() as f64),
        );
    }

    let mut grid: Vec<(String, f64, f64)> = vec![
        ("M1".into(), 0.0, spread_slack(&[par.m1.full, par.m1.half], STABILITY_FACTOR)),
        ("M2".into(), 0.0, spread_slack(&[par.m2.full, par.m2.half], STABILITY_FACTOR)),
        ("C_2_2".into(), 0.0, spread_slack(&[par.c_2_2.full, par.c_2_2.half], STABILITY_FACTOR)),
    ];
    for (name, pick) in swept {
        let mut worst = (0.0, f64::INFINITY);
        for e in &per_epsilon {
            let s = pick(e);
            let slack = spread_slack(&[s.full, s.half], STABILITY_FACTOR);
            if slack < worst.1 {
                worst = (e.epsilon, slack);
            }
        }
        if !per_epsilon.is_empty() {
            grid.push((name.into(), worst.0, worst.1));
        }
    }
    for (name, eps, slack) in grid {
        checks.push(
            CheckReport::new(format!("hypothesis_time_grid_stable_{name}"), slack, t_end, 0.0)
                .with_param("factor", STABILITY_FACTOR)
                .with_param("epsilon", eps),
        );
    }

    Ok(HypothesisReport { parabolic: par, per_epsilon, checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{IntegratorConfig, KirchhoffModel};
    use crate::spectral::{MassFunction, SpectralOperator};

    fn runs(model: &KirchhoffModel, u0: &[f64], u1: &[f64], eps: &[f64], t_end: f64) -> (Trajectory, Vec<Trajectory>) {
        let cfg = IntegratorConfig::default();
        let par = model.integrate(Flow::Parabolic, u0, None, t_end, 801, &cfg).unwrap();
        let hyp = eps
            .iter()
            .map(|&e| model.integrate(Flow::Hyperbolic { epsilon: e }, u0, Some(u1), t_end, 801, &cfg).unwrap())
            .collect();
        (par, hyp)
    }

    #[test]
    fn constant_mass_has_flat_coefficients() {
        let model = KirchhoffModel::new(
            SpectralOperator::from_eigenvalues(vec![1.0]).unwrap(),
            MassFunction::Constant(2.0),
            0.5,
        )
        .unwrap();
        let (par, hyp) = runs(&model, &[1.0], &[0.0], &[0.04, 0.02], 10.0);
        let refs: Vec<&Trajectory> = hyp.iter().collect();
        let r = check_hypotheses(&par, &refs).unwrap();
        let m = r.measured_constants();
        assert_eq!(m["M1"], 2.0);
        assert_eq!(m["M2"], 0.0);
        assert_eq!(m["M4"], 0.0);
        assert_eq!(m["M5"], 0.0);
        assert_eq!(m["M3"], 2.0);
        assert!(r.summary().passed, "{:#?}", r.checks);
    }

    #[test]
    fn zero_data_gives_constant_traces() {
        let model = KirchhoffModel::new(
            SpectralOperator::uniform_family(1.0, 2, 1.0).unwrap(),
            MassFunction::Affine(1.0, 1.0),
            0.5,
        )
        .unwrap();
        let (par, hyp) = runs(&model, &[0.0, 0.0], &[0.0, 0.0], &[0.04], 5.0);
        let r = check_hypotheses(&par, &[&hyp[0]]).unwrap();
        let m = r.measured_constants();
        assert_eq!((m["M1"], m["M2"], m["M4"], m["M5"], m["C_2_4"]), (1.0, 0.0, 0.0, 0.0, 0.0));
        assert!(r.summary().passed);
    }

    #[test]
    fn affine_mass_sweep_is_stable() {
        let model = KirchhoffModel::new(
            SpectralOperator::uniform_family(1.0, 2, 1.0).unwrap(),
            MassFunction::Affine(1.0, 1.0),
            0.5,
        )
        .unwrap();
        let (par, hyp) = runs(&model, &[0.5, 0.5], &[0.0, 0.0], &[0.04, 0.02, 0.01], 10.0);
        let refs: Vec<&Trajectory> = hyp.iter().collect();
        let r = check_hypotheses(&par, &refs).unwrap();
        for name in ["M4", "M5"] {
            let c = r.checks.iter().find(|c| c.name == format!("hypothesis_sweep_stable_{name}")).unwrap();
            assert!(c.passed, "{c:?}");
        }
        assert!(r.measured_constants()["M5"] > 0.0);
        assert!(r.summary().passed, "{:#?}", r.checks);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let model = KirchhoffModel::new(
            SpectralOperator::from_eigenvalues(vec![1.0]).unwrap(),
            MassFunction::Constant(1.0),
            0.0,
        )
        .unwrap();
        let cfg = IntegratorConfig::default();
        let par = model.integrate(Flow::Parabolic, &[1.0], None, 5.0, 51, &cfg).unwrap();
        let hyp = model.integrate(Flow::Hyperbolic { epsilon: 0.1 }, &[1.0], Some(&[0.0]), 5.0, 41, &cfg).unwrap();
        assert!(matches!(check_hypotheses(&par, &[&hyp]), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn spread_slack_cases() {
        assert_eq!(spread_slack(&[0.0, 0.0], 2.0), 1.0);
        assert_eq!(spread_slack(&[0.0, 1.0], 2.0), f64::NEG_INFINITY);
        assert_eq!(spread_slack(&[1.0, 2.0], 2.0), 0.0);
        assert!(spread_slack(&[1.0, 3.0], 2.0) < 0.0);
    }
}
