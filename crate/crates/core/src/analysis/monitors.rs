//! Discrete checks of sampled differential inequalities `y' ≤ -a(t) y + b(t)`.
//!
//! Between consecutive samples the inequality is integrated exactly for the
//! damping term and with `b` linear in time:
//! `y_{i+1} - e^{-κ} y_i ≤ Δt (w₀(κ) b_i + w₁(κ) b_{i+1})`, `κ = ∫ a`.
//! Slack is the margin relative to the largest term, so it is meaningful at
//! any magnitude of the (log-scaled) series.

use crate::energies::{e_series, f_series, gamma_rate, gamma_series, ln_psi, script_f_series, LyapunovParams};
use crate::error::{Error, Result};
use crate::evolution::{Flow, Remainders, Trajectory};
use crate::scalar::{exp_moment, one_minus_exp_over, weighted_time};
use crate::series::ScaledSeries;

use super::{CheckReport, SlackTracker};

/// Relative tolerance of the monitors given the integrator tolerance.
pub fn monitor_tolerance(rel_tol: f64) -> f64 {
    10.0 * rel_tol
}

/// Worst relative slack of `y' ≤ -a y + b` over samples with `t ≥ t_start`.
///
/// `primitive` is an antiderivative of `a`; `source` is `b` on the same grid.
pub fn inequality_slack(
    y: &ScaledSeries,
    primitive: impl Fn(f64) -> f64,
    source: Option<&ScaledSeries>,
    t_start: f64,
) -> Result<SlackTracker> {
    if let Some(b) = source {
        if b.len() != y.len() {
            return Err(Error::GridMismatch(format!("source has {} samples, series has {}", b.len(), y.len())));
        }
    }
    let mut tracker = SlackTracker::new(y.times.first().copied().unwrap_or(0.0));
    for i in 0..y.len().saturating_sub(1) {
        let (t0, t1) = (y.times[i], y.times[i + 1]);
        if t0 < t_start {
            continue;
        }
        let dt = t1 - t0;
        let kappa = primitive(t1) - primitive(t0);
        let frame = y.ln_scale[i].max(y.ln_scale[i + 1]);
        let y1 = y.value_in_frame(i + 1, frame);
        let y0 = y.value_in_frame(i, frame) * (-kappa).exp();
        let rhs = match source {
            Some(b) => {
                let w0 = exp_moment(kappa);
                let w1 = one_minus_exp_over(kappa) - w0;
                dt * (w0 * b.value_in_frame(i, frame) + w1 * b.value_in_frame(i + 1, frame))
            }
            None => 0.0,
        };
        let lhs = y1 - y0;
        let scale = y1.abs().max(y0.abs()).max(rhs.abs());
        let slack = if scale == 0.0 { 0.0 } else { (rhs - lhs) / scale };
        tracker.observe(slack, t1);
    }
    Ok(tracker.finish())
}

fn hyperbolic_epsilon(traj: &Trajectory) -> Result<f64> {
    traj.flow.epsilon().ok_or_else(|| Error::domain("a hyperbolic trajectory is required"))
}

/// `E_ε' ≤ 0` along a hyperbolic run.
pub fn check_energy_monotone(traj: &Trajectory) -> Result<CheckReport> {
    let eps = hyperbolic_epsilon(traj)?;
    let tol = monitor_tolerance(traj.meta.config.rel_tol);
    let tracker = inequality_slack(&e_series(traj)?, |_| 0.0, None, 0.0)?;
    Ok(CheckReport::from_tracker("energy_monotone", &tracker, tol).with_params([("epsilon", eps), ("p", traj.meta.p)]))
}

/// The functional whose Lyapunov inequality is checked.
#[derive(Debug, Clone, Copy)]
pub enum LyapunovTarget<'a> {
    /// `F_ε' ≤ -β(1+t)^{-p} F_ε` along a hyperbolic run.
    Solution(&'a Trajectory),
    /// `𝓕_ε' ≤ -β(1+t)^{-p} 𝓕_ε + ψ₃` for the remainders, with `ψ₃` on the same grid.
    Remainder { remainders: &'a Remainders, trajectory: &'a Trajectory, psi3: &'a ScaledSeries },
}

pub fn check_lyapunov_decay(target: LyapunovTarget<'_>, lp: &LyapunovParams) -> Result<CheckReport> {
    let traj = match target {
        LyapunovTarget::Solution(t) => t,
        LyapunovTarget::Remainder { trajectory, .. } => trajectory,
    };
    let eps = hyperbolic_epsilon(traj)?;
    let mu = traj.meta.mass.mu();
    let nu = traj.meta.operator.nu();
    lp.validate(mu, nu)?;
    if (lp.p - traj.meta.p).abs() > 1e-12 {
        return Err(Error::config(format!("constants built for p = {} but the run has p = {}", lp.p, traj.meta.p)));
    }
    let primitive = |t: f64| lp.beta * weighted_time(lp.p, t);
    let (name, tracker) = match target {
        LyapunovTarget::Solution(t) => {
            ("lyapunov_f", inequality_slack(&f_series(t, lp)?, primitive, None, lp.t_start)?)
        }
        LyapunovTarget::Remainder { remainders, psi3, .. } => {
            if lp.sigma.is_none() {
                return Err(Error::config("the remainder functional needs perturbation-case constants"));
            }
            let f = script_f_series(remainders, traj.operator(), lp);
            ("lyapunov_script_f", inequality_slack(&f, primitive, Some(psi3), lp.t_start)?)
        }
    };
    let mut report = CheckReport::from_tracker(name, &tracker, monitor_tolerance(traj.meta.config.rel_tol))
        .with_params([("epsilon", eps), ("p", lp.p), ("beta", lp.beta), ("delta", lp.delta), ("T", lp.t_start)]);
    if let Some(s) = lp.sigma {
        report = report.with_param("sigma", s);
    }
    Ok(report)
}

/// Relative margin of `value ≤ bound` given both as logarithms.
pub(crate) fn ln_margin(ln_bound: f64, ln_value: f64) -> f64 {
    if ln_value == f64::NEG_INFINITY {
        return 1.0;
    }
    let d = ln_value - ln_bound;
    if d <= 0.0 {
        -d.exp_m1()
    } else {
        (-d).exp_m1()
    }
}

/// `|u|² + |A^{1/2}u|² + |Au|² ≤ C Ψ_{γ,p}(t)` along a parabolic run, with
/// `C` taken from `t = 0` plus 5% headroom.
pub fn check_parabolic_decay_bound(traj: &Trajectory) -> Result<CheckReport> {
    if traj.flow != Flow::Parabolic {
        return Err(Error::domain("a parabolic trajectory is required"));
    }
    let p = traj.meta.p;
    let gamma = gamma_rate(traj.meta.mass.mu(), traj.meta.operator.nu(), p);
    let w = gamma_series(traj);
    let tol = monitor_tolerance(traj.meta.config.rel_tol);
    if w.is_identically_zero() {
        return Ok(CheckReport::new("parabolic_decay_bound", 0.0, 0.0, tol).with_params([("p", p), ("gamma", gamma)]));
    }
    let ln_c = w.ln_abs(0) + 1.05f64.ln();
    let mut tracker = SlackTracker::new(0.0);
    for i in 0..w.len() {
        let t = w.times[i];
        tracker.observe(ln_margin(ln_c + ln_psi(gamma, p, t), w.ln_abs(i)), t);
    }
    Ok(CheckReport::from_tracker("parabolic_decay_bound", &tracker.finish(), tol).with_params([
        ("p", p),
        ("gamma", gamma),
        ("ln_c", ln_c),
    ]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energies::psi3_series;
    use crate::evolution::{remainders, IntegratorConfig, KirchhoffModel};
    use crate::spectral::{MassFunction, SpectralOperator};

    fn single(mass: MassFunction, p: f64) -> KirchhoffModel {
        KirchhoffModel::new(SpectralOperator::from_eigenvalues(vec![1.0]).unwrap(), mass, p).unwrap()
    }

    fn plain(times: &[f64], f: impl Fn(f64) -> f64) -> ScaledSeries {
        ScaledSeries::from_plain(times.to_vec(), times.iter().map(|&t| f(t)).collect())
    }

    fn grid(t_end: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| t_end * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn exact_solutions_sit_on_the_boundary() {
        let t = grid(5.0, 51);
        // y' = -2y + 1 with y(0) = 3: y = 1/2 + (5/2) e^{-2t}
        let y = plain(&t, |s| 0.5 + 2.5 * (-2.0 * s).exp());
        let b = plain(&t, |_| 1.0);
        let tr = inequality_slack(&y, |s| 2.0 * s, Some(&b), 0.0).unwrap();
        assert!(tr.worst.abs() < 1e-12, "{}", tr.worst);
        // a supersolution violates it
        let y = plain(&t, |s| 0.6 + 2.5 * (-1.9 * s).exp());
        let tr = inequality_slack(&y, |s| 2.0 * s, Some(&b), 0.0).unwrap();
        assert!(tr.worst < -1e-3);
    }

    #[test]
    fn start_time_skips_early_intervals() {
        let t = grid(4.0, 41);
        let y = plain(&t, |s| if s < 2.0 { s } else { 2.0 * (-(s - 2.0)).exp() });
        let tr = inequality_slack(&y, |s| s, None, 2.0).unwrap();
        assert!(tr.worst.abs() < 1e-12);
        assert!(inequality_slack(&y, |s| s, None, 0.0).unwrap().worst < 0.0);
    }

    #[test]
    fn scale_frames_are_respected() {
        let t = grid(1.0, 11);
        let y = ScaledSeries {
            times: t.clone(),
            mantissa: t.iter().map(|s| (-s).exp()).collect(),
            ln_scale: t.iter().map(|s| -2000.0 - 3.0 * s).collect(),
        };
        // y = e^{-2000 - 4t}: exactly y' = -4y
        let tr = inequality_slack(&y, |s| 4.0 * s, None, 0.0).unwrap();
        assert!(tr.worst.abs() < 1e-12);
    }

    #[test]
    fn energy_is_monotone_for_small_epsilon() {
        let m = single(MassFunction::Constant(1.0), 0.5);
        let traj = m
            .integrate(
                Flow::Hyperbolic { epsilon: 0.01 },
                &[1.0],
                Some(&[0.0]),
                10.0,
                2001,
                &IntegratorConfig::default(),
            )
            .unwrap();
        let r = check_energy_monotone(&traj).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn energy_monotonicity_can_fail_for_large_epsilon() {
        // affine m with a fast drop of σ: ε c'/c < -2(1+t)^{-p} near t = 0
        let m = single(MassFunction::Affine(1.0, 10.0), 0.5);
        let traj = m
            .integrate(
                Flow::Hyperbolic { epsilon: 2.0 },
                &[1.0],
                Some(&[-10.0]),
                2.0,
                401,
                &IntegratorConfig::default(),
            )
            .unwrap();
        let r = check_energy_monotone(&traj).unwrap();
        assert!(!r.passed, "{r:?}");
    }

    #[test]
    fn zero_solution_passes_trivially() {
        let m = single(MassFunction::Constant(1.0), 0.0);
        let traj = m
            .integrate(Flow::Hyperbolic { epsilon: 0.1 }, &[0.0], Some(&[0.0]), 1.0, 11, &IntegratorConfig::default())
            .unwrap();
        assert!(check_energy_monotone(&traj).unwrap().passed);
        let lp = LyapunovParams::decay(1.0, 0.0, 1.0, 1.0).unwrap();
        assert!(check_lyapunov_decay(LyapunovTarget::Solution(&traj), &lp).unwrap().passed);
    }

    #[test]
    fn lyapunov_decay_holds_on_a_run() {
        let m = single(MassFunction::Constant(1.0), 0.0);
        let traj = m
            .integrate(
                Flow::Hyperbolic { epsilon: 0.01 },
                &[1.0],
                Some(&[0.5]),
                10.0,
                2001,
                &IntegratorConfig::default(),
            )
            .unwrap();
        let lp = LyapunovParams::decay(1.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(lp.delta, 4.0);
        let r = check_lyapunov_decay(LyapunovTarget::Solution(&traj), &lp).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.params["delta"], 4.0);
    }

    #[test]
    fn inconsistent_constants_are_a_config_error() {
        let m = single(MassFunction::Constant(1.0), 0.0);
        let traj = m
            .integrate(Flow::Hyperbolic { epsilon: 0.1 }, &[1.0], Some(&[0.0]), 1.0, 11, &IntegratorConfig::default())
            .unwrap();
        let mut lp = LyapunovParams::decay(1.0, 0.0, 1.0, 1.0).unwrap();
        lp.delta = 3.0;
        assert!(matches!(check_lyapunov_decay(LyapunovTarget::Solution(&traj), &lp), Err(Error::Config(_))));
    }

    #[test]
    fn remainder_lyapunov_with_source() {
        let p = 0.5;
        let m = single(MassFunction::Constant(1.0), p);
        let cfg = IntegratorConfig::default();
        let u1 = [0.3];
        let h = m.integrate(Flow::Hyperbolic { epsilon: 0.01 }, &[1.0], Some(&u1), 20.0, 4001, &cfg).unwrap();
        let par = m.integrate(Flow::Parabolic, &[1.0], None, 20.0, 4001, &cfg).unwrap();
        let theta0 = m.theta0(&[1.0], &u1).unwrap();
        let rem = remainders(&m, &h, &par, &theta0).unwrap();
        let lp = LyapunovParams::perturbation(1.0, p, 1.0, 1.0).unwrap();
        let psi3 = psi3_series(&rem, &m.operator, &lp).unwrap();
        let target = LyapunovTarget::Remainder { remainders: &rem, trajectory: &h, psi3: &psi3 };
        let r = check_lyapunov_decay(target, &lp).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.params.contains_key("sigma"));
    }

    #[test]
    fn parabolic_bound_holds_for_constant_mass() {
        let model =
            KirchhoffModel::new(SpectralOperator::power_family(1.0, 3, 1.0).unwrap(), MassFunction::Constant(1.0), 0.5)
                .unwrap();
        let traj = model
            .integrate(Flow::Parabolic, &[1.0, 0.5, 0.25], None, 10.0, 1001, &IntegratorConfig::default())
            .unwrap();
        let r = check_parabolic_decay_bound(&traj).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.worst_slack >= 0.0);
    }

    #[test]
    fn ln_margin_signs() {
        assert!((ln_margin(0.0, (0.5f64).ln()) - 0.5).abs() < 1e-15);
        assert!((ln_margin(0.0, 2f64.ln()) + 0.5).abs() < 1e-15);
        assert_eq!(ln_margin(0.0, f64::NEG_INFINITY), 1.0);
    }
}
