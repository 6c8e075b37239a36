//! Integral and pointwise residual bounds, and weighted parabolic integrals.

use serde::Serialize;

use crate::energies::{gamma_rate, ln_phi, ln_psi};
use crate::error::{Error, Result};
use crate::evolution::{ln_corrector_profile, Flow, Trajectory};
use crate::quadrature::{integrate_to_infinity, simpson};
use crate::scalar::damping_power;
use crate::series::ScaledSeries;

use super::CheckReport;

/// Relative tolerance of the adaptive quadratures used here.
pub const QUADRATURE_TOL: f64 = 1e-8;

/// Allowed spread of ε²-normalised residual quantities across a sweep.
pub const RESIDUAL_SPREAD: f64 = 4.0;

fn check_admissible(beta: f64, p: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::config(format!("beta must be positive, got {beta}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!("p must lie in [0, 1], got {p}")));
    }
    Ok(())
}

fn check_corrector_args(eps: f64, beta: f64, p: f64) -> Result<()> {
    check_admissible(beta, p)?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::config(format!("epsilon must be positive, got {eps}")));
    }
    if 2.0 * eps * beta > 1.0 {
        return Err(Error::config(format!(
            "the corrector bound requires 2·epsilon·beta <= 1, got {}",
            2.0 * eps * beta
        )));
    }
    Ok(())
}

/// `∫_0^∞ z_ε(t)/Φ_{β,p}(t) dt`.
pub fn corrector_weighted_integral(eps: f64, beta: f64, p: f64) -> Result<f64> {
    check_corrector_args(eps, beta, p)?;
    let r = integrate_to_infinity(|t| (ln_corrector_profile(eps, p, t) - ln_phi(beta, p, t)).exp(), 0.0, 1e-14, 1e-12)?;
    Ok(r.value)
}

/// `∫_0^∞ z_ε/Φ_{β,p} ≤ 4ε`.
pub fn check_corrector_bound(eps: f64, beta: f64, p: f64) -> Result<CheckReport> {
    let value = corrector_weighted_integral(eps, beta, p)?;
    let bound = 4.0 * eps;
    Ok(CheckReport::new("corrector_bound", (bound - value) / bound, 0.0, QUADRATURE_TOL).with_params([
        ("epsilon", eps),
        ("beta", beta),
        ("p", p),
        ("value", value),
        ("bound", bound),
    ]))
}

/// ε²-normalised residual quantities of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualPoint {
    pub epsilon: f64,
    /// `ε^{-2} ∫ (1+t)^p |g_ε|²/Φ_{β,p}` over the sampled range
    pub integral: f64,
    /// `ε^{-2} sup |g_ε|²/Φ_{β,p}`
    pub sup: f64,
    /// time of the supremum
    pub sup_t: f64,
}

/// Measures the normalised quantities from `|g_ε|²` sampled along a run.
pub fn residual_point(g_sq: &ScaledSeries, eps: f64, beta: f64, p: f64) -> Result<ResidualPoint> {
    check_admissible(beta, p)?;
    if g_sq.len() < 2 {
        return Err(Error::DegenerateInput("residual series needs at least two samples".into()));
    }
    let ratio: Vec<f64> = (0..g_sq.len()).map(|i| g_sq.value_in_frame(i, ln_phi(beta, p, g_sq.times[i]))).collect();
    let weighted: Vec<f64> = g_sq.times.iter().zip(&ratio).map(|(&t, r)| damping_power(t, p) * r).collect();
    let (sup, sup_t) =
        g_sq.times.iter().zip(&ratio).fold((0.0, g_sq.times[0]), |acc, (&t, &r)| if r > acc.0 { (r, t) } else { acc });
    let e2 = eps * eps;
    Ok(ResidualPoint { epsilon: eps, integral: simpson(&g_sq.times, &weighted) / e2, sup: sup / e2, sup_t })
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (min, max) = values.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if max == 0.0 {
        1.0
    } else if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Residual checks over an ε sweep: the corrector bound at every ε, and
/// stability within a factor 4 of the ε²-normalised integral and supremum.
///
/// `runs` pairs each ε with `|g_ε|²` on its grid.
pub fn check_residual_bounds(
    runs: &[(f64, &ScaledSeries)],
    beta: f64,
    p: f64,
    mu: f64,
    nu: f64,
) -> Result<(Vec<ResidualPoint>, Vec<CheckReport>)> {
    check_admissible(beta, p)?;
    if p == 0.0 && beta >= 2.0 * mu * nu {
        return Err(Error::config(format!("p=0 requires beta < 2·mu·nu (beta = {beta}, 2·mu·nu = {})", 2.0 * mu * nu)));
    }
    let mut points = Vec::with_capacity(runs.len());
    let mut checks = Vec::new();
    for &(eps, g) in runs {
        checks.push(check_corrector_bound(eps, beta, p)?);
        points.push(residual_point(g, eps, beta, p)?);
    }
    let t_end = runs.iter().filter_map(|(_, g)| g.times.last().copied()).fold(0.0, f64::max);
    type Pick = fn(&ResidualPoint) -> f64;
    let kinds: [(&str, Pick); 2] =
        [("residual_integral_eps2_stable", |r| r.integral), ("residual_sup_eps2_stable", |r| r.sup)];
    for (name, pick) in kinds {
        let s = spread(points.iter().map(pick));
        checks.push(CheckReport::new(name, (RESIDUAL_SPREAD - s) / RESIDUAL_SPREAD, t_end, 0.0).with_params([
            ("beta", beta),
            ("p", p),
            ("spread", s),
            ("factor", RESIDUAL_SPREAD),
        ]));
    }
    Ok((points, checks))
}

/// `∫ |A^{(k+1)/2}u|²/Ψ_{α,p} ≤ (2μ - α(1+p)/ν)^{-1} |A^{k/2}u_0|²` on a
/// parabolic run, by Simpson's rule over the samples.
pub fn check_parabolic_integral(traj: &Trajectory, alpha: f64, k: f64, tolerance: f64) -> Result<CheckReport> {
    if traj.flow != Flow::Parabolic {
        return Err(Error::domain("a parabolic trajectory is required"));
    }
    let p = traj.meta.p;
    let mu = traj.meta.mass.mu();
    let op = traj.operator();
    let nu = op.nu();
    let gamma = gamma_rate(mu, nu, p);
    if !(alpha > 0.0 && alpha < gamma) {
        return Err(Error::config(format!("alpha must lie in (0, {gamma}), got {alpha}")));
    }
    let integrand: Vec<f64> = (0..traj.len())
        .map(|i| {
            let ln = 2.0 * traj.ln_scale(i) - ln_psi(alpha, p, traj.times[i]);
            op.norm_sq_unchecked(traj.u_scaled(i), 0.5 * (k + 1.0)) * ln.exp()
        })
        .collect();
    let value = simpson(&traj.times, &integrand);
    let initial = (2.0 * traj.ln_scale(0)).exp() * op.norm_sq_unchecked(traj.u_scaled(0), 0.5 * k);
    let bound = initial / (2.0 * mu - alpha * (1.0 + p) / nu);
    let slack = if bound == 0.0 {
        if value == 0.0 {
            0.0
        } else {
            -1.0
        }
    } else {
        (bound - value) / bound
    };
    let t_end = traj.times.last().copied().unwrap_or(0.0);
    Ok(CheckReport::new("parabolic_weighted_integral", slack, t_end, tolerance).with_params([
        ("alpha", alpha),
        ("k", k),
        ("p", p),
        ("value", value),
        ("bound", bound),
    ]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{IntegratorConfig, KirchhoffModel};
    use crate::spectral::{MassFunction, SpectralOperator};
    use approx::assert_relative_eq;

    #[test]
    fn corrector_integral_closed_forms() {
        // p = 0: ∫ e^{-t/ε} e^{βt} = 1/(1/ε - β)
        assert_relative_eq!(corrector_weighted_integral(0.2, 1.0, 0.0).unwrap(), 0.25, max_relative = 1e-10);
        // p = 1: ∫ (1+t)^{-(1/ε - β)} = 1/(1/ε - β - 1)
        assert_relative_eq!(corrector_weighted_integral(0.1, 1.0, 1.0).unwrap(), 1.0 / 8.0, max_relative = 1e-10);
        let r = check_corrector_bound(0.2, 1.0, 0.0).unwrap();
        assert!(r.passed);
        assert_relative_eq!(r.params["bound"], 0.8);
    }

    #[test]
    fn corrector_bound_requires_small_epsilon_beta() {
        assert!(matches!(check_corrector_bound(0.6, 1.0, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn constant_mass_residual_is_epsilon_free_after_normalisation() {
        let model = KirchhoffModel::new(
            SpectralOperator::from_eigenvalues(vec![1.0]).unwrap(),
            MassFunction::Constant(1.0),
            0.5,
        )
        .unwrap();
        let par = model.integrate(Flow::Parabolic, &[1.0], None, 10.0, 1001, &IntegratorConfig::default()).unwrap();
        let c = vec![1.0; par.len()];
        let series: Vec<(f64, ScaledSeries)> = [0.04, 0.02, 0.01]
            .iter()
            .map(|&e| (e, crate::evolution::residual_norm_sq_series(&model, &par, &par.times, &c, e).unwrap()))
            .collect();
        let runs: Vec<(f64, &ScaledSeries)> = series.iter().map(|(e, s)| (*e, s)).collect();
        let (points, checks) = check_residual_bounds(&runs, 1.0, 0.5, 1.0, 1.0).unwrap();
        for w in points.windows(2) {
            assert_relative_eq!(w[0].integral, w[1].integral, max_relative = 1e-12);
            assert_relative_eq!(w[0].sup, w[1].sup, max_relative = 1e-12);
        }
        assert!(points[0].integral > 0.0);
        assert!(checks.iter().all(|c| c.passed), "{checks:#?}");
    }

    #[test]
    fn residual_rejects_inadmissible_beta() {
        let s = ScaledSeries::from_plain(vec![0.0, 1.0, 2.0], vec![0.0; 3]);
        assert!(matches!(check_residual_bounds(&[(0.1, &s)], 2.5, 0.0, 1.0, 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn parabolic_integral_is_tight_without_damping_growth() {
        let model = KirchhoffModel::new(
            SpectralOperator::from_eigenvalues(vec![1.0]).unwrap(),
            MassFunction::Constant(1.0),
            0.0,
        )
        .unwrap();
        let cfg = IntegratorConfig { rel_tol: 1e-11, abs_tol: 1e-14, ..IntegratorConfig::default() };
        let par = model.integrate(Flow::Parabolic, &[1.0], None, 40.0, 4001, &cfg).unwrap();
        let r = check_parabolic_integral(&par, 1.0, 1.0, 1e-6).unwrap();
        assert!(r.passed, "{r:?}");
        assert_relative_eq!(r.params["value"], 1.0, max_relative = 1e-6);
        assert_relative_eq!(r.params["bound"], 1.0);
        assert!(matches!(check_parabolic_integral(&par, 2.0, 1.0, 1e-6), Err(Error::Config(_))));
    }
}
