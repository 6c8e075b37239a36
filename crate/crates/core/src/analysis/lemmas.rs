//! Sampled checks of the three comparison lemmas, and synthetic instances
//! that satisfy their hypotheses by construction.

use crate::energies::ln_phi;
use crate::error::{Error, Result};
use crate::integrator::{solve, OdeSystem, SolverOptions};
use crate::quadrature::simpson;
use crate::scalar::{damping_power, weighted_time};
use crate::series::ScaledSeries;

use super::monitors::{inequality_slack, ln_margin};
use super::{CheckReport, SlackTracker};

/// Inputs of one lemma instance, sampled on a common grid.
#[derive(Debug, Clone, Copy)]
pub enum LemmaInput<'a> {
    /// `G' ≤ -(1/ε)(1+t)^{-p} G + (K/ε)(1+t)^p Φ` ⇒ `G ≤ (2K + G(0))(1+t)^{2p} Φ`.
    Growth { g: &'a ScaledSeries, epsilon: f64, k: f64, beta: f64, p: f64 },
    /// `E(0) = 0`, `E' ≤ ψ₁√E + ψ₂` ⇒ `E ≤ K₁² + 2K₂`.
    ///
    /// `K₁`, `K₂` default to the integrals of `ψ₁`, `ψ₂` over the grid.
    SquareRoot { e: &'a [f64], times: &'a [f64], psi1: &'a [f64], psi2: &'a [f64], k1: Option<f64>, k2: Option<f64> },
    /// `F' ≤ -β(1+t)^{-p} F + ψ` for `t ≥ T` ⇒ `F ≤ (F(T)/Φ(T) + ∫ψ/Φ) Φ`.
    Forced { f: &'a ScaledSeries, psi: &'a ScaledSeries, t_start: f64, beta: f64, p: f64 },
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive, got {v}")))
    }
}

fn check_p(p: f64) -> Result<()> {
    if p.is_finite() && p >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("p must be >= 0, got {p}")))
    }
}

/// Checks the hypothesis on the grid, then the conclusion.
///
/// `tolerance` is relative; a hypothesis violated beyond it yields a
/// hypothesis-failure report rather than a conclusion verdict.
pub fn check_comparison_lemma(input: LemmaInput<'_>, tolerance: f64) -> Result<CheckReport> {
    match input {
        LemmaInput::Growth { g, epsilon, k, beta, p } => growth(g, epsilon, k, beta, p, tolerance),
        LemmaInput::SquareRoot { e, times, psi1, psi2, k1, k2 } => square_root(e, times, psi1, psi2, k1, k2, tolerance),
        LemmaInput::Forced { f, psi, t_start, beta, p } => forced(f, psi, t_start, beta, p, tolerance),
    }
}

fn growth(g: &ScaledSeries, eps: f64, k: f64, beta: f64, p: f64, tol: f64) -> Result<CheckReport> {
    check_positive("epsilon", eps)?;
    check_positive("K", k)?;
    check_positive("beta", beta)?;
    check_p(p)?;
    let params = [("epsilon", eps), ("K", k), ("beta", beta), ("p", p)];
    let t0 = g.times.first().copied().unwrap_or(0.0);
    if 2.0 * eps * beta > 1.0 {
        return Ok(CheckReport::hypothesis_failure("lemma_growth", 1.0 - 2.0 * eps * beta, t0, tol).with_params(params));
    }
    let source = ScaledSeries {
        times: g.times.clone(),
        mantissa: g.times.iter().map(|&t| k / eps * damping_power(t, p)).collect(),
        ln_scale: g.times.iter().map(|&t| ln_phi(beta, p, t)).collect(),
    };
    let hyp = inequality_slack(g, |t| weighted_time(p, t) / eps, Some(&source), 0.0)?;
    if hyp.worst < -tol {
        return Ok(CheckReport::hypothesis_failure("lemma_growth", hyp.worst, hyp.worst_t, tol).with_params(params));
    }
    let g0 = if g.is_empty() { 0.0 } else { g.value(0) };
    let ln_c = (2.0 * k + g0).ln();
    let mut tracker = SlackTracker::new(t0);
    for i in 0..g.len() {
        let t = g.times[i];
        tracker.observe(ln_margin(ln_c + 2.0 * p * t.ln_1p() + ln_phi(beta, p, t), g.ln_abs(i)), t);
    }
    Ok(CheckReport::from_tracker("lemma_growth", &tracker.finish(), tol)
        .with_params(params)
        .with_param("hypothesis_slack", hyp.worst)
        .with_param("constant", 2.0 * k + g0))
}

fn square_root(
    e: &[f64],
    times: &[f64],
    psi1: &[f64],
    psi2: &[f64],
    k1: Option<f64>,
    k2: Option<f64>,
    tol: f64,
) -> Result<CheckReport> {
    let n = times.len();
    if e.len() != n || psi1.len() != n || psi2.len() != n {
        return Err(Error::GridMismatch("series and weights must share the grid".into()));
    }
    if n < 2 {
        return Err(Error::DegenerateInput("at least two samples are required".into()));
    }
    if e.iter().chain(psi1).chain(psi2).any(|&v| !(v >= 0.0)) {
        return Err(Error::domain("the lemma is stated for nonnegative functions"));
    }
    let k1 = k1.unwrap_or_else(|| simpson(times, psi1));
    let k2 = k2.unwrap_or_else(|| simpson(times, psi2));
    let params = [("K1", k1), ("K2", k2)];
    let e_max = e.iter().copied().fold(0.0, f64::max);
    if e[0] > tol * e_max {
        return Ok(
            CheckReport::hypothesis_failure("lemma_square_root", -e[0] / e_max, times[0], tol).with_params(params)
        );
    }
    // √E is bounded by its larger endpoint value on each interval, as in the
    // lemma's own argument; this keeps the concave start from reading as a violation
    let mut hyp = SlackTracker::new(times[0]);
    for i in 0..n - 1 {
        let dt = times[i + 1] - times[i];
        let root = e[i].max(e[i + 1]).sqrt();
        let rhs = 0.5 * dt * ((psi1[i] + psi1[i + 1]) * root + psi2[i] + psi2[i + 1]);
        let lhs = e[i + 1] - e[i];
        let scale = e[i + 1].max(e[i]).max(rhs);
        hyp.observe(if scale == 0.0 { 0.0 } else { (rhs - lhs) / scale }, times[i + 1]);
    }
    let hyp = hyp.finish();
    if hyp.worst < -tol {
        return Ok(
            CheckReport::hypothesis_failure("lemma_square_root", hyp.worst, hyp.worst_t, tol).with_params(params)
        );
    }
    let bound = k1 * k1 + 2.0 * k2;
    let mut tracker = SlackTracker::new(times[0]);
    for i in 0..n {
        tracker.observe(ln_margin(bound.ln(), e[i].ln()), times[i]);
    }
    Ok(CheckReport::from_tracker("lemma_square_root", &tracker.finish(), tol)
        .with_params(params)
        .with_param("hypothesis_slack", hyp.worst)
        .with_param("bound", bound))
}

fn forced(f: &ScaledSeries, psi: &ScaledSeries, t_start: f64, beta: f64, p: f64, tol: f64) -> Result<CheckReport> {
    check_positive("beta", beta)?;
    check_p(p)?;
    if psi.len() != f.len() {
        return Err(Error::GridMismatch(format!("source has {} samples, series has {}", psi.len(), f.len())));
    }
    let start = f
        .times
        .iter()
        .position(|&t| t >= t_start)
        .ok_or_else(|| Error::domain(format!("no sample at or after T = {t_start}")))?;
    let t_eff = f.times[start];
    let params = [("beta", beta), ("p", p), ("T", t_eff)];
    let hyp = inequality_slack(f, |t| beta * weighted_time(p, t), Some(psi), t_eff)?;
    if hyp.worst < -tol {
        return Ok(CheckReport::hypothesis_failure("lemma_forced", hyp.worst, hyp.worst_t, tol).with_params(params));
    }
    let ratio: Vec<f64> = (0..psi.len()).map(|i| psi.value_in_frame(i, ln_phi(beta, p, psi.times[i]))).collect();
    let integral = simpson(&psi.times, &ratio);
    let constant = f.value_in_frame(start, ln_phi(beta, p, t_eff)) + integral;
    let mut tracker = SlackTracker::new(t_eff);
    for i in start..f.len() {
        let t = f.times[i];
        tracker.observe(ln_margin(constant.ln() + ln_phi(beta, p, t), f.ln_abs(i)), t);
    }
    Ok(CheckReport::from_tracker("lemma_forced", &tracker.finish(), tol)
        .with_params(params)
        .with_param("hypothesis_slack", hyp.worst)
        .with_param("constant", constant)
        .with_param("source_integral", integral))
}

struct ScalarOde<F: Fn(f64, f64) -> f64>(F);

impl<F: Fn(f64, f64) -> f64> OdeSystem for ScalarOde<F> {
    fn dim(&self) -> usize {
        1
    }

    fn rhs(&self, t: f64, y: &[f64], _ln_scale: f64, dy: &mut [f64]) {
        dy[0] = (self.0)(t, y[0]);
    }
}

fn uniform_grid(t_end: f64, samples: usize) -> Result<Vec<f64>> {
    check_positive("t_end", t_end)?;
    if samples < 3 {
        return Err(Error::DegenerateInput(format!("need at least 3 samples, got {samples}")));
    }
    Ok((0..samples).map(|i| t_end * i as f64 / (samples - 1) as f64).collect())
}

fn solve_scalar(f: impl Fn(f64, f64) -> f64, y0: f64, times: &[f64]) -> Result<Vec<f64>> {
    let opts = SolverOptions { rel_tol: 1e-11, abs_tol: 1e-14, ..SolverOptions::default() };
    let sol = solve(&ScalarOde(f), &[y0], times, &opts)?;
    Ok(sol.states.iter().map(|s| s[0]).collect())
}

/// Synthetic instances: subsolutions obtained by integrating the comparison
/// equation with its source scaled by `eta ∈ [0, 1)`.
pub mod synthetic {
    use super::*;

    /// `G' = -(1/ε)(1+t)^{-p} G + η (K/ε)(1+t)^p Φ_{β,p}`, `G(0) = g0`.
    ///
    /// Integrated for `G/Φ`, which stays of moderate size.
    #[allow(clippy::too_many_arguments)]
    pub fn growth(
        eps: f64,
        k: f64,
        beta: f64,
        p: f64,
        g0: f64,
        eta: f64,
        t_end: f64,
        samples: usize,
    ) -> Result<ScaledSeries> {
        let times = uniform_grid(t_end, samples)?;
        let w = solve_scalar(
            |t, w| -(1.0 / eps - beta) * damping_power(t, -p) * w + eta * k / eps * damping_power(t, p),
            g0,
            &times,
        )?;
        let ln_scale = times.iter().map(|&t| ln_phi(beta, p, t)).collect();
        Ok(ScaledSeries { times, mantissa: w, ln_scale })
    }

    /// `E' = η(ψ₁√E + ψ₂)`, `E(0) = 0`, with `ψ₁ = a e^{-bt}` and `ψ₂ = c e^{-dt}`.
    /// Returns `(times, E, ψ₁, ψ₂)`.
    #[allow(clippy::too_many_arguments, clippy::type_complexity)]
    pub fn square_root(
        a: f64,
        b: f64,
        c: f64,
        d: f64,
        eta: f64,
        t_end: f64,
        samples: usize,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        let times = uniform_grid(t_end, samples)?;
        let psi1 = |t: f64| a * (-b * t).exp();
        let psi2 = |t: f64| c * (-d * t).exp();
        let e = solve_scalar(|t, y| eta * (psi1(t) * y.max(0.0).sqrt() + psi2(t)), 0.0, &times)?;
        let p1 = times.iter().map(|&t| psi1(t)).collect();
        let p2 = times.iter().map(|&t| psi2(t)).collect();
        Ok((times, e, p1, p2))
    }

    /// `F' = -β(1+t)^{-p} F + η ψ` with `ψ = c e^{-dt}`, `F(0) = f0`.
    /// Returns `(F, ψ)`.
    #[allow(clippy::too_many_arguments)]
    pub fn forced(
        beta: f64,
        p: f64,
        f0: f64,
        c: f64,
        d: f64,
        eta: f64,
        t_end: f64,
        samples: usize,
    ) -> Result<(ScaledSeries, ScaledSeries)> {
        let times = uniform_grid(t_end, samples)?;
        // F/Φ and ψ/Φ, with Φ carried in the log scale
        let ratio = |t: f64| c * (-d * t - ln_phi(beta, p, t)).exp();
        let w = solve_scalar(|t, _| eta * ratio(t), f0, &times)?;
        let ln_scale: Vec<f64> = times.iter().map(|&t| ln_phi(beta, p, t)).collect();
        let psi = times.iter().map(|&t| ratio(t)).collect();
        Ok((
            ScaledSeries { times: times.clone(), mantissa: w, ln_scale: ln_scale.clone() },
            ScaledSeries { times, mantissa: psi, ln_scale },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::FailureKind;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const TOL: f64 = 1e-8;

    #[test]
    fn square_root_closed_case() {
        let times: Vec<f64> = (0..401).map(|i| i as f64 * 0.05).collect();
        let e: Vec<f64> = times.iter().map(|t| 1.0 - (-t).exp()).collect();
        let psi1 = vec![0.0; times.len()];
        let psi2: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        let input =
            LemmaInput::SquareRoot { e: &e, times: &times, psi1: &psi1, psi2: &psi2, k1: Some(0.0), k2: Some(1.0) };
        let r = check_comparison_lemma(input, TOL).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.params["bound"], 2.0);
    }

    #[test]
    fn square_root_needs_zero_start() {
        let times = vec![0.0, 1.0, 2.0];
        let e = vec![1.0, 1.0, 1.0];
        let z = vec![0.0; 3];
        let input = LemmaInput::SquareRoot { e: &e, times: &times, psi1: &z, psi2: &z, k1: None, k2: None };
        let r = check_comparison_lemma(input, TOL).unwrap();
        assert_eq!(r.failure, Some(FailureKind::Hypothesis));
    }

    #[test]
    fn zero_growth_series_is_bounded() {
        let g = ScaledSeries::from_plain(vec![0.0, 1.0, 2.0, 3.0], vec![0.0; 4]);
        let r =
            check_comparison_lemma(LemmaInput::Growth { g: &g, epsilon: 0.1, k: 1.0, beta: 1.0, p: 0.5 }, TOL).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn growth_requires_small_epsilon_beta() {
        let g = ScaledSeries::from_plain(vec![0.0, 1.0, 2.0], vec![0.0; 3]);
        let r =
            check_comparison_lemma(LemmaInput::Growth { g: &g, epsilon: 1.0, k: 1.0, beta: 1.0, p: 0.0 }, TOL).unwrap();
        assert_eq!(r.failure, Some(FailureKind::Hypothesis));
    }

    #[test]
    fn growth_rejects_supersolutions() {
        // G growing freely violates the differential hypothesis
        let times: Vec<f64> = (0..21).map(|i| i as f64 * 0.1).collect();
        let g = ScaledSeries::from_plain(times.clone(), times.iter().map(|t| t.exp()).collect());
        let r =
            check_comparison_lemma(LemmaInput::Growth { g: &g, epsilon: 0.1, k: 1.0, beta: 1.0, p: 0.0 }, TOL).unwrap();
        assert_eq!(r.failure, Some(FailureKind::Hypothesis));
    }

    #[test]
    fn forced_constant_matches_quadrature() {
        let (beta, p, c, d) = (1.0, 0.5, 2.0, 3.0);
        let (f, psi) = synthetic::forced(beta, p, 1.0, c, d, 1.0, 10.0, 2001).unwrap();
        let r = check_comparison_lemma(LemmaInput::Forced { f: &f, psi: &psi, t_start: 0.0, beta, p }, TOL).unwrap();
        assert!(r.passed, "{r:?}");
        let oracle =
            crate::quadrature::integrate(|t| c * (-d * t).exp() / ln_phi(beta, p, t).exp(), 0.0, 10.0, 1e-13, 1e-13)
                .unwrap()
                .value;
        assert_relative_eq!(r.params["source_integral"], oracle, max_relative = 1e-8);
        assert_relative_eq!(r.params["constant"], 1.0 + oracle, max_relative = 1e-8);
        // with equality in the hypothesis the bound is nearly attained at t_end
        assert!(r.worst_slack < 0.05, "{r:?}");
    }

    #[test]
    fn forced_rejects_growth_after_start() {
        let times: Vec<f64> = (0..21).map(|i| i as f64 * 0.1).collect();
        let f = ScaledSeries::from_plain(times.clone(), times.iter().map(|t| 1.0 + t).collect());
        let psi = ScaledSeries::from_plain(times, vec![0.0; 21]);
        let r = check_comparison_lemma(LemmaInput::Forced { f: &f, psi: &psi, t_start: 1.0, beta: 1.0, p: 0.0 }, TOL)
            .unwrap();
        assert_eq!(r.failure, Some(FailureKind::Hypothesis));
        assert!(r.worst_t > 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn synthetic_growth_never_fails(
            eps in 0.02f64..0.5, k in 0.1f64..5.0, beta_frac in 0.1f64..1.0, p in 0.0f64..1.0,
            g0 in 0.0f64..3.0, eta in 0.0f64..0.95,
        ) {
            let beta = beta_frac / (2.0 * eps);
            let g = synthetic::growth(eps, k, beta, p, g0, eta, 10.0, 401).unwrap();
            let r = check_comparison_lemma(LemmaInput::Growth { g: &g, epsilon: eps, k, beta, p }, TOL).unwrap();
            prop_assert!(r.passed, "{:?}", r);
        }

        #[test]
        fn synthetic_square_root_never_fails(
            a in 0.0f64..3.0, b in 0.2f64..3.0, c in 0.0f64..3.0, d in 0.2f64..3.0, eta in 0.0f64..1.0,
        ) {
            let (times, e, p1, p2) = synthetic::square_root(a, b, c, d, eta, 20.0, 801).unwrap();
            let input = LemmaInput::SquareRoot { e: &e, times: &times, psi1: &p1, psi2: &p2, k1: None, k2: None };
            let r = check_comparison_lemma(input, TOL).unwrap();
            prop_assert!(r.passed, "{:?}", r);
        }

        #[test]
        fn synthetic_forced_never_fails(
            beta in 0.1f64..3.0, p in 0.0f64..1.0, f0 in 0.0f64..3.0, c in 0.0f64..3.0,
            extra in 0.2f64..3.0, eta in 0.0f64..1.0, t_start in 0.0f64..5.0,
        ) {
            let (f, psi) = synthetic::forced(beta, p, f0, c, beta + extra, eta, 10.0, 801).unwrap();
            let r = check_comparison_lemma(LemmaInput::Forced { f: &f, psi: &psi, t_start, beta, p }, TOL).unwrap();
            prop_assert!(r.passed, "{:?}", r);
        }
    }
}
