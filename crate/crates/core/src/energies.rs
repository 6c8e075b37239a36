//! Energy functionals, comparison envelopes and Lyapunov constants.
//!
//! Pointwise functionals take physical states. The `*_series` builders work on
//! renormalised trajectories and return [`ScaledSeries`] so that deep decay
//! stays representable.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{Flow, HyperbolicState, Remainders, Trajectory};
use crate::scalar::{damping_power, weighted_time};
use crate::series::ScaledSeries;
use crate::spectral::SpectralOperator;

/// `|u|² + |A^{1/2}u|² + |Au|² + |u'|² + ε|A^{1/2}u'|²`.
pub fn gamma_eps(state: &HyperbolicState, eps: f64, op: &SpectralOperator) -> f64 {
    gamma_parts(op, &state.u, &state.v, eps)
}

fn gamma_parts(op: &SpectralOperator, u: &[f64], v: &[f64], eps: f64) -> f64 {
    op.eigenvalues()
        .iter()
        .zip(u.iter().zip(v))
        .map(|(&l, (&a, &b))| a * a * (1.0 + l + l * l) + b * b * (1.0 + eps * l))
        .sum()
}

/// `|u|² + |A^{1/2}u|² + |Au|²`, the quantity bounded for parabolic solutions.
pub fn gamma_parabolic(u: &[f64], op: &SpectralOperator) -> f64 {
    op.eigenvalues().iter().zip(u).map(|(&l, &a)| a * a * (1.0 + l + l * l)).sum()
}

/// `|ρ|² + |A^{1/2}ρ|² + ε|r'|²`.
pub fn gamma_r(rho: &[f64], r_prime: &[f64], eps: f64, op: &SpectralOperator) -> f64 {
    op.eigenvalues().iter().zip(rho.iter().zip(r_prime)).map(|(&l, (&a, &b))| a * a * (1.0 + l) + eps * b * b).sum()
}

/// `|ρ|² + |A^{1/2}ρ|² + |Aρ|² + |r'|² + ε|A^{1/2}r'|²`.
pub fn gamma_c(rho: &[f64], r_prime: &[f64], eps: f64, op: &SpectralOperator) -> f64 {
    gamma_parts(op, rho, r_prime, eps)
}

/// `E = ε|u'|²/c + |A^{1/2}u|²`.
pub fn energy_e(state: &HyperbolicState, eps: f64, c: f64, op: &SpectralOperator) -> f64 {
    e_parts(op, &state.u, &state.v, eps, c)
}

fn e_parts(op: &SpectralOperator, u: &[f64], v: &[f64], eps: f64, c: f64) -> f64 {
    let kinetic: f64 = v.iter().map(|x| x * x).sum();
    eps * kinetic / c + op.norm_sq_unchecked(u, 0.5)
}

fn f_parts(op: &SpectralOperator, u: &[f64], v: &[f64], t: f64, eps: f64, c: f64, lp: &LyapunovParams) -> f64 {
    let d = damping_power(t, -lp.p);
    let cross: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let mass: f64 = u.iter().map(|x| x * x).sum();
    e_parts(op, u, v, eps, c) + eps * lp.delta * d * cross + 0.5 * lp.delta * d * d * mass
}

/// `F = E + εδ(1+t)^{-p}⟨u',u⟩ + (δ/2)(1+t)^{-2p}|u|²`.
pub fn energy_f(state: &HyperbolicState, eps: f64, c: f64, op: &SpectralOperator, lp: &LyapunovParams) -> f64 {
    f_parts(op, &state.u, &state.v, state.t, eps, c, lp)
}

/// `G = |u'|²`.
pub fn energy_g(state: &HyperbolicState) -> f64 {
    state.v.norm_sq()
}

/// `𝓔 = ε|r'|²/c + |A^{1/2}ρ|²`.
pub fn script_e(rho: &[f64], r_prime: &[f64], eps: f64, c: f64, op: &SpectralOperator) -> f64 {
    e_parts(op, rho, r_prime, eps, c)
}

/// `𝓕`, the perturbation analogue of `F`.
pub fn script_f(
    rho: &[f64],
    r_prime: &[f64],
    t: f64,
    eps: f64,
    c: f64,
    op: &SpectralOperator,
    lp: &LyapunovParams,
) -> f64 {
    f_parts(op, rho, r_prime, t, eps, c, lp)
}

/// `𝓖 = |r'|²`.
pub fn script_g(r_prime: &[f64]) -> f64 {
    r_prime.iter().map(|x| x * x).sum()
}

fn check_comparison_args(rate: f64, p: f64, t: f64) -> Result<()> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::domain(format!("comparison rate must be positive, got {rate}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("p must lie in [0, 1], got {p}")));
    }
    if !(t >= 0.0) {
        return Err(Error::domain(format!("t must be >= 0, got {t}")));
    }
    Ok(())
}

/// `ln Φ_{β,p}(t) = -β ∫_0^t (1+s)^{-p} ds`.
pub fn ln_phi(beta: f64, p: f64, t: f64) -> f64 {
    -beta * weighted_time(p, t)
}

/// `Φ_{β,p}(t)`: solution of `Φ' = -β(1+t)^{-p}Φ`, `Φ(0) = 1`.
pub fn phi(beta: f64, p: f64, t: f64) -> Result<f64> {
    check_comparison_args(beta, p, t)?;
    Ok(ln_phi(beta, p, t).exp())
}

/// `Φ'_{β,p}(t)` in closed form.
pub fn phi_derivative(beta: f64, p: f64, t: f64) -> Result<f64> {
    Ok(-beta * damping_power(t, -p) * phi(beta, p, t)?)
}

/// `ln Ψ_{α,p}(t) = -α((1+t)^{1+p} - 1)`.
pub fn ln_psi(alpha: f64, p: f64, t: f64) -> f64 {
    -alpha * ((1.0 + p) * t.ln_1p()).exp_m1()
}

/// `Ψ_{α,p}(t) = exp(-α[(1+t)^{1+p} - 1])`.
pub fn psi(alpha: f64, p: f64, t: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
    }
    if !(p >= 0.0 && t >= 0.0) {
        return Err(Error::domain("psi needs p >= 0 and t >= 0"));
    }
    Ok(ln_psi(alpha, p, t).exp())
}

/// Corrector profile `z_ε(t)`.
pub fn z_eps(eps: f64, p: f64, t: f64) -> Result<f64> {
    check_comparison_args(eps, p, t)?;
    Ok(crate::evolution::ln_corrector_profile(eps, p, t).exp())
}

/// `γ = 2μν/(1+p)`.
pub fn gamma_rate(mu: f64, nu: f64, p: f64) -> f64 {
    2.0 * mu * nu / (1.0 + p)
}

/// Right-hand side `C exp(-γ (1+t)^{1+p})` of the parabolic decay bound.
pub fn parabolic_bound_rhs(t: f64, p: f64, mu: f64, nu: f64, c: f64) -> Result<f64> {
    if !(mu > 0.0 && nu > 0.0 && c > 0.0 && p >= 0.0 && t >= 0.0) {
        return Err(Error::domain("parabolic bound needs positive constants"));
    }
    Ok(c * (-gamma_rate(mu, nu, p) * damping_power(t, 1.0 + p)).exp())
}

/// `H = (ε|u'|²/c + |A^{1/2}u|²)/Φ`.
pub fn optimality_h(state: &HyperbolicState, eps: f64, c: f64, phi_val: f64, op: &SpectralOperator) -> Result<f64> {
    if !(phi_val > 0.0) {
        return Err(Error::domain(format!("comparison value must be positive, got {phi_val}")));
    }
    Ok(energy_e(state, eps, c, op) / phi_val)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovCase {
    /// Constants for `E_ε`, `F_ε`.
    Decay,
    /// Constants for `𝓔_ε`, `𝓕_ε`.
    Perturbation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovParams {
    pub case: LyapunovCase,
    pub beta: f64,
    pub p: f64,
    pub delta: f64,
    pub sigma: Option<f64>,
    /// Time from which the decay inequality is asserted.
    pub t_start: f64,
}

impl LyapunovParams {
    pub fn decay(beta: f64, p: f64, mu: f64, nu: f64) -> Result<Self> {
        check_beta(beta, p, mu, nu)?;
        if p == 0.0 {
            let delta = 2.0 * (beta + 1.0) * nu / (2.0 * mu * nu - beta);
            Ok(Self { case: LyapunovCase::Decay, beta, p, delta, sigma: None, t_start: 0.0 })
        } else {
            let delta = (beta + 2.0) / mu;
            let t_start = start_time(delta * beta / (2.0 * nu), p);
            Ok(Self { case: LyapunovCase::Decay, beta, p, delta, sigma: None, t_start })
        }
    }

    pub fn perturbation(beta: f64, p: f64, mu: f64, nu: f64) -> Result<Self> {
        check_beta(beta, p, mu, nu)?;
        if p == 0.0 {
            let delta = 4.0 * (beta + 1.0) * nu / (2.0 * mu * nu - beta);
            let sigma = mu * nu - beta / 2.0;
            Ok(Self { case: LyapunovCase::Perturbation, beta, p, delta, sigma: Some(sigma), t_start: 0.0 })
        } else {
            let delta = (beta + 2.0) / mu;
            let sigma = 1.0;
            let t_start = start_time(delta * (beta + sigma) / (2.0 * nu), p);
            Ok(Self { case: LyapunovCase::Perturbation, beta, p, delta, sigma: Some(sigma), t_start })
        }
    }

    /// Checks the defining relations against `μ`, `ν`.
    pub fn validate(&self, mu: f64, nu: f64) -> Result<()> {
        let expected = match self.case {
            LyapunovCase::Decay => Self::decay(self.beta, self.p, mu, nu)?,
            LyapunovCase::Perturbation => Self::perturbation(self.beta, self.p, mu, nu)?,
        };
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
        if !close(self.delta, expected.delta) {
            return Err(Error::config(format!("delta = {} but the constants require {}", self.delta, expected.delta)));
        }
        if self.sigma.is_some() != expected.sigma.is_some()
            || !close(self.sigma.unwrap_or(0.0), expected.sigma.unwrap_or(0.0))
        {
            return Err(Error::config("sigma does not match the perturbation constants"));
        }
        if self.p == 0.0 {
            if self.t_start != 0.0 {
                return Err(Error::config("p = 0 requires T = 0"));
            }
        } else if self.t_start + 1e-12 < expected.t_start || self.t_start.is_nan() {
            return Err(Error::config(format!(
                "T = {} is below the admissible start time {}",
                self.t_start, expected.t_start
            )));
        }
        Ok(())
    }
}

fn check_beta(beta: f64, p: f64, mu: f64, nu: f64) -> Result<()> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::config(format!("beta must be positive, got {beta}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::config(format!("p must lie in [0, 1], got {p}")));
    }
    if !(mu > 0.0 && nu > 0.0) {
        return Err(Error::config("mu and nu must be positive"));
    }
    if p == 0.0 && beta >= 2.0 * mu * nu {
        return Err(Error::config(format!("p=0 requires beta < 2·mu·nu (beta = {beta}, 2·mu·nu = {})", 2.0 * mu * nu)));
    }
    Ok(())
}

/// Smallest `T ≥ 0` with `(1+T)^{2p} ≥ need`.
fn start_time(need: f64, p: f64) -> f64 {
    if need <= 1.0 {
        0.0
    } else {
        need.powf(1.0 / (2.0 * p)) - 1.0
    }
}

/// Explicit constants of the energy equivalences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalenceConstants {
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
}

impl EquivalenceConstants {
    pub fn new(mu: f64, nu: f64, m3: f64, delta: f64) -> Self {
        Self {
            k2: (1.0 / m3).min(1.0),
            k3: (1.0 / mu).max(1.0),
            k4: (0.5 / m3).min(0.5),
            k5: (1.0 / mu + 0.5 / m3).max(1.5 + delta / (2.0 * nu)),
        }
    }
}

fn hyperbolic_epsilon(traj: &Trajectory) -> Result<f64> {
    match traj.flow {
        Flow::Hyperbolic { epsilon } => Ok(epsilon),
        Flow::Parabolic => Err(Error::domain("a hyperbolic trajectory is required")),
    }
}

fn quadratic_series(traj: &Trajectory, f: impl Fn(usize) -> f64) -> ScaledSeries {
    ScaledSeries {
        times: traj.times.clone(),
        mantissa: (0..traj.len()).map(f).collect(),
        ln_scale: traj.ln_scales().iter().map(|s| 2.0 * s).collect(),
    }
}

/// `Γ_ε` along a hyperbolic run, or `|u|² + |A^{1/2}u|² + |Au|²` along a parabolic one.
pub fn gamma_series(traj: &Trajectory) -> ScaledSeries {
    let op = traj.operator();
    match traj.flow {
        Flow::Hyperbolic { epsilon } => {
            quadratic_series(traj, |i| gamma_parts(op, traj.u_scaled(i), traj.v_scaled(i), epsilon))
        }
        Flow::Parabolic => quadratic_series(traj, |i| gamma_parabolic(traj.u_scaled(i), op)),
    }
}

/// `|A^s u|²` along any run.
pub fn norm_series(traj: &Trajectory, s: f64) -> ScaledSeries {
    let op = traj.operator();
    quadratic_series(traj, |i| op.norm_sq_unchecked(traj.u_scaled(i), s))
}

pub fn e_series(traj: &Trajectory) -> Result<ScaledSeries> {
    let eps = hyperbolic_epsilon(traj)?;
    let op = traj.operator();
    Ok(quadratic_series(traj, |i| e_parts(op, traj.u_scaled(i), traj.v_scaled(i), eps, traj.c_trace[i])))
}

pub fn f_series(traj: &Trajectory, lp: &LyapunovParams) -> Result<ScaledSeries> {
    let eps = hyperbolic_epsilon(traj)?;
    let op = traj.operator();
    Ok(quadratic_series(traj, |i| {
        f_parts(op, traj.u_scaled(i), traj.v_scaled(i), traj.times[i], eps, traj.c_trace[i], lp)
    }))
}

pub fn g_series(traj: &Trajectory) -> ScaledSeries {
    quadratic_series(traj, |i| traj.v_scaled(i).norm_sq())
}

/// `ε|u'|² + |A^{1/2}u|²`, the reference quantity of the equivalences.
pub fn reference_series(traj: &Trajectory) -> Result<ScaledSeries> {
    let eps = hyperbolic_epsilon(traj)?;
    let op = traj.operator();
    Ok(quadratic_series(traj, |i| eps * traj.v_scaled(i).norm_sq() + op.norm_sq_unchecked(traj.u_scaled(i), 0.5)))
}

fn remainder_series(rem: &Remainders, f: impl Fn(usize) -> f64) -> ScaledSeries {
    ScaledSeries {
        times: rem.times.clone(),
        mantissa: (0..rem.times.len()).map(f).collect(),
        ln_scale: rem.ln_scale.iter().map(|s| 2.0 * s).collect(),
    }
}

pub fn gamma_r_series(rem: &Remainders, op: &SpectralOperator) -> ScaledSeries {
    remainder_series(rem, |i| gamma_r(&rem.rho[i], &rem.r_prime[i], rem.epsilon, op))
}

pub fn gamma_c_series(rem: &Remainders, op: &SpectralOperator) -> ScaledSeries {
    remainder_series(rem, |i| gamma_c(&rem.rho[i], &rem.r_prime[i], rem.epsilon, op))
}

pub fn script_e_series(rem: &Remainders, op: &SpectralOperator) -> ScaledSeries {
    remainder_series(rem, |i| script_e(&rem.rho[i], &rem.r_prime[i], rem.epsilon, rem.c_eps[i], op))
}

pub fn script_f_series(rem: &Remainders, op: &SpectralOperator, lp: &LyapunovParams) -> ScaledSeries {
    remainder_series(rem, |i| script_f(&rem.rho[i], &rem.r_prime[i], rem.times[i], rem.epsilon, rem.c_eps[i], op, lp))
}

pub fn script_g_series(rem: &Remainders) -> ScaledSeries {
    remainder_series(rem, |i| script_g(&rem.r_prime[i]))
}

/// `ε|r'|² + |A^{1/2}ρ|²` along the remainders.
pub fn script_reference_series(rem: &Remainders, op: &SpectralOperator) -> ScaledSeries {
    remainder_series(rem, |i| rem.epsilon * rem.r_prime[i].norm_sq() + op.norm_sq_unchecked(&rem.rho[i], 0.5))
}

/// Source term of the `𝓕_ε` inequality:
///
/// ```text
/// ψ3 = (εδ/2) c_ε (1+t)^-p |θ'|² + 2 |A^½ρ| |A^½θ'| + δ (1+t)^-2p |ρ| |θ'|
///      + (2/c_ε + δ/(2σ)) (1+t)^p |g|²
/// ```
pub fn psi3_series(rem: &Remainders, op: &SpectralOperator, lp: &LyapunovParams) -> Result<ScaledSeries> {
    let sigma = lp.sigma.ok_or_else(|| Error::config("the source term needs perturbation-case constants"))?;
    let eps = rem.epsilon;
    let delta = lp.delta;
    Ok(remainder_series(rem, |i| {
        let t = rem.times[i];
        let c = rem.c_eps[i];
        let d = damping_power(t, -lp.p);
        let th = &rem.theta_prime[i];
        let rho = &rem.rho[i];
        let g_sq = rem.g[i].norm_sq();
        0.5 * eps * delta * c * d * th.norm_sq()
            + 2.0 * op.norm_sq_unchecked(rho, 0.5).sqrt() * op.norm_sq_unchecked(th, 0.5).sqrt()
            + delta * d * d * rho.norm() * th.norm()
            + (2.0 / c + delta / (2.0 * sigma)) * g_sq / d
    }))
}

/// `ln H_ε = ln E_ε - ln Φ` at every sample, for a comparison function given by its log.
pub fn ln_h_series(traj: &Trajectory, ln_comparison: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    let e = e_series(traj)?;
    Ok((0..e.len()).map(|i| e.ln_abs(i) - ln_comparison(e.times[i])).collect())
}
