//! Hyperbolic and parabolic Kirchhoff flows on a diagonal spectrum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{self, OdeSystem, SolverOptions};
use crate::quadrature;
use crate::scalar::{damping_power, parabolic_time, weighted_time};
use crate::spectral::{MassFunction, SpectralOperator, SpectralVector};

#[derive(Debug, Clone, PartialEq)]
pub struct HyperbolicState {
    pub t: f64,
    pub u: SpectralVector,
    pub v: SpectralVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParabolicState {
    pub t: f64,
    pub u: SpectralVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub oscillation_safety: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-9, abs_tol: 1e-12, max_step: 1.0, oscillation_safety: 0.2, max_steps: 10_000_000 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("max_step", self.max_step),
            ("oscillation_safety", self.oscillation_safety),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be a positive number, got {v}")));
            }
        }
        if self.rel_tol > 1e-3 || self.abs_tol > 1e-3 {
            return Err(Error::config("rel_tol and abs_tol must not exceed 1e-3"));
        }
        if self.max_steps == 0 {
            return Err(Error::config("max_steps must be positive"));
        }
        Ok(())
    }

    fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_step: self.max_step,
            max_steps: self.max_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Flow {
    Hyperbolic { epsilon: f64 },
    Parabolic,
}

impl Flow {
    pub fn epsilon(&self) -> Option<f64> {
        match *self {
            Flow::Hyperbolic { epsilon } => Some(epsilon),
            Flow::Parabolic => None,
        }
    }
}

/// Operator, nonlinearity and damping exponent shared by both flows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KirchhoffModel {
    pub operator: SpectralOperator,
    pub mass: MassFunction,
    pub p: f64,
}

impl KirchhoffModel {
    pub fn new(operator: SpectralOperator, mass: MassFunction, p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::domain(format!("damping exponent p must be >= 0, got {p}")));
        }
        Ok(Self { operator, mass: mass.validated()?, p })
    }

    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    /// `σ = |A^{1/2} u|²`.
    pub fn sigma(&self, u: &[f64]) -> f64 {
        self.operator.norm_sq_unchecked(u, 0.5)
    }

    /// `c = m(|A^{1/2} u|²)`.
    pub fn coefficient(&self, u: &[f64]) -> f64 {
        self.mass.value(self.sigma(u))
    }

    pub fn hyperbolic_rhs(&self, s: &HyperbolicState, eps: f64) -> Result<(SpectralVector, SpectralVector)> {
        check_epsilon(eps)?;
        check_unit_interval(self.p)?;
        self.check_state(&s.u)?;
        self.check_state(&s.v)?;
        let c = self.coefficient(&s.u);
        let d = damping_power(s.t, -self.p);
        let dv = self
            .operator
            .eigenvalues()
            .iter()
            .zip(s.u.iter().zip(s.v.iter()))
            .map(|(&l, (&u, &v))| -(d * v + c * l * u) / eps)
            .collect::<Vec<_>>();
        finite_vector(dv, s.t).map(|dv| (s.v.clone(), dv))
    }

    pub fn parabolic_rhs(&self, s: &ParabolicState) -> Result<SpectralVector> {
        self.check_state(&s.u)?;
        finite_vector(self.parabolic_velocity(s.t, &s.u, 1.0), s.t)
    }

    /// `u' = -(1+t)^p c λ u`, with `c` evaluated on `scale * u`.
    fn parabolic_velocity(&self, t: f64, u: &[f64], scale: f64) -> Vec<f64> {
        let c = self.mass.value(scale * scale * self.sigma(u));
        let g = damping_power(t, self.p);
        self.operator.eigenvalues().iter().zip(u).map(|(&l, &x)| -g * c * l * x).collect()
    }

    /// `c' = 2 m'(σ) ⟨Au, u'⟩`.
    pub fn coefficient_derivative(&self, u: &[f64], v: &[f64]) -> f64 {
        let sigma = self.sigma(u);
        2.0 * self.mass.slope(sigma) * self.operator.inner_unchecked(u, v, 0.5)
    }

    /// Second derivative of a parabolic solution, from the equation itself.
    pub fn parabolic_second_derivative(&self, s: &ParabolicState) -> Result<SpectralVector> {
        self.check_state(&s.u)?;
        Ok(SpectralVector(self.second_derivative_scaled(s.t, &s.u, 1.0)))
    }

    /// `u''` for the physical state `scale * u`, returned in units of `scale`.
    fn second_derivative_scaled(&self, t: f64, u: &[f64], scale: f64) -> Vec<f64> {
        let p = self.p;
        let sigma = scale * scale * self.sigma(u);
        let c = self.mass.value(sigma);
        let growth = damping_power(t, p);
        let v = self.parabolic_velocity(t, u, scale);
        let c_prime = 2.0 * self.mass.slope(sigma) * scale * scale * self.operator.inner_unchecked(u, &v, 0.5);
        let lead = if p == 0.0 { 0.0 } else { -p * damping_power(t, p - 1.0) * c };
        self.operator
            .eigenvalues()
            .iter()
            .zip(u)
            .map(|(&l, &x)| (lead - growth * c_prime) * l * x + growth * growth * c * c * l * l * x)
            .collect()
    }

    /// `g = -(c_ε - c) A u - ε u''`.
    pub fn residual_g(&self, s: &ParabolicState, c_eps: f64, eps: f64) -> Result<SpectralVector> {
        check_epsilon(eps)?;
        self.check_state(&s.u)?;
        Ok(SpectralVector(self.residual_scaled(s.t, &s.u, 1.0, c_eps, eps)))
    }

    fn residual_scaled(&self, t: f64, u: &[f64], scale: f64, c_eps: f64, eps: f64) -> Vec<f64> {
        let c = self.mass.value(scale * scale * self.sigma(u));
        let upp = self.second_derivative_scaled(t, u, scale);
        self.operator
            .eigenvalues()
            .iter()
            .zip(u.iter().zip(&upp))
            .map(|(&l, (&x, &a))| -(c_eps - c) * l * x - eps * a)
            .collect()
    }

    /// `θ0 = u1 + m(|A^{1/2} u0|²) A u0`.
    pub fn theta0(&self, u0: &[f64], u1: &[f64]) -> Result<SpectralVector> {
        self.check_state(u0)?;
        self.check_state(u1)?;
        let c = self.coefficient(u0);
        Ok(SpectralVector(
            self.operator.eigenvalues().iter().zip(u0.iter().zip(u1)).map(|(&l, (&a, &b))| b + c * l * a).collect(),
        ))
    }

    /// Initial velocity that makes `θ0` vanish.
    pub fn well_prepared_velocity(&self, u0: &[f64]) -> Result<SpectralVector> {
        self.check_state(u0)?;
        let c = self.coefficient(u0);
        Ok(SpectralVector(self.operator.eigenvalues().iter().zip(u0).map(|(&l, &a)| -c * l * a).collect()))
    }

    fn check_state(&self, v: &[f64]) -> Result<()> {
        self.operator.check_dim(v)?;
        if v.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::domain("state coordinates must be finite"))
        }
    }

    /// Integrates one flow on the uniform grid `t_i = i t_end / (samples - 1)`.
    pub fn integrate(
        &self,
        flow: Flow,
        u0: &[f64],
        u1: Option<&[f64]>,
        t_end: f64,
        samples: usize,
        cfg: &IntegratorConfig,
    ) -> Result<Trajectory> {
        cfg.validate()?;
        self.check_state(u0)?;
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::domain(format!("t_end must be positive, got {t_end}")));
        }
        if samples < 2 {
            return Err(Error::domain("at least two samples are required"));
        }
        let times: Vec<f64> = (0..samples).map(|i| t_end * i as f64 / (samples - 1) as f64).collect();
        let k = self.dim();
        let opts = cfg.solver_options();

        let (u, v, ln_scale) = match flow {
            Flow::Hyperbolic { epsilon } => {
                check_epsilon(epsilon)?;
                let u1 = u1.ok_or_else(|| Error::domain("hyperbolic flow needs an initial velocity"))?;
                self.check_state(u1)?;
                let mut y0 = u0.to_vec();
                y0.extend_from_slice(u1);
                let sys = HyperbolicSystem { model: self, eps: epsilon, safety: cfg.oscillation_safety };
                let sol = integrator::solve(&sys, &y0, &times, &opts)?;
                let (u, v): (Vec<_>, Vec<_>) = sol
                    .states
                    .into_iter()
                    .map(|y| (SpectralVector(y[..k].to_vec()), SpectralVector(y[k..].to_vec())))
                    .unzip();
                (u, v, sol.ln_scale)
            }
            Flow::Parabolic => {
                let sys = ParabolicSystem { model: self };
                let sol = integrator::solve(&sys, u0, &times, &opts)?;
                let v = sol
                    .states
                    .iter()
                    .zip(&times)
                    .zip(&sol.ln_scale)
                    .map(|((y, &t), &s)| SpectralVector(self.parabolic_velocity(t, y, s.exp())))
                    .collect();
                (sol.states.into_iter().map(SpectralVector).collect(), v, sol.ln_scale)
            }
        };

        let c_trace = u.iter().zip(&ln_scale).map(|(u, &s)| self.mass.value((2.0 * s).exp() * self.sigma(u))).collect();
        Ok(Trajectory {
            flow,
            times,
            u,
            v,
            ln_scale,
            c_trace,
            meta: TrajectoryMeta {
                p: self.p,
                epsilon: flow.epsilon(),
                operator: self.operator.clone(),
                mass: self.mass,
                config: *cfg,
            },
        })
    }
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("epsilon must be positive, got {eps}")))
    }
}

fn check_unit_interval(p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(format!("p must lie in [0, 1], got {p}")))
    }
}

fn finite_vector(v: Vec<f64>, t: f64) -> Result<SpectralVector> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(SpectralVector(v))
    } else {
        Err(crate::error::IntegrationError::NonFinite { t }.into())
    }
}

struct HyperbolicSystem<'a> {
    model: &'a KirchhoffModel,
    eps: f64,
    safety: f64,
}

impl HyperbolicSystem<'_> {
    fn coefficient(&self, u: &[f64], ln_scale: f64) -> f64 {
        self.model.mass.value((2.0 * ln_scale).exp() * self.model.sigma(u))
    }
}

impl OdeSystem for HyperbolicSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.model.dim()
    }

    fn rhs(&self, t: f64, y: &[f64], ln_scale: f64, dy: &mut [f64]) {
        let k = self.model.dim();
        let (u, v) = y.split_at(k);
        let c = self.coefficient(u, ln_scale);
        let d = damping_power(t, -self.model.p);
        let inv = 1.0 / self.eps;
        for (i, &l) in self.model.operator.eigenvalues().iter().enumerate() {
            dy[i] = v[i];
            dy[k + i] = -(d * v[i] + c * l * u[i]) * inv;
        }
    }

    fn step_cap(&self, _t: f64, y: &[f64], ln_scale: f64) -> f64 {
        let c = self.coefficient(&y[..self.model.dim()], ln_scale);
        self.safety * std::f64::consts::TAU * (self.eps / (self.model.operator.max_eigenvalue() * c)).sqrt()
    }

    fn homogeneous(&self) -> bool {
        true
    }
}

struct ParabolicSystem<'a> {
    model: &'a KirchhoffModel,
}

impl OdeSystem for ParabolicSystem<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn rhs(&self, t: f64, y: &[f64], ln_scale: f64, dy: &mut [f64]) {
        let c = self.model.mass.value((2.0 * ln_scale).exp() * self.model.sigma(y));
        let g = damping_power(t, self.model.p);
        for (i, &l) in self.model.operator.eigenvalues().iter().enumerate() {
            dy[i] = -g * c * l * y[i];
        }
    }

    fn homogeneous(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryMeta {
    pub p: f64,
    pub epsilon: Option<f64>,
    pub operator: SpectralOperator,
    pub mass: MassFunction,
    pub config: IntegratorConfig,
}

/// Sampled solution of one flow.
///
/// States are stored renormalised: the physical state at sample `i` is
/// `e^{ln_scale[i]}` times the stored one. `c_trace` always holds the physical
/// coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub flow: Flow,
    pub times: Vec<f64>,
    u: Vec<SpectralVector>,
    v: Vec<SpectralVector>,
    ln_scale: Vec<f64>,
    pub c_trace: Vec<f64>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn u_scaled(&self, i: usize) -> &SpectralVector {
        &self.u[i]
    }

    pub fn v_scaled(&self, i: usize) -> &SpectralVector {
        &self.v[i]
    }

    pub fn ln_scale(&self, i: usize) -> f64 {
        self.ln_scale[i]
    }

    pub fn ln_scales(&self) -> &[f64] {
        &self.ln_scale
    }

    pub fn operator(&self) -> &SpectralOperator {
        &self.meta.operator
    }

    /// Physical state at sample `i` (may underflow to zero for deep decay).
    pub fn state(&self, i: usize) -> HyperbolicState {
        let f = self.ln_scale[i].exp();
        HyperbolicState { t: self.times[i], u: self.u[i].scaled(f), v: self.v[i].scaled(f) }
    }

    pub fn parabolic_state(&self, i: usize) -> ParabolicState {
        ParabolicState { t: self.times[i], u: self.u[i].scaled(self.ln_scale[i].exp()) }
    }

    /// Empirical supremum of the coefficient trace.
    pub fn c_max(&self) -> f64 {
        self.c_trace.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `M3`: supremum of `c` with 1% headroom.
    pub fn m3(&self) -> f64 {
        1.01 * self.c_max()
    }

    /// `c'` at every sample, from the stored velocities.
    pub fn c_prime_trace(&self) -> Vec<f64> {
        let op = &self.meta.operator;
        (0..self.len())
            .map(|i| {
                let u = &self.u[i];
                let w = (2.0 * self.ln_scale[i]).exp();
                let sigma = w * op.norm_sq_unchecked(u, 0.5);
                2.0 * self.meta.mass.slope(sigma) * w * op.inner_unchecked(u, &self.v[i], 0.5)
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.u.iter().chain(&self.v).all(|v| v.is_zero())
    }
}

/// Linear interpolation of a sampled trace at time `t`.
pub fn interpolate(times: &[f64], values: &[f64], t: f64) -> f64 {
    match times.binary_search_by(|x| x.total_cmp(&t)) {
        Ok(i) => values[i],
        Err(0) => values[0],
        Err(i) if i >= times.len() => values[times.len() - 1],
        Err(i) => {
            let w = (t - times[i - 1]) / (times[i] - times[i - 1]);
            values[i - 1] + w * (values[i] - values[i - 1])
        }
    }
}

/// Exact mode-wise parabolic solution for constant `m ≡ μ̄`.
pub fn parabolic_closed_form(op: &SpectralOperator, u0: &[f64], p: f64, mu_bar: f64, t: f64) -> Result<SpectralVector> {
    op.check_dim(u0)?;
    if !(t >= 0.0 && p >= 0.0 && mu_bar > 0.0) {
        return Err(Error::domain("closed form needs t >= 0, p >= 0 and a positive constant m"));
    }
    let tau = parabolic_time(p, t);
    Ok(SpectralVector(op.eigenvalues().iter().zip(u0).map(|(&l, &x)| x * (-l * mu_bar * tau).exp()).collect()))
}

/// `ln z_ε(t)`, the log of the corrector profile.
pub fn ln_corrector_profile(eps: f64, p: f64, t: f64) -> f64 {
    -weighted_time(p, t) / eps
}

/// `∫_0^t z_ε(s) ds`.
pub fn corrector_integral(eps: f64, p: f64, t: f64) -> Result<f64> {
    check_epsilon(eps)?;
    check_unit_interval(p)?;
    if p == 0.0 {
        return Ok(-eps * (-t / eps).exp_m1());
    }
    Ok(quadrature::integrate(|s| ln_corrector_profile(eps, p, s).exp(), 0.0, t, 1e-12, 0.0)?.value)
}

/// `(θ_ε(t), θ'_ε(t)) = (θ0 ∫_0^t z_ε, θ0 z_ε(t))`.
pub fn corrector(theta0: &SpectralVector, eps: f64, p: f64, t: f64) -> Result<(SpectralVector, SpectralVector)> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::domain(format!("t must be >= 0, got {t}")));
    }
    let integral = corrector_integral(eps, p, t)?;
    let z = ln_corrector_profile(eps, p, t).exp();
    Ok((theta0.scaled(integral), theta0.scaled(z)))
}

/// `∫_0^{t_i} z_ε` at every grid point, accumulated interval by interval.
pub fn corrector_integral_series(eps: f64, p: f64, times: &[f64]) -> Result<Vec<f64>> {
    check_epsilon(eps)?;
    check_unit_interval(p)?;
    if p == 0.0 {
        return Ok(times.iter().map(|&t| -eps * (-t / eps).exp_m1()).collect());
    }
    let mut out = Vec::with_capacity(times.len());
    let mut acc = 0.0;
    let mut prev = 0.0;
    for &t in times {
        if t > prev {
            // the profile is below 1e-300 past this point and contributes nothing
            if ln_corrector_profile(eps, p, prev) > -700.0 {
                acc += quadrature::integrate(|s| ln_corrector_profile(eps, p, s).exp(), prev, t, 1e-13, 0.0)?.value;
            }
            prev = t;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Differences between the hyperbolic and parabolic solutions.
///
/// `rho`, `r_prime`, `theta_prime` and `g` are stored in the hyperbolic
/// trajectory's frame: multiply by `e^{ln_scale[i]}` for physical values.
/// `r` and `theta` are stored as physical values.
#[derive(Debug, Clone, PartialEq)]
pub struct Remainders {
    pub times: Vec<f64>,
    pub ln_scale: Vec<f64>,
    pub rho: Vec<SpectralVector>,
    pub r_prime: Vec<SpectralVector>,
    pub theta_prime: Vec<SpectralVector>,
    pub g: Vec<SpectralVector>,
    pub r: Vec<SpectralVector>,
    pub theta: Vec<SpectralVector>,
    pub c_eps: Vec<f64>,
    pub epsilon: f64,
    pub p: f64,
}

impl Remainders {
    pub fn rho_plain(&self, i: usize) -> SpectralVector {
        self.rho[i].scaled(self.ln_scale[i].exp())
    }

    pub fn r_prime_plain(&self, i: usize) -> SpectralVector {
        self.r_prime[i].scaled(self.ln_scale[i].exp())
    }

    pub fn theta_prime_plain(&self, i: usize) -> SpectralVector {
        self.theta_prime[i].scaled(self.ln_scale[i].exp())
    }
}

fn check_same_grid(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.times.len() != b.times.len() {
        return Err(Error::GridMismatch(format!("{} vs {} samples", a.times.len(), b.times.len())));
    }
    if a.times.iter().zip(&b.times).any(|(x, y)| (x - y).abs() > 1e-12 * x.abs().max(1.0)) {
        return Err(Error::GridMismatch("sample times differ".into()));
    }
    Ok(())
}

/// `ρ = u_ε - u`, `r = ρ - θ_ε`, `r' = u_ε' - u' - θ_ε'`, and the residual `g`.
pub fn remainders(
    model: &KirchhoffModel,
    hyperbolic: &Trajectory,
    parabolic: &Trajectory,
    theta0: &SpectralVector,
) -> Result<Remainders> {
    let eps = hyperbolic.flow.epsilon().ok_or_else(|| Error::domain("first trajectory must be hyperbolic"))?;
    if parabolic.flow != Flow::Parabolic {
        return Err(Error::domain("second trajectory must be parabolic"));
    }
    check_same_grid(hyperbolic, parabolic)?;
    model.operator.check_dim(theta0)?;
    let p = model.p;
    let integrals = corrector_integral_series(eps, p, &hyperbolic.times)?;

    let n = hyperbolic.len();
    let mut out = Remainders {
        times: hyperbolic.times.clone(),
        ln_scale: hyperbolic.ln_scale.clone(),
        rho: Vec::with_capacity(n),
        r_prime: Vec::with_capacity(n),
        theta_prime: Vec::with_capacity(n),
        g: Vec::with_capacity(n),
        r: Vec::with_capacity(n),
        theta: Vec::with_capacity(n),
        c_eps: hyperbolic.c_trace.clone(),
        epsilon: eps,
        p,
    };
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        let t = hyperbolic.times[i];
        let sh = hyperbolic.ln_scale[i];
        let sp = parabolic.ln_scale[i];
        let rel = (sp - sh).exp();
        let up = &parabolic.u[i];
        let vp = &parabolic.v[i];
        let theta_prime = theta0.scaled((ln_corrector_profile(eps, p, t) - sh).exp());
        let rho = hyperbolic.u[i].axpy(-rel, up);
        let r_prime = hyperbolic.v[i].axpy(-rel, vp).sub(&theta_prime);
        let g = SpectralVector(model.residual_scaled(t, up, sp.exp(), hyperbolic.c_trace[i], eps)).scaled(rel);
        let theta = theta0.scaled(integrals[i]);
        let r = hyperbolic.u[i].scaled(sh.exp()).axpy(-sp.exp(), up).sub(&theta);
        out.rho.push(rho);
        out.r_prime.push(r_prime);
        out.theta_prime.push(theta_prime);
        out.g.push(g);
        out.r.push(r);
        out.theta.push(theta);
    }
    Ok(out)
}

/// `|g_ε|²` along a parabolic run, with `c_ε` interpolated from a hyperbolic trace.
pub fn residual_norm_sq_series(
    model: &KirchhoffModel,
    parabolic: &Trajectory,
    c_eps_times: &[f64],
    c_eps_trace: &[f64],
    eps: f64,
) -> Result<crate::series::ScaledSeries> {
    check_epsilon(eps)?;
    if c_eps_times.len() != c_eps_trace.len() || c_eps_times.is_empty() {
        return Err(Error::GridMismatch("coefficient trace and its grid differ in length".into()));
    }
    let last = *c_eps_times.last().expect("nonempty");
    if parabolic.times.last().copied().unwrap_or(0.0) > last * (1.0 + 1e-12) {
        return Err(Error::GridMismatch("coefficient trace does not cover the parabolic run".into()));
    }
    let mut mantissa = Vec::with_capacity(parabolic.len());
    for i in 0..parabolic.len() {
        let t = parabolic.times[i];
        let c_eps = interpolate(c_eps_times, c_eps_trace, t);
        let g = model.residual_scaled(t, &parabolic.u[i], parabolic.ln_scale[i].exp(), c_eps, eps);
        mantissa.push(g.iter().map(|x| x * x).sum());
    }
    Ok(crate::series::ScaledSeries {
        times: parabolic.times.clone(),
        mantissa,
        ln_scale: parabolic.ln_scale.iter().map(|s| 2.0 * s).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_model(lambda: f64, mass: MassFunction, p: f64) -> KirchhoffModel {
        KirchhoffModel::new(SpectralOperator::from_eigenvalues(vec![lambda]).unwrap(), mass, p).unwrap()
    }

    fn sv(v: &[f64]) -> SpectralVector {
        SpectralVector(v.to_vec())
    }

    #[test]
    fn hyperbolic_rhs_examples() {
        for p in [0.0, 0.5, 1.0] {
            let m = scalar_model(1.0, MassFunction::Constant(1.0), p);
            let s = HyperbolicState { t: 0.0, u: sv(&[1.0]), v: sv(&[1.0]) };
            let (du, dv) = m.hyperbolic_rhs(&s, 1.0).unwrap();
            assert_eq!(du.0, vec![1.0]);
            assert_eq!(dv.0, vec![-2.0]);
        }
        let m = scalar_model(1.0, MassFunction::Constant(1.0), 0.3);
        let s = HyperbolicState { t: 2.0, u: sv(&[0.0]), v: sv(&[0.0]) };
        let (du, dv) = m.hyperbolic_rhs(&s, 0.1).unwrap();
        assert!(du.is_zero() && dv.is_zero());
        let m = scalar_model(1.0, MassFunction::Constant(1.0), 1.0);
        let s = HyperbolicState { t: 3.0, u: sv(&[0.0]), v: sv(&[1.0]) };
        assert_relative_eq!(m.hyperbolic_rhs(&s, 0.5).unwrap().1[0], -0.5);
        assert!(m.hyperbolic_rhs(&s, 0.0).is_err());
    }

    #[test]
    fn parabolic_rhs_examples() {
        let m = scalar_model(2.0, MassFunction::Constant(3.0), 0.7);
        assert_eq!(m.parabolic_rhs(&ParabolicState { t: 0.0, u: sv(&[0.0]) }).unwrap().0, vec![0.0]);
        assert_relative_eq!(m.parabolic_rhs(&ParabolicState { t: 0.0, u: sv(&[1.0]) }).unwrap()[0], -6.0);
        let m = scalar_model(1.0, MassFunction::Constant(1.0), 1.0);
        assert_relative_eq!(m.parabolic_rhs(&ParabolicState { t: 1.0, u: sv(&[1.0]) }).unwrap()[0], -2.0);
    }

    #[test]
    fn parabolic_closed_form_examples() {
        let op = SpectralOperator::from_eigenvalues(vec![1.0]).unwrap();
        assert_relative_eq!(parabolic_closed_form(&op, &[1.0], 0.0, 1.0, 1.0).unwrap()[0], (-1f64).exp());
        assert_relative_eq!(parabolic_closed_form(&op, &[1.0], 1.0, 1.0, 1.0).unwrap()[0], (-1.5f64).exp());
        assert_eq!(parabolic_closed_form(&op, &[0.3], 0.5, 2.0, 0.0).unwrap()[0], 0.3);
    }

    #[test]
    fn parabolic_integration_matches_closed_form() {
        let m = scalar_model(1.0, MassFunction::Constant(1.0), 0.0);
        let traj = m.integrate(Flow::Parabolic, &[1.0], None, 1.0, 11, &IntegratorConfig::default()).unwrap();
        assert!((traj.parabolic_state(10).u[0] - (-1f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn hyperbolic_integration_matches_characteristic_roots() {
        let eps = 0.1;
        let m = scalar_model(1.0, MassFunction::Constant(1.0), 0.0);
        let traj = m
            .integrate(Flow::Hyperbolic { epsilon: eps }, &[1.0], Some(&[0.0]), 10.0, 201, &IntegratorConfig::default())
            .unwrap();
        let disc = (1.0 - 4.0 * eps).sqrt();
        let (rp, rm) = ((-1.0 + disc) / (2.0 * eps), (-1.0 - disc) / (2.0 * eps));
        // u(0) = 1, u'(0) = 0
        let a = -rm / (rp - rm);
        let b = rp / (rp - rm);
        for i in 0..traj.len() {
            let t = traj.times[i];
            let exact = a * (rp * t).exp() + b * (rm * t).exp();
            assert!((traj.state(i).u[0] - exact).abs() < 1e-6, "t = {t}");
        }
    }

    #[test]
    fn zero_data_gives_zero_trajectory() {
        let m = scalar_model(2.0, MassFunction::Affine(1.0, 1.0), 0.5);
        let cfg = IntegratorConfig::default();
        let h = m.integrate(Flow::Hyperbolic { epsilon: 0.1 }, &[0.0], Some(&[0.0]), 2.0, 5, &cfg).unwrap();
        let p = m.integrate(Flow::Parabolic, &[0.0], None, 2.0, 5, &cfg).unwrap();
        assert!(h.is_zero() && p.is_zero());
        assert!(h.c_trace.iter().all(|&c| c == 1.0));
    }

    #[test]
    fn theta0_examples() {
        let m = scalar_model(1.0, MassFunction::Constant(1.0), 0.0);
        assert_eq!(m.theta0(&[1.0], &[0.0]).unwrap().0, vec![1.0]);
        assert_eq!(m.theta0(&[0.0], &[3.0]).unwrap().0, vec![3.0]);
        let m = scalar_model(2.0, MassFunction::Affine(1.0, 1.0), 0.0);
        assert_eq!(m.theta0(&[1.0], &[1.0]).unwrap().0, vec![7.0]);
        assert!(m.theta0(&[1.0, 2.0], &[1.0]).is_err());
        let w = m.well_prepared_velocity(&[1.0]).unwrap();
        assert!(m.theta0(&[1.0], &w).unwrap().is_zero());
    }

    #[test]
    fn corrector_examples() {
        let th = sv(&[1.0]);
        let (theta, dtheta) = corrector(&th, 0.5, 0.0, 1.0).unwrap();
        assert_relative_eq!(dtheta[0], (-2f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(theta[0], 0.5 * (1.0 - (-2f64).exp()), max_relative = 1e-15);
        let (_, dtheta) = corrector(&th, 0.5, 1.0, 1.0).unwrap();
        assert_relative_eq!(dtheta[0], 0.25, max_relative = 1e-14);
        let (theta, dtheta) = corrector(&sv(&[2.0, -1.0]), 0.3, 0.4, 0.0).unwrap();
        assert!(theta.is_zero());
        assert_eq!(dtheta.0, vec![2.0, -1.0]);
        assert!(corrector(&th, 0.5, 1.5, 1.0).is_err());
    }

    #[test]
    fn corrector_integral_p1_closed_form() {
        // ∫ (1+s)^{-1/ε} ds = ε/(1-ε) (1 - (1+t)^{1-1/ε})
        let eps: f64 = 0.25;
        let t: f64 = 3.0;
        let exact = eps / (1.0 - eps) * (1.0 - (1.0 + t).powf(1.0 - 1.0 / eps));
        assert_relative_eq!(corrector_integral(eps, 1.0, t).unwrap(), exact, epsilon = 1e-12);
        let series = corrector_integral_series(eps, 1.0, &[0.0, 1.0, 3.0]).unwrap();
        assert_relative_eq!(series[2], exact, epsilon = 1e-12);
    }

    #[test]
    fn corrector_satisfies_its_equation() {
        for &(eps, p) in &[(0.1, 0.0), (0.05, 0.5), (0.2, 1.0)] {
            for i in 0..50 {
                let t = i as f64 * 0.2;
                let z = ln_corrector_profile(eps, p, t).exp();
                let zp = -damping_power(t, -p) * z / eps;
                let residual: f64 = eps * zp + damping_power(t, -p) * z;
                assert!(residual.abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn coefficient_derivative_examples() {
        let m = scalar_model(1.0, MassFunction::Constant(1.0), 0.0);
        assert_eq!(m.coefficient_derivative(&[3.0], &[2.0]), 0.0);
        let m = scalar_model(1.0, MassFunction::Affine(1.0, 1.0), 0.0);
        assert_relative_eq!(m.coefficient_derivative(&[1.0], &[-1.0]), -2.0);
        assert_eq!(m.coefficient_derivative(&[0.0], &[5.0]), 0.0);
    }

    #[test]
    fn second_derivative_examples() {
        let m = scalar_model(1.0, MassFunction::Constant(1.0), 0.0);
        let at = |u: f64, t: f64| m.parabolic_second_derivative(&ParabolicState { t, u: sv(&[u]) }).unwrap()[0];
        assert_eq!(at(0.0, 1.0), 0.0);
        assert_relative_eq!(at(1.0, 7.0), 1.0);
        let m = scalar_model(2.0, MassFunction::Constant(1.0), 0.0);
        assert_relative_eq!(m.parabolic_second_derivative(&ParabolicState { t: 0.0, u: sv(&[1.0]) }).unwrap()[0], 4.0);
    }

    #[test]
    fn second_derivative_matches_finite_difference_for_nonlinear_m() {
        let m = KirchhoffModel::new(
            SpectralOperator::from_eigenvalues(vec![1.0, 2.0]).unwrap(),
            MassFunction::Rational(1.0, 2.0),
            0.6,
        )
        .unwrap();
        let traj = m.integrate(Flow::Parabolic, &[0.4, -0.3], None, 1.0, 1001, &IntegratorConfig::default()).unwrap();
        let i = 500;
        let h = traj.times[1];
        let fd: Vec<f64> = (0..2).map(|k| (traj.state(i + 1).v[k] - traj.state(i - 1).v[k]) / (2.0 * h)).collect();
        let exact = m.parabolic_second_derivative(&traj.parabolic_state(i)).unwrap();
        for k in 0..2 {
            assert_relative_eq!(exact[k], fd[k], max_relative = 1e-4);
        }
    }

    #[test]
    fn residual_examples() {
        let m = scalar_model(1.0, MassFunction::Constant(1.0), 0.0);
        let s = ParabolicState { t: 0.0, u: sv(&[0.0]) };
        assert!(m.residual_g(&s, 1.0, 0.1).unwrap().is_zero());
        let s = ParabolicState { t: 0.0, u: sv(&[1.0]) };
        assert_relative_eq!(m.residual_g(&s, 1.0, 0.1).unwrap()[0], -0.1);
    }

    #[test]
    fn remainders_identity_and_initial_values() {
        let m = KirchhoffModel::new(
            SpectralOperator::from_eigenvalues(vec![1.0, 3.0]).unwrap(),
            MassFunction::Affine(1.0, 0.5),
            0.5,
        )
        .unwrap();
        let (u0, u1) = ([0.5, 0.2], [0.1, -0.3]);
        let cfg = IntegratorConfig::default();
        let h = m.integrate(Flow::Hyperbolic { epsilon: 0.05 }, &u0, Some(&u1), 3.0, 301, &cfg).unwrap();
        let p = m.integrate(Flow::Parabolic, &u0, None, 3.0, 301, &cfg).unwrap();
        let th = m.theta0(&u0, &u1).unwrap();
        let rem = remainders(&m, &h, &p, &th).unwrap();
        assert!(rem.rho[0].is_zero());
        assert!(rem.r[0].norm() < 1e-15);
        assert!(rem.r_prime[0].norm() < 1e-14);
        for i in 0..h.len() {
            let lhs = h.state(i).u;
            let rhs = p.state(i).u.axpy(1.0, &rem.theta[i]).axpy(1.0, &rem.r[i]);
            assert!(lhs.sub(&rhs).norm() < 1e-14);
        }
        let mismatched = m.integrate(Flow::Parabolic, &u0, None, 3.0, 300, &cfg).unwrap();
        assert!(matches!(remainders(&m, &h, &mismatched, &th), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn identical_runs_without_corrector_have_zero_remainders() {
        let m = scalar_model(1.0, MassFunction::Constant(1.0), 0.5);
        let cfg = IntegratorConfig::default();
        let p = m.integrate(Flow::Parabolic, &[1.0], None, 1.0, 11, &cfg).unwrap();
        let mut fake = p.clone();
        fake.flow = Flow::Hyperbolic { epsilon: 0.1 };
        let rem = remainders(&m, &fake, &p, &sv(&[0.0])).unwrap();
        assert!(rem.rho.iter().chain(&rem.r).chain(&rem.r_prime).all(|v| v.is_zero()));
    }

    #[test]
    fn interpolation() {
        let t = [0.0, 1.0, 2.0];
        let v = [1.0, 3.0, 2.0];
        assert_eq!(interpolate(&t, &v, 0.5), 2.0);
        assert_eq!(interpolate(&t, &v, 2.0), 2.0);
        assert_eq!(interpolate(&t, &v, 5.0), 2.0);
    }
}
