//! Diagonal model of the operator `A` and the Kirchhoff nonlinearity `m`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite diagonal spectrum `λ_1 ≤ … ≤ λ_K` with coercivity constant `ν ≤ λ_1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralOperator {
    eigenvalues: Vec<f64>,
    nu: f64,
}

impl SpectralOperator {
    pub fn new(eigenvalues: Vec<f64>, nu: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::domain("operator needs at least one eigenvalue"));
        }
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::domain(format!("coercivity constant nu must be positive, got {nu}")));
        }
        if eigenvalues.iter().any(|l| !l.is_finite()) {
            return Err(Error::domain("eigenvalues must be finite"));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::domain("eigenvalues must be sorted ascending"));
        }
        if eigenvalues[0] < nu {
            return Err(Error::domain(format!("lowest eigenvalue {} is below nu = {nu}", eigenvalues[0])));
        }
        Ok(Self { eigenvalues, nu })
    }

    /// Uses the lowest eigenvalue as `ν`.
    pub fn from_eigenvalues(eigenvalues: Vec<f64>) -> Result<Self> {
        let nu = eigenvalues.first().copied().unwrap_or(f64::NAN);
        Self::new(eigenvalues, nu)
    }

    /// `λ_k = ν k^q`, `k = 1..=K`.
    pub fn power_family(nu: f64, k: usize, q: f64) -> Result<Self> {
        if !(q.is_finite() && q >= 0.0) {
            return Err(Error::domain(format!("power family exponent must be >= 0, got {q}")));
        }
        Self::new((1..=k).map(|i| nu * (i as f64).powf(q)).collect(), nu)
    }

    /// `λ_k = ν + (k-1) gap`, `k = 1..=K`.
    pub fn uniform_family(nu: f64, k: usize, gap: f64) -> Result<Self> {
        if !(gap.is_finite() && gap >= 0.0) {
            return Err(Error::domain(format!("uniform family gap must be >= 0, got {gap}")));
        }
        Self::new((0..k).map(|i| nu + i as f64 * gap).collect(), nu)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    pub fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim(), found: v.len() })
        }
    }

    /// `|A^s v|² = Σ λ_k^{2s} v_k²`.
    pub fn sobolev_norm_sq(&self, v: &[f64], s: f64) -> Result<f64> {
        self.check_dim(v)?;
        check_power(s)?;
        Ok(self.norm_sq_unchecked(v, s))
    }

    /// Componentwise `λ_k^s v_k`.
    pub fn apply_power(&self, v: &[f64], s: f64) -> Result<SpectralVector> {
        self.check_dim(v)?;
        check_power(s)?;
        Ok(SpectralVector(self.eigenvalues.iter().zip(v).map(|(&l, &x)| lambda_pow(l, s) * x).collect()))
    }

    /// `Σ λ_k^{2s} a_k b_k`.
    pub(crate) fn inner_unchecked(&self, a: &[f64], b: &[f64], s: f64) -> f64 {
        self.eigenvalues.iter().zip(a.iter().zip(b)).map(|(&l, (&x, &y))| lambda_pow(l, 2.0 * s) * x * y).sum()
    }

    pub(crate) fn norm_sq_unchecked(&self, v: &[f64], s: f64) -> f64 {
        self.inner_unchecked(v, v, s)
    }
}

fn check_power(s: f64) -> Result<()> {
    if s.is_finite() && s >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("operator power must be >= 0, got {s}")))
    }
}

#[inline]
fn lambda_pow(l: f64, s: f64) -> f64 {
    if s == 0.0 {
        1.0
    } else if s == 0.5 {
        l.sqrt()
    } else if s == 1.0 {
        l
    } else if s == 2.0 {
        l * l
    } else {
        l.powf(s)
    }
}

/// Coordinates of an element of `H` in the eigenbasis of `A`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpectralVector(pub Vec<f64>);

impl SpectralVector {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().all(|x| x.is_finite()) {
            Ok(Self(coeffs))
        } else {
            Err(Error::domain("vector coordinates must be finite"))
        }
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    /// The `i`-th unit vector of length `k`.
    pub fn unit(k: usize, i: usize) -> Self {
        let mut v = vec![0.0; k];
        v[i] = 1.0;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self(self.0.iter().map(|x| a * x).collect())
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(x, y)| x + a * y).collect())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }
}

impl From<Vec<f64>> for SpectralVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl std::ops::Deref for SpectralVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Nonlinearity `m(σ)` evaluated at `σ = |A^{1/2} u|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassFunction {
    /// `m ≡ μ̄`
    Constant(f64),
    /// `μ̄0 + μ̄1 σ`
    Affine(f64, f64),
    /// `μ̄0 + μ̄1 / (1 + σ)`
    Rational(f64, f64),
}

impl MassFunction {
    pub fn constant(value: f64) -> Result<Self> {
        Self::Constant(value).validated()
    }

    pub fn affine(mu0: f64, mu1: f64) -> Result<Self> {
        Self::Affine(mu0, mu1).validated()
    }

    pub fn rational(mu0: f64, mu1: f64) -> Result<Self> {
        Self::Rational(mu0, mu1).validated()
    }

    pub fn validated(self) -> Result<Self> {
        let (base, slope) = match self {
            Self::Constant(a) => (a, 0.0),
            Self::Affine(a, b) | Self::Rational(a, b) => (a, b),
        };
        if !(base.is_finite() && base > 0.0) {
            return Err(Error::domain(format!("mass function base value must be positive, got {base}")));
        }
        if !(slope.is_finite() && slope >= 0.0) {
            return Err(Error::domain(format!("mass function coefficient must be nonnegative, got {slope}")));
        }
        Ok(self)
    }

    /// Infimum of `m` over `σ ≥ 0`.
    pub fn mu(&self) -> f64 {
        match *self {
            Self::Constant(a) | Self::Affine(a, _) | Self::Rational(a, _) => a,
        }
    }

    pub fn is_constant(&self) -> bool {
        match *self {
            Self::Constant(_) => true,
            Self::Affine(_, b) | Self::Rational(_, b) => b == 0.0,
        }
    }

    pub fn eval(&self, sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        Ok(self.value(sigma))
    }

    pub fn derivative(&self, sigma: f64) -> Result<f64> {
        check_sigma(sigma)?;
        Ok(self.slope(sigma))
    }

    /// `m(σ)` without the domain check, for callers that build `σ` as a sum of squares.
    #[inline]
    pub(crate) fn value(&self, sigma: f64) -> f64 {
        match *self {
            Self::Constant(a) => a,
            Self::Affine(a, b) => a + b * sigma,
            Self::Rational(a, b) => a + b / (1.0 + sigma),
        }
    }

    #[inline]
    pub(crate) fn slope(&self, sigma: f64) -> f64 {
        match *self {
            Self::Constant(_) => 0.0,
            Self::Affine(_, b) => b,
            Self::Rational(_, b) => {
                let d = 1.0 + sigma;
                -b / (d * d)
            }
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("m is defined for sigma >= 0, got {sigma}")))
    }
}
