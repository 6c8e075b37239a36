//! JSON run configuration: parsing, overrides, defaults and validation.

use std::fmt;
use std::path::Path;

use klab_core::energies::gamma_rate;
use klab_core::evolution::{IntegratorConfig, KirchhoffModel};
use klab_core::scalar::is_unit_power;
use klab_core::{MassFunction, SpectralOperator};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const DEFAULT_SAMPLES: usize = 4096;

/// Smallest value of `Φ_{β,p}` the default horizon may reach.
pub const PHI_FLOOR: f64 = 1e-30;
/// Cap on the default horizon when `Φ` decays slowly.
pub const MAX_DEFAULT_T_END: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<klab_core::Error> for ConfigError {
    fn from(e: klab_core::Error) -> Self {
        ConfigError(e.to_string())
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Simulate,
    Decay,
    DecayError,
    Optimality,
    Lemmas,
    Hypotheses,
    Wkb,
    OpenProblem,
    #[default]
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    /// `λ_k = ν + (k-1)·parameter`
    Uniform,
    /// `λ_k = ν k^parameter`
    Power,
}

/// Either `eigenvalues` (with optional `nu`) or `family`, `nu`, `K` and an optional `parameter`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameter: Option<f64>,
}

impl OperatorSpec {
    pub fn build(&self) -> Result<SpectralOperator, ConfigError> {
        match (&self.eigenvalues, self.family) {
            (Some(_), Some(_)) => err("operator: give either eigenvalues or family, not both"),
            (None, None) => err("operator: one of eigenvalues or family is required"),
            (Some(ev), None) => {
                if self.k.is_some() || self.parameter.is_some() {
                    return err("operator: K and parameter only apply to a family");
                }
                let op = match self.nu {
                    Some(nu) => SpectralOperator::new(ev.clone(), nu),
                    None => SpectralOperator::from_eigenvalues(ev.clone()),
                };
                op.map_err(|e| ConfigError(format!("operator: {e}")))
            }
            (None, Some(kind)) => {
                let nu = self.nu.ok_or_else(|| ConfigError("operator.nu is required for a family".into()))?;
                let k = self.k.ok_or_else(|| ConfigError("operator.K is required for a family".into()))?;
                if k == 0 {
                    return err("operator.K must be at least 1");
                }
                let param = self.parameter.unwrap_or(1.0);
                let op = match kind {
                    FamilyKind::Uniform => SpectralOperator::uniform_family(nu, k, param),
                    FamilyKind::Power => SpectralOperator::power_family(nu, k, param),
                };
                op.map_err(|e| ConfigError(format!("operator: {e}")))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// `u0 = e₁`, `u1 = 0`
    LowestMode,
    /// `u1 = -m(|A^{1/2}u0|²) A u0`, so the initial layer vanishes; `u0` defaults to `e₁`
    WellPrepared,
    /// `u0 = e₁`, `u1 = e₁`
    BoundaryLayer,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u1: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub p: f64,
    pub epsilon: Vec<f64>,
    pub operator: OperatorSpec,
    pub mass: MassFunction,
    pub initial: InitialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub beta: f64,
    #[serde(default)]
    pub tolerances: IntegratorConfig,
    #[serde(default)]
    pub scenario: Scenario,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

/// Validated configuration with every default resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub p: f64,
    /// sorted descending
    pub epsilon: Vec<f64>,
    pub operator: OperatorSpec,
    pub mass: MassFunction,
    pub initial: InitialSpec,
    pub u0: Vec<f64>,
    pub u1: Vec<f64>,
    pub t_end: f64,
    pub samples: usize,
    pub beta: f64,
    pub tolerances: IntegratorConfig,
    pub scenario: Scenario,
    #[serde(skip)]
    pub model: KirchhoffModel,
}

impl RunConfig {
    pub fn mu(&self) -> f64 {
        self.mass.mu()
    }

    pub fn nu(&self) -> f64 {
        self.model.operator.nu()
    }

    pub fn gamma(&self) -> f64 {
        gamma_rate(self.mu(), self.nu(), self.p)
    }

    /// Raw form with every default and preset resolved.
    pub fn to_raw(&self) -> RawConfig {
        RawConfig {
            p: self.p,
            epsilon: self.epsilon.clone(),
            operator: self.operator.clone(),
            mass: self.mass,
            initial: InitialSpec { preset: None, u0: Some(self.u0.clone()), u1: Some(self.u1.clone()) },
            t_end: Some(self.t_end),
            samples: self.samples,
            beta: self.beta,
            tolerances: self.tolerances,
            scenario: self.scenario,
        }
    }
}

/// Horizon at which `Φ_{β,p}` reaches [`PHI_FLOOR`], capped at [`MAX_DEFAULT_T_END`].
pub fn default_t_end(beta: f64, p: f64) -> f64 {
    let x = -PHI_FLOOR.ln() / beta;
    let t = if is_unit_power(p) {
        x.exp_m1()
    } else if p == 0.0 {
        x
    } else {
        ((1.0 - p) * x + 1.0).powf(1.0 / (1.0 - p)) - 1.0
    };
    t.min(MAX_DEFAULT_T_END)
}

fn unit(k: usize) -> Vec<f64> {
    let mut v = vec![0.0; k];
    v[0] = 1.0;
    v
}

impl RawConfig {
    pub fn validate(self) -> Result<RunConfig, ConfigError> {
        let p = self.p;
        if !(0.0..=1.0).contains(&p) {
            return err(format!("p must lie in [0, 1], got {p}"));
        }
        if self.epsilon.is_empty() {
            return err("epsilon must list at least one value");
        }
        if let Some(e) = self.epsilon.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return err(format!("every epsilon must be positive, got {e}"));
        }
        let mut epsilon = self.epsilon.clone();
        epsilon.sort_by(|a, b| b.total_cmp(a));
        if epsilon.windows(2).any(|w| w[0] == w[1]) {
            return err("epsilon values must be distinct");
        }
        let operator = self.operator.build()?;
        let mass = self.mass.validated().map_err(|e| ConfigError(format!("mass: {e}")))?;
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return err(format!("beta must be positive, got {}", self.beta));
        }
        let (mu, nu) = (mass.mu(), operator.nu());
        if p == 0.0 && self.beta >= 2.0 * mu * nu {
            return err(format!("p=0 requires beta < 2·mu·nu (beta = {}, 2·mu·nu = {})", self.beta, 2.0 * mu * nu));
        }
        let t_end = self.t_end.unwrap_or_else(|| default_t_end(self.beta, p));
        if !(t_end.is_finite() && t_end > 0.0) {
            return err(format!("t_end must be positive, got {t_end}"));
        }
        if self.samples < 16 {
            return err(format!("samples must be at least 16, got {}", self.samples));
        }
        self.tolerances.validate().map_err(|e| ConfigError(format!("tolerances: {e}")))?;

        let k = operator.dim();
        let model = KirchhoffModel::new(operator, mass, p)?;
        let (u0, u1) = match self.initial.preset {
            None => {
                let u0 = self.initial.u0.clone().ok_or_else(|| ConfigError("initial.u0 is required".into()))?;
                let u1 = self.initial.u1.clone().ok_or_else(|| ConfigError("initial.u1 is required".into()))?;
                (u0, u1)
            }
            Some(Preset::LowestMode) => (unit(k), vec![0.0; k]),
            Some(Preset::BoundaryLayer) => (unit(k), unit(k)),
            Some(Preset::WellPrepared) => {
                if self.initial.u1.is_some() {
                    return err("initial.u1 cannot be combined with the well_prepared preset");
                }
                let u0 = self.initial.u0.clone().unwrap_or_else(|| unit(k));
                if u0.len() != k {
                    return err(format!("initial.u0 has {} coefficients but the operator has K = {k}", u0.len()));
                }
                let u1 = model.well_prepared_velocity(&u0)?.0;
                (u0, u1)
            }
        };
        if self.initial.preset.is_some_and(|p| p != Preset::WellPrepared)
            && (self.initial.u0.is_some() || self.initial.u1.is_some())
        {
            return err("initial.u0/u1 cannot be combined with this preset");
        }
        for (name, v) in [("u0", &u0), ("u1", &u1)] {
            if v.len() != k {
                return err(format!("initial.{name} has {} coefficients but the operator has K = {k}", v.len()));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return err(format!("initial.{name} must be finite"));
            }
        }
        Ok(RunConfig {
            p,
            epsilon,
            operator: self.operator,
            mass,
            initial: self.initial,
            u0,
            u1,
            t_end,
            samples: self.samples,
            beta: self.beta,
            tolerances: self.tolerances,
            scenario: self.scenario,
            model,
        })
    }
}

/// Sets `path` (dot separated) in a JSON document, creating objects as needed.
/// The value is parsed as JSON when possible and kept as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("override `{assignment}` must have the form key=value")))?;
    let path = path.trim();
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return err(format!("override `{assignment}` has an empty key"));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
    let mut node = doc;
    let mut parts = path.split('.').peekable();
    while let Some(key) = parts.next() {
        let obj = match node {
            Value::Object(m) => m,
            _ => return err(format!("override `{path}`: `{key}` is not inside an object")),
        };
        if parts.peek().is_none() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Parses JSON text, applies overrides and validates.
pub fn parse_config(text: &str, overrides: &[String], origin: &str) -> Result<RunConfig, ConfigError> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| ConfigError(format!("{origin}: {e}")))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let raw: RawConfig = serde_json::from_value(doc).map_err(|e| ConfigError(format!("{origin}: {e}")))?;
    raw.validate()
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    parse_config(&text, overrides, &path.display().to_string())
}
