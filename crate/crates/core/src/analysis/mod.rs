//! Verification layer: rate fits, discrete differential-inequality monitors,
//! comparison-lemma checks, coefficient hypotheses, sweeps and optimality.

use std::collections::BTreeMap;

use serde::Serialize;

pub mod fit;
pub mod hypotheses;
pub mod lemmas;
pub mod monitors;
pub mod optimality;
pub mod residual;
pub mod sweep;

pub use fit::{envelope, fit_decay_exponent, fit_ln_series, Abscissa, RateFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    /// The inputs do not satisfy the statement's assumptions on the grid.
    Hypothesis,
    /// The assumptions hold but the asserted conclusion does not.
    Conclusion,
}

/// Outcome of one sampled inequality or bound.
///
/// `worst_slack ≥ 0` means satisfied; `passed ⇔ worst_slack ≥ -tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub worst_slack: f64,
    pub worst_t: f64,
    pub params: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureKind>,
}

impl CheckReport {
    pub fn new(name: impl Into<String>, worst_slack: f64, worst_t: f64, tolerance: f64) -> Self {
        let passed = worst_slack >= -tolerance;
        let mut params = BTreeMap::new();
        params.insert("tolerance".to_string(), tolerance);
        Self {
            name: name.into(),
            passed,
            worst_slack,
            worst_t,
            params,
            failure: (!passed).then_some(FailureKind::Conclusion),
        }
    }

    pub fn from_tracker(name: impl Into<String>, tracker: &SlackTracker, tolerance: f64) -> Self {
        Self::new(name, tracker.worst, tracker.worst_t, tolerance)
    }

    /// A failed report for inputs that violate the statement's assumptions.
    pub fn hypothesis_failure(name: impl Into<String>, worst_slack: f64, worst_t: f64, tolerance: f64) -> Self {
        let mut r = Self::new(name, worst_slack, worst_t, tolerance);
        r.passed = false;
        r.failure = Some(FailureKind::Hypothesis);
        r
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    pub fn with_params<'a>(mut self, params: impl IntoIterator<Item = (&'a str, f64)>) -> Self {
        for (k, v) in params {
            self.params.insert(k.to_string(), v);
        }
        self
    }

    pub fn tolerance(&self) -> f64 {
        self.params.get("tolerance").copied().unwrap_or(0.0)
    }
}

/// Running minimum of a slack sequence and where it occurred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlackTracker {
    pub worst: f64,
    pub worst_t: f64,
}

impl SlackTracker {
    /// Starts from zero slack at `t0`, the value reported when nothing is tested.
    pub fn new(t0: f64) -> Self {
        Self { worst: f64::INFINITY, worst_t: t0 }
    }

    pub fn observe(&mut self, slack: f64, t: f64) {
        if slack < self.worst || slack.is_nan() {
            self.worst = if slack.is_nan() { f64::NEG_INFINITY } else { slack };
            self.worst_t = t;
        }
    }

    /// Worst slack, with an empty sequence reported as exactly satisfied.
    pub fn finish(mut self) -> Self {
        if self.worst == f64::INFINITY {
            self.worst = 0.0;
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_is_tied_to_tolerance() {
        assert!(CheckReport::new("a", -0.5, 1.0, 1.0).passed);
        let r = CheckReport::new("a", -1.5, 1.0, 1.0);
        assert!(!r.passed);
        assert_eq!(r.failure, Some(FailureKind::Conclusion));
        let h = CheckReport::hypothesis_failure("b", -2.0, 0.0, 0.0);
        assert_eq!(h.failure, Some(FailureKind::Hypothesis));
    }

    #[test]
    fn tracker_reports_zero_for_empty_input() {
        let t = SlackTracker::new(3.0).finish();
        assert_eq!((t.worst, t.worst_t), (0.0, 3.0));
        let mut t = SlackTracker::new(0.0);
        t.observe(0.3, 1.0);
        t.observe(-0.1, 2.0);
        t.observe(0.0, 3.0);
        assert_eq!((t.worst, t.worst_t), (-0.1, 2.0));
        t.observe(f64::NAN, 4.0);
        assert_eq!(t.finish().worst, f64::NEG_INFINITY);
    }
}
