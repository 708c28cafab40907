//! Policy-evaluation agents: TD(λ), LSTD(λ), feature-sketched LSTD (LSTD-P),
//! left-sketched LSTD (LSTD-L) and the two quasi-Newton ATD variants.
//!
//! All systems are accumulated as unnormalized sums with a fixed ridge. For
//! the LSTD family this leaves the solution unchanged, and for ATD the
//! `α_t = 1/t` step against the sample-average pseudo-inverse equals the
//! pseudo-inverse of the sum, so no explicit `α_t` appears.

mod atd_svd;
mod lstd;
mod sketched;
mod td;

pub use atd_svd::AtdSvd;
pub use lstd::{Lstd, LstdP};
pub use sketched::{AtdL, LstdL, SketchedSystem};
pub use td::Td;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::Transition;
use crate::features::FeatureVector;
use crate::linalg::LinalgError;
use crate::sketch::{SketchError, SketchFamily};

/// Sherman-Morrison denominators below this trigger a rebuild or skip.
pub const DEGENERATE_TOL: f64 = 1e-10;
/// ‖w‖₂ above this aborts a run as diverged.
pub const DIVERGENCE_GUARD: f64 = 1e10;
/// Relative singular-value cutoff for ATD-SVD.
pub const SVD_DROP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("feature vector has dimension {found}, agent expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("weights diverged at step {step} (norm {norm:e})")]
    Divergence { step: usize, norm: f64 },
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sketch(#[from] SketchError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, AgentError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Td,
    Lstd,
    LstdP,
    LstdL,
    AtdL,
    AtdSvd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Self::Td,
        Self::Lstd,
        Self::LstdP,
        Self::LstdL,
        Self::AtdL,
        Self::AtdSvd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Td => "td",
            Self::Lstd => "lstd",
            Self::LstdP => "lstd-p",
            Self::LstdL => "lstd-l",
            Self::AtdL => "atd-l",
            Self::AtdSvd => "atd-svd",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| AgentError::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

fn default_xi() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

/// Fully specified agent. `xi` is the initial inverse scale: systems start
/// from `ξ·I` as their inverse, i.e. carry a ridge of `1/ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AgentConfig {
    Td {
        alpha: f64,
        lambda: f64,
    },
    Lstd {
        xi: f64,
        lambda: f64,
    },
    LstdP {
        xi: f64,
        lambda: f64,
        k: usize,
        sketch: SketchFamily,
    },
    LstdL {
        xi: f64,
        lambda: f64,
        k: usize,
        sketch: SketchFamily,
    },
    AtdL {
        eta: f64,
        lambda: f64,
        #[serde(default = "default_xi")]
        xi: f64,
        k: usize,
        sketch: SketchFamily,
        /// Disabling drops the `Ãᵀ(ÃÃᵀ)⁻¹` term, leaving TD with step `η`.
        #[serde(default = "default_true")]
        precondition: bool,
    },
    AtdSvd {
        eta: f64,
        lambda: f64,
        k: usize,
    },
}

impl AgentConfig {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Self::Td { .. } => Algorithm::Td,
            Self::Lstd { .. } => Algorithm::Lstd,
            Self::LstdP { .. } => Algorithm::LstdP,
            Self::LstdL { .. } => Algorithm::LstdL,
            Self::AtdL { .. } => Algorithm::AtdL,
            Self::AtdSvd { .. } => Algorithm::AtdSvd,
        }
    }

    pub fn lambda(&self) -> f64 {
        match self {
            Self::Td { lambda, .. }
            | Self::Lstd { lambda, .. }
            | Self::LstdP { lambda, .. }
            | Self::LstdL { lambda, .. }
            | Self::AtdL { lambda, .. }
            | Self::AtdSvd { lambda, .. } => *lambda,
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            Self::Td { alpha, .. } => Some(*alpha),
            _ => None,
        }
    }

    pub fn eta(&self) -> Option<f64> {
        match self {
            Self::AtdL { eta, .. } | Self::AtdSvd { eta, .. } => Some(*eta),
            _ => None,
        }
    }

    pub fn xi(&self) -> Option<f64> {
        match self {
            Self::Lstd { xi, .. }
            | Self::LstdP { xi, .. }
            | Self::LstdL { xi, .. }
            | Self::AtdL { xi, .. } => Some(*xi),
            _ => None,
        }
    }

    pub fn k(&self) -> Option<usize> {
        match self {
            Self::LstdP { k, .. }
            | Self::LstdL { k, .. }
            | Self::AtdL { k, .. }
            | Self::AtdSvd { k, .. } => Some(*k),
            _ => None,
        }
    }

    pub fn sketch(&self) -> Option<SketchFamily> {
        match self {
            Self::LstdP { sketch, .. } | Self::LstdL { sketch, .. } | Self::AtdL { sketch, .. } => {
                Some(*sketch)
            }
            _ => None,
        }
    }

    /// Copy with `lambda` replaced.
    pub fn with_lambda(&self, value: f64) -> Self {
        let mut c = self.clone();
        match &mut c {
            Self::Td { lambda, .. }
            | Self::Lstd { lambda, .. }
            | Self::LstdP { lambda, .. }
            | Self::LstdL { lambda, .. }
            | Self::AtdL { lambda, .. }
            | Self::AtdSvd { lambda, .. } => *lambda = value,
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AgentError::InvalidConfig(msg));
        let lambda = self.lambda();
        if !(0.0..=1.0).contains(&lambda) {
            return bad(format!("lambda {lambda} not in [0, 1]"));
        }
        if let Some(a) = self.alpha() {
            if !(a.is_finite() && a >= 0.0) {
                return bad(format!("alpha {a} must be finite and nonnegative"));
            }
        }
        if let Some(e) = self.eta() {
            if !(e.is_finite() && e >= 0.0) {
                return bad(format!("eta {e} must be finite and nonnegative"));
            }
        }
        if let Some(x) = self.xi() {
            if !(x.is_finite() && x > 0.0) {
                return bad(format!("xi {x} must be positive"));
            }
        }
        if let (Some(0), true) = (self.k(), self.sketch().is_some()) {
            return bad("sketch dimension k must be at least 1".into());
        }
        Ok(())
    }
}

/// Incremental policy-evaluation learner.
pub trait Agent: Send {
    fn algorithm(&self) -> Algorithm;

    /// Feature dimension `d` the agent consumes.
    fn dim(&self) -> usize;

    fn observe(&mut self, tr: &Transition) -> Result<()>;

    /// Weights in prediction space (`k`-dimensional for LSTD-P).
    fn weights(&self) -> Result<Vec<f64>>;

    /// The vector the weights are dotted with; `Sx` for LSTD-P, `x` otherwise.
    fn prediction_features(&self, x: &FeatureVector) -> Result<FeatureVector> {
        check_dim(self.dim(), x)?;
        Ok(x.clone())
    }

    fn value(&self, x: &FeatureVector) -> Result<f64> {
        let phi = self.prediction_features(x)?;
        Ok(phi.dot(&self.weights()?))
    }

    /// Degenerate rank-one updates handled (skipped or rebuilt) so far.
    fn numerical_events(&self) -> usize {
        0
    }
}

pub(crate) fn check_dim(expected: usize, x: &FeatureVector) -> Result<()> {
    if x.dim() != expected {
        return Err(AgentError::DimensionMismatch {
            expected,
            found: x.dim(),
        });
    }
    Ok(())
}

pub(crate) fn check_transition(expected: usize, tr: &Transition) -> Result<()> {
    check_dim(expected, &tr.x)?;
    check_dim(expected, &tr.x_next)
}

pub(crate) fn guard(w: &[f64], step: usize) -> Result<()> {
    let norm = crate::linalg::norm2(w);
    if !norm.is_finite() || norm > DIVERGENCE_GUARD {
        return Err(AgentError::Divergence { step, norm });
    }
    Ok(())
}

/// Eligibility trace. The decay applied at step `t` is the previous
/// transition's `γ_{t}·λ`; the trace restarts at episode boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceState {
    pub trace: Vec<f64>,
    pub lambda: f64,
    prev_gamma: f64,
}

impl TraceState {
    pub fn new(dim: usize, lambda: f64) -> Self {
        Self {
            trace: vec![0.0; dim],
            lambda,
            prev_gamma: 0.0,
        }
    }

    /// Decay factor the next update will apply.
    fn decay(&self, episode_start: bool) -> f64 {
        if episode_start {
            0.0
        } else {
            self.prev_gamma * self.lambda
        }
    }

    /// `e ← decay·e + x`.
    pub fn update(&mut self, tr: &Transition) {
        let c = self.decay(tr.episode_start);
        scale_in_place(&mut self.trace, c);
        tr.x.axpy_into(1.0, &mut self.trace);
        self.prev_gamma = tr.gamma_next;
    }

    /// Same decay rule, adding an already-transformed vector (e.g. `Sx`).
    pub fn update_with(&mut self, tr: &Transition, x: &[f64]) {
        let c = self.decay(tr.episode_start);
        for (e, xi) in self.trace.iter_mut().zip(x) {
            *e = c * *e + xi;
        }
        self.prev_gamma = tr.gamma_next;
    }
}

fn scale_in_place(v: &mut [f64], c: f64) {
    if c == 0.0 {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else if c != 1.0 {
        v.iter_mut().for_each(|x| *x *= c);
    }
}

/// Builds the agent for `config` over `d` features. `seed` drives the sketch.
pub fn build_agent(config: &AgentConfig, d: usize, seed: u64) -> Result<Box<dyn Agent>> {
    config.validate()?;
    if d == 0 {
        return Err(AgentError::InvalidConfig(
            "feature dimension must be positive".into(),
        ));
    }
    use crate::sketch::{sample_sketch, SketchSpec};
    let sketch =
        |k: usize, family: SketchFamily| sample_sketch(SketchSpec::new(family, k, d, seed));
    Ok(match *config {
        AgentConfig::Td { alpha, lambda } => Box::new(Td::new(d, alpha, lambda)),
        AgentConfig::Lstd { xi, lambda } => Box::new(Lstd::new(d, xi, lambda)),
        AgentConfig::LstdP {
            xi,
            lambda,
            k,
            sketch: f,
        } => Box::new(LstdP::new(sketch(k, f)?, xi, lambda)),
        AgentConfig::LstdL {
            xi,
            lambda,
            k,
            sketch: f,
        } => Box::new(LstdL::new(sketch(k, f)?, xi, lambda)),
        AgentConfig::AtdL {
            eta,
            lambda,
            xi,
            k,
            sketch: f,
            precondition,
        } => Box::new(AtdL::new(sketch(k, f)?, eta, xi, lambda, precondition)),
        AgentConfig::AtdSvd { eta, lambda, k } => Box::new(AtdSvd::new(d, eta, lambda, k)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(x: FeatureVector, gamma_next: f64, episode_start: bool) -> Transition {
        let d = x.dim();
        Transition {
            x,
            x_next: FeatureVector::zeros(d),
            reward: 0.0,
            gamma_next,
            episode_start,
        }
    }

    #[test]
    fn trace_uses_previous_discount() {
        let mut t = TraceState::new(2, 0.5);
        let e1 = FeatureVector::Dense(vec![1.0, 0.0]);
        let e2 = FeatureVector::Dense(vec![0.0, 1.0]);
        t.update(&tr(e1.clone(), 0.8, true));
        assert_eq!(t.trace, vec![1.0, 0.0]);
        t.update(&tr(e2.clone(), 0.0, false));
        assert_eq!(t.trace, vec![0.4, 1.0]);
        // Previous transition was terminal: the trace restarts.
        t.update(&tr(e1, 1.0, false));
        assert_eq!(t.trace, vec![1.0, 0.0]);
        t.update(&tr(e2, 1.0, true));
        assert_eq!(t.trace, vec![0.0, 1.0]);
    }

    #[test]
    fn config_accessors_and_validation() {
        let c = AgentConfig::AtdL {
            eta: 0.1,
            lambda: 0.9,
            xi: 1.0,
            k: 50,
            sketch: SketchFamily::Gaussian,
            precondition: true,
        };
        assert_eq!(c.algorithm(), Algorithm::AtdL);
        assert_eq!((c.eta(), c.k(), c.alpha()), (Some(0.1), Some(50), None));
        assert!(c.validate().is_ok());
        assert!(c.with_lambda(1.5).validate().is_err());
        assert!(AgentConfig::Lstd {
            xi: 0.0,
            lambda: 0.0
        }
        .validate()
        .is_err());
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
    }
}
