//! Insurance premium `a(t, e)` and reinsurance premium `b(t, e, θ)`.
//!
//! `θ ∈ [0, 1]` is the share of each claim ceded to the reinsurer; the
//! insurer keeps `(1 - θ) Z`.

use std::fmt;
use std::str::FromStr;

use crate::claims::ClaimModel;
use crate::{Error, Result};

/// Premium calculation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Principle {
    /// `a = (1 + δ_I) λ E[Z]`, `b = (1 + δ_R) λ E[Z] θ`.
    ExpectedValue,
    /// `a = λ E[Z] + δ_I λ E[Z²]`, `b = θ λ E[Z] + δ_R θ² λ E[Z²]`.
    Variance,
    /// `a = λ E[Z] + 2 δ_I λ E[Z²] (1 + T λ)`,
    /// `b = λ E[Z] θ + 2 δ_R λ E[Z²] (1 + T λ) θ²`.
    IntensityAdjustedVariance,
}

impl Principle {
    pub fn name(self) -> &'static str {
        match self {
            Principle::ExpectedValue => "expected-value",
            Principle::Variance => "variance",
            Principle::IntensityAdjustedVariance => "intensity-adjusted-variance",
        }
    }
}

impl fmt::Display for Principle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Principle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expected-value" => Ok(Principle::ExpectedValue),
            "variance" => Ok(Principle::Variance),
            "intensity-adjusted-variance" => Ok(Principle::IntensityAdjustedVariance),
            other => Err(Error::domain(
                "premia.principle",
                format!("unknown principle `{other}` (expected-value, variance, intensity-adjusted-variance)"),
            )),
        }
    }
}

/// Anything that can price insurance and proportional reinsurance.
///
/// Derivatives in `θ` at the endpoints are one-sided.
pub trait PremiumModel: Send + Sync {
    fn gross_premium(&self, claims: &ClaimModel, t: f64, state: usize) -> f64;

    fn reins_premium(&self, claims: &ClaimModel, t: f64, state: usize, theta: f64) -> f64;

    /// `(∂b/∂θ, ∂²b/∂θ²)`.
    fn reins_premium_db(&self, claims: &ClaimModel, t: f64, state: usize, theta: f64) -> (f64, f64);

    /// `∂/∂t ∂b/∂θ`, by central differences unless overridden.
    fn reins_marginal_time_derivative(&self, claims: &ClaimModel, t: f64, state: usize, theta: f64) -> f64 {
        let h = 1e-5 * (1.0 + t.abs());
        let up = self.reins_premium_db(claims, t + h, state, theta).0;
        let down = self.reins_premium_db(claims, t - h, state, theta).0;
        (up - down) / (2.0 * h)
    }
}

/// Loadings, principle and the contract maturity used inside the
/// intensity-adjusted rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PremiumSpec {
    pub principle: Principle,
    pub delta_i: f64,
    pub delta_r: f64,
    pub contract_horizon: f64,
}

impl Default for PremiumSpec {
    fn default() -> Self {
        Self {
            principle: Principle::IntensityAdjustedVariance,
            delta_i: 0.05,
            delta_r: 0.1,
            contract_horizon: 1.0,
        }
    }
}

impl PremiumSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_i >= 0.0 && self.delta_i.is_finite()) {
            return Err(Error::domain("premia.deltaI", format!("must be non-negative, got {}", self.delta_i)));
        }
        if !(self.delta_r >= 0.0 && self.delta_r.is_finite()) {
            return Err(Error::domain("premia.deltaR", format!("must be non-negative, got {}", self.delta_r)));
        }
        if !(self.contract_horizon >= 0.0 && self.contract_horizon.is_finite()) {
            return Err(Error::domain(
                "premia.horizon",
                format!("must be non-negative, got {}", self.contract_horizon),
            ));
        }
        Ok(())
    }

    /// Soft warnings; a reinsurer loading at or below the insurer's usually
    /// breaks `b(t, e, 1) > a(t, e)`.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.delta_r <= self.delta_i {
            out.push(format!(
                "reinsurance loading deltaR = {} does not exceed insurance loading deltaI = {}",
                self.delta_r, self.delta_i
            ));
        }
        out
    }

    /// Loading factor multiplying `λ E[Z²]` for a given loading `δ`.
    fn variance_factor(&self, delta: f64, lambda: f64) -> f64 {
        match self.principle {
            Principle::ExpectedValue => 0.0,
            Principle::Variance => delta,
            Principle::IntensityAdjustedVariance => 2.0 * delta * (1.0 + self.contract_horizon * lambda),
        }
    }

    /// `d/dλ` of `λ * variance_factor(δ, λ)`.
    fn variance_factor_lambda_slope(&self, delta: f64, lambda: f64) -> f64 {
        match self.principle {
            Principle::ExpectedValue => 0.0,
            Principle::Variance => delta,
            Principle::IntensityAdjustedVariance => 2.0 * delta * (1.0 + 2.0 * self.contract_horizon * lambda),
        }
    }

    fn linear_factor(&self, delta: f64) -> f64 {
        match self.principle {
            Principle::ExpectedValue => 1.0 + delta,
            _ => 1.0,
        }
    }
}

impl PremiumModel for PremiumSpec {
    fn gross_premium(&self, claims: &ClaimModel, t: f64, state: usize) -> f64 {
        let lambda = claims.intensity(t, state);
        self.linear_factor(self.delta_i) * lambda * claims.mean()
            + self.variance_factor(self.delta_i, lambda) * lambda * claims.second_moment()
    }

    fn reins_premium(&self, claims: &ClaimModel, t: f64, state: usize, theta: f64) -> f64 {
        let lambda = claims.intensity(t, state);
        self.linear_factor(self.delta_r) * lambda * claims.mean() * theta
            + self.variance_factor(self.delta_r, lambda) * lambda * claims.second_moment() * theta * theta
    }

    fn reins_premium_db(&self, claims: &ClaimModel, t: f64, state: usize, theta: f64) -> (f64, f64) {
        let lambda = claims.intensity(t, state);
        let curvature = 2.0 * self.variance_factor(self.delta_r, lambda) * lambda * claims.second_moment();
        (self.linear_factor(self.delta_r) * lambda * claims.mean() + curvature * theta, curvature)
    }

    fn reins_marginal_time_derivative(&self, claims: &ClaimModel, t: f64, state: usize, theta: f64) -> f64 {
        let lambda = claims.intensity(t, state);
        let dlambda = claims.intensity_time_derivative(t, state);
        dlambda
            * (self.linear_factor(self.delta_r) * claims.mean()
                + 2.0 * theta * self.variance_factor_lambda_slope(self.delta_r, lambda) * claims.second_moment())
    }
}
