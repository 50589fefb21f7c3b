//! Forward performance process `U_t(x) = -exp(-γx + h(t0, t))`.
//!
//! `h(t0, t) = ∫ g(v, S_v, Y_v) dv` with
//! `g(t, s, e) = ½ (μ(e) / (σ(e) s^β))² + γ a(t, e) - φ(t, e)` and
//! `φ(t, e) = γ b(t, e, θ̄) + λ(t, e) ∫ (e^{γ(1-θ̄)z} - 1) F(dz)`.

use std::fmt::Write as _;

use crate::config::{MarketParams, ModelConfig};
use crate::premium::PremiumModel;
use crate::regime::RegimePath;
use crate::retention::{RetentionProblem, UniformGrid};
use crate::simulate::MarketPath;
use crate::{Error, Result};

/// Largest exponent magnitude accepted by [`forward_utility`].
pub const EXPONENT_LIMIT: f64 = 700.0;

/// Snapshot of the forward problem along a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardState {
    pub t: f64,
    pub h_value: f64,
    pub regime: usize,
    pub price: f64,
}

impl ForwardState {
    pub fn initial(cfg: &ModelConfig) -> Self {
        Self { t: cfg.t0, h_value: 0.0, regime: cfg.regime.initial_state(), price: cfg.market.s0 }
    }
}

/// `φ(t, e)`.
pub fn phi(cfg: &ModelConfig, t: f64, state: usize) -> Result<f64> {
    let problem = RetentionProblem::from_config(cfg);
    let theta = problem.solve(t, state)?.theta;
    Ok(problem.cost(t, state, theta))
}

/// `½ (μ / (σ s^β))²`.
pub fn sharpe_term(market: &MarketParams, s: f64, state: usize) -> f64 {
    let m = market_price_of_risk(market, s, state);
    0.5 * m * m
}

/// `μ(e) / (σ(e) s^β)`.
pub fn market_price_of_risk(market: &MarketParams, s: f64, state: usize) -> f64 {
    market.mu[state] / (market.sigma[state] * s.powf(market.beta))
}

pub fn g_rate(cfg: &ModelConfig, t: f64, s: f64, state: usize) -> Result<f64> {
    let a = cfg.premia.gross_premium(&cfg.claims, t, state);
    Ok(sharpe_term(&cfg.market, s, state) + cfg.gamma * a - phi(cfg, t, state)?)
}

/// `Π*(t, s, e) = μ(e) / (γ σ(e)² s^{2β})`; does not depend on `t`.
pub fn optimal_investment(cfg: &ModelConfig, _t: f64, s: f64, state: usize) -> f64 {
    investment_for(&cfg.market, cfg.gamma, s, state)
}

pub(crate) fn investment_for(market: &MarketParams, gamma: f64, s: f64, state: usize) -> f64 {
    let sigma = market.sigma[state];
    market.mu[state] / (gamma * sigma * sigma * s.powf(2.0 * market.beta))
}

/// `-exp(-γx + h)`, refusing exponents beyond ±700.
pub fn forward_utility(cfg: &ModelConfig, x: f64, h_value: f64) -> Result<f64> {
    utility(cfg.gamma, x, h_value)
}

pub(crate) fn utility(gamma: f64, x: f64, h_value: f64) -> Result<f64> {
    let exponent = -gamma * x + h_value;
    if exponent.is_nan() || exponent.abs() > EXPONENT_LIMIT {
        return Err(Error::Saturated(exponent));
    }
    Ok(-exponent.exp())
}

/// `h(t0, t)` along a simulated market path; `t` must be a grid point.
pub fn accumulate_h(cfg: &ModelConfig, market: &MarketPath, regime: &RegimePath, t: f64) -> Result<f64> {
    let times = market.times();
    let end = times.partition_point(|&u| u <= t);
    if end == 0 || times[end - 1] != t {
        return Err(Error::OutOfRange { t, start: times[0], end: *times.last().unwrap_or(&times[0]) });
    }
    let model = ForwardModel::new(cfg);
    let profile = model.h_profile(&times[..end], &market.prices()[..end], regime)?;
    Ok(*profile.last().expect("non-empty"))
}

/// Evaluates `θ̄`, `φ` and `g`, optionally from values cached on a uniform
/// grid (exact at grid points, direct solve elsewhere).
#[derive(Debug, Clone)]
pub struct ForwardModel {
    cfg: ModelConfig,
    cache: Option<GridCache>,
}

#[derive(Debug, Clone)]
struct GridCache {
    grid: UniformGrid,
    /// `[k * K + state]` entries
    theta: Vec<f64>,
    /// `γ a - φ`
    drift: Vec<f64>,
}

impl ForwardModel {
    pub fn new(cfg: &ModelConfig) -> Self {
        Self { cfg: cfg.clone(), cache: None }
    }

    /// Precomputes `θ̄` and `γa - φ` on `t0 + k dt`.
    pub fn with_grid(cfg: &ModelConfig, dt: f64) -> Result<Self> {
        let grid = UniformGrid::new(cfg.t0, cfg.horizon, dt)?;
        let k = cfg.num_states();
        let problem = RetentionProblem::from_config(cfg);
        let mut theta = Vec::with_capacity((grid.steps + 1) * k);
        let mut drift = Vec::with_capacity((grid.steps + 1) * k);
        for step in 0..=grid.steps {
            let t = grid.time(step);
            for state in 0..k {
                let th = problem.solve(t, state)?.theta;
                theta.push(th);
                drift.push(cfg.gamma * cfg.premia.gross_premium(&cfg.claims, t, state) - problem.cost(t, state, th));
            }
        }
        Ok(Self { cfg: cfg.clone(), cache: Some(GridCache { grid, theta, drift }) })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn cached(&self, t: f64, state: usize) -> Option<(f64, f64)> {
        let cache = self.cache.as_ref()?;
        let k = cache.grid.index(t)?;
        let idx = k * self.cfg.num_states() + state;
        Some((cache.theta[idx], cache.drift[idx]))
    }

    fn direct(&self, t: f64, state: usize) -> Result<(f64, f64)> {
        let problem = RetentionProblem::from_config(&self.cfg);
        let th = problem.solve(t, state)?.theta;
        let a = self.cfg.premia.gross_premium(&self.cfg.claims, t, state);
        Ok((th, self.cfg.gamma * a - problem.cost(t, state, th)))
    }

    fn lookup(&self, t: f64, state: usize) -> Result<(f64, f64)> {
        match self.cached(t, state) {
            Some(v) => Ok(v),
            None => self.direct(t, state),
        }
    }

    /// `θ̄(t, e)`.
    pub fn retention(&self, t: f64, state: usize) -> Result<f64> {
        Ok(self.lookup(t, state)?.0)
    }

    pub fn phi(&self, t: f64, state: usize) -> Result<f64> {
        let a = self.cfg.premia.gross_premium(&self.cfg.claims, t, state);
        Ok(self.cfg.gamma * a - self.lookup(t, state)?.1)
    }

    pub fn g(&self, t: f64, s: f64, state: usize) -> Result<f64> {
        Ok(sharpe_term(&self.cfg.market, s, state) + self.lookup(t, state)?.1)
    }

    pub fn investment(&self, s: f64, state: usize) -> f64 {
        investment_for(&self.cfg.market, self.cfg.gamma, s, state)
    }

    /// Running `h(t0, t_k)` for every grid point. Each interval
    /// `[t_k, t_{k+1}]` uses the regime in force at `t_k` at both ends, so
    /// the grid must contain every switch time.
    pub fn h_profile(&self, times: &[f64], prices: &[f64], regime: &RegimePath) -> Result<Vec<f64>> {
        debug_assert_eq!(times.len(), prices.len());
        let mut out = Vec::with_capacity(times.len());
        let mut h = 0.0;
        out.push(h);
        for k in 0..times.len().saturating_sub(1) {
            let (lo, hi) = (times[k], times[k + 1]);
            let state = regime.state_at(lo)?;
            let left = self.g(lo, prices[k], state)?;
            let right = self.g(hi, prices[k + 1], state)?;
            h += 0.5 * (left + right) * (hi - lo);
            out.push(h);
        }
        Ok(out)
    }
}

/// `(t, h, U)` along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrajectory {
    pub times: Vec<f64>,
    pub h: Vec<f64>,
    pub utility: Vec<f64>,
}

impl ForwardTrajectory {
    /// Pairs an `h` profile with wealth values on the same grid.
    pub fn new(cfg: &ModelConfig, times: &[f64], h: &[f64], wealth: &[f64]) -> Result<Self> {
        if times.len() != h.len() || times.len() != wealth.len() {
            return Err(Error::domain("trajectory", "times, h and wealth must have equal length"));
        }
        let utility = wealth
            .iter()
            .zip(h)
            .map(|(&x, &hv)| forward_utility(cfg, x, hv))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { times: times.to_vec(), h: h.to_vec(), utility })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,h,U\n");
        for ((t, h), u) in self.times.iter().zip(&self.h).zip(&self.utility) {
            let _ = writeln!(out, "{t},{h},{u}");
        }
        out
    }
}
