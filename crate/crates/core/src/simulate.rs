//! Joint simulation of the regime, the CEV stock, the claims and the
//! insurer's wealth, and the Monte Carlo checks built on it.
//!
//! All paths share one time grid per draw: the uniform grid `t0 + k dt`
//! merged with every regime switch and claim arrival. Each path owns a
//! ChaCha8 stream derived from the master seed and the path index, so results
//! do not depend on scheduling.

use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::claims::{simulate_claims, ClaimPath};
use crate::config::ModelConfig;
use crate::forward::{investment_for, market_price_of_risk, utility, ForwardModel, EXPONENT_LIMIT};
use crate::premium::PremiumModel;
use crate::regime::{simulate_chain, RegimePath};
use crate::stats::{mean_and_se, NeumaierSum};
use crate::{Error, Result};

/// Prices at or below this level are absorbed.
pub const PRICE_FLOOR: f64 = 1e-8;
/// Saturated paths above this fraction make a report unreliable.
pub const MAX_SATURATED_FRACTION: f64 = 1e-3;

/// The uniform grid on `[t0, horizon]` merged with `extra` times (all of
/// which must lie in the interval). Exact duplicates are removed.
pub fn build_grid(t0: f64, horizon: f64, dt: f64, extra: &[&[f64]]) -> Result<Vec<f64>> {
    let base = crate::retention::UniformGrid::new(t0, horizon, dt)?;
    let mut times = base.times();
    for set in extra {
        if let Some(&t) = set.iter().find(|&&t| !(t >= t0 && t <= horizon)) {
            return Err(Error::OutOfRange { t, start: t0, end: horizon });
        }
        times.extend_from_slice(set);
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    Ok(times)
}

/// Stock prices on a grid, with the Gaussian increments that drove them.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPath {
    times: Vec<f64>,
    prices: Vec<f64>,
    increments: Vec<f64>,
    absorbed_at: Option<f64>,
}

impl MarketPath {
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    /// `W_{t_{k+1}} - W_{t_k}`.
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn absorbed(&self) -> bool {
        self.absorbed_at.is_some()
    }

    pub fn absorbed_at(&self) -> Option<f64> {
        self.absorbed_at
    }

    pub fn terminal_price(&self) -> f64 {
        *self.prices.last().expect("non-empty path")
    }

    /// Euler-Maruyama with coefficients frozen at the left end of each step,
    /// driven by the given Brownian increments.
    pub fn from_increments(cfg: &ModelConfig, regime: &RegimePath, times: Vec<f64>, increments: Vec<f64>) -> Result<Self> {
        if times.len() != increments.len() + 1 {
            return Err(Error::domain("market path", "need one increment per grid interval"));
        }
        let m = &cfg.market;
        let mut prices = Vec::with_capacity(times.len());
        let mut s = m.s0;
        let mut absorbed_at = None;
        prices.push(s);
        for k in 0..increments.len() {
            if absorbed_at.is_none() {
                let state = regime.state_at(times[k])?;
                let dt = times[k + 1] - times[k];
                s += s * (m.mu[state] * dt + m.sigma[state] * s.powf(m.beta) * increments[k]);
                if s.is_nan() || s <= PRICE_FLOOR {
                    s = PRICE_FLOOR;
                    absorbed_at = Some(times[k + 1]);
                }
            }
            prices.push(s);
        }
        Ok(Self { times, prices, increments, absorbed_at })
    }

    /// CSV `t,S,dW` (the increment on the row is the one leaving `t`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,S,dW\n");
        for (k, (t, s)) in self.times.iter().zip(&self.prices).enumerate() {
            let dw = self.increments.get(k).copied().unwrap_or(0.0);
            let _ = writeln!(out, "{t},{s},{dw}");
        }
        out
    }
}

/// Simulates the stock on the uniform grid refined by the regime switches.
pub fn simulate_market<R: Rng + ?Sized>(cfg: &ModelConfig, regime: &RegimePath, dt: f64, rng: &mut R) -> Result<MarketPath> {
    let times = build_grid(cfg.t0, cfg.horizon, dt, &[regime.jump_times()])?;
    simulate_market_on(cfg, regime, times, rng)
}

/// Simulates the stock on a caller-supplied grid.
pub fn simulate_market_on<R: Rng + ?Sized>(
    cfg: &ModelConfig,
    regime: &RegimePath,
    times: Vec<f64>,
    rng: &mut R,
) -> Result<MarketPath> {
    let increments = times
        .windows(2)
        .map(|w| (w[1] - w[0]).sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    MarketPath::from_increments(cfg, regime, times, increments)
}

/// An investment and reinsurance rule `(Π(t, s, e), θ(t, s, e))`.
pub trait Strategy: Send + Sync {
    fn label(&self) -> String;
    fn investment(&self, t: f64, s: f64, state: usize) -> f64;
    fn retention(&self, t: f64, s: f64, state: usize) -> f64;
}

/// `(Π*, θ̄)`.
#[derive(Debug, Clone)]
pub struct OptimalStrategy {
    model: Arc<ForwardModel>,
}

impl OptimalStrategy {
    pub fn new(model: Arc<ForwardModel>) -> Self {
        Self { model }
    }
}

fn theta_bar(model: &ForwardModel, t: f64, state: usize) -> f64 {
    model.retention(t, state).expect("retention solvable on a validated config")
}

impl Strategy for OptimalStrategy {
    fn label(&self) -> String {
        "optimal".into()
    }

    fn investment(&self, _t: f64, s: f64, state: usize) -> f64 {
        self.model.investment(s, state)
    }

    fn retention(&self, t: f64, _s: f64, state: usize) -> f64 {
        theta_bar(&self.model, t, state)
    }
}

/// Departures from the optimal rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    /// `(c Π*, θ̄)`.
    ScaledInvestment(f64),
    /// `(Π*, clip(θ̄ + d))`.
    ShiftedRetention(f64),
    /// `(Π*, θ̄(max(t - lag, t0)))`.
    LaggedRetention(f64),
    /// `(Π*, θ)` with a constant `θ`.
    FixedRetention(f64),
}

#[derive(Debug, Clone)]
pub struct PerturbedStrategy {
    model: Arc<ForwardModel>,
    kind: Perturbation,
}

impl PerturbedStrategy {
    pub fn new(model: Arc<ForwardModel>, kind: Perturbation) -> Self {
        Self { model, kind }
    }

    pub fn kind(&self) -> Perturbation {
        self.kind
    }
}

impl Strategy for PerturbedStrategy {
    fn label(&self) -> String {
        match self.kind {
            Perturbation::ScaledInvestment(c) => format!("pi-x{c}"),
            Perturbation::ShiftedRetention(d) if d >= 0.0 => format!("theta+{d}"),
            Perturbation::ShiftedRetention(d) => format!("theta{d}"),
            Perturbation::LaggedRetention(lag) => format!("theta-lag{lag}"),
            Perturbation::FixedRetention(th) => format!("theta={th}"),
        }
    }

    fn investment(&self, _t: f64, s: f64, state: usize) -> f64 {
        let base = self.model.investment(s, state);
        match self.kind {
            Perturbation::ScaledInvestment(c) => c * base,
            _ => base,
        }
    }

    fn retention(&self, t: f64, _s: f64, state: usize) -> f64 {
        match self.kind {
            Perturbation::ScaledInvestment(_) => theta_bar(&self.model, t, state),
            Perturbation::ShiftedRetention(d) => (theta_bar(&self.model, t, state) + d).clamp(0.0, 1.0),
            Perturbation::LaggedRetention(lag) => {
                let t0 = self.model.config().t0;
                theta_bar(&self.model, (t - lag).max(t0), state)
            }
            Perturbation::FixedRetention(th) => th,
        }
    }
}

/// The five standard suboptimal strategies: half and double investment,
/// retention shifted by ±0.1 and retention lagged by a quarter year.
pub fn canned_perturbations(model: &Arc<ForwardModel>) -> Vec<PerturbedStrategy> {
    [
        Perturbation::ScaledInvestment(0.5),
        Perturbation::ScaledInvestment(2.0),
        Perturbation::ShiftedRetention(0.1),
        Perturbation::ShiftedRetention(-0.1),
        Perturbation::LaggedRetention(0.25),
    ]
    .into_iter()
    .map(|kind| PerturbedStrategy::new(Arc::clone(model), kind))
    .collect()
}

/// Wealth on the market grid with the strategy marks used on each step.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthPath {
    pub times: Vec<f64>,
    pub wealth: Vec<f64>,
    /// `Π` at the left end of each step (last entry at `T`).
    pub investment: Vec<f64>,
    /// `θ` at the left end of each step (last entry at `T-`).
    pub retention: Vec<f64>,
    /// `X_{k+1} - X_k`.
    pub increments: Vec<f64>,
    /// Claim deductions `(1 - θ_{τ-}) Z` at their arrival times.
    pub deductions: Vec<(f64, f64)>,
}

impl WealthPath {
    pub fn terminal(&self) -> f64 {
        *self.wealth.last().expect("non-empty path")
    }

    /// `x0 + Σ increments` with compensated summation.
    pub fn reconstructed_terminal(&self) -> f64 {
        let mut acc = NeumaierSum::new();
        acc.add(self.wealth[0]);
        for &dx in &self.increments {
            acc.add(dx);
        }
        acc.total()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,X,Pi,theta\n");
        for k in 0..self.times.len() {
            let _ = writeln!(out, "{},{},{},{}", self.times[k], self.wealth[k], self.investment[k], self.retention[k]);
        }
        out
    }
}

/// Integrates the wealth equation along a simulated market, regime and
/// claim path. The premium drift uses the trapezoid rule within each step
/// (regime of the step at both ends), the trading gain uses `Π` at the left
/// end, and claims are deducted at their arrival times with the retention
/// just before the arrival.
pub fn simulate_wealth(
    cfg: &ModelConfig,
    market: &MarketPath,
    regime: &RegimePath,
    claims: &ClaimPath,
    strategy: &dyn Strategy,
) -> Result<WealthPath> {
    let n = market.times.len();
    let mut path = WealthPath {
        times: market.times.clone(),
        wealth: Vec::with_capacity(n),
        investment: Vec::with_capacity(n),
        retention: Vec::with_capacity(n),
        increments: Vec::with_capacity(n.saturating_sub(1)),
        deductions: Vec::new(),
    };
    let mut x = cfg.x0;
    path.wealth.push(x);
    let mut claim_idx = 0;
    let mut last = (0.0, 0.0);
    wealth_steps(cfg, market, regime, claims, strategy, &mut claim_idx, |step| {
        path.investment.push(step.pi);
        path.retention.push(step.theta);
        if let Some(d) = step.deduction {
            path.deductions.push((step.t_next, d));
        }
        path.increments.push(step.dx);
        x += step.dx;
        path.wealth.push(x);
        last = (step.pi_end, step.theta_end);
    })?;
    if claim_idx != claims.len() {
        return Err(Error::domain("claim path", "claim times must lie on the market grid"));
    }
    path.investment.push(last.0);
    path.retention.push(last.1);
    Ok(path)
}

struct Step {
    t_next: f64,
    pi: f64,
    theta: f64,
    pi_end: f64,
    theta_end: f64,
    deduction: Option<f64>,
    dx: f64,
}

fn wealth_steps(
    cfg: &ModelConfig,
    market: &MarketPath,
    regime: &RegimePath,
    claims: &ClaimPath,
    strategy: &dyn Strategy,
    claim_idx: &mut usize,
    mut visit: impl FnMut(Step),
) -> Result<()> {
    let (times, prices, dw) = (&market.times, &market.prices, &market.increments);
    let m = &cfg.market;
    let premium = &cfg.premia;
    for k in 0..dw.len() {
        let (t, t_next) = (times[k], times[k + 1]);
        let (s, s_next) = (prices[k], prices[k + 1]);
        let state = regime.state_at(t)?;
        let dt = t_next - t;
        let pi = strategy.investment(t, s, state);
        let theta = strategy.retention(t, s, state);
        let theta_end = strategy.retention(t_next, s_next, state);
        let net = |u: f64, th: f64| {
            premium.gross_premium(&cfg.claims, u, state) - premium.reins_premium(&cfg.claims, u, state, th)
        };
        let mut dx = 0.5 * (net(t, theta) + net(t_next, theta_end)) * dt
            + pi * (m.mu[state] * dt + m.sigma[state] * s.powf(m.beta) * dw[k]);
        let mut deduction = None;
        while *claim_idx < claims.len() && claims.arrival_times[*claim_idx] == t_next {
            let d = (1.0 - theta_end) * claims.sizes[*claim_idx];
            dx -= d;
            deduction = Some(deduction.unwrap_or(0.0) + d);
            *claim_idx += 1;
        }
        let pi_end = strategy.investment(t_next, s_next, state);
        visit(Step { t_next, pi, theta, pi_end, theta_end, deduction, dx });
    }
    Ok(())
}

fn terminal_wealth(
    cfg: &ModelConfig,
    market: &MarketPath,
    regime: &RegimePath,
    claims: &ClaimPath,
    strategy: &dyn Strategy,
) -> Result<f64> {
    let mut acc = NeumaierSum::new();
    acc.add(cfg.x0);
    let mut idx = 0;
    wealth_steps(cfg, market, regime, claims, strategy, &mut idx, |step| acc.add(step.dx))?;
    Ok(acc.total())
}

/// Everything drawn for one path.
#[derive(Debug, Clone)]
pub struct PathDraw {
    pub regime: RegimePath,
    pub claims: ClaimPath,
    pub market: MarketPath,
}

/// Per-path generator: stream `index` of the master seed.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws the regime, then the claims, then the Brownian increments.
pub fn draw_path<R: Rng + ?Sized>(cfg: &ModelConfig, dt: f64, rng: &mut R) -> Result<PathDraw> {
    let regime = simulate_chain(&cfg.regime, cfg.t0, cfg.horizon, rng);
    let claims = simulate_claims(&cfg.claims, &regime, cfg.t0, cfg.horizon, rng);
    let times = build_grid(cfg.t0, cfg.horizon, dt, &[regime.jump_times(), &claims.arrival_times])?;
    let market = simulate_market_on(cfg, &regime, times, rng)?;
    Ok(PathDraw { regime, claims, market })
}

/// One fully simulated path under a strategy, with `h` and the forward
/// utility along it.
#[derive(Debug, Clone)]
pub struct SimulatedPath {
    pub draw: PathDraw,
    pub wealth: WealthPath,
    pub h: Vec<f64>,
}

impl SimulatedPath {
    /// CSV `t,state,S,X,Pi,theta,h,U` (state 1-based, `U` empty when the
    /// exponent saturates).
    pub fn to_csv(&self, cfg: &ModelConfig) -> String {
        let mut out = String::from("t,state,S,X,Pi,theta,h,U\n");
        let w = &self.wealth;
        for k in 0..w.times.len() {
            let t = w.times[k];
            let state = self.draw.regime.state_at(t).unwrap_or(0) + 1;
            let u = utility(cfg.gamma, w.wealth[k], self.h[k]).map(|u| u.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{t},{state},{},{},{},{},{},{u}",
                self.draw.market.prices()[k],
                w.wealth[k],
                w.investment[k],
                w.retention[k],
                self.h[k]
            );
        }
        out
    }
}

pub fn simulate_path(model: &ForwardModel, strategy: &dyn Strategy, dt: f64, seed: u64) -> Result<SimulatedPath> {
    let cfg = model.config();
    let draw = draw_path(cfg, dt, &mut path_rng(seed, 0))?;
    let wealth = simulate_wealth(cfg, &draw.market, &draw.regime, &draw.claims, strategy)?;
    let h = model.h_profile(draw.market.times(), draw.market.prices(), &draw.regime)?;
    Ok(SimulatedPath { draw, wealth, h })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// `|estimate - target| <= 3 se`.
    MartingaleConsistent,
    /// `estimate < target - 3 se`.
    SupermartingaleConsistent,
    /// `estimate > target + 3 se`.
    Violation,
}

impl Verdict {
    pub fn classify(estimate: f64, target: f64, se: f64) -> Self {
        if estimate > target + 3.0 * se {
            Verdict::Violation
        } else if estimate < target - 3.0 * se {
            Verdict::SupermartingaleConsistent
        } else {
            Verdict::MartingaleConsistent
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Verdict::MartingaleConsistent => "martingale-consistent",
            Verdict::SupermartingaleConsistent => "supermartingale-consistent",
            Verdict::Violation => "violation",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Monte Carlo estimate of `E[-exp(-γ X_T + h(t0, T))]` for one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleReport {
    pub label: String,
    pub estimate: f64,
    pub target: f64,
    pub se: f64,
    /// Paths entering the estimate.
    pub n_paths: usize,
    /// Paths dropped because the stock hit the floor.
    pub absorbed: usize,
    /// Paths dropped because the exponent left `[-700, 700]`.
    pub saturated: usize,
    pub verdict: Verdict,
}

impl MartingaleReport {
    pub fn saturated_fraction(&self) -> f64 {
        let total = self.n_paths + self.saturated;
        if total == 0 {
            0.0
        } else {
            self.saturated as f64 / total as f64
        }
    }

    pub fn saturation_ok(&self) -> bool {
        self.saturated_fraction() < MAX_SATURATED_FRACTION
    }

    pub const RECORD_HEADER: &'static str = "label,estimate,target,se,n,verdict";

    /// `label,estimate,target,se,n,verdict`.
    pub fn record(&self) -> String {
        format!("{},{},{},{},{},{}", self.label, self.estimate, self.target, self.se, self.n_paths, self.verdict)
    }
}

/// Per-path difference `v(strategy) - v(baseline)` under common random
/// numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedComparison {
    pub label: String,
    pub baseline: String,
    pub mean_difference: f64,
    pub se: f64,
    pub n_paths: usize,
}

impl PairedComparison {
    /// The strategy is lower than the baseline by more than 3 standard
    /// errors.
    pub fn strictly_lower(&self) -> bool {
        self.mean_difference < -3.0 * self.se
    }

    pub const RECORD_HEADER: &'static str = "label,baseline,mean_difference,se,n,strictly_lower";

    pub fn record(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.label,
            self.baseline,
            self.mean_difference,
            self.se,
            self.n_paths,
            self.strictly_lower()
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub reports: Vec<MartingaleReport>,
    /// Each strategy after the first against the first.
    pub paired: Vec<PairedComparison>,
    pub total_paths: usize,
}

impl SuiteReport {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", MartingaleReport::RECORD_HEADER);
        for r in &self.reports {
            out.push_str(&r.record());
            out.push('\n');
        }
        out
    }

    pub fn paired_csv(&self) -> String {
        let mut out = format!("{}\n", PairedComparison::RECORD_HEADER);
        for p in &self.paired {
            out.push_str(&p.record());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloOptions {
    pub n_paths: usize,
    pub dt: f64,
    pub seed: u64,
}

impl MonteCarloOptions {
    pub fn new(n_paths: usize, dt: f64, seed: u64) -> Self {
        Self { n_paths, dt, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::domain("paths", "need at least two paths"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::domain("dt", "step must be positive"));
        }
        Ok(())
    }
}

enum PathOutcome {
    Absorbed,
    /// `Some(value)` per strategy, `None` where the exponent saturated.
    Values(Vec<Option<f64>>),
}

/// Runs every strategy on the same draws. `h(t0, T)` depends only on the
/// market and regime, so it is shared too.
pub fn martingale_suite(model: &ForwardModel, strategies: &[&dyn Strategy], opts: MonteCarloOptions) -> Result<SuiteReport> {
    opts.validate()?;
    if strategies.is_empty() {
        return Err(Error::domain("strategies", "need at least one strategy"));
    }
    let cfg = model.config();
    let outcomes = (0..opts.n_paths)
        .into_par_iter()
        .map(|i| -> Result<PathOutcome> {
            let draw = draw_path(cfg, opts.dt, &mut path_rng(opts.seed, i as u64))?;
            if draw.market.absorbed() {
                return Ok(PathOutcome::Absorbed);
            }
            let h = *model
                .h_profile(draw.market.times(), draw.market.prices(), &draw.regime)?
                .last()
                .expect("non-empty grid");
            let values = strategies
                .iter()
                .map(|s| {
                    let x = terminal_wealth(cfg, &draw.market, &draw.regime, &draw.claims, *s)?;
                    Ok(utility(cfg.gamma, x, h).ok())
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PathOutcome::Values(values))
        })
        .collect::<Result<Vec<_>>>()?;

    let target = -(-cfg.gamma * cfg.x0).exp();
    let absorbed = outcomes.iter().filter(|o| matches!(o, PathOutcome::Absorbed)).count();
    let rows: Vec<&Vec<Option<f64>>> = outcomes
        .iter()
        .filter_map(|o| match o {
            PathOutcome::Values(v) => Some(v),
            PathOutcome::Absorbed => None,
        })
        .collect();
    let reports = strategies
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let values: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
            let (estimate, se) = mean_and_se(&values);
            MartingaleReport {
                label: s.label(),
                estimate,
                target,
                se,
                n_paths: values.len(),
                absorbed,
                saturated: rows.len() - values.len(),
                verdict: Verdict::classify(estimate, target, se),
            }
        })
        .collect::<Vec<_>>();
    let paired = (1..strategies.len())
        .map(|j| {
            let diffs: Vec<f64> = rows
                .iter()
                .filter_map(|r| match (r[j], r[0]) {
                    (Some(v), Some(base)) => Some(v - base),
                    _ => None,
                })
                .collect();
            let (mean_difference, se) = mean_and_se(&diffs);
            PairedComparison {
                label: reports[j].label.clone(),
                baseline: reports[0].label.clone(),
                mean_difference,
                se,
                n_paths: diffs.len(),
            }
        })
        .collect();
    Ok(SuiteReport { reports, paired, total_paths: opts.n_paths })
}

pub fn martingale_check(model: &ForwardModel, strategy: &dyn Strategy, opts: MonteCarloOptions) -> Result<MartingaleReport> {
    Ok(martingale_suite(model, &[strategy], opts)?.reports.remove(0))
}

/// The optimal strategy followed by the five canned perturbations.
pub fn standard_suite(model: &Arc<ForwardModel>, opts: MonteCarloOptions) -> Result<SuiteReport> {
    let optimal = OptimalStrategy::new(Arc::clone(model));
    let perturbed = canned_perturbations(model);
    let mut strategies: Vec<&dyn Strategy> = vec![&optimal];
    strategies.extend(perturbed.iter().map(|s| s as &dyn Strategy));
    martingale_suite(model, &strategies, opts)
}

/// Mean of the Girsanov density `L_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityReport {
    pub mean: f64,
    pub se: f64,
    pub n_paths: usize,
    pub absorbed: usize,
    pub saturated: usize,
}

impl DensityReport {
    pub fn within(&self, k_se: f64) -> bool {
        (self.mean - 1.0).abs() <= k_se * self.se
    }

    pub const RECORD_HEADER: &'static str = "mean,se,n,absorbed,saturated";

    pub fn record(&self) -> String {
        format!("{},{},{},{},{}", self.mean, self.se, self.n_paths, self.absorbed, self.saturated)
    }
}

/// `L_T = exp(-½ ∫ m² dt - ∫ m dW)` with `m = μ / (σ S^β)` frozen at the
/// left end of each step.
pub fn density_check(cfg: &ModelConfig, opts: MonteCarloOptions) -> Result<DensityReport> {
    opts.validate()?;
    let outcomes = (0..opts.n_paths)
        .into_par_iter()
        .map(|i| -> Result<Option<Option<f64>>> {
            let mut rng = path_rng(opts.seed, i as u64);
            let regime = simulate_chain(&cfg.regime, cfg.t0, cfg.horizon, &mut rng);
            let market = simulate_market(cfg, &regime, opts.dt, &mut rng)?;
            if market.absorbed() {
                return Ok(None);
            }
            Ok(Some(density_exponent(cfg, &market, &regime)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let absorbed = outcomes.iter().filter(|o| o.is_none()).count();
    let kept: Vec<Option<f64>> = outcomes.into_iter().flatten().collect();
    let values: Vec<f64> = kept.iter().filter_map(|v| *v).collect();
    let (mean, se) = mean_and_se(&values);
    Ok(DensityReport { mean, se, n_paths: values.len(), absorbed, saturated: kept.len() - values.len() })
}

/// `L_T` for one path, `None` when the exponent saturates.
pub fn density_exponent(cfg: &ModelConfig, market: &MarketPath, regime: &RegimePath) -> Result<Option<f64>> {
    let mut exponent = NeumaierSum::new();
    for k in 0..market.increments.len() {
        let state = regime.state_at(market.times[k])?;
        let m = market_price_of_risk(&cfg.market, market.prices[k], state);
        let dt = market.times[k + 1] - market.times[k];
        exponent.add(-0.5 * m * m * dt - m * market.increments[k]);
    }
    let e = exponent.total();
    Ok((e.abs() <= EXPONENT_LIMIT).then(|| e.exp()))
}

/// `Π*` along a market path; handy for plotting.
pub fn optimal_investment_path(cfg: &ModelConfig, market: &MarketPath, regime: &RegimePath) -> Result<Vec<f64>> {
    market
        .times
        .iter()
        .zip(&market.prices)
        .map(|(&t, &s)| Ok(investment_for(&cfg.market, cfg.gamma, s, regime.state_at(t)?)))
        .collect()
}
