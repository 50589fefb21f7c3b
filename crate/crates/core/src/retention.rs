//! Optimal proportional reinsurance.
//!
//! For fixed `(t, e_i)` the insurer minimises
//! `γ b(t, e_i, θ) + λ(t, e_i) ∫ (e^{γ(1-θ)z} - 1) F(dz)` over `θ ∈ [0, 1]`.
//! The first-order condition
//! `∂b/∂θ(t, e_i, θ) = λ(t, e_i) ∫ z e^{γ(1-θ)z} F(dz)` is increasing in `θ`
//! under the strict-concavity assumption, which gives the three regions:
//! no cession (`D0`), full cession (`D1`) and an interior root.

use std::fmt;
use std::fmt::Write as _;

use crate::claims::{ClaimModel, TiltedMoment};
use crate::config::ModelConfig;
use crate::premium::PremiumModel;
use crate::roots::bracketed_root;
use crate::{Error, Result};

/// Absolute tolerance on the first-order-condition residual.
pub const FOC_TOLERANCE: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// `D0`: retaining every claim is optimal, `θ = 0`.
    NoCession,
    /// `D1`: ceding every claim is optimal, `θ = 1`.
    FullCession,
    Interior,
}

impl Region {
    pub fn label(self) -> &'static str {
        match self {
            Region::NoCession => "D0",
            Region::FullCession => "D1",
            Region::Interior => "interior",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetentionSolution {
    pub theta: f64,
    pub region: Region,
    /// First-order condition evaluated at `theta` (zero for the corner
    /// regions by convention).
    pub residual: f64,
    pub iterations: usize,
}

/// The per-`(t, e)` reinsurance problem for a premium rule.
#[derive(Clone, Copy)]
pub struct RetentionProblem<'a> {
    pub claims: &'a ClaimModel,
    pub premium: &'a dyn PremiumModel,
    pub gamma: f64,
}

impl<'a> RetentionProblem<'a> {
    pub fn from_config(cfg: &'a ModelConfig) -> Self {
        Self { claims: &cfg.claims, premium: &cfg.premia, gamma: cfg.gamma }
    }

    /// `∂b/∂θ - λ ∫ z e^{γ(1-θ)z} F(dz)`.
    pub fn foc(&self, t: f64, state: usize, theta: f64) -> f64 {
        let lambda = self.claims.intensity(t, state);
        let (db, _) = self.premium.reins_premium_db(self.claims, t, state, theta);
        db - lambda * self.claims.tilted(TiltedMoment::First, self.gamma * (1.0 - theta))
    }

    /// `∂/∂θ` of [`foc`](Self::foc); positive under strict concavity.
    pub fn foc_slope(&self, t: f64, state: usize, theta: f64) -> f64 {
        let lambda = self.claims.intensity(t, state);
        let (_, d2b) = self.premium.reins_premium_db(self.claims, t, state, theta);
        d2b + self.gamma * lambda * self.claims.tilted(TiltedMoment::Second, self.gamma * (1.0 - theta))
    }

    /// Objective `γ b + λ ∫ (e^{γ(1-θ)z} - 1) F(dz)` minimised by the
    /// optimal cession.
    pub fn cost(&self, t: f64, state: usize, theta: f64) -> f64 {
        let lambda = self.claims.intensity(t, state);
        self.gamma * self.premium.reins_premium(self.claims, t, state, theta)
            + lambda * self.claims.tilted(TiltedMoment::ExcessMgf, self.gamma * (1.0 - theta))
    }

    pub fn classify(&self, t: f64, state: usize) -> Region {
        let lambda = self.claims.intensity(t, state);
        let (db0, _) = self.premium.reins_premium_db(self.claims, t, state, 0.0);
        let (db1, _) = self.premium.reins_premium_db(self.claims, t, state, 1.0);
        if lambda * self.claims.tilted(TiltedMoment::First, self.gamma) <= db0 {
            Region::NoCession
        } else if db1 <= lambda * self.claims.mean() {
            Region::FullCession
        } else {
            Region::Interior
        }
    }

    pub fn solve(&self, t: f64, state: usize) -> Result<RetentionSolution> {
        match self.classify(t, state) {
            Region::NoCession => Ok(RetentionSolution { theta: 0.0, region: Region::NoCession, residual: 0.0, iterations: 0 }),
            Region::FullCession => Ok(RetentionSolution { theta: 1.0, region: Region::FullCession, residual: 0.0, iterations: 0 }),
            Region::Interior => {
                let out = bracketed_root(|th| self.foc(t, state, th), 0.0, 1.0, FOC_TOLERANCE, MAX_ITERATIONS)
                    .ok_or(Error::BracketFailure { t, state })?;
                if !out.converged {
                    return Err(Error::BracketFailure { t, state });
                }
                Ok(RetentionSolution {
                    theta: out.root,
                    region: Region::Interior,
                    residual: out.residual,
                    iterations: out.iterations,
                })
            }
        }
    }

    /// `dθ/dt` from the implicit function theorem applied to the
    /// first-order condition. Zero in the corner regions.
    pub fn time_derivative(&self, t: f64, state: usize) -> Result<f64> {
        let sol = self.solve(t, state)?;
        if sol.region != Region::Interior {
            return Ok(0.0);
        }
        let theta = sol.theta;
        let dlambda = self.claims.intensity_time_derivative(t, state);
        let g_t = self.premium.reins_marginal_time_derivative(self.claims, t, state, theta)
            - dlambda * self.claims.tilted(TiltedMoment::First, self.gamma * (1.0 - theta));
        Ok(-g_t / self.foc_slope(t, state, theta))
    }
}

pub fn classify_region(cfg: &ModelConfig, t: f64, state: usize) -> Region {
    RetentionProblem::from_config(cfg).classify(t, state)
}

pub fn solve_retention(cfg: &ModelConfig, t: f64, state: usize) -> Result<RetentionSolution> {
    RetentionProblem::from_config(cfg).solve(t, state)
}

/// `θ̄(t, e_i)` sampled along an increasing time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RetentionCurve {
    pub state: usize,
    pub times: Vec<f64>,
    pub solutions: Vec<RetentionSolution>,
}

impl RetentionCurve {
    pub fn thetas(&self) -> impl Iterator<Item = f64> + '_ {
        self.solutions.iter().map(|s| s.theta)
    }

    /// CSV rows `t,state,theta_star,region` (state 1-based), no header.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for (t, s) in self.times.iter().zip(&self.solutions) {
            let _ = writeln!(out, "{t},{},{},{}", self.state + 1, s.theta, s.region);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}{}", RETENTION_CSV_HEADER, self.csv_rows())
    }
}

pub const RETENTION_CSV_HEADER: &str = "t,state,theta_star,region\n";

pub fn retention_curve(cfg: &ModelConfig, state: usize, times: &[f64]) -> Result<RetentionCurve> {
    if !times.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::domain("times", "grid must be strictly increasing"));
    }
    if let Some(&t) = times.iter().find(|&&t| t < cfg.t0 || t > cfg.horizon) {
        return Err(Error::OutOfRange { t, start: cfg.t0, end: cfg.horizon });
    }
    let problem = RetentionProblem::from_config(cfg);
    let solutions = times
        .iter()
        .map(|&t| problem.solve(t, state))
        .collect::<Result<Vec<_>>>()?;
    Ok(RetentionCurve { state, times: times.to_vec(), solutions })
}

/// Index into the uniform grid `t0 + k dt` (last point clipped to the
/// horizon); `None` for times off the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub t0: f64,
    pub dt: f64,
    pub horizon: f64,
    pub steps: usize,
}

impl UniformGrid {
    pub fn new(t0: f64, horizon: f64, dt: f64) -> Result<Self> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::domain("dt", "step must be positive and finite"));
        }
        if horizon.is_nan() || t0.is_nan() || horizon <= t0 {
            return Err(Error::domain("T", "horizon must exceed t0"));
        }
        // tolerate dt dividing the horizon up to rounding
        let steps = ((horizon - t0) / dt - 1e-9).ceil().max(1.0) as usize;
        Ok(Self { t0, dt, horizon, steps })
    }

    pub fn time(&self, step: usize) -> f64 {
        if step >= self.steps {
            self.horizon
        } else {
            self.t0 + step as f64 * self.dt
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    pub fn index(&self, t: f64) -> Option<usize> {
        let k = ((t - self.t0) / self.dt).round();
        if k < 0.0 || k > self.steps as f64 {
            return None;
        }
        let k = k as usize;
        ((self.time(k) - t).abs() <= 1e-12).then_some(k)
    }
}

/// `θ̄` precomputed on a uniform grid, with a direct solve for any other
/// time.
#[derive(Debug, Clone)]
pub struct RetentionTable {
    cfg: ModelConfig,
    grid: UniformGrid,
    /// `values[k * K + state]`
    values: Vec<f64>,
}

impl RetentionTable {
    pub fn new(cfg: &ModelConfig, dt: f64) -> Result<Self> {
        let grid = UniformGrid::new(cfg.t0, cfg.horizon, dt)?;
        let k = cfg.num_states();
        let problem = RetentionProblem::from_config(cfg);
        let mut values = Vec::with_capacity((grid.steps + 1) * k);
        for step in 0..=grid.steps {
            let t = grid.time(step);
            for state in 0..k {
                values.push(problem.solve(t, state)?.theta);
            }
        }
        Ok(Self { cfg: cfg.clone(), grid, values })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    /// `θ̄(t, e_state)`.
    pub fn theta(&self, t: f64, state: usize) -> f64 {
        match self.grid.index(t) {
            Some(step) => self.values[step * self.cfg.num_states() + state],
            None => solve_retention(&self.cfg, t, state)
                .map(|s| s.theta)
                .expect("retention solvable on a validated config"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::premium::{PremiumSpec, Principle};

    fn cfg() -> ModelConfig {
        ModelConfig::default()
    }

    #[test]
    fn default_premium_is_always_interior() {
        let cfg = cfg();
        for k in 0..=20 {
            let t = k as f64 / 20.0;
            for j in 0..2 {
                assert_eq!(classify_region(&cfg, t, j), Region::Interior);
            }
        }
    }

    #[test]
    fn interior_root_satisfies_foc() {
        let cfg = cfg();
        let sol = solve_retention(&cfg, 0.0, 0).unwrap();
        assert_eq!(sol.region, Region::Interior);
        assert!(sol.theta > 0.0 && sol.theta < 1.0);
        assert!(sol.residual.abs() < FOC_TOLERANCE);
        let p = RetentionProblem::from_config(&cfg);
        assert!(p.foc(0.0, 0, sol.theta).abs() < FOC_TOLERANCE);
        assert!(p.foc_slope(0.0, 0, sol.theta) > 0.0);
    }

    #[test]
    fn zero_loading_gives_full_cession() {
        let cfg = cfg().with_overrides(&["premia.deltaR=0"]).unwrap();
        assert_eq!(classify_region(&cfg, 0.3, 1), Region::FullCession);
        let sol = solve_retention(&cfg, 0.3, 1).unwrap();
        assert_eq!(sol.theta, 1.0);
    }

    #[test]
    fn steep_premium_gives_no_cession() {
        let cfg = cfg()
            .with_overrides(&["premia.principle=expected-value", "premia.deltaR=5"])
            .unwrap();
        assert_eq!(classify_region(&cfg, 0.0, 0), Region::NoCession);
        assert_eq!(solve_retention(&cfg, 0.0, 0).unwrap().theta, 0.0);
    }

    #[test]
    fn overlapping_corner_conditions_prefer_no_cession() {
        // γ tiny and zero loading: E[Z e^{γZ}] ≈ E[Z] = ∂b/∂θ, D1 holds with
        // equality; a premium slope matching E[Z e^{γZ}] puts it in D0 as well
        let claims = ClaimModel::new(1.0, 0.0, 0.0, 10.0, 1.0).unwrap();
        struct Flat(f64);
        impl PremiumModel for Flat {
            fn gross_premium(&self, _: &ClaimModel, _: f64, _: usize) -> f64 {
                0.0
            }
            fn reins_premium(&self, _: &ClaimModel, _: f64, _: usize, th: f64) -> f64 {
                self.0 * th
            }
            fn reins_premium_db(&self, _: &ClaimModel, _: f64, _: usize, _: f64) -> (f64, f64) {
                (self.0, 0.0)
            }
        }
        let slope = claims.intensity(0.0, 0) * claims.mean();
        let flat = Flat(slope);
        let p = RetentionProblem { claims: &claims, premium: &flat, gamma: 1e-300 };
        assert_eq!(p.classify(0.0, 0), Region::NoCession);
    }

    #[test]
    fn curve_is_decreasing_and_regime_ordered() {
        let cfg = cfg();
        let times: Vec<f64> = (0..100).map(|k| k as f64 / 99.0).collect();
        let good = retention_curve(&cfg, 0, &times).unwrap();
        let bad = retention_curve(&cfg, 1, &times).unwrap();
        let g: Vec<f64> = good.thetas().collect();
        let b: Vec<f64> = bad.thetas().collect();
        assert!(g.windows(2).all(|w| w[1] < w[0]));
        assert!(b.windows(2).all(|w| w[1] < w[0]));
        assert!(g.iter().zip(&b).all(|(x, y)| y < x));
    }

    #[test]
    fn time_homogeneous_intensity_gives_flat_curve() {
        let cfg = cfg().with_overrides(&["claims.k1=0"]).unwrap();
        let times: Vec<f64> = (0..11).map(|k| k as f64 / 10.0).collect();
        let curve = retention_curve(&cfg, 0, &times).unwrap();
        let first = curve.solutions[0].theta;
        assert!(curve.thetas().all(|th| th == first));
    }

    #[test]
    fn implicit_derivative_matches_finite_difference() {
        let cfg = cfg();
        let p = RetentionProblem::from_config(&cfg);
        for &(t, j) in &[(0.1, 0usize), (0.5, 1), (0.9, 0)] {
            let h = 1e-5;
            let fd = (p.solve(t + h, j).unwrap().theta - p.solve(t - h, j).unwrap().theta) / (2.0 * h);
            let implicit = p.time_derivative(t, j).unwrap();
            assert!(implicit < 0.0);
            assert!((fd - implicit).abs() < 1e-5 * implicit.abs().max(1.0), "{fd} vs {implicit}");
        }
    }

    #[test]
    fn analytic_time_slope_matches_default_difference() {
        struct Wrapped(PremiumSpec);
        impl PremiumModel for Wrapped {
            fn gross_premium(&self, c: &ClaimModel, t: f64, s: usize) -> f64 {
                self.0.gross_premium(c, t, s)
            }
            fn reins_premium(&self, c: &ClaimModel, t: f64, s: usize, th: f64) -> f64 {
                self.0.reins_premium(c, t, s, th)
            }
            fn reins_premium_db(&self, c: &ClaimModel, t: f64, s: usize, th: f64) -> (f64, f64) {
                self.0.reins_premium_db(c, t, s, th)
            }
        }
        let claims = ClaimModel::new(1.0, 0.5, 1.0, 10.0, 1.0).unwrap();
        for principle in [Principle::ExpectedValue, Principle::Variance, Principle::IntensityAdjustedVariance] {
            let spec = PremiumSpec { principle, delta_i: 0.05, delta_r: 0.1, contract_horizon: 1.0 };
            let analytic = spec.reins_marginal_time_derivative(&claims, 0.4, 1, 0.3);
            let numeric = Wrapped(spec).reins_marginal_time_derivative(&claims, 0.4, 1, 0.3);
            assert!((analytic - numeric).abs() < 1e-6 * analytic.abs());
        }
    }

    #[test]
    fn table_matches_direct_solves() {
        let cfg = cfg();
        let table = RetentionTable::new(&cfg, 0.01).unwrap();
        for &t in &[0.0, 0.37, 0.5, 1.0, 0.123_456] {
            for j in 0..2 {
                assert_eq!(table.theta(t, j), solve_retention(&cfg, t, j).unwrap().theta);
            }
        }
    }

    #[test]
    fn uniform_grid_lookup() {
        let g = UniformGrid::new(0.0, 1.0, 1e-3).unwrap();
        assert_eq!(g.steps, 1000);
        assert_eq!(g.time(1000), 1.0);
        assert_eq!(g.index(0.5), Some(500));
        assert_eq!(g.index(0.500_5), None);
        assert_eq!(g.index(1.0), Some(1000));
        let odd = UniformGrid::new(0.0, 1.0, 0.3).unwrap();
        assert_eq!(odd.steps, 4);
        assert_eq!(odd.times(), vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
    }

    #[test]
    fn curve_csv_format() {
        let cfg = cfg();
        let curve = retention_curve(&cfg, 1, &[0.0, 0.5]).unwrap();
        let csv = curve.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,state,theta_star,region");
        assert!(lines[1].starts_with("0,2,") && lines[1].ends_with(",interior"));
        assert!(retention_curve(&cfg, 0, &[0.5, 0.2]).is_err());
        assert!(retention_curve(&cfg, 0, &[0.5, 2.0]).is_err());
    }
}
