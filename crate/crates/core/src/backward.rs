//! Classical (backward) exponential-utility benchmark when the stock does not
//! depend on the regime.
//!
//! The value function is `V = -exp(-γx + J1(t) s^{-2β} + J2(t, e))` with
//! `J1(t) = -μ̄² / (2σ̄²) (T - t)` and `J2` solving a `K`-dimensional ODE that
//! becomes linear in `J̃ = e^{J2}`:
//!
//! `J̃_i' = c_i(t) J̃_i - Σ_j q_ij J̃_j`,
//! `c_i(t) = γ(a - b(θ̄)) + (μ̄²/2) β (2β+1) (T - t) - λ ∫ (e^{γ(1-θ̄)z} - 1) F(dz)`.

use std::fmt::Write as _;

use crate::config::ModelConfig;
use crate::premium::PremiumModel;
use crate::regime::stationary_distribution;
use crate::retention::RetentionProblem;
use crate::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackwardOptions {
    /// Target RK4 step; the actual step divides `T - t0` evenly.
    pub step: f64,
    /// `(μ̄, σ̄)`; stationary averages of the regime coefficients if `None`.
    pub averages: Option<(f64, f64)>,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        Self { step: DEFAULT_STEP, averages: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardSolution {
    pub t0: f64,
    pub horizon: f64,
    pub gamma: f64,
    pub beta: f64,
    pub mu_bar: f64,
    pub sigma_bar: f64,
    /// Increasing grid on `[t0, T]`.
    pub times: Vec<f64>,
    pub j1_values: Vec<f64>,
    /// `j2_values[k][i] = J2(t_k, e_i)`.
    pub j2_values: Vec<Vec<f64>>,
}

/// `(μ̄, σ̄)` weighted by the stationary law of the chain.
pub fn stationary_averages(cfg: &ModelConfig) -> Result<(f64, f64)> {
    let p = stationary_distribution(&cfg.regime)?;
    let mu = p.iter().zip(&cfg.market.mu).map(|(p, m)| p * m).sum();
    let sigma = p.iter().zip(&cfg.market.sigma).map(|(p, s)| p * s).sum();
    Ok((mu, sigma))
}

pub fn solve_j2(cfg: &ModelConfig) -> Result<BackwardSolution> {
    solve_j2_with(cfg, &BackwardOptions::default())
}

pub fn solve_j2_with(cfg: &ModelConfig, opts: &BackwardOptions) -> Result<BackwardSolution> {
    if !(opts.step > 0.0 && opts.step.is_finite()) {
        return Err(Error::domain("step", "RK4 step must be positive"));
    }
    let (mu_bar, sigma_bar) = match opts.averages {
        Some(avg) => avg,
        None => stationary_averages(cfg)?,
    };
    if sigma_bar.is_nan() || sigma_bar <= 0.0 {
        return Err(Error::domain("sigma_bar", "averaged volatility must be positive"));
    }
    let (t0, horizon, beta) = (cfg.t0, cfg.horizon, cfg.market.beta);
    let n = (((horizon - t0) / opts.step) - 1e-9).ceil().max(1.0) as usize;
    let h = (horizon - t0) / n as f64;
    let k = cfg.num_states();
    let problem = RetentionProblem::from_config(cfg);
    let elastic = 0.5 * mu_bar * mu_bar * beta * (2.0 * beta + 1.0);

    let rates = |t: f64| -> Result<Vec<f64>> {
        (0..k)
            .map(|i| {
                let theta = problem.solve(t, i)?.theta;
                let a = cfg.premia.gross_premium(&cfg.claims, t, i);
                Ok(cfg.gamma * a - problem.cost(t, i, theta) + elastic * (horizon - t))
            })
            .collect()
    };
    let deriv = |c: &[f64], y: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|i| c[i] * y[i] - (0..k).map(|j| cfg.regime.rate(i, j) * y[j]).sum::<f64>())
            .collect()
    };
    let time = |m: usize| if m == n { horizon } else { t0 + m as f64 * h };

    let mut y = vec![1.0; k];
    let mut j2_rev = vec![vec![0.0; k]];
    let mut c_hi = rates(horizon)?;
    for m in (0..n).rev() {
        let (hi, lo) = (time(m + 1), time(m));
        let step = hi - lo;
        let c_mid = rates(0.5 * (hi + lo))?;
        let c_lo = rates(lo)?;
        let k1 = deriv(&c_hi, &y);
        let y2: Vec<f64> = (0..k).map(|i| y[i] - 0.5 * step * k1[i]).collect();
        let k2 = deriv(&c_mid, &y2);
        let y3: Vec<f64> = (0..k).map(|i| y[i] - 0.5 * step * k2[i]).collect();
        let k3 = deriv(&c_mid, &y3);
        let y4: Vec<f64> = (0..k).map(|i| y[i] - step * k3[i]).collect();
        let k4 = deriv(&c_lo, &y4);
        for i in 0..k {
            y[i] -= step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if let Some(i) = y.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::StepFailure { t: lo, state: i });
        }
        j2_rev.push(y.iter().map(|v| v.ln()).collect());
        c_hi = c_lo;
    }
    j2_rev.reverse();
    let times: Vec<f64> = (0..=n).map(time).collect();
    let j1_values = times.iter().map(|&t| j1_formula(mu_bar, sigma_bar, horizon, t)).collect();
    Ok(BackwardSolution {
        t0,
        horizon,
        gamma: cfg.gamma,
        beta,
        mu_bar,
        sigma_bar,
        times,
        j1_values,
        j2_values: j2_rev,
    })
}

fn j1_formula(mu: f64, sigma: f64, horizon: f64, t: f64) -> f64 {
    // `+ 0.0` turns the `-0` at the horizon into `0`
    -mu * mu / (2.0 * sigma * sigma) * (horizon - t) + 0.0
}

/// `J1(t)`.
pub fn j1(sol: &BackwardSolution, t: f64) -> f64 {
    j1_formula(sol.mu_bar, sol.sigma_bar, sol.horizon, t)
}

/// `μ̄ / (γ σ̄² s^{2β})`, the forward strategy with averaged coefficients.
pub fn forward_investment(sol: &BackwardSolution, s: f64) -> f64 {
    sol.mu_bar / (sol.gamma * sol.sigma_bar * sol.sigma_bar * s.powf(2.0 * sol.beta))
}

/// `2β J1(t) / (γ σ̄ s^{2β})`, how much more the forward investor holds.
pub fn investment_gap(sol: &BackwardSolution, t: f64, s: f64) -> f64 {
    2.0 * sol.beta * j1(sol, t) / (sol.gamma * sol.sigma_bar * s.powf(2.0 * sol.beta))
}

/// `Π^B(t, s) = μ̄/(γσ̄²s^{2β}) - 2βJ1(t)/(γσ̄ s^{2β})`.
pub fn backward_investment(sol: &BackwardSolution, t: f64, s: f64) -> f64 {
    forward_investment(sol, s) - investment_gap(sol, t, s)
}

/// `h^B(t0, s, e) = J1(t0) s^{-2β} + J2(t0, e)`.
pub fn backward_exponent(sol: &BackwardSolution, s: f64, state: usize) -> f64 {
    sol.j1_values[0] * s.powf(-2.0 * sol.beta) + sol.j2_values[0][state]
}

/// `V(t0, x, s, e)`.
pub fn backward_value(sol: &BackwardSolution, x: f64, s: f64, state: usize) -> f64 {
    -(-sol.gamma * x + backward_exponent(sol, s, state)).exp()
}

/// `Δ(s, e) = (V(t0) - U(t0)) / U(t0) = e^{h^B} - 1`, free of wealth.
pub fn value_gap_delta(sol: &BackwardSolution, s: f64, state: usize) -> f64 {
    backward_exponent(sol, s, state).exp_m1()
}

impl BackwardSolution {
    pub fn num_states(&self) -> usize {
        self.j2_values.first().map_or(0, Vec::len)
    }

    /// `J2(t0, e)`.
    pub fn j2_initial(&self, state: usize) -> f64 {
        self.j2_values[0][state]
    }

    /// CSV `t,J1,J2_1,...,J2_K`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,J1");
        for i in 1..=self.num_states() {
            let _ = write!(out, ",J2_{i}");
        }
        out.push('\n');
        for ((t, j1), j2) in self.times.iter().zip(&self.j1_values).zip(&self.j2_values) {
            let _ = write!(out, "{t},{j1}");
            for v in j2 {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}
