//! Independent numerical oracles shared by the integration tests. Nothing here
//! calls the closed-form moment or root-finding code under test.
#![allow(dead_code)]

use forward_reins::claims::ClaimModel;
use forward_reins::config::{validate_assumptions, AssumptionGrid, ModelConfig};
use forward_reins::premium::PremiumModel;
use rand::Rng;

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// `P_n`.
pub fn gauss_legendre_rule(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Composite 20-point Gauss-Legendre on `panels` equal panels.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let rule = gauss_legendre_rule(20);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let mid = lo + 0.5 * h;
        let part: f64 = rule.iter().map(|&(x, w)| w * f(mid + 0.5 * h * x)).sum();
        total += 0.5 * h * part;
    }
    total
}

/// Midpoint Riemann sum with `n` cells.
pub fn riemann(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = 0.0;
    let mut comp = 0.0;
    for i in 0..n {
        // Kahan summation keeps 1e7 terms accurate
        let y = f(a + (i as f64 + 0.5) * h) - comp;
        let t = acc + y;
        comp = (t - acc) - y;
        acc = t;
    }
    acc * h
}

/// Truncated-exponential density written out from scratch.
pub fn density(claims: &ClaimModel, z: f64) -> f64 {
    let r = claims.rate();
    r * (-r * z).exp() / (1.0 - (-r * claims.zmax()).exp())
}

/// `∫ z^p e^{cz} F(dz)` by quadrature.
pub fn tilted_moment(claims: &ClaimModel, p: i32, c: f64) -> f64 {
    integrate(|z| z.powi(p) * (c * z).exp() * density(claims, z), 0.0, claims.zmax(), 200)
}

/// `∫ (e^{cz} - 1) F(dz)` by quadrature.
pub fn excess_mgf(claims: &ClaimModel, c: f64) -> f64 {
    integrate(|z| (c * z).exp_m1() * density(claims, z), 0.0, claims.zmax(), 200)
}

/// `Ψ^θ` with the positive factor `e^{-γx}` dropped:
/// `-γ b(θ) - λ ∫ (e^{γ(1-θ)z} - 1) F(dz)`.
pub fn psi_theta(cfg: &ModelConfig, t: f64, state: usize, theta: f64) -> f64 {
    let b = cfg.premia.reins_premium(&cfg.claims, t, state, theta);
    let lambda = cfg.claims.intensity(t, state);
    -cfg.gamma * b - lambda * excess_mgf(&cfg.claims, cfg.gamma * (1.0 - theta))
}

/// Maximiser of `Ψ^θ` over `n + 1` equally spaced points of `[0, 1]`.
pub fn argmax_psi_theta(cfg: &ModelConfig, t: f64, state: usize, n: usize) -> f64 {
    argmax_on_grid(|th| psi_theta(cfg, t, state, th), 0.0, 1.0, n)
}

/// Fast `Ψ^θ` for fine grids: the claim integral is a Gauss-Legendre sum
/// whose nodes are fixed, so only the exponentials change with `θ`.
pub struct PsiTheta {
    nodes: Vec<(f64, f64)>,
    gamma: f64,
    lambda: f64,
    cfg: ModelConfig,
    t: f64,
    state: usize,
}

impl PsiTheta {
    pub fn new(cfg: &ModelConfig, t: f64, state: usize) -> Self {
        let rule = gauss_legendre_rule(20);
        let zmax = cfg.claims.zmax();
        let panels = 100;
        let h = zmax / panels as f64;
        let mut nodes = Vec::with_capacity(panels * rule.len());
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for &(x, w) in &rule {
                let z = mid + 0.5 * h * x;
                nodes.push((z, 0.5 * h * w * density(&cfg.claims, z)));
            }
        }
        Self { nodes, gamma: cfg.gamma, lambda: cfg.claims.intensity(t, state), cfg: cfg.clone(), t, state }
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let c = self.gamma * (1.0 - theta);
        let integral: f64 = self.nodes.iter().map(|&(z, w)| w * (c * z).exp_m1()).sum();
        let b = self.cfg.premia.reins_premium(&self.cfg.claims, self.t, self.state, theta);
        -self.gamma * b - self.lambda * integral
    }

    pub fn argmax(&self, n: usize) -> f64 {
        argmax_on_grid(|th| self.eval(th), 0.0, 1.0, n)
    }
}

pub fn argmax_on_grid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let mut best = (f64::NEG_INFINITY, lo);
    for i in 0..=n {
        let x = lo + (hi - lo) * i as f64 / n as f64;
        let v = f(x);
        if v > best.0 {
            best = (v, x);
        }
    }
    best.1
}

/// Golden-section maximiser of a unimodal function on `[lo, hi]`.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        }
    }
    0.5 * (lo + hi)
}

/// `Ψ^Π` with `γ e^{-γx + h}` dropped: `Π μ - ½ γ Π² σ² s^{2β}`.
pub fn psi_pi(cfg: &ModelConfig, s: f64, state: usize, pi: f64) -> f64 {
    let (mu, sigma, beta) = (cfg.market.mu[state], cfg.market.sigma[state], cfg.market.beta);
    pi * mu - 0.5 * cfg.gamma * pi * pi * sigma * sigma * s.powf(2.0 * beta)
}

/// Grid maximiser of `Ψ^Π` refined by the vertex of the parabola through
/// the best grid point and its neighbours.
pub fn argmax_psi_pi(cfg: &ModelConfig, s: f64, state: usize, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let f = |pi: f64| psi_pi(cfg, s, state, pi);
    let x = argmax_on_grid(f, lo, hi, n);
    let (x0, x1, x2) = (x - h, x, x + h);
    let (f0, f1, f2) = (f(x0), f(x1), f(x2));
    x1 + 0.5 * h * (f0 - f2) / (f0 - 2.0 * f1 + f2)
}

/// A random model that passes the assumption checks: 2 or 3 regimes,
/// intensity-adjusted or variance premia with `δ_R > δ_I > 0`.
pub fn random_config<R: Rng>(rng: &mut R) -> ModelConfig {
    let k: usize = rng.random_range(2..=3);
    let mut q = vec![vec![0.0; k]; k];
    for (i, row) in q.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            if i != j {
                *x = rng.random_range(0.2..3.0);
            }
        }
        row[i] = -row.iter().sum::<f64>();
    }
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let flat: Vec<f64> = q.iter().flatten().copied().collect();
    let mu: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..0.15)).collect();
    let sigma: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..0.4)).collect();
    let delta_i = rng.random_range(0.01..0.1);
    let delta_r = delta_i + rng.random_range(0.01..0.3);
    let principle = if rng.random_bool(0.7) { "intensity-adjusted-variance" } else { "variance" };
    let zmax: f64 = rng.random_range(5.0..20.0);
    let mean = rng.random_range(0.3..1.5f64).min(zmax / 4.0);
    let settings = vec![
        format!("regime.K={k}"),
        format!("regime.Q={}", join(&flat)),
        format!("market.mu={}", join(&mu)),
        format!("market.sigma={}", join(&sigma)),
        format!("market.beta={}", rng.random_range(-0.95..0.0)),
        format!("claims.lambda0={}", rng.random_range(0.2..3.0)),
        format!("claims.k1={}", rng.random_range(0.0..1.0)),
        format!("claims.k2={}", rng.random_range(0.0..1.0)),
        format!("claims.zmax={zmax}"),
        format!("claims.mean={mean}"),
        format!("premia.principle={principle}"),
        format!("premia.deltaI={delta_i}"),
        format!("premia.deltaR={delta_r}"),
        format!("gamma={}", rng.random_range(0.1..1.5)),
    ];
    let cfg = ModelConfig::default().with_overrides(&settings).expect("random config is valid");
    let report = validate_assumptions(&cfg, AssumptionGrid { time_points: 21, theta_points: 21 });
    assert!(report.passed, "random config failed the assumption checks: {:?}", report.violations);
    cfg
}
