//! Model configuration: file format, defaults and assumption checks.
//!
//! The file format is a flat list of `key = value` lines. Keys are dotted,
//! `#` starts a comment and blank lines are ignored. Vectors and the
//! generator matrix are comma-separated (the matrix row-major). Every key is
//! optional; missing keys take the defaults of [`ModelConfig::default`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::claims::{ClaimModel, TiltedMoment};
use crate::premium::{PremiumModel, PremiumSpec};
#[cfg(test)]
use crate::premium::Principle;
use crate::regime::RegimeSpec;
use crate::{Error, Result};

/// Recognised keys, in the order they are written out.
pub const KEYS: &[&str] = &[
    "regime.K",
    "regime.Q",
    "regime.y0",
    "market.mu",
    "market.sigma",
    "market.beta",
    "market.s0",
    "claims.lambda0",
    "claims.k1",
    "claims.k2",
    "claims.zmax",
    "claims.mean",
    "premia.principle",
    "premia.deltaI",
    "premia.deltaR",
    "premia.horizon",
    "gamma",
    "T",
    "t0",
    "x0",
    "seed",
];

/// Per-regime drift and volatility of the CEV stock.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Elasticity, in `(-1, 0]`.
    pub beta: f64,
    /// Initial price.
    pub s0: f64,
}

impl Default for MarketParams {
    fn default() -> Self {
        Self { mu: vec![0.1, 0.05], sigma: vec![0.1, 0.2], beta: -0.5, s0: 1.0 }
    }
}

impl MarketParams {
    pub fn validate(&self, num_states: usize) -> Result<()> {
        if self.mu.len() != num_states {
            return Err(Error::domain(
                "market.mu",
                format!("expected {num_states} values, got {}", self.mu.len()),
            ));
        }
        if self.sigma.len() != num_states {
            return Err(Error::domain(
                "market.sigma",
                format!("expected {num_states} values, got {}", self.sigma.len()),
            ));
        }
        if let Some(m) = self.mu.iter().find(|m| !m.is_finite()) {
            return Err(Error::domain("market.mu", format!("drift {m} is not finite")));
        }
        if let Some(s) = self.sigma.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::domain("market.sigma", format!("volatility must be positive, got {s}")));
        }
        if !(self.beta > -1.0 && self.beta <= 0.0) {
            return Err(Error::domain("market.beta", format!("elasticity must lie in (-1, 0], got {}", self.beta)));
        }
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(Error::domain("market.s0", format!("initial price must be positive, got {}", self.s0)));
        }
        Ok(())
    }
}

/// The full model. Immutable once built; every constructor validates.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub regime: RegimeSpec,
    pub market: MarketParams,
    pub claims: ClaimModel,
    pub premia: PremiumSpec,
    /// Risk aversion `γ > 0`.
    pub gamma: f64,
    /// Horizon `T`.
    pub horizon: f64,
    /// Normalisation time `t0`.
    pub t0: f64,
    /// Initial wealth.
    pub x0: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::from_entries(&ConfigEntries::default()).expect("defaults are valid")
    }
}

/// Raw `key = value` entries before interpretation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigEntries {
    values: BTreeMap<String, String>,
}

impl ConfigEntries {
    /// Parses the text of a config file. `origin` only labels errors.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { path: origin.to_path_buf(), line: idx + 1, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(err(format!("unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(err(format!("missing value for `{key}`")));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(err(format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { values })
    }

    /// Sets or replaces one entry (command-line overrides).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::domain(key, "unknown configuration key"));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Applies a `key=value` override string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::domain(assignment, "override must look like key=value"))?;
        self.set(key.trim(), value)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn scalar(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<f64>()
                .map_err(|_| Error::domain(key, format!("`{v}` is not a number"))),
        }
    }

    fn vector(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::domain(key, format!("`{}` is not a number", x.trim())))
                })
                .collect(),
        }
    }

    fn integer(&self, key: &str, default: u64) -> Result<u64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<u64>()
                .map_err(|_| Error::domain(key, format!("`{v}` is not a non-negative integer"))),
        }
    }
}

impl ModelConfig {
    pub fn from_entries(entries: &ConfigEntries) -> Result<Self> {
        let k = entries.integer("regime.K", 2)? as usize;
        if k == 0 {
            return Err(Error::domain("regime.K", "need at least one state"));
        }
        let q_flat = match entries.get("regime.Q") {
            Some(_) => entries.vector("regime.Q", &[])?,
            None if k == 2 => vec![-2.0, 2.0, 1.0, -1.0],
            None => return Err(Error::domain("regime.Q", format!("required when regime.K = {k}"))),
        };
        if q_flat.len() != k * k {
            return Err(Error::domain(
                "regime.Q",
                format!("expected {} entries for K = {k}, got {}", k * k, q_flat.len()),
            ));
        }
        let y0 = entries.integer("regime.y0", 1)? as usize;
        if y0 == 0 {
            return Err(Error::domain("regime.y0", "states are numbered from 1"));
        }
        let regime = RegimeSpec::new(q_flat.chunks(k).map(<[f64]>::to_vec).collect(), y0 - 1)?;

        let defaults = MarketParams::default();
        let market = MarketParams {
            mu: entries.vector("market.mu", &defaults.mu)?,
            sigma: entries.vector("market.sigma", &defaults.sigma)?,
            beta: entries.scalar("market.beta", defaults.beta)?,
            s0: entries.scalar("market.s0", defaults.s0)?,
        };
        market.validate(k)?;

        let claims = ClaimModel::new(
            entries.scalar("claims.lambda0", 1.0)?,
            entries.scalar("claims.k1", 0.5)?,
            entries.scalar("claims.k2", 1.0)?,
            entries.scalar("claims.zmax", 10.0)?,
            entries.scalar("claims.mean", 1.0)?,
        )?;

        let pdef = PremiumSpec::default();
        let premia = PremiumSpec {
            principle: match entries.get("premia.principle") {
                Some(p) => p.parse()?,
                None => pdef.principle,
            },
            delta_i: entries.scalar("premia.deltaI", pdef.delta_i)?,
            delta_r: entries.scalar("premia.deltaR", pdef.delta_r)?,
            contract_horizon: entries.scalar("premia.horizon", pdef.contract_horizon)?,
        };
        premia.validate()?;

        let cfg = Self {
            regime,
            market,
            claims,
            premia,
            gamma: entries.scalar("gamma", 0.5)?,
            horizon: entries.scalar("T", 1.0)?,
            t0: entries.scalar("t0", 0.0)?,
            x0: entries.scalar("x0", 0.0)?,
            seed: entries.integer("seed", 42)?,
        };
        cfg.check_scalars()?;
        Ok(cfg)
    }

    fn check_scalars(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::domain("gamma", format!("risk aversion must be positive, got {}", self.gamma)));
        }
        if !(self.t0 >= 0.0 && self.t0.is_finite()) {
            return Err(Error::domain("t0", format!("must be non-negative, got {}", self.t0)));
        }
        if !(self.horizon > self.t0 && self.horizon.is_finite()) {
            return Err(Error::domain("T", format!("horizon {} must exceed t0 = {}", self.horizon, self.t0)));
        }
        if !self.x0.is_finite() {
            return Err(Error::domain("x0", "initial wealth must be finite"));
        }
        Ok(())
    }

    /// Entries reproducing this config exactly.
    pub fn to_entries(&self) -> ConfigEntries {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let q: Vec<f64> = self.regime.rows().into_iter().flatten().collect();
        let pairs = [
            ("regime.K", self.regime.num_states().to_string()),
            ("regime.Q", join(&q)),
            ("regime.y0", (self.regime.initial_state() + 1).to_string()),
            ("market.mu", join(&self.market.mu)),
            ("market.sigma", join(&self.market.sigma)),
            ("market.beta", self.market.beta.to_string()),
            ("market.s0", self.market.s0.to_string()),
            ("claims.lambda0", self.claims.lambda0().to_string()),
            ("claims.k1", self.claims.k1().to_string()),
            ("claims.k2", self.claims.k2().to_string()),
            ("claims.zmax", self.claims.zmax().to_string()),
            ("claims.mean", self.claims.target_mean().to_string()),
            ("premia.principle", self.premia.principle.name().to_string()),
            ("premia.deltaI", self.premia.delta_i.to_string()),
            ("premia.deltaR", self.premia.delta_r.to_string()),
            ("premia.horizon", self.premia.contract_horizon.to_string()),
            ("gamma", self.gamma.to_string()),
            ("T", self.horizon.to_string()),
            ("t0", self.t0.to_string()),
            ("x0", self.x0.to_string()),
            ("seed", self.seed.to_string()),
        ];
        ConfigEntries { values: pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect() }
    }

    /// Serialises to the config file format.
    pub fn to_config_string(&self) -> String {
        let entries = self.to_entries();
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", entries.get(key).unwrap_or_default());
        }
        out
    }

    /// Returns a copy with `key=value` overrides applied and revalidated.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut entries = self.to_entries();
        for o in overrides {
            entries.apply_override(o.as_ref())?;
        }
        Self::from_entries(&entries)
    }

    pub fn num_states(&self) -> usize {
        self.regime.num_states()
    }

    /// Elasticity shortcut.
    pub fn beta(&self) -> f64 {
        self.market.beta
    }
}

/// Reads and validates a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ModelConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    ModelConfig::from_entries(&ConfigEntries::parse(&text, path)?)
}

/// Reads a config file and applies `key=value` overrides before validation.
pub fn load_config_with_overrides<S: AsRef<str>>(path: Option<&Path>, overrides: &[S]) -> Result<ModelConfig> {
    let mut entries = match path {
        Some(p) => ConfigEntries::parse(&fs::read_to_string(p)?, p)?,
        None => ConfigEntries::default(),
    };
    for o in overrides {
        entries.apply_override(o.as_ref())?;
    }
    ModelConfig::from_entries(&entries)
}

pub fn save_config(cfg: &ModelConfig, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, cfg.to_config_string())?;
    Ok(())
}

/// Sampling resolution for [`validate_assumptions`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssumptionGrid {
    pub time_points: usize,
    pub theta_points: usize,
}

impl Default for AssumptionGrid {
    fn default() -> Self {
        Self { time_points: 101, theta_points: 101 }
    }
}

/// Which standing premium assumption a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rule {
    /// `b(t, e, 0) = 0`.
    NullCoverIsFree,
    /// `∂b/∂θ >= 0`.
    PremiumNondecreasing,
    /// `b(t, e, 1) > a(t, e)`.
    NoRisklessProfit,
    /// `-∂²b/∂θ² < γ λ ∫ e^{γ(1-θ)z} z² F(dz)`.
    StrictConcavity,
}

impl Rule {
    pub fn id(self) -> &'static str {
        match self {
            Rule::NullCoverIsFree => "null-cover-free",
            Rule::PremiumNondecreasing => "premium-nondecreasing",
            Rule::NoRisklessProfit => "no-riskless-profit",
            Rule::StrictConcavity => "strict-concavity",
        }
    }
}

/// Grid point where a rule failed. `state` is 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Witness {
    pub t: f64,
    pub state: usize,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub rule: Rule,
    pub message: String,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn violated(&self, rule: Rule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}

/// Checks the premium assumptions for the configured premium rule.
pub fn validate_assumptions(cfg: &ModelConfig, grid: AssumptionGrid) -> ValidationReport {
    let mut report = validate_premium(cfg, &cfg.premia, grid);
    report.warnings.extend(cfg.premia.warnings());
    report
}

/// Checks the premium assumptions for an arbitrary premium rule on a
/// `(t, e_j, θ)` grid over `[t0, T] × E × [0, 1]`, recording the first
/// witness of each failed rule.
pub fn validate_premium(cfg: &ModelConfig, premium: &dyn PremiumModel, grid: AssumptionGrid) -> ValidationReport {
    let nt = grid.time_points.max(2);
    let nth = grid.theta_points.max(2);
    let claims = &cfg.claims;
    let mut found: BTreeMap<Rule, Violation> = BTreeMap::new();
    let mut record = |rule: Rule, message: String, witness: Witness| {
        found.entry(rule).or_insert(Violation { rule, message, witness: Some(witness) });
    };
    for it in 0..nt {
        let t = cfg.t0 + (cfg.horizon - cfg.t0) * it as f64 / (nt - 1) as f64;
        for state in 0..cfg.num_states() {
            let lambda = claims.intensity(t, state);
            let b0 = premium.reins_premium(claims, t, state, 0.0);
            if b0 != 0.0 {
                record(
                    Rule::NullCoverIsFree,
                    format!("b(t, e, 0) = {b0}, expected 0"),
                    Witness { t, state, theta: 0.0 },
                );
            }
            let a = premium.gross_premium(claims, t, state);
            let b1 = premium.reins_premium(claims, t, state, 1.0);
            if b1 <= a {
                record(
                    Rule::NoRisklessProfit,
                    format!("b(t, e, 1) = {b1} does not exceed a(t, e) = {a}"),
                    Witness { t, state, theta: 1.0 },
                );
            }
            for ith in 0..nth {
                let theta = ith as f64 / (nth - 1) as f64;
                let (db, d2b) = premium.reins_premium_db(claims, t, state, theta);
                if db < 0.0 {
                    record(
                        Rule::PremiumNondecreasing,
                        format!("∂b/∂θ = {db} is negative"),
                        Witness { t, state, theta },
                    );
                }
                let tilt = cfg.gamma * (1.0 - theta);
                let rhs = match claims.claim_moment(TiltedMoment::Second, tilt) {
                    Ok(m2) => cfg.gamma * lambda * m2,
                    Err(_) => f64::INFINITY,
                };
                if -d2b >= rhs {
                    record(
                        Rule::StrictConcavity,
                        format!("-∂²b/∂θ² = {} is not below γλ∫e^{{γ(1-θ)z}}z²F(dz) = {rhs}", -d2b),
                        Witness { t, state, theta },
                    );
                }
            }
        }
    }
    let violations: Vec<Violation> = found.into_values().collect();
    ValidationReport { passed: violations.is_empty(), violations, warnings: Vec::new() }
}
