//! Experiment harness behind the `fwdreins` binary: one function per figure
//! or verification suite, each writing CSV files and checking its own
//! qualitative claims.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use forward_reins::backward::{
    backward_investment, forward_investment, investment_gap, solve_j2, value_gap_delta,
};
use forward_reins::config::ModelConfig;
use forward_reins::forward::{optimal_investment, ForwardModel};
use forward_reins::simulate::{
    density_check, simulate_path, standard_suite, MonteCarloOptions, OptimalStrategy, Perturbation, Verdict,
};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Fig1Trajectory,
    Fig2BetaSweep,
    Fig3GammaSweep,
    Fig4FbGap,
    Fig5ValueGap,
    MartingaleSuite,
    DensitySuite,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Fig1Trajectory,
        Experiment::Fig2BetaSweep,
        Experiment::Fig3GammaSweep,
        Experiment::Fig4FbGap,
        Experiment::Fig5ValueGap,
        Experiment::MartingaleSuite,
        Experiment::DensitySuite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Fig1Trajectory => "fig1-trajectory",
            Experiment::Fig2BetaSweep => "fig2-beta-sweep",
            Experiment::Fig3GammaSweep => "fig3-gamma-sweep",
            Experiment::Fig4FbGap => "fig4-fb-gap",
            Experiment::Fig5ValueGap => "fig5-value-gap",
            Experiment::MartingaleSuite => "martingale-suite",
            Experiment::DensitySuite => "density-suite",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .with_context(|| {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
                format!("unknown experiment `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Knobs shared by every experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSettings {
    pub seed: u64,
    pub paths: usize,
    pub dt: f64,
    /// Evaluation date for the sensitivity sweeps.
    pub t_star: f64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self { seed: 42, paths: 100_000, dt: 1e-3, t_star: 0.5 }
    }
}

/// One experiment to run: a name, sparse `key=value` overrides on top of
/// the base config, and the directory receiving its files.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: Experiment,
    pub overrides: Vec<String>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentOutcome {
    pub name: Experiment,
    /// Paths relative to the output root.
    pub files: Vec<String>,
    pub assertions: Vec<Assertion>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub settings: RunSettings,
    pub config: Vec<(String, String)>,
    pub experiments: Vec<ExperimentOutcome>,
    pub passed: bool,
}

struct Recorder {
    root: PathBuf,
    subdir: String,
    files: Vec<String>,
    assertions: Vec<Assertion>,
}

impl Recorder {
    fn new(root: &Path, name: Experiment) -> Result<Self> {
        let dir = root.join(name.name());
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { root: root.to_path_buf(), subdir: name.name().to_string(), files: Vec::new(), assertions: Vec::new() })
    }

    fn write(&mut self, file: &str, contents: &str) -> Result<()> {
        let rel = format!("{}/{file}", self.subdir);
        let path = self.root.join(&rel);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(rel);
        Ok(())
    }

    fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.assertions.push(Assertion { name: name.to_string(), passed, detail: detail.into() });
    }

    fn finish(self, name: Experiment) -> ExperimentOutcome {
        let passed = self.assertions.iter().all(|a| a.passed);
        ExperimentOutcome { name, files: self.files, assertions: self.assertions, passed }
    }
}

fn increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    // endpoints exact, so a sweep ending at β = 0 stays in range
    (0..n)
        .map(|k| if k + 1 == n { hi } else { lo + (hi - lo) * k as f64 / (n - 1) as f64 })
        .collect()
}

/// Runs one experiment against `base` with the overrides in `spec` applied.
pub fn run_experiment(spec: &ExperimentSpec, base: &ModelConfig, settings: &RunSettings) -> Result<ExperimentOutcome> {
    let cfg = base
        .with_overrides(&spec.overrides)
        .with_context(|| format!("applying overrides for {}", spec.name))?;
    let mut rec = Recorder::new(&spec.output_dir, spec.name)?;
    match spec.name {
        Experiment::Fig1Trajectory => fig1(&cfg, settings, &mut rec)?,
        Experiment::Fig2BetaSweep => fig2(&cfg, settings, &mut rec)?,
        Experiment::Fig3GammaSweep => fig3(&cfg, settings, &mut rec)?,
        Experiment::Fig4FbGap => fig4(&cfg, &mut rec)?,
        Experiment::Fig5ValueGap => fig5(&cfg, &mut rec)?,
        Experiment::MartingaleSuite => martingale(&cfg, settings, &mut rec)?,
        Experiment::DensitySuite => density(&cfg, settings, &mut rec)?,
    }
    Ok(rec.finish(spec.name))
}

fn fig1(cfg: &ModelConfig, settings: &RunSettings, rec: &mut Recorder) -> Result<()> {
    let model = Arc::new(ForwardModel::with_grid(cfg, settings.dt)?);
    let strategy = OptimalStrategy::new(Arc::clone(&model));
    let path = simulate_path(&model, &strategy, settings.dt, settings.seed)?;
    rec.write("trajectory.csv", &path.to_csv(cfg))?;
    rec.write("regime.csv", &path.draw.regime.to_csv())?;
    rec.write("claims.csv", &path.draw.claims.to_csv())?;

    let w = &path.wealth;
    let inside = w.retention.iter().all(|&th| th > 0.0 && th < 1.0);
    rec.check("retention-interior", inside, "0 < theta_t < 1 along the path");
    // within a regime, θ̄ only drifts down with time
    let mut monotone = true;
    for k in 1..w.times.len() {
        let t = w.times[k];
        let same = path.draw.regime.state_at(w.times[k - 1])? == path.draw.regime.state_at(t)?;
        if same && w.retention[k] > w.retention[k - 1] {
            monotone = false;
        }
    }
    rec.check("retention-decreasing-between-switches", monotone, "theta_t nonincreasing while the regime is fixed");
    Ok(())
}

fn sweep_csv(header: &str, rows: &[(f64, f64, usize, f64)]) -> String {
    let mut out = format!("{header},s,state,pi\n");
    for (x, s, state, pi) in rows {
        let _ = writeln!(out, "{x},{s},{},{pi}", state + 1);
    }
    out
}

fn sweep(
    cfg: &ModelConfig,
    settings: &RunSettings,
    key: &str,
    grid: &[f64],
    rec: &mut Recorder,
    file: &str,
) -> Result<Vec<(f64, f64, usize, f64)>> {
    let mut rows = Vec::new();
    for &s in &[0.5, 1.5] {
        for state in 0..cfg.num_states() {
            for &x in grid {
                let c = cfg.with_overrides(&[format!("{key}={x}")])?;
                rows.push((x, s, state, optimal_investment(&c, settings.t_star, s, state)));
            }
        }
    }
    rec.write(file, &sweep_csv(key, &rows))?;
    Ok(rows)
}

fn curve(rows: &[(f64, f64, usize, f64)], s: f64, state: usize) -> Vec<f64> {
    rows.iter().filter(|r| r.1 == s && r.2 == state).map(|r| r.3).collect()
}

fn regime_ordering(rec: &mut Recorder, rows: &[(f64, f64, usize, f64)]) {
    let ordered = [0.5, 1.5]
        .iter()
        .all(|&s| curve(rows, s, 1).iter().zip(curve(rows, s, 0)).all(|(bad, good)| *bad < good));
    rec.check("bad-regime-less-aggressive", ordered, "Pi*(e_2) < Pi*(e_1) at every grid point");
}

fn fig2(cfg: &ModelConfig, settings: &RunSettings, rec: &mut Recorder) -> Result<()> {
    let betas = linspace(-0.95, 0.0, 20);
    let rows = sweep(cfg, settings, "market.beta", &betas, rec, "pi_vs_beta.csv")?;
    let k = cfg.num_states();
    let low = (0..k).all(|j| increasing(&curve(&rows, 0.5, j)));
    rec.check("increasing-in-beta-below-one", low, "s = 0.5: Pi* increasing in beta in every regime");
    let high = (0..k).all(|j| decreasing(&curve(&rows, 1.5, j)));
    rec.check("decreasing-in-beta-above-one", high, "s = 1.5: Pi* decreasing in beta in every regime");
    regime_ordering(rec, &rows);
    Ok(())
}

fn fig3(cfg: &ModelConfig, settings: &RunSettings, rec: &mut Recorder) -> Result<()> {
    let gammas = linspace(0.1, 2.0, 20);
    let rows = sweep(cfg, settings, "gamma", &gammas, rec, "pi_vs_gamma.csv")?;
    let k = cfg.num_states();
    let dec = [0.5, 1.5].iter().all(|&s| (0..k).all(|j| decreasing(&curve(&rows, s, j))));
    rec.check("decreasing-in-gamma", dec, "Pi* decreasing in gamma for both prices and regimes");
    regime_ordering(rec, &rows);
    Ok(())
}

fn fig4(cfg: &ModelConfig, rec: &mut Recorder) -> Result<()> {
    let sol = solve_j2(cfg)?;
    let s = cfg.market.s0;
    let mut out = String::from("t,pi_forward,pi_backward,gap\n");
    let mut gaps = Vec::new();
    for (k, &t) in sol.times.iter().enumerate() {
        let gap = investment_gap(&sol, t, s);
        gaps.push(gap);
        if k % 10 == 0 || k + 1 == sol.times.len() {
            let _ = writeln!(out, "{t},{},{},{gap}", forward_investment(&sol, s), backward_investment(&sol, t, s));
        }
    }
    rec.write("gap_vs_t.csv", &out)?;
    rec.check("gap-nonnegative", gaps.iter().all(|&g| g >= 0.0), "Pi* - Pi^B >= 0 on the grid");
    rec.check(
        "gap-decreasing-in-time",
        gaps.windows(2).all(|w| w[1] <= w[0]),
        "Pi* - Pi^B nonincreasing in t",
    );
    let last = *gaps.last().expect("non-empty grid");
    rec.check("gap-vanishes-at-horizon", last == 0.0, format!("gap at T = {last}"));
    rec.check(
        "gap-at-origin",
        true,
        format!("t = {}, s = {s}: gap {}, forward {}", sol.t0, gaps[0], forward_investment(&sol, s)),
    );

    let mut by_beta = String::from("beta,gap\n");
    let mut beta_gaps = Vec::new();
    for beta in linspace(-0.95, 0.0, 20) {
        let sol = solve_j2(&cfg.with_overrides(&[format!("market.beta={beta}")])?)?;
        let g = investment_gap(&sol, sol.t0, s);
        beta_gaps.push(g);
        let _ = writeln!(by_beta, "{beta},{g}");
    }
    rec.write("gap_vs_beta.csv", &by_beta)?;
    rec.check(
        "gap-closes-at-constant-elasticity",
        *beta_gaps.last().expect("non-empty") == 0.0 && beta_gaps.iter().all(|&g| g >= 0.0),
        "gap >= 0 for beta < 0 and 0 at beta = 0",
    );

    let mut by_gamma = String::from("gamma,gap\n");
    let mut gamma_gaps = Vec::new();
    for gamma in linspace(0.1, 2.0, 20) {
        let sol = solve_j2(&cfg.with_overrides(&[format!("gamma={gamma}")])?)?;
        let g = investment_gap(&sol, sol.t0, s);
        gamma_gaps.push(g);
        let _ = writeln!(by_gamma, "{gamma},{g}");
    }
    rec.write("gap_vs_gamma.csv", &by_gamma)?;
    rec.check(
        "gap-positive-across-gamma",
        gamma_gaps.iter().all(|&g| g >= 0.0),
        "gap >= 0 for every risk aversion",
    );
    Ok(())
}

fn fig5(cfg: &ModelConfig, rec: &mut Recorder) -> Result<()> {
    let sol = solve_j2(cfg)?;
    let grid = linspace(0.2, 3.2, 50);
    let k = sol.num_states();
    let mut out = String::from("s");
    for j in 1..=k {
        let _ = write!(out, ",delta_{j}");
    }
    out.push('\n');
    let mut curves = vec![Vec::new(); k];
    for &s in &grid {
        let _ = write!(out, "{s}");
        for (j, c) in curves.iter_mut().enumerate() {
            let d = value_gap_delta(&sol, s, j);
            c.push(d);
            let _ = write!(out, ",{d}");
        }
        out.push('\n');
    }
    rec.write("delta_vs_s.csv", &out)?;
    rec.write("backward_solution.csv", &sol.to_csv())?;
    rec.check(
        "delta-decreasing-in-price",
        curves.iter().all(|c| decreasing(c)),
        "Delta(s, e_i) decreasing in s in every regime",
    );
    Ok(())
}

fn martingale(cfg: &ModelConfig, settings: &RunSettings, rec: &mut Recorder) -> Result<()> {
    let model = Arc::new(ForwardModel::with_grid(cfg, settings.dt)?);
    let opts = MonteCarloOptions::new(settings.paths, settings.dt, settings.seed);
    let suite = standard_suite(&model, opts)?;
    rec.write("reports.csv", &suite.to_csv())?;
    rec.write("paired.csv", &suite.paired_csv())?;

    let optimal = &suite.reports[0];
    rec.check("optimal-is-martingale", optimal.verdict == Verdict::MartingaleConsistent, optimal.record());
    for r in &suite.reports[1..] {
        rec.check(&format!("{}-no-violation", r.label), r.verdict != Verdict::Violation, r.record());
    }
    for (p, kind) in suite.paired.iter().zip(forward_reins::simulate::canned_perturbations(&model)) {
        if matches!(kind.kind(), Perturbation::ScaledInvestment(_)) {
            rec.check(&format!("{}-strictly-lower", p.label), p.strictly_lower(), p.record());
        }
    }
    let saturated = suite.reports.iter().all(|r| r.saturation_ok());
    rec.check("saturation-below-limit", saturated, "saturated paths < 0.1% for every strategy");
    Ok(())
}

fn density(cfg: &ModelConfig, settings: &RunSettings, rec: &mut Recorder) -> Result<()> {
    let opts = MonteCarloOptions::new(settings.paths, settings.dt, settings.seed);
    let report = density_check(cfg, opts)?;
    rec.write("density.csv", &format!("{}\n{}\n", forward_reins::simulate::DensityReport::RECORD_HEADER, report.record()))?;
    rec.check("unit-mean", report.within(3.0), report.record());
    Ok(())
}

/// Runs `experiments` (all seven when empty) into `output_dir` and writes
/// `manifest.json` there.
pub fn reproduce_all(
    cfg: &ModelConfig,
    output_dir: &Path,
    settings: &RunSettings,
    experiments: &[Experiment],
) -> Result<Manifest> {
    fs::create_dir_all(output_dir).with_context(|| format!("creating {}", output_dir.display()))?;
    let chosen: Vec<Experiment> = if experiments.is_empty() { Experiment::ALL.to_vec() } else { experiments.to_vec() };
    let mut outcomes = Vec::new();
    for name in chosen {
        let spec = ExperimentSpec { name, overrides: Vec::new(), output_dir: output_dir.to_path_buf() };
        outcomes.push(run_experiment(&spec, cfg, settings)?);
    }
    let entries = cfg.to_entries();
    let config = forward_reins::config::KEYS
        .iter()
        .filter_map(|k| entries.get(k).map(|v| (k.to_string(), v.to_string())))
        .collect();
    let manifest = Manifest {
        settings: *settings,
        config,
        passed: outcomes.iter().all(|o| o.passed),
        experiments: outcomes,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(output_dir.join("manifest.json"), json + "\n")?;
    Ok(manifest)
}

/// Fails with a list of the assertions that did not hold.
pub fn ensure_passed(manifest: &Manifest) -> Result<()> {
    let failed: Vec<String> = manifest
        .experiments
        .iter()
        .flat_map(|e| e.assertions.iter().filter(|a| !a.passed).map(move |a| format!("{}: {} ({})", e.name, a.name, a.detail)))
        .collect();
    if !failed.is_empty() {
        bail!("{} assertion(s) failed:\n  {}", failed.len(), failed.join("\n  "));
    }
    Ok(())
}
