use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use forward_reins::config::{load_config_with_overrides, validate_assumptions, AssumptionGrid, ModelConfig};
use forward_reins::forward::{optimal_investment, ForwardModel};
use forward_reins::retention::retention_curve;
use forward_reins::simulate::{
    density_check, martingale_check, simulate_path, standard_suite, MonteCarloOptions, OptimalStrategy, Verdict,
};
use forward_reins_cli::{ensure_passed, reproduce_all, Experiment, RunSettings};

#[derive(Parser)]
#[command(name = "fwdreins", version, about = "Forward-utility investment and reinsurance experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file of `key = value` lines; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a single key, e.g. `--set gamma=0.8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// RNG seed; falls back to the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Evaluation date for the sensitivity sweeps.
    #[arg(long = "t-star", default_value_t = 0.5)]
    t_star: f64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn load(&self) -> Result<(ModelConfig, RunSettings)> {
        let cfg = load_config_with_overrides(self.config.as_deref(), &self.overrides)
            .context("loading configuration")?;
        if self.paths == 0 {
            bail!("--paths must be positive");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            bail!("--dt must be positive");
        }
        let settings = RunSettings { seed: self.seed.unwrap_or(cfg.seed), paths: self.paths, dt: self.dt, t_star: self.t_star };
        Ok((cfg, settings))
    }

    fn out_dir(&self) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(self.out.clone())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check the premium assumptions on a grid and report violations.
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 101)]
        time_points: usize,
        #[arg(long, default_value_t = 101)]
        theta_points: usize,
    },
    /// Print (and save) the optimal retention curves and an investment table.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Simulate one path under the optimal strategy.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo martingale test of the forward utility process.
    CheckMartingale {
        #[command(flatten)]
        common: Common,
        /// Test only the optimal strategy instead of the full suite.
        #[arg(long)]
        optimal_only: bool,
    },
    /// Monte Carlo check that the density process has unit mean.
    CheckDensity {
        #[command(flatten)]
        common: Common,
    },
    /// Run experiments and write their CSVs plus `manifest.json`.
    Reproduce {
        #[command(flatten)]
        common: Common,
        /// Restrict to these experiments. Repeatable; all when omitted.
        #[arg(long = "experiment")]
        experiments: Vec<String>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Validate { common, time_points, theta_points } => validate(&common, time_points, theta_points),
        Command::Solve { common } => solve(&common),
        Command::Simulate { common } => simulate(&common),
        Command::CheckMartingale { common, optimal_only } => check_martingale(&common, optimal_only),
        Command::CheckDensity { common } => check_density(&common),
        Command::Reproduce { common, experiments } => reproduce(&common, &experiments),
    }
}

fn validate(common: &Common, time_points: usize, theta_points: usize) -> Result<()> {
    let (cfg, _) = common.load()?;
    let report = validate_assumptions(&cfg, AssumptionGrid { time_points, theta_points });
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for v in &report.violations {
        match v.witness {
            Some(w) => println!("{}: {} (t = {}, state {}, theta = {})", v.rule.id(), v.message, w.t, w.state + 1, w.theta),
            None => println!("{}: {}", v.rule.id(), v.message),
        }
    }
    if !report.passed {
        bail!("{} assumption violation(s)", report.violations.len());
    }
    println!("ok: all premium assumptions hold on a {time_points}x{theta_points} grid");
    Ok(())
}

fn solve(common: &Common) -> Result<()> {
    let (cfg, settings) = common.load()?;
    let out = common.out_dir()?;
    let steps = ((cfg.horizon - cfg.t0) / settings.dt).round() as usize;
    let times: Vec<f64> = (0..=steps).map(|k| (cfg.t0 + k as f64 * settings.dt).min(cfg.horizon)).collect();
    for state in 0..cfg.num_states() {
        let curve = retention_curve(&cfg, state, &times)?;
        let csv = curve.to_csv();
        let path = out.join(format!("retention_state{}.csv", state + 1));
        fs::write(&path, &csv).with_context(|| format!("writing {}", path.display()))?;
        print!("{csv}");
    }
    let mut table = String::from("s,state,pi\n");
    for k in 0..=60 {
        let s = 0.1 + 0.05 * k as f64;
        for state in 0..cfg.num_states() {
            let _ = writeln!(table, "{s},{},{}", state + 1, optimal_investment(&cfg, settings.t_star, s, state));
        }
    }
    let path = out.join("investment.csv");
    fs::write(&path, &table).with_context(|| format!("writing {}", path.display()))?;
    print!("{table}");
    Ok(())
}

fn simulate(common: &Common) -> Result<()> {
    let (cfg, settings) = common.load()?;
    let out = common.out_dir()?;
    let model = Arc::new(ForwardModel::with_grid(&cfg, settings.dt)?);
    let strategy = OptimalStrategy::new(Arc::clone(&model));
    let path = simulate_path(&model, &strategy, settings.dt, settings.seed)?;
    let file = out.join("path.csv");
    fs::write(&file, path.to_csv(&cfg)).with_context(|| format!("writing {}", file.display()))?;
    println!("wrote {}", file.display());
    println!("terminal wealth {}", path.wealth.terminal());
    Ok(())
}

fn check_martingale(common: &Common, optimal_only: bool) -> Result<()> {
    let (cfg, settings) = common.load()?;
    let model = Arc::new(ForwardModel::with_grid(&cfg, settings.dt)?);
    let opts = MonteCarloOptions::new(settings.paths, settings.dt, settings.seed);
    if optimal_only {
        let report = martingale_check(&model, &OptimalStrategy::new(Arc::clone(&model)), opts)?;
        println!("{}", forward_reins::simulate::MartingaleReport::RECORD_HEADER);
        println!("{}", report.record());
        if report.verdict != Verdict::MartingaleConsistent || !report.saturation_ok() {
            bail!("optimal strategy failed the martingale check");
        }
        return Ok(());
    }
    let suite = standard_suite(&model, opts)?;
    print!("{}", suite.to_csv());
    print!("{}", suite.paired_csv());
    let optimal = &suite.reports[0];
    let violations = suite.reports.iter().filter(|r| r.verdict == Verdict::Violation).count();
    if optimal.verdict != Verdict::MartingaleConsistent || violations > 0 || !suite.reports.iter().all(|r| r.saturation_ok()) {
        bail!("martingale suite failed");
    }
    Ok(())
}

fn check_density(common: &Common) -> Result<()> {
    let (cfg, settings) = common.load()?;
    let report = density_check(&cfg, MonteCarloOptions::new(settings.paths, settings.dt, settings.seed))?;
    println!("{}", forward_reins::simulate::DensityReport::RECORD_HEADER);
    println!("{}", report.record());
    if !report.within(3.0) {
        bail!("density mean differs from 1 by more than 3 standard errors");
    }
    Ok(())
}

fn reproduce(common: &Common, names: &[String]) -> Result<()> {
    let (cfg, settings) = common.load()?;
    let experiments = names.iter().map(|n| n.parse()).collect::<Result<Vec<Experiment>>>()?;
    let out = common.out_dir()?;
    let manifest = reproduce_all(&cfg, &out, &settings, &experiments)?;
    for e in &manifest.experiments {
        let ok = e.assertions.iter().filter(|a| a.passed).count();
        println!("{:<18} {} ({ok}/{} assertions)", e.name.name(), if e.passed { "pass" } else { "FAIL" }, e.assertions.len());
    }
    println!("manifest: {}", out.join("manifest.json").display());
    ensure_passed(&manifest)
}
