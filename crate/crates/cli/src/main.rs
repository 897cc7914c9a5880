use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ringphs_cli::runner::{
    self, observable_series, write_acfs, write_analytic, write_distribution, write_series, write_trajectories,
};
use ringphs_cli::{CheckName, RunOptions, Scenario, ValidationReport};

#[derive(Parser)]
#[command(name = "ringphs", version, about = "Stochastic port-Hamiltonian agents on a ring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Built-in scenario (s1, s2, s3) or path to a TOML file.
    #[arg(long, conflicts_with = "config")]
    scenario: Option<String>,
    /// Scenario TOML file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Write every `thin`-th step of the trajectory.
    #[arg(long)]
    thin: Option<u64>,
    #[arg(long)]
    replicas: Option<u32>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn scenario(&self, positional: Option<&str>) -> Result<Scenario> {
        let mut s = match (positional, &self.scenario, &self.config) {
            (_, _, Some(path)) => Scenario::load(path)?,
            (Some(name), _, _) => Scenario::resolve(name)?,
            (None, Some(name), _) => Scenario::resolve(name)?,
            (None, None, None) => anyhow::bail!("pass a scenario name or --config <file>"),
        };
        if let Some(seed) = self.seed {
            s.sim.seed = seed;
        }
        if let Some(steps) = self.steps {
            s.sim.n_steps = steps;
        }
        if let Some(dt) = self.dt {
            s.sim.dt = dt;
        }
        if let Some(thin) = self.thin {
            s.sim.thinning = thin;
        }
        if let Some(r) = self.replicas {
            s.sim.replicas = r;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the SDE and write trajectory CSVs (and observable series).
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form limit law, K entries and moments at `--time`.
    Analytic {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        time: Option<f64>,
    },
    /// Run validation checks and write `validation_report.json`.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Restrict to the named checks (repeatable).
        #[arg(long = "check")]
        checks: Vec<String>,
        #[arg(long)]
        analytic_only: bool,
    },
    /// Autocorrelation of the ensemble variances after burn-in.
    Acf {
        #[command(flatten)]
        common: Common,
        /// Largest lag in time units.
        #[arg(long, default_value_t = 30.0)]
        max_lag: f64,
    },
    /// Stationary V_p samples vs the Monte-Carlo reference law.
    Dist {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
    },
    ListScenarios,
    /// Emit every artifact a scenario requests, plus the validation report.
    Run {
        /// Built-in scenario name or TOML path.
        name: Option<String>,
        #[command(flatten)]
        common: Common,
        #[arg(long = "check")]
        checks: Vec<String>,
        #[arg(long)]
        analytic_only: bool,
    },
}

fn parse_checks(names: &[String]) -> Result<Vec<CheckName>> {
    names.iter().map(|n| n.parse()).collect()
}

fn finish(report: &ValidationReport) -> ExitCode {
    for c in &report.checks {
        println!(
            "{} {}: {:.4e} (tol {:.4e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn execute(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::ListScenarios => {
            for name in ringphs_cli::scenario::BUILTIN_NAMES {
                let s = Scenario::builtin(name).expect("built-in");
                let m = &s.model;
                println!(
                    "{name}: N={} L={} alpha={} beta={} sigma={} kappa={} dt={}",
                    m.n_agents, m.ring_length, m.alpha, m.beta, m.sigma, m.kappa, s.sim.dt
                );
            }
        }
        Command::Simulate { common } => {
            let s = common.scenario(None)?;
            let files = write_trajectories(&s, &common.out, s.sim.replicas)?;
            write_series(&observable_series(&s, 0)?, &common.out, s.sim.seed)?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Analytic { common, time } => {
            let s = common.scenario(None)?;
            let summary = write_analytic(&s, &common.out, time)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Validate {
            common,
            checks,
            analytic_only,
        } => {
            let s = common.scenario(None)?;
            let options = RunOptions {
                checks: parse_checks(&checks)?,
                analytic_only,
                ..RunOptions::default()
            };
            let report = runner::run_checks(&s, &options)?;
            runner::write_report(&report, &common.out)?;
            return Ok(finish(&report));
        }
        Command::Acf { common, max_lag } => {
            let s = common.scenario(None)?;
            write_acfs(&s, &observable_series(&s, 0)?, &common.out, max_lag)?;
        }
        Command::Dist { common, samples } => {
            let s = common.scenario(None)?;
            let options = RunOptions {
                dist_samples: samples,
                dist_replicas: common.replicas.unwrap_or(RunOptions::default().dist_replicas),
                ..RunOptions::default()
            };
            let summary = write_distribution(&s, &common.out, &options)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Run {
            name,
            common,
            checks,
            analytic_only,
        } => {
            let s = common.scenario(name.as_deref())?;
            let options = RunOptions {
                checks: parse_checks(&checks)?,
                analytic_only,
                ..RunOptions::default()
            };
            if analytic_only && s.params()?.is_quadratic() {
                let summary = write_analytic(&s, &common.out, None)?;
                println!("{}", serde_json::to_string_pretty(&summary)?);
            }
            let report = runner::run(&s, &common.out, &options)?;
            return Ok(finish(&report));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match execute(Cli::parse()).context("ringphs") {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
