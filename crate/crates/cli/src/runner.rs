//! Checks, ensemble runs and artifact export.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use ringphs::analytic::{
    covariance_quadrature, expected_stationary_variances, k_closed_form, k_spectral, limit_distribution,
    lyapunov_residual, moments_x, stationary_velocity_covariance,
};
use ringphs::model::{ModelParams, State};
use ringphs::sde::{simulate_observed, SimConfig, Simulation};
use ringphs::spectral::{analyze, laplacian_eigenvalue};
use ringphs::stats::{
    acf, ks_critical_value, ks_two_sample, mc_chi_squared, save_with, write_acf_csv, write_samples_csv,
    ensemble_variances, Histogram, RunningStats, SeriesLabel, StatSeries,
};
use serde::{Deserialize, Serialize};

use crate::scenario::{Artifact, Scenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `value <= tolerance`.
    pub fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub scenario: String,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckName {
    Spectral,
    KMatrix,
    Lyapunov,
    Quadrature,
    StationaryVariance,
    Ks,
    MeanVelocity,
}

impl CheckName {
    pub const ALL: [CheckName; 7] = [
        Self::Spectral,
        Self::KMatrix,
        Self::Lyapunov,
        Self::Quadrature,
        Self::StationaryVariance,
        Self::Ks,
        Self::MeanVelocity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Spectral => "spectral",
            Self::KMatrix => "k-matrix",
            Self::Lyapunov => "lyapunov",
            Self::Quadrature => "quadrature",
            Self::StationaryVariance => "stationary-variance",
            Self::Ks => "ks",
            Self::MeanVelocity => "mean-velocity",
        }
    }

    pub fn is_analytic(self) -> bool {
        matches!(self, Self::Spectral | Self::KMatrix | Self::Lyapunov | Self::Quadrature)
    }

    /// Checks that rely on the linear (quadratic-potential) theory.
    fn needs_quadratic(self) -> bool {
        !matches!(self, Self::KMatrix | Self::MeanVelocity)
    }
}

impl FromStr for CheckName {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .with_context(|| {
                let names: Vec<_> = Self::ALL.iter().map(|c| c.as_str()).collect();
                format!("unknown check {s:?} (expected one of {})", names.join(", "))
            })
    }
}

/// Desk-scale knobs for the statistical checks.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub checks: Vec<CheckName>,
    pub analytic_only: bool,
    pub dist_samples: usize,
    pub dist_replicas: u32,
    pub mc_samples: usize,
    pub mean_velocity_replicas: u32,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            checks: Vec::new(),
            analytic_only: false,
            dist_samples: 2000,
            dist_replicas: 20,
            mc_samples: 100_000,
            mean_velocity_replicas: 500,
        }
    }
}

impl RunOptions {
    fn selected(&self, params: &ModelParams) -> Vec<CheckName> {
        let requested = if self.checks.is_empty() {
            CheckName::ALL.to_vec()
        } else {
            self.checks.clone()
        };
        requested
            .into_iter()
            .filter(|c| !self.analytic_only || c.is_analytic())
            .filter(|c| params.is_quadratic() || !c.needs_quadratic())
            .collect()
    }
}

/// `10 / (beta mu_1)` time units in steps: relaxation of the slowest mode.
pub fn burn_in_steps(params: &ModelParams, dt: f64) -> u64 {
    let mu1 = laplacian_eigenvalue(1, params.n_agents);
    (10.0 / (params.beta * mu1) / dt).ceil() as u64
}

/// Observable series of one replica, sampled every `series_every` steps (including `t = 0`).
pub fn observable_series(scenario: &Scenario, replica: u32) -> Result<Vec<StatSeries>> {
    let params = scenario.params()?;
    let config = scenario.sim_config(replica)?.with_thinning(scenario.sim.n_steps);
    let every = scenario.sim.series_every;
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); SeriesLabel::ALL.len()];
    let mut sim = Simulation::new(&params, &config)?;
    let mut record = |state: &State| {
        for (label, out) in SeriesLabel::ALL.iter().zip(values.iter_mut()) {
            out.push(label.evaluate(state, &params));
        }
    };
    record(sim.state());
    while !sim.is_finished() {
        sim.advance()?;
        if sim.step_index() % every == 0 {
            record(sim.state());
        }
    }
    SeriesLabel::ALL
        .iter()
        .zip(values)
        .map(|(label, v)| Ok(StatSeries::new(*label, v, every as f64 * config.dt)?))
        .collect()
}

/// Post-burn-in time averages of `(V_p, V_Q)` for one replica.
pub fn stationary_averages(scenario: &Scenario, replica: u32) -> Result<(f64, f64)> {
    let params = scenario.params()?;
    let config = scenario.sim_config(replica)?;
    let burn_in = burn_in_steps(&params, config.dt);
    if burn_in >= config.n_steps {
        bail!(
            "n_steps = {} does not exceed the burn-in of {burn_in} steps",
            config.n_steps
        );
    }
    let every = scenario.sim.series_every;
    let (mut vp, mut vq) = (RunningStats::new(), RunningStats::new());
    let mut sim = Simulation::new(&params, &config)?;
    while !sim.is_finished() {
        sim.advance()?;
        let k = sim.step_index();
        if k > burn_in && k % every == 0 {
            let (p, q) = ensemble_variances(sim.state(), &params);
            vp.push(p);
            vq.push(q);
        }
    }
    Ok((vp.mean(), vq.mean()))
}

/// Stationary `V_p` samples spaced five correlation times apart, split over replicas.
pub fn stationary_samples(scenario: &Scenario, n_samples: usize, replicas: u32) -> Result<Vec<f64>> {
    let params = scenario.params()?;
    let dt = scenario.sim.dt;
    let gap = if params.is_quadratic() {
        analyze(&params)?.spectral_gap()
    } else {
        // No spectrum for the nonlinear potential; fall back to the velocity-coupling rate.
        0.5 * params.beta * laplacian_eigenvalue(1, params.n_agents)
    };
    let spacing = (5.0 / (2.0 * gap) / dt).ceil() as u64;
    let burn_in = burn_in_steps(&params, dt);
    let per_replica = n_samples.div_ceil(replicas as usize);
    let mut samples = Vec::with_capacity(n_samples);
    for r in 0..replicas {
        let want = per_replica.min(n_samples - samples.len());
        if want == 0 {
            break;
        }
        let config = SimConfig::new(dt, burn_in + spacing * want as u64, scenario.sim.seed).with_replica(r);
        let mut sim = Simulation::new(&params, &config)?;
        while !sim.is_finished() {
            sim.advance()?;
            let k = sim.step_index();
            if k > burn_in && (k - burn_in) % spacing == 0 {
                samples.push(ensemble_variances(sim.state(), &params).0);
            }
        }
    }
    Ok(samples)
}

/// Variance of the mean velocity at the final time over independent replicas, in standard errors
/// from `sigma^2 t / N`.
pub fn mean_velocity_check(scenario: &Scenario, replicas: u32, t: f64) -> Result<Check> {
    let params = scenario.params()?;
    let steps = (t / scenario.sim.dt).round() as u64;
    let mut stats = RunningStats::new();
    for r in 0..replicas {
        let config = SimConfig::new(scenario.sim.dt, steps, scenario.sim.seed).with_replica(r);
        let mut sim = Simulation::new(&params, &config)?;
        while !sim.is_finished() {
            sim.advance()?;
        }
        stats.push(sim.state().mean_velocity());
    }
    let target = params.sigma * params.sigma * steps as f64 * scenario.sim.dt / params.n_agents as f64;
    let se = target * (2.0 / (replicas as f64 - 1.0)).sqrt();
    Ok(Check::at_most("mean-velocity", (stats.variance() - target).abs() / se, 3.0))
}

pub fn run_checks(scenario: &Scenario, options: &RunOptions) -> Result<ValidationReport> {
    let params = scenario.params()?;
    let mut checks = Vec::new();
    for name in options.selected(&params) {
        match name {
            CheckName::Spectral => {
                let data = analyze(&params)?;
                checks.push(Check::at_most(
                    "spectral-residual",
                    data.eigen_residual() / data.drift_matrix.amax(),
                    1e-10,
                ));
                if data.eigenvectors_valid {
                    checks.push(Check::at_most("spectral-inverse", data.inverse_residual(), 1e-10));
                }
            }
            CheckName::KMatrix => {
                let n = params.n_agents;
                let diff = (k_closed_form(n)?.0 - k_spectral(n)?.0).amax();
                checks.push(Check::at_most("k-matrix", diff, 1e-10));
            }
            CheckName::Lyapunov => {
                let limit = limit_distribution(&params)?;
                let s2 = (params.sigma * params.sigma).max(f64::MIN_POSITIVE);
                checks.push(Check::at_most("lyapunov", lyapunov_residual(&params, &limit.cov)? / s2, 1e-10));
            }
            CheckName::Quadrature => {
                let spectral = analyze(&params)?;
                let z0 = State::uniform(&params, 0.0).to_z(params.ring_length);
                let t = 1.0;
                let closed = ringphs::analytic::moments_z(&params, &spectral, &z0, t)?.cov;
                let quad = covariance_quadrature(&params, t)?;
                checks.push(Check::at_most("covariance-quadrature", (closed - quad).amax(), 1e-6));
            }
            CheckName::StationaryVariance => {
                let expected = expected_stationary_variances(&params)?;
                let (mut vp, mut vq) = (RunningStats::new(), RunningStats::new());
                for r in 0..scenario.sim.replicas {
                    let (p, q) = stationary_averages(scenario, r)?;
                    vp.push(p);
                    vq.push(q);
                }
                checks.push(Check::at_most(
                    "stationary-V_p",
                    (vp.mean() - expected.velocity).abs() / expected.velocity,
                    0.05,
                ));
                checks.push(Check::at_most(
                    "stationary-V_Q",
                    (vq.mean() - expected.distance).abs() / expected.distance,
                    0.10,
                ));
            }
            CheckName::Ks => {
                let samples = stationary_samples(scenario, options.dist_samples, options.dist_replicas)?;
                let reference =
                    mc_chi_squared(&stationary_velocity_covariance(&params)?, options.mc_samples, scenario.sim.seed)?;
                let ks = ks_two_sample(&samples, &reference)?;
                let critical = ks_critical_value(0.01, samples.len(), reference.len());
                checks.push(Check::at_most("ks-V_p", ks.statistic, critical));
            }
            CheckName::MeanVelocity => {
                checks.push(mean_velocity_check(scenario, options.mean_velocity_replicas, 1.0)?);
            }
        }
    }
    Ok(ValidationReport {
        scenario: scenario.name.clone(),
        seed: scenario.sim.seed,
        checks,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyticSummary {
    pub scenario: String,
    #[serde(rename = "E_Vp")]
    pub e_vp: f64,
    #[serde(rename = "E_VQ")]
    pub e_vq: f64,
    pub spectral_gap: f64,
    pub degenerate_modes: Vec<usize>,
    /// Smallest `|lambda_{j,1} - lambda_{j,2}|` over `j >= 1`; small values mean an ill-conditioned eigenbasis.
    pub min_eigenvalue_split: f64,
}

pub fn analytic_summary(scenario: &Scenario) -> Result<AnalyticSummary> {
    let params = scenario.params()?;
    let expected = expected_stationary_variances(&params)?;
    let spectral = analyze(&params)?;
    Ok(AnalyticSummary {
        scenario: scenario.name.clone(),
        e_vp: expected.velocity,
        e_vq: expected.distance,
        spectral_gap: spectral.spectral_gap(),
        degenerate_modes: spectral.degenerate_modes.clone(),
        min_eigenvalue_split: spectral.min_eigenvalue_gap(),
    })
}

/// Writes `limit_distribution.json`, `k_entries.csv` and `analytic_summary.json`;
/// with `time`, also `analytic_moments.json` for `X(time)` from the uniform start.
pub fn write_analytic(scenario: &Scenario, out: &Path, time: Option<f64>) -> Result<AnalyticSummary> {
    let params = scenario.params()?;
    fs::create_dir_all(out)?;
    let summary = analytic_summary(scenario)?;
    fs::write(out.join("analytic_summary.json"), serde_json::to_string_pretty(&summary)?)?;
    limit_distribution(&params)?.write_json(out.join("limit_distribution.json"))?;
    let k = k_closed_form(params.n_agents)?;
    save_with(out.join("k_entries.csv"), |w| {
        use std::io::Write;
        writeln!(w, "m,k_1m")?;
        for (m, v) in k.first_row().iter().enumerate() {
            writeln!(w, "{},{v}", m + 1)?;
        }
        Ok(())
    })?;
    if let Some(t) = time {
        let z0 = State::uniform(&params, 0.0).to_z(params.ring_length);
        moments_x(&params, &analyze(&params)?, &z0, t)?.write_json(out.join("analytic_moments.json"))?;
    }
    Ok(summary)
}

/// Trajectory CSVs (`trajectory[_rK].csv` and the wrapped variant) for `replicas` replicas.
pub fn write_trajectories(scenario: &Scenario, out: &Path, replicas: u32) -> Result<Vec<PathBuf>> {
    let params = scenario.params()?;
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for r in 0..replicas {
        let traj = simulate_observed(&params, &scenario.sim_config(r)?, |_, _, _| {})?;
        let suffix = if replicas == 1 { String::new() } else { format!("_r{r}") };
        let plain = out.join(format!("trajectory{suffix}.csv"));
        let wrapped = out.join(format!("trajectory{suffix}_wrapped.csv"));
        traj.save_csv(&plain, false)?;
        traj.save_csv(&wrapped, true)?;
        written.extend([plain, wrapped]);
    }
    Ok(written)
}

pub fn write_series(series: &[StatSeries], out: &Path, seed: u64) -> Result<()> {
    fs::create_dir_all(out)?;
    for s in series {
        save_with(out.join(format!("series_{}.csv", s.label)), |w| s.write_csv(w, seed))?;
    }
    Ok(())
}

/// ACFs of `V_p` and `V_Q` after burn-in, up to `max_lag_time`.
pub fn write_acfs(scenario: &Scenario, series: &[StatSeries], out: &Path, max_lag_time: f64) -> Result<()> {
    let params = scenario.params()?;
    let burn_in = burn_in_steps(&params, scenario.sim.dt) as f64 * scenario.sim.dt;
    fs::create_dir_all(out)?;
    for s in series {
        if !matches!(s.label, SeriesLabel::VelocityVariance | SeriesLabel::DistanceVariance) {
            continue;
        }
        let tail = s.after(burn_in);
        let max_lag = ((max_lag_time / s.dt_between_samples) as usize).min(tail.len().saturating_sub(1));
        let rho = acf(&tail, max_lag).with_context(|| format!("ACF of {} after burn-in", s.label))?;
        save_with(out.join(format!("acf_{}.csv", s.label)), |w| {
            write_acf_csv(w, &rho, s.dt_between_samples, scenario.sim.seed)
        })?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct DistSummary {
    pub samples: usize,
    pub mc_samples: usize,
    pub ks_statistic: f64,
    pub ks_p_value: f64,
    pub ks_critical_1pct: f64,
}

/// Stationary `V_p` samples, Monte-Carlo reference draws, shared-range histograms and KS.
pub fn write_distribution(scenario: &Scenario, out: &Path, options: &RunOptions) -> Result<DistSummary> {
    let params = scenario.params()?;
    fs::create_dir_all(out)?;
    let seed = scenario.sim.seed;
    let samples = stationary_samples(scenario, options.dist_samples, options.dist_replicas)?;
    save_with(out.join("dist_samples.csv"), |w| write_samples_csv(w, &samples, seed))?;
    let mut summary = DistSummary {
        samples: samples.len(),
        mc_samples: 0,
        ks_statistic: f64::NAN,
        ks_p_value: f64::NAN,
        ks_critical_1pct: f64::NAN,
    };
    let hi = samples.iter().copied().fold(0.0, f64::max);
    if params.is_quadratic() {
        let reference = mc_chi_squared(&stationary_velocity_covariance(&params)?, options.mc_samples, seed)?;
        save_with(out.join("mc_samples.csv"), |w| write_samples_csv(w, &reference, seed))?;
        let ks = ks_two_sample(&samples, &reference)?;
        summary.mc_samples = reference.len();
        summary.ks_statistic = ks.statistic;
        summary.ks_p_value = ks.p_value;
        summary.ks_critical_1pct = ks_critical_value(0.01, samples.len(), reference.len());
        let hi = reference.iter().copied().fold(hi, f64::max);
        let h = Histogram::new(&reference, 50, 0.0, hi)?;
        save_with(out.join("hist_mc.csv"), |w| h.write_csv(w, seed))?;
        let h = Histogram::new(&samples, 50, 0.0, hi)?;
        save_with(out.join("hist_sim.csv"), |w| h.write_csv(w, seed))?;
    } else {
        let h = Histogram::new(&samples, 50, 0.0, hi.max(f64::MIN_POSITIVE))?;
        save_with(out.join("hist_sim.csv"), |w| h.write_csv(w, seed))?;
    }
    fs::write(out.join("dist_summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

pub fn write_report(report: &ValidationReport, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("validation_report.json"), serde_json::to_string_pretty(report)?)?;
    Ok(())
}

/// Emits every artifact the scenario requests into `out`; returns the validation report
/// (empty when not requested). Explicitly named checks skip the simulation artifacts.
pub fn run(scenario: &Scenario, out: &Path, options: &RunOptions) -> Result<ValidationReport> {
    let params = scenario.params()?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("scenario.toml"), scenario.to_toml())?;

    if params.is_quadratic()
        && (scenario.wants(Artifact::LimitDistribution) || scenario.wants(Artifact::AnalyticMoments))
    {
        let time = scenario
            .wants(Artifact::AnalyticMoments)
            .then(|| scenario.sim.n_steps as f64 * scenario.sim.dt);
        write_analytic(scenario, out, time)?;
    }
    if !options.analytic_only && options.checks.is_empty() {
        if scenario.wants(Artifact::Trajectory) {
            write_trajectories(scenario, out, 1)?;
        }
        if scenario.wants(Artifact::Stats) || scenario.wants(Artifact::Acf) {
            let series = observable_series(scenario, 0)?;
            if scenario.wants(Artifact::Stats) {
                write_series(&series, out, scenario.sim.seed)?;
            }
            if scenario.wants(Artifact::Acf) {
                write_acfs(scenario, &series, out, 30.0)?;
            }
        }
        if scenario.wants(Artifact::Histograms) {
            write_distribution(scenario, out, options)?;
        }
    }
    let report = if scenario.wants(Artifact::ValidationReport) || !options.checks.is_empty() {
        run_checks(scenario, options)?
    } else {
        ValidationReport {
            scenario: scenario.name.clone(),
            seed: scenario.sim.seed,
            checks: Vec::new(),
        }
    };
    write_report(&report, out)?;
    Ok(report)
}
