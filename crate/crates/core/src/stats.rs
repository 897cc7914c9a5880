//! Ensemble observables, autocorrelation, Monte-Carlo reference laws and KS.

use std::fmt;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::psd_sqrt;
use crate::model::{ModelParams, State};
use crate::rng::NormalStream;
use crate::sde::Trajectory;

#[derive(Debug, Clone, PartialEq)]
pub struct Observables {
    pub mean_velocity: f64,
    pub velocity_variance: f64,
    pub distance_variance: f64,
    /// `D = M p`.
    pub velocity_deviation: Vec<f64>,
    /// `E = Q - (L/N) 1`.
    pub distance_deviation: Vec<f64>,
}

pub fn observables(state: &State, params: &ModelParams) -> Observables {
    let n = state.len() as f64;
    let mean_velocity = state.mean_velocity();
    let velocity_deviation: Vec<f64> = state.p.iter().map(|p| p - mean_velocity).collect();
    let spacing = params.ring_length / n;
    let distance_deviation: Vec<f64> = state
        .distances(params.ring_length)
        .into_iter()
        .map(|d| d - spacing)
        .collect();
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / n;
    Observables {
        mean_velocity,
        velocity_variance: sq(&velocity_deviation),
        distance_variance: sq(&distance_deviation),
        velocity_deviation,
        distance_deviation,
    }
}

/// `(V_p, V_Q)` without allocating the deviation vectors.
pub fn ensemble_variances(state: &State, params: &ModelParams) -> (f64, f64) {
    let n = state.len();
    let nf = n as f64;
    let pbar = state.mean_velocity();
    let vp = state.p.iter().map(|p| (p - pbar) * (p - pbar)).sum::<f64>() / nf;
    let spacing = params.ring_length / nf;
    let mut vq = 0.0;
    for i in 0..n {
        let d = if i + 1 == n {
            params.ring_length + state.q[0] - state.q[n - 1]
        } else {
            state.q[i + 1] - state.q[i]
        } - spacing;
        vq += d * d;
    }
    (vp, vq / nf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesLabel {
    MeanVelocity,
    #[serde(rename = "V_p")]
    VelocityVariance,
    #[serde(rename = "V_Q")]
    DistanceVariance,
    FirstAgentVelocity,
    FirstAgentDistanceDev,
}

impl SeriesLabel {
    pub const ALL: [SeriesLabel; 5] = [
        Self::MeanVelocity,
        Self::VelocityVariance,
        Self::DistanceVariance,
        Self::FirstAgentVelocity,
        Self::FirstAgentDistanceDev,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::MeanVelocity => "mean_velocity",
            Self::VelocityVariance => "V_p",
            Self::DistanceVariance => "V_Q",
            Self::FirstAgentVelocity => "first_agent_velocity",
            Self::FirstAgentDistanceDev => "first_agent_distance_dev",
        }
    }

    pub fn evaluate(self, state: &State, params: &ModelParams) -> f64 {
        match self {
            Self::MeanVelocity => state.mean_velocity(),
            Self::VelocityVariance => ensemble_variances(state, params).0,
            Self::DistanceVariance => ensemble_variances(state, params).1,
            Self::FirstAgentVelocity => state.p[0],
            Self::FirstAgentDistanceDev => {
                let n = state.len();
                state.q[1] - state.q[0] - params.ring_length / n as f64
            }
        }
    }
}

impl fmt::Display for SeriesLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SeriesLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid("label", format!("unknown series label {s:?}")))
    }
}

/// Equally spaced scalar samples starting at `t0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatSeries {
    pub label: SeriesLabel,
    pub values: Vec<f64>,
    pub dt_between_samples: f64,
    #[serde(default)]
    pub t0: f64,
}

impl StatSeries {
    pub fn new(label: SeriesLabel, values: Vec<f64>, dt_between_samples: f64) -> Result<Self> {
        if !(dt_between_samples.is_finite() && dt_between_samples > 0.0) {
            return Err(invalid("dt_between_samples", "must be finite and > 0"));
        }
        let series = Self {
            label,
            values,
            dt_between_samples,
            t0: 0.0,
        };
        if matches!(label, SeriesLabel::VelocityVariance | SeriesLabel::DistanceVariance)
            && series.values.iter().any(|v| *v < 0.0)
        {
            return Err(invalid("values", "ensemble variances must be nonnegative"));
        }
        Ok(series)
    }

    pub fn from_trajectory(traj: &Trajectory, label: SeriesLabel) -> Result<Self> {
        let values = traj.states.iter().map(|s| label.evaluate(s, &traj.params)).collect();
        let dt = traj.config.dt * traj.config.thinning as f64;
        Self::new(label, values, dt)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt_between_samples
    }

    /// Drops samples before time `t`.
    pub fn after(&self, t: f64) -> Self {
        let skip = (((t - self.t0) / self.dt_between_samples).ceil().max(0.0) as usize).min(self.len());
        Self {
            label: self.label,
            values: self.values[skip..].to_vec(),
            dt_between_samples: self.dt_between_samples,
            t0: self.time(skip),
        }
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    pub fn write_csv<W: Write>(&self, mut out: W, seed: u64) -> Result<()> {
        writeln!(out, "# seed={seed} label={}", self.label)?;
        writeln!(out, "t,value")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", self.time(k), v)?;
        }
        Ok(())
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Biased sample ACF `rho(0..=max_lag)`.
pub fn acf(series: &StatSeries, max_lag: usize) -> Result<Vec<f64>> {
    acf_values(&series.values, max_lag)
}

pub fn acf_values(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    let n = x.len();
    if max_lag < 1 || n <= max_lag {
        return Err(invalid(
            "max_lag",
            format!("need 1 <= max_lag < series length, got max_lag={max_lag}, length={n}"),
        ));
    }
    let xbar = mean(x);
    let centered: Vec<f64> = x.iter().map(|v| v - xbar).collect();
    let c0 = centered.iter().map(|v| v * v).sum::<f64>();
    if c0 == 0.0 || !c0.is_finite() {
        return Err(Error::DegenerateSeries);
    }
    Ok((0..=max_lag)
        .map(|h| {
            let ch: f64 = centered[..n - h].iter().zip(&centered[h..]).map(|(a, b)| a * b).sum();
            ch / c0
        })
        .collect())
}

/// First lag index at which `rho` drops below `threshold`.
pub fn first_below(rho: &[f64], threshold: f64) -> Option<usize> {
    rho.iter().position(|r| *r < threshold)
}

/// First interior local minimum of `rho`.
pub fn first_local_minimum(rho: &[f64]) -> Option<usize> {
    (1..rho.len().saturating_sub(1)).find(|&h| rho[h] < rho[h - 1] && rho[h] <= rho[h + 1])
}

pub fn write_acf_csv<W: Write>(mut out: W, rho: &[f64], lag_dt: f64, seed: u64) -> Result<()> {
    writeln!(out, "# seed={seed}")?;
    writeln!(out, "lag,rho")?;
    for (h, r) in rho.iter().enumerate() {
        writeln!(out, "{},{}", h as f64 * lag_dt, r)?;
    }
    Ok(())
}

/// `n_samples` draws of `|C U|^2 / N` with `C C^T = cov`.
///
/// Sample `i` uses the normals at step `i` of the stream `(seed, 0)`.
pub fn mc_chi_squared(cov: &DMatrix<f64>, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    let n = cov.nrows();
    let c = psd_sqrt(cov)?;
    let stream = NormalStream::new(seed, 0);
    let mut u = DVector::zeros(n);
    let mut cu = DVector::zeros(n);
    let mut out = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        stream.fill(i as u64, u.as_mut_slice());
        cu.gemv(1.0, &c, &u, 0.0);
        out.push(cu.norm_squared() / n as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    /// Asymptotic p-value (Kolmogorov distribution with the Stephens correction).
    pub p_value: f64,
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("sample", "both samples must be nonempty"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(invalid("sample", "samples must not contain NaN"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    Ok(KsResult {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
    })
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = sign * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS critical value at level `alpha`, `c(alpha) sqrt(1/n + 1/m)`.
pub fn ks_critical_value(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * (1.0 / n as f64 + 1.0 / m as f64).sqrt()
}

/// Mergeable running mean and variance (Welford / Chan).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            f64::NAN
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        (self.variance() / self.count as f64).sqrt()
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::new();
        iter.into_iter().for_each(|x| s.push(x));
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// `bins` equal-width bins over `[lo, hi]`; values outside are ignored.
    pub fn new(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(invalid("bins", "need bins >= 1 and hi > lo"));
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0u64; bins];
        for &v in values {
            if v >= lo && v <= hi {
                let k = (((v - lo) / width) as usize).min(bins - 1);
                counts[k] += 1;
            }
        }
        Ok(Self { edges, counts })
    }

    /// Range taken from the data.
    pub fn auto(values: &[f64], bins: usize) -> Result<Self> {
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(invalid("values", "need finite, nonempty data"));
        }
        let hi = if hi > lo { hi } else { lo + 1.0 };
        Self::new(values, bins, lo, hi)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W, seed: u64) -> Result<()> {
        writeln!(out, "# seed={seed}")?;
        writeln!(out, "bin_left,bin_right,count")?;
        for (k, c) in self.counts.iter().enumerate() {
            writeln!(out, "{},{},{}", self.edges[k], self.edges[k + 1], c)?;
        }
        Ok(())
    }
}

/// One column `value` with a seed comment row.
pub fn write_samples_csv<W: Write>(mut out: W, samples: &[f64], seed: u64) -> Result<()> {
    writeln!(out, "# seed={seed}")?;
    writeln!(out, "value")?;
    for v in samples {
        writeln!(out, "{v}")?;
    }
    Ok(())
}

pub fn save_with<F>(path: impl AsRef<Path>, write: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>,
{
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write(&mut file)?;
    file.flush()?;
    Ok(())
}
