//! Gaussian moments of the linear (quadratic potential) system.
//!
//! `Z = (Q, p)` solves `dZ = B Z dt + G dW` and `X = (Q, M p)` removes the mean
//! velocity, which is a Brownian motion and never settles. Both are Gaussian at
//! every time; `X` has a limit law whose covariance is built from the circulant
//! matrix `K = sum_{j>=1} v_j v_j^* / mu_j`.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::model::{centering_matrix, drift_matrix, ModelParams};
use crate::spectral::{SpectralData, IMAGINARY_TOLERANCE};

/// Relative tolerance of the adaptive quadrature used for degenerate spectra.
pub const QUADRATURE_RTOL: f64 = 1e-8;

/// Time at which moments are evaluated; `Infinite` marks the limit law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentTime {
    Finite(f64),
    Infinite,
}

impl fmt::Display for MomentTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MomentTime::Finite(t) => write!(f, "{t}"),
            MomentTime::Infinite => f.write_str("inf"),
        }
    }
}

impl Serialize for MomentTime {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MomentTime::Finite(t) => serializer.serialize_f64(*t),
            MomentTime::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for MomentTime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Number(t) => Ok(MomentTime::Finite(t)),
            Raw::Text(s) if s == "inf" => Ok(MomentTime::Infinite),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {s:?}"))),
        }
    }
}

/// Mean vector and covariance matrix of a Gaussian law on `R^{2N}`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub time: MomentTime,
}

/// On-disk layout: covariance flattened row by row.
#[derive(Serialize, Deserialize)]
struct MomentsFile {
    time: MomentTime,
    dim: usize,
    mean: Vec<f64>,
    covariance: Vec<f64>,
}

impl GaussianMoments {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Upper-left `n x n` block (distances).
    pub fn distance_block(&self) -> DMatrix<f64> {
        let n = self.dim() / 2;
        self.cov.view((0, 0), (n, n)).clone_owned()
    }

    /// Lower-right `n x n` block (velocities or velocity deviations).
    pub fn velocity_block(&self) -> DMatrix<f64> {
        let n = self.dim() / 2;
        self.cov.view((n, n), (n, n)).clone_owned()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = MomentsFile {
            time: self.time,
            dim: self.dim(),
            mean: self.mean.iter().copied().collect(),
            covariance: self.cov.transpose().iter().copied().collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MomentsFile = serde_json::from_str(text)?;
        if file.mean.len() != file.dim {
            return Err(Error::DimensionMismatch {
                expected: file.dim,
                got: file.mean.len(),
            });
        }
        if file.covariance.len() != file.dim * file.dim {
            return Err(Error::DimensionMismatch {
                expected: file.dim * file.dim,
                got: file.covariance.len(),
            });
        }
        Ok(Self {
            mean: DVector::from_vec(file.mean),
            cov: DMatrix::from_row_slice(file.dim, file.dim, &file.covariance),
            time: file.time,
        })
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// The circulant matrix `K` of the stationary covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct KMatrix(pub DMatrix<f64>);

impl KMatrix {
    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// First row; the whole matrix is its cyclic shifts.
    pub fn first_row(&self) -> Vec<f64> {
        self.0.row(0).iter().copied().collect()
    }
}

/// `K_{l,m} = [(l - m)^2 - N |l - m| + (N^2 - 1) / 6] / (2N)`.
pub fn k_closed_form(n: usize) -> Result<KMatrix> {
    if n < 3 {
        return Err(invalid("n_agents", format!("need at least 3 agents, got {n}")));
    }
    let nf = n as f64;
    let offset = (nf * nf - 1.0) / 6.0;
    Ok(KMatrix(DMatrix::from_fn(n, n, |l, m| {
        let d = (l as f64 - m as f64).abs();
        (d * d - nf * d + offset) / (2.0 * nf)
    })))
}

/// `K` assembled literally as `sum_{j=1}^{N-1} v_j v_j^* / mu_j` in complex arithmetic.
pub fn k_spectral_complex(n: usize) -> Result<DMatrix<Complex64>> {
    if n < 3 {
        return Err(invalid("n_agents", format!("need at least 3 agents, got {n}")));
    }
    let mut k = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for j in 1..n {
        let v = crate::spectral::fourier_vector(j, n);
        let inv_mu = 1.0 / crate::spectral::laplacian_eigenvalue(j, n);
        for m in 0..n {
            let vm = v[m].conj() * inv_mu;
            for l in 0..n {
                k[(l, m)] += v[l] * vm;
            }
        }
    }
    Ok(k)
}

pub fn k_spectral(n: usize) -> Result<KMatrix> {
    let k = k_spectral_complex(n)?;
    Ok(KMatrix(linalg::checked_real(&k, 1e-12)?))
}

fn outer(v: &DVector<Complex64>) -> DMatrix<Complex64> {
    v * v.adjoint()
}

fn check_inputs(params: &ModelParams, spectral: &SpectralData, z0: &DVector<f64>, t: f64) -> Result<()> {
    params.validate()?;
    params.require_quadratic()?;
    if spectral.params != *params {
        return Err(invalid("spectral", "spectral data was computed for different parameters"));
    }
    let dim = 2 * params.n_agents;
    if z0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: z0.len(),
        });
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid("t", format!("must be finite and >= 0, got {t}")));
    }
    Ok(())
}

/// Per-mode coefficients of the covariance at time `t`.
struct ModeCoefficients {
    a: Complex64,
    b: Complex64,
    c: Complex64,
}

fn mode_coefficients(spectral: &SpectralData, j: usize, t: f64) -> ModeCoefficients {
    let (alpha, beta) = (spectral.params.alpha, spectral.params.beta);
    let a2 = alpha * alpha;
    let mu = spectral.mu[j];
    let [l1, l2] = spectral.lambdas[j];
    let e1 = (l1 * (2.0 * t)).exp();
    let e2 = (l2 * (2.0 * t)).exp();
    let decay = (-t * beta * mu).exp();
    let gap = beta * beta * mu - 4.0 * a2;

    let a = (l1 * e2 * beta + 4.0 * a2 * decay + l2 * e1 * beta) / (2.0 * a2 * beta * mu * gap);
    let c = (l2 * e2 * beta + 4.0 * a2 * decay + l1 * e1 * beta) / (2.0 * beta * mu * gap);
    let b = ((e2 + e1) * (beta * mu) + (l2 + l1) * (2.0 * decay)) * spectral.difference_eigenvalues[j].conj()
        / (2.0 * beta * mu * mu * gap);
    ModeCoefficients { a, b, c }
}

/// Closed-form mean of `Z(t)`; `include_mean_velocity` selects `Z` over `X`.
fn closed_form_mean(spectral: &SpectralData, z0: &DVector<f64>, t: f64, include_mean_velocity: bool) -> Result<DVector<f64>> {
    let n = spectral.n_agents();
    let q0 = z0.rows(0, n).map(|x| Complex64::new(x, 0.0));
    let p0 = z0.rows(n, n).map(|x| Complex64::new(x, 0.0));
    let mut mean = DVector::from_element(2 * n, Complex64::new(0.0, 0.0));

    let q_bar = z0.rows(0, n).mean();
    mean.rows_mut(0, n).fill(Complex64::new(q_bar, 0.0));
    if include_mean_velocity {
        mean.rows_mut(n, n).fill(Complex64::new(z0.rows(n, n).mean(), 0.0));
    }

    for j in 1..n {
        let v = &spectral.fourier_vectors[j];
        let kj = spectral.difference_eigenvalues[j];
        let [l1, l2] = spectral.lambdas[j];
        let (e1, e2) = ((l1 * t).exp(), (l2 * t).exp());
        let gap = l1 - l2;
        let qj = v.dotc(&q0);
        let pj = v.dotc(&p0);
        let top = (qj * (e2 * l1 - e1 * l2) - pj * (e2 - e1) * kj) / gap;
        let bottom = (qj * (e2 - e1) * l1 * l2 - pj * (e2 * l2 - e1 * l1) * kj) / (kj * gap);
        let mut upper = mean.rows_mut(0, n);
        upper += v * top;
        let mut lower = mean.rows_mut(n, n);
        lower += v * bottom;
    }
    let mean = DMatrix::from_column_slice(2 * n, 1, mean.as_slice());
    Ok(linalg::checked_real(&mean, IMAGINARY_TOLERANCE)?.column(0).into_owned())
}

fn closed_form_cov(spectral: &SpectralData, t: f64, include_mean_velocity: bool) -> Result<DMatrix<f64>> {
    let params = &spectral.params;
    let n = spectral.n_agents();
    let s2 = params.sigma * params.sigma;
    let k = k_closed_form(n)?.0.map(|x| Complex64::new(x, 0.0));

    let mut cov = DMatrix::from_element(2 * n, 2 * n, Complex64::new(0.0, 0.0));
    cov.view_mut((0, 0), (n, n))
        .copy_from(&(&k * Complex64::from(s2 / (2.0 * params.alpha * params.alpha * params.beta))));
    let mut vv = &k * Complex64::from(s2 / (2.0 * params.beta));
    if include_mean_velocity {
        vv += outer(&spectral.fourier_vectors[0]) * Complex64::from(s2 * t);
    }
    cov.view_mut((n, n), (n, n)).copy_from(&vv);

    for j in 1..n {
        let proj = outer(&spectral.fourier_vectors[j]) * Complex64::from(s2);
        let ModeCoefficients { a, b, c } = mode_coefficients(spectral, j, t);
        let mut qq = cov.view_mut((0, 0), (n, n));
        qq += &proj * a;
        let mut qp = cov.view_mut((0, n), (n, n));
        qp += &proj * b.conj();
        let mut pq = cov.view_mut((n, 0), (n, n));
        pq += &proj * b;
        let mut pp = cov.view_mut((n, n), (n, n));
        pp += &proj * c;
    }
    linalg::checked_real(&cov, IMAGINARY_TOLERANCE)
}

/// `int_0^t e^{sB} G G^T e^{sB^T} ds` by adaptive Simpson with dense exponentials.
pub fn covariance_quadrature(params: &ModelParams, t: f64) -> Result<DMatrix<f64>> {
    let n = params.n_agents;
    let b = drift_matrix(params);
    let s2 = params.sigma * params.sigma;
    if t == 0.0 || s2 == 0.0 {
        return Ok(DMatrix::zeros(2 * n, 2 * n));
    }
    let norm1 = b.column_iter().map(|c| c.abs().sum()).fold(0.0, f64::max);
    let panels = (t * norm1).ceil().max(1.0) as usize;
    linalg::adaptive_simpson(
        |s| {
            let e = linalg::expm(&(&b * s));
            let x = e.columns(n, n);
            (&x * x.transpose()) * s2
        },
        0.0,
        t,
        panels,
        QUADRATURE_RTOL,
        1e-14 * s2,
    )
}

/// Moments of `Z(t) = (Q(t), p(t))` started from `z0 = (Q(0), p(0))`.
pub fn moments_z(params: &ModelParams, spectral: &SpectralData, z0: &DVector<f64>, t: f64) -> Result<GaussianMoments> {
    check_inputs(params, spectral, z0, t)?;
    let (mean, cov) = if spectral.eigenvectors_valid {
        (closed_form_mean(spectral, z0, t, true)?, closed_form_cov(spectral, t, true)?)
    } else {
        let e = linalg::expm(&(&spectral.drift_matrix * t));
        (&e * z0, covariance_quadrature(params, t)?)
    };
    Ok(GaussianMoments {
        mean,
        cov,
        time: MomentTime::Finite(t),
    })
}

/// `diag(I, M)` on `R^{2N}`.
pub fn deviation_projector(n: usize) -> DMatrix<f64> {
    let mut p = DMatrix::identity(2 * n, 2 * n);
    p.view_mut((n, n), (n, n)).copy_from(&centering_matrix(n));
    p
}

/// Moments of `X(t) = (Q(t), M p(t))`.
pub fn moments_x(params: &ModelParams, spectral: &SpectralData, z0: &DVector<f64>, t: f64) -> Result<GaussianMoments> {
    check_inputs(params, spectral, z0, t)?;
    if spectral.eigenvectors_valid {
        return Ok(GaussianMoments {
            mean: closed_form_mean(spectral, z0, t, false)?,
            cov: closed_form_cov(spectral, t, false)?,
            time: MomentTime::Finite(t),
        });
    }
    let z = moments_z(params, spectral, z0, t)?;
    let proj = deviation_projector(params.n_agents);
    Ok(GaussianMoments {
        mean: &proj * z.mean,
        cov: &proj * z.cov * proj.transpose(),
        time: MomentTime::Finite(t),
    })
}

/// Stationary covariance of the velocity deviations, `sigma^2 K / (2 beta)`.
pub fn stationary_velocity_covariance(params: &ModelParams) -> Result<DMatrix<f64>> {
    params.require_quadratic()?;
    Ok(k_closed_form(params.n_agents)?.0 * (params.sigma * params.sigma / (2.0 * params.beta)))
}

/// Stationary covariance of the distances, `sigma^2 K / (2 alpha^2 beta)`.
pub fn stationary_distance_covariance(params: &ModelParams) -> Result<DMatrix<f64>> {
    params.require_quadratic()?;
    let a2 = params.alpha * params.alpha;
    Ok(k_closed_form(params.n_agents)?.0 * (params.sigma * params.sigma / (2.0 * a2 * params.beta)))
}

/// Limit law of `X(t)` as `t -> infinity`.
pub fn limit_distribution(params: &ModelParams) -> Result<GaussianMoments> {
    params.validate()?;
    params.require_quadratic()?;
    let n = params.n_agents;
    let mut mean = DVector::zeros(2 * n);
    mean.rows_mut(0, n).fill(params.mean_distance());
    let mut cov = DMatrix::zeros(2 * n, 2 * n);
    cov.view_mut((0, 0), (n, n)).copy_from(&stationary_distance_covariance(params)?);
    cov.view_mut((n, n), (n, n)).copy_from(&stationary_velocity_covariance(params)?);
    Ok(GaussianMoments {
        mean,
        cov,
        time: MomentTime::Infinite,
    })
}

/// `max |B cov + cov B^T + sigma^2 diag(0, M M^T)|`.
pub fn lyapunov_residual(params: &ModelParams, cov: &DMatrix<f64>) -> Result<f64> {
    params.require_quadratic()?;
    let n = params.n_agents;
    if cov.nrows() != 2 * n || cov.ncols() != 2 * n {
        return Err(Error::DimensionMismatch {
            expected: 2 * n,
            got: cov.nrows(),
        });
    }
    let b = drift_matrix(params);
    let m = centering_matrix(n);
    let mut lhs = &b * cov + cov * b.transpose();
    let mut noise = lhs.view_mut((n, n), (n, n));
    noise += &m * m.transpose() * (params.sigma * params.sigma);
    Ok(lhs.amax())
}

/// Exact stationary autocorrelation of `(V_p, V_Q)` at the given lags.
///
/// For the Gaussian stationary state `Cov(V(0), V(h)) = (2 / N^2) |C(h)|_F^2`
/// with `C(h)` the matching block of `e^{hB} Sigma_inf`, so both sequences are
/// nonnegative.
pub fn stationary_variance_acf(params: &ModelParams, lags: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let limit = limit_distribution(params)?;
    let spectral = crate::spectral::analyze(params)?;
    let n = params.n_agents;
    let mut vp = Vec::with_capacity(lags.len());
    let mut vq = Vec::with_capacity(lags.len());
    let frob = |m: &DMatrix<f64>, r: usize| m.view((r, r), (n, n)).norm_squared();
    let c0 = &limit.cov;
    let (p0, q0) = (frob(c0, n), frob(c0, 0));
    for &h in lags {
        let ch = spectral.expm_tb(h)? * c0;
        vp.push(frob(&ch, n) / p0);
        vq.push(frob(&ch, 0) / q0);
    }
    Ok((vp, vq))
}

/// Expected stationary ensemble variances of velocities and distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StationaryVariances {
    pub velocity: f64,
    pub distance: f64,
}

/// `E[V_p] = sigma^2 (N^2 - 1) / (24 N beta)` and `E[V_Q] = E[V_p] / alpha^2`.
pub fn expected_stationary_variances(params: &ModelParams) -> Result<StationaryVariances> {
    params.validate()?;
    params.require_quadratic()?;
    let n = params.n_agents as f64;
    let velocity = params.sigma * params.sigma * (n * n - 1.0) / (24.0 * n * params.beta);
    Ok(StationaryVariances {
        velocity,
        distance: velocity / (params.alpha * params.alpha),
    })
}
