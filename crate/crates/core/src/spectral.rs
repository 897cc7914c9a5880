//! Closed-form eigenstructure of the linear drift matrix `B`.
//!
//! The circulant matrix `A` is diagonalised by the Fourier vectors
//! `v_j = (1, w^j, w^{2j}, ..., w^{(N-1)j}) / sqrt(N)` with `w = exp(2 pi i / N)`:
//! `A v_j = (w^j - 1) v_j` and `A^T v_j = conj(w^j - 1) v_j`. Each Fourier mode
//! `j >= 1` lifts to two eigenvectors of `B`,
//!
//! ```text
//! w_{j,k} = ((w^j - 1) v_j, lambda_{j,k} v_j),
//! lambda_{j,k} = (-beta mu_j -/+ sqrt(beta^2 mu_j^2 - 4 alpha^2 mu_j)) / 2,
//! ```
//!
//! with `mu_j = 4 sin^2(pi j / N)`. The zero mode contributes `(v_0, 0)` and
//! `(0, v_0)` with eigenvalue 0. When `beta^2 mu_j = 4 alpha^2` for some mode the
//! pair collapses, `B` is not diagonalisable, and everything downstream falls
//! back to dense exponentials.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;
use crate::linalg;
use crate::model::{drift_matrix, ModelParams};

/// Relative band on `|beta^2 mu_j - 4 alpha^2|` inside which a mode counts as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;

/// Largest imaginary entry tolerated when assembling a real matrix from complex factors.
pub const IMAGINARY_TOLERANCE: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `exp(2 pi i m / N)` with the exponent reduced mod N first.
pub fn root_of_unity(m: usize, n: usize) -> Complex64 {
    let phase = 2.0 * PI * (m % n) as f64 / n as f64;
    Complex64::new(phase.cos(), phase.sin())
}

/// `mu_j = 2 - 2 cos(2 pi j / N) = 4 sin^2(pi j / N)`, symmetric in `j <-> N - j` by construction.
pub fn laplacian_eigenvalue(j: usize, n: usize) -> f64 {
    let j = j % n;
    let s = (PI * j.min(n - j) as f64 / n as f64).sin();
    4.0 * s * s
}

pub fn fourier_vector(j: usize, n: usize) -> DVector<Complex64> {
    let scale = 1.0 / (n as f64).sqrt();
    DVector::from_fn(n, |m, _| root_of_unity(m * j, n) * scale)
}

fn is_degenerate(mu: f64, alpha: f64, beta: f64) -> bool {
    let b2mu = beta * beta * mu;
    (b2mu - 4.0 * alpha * alpha).abs() <= DEGENERACY_TOLERANCE * b2mu.max(1.0)
}

/// Roots of `z^2 + beta mu z + alpha^2 mu`, ordered as `(lambda_1, lambda_2)`.
fn mode_eigenvalues(mu: f64, alpha: f64, beta: f64) -> [Complex64; 2] {
    if mu == 0.0 {
        return [ZERO, ZERO];
    }
    let half_trace = -0.5 * beta * mu;
    if is_degenerate(mu, alpha, beta) {
        let l = Complex64::new(half_trace, 0.0);
        return [l, l];
    }
    let disc = mu * (beta * beta * mu - 4.0 * alpha * alpha);
    if disc > 0.0 {
        // Product form keeps the small root accurate.
        let large = half_trace - 0.5 * disc.sqrt();
        let small = alpha * alpha * mu / large;
        [Complex64::new(large, 0.0), Complex64::new(small, 0.0)]
    } else {
        let im = 0.5 * (-disc).sqrt();
        [Complex64::new(half_trace, -im), Complex64::new(half_trace, im)]
    }
}

/// Damping regime of one Fourier mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingMode {
    /// `j = 0`: the translation and mean-velocity directions.
    Zero,
    Overdamped,
    Critical,
    Underdamped,
}

#[derive(Debug, Clone)]
pub struct SpectralData {
    pub params: ModelParams,
    pub omega: Complex64,
    pub mu: Vec<f64>,
    /// Eigenvalues `w^j - 1` of `A`.
    pub difference_eigenvalues: Vec<Complex64>,
    pub fourier_vectors: Vec<DVector<Complex64>>,
    /// `lambdas[j] = [lambda_{j,1}, lambda_{j,2}]`.
    pub lambdas: Vec<[Complex64; 2]>,
    /// Columns `w_{0,1}, ..., w_{N-1,1}, w_{0,2}, ..., w_{N-1,2}`.
    pub w: DMatrix<Complex64>,
    /// Closed-form inverse of `w`; meaningless when `eigenvectors_valid` is false.
    pub w_inv: DMatrix<Complex64>,
    pub eigenvectors_valid: bool,
    pub degenerate_modes: Vec<usize>,
    pub drift_matrix: DMatrix<f64>,
}

pub fn analyze(params: &ModelParams) -> Result<SpectralData> {
    params.validate()?;
    let n = params.n_agents;
    let (alpha, beta) = (params.alpha, params.beta);

    let mu: Vec<f64> = (0..n).map(|j| laplacian_eigenvalue(j, n)).collect();
    let difference_eigenvalues: Vec<Complex64> =
        (0..n).map(|j| root_of_unity(j, n) - Complex64::new(1.0, 0.0)).collect();
    let fourier_vectors: Vec<DVector<Complex64>> = (0..n).map(|j| fourier_vector(j, n)).collect();
    let lambdas: Vec<[Complex64; 2]> = mu.iter().map(|&m| mode_eigenvalues(m, alpha, beta)).collect();
    let degenerate_modes: Vec<usize> = (1..n).filter(|&j| is_degenerate(mu[j], alpha, beta)).collect();

    let mut w = DMatrix::from_element(2 * n, 2 * n, ZERO);
    let mut w_inv = DMatrix::from_element(2 * n, 2 * n, ZERO);
    let v0 = &fourier_vectors[0];
    w.view_mut((0, 0), (n, 1)).copy_from(v0);
    w.view_mut((n, n), (n, 1)).copy_from(v0);
    let v0_adj = v0.adjoint();
    w_inv.view_mut((0, 0), (1, n)).copy_from(&v0_adj);
    w_inv.view_mut((n, n), (1, n)).copy_from(&v0_adj);

    for j in 1..n {
        let v = &fourier_vectors[j];
        let v_adj = v.adjoint();
        let kj = difference_eigenvalues[j];
        let [l1, l2] = lambdas[j];
        let gap = l1 - l2;
        for (k, col) in [(1usize, j), (2, n + j)] {
            let lk = lambdas[j][k - 1];
            w.view_mut((0, col), (n, 1)).copy_from(&(v * kj));
            w.view_mut((n, col), (n, 1)).copy_from(&(v * lk));

            // Row u_{j,k}^* of the inverse.
            let sign = if k == 1 { -1.0 } else { 1.0 };
            let other = lambdas[j][2 - k];
            let top = other * sign / (kj * gap);
            let bottom = Complex64::new(sign, 0.0) / (-gap);
            w_inv.view_mut((col, 0), (1, n)).copy_from(&(&v_adj * top));
            w_inv.view_mut((col, n), (1, n)).copy_from(&(&v_adj * bottom));
        }
    }

    Ok(SpectralData {
        params: *params,
        omega: root_of_unity(1, n),
        mu,
        difference_eigenvalues,
        fourier_vectors,
        lambdas,
        w,
        w_inv,
        eigenvectors_valid: degenerate_modes.is_empty(),
        degenerate_modes,
        drift_matrix: drift_matrix(params),
    })
}

impl SpectralData {
    pub fn n_agents(&self) -> usize {
        self.params.n_agents
    }

    /// Diagonal of `Lambda` in the column order of `w`.
    pub fn eigenvalue_diagonal(&self) -> Vec<Complex64> {
        let first = self.lambdas.iter().map(|l| l[0]);
        let second = self.lambdas.iter().map(|l| l[1]);
        first.chain(second).collect()
    }

    pub fn is_degenerate(&self) -> bool {
        !self.degenerate_modes.is_empty()
    }

    /// Smallest `|lambda_{j,1} - lambda_{j,2}|` over `j >= 1`; conditioning diagnostic for `w`.
    pub fn min_eigenvalue_gap(&self) -> f64 {
        self.lambdas[1..]
            .iter()
            .map(|[a, b]| (a - b).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Slowest decay rate `min_{j >= 1, k} |Re lambda_{j,k}|`.
    pub fn spectral_gap(&self) -> f64 {
        self.lambdas[1..]
            .iter()
            .flat_map(|pair| pair.iter().map(|l| -l.re))
            .fold(f64::INFINITY, f64::min)
    }

    /// `max |B W - W Lambda|`.
    pub fn eigen_residual(&self) -> f64 {
        let b = self.drift_matrix.map(|x| Complex64::new(x, 0.0));
        let mut w_lambda = self.w.clone();
        for (col, l) in self.eigenvalue_diagonal().into_iter().enumerate() {
            let scaled = w_lambda.column(col) * l;
            w_lambda.column_mut(col).copy_from(&scaled);
        }
        (b * &self.w - w_lambda).iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
    }

    /// `max |W W^{-1} - I|`.
    pub fn inverse_residual(&self) -> f64 {
        let dim = self.w.nrows();
        let prod = &self.w * &self.w_inv;
        let mut worst = 0.0_f64;
        for i in 0..dim {
            for k in 0..dim {
                let target = if i == k { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, k)] - target).norm());
            }
        }
        worst
    }

    /// Per-mode damping labels.
    pub fn classify_damping(&self) -> Vec<DampingMode> {
        let (alpha, beta) = (self.params.alpha, self.params.beta);
        self.mu
            .iter()
            .enumerate()
            .map(|(j, &mu)| {
                if j == 0 {
                    DampingMode::Zero
                } else if is_degenerate(mu, alpha, beta) {
                    DampingMode::Critical
                } else if beta * beta * mu < 4.0 * alpha * alpha {
                    DampingMode::Underdamped
                } else {
                    DampingMode::Overdamped
                }
            })
            .collect()
    }

    /// `exp(t B)`, from the eigendecomposition when it exists and from a dense
    /// exponential otherwise.
    pub fn expm_tb(&self, t: f64) -> Result<DMatrix<f64>> {
        let dim = 2 * self.n_agents();
        if t == 0.0 {
            return Ok(DMatrix::identity(dim, dim));
        }
        if !self.eigenvectors_valid {
            return Ok(linalg::expm(&(&self.drift_matrix * t)));
        }
        let mut scaled = self.w.clone();
        for (col, l) in self.eigenvalue_diagonal().into_iter().enumerate() {
            let factor = (l * t).exp();
            let c = scaled.column(col) * factor;
            scaled.column_mut(col).copy_from(&c);
        }
        linalg::checked_real(&(scaled * &self.w_inv), IMAGINARY_TOLERANCE)
    }
}

/// Free-function form of [`SpectralData::classify_damping`].
pub fn classify_damping(data: &SpectralData) -> Vec<DampingMode> {
    data.classify_damping()
}
