//! Independent oracles shared by the integration test targets.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::DMatrix;
use ringphs::linalg::expm;
use ringphs::model::{drift_matrix, ModelParams};

/// `K_lm = (1/N) sum_{j=1}^{N-1} cos(2 pi j (l - m) / N) / (4 sin^2(pi j / N))`.
pub fn k_cosine_sum(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |l, m| {
        let d = l as f64 - m as f64;
        (1..n)
            .map(|j| {
                let s = (PI * j as f64 / n as f64).sin();
                (2.0 * PI * j as f64 * d / n as f64).cos() / (4.0 * s * s)
            })
            .sum::<f64>()
            / n as f64
    })
}

/// Composite trapezoid for `int_0^t E(s) G G^T E(s)^T ds`, propagating `E(s)` by a fixed step exponential.
pub fn trapezoid_covariance(params: &ModelParams, t: f64, h: f64) -> DMatrix<f64> {
    let n = params.n_agents;
    let b = drift_matrix(params);
    let steps = (t / h).round() as usize;
    let h = t / steps as f64;
    let step = expm(&(&b * h));
    let mut g = DMatrix::zeros(2 * n, n);
    g.view_mut((n, 0), (n, n)).fill_with_identity();
    g *= params.sigma;
    let mut x = g;
    let mut acc = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..=steps {
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
        acc += (&x * x.transpose()) * (w * h);
        x = &step * x;
    }
    acc
}
