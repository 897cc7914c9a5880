//! Agents on a ring with nearest-neighbour interaction.
//!
//! Agent `n` follows agent `n + 1` (indices mod N). The distance to the agent
//! ahead is `Q_n = q_{n+1} - q_n`, closing the ring with `Q_N = L + q_1 - q_N`.
//! Velocities relax towards their neighbours through a discrete Laplacian and
//! distances are regulated by the convex potential `U(x) = (alpha |x|)^kappa / kappa`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Scalar parameters of the ring system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_agents: usize,
    pub ring_length: f64,
    /// Interaction stiffness.
    pub alpha: f64,
    /// Dissipation rate.
    pub beta: f64,
    /// Noise volatility.
    pub sigma: f64,
    /// Potential exponent.
    pub kappa: f64,
}

impl ModelParams {
    pub fn new(
        n_agents: usize,
        ring_length: f64,
        alpha: f64,
        beta: f64,
        sigma: f64,
        kappa: f64,
    ) -> Result<Self> {
        let params = Self {
            n_agents,
            ring_length,
            alpha,
            beta,
            sigma,
            kappa,
        };
        params.validate()?;
        Ok(params)
    }

    /// Quadratic-potential parameters (`kappa = 2`).
    pub fn quadratic(n_agents: usize, ring_length: f64, alpha: f64, beta: f64, sigma: f64) -> Result<Self> {
        Self::new(n_agents, ring_length, alpha, beta, sigma, 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 3 {
            return Err(invalid("n_agents", format!("need at least 3 agents, got {}", self.n_agents)));
        }
        let positive = |field, value: f64| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be finite and > 0, got {value}")))
            }
        };
        positive("ring_length", self.ring_length)?;
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(invalid("sigma", format!("must be finite and >= 0, got {}", self.sigma)));
        }
        if !(self.kappa.is_finite() && self.kappa > 1.0) {
            return Err(invalid("kappa", format!("must be finite and > 1, got {}", self.kappa)));
        }
        Ok(())
    }

    pub fn is_quadratic(&self) -> bool {
        self.kappa == 2.0
    }

    pub fn require_quadratic(&self) -> Result<()> {
        if self.is_quadratic() {
            Ok(())
        } else {
            Err(Error::QuadraticOnly { kappa: self.kappa })
        }
    }

    /// Equilibrium spacing `L / N`.
    pub fn mean_distance(&self) -> f64 {
        self.ring_length / self.n_agents as f64
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }
}

/// Positions (unwrapped) and velocities of all agents at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl State {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: q.len(),
                got: p.len(),
            });
        }
        Ok(Self { q, p })
    }

    /// Equidistant agents `q_n = (n - 1) L / N`, all moving with `velocity`.
    pub fn uniform(params: &ModelParams, velocity: f64) -> Self {
        let spacing = params.mean_distance();
        let n = params.n_agents;
        Self {
            q: (0..n).map(|i| i as f64 * spacing).collect(),
            p: vec![velocity; n],
        }
    }

    /// Rebuilds positions from distances: `q_1 = 0` and `q_{n+1} = q_n + Q_n`.
    /// The last distance is implied by the ring length and not read.
    pub fn from_distances(distances: &[f64], velocities: &[f64]) -> Result<Self> {
        if distances.len() != velocities.len() {
            return Err(Error::DimensionMismatch {
                expected: distances.len(),
                got: velocities.len(),
            });
        }
        let mut q = Vec::with_capacity(distances.len());
        let mut pos = 0.0;
        for d in distances {
            q.push(pos);
            pos += d;
        }
        Ok(Self {
            q,
            p: velocities.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn distances(&self, ring_length: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.q.len()];
        distances_into(&self.q, ring_length, &mut out);
        out
    }

    /// Positions folded into `[0, L)` for display.
    pub fn wrapped_positions(&self, ring_length: f64) -> Vec<f64> {
        self.q.iter().map(|x| x.rem_euclid(ring_length)).collect()
    }

    pub fn mean_velocity(&self) -> f64 {
        self.p.iter().sum::<f64>() / self.p.len() as f64
    }

    /// Stacked `(Q, p)` coordinates.
    pub fn to_z(&self, ring_length: f64) -> nalgebra::DVector<f64> {
        let mut z = self.distances(ring_length);
        z.extend_from_slice(&self.p);
        nalgebra::DVector::from_vec(z)
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|x| x.is_finite())
    }
}

pub(crate) fn distances_into(q: &[f64], ring_length: f64, out: &mut [f64]) {
    let n = q.len();
    for i in 0..n - 1 {
        out[i] = q[i + 1] - q[i];
    }
    out[n - 1] = ring_length + q[0] - q[n - 1];
}

pub fn potential(x: f64, params: &ModelParams) -> f64 {
    if params.is_quadratic() {
        0.5 * (params.alpha * x) * (params.alpha * x)
    } else {
        (params.alpha * x.abs()).powf(params.kappa) / params.kappa
    }
}

/// `U'(x) = sgn(x) alpha^kappa |x|^(kappa - 1)`.
pub fn potential_derivative(x: f64, params: &ModelParams) -> f64 {
    if params.is_quadratic() {
        return params.alpha * params.alpha * x;
    }
    if x == 0.0 {
        return 0.0;
    }
    x.signum() * params.alpha.powf(params.kappa) * x.abs().powf(params.kappa - 1.0)
}

/// Deterministic part of the dynamics in `(Q, p)` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Drift {
    /// `dQ_n = p_{n+1} - p_n`. The drift of the positions `q` is `p` itself.
    pub distance: Vec<f64>,
    pub velocity: Vec<f64>,
}

pub fn drift(state: &State, params: &ModelParams) -> Drift {
    let n = state.len();
    let q_dist = state.distances(params.ring_length);
    let force: Vec<f64> = q_dist.iter().map(|&x| potential_derivative(x, params)).collect();
    let p = &state.p;
    let mut distance = vec![0.0; n];
    let mut velocity = vec![0.0; n];
    for i in 0..n {
        let next = (i + 1) % n;
        let prev = (i + n - 1) % n;
        distance[i] = p[next] - p[i];
        velocity[i] = force[i] - force[prev] + params.beta * (p[next] - 2.0 * p[i] + p[prev]);
    }
    Drift { distance, velocity }
}

/// `H = |p|^2 / 2 + sum_n U(Q_n)`.
pub fn hamiltonian(state: &State, params: &ModelParams) -> f64 {
    let kinetic = 0.5 * state.p.iter().map(|v| v * v).sum::<f64>();
    let potential_energy: f64 = state
        .distances(params.ring_length)
        .iter()
        .map(|&x| potential(x, params))
        .sum();
    kinetic + potential_energy
}

/// `grad H = (U'(Q), p)`.
pub fn hamiltonian_gradient(state: &State, params: &ModelParams) -> nalgebra::DVector<f64> {
    let mut g: Vec<f64> = state
        .distances(params.ring_length)
        .iter()
        .map(|&x| potential_derivative(x, params))
        .collect();
    g.extend_from_slice(&state.p);
    nalgebra::DVector::from_vec(g)
}

/// Constant matrices of the port-Hamiltonian form `dZ = (J - R) grad H dt + G dW`
/// and of its linear (quadratic potential) specialisation `dZ = B Z dt + G dW`.
#[derive(Debug, Clone)]
pub struct StructuralMatrices {
    /// Circulant forward difference: `-1` on the diagonal, `+1` above it and in the bottom-left corner.
    pub a: DMatrix<f64>,
    /// Centering projector `I - 11^T / N`.
    pub m: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

pub fn difference_matrix(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, k| {
        if i == k {
            -1.0
        } else if k == (i + 1) % n {
            1.0
        } else {
            0.0
        }
    })
}

pub fn centering_matrix(n: usize) -> DMatrix<f64> {
    let inv = 1.0 / n as f64;
    DMatrix::from_fn(n, n, |i, k| if i == k { 1.0 - inv } else { -inv })
}

/// `B = [[0, A], [-alpha^2 A^T, -beta A^T A]]`.
pub fn drift_matrix(params: &ModelParams) -> DMatrix<f64> {
    let n = params.n_agents;
    let a = difference_matrix(n);
    let ata = a.transpose() * &a;
    let mut b = DMatrix::zeros(2 * n, 2 * n);
    b.view_mut((0, n), (n, n)).copy_from(&a);
    b.view_mut((n, 0), (n, n)).copy_from(&(a.transpose() * -(params.alpha * params.alpha)));
    b.view_mut((n, n), (n, n)).copy_from(&(ata * -params.beta));
    b
}

pub fn build_matrices(params: &ModelParams) -> Result<StructuralMatrices> {
    params.validate()?;
    let n = params.n_agents;
    let a = difference_matrix(n);
    let at = a.transpose();
    let ata = &at * &a;

    let mut j = DMatrix::zeros(2 * n, 2 * n);
    j.view_mut((0, n), (n, n)).copy_from(&a);
    j.view_mut((n, 0), (n, n)).copy_from(&(-&at));

    let mut r = DMatrix::zeros(2 * n, 2 * n);
    r.view_mut((n, n), (n, n)).copy_from(&(ata * params.beta));

    let mut g = DMatrix::zeros(2 * n, n);
    g.view_mut((n, 0), (n, n)).fill_with_identity();
    g *= params.sigma;

    Ok(StructuralMatrices {
        m: centering_matrix(n),
        b: drift_matrix(params),
        a,
        j,
        r,
        g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(n: usize, alpha: f64, beta: f64, kappa: f64) -> ModelParams {
        ModelParams::new(n, 30.0, alpha, beta, 0.0, kappa).unwrap()
    }

    #[test]
    fn validation_rejects_out_of_range() {
        assert!(ModelParams::new(2, 1.0, 1.0, 1.0, 1.0, 2.0).is_err());
        assert!(ModelParams::new(3, 0.0, 1.0, 1.0, 1.0, 2.0).is_err());
        assert!(ModelParams::new(3, 1.0, -1.0, 1.0, 1.0, 2.0).is_err());
        assert!(ModelParams::new(3, 1.0, 1.0, 0.0, 1.0, 2.0).is_err());
        assert!(ModelParams::new(3, 1.0, 1.0, 1.0, -0.1, 2.0).is_err());
        assert!(ModelParams::new(3, 1.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(3, 1.0, 1.0, 1.0, 0.0, 1.5).is_ok());
    }

    #[test]
    fn difference_matrix_n3() {
        let a = difference_matrix(3);
        let expected = DMatrix::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 0.0, -1.0, 1.0, 1.0, 0.0, -1.0]);
        assert_eq!(a, expected);
        let ata = a.transpose() * &a;
        let expected_ata =
            DMatrix::from_row_slice(3, 3, &[2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0]);
        assert_eq!(ata, expected_ata);
    }

    #[test]
    fn structural_invariants() {
        for n in 3..12 {
            let p = params(n, 0.7, 1.3, 2.0).with_sigma(0.4);
            let s = build_matrices(&p).unwrap();
            let ones = nalgebra::DVector::from_element(n, 1.0);
            assert_eq!((&s.a * &ones).amax(), 0.0);
            assert_eq!((s.a.transpose() * &ones).amax(), 0.0);
            assert_eq!(s.j, -s.j.transpose());
            assert_eq!(s.r, s.r.transpose());
            assert!(s.r.symmetric_eigenvalues().min() > -1e-12);
            assert_abs_diff_eq!((&s.m * &ones).amax(), 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!((&s.m * &s.m - &s.m).amax(), 0.0, epsilon = 1e-15);
            // B = J - R with the alpha^2 absorbed into the gradient of H.
            let mut jr = &s.j - &s.r;
            jr.view_mut((n, 0), (n, n)).scale_mut(p.alpha * p.alpha);
            assert_eq!(jr, s.b);
            assert_eq!(s.g.view((n, 0), (n, n)).clone_owned(), DMatrix::identity(n, n) * 0.4);
        }
    }

    #[test]
    fn potential_derivative_values() {
        let p2 = params(3, 1.0, 1.0, 2.0);
        let p4 = params(3, 1.0, 1.0, 4.0);
        assert_eq!(potential_derivative(0.0, &p2), 0.0);
        assert_eq!(potential_derivative(0.0, &params(3, 2.0, 1.0, 1.5)), 0.0);
        assert_eq!(potential_derivative(2.0, &p2), 2.0);
        assert_abs_diff_eq!(potential_derivative(-2.0, &p4), -8.0, epsilon = 1e-12);
        assert_abs_diff_eq!(potential(-2.0, &p4), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn drift_vanishes_at_uniform_state() {
        for kappa in [2.0, 3.0, 4.0] {
            let p = params(7, 0.8, 1.1, kappa);
            let d = drift(&State::uniform(&p, 2.5), &p);
            assert!(d.velocity.iter().all(|v| v.abs() < 1e-12));
            assert!(d.distance.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn drift_laplacian_hand_value() {
        let p = ModelParams::new(3, 3.0, 1.0, 1.0, 0.0, 2.0).unwrap();
        let state = State::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 0.0]).unwrap();
        let d = drift(&state, &p);
        for (got, want) in d.velocity.iter().zip([-2.0, 1.0, 1.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-14);
        }
    }

    #[test]
    fn hamiltonian_hand_value() {
        let p = ModelParams::new(3, 3.0, 1.0, 1.0, 0.0, 2.0).unwrap();
        let state = State::new(vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(hamiltonian(&state, &p), 3.0, epsilon = 1e-14);
        let zero = State::new(vec![0.0; 3], vec![0.0; 3]).unwrap();
        let p0 = ModelParams { ring_length: 1e-300, ..p };
        assert!(hamiltonian(&zero, &p0) < 1e-300);
    }

    #[test]
    fn distances_sum_to_ring_length() {
        let state = State::new(vec![0.3, -4.0, 17.5, 1e3], vec![0.0; 4]).unwrap();
        let sum: f64 = state.distances(12.0).iter().sum();
        assert_abs_diff_eq!(sum, 12.0, epsilon = 1e-9 * 12.0);
    }

    #[test]
    fn from_distances_round_trip() {
        let d = [1.0, 2.0, 3.5, 0.5];
        let s = State::from_distances(&d, &[0.0; 4]).unwrap();
        assert_eq!(s.distances(7.0), d.to_vec());
        assert!(s.wrapped_positions(7.0).iter().all(|x| (0.0..7.0).contains(x)));
    }
}
