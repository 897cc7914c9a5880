//! Stochastic port-Hamiltonian agents on a ring.
//!
//! `N` agents move on a ring of length `L`; neighbours interact through the
//! potential `U(x) = (alpha |x|)^kappa / kappa`, velocities are coupled by the
//! discrete Laplacian with strength `beta`, and every agent receives independent
//! white noise of intensity `sigma`. For `kappa = 2` the relative state is an
//! Ornstein-Uhlenbeck process whose moments are available in closed form.
//!
//! - [`model`]: parameters, state, drift, Hamiltonian and structural matrices.
//! - [`spectral`]: Fourier diagonalisation of the linear drift.
//! - [`analytic`]: mean, covariance, limit law and the `K` matrix.
//! - [`sde`]: the semi-implicit Euler-Maruyama scheme.
//! - [`stats`]: ensemble observables, ACF, Monte-Carlo reference laws, KS.

pub mod analytic;
pub mod error;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod sde;
pub mod spectral;
pub mod stats;

pub use analytic::{
    expected_stationary_variances, k_closed_form, k_spectral, limit_distribution, lyapunov_residual, moments_x,
    moments_z, GaussianMoments, KMatrix, MomentTime,
};
pub use error::{Error, Result};
pub use model::{ModelParams, State};
pub use rng::NormalStream;
pub use sde::{simulate, Checkpoint, SimConfig, Simulation, Trajectory};
pub use spectral::{analyze, SpectralData};
pub use stats::{acf, ks_two_sample, mc_chi_squared, observables, StatSeries};
