//! Semi-implicit Euler-Maruyama integration.
//!
//! One step updates the velocities explicitly from the current state,
//!
//! ```text
//! p_n' = p_n + [U'(Q_n) - U'(Q_{n-1})] dt + beta [p_{n+1} - 2 p_n + p_{n-1}] dt + sigma xi_n sqrt(dt)
//! ```
//!
//! and then moves the agents with the new velocities, `q_n' = q_n + dt p_n'`.
//! The noise `xi_n(k)` for step `k` is read from a [`NormalStream`] at `(k, n)`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{distances_into, potential_derivative, ModelParams, State};
use crate::rng::NormalStream;

pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub n_steps: u64,
    pub seed: u64,
    /// Record every `thinning`-th step.
    pub thinning: u64,
    /// Replica index; selects an independent noise stream for the same seed.
    #[serde(default)]
    pub replica: u32,
    /// Initial state; `None` is the uniform configuration at rest.
    #[serde(default)]
    pub initial: Option<State>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            n_steps: 1,
            seed: 0,
            thinning: 1,
            replica: 0,
            initial: None,
        }
    }
}

impl SimConfig {
    pub fn new(dt: f64, n_steps: u64, seed: u64) -> Self {
        Self {
            dt,
            n_steps,
            seed,
            ..Self::default()
        }
    }

    pub fn with_thinning(mut self, thinning: u64) -> Self {
        self.thinning = thinning;
        self
    }

    pub fn with_replica(mut self, replica: u32) -> Self {
        self.replica = replica;
        self
    }

    pub fn with_initial(mut self, initial: State) -> Self {
        self.initial = Some(initial);
        self
    }

    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("dt", format!("must be finite and > 0, got {}", self.dt)));
        }
        if self.n_steps < 1 {
            return Err(invalid("n_steps", "must be >= 1"));
        }
        if self.thinning < 1 {
            return Err(invalid("thinning", "must be >= 1"));
        }
        if let Some(state) = &self.initial {
            if state.len() != params.n_agents || state.p.len() != params.n_agents {
                return Err(Error::DimensionMismatch {
                    expected: params.n_agents,
                    got: state.len(),
                });
            }
            if !state.is_finite() {
                return Err(invalid("initial", "initial state must be finite"));
            }
        }
        Ok(())
    }

    pub fn initial_state(&self, params: &ModelParams) -> State {
        self.initial.clone().unwrap_or_else(|| State::uniform(params, 0.0))
    }

    pub fn noise(&self) -> NormalStream {
        NormalStream::new(self.seed, self.replica)
    }

    pub fn final_time(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }
}

/// Reusable stepper with scratch buffers.
#[derive(Debug, Clone)]
pub struct Integrator {
    params: ModelParams,
    dt: f64,
    noise_scale: f64,
    distances: Vec<f64>,
    forces: Vec<f64>,
    velocity: Vec<f64>,
}

impl Integrator {
    pub fn new(params: &ModelParams, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", format!("must be finite and > 0, got {dt}")));
        }
        let n = params.n_agents;
        Ok(Self {
            params: *params,
            dt,
            noise_scale: params.sigma * dt.sqrt(),
            distances: vec![0.0; n],
            forces: vec![0.0; n],
            velocity: vec![0.0; n],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `state` by one step in place. `noise` holds one standard normal per agent.
    /// Returns `false` if the new state is not finite.
    pub fn step_in_place(&mut self, state: &mut State, noise: &[f64]) -> bool {
        let n = self.params.n_agents;
        assert_eq!(noise.len(), n, "one noise draw per agent");
        assert_eq!(state.len(), n, "state size must match the parameters");

        distances_into(&state.q, self.params.ring_length, &mut self.distances);
        if self.params.is_quadratic() {
            let a2 = self.params.alpha * self.params.alpha;
            for (f, d) in self.forces.iter_mut().zip(&self.distances) {
                *f = a2 * d;
            }
        } else {
            for (f, &d) in self.forces.iter_mut().zip(&self.distances) {
                *f = potential_derivative(d, &self.params);
            }
        }

        let (beta, dt) = (self.params.beta, self.dt);
        let p = &state.p;
        for i in 0..n {
            let next = if i + 1 == n { 0 } else { i + 1 };
            let prev = if i == 0 { n - 1 } else { i - 1 };
            let accel = self.forces[i] - self.forces[prev] + beta * (p[next] - 2.0 * p[i] + p[prev]);
            self.velocity[i] = p[i] + accel * dt + self.noise_scale * noise[i];
        }
        state.p.copy_from_slice(&self.velocity);

        let mut check = 0.0;
        for (q, v) in state.q.iter_mut().zip(&state.p) {
            *q += dt * v;
            check += *q + v;
        }
        check.is_finite()
    }
}

/// One step of the scheme; `noise` holds one standard normal per agent.
pub fn step(state: &State, params: &ModelParams, dt: f64, noise: &[f64]) -> Result<State> {
    if noise.len() != params.n_agents {
        return Err(Error::DimensionMismatch {
            expected: params.n_agents,
            got: noise.len(),
        });
    }
    if state.len() != params.n_agents || state.p.len() != params.n_agents {
        return Err(Error::DimensionMismatch {
            expected: params.n_agents,
            got: state.len(),
        });
    }
    let mut integrator = Integrator::new(params, dt)?;
    let mut next = state.clone();
    if integrator.step_in_place(&mut next, noise) {
        Ok(next)
    } else {
        Err(Error::NonFiniteState { step: 0 })
    }
}

/// A running simulation that can be advanced, observed and checkpointed.
#[derive(Debug, Clone)]
pub struct Simulation {
    params: ModelParams,
    config: SimConfig,
    integrator: Integrator,
    noise: NormalStream,
    noise_buf: Vec<f64>,
    state: State,
    step: u64,
}

impl Simulation {
    pub fn new(params: &ModelParams, config: &SimConfig) -> Result<Self> {
        params.validate()?;
        config.validate(params)?;
        Ok(Self {
            params: *params,
            integrator: Integrator::new(params, config.dt)?,
            noise: config.noise(),
            noise_buf: vec![0.0; params.n_agents],
            state: config.initial_state(params),
            config: config.clone(),
            step: 0,
        })
    }

    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self> {
        let mut sim = Self::new(&checkpoint.params, &checkpoint.config)?;
        if checkpoint.state.len() != checkpoint.params.n_agents {
            return Err(Error::Checkpoint("state size does not match n_agents".into()));
        }
        sim.state = checkpoint.state.clone();
        sim.step = checkpoint.step;
        Ok(sim)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.dt
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.n_steps
    }

    /// Advances one step using the noise addressed by the current step index.
    pub fn advance(&mut self) -> Result<()> {
        self.noise.fill(self.step, &mut self.noise_buf);
        let ok = self.integrator.step_in_place(&mut self.state, &self.noise_buf);
        self.step += 1;
        if ok {
            Ok(())
        } else {
            Err(Error::NonFiniteState { step: self.step })
        }
    }

    /// Runs to the configured step count, calling `observer(step, t, state)` after every step.
    pub fn run_observed<F>(&mut self, mut observer: F) -> Result<()>
    where
        F: FnMut(u64, f64, &State),
    {
        while !self.is_finished() {
            self.advance()?;
            observer(self.step, self.time(), &self.state);
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params,
            config: SimConfig {
                initial: None,
                ..self.config.clone()
            },
            step: self.step,
            state: self.state.clone(),
        }
    }
}

/// Thinned record of a simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub params: ModelParams,
    pub config: SimConfig,
}

pub fn simulate(params: &ModelParams, config: &SimConfig) -> Result<Trajectory> {
    simulate_observed(params, config, |_, _, _| {})
}

/// Like [`simulate`], additionally calling `observer` at every step (full resolution).
pub fn simulate_observed<F>(params: &ModelParams, config: &SimConfig, mut observer: F) -> Result<Trajectory>
where
    F: FnMut(u64, f64, &State),
{
    let mut sim = Simulation::new(params, config)?;
    let capacity = (config.n_steps / config.thinning + 1).min(1 << 20) as usize;
    let mut times = Vec::with_capacity(capacity);
    let mut states = Vec::with_capacity(capacity);
    times.push(0.0);
    states.push(sim.state().clone());
    observer(0, 0.0, sim.state());
    let thinning = config.thinning;
    sim.run_observed(|step, t, state| {
        observer(step, t, state);
        if step % thinning == 0 {
            times.push(t);
            states.push(state.clone());
        }
    })?;
    Ok(Trajectory {
        times,
        states,
        params: *params,
        config: config.clone(),
    })
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// CSV with a `# seed=...` comment row and header `t,q_1..q_N,p_1..p_N`.
    /// With `wrapped`, positions are folded into `[0, L)`.
    pub fn write_csv<W: Write>(&self, mut out: W, wrapped: bool) -> Result<()> {
        let n = self.params.n_agents;
        writeln!(out, "# seed={} replica={} dt={}", self.config.seed, self.config.replica, self.config.dt)?;
        let mut header = String::from("t");
        for i in 1..=n {
            header.push_str(&format!(",q_{i}"));
        }
        for i in 1..=n {
            header.push_str(&format!(",p_{i}"));
        }
        writeln!(out, "{header}")?;
        let mut line = String::new();
        for (t, state) in self.times.iter().zip(&self.states) {
            line.clear();
            line.push_str(&t.to_string());
            let positions = if wrapped {
                state.wrapped_positions(self.params.ring_length)
            } else {
                state.q.clone()
            };
            for x in positions.iter().chain(&state.p) {
                line.push(',');
                line.push_str(&x.to_string());
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>, wrapped: bool) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(file, wrapped)
    }
}

/// Snapshot from which a run resumes with the identical noise sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub config: SimConfig,
    pub step: u64,
    pub state: State,
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"RPHSCKP1";

impl Checkpoint {
    /// Little-endian binary layout: magic, N, L, alpha, beta, sigma, kappa,
    /// dt, n_steps, seed, thinning, replica, step, q[N], p[N].
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&(self.params.n_agents as u64).to_le_bytes())?;
        for x in [
            self.params.ring_length,
            self.params.alpha,
            self.params.beta,
            self.params.sigma,
            self.params.kappa,
            self.config.dt,
        ] {
            out.write_all(&x.to_le_bytes())?;
        }
        for x in [self.config.n_steps, self.config.seed, self.config.thinning] {
            out.write_all(&x.to_le_bytes())?;
        }
        out.write_all(&self.config.replica.to_le_bytes())?;
        out.write_all(&self.step.to_le_bytes())?;
        for x in self.state.q.iter().chain(&self.state.p) {
            out.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let mut b8 = [0u8; 8];
        let mut next_u64 = |input: &mut R| -> Result<u64> {
            input.read_exact(&mut b8)?;
            Ok(u64::from_le_bytes(b8))
        };
        let n = next_u64(&mut input)? as usize;
        if n < 3 || n > (1 << 24) {
            return Err(Error::Checkpoint(format!("implausible agent count {n}")));
        }
        let mut f = [0.0; 6];
        for x in f.iter_mut() {
            *x = f64::from_bits(next_u64(&mut input)?);
        }
        let n_steps = next_u64(&mut input)?;
        let seed = next_u64(&mut input)?;
        let thinning = next_u64(&mut input)?;
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b4)?;
        let replica = u32::from_le_bytes(b4);
        let step = next_u64(&mut input)?;
        let mut values = vec![0.0; 2 * n];
        for x in values.iter_mut() {
            *x = f64::from_bits(next_u64(&mut input)?);
        }
        let p = values.split_off(n);
        let params = ModelParams::new(n, f[0], f[1], f[2], f[3], f[4])?;
        let config = SimConfig {
            dt: f[5],
            n_steps,
            seed,
            thinning,
            replica,
            initial: None,
        };
        config.validate(&params)?;
        Ok(Self {
            params,
            config,
            step,
            state: State::new(values, p)?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut file)?;
        file.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::hamiltonian;
    use approx::assert_abs_diff_eq;

    fn s2() -> ModelParams {
        ModelParams::quadratic(20, 501.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn noiseless_uniform_state_only_translates() {
        let p = s2().with_sigma(0.0);
        let state = State::uniform(&p, 0.7);
        let next = step(&state, &p, 1e-3, &[0.3; 20]).unwrap();
        for i in 0..20 {
            assert_abs_diff_eq!(next.p[i], 0.7, epsilon = 1e-12);
            assert_abs_diff_eq!(next.q[i], state.q[i] + 0.7e-3, epsilon = 1e-12);
        }
    }

    #[test]
    fn uniform_state_velocity_update_is_pure_noise() {
        let p = s2();
        let state = State::uniform(&p, 0.0);
        let noise: Vec<f64> = (0..20).map(|i| (i as f64 - 9.5) / 7.0).collect();
        let dt = 1e-3;
        let next = step(&state, &p, dt, &noise).unwrap();
        for i in 0..20 {
            assert_abs_diff_eq!(next.p[i], dt.sqrt() * noise[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn rejects_wrong_noise_length() {
        let p = s2();
        assert!(matches!(
            step(&State::uniform(&p, 0.0), &p, 1e-3, &[0.0; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn blow_up_reports_step() {
        let p = ModelParams::new(5, 5.0, 3.0, 1.0, 1.0, 8.0).unwrap();
        let initial = State::new(vec![0.0, 4.0, 4.5, 4.6, 4.7], vec![0.0; 5]).unwrap();
        let config = SimConfig::new(0.5, 200, 1).with_initial(initial);
        match simulate(&p, &config) {
            Err(Error::NonFiniteState { step }) => assert!(step >= 1 && step <= 200),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let p = s2();
        assert!(SimConfig::new(0.0, 10, 0).validate(&p).is_err());
        assert!(SimConfig::new(1e-3, 0, 0).validate(&p).is_err());
        assert!(SimConfig::new(1e-3, 10, 0).with_thinning(0).validate(&p).is_err());
        let bad = State::uniform(&ModelParams::quadratic(5, 5.0, 1.0, 1.0, 1.0).unwrap(), 0.0);
        assert!(SimConfig::new(1e-3, 10, 0).with_initial(bad).validate(&p).is_err());
    }

    #[test]
    fn thinning_records_expected_times() {
        let config = SimConfig::new(1e-2, 100, 5).with_thinning(25);
        let traj = simulate(&s2(), &config).unwrap();
        assert_eq!(traj.len(), 5);
        assert_abs_diff_eq!(traj.times[4], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn thinning_does_not_change_the_path() {
        let full = simulate(&s2(), &SimConfig::new(1e-3, 400, 11)).unwrap();
        let thin = simulate(&s2(), &SimConfig::new(1e-3, 400, 11).with_thinning(100)).unwrap();
        assert_eq!(full.states[400], thin.states[4]);
        assert_eq!(full.states[200], thin.states[2]);
    }

    #[test]
    fn checkpoint_restart_is_bit_identical() {
        let params = ModelParams::new(6, 12.0, 1.0, 0.5, 1.0, 4.0).unwrap();
        let config = SimConfig::new(1e-3, 1000, 77);
        let reference = simulate(&params, &config).unwrap();

        let mut sim = Simulation::new(&params, &config).unwrap();
        for _ in 0..400 {
            sim.advance().unwrap();
        }
        let mut bytes = Vec::new();
        sim.checkpoint().write_to(&mut bytes).unwrap();
        let restored = Checkpoint::read_from(bytes.as_slice()).unwrap();
        assert_eq!(restored, sim.checkpoint());
        let mut resumed = Simulation::from_checkpoint(&restored).unwrap();
        resumed.run_observed(|_, _, _| {}).unwrap();
        assert_eq!(resumed.state(), reference.last());
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        assert!(Checkpoint::read_from(&b"NOTACKPT........"[..]).is_err());
        assert!(Checkpoint::read_from(&b"RPHS"[..]).is_err());
    }

    #[test]
    fn csv_layout() {
        let p = ModelParams::quadratic(3, 9.0, 1.0, 1.0, 1.0).unwrap();
        let traj = simulate(&p, &SimConfig::new(1e-2, 4, 3).with_thinning(2)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# seed=3"));
        assert_eq!(lines[1], "t,q_1,q_2,q_3,p_1,p_2,p_3");
        assert_eq!(lines.len(), 2 + 3);
        assert!(lines[2].starts_with("0,0,3,6,0,0,0"));
    }

    #[test]
    fn noiseless_energy_decreases() {
        let p = s2().with_sigma(0.0);
        let mut initial = State::uniform(&p, 0.0);
        initial.p[3] = 0.5;
        initial.q[7] += 0.4;
        let traj = simulate(&p, &SimConfig::new(1e-3, 5000, 0).with_initial(initial).with_thinning(10)).unwrap();
        let energies: Vec<f64> = traj.states.iter().map(|s| hamiltonian(s, &p)).collect();
        assert!(energies.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }
}
