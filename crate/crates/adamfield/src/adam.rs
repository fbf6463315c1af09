//! The Adam recursion with bias correction, and reproducible trajectory runs.
//!
//! One step from state `(n, θ, m, v)` with innovation sample `x` and step size
//! `γ` is
//!
//! ```text
//! m' = α m + (1-α) x
//! v' = β v + (1-β) x²           (componentwise)
//! σ' = 1 / (sqrt(v' / (1-β^{n+1})) + ε)
//! θ' = θ + γ σ' m'
//! ```
//!
//! The step adds `γ σ m`; minimization therefore expects a negative-gradient
//! type innovation. ε sits outside the square root, matching the recursion
//! this crate analyses everywhere else; an `epsilon_inside` toggle exists for
//! comparison runs but defaults off.

use crate::error::{AdamFieldError, Result};
use crate::innovation::Innovation;
use crate::rng::{Domain, StreamRng};
use crate::schedule::StepSchedule;
use crate::seq_space::DampingParams;

/// Accept `(α, β, ε)` iff `0 ≤ α < √β < 1` and `ε > 0`, naming the violated
/// inequality otherwise.
pub fn validate_params(alpha: f64, beta: f64, epsilon: f64) -> Result<DampingParams> {
    DampingParams::new(alpha, beta, epsilon)
}

/// Step options: bias correction per the recursion above, and the ε-placement
/// toggle (`1/sqrt(v̂ + ε)` when `epsilon_inside`).
#[derive(Debug, Clone, Copy)]
pub struct StepOptions {
    pub bias_correction: bool,
    pub epsilon_inside: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            bias_correction: true,
            epsilon_inside: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub n: u64,
    pub theta: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    /// Zero state `(θ, m, v) = (θ0, 0, 0)` at step `n0`.
    pub fn start(n0: u64, theta0: Vec<f64>) -> Self {
        let d = theta0.len();
        Self {
            n: n0,
            theta: theta0,
            m: vec![0.0; d],
            v: vec![0.0; d],
        }
    }

    pub fn new(n: u64, theta: Vec<f64>, m: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let d = theta.len();
        if m.len() != d || v.len() != d {
            return Err(AdamFieldError::DimensionMismatch {
                expected: d,
                got: m.len().min(v.len()),
            });
        }
        if v.iter().any(|&vi| vi < 0.0) {
            return Err(AdamFieldError::Precondition(
                "v must be componentwise nonnegative".into(),
            ));
        }
        Ok(Self { n, theta, m, v })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|x| x.is_finite())
            && self.m.iter().all(|x| x.is_finite())
            && self.v.iter().all(|x| x.is_finite())
    }
}

/// Advance the state by one step, writing the realized `σ` into `sigma_out`.
pub fn adam_step(
    state: &mut AdamState,
    x: &[f64],
    params: DampingParams,
    gamma: f64,
    opts: StepOptions,
    sigma_out: &mut [f64],
) {
    debug_assert!(gamma > 0.0);
    debug_assert_eq!(x.len(), state.dim());
    let (a, b, eps) = (params.alpha(), params.beta(), params.epsilon());
    state.n += 1;
    let correction = if opts.bias_correction {
        1.0 - b.powi(state.n as i32)
    } else {
        1.0
    };
    for i in 0..state.theta.len() {
        state.m[i] = a * state.m[i] + (1.0 - a) * x[i];
        state.v[i] = b * state.v[i] + (1.0 - b) * x[i] * x[i];
        let vhat = state.v[i] / correction;
        let sigma = if opts.epsilon_inside {
            1.0 / (vhat + eps).sqrt()
        } else {
            1.0 / (vhat.sqrt() + eps)
        };
        sigma_out[i] = sigma;
        state.theta[i] += gamma * sigma * state.m[i];
    }
}

/// A stepping Adam simulation bound to a seeded innovation stream.
///
/// Draws for step `n` sit at sample index `n` of the `(seed, replica)`
/// trajectory stream, so restarted or replayed runs read identical samples.
pub struct AdamSim {
    pub state: AdamState,
    params: DampingParams,
    schedule: StepSchedule,
    innovation: Innovation,
    opts: StepOptions,
    rng: StreamRng,
    t: f64,
    x: Vec<f64>,
    sigma: Vec<f64>,
}

impl AdamSim {
    pub fn new(
        init: AdamState,
        innovation: Innovation,
        params: DampingParams,
        schedule: StepSchedule,
        seed: u64,
        replica: u64,
        opts: StepOptions,
    ) -> Self {
        let d = init.dim();
        let mut rng = StreamRng::new(seed, Domain::Trajectory, replica, innovation.stride());
        rng.seek(init.n + 1);
        let t = schedule.training_time(init.n);
        Self {
            state: init,
            params,
            schedule,
            innovation,
            opts,
            rng,
            t,
            x: vec![0.0; d],
            sigma: vec![0.0; d],
        }
    }

    /// Execute the next step. Returns `false` when the state stopped being
    /// finite (the step is still recorded in the state).
    pub fn step(&mut self) -> bool {
        let n_next = self.state.n + 1;
        let gamma = self.schedule.gamma(n_next);
        self.innovation
            .sample_x(&mut self.rng, &self.state.theta, &mut self.x);
        adam_step(
            &mut self.state,
            &self.x,
            self.params,
            gamma,
            self.opts,
            &mut self.sigma,
        );
        self.t += gamma;
        self.state.is_finite()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn last_x(&self) -> &[f64] {
        &self.x
    }

    pub fn last_sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn params(&self) -> DampingParams {
        self.params
    }
}

/// Per-step record of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub n: u64,
    pub t: f64,
    pub theta: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub sigma: Vec<f64>,
    pub x: Vec<f64>,
}

/// Time-indexed record of an Adam run, replayable from `(seed, config)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n0: u64,
    pub seed: u64,
    pub replica: u64,
    pub thin: u64,
    pub records: Vec<StepRecord>,
    pub final_state: AdamState,
    /// Step index at which a non-finite state appeared, if any.
    pub divergence: Option<u64>,
}

impl Trajectory {
    pub fn is_valid(&self) -> bool {
        self.divergence.is_none()
    }
}

/// Run configuration for [`run_adam`].
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: DampingParams,
    pub schedule: StepSchedule,
    pub innovation: Innovation,
    pub seed: u64,
    pub replica: u64,
    pub init: AdamState,
    pub n_steps: u64,
    /// Record every `thin`-th step (the final step is always recorded).
    pub thin: u64,
    pub opts: StepOptions,
}

/// Iterate the recursion for `n_steps` fresh i.i.d. draws, recording per the
/// thinning stride. Deterministic given `(seed, config)`; a non-finite state
/// aborts the run and marks the trajectory invalid.
pub fn run_adam(cfg: &RunConfig) -> Result<Trajectory> {
    if cfg.n_steps == 0 {
        return Err(AdamFieldError::Precondition(
            "n_steps must be at least 1".into(),
        ));
    }
    if cfg.schedule.max_index() < cfg.init.n + cfg.n_steps {
        return Err(AdamFieldError::Precondition(
            "schedule too short for the requested horizon".into(),
        ));
    }
    let thin = cfg.thin.max(1);
    let n0 = cfg.init.n;
    let mut sim = AdamSim::new(
        cfg.init.clone(),
        cfg.innovation.clone(),
        cfg.params,
        cfg.schedule.clone(),
        cfg.seed,
        cfg.replica,
        cfg.opts,
    );
    let mut records = Vec::new();
    let mut divergence = None;
    for k in 1..=cfg.n_steps {
        let finite = sim.step();
        if !finite {
            divergence = Some(sim.state.n);
            records.push(snapshot(&sim));
            break;
        }
        if k % thin == 0 || k == cfg.n_steps {
            records.push(snapshot(&sim));
        }
    }
    Ok(Trajectory {
        n0,
        seed: cfg.seed,
        replica: cfg.replica,
        thin,
        records,
        final_state: sim.state.clone(),
        divergence,
    })
}

fn snapshot(sim: &AdamSim) -> StepRecord {
    StepRecord {
        n: sim.state.n,
        t: sim.t(),
        theta: sim.state.theta.clone(),
        m: sim.state.m.clone(),
        v: sim.state.v.clone(),
        sigma: sim.last_sigma().to_vec(),
        x: sim.last_x().to_vec(),
    }
}
