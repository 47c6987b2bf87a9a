//! The outer training loop: rollout, safe-probability estimate, multiplier
//! update, critic semi-gradient step, actor ascent step with the
//! `1/(1+lambda)` rescale, logging and stopping.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::controller::{update_multiplier, ControllerGains, MultiplierState};
use crate::env::EnvParams;
use crate::error::{CoreError, CoreResult};
use crate::matrix::Matrix;
use crate::net::{GradientAccumulator, NetworkParams};
use crate::rng::{StreamRng, SALT_EVAL, SALT_INIT_ACTOR, SALT_INIT_CRITIC, SALT_TRAIN};
use crate::rollout::{
    estimate_safe_probability, mean_discounted_return, objective_and_surrogate, rescale_gradient,
    rollout_batch, RolloutBatch, StreamKey,
};
use crate::surrogate::SurrogateParams;
use crate::tape::{NetRole, Tape};

pub const ACTOR_TOPOLOGY: [usize; 4] = [3, 64, 64, 1];
pub const CRITIC_TOPOLOGY: [usize; 4] = [4, 64, 64, 1];

/// Everything a single training run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Trajectories per training batch (M).
    pub trajectory_count: usize,
    /// Rollout / constraint horizon (N).
    pub horizon: usize,
    pub gamma: f64,
    /// Chance-constraint violation budget (the constraint is `p_s >= 1 - delta`).
    pub delta_threshold: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gains: ControllerGains,
    pub surrogate: SurrogateParams,
    pub env: EnvParams,
    pub max_iterations: usize,
    /// Stop when the max-abs parameter change of both networks drops below this.
    pub convergence_tol: f64,
    pub master_seed: u64,
    /// Evaluate every this many iterations (1 = every iteration).
    pub eval_interval: usize,
    /// Trajectories per evaluation batch.
    pub eval_trajectory_count: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            trajectory_count: 4096,
            horizon: 40,
            gamma: 0.99,
            delta_threshold: 0.1,
            actor_lr: 3e-4,
            critic_lr: 2e-4,
            gains: ControllerGains::default(),
            surrogate: SurrogateParams::default(),
            env: EnvParams::default(),
            max_iterations: 1500,
            convergence_tol: 1e-6,
            master_seed: 0,
            eval_interval: 1,
            eval_trajectory_count: 4096,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> CoreResult<()> {
        if self.trajectory_count == 0 {
            return Err(CoreError::Config("trajectory_count must be >= 1".into()));
        }
        if self.horizon == 0 {
            return Err(CoreError::Config("horizon must be >= 1".into()));
        }
        if self.eval_interval == 0 {
            return Err(CoreError::Config("eval_interval must be >= 1".into()));
        }
        if self.eval_trajectory_count == 0 {
            return Err(CoreError::Config("eval_trajectory_count must be >= 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(CoreError::Config(alloc::format!(
                "gamma ({}) must be in (0, 1)",
                self.gamma
            )));
        }
        if !(self.delta_threshold > 0.0 && self.delta_threshold < 1.0) {
            return Err(CoreError::Config(alloc::format!(
                "delta_threshold ({}) must be in (0, 1)",
                self.delta_threshold
            )));
        }
        if !(self.actor_lr > 0.0) || !(self.critic_lr > 0.0) {
            return Err(CoreError::Config("learning rates must be > 0".into()));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(CoreError::Config("convergence_tol must be >= 0".into()));
        }
        self.gains.validate()?;
        self.surrogate.validate()?;
        self.env.validate()?;
        Ok(())
    }
}

/// One logged training iteration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub p_s: f64,
    pub objective: f64,
    pub delta: f64,
    pub integrator: f64,
    pub lambda: f64,
    pub critic_loss: f64,
    pub grad_j_norm: f64,
    pub grad_p_norm: f64,
    pub eval_p_s: Option<f64>,
    pub eval_return: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

/// Result of a completed training run.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub actor: NetworkParams,
    pub critic: NetworkParams,
    pub log: TrainLog,
    /// True when the parameter-change stopping rule fired before the cap.
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub enum TrainError {
    InvalidConfig(String),
    /// A loss or gradient went non-finite; the partial log is preserved.
    NumericFailure { iteration: usize, log: TrainLog },
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            TrainError::NumericFailure { iteration, .. } => {
                write!(f, "numeric failure at iteration {iteration}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TrainError {}

/// N-step critic targets, one per trajectory, with `u_N = pi(x_N; theta)`.
/// Targets are plain numbers; no gradient flows through them.
pub fn critic_target(
    batch: &RolloutBatch,
    w: &NetworkParams,
    theta: &NetworkParams,
    gamma: f64,
    params: &EnvParams,
) -> Vec<f64> {
    let m = batch.trajectory_count;
    let n = batch.horizon;
    // batched terminal evaluation
    let terminal = Matrix::from_fn(3, m, |r, c| batch.states[c][n].as_array()[r]);
    let raw = theta.forward(&terminal);
    let mid = params.action_mid();
    let half = params.action_half_range();
    let mut critic_in = Matrix::zeros(4, m);
    for c in 0..m {
        for r in 0..3 {
            critic_in.set(r, c, terminal.get(r, c));
        }
        critic_in.set(3, c, mid + half * libm::tanh(raw.get(0, c)));
    }
    let q = w.forward(&critic_in);
    let mut targets = Vec::with_capacity(m);
    for i in 0..m {
        let mut disc = 1.0;
        let mut sum = 0.0;
        for &r in &batch.rewards[i] {
            sum += disc * r;
            disc *= gamma;
        }
        targets.push(sum + disc * q.get(0, i));
    }
    targets
}

/// One Adam descent step on the critic against detached targets. Returns
/// the pre-update loss `mean(0.5 * (target - Q(x0, u0))^2)`.
pub fn critic_update(
    w: &mut NetworkParams,
    batch: &RolloutBatch,
    targets: &[f64],
    critic_lr: f64,
) -> CoreResult<f64> {
    let m = batch.trajectory_count;
    debug_assert_eq!(targets.len(), m);
    let input = Matrix::from_fn(4, m, |r, c| {
        if r < 3 {
            batch.states[c][0].as_array()[r]
        } else {
            batch.actions[c][0]
        }
    });
    let theta_unused = NetworkParams::zeros(&[1, 1]);
    let mut tape = Tape::new(&theta_unused, Some(w), m);
    let x = tape.leaf(input);
    let mut q = tape.affine(NetRole::Critic, 0, x);
    for l in 1..w.layer_count() {
        q = tape.relu(q);
        q = tape.affine(NetRole::Critic, l, q);
    }
    let q_vals = tape.value(q).row(0).to_vec();
    let mut loss = 0.0;
    let mut seed = Vec::with_capacity(m);
    for i in 0..m {
        let err = targets[i] - q_vals[i];
        loss += 0.5 * err * err;
        // d(loss)/dq = (q - target) / m  (semi-gradient: target detached)
        seed.push((q_vals[i] - targets[i]) / m as f64);
    }
    loss /= m as f64;
    let grads = tape.backward(q, &seed, NetRole::Critic)?;
    w.adam_step(&grads, critic_lr, false)?;
    Ok(loss)
}

/// One Adam ascent step on the actor with the convex-combination gradient
/// `(grad_J + lambda * grad_P) / (1 + lambda)`.
pub fn actor_update(
    theta: &mut NetworkParams,
    grad_j: &GradientAccumulator,
    grad_p_rescaled: &GradientAccumulator,
    lambda: f64,
    actor_lr: f64,
) -> CoreResult<()> {
    let mut combined = grad_j.clone();
    combined.add_scaled(grad_p_rescaled, lambda);
    combined.scale_in_place(1.0 / (1.0 + lambda));
    theta.adam_step(&combined, actor_lr, true)
}

/// Run the full training loop.
pub fn train(config: &TrainConfig) -> Result<TrainOutput, TrainError> {
    config
        .validate()
        .map_err(|e| TrainError::InvalidConfig(alloc::format!("{e}")))?;
    let mut actor = NetworkParams::init(
        &ACTOR_TOPOLOGY,
        &mut StreamRng::derive(&[config.master_seed, SALT_INIT_ACTOR]),
    );
    let mut critic = NetworkParams::init(
        &CRITIC_TOPOLOGY,
        &mut StreamRng::derive(&[config.master_seed, SALT_INIT_CRITIC]),
    );
    let mut log = TrainLog::default();
    let mut multiplier = MultiplierState::default();
    let mut converged = false;

    for iteration in 0..config.max_iterations {
        let prev_actor = actor.clone();
        let prev_critic = critic.clone();
        let step = run_iteration(config, iteration, &mut actor, &mut critic, &multiplier);
        match step {
            Ok((row, new_multiplier)) => {
                multiplier = new_multiplier;
                log.rows.push(row);
            }
            Err(diag) => {
                log.rows.push(diag);
                return Err(TrainError::NumericFailure { iteration, log });
            }
        }
        let actor_change = actor.max_abs_param_diff(&prev_actor);
        let critic_change = critic.max_abs_param_diff(&prev_critic);
        if actor_change <= config.convergence_tol && critic_change <= config.convergence_tol {
            converged = true;
            break;
        }
    }
    Ok(TrainOutput { actor, critic, log, converged })
}

/// One iteration in the published order: rollout, p_s estimate, multiplier
/// update, critic update, actor update. On numeric failure the returned
/// `Err` carries a diagnostic row for the log.
fn run_iteration(
    config: &TrainConfig,
    iteration: usize,
    actor: &mut NetworkParams,
    critic: &mut NetworkParams,
    multiplier: &MultiplierState,
) -> Result<(LogRow, MultiplierState), LogRow> {
    let diag = |p_s: f64| LogRow {
        iteration,
        p_s,
        objective: f64::NAN,
        delta: f64::NAN,
        integrator: f64::NAN,
        lambda: f64::NAN,
        critic_loss: f64::NAN,
        grad_j_norm: f64::NAN,
        grad_p_norm: f64::NAN,
        eval_p_s: None,
        eval_return: None,
    };

    let train_key = StreamKey {
        master_seed: config.master_seed,
        salt: SALT_TRAIN,
        iteration: iteration as u64,
    };
    let batch = rollout_batch(
        actor,
        &config.env,
        config.trajectory_count,
        config.horizon,
        &train_key,
    )
    .map_err(|_| diag(f64::NAN))?;
    let p_s = estimate_safe_probability(&batch).expect("non-empty batch");

    let new_multiplier = update_multiplier(multiplier, p_s, config.delta_threshold, &config.gains)
        .map_err(|_| diag(p_s))?;

    let targets = critic_target(&batch, critic, actor, config.gamma, &config.env);
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(diag(p_s));
    }
    let critic_loss =
        critic_update(critic, &batch, &targets, config.critic_lr).map_err(|_| diag(p_s))?;
    if !critic_loss.is_finite() {
        return Err(diag(p_s));
    }

    let grads = objective_and_surrogate(
        actor,
        critic,
        &batch,
        &config.env,
        config.gamma,
        &config.surrogate,
    )
    .map_err(|_| diag(p_s))?;
    if !grads.objective.is_finite()
        || !grads.grad_objective.is_finite()
        || !grads.grad_surrogate.is_finite()
    {
        return Err(diag(p_s));
    }
    let grad_p = rescale_gradient(&grads.grad_objective, &grads.grad_surrogate);
    actor_update(
        actor,
        &grads.grad_objective,
        &grad_p,
        new_multiplier.lambda,
        config.actor_lr,
    )
    .map_err(|_| diag(p_s))?;

    let (eval_p_s, eval_return) = if (iteration + 1) % config.eval_interval == 0 {
        let eval_key = StreamKey {
            master_seed: config.master_seed,
            salt: SALT_EVAL,
            iteration: iteration as u64,
        };
        let eval_batch = rollout_batch(
            actor,
            &config.env,
            config.eval_trajectory_count,
            config.horizon,
            &eval_key,
        )
        .map_err(|_| diag(p_s))?;
        (
            Some(estimate_safe_probability(&eval_batch).expect("non-empty batch")),
            Some(mean_discounted_return(&eval_batch, config.gamma)),
        )
    } else {
        (None, None)
    };

    Ok((
        LogRow {
            iteration,
            p_s,
            objective: grads.objective,
            delta: new_multiplier.delta,
            integrator: new_multiplier.integrator,
            lambda: new_multiplier.lambda,
            critic_loss,
            grad_j_norm: grads.grad_objective.norm(),
            grad_p_norm: grad_p.norm(),
            eval_p_s,
            eval_return,
        },
        new_multiplier,
    ))
}

/// Initial actor for a seed (the same construction [`train`] uses); the
/// unsafe-seed filter needs it without running a full iteration.
pub fn initial_actor(master_seed: u64) -> NetworkParams {
    NetworkParams::init(
        &ACTOR_TOPOLOGY,
        &mut StreamRng::derive(&[master_seed, SALT_INIT_ACTOR]),
    )
}

/// Evaluation rollout for a policy on the seed's evaluation stream.
pub fn evaluate_policy(
    actor: &NetworkParams,
    config: &TrainConfig,
    iteration: u64,
) -> CoreResult<(f64, f64)> {
    let eval_key = StreamKey {
        master_seed: config.master_seed,
        salt: SALT_EVAL,
        iteration,
    };
    let batch = rollout_batch(
        actor,
        &config.env,
        config.eval_trajectory_count,
        config.horizon,
        &eval_key,
    )?;
    Ok((
        estimate_safe_probability(&batch)?,
        mean_discounted_return(&batch, config.gamma),
    ))
}
