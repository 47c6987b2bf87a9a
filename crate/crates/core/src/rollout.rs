//! Monte-Carlo rollouts through the known model, the safe-probability
//! estimate, and backpropagation through time for the reward objective and
//! the surrogate safety objective.
//!
//! Gradients are always computed under common random numbers: the taped
//! objectives replay the exact initial states and noise draws stored in a
//! [`RolloutBatch`], so both objectives are deterministic functions of the
//! actor parameters and can be checked against finite differences.

use alloc::vec;
use alloc::vec::Vec;

use crate::env::{self, EnvParams, SystemState};
use crate::error::{CoreError, CoreResult};
use crate::matrix::Matrix;
use crate::net::{GradientAccumulator, NetworkParams};
use crate::rng::StreamRng;
use crate::surrogate::SurrogateParams;
use crate::tape::{NetRole, NodeId, Tape};

/// Identifies the random stream family a batch is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StreamKey {
    pub master_seed: u64,
    pub salt: u64,
    pub iteration: u64,
}

impl StreamKey {
    pub fn trajectory_rng(&self, trajectory: u64) -> StreamRng {
        StreamRng::derive(&[self.master_seed, self.salt, self.iteration, trajectory])
    }
}

/// M trajectories of length N with everything needed to replay them.
#[derive(Clone, Debug)]
pub struct RolloutBatch {
    pub trajectory_count: usize,
    pub horizon: usize,
    /// `trajectory_count x (horizon + 1)` states, `states[i][0]` initial.
    pub states: Vec<Vec<SystemState>>,
    /// `trajectory_count x horizon` actions `u_t`, t = 0..N-1.
    pub actions: Vec<Vec<f64>>,
    /// Stage rewards `r(x_t, u_t)`, t = 0..N-1.
    pub rewards: Vec<Vec<f64>>,
    /// Constraint margins `h(x_t)` for t = 1..N.
    pub margins: Vec<Vec<f64>>,
    /// Noise draws `xi_t`, t = 0..N-1.
    pub noises: Vec<Vec<f64>>,
    /// True iff every margin of the trajectory is strictly negative.
    pub trajectory_safe_flags: Vec<bool>,
}

/// Deterministic actor action for one state (squashed into the open
/// action interval).
pub fn actor_forward(
    theta: &NetworkParams,
    state: &SystemState,
    params: &EnvParams,
) -> CoreResult<f64> {
    if !theta.is_finite() {
        return Err(CoreError::NonFinite("actor parameters"));
    }
    let input = Matrix::from_fn(3, 1, |i, _| state.as_array()[i]);
    let raw = theta.forward(&input);
    Ok(squash(raw.get(0, 0), params))
}

/// Critic value for a state-action pair. Unbounded, deterministic.
pub fn critic_forward(
    w: &NetworkParams,
    state: &SystemState,
    action: f64,
) -> CoreResult<f64> {
    if !w.is_finite() {
        return Err(CoreError::NonFinite("critic parameters"));
    }
    let arr = state.as_array();
    let input = Matrix::from_fn(4, 1, |i, _| if i < 3 { arr[i] } else { action });
    Ok(w.forward(&input).get(0, 0))
}

#[inline]
fn squash(raw: f64, params: &EnvParams) -> f64 {
    params.action_mid() + params.action_half_range() * libm::tanh(raw)
}

/// Batched actor evaluation used by the plain rollout path. Shares the
/// kernels (and therefore the exact arithmetic) with the taped path.
fn actor_batch(theta: &NetworkParams, states: &Matrix, params: &EnvParams) -> Matrix {
    let raw = theta.forward(states);
    let mut u = Matrix::zeros(1, raw.cols());
    let mid = params.action_mid();
    let half = params.action_half_range();
    {
        let out = u.row_mut(0);
        let row = raw.row(0);
        for c in 0..row.len() {
            out[c] = mid + half * libm::tanh(row[c]);
        }
    }
    u
}

/// Roll out `trajectory_count` trajectories for `horizon` steps. Trajectory
/// `i` draws its initial state and noises from the sub-stream derived from
/// `(key, i)`, so batches are reproducible and independent of batch layout.
pub fn rollout_batch(
    theta: &NetworkParams,
    params: &EnvParams,
    trajectory_count: usize,
    horizon: usize,
    key: &StreamKey,
) -> CoreResult<RolloutBatch> {
    if trajectory_count == 0 || horizon == 0 {
        return Err(CoreError::Config(alloc::format!(
            "rollout needs trajectory_count >= 1 and horizon >= 1 (got {trajectory_count}, {horizon})"
        )));
    }
    let m = trajectory_count;
    let n = horizon;
    let mut initial = Vec::with_capacity(m);
    let mut noises = Vec::with_capacity(m);
    for i in 0..m {
        let mut rng = key.trajectory_rng(i as u64);
        initial.push(env::sample_initial_state(&mut rng, params)?);
        let mut tr_noise = Vec::with_capacity(n);
        for _ in 0..n {
            tr_noise.push(env::sample_noise(&mut rng, params));
        }
        noises.push(tr_noise);
    }
    rollout_from_draws(theta, params, &initial, &noises)
}

/// Roll out from explicit initial states and noise draws (the common-random-
/// numbers entry point; also used by tests to force specific noise).
pub fn rollout_from_draws(
    theta: &NetworkParams,
    params: &EnvParams,
    initial: &[SystemState],
    noises: &[Vec<f64>],
) -> CoreResult<RolloutBatch> {
    let m = initial.len();
    let n = noises.first().map(Vec::len).unwrap_or(0);
    if m == 0 || n == 0 {
        return Err(CoreError::Config("empty rollout draws".into()));
    }
    if !theta.is_finite() {
        return Err(CoreError::NonFinite("actor parameters"));
    }
    let mut states: Vec<Vec<SystemState>> = initial.iter().map(|s| vec![*s]).collect();
    let mut actions = vec![Vec::with_capacity(n); m];
    let mut rewards = vec![Vec::with_capacity(n); m];
    let mut margins = vec![Vec::with_capacity(n); m];

    let mut current = Matrix::from_fn(3, m, |r, c| initial[c].as_array()[r]);
    for t in 0..n {
        let u = actor_batch(theta, &current, params);
        let mut next = Matrix::zeros(3, m);
        for i in 0..m {
            let s = SystemState::new(current.get(0, i), current.get(1, i), current.get(2, i));
            let a = u.get(0, i);
            actions[i].push(a);
            rewards[i].push(env::reward(&s, a, params));
            let ns = env::step_unchecked(&s, a, noises[i][t], params.time_step);
            if !ns.is_finite() {
                return Err(CoreError::NonFinite("rollout state"));
            }
            margins[i].push(env::constraint_margin(&ns, params));
            states[i].push(ns);
            next.set(0, i, ns.ego_velocity);
            next.set(1, i, ns.front_velocity);
            next.set(2, i, ns.gap);
        }
        current = next;
    }
    let trajectory_safe_flags = margins
        .iter()
        .map(|tr| tr.iter().all(|&h| h < 0.0))
        .collect();
    Ok(RolloutBatch {
        trajectory_count: m,
        horizon: n,
        states,
        actions,
        rewards,
        margins,
        noises: noises.to_vec(),
        trajectory_safe_flags,
    })
}

/// `p_s = (number of safe trajectories) / M`, exact ratio.
pub fn estimate_safe_probability(batch: &RolloutBatch) -> CoreResult<f64> {
    if batch.trajectory_count == 0 {
        return Err(CoreError::Contract("empty batch"));
    }
    let safe = batch.trajectory_safe_flags.iter().filter(|&&f| f).count();
    Ok(safe as f64 / batch.trajectory_count as f64)
}

/// Mean (over trajectories) discounted N-step reward sum, no bootstrap.
/// Used for evaluation curves.
pub fn mean_discounted_return(batch: &RolloutBatch, gamma: f64) -> f64 {
    let mut total = 0.0;
    for tr in &batch.rewards {
        let mut disc = 1.0;
        let mut sum = 0.0;
        for &r in tr {
            sum += disc * r;
            disc *= gamma;
        }
        total += sum;
    }
    total / batch.trajectory_count as f64
}

/// Output of a taped rollout replay: per-batch objective values and the
/// node ids to seed for their gradients.
struct TapedObjectives<'p> {
    tape: Tape<'p>,
    objective_row: Option<NodeId>,
    surrogate_row: Option<NodeId>,
}

/// Rebuild the batch's trajectories differentiably, replaying its stored
/// initial states and noises.
fn build_taped_rollout<'p>(
    theta: &'p NetworkParams,
    critic: Option<&'p NetworkParams>,
    batch: &RolloutBatch,
    params: &EnvParams,
    gamma: f64,
    surrogate: Option<&SurrogateParams>,
) -> CoreResult<TapedObjectives<'p>> {
    if !theta.is_finite() {
        return Err(CoreError::NonFinite("actor parameters"));
    }
    let m = batch.trajectory_count;
    let n = batch.horizon;
    let [w_speed, w_gap, w_effort] = params.reward_weights;
    let mid = params.action_mid();
    let half = params.action_half_range();
    let last_layer = theta.layer_count() - 1;

    let mut tape = Tape::new(theta, critic, m);
    let initial = Matrix::from_fn(3, m, |r, c| batch.states[c][0].as_array()[r]);
    let mut state = tape.leaf(initial);

    let actor_apply = |tape: &mut Tape<'p>, state: NodeId| -> NodeId {
        let mut h = tape.affine(NetRole::Actor, 0, state);
        for l in 1..=last_layer {
            h = tape.relu(h);
            h = tape.affine(NetRole::Actor, l, h);
        }
        let th = tape.tanh(h);
        tape.lin_comb(vec![(half, th)], mid)
    };

    let mut reward_nodes = Vec::with_capacity(n);
    let mut phi_nodes = Vec::with_capacity(n);
    for t in 0..n {
        let u = actor_apply(&mut tape, state);
        let ve = tape.index(state, 0);
        let gap = tape.index(state, 2);
        let u_sq = tape.square(u);
        let r = tape.lin_comb(
            vec![(w_speed, ve), (-w_gap, gap), (-w_effort, u_sq)],
            0.0,
        );
        reward_nodes.push(r);
        let noise_t: Vec<f64> = (0..m).map(|i| batch.noises[i][t]).collect();
        state = tape.step_dyn(state, u, noise_t, params.time_step);
        if let Some(sp) = surrogate {
            // phi(-h) = phi(gap - threshold), constrained for t = 1..N
            let next_gap = tape.index(state, 2);
            let neg_margin = tape.lin_comb(vec![(1.0, next_gap)], -params.gap_threshold);
            phi_nodes.push(tape.phi(neg_margin, *sp));
        }
    }

    let objective_row = if let Some(critic_net) = critic {
        let u_terminal = actor_apply(&mut tape, state);
        let critic_in = tape.concat(vec![state, u_terminal]);
        let mut q = tape.affine(NetRole::Critic, 0, critic_in);
        for l in 1..critic_net.layer_count() {
            q = tape.relu(q);
            q = tape.affine(NetRole::Critic, l, q);
        }
        let mut terms = Vec::with_capacity(n + 1);
        let mut disc = 1.0;
        for &r in &reward_nodes {
            terms.push((disc, r));
            disc *= gamma;
        }
        terms.push((disc, q)); // disc == gamma^N here
        Some(tape.lin_comb(terms, 0.0))
    } else {
        None
    };

    let surrogate_row = if surrogate.is_some() {
        Some(tape.product(phi_nodes))
    } else {
        None
    };

    Ok(TapedObjectives { tape, objective_row, surrogate_row })
}

/// N-step objective estimate `J` (mean discounted return plus discounted
/// critic bootstrap) and its gradient w.r.t. the actor parameters via
/// backpropagation through time. The critic is treated as constant.
pub fn objective_estimate(
    theta: &NetworkParams,
    critic: &NetworkParams,
    batch: &RolloutBatch,
    params: &EnvParams,
    gamma: f64,
) -> CoreResult<(f64, GradientAccumulator)> {
    let taped = build_taped_rollout(theta, Some(critic), batch, params, gamma, None)?;
    let row = taped.objective_row.unwrap();
    let value = taped.tape.mean(row);
    let seed = vec![1.0 / batch.trajectory_count as f64; batch.trajectory_count];
    let grad = taped.tape.backward(row, &seed, NetRole::Actor)?;
    Ok((value, grad))
}

/// Objective value only (no gradient), same taped computation.
pub fn objective_value(
    theta: &NetworkParams,
    critic: &NetworkParams,
    batch: &RolloutBatch,
    params: &EnvParams,
    gamma: f64,
) -> CoreResult<f64> {
    let taped = build_taped_rollout(theta, Some(critic), batch, params, gamma, None)?;
    Ok(taped.tape.mean(taped.objective_row.unwrap()))
}

/// Surrogate safety objective `Phi` (mean over trajectories of the product
/// of per-step surrogate indicators, t = 1..N) and its actor gradient.
pub fn surrogate_phi_product(
    theta: &NetworkParams,
    batch: &RolloutBatch,
    params: &EnvParams,
    sp: &SurrogateParams,
) -> CoreResult<(f64, GradientAccumulator)> {
    let taped = build_taped_rollout(theta, None, batch, params, 0.0, Some(sp))?;
    let row = taped.surrogate_row.unwrap();
    let value = taped.tape.mean(row);
    let seed = vec![1.0 / batch.trajectory_count as f64; batch.trajectory_count];
    let grad = taped.tape.backward(row, &seed, NetRole::Actor)?;
    Ok((value, grad))
}

/// Surrogate value only (no gradient), same taped computation.
pub fn surrogate_value(
    theta: &NetworkParams,
    batch: &RolloutBatch,
    params: &EnvParams,
    sp: &SurrogateParams,
) -> CoreResult<f64> {
    let taped = build_taped_rollout(theta, None, batch, params, 0.0, Some(sp))?;
    Ok(taped.tape.mean(taped.surrogate_row.unwrap()))
}

/// Both objectives and both gradients off a single taped replay (what the
/// training loop uses; one forward pass, two backward passes).
pub struct ObjectiveGradients {
    pub objective: f64,
    pub surrogate: f64,
    pub grad_objective: GradientAccumulator,
    pub grad_surrogate: GradientAccumulator,
}

pub fn objective_and_surrogate(
    theta: &NetworkParams,
    critic: &NetworkParams,
    batch: &RolloutBatch,
    params: &EnvParams,
    gamma: f64,
    sp: &SurrogateParams,
) -> CoreResult<ObjectiveGradients> {
    let taped = build_taped_rollout(theta, Some(critic), batch, params, gamma, Some(sp))?;
    let j_row = taped.objective_row.unwrap();
    let phi_row = taped.surrogate_row.unwrap();
    let seed = vec![1.0 / batch.trajectory_count as f64; batch.trajectory_count];
    let objective = taped.tape.mean(j_row);
    let surrogate = taped.tape.mean(phi_row);
    let grad_objective = taped.tape.backward(j_row, &seed, NetRole::Actor)?;
    let grad_surrogate = taped.tape.backward(phi_row, &seed, NetRole::Actor)?;
    Ok(ObjectiveGradients { objective, surrogate, grad_objective, grad_surrogate })
}

/// Rescale `grad_p` so its flattened Euclidean norm matches `grad_j`'s;
/// zero `grad_p` is returned unchanged.
pub fn rescale_gradient(
    grad_j: &GradientAccumulator,
    grad_p: &GradientAccumulator,
) -> GradientAccumulator {
    let norm_p = grad_p.norm();
    let mut out = grad_p.clone();
    if norm_p == 0.0 {
        return out;
    }
    out.scale_in_place(grad_j.norm() / norm_p);
    out
}
